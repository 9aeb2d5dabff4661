use rayon::prelude::*;

use super::{add_noise, preprocess_filter, FilterKind, NoiseKind, Sample};
use crate::error::Result;
use crate::rng::Rng;

/// Offline augmentation recipe: a filter chain applied to every source,
/// then `repetitions` noisy copies of the filtered image per noise kind.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpandRecipe {
    pub filters: Vec<FilterKind>,
    pub noise: Vec<(NoiseKind, usize)>,
}

impl ExpandRecipe {
    pub fn empty() -> Self {
        Self {
            filters: Vec::new(),
            noise: Vec::new(),
        }
    }

    /// All three filters, then each of the five noise kinds ten times.
    pub fn standard() -> Self {
        Self {
            filters: FilterKind::ALL.to_vec(),
            noise: NoiseKind::ALL.iter().map(|&k| (k, 10)).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty() && self.noise.iter().all(|&(_, r)| r == 0)
    }

    /// Samples produced per source: the (filtered) base plus every noisy copy.
    pub fn outputs_per_source(&self) -> usize {
        if self.is_empty() {
            1
        } else {
            1 + self.noise.iter().map(|&(_, r)| r).sum::<usize>()
        }
    }

    /// Expands one source. Noise draws come from child streams keyed by
    /// `(seed, source_id, variant index)`.
    pub fn expand_source(&self, s: &Sample, seed: u64) -> Result<Vec<Sample>> {
        if self.is_empty() {
            return Ok(vec![s.clone()]);
        }
        let mut base = s.clone();
        if !self.filters.is_empty() {
            for &f in &self.filters {
                base.image = preprocess_filter(&base.image, f)?;
            }
            let chain: Vec<&str> = self.filters.iter().map(|f| f.name()).collect();
            base.source_id = format!("{}|filter:{}", s.source_id, chain.join("+"));
        }
        let root = Rng::new(seed);
        let mut out = Vec::with_capacity(self.outputs_per_source());
        let mut variant = 0u64;
        for &(kind, reps) in &self.noise {
            for r in 0..reps {
                variant += 1;
                let mut rng = root.child(&s.source_id, variant);
                out.push(Sample {
                    image: add_noise(&base.image, kind, &mut rng)?,
                    label: base.label.clone(),
                    source_id: format!("{}|noise:{}#{r}", base.source_id, kind.name()),
                });
            }
        }
        out.insert(0, base);
        Ok(out)
    }
}

/// Applies `recipe` to every sample, in input order.
pub fn expand_augmented(set: &[Sample], recipe: &ExpandRecipe, seed: u64) -> Result<Vec<Sample>> {
    let parts: Vec<Vec<Sample>> = set
        .par_iter()
        .map(|s| recipe.expand_source(s, seed))
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_lesion, SynthConfig};

    fn small() -> Vec<Sample> {
        synth_lesion(3, &SynthConfig { height: 32, width: 32, ..Default::default() }, 7).unwrap()
    }

    #[test]
    fn empty_recipe_is_identity() {
        let set = small();
        assert_eq!(expand_augmented(&set, &ExpandRecipe::empty(), 0).unwrap(), set);
    }

    #[test]
    fn standard_recipe_count_and_sources() {
        let set = small();
        let recipe = ExpandRecipe::standard();
        assert_eq!(recipe.outputs_per_source(), 51);
        let out = expand_augmented(&set, &recipe, 1).unwrap();
        assert_eq!(out.len(), 3 * 51);
        assert_eq!(out[0].source_id, format!("{}|filter:hist_eq+median+edge_enhance", set[0].source_id));
        assert!(out[1].source_id.ends_with("|noise:gaussian#0"));
        assert!(out[50].source_id.ends_with("|noise:saltpepper#9"));
        for (i, o) in out.iter().enumerate() {
            assert_eq!(o.label, set[i / 51].label);
            assert!(o.source_id.starts_with(&set[i / 51].source_id));
        }
        assert_eq!(expand_augmented(&set, &recipe, 1).unwrap(), out);
    }

    #[test]
    fn count_depends_only_on_recipe() {
        let recipe = ExpandRecipe {
            filters: vec![],
            noise: vec![(NoiseKind::Poisson, 2), (NoiseKind::Speckle { variance: 0.04 }, 3)],
        };
        let out = expand_augmented(&small(), &recipe, 5).unwrap();
        assert_eq!(out.len(), 3 * 6);
        assert_eq!(out[0], small()[0]);
    }
}
