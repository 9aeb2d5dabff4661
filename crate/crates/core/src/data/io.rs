use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{resize_sample, Sample, WORKING_SIZE};
use crate::error::{Error, Result};
use crate::label::LabelMap;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Reads an image as a `3 x H x W` tensor with values in `[0, 1]`.
pub fn load_image(path: &Path) -> Result<Tensor<f32>> {
    let img = image::open(path)
        .map_err(|e| Error::data(path, e.to_string()))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut t = Tensor::zeros(&[3, h, w]);
    for (i, px) in img.pixels().enumerate() {
        for ch in 0..3 {
            t.plane_mut(ch)[i] = px.0[ch] as f32 / 255.0;
        }
    }
    Ok(t)
}

/// Reads an 8-bit label raster; any value outside `{0, 1, 2}` rejects the file.
pub fn load_label(path: &Path) -> Result<LabelMap> {
    let img = image::open(path)
        .map_err(|e| Error::data(path, e.to_string()))?
        .to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.into_raw();
    if let Some(v) = data.iter().find(|&&v| v > 2) {
        return Err(Error::data(path, format!("label value {v} outside {{0, 1, 2}}")));
    }
    LabelMap::new(h, w, data)
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

pub fn save_image(img: &Tensor<f32>, path: &Path) -> Result<()> {
    let (c, h, w) = img.chw()?;
    if c != 3 && c != 1 {
        return Err(Error::shape(format!("can only save 1- or 3-channel images, got {c}")));
    }
    let mut buf = Vec::with_capacity(h * w * 3);
    for i in 0..h * w {
        for ch in 0..3 {
            let v = img.plane(ch.min(c - 1))[i];
            buf.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    create_parent(path)?;
    image::save_buffer(path, &buf, w as u32, h as u32, image::ColorType::Rgb8)
        .map_err(|e| Error::data(path, e.to_string()))
}

pub fn save_label(label: &LabelMap, path: &Path) -> Result<()> {
    create_parent(path)?;
    image::save_buffer(
        path,
        label.data(),
        label.width() as u32,
        label.height() as u32,
        image::ColorType::L8,
    )
    .map_err(|e| Error::data(path, e.to_string()))
}

/// Train and validation shares; the test set takes the rest.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.7,
            validation: 0.0,
        }
    }
}

/// `(train, validation, test)` sizes: `round(n * train)`, `round(n * validation)`
/// (capped by what is left), and the remainder.
pub fn split_counts(n: usize, f: SplitFractions) -> Result<(usize, usize, usize)> {
    if !(0.0..=1.0).contains(&f.train) || !(0.0..=1.0).contains(&f.validation) || f.train + f.validation > 1.0 + 1e-12 {
        return Err(Error::Config(format!(
            "split fractions train={} validation={} must be in [0, 1] and sum to at most 1",
            f.train, f.validation
        )));
    }
    let train = ((n as f64 * f.train).round() as usize).min(n);
    let val = ((n as f64 * f.validation).round() as usize).min(n - train);
    Ok((train, val, n - train - val))
}

#[derive(Clone, Debug)]
pub struct LoadOptions {
    pub split: SplitFractions,
    pub seed: u64,
    /// Resize target; `None` keeps the stored size.
    pub target: Option<(usize, usize)>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            split: SplitFractions::default(),
            seed: 0,
            target: Some(WORKING_SIZE),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LoadReport {
    pub loaded: usize,
    /// Image stems without a label file.
    pub missing_labels: Vec<String>,
    /// Label stems without an image file.
    pub missing_images: Vec<String>,
    pub rejected: Vec<(PathBuf, String)>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
    pub test: Vec<Sample>,
    pub report: LoadReport,
}

fn png_stems(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if let (true, Some(stem)) = (is_png, path.file_stem().and_then(|s| s.to_str())) {
            out.insert(stem.to_string(), path);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Part {
    Train,
    Validation,
    Test,
}

fn read_manifest(path: &Path) -> Result<BTreeMap<String, Part>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line.replace(' ', "") == "stem,split") {
            continue;
        }
        let (stem, split) = line
            .split_once(',')
            .ok_or_else(|| Error::data(path, format!("line {}: expected `stem,split`", i + 1)))?;
        let part = match split.trim() {
            "train" => Part::Train,
            "validation" | "val" => Part::Validation,
            "test" => Part::Test,
            other => return Err(Error::data(path, format!("line {}: unknown split `{other}`", i + 1))),
        };
        out.insert(stem.trim().to_string(), part);
    }
    Ok(out)
}

/// Loads `root/images/*.png` with `root/labels/*.png` of the same stem and
/// splits them. The split shuffles the sorted stems with `opts.seed`,
/// unless `root/manifest.csv` assigns every stem explicitly.
pub fn load_dataset(root: &Path, opts: &LoadOptions) -> Result<Dataset> {
    let images = png_stems(&root.join("images"))?;
    let labels = png_stems(&root.join("labels"))?;
    let mut report = LoadReport::default();
    let image_stems: BTreeSet<&String> = images.keys().collect();
    let label_stems: BTreeSet<&String> = labels.keys().collect();
    report.missing_labels = image_stems.difference(&label_stems).map(|s| s.to_string()).collect();
    report.missing_images = label_stems.difference(&image_stems).map(|s| s.to_string()).collect();

    let mut samples: Vec<(String, Sample)> = Vec::new();
    for stem in image_stems.intersection(&label_stems) {
        let (ip, lp) = (&images[*stem], &labels[*stem]);
        let loaded = load_image(ip).and_then(|img| {
            let lab = load_label(lp)?;
            match Sample::new(img, lab, stem.to_string()) {
                Err(e) => Err(Error::data(lp, e.to_string())),
                Ok(s) => match opts.target {
                    Some((h, w)) => resize_sample(&s, h, w),
                    None => Ok(s),
                },
            }
        });
        match loaded {
            Ok(s) => samples.push((stem.to_string(), s)),
            Err(Error::Data { path, msg }) => report.rejected.push((path, msg)),
            Err(e) => report.rejected.push((ip.clone(), e.to_string())),
        }
    }
    report.loaded = samples.len();
    if samples.is_empty() {
        report.warnings.push(format!("no image/label pairs found under {}", root.display()));
    }

    let mut ds = Dataset::default();
    let manifest = root.join("manifest.csv");
    if manifest.is_file() {
        let parts = read_manifest(&manifest)?;
        for (stem, s) in samples {
            match parts.get(&stem) {
                Some(Part::Train) => ds.train.push(s),
                Some(Part::Validation) => ds.validation.push(s),
                Some(Part::Test) => ds.test.push(s),
                None => report.warnings.push(format!("`{stem}` is not listed in manifest.csv; skipped")),
            }
        }
    } else {
        let (n_train, n_val, _) = split_counts(samples.len(), opts.split)?;
        Rng::new(opts.seed).shuffle(&mut samples);
        for (i, (_, s)) in samples.into_iter().enumerate() {
            if i < n_train {
                ds.train.push(s);
            } else if i < n_train + n_val {
                ds.validation.push(s);
            } else {
                ds.test.push(s);
            }
        }
    }
    ds.report = report;
    Ok(ds)
}

/// Writes samples as `images/NNNNNN.png` + `labels/NNNNNN.png` under `dir`
/// with a `provenance.csv` of `stem,source_id` rows.
pub fn write_samples<'a>(dir: &Path, samples: impl IntoIterator<Item = &'a Sample>) -> Result<usize> {
    let mut w = SampleWriter::create(dir)?;
    for s in samples {
        w.write(s)?;
    }
    w.finish()
}

/// Streaming form of [`write_samples`].
pub struct SampleWriter {
    dir: PathBuf,
    csv: std::io::BufWriter<fs::File>,
    count: usize,
}

impl SampleWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        for sub in ["images", "labels"] {
            fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(dir.join(sub), e))?;
        }
        let path = dir.join("provenance.csv");
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut csv = std::io::BufWriter::new(file);
        writeln!(csv, "stem,source_id").map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            csv,
            count: 0,
        })
    }

    pub fn write(&mut self, s: &Sample) -> Result<String> {
        let stem = format!("{:06}", self.count);
        save_image(&s.image, &self.dir.join("images").join(format!("{stem}.png")))?;
        save_label(&s.label, &self.dir.join("labels").join(format!("{stem}.png")))?;
        let csv_path = self.dir.join("provenance.csv");
        writeln!(self.csv, "{stem},{}", s.source_id).map_err(|e| Error::io(&csv_path, e))?;
        self.count += 1;
        Ok(stem)
    }

    pub fn finish(mut self) -> Result<usize> {
        let path = self.dir.join("provenance.csv");
        self.csv.flush().map_err(|e| Error::io(&path, e))?;
        Ok(self.count)
    }
}
