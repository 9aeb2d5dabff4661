//! Samples, dataset loading, class weighting, augmentation and the
//! synthetic lesion generator.

mod crop;
mod expand;
mod filters;
mod geometric;
mod io;
mod noise;
mod resize;
mod synth;
mod weights;

use crate::error::{Error, Result};
use crate::label::LabelMap;
use crate::tensor::Tensor;

pub use crop::{crop_protocol, crop_sample, CropConfig};
pub use expand::{expand_augmented, ExpandRecipe};
pub use filters::{preprocess_filter, FilterKind};
pub use geometric::{apply_geometric, augment_geometric, GeometricConfig, GeometricDraw};
pub use io::{
    load_dataset, load_image, load_label, save_image, save_label, split_counts, write_samples, Dataset, SampleWriter,
    LoadOptions, LoadReport, SplitFractions,
};
pub use noise::{add_noise, NoiseKind};
pub use resize::{resize_label, resize_sample};
pub use synth::{synth_lesion, SynthConfig};
pub use weights::{class_weights, ClassWeights, WeightScheme};

/// Working resolution of every network input.
pub const WORKING_SIZE: (usize, usize) = (360, 480);

/// An RGB image with values in `[0, 1]`, its label map and a provenance tag.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image: Tensor<f32>,
    pub label: LabelMap,
    pub source_id: String,
}

impl Sample {
    pub fn new(image: Tensor<f32>, label: LabelMap, source_id: impl Into<String>) -> Result<Self> {
        let (c, h, w) = image.chw()?;
        if c != 3 {
            return Err(Error::shape(format!("sample image must have 3 channels, got {c}")));
        }
        if label.dims() != (h, w) {
            return Err(Error::shape(format!(
                "image {h}x{w} and label {:?} differ in size",
                label.dims()
            )));
        }
        Ok(Self {
            image,
            label,
            source_id: source_id.into(),
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.label.dims()
    }
}

/// Everything applied to training data: geometric augmentation drawn per
/// epoch, plus the offline noise/filter/crop recipe.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentConfig {
    pub geometric: GeometricConfig,
    pub recipe: ExpandRecipe,
    pub crop: CropConfig,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            geometric: GeometricConfig::default(),
            recipe: ExpandRecipe::standard(),
            crop: CropConfig::default(),
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        self.geometric.validate()?;
        self.crop.validate()
    }
}

pub(crate) fn clamp01(v: f32) -> f32 {
    v.clamp(0.0, 1.0)
}
