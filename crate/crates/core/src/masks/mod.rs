//! Cleaning 20-class segmentation maps into per-sample semantic targets.

use serde::{Deserialize, Serialize};

use crate::prior::{label, CoarseScheme, MC_LABELS, NUM_LABELS};
use crate::{Error, Result};

/// Target value marking pixels without a usable class.
pub const IGNORE: u8 = 255;

/// `H x W` fine label image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMask {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u8>,
}

impl LabelMask {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        let m = LabelMask { width, height, labels };
        m.validate()?;
        Ok(m)
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        LabelMask {
            width,
            height,
            labels: vec![value; width * height],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("label mask", "width and height must be at least 1"));
        }
        if self.labels.len() != self.width * self.height {
            return Err(Error::dim("label mask pixels", self.width * self.height, self.labels.len()));
        }
        if let Some(&v) = self.labels.iter().find(|&&v| v as usize >= NUM_LABELS) {
            return Err(Error::invalid("label mask", format!("label {v} outside [0, {}]", NUM_LABELS - 1)));
        }
        Ok(())
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    /// Pixel count of every fine label.
    pub fn histogram(&self) -> [usize; NUM_LABELS] {
        let mut h = [0; NUM_LABELS];
        for &l in &self.labels {
            h[l as usize] += 1;
        }
        h
    }
}

/// Inclusive pixel rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl CropRect {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..=self.x1).contains(&x) && (self.y0..=self.y1).contains(&y)
    }
}

/// Thresholds of the cleaning heuristics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskConfig {
    /// Pixels added on every side of the keypoint bounding box.
    pub offset: usize,
    /// Minimum pixel count for a minimal-clothing label to be kept.
    pub min_pixels: usize,
}

impl Default for MaskConfig {
    fn default() -> Self {
        MaskConfig {
            offset: 30,
            min_pixels: 60,
        }
    }
}

/// Bounding box of the keypoints with positive confidence, grown by
/// `offset` on every side and clamped to the image; everything outside is
/// set to Background. `None` when no keypoint is confident.
pub fn crop_by_keypoints(mask: &LabelMask, keypoints: &[[f64; 3]], offset: usize) -> Option<(LabelMask, CropRect)> {
    let confident = keypoints.iter().filter(|k| k[2] > 0.0 && k[0].is_finite() && k[1].is_finite());
    let mut bounds: Option<[f64; 4]> = None;
    for k in confident {
        let b = bounds.get_or_insert([k[0], k[1], k[0], k[1]]);
        b[0] = b[0].min(k[0]);
        b[1] = b[1].min(k[1]);
        b[2] = b[2].max(k[0]);
        b[3] = b[3].max(k[1]);
    }
    let [xmin, ymin, xmax, ymax] = bounds?;
    let off = offset as f64;
    let clamp = |v: f64, hi: usize| v.clamp(0.0, (hi - 1) as f64) as usize;
    let rect = CropRect {
        x0: clamp(xmin.floor() - off, mask.width),
        y0: clamp(ymin.floor() - off, mask.height),
        x1: clamp(xmax.ceil() + off, mask.width),
        y1: clamp(ymax.ceil() + off, mask.height),
    };
    let mut out = mask.clone();
    for y in 0..mask.height {
        for x in 0..mask.width {
            if !rect.contains(x, y) {
                out.labels[y * mask.width + x] = label::BACKGROUND;
            }
        }
    }
    Some((out, rect))
}

/// Minimal-clothing labels covering at least `min_pixels` pixels, in
/// [`MC_LABELS`] order.
pub fn filter_small_labels(mask: &LabelMask, min_pixels: usize) -> Vec<u8> {
    let hist = mask.histogram();
    MC_LABELS
        .iter()
        .copied()
        .filter(|&l| hist[l as usize] >= min_pixels)
        .collect()
}

/// Binary union of the given labels.
pub fn build_mc_target(mask: &LabelMask, valid: &[u8]) -> Vec<bool> {
    let mut member = [false; NUM_LABELS];
    for &l in valid {
        member[l as usize] = true;
    }
    mask.labels.iter().map(|&l| member[l as usize]).collect()
}

/// Per-pixel coarse class under `scheme`.
pub fn build_c_target(mask: &LabelMask, scheme: &CoarseScheme) -> Vec<u8> {
    mask.labels.iter().map(|&l| scheme.map(l)).collect()
}

/// Targets of one sample after cleaning.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleTargets {
    pub width: usize,
    pub height: usize,
    pub mc_mask: Option<Vec<bool>>,
    pub c_mask: Option<Vec<u8>>,
    pub valid_mc_labels: Vec<u8>,
    pub crop: Option<CropRect>,
    /// The cropped fine mask the targets were derived from.
    pub cleaned: LabelMask,
}

impl SampleTargets {
    /// No keypoints and no targets; every semantic term is skipped.
    pub fn invalid(mask: &LabelMask) -> Self {
        SampleTargets {
            width: mask.width,
            height: mask.height,
            mc_mask: None,
            c_mask: None,
            valid_mc_labels: Vec::new(),
            crop: None,
            cleaned: LabelMask::filled(mask.width, mask.height, label::BACKGROUND),
        }
    }

    pub fn meta(&self) -> SampleMeta {
        SampleMeta {
            width: self.width,
            height: self.height,
            crop: self.crop,
            valid_mc_labels: self
                .valid_mc_labels
                .iter()
                .map(|&l| crate::prior::LABEL_NAMES[l as usize].to_string())
                .collect(),
            mc_skipped: self.mc_mask.is_none(),
            c_skipped: self.c_mask.is_none(),
        }
    }
}

/// Serialisable summary written next to the target images.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub width: usize,
    pub height: usize,
    pub crop: Option<CropRect>,
    pub valid_mc_labels: Vec<String>,
    pub mc_skipped: bool,
    pub c_skipped: bool,
}

/// Crop, filter and map one sample. Label counts are taken after cropping.
pub fn clean_sample(mask: &LabelMask, keypoints: &[[f64; 3]], cfg: &MaskConfig) -> Result<SampleTargets> {
    mask.validate()?;
    let Some((cropped, rect)) = crop_by_keypoints(mask, keypoints, cfg.offset) else {
        return Ok(SampleTargets::invalid(mask));
    };
    let valid = filter_small_labels(&cropped, cfg.min_pixels);
    let mc_mask = (!valid.is_empty()).then(|| build_mc_target(&cropped, &valid));
    let any_body = cropped.labels.iter().any(|&l| l != label::BACKGROUND);
    let c_mask = any_body.then(|| build_c_target(&cropped, &CoarseScheme::dsr_c()));
    Ok(SampleTargets {
        width: mask.width,
        height: mask.height,
        mc_mask,
        c_mask,
        valid_mc_labels: valid,
        crop: Some(rect),
        cleaned: cropped,
    })
}
