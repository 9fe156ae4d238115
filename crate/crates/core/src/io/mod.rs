//! File formats: OBJ meshes, the DSRT array container, JSON parameters,
//! PFM float images and palette PNG label maps.

mod dsrt;
mod image;
mod obj;

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::body::BodyParams;
use crate::{Error, Result};

pub use dsrt::{
    read_container, read_prior, read_template, write_container, write_prior, write_template, Array, ArrayData,
    Container, DSRT_VERSION,
};
pub use image::{read_label_png, read_pfm, write_gray_png, write_label_png, write_pfm, LABEL_PALETTE};
pub use obj::{parse_obj, read_obj, write_obj};

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::format(path.display().to_string(), format!("line {}: {e}", e.line())))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

pub fn read_params(path: &Path) -> Result<BodyParams> {
    let p: BodyParams = read_json(path)?;
    p.validate()?;
    Ok(p)
}

/// Keypoints as `[[x, y, c], ...]`, a flat COCO `[x, y, c, ...]` list, or
/// an object with a `keypoints` field holding either.
pub fn read_keypoints(path: &Path) -> Result<Vec<[f64; 3]>> {
    let v: serde_json::Value = read_json(path)?;
    let v = v.get("keypoints").cloned().unwrap_or(v);
    let bad = |why: &str| Error::format(path.display().to_string(), why.to_string());
    let arr = v.as_array().ok_or_else(|| bad("expected a keypoint array"))?;
    if arr.iter().all(|x| x.is_number()) {
        if arr.len() % 3 != 0 {
            return Err(bad("flat keypoint list length is not a multiple of 3"));
        }
        let nums: Vec<f64> = arr.iter().map(|x| x.as_f64().unwrap_or(f64::NAN)).collect();
        return Ok(nums.chunks(3).map(|c| [c[0], c[1], c[2]]).collect());
    }
    serde_json::from_value(v).map_err(|e| bad(&e.to_string()))
}
