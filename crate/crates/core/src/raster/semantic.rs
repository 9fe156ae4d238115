use super::{rasterize_soft, ProbImage, RasterConfig};
use crate::body::{Camera, TriangleMesh};
use crate::{Error, Result};

/// Renders per-vertex label probabilities with invisible vertices zeroed.
///
/// `prior_rows` is `V x channels`; `visibility` usually comes from
/// [`super::visible_vertices`] on a hard render of the same mesh.
pub fn render_semantic_channels(
    mesh: &TriangleMesh,
    prior_rows: &[f64],
    channels: usize,
    visibility: &[bool],
    camera: &Camera,
    cfg: &RasterConfig,
) -> Result<ProbImage> {
    let attrs = masked_rows(prior_rows, channels, visibility)?;
    rasterize_soft(mesh, &attrs, channels, camera, cfg)
}

pub(crate) fn masked_rows(prior_rows: &[f64], channels: usize, visibility: &[bool]) -> Result<Vec<f64>> {
    if channels == 0 || prior_rows.len() != visibility.len() * channels {
        return Err(Error::dim("prior rows", visibility.len(), prior_rows.len() / channels.max(1)));
    }
    Ok(prior_rows
        .chunks(channels)
        .zip(visibility)
        .flat_map(|(row, &vis)| row.iter().map(move |&p| if vis { p } else { 0.0 }))
        .collect())
}
