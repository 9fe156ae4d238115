//! Per-vertex clothing-label prior learned from labelled renders of
//! registered meshes.

mod labels;

use serde::{Deserialize, Serialize};

use crate::body::{Camera, TriangleMesh};
use crate::masks::LabelMask;
use crate::raster::{rasterize_hard, RasterConfig, SENTINEL_NONE};
use crate::{Error, Exec, Result};

pub use labels::{coarse, label, CoarseScheme, LabelSet, LABEL_NAMES, MC_LABELS, NUM_LABELS};

/// Default probability assigned to Background at every vertex.
pub const DEFAULT_EPS_BG: f64 = 0.05;

/// One labelled view of a registered mesh.
#[derive(Clone, Debug)]
pub struct ScanObservation {
    pub mesh: TriangleMesh,
    pub camera: Camera,
    pub labels: LabelMask,
}

/// `V x 20` label occurrence counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelCounts {
    pub num_vertices: usize,
    pub counts: Vec<u64>,
}

impl LabelCounts {
    pub fn zeros(num_vertices: usize) -> Self {
        LabelCounts {
            num_vertices,
            counts: vec![0; num_vertices * NUM_LABELS],
        }
    }

    pub fn row(&self, v: usize) -> &[u64] {
        &self.counts[v * NUM_LABELS..(v + 1) * NUM_LABELS]
    }

    pub fn add(&mut self, other: &LabelCounts) -> Result<()> {
        if other.num_vertices != self.num_vertices {
            return Err(Error::dim("count rows", self.num_vertices, other.num_vertices));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }
}

/// Adds one observation: every covered pixel credits its label to all three
/// vertices of the face visible there.
pub fn accumulate_counts(obs: &ScanObservation, counts: &mut LabelCounts, exec: Exec) -> Result<()> {
    obs.labels.validate()?;
    let nv = obs.mesh.vertices.len();
    if counts.num_vertices != nv || counts.counts.len() != nv * NUM_LABELS {
        return Err(Error::dim("count rows vs mesh vertices", nv, counts.num_vertices));
    }
    let cfg = RasterConfig {
        exec,
        ..RasterConfig::with_size(obs.labels.width, obs.labels.height)
    };
    let hard = rasterize_hard(&obs.mesh, &obs.camera, &cfg)?;
    for (&f, &l) in hard.face_index.iter().zip(&obs.labels.labels) {
        if f == SENTINEL_NONE {
            continue;
        }
        for &v in &obs.mesh.faces[f as usize] {
            counts.counts[v as usize * NUM_LABELS + l as usize] += 1;
        }
    }
    Ok(())
}

/// Counts over many observations, evaluated in parallel and summed.
pub fn accumulate_all(observations: &[ScanObservation], num_vertices: usize, exec: Exec) -> Result<LabelCounts> {
    let parts = exec.map(observations.len(), |i| {
        let mut c = LabelCounts::zeros(num_vertices);
        accumulate_counts(&observations[i], &mut c, Exec::Sequential).map(|_| c)
    });
    let mut total = LabelCounts::zeros(num_vertices);
    for p in parts {
        total.add(&p?)?;
    }
    Ok(total)
}

/// `V x 20` row-stochastic label probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct VertexLabelPrior {
    pub label_set: LabelSet,
    pub num_vertices: usize,
    pub probs: Vec<f64>,
}

impl VertexLabelPrior {
    pub fn row(&self, v: usize) -> &[f64] {
        let n = self.label_set.len();
        &self.probs[v * n..(v + 1) * n]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.label_set.len();
        if self.probs.len() != self.num_vertices * n {
            return Err(Error::dim("prior entries", self.num_vertices * n, self.probs.len()));
        }
        for v in 0..self.num_vertices {
            let row = self.row(v);
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::invalid("prior", format!("row {v} has entries outside [0, 1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-6 {
                return Err(Error::invalid("prior", format!("row {v} sums to {s}")));
            }
        }
        Ok(())
    }
}

/// Turns counts into probabilities: garment labels in proportion to their
/// non-background counts, scaled to `1 - eps_bg`, and Background fixed at
/// `eps_bg`. Vertices never seen on a garment get a uniform garment row.
pub fn normalize_counts(counts: &LabelCounts, eps_bg: f64) -> Result<VertexLabelPrior> {
    if !(0.0..0.5).contains(&eps_bg) {
        return Err(Error::invalid("eps_bg", format!("must lie in [0, 0.5), got {eps_bg}")));
    }
    let garment = 1.0 - eps_bg;
    let uniform = garment / (NUM_LABELS - 1) as f64;
    let mut probs = vec![0.0; counts.num_vertices * NUM_LABELS];
    for (v, out) in probs.chunks_mut(NUM_LABELS).enumerate() {
        let row = counts.row(v);
        let total: u64 = row[1..].iter().sum();
        out[0] = eps_bg;
        if total == 0 {
            out[1..].iter_mut().for_each(|p| *p = uniform);
        } else {
            for l in 1..NUM_LABELS {
                out[l] = row[l] as f64 / total as f64 * garment;
            }
        }
    }
    Ok(VertexLabelPrior {
        label_set: LabelSet::default(),
        num_vertices: counts.num_vertices,
        probs,
    })
}

/// Labels a body part may not carry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncompatibilityRule {
    pub name: String,
    pub parts: Vec<u32>,
    pub forbid: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IncompatibilityTable {
    pub rules: Vec<IncompatibilityRule>,
}

impl Default for IncompatibilityTable {
    /// Legs may not be hands, arms may not be legs or feet, the head may
    /// not carry limb skin.
    fn default() -> Self {
        serde_json::from_str(include_str!("../../data/incompatibility.json")).expect("shipped table parses")
    }
}

impl IncompatibilityTable {
    /// Forbidden-label flags for every body part id up to `max_part`.
    fn resolve(&self, labels: &LabelSet, max_part: u32) -> Result<Vec<Vec<bool>>> {
        let mut out = vec![vec![false; labels.len()]; max_part as usize + 1];
        for rule in &self.rules {
            let ids = rule.forbid.iter().map(|n| labels.require(n)).collect::<Result<Vec<_>>>()?;
            for &p in &rule.parts {
                if let Some(flags) = out.get_mut(p as usize) {
                    for &i in &ids {
                        flags[i] = true;
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Zeroes labels forbidden for each vertex's body part and rescales the
/// remaining garment mass so Background keeps its share. A row left with
/// no garment mass becomes uniform over the allowed garment labels.
pub fn clean_with_part_segmentation(
    prior: &VertexLabelPrior,
    part_labels: &[u32],
    table: &IncompatibilityTable,
) -> Result<VertexLabelPrior> {
    prior.validate()?;
    if part_labels.len() != prior.num_vertices {
        return Err(Error::dim("part labels", prior.num_vertices, part_labels.len()));
    }
    let n = prior.label_set.len();
    let max_part = part_labels.iter().copied().max().unwrap_or(0);
    let forbidden = table.resolve(&prior.label_set, max_part)?;
    let mut out = prior.clone();
    let mut fallbacks = 0usize;
    for (v, row) in out.probs.chunks_mut(n).enumerate() {
        let flags = &forbidden[part_labels[v] as usize];
        if !row.iter().zip(flags).any(|(&p, &f)| f && p > 0.0) {
            continue;
        }
        let target = 1.0 - row[0];
        for (p, &f) in row.iter_mut().zip(flags).skip(1) {
            if f {
                *p = 0.0;
            }
        }
        let kept: f64 = row[1..].iter().sum();
        if kept > 0.0 {
            let k = target / kept;
            row[1..].iter_mut().for_each(|p| *p *= k);
        } else {
            let allowed = flags[1..].iter().filter(|&&f| !f).count();
            if allowed == 0 {
                return Err(Error::invalid("incompatibility table", format!("part {} forbids every label", part_labels[v])));
            }
            let u = target / allowed as f64;
            for (p, &f) in row.iter_mut().zip(flags).skip(1) {
                *p = if f { 0.0 } else { u };
            }
            fallbacks += 1;
        }
    }
    if fallbacks > 0 {
        log::warn!("prior cleaning: {fallbacks} vertices lost all garment mass; using uniform over allowed labels");
    }
    Ok(out)
}

/// `V x C` prior obtained by summing fine probabilities per coarse class.
#[derive(Clone, Debug, PartialEq)]
pub struct CoarsePrior {
    pub names: Vec<String>,
    pub num_vertices: usize,
    pub probs: Vec<f64>,
}

impl CoarsePrior {
    pub fn channels(&self) -> usize {
        self.names.len()
    }

    /// Keeps only the listed coarse channels, in the given order.
    pub fn select(&self, channels: &[usize]) -> CoarsePrior {
        let c = self.channels();
        CoarsePrior {
            names: channels.iter().map(|&i| self.names[i].clone()).collect(),
            num_vertices: self.num_vertices,
            probs: self
                .probs
                .chunks(c)
                .flat_map(|row| channels.iter().map(move |&i| row[i]))
                .collect(),
        }
    }

    /// Concatenates the channels of `self` and `other` per vertex.
    pub fn stack(&self, other: &CoarsePrior) -> Result<CoarsePrior> {
        if self.num_vertices != other.num_vertices {
            return Err(Error::dim("coarse prior rows", self.num_vertices, other.num_vertices));
        }
        let (a, b) = (self.channels(), other.channels());
        let mut probs = Vec::with_capacity(self.num_vertices * (a + b));
        for v in 0..self.num_vertices {
            probs.extend_from_slice(&self.probs[v * a..(v + 1) * a]);
            probs.extend_from_slice(&other.probs[v * b..(v + 1) * b]);
        }
        let mut names = self.names.clone();
        names.extend(other.names.iter().cloned());
        Ok(CoarsePrior {
            names,
            num_vertices: self.num_vertices,
            probs,
        })
    }
}

pub fn aggregate_labels(prior: &VertexLabelPrior, scheme: &CoarseScheme) -> Result<CoarsePrior> {
    let n = prior.label_set.len();
    if scheme.assignment.len() != n {
        return Err(Error::dim("coarse scheme labels", n, scheme.assignment.len()));
    }
    let c = scheme.num_classes();
    if let Some(&bad) = scheme.assignment.iter().find(|&&a| a >= c) {
        return Err(Error::invalid("coarse scheme", format!("class {bad} out of range")));
    }
    let mut probs = vec![0.0; prior.num_vertices * c];
    for (src, dst) in prior.probs.chunks(n).zip(probs.chunks_mut(c)) {
        for (l, &p) in src.iter().enumerate() {
            dst[scheme.assignment[l]] += p;
        }
    }
    Ok(CoarsePrior {
        names: scheme.names.clone(),
        num_vertices: prior.num_vertices,
        probs,
    })
}

/// CSV with a header row of label names and one row per vertex.
pub fn to_csv(prior: &VertexLabelPrior) -> String {
    let mut s = String::from("vertex");
    for name in prior.label_set.names() {
        s.push(',');
        s.push_str(name);
    }
    s.push('\n');
    for v in 0..prior.num_vertices {
        s.push_str(&v.to_string());
        for p in prior.row(v) {
            s.push(',');
            s.push_str(&format!("{p}"));
        }
        s.push('\n');
    }
    s
}
