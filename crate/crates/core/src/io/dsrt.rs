//! Little-endian array container: `b"DSRT"`, `u32` version, `u32` header
//! length, a JSON header `{kind, meta, arrays: [{name, dtype, shape}]}`,
//! then the arrays back to back in header order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_bytes, write_bytes};
use crate::body::{BodyTemplate, JointRegressor};
use crate::prior::{LabelSet, VertexLabelPrior};
use crate::{Error, Result};

pub const DSRT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"DSRT";

#[derive(Clone, Debug, PartialEq)]
pub enum ArrayData {
    F64(Vec<f64>),
    U32(Vec<u32>),
    I32(Vec<i32>),
}

impl ArrayData {
    fn dtype(&self) -> &'static str {
        match self {
            ArrayData::F64(_) => "f64",
            ArrayData::U32(_) => "u32",
            ArrayData::I32(_) => "i32",
        }
    }

    fn len(&self) -> usize {
        match self {
            ArrayData::F64(v) => v.len(),
            ArrayData::U32(v) => v.len(),
            ArrayData::I32(v) => v.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Array {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: ArrayData,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub kind: String,
    pub meta: serde_json::Value,
    pub arrays: Vec<Array>,
}

#[derive(Serialize, Deserialize)]
struct ArrayHeader {
    name: String,
    dtype: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    meta: serde_json::Value,
    arrays: Vec<ArrayHeader>,
}

impl Container {
    pub fn new(kind: &str, meta: serde_json::Value) -> Self {
        Container {
            kind: kind.to_string(),
            meta,
            arrays: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, shape: Vec<usize>, data: ArrayData) {
        self.arrays.push(Array {
            name: name.to_string(),
            shape,
            data,
        });
    }

    pub fn get(&self, name: &str) -> Option<&Array> {
        self.arrays.iter().find(|a| a.name == name)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        for a in &self.arrays {
            let n: usize = a.shape.iter().product();
            if n != a.data.len() {
                return Err(Error::dim("container array", n, a.data.len()));
            }
        }
        let header = Header {
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            arrays: self
                .arrays
                .iter()
                .map(|a| ArrayHeader {
                    name: a.name.clone(),
                    dtype: a.data.dtype().to_string(),
                    shape: a.shape.clone(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::format("DSRT header", e.to_string()))?;
        let mut out = Vec::with_capacity(12 + json.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&DSRT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for a in &self.arrays {
            match &a.data {
                ArrayData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                ArrayData::U32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                ArrayData::I32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], source: &str) -> Result<Self> {
        let bad = |why: String| Error::format(source, why);
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(bad("not a DSRT container".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != DSRT_VERSION {
            return Err(bad(format!("unsupported DSRT version {version}")));
        }
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = bytes.get(12..12 + hlen).ok_or_else(|| bad("truncated header".into()))?;
        let header: Header = serde_json::from_slice(body).map_err(|e| bad(format!("header: {e}")))?;
        let mut at = 12 + hlen;
        let mut arrays = Vec::with_capacity(header.arrays.len());
        for h in header.arrays {
            let n: usize = h.shape.iter().product();
            let width = match h.dtype.as_str() {
                "f64" => 8,
                "u32" | "i32" => 4,
                d => return Err(bad(format!("array {}: unknown dtype {d}", h.name))),
            };
            let raw = bytes
                .get(at..at + n * width)
                .ok_or_else(|| bad(format!("array {} is truncated", h.name)))?;
            at += n * width;
            let data = match h.dtype.as_str() {
                "f64" => ArrayData::F64(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()),
                "u32" => ArrayData::U32(raw.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect()),
                _ => ArrayData::I32(raw.chunks_exact(4).map(|c| i32::from_le_bytes(c.try_into().unwrap())).collect()),
            };
            arrays.push(Array {
                name: h.name,
                shape: h.shape,
                data,
            });
        }
        if at != bytes.len() {
            return Err(bad(format!("{} trailing bytes", bytes.len() - at)));
        }
        Ok(Container {
            kind: header.kind,
            meta: header.meta,
            arrays,
        })
    }

    fn expect(&self, name: &str, source: &str) -> Result<&Array> {
        self.get(name)
            .ok_or_else(|| Error::format(source, format!("missing array {name}")))
    }

    fn f64s(&self, name: &str, source: &str) -> Result<(&[usize], &[f64])> {
        match self.expect(name, source)? {
            Array {
                shape,
                data: ArrayData::F64(v),
                ..
            } => Ok((shape, v)),
            _ => Err(Error::format(source, format!("array {name} must be f64"))),
        }
    }

    fn u32s(&self, name: &str, source: &str) -> Result<(&[usize], &[u32])> {
        match self.expect(name, source)? {
            Array {
                shape,
                data: ArrayData::U32(v),
                ..
            } => Ok((shape, v)),
            _ => Err(Error::format(source, format!("array {name} must be u32"))),
        }
    }

    fn i32s(&self, name: &str, source: &str) -> Result<(&[usize], &[i32])> {
        match self.expect(name, source)? {
            Array {
                shape,
                data: ArrayData::I32(v),
                ..
            } => Ok((shape, v)),
            _ => Err(Error::format(source, format!("array {name} must be i32"))),
        }
    }
}

pub fn write_container(path: &Path, c: &Container) -> Result<()> {
    write_bytes(path, &c.to_bytes()?)
}

pub fn read_container(path: &Path) -> Result<Container> {
    Container::from_bytes(&read_bytes(path)?, &path.display().to_string())
}

fn template_container(t: &BodyTemplate) -> Container {
    let v = t.num_vertices();
    let j = t.num_joints();
    let mut c = Container::new("body-template", serde_json::json!({ "num_vertices": v, "num_joints": j }));
    c.push("vertices", vec![v, 3], ArrayData::F64(t.vertices.iter().flatten().copied().collect()));
    c.push("faces", vec![t.faces.len(), 3], ArrayData::U32(t.faces.iter().flatten().copied().collect()));
    let mut rows = Vec::new();
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    for (r, row) in t.joint_regressor.rows.iter().enumerate() {
        for &(col, val) in row {
            rows.push(r as u32);
            cols.push(col);
            vals.push(val);
        }
    }
    let nnz = vals.len();
    c.push("joint_regressor_rows", vec![nnz], ArrayData::U32(rows));
    c.push("joint_regressor_cols", vec![nnz], ArrayData::U32(cols));
    c.push("joint_regressor_vals", vec![nnz], ArrayData::F64(vals));
    c.push("skin_weights", vec![v, j], ArrayData::F64(t.skin_weights.clone()));
    c.push("shape_dirs", vec![v, 3, crate::body::NUM_BETAS], ArrayData::F64(t.shape_dirs.clone()));
    c.push("part_labels", vec![v], ArrayData::U32(t.part_labels.clone()));
    c.push("parents", vec![j], ArrayData::I32(t.parents.clone()));
    c
}

pub fn write_template(path: &Path, t: &BodyTemplate) -> Result<()> {
    t.validate()?;
    write_container(path, &template_container(t))
}

pub fn read_template(path: &Path) -> Result<BodyTemplate> {
    let src = path.display().to_string();
    let c = read_container(path)?;
    if c.kind != "body-template" {
        return Err(Error::format(&src, format!("expected a body-template container, found {}", c.kind)));
    }
    let (vshape, verts) = c.f64s("vertices", &src)?;
    let v = vshape.first().copied().unwrap_or(0);
    let (_, faces) = c.u32s("faces", &src)?;
    let (_, parents) = c.i32s("parents", &src)?;
    let j = parents.len();
    let (_, rows) = c.u32s("joint_regressor_rows", &src)?;
    let (_, cols) = c.u32s("joint_regressor_cols", &src)?;
    let (_, vals) = c.f64s("joint_regressor_vals", &src)?;
    if rows.len() != cols.len() || rows.len() != vals.len() {
        return Err(Error::format(&src, "joint regressor arrays differ in length"));
    }
    let mut reg_rows = vec![Vec::new(); j];
    for ((&r, &col), &val) in rows.iter().zip(cols).zip(vals) {
        reg_rows
            .get_mut(r as usize)
            .ok_or_else(|| Error::format(&src, format!("regressor row {r} out of range")))?
            .push((col, val));
    }
    let t = BodyTemplate {
        vertices: verts.chunks_exact(3).map(|p| [p[0], p[1], p[2]]).collect(),
        faces: faces.chunks_exact(3).map(|f| [f[0], f[1], f[2]]).collect(),
        joint_regressor: JointRegressor {
            num_vertices: v,
            rows: reg_rows,
        },
        skin_weights: c.f64s("skin_weights", &src)?.1.to_vec(),
        shape_dirs: c.f64s("shape_dirs", &src)?.1.to_vec(),
        part_labels: c.u32s("part_labels", &src)?.1.to_vec(),
        parents: parents.to_vec(),
    };
    t.validate().map_err(|e| Error::format(&src, e.to_string()))?;
    Ok(t)
}

pub fn write_prior(path: &Path, prior: &VertexLabelPrior, eps_bg: f64) -> Result<()> {
    prior.validate()?;
    let n = prior.label_set.len();
    let mut c = Container::new(
        "vertex-label-prior",
        serde_json::json!({ "labels": prior.label_set.names(), "eps_bg": eps_bg }),
    );
    c.push("probs", vec![prior.num_vertices, n], ArrayData::F64(prior.probs.clone()));
    write_container(path, &c)
}

pub fn read_prior(path: &Path) -> Result<VertexLabelPrior> {
    let src = path.display().to_string();
    let c = read_container(path)?;
    if c.kind != "vertex-label-prior" {
        return Err(Error::format(&src, format!("expected a vertex-label-prior container, found {}", c.kind)));
    }
    let names: Vec<String> = serde_json::from_value(c.meta.get("labels").cloned().unwrap_or_default())
        .map_err(|e| Error::format(&src, format!("labels: {e}")))?;
    let label_set = LabelSet::new(names).map_err(|e| Error::format(&src, e.to_string()))?;
    let (shape, probs) = c.f64s("probs", &src)?;
    if shape.len() != 2 || shape[1] != label_set.len() {
        return Err(Error::format(&src, format!("probs shape {shape:?} does not match the label set")));
    }
    let prior = VertexLabelPrior {
        label_set,
        num_vertices: shape[0],
        probs: probs.to_vec(),
    };
    prior.validate().map_err(|e| Error::format(&src, e.to_string()))?;
    Ok(prior)
}
