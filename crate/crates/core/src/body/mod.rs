//! Parametric articulated body: a template mesh skinned by 24 joints with
//! linear shape blendshapes, and a weak-perspective camera.
//!
//! Coordinate convention, used by every module of the crate: x points to
//! the right of the image, y points down, z points away from the camera
//! (larger z is farther). A face is front-facing when its outward normal
//! `(v1 - v0) x (v2 - v0)` has a negative z component, i.e. it points at the
//! camera.

mod camera;
mod lbs;
pub mod procedural;
mod rotation;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use camera::{project, project_point, Camera, Viewport};
pub use lbs::{forward, forward_with_cache, forward_vjp, regress_joints, regress_joints_vjp, PoseCache};
pub use rotation::{rodrigues, rodrigues_jacobian, rodrigues_vjp};

pub const NUM_JOINTS: usize = 24;
pub const NUM_BETAS: usize = 10;
pub const POSE_DIM: usize = NUM_JOINTS * 3;
/// Length of the flat parameter vector `[theta, beta, s, tx, ty]`.
pub const PARAM_DIM: usize = POSE_DIM + NUM_BETAS + 3;

/// Kinematic tree of the 24-joint skeleton (parent of joint `i`, -1 for the root).
pub const SMPL_PARENTS: [i32; NUM_JOINTS] = [
    -1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21,
];

pub const JOINT_NAMES: [&str; NUM_JOINTS] = [
    "pelvis",
    "left_hip",
    "right_hip",
    "spine1",
    "left_knee",
    "right_knee",
    "spine2",
    "left_ankle",
    "right_ankle",
    "spine3",
    "left_foot",
    "right_foot",
    "neck",
    "left_collar",
    "right_collar",
    "head",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hand",
    "right_hand",
];

/// Pose, shape and camera of one body.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyParams {
    /// Axis-angle rotations, joint-major; the first triple is the global rotation.
    pub theta: Vec<f64>,
    pub beta: Vec<f64>,
    pub camera: Camera,
}

impl BodyParams {
    /// Rest pose, mean shape, the given camera.
    pub fn zeros(camera: Camera) -> Self {
        BodyParams {
            theta: vec![0.0; POSE_DIM],
            beta: vec![0.0; NUM_BETAS],
            camera,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta.len() != POSE_DIM {
            return Err(Error::dim("theta", POSE_DIM, self.theta.len()));
        }
        if self.beta.len() != NUM_BETAS {
            return Err(Error::dim("beta", NUM_BETAS, self.beta.len()));
        }
        if !(self.camera.s > 0.0) {
            return Err(Error::invalid(
                "camera",
                format!("scale must be positive, got {}", self.camera.s),
            ));
        }
        let finite = self.theta.iter().chain(&self.beta).all(|v| v.is_finite())
            && self.camera.tx.is_finite()
            && self.camera.ty.is_finite()
            && self.camera.s.is_finite();
        if !finite {
            return Err(Error::NonFinite { term: "body parameters" });
        }
        Ok(())
    }

    pub fn joint_axis_angle(&self, joint: usize) -> [f64; 3] {
        [
            self.theta[3 * joint],
            self.theta[3 * joint + 1],
            self.theta[3 * joint + 2],
        ]
    }

    /// Flat `[theta(72), beta(10), s, tx, ty]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(PARAM_DIM);
        v.extend_from_slice(&self.theta);
        v.extend_from_slice(&self.beta);
        v.extend_from_slice(&[self.camera.s, self.camera.tx, self.camera.ty]);
        v
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != PARAM_DIM {
            return Err(Error::dim("parameter vector", PARAM_DIM, v.len()));
        }
        Ok(BodyParams {
            theta: v[..POSE_DIM].to_vec(),
            beta: v[POSE_DIM..POSE_DIM + NUM_BETAS].to_vec(),
            camera: Camera {
                s: v[PARAM_DIM - 3],
                tx: v[PARAM_DIM - 2],
                ty: v[PARAM_DIM - 1],
            },
        })
    }
}

/// Vertices plus triangular faces.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<[f64; 3]>, faces: Vec<[u32; 3]>) -> Self {
        TriangleMesh { vertices, faces }
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.vertices.len();
        for (f, face) in self.faces.iter().enumerate() {
            if face.iter().any(|&i| i as usize >= v) {
                return Err(Error::invalid(
                    "mesh",
                    format!("face {f} references a vertex outside 0..{v}"),
                ));
            }
            if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
                return Err(Error::invalid("mesh", format!("face {f} is degenerate")));
            }
        }
        Ok(())
    }

    /// Area-weighted vertex normals (unit length, zero for isolated vertices).
    pub fn vertex_normals(&self) -> Vec<[f64; 3]> {
        let mut n = vec![[0.0; 3]; self.vertices.len()];
        for f in &self.faces {
            let [a, b, c] = f.map(|i| self.vertices[i as usize]);
            let e1 = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
            let e2 = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
            let fn_ = [
                e1[1] * e2[2] - e1[2] * e2[1],
                e1[2] * e2[0] - e1[0] * e2[2],
                e1[0] * e2[1] - e1[1] * e2[0],
            ];
            for &i in f {
                for k in 0..3 {
                    n[i as usize][k] += fn_[k];
                }
            }
        }
        for v in &mut n {
            let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if len > 0.0 {
                v.iter_mut().for_each(|x| *x /= len);
            }
        }
        n
    }
}

/// Sparse `J x V` matrix mapping mesh vertices to joint locations.
#[derive(Clone, Debug, PartialEq)]
pub struct JointRegressor {
    pub num_vertices: usize,
    /// Per joint, `(vertex, weight)` pairs.
    pub rows: Vec<Vec<(u32, f64)>>,
}

impl JointRegressor {
    pub fn num_joints(&self) -> usize {
        self.rows.len()
    }

    pub fn apply(&self, points: &[[f64; 3]]) -> Vec<[f64; 3]> {
        self.rows
            .iter()
            .map(|row| {
                let mut j = [0.0; 3];
                for &(v, w) in row {
                    let p = points[v as usize];
                    j[0] += w * p[0];
                    j[1] += w * p[1];
                    j[2] += w * p[2];
                }
                j
            })
            .collect()
    }

    /// Accumulates `R^T g` into `out` (one 3-vector per vertex).
    pub fn apply_transpose(&self, grad: &[[f64; 3]], out: &mut [[f64; 3]]) {
        for (row, g) in self.rows.iter().zip(grad) {
            for &(v, w) in row {
                let o = &mut out[v as usize];
                o[0] += w * g[0];
                o[1] += w * g[1];
                o[2] += w * g[2];
            }
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|row| {
                let mut d = vec![0.0; self.num_vertices];
                for &(v, w) in row {
                    d[v as usize] += w;
                }
                d
            })
            .collect()
    }
}

/// Everything needed to pose and shape a mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct BodyTemplate {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[u32; 3]>,
    pub joint_regressor: JointRegressor,
    /// `V x J`, row-major.
    pub skin_weights: Vec<f64>,
    /// `V x 3 x NUM_BETAS`, row-major.
    pub shape_dirs: Vec<f64>,
    pub part_labels: Vec<u32>,
    pub parents: Vec<i32>,
}

impl BodyTemplate {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_joints(&self) -> usize {
        self.parents.len()
    }

    pub fn skin_weight(&self, vertex: usize, joint: usize) -> f64 {
        self.skin_weights[vertex * self.num_joints() + joint]
    }

    pub fn shape_dir(&self, vertex: usize, axis: usize, k: usize) -> f64 {
        self.shape_dirs[(vertex * 3 + axis) * NUM_BETAS + k]
    }

    pub fn rest_mesh(&self) -> TriangleMesh {
        TriangleMesh::new(self.vertices.clone(), self.faces.clone())
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.num_vertices();
        let j = self.num_joints();
        if j != NUM_JOINTS {
            return Err(Error::dim("joint count", NUM_JOINTS, j));
        }
        for (i, &p) in self.parents.iter().enumerate() {
            let ok = if i == 0 { p == -1 } else { p >= 0 && (p as usize) < i };
            if !ok {
                return Err(Error::invalid(
                    "template",
                    format!("joint {i} has parent {p}; parents must precede children"),
                ));
            }
        }
        self.rest_mesh().validate()?;
        if self.skin_weights.len() != v * j {
            return Err(Error::dim("skin_weights", v * j, self.skin_weights.len()));
        }
        for (vi, row) in self.skin_weights.chunks(j).enumerate() {
            if row.iter().any(|&w| !(w >= 0.0)) {
                return Err(Error::invalid(
                    "template",
                    format!("vertex {vi} has a negative skin weight"),
                ));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::invalid(
                    "template",
                    format!("skin weights of vertex {vi} sum to {sum}"),
                ));
            }
        }
        if self.shape_dirs.len() != v * 3 * NUM_BETAS {
            return Err(Error::dim("shape_dirs", v * 3 * NUM_BETAS, self.shape_dirs.len()));
        }
        if self.part_labels.len() != v {
            return Err(Error::dim("part_labels", v, self.part_labels.len()));
        }
        let reg = &self.joint_regressor;
        if reg.num_joints() != j {
            return Err(Error::dim("joint_regressor rows", j, reg.num_joints()));
        }
        if reg.num_vertices != v {
            return Err(Error::dim("joint_regressor width", v, reg.num_vertices));
        }
        for (ji, row) in reg.rows.iter().enumerate() {
            if row.iter().any(|&(vi, _)| vi as usize >= v) {
                return Err(Error::invalid(
                    "template",
                    format!("joint regressor row {ji} references a missing vertex"),
                ));
            }
            let sum: f64 = row.iter().map(|&(_, w)| w).sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::invalid(
                    "template",
                    format!("joint regressor row {ji} sums to {sum}"),
                ));
            }
        }
        Ok(())
    }
}
