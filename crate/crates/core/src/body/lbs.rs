//! Linear blend skinning with shape blendshapes, and its reverse-mode
//! derivative with respect to pose and shape.

use nalgebra::{Matrix3, Vector3};

use super::rotation::{rodrigues, rodrigues_vjp};
use super::{BodyParams, BodyTemplate, TriangleMesh, NUM_BETAS};
use crate::{Error, Result};

/// Intermediate quantities of a forward pass, reused by [`forward_vjp`].
#[derive(Clone, Debug)]
pub struct PoseCache {
    pub shaped: Vec<[f64; 3]>,
    pub rest_joints: Vec<[f64; 3]>,
    local_rot: Vec<Matrix3<f64>>,
    global_rot: Vec<Matrix3<f64>>,
    global_trans: Vec<Vector3<f64>>,
}

impl PoseCache {
    /// Posed joint locations (the translation part of each global transform).
    pub fn posed_joints(&self) -> Vec<[f64; 3]> {
        self.global_trans.iter().map(|t| [t.x, t.y, t.z]).collect()
    }
}

fn check_dims(template: &BodyTemplate, params: &BodyParams) -> Result<()> {
    params.validate()?;
    let j = template.num_joints();
    if params.theta.len() != 3 * j {
        return Err(Error::dim("theta vs template joints", 3 * j, params.theta.len()));
    }
    let v = template.num_vertices();
    if template.skin_weights.len() != v * j {
        return Err(Error::dim("skin_weights", v * j, template.skin_weights.len()));
    }
    if template.shape_dirs.len() != v * 3 * NUM_BETAS {
        return Err(Error::dim("shape_dirs", v * 3 * NUM_BETAS, template.shape_dirs.len()));
    }
    if template.joint_regressor.num_vertices != v {
        return Err(Error::dim("joint_regressor width", v, template.joint_regressor.num_vertices));
    }
    Ok(())
}

/// Posed mesh `M(theta, beta)`; faces are copied from the template.
pub fn forward(template: &BodyTemplate, params: &BodyParams) -> Result<TriangleMesh> {
    forward_with_cache(template, params).map(|(m, _)| m)
}

pub fn forward_with_cache(
    template: &BodyTemplate,
    params: &BodyParams,
) -> Result<(TriangleMesh, PoseCache)> {
    check_dims(template, params)?;
    let nj = template.num_joints();

    let shaped: Vec<[f64; 3]> = template
        .vertices
        .iter()
        .enumerate()
        .map(|(v, t)| {
            let mut p = *t;
            for (axis, coord) in p.iter_mut().enumerate() {
                let dirs = &template.shape_dirs[(v * 3 + axis) * NUM_BETAS..][..NUM_BETAS];
                for (d, b) in dirs.iter().zip(&params.beta) {
                    *coord += b * d;
                }
            }
            p
        })
        .collect();
    let rest_joints = template.joint_regressor.apply(&shaped);

    let local_rot: Vec<Matrix3<f64>> = (0..nj).map(|j| rodrigues(params.joint_axis_angle(j))).collect();
    let mut global_rot = Vec::with_capacity(nj);
    let mut global_trans: Vec<Vector3<f64>> = Vec::with_capacity(nj);
    for j in 0..nj {
        let jr = Vector3::from(rest_joints[j]);
        match template.parents[j] {
            p if p < 0 => {
                global_rot.push(local_rot[j]);
                global_trans.push(jr);
            }
            p => {
                let p = p as usize;
                let offset = jr - Vector3::from(rest_joints[p]);
                global_rot.push(global_rot[p] * local_rot[j]);
                global_trans.push(global_rot[p] * offset + global_trans[p]);
            }
        }
    }
    // Skinning transforms x -> M_j x + b_j, with the rest joint moved to the origin first.
    let skin_t: Vec<Vector3<f64>> = (0..nj)
        .map(|j| global_trans[j] - global_rot[j] * Vector3::from(rest_joints[j]))
        .collect();

    let vertices = shaped
        .iter()
        .enumerate()
        .map(|(v, s)| {
            let weights = &template.skin_weights[v * nj..(v + 1) * nj];
            let mut m = Matrix3::zeros();
            let mut b = Vector3::zeros();
            for (j, &w) in weights.iter().enumerate() {
                if w != 0.0 {
                    m += global_rot[j] * w;
                    b += skin_t[j] * w;
                }
            }
            let p = m * Vector3::from(*s) + b;
            [p.x, p.y, p.z]
        })
        .collect();

    let mesh = TriangleMesh::new(vertices, template.faces.clone());
    let cache = PoseCache {
        shaped,
        rest_joints,
        local_rot,
        global_rot,
        global_trans,
    };
    Ok((mesh, cache))
}

/// Pulls a cotangent on the posed vertices back to `(d theta, d beta)`.
pub fn forward_vjp(
    template: &BodyTemplate,
    params: &BodyParams,
    cache: &PoseCache,
    grad_vertices: &[[f64; 3]],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let nv = template.num_vertices();
    let nj = template.num_joints();
    if grad_vertices.len() != nv {
        return Err(Error::dim("vertex cotangent", nv, grad_vertices.len()));
    }

    let mut g_m = vec![Matrix3::<f64>::zeros(); nj];
    let mut g_b = vec![Vector3::<f64>::zeros(); nj];
    let mut g_shaped = vec![[0.0; 3]; nv];
    for v in 0..nv {
        let gv = Vector3::from(grad_vertices[v]);
        if gv == Vector3::zeros() {
            continue;
        }
        let s = Vector3::from(cache.shaped[v]);
        let weights = &template.skin_weights[v * nj..(v + 1) * nj];
        let mut blended = Matrix3::zeros();
        for (j, &w) in weights.iter().enumerate() {
            if w != 0.0 {
                g_m[j] += gv * s.transpose() * w;
                g_b[j] += gv * w;
                blended += cache.global_rot[j] * w;
            }
        }
        let gs = blended.transpose() * gv;
        g_shaped[v] = [gs.x, gs.y, gs.z];
    }

    // b_j = t_j - R_j J_j
    let mut g_rot = g_m;
    let mut g_trans = g_b.clone();
    let mut g_joints = vec![Vector3::<f64>::zeros(); nj];
    for j in 0..nj {
        let jr = Vector3::from(cache.rest_joints[j]);
        g_rot[j] -= g_b[j] * jr.transpose();
        g_joints[j] -= cache.global_rot[j].transpose() * g_b[j];
    }

    let mut g_local = vec![Matrix3::<f64>::zeros(); nj];
    for j in (0..nj).rev() {
        let p = template.parents[j];
        if p < 0 {
            g_local[j] = g_rot[j];
            g_joints[j] += g_trans[j];
            continue;
        }
        let p = p as usize;
        let offset = Vector3::from(cache.rest_joints[j]) - Vector3::from(cache.rest_joints[p]);
        let parent_rot = cache.global_rot[p];
        g_local[j] = parent_rot.transpose() * g_rot[j];
        let back = g_rot[j] * cache.local_rot[j].transpose() + g_trans[j] * offset.transpose();
        g_rot[p] += back;
        let gt = parent_rot.transpose() * g_trans[j];
        g_joints[j] += gt;
        g_joints[p] -= gt;
        let gtj = g_trans[j];
        g_trans[p] += gtj;
    }

    let mut g_theta = vec![0.0; 3 * nj];
    for j in 0..nj {
        let g = rodrigues_vjp(params.joint_axis_angle(j), &g_local[j]);
        g_theta[3 * j..3 * j + 3].copy_from_slice(&g);
    }

    let gj: Vec<[f64; 3]> = g_joints.iter().map(|g| [g.x, g.y, g.z]).collect();
    template.joint_regressor.apply_transpose(&gj, &mut g_shaped);

    let mut g_beta = vec![0.0; NUM_BETAS];
    for (v, gs) in g_shaped.iter().enumerate() {
        for (axis, g) in gs.iter().enumerate() {
            if *g == 0.0 {
                continue;
            }
            let dirs = &template.shape_dirs[(v * 3 + axis) * NUM_BETAS..][..NUM_BETAS];
            for (gb, d) in g_beta.iter_mut().zip(dirs) {
                *gb += g * d;
            }
        }
    }
    Ok((g_theta, g_beta))
}

/// `joint_regressor * vertices`.
pub fn regress_joints(mesh: &TriangleMesh, template: &BodyTemplate) -> Result<Vec<[f64; 3]>> {
    let reg = &template.joint_regressor;
    if mesh.vertices.len() != reg.num_vertices {
        return Err(Error::dim("mesh vs joint regressor", reg.num_vertices, mesh.vertices.len()));
    }
    Ok(reg.apply(&mesh.vertices))
}

/// Adds `R^T grad_joints` into `grad_vertices`.
pub fn regress_joints_vjp(
    template: &BodyTemplate,
    grad_joints: &[[f64; 3]],
    grad_vertices: &mut [[f64; 3]],
) -> Result<()> {
    let reg = &template.joint_regressor;
    if grad_joints.len() != reg.num_joints() {
        return Err(Error::dim("joint cotangent", reg.num_joints(), grad_joints.len()));
    }
    if grad_vertices.len() != reg.num_vertices {
        return Err(Error::dim("vertex cotangent", reg.num_vertices, grad_vertices.len()));
    }
    reg.apply_transpose(grad_joints, grad_vertices);
    Ok(())
}
