//! Procedurally generated low-poly humanoid template.
//!
//! The body is a set of closed tubes (torso, head, two arms, two legs, two
//! feet) whose rings are placed at the 24 skeleton joints and in between.
//! Each joint is regressed as the centroid of the ring sitting on it, so
//! radial shape directions (girth) leave the skeleton untouched while the
//! length directions move it.

use std::f64::consts::TAU;

use super::{BodyTemplate, JointRegressor, NUM_BETAS, NUM_JOINTS, SMPL_PARENTS};

/// Level of detail of the generated template.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Resolution {
    /// Joint rings only, ~190 vertices. Used by gradient checks.
    Small,
    /// ~870 vertices.
    Desk,
}

/// Rest-pose joint locations (metres; y down, z away from the camera).
pub const REST_JOINTS: [[f64; 3]; NUM_JOINTS] = [
    [0.0, 0.0, 0.0],
    [0.09, 0.08, 0.0],
    [-0.09, 0.08, 0.0],
    [0.0, -0.10, 0.0],
    [0.10, 0.48, 0.0],
    [-0.10, 0.48, 0.0],
    [0.0, -0.22, 0.0],
    [0.10, 0.88, 0.0],
    [-0.10, 0.88, 0.0],
    [0.0, -0.28, 0.0],
    [0.10, 0.94, -0.10],
    [-0.10, 0.94, -0.10],
    [0.0, -0.50, 0.0],
    [0.07, -0.44, 0.0],
    [-0.07, -0.44, 0.0],
    [0.0, -0.62, 0.0],
    [0.18, -0.44, 0.0],
    [-0.18, -0.44, 0.0],
    [0.44, -0.44, 0.0],
    [-0.44, -0.44, 0.0],
    [0.68, -0.44, 0.0],
    [-0.68, -0.44, 0.0],
    [0.78, -0.44, 0.0],
    [-0.78, -0.44, 0.0],
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Tube {
    Torso,
    Head,
    Arm,
    Leg,
    Foot,
}

struct Station {
    center: [f64; 3],
    radii: [f64; 2],
    weights: &'static [(usize, f64)],
    joint: Option<usize>,
}

const fn st(
    center: [f64; 3],
    radii: [f64; 2],
    weights: &'static [(usize, f64)],
    joint: Option<usize>,
) -> Station {
    Station {
        center,
        radii,
        weights,
        joint,
    }
}

fn torso() -> Vec<Station> {
    vec![
        st([0.0, 0.14, 0.0], [0.13, 0.09], &[(0, 1.0)], None),
        st([0.0, 0.07, 0.0], [0.15, 0.10], &[(0, 1.0)], None),
        st([0.0, 0.0, 0.0], [0.15, 0.10], &[(0, 1.0)], Some(0)),
        st([0.0, -0.05, 0.0], [0.14, 0.095], &[(0, 0.75), (3, 0.25)], None),
        st([0.0, -0.10, 0.0], [0.14, 0.09], &[(0, 0.5), (3, 0.5)], Some(3)),
        st([0.0, -0.16, 0.0], [0.14, 0.09], &[(3, 1.0)], None),
        st([0.0, -0.22, 0.0], [0.15, 0.095], &[(3, 0.5), (6, 0.5)], Some(6)),
        st([0.0, -0.25, 0.0], [0.155, 0.10], &[(6, 1.0)], None),
        st([0.0, -0.28, 0.0], [0.16, 0.10], &[(6, 0.5), (9, 0.5)], Some(9)),
        st([0.0, -0.36, 0.0], [0.165, 0.10], &[(9, 1.0)], None),
        st([0.0, -0.43, 0.0], [0.15, 0.09], &[(9, 1.0)], None),
        st([0.0, -0.48, 0.0], [0.10, 0.07], &[(9, 0.8), (12, 0.2)], None),
    ]
}

fn head() -> Vec<Station> {
    vec![
        st([0.0, -0.46, 0.0], [0.05, 0.05], &[(9, 0.5), (12, 0.5)], None),
        st([0.0, -0.50, 0.0], [0.05, 0.05], &[(12, 1.0)], Some(12)),
        st([0.0, -0.56, 0.0], [0.05, 0.05], &[(12, 1.0)], None),
        st([0.0, -0.62, 0.0], [0.075, 0.08], &[(12, 0.5), (15, 0.5)], Some(15)),
        st([0.0, -0.68, 0.0], [0.095, 0.10], &[(15, 1.0)], None),
        st([0.0, -0.74, 0.0], [0.095, 0.10], &[(15, 1.0)], None),
        st([0.0, -0.79, 0.0], [0.075, 0.08], &[(15, 1.0)], None),
        st([0.0, -0.83, 0.0], [0.04, 0.045], &[(15, 1.0)], None),
    ]
}

// Left side only; the right side is mirrored.
fn arm() -> Vec<Station> {
    vec![
        st([0.07, -0.44, 0.0], [0.05, 0.05], &[(9, 0.5), (13, 0.5)], Some(13)),
        st([0.125, -0.44, 0.0], [0.055, 0.055], &[(13, 1.0)], None),
        st([0.18, -0.44, 0.0], [0.055, 0.055], &[(13, 0.5), (16, 0.5)], Some(16)),
        st([0.245, -0.44, 0.0], [0.05, 0.05], &[(16, 1.0)], None),
        st([0.31, -0.44, 0.0], [0.048, 0.048], &[(16, 1.0)], None),
        st([0.375, -0.44, 0.0], [0.045, 0.045], &[(16, 0.85), (18, 0.15)], None),
        st([0.44, -0.44, 0.0], [0.042, 0.042], &[(16, 0.5), (18, 0.5)], Some(18)),
        st([0.50, -0.44, 0.0], [0.042, 0.042], &[(18, 1.0)], None),
        st([0.56, -0.44, 0.0], [0.04, 0.04], &[(18, 1.0)], None),
        st([0.62, -0.44, 0.0], [0.036, 0.036], &[(18, 0.85), (20, 0.15)], None),
        st([0.68, -0.44, 0.0], [0.032, 0.032], &[(18, 0.5), (20, 0.5)], Some(20)),
        st([0.73, -0.44, 0.0], [0.022, 0.045], &[(20, 1.0)], None),
        st([0.78, -0.44, 0.0], [0.02, 0.045], &[(20, 0.5), (22, 0.5)], Some(22)),
        st([0.83, -0.44, 0.0], [0.018, 0.04], &[(22, 1.0)], None),
        st([0.87, -0.44, 0.0], [0.01, 0.02], &[(22, 1.0)], None),
    ]
}

fn leg() -> Vec<Station> {
    vec![
        st([0.09, 0.03, 0.0], [0.075, 0.075], &[(0, 1.0)], None),
        st([0.09, 0.08, 0.0], [0.075, 0.075], &[(0, 0.5), (1, 0.5)], Some(1)),
        st([0.0925, 0.18, 0.0], [0.072, 0.072], &[(1, 1.0)], None),
        st([0.095, 0.28, 0.0], [0.066, 0.066], &[(1, 1.0)], None),
        st([0.0975, 0.38, 0.0], [0.06, 0.06], &[(1, 0.85), (4, 0.15)], None),
        st([0.10, 0.48, 0.0], [0.05, 0.05], &[(1, 0.5), (4, 0.5)], Some(4)),
        st([0.10, 0.58, 0.0], [0.05, 0.05], &[(4, 1.0)], None),
        st([0.10, 0.68, 0.0], [0.046, 0.046], &[(4, 1.0)], None),
        st([0.10, 0.78, 0.0], [0.04, 0.04], &[(4, 0.85), (7, 0.15)], None),
        st([0.10, 0.88, 0.0], [0.035, 0.035], &[(4, 0.5), (7, 0.5)], Some(7)),
        st([0.10, 0.92, 0.0], [0.035, 0.035], &[(7, 1.0)], None),
    ]
}

fn foot() -> Vec<Station> {
    vec![
        st([0.10, 0.93, 0.04], [0.04, 0.03], &[(7, 1.0)], None),
        st([0.10, 0.935, -0.05], [0.045, 0.028], &[(7, 1.0)], None),
        st([0.10, 0.94, -0.10], [0.045, 0.025], &[(7, 0.5), (10, 0.5)], Some(10)),
        st([0.10, 0.945, -0.14], [0.04, 0.02], &[(10, 1.0)], None),
        st([0.10, 0.95, -0.17], [0.02, 0.01], &[(10, 1.0)], None),
    ]
}

fn mirror_joint(j: usize) -> usize {
    match j {
        1 => 2,
        2 => 1,
        4 => 5,
        5 => 4,
        7 => 8,
        8 => 7,
        10 => 11,
        11 => 10,
        13 => 14,
        14 => 13,
        16 => 17,
        17 => 16,
        18 => 19,
        19 => 18,
        20 => 21,
        21 => 20,
        22 => 23,
        23 => 22,
        j => j,
    }
}

#[derive(Default)]
struct Builder {
    vertices: Vec<[f64; 3]>,
    faces: Vec<[u32; 3]>,
    weights: Vec<Vec<(usize, f64)>>,
    centers: Vec<[f64; 3]>,
    tubes: Vec<Tube>,
    regressor: Vec<Vec<(u32, f64)>>,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

impl Builder {
    fn push_vertex(&mut self, p: [f64; 3], weights: Vec<(usize, f64)>, center: [f64; 3], tube: Tube) -> u32 {
        self.vertices.push(p);
        self.weights.push(weights);
        self.centers.push(center);
        self.tubes.push(tube);
        (self.vertices.len() - 1) as u32
    }

    /// Adds a triangle whose normal points along `outward`.
    fn push_face(&mut self, mut f: [u32; 3], outward: [f64; 3]) {
        let [a, b, c] = f.map(|i| self.vertices[i as usize]);
        if dot(cross(sub(b, a), sub(c, a)), outward) < 0.0 {
            f.swap(1, 2);
        }
        self.faces.push(f);
    }

    fn tube(&mut self, stations: &[Station], axes: [[f64; 3]; 2], sides: usize, mirror: bool, tube: Tube) {
        let fix = |p: [f64; 3]| if mirror { [-p[0], p[1], p[2]] } else { p };
        let fix_weights = |w: &[(usize, f64)]| -> Vec<(usize, f64)> {
            w.iter()
                .map(|&(j, v)| (if mirror { mirror_joint(j) } else { j }, v))
                .collect()
        };
        let mut rings: Vec<Vec<u32>> = Vec::with_capacity(stations.len());
        for s in stations {
            let center = fix(s.center);
            let ring: Vec<u32> = (0..sides)
                .map(|k| {
                    let phi = TAU * k as f64 / sides as f64;
                    let (sn, cs) = phi.sin_cos();
                    let local = [
                        s.radii[0] * cs * axes[0][0] + s.radii[1] * sn * axes[1][0],
                        s.radii[0] * cs * axes[0][1] + s.radii[1] * sn * axes[1][1],
                        s.radii[0] * cs * axes[0][2] + s.radii[1] * sn * axes[1][2],
                    ];
                    let p = fix([
                        s.center[0] + local[0],
                        s.center[1] + local[1],
                        s.center[2] + local[2],
                    ]);
                    self.push_vertex(p, fix_weights(s.weights), center, tube)
                })
                .collect();
            if let Some(j) = s.joint {
                let j = if mirror { mirror_joint(j) } else { j };
                let w = 1.0 / sides as f64;
                self.regressor[j] = ring.iter().map(|&v| (v, w)).collect();
            }
            rings.push(ring);
        }
        for i in 0..rings.len() - 1 {
            let (c0, c1) = (fix(stations[i].center), fix(stations[i + 1].center));
            for k in 0..sides {
                let k1 = (k + 1) % sides;
                let quad = [rings[i][k], rings[i][k1], rings[i + 1][k1], rings[i + 1][k]];
                let centroid = quad
                    .iter()
                    .map(|&v| self.vertices[v as usize])
                    .fold([0.0; 3], |acc, p| [acc[0] + p[0], acc[1] + p[1], acc[2] + p[2]]);
                let centroid = centroid.map(|x| x / 4.0);
                let axis_mid = [(c0[0] + c1[0]) / 2.0, (c0[1] + c1[1]) / 2.0, (c0[2] + c1[2]) / 2.0];
                let outward = sub(centroid, axis_mid);
                self.push_face([quad[0], quad[1], quad[2]], outward);
                self.push_face([quad[0], quad[2], quad[3]], outward);
            }
        }
        for (end, idx) in [(false, 0usize), (true, stations.len() - 1)] {
            let s = &stations[idx];
            let other = &stations[if end { idx - 1 } else { idx + 1 }];
            let center = fix(s.center);
            let outward = sub(center, fix(other.center));
            let cap = self.push_vertex(center, fix_weights(s.weights), center, tube);
            let ring = rings[idx].clone();
            for k in 0..sides {
                self.push_face([cap, ring[k], ring[(k + 1) % sides]], outward);
            }
        }
    }

    fn shape_dirs(&self) -> Vec<f64> {
        let mut dirs = vec![0.0; self.vertices.len() * 3 * NUM_BETAS];
        for (v, &p) in self.vertices.iter().enumerate() {
            let c = self.centers[v];
            let radial = sub(p, c);
            let side = p[0].signum();
            let tube = self.tubes[v];
            let mut d = [[0.0; 3]; NUM_BETAS];
            // Overall height, scaled about the pelvis.
            d[0] = [0.0, 0.1 * p[1], 0.0];
            // Overall girth.
            d[1] = radial.map(|x| 0.1 * x);
            match tube {
                Tube::Arm => {
                    d[2] = [0.1 * (c[0] - 0.07 * side), 0.0, 0.0];
                    d[4] = [0.016 * side, 0.0, 0.0];
                    d[6] = radial.map(|x| 0.15 * x);
                }
                Tube::Leg => {
                    d[3] = [0.0, 0.1 * (c[1] - 0.03), 0.0];
                    d[6] = radial.map(|x| 0.15 * x);
                    d[8] = [0.009 * side, 0.0, 0.0];
                }
                Tube::Foot => {
                    d[3] = [0.0, 0.1 * (0.88 - 0.03), 0.0];
                    d[8] = [0.009 * side, 0.0, 0.0];
                }
                Tube::Torso => {
                    let chest = ((-0.1 - p[1]) / 0.3).clamp(0.0, 1.0);
                    d[4] = [0.1 * p[0] * chest, 0.0, 0.0];
                    if p[2] < 0.0 && p[1] > -0.25 && p[1] < 0.1 {
                        let bump = 1.0 - ((p[1] + 0.075) / 0.175).powi(2);
                        d[5] = [0.0, 0.0, 0.2 * p[2] * bump.max(0.0)];
                    }
                    let hip = ((p[1] + 0.1) / 0.1).clamp(0.0, 1.0);
                    d[8] = [0.1 * p[0] * hip, 0.0, 0.0];
                    if p[1] < -0.1 && p[1] > -0.46 {
                        d[9] = [0.0, 0.0, 0.1 * p[2]];
                    }
                }
                Tube::Head => {
                    if p[1] < -0.6 {
                        let hc = [0.0, -0.70, 0.0];
                        d[7] = sub(p, hc).map(|x| 0.1 * x);
                    }
                }
            }
            for axis in 0..3 {
                for (k, dk) in d.iter().enumerate() {
                    dirs[(v * 3 + axis) * NUM_BETAS + k] = dk[axis];
                }
            }
        }
        dirs
    }
}

/// Builds the procedural template at the given resolution.
pub fn humanoid(resolution: Resolution) -> BodyTemplate {
    let (torso_sides, head_sides, limb_sides, foot_sides) = match resolution {
        Resolution::Small => (6, 6, 4, 4),
        Resolution::Desk => (14, 12, 10, 8),
    };
    let keep = |stations: Vec<Station>| -> Vec<Station> {
        match resolution {
            Resolution::Desk => stations,
            Resolution::Small => {
                let n = stations.len();
                stations
                    .into_iter()
                    .enumerate()
                    .filter(|(i, s)| *i == 0 || *i == n - 1 || s.joint.is_some())
                    .map(|(_, s)| s)
                    .collect()
            }
        }
    };
    let x = [1.0, 0.0, 0.0];
    let y = [0.0, 1.0, 0.0];
    let z = [0.0, 0.0, 1.0];

    let mut b = Builder {
        regressor: vec![Vec::new(); NUM_JOINTS],
        ..Default::default()
    };
    b.tube(&keep(torso()), [x, z], torso_sides, false, Tube::Torso);
    b.tube(&keep(head()), [x, z], head_sides, false, Tube::Head);
    for mirror in [false, true] {
        b.tube(&keep(arm()), [y, z], limb_sides, mirror, Tube::Arm);
        b.tube(&keep(leg()), [x, z], limb_sides, mirror, Tube::Leg);
        b.tube(&keep(foot()), [x, y], foot_sides, mirror, Tube::Foot);
    }

    let nv = b.vertices.len();
    let mut skin = vec![0.0; nv * NUM_JOINTS];
    let mut parts = vec![0u32; nv];
    for (v, w) in b.weights.iter().enumerate() {
        for &(j, val) in w {
            skin[v * NUM_JOINTS + j] += val;
        }
        // Dominant joint; ties resolve to the later (child) bone.
        let mut best = (0usize, -1.0);
        for &(j, val) in w {
            if val >= best.1 {
                best = (j, val);
            }
        }
        parts[v] = best.0 as u32;
    }
    let shape_dirs = b.shape_dirs();

    BodyTemplate {
        vertices: b.vertices,
        faces: b.faces,
        joint_regressor: JointRegressor {
            num_vertices: nv,
            rows: b.regressor,
        },
        skin_weights: skin,
        shape_dirs,
        part_labels: parts,
        parents: SMPL_PARENTS.to_vec(),
    }
}
