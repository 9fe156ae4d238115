//! Exact Euclidean distance transform (separable two-pass lower-envelope
//! algorithm on squared integer distances).

use crate::{Error, Exec, Result};

/// Distance in pixels from every pixel to the nearest pixel of a mask.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceField {
    pub width: usize,
    pub height: usize,
    /// Row-major, `0` on mask pixels.
    pub d: Vec<f64>,
    pub source: Vec<bool>,
    /// The mask was empty; every distance holds the image diagonal.
    pub empty: bool,
}

/// Euclidean distance to the nearest `true` pixel of `mask`.
///
/// An empty mask yields the image diagonal everywhere and sets
/// [`DistanceField::empty`] so callers can skip the sample.
pub fn distance_transform(mask: &[bool], width: usize, height: usize, exec: Exec) -> Result<DistanceField> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("mask", "width and height must be at least 1"));
    }
    if mask.len() != width * height {
        return Err(Error::dim("mask pixels", width * height, mask.len()));
    }
    if !mask.iter().any(|&m| m) {
        let diag = ((width * width + height * height) as f64).sqrt();
        return Ok(DistanceField {
            width,
            height,
            d: vec![diag; width * height],
            source: mask.to_vec(),
            empty: true,
        });
    }
    let sq = squared_edt(mask, width, height, exec);
    Ok(DistanceField {
        width,
        height,
        d: sq.into_iter().map(|v| (v as f64).sqrt()).collect(),
        source: mask.to_vec(),
        empty: false,
    })
}

/// Squared distances; requires at least one `true` pixel.
pub(crate) fn squared_edt(mask: &[bool], width: usize, height: usize, exec: Exec) -> Vec<i64> {
    let far = (width + height) as i64;

    // Column pass: vertical distance to the nearest mask pixel in the column.
    let cols = exec.map(width, |x| {
        let mut g = vec![far; height];
        let mut run = far;
        for y in 0..height {
            run = if mask[y * width + x] { 0 } else { (run + 1).min(far) };
            g[y] = run;
        }
        let mut run = far;
        for y in (0..height).rev() {
            run = if mask[y * width + x] { 0 } else { (run + 1).min(far) };
            g[y] = g[y].min(run);
        }
        g
    });

    // Row pass: lower envelope of parabolas (x - i)^2 + g(i)^2.
    let rows = exec.map(height, |y| {
        let g: Vec<i64> = (0..width).map(|x| cols[x][y]).collect();
        let f = |x: i64, i: usize| (x - i as i64).pow(2) + g[i] * g[i];
        // First x where parabola u is no worse than parabola v (v < u).
        let sep = |v: usize, u: usize| {
            let (v, u) = (v as i64, u as i64);
            let (gv, gu) = (g[v as usize], g[u as usize]);
            (u * u - v * v + gu * gu - gv * gv).div_euclid(2 * (u - v))
        };
        let mut s = vec![0usize; width];
        let mut t = vec![0i64; width];
        let mut q: isize = 0;
        for u in 1..width {
            while q >= 0 && f(t[q as usize], s[q as usize]) > f(t[q as usize], u) {
                q -= 1;
            }
            if q < 0 {
                q = 0;
                s[0] = u;
            } else {
                let w = 1 + sep(s[q as usize], u);
                if w < width as i64 {
                    q += 1;
                    s[q as usize] = u;
                    t[q as usize] = w;
                }
            }
        }
        let mut out = vec![0i64; width];
        for x in (0..width).rev() {
            out[x] = f(x as i64, s[q as usize]);
            if x as i64 == t[q as usize] {
                q -= 1;
            }
        }
        out
    });
    rows.concat()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_source() {
        let (w, h) = (7, 5);
        let mut m = vec![false; w * h];
        m[0] = true;
        let d = distance_transform(&m, w, h, Exec::Sequential).unwrap();
        for y in 0..h {
            for x in 0..w {
                assert_eq!(d.d[y * w + x], ((x * x + y * y) as f64).sqrt());
            }
        }
    }

    #[test]
    fn empty_mask_is_flagged() {
        let d = distance_transform(&[false; 12], 4, 3, Exec::Sequential).unwrap();
        assert!(d.empty);
        assert!(d.d.iter().all(|&v| v == 5.0));
    }
}
