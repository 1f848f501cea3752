//! Projective transforms and inverse-mapped warping.

use super::{Layer, RenderError};

const SINGULAR: f64 = 1e-9;

/// 3x3 projective transform acting on pixel coordinates (x right, y down),
/// normalized so the bottom-right entry is 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: [[f64; 3]; 3],
}

impl Homography {
    pub fn identity() -> Self {
        Homography {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn from_matrix(m: [[f64; 3]; 3]) -> Result<Self, RenderError> {
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(RenderError::SingularHomography);
        }
        if m[2][2].abs() < SINGULAR {
            return Err(RenderError::SingularHomography);
        }
        let s = m[2][2];
        let h = Homography {
            m: m.map(|row| row.map(|v| v / s)),
        };
        if h.det().abs() <= SINGULAR {
            return Err(RenderError::SingularHomography);
        }
        Ok(h)
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Homography {
            m: [[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]],
        }
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        self.m
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Maps a point, including the projective divide.
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.m;
        let w = m[2][0] * x + m[2][1] * y + m[2][2];
        (
            (m[0][0] * x + m[0][1] * y + m[0][2]) / w,
            (m[1][0] * x + m[1][1] * y + m[1][2]) / w,
        )
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &Homography) -> Result<Homography, RenderError> {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.m[i][k] * first.m[k][j]).sum();
            }
        }
        Homography::from_matrix(out)
    }

    pub fn inverse(&self) -> Result<Homography, RenderError> {
        let d = self.det();
        if d.abs() <= SINGULAR {
            return Err(RenderError::SingularHomography);
        }
        let m = &self.m;
        let c = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
        let adj = [
            [c(1, 2, 1, 2), -c(0, 2, 1, 2), c(0, 1, 1, 2)],
            [-c(1, 2, 0, 2), c(0, 2, 0, 2), -c(0, 1, 0, 2)],
            [c(1, 2, 0, 1), -c(0, 2, 0, 1), c(0, 1, 0, 1)],
        ];
        Homography::from_matrix(adj.map(|row| row.map(|v| v / d)))
    }

    /// Exact four-point direct linear transform mapping `src[i]` to `dst[i]`.
    pub fn from_corners(src: [(f64, f64); 4], dst: [(f64, f64); 4]) -> Result<Self, RenderError> {
        let mut a = [[0.0f64; 9]; 8];
        for i in 0..4 {
            let ((x, y), (u, v)) = (src[i], dst[i]);
            a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, u];
            a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, v];
        }
        let h = solve8(a).ok_or(RenderError::SingularHomography)?;
        Homography::from_matrix([[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], 1.0]])
    }
}

/// Gaussian elimination with partial pivoting on an augmented 8x9 system.
fn solve8(mut a: [[f64; 9]; 8]) -> Option<[f64; 8]> {
    for col in 0..8 {
        let pivot = (col..8).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        for row in 0..8 {
            if row != col {
                let f = a[row][col] / a[col][col];
                if f != 0.0 {
                    for k in col..9 {
                        a[row][k] -= f * a[col][k];
                    }
                }
            }
        }
    }
    let mut x = [0.0; 8];
    for i in 0..8 {
        x[i] = a[i][8] / a[i][i];
    }
    Some(x)
}

/// Warps `src` by `h` into a `width x height` layer. Each output pixel center
/// is mapped back through the inverse and sampled bilinearly; samples off
/// the source are transparent.
pub fn perspective_warp(src: &Layer, h: &Homography, width: usize, height: usize) -> Result<Layer, RenderError> {
    let inv = h.inverse()?;
    let mut out = Layer::transparent(width, height);
    let (sw, sh) = (src.width as isize, src.height as isize);
    let fetch = |x: isize, y: isize| -> (f64, f64) {
        if x < 0 || y < 0 || x >= sw || y >= sh {
            (0.0, 0.0)
        } else {
            let i = y as usize * src.width + x as usize;
            let a = src.alpha[i] as f64;
            (a, a * src.gray[i] as f64)
        }
    };
    for y in 0..height {
        for x in 0..width {
            let (u, v) = inv.apply(x as f64 + 0.5, y as f64 + 0.5);
            let (u, v) = (u - 0.5, v - 0.5);
            if !u.is_finite() || !v.is_finite() {
                continue;
            }
            let (x0, y0) = (u.floor(), v.floor());
            let (fx, fy) = (u - x0, v - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            let mut alpha = 0.0;
            let mut premul = 0.0;
            for (dx, dy, wgt) in [
                (0, 0, (1.0 - fx) * (1.0 - fy)),
                (1, 0, fx * (1.0 - fy)),
                (0, 1, (1.0 - fx) * fy),
                (1, 1, fx * fy),
            ] {
                if wgt == 0.0 {
                    continue;
                }
                let (a, ag) = fetch(x0 + dx, y0 + dy);
                alpha += wgt * a;
                premul += wgt * ag;
            }
            let i = y * width + x;
            out.alpha[i] = alpha as f32;
            if alpha > 0.0 {
                out.gray[i] = (premul / alpha) as f32;
            }
        }
    }
    Ok(out)
}
