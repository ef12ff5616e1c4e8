//! EWA projection of 3D Gaussians onto the image plane.
//!
//! Screen coordinates put the center of pixel `(x, y)` at `(x + 0.5, y + 0.5)`.

use crate::scene_model::{CameraView, GaussianFrameParams};

/// Screen-space dilation added to every projected covariance (pixels²).
pub const LOW_PASS: f64 = 0.3;
/// Gaussians at camera depth `z <= NEAR_PLANE` are culled.
pub const NEAR_PLANE: f64 = 0.01;
/// Footprint radius in standard deviations of the major axis.
pub const FOOTPRINT_SIGMAS: f64 = 3.0;

/// Symmetric 2×2 matrix `[[xx, xy], [xy, yy]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym2 {
    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn inverse(&self) -> Option<Sym2> {
        let det = self.det();
        (det > 0.0 && det.is_finite()).then(|| Sym2 {
            xx: self.yy / det,
            xy: -self.xy / det,
            yy: self.xx / det,
        })
    }

    pub fn eigenvalues(&self) -> (f64, f64) {
        let mid = 0.5 * (self.xx + self.yy);
        let disc = (0.25 * (self.xx - self.yy).powi(2) + self.xy * self.xy).sqrt();
        (mid + disc, mid - disc)
    }

    /// `dᵀ M d`.
    #[inline]
    pub fn quad(&self, dx: f64, dy: f64) -> f64 {
        self.xx * dx * dx + 2.0 * self.xy * dx * dy + self.yy * dy * dy
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projected2D {
    pub mean2d: [f64; 2],
    pub cov2d: Sym2,
    pub conic: Sym2,
    pub depth: f64,
    pub footprint_radius: f64,
    pub source_index: usize,
}

pub fn quaternion_to_matrix(q: [f32; 4]) -> [[f64; 3]; 3] {
    let [w, x, y, z] = q.map(f64::from);
    let n = (w * w + x * x + y * y + z * z).sqrt();
    let (w, x, y, z) = (w / n, x / n, y / n, z / n);
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

/// World-space covariance `R diag(s)² Rᵀ`.
pub fn covariance_3d(g: &GaussianFrameParams) -> [[f64; 3]; 3] {
    let r = quaternion_to_matrix(g.rotation);
    let s = g.scale.map(f64::from);
    let mut m = [[0.0; 3]; 3];
    for (a, row) in m.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| r[a][k] * s[k] * s[k] * r[b][k]).sum();
        }
    }
    m
}

/// Projects one Gaussian. Returns `None` when it is culled: behind the near
/// plane, degenerate, or with a footprint entirely off-screen.
pub fn project(g: &GaussianFrameParams, cam: &CameraView, source_index: usize) -> Option<Projected2D> {
    let rot = cam.rotation();
    let trans = cam.translation();
    let mean = g.mean.map(f64::from);
    let p: [f64; 3] = std::array::from_fn(|a| (0..3).map(|k| rot[a][k] * mean[k]).sum::<f64>() + trans[a]);
    let [x, y, z] = p;
    if z <= NEAR_PLANE {
        return None;
    }

    let j = [
        [cam.fx / z, 0.0, -cam.fx * x / (z * z)],
        [0.0, cam.fy / z, -cam.fy * y / (z * z)],
    ];
    // T = J W
    let t: [[f64; 3]; 2] = std::array::from_fn(|a| std::array::from_fn(|b| (0..3).map(|k| j[a][k] * rot[k][b]).sum()));
    let sigma = covariance_3d(g);
    // T Σ Tᵀ
    let ts: [[f64; 3]; 2] =
        std::array::from_fn(|a| std::array::from_fn(|b| (0..3).map(|k| t[a][k] * sigma[k][b]).sum()));
    let entry = |a: usize, b: usize| -> f64 { (0..3).map(|k| ts[a][k] * t[b][k]).sum() };
    let cov2d = Sym2 {
        xx: entry(0, 0) + LOW_PASS,
        xy: 0.5 * (entry(0, 1) + entry(1, 0)),
        yy: entry(1, 1) + LOW_PASS,
    };
    let conic = cov2d.inverse()?;
    let (major, _) = cov2d.eigenvalues();
    let footprint_radius = FOOTPRINT_SIGMAS * major.sqrt();
    let mean2d = [cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy];

    let (w, h) = (cam.width as f64, cam.height as f64);
    if mean2d[0] + footprint_radius < 0.0
        || mean2d[0] - footprint_radius > w
        || mean2d[1] + footprint_radius < 0.0
        || mean2d[1] - footprint_radius > h
    {
        return None;
    }
    Some(Projected2D {
        mean2d,
        cov2d,
        conic,
        depth: z,
        footprint_radius,
        source_index,
    })
}

/// Unnormalized kernel `exp(-½ dᵀ Σ⁻¹ d)`; 1 at the mean.
pub fn kernel_value(p: &Projected2D, pixel: [f64; 2]) -> f64 {
    let dx = pixel[0] - p.mean2d[0];
    let dy = pixel[1] - p.mean2d[1];
    (-0.5 * p.conic.quad(dx, dy)).exp()
}

/// Front-to-back order: ascending depth, ties by ascending source index.
pub fn depth_sort(mut projected: Vec<Projected2D>) -> Vec<Projected2D> {
    projected.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.source_index.cmp(&b.source_index)));
    projected
}
