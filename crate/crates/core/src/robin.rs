//! Critical points of the Robin function `h(z) = g(z, z)`.

use nalgebra::{Matrix2, SymmetricEigen, Vector2};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VortexError};
use crate::geometry::{ComplexPoint, Domain};

/// Eigenvalue magnitude below which a critical point counts as degenerate.
pub const DEGENERACY_THRESHOLD: f64 = 1e-8;
/// Gradient norm accepted for a refined critical point.
pub const GRADIENT_TOL: f64 = 1e-10;
/// Points closer than this are merged.
pub const DEDUP_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    NondegenerateMin,
    NondegenerateMax,
    NondegenerateSaddle,
    Degenerate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPointRecord {
    #[serde(with = "complex_pair")]
    pub location: ComplexPoint,
    pub value: f64,
    /// Ascending.
    pub hessian_eigenvalues: [f64; 2],
    pub classification: Classification,
    pub stable: bool,
    pub gradient_norm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

mod complex_pair {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(z: &Complex64, s: S) -> Result<S::Ok, S::Error> {
        [z.re, z.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(Complex64::new(re, im))
    }
}

/// Classifies a critical point from its Hessian eigenvalues.
pub fn classify(eigenvalues: [f64; 2]) -> Classification {
    let [lo, hi] = eigenvalues;
    if lo.abs() < DEGENERACY_THRESHOLD || hi.abs() < DEGENERACY_THRESHOLD {
        Classification::Degenerate
    } else if lo > 0.0 {
        Classification::NondegenerateMin
    } else if hi < 0.0 {
        Classification::NondegenerateMax
    } else {
        Classification::NondegenerateSaddle
    }
}

/// Nondegenerate critical points are stable. Degenerate ones are reported
/// unstable, since deciding them needs critical groups.
pub fn classify_stability(rec: &CriticalPointRecord) -> bool {
    rec.classification != Classification::Degenerate
}

fn degenerate_diagnostic(eigenvalues: [f64; 2]) -> String {
    format!(
        "degenerate Hessian (eigenvalues {:.3e}, {:.3e}); stability needs the critical groups and is not decided",
        eigenvalues[0], eigenvalues[1]
    )
}

fn sorted_eigenvalues(h: &Matrix2<f64>) -> [f64; 2] {
    let eig = SymmetricEigen::new(*h).eigenvalues;
    let (a, b) = (eig[0], eig[1]);
    if a <= b {
        [a, b]
    } else {
        [b, a]
    }
}

/// Builds a record for a point assumed critical.
pub fn analyse_point(d: &Domain, z: ComplexPoint) -> Result<CriticalPointRecord> {
    // normalise a signed zero
    let value = d.robin(z)? + 0.0;
    let eigenvalues = sorted_eigenvalues(&d.hessian_robin(z)?);
    let classification = classify(eigenvalues);
    let mut rec = CriticalPointRecord {
        location: z,
        value,
        hessian_eigenvalues: eigenvalues,
        classification,
        stable: false,
        gradient_norm: d.grad_robin(z)?.norm(),
        diagnostic: None,
    };
    rec.stable = classify_stability(&rec);
    if !rec.stable {
        rec.diagnostic = Some(degenerate_diagnostic(eigenvalues));
    }
    Ok(rec)
}

/// Newton iteration on `∇h = 0` from `seed`.
pub fn refine_critical_point(d: &Domain, seed: ComplexPoint) -> Option<ComplexPoint> {
    let mut z = seed;
    for _ in 0..60 {
        let g = d.grad_robin(z).ok()?;
        if g.norm() < 1e-3 * GRADIENT_TOL {
            return Some(z);
        }
        let h = d.hessian_robin(z).ok()?;
        let step = h.lu().solve(&Vector2::new(-g.re, -g.im))?;
        let mut delta = Complex64::new(step[0], step[1]);
        // keep the iterate well inside the domain
        let limit = 0.5 * d.boundary_distance(z);
        if delta.norm() > limit {
            delta *= limit / delta.norm();
        }
        z += delta;
        if !d.contains(z) {
            return None;
        }
    }
    let g = d.grad_robin(z).ok()?;
    (g.norm() < GRADIENT_TOL).then_some(z)
}

/// Sample grid of the scan, possibly rotated about the bounding-box centre.
fn scan_grid(d: &Domain, resolution: usize, rotation: f64) -> Result<(Vec<ComplexPoint>, f64)> {
    let (lo, hi) = d.bounding_box().ok_or(VortexError::UnboundedDomain)?;
    let centre = (lo + hi) * 0.5;
    // a rotated square grid must still cover the domain
    let half = 0.5 * (hi - lo).re.max((hi - lo).im) * if rotation == 0.0 { 1.0 } else { 2f64.sqrt() };
    let rot = Complex64::from_polar(1.0, rotation);
    let n = resolution.max(3);
    let step = 2.0 * half / (n - 1) as f64;
    let pts = (0..n * n)
        .map(|idx| {
            let (i, j) = (idx % n, idx / n);
            let local = Complex64::new(-half + i as f64 * step, -half + j as f64 * step);
            centre + rot * local
        })
        .collect();
    Ok((pts, step))
}

/// Scans `|∇h|` on a `resolution²` grid and refines the local minima by Newton.
pub fn scan_critical_points(d: &Domain, resolution: usize) -> Result<Vec<CriticalPointRecord>> {
    scan_critical_points_rotated(d, resolution, 0.0)
}

pub fn scan_critical_points_rotated(d: &Domain, resolution: usize, rotation: f64) -> Result<Vec<CriticalPointRecord>> {
    if !d.is_bounded() {
        return Err(VortexError::UnboundedDomain);
    }
    let n = resolution.max(3);
    let (pts, step) = scan_grid(d, n, rotation)?;
    let clearance = 0.05 * d.diameter();
    let values: Vec<Option<f64>> = pts
        .par_chunks(n)
        .flat_map_iter(|row| {
            row.iter()
                .map(|z| {
                    if d.contains(*z) && d.boundary_distance(*z) >= clearance {
                        d.grad_robin(*z).ok().map(|g| g.norm_sqr())
                    } else {
                        None
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();

    let mut seeds = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let Some(v) = values[j * n + i] else { continue };
            let mut is_min = true;
            for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (ii, jj) = (i as i64 + di, j as i64 + dj);
                    if ii < 0 || jj < 0 || ii >= n as i64 || jj >= n as i64 {
                        continue;
                    }
                    if let Some(w) = values[jj as usize * n + ii as usize] {
                        if w < v {
                            is_min = false;
                        }
                    }
                }
            }
            if is_min {
                seeds.push(pts[j * n + i]);
            }
        }
    }
    log::debug!("robin scan: {} seeds on a {n}x{n} grid (cell {step:.3e})", seeds.len());

    let refined: Vec<ComplexPoint> = seeds.par_iter().filter_map(|s| refine_critical_point(d, *s)).collect();
    let mut unique: Vec<ComplexPoint> = Vec::new();
    for z in refined {
        if unique.iter().all(|u| (u - z).norm() > DEDUP_TOL) {
            unique.push(z);
        }
    }
    unique.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    unique.into_iter().map(|z| analyse_point(d, z)).collect()
}

/// `(x, y, h)` on a `resolution²` grid over the bounding box; `h` is NaN outside.
pub fn contour_grid(d: &Domain, resolution: usize) -> Result<Vec<[f64; 3]>> {
    let (pts, _) = scan_grid(d, resolution.max(2), 0.0)?;
    Ok(pts
        .par_iter()
        .map(|z| {
            let h = if d.contains(*z) { d.robin(*z).unwrap_or(f64::NAN) } else { f64::NAN };
            [z.re, z.im, h]
        })
        .collect())
}
