//! Planar domains and the regular part of their hydrodynamic Green's function.
//!
//! Three kinds are supported: the whole plane (no boundary, `g ≡ 0`), the unit
//! disk, and images `Ω = f(D)` of the unit disk under a polynomial map
//! `f(w) = w + Σ_{j≥2} c_j w^j` that is injective on the closed disk.
//!
//! With `G(w,z) = (1/2π) log(1/|w-z|) - g(w,z)` the disk has
//! `g(w,z) = -(1/2π) log|1 - w conj(z)|`. For a mapped disk the Green's
//! function is conformally invariant, `G_Ω(f(p), f(q)) = G_D(p, q)`, so
//!
//! ```text
//! g_Ω(f(p), f(q)) = g_D(p, q) - (1/2π) log|Δf(p, q)|,   Δf(p, q) = (f(p) - f(q)) / (p - q).
//! ```
//!
//! The divided difference `Δf` is a polynomial in `(p, q)` and is evaluated
//! without forming `f(p) - f(q)`, which makes the diagonal `p = q` (where
//! `Δf = f'`) an ordinary evaluation.
//!
//! Gradients are returned as complex numbers `∂/∂x + i ∂/∂y`.

use std::f64::consts::PI;

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VortexError};

/// A point of the complex plane in domain coordinates.
pub type ComplexPoint = Complex64;

const INV_2PI: f64 = 1.0 / (2.0 * PI);

/// Newton settings for inverting the conformal map.
const INVERSE_MAX_ITER: usize = 50;
const INVERSE_TOL: f64 = 1e-13;

/// Boundary resolution used for the injectivity test and distance queries.
const BOUNDARY_SAMPLES: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainKind {
    Plane,
    Disk,
    MappedDisk,
}

impl DomainKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DomainKind::Plane => "plane",
            DomainKind::Disk => "disk",
            DomainKind::MappedDisk => "mapped-disk",
        }
    }
}

/// Linearization of `∇_w g(w, z)` with respect to both arguments.
///
/// `δ(∇_w g) = conj(dw·δw + dz·δz + dz_bar·conj(δz))`.
#[derive(Clone, Copy, Debug, Default)]
pub struct GradLinearization {
    pub dw: Complex64,
    pub dz: Complex64,
    pub dz_bar: Complex64,
}

/// An immutable planar domain model.
#[derive(Clone, Debug)]
pub struct Domain {
    kind: DomainKind,
    /// Polynomial coefficients `c_2, c_3, ...` of the map (mapped disk only).
    coeffs: Vec<Complex64>,
    /// Samples of the boundary curve, empty for the plane.
    boundary: Vec<Complex64>,
}

impl Domain {
    pub fn plane() -> Self {
        Domain {
            kind: DomainKind::Plane,
            coeffs: Vec::new(),
            boundary: Vec::new(),
        }
    }

    pub fn unit_disk() -> Self {
        Domain {
            kind: DomainKind::Disk,
            coeffs: Vec::new(),
            boundary: boundary_circle(BOUNDARY_SAMPLES),
        }
    }

    /// Image of the unit disk under `f(w) = w + Σ_{j≥2} coeffs[j-2] w^j`.
    ///
    /// Rejects coefficient sets for which `f` is not injective on the closed
    /// disk: `f'` must not vanish on the boundary, must have no zeros inside
    /// (zero winding number of `f'(e^{it})`), and the boundary curve must be
    /// simple.
    pub fn mapped_disk(coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(VortexError::InvalidDomain(
                "map coefficients must be finite".into(),
            ));
        }
        let mut domain = Domain {
            kind: DomainKind::MappedDisk,
            coeffs,
            boundary: Vec::new(),
        };
        domain.check_injective()?;
        domain.boundary = boundary_circle(BOUNDARY_SAMPLES)
            .into_iter()
            .map(|w| domain.map_forward(w))
            .collect();
        Ok(domain)
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn is_bounded(&self) -> bool {
        self.kind != DomainKind::Plane
    }

    /// True when the domain is invariant under rotations about the origin.
    pub fn is_radial(&self) -> bool {
        match self.kind {
            DomainKind::Plane | DomainKind::Disk => true,
            DomainKind::MappedDisk => self.coeffs.iter().all(|c| c.norm() == 0.0),
        }
    }

    /// Whether the map is the identity (disk or mapped disk with zero coefficients).
    fn identity_map(&self) -> bool {
        self.kind != DomainKind::MappedDisk || self.coeffs.iter().all(|c| c.norm() == 0.0)
    }

    /// Short human-readable identifier.
    pub fn label(&self) -> String {
        match self.kind {
            DomainKind::MappedDisk => {
                let terms: Vec<String> = self
                    .coeffs
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.norm() != 0.0)
                    .map(|(j, c)| format!("({}{:+}i)w^{}", c.re, c.im, j + 2))
                    .collect();
                if terms.is_empty() {
                    "mapped-disk[w]".into()
                } else {
                    format!("mapped-disk[w+{}]", terms.join("+"))
                }
            }
            kind => kind.as_str().into(),
        }
    }

    fn check_injective(&self) -> Result<()> {
        let n = 720;
        let circle = boundary_circle(n);
        let derivs: Vec<Complex64> = circle.iter().map(|&w| self.map_derivative(w)).collect();
        let min_deriv = derivs.iter().map(|d| d.norm()).fold(f64::INFINITY, f64::min);
        if min_deriv <= 1e-6 {
            return Err(VortexError::InvalidDomain(format!(
                "map derivative nearly vanishes on the boundary (min |f'| = {min_deriv:e})"
            )));
        }
        let mut winding = 0.0;
        for i in 0..n {
            winding += (derivs[(i + 1) % n] / derivs[i]).arg();
        }
        let zeros = (winding / (2.0 * PI)).round() as i64;
        if zeros != 0 {
            return Err(VortexError::InvalidDomain(format!(
                "map derivative has {zeros} zero(s) inside the disk"
            )));
        }
        let curve: Vec<Complex64> = circle.iter().map(|&w| self.map_forward(w)).collect();
        for i in 0..n {
            let (a, b) = (curve[i], curve[(i + 1) % n]);
            for j in (i + 2)..n {
                if (j + 1) % n == i {
                    continue;
                }
                let (c, d) = (curve[j], curve[(j + 1) % n]);
                if segments_intersect(a, b, c, d) {
                    return Err(VortexError::InvalidDomain(
                        "boundary curve is not simple".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    // ----- conformal map -------------------------------------------------

    pub fn map_forward(&self, w: ComplexPoint) -> ComplexPoint {
        let mut acc = Complex64::new(0.0, 0.0);
        for c in self.coeffs.iter().rev() {
            acc = (acc + c) * w;
        }
        w + acc * w
    }

    pub fn map_derivative(&self, w: ComplexPoint) -> ComplexPoint {
        let mut acc = Complex64::new(0.0, 0.0);
        for (idx, c) in self.coeffs.iter().enumerate().rev() {
            let j = (idx + 2) as f64;
            acc = acc * w + c * j;
        }
        Complex64::new(1.0, 0.0) + acc * w
    }

    pub fn map_second_derivative(&self, w: ComplexPoint) -> ComplexPoint {
        let mut acc = Complex64::new(0.0, 0.0);
        for (idx, c) in self.coeffs.iter().enumerate().rev() {
            let j = (idx + 2) as f64;
            acc = acc * w + c * (j * (j - 1.0));
        }
        acc
    }

    /// Preimage `f^{-1}(z)` by damped Newton seeded at `z`.
    pub fn map_inverse(&self, z: ComplexPoint) -> Result<ComplexPoint> {
        if self.identity_map() {
            return Ok(z);
        }
        let mut p = z;
        let mut res = self.map_forward(p) - z;
        for _ in 0..INVERSE_MAX_ITER {
            if res.norm() < INVERSE_TOL {
                return Ok(p);
            }
            let step = res / self.map_derivative(p);
            let mut lambda = 1.0;
            loop {
                let trial = p - step * lambda;
                let trial_res = self.map_forward(trial) - z;
                if trial_res.norm() < res.norm() || lambda < 1e-4 {
                    p = trial;
                    res = trial_res;
                    break;
                }
                lambda *= 0.5;
            }
        }
        if res.norm() < INVERSE_TOL {
            Ok(p)
        } else {
            Err(VortexError::MapInversion {
                point: z,
                iterations: INVERSE_MAX_ITER,
            })
        }
    }

    /// Preimage in the unit disk, or an error if `z` is not in the domain.
    pub fn preimage(&self, z: ComplexPoint) -> Result<ComplexPoint> {
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(VortexError::OutsideDomain(z));
        }
        match self.kind {
            DomainKind::Plane => Ok(z),
            DomainKind::Disk => {
                if z.norm_sqr() < 1.0 {
                    Ok(z)
                } else {
                    Err(VortexError::OutsideDomain(z))
                }
            }
            DomainKind::MappedDisk => {
                let p = self.map_inverse(z)?;
                if p.norm_sqr() < 1.0 {
                    Ok(p)
                } else {
                    Err(VortexError::OutsideDomain(z))
                }
            }
        }
    }

    pub fn contains(&self, z: ComplexPoint) -> bool {
        self.preimage(z).is_ok()
    }

    // ----- Green's function regular part --------------------------------

    /// Regular part `g(w, z)` of the Green's function.
    pub fn regular_part(&self, w: ComplexPoint, z: ComplexPoint) -> Result<f64> {
        let p = self.preimage(w)?;
        let q = self.preimage(z)?;
        Ok(self.regular_part_pre(p, q))
    }

    /// Robin function `h(z) = g(z, z)`.
    pub fn robin(&self, z: ComplexPoint) -> Result<f64> {
        let p = self.preimage(z)?;
        Ok(self.regular_part_pre(p, p))
    }

    /// Real gradients `(∇_w g, ∇_z g)`.
    pub fn grad_regular_part(
        &self,
        w: ComplexPoint,
        z: ComplexPoint,
    ) -> Result<(ComplexPoint, ComplexPoint)> {
        let p = self.preimage(w)?;
        let q = self.preimage(z)?;
        Ok((self.grad1_pre(p, q), self.grad1_pre(q, p)))
    }

    /// `∇h(z)`.
    pub fn grad_robin(&self, z: ComplexPoint) -> Result<ComplexPoint> {
        let p = self.preimage(z)?;
        Ok(self.grad1_pre(p, p) * 2.0)
    }

    /// Hessian `D²h(z)` in `(x, y)` coordinates.
    pub fn hessian_robin(&self, z: ComplexPoint) -> Result<Matrix2<f64>> {
        match self.kind {
            DomainKind::Plane => Ok(Matrix2::zeros()),
            _ if self.identity_map() => {
                let s = 1.0 - z.norm_sqr();
                if s <= 0.0 {
                    return Err(VortexError::OutsideDomain(z));
                }
                let (x, y) = (z.re, z.im);
                let c = 1.0 / (PI * s);
                let d = 2.0 / (PI * s * s);
                Ok(Matrix2::new(c + d * x * x, d * x * y, d * x * y, c + d * y * y))
            }
            _ => {
                self.preimage(z)?;
                let h = (0.25 * self.boundary_distance(z)).min(1e-3);
                let col = |e: Complex64| -> Result<Complex64> {
                    let diff = |s: f64| -> Result<Complex64> {
                        Ok((self.grad_robin(z + e * s)? - self.grad_robin(z - e * s)?) / (2.0 * s))
                    };
                    let coarse = diff(h)?;
                    let fine = diff(0.5 * h)?;
                    Ok((fine * 4.0 - coarse) / 3.0)
                };
                let cx = col(Complex64::new(1.0, 0.0))?;
                let cy = col(Complex64::new(0.0, 1.0))?;
                let off = 0.5 * (cx.im + cy.re);
                Ok(Matrix2::new(cx.re, off, off, cy.im))
            }
        }
    }

    // ----- preimage-coordinate kernels ----------------------------------

    /// `g` evaluated at preimages `p = f^{-1}(w)`, `q = f^{-1}(z)`.
    pub(crate) fn regular_part_pre(&self, p: Complex64, q: Complex64) -> f64 {
        match self.kind {
            DomainKind::Plane => 0.0,
            DomainKind::Disk => -INV_2PI * (Complex64::new(1.0, 0.0) - p * q.conj()).norm().ln(),
            DomainKind::MappedDisk => {
                let disk = -INV_2PI * (Complex64::new(1.0, 0.0) - p * q.conj()).norm().ln();
                disk - INV_2PI * self.divided_difference(p, q, 0, 0).norm().ln()
            }
        }
    }

    /// Holomorphic factor `B(p, q)` with `∇_w g(w, z) = conj(B)`.
    fn grad_factor(&self, p: Complex64, q: Complex64) -> Complex64 {
        let one = Complex64::new(1.0, 0.0);
        match self.kind {
            DomainKind::Plane => Complex64::new(0.0, 0.0),
            DomainKind::Disk => q.conj() / (one - p * q.conj()) * INV_2PI,
            DomainKind::MappedDisk => {
                let b1 = q.conj() / (one - p * q.conj());
                let s = self.divided_difference(p, q, 1, 0) / self.divided_difference(p, q, 0, 0);
                (b1 - s) / self.map_derivative(p) * INV_2PI
            }
        }
    }

    /// `∇_w g(w, z)` at preimages.
    pub(crate) fn grad1_pre(&self, p: Complex64, q: Complex64) -> Complex64 {
        self.grad_factor(p, q).conj()
    }

    /// Linearization of `∇_w g(w, z)` at preimages `(p, q)`.
    pub(crate) fn grad1_linearization_pre(&self, p: Complex64, q: Complex64) -> GradLinearization {
        let one = Complex64::new(1.0, 0.0);
        match self.kind {
            DomainKind::Plane => GradLinearization::default(),
            DomainKind::Disk => {
                let den = one - p * q.conj();
                GradLinearization {
                    dw: q.conj() * q.conj() / (den * den) * INV_2PI,
                    dz: Complex64::new(0.0, 0.0),
                    dz_bar: one / (den * den) * INV_2PI,
                }
            }
            DomainKind::MappedDisk => {
                let den = one - p * q.conj();
                let b1 = q.conj() / den;
                let db1_dp = q.conj() * q.conj() / (den * den);
                let db1_dqbar = one / (den * den);
                let d00 = self.divided_difference(p, q, 0, 0);
                let d10 = self.divided_difference(p, q, 1, 0);
                let d20 = self.divided_difference(p, q, 2, 0);
                let d01 = self.divided_difference(p, q, 0, 1);
                let d11 = self.divided_difference(p, q, 1, 1);
                let s = d10 / d00;
                let ds_dp = d20 / d00 - d10 * d10 / (d00 * d00);
                let ds_dq = d11 / d00 - d10 * d01 / (d00 * d00);
                let fp = self.map_derivative(p);
                let fpp = self.map_second_derivative(p);
                let fq = self.map_derivative(q);
                let db_dp = ((db1_dp - ds_dp) / fp - (b1 - s) * fpp / (fp * fp)) * INV_2PI;
                let db_dq = -ds_dq / fp * INV_2PI;
                let db_dqbar = db1_dqbar / fp * INV_2PI;
                GradLinearization {
                    dw: db_dp / fp,
                    dz: db_dq / fq,
                    dz_bar: db_dqbar / fq.conj(),
                }
            }
        }
    }

    /// Mixed partial `∂_p^dp ∂_q^dq` of the divided difference
    /// `Δf(p, q) = Σ_j a_j Σ_{m<j} p^m q^{j-1-m}` with `a_1 = 1`, `a_j = c_j`.
    fn divided_difference(&self, p: Complex64, q: Complex64, dp: u32, dq: u32) -> Complex64 {
        let mut total = Complex64::new(0.0, 0.0);
        let falling = |n: u32, k: u32| -> f64 { (0..k).map(|i| (n - i) as f64).product() };
        let unit = [Complex64::new(1.0, 0.0)];
        let terms = unit.iter().chain(self.coeffs.iter()).enumerate();
        for (idx, a) in terms {
            let j = idx as u32 + 1;
            if a.norm() == 0.0 {
                continue;
            }
            let mut inner = Complex64::new(0.0, 0.0);
            for m in 0..j {
                let n = j - 1 - m;
                if m < dp || n < dq {
                    continue;
                }
                let coef = falling(m, dp) * falling(n, dq);
                inner += p.powu(m - dp) * q.powu(n - dq) * coef;
            }
            total += a * inner;
        }
        total
    }

    // ----- boundary geometry --------------------------------------------

    /// Samples of the boundary curve (empty for the plane).
    pub fn boundary_points(&self) -> &[Complex64] {
        &self.boundary
    }

    /// Euclidean distance from `z` to the boundary (`∞` for the plane).
    pub fn boundary_distance(&self, z: ComplexPoint) -> f64 {
        match self.kind {
            DomainKind::Plane => f64::INFINITY,
            DomainKind::Disk => (1.0 - z.norm()).abs(),
            DomainKind::MappedDisk => {
                let n = self.boundary.len();
                let (best, _) = self
                    .boundary
                    .iter()
                    .enumerate()
                    .map(|(i, b)| (i, (b - z).norm()))
                    .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
                // golden-section refinement over the neighbouring parameter interval
                let dt = 2.0 * PI / n as f64;
                let t0 = best as f64 * dt;
                let dist = |t: f64| (self.map_forward(Complex64::from_polar(1.0, t)) - z).norm();
                let (mut lo, mut hi) = (t0 - dt, t0 + dt);
                let ratio = 0.5 * (5f64.sqrt() - 1.0);
                let mut x1 = hi - ratio * (hi - lo);
                let mut x2 = lo + ratio * (hi - lo);
                let (mut f1, mut f2) = (dist(x1), dist(x2));
                for _ in 0..60 {
                    if f1 < f2 {
                        hi = x2;
                        x2 = x1;
                        f2 = f1;
                        x1 = hi - ratio * (hi - lo);
                        f1 = dist(x1);
                    } else {
                        lo = x1;
                        x1 = x2;
                        f1 = f2;
                        x2 = lo + ratio * (hi - lo);
                        f2 = dist(x2);
                    }
                }
                f1.min(f2)
            }
        }
    }

    /// Diameter of the domain (`∞` for the plane).
    pub fn diameter(&self) -> f64 {
        match self.kind {
            DomainKind::Plane => f64::INFINITY,
            DomainKind::Disk => 2.0,
            DomainKind::MappedDisk => {
                let mut best: f64 = 0.0;
                for (i, a) in self.boundary.iter().enumerate() {
                    for b in &self.boundary[i + 1..] {
                        best = best.max((a - b).norm());
                    }
                }
                best
            }
        }
    }

    /// Axis-aligned bounding box `(min, max)` of a bounded domain.
    pub fn bounding_box(&self) -> Option<(Complex64, Complex64)> {
        if !self.is_bounded() {
            return None;
        }
        let mut lo = Complex64::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Complex64::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for b in &self.boundary {
            lo = Complex64::new(lo.re.min(b.re), lo.im.min(b.im));
            hi = Complex64::new(hi.re.max(b.re), hi.im.max(b.im));
        }
        Some((lo, hi))
    }
}

/// Serializable description of a domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub kind: DomainKind,
    /// `[re, im]` pairs for `c_2, c_3, ...` (mapped disk only).
    #[serde(default)]
    pub coeffs: Vec<[f64; 2]>,
}

impl DomainSpec {
    pub fn build(&self) -> Result<Domain> {
        match self.kind {
            DomainKind::Plane | DomainKind::Disk if !self.coeffs.is_empty() => Err(VortexError::InvalidDomain(
                format!("{} takes no map coefficients", self.kind.as_str()),
            )),
            DomainKind::Plane => Ok(Domain::plane()),
            DomainKind::Disk => Ok(Domain::unit_disk()),
            DomainKind::MappedDisk => {
                Domain::mapped_disk(self.coeffs.iter().map(|c| Complex64::new(c[0], c[1])).collect())
            }
        }
    }
}

impl From<&Domain> for DomainSpec {
    fn from(d: &Domain) -> Self {
        DomainSpec { kind: d.kind, coeffs: d.coeffs.iter().map(|c| [c.re, c.im]).collect() }
    }
}

fn boundary_circle(n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|i| Complex64::from_polar(1.0, 2.0 * PI * i as f64 / n as f64))
        .collect()
}

fn cross(a: Complex64, b: Complex64) -> f64 {
    a.re * b.im - a.im * b.re
}

fn segments_intersect(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> bool {
    let d1 = cross(b - a, c - a);
    let d2 = cross(b - a, d - a);
    let d3 = cross(d - c, a - c);
    let d4 = cross(d - c, b - c);
    (d1 * d2 < 0.0) && (d3 * d4 < 0.0)
}
