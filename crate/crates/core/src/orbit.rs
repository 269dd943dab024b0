//! Truncated Lyapunov–Schmidt reduction around the circle manifold and the
//! assembly of small-period choreographies.
//!
//! The circle manifold consists of the loops `a + e^{i(σt + θ)}`; its tangent
//! space at any point is spanned by the constants `1`, `i` and the phase
//! direction `i e^{iθ} e^{iσt}`. In Fourier coordinates these are coordinate
//! directions, so the orthogonal projections act mode by mode and the normal
//! space does not depend on the centre `a`.

use std::f64::consts::PI;

use log::debug;
use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate, polygon_residual, IntegratorSpec};
use crate::error::{Result, VortexError};
use crate::geometry::{ComplexPoint, Domain, DomainSpec};
use crate::hamiltonian::VortexConfiguration;
use crate::spectral::{action_psi_q, default_quadrature, euler_lagrange, CircleSolution, FourierLoop};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Rotation sense of the circle solution, detected from the polygon test.
pub fn circle_orientation(n: usize) -> i32 {
    polygon_residual(n, 1.0).sigma
}

/// `T_r = 4π²r²/(N-1)`.
pub fn orbit_period(n: usize, r: f64) -> f64 {
    4.0 * PI * PI * r * r / (n as f64 - 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectionMethod {
    /// Newton with the exact linearization at every iterate.
    Newton,
    /// Fixed-point iteration with the linearization frozen at `r = 0`.
    Contraction,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReducedGradientMethod {
    /// Central differences of `ψ_r` in `a`.
    CentralDifference,
    /// `∇ψ_r(a) = 2πN E_0`, the mean of the Euler–Lagrange expression.
    TangentProjection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitOptions {
    /// Truncation order `M`.
    pub modes: usize,
    /// Quadrature size, `4M + 1` when absent.
    pub quadrature: Option<usize>,
    pub correction_tol: f64,
    pub correction_max_iter: usize,
    pub correction_method: CorrectionMethod,
    /// Target for `|∇ψ_r|`; the full gradient is checked against ten times this.
    pub reduced_tol: f64,
    pub reduced_max_iter: usize,
    pub gradient_method: ReducedGradientMethod,
    pub r_max: f64,
    /// The ring of radius `r(1 + margin)` around `r·a` must stay inside the domain.
    pub margin: f64,
    /// Integration steps per period for the dynamical choreography check.
    pub check_steps: usize,
}

impl Default for OrbitOptions {
    fn default() -> Self {
        OrbitOptions {
            modes: 64,
            quadrature: None,
            correction_tol: 1e-11,
            correction_max_iter: 30,
            correction_method: CorrectionMethod::Newton,
            reduced_tol: 1e-10,
            reduced_max_iter: 40,
            gradient_method: ReducedGradientMethod::TangentProjection,
            r_max: 0.5,
            margin: 0.5,
            check_steps: 20_000,
        }
    }
}

impl OrbitOptions {
    pub fn with_modes(mut self, m: usize) -> Self {
        self.modes = m;
        self
    }

    fn q(&self) -> usize {
        self.quadrature.unwrap_or_else(|| default_quadrature(self.modes))
    }
}

/// `(r, a)`: scale and rescaled centre.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedPoint {
    pub r: f64,
    pub a: Complex64,
}

impl ReducedPoint {
    pub fn new(r: f64, a: Complex64) -> Self {
        ReducedPoint { r, a }
    }

    /// Physical centre `r·a`.
    pub fn centre(&self) -> ComplexPoint {
        self.a * self.r
    }

    pub fn check_admissible(&self, d: &Domain, opts: &OrbitOptions) -> Result<()> {
        if !(self.r >= 0.0 && self.r.is_finite()) {
            return Err(VortexError::Inadmissible(format!("scale r = {} must be non-negative", self.r)));
        }
        if self.r > opts.r_max {
            return Err(VortexError::Inadmissible(format!("scale r = {} exceeds r_max = {}", self.r, opts.r_max)));
        }
        if !(self.a.re.is_finite() && self.a.im.is_finite()) {
            return Err(VortexError::Inadmissible("centre is not finite".into()));
        }
        if self.r == 0.0 || !d.is_bounded() {
            return Ok(());
        }
        let z = self.centre();
        if !d.contains(z) {
            return Err(VortexError::Inadmissible(format!("centre ({}, {}) lies outside the domain", z.re, z.im)));
        }
        let clearance = d.boundary_distance(z);
        let needed = self.r * (1.0 + opts.margin);
        if clearance <= needed {
            return Err(VortexError::Inadmissible(format!(
                "boundary clearance {clearance:.3e} at centre ({}, {}) is below {needed:.3e}",
                z.re, z.im
            )));
        }
        Ok(())
    }
}

/// Orthonormal H¹ basis of the tangent space at `a + e^{i(σt + θ)}`.
pub fn tangent_basis(m: usize, theta: f64, sigma: i32) -> [FourierLoop; 3] {
    let c0 = 1.0 / (2.0 * PI).sqrt();
    let c1 = 1.0 / (4.0 * PI).sqrt();
    let mut phase = FourierLoop::zeros(m);
    phase.set(sigma.signum() as i64, I * Complex64::from_polar(c1, theta));
    [
        FourierLoop::constant(m, Complex64::new(c0, 0.0)),
        FourierLoop::constant(m, Complex64::new(0.0, c0)),
        phase,
    ]
}

/// Orthogonal projection onto the span of an orthonormal family.
pub fn project_tangent(x: &FourierLoop, basis: &[FourierLoop]) -> FourierLoop {
    let mut out = FourierLoop::zeros(x.order());
    for f in basis {
        out = &out + &(f * x.h1_inner(f));
    }
    out
}

pub fn project_normal(x: &FourierLoop, basis: &[FourierLoop]) -> FourierLoop {
    x - &project_tangent(x, basis)
}

/// Real coordinates of the normal space at a given phase.
#[derive(Clone, Copy, Debug)]
struct NormalFrame {
    m: usize,
    sigma: i64,
    rot: Complex64,
}

impl NormalFrame {
    fn new(m: usize, theta: f64, sigma: i32) -> Self {
        NormalFrame { m, sigma: sigma.signum() as i64, rot: Complex64::from_polar(1.0, theta) }
    }

    fn dim(&self) -> usize {
        2 * (2 * self.m + 1) - 3
    }

    fn coords_of(&self, x: &FourierLoop) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.dim());
        let mi = self.m as i64;
        for n in -mi..=mi {
            let a = x.get(n);
            if n == 0 {
                continue;
            }
            if n == self.sigma {
                out.push((a * self.rot.conj()).re);
            } else {
                out.push(a.re);
                out.push(a.im);
            }
        }
        DVector::from_vec(out)
    }

    fn loop_from(&self, c: &DVector<f64>) -> FourierLoop {
        let mut out = FourierLoop::zeros(self.m);
        let mi = self.m as i64;
        let mut idx = 0;
        for n in -mi..=mi {
            if n == 0 {
                continue;
            }
            if n == self.sigma {
                out.set(n, self.rot * c[idx]);
                idx += 1;
            } else {
                out.set(n, Complex64::new(c[idx], c[idx + 1]));
                idx += 2;
            }
        }
        out
    }

    fn project(&self, x: &FourierLoop) -> FourierLoop {
        self.loop_from(&self.coords_of(x))
    }
}

/// Pointwise coefficients of `δE = iφ̇ + Σ_k (P_k conj(φ_k) + Q_k φ_k)` with `φ_k = φ(· + 2πk/N)`.
struct Linearization {
    n: usize,
    m: usize,
    q: usize,
    p: Vec<Vec<Complex64>>,
    qq: Vec<Vec<Complex64>>,
}

impl Linearization {
    fn at(d: &Domain, r: f64, u: &FourierLoop, n: usize, q: usize) -> Result<Self> {
        let q = q.max(2 * u.order() + 1);
        let nm1 = n as f64 - 1.0;
        let shifted: Vec<Vec<Complex64>> = (0..n).map(|k| u.shift(2.0 * PI * k as f64 / n as f64).sample(q)).collect();
        let mut p = vec![vec![Complex64::new(0.0, 0.0); q]; n];
        let mut qq = vec![vec![Complex64::new(0.0, 0.0); q]; n];
        let coef = 4.0 * PI * r * r / nm1;
        let with_f = d.is_bounded() && r != 0.0;
        for j in 0..q {
            for k in 1..n {
                let w = shifted[0][j] - shifted[k][j];
                if w.norm_sqr() == 0.0 {
                    return Err(VortexError::SymmetryCollision(0.0));
                }
                let c = -(2.0 / nm1) / (w.conj() * w.conj());
                p[0][j] += c;
                p[k][j] -= c;
            }
            if with_f {
                let pre: Vec<Complex64> =
                    shifted.iter().map(|s| d.preimage(s[j] * r)).collect::<Result<_>>()?;
                for k in 0..n {
                    let lin = d.grad1_linearization_pre(pre[0], pre[k]);
                    p[0][j] += lin.dw.conj() * coef;
                    p[k][j] += lin.dz.conj() * coef;
                    qq[k][j] += lin.dz_bar.conj() * coef;
                }
            }
        }
        Ok(Linearization { n, m: u.order(), q, p, qq })
    }

    fn apply(&self, phi: &FourierLoop) -> FourierLoop {
        let mut e = phi.derivative().map_modes(|_, a| a * I).sample(self.q);
        for k in 0..self.n {
            let s = phi.shift(2.0 * PI * k as f64 / self.n as f64).sample(self.q);
            for j in 0..self.q {
                e[j] += self.p[k][j] * s[j].conj() + self.qq[k][j] * s[j];
            }
        }
        FourierLoop::from_samples(&e, self.m)
    }

    fn normal_matrix(&self, frame: &NormalFrame) -> DMatrix<f64> {
        let dim = frame.dim();
        let mut jac = DMatrix::zeros(dim, dim);
        for col in 0..dim {
            let mut unit = DVector::zeros(dim);
            unit[col] = 1.0;
            let image = frame.coords_of(&self.apply(&frame.loop_from(&unit)));
            jac.set_column(col, &image);
        }
        jac
    }
}

/// Jacobian of the real-coordinate Euler–Lagrange map at `u` (all modes).
pub fn euler_lagrange_jacobian(d: &Domain, r: f64, u: &FourierLoop, n: usize, q: usize) -> Result<DMatrix<f64>> {
    let lin = Linearization::at(d, r, u, n, q)?;
    let m = u.order();
    let dim = 2 * (2 * m + 1);
    let mut jac = DMatrix::zeros(dim, dim);
    for col in 0..dim {
        let mut x = vec![0.0; dim];
        x[col] = 1.0;
        let image = lin.apply(&FourierLoop::from_real(m, &x)?).to_real();
        jac.set_column(col, &DVector::from_vec(image));
    }
    Ok(jac)
}

/// Normal correction `W(r, v)` and its residuals.
#[derive(Clone, Debug)]
pub struct CorrectionResult {
    pub w: FourierLoop,
    /// `‖(Id - P_v) ∇Ψ_r(v + w)‖`.
    pub residual_normal: f64,
    /// `‖P_v ∇Ψ_r(v + w)‖`.
    pub residual_tangent: f64,
    pub iterations: usize,
    pub history: Vec<f64>,
    /// `E(v + w)` in Fourier modes; its mean gives the reduced gradient.
    euler: FourierLoop,
}

impl CorrectionResult {
    /// Mean `E_0` of the Euler–Lagrange expression at `v + w`.
    pub fn mean_euler_lagrange(&self) -> Complex64 {
        self.euler.get(0)
    }
}

fn h1_gradient(e: &FourierLoop, n: usize) -> FourierLoop {
    let nf = n as f64;
    e.map_modes(|m, a| a * (nf / (1.0 + (m * m) as f64)))
}

/// Solves `(Id - P_v) ∇Ψ_r(v + w) = 0` for `w ⊥ T_v` at `v = u_a`.
pub fn solve_correction(d: &Domain, p: &ReducedPoint, n: usize, opts: &OrbitOptions) -> Result<CorrectionResult> {
    solve_correction_from(d, p, 0.0, n, opts, None)
}

/// As [`solve_correction`] at the phase-shifted circle `θ * u_a`, optionally
/// warm-started from a previous correction.
pub fn solve_correction_from(
    d: &Domain,
    p: &ReducedPoint,
    theta: f64,
    n: usize,
    opts: &OrbitOptions,
    warm: Option<&FourierLoop>,
) -> Result<CorrectionResult> {
    if n < 2 {
        return Err(VortexError::Input("orbits need N >= 2".into()));
    }
    p.check_admissible(d, opts)?;
    let m = opts.modes;
    let q = opts.q();
    let sigma = circle_orientation(n);
    let v = CircleSolution::new(p.a, theta, sigma).to_loop(m);
    let frame = NormalFrame::new(m, theta, sigma);
    let basis = tangent_basis(m, theta, sigma);

    let evaluate = |w: &FourierLoop| -> Result<(FourierLoop, FourierLoop, f64)> {
        let e = euler_lagrange(d, p.r, &(&v + w), n, q)?;
        let g = h1_gradient(&e, n);
        let res = frame.project(&g).h1_norm();
        Ok((e, g, res))
    };

    let mut w = match warm {
        Some(w0) if p.r != 0.0 => frame.project(&w0.resized(m)),
        _ => FourierLoop::zeros(m),
    };
    let (mut e, mut g, mut res) = evaluate(&w)?;
    let mut history = vec![res];
    let finish = |w: FourierLoop, e: FourierLoop, g: &FourierLoop, res: f64, iterations: usize, history: Vec<f64>| {
        CorrectionResult {
            residual_tangent: project_tangent(g, &basis).h1_norm(),
            w,
            residual_normal: res,
            iterations,
            history,
            euler: e,
        }
    };
    if p.r == 0.0 {
        // the circle manifold is critical for the unperturbed functional
        return Ok(finish(w, e, &g, res, 0, history));
    }

    let frozen = match opts.correction_method {
        CorrectionMethod::Contraction => {
            let lin = Linearization::at(d, 0.0, &v, n, q)?;
            Some(lin.normal_matrix(&frame).lu())
        }
        CorrectionMethod::Newton => None,
    };

    for it in 0..opts.correction_max_iter {
        // one step is always taken: W can be far below the residual tolerance
        if res < opts.correction_tol && it > 0 {
            return Ok(finish(w, e, &g, res, it, history));
        }
        let rhs = -frame.coords_of(&e);
        let step = match &frozen {
            Some(lu) => lu.solve(&rhs),
            None => Linearization::at(d, p.r, &(&v + &w), n, q)?.normal_matrix(&frame).lu().solve(&rhs),
        }
        .ok_or_else(|| VortexError::CorrectionNonConvergence {
            residual: res,
            iterations: it,
            history: history.clone(),
        })?;
        let delta = frame.loop_from(&step);

        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..8 {
            let trial = &w + &(&delta * lambda);
            match evaluate(&trial) {
                Ok(state) if state.2 < res || frozen.is_some() => {
                    accepted = Some((trial, state));
                    break;
                }
                Ok(_) | Err(VortexError::SymmetryCollision(_)) | Err(VortexError::OutsideDomain(_)) => {
                    lambda *= 0.5;
                }
                Err(other) => return Err(other),
            }
        }
        match accepted {
            Some((trial, state)) => {
                w = trial;
                (e, g, res) = state;
            }
            None => {
                // accept the full step once the residual sits at roundoff level
                let trial = &w + &delta;
                let state = evaluate(&trial)?;
                if state.2 > 10.0 * res {
                    history.push(state.2);
                    return Err(VortexError::CorrectionNonConvergence { residual: res, iterations: it + 1, history });
                }
                w = trial;
                (e, g, res) = state;
            }
        }
        history.push(res);
        debug!("correction iteration {}: residual {res:.3e}", it + 1);
    }
    if res < opts.correction_tol {
        let iterations = opts.correction_max_iter;
        return Ok(finish(w, e, &g, res, iterations, history));
    }
    Err(VortexError::CorrectionNonConvergence { residual: res, iterations: opts.correction_max_iter, history })
}

/// `ψ_r(a) = Ψ_r(u_a + W(r, u_a))`.
pub fn reduced_psi(d: &Domain, p: &ReducedPoint, n: usize, opts: &OrbitOptions) -> Result<f64> {
    let corr = solve_correction(d, p, n, opts)?;
    reduced_value(d, p, n, opts, &corr)
}

fn reduced_value(d: &Domain, p: &ReducedPoint, n: usize, opts: &OrbitOptions, corr: &CorrectionResult) -> Result<f64> {
    let v = CircleSolution::new(p.a, 0.0, circle_orientation(n)).to_loop(opts.modes);
    action_psi_q(d, p.r, &(&v + &corr.w), n, opts.q())
}

/// Central-difference step in `a` used by [`reduced_grad_psi`].
pub fn reduced_step(r: f64) -> f64 {
    (1e-3 * r).max(1e-5)
}

/// `∇_a ψ_r` by central differences, reusing warm-started corrections.
pub fn reduced_grad_psi(d: &Domain, p: &ReducedPoint, n: usize, opts: &OrbitOptions) -> Result<Complex64> {
    let centre = solve_correction(d, p, n, opts)?;
    reduced_grad_fd(d, p, n, opts, &centre)
}

fn reduced_grad_fd(d: &Domain, p: &ReducedPoint, n: usize, opts: &OrbitOptions, centre: &CorrectionResult) -> Result<Complex64> {
    let h = reduced_step(p.r);
    let value = |shift: Complex64| -> Result<f64> {
        let q = ReducedPoint::new(p.r, p.a + shift);
        let corr = solve_correction_from(d, &q, 0.0, n, opts, Some(&centre.w))?;
        reduced_value(d, &q, n, opts, &corr)
    };
    let gx = (value(Complex64::new(h, 0.0))? - value(Complex64::new(-h, 0.0))?) / (2.0 * h);
    let gy = (value(Complex64::new(0.0, h))? - value(Complex64::new(0.0, -h))?) / (2.0 * h);
    Ok(Complex64::new(gx, gy))
}

/// `∇_a ψ_r = 2πN E_0(u_a + W)`, exact once the normal equation holds.
pub fn reduced_grad_psi_projected(
    d: &Domain,
    p: &ReducedPoint,
    n: usize,
    opts: &OrbitOptions,
    warm: Option<&FourierLoop>,
) -> Result<(Complex64, CorrectionResult)> {
    let corr = solve_correction_from(d, p, 0.0, n, opts, warm)?;
    let grad = corr.mean_euler_lagrange() * (2.0 * PI * n as f64);
    Ok((grad, corr))
}

fn reduced_grad_with(
    d: &Domain,
    p: &ReducedPoint,
    n: usize,
    opts: &OrbitOptions,
    warm: Option<&FourierLoop>,
) -> Result<(Complex64, CorrectionResult)> {
    match opts.gradient_method {
        ReducedGradientMethod::TangentProjection => reduced_grad_psi_projected(d, p, n, opts, warm),
        ReducedGradientMethod::CentralDifference => {
            let corr = solve_correction_from(d, p, 0.0, n, opts, warm)?;
            let grad = reduced_grad_fd(d, p, n, opts, &corr)?;
            Ok((grad, corr))
        }
    }
}

/// Estimate of `‖P_v D_v W(r, v)‖` on the tangent space at `u_a`, by
/// differencing corrections along the orthonormal tangent directions.
pub fn tangent_derivative_norm(d: &Domain, p: &ReducedPoint, n: usize, opts: &OrbitOptions) -> Result<f64> {
    let sigma = circle_orientation(n);
    let centre = solve_correction(d, p, n, opts)?;
    let basis = tangent_basis(opts.modes, 0.0, sigma);
    let h = 1e-4;
    let step_a = h / (2.0 * PI).sqrt();
    let step_theta = h / (4.0 * PI).sqrt();
    let solve = |a: Complex64, theta: f64| -> Result<FourierLoop> {
        Ok(solve_correction_from(d, &ReducedPoint::new(p.r, a), theta, n, opts, Some(&centre.w))?.w)
    };
    let columns = [
        (&solve(p.a + step_a, 0.0)? - &solve(p.a - step_a, 0.0)?) * (0.5 / h),
        (&solve(p.a + I * step_a, 0.0)? - &solve(p.a - I * step_a, 0.0)?) * (0.5 / h),
        (&solve(p.a, step_theta)? - &solve(p.a, -step_theta)?) * (0.5 / h),
    ];
    let mut mat = Matrix3::zeros();
    for (j, col) in columns.iter().enumerate() {
        for (i, f) in basis.iter().enumerate() {
            mat[(i, j)] = col.h1_inner(f);
        }
    }
    Ok(mat.singular_values().max())
}

/// A small-period choreography.
#[derive(Clone, Debug, PartialEq)]
pub struct OrbitRecord {
    pub n: usize,
    pub r: f64,
    pub t_r: f64,
    /// Physical centre.
    pub a_r: Complex64,
    pub sigma: i32,
    /// `u_1` in rescaled coordinates, `z_1(t) = r u_1(2πt/T_r)`.
    pub loop_u1: FourierLoop,
    pub h1_error: f64,
    pub choreography_residual: f64,
    pub full_grad_norm: f64,
    pub m: usize,
    pub domain: DomainSpec,
}

impl OrbitRecord {
    /// Physical positions `z_k(t) = r u_1(2πt/T_r + 2π(k-1)/N)`.
    pub fn positions_at(&self, t: f64) -> Vec<ComplexPoint> {
        let s = 2.0 * PI * t / self.t_r;
        (0..self.n)
            .map(|k| self.loop_u1.eval(s + 2.0 * PI * k as f64 / self.n as f64) * self.r)
            .collect()
    }

    pub fn initial_configuration(&self) -> Result<VortexConfiguration> {
        VortexConfiguration::unit(self.positions_at(0.0))
    }

    /// Same record with a different loop (diagnostics and negative controls).
    pub fn with_loop(&self, loop_u1: FourierLoop) -> Self {
        OrbitRecord { loop_u1, ..self.clone() }
    }

    /// Rescaled centre `a_r / r`.
    pub fn rescaled_centre(&self) -> Complex64 {
        if self.r == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            self.a_r / self.r
        }
    }
}

/// Diagnostics of a converged reduced Newton run.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct OrbitDiagnostics {
    pub reduced_history: Vec<f64>,
    pub correction_iterations: usize,
    pub correction_residual: f64,
    pub w_norm: f64,
}

/// Locates a critical point of `ψ_r` from a physical seed centre and
/// assembles the corresponding orbit.
pub fn find_orbit(d: &Domain, n: usize, r: f64, seed_centre: ComplexPoint, opts: &OrbitOptions) -> Result<OrbitRecord> {
    find_orbit_with_diagnostics(d, n, r, seed_centre, opts).map(|(rec, _)| rec)
}

pub fn find_orbit_with_diagnostics(
    d: &Domain,
    n: usize,
    r: f64,
    seed_centre: ComplexPoint,
    opts: &OrbitOptions,
) -> Result<(OrbitRecord, OrbitDiagnostics)> {
    if n < 2 {
        return Err(VortexError::Input("orbits need N >= 2".into()));
    }
    if !(r > 0.0) {
        return Err(VortexError::Inadmissible(format!("scale r = {r} must be positive")));
    }
    let mut p = ReducedPoint::new(r, seed_centre / r);
    p.check_admissible(d, opts)?;

    let (mut grad, mut corr) = reduced_grad_with(d, &p, n, opts, None)?;
    let mut history = vec![grad.norm()];
    let h = 1e-4 / r;
    let mut converged = grad.norm() < opts.reduced_tol;
    let mut iterations = 0;
    while !converged && iterations < opts.reduced_max_iter {
        iterations += 1;
        let probe = |shift: Complex64| -> Result<Complex64> {
            let q = ReducedPoint::new(r, p.a + shift);
            Ok(reduced_grad_with(d, &q, n, opts, Some(&corr.w))?.0)
        };
        let (gxp, gxm) = (probe(Complex64::new(h, 0.0))?, probe(Complex64::new(-h, 0.0))?);
        let (gyp, gym) = (probe(Complex64::new(0.0, h))?, probe(Complex64::new(0.0, -h))?);
        let cx = (gxp - gxm) / (2.0 * h);
        let cy = (gyp - gym) / (2.0 * h);
        let off = 0.5 * (cx.im + cy.re);
        let hess = Matrix2::new(cx.re, off, off, cy.im);
        let step = hess
            .lu()
            .solve(&Vector2::new(-grad.re, -grad.im))
            .ok_or_else(|| VortexError::ReducedNonConvergence {
                gradient: grad.norm(),
                iterations,
                history: history.clone(),
            })?;
        let delta = Complex64::new(step[0], step[1]);

        let mut lambda = 1.0;
        let mut next = None;
        for _ in 0..10 {
            let trial = ReducedPoint::new(r, p.a + delta * lambda);
            if trial.check_admissible(d, opts).is_ok() {
                match reduced_grad_with(d, &trial, n, opts, Some(&corr.w)) {
                    Ok((g, c)) if g.norm() < grad.norm() => {
                        next = Some((trial, g, c));
                        break;
                    }
                    Ok(_) | Err(VortexError::CorrectionNonConvergence { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
            lambda *= 0.5;
        }
        let Some((trial, g, c)) = next else {
            return Err(VortexError::ReducedNonConvergence { gradient: grad.norm(), iterations, history });
        };
        p = trial;
        grad = g;
        corr = c;
        history.push(grad.norm());
        debug!("reduced iteration {iterations}: |grad| {:.3e} at a = {}", grad.norm(), p.centre());
        converged = grad.norm() < opts.reduced_tol;
    }
    if !converged {
        return Err(VortexError::ReducedNonConvergence { gradient: grad.norm(), iterations, history });
    }

    let sigma = circle_orientation(n);
    let circle = CircleSolution::new(p.a, 0.0, sigma).to_loop(opts.modes);
    let loop_u1 = &circle + &corr.w;
    let full = h1_gradient(&euler_lagrange(d, r, &loop_u1, n, opts.q())?, n).h1_norm();
    if full >= 10.0 * opts.reduced_tol {
        return Err(VortexError::FullGradientCheck { norm: full, limit: 10.0 * opts.reduced_tol });
    }
    let h1_error = (&loop_u1 - &circle).h1_norm();

    let mut record = OrbitRecord {
        n,
        r,
        t_r: orbit_period(n, r),
        a_r: p.centre(),
        sigma,
        loop_u1,
        h1_error,
        choreography_residual: f64::NAN,
        full_grad_norm: full,
        m: opts.modes,
        domain: DomainSpec::from(d),
    };
    record.choreography_residual = choreography_residual(d, &record, opts.check_steps)?;
    let diagnostics = OrbitDiagnostics {
        reduced_history: history,
        correction_iterations: corr.iterations,
        correction_residual: corr.residual_normal,
        w_norm: corr.w.h1_norm(),
    };
    Ok((record, diagnostics))
}

/// Recomputes `(h1_error, full_grad_norm)` of a stored orbit.
pub fn reassess_orbit(d: &Domain, orbit: &OrbitRecord, quadrature: Option<usize>) -> Result<(f64, f64)> {
    let m = orbit.loop_u1.order();
    let q = quadrature.unwrap_or_else(|| default_quadrature(m));
    let a = orbit.rescaled_centre();
    let circle = CircleSolution::new(a, 0.0, orbit.sigma).to_loop(m);
    let h1_error = (&orbit.loop_u1 - &circle).h1_norm();
    let full = h1_gradient(&euler_lagrange(d, orbit.r, &orbit.loop_u1, orbit.n, q)?, orbit.n).h1_norm();
    Ok((h1_error, full))
}

/// Integrates one period and returns `max_{t,k} |z_k(t) - z_1(t + (k-1)T/N)|`.
pub fn choreography_residual(d: &Domain, orbit: &OrbitRecord, steps: usize) -> Result<f64> {
    let n = orbit.n;
    let slices = 50;
    let per_slice = steps.div_ceil(n * slices).max(1);
    let total = n * slices * per_slice;
    let spec = IntegratorSpec::rk4(orbit.t_r / total as f64);
    let traj = integrate(d, &orbit.initial_configuration()?, &spec, orbit.t_r, per_slice)?;
    let samples = traj.states.len();
    let mut worst = 0.0f64;
    for k in 1..n {
        let offset = k * slices;
        for j in 0..samples.saturating_sub(offset) {
            let zk = traj.states[j].positions()[k];
            let z1 = traj.states[j + offset].positions()[0];
            worst = worst.max((zk - z1).norm());
        }
    }
    Ok(worst)
}

/// Independent dynamical check of an orbit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerificationReport {
    /// `max_k |z_k(T_r) - z_k(0)|`.
    pub return_distance: f64,
    /// Largest deviation between the integrated and the spectral orbit.
    pub max_deviation: f64,
    /// Smallest return distance over the interior sub-period grid.
    pub min_subperiod_return: f64,
    /// Number of interior sub-period samples scanned.
    pub subperiods: usize,
    pub minimal_period_confirmed: bool,
}

/// Number of subdivisions used for the minimal-period scan.
pub const PERIOD_SCAN: usize = 200;

pub fn verify_orbit_by_integration(d: &Domain, orbit: &OrbitRecord, spec: &IntegratorSpec) -> Result<VerificationReport> {
    let steps = ((orbit.t_r / spec.dt).ceil() as usize).max(PERIOD_SCAN);
    let steps = steps.div_ceil(PERIOD_SCAN) * PERIOD_SCAN;
    let fitted = IntegratorSpec { dt: orbit.t_r / steps as f64, ..*spec };
    let z0 = orbit.initial_configuration()?;
    let traj = integrate(d, &z0, &fitted, orbit.t_r, steps / PERIOD_SCAN)?;
    let dist = |a: &[ComplexPoint], b: &[ComplexPoint]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    };
    let start = z0.positions();
    let return_distance = dist(traj.last().positions(), start);
    let mut max_deviation = 0.0f64;
    let mut min_sub = f64::INFINITY;
    for (t, state) in traj.times.iter().zip(&traj.states) {
        max_deviation = max_deviation.max(dist(state.positions(), &orbit.positions_at(*t)));
    }
    for state in &traj.states[1..traj.states.len() - 1] {
        min_sub = min_sub.min(dist(state.positions(), start));
    }
    let scale = orbit.r.max(f64::MIN_POSITIVE);
    Ok(VerificationReport {
        return_distance,
        max_deviation,
        min_subperiod_return: min_sub,
        subperiods: PERIOD_SCAN - 1,
        minimal_period_confirmed: min_sub > 1e-3 * scale && min_sub > 1e3 * return_distance,
    })
}
