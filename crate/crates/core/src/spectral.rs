//! Symmetric loops in a truncated Fourier basis, the reduced action `Ψ_r`
//! on `τ`-symmetric loops, and the linearization at the circle solution.
//!
//! A loop `u(t) = Σ_{|n|≤M} α_n e^{int}` is stored by its modes. Integrals are
//! taken over `[0, 2π]`; the H¹ inner product is
//! `⟨x, y⟩ = 2π Σ (1 + n²) Re(x_n conj(y_n))`.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Result, VortexError};
use crate::geometry::{ComplexPoint, Domain};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// Default quadrature size for truncation order `m`.
pub fn default_quadrature(m: usize) -> usize {
    4 * m + 1
}

/// A `2π`-periodic complex loop truncated at order `M`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierLoop {
    m: usize,
    /// Mode `n` lives at index `n + M`.
    coeffs: Vec<Complex64>,
}

impl FourierLoop {
    pub fn zeros(m: usize) -> Self {
        FourierLoop { m, coeffs: vec![ZERO; 2 * m + 1] }
    }

    pub fn from_coeffs(m: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != 2 * m + 1 {
            return Err(VortexError::Input(format!(
                "expected {} Fourier modes for order {m}, got {}",
                2 * m + 1,
                coeffs.len()
            )));
        }
        Ok(FourierLoop { m, coeffs })
    }

    /// Builds a loop from `(n, α_n)` pairs; modes beyond `m` are rejected.
    pub fn from_modes(m: usize, modes: impl IntoIterator<Item = (i64, Complex64)>) -> Result<Self> {
        let mut out = Self::zeros(m);
        for (n, a) in modes {
            if n.unsigned_abs() as usize > m {
                return Err(VortexError::Input(format!("mode {n} exceeds truncation order {m}")));
            }
            out.set(n, a);
        }
        Ok(out)
    }

    pub fn constant(m: usize, a: Complex64) -> Self {
        let mut out = Self::zeros(m);
        out.set(0, a);
        out
    }

    /// `a + e^{iθ} e^{iσt}` for `σ = ±1`.
    pub fn circle(m: usize, a: Complex64, theta: f64, sigma: i32) -> Self {
        assert!(m >= 1, "a circle needs modes |n| <= 1");
        let mut out = Self::constant(m, a);
        out.set(sigma.signum() as i64, Complex64::from_polar(1.0, theta));
        out
    }

    pub fn order(&self) -> usize {
        self.m
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// `α_n`, zero outside the stored range.
    pub fn get(&self, n: i64) -> Complex64 {
        if n.unsigned_abs() as usize > self.m {
            ZERO
        } else {
            self.coeffs[(n + self.m as i64) as usize]
        }
    }

    pub fn set(&mut self, n: i64, value: Complex64) {
        let idx = (n + self.m as i64) as usize;
        self.coeffs[idx] = value;
    }

    pub fn modes(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        let m = self.m as i64;
        self.coeffs.iter().enumerate().map(move |(i, a)| (i as i64 - m, *a))
    }

    /// Same loop truncated or zero-padded to order `m`.
    pub fn resized(&self, m: usize) -> Self {
        let mut out = Self::zeros(m);
        for (n, a) in self.modes() {
            if n.unsigned_abs() as usize <= m {
                out.set(n, a);
            }
        }
        out
    }

    /// Time shift `t ↦ u(t + θ)`.
    pub fn shift(&self, theta: f64) -> Self {
        let coeffs = self
            .modes()
            .map(|(n, a)| a * Complex64::from_polar(1.0, n as f64 * theta))
            .collect();
        FourierLoop { m: self.m, coeffs }
    }

    pub fn derivative(&self) -> Self {
        let coeffs = self.modes().map(|(n, a)| a * Complex64::new(0.0, n as f64)).collect();
        FourierLoop { m: self.m, coeffs }
    }

    pub fn map_modes(&self, f: impl Fn(i64, Complex64) -> Complex64) -> Self {
        FourierLoop { m: self.m, coeffs: self.modes().map(|(n, a)| f(n, a)).collect() }
    }

    pub fn h1_inner(&self, other: &Self) -> f64 {
        2.0 * PI
            * self
                .modes()
                .map(|(n, a)| (1.0 + (n * n) as f64) * (a * other.get(n).conj()).re)
                .sum::<f64>()
    }

    pub fn h1_norm(&self) -> f64 {
        self.h1_inner(self).sqrt()
    }

    pub fn l2_norm(&self) -> f64 {
        (2.0 * PI * self.coeffs.iter().map(|a| a.norm_sqr()).sum::<f64>()).sqrt()
    }

    pub fn eval(&self, t: f64) -> ComplexPoint {
        self.modes().map(|(n, a)| a * Complex64::from_polar(1.0, n as f64 * t)).sum()
    }

    /// Values at `t_j = 2πj/q`, `j = 0..q`, with `q ≥ 2M + 1`.
    pub fn sample(&self, q: usize) -> Vec<ComplexPoint> {
        assert!(q > 2 * self.m, "grid of {q} points cannot resolve order {}", self.m);
        let mut buf = vec![ZERO; q];
        for (n, a) in self.modes() {
            buf[n.rem_euclid(q as i64) as usize] += a;
        }
        plan(q, true).process(&mut buf);
        buf
    }

    /// Interpolating loop of order `m` for samples on a uniform grid.
    pub fn from_samples(values: &[ComplexPoint], m: usize) -> Self {
        let q = values.len();
        assert!(q > 2 * m, "grid of {q} points cannot resolve order {m}");
        let mut buf = values.to_vec();
        plan(q, false).process(&mut buf);
        let scale = 1.0 / q as f64;
        let mut out = Self::zeros(m);
        for n in -(m as i64)..=(m as i64) {
            out.set(n, buf[n.rem_euclid(q as i64) as usize] * scale);
        }
        out
    }

    /// Real coordinates `(Re α_{-M}, Im α_{-M}, ..., Re α_M, Im α_M)`.
    pub fn to_real(&self) -> Vec<f64> {
        self.coeffs.iter().flat_map(|a| [a.re, a.im]).collect()
    }

    pub fn from_real(m: usize, x: &[f64]) -> Result<Self> {
        if x.len() != 2 * (2 * m + 1) {
            return Err(VortexError::Input(format!("expected {} real coordinates", 2 * (2 * m + 1))));
        }
        Ok(FourierLoop { m, coeffs: x.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect() })
    }

    /// Real-coordinate index of `Re α_n` (`Im α_n` is the next one).
    pub fn real_index(m: usize, n: i64) -> usize {
        2 * (n + m as i64) as usize
    }

    fn zip_with(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        let m = self.m.max(other.m);
        let mut out = Self::zeros(m);
        for n in -(m as i64)..=(m as i64) {
            out.set(n, f(self.get(n), other.get(n)));
        }
        out
    }
}

impl Add for &FourierLoop {
    type Output = FourierLoop;
    fn add(self, rhs: &FourierLoop) -> FourierLoop {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &FourierLoop {
    type Output = FourierLoop;
    fn sub(self, rhs: &FourierLoop) -> FourierLoop {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Neg for &FourierLoop {
    type Output = FourierLoop;
    fn neg(self) -> FourierLoop {
        self.map_modes(|_, a| -a)
    }
}

impl Mul<f64> for &FourierLoop {
    type Output = FourierLoop;
    fn mul(self, s: f64) -> FourierLoop {
        self.map_modes(|_, a| a * s)
    }
}

impl Mul<f64> for FourierLoop {
    type Output = FourierLoop;
    fn mul(self, s: f64) -> FourierLoop {
        &self * s
    }
}

impl Mul<Complex64> for &FourierLoop {
    type Output = FourierLoop;
    fn mul(self, s: Complex64) -> FourierLoop {
        self.map_modes(|_, a| a * s)
    }
}

/// Element `(θ, σ)` of `S¹ × Σ_N`; `sigma[k]` is the image of `k` (0-based).
#[derive(Clone, Debug, PartialEq)]
pub struct GroupElement {
    pub theta: f64,
    sigma: Vec<usize>,
}

impl GroupElement {
    pub fn new(theta: f64, sigma: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; sigma.len()];
        for &s in &sigma {
            if s >= sigma.len() || seen[s] {
                return Err(VortexError::Input(format!("{sigma:?} is not a permutation")));
            }
            seen[s] = true;
        }
        Ok(GroupElement { theta, sigma })
    }

    pub fn identity(n: usize) -> Self {
        GroupElement { theta: 0.0, sigma: (0..n).collect() }
    }

    pub fn time_shift(n: usize, theta: f64) -> Self {
        GroupElement { theta, sigma: (0..n).collect() }
    }

    /// The generator `τ` whose fixed loops are choreographies.
    pub fn tau(n: usize) -> Self {
        GroupElement { theta: 2.0 * PI / n as f64, sigma: (0..n).map(|k| (k + 1) % n).collect() }
    }

    pub fn sigma(&self) -> &[usize] {
        &self.sigma
    }

    fn inverse_perm(&self) -> Vec<usize> {
        let mut inv = vec![0; self.sigma.len()];
        for (k, &s) in self.sigma.iter().enumerate() {
            inv[s] = k;
        }
        inv
    }
}

/// Time shift of a single component.
pub fn act(g: &GroupElement, v: &FourierLoop) -> FourierLoop {
    v.shift(g.theta)
}

/// `((θ, σ) * u)_k = u_{σ⁻¹(k)}(t + θ)`.
pub fn act_full(g: &GroupElement, u: &[FourierLoop]) -> Result<Vec<FourierLoop>> {
    if u.len() != g.sigma.len() {
        return Err(VortexError::Input(format!(
            "group element acts on {} components, loop has {}",
            g.sigma.len(),
            u.len()
        )));
    }
    let inv = g.inverse_perm();
    Ok((0..u.len()).map(|k| u[inv[k]].shift(g.theta)).collect())
}

/// `v ↦ (v, (2π/N) * v, ..., (2π(N-1)/N) * v)`.
pub fn hat_lift(v: &FourierLoop, n: usize) -> Vec<FourierLoop> {
    (0..n).map(|k| v.shift(2.0 * PI * k as f64 / n as f64)).collect()
}

/// `max_k ‖(τ * u)_k - u_k‖_{H¹}`.
pub fn tau_residual(u: &[FourierLoop]) -> f64 {
    let moved = act_full(&GroupElement::tau(u.len()), u).expect("sizes match by construction");
    moved.iter().zip(u).map(|(a, b)| (a - b).h1_norm()).fold(0.0, f64::max)
}

/// Circle solution `a + e^{i(σt + θ)}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircleSolution {
    pub a: Complex64,
    pub theta: f64,
    pub sigma: i32,
}

impl CircleSolution {
    pub fn new(a: Complex64, theta: f64, sigma: i32) -> Self {
        CircleSolution { a, theta, sigma: if sigma < 0 { -1 } else { 1 } }
    }

    pub fn to_loop(&self, m: usize) -> FourierLoop {
        FourierLoop::circle(m, self.a, self.theta, self.sigma)
    }
}

/// Grid data shared by the action and its gradient.
struct GridData {
    q: usize,
    /// `u(t_j + 2πk/N)` for each shift `k`.
    shifted: Vec<Vec<ComplexPoint>>,
}

fn grid_data(v: &FourierLoop, n: usize, q: usize) -> Result<GridData> {
    if n < 2 {
        return Err(VortexError::Input("symmetric loops need N >= 2".into()));
    }
    let q = q.max(2 * v.order() + 1);
    let shifted: Vec<Vec<ComplexPoint>> = (0..n)
        .map(|k| v.shift(2.0 * PI * k as f64 / n as f64).sample(q))
        .collect();
    let scale = shifted[0].iter().map(|z| z.norm()).fold(1.0, f64::max);
    let mut sep = f64::INFINITY;
    for k in 1..n {
        for j in 0..q {
            sep = sep.min((shifted[0][j] - shifted[k][j]).norm());
        }
    }
    if !(sep > 1e-12 * scale) {
        return Err(VortexError::SymmetryCollision(sep));
    }
    Ok(GridData { q, shifted })
}

/// Minimal separation `min_{k,t} |u(t) - u(t + 2πk/N)|` on the grid.
pub fn symmetric_separation(v: &FourierLoop, n: usize, q: usize) -> f64 {
    let q = q.max(2 * v.order() + 1);
    let base = v.sample(q);
    (1..n)
        .flat_map(|k| {
            let s = v.shift(2.0 * PI * k as f64 / n as f64).sample(q);
            base.iter().zip(s).map(|(a, b)| (a - b).norm()).collect::<Vec<_>>()
        })
        .fold(f64::INFINITY, f64::min)
}

fn scaled_preimages(d: &Domain, r: f64, g: &GridData, j: usize) -> Result<Vec<Complex64>> {
    g.shifted.iter().map(|s| d.preimage(s[j] * r)).collect()
}

/// `Ψ_r(v)` with the default quadrature.
pub fn action_psi(d: &Domain, r: f64, v: &FourierLoop, n: usize) -> Result<f64> {
    action_psi_q(d, r, v, n, default_quadrature(v.order()))
}

/// `Ψ_r(v)` on a grid of `q` points.
pub fn action_psi_q(d: &Domain, r: f64, v: &FourierLoop, n: usize, q: usize) -> Result<f64> {
    let g = grid_data(v, n, q)?;
    let nf = n as f64;
    let nm1 = nf - 1.0;
    let w = 2.0 * PI / g.q as f64;

    // (N/2)∫⟨i u̇, u⟩ = -πN Σ n|α_n|², exact on the stored modes
    let kinetic = -PI * nf * v.modes().map(|(m, a)| m as f64 * a.norm_sqr()).sum::<f64>();

    let mut logs = 0.0;
    for k in 1..n {
        logs += g.shifted[0].iter().zip(&g.shifted[k]).map(|(a, b)| (a - b).norm().ln()).sum::<f64>();
    }
    logs *= w * nf / nm1;

    let mut interaction = 0.0;
    if d.is_bounded() {
        for j in 0..g.q {
            let pre = scaled_preimages(d, r, &g, j)?;
            for a in &pre {
                for b in &pre {
                    interaction += d.regular_part_pre(*a, *b);
                }
            }
        }
        interaction *= w * 2.0 * PI / nm1;
    }
    Ok(kinetic + logs + interaction)
}

/// L² Euler–Lagrange expression `E(v)` on the grid, returned as modes.
///
/// `DΨ_r(v)[φ] = N ∫⟨E, φ⟩`.
pub fn euler_lagrange(d: &Domain, r: f64, v: &FourierLoop, n: usize, q: usize) -> Result<FourierLoop> {
    let g = grid_data(v, n, q)?;
    let nm1 = n as f64 - 1.0;
    let iu_dot = v.derivative().map_modes(|_, a| a * Complex64::new(0.0, 1.0)).sample(g.q);
    let mut e = iu_dot;
    for (j, ej) in e.iter_mut().enumerate() {
        let mut pair = ZERO;
        for k in 1..n {
            let diff = g.shifted[0][j] - g.shifted[k][j];
            pair += diff / diff.norm_sqr();
        }
        *ej += pair * (2.0 / nm1);
    }
    if d.is_bounded() && r != 0.0 {
        for (j, ej) in e.iter_mut().enumerate() {
            let pre = scaled_preimages(d, r, &g, j)?;
            let grad1: Complex64 = pre.iter().map(|b| d.grad1_pre(pre[0], *b)).sum::<Complex64>() * 2.0;
            *ej += grad1 * (2.0 * PI * r / nm1);
        }
    }
    Ok(FourierLoop::from_samples(&e, v.order()))
}

/// H¹ gradient of `Ψ_r` with the default quadrature.
pub fn grad_psi(d: &Domain, r: f64, v: &FourierLoop, n: usize) -> Result<FourierLoop> {
    grad_psi_q(d, r, v, n, default_quadrature(v.order()))
}

pub fn grad_psi_q(d: &Domain, r: f64, v: &FourierLoop, n: usize, q: usize) -> Result<FourierLoop> {
    let e = euler_lagrange(d, r, v, n, q)?;
    let nf = n as f64;
    Ok(e.map_modes(|m, a| a * (nf / (1.0 + (m * m) as f64))))
}

/// `ξ_n = Σ_{k=1}^{N-1} (1 - e^{2πik(n-2)/N}) / (1 - e^{-2πik/N})²`.
pub fn xi_coefficient(n_vortices: usize, n: i64) -> f64 {
    assert!(n_vortices >= 2, "xi needs N >= 2");
    let nf = n_vortices as f64;
    let one = Complex64::new(1.0, 0.0);
    let s: Complex64 = (1..n_vortices)
        .map(|k| {
            let theta = 2.0 * PI * k as f64 / nf;
            let num = one - Complex64::from_polar(1.0, theta * (n - 2) as f64);
            let den = one - Complex64::from_polar(1.0, -theta);
            num / (den * den)
        })
        .sum();
    debug_assert!(s.im.abs() < 1e-9 * (1.0 + s.re.abs()), "xi_{n} has imaginary part {}", s.im);
    s.re
}

/// Imaginary part of the raw `ξ_n` sum (should vanish).
pub fn xi_imaginary_part(n_vortices: usize, n: i64) -> f64 {
    let nf = n_vortices as f64;
    let one = Complex64::new(1.0, 0.0);
    (1..n_vortices)
        .map(|k| {
            let theta = 2.0 * PI * k as f64 / nf;
            let num = one - Complex64::from_polar(1.0, theta * (n - 2) as f64);
            let den = one - Complex64::from_polar(1.0, -theta);
            num / (den * den)
        })
        .sum::<Complex64>()
        .im
}

/// Linearization `A` of `-E` at `u_0(t) = e^{it}`, `r = 0`, in the real
/// coordinates of [`FourierLoop::to_real`]: `(Aα)_n = nα_n + (2/(N-1)) ξ_n conj(α_{2-n})`.
///
/// `D²Ψ_0(u_0)[φ, φ] = -2πN φᵀAφ`.
pub fn hessian_psi0_matrix(n_vortices: usize, m: usize) -> DMatrix<f64> {
    let dim = 2 * (2 * m + 1);
    let mut a = DMatrix::zeros(dim, dim);
    let c = 2.0 / (n_vortices as f64 - 1.0);
    let mi = m as i64;
    for n in -mi..=mi {
        let row = FourierLoop::real_index(m, n);
        a[(row, row)] += n as f64;
        a[(row + 1, row + 1)] += n as f64;
        let partner = 2 - n;
        if partner.abs() <= mi {
            let coupling = c * xi_coefficient(n_vortices, n);
            let col = FourierLoop::real_index(m, partner);
            // conj reflects the imaginary part
            a[(row, col)] += coupling;
            a[(row + 1, col + 1)] -= coupling;
        }
    }
    a
}

/// Singular-value summary of the linearization.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumReport {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    /// Ascending.
    pub singular_values: Vec<f64>,
    pub kernel_dimension: usize,
    /// Ratio of the first non-kernel singular value to the largest kernel one.
    pub spectral_gap: f64,
    /// Distance between the numerical kernel projector and the projector on span{Re α_0, Im α_0, Im α_1}.
    pub kernel_basis_error: f64,
    pub xi: Vec<(i64, f64)>,
}

/// Relative threshold below which singular values count as zero.
pub const KERNEL_THRESHOLD: f64 = 1e-8;

pub fn spectrum_report(n_vortices: usize, m: usize) -> Result<SpectrumReport> {
    if n_vortices < 2 {
        return Err(VortexError::Input(format!("N must be at least 2, got {n_vortices}")));
    }
    if m < 4 {
        return Err(VortexError::Input(format!("truncation order must be at least 4, got {m}")));
    }
    let a = hessian_psi0_matrix(n_vortices, m);
    let dim = a.nrows();
    let svd = a.svd(false, true);
    let vt = svd.v_t.as_ref().expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let largest = *sv.last().unwrap_or(&0.0);
    let kernel_dimension = sv.iter().filter(|s| **s < KERNEL_THRESHOLD * largest).count();
    let spectral_gap = if kernel_dimension == 0 || kernel_dimension == sv.len() {
        f64::NAN
    } else {
        sv[kernel_dimension] / sv[kernel_dimension - 1].max(f64::MIN_POSITIVE)
    };

    let mut p_num = DMatrix::<f64>::zeros(dim, dim);
    for &i in order.iter().take(kernel_dimension) {
        let row = vt.row(i).transpose();
        p_num += &row * row.transpose();
    }
    let mut p_exp = DMatrix::<f64>::zeros(dim, dim);
    for idx in [FourierLoop::real_index(m, 0), FourierLoop::real_index(m, 0) + 1, FourierLoop::real_index(m, 1) + 1] {
        p_exp[(idx, idx)] = 1.0;
    }
    let kernel_basis_error = (p_num - p_exp).amax();

    let mi = m as i64;
    let xi = (-mi..=mi).map(|k| (k, xi_coefficient(n_vortices, k))).collect();
    Ok(SpectrumReport { n: n_vortices, m, singular_values: sv, kernel_dimension, spectral_gap, kernel_basis_error, xi })
}
