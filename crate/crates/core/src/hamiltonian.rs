//! The N-vortex Hamiltonian of a planar domain and its rescaled form.
//!
//! ```text
//! H_Ω(z) = (1/2π) Σ_{j≠k} Γ_j Γ_k log(1/|z_j - z_k|) - F(z)
//! F(z)   = Σ_{j≠k} Γ_j Γ_k g(z_j, z_k) + Σ_k Γ_k² h(z_k)
//! ```
//!
//! All pair sums run over ordered pairs. The rescaled Hamiltonian for unit
//! strengths and `T_r = 4π² r² / (N-1)` is
//!
//! ```text
//! H_r(u) = (T_r / 2π r²) (H_Ω(r u) + (1/2π) Σ_{j≠k} log|r|)
//!        = (1/(N-1)) Σ_{j≠k} log(1/|u_j - u_k|) - (2π/(N-1)) F(r u),
//! ```
//!
//! which extends continuously to `r = 0`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VortexError};
use crate::geometry::{ComplexPoint, Domain};

/// Positions and strengths of N point vortices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VortexConfiguration {
    positions: Vec<ComplexPoint>,
    strengths: Vec<f64>,
}

impl VortexConfiguration {
    pub fn new(positions: Vec<ComplexPoint>, strengths: Vec<f64>) -> Result<Self> {
        if positions.is_empty() {
            return Err(VortexError::InvalidConfiguration("need at least one vortex".into()));
        }
        if positions.len() != strengths.len() {
            return Err(VortexError::InvalidConfiguration(format!(
                "{} positions but {} strengths",
                positions.len(),
                strengths.len()
            )));
        }
        if positions.iter().any(|z| !(z.re.is_finite() && z.im.is_finite()))
            || strengths.iter().any(|g| !g.is_finite())
        {
            return Err(VortexError::InvalidConfiguration("non-finite entry".into()));
        }
        check_distinct(&positions)?;
        Ok(VortexConfiguration { positions, strengths })
    }

    /// All strengths equal to one.
    pub fn unit(positions: Vec<ComplexPoint>) -> Result<Self> {
        let n = positions.len();
        Self::new(positions, vec![1.0; n])
    }

    pub fn positions(&self) -> &[ComplexPoint] {
        &self.positions
    }

    pub fn strengths(&self) -> &[f64] {
        &self.strengths
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Same strengths, new positions (validated for distinctness).
    pub fn with_positions(&self, positions: Vec<ComplexPoint>) -> Result<Self> {
        Self::new(positions, self.strengths.clone())
    }

    pub fn validate_in(&self, d: &Domain) -> Result<()> {
        for z in &self.positions {
            d.preimage(*z)?;
        }
        Ok(())
    }

    /// Angular impulse `Σ Γ_k |z_k|²`.
    pub fn angular_impulse(&self) -> f64 {
        self.positions
            .iter()
            .zip(&self.strengths)
            .map(|(z, g)| g * z.norm_sqr())
            .sum()
    }
}

fn check_distinct(positions: &[ComplexPoint]) -> Result<()> {
    for j in 0..positions.len() {
        for k in (j + 1)..positions.len() {
            if positions[j] == positions[k] {
                return Err(VortexError::Collision(j, k));
            }
        }
    }
    Ok(())
}

/// Rescaled state `(r, u)` with unit strengths.
#[derive(Clone, Debug, PartialEq)]
pub struct RescaledState {
    pub r: f64,
    pub u: Vec<ComplexPoint>,
}

/// Interaction term `F(z)`. Coinciding positions are allowed.
pub fn interaction_f(d: &Domain, positions: &[ComplexPoint], strengths: &[f64]) -> Result<f64> {
    let pre = preimages(d, positions)?;
    let mut total = 0.0;
    for j in 0..pre.len() {
        for k in 0..pre.len() {
            // diagonal j == k is the Robin term
            total += strengths[j] * strengths[k] * d.regular_part_pre(pre[j], pre[k]);
        }
    }
    Ok(total)
}

/// Gradients `∇_{z_k} F(z)`.
pub fn grad_interaction_f(
    d: &Domain,
    positions: &[ComplexPoint],
    strengths: &[f64],
) -> Result<Vec<ComplexPoint>> {
    let pre = preimages(d, positions)?;
    let n = pre.len();
    let mut grad = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..n {
        for j in 0..n {
            // ∇h(z) = 2 ∇_1 g(z, z); off-diagonal pairs appear twice by symmetry
            grad[k] += d.grad1_pre(pre[k], pre[j]) * (2.0 * strengths[j] * strengths[k]);
        }
    }
    Ok(grad)
}

fn preimages(d: &Domain, positions: &[ComplexPoint]) -> Result<Vec<Complex64>> {
    positions.iter().map(|z| d.preimage(*z)).collect()
}

fn pair_log_sum(positions: &[ComplexPoint], strengths: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for j in 0..positions.len() {
        for k in 0..positions.len() {
            if j == k {
                continue;
            }
            let dist = (positions[j] - positions[k]).norm();
            if dist == 0.0 {
                return Err(VortexError::Collision(j.min(k), j.max(k)));
            }
            total += strengths[j] * strengths[k] * (1.0 / dist).ln();
        }
    }
    Ok(total)
}

/// `H_Ω(z)`.
pub fn hamiltonian_full(d: &Domain, c: &VortexConfiguration) -> Result<f64> {
    let logs = pair_log_sum(c.positions(), c.strengths())?;
    let f = interaction_f(d, c.positions(), c.strengths())?;
    Ok(logs / (2.0 * PI) - f)
}

/// `∇_{z_k} H_Ω(z)` for every vortex.
pub fn grad_hamiltonian(d: &Domain, c: &VortexConfiguration) -> Result<Vec<ComplexPoint>> {
    let z = c.positions();
    let gamma = c.strengths();
    let mut grad = grad_interaction_f(d, z, gamma)?;
    for g in grad.iter_mut() {
        *g = -*g;
    }
    for k in 0..z.len() {
        for j in 0..z.len() {
            if j == k {
                continue;
            }
            let diff = z[k] - z[j];
            let dist2 = diff.norm_sqr();
            if dist2 == 0.0 {
                return Err(VortexError::Collision(j.min(k), j.max(k)));
            }
            // two ordered pairs contain z_k
            grad[k] -= diff * (gamma[j] * gamma[k] / (PI * dist2));
        }
    }
    Ok(grad)
}

fn require_rescalable(s: &RescaledState) -> Result<usize> {
    let n = s.u.len();
    if n < 2 {
        return Err(VortexError::InvalidConfiguration(
            "the rescaled Hamiltonian needs N >= 2".into(),
        ));
    }
    check_distinct(&s.u)?;
    Ok(n)
}

/// `H_r(u)` with unit strengths, including the `r = 0` limit.
pub fn hamiltonian_rescaled(d: &Domain, s: &RescaledState) -> Result<f64> {
    let n = require_rescalable(s)?;
    let nm1 = (n - 1) as f64;
    let ones = vec![1.0; n];
    if s.r == 0.0 {
        let logs = pair_log_sum(&s.u, &ones)?;
        let f0 = interaction_f(d, &vec![Complex64::new(0.0, 0.0); n], &ones)?;
        return Ok(logs / nm1 - 2.0 * PI / nm1 * f0);
    }
    let z: Vec<Complex64> = s.u.iter().map(|u| u * s.r).collect();
    let full = hamiltonian_full(d, &VortexConfiguration::new(z, ones)?)?;
    let shift = (n * (n - 1)) as f64 * s.r.abs().ln() / (2.0 * PI);
    Ok(2.0 * PI / nm1 * (full + shift))
}

/// `∇_{u_k} H_r(u)`, continuous at `r = 0`.
pub fn grad_hamiltonian_rescaled(d: &Domain, s: &RescaledState) -> Result<Vec<ComplexPoint>> {
    let n = require_rescalable(s)?;
    let nm1 = (n - 1) as f64;
    let ones = vec![1.0; n];
    let z: Vec<Complex64> = s.u.iter().map(|u| u * s.r).collect();
    let grad_f = grad_interaction_f(d, &z, &ones)?;
    let mut grad = Vec::with_capacity(n);
    for k in 0..n {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..n {
            if j != k {
                let diff = s.u[k] - s.u[j];
                acc -= diff * (2.0 / diff.norm_sqr());
            }
        }
        grad.push(acc / nm1 - grad_f[k] * (2.0 * PI * s.r / nm1));
    }
    Ok(grad)
}
