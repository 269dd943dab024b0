//! Time integration of `Γ_k ż_k = -i ∇_{z_k} H_Ω(z)`.
//!
//! The implicit midpoint rule is the default integrator; classical RK4 is kept
//! as an explicit reference. Both abort with a guard violation when a pair of
//! vortices, or a vortex and the boundary, come closer than `guard_margin`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VortexError};
use crate::geometry::{ComplexPoint, Domain};
use crate::hamiltonian::{grad_hamiltonian, grad_hamiltonian_rescaled, hamiltonian_full, RescaledState, VortexConfiguration};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntegratorMethod {
    ImplicitMidpoint,
    Rk4,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSpec {
    pub method: IntegratorMethod,
    pub dt: f64,
    pub newton_tol: f64,
    pub max_inner_iter: usize,
    pub guard_margin: f64,
}

impl IntegratorSpec {
    pub const DEFAULT_GUARD_MARGIN: f64 = 1e-4;

    pub fn new(method: IntegratorMethod, dt: f64) -> Self {
        IntegratorSpec {
            method,
            dt,
            newton_tol: 1e-14,
            max_inner_iter: 50,
            guard_margin: Self::DEFAULT_GUARD_MARGIN,
        }
    }

    pub fn midpoint(dt: f64) -> Self {
        Self::new(IntegratorMethod::ImplicitMidpoint, dt)
    }

    pub fn rk4(dt: f64) -> Self {
        Self::new(IntegratorMethod::Rk4, dt)
    }

    pub fn with_guard_margin(mut self, margin: f64) -> Self {
        self.guard_margin = margin;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(VortexError::Input(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.newton_tol > 0.0) {
            return Err(VortexError::Input("newton_tol must be positive".into()));
        }
        if !(self.guard_margin >= 0.0) {
            return Err(VortexError::Input("guard_margin must be non-negative".into()));
        }
        Ok(())
    }
}

/// Sampled solution of the vortex system.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<VortexConfiguration>,
    pub energy: Vec<f64>,
    /// Present for rotation-invariant domains only.
    pub angular_impulse: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &VortexConfiguration {
        self.states.last().expect("trajectory holds at least the initial state")
    }
}

/// Velocities `ż_k = -(i/Γ_k) ∇_{z_k} H_Ω`.
pub fn velocity(d: &Domain, c: &VortexConfiguration) -> Result<Vec<ComplexPoint>> {
    let grad = grad_hamiltonian(d, c)?;
    let minus_i = Complex64::new(0.0, -1.0);
    grad.iter()
        .zip(c.strengths())
        .map(|(g, gamma)| {
            if *gamma == 0.0 {
                Err(VortexError::InvalidConfiguration("zero vortex strength".into()))
            } else {
                Ok(minus_i * g / *gamma)
            }
        })
        .collect()
}

fn check_guard(d: &Domain, c: &VortexConfiguration, margin: f64, time: f64) -> Result<()> {
    let z = c.positions();
    for j in 0..z.len() {
        for k in (j + 1)..z.len() {
            let dist = (z[j] - z[k]).norm();
            if dist < margin {
                return Err(VortexError::GuardViolation {
                    time,
                    detail: format!("vortices {j} and {k} at distance {dist:e}"),
                });
            }
        }
        if !d.contains(z[j]) {
            return Err(VortexError::GuardViolation {
                time,
                detail: format!("vortex {j} left the domain"),
            });
        }
        if d.is_bounded() {
            let clearance = d.boundary_distance(z[j]);
            if clearance < margin {
                return Err(VortexError::GuardViolation {
                    time,
                    detail: format!("vortex {j} within {clearance:e} of the boundary"),
                });
            }
        }
    }
    Ok(())
}

fn shifted(c: &VortexConfiguration, base: &[ComplexPoint], dir: &[ComplexPoint], s: f64) -> Result<VortexConfiguration> {
    c.with_positions(base.iter().zip(dir).map(|(b, v)| b + v * s).collect())
}

/// Velocity that maps domain exits during stage evaluation to guard violations.
fn guarded_velocity(d: &Domain, c: &VortexConfiguration, time: f64) -> Result<Vec<ComplexPoint>> {
    velocity(d, c).map_err(|e| match e {
        VortexError::OutsideDomain(_) | VortexError::MapInversion { .. } => VortexError::GuardViolation {
            time,
            detail: "stage evaluation left the domain".into(),
        },
        VortexError::Collision(j, k) => VortexError::GuardViolation {
            time,
            detail: format!("vortices {j} and {k} collided"),
        },
        other => other,
    })
}

fn rk4_step(d: &Domain, c: &VortexConfiguration, dt: f64, time: f64) -> Result<VortexConfiguration> {
    let x = c.positions();
    let k1 = guarded_velocity(d, c, time)?;
    let k2 = guarded_velocity(d, &shifted(c, x, &k1, 0.5 * dt)?, time)?;
    let k3 = guarded_velocity(d, &shifted(c, x, &k2, 0.5 * dt)?, time)?;
    let k4 = guarded_velocity(d, &shifted(c, x, &k3, dt)?, time)?;
    let next = (0..x.len())
        .map(|k| x[k] + (k1[k] + k2[k] * 2.0 + k3[k] * 2.0 + k4[k]) * (dt / 6.0))
        .collect();
    c.with_positions(next)
}

fn to_real(v: &[ComplexPoint]) -> DVector<f64> {
    DVector::from_iterator(2 * v.len(), v.iter().flat_map(|z| [z.re, z.im]))
}

fn midpoint_step(d: &Domain, c: &VortexConfiguration, spec: &IntegratorSpec, dt: f64, time: f64) -> Result<VortexConfiguration> {
    let x = c.positions();
    let n = x.len();
    let v0 = guarded_velocity(d, c, time)?;
    let mut mid: Vec<ComplexPoint> = (0..n).map(|k| x[k] + v0[k] * (0.5 * dt)).collect();

    // simplified Newton: Jacobian of the midpoint residual frozen at the predictor
    let mid_cfg = c.with_positions(mid.clone())?;
    let eps = 1e-7 * (1.0 + mid.iter().map(|z| z.norm()).fold(0.0, f64::max));
    let mut jac = DMatrix::<f64>::identity(2 * n, 2 * n);
    for col in 0..2 * n {
        let mut dir = vec![Complex64::new(0.0, 0.0); n];
        dir[col / 2] = if col % 2 == 0 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 1.0) };
        let plus = guarded_velocity(d, &shifted(&mid_cfg, &mid, &dir, eps)?, time)?;
        let minus = guarded_velocity(d, &shifted(&mid_cfg, &mid, &dir, -eps)?, time)?;
        for row in 0..n {
            let dv = (plus[row] - minus[row]) / (2.0 * eps);
            jac[(2 * row, col)] -= 0.5 * dt * dv.re;
            jac[(2 * row + 1, col)] -= 0.5 * dt * dv.im;
        }
    }
    let lu = jac.lu();

    let mut last_increment = f64::INFINITY;
    for _ in 0..spec.max_inner_iter {
        let vm = guarded_velocity(d, &c.with_positions(mid.clone())?, time)?;
        let residual: Vec<ComplexPoint> = (0..n).map(|k| mid[k] - x[k] - vm[k] * (0.5 * dt)).collect();
        let delta = lu
            .solve(&to_real(&residual))
            .ok_or(VortexError::InnerSolveDivergence { time, increment: f64::INFINITY })?;
        for k in 0..n {
            mid[k] -= Complex64::new(delta[2 * k], delta[2 * k + 1]);
        }
        last_increment = delta.amax();
        let scale = 1.0 + mid.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if last_increment <= spec.newton_tol * scale {
            return c.with_positions((0..n).map(|k| mid[k] * 2.0 - x[k]).collect());
        }
        if !last_increment.is_finite() {
            break;
        }
    }
    Err(VortexError::InnerSolveDivergence { time, increment: last_increment })
}

fn step_signed(d: &Domain, c: &VortexConfiguration, spec: &IntegratorSpec, dt: f64, time: f64) -> Result<VortexConfiguration> {
    let next = match spec.method {
        IntegratorMethod::ImplicitMidpoint => midpoint_step(d, c, spec, dt, time)?,
        IntegratorMethod::Rk4 => rk4_step(d, c, dt, time)?,
    };
    check_guard(d, &next, spec.guard_margin, time + dt)?;
    Ok(next)
}

/// One step of size `spec.dt`.
pub fn step(d: &Domain, c: &VortexConfiguration, spec: &IntegratorSpec) -> Result<VortexConfiguration> {
    spec.validate()?;
    step_signed(d, c, spec, spec.dt, 0.0)
}

fn step_count(duration: f64, dt: f64) -> usize {
    if duration == 0.0 {
        0
    } else {
        ((duration.abs() / dt) - 1e-9).ceil().max(1.0) as usize
    }
}

/// Final state after evolving for `duration`, which may be negative.
pub fn flow(d: &Domain, c0: &VortexConfiguration, spec: &IntegratorSpec, duration: f64) -> Result<VortexConfiguration> {
    spec.validate()?;
    let steps = step_count(duration, spec.dt);
    let mut c = c0.clone();
    if steps == 0 {
        return Ok(c);
    }
    let dt = duration / steps as f64;
    for i in 0..steps {
        c = step_signed(d, &c, spec, dt, i as f64 * dt)?;
    }
    Ok(c)
}

/// Integrates from `t = 0` to `t_end`, recording every `sample_every` steps
/// and the final state. The step is shrunk so that `t_end` is hit exactly.
pub fn integrate(
    d: &Domain,
    c0: &VortexConfiguration,
    spec: &IntegratorSpec,
    t_end: f64,
    sample_every: usize,
) -> Result<Trajectory> {
    spec.validate()?;
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(VortexError::Input(format!("t_end must be non-negative, got {t_end}")));
    }
    c0.validate_in(d)?;
    check_guard(d, c0, spec.guard_margin, 0.0)?;
    let sample_every = sample_every.max(1);
    let steps = step_count(t_end, spec.dt);
    let dt = if steps == 0 { 0.0 } else { t_end / steps as f64 };
    let radial = d.is_radial();

    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        energy: Vec::new(),
        angular_impulse: radial.then(Vec::new),
    };
    let record = |traj: &mut Trajectory, t: f64, c: &VortexConfiguration| -> Result<()> {
        traj.times.push(t);
        traj.energy.push(hamiltonian_full(d, c)?);
        if let Some(l) = traj.angular_impulse.as_mut() {
            l.push(c.angular_impulse());
        }
        traj.states.push(c.clone());
        Ok(())
    };

    let mut c = c0.clone();
    record(&mut traj, 0.0, &c)?;
    for i in 0..steps {
        let t = i as f64 * dt;
        c = step_signed(d, &c, spec, dt, t)?;
        if (i + 1) % sample_every == 0 || i + 1 == steps {
            let t_next = if i + 1 == steps { t_end } else { (i + 1) as f64 * dt };
            record(&mut traj, t_next, &c)?;
        }
    }
    Ok(traj)
}

/// Result of the rigid-rotation test for the regular polygon.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolygonResidual {
    pub residual: f64,
    /// Detected rotation orientation, `+1` counter-clockwise.
    pub sigma: i32,
}

/// Checks that the regular `N`-gon of the given radius solves the `r = 0`
/// rescaled system with unit angular speed.
///
/// Returns `max_k |u̇_k - σ i u_k|` minimised over `σ ∈ {+1, -1}` where `u̇`
/// is the right-hand side `-i ∇_{u_k} H_0` at the polygon.
pub fn polygon_residual(n: usize, radius: f64) -> PolygonResidual {
    assert!(n >= 2, "polygon needs at least two vertices");
    let u: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(radius, 2.0 * PI * k as f64 / n as f64))
        .collect();
    let grad = grad_hamiltonian_rescaled(&Domain::plane(), &RescaledState { r: 0.0, u: u.clone() })
        .expect("polygon vertices are distinct");
    let rhs: Vec<Complex64> = grad.iter().map(|g| Complex64::new(0.0, -1.0) * g).collect();
    let residual_for = |sigma: f64| -> f64 {
        rhs.iter()
            .zip(&u)
            .map(|(v, uk)| (v - Complex64::new(0.0, sigma) * uk).norm())
            .fold(0.0, f64::max)
    };
    let (plus, minus) = (residual_for(1.0), residual_for(-1.0));
    if plus <= minus {
        PolygonResidual { residual: plus, sigma: 1 }
    } else {
        PolygonResidual { residual: minus, sigma: -1 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn pair(dist: f64) -> VortexConfiguration {
        VortexConfiguration::unit(vec![c(dist / 2.0, 0.0), c(-dist / 2.0, 0.0)]).unwrap()
    }

    fn max_dist(a: &VortexConfiguration, b: &VortexConfiguration) -> f64 {
        a.positions()
            .iter()
            .zip(b.positions())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn unit_root_identity() {
        // Σ_{m=1}^{N-1} 1/(1 - e^{2πim/N}) = (N-1)/2
        for n in 2..12 {
            let s: Complex64 = (1..n)
                .map(|m| 1.0 / (1.0 - Complex64::from_polar(1.0, 2.0 * PI * m as f64 / n as f64)))
                .sum();
            assert!((s - c((n as f64 - 1.0) / 2.0, 0.0)).norm() < 1e-13);
        }
    }

    #[test]
    fn polygon_rotates_counter_clockwise() {
        let two = polygon_residual(2, 1.0);
        assert!(two.residual < 1e-14);
        let five = polygon_residual(5, 1.0);
        assert!(five.residual < 1e-13);
        assert_eq!(two.sigma, five.sigma);
        assert_eq!(five.sigma, 1);
        // angular speed scales as 1/radius²: |i u/4 - i u| at |u| = 2
        let big = polygon_residual(3, 2.0);
        assert!((big.residual - 1.5).abs() < 1e-13);
    }

    #[test]
    fn stationary_centre_vortex() {
        let d = Domain::unit_disk();
        let cfg = VortexConfiguration::unit(vec![c(0.0, 0.0)]).unwrap();
        for spec in [IntegratorSpec::midpoint(0.1), IntegratorSpec::rk4(0.1)] {
            let next = step(&d, &cfg, &spec).unwrap();
            assert!(next.positions()[0].norm() < 1e-14);
        }
    }

    #[test]
    fn zero_duration_trajectory() {
        let d = Domain::plane();
        let traj = integrate(&d, &pair(1.0), &IntegratorSpec::midpoint(0.01), 0.0, 1).unwrap();
        assert_eq!(traj.len(), 1);
    }

    #[test]
    fn pair_matches_exact_midpoint_map() {
        // For the co-rotating pair the midpoint rule advances the relative
        // angle by asin(ω dt) per step while preserving |z_1 - z_2|.
        let d = Domain::plane();
        let period = PI * PI;
        let steps = 4000;
        let dt = period / steps as f64;
        let end = flow(&d, &pair(1.0), &IntegratorSpec::midpoint(dt), period).unwrap();
        let omega = 2.0 * PI / period;
        let angle = steps as f64 * (omega * dt).asin();
        let predicted = Complex64::from_polar(0.5, angle);
        assert!((end.positions()[0] - predicted).norm() < 1e-11);

        // fine RK4 reference returns to the start
        let reference = flow(&d, &pair(1.0), &IntegratorSpec::rk4(period / 40000.0), period).unwrap();
        assert!(max_dist(&reference, &pair(1.0)) < 1e-10);
    }

    #[test]
    fn disk_vortex_period() {
        let d = Domain::unit_disk();
        let start = VortexConfiguration::unit(vec![c(0.5, 0.0)]).unwrap();
        let period = 2.0 * PI * PI * 0.75;
        let end = flow(&d, &start, &IntegratorSpec::rk4(period / 4000.0), period).unwrap();
        assert!((end.positions()[0] - start.positions()[0]).norm() < 1e-9);
        assert!((end.positions()[0].norm() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn midpoint_is_second_order() {
        let d = Domain::unit_disk();
        let start = VortexConfiguration::unit(vec![c(0.3, 0.1), c(-0.2, 0.25)]).unwrap();
        let t = 0.5;
        let reference = flow(&d, &start, &IntegratorSpec::rk4(t / 4000.0), t).unwrap();
        let e1 = max_dist(&flow(&d, &start, &IntegratorSpec::midpoint(t / 100.0), t).unwrap(), &reference);
        let e2 = max_dist(&flow(&d, &start, &IntegratorSpec::midpoint(t / 200.0), t).unwrap(), &reference);
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() < 0.2, "observed order {order}");
    }

    #[test]
    fn conservation_and_reversibility() {
        let d = Domain::plane();
        let period = PI * PI * 0.25;
        let spec = IntegratorSpec::midpoint(period / 2000.0);
        let traj = integrate(&d, &pair(0.5), &spec, 10.0 * period, 100).unwrap();
        let h0 = traj.energy[0];
        let drift = traj.energy.iter().map(|h| ((h - h0) / h0).abs()).fold(0.0, f64::max);
        assert!(drift < 1e-8, "energy drift {drift}");
        let l = traj.angular_impulse.as_ref().unwrap();
        assert!(l.iter().all(|x| ((x - l[0]) / l[0]).abs() < 1e-8));

        let disk = Domain::unit_disk();
        let start = VortexConfiguration::unit(vec![c(0.3, 0.1), c(-0.2, 0.25), c(0.0, -0.4)]).unwrap();
        let spec = IntegratorSpec::midpoint(1e-3);
        let forward = flow(&disk, &start, &spec, 0.2).unwrap();
        let back = flow(&disk, &forward, &spec, -0.2).unwrap();
        let one_step = flow(&disk, &start, &IntegratorSpec::rk4(1e-5), 1e-3).unwrap();
        let local = max_dist(&flow(&disk, &start, &spec, 1e-3).unwrap(), &one_step);
        assert!(max_dist(&back, &start) < 10.0 * local.max(1e-15));
    }

    #[test]
    fn triangle_rotates_rigidly() {
        let d = Domain::plane();
        let tri: Vec<Complex64> = (0..3).map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / 3.0)).collect();
        let start = VortexConfiguration::unit(tri).unwrap();
        // angular speed (N-1)/(2π ρ²) for unit strengths
        let period = 2.0 * PI / (2.0 / (2.0 * PI));
        let traj = integrate(&d, &start, &IntegratorSpec::midpoint(period / 2000.0), period, 50).unwrap();
        let side = 3f64.sqrt();
        for s in &traj.states {
            let z = s.positions();
            for (a, b) in [(0, 1), (1, 2), (2, 0)] {
                assert!(((z[a] - z[b]).norm() - side).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn symmetric_configuration_stays_choreographic() {
        let d = Domain::unit_disk();
        let n = 3;
        let rho: f64 = 0.3;
        let poly: Vec<Complex64> = (0..n).map(|k| Complex64::from_polar(rho, 2.0 * PI * k as f64 / n as f64)).collect();
        let omega = (n as f64 - 1.0) / (2.0 * PI * rho * rho)
            + n as f64 * rho.powi(2 * n as i32 - 2) / (PI * (1.0 - rho.powi(2 * n as i32)));
        let period = 2.0 * PI / omega;
        let spec = IntegratorSpec::rk4(period / 3000.0);
        let start = VortexConfiguration::unit(poly).unwrap();
        let traj = integrate(&d, &start, &spec, period, 1000).unwrap();
        // samples at t = kT/3 are cyclic relabelings of the initial polygon
        for (idx, state) in traj.states.iter().enumerate().skip(1) {
            let z = state.positions();
            for k in 0..n {
                let expected = start.positions()[(k + idx) % n];
                assert!((z[k] - expected).norm() < 1e-9, "sample {idx} vortex {k}");
            }
        }
    }

    #[test]
    fn guard_violation_reports_time() {
        let d = Domain::unit_disk();
        let start = VortexConfiguration::unit(vec![c(0.5, 0.0)]).unwrap();
        let spec = IntegratorSpec::rk4(0.01).with_guard_margin(0.6);
        assert!(matches!(
            integrate(&d, &start, &spec, 1.0, 1),
            Err(VortexError::GuardViolation { .. })
        ));
        let bad = IntegratorSpec::rk4(-1.0);
        assert!(step(&d, &start, &bad).is_err());
    }
}
