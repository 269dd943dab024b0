//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use vortex_core::dynamics::{integrate, polygon_residual, IntegratorSpec};
use vortex_core::hamiltonian::{
    grad_hamiltonian, grad_hamiltonian_rescaled, hamiltonian_full, hamiltonian_rescaled,
};
use vortex_core::orbit::{
    find_orbit, orbit_period, reduced_grad_psi_projected, solve_correction, verify_orbit_by_integration,
    OrbitOptions, OrbitRecord, ReducedPoint,
};
use vortex_core::spectral::{action_psi_q, grad_psi_q, spectrum_report, xi_coefficient, xi_imaginary_part, FourierLoop};
use vortex_core::{Domain, RescaledState, VortexConfiguration};

type Outcome = Result<(bool, String), String>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn mapped_quadratic() -> Domain {
    Domain::mapped_disk(vec![c(0.1, 0.0)]).expect("univalent map")
}

// ---------------------------------------------------------------------------

fn xi_identities() -> Outcome {
    let mut worst = 0.0f64;
    for n in 2..=8usize {
        worst = worst.max((xi_coefficient(n, 1) - (n as f64 - 1.0) / 2.0).abs());
        worst = worst.max(xi_coefficient(n, 2).abs());
        for k in -5..=7i64 {
            worst = worst.max((xi_coefficient(n, k) - xi_coefficient(n, 2 - k)).abs());
            worst = worst.max(xi_imaginary_part(n, k).abs());
        }
    }
    Ok((worst < 1e-12, format!("max identity defect {worst:.2e} (tol 1e-12)")))
}

fn kernel_dimension() -> Outcome {
    let reports: Vec<_> = (2..=5usize).into_par_iter().map(|n| spectrum_report(n, 64)).collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for rep in reports {
        let rep = rep.map_err(err)?;
        let pass = rep.kernel_dimension == 3 && rep.spectral_gap >= 1e4 && rep.kernel_basis_error < 1e-8;
        ok &= pass;
        parts.push(format!(
            "N={} dim={} gap={:.1e} basis={:.1e}",
            rep.n, rep.kernel_dimension, rep.spectral_gap, rep.kernel_basis_error
        ));
    }
    Ok((ok, parts.join("; ")))
}

/// Unwrapped rotation angle of the first vortex about `centre`.
fn swept_angle(states: &[VortexConfiguration], centre: Complex64) -> f64 {
    let mut total = 0.0;
    for w in states.windows(2) {
        let a = w[0].positions()[0] - centre;
        let b = w[1].positions()[0] - centre;
        total += (b / a).arg();
    }
    total
}

fn integrator_oracle() -> Outcome {
    // co-rotating pair in the plane, separation d
    let d_sep = 1.0;
    let t_pair = PI * PI * d_sep * d_sep;
    let pair = VortexConfiguration::unit(vec![c(0.5 * d_sep, 0.0), c(-0.5 * d_sep, 0.0)]).map_err(err)?;
    let traj = integrate(&Domain::plane(), &pair, &IntegratorSpec::midpoint(t_pair / 4000.0), t_pair, 4000)
        .map_err(err)?;
    let pair_return = traj
        .last()
        .positions()
        .iter()
        .zip(pair.positions())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);

    // single vortex in the unit disk at |z| = 0.5
    let t_disk = 2.0 * PI * PI * 0.75;
    let single = VortexConfiguration::unit(vec![c(0.5, 0.0)]).map_err(err)?;
    let traj = integrate(&Domain::unit_disk(), &single, &IntegratorSpec::rk4(t_disk / 4000.0), t_disk, 1)
        .map_err(err)?;
    let angle = swept_angle(&traj.states, c(0.0, 0.0));
    let period = 2.0 * PI * t_disk / angle.abs();
    let period_err = (period - t_disk).abs();

    let ok = pair_return < 1e-6 && period_err < 1e-6;
    Ok((
        ok,
        format!(
            "pair return {pair_return:.3e} (midpoint, dt=T/4000, tol 1e-6); disk period {period:.12} vs {t_disk:.12}, error {period_err:.2e} (rk4, dt=T/4000)"
        ),
    ))
}

fn polygon() -> Outcome {
    let results: Vec<_> = (2..=8).map(|n| polygon_residual(n, 1.0)).collect();
    let worst = results.iter().map(|p| p.residual).fold(0.0, f64::max);
    let sigma = results[0].sigma;
    let consistent = results.iter().all(|p| p.sigma == sigma);
    Ok((worst < 1e-13 && consistent, format!("max residual {worst:.2e}, sigma {sigma:+} for all N: {consistent}")))
}

// ---------------------------------------------------------------------------

const PIPELINE_N: [usize; 3] = [2, 3, 4];
const PIPELINE_R: [f64; 3] = [0.1, 0.05, 0.025];

struct PipelineRun {
    n: usize,
    r: f64,
    orbit: Result<OrbitRecord, String>,
    return_distance: f64,
    fine: Result<OrbitRecord, String>,
}

fn pipeline_runs() -> Vec<PipelineRun> {
    let cases: Vec<(usize, f64)> = PIPELINE_N.iter().flat_map(|&n| PIPELINE_R.iter().map(move |&r| (n, r))).collect();
    let d = Domain::unit_disk();
    // the Robin function of the disk is critical at the origin
    let seed = c(0.0, 0.0);
    cases
        .into_par_iter()
        .map(|(n, r)| {
            let orbit = find_orbit(&d, n, r, seed, &OrbitOptions::default()).map_err(err);
            let return_distance = orbit
                .as_ref()
                .ok()
                .and_then(|o| verify_orbit_by_integration(&d, o, &IntegratorSpec::rk4(o.t_r / 20_000.0)).ok())
                .map_or(f64::NAN, |v| v.return_distance);
            let fine = find_orbit(&d, n, r, seed, &OrbitOptions::default().with_modes(128)).map_err(err);
            PipelineRun { n, r, orbit, return_distance, fine }
        })
        .collect()
}

fn pipeline(runs: &[PipelineRun]) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for &n in &PIPELINE_N {
        let group: Vec<&PipelineRun> = runs.iter().filter(|p| p.n == n).collect();
        let mut h1 = Vec::new();
        let mut ar = Vec::new();
        let mut worst_chor = 0.0f64;
        let mut worst_ret = 0.0f64;
        for run in &group {
            let orbit = match &run.orbit {
                Ok(o) => o,
                Err(e) => {
                    ok = false;
                    parts.push(format!("N={n} r={}: {e}", run.r));
                    continue;
                }
            };
            let chor = orbit.choreography_residual / run.r;
            let ret = run.return_distance / run.r;
            ok &= chor < 1e-8 && ret < 1e-6;
            worst_chor = worst_chor.max(chor);
            worst_ret = worst_ret.max(ret);
            h1.push(orbit.h1_error);
            ar.push(orbit.a_r.norm());
        }
        // runs are ordered by decreasing r
        let h1_dec = h1.len() == PIPELINE_R.len() && h1.windows(2).all(|w| w[1] < w[0]);
        let ar_mono = ar.windows(2).all(|w| w[1] <= w[0]);
        ok &= h1_dec && ar_mono;
        parts.push(format!(
            "N={n}: chor/r<={worst_chor:.1e} ret/r<={worst_ret:.1e} h1=[{}] |a_r|max={:.1e}",
            h1.iter().map(|x| format!("{x:.1e}")).collect::<Vec<_>>().join(","),
            ar.iter().cloned().fold(0.0, f64::max)
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn truncation(runs: &[PipelineRun]) -> Outcome {
    let mut worst_a = 0.0f64;
    let mut worst_h = 0.0f64;
    for run in runs {
        let (Ok(a), Ok(b)) = (&run.orbit, &run.fine) else {
            return Ok((false, format!("N={} r={}: orbit missing", run.n, run.r)));
        };
        worst_a = worst_a.max((a.a_r - b.a_r).norm());
        worst_h = worst_h.max((a.h1_error - b.h1_error).abs());
    }
    Ok((worst_a < 1e-8 && worst_h < 1e-8, format!("max |da_r| {worst_a:.2e}, max |dh1_error| {worst_h:.2e} (tol 1e-8)")))
}

fn pair_consistency() -> Outcome {
    let mut worst_period = 0.0f64;
    for r in [0.1, 0.05, 0.01, 1e-3] {
        let t_pair = PI * PI * (2.0 * r) * (2.0 * r);
        worst_period = worst_period.max((orbit_period(2, r) - t_pair).abs() / t_pair);
    }
    let r = 0.01;
    let orbit = find_orbit(&Domain::unit_disk(), 2, r, c(0.0, 0.0), &OrbitOptions::default()).map_err(err)?;
    // plane pair of separation 2r about the same centre and initial phase
    let omega = 2.0 * PI / (PI * PI * 4.0 * r * r);
    let z0 = orbit.positions_at(0.0);
    let phase0 = (z0[0] - orbit.a_r).arg();
    let mut worst = 0.0f64;
    for j in 0..=400 {
        let t = orbit.t_r * j as f64 / 400.0;
        let z1 = orbit.a_r + Complex64::from_polar(r, phase0 + orbit.sigma as f64 * omega * t);
        let z2 = 2.0 * orbit.a_r - z1;
        let zs = orbit.positions_at(t);
        worst = worst.max((zs[0] - z1).norm().max((zs[1] - z2).norm()) / r);
    }
    Ok((
        worst_period < 1e-14 && worst < 1e-3,
        format!("period identity defect {worst_period:.1e}; disk orbit vs plane pair relative {worst:.2e} (tol 1e-3)"),
    ))
}

fn correction_scaling() -> Outcome {
    let d = Domain::unit_disk();
    let opts = OrbitOptions::default();
    let mut ratios = Vec::new();
    for r in [1e-2, 5e-3, 2.5e-3] {
        let w = solve_correction(&d, &ReducedPoint::new(r, c(0.0, 0.0)), 3, &opts).map_err(err)?.w.h1_norm();
        ratios.push(w / r);
    }
    let max = ratios.iter().cloned().fold(0.0, f64::max);
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = max / min;
    Ok((
        spread < 2.0,
        format!(
            "|W|/r = [{}], max/min {spread:.2e} (tol 2)",
            ratios.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(", ")
        ),
    ))
}

fn reduced_gradient_limit() -> Outcome {
    let opts = OrbitOptions::default();
    let n = 2usize;
    let rs = [0.08, 0.04, 0.02, 0.01];
    let points = [c(0.25, 0.0), c(0.5, 0.0), Complex64::from_polar(0.5, PI / 3.0)];
    let mut ok = true;
    let mut parts = Vec::new();
    for (label, d) in [("disk", Domain::unit_disk()), ("mapped", mapped_quadratic())] {
        for z in points {
            let mut errs = Vec::new();
            for r in rs {
                let p = ReducedPoint::new(r, z / r);
                let (g, _) = reduced_grad_psi_projected(&d, &p, n, &opts, None).map_err(err)?;
                let scale = 4.0 * PI * PI * (n * n) as f64 * r / (n as f64 - 1.0);
                let target = d.grad_robin(z).map_err(err)? * scale;
                errs.push((g - target).norm() / target.norm());
            }
            let factors: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
            ok &= factors.iter().all(|f| *f >= 1.5);
            parts.push(format!(
                "{label} ra={:.2}{:+.2}i min factor {:.1}",
                z.re,
                z.im,
                factors.iter().cloned().fold(f64::INFINITY, f64::min)
            ));
        }
    }
    Ok((ok, parts.join("; ")))
}

// ---------------------------------------------------------------------------

fn random_point(rng: &mut ChaCha8Rng, radius: f64) -> Complex64 {
    let rho = radius * rng.random::<f64>().sqrt();
    Complex64::from_polar(rho, rng.random_range(0.0..2.0 * PI))
}

fn random_positions(rng: &mut ChaCha8Rng, n: usize, radius: f64, min_sep: f64) -> Vec<Complex64> {
    loop {
        let pts: Vec<Complex64> = (0..n).map(|_| random_point(rng, radius)).collect();
        let separated = (0..n).all(|j| ((j + 1)..n).all(|k| (pts[j] - pts[k]).norm() > min_sep));
        if separated {
            return pts;
        }
    }
}

fn rel_err(fd: &[f64], an: &[f64]) -> f64 {
    let diff = fd.iter().zip(an).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let scale = an.iter().map(|x| x.abs()).fold(0.0, f64::max);
    diff / scale.max(1e-300)
}

fn fd_complex(f: &dyn Fn(Complex64) -> f64, z: Complex64, h: f64) -> Complex64 {
    c(
        (f(z + c(h, 0.0)) - f(z - c(h, 0.0))) / (2.0 * h),
        (f(z + c(0.0, h)) - f(z - c(0.0, h))) / (2.0 * h),
    )
}

fn flatten(zs: &[Complex64]) -> Vec<f64> {
    zs.iter().flat_map(|z| [z.re, z.im]).collect()
}

fn fd_hamiltonian(rng: &mut ChaCha8Rng) -> Result<f64, String> {
    let domains = [Domain::plane(), Domain::unit_disk(), mapped_quadratic()];
    let mut worst = 0.0f64;
    let h = 1e-6;
    for i in 0..100 {
        let d = &domains[i % domains.len()];
        let n = 2 + i % 3;
        let pre = random_positions(rng, n, 0.7, 0.05);
        let pos: Vec<Complex64> = pre.iter().map(|w| d.map_forward(*w)).collect();
        let strengths: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0) * if rng.random() { 1.0 } else { -1.0 }).collect();
        let cfg = VortexConfiguration::new(pos.clone(), strengths).map_err(err)?;
        let an = grad_hamiltonian(d, &cfg).map_err(err)?;
        let mut fd = Vec::new();
        for k in 0..n {
            let f = |z: Complex64| {
                let mut p = pos.clone();
                p[k] = z;
                hamiltonian_full(d, &cfg.with_positions(p).unwrap()).unwrap()
            };
            fd.push(fd_complex(&f, pos[k], h));
        }
        worst = worst.max(rel_err(&flatten(&fd), &flatten(&an)));

        // rescaled Hamiltonian, including r = 0
        let u = random_positions(rng, n, 1.2, 0.2);
        let r = if i % 4 == 0 { 0.0 } else { rng.random_range(0.0..0.2) };
        let s = RescaledState { r, u: u.clone() };
        let an = grad_hamiltonian_rescaled(d, &s).map_err(err)?;
        let mut fd = Vec::new();
        for k in 0..n {
            let f = |z: Complex64| {
                let mut v = u.clone();
                v[k] = z;
                hamiltonian_rescaled(d, &RescaledState { r, u: v }).unwrap()
            };
            fd.push(fd_complex(&f, u[k], h));
        }
        worst = worst.max(rel_err(&flatten(&fd), &flatten(&an)));
    }
    Ok(worst)
}

fn fd_geometry(rng: &mut ChaCha8Rng) -> Result<f64, String> {
    let domains = [
        Domain::unit_disk(),
        mapped_quadratic(),
        Domain::mapped_disk(vec![c(0.08, 0.03), c(0.0, 0.02)]).map_err(err)?,
    ];
    let mut worst = 0.0f64;
    let h = 1e-6;
    for i in 0..100 {
        let d = &domains[i % domains.len()];
        let w = d.map_forward(random_point(rng, 0.7));
        let z = d.map_forward(random_point(rng, 0.7));
        let (gw, gz) = d.grad_regular_part(w, z).map_err(err)?;
        let fw = fd_complex(&|x| d.regular_part(x, z).unwrap(), w, h);
        let fz = fd_complex(&|x| d.regular_part(w, x).unwrap(), z, h);
        worst = worst.max(rel_err(&flatten(&[fw, fz]), &flatten(&[gw, gz])));

        let gr = d.grad_robin(z).map_err(err)?;
        let fr = fd_complex(&|x| d.robin(x).unwrap(), z, h);
        worst = worst.max(rel_err(&flatten(&[fr]), &flatten(&[gr])));

        let hess = d.hessian_robin(z).map_err(err)?;
        let hx = (d.grad_robin(z + c(h, 0.0)).unwrap() - d.grad_robin(z - c(h, 0.0)).unwrap()) / (2.0 * h);
        let hy = (d.grad_robin(z + c(0.0, h)).unwrap() - d.grad_robin(z - c(0.0, h)).unwrap()) / (2.0 * h);
        let fd_h = [hx.re, hy.re, hx.im, hy.im];
        let an_h = [hess[(0, 0)], hess[(0, 1)], hess[(1, 0)], hess[(1, 1)]];
        worst = worst.max(rel_err(&fd_h, &an_h));
    }
    Ok(worst)
}

fn fd_spectral(rng: &mut ChaCha8Rng) -> Result<f64, String> {
    let domains = [Domain::plane(), Domain::unit_disk(), mapped_quadratic()];
    let m = 6usize;
    let mut worst = 0.0f64;
    let h = 1e-5;
    // a grid divisible by N keeps the shifted loops on the nodes, so the
    // discrete action is exactly translation invariant
    let q = 96usize;
    for i in 0..100 {
        let d = &domains[i % domains.len()];
        let n = 2 + i % 3;
        let r = rng.random_range(0.0..0.15);
        let mut v = FourierLoop::circle(m, random_point(rng, 0.5), rng.random_range(0.0..2.0 * PI), 1);
        for k in -(m as i64)..=(m as i64) {
            let amp = 0.05 * 0.5f64.powi(k.unsigned_abs() as i32);
            let bump = c(rng.random_range(-amp..amp), rng.random_range(-amp..amp));
            v.set(k, v.get(k) + bump);
        }
        let g = grad_psi_q(d, r, &v, n, q).map_err(err)?;
        let x = v.to_real();
        let g_real = g.to_real();
        let mut fd = Vec::with_capacity(x.len());
        let mut an = Vec::with_capacity(x.len());
        for k in -(m as i64)..=(m as i64) {
            let idx = FourierLoop::real_index(m, k);
            // ∂Ψ/∂x_j = <G, e_j>_{H¹}
            let weight = 2.0 * PI * (1.0 + (k * k) as f64);
            for j in [idx, idx + 1] {
                let eval = |s: f64| {
                    let mut y = x.clone();
                    y[j] += s;
                    action_psi_q(d, r, &FourierLoop::from_real(m, &y).unwrap(), n, q).unwrap()
                };
                fd.push((eval(h) - eval(-h)) / (2.0 * h));
                an.push(weight * g_real[j]);
            }
        }
        worst = worst.max(rel_err(&fd, &an));
    }
    Ok(worst)
}

fn finite_differences() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let ham = fd_hamiltonian(&mut rng)?;
    let geo = fd_geometry(&mut rng)?;
    let spec = fd_spectral(&mut rng)?;
    Ok((
        ham < 1e-6 && geo < 1e-6 && spec < 1e-6,
        format!("max relative error: hamiltonian {ham:.2e}, geometry {geo:.2e}, spectral {spec:.2e} (tol 1e-6)"),
    ))
}

// ---------------------------------------------------------------------------

/// Relative drift; an energy that vanishes initially is measured against the
/// pairwise interaction scale.
fn drift(series: &[f64], scale: f64) -> f64 {
    let first = series[0];
    let norm = if first.abs() > 1e-12 { first.abs() } else { scale };
    series.iter().map(|x| (x - first).abs()).fold(0.0, f64::max) / norm
}

fn conservation() -> Outcome {
    let mut worst_h = 0.0f64;
    let mut worst_l = 0.0f64;
    let interaction_scale = 1.0 / (2.0 * PI);
    let mut parts = Vec::new();
    for d_sep in [1.0, 0.5] {
        let t = PI * PI * d_sep * d_sep;
        let pair = VortexConfiguration::unit(vec![c(0.5 * d_sep, 0.0), c(-0.5 * d_sep, 0.0)]).map_err(err)?;
        let traj = integrate(&Domain::plane(), &pair, &IntegratorSpec::midpoint(t / 4000.0), t, 1).map_err(err)?;
        let dh = drift(&traj.energy, interaction_scale);
        let l: Vec<f64> = traj.states.iter().map(|s| s.angular_impulse()).collect();
        let dl = drift(&l, 1.0);
        parts.push(format!("pair d={d_sep}: dH {dh:.1e} dL {dl:.1e}"));
        worst_h = worst_h.max(dh);
        worst_l = worst_l.max(dl);
    }
    let t = 2.0 * PI * PI * 0.75;
    let single = VortexConfiguration::unit(vec![c(0.5, 0.0)]).map_err(err)?;
    let traj = integrate(&Domain::unit_disk(), &single, &IntegratorSpec::midpoint(t / 4000.0), t, 1).map_err(err)?;
    let dh = drift(&traj.energy, interaction_scale);
    let dl = drift(traj.angular_impulse.as_deref().ok_or("disk is radial")?, 1.0);
    parts.push(format!("disk vortex: dH {dh:.1e} dL {dl:.1e}"));
    worst_h = worst_h.max(dh);
    worst_l = worst_l.max(dl);
    Ok((worst_h < 1e-8 && worst_l < 1e-8, parts.join("; ")))
}

// ---------------------------------------------------------------------------

fn run(id: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    let (pass, detail) = match outcome {
        Ok(x) => x,
        Err(e) => (false, format!("error: {e}")),
    };
    println!(
        "[{}] {id:>2} {name}: {detail} ({:.2}s)",
        if pass { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64()
    );
    pass
}

fn main() -> ExitCode {
    let runs = pipeline_runs();
    let results = [
        run(1, "xi identities", xi_identities),
        run(2, "kernel of the linearization", kernel_dimension),
        run(3, "integrator closed forms", integrator_oracle),
        run(4, "polygon relative equilibrium", polygon),
        run(5, "orbit pipeline in the disk", || pipeline(&runs)),
        run(6, "pair consistency", pair_consistency),
        run(7, "normal correction scales like r", correction_scaling),
        run(8, "reduced gradient limit", reduced_gradient_limit),
        run(9, "finite-difference suites", finite_differences),
        run(10, "conservation over one period", conservation),
        run(11, "truncation robustness", || truncation(&runs)),
    ];
    let failed = results.iter().filter(|p| !**p).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
