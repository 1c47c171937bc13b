//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fail.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use selftrig::integrate::integrate;
use selftrig::trigger::check_admissible;
use selftrig::verify::sweep;
use selftrig::{
    check_lyapunov_decrease, oracle_root, run_scenario, simulate, solve_lyapunov_equation, symmetric_eigen_bounds,
    ClassKFunction, DelayBudgetRule, Matrix, Resolved, ScenarioConfig, StateVector, TriggerBudget, TriggerPolicy,
};

type Outcome = Result<String, String>;

/// Id, name, runtime limit and check.
type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(format!("{name}.toml"))
}

fn load(name: &str, overrides: &[&str]) -> Result<ScenarioConfig, String> {
    let text = std::fs::read_to_string(config_path(name)).map_err(|e| format!("{name}: {e}"))?;
    let ov: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    ScenarioConfig::parse(&text, &ov).map_err(|e| e.to_string())
}

fn resolve(cfg: &ScenarioConfig) -> Result<Resolved, String> {
    cfg.resolve().map_err(|e| e.to_string())
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn c1_lyapunov_solve() -> Outcome {
    let a_c = Matrix::from_rows(&[[-1.0, 1.0], [0.0, -1.0]]).map_err(|e| e.to_string())?;
    let q = Matrix::identity(2).scale(2.0);
    let p = solve_lyapunov_equation(&a_c, &q).map_err(|e| e.to_string())?;
    let target = [[2.0, 1.0], [1.0, 3.0]];
    let got = p.matrix().to_rows();
    let err = (0..2)
        .flat_map(|i| (0..2).map(move |j| (i, j)))
        .map(|(i, j)| (got[i][j] - target[i][j]).abs())
        .fold(0.0f64, f64::max);
    let (lmin, lmax) = symmetric_eigen_bounds(p.matrix()).map_err(|e| e.to_string())?;
    let detail = format!("P = {got:?}, eigenvalues {lmin:.4}/{lmax:.4}");
    ensure(err <= 1e-9, format!("{detail}; max deviation from [[2,1],[1,3]] is {err:.3e}"))?;
    ensure(
        (lmin - 1.382).abs() <= 1e-3 && (lmax - 3.618).abs() <= 1e-3,
        format!("{detail}; eigenvalues off"),
    )?;
    Ok(detail)
}

fn c2_constant_period() -> Outcome {
    let cfg = load("example1_constant_2p1", &[])?;
    let trace = run_scenario(&resolve(&cfg)?.scenario).map_err(|e| e.to_string())?;
    let v = selftrig::check_safety(&trace, 1e-4);
    match v.violated_at {
        Some(t) if t < 500.0 => Ok(format!("violation at t = {t:.2} s")),
        _ => Err(format!("no violation; max |x| = {:.3e}", v.max_norm)),
    }
}

fn c3_selftrig_no_delay() -> Outcome {
    let cfg = load("example1_selftrig_099", &[])?;
    let resolved = resolve(&cfg)?;
    let (trace, summary) = simulate(&cfg, &resolved).map_err(|e| e.to_string())?;
    let tau_min = summary.bounds.as_ref().ok_or("no bounds")?.tau_min;
    let safety = summary.monitors.safety.ok_or("safety monitor not armed")?;
    let mean = summary.stats.mean_inter_sample;
    let min_gap = trace
        .events
        .windows(2)
        .map(|w| w[1].t_k - w[0].t_k)
        .fold(f64::INFINITY, f64::min);
    let detail = format!("mean {mean:.3} s, min gap {min_gap:.4} s, tau_min {tau_min:.4} s");
    ensure(safety.safe(), format!("safety violated at {:?}; {detail}", safety.violated_at))?;
    ensure(mean > 2.1 && mean <= 20.0, format!("mean outside (2.1, 20]; {detail}"))?;
    ensure(tau_min > 0.0 && min_gap >= tau_min, format!("gap below tau_min; {detail}"))?;
    Ok(detail)
}

fn c4_selftrig_delay() -> Outcome {
    let cfg = load("example1_selftrig_05_delay9ms", &[])?;
    let resolved = resolve(&cfg)?;
    let (trace, summary) = simulate(&cfg, &resolved).map_err(|e| e.to_string())?;
    let b = summary.bounds.as_ref().ok_or("no bounds")?;
    let safety = summary.monitors.safety.ok_or("safety monitor not armed")?;
    let mean = summary.stats.mean_inter_sample;
    let detail = format!("Delta_max {:.3} ms, mean {mean:.3} s", b.delta_max * 1e3);
    ensure(
        trace.events.iter().all(|e| (e.delta_k - 0.009).abs() < 1e-12),
        "delay not 9 ms at every sample",
    )?;
    ensure(safety.safe(), format!("safety violated at {:?}", safety.violated_at))?;
    ensure(b.delta_max >= 0.009, format!("Delta_max below 9 ms; {detail}"))?;
    ensure(mean >= 1.0, format!("mean below 1 s; {detail}"))?;
    Ok(detail)
}

fn c5_delay_budget() -> Outcome {
    let cfg = load("example1_selftrig_099", &[])?;
    let resolved = resolve(&cfg)?;
    let dmax = resolved.policy().and_then(|p| p.precomputed()).ok_or("no bounds")?.delta_max;
    let detail = format!("Delta_max {:.4} ms", dmax * 1e3);
    ensure((5e-5..=5e-4).contains(&dmax), format!("outside [0.05, 0.5] ms; {detail}"))?;
    Ok(detail)
}

fn c6_conservativeness() -> Outcome {
    let mut parts = Vec::new();
    for name in ["example1_selftrig_099", "example1_perturbed", "annulus_stability"] {
        let cfg = load(name, &[])?;
        let resolved = resolve(&cfg)?;
        let policy = resolved.policy().ok_or("not self-triggered")?;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let report = sweep(policy, resolved.scenario.integrator_step, 100, &mut rng).map_err(|e| e.to_string())?;
        ensure(
            report.failures == 0,
            format!("{name}: {} exceptions, first {:?}", report.failures, report.first_failure),
        )?;
        parts.push(format!("{name} min ratio {:.2}", report.min_ratio));
    }
    Ok(parts.join(", "))
}

fn c7_solver_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut log_uniform = |lo: f64, hi: f64| 10f64.powf(rng.random_range(lo..hi));
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (m1, m2, c) = (log_uniform(-4.0, 3.0), log_uniform(-4.0, 3.0), log_uniform(-6.0, 2.0));
        let closed = selftrig::trigger::solve_hold_inequality(m1, m2, c, f64::INFINITY).map_err(|e| e.to_string())?;
        let bisect = oracle_root(m1, m2, c, 1e-18).map_err(|e| e.to_string())?;
        worst = worst.max((closed - bisect).abs() / closed.abs().max(bisect.abs()));
    }
    ensure(worst <= 1e-9, format!("worst relative gap {worst:.3e}"))?;
    Ok(format!("worst relative gap {worst:.2e}"))
}

fn c8_stability_decrease() -> Outcome {
    let cfg = load("annulus_stability", &[])?;
    let resolved = resolve(&cfg)?;
    let trace = run_scenario(&resolved.scenario).map_err(|e| e.to_string())?;
    let cert = &resolved.scenario.certificate;
    let verdict = check_lyapunov_decrease(&trace, cert, 0.5);
    ensure(
        verdict.violations == 0,
        format!("{} grid violations, worst margin {:e}", verdict.violations, verdict.worst_margin),
    )?;
    let mut increases = 0;
    for w in trace.events.windows(2) {
        if w[0].x_k[0].abs() > 0.1 && cert.value(&w[1].x_k) >= cert.value(&w[0].x_k) {
            increases += 1;
        }
    }
    ensure(increases == 0, format!("V failed to drop across {increases} sample pairs"))?;
    Ok(format!(
        "{} grid points checked, worst margin {:.3e}, {} samples",
        verdict.checked,
        verdict.worst_margin,
        trace.events.len()
    ))
}

fn c9_admissibility() -> Outcome {
    let cfg = load("example1_perturbed", &[])?;
    let resolved = resolve(&cfg)?;
    let nu = resolved
        .policy()
        .ok_or("not self-triggered")?
        .nu()
        .map_err(|e| e.to_string())?
        .ok_or("no nu")?;
    let run_with = |scale: f64| -> Result<(bool, Option<bool>), String> {
        let d = format!("{:e}", scale * nu);
        let box_ov = format!("system.d_bounds = {{ lo = [0.0, 0.0], hi = [0.0, {d}] }}");
        let sig_ov = format!("disturbance.d.value = [0.0, {d}]");
        let cfg = load("example1_perturbed", &[&box_ov, &sig_ov])?;
        let resolved = resolve(&cfg)?;
        let policy = resolved.policy().ok_or("not self-triggered")?;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let adm = check_admissible(
            policy.system(),
            policy.feedback(),
            policy.certificate(),
            1e-4,
            policy.budget().theta_g,
            policy.bounds().n_lipschitz_samples,
            policy.bounds().safety_margin,
            &mut rng,
        )
        .map_err(|e| e.to_string())?;
        let safe = if adm.admissible {
            let trace = run_scenario(&resolved.scenario).map_err(|e| e.to_string())?;
            Some(selftrig::check_safety(&trace, 1e-4).safe())
        } else {
            None
        };
        Ok((adm.admissible, safe))
    };
    let (adm_low, safe_low) = run_with(0.9)?;
    let (adm_high, _) = run_with(10.0)?;
    ensure(adm_low, "0.9 nu declared inadmissible")?;
    ensure(safe_low == Some(true), "0.9 nu run left the safe ball")?;
    ensure(!adm_high, "10 nu declared admissible")?;
    Ok(format!("nu = {nu:.4e}; 0.9 nu admissible and safe, 10 nu inadmissible"))
}

fn c10_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);

    // Class-K round trips.
    let funcs = [
        ClassKFunction::power_law(0.5, 2.0, 1.0).map_err(|e| e.to_string())?,
        ClassKFunction::power_law(3.0, 0.5, 2.0).map_err(|e| e.to_string())?,
        ClassKFunction::tabulated(vec![0.5, 1.0, 2.0], vec![0.2, 1.0, 5.0]).map_err(|e| e.to_string())?,
    ];
    for f in &funcs {
        for _ in 0..200 {
            let r = rng.random_range(0.0..f.domain_max());
            let back = f.inverse(f.eval(r).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
            ensure((back - r).abs() <= 1e-9 * (1.0 + r), format!("round trip {r} -> {back}"))?;
        }
    }

    // RK4 order: x' = x², x(0) = 0.5, x(1) = 1.
    let f = |x: &[f64]| vec![x[0] * x[0]];
    let err = |h: f64| (integrate(&f, &[0.5], 1.0, h)[0] - 1.0).abs();
    let ratio = err(0.02) / err(0.01);
    ensure((14.0..=18.0).contains(&ratio), format!("RK4 halving ratio {ratio:.2}"))?;

    // Determinism under a fixed seed.
    let short = ["integration.t_final = 60.0"];
    let csv = |cfg: &ScenarioConfig| -> Result<Vec<u8>, String> {
        let trace = run_scenario(&resolve(cfg)?.scenario).map_err(|e| e.to_string())?;
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).map_err(|e| e.to_string())?;
        Ok(buf)
    };
    for name in ["example1_selftrig_05_delay9ms", "annulus_stability"] {
        let cfg = load(name, &short)?;
        ensure(csv(&cfg)? == csv(&cfg)?, format!("{name}: CSV differs between identical runs"))?;
    }

    // θ1-monotonicity of τ'_s and Δ_max (printed rule, fixed M-estimates).
    let base = load("example1_selftrig_099", &[])?;
    let (sys, fb) = base.build_system().map_err(|e| e.to_string())?;
    let cert = base.certificate.build().map_err(|e| e.to_string())?;
    let bounds = base.sampler.bounds.clone();
    let probes: Vec<StateVector> = (0..20)
        .map(|_| StateVector::new(selftrig::region::sample_ball(2, 1e-4, &mut rng)).expect("dimension"))
        .collect();
    // Δ_max = min{budget, τ_min}; τ_min grows with θ1, so only the unclamped
    // budget is monotone everywhere.
    let mut prev: Option<(Vec<f64>, f64, f64, bool)> = None;
    let mut clamped_at = Vec::new();
    for theta1 in [0.2, 0.4, 0.6, 0.8, 0.95] {
        let budget = TriggerBudget::new(theta1, 0.999 - theta1, 0.0).map_err(|e| e.to_string())?;
        let policy = TriggerPolicy::safety(sys.clone(), fb.clone(), cert.clone(), 1e-4, budget, false, bounds.clone())
            .map_err(|e| e.to_string())?
            .with_rule(DelayBudgetRule::Printed)
            .precompute()
            .map_err(|e| e.to_string())?;
        let taus = probes
            .iter()
            .map(|x| policy.evaluate(x).map(|e| e.tau_prime))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        let pre = policy.precomputed().expect("precomputed");
        let unclamped = policy
            .compute_delta_max(pre.m3, f64::INFINITY)
            .map_err(|e| e.to_string())?;
        let clamped = pre.delta_max < unclamped;
        if clamped {
            clamped_at.push(theta1);
        }
        if let Some((ptaus, pdmax, pbudget, pclamped)) = &prev {
            ensure(
                taus.iter().zip(ptaus).all(|(t, p)| t >= p),
                format!("tau' not increasing at theta1 = {theta1}"),
            )?;
            ensure(unclamped <= *pbudget, format!("delay budget not decreasing at theta1 = {theta1}"))?;
            ensure(
                clamped || *pclamped || pre.delta_max <= *pdmax,
                format!("Delta_max not decreasing at theta1 = {theta1}"),
            )?;
        }
        prev = Some((taus, pre.delta_max, unclamped, clamped));
    }

    // Config round trips for every bundled config.
    let dir = config_path("x").parent().expect("configs dir").to_path_buf();
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        if path.extension().is_some_and(|e| e == "toml") {
            let text = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
            let cfg = ScenarioConfig::parse(&text, &[]).map_err(|e| e.to_string())?;
            let again = ScenarioConfig::parse(&cfg.to_toml().map_err(|e| e.to_string())?, &[])
                .map_err(|e| e.to_string())?;
            ensure(cfg == again, format!("{} does not round-trip", path.display()))?;
            n += 1;
        }
    }
    Ok(format!(
        "RK4 ratio {ratio:.2}, {n} configs round-trip, Delta_max clamped by tau_min at theta1 = {clamped_at:?}"
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "Lyapunov solve", Duration::from_secs(1), c1_lyapunov_solve),
        (2, "constant-period instability", Duration::from_secs(10), c2_constant_period),
        (3, "self-triggered safety, no delay", Duration::from_secs(30), c3_selftrig_no_delay),
        (4, "self-triggered safety under delay", Duration::from_secs(30), c4_selftrig_delay),
        (5, "delay-budget magnitude", Duration::from_secs(10), c5_delay_budget),
        (6, "conservativeness sweep", Duration::from_secs(60), c6_conservativeness),
        (7, "solver equivalence", Duration::from_secs(1), c7_solver_equivalence),
        (8, "stability-mode decrease", Duration::from_secs(10), c8_stability_decrease),
        (9, "admissibility dichotomy", Duration::from_secs(30), c9_admissibility),
        (10, "invariant suites", Duration::from_secs(30), c10_invariants),
    ];
    let mut failed = 0;
    for (id, name, budget, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > budget => Err(format!("{detail}; took {elapsed:.2?} (limit {budget:?})")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS  {name} [{elapsed:.2?}]: {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name} [{elapsed:.2?}]: {why}");
            }
        }
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
