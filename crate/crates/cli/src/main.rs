use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use selftrig::{simulate, verify, Error, RunSummary, ScenarioConfig, StateVector, VerifyOptions};

/// Self-triggered sampling for nonlinear control loops.
#[derive(Parser, Debug)]
#[command(name = "selftrig", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Scenario config (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Dotted KEY=VALUE applied to the config before validation.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario; write the trace CSV and a summary.
    Simulate(Common),
    /// Dump M1, τ'_s and τ_s over a square state grid as CSV.
    Triggers {
        #[command(flatten)]
        common: Common,
        /// Points per axis.
        #[arg(long, default_value_t = 21)]
        points: usize,
        /// Half-width of the grid; defaults to the square inscribed in the
        /// region the bounds were computed on.
        #[arg(long)]
        extent: Option<f64>,
    },
    /// Check the trigger against brute-force oracles.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 200)]
        n_points: usize,
        /// Replace the safety margin, bypassing its lower limit.
        #[arg(long)]
        force_margin: Option<f64>,
    },
    /// Run several scenarios of one system and tabulate their statistics.
    Compare {
        /// Scenario configs; at least two.
        #[arg(long = "config", value_name = "PATH", required = true, num_args = 1)]
        configs: Vec<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

/// Failure classes mapped onto exit codes.
enum Failure {
    /// A monitored property failed (exit 1).
    Property(String),
    /// Usage, config or I/O problem (exit 2).
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(common) => cmd_simulate(&common),
        Command::Triggers { common, points, extent } => cmd_triggers(&common, points, extent),
        Command::Verify {
            common,
            n_points,
            force_margin,
        } => cmd_verify(&common, n_points, force_margin),
        Command::Compare {
            configs,
            out,
            seed,
            overrides,
        } => cmd_compare(&configs, out.as_deref(), seed, &overrides),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Property(msg)) => {
            eprintln!("FAIL: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load(path: &Path, seed: Option<u64>, overrides: &[String]) -> Result<ScenarioConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let mut cfg = ScenarioConfig::parse(&text, overrides)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn out_dir(out: Option<&Path>) -> Result<PathBuf, Failure> {
    let dir = out.map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn run(cfg: &ScenarioConfig, dir: &Path) -> Result<RunSummary, Failure> {
    let resolved = cfg.resolve()?;
    let (trace, summary) = simulate(cfg, &resolved)?;
    let mut w = BufWriter::new(fs::File::create(dir.join(&cfg.output.trace))?);
    trace.write_csv(&mut w)?;
    w.flush()?;
    fs::write(dir.join(&cfg.output.summary), summary.to_toml()?)?;
    Ok(summary)
}

fn cmd_simulate(common: &Common) -> CmdResult {
    let cfg = load(&common.config, common.seed, &common.overrides)?;
    let dir = out_dir(common.out.as_deref())?;
    let summary = run(&cfg, &dir)?;
    let s = &summary.stats;
    println!("scenario      {}", summary.name);
    println!("samples       {}", s.samples);
    println!("mean_inter    {:.6} s", s.mean_inter_sample);
    println!("min_inter     {:.6} s", s.min_inter_sample);
    if let Some(b) = &summary.bounds {
        println!("tau_min       {:.6e} s", b.tau_min);
        println!("delta_max     {:.6e} s", b.delta_max);
    }
    let m = &summary.monitors;
    if let Some(v) = &m.safety {
        match v.violated_at {
            Some(t) => println!("safety        violated at t = {t:.3} s"),
            None => println!("safety        ok (max |x| = {:.3e})", v.max_norm),
        }
    }
    if let Some(d) = &m.decrease {
        println!(
            "decrease      {} violations over {} checks, {} sample increases",
            d.violations, d.checked, d.sample_increases
        );
    }
    if let Some(e) = &m.internal_error {
        println!("internal      {e}");
    }
    if m.passed {
        return Ok(());
    }
    let mut why = Vec::new();
    if let Some(t) = m.safety.and_then(|v| v.violated_at) {
        why.push(format!("safety violated at t = {t:.3} s"));
    }
    if let Some(d) = m.decrease.filter(|d| !d.passed()) {
        why.push(format!("Lyapunov decrease failed {} times", d.violations + d.sample_increases));
    }
    if m.diverged {
        why.push("trajectory diverged".into());
    }
    if let Some(e) = &m.internal_error {
        why.push(e.clone());
    }
    Err(Failure::Property(why.join("; ")))
}

fn cmd_triggers(common: &Common, points: usize, extent: Option<f64>) -> CmdResult {
    let cfg = load(&common.config, common.seed, &common.overrides)?;
    let resolved = cfg.resolve()?;
    let policy = resolved
        .policy()
        .ok_or_else(|| Failure::Usage("triggers needs a self-triggered sampler".into()))?;
    if points < 1 {
        return Err(Failure::Usage("--points must be at least 1".into()));
    }
    let n = policy.system().state_dim();
    let radius = policy.delta().unwrap_or_else(|| policy.working_radius());
    let inscribed = policy.region().outer_radius().min(radius) / (n as f64).sqrt();
    let half = extent.unwrap_or(inscribed * (1.0 - 1e-12));
    if half.is_nan() || half < 0.0 || half * (n as f64).sqrt() > radius {
        return Err(Failure::Usage(format!(
            "grid half-width {half:e} leaves the domain of radius {radius:e}"
        )));
    }
    let axis: Vec<f64> = if points == 1 {
        vec![0.0]
    } else {
        (0..points)
            .map(|i| half * ((2 * i) as f64 - (points - 1) as f64) / (points - 1) as f64)
            .collect()
    };
    let mut out = String::new();
    let header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    writeln!(out, "{},M1,M2,tau_prime,tau_s", header.join(",")).expect("string write");
    let total = points.pow(n as u32);
    for idx in 0..total {
        let mut rem = idx;
        let x: Vec<f64> = (0..n)
            .map(|_| {
                let v = axis[rem % points];
                rem /= points;
                v
            })
            .rev()
            .collect();
        let eval = policy.evaluate(&StateVector::new(x.clone())?)?;
        let coords: Vec<String> = x.iter().map(f64::to_string).collect();
        writeln!(
            out,
            "{},{},{},{},{}",
            coords.join(","),
            eval.m1,
            eval.m2,
            eval.tau_prime,
            eval.tau_s
        )
        .expect("string write");
    }
    match &common.out {
        Some(dir) => {
            let dir = out_dir(Some(dir))?;
            fs::write(dir.join("triggers.csv"), out)?;
        }
        None => io::stdout().write_all(out.as_bytes())?,
    }
    Ok(())
}

fn cmd_verify(common: &Common, n_points: usize, force_margin: Option<f64>) -> CmdResult {
    let cfg = load(&common.config, common.seed, &common.overrides)?;
    let opts = VerifyOptions {
        n_points,
        force_margin,
        seed: cfg.seed,
    };
    let report = verify(&cfg, &opts)?;
    let text = report.to_toml()?;
    match &common.out {
        Some(dir) => fs::write(out_dir(Some(dir))?.join("verify.toml"), &text)?,
        None => print!("{text}"),
    }
    if report.passed {
        return Ok(());
    }
    let mut why = Vec::new();
    if let Some(f) = &report.sweep.first_failure {
        why.push(format!(
            "{} sweep points exceed the oracle hold, first at x_k = {:?} (tau_s {:e} > hold {:e})",
            report.sweep.failures, f.x_k, f.tau_s, f.oracle_hold
        ));
    }
    for b in report.bounds.iter().filter(|b| !b.ok) {
        why.push(format!("bound {} = {:e} below dense maximum {:e}", b.name, b.estimate, b.dense));
    }
    if let Some(a) = report.admissibility.filter(|a| !a.admissible) {
        why.push(format!("perturbation bound {:e} exceeds nu = {:e}", a.sampled_max, a.nu));
    }
    Err(Failure::Property(why.join("; ")))
}

fn cmd_compare(configs: &[PathBuf], out: Option<&Path>, seed: Option<u64>, overrides: &[String]) -> CmdResult {
    if configs.len() < 2 {
        return Err(Failure::Usage("compare needs at least two configs".into()));
    }
    let cfgs = configs
        .iter()
        .map(|p| load(p, seed, overrides))
        .collect::<Result<Vec<_>, _>>()?;
    let system = &cfgs[0].system.name;
    if let Some(other) = cfgs.iter().find(|c| &c.system.name != system) {
        return Err(Failure::Usage(format!(
            "configs describe different systems: {system} and {}",
            other.system.name
        )));
    }
    let base = out_dir(out)?;
    let summaries: Vec<Result<RunSummary, Failure>> = std::thread::scope(|s| {
        let handles: Vec<_> = cfgs
            .iter()
            .enumerate()
            .map(|(i, cfg)| {
                let dir = base.join(format!("run{i}"));
                s.spawn(move || {
                    fs::create_dir_all(&dir)?;
                    run(cfg, &dir)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("run thread")).collect()
    });
    let mut table = String::from("config,samples,duration,samples_per_s,mean_inter,min_inter,safe,delta_max\n");
    for (path, summary) in configs.iter().zip(summaries) {
        let summary = summary?;
        let st = &summary.stats;
        let safe = match &summary.monitors.safety {
            Some(v) if v.safe() => "yes",
            Some(_) => "no",
            None => "-",
        };
        let dmax = summary
            .bounds
            .as_ref()
            .map_or_else(|| "-".to_string(), |b| format!("{:e}", b.delta_max));
        let name = if summary.name.is_empty() {
            path.display().to_string()
        } else {
            summary.name.clone()
        };
        writeln!(
            table,
            "{name},{},{},{},{},{},{safe},{dmax}",
            st.samples,
            st.duration,
            st.samples as f64 / st.duration,
            st.mean_inter_sample,
            st.min_inter_sample
        )
        .expect("string write");
    }
    print!("{table}");
    if out.is_some() {
        fs::write(base.join("compare.csv"), &table)?;
    }
    Ok(())
}
