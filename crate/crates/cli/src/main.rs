use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use monofact_core::bounds::{
    random_explicit_world, verify_lemma_meat_exhaustive, verify_tv_forms, MAX_EXHAUSTIVE_UNIVERSE,
};
use monofact_core::harness::{
    run_gt_concentration, run_theorem_main, run_upper_bound_check, ExperimentConfig,
};
use monofact_core::io::{
    parse_config, read_aggregate, read_reliability_csv, render_report, run_to_dir,
    verify_run_dir, AGGREGATE_FILE, RELIABILITY_FILE,
};
use monofact_core::stats::EventFrequency;
use monofact_core::{Error, SeededRng};

const EXIT_FAIL: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "monofact", version, about = "Hallucination lower-bound experiments on simulated factoid worlds")]
struct Cli {
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true, env = "MONOFACT_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full experiment and write a self-describing run directory.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "monofact-run")]
        out: PathBuf,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Monte Carlo check of the Good-Turing concentration radii on one
    /// world drawn from the config.
    GtCheck { config: PathBuf },
    /// Hallucination and calibration guarantee of the monofact memorizer.
    UpperBound { config: PathBuf },
    /// Exhaustive partition-lemma and total-variation sweeps.
    BruteForce {
        #[arg(long, default_value_t = 5)]
        max_universe: usize,
        #[arg(long, default_value_t = 10)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Main theorem by posterior Monte Carlo; `trials` sets the number of
    /// posterior draws per probe.
    ThmMain { config: PathBuf },
    /// Print the tables of a finished run directory.
    Report { run_dir: PathBuf },
}

/// Usage, config or I/O problem; reported with exit code 2.
struct Failure(String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(e.to_string())
    }
}

type Outcome = Result<bool, Failure>;

fn status(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn show_frequency(name: &str, f: &EventFrequency) {
    println!(
        "{name:<28} {}/{} = {:.4}  95% CI [{:.4}, {:.4}]  target {:?} {}  {}",
        f.successes,
        f.trials,
        f.frequency,
        f.ci_low,
        f.ci_high,
        f.direction,
        f.threshold,
        status(f.pass)
    );
}

fn load(path: &Path) -> Result<ExperimentConfig, Failure> {
    Ok(parse_config(path)?)
}

fn cmd_run(config: &Path, out: &Path, seed: Option<u64>) -> Outcome {
    let mut cfg = load(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let (_, output) = run_to_dir(out, &cfg)?;
    print!("{}", render_report(&output.aggregate));
    println!("wrote {}", out.display());
    Ok(output.aggregate.pass)
}

fn cmd_gt_check(config: &Path) -> Outcome {
    let cfg = load(config)?;
    let world = cfg.world.sample_world(&mut SeededRng::child(cfg.seed, u64::MAX))?;
    let r = run_gt_concentration(world.p(), cfg.n, cfg.bound.delta, cfg.trials, cfg.seed)?;
    println!(
        "n {}  delta {}  two-sided radius {:.6}  one-sided radius {:.6}",
        r.n, r.delta, r.two_sided_radius, r.one_sided_radius
    );
    show_frequency("two-sided violations", &r.two_sided);
    show_frequency("one-sided violations", &r.one_sided);
    let s = &r.squash;
    println!(
        "{:<28} mean(GT) - mean(M) = {:.3e} in [{:.3e}, {:.3e}]  {}",
        "squash",
        s.mean_difference,
        s.lower,
        s.upper,
        status(s.pass)
    );
    println!(
        "{:<28} {:.3e} (<= 1/n)",
        "max |MF - GT|", r.max_bottom_discrepancy
    );
    println!("overall: {}", status(r.pass));
    Ok(r.pass)
}

fn cmd_upper_bound(config: &Path) -> Outcome {
    let cfg = load(config)?;
    let r = run_upper_bound_check(&cfg.world, cfg.n, cfg.bound.delta, cfg.trials, cfg.seed)?;
    println!("calibration radius {:.6}", r.radius);
    show_frequency("g(H) <= MF", &r.certainty);
    show_frequency("Mc_inf <= radius", &r.calibration);
    println!("overall: {}", status(r.pass));
    Ok(r.pass)
}

fn cmd_brute_force(max_universe: usize, instances: usize, seed: u64) -> Outcome {
    if !(2..=MAX_EXHAUSTIVE_UNIVERSE).contains(&max_universe) {
        return Err(Failure(format!(
            "--max-universe must lie in 2..={MAX_EXHAUSTIVE_UNIVERSE}, got {max_universe}"
        )));
    }
    if instances == 0 {
        return Err(Failure("--instances must be at least 1".into()));
    }
    let mut violations = 0;
    let mut checks = 0;
    for size in 2..=max_universe {
        let world = random_explicit_world(size, instances, seed.wrapping_add(size as u64))?;
        let r = verify_lemma_meat_exhaustive(&world, 1e-9)?;
        println!(
            "|Y| = {size}: {} partitions x {} subsets, {} checks, {} violations",
            r.partitions,
            r.subsets,
            r.checks,
            r.violations.len()
        );
        for v in r.violations.iter().take(5) {
            println!("  violation: {v:?}");
        }
        violations += r.violations.len();
        checks += r.checks;
    }
    let tv = verify_tv_forms(max_universe.max(12), 40, seed)?;
    let tv_ok = tv.max_disagreement <= 1e-12;
    println!(
        "TV forms: {} pairs, max disagreement {:.3e}  {}",
        tv.pairs,
        tv.max_disagreement,
        status(tv_ok)
    );
    println!("{checks} checks, {violations} violations");
    Ok(violations == 0 && tv_ok)
}

fn cmd_thm_main(config: &Path) -> Outcome {
    let cfg = load(config)?;
    let b = &cfg.bound;
    let r = run_theorem_main(&cfg.world, cfg.n, b.b, b.epsilon, cfg.trials, cfg.seed)?;
    println!("|O| = {}  |U| = {}", r.observed, r.unobserved);
    println!(
        "posterior marginals: expected {:.6}, max |z| {:.3} (limit {:.3})  {}",
        r.marginals.expected,
        r.marginals.max_abs_z,
        r.marginals.z_limit,
        status(r.marginals.pass)
    );
    for c in &r.probes {
        println!(
            "{:<48} lhs {:.5} +- {:.5}  rhs {:.5}  {}",
            c.label,
            c.lhs_mean,
            c.lhs_stderr,
            c.rhs_exact,
            status(c.pass)
        );
    }
    println!("overall: {}", status(r.pass));
    Ok(r.pass)
}

fn cmd_report(run_dir: &Path) -> Outcome {
    let (manifest, _) = verify_run_dir(run_dir)?;
    let aggregate = read_aggregate(&run_dir.join(AGGREGATE_FILE))?;
    println!(
        "run {}  tool {}  seed {}  config sha256 {}",
        run_dir.display(),
        manifest.tool_version,
        manifest.master_seed,
        manifest.config_sha256
    );
    print!("{}", render_report(&aggregate));
    let rows = read_reliability_csv(&run_dir.join(RELIABILITY_FILE))?;
    println!("\nreliability (trial 0)");
    println!("{:>14} {:>12} {:>12} {:>10}", "bin_value", "g_mass", "p_mass", "bin_size");
    for r in rows {
        println!(
            "{:>14.6e} {:>12.6} {:>12.6} {:>10}",
            r.bin_value, r.g_mass, r.p_mass, r.bin_size
        );
    }
    Ok(aggregate.pass)
}

fn dispatch(cli: Cli) -> Outcome {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure(e.to_string()))?;
    }
    match cli.command {
        Command::Run { config, out, seed } => cmd_run(&config, &out, seed),
        Command::GtCheck { config } => cmd_gt_check(&config),
        Command::UpperBound { config } => cmd_upper_bound(&config),
        Command::BruteForce {
            max_universe,
            instances,
            seed,
        } => cmd_brute_force(max_universe, instances, seed),
        Command::ThmMain { config } => cmd_thm_main(&config),
        Command::Report { run_dir } => cmd_report(&run_dir),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAIL),
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
