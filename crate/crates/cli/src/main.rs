//! `ks-lab`: command-line front end of the Keller–Segel laboratory.
//!
//! Exit codes: 0 on success, 2 on configuration or input errors, 3 on
//! numerical failures. `KS_LAB_OUT` replaces the default output directory
//! (an explicit `--out` still wins).

use std::fs;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kslab::config::ConfigDoc;
use kslab::criteria::{self, Case, CertificateSearch, MorreySearch};
use kslab::dynamics::{self, Verdict};
use kslab::field::{make_gaussian, GridSpec, Snapshot};
use kslab::kernel;
use kslab::mild::{self, WeightedNorm};
use kslab::moments::{self, BoundConstants};
use kslab::sweep::{self, ExperimentPlan};
use kslab::Error;

const DEFAULT_OUT: &str = "ks-lab-out";

#[derive(Parser)]
#[command(name = "ks-lab", version, about = "Keller-Segel chemotaxis laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation from a config file.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the cross-product sweep described by the `sweep.*` lines of a config.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `sweep.workers`.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Evaluate the blowup criteria and the Morrey estimate for initial data.
    Criteria(CriteriaArgs),
    /// Compare measured growth of w_R with the lower bound, from a diagnostics CSV.
    Moments(MomentsArgs),
    /// Tabulate g_gamma, the radial kernel gradient and its one-sided bound.
    Kernels(KernelsArgs),
    /// Picard iteration for Gaussian data and comparison with the time stepper.
    Picard(PicardArgs),
}

#[derive(Args)]
struct CriteriaArgs {
    /// Config file providing grid, alpha, gamma and the initial data.
    #[arg(long, conflicts_with = "snapshot")]
    config: Option<PathBuf>,
    /// Snapshot file (KSF1) with the initial density.
    #[arg(long, requires = "alpha")]
    snapshot: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
}

#[derive(Args)]
struct MomentsArgs {
    /// Diagnostics CSV written by `simulate`.
    diagnostics: PathBuf,
    #[arg(long, default_value_t = 0)]
    probe: usize,
    #[arg(long)]
    radius: f64,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value_t = 2.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    /// Output CSV (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct KernelsArgs {
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 1.0, 10.0])]
    gammas: Vec<f64>,
    #[arg(long, default_value_t = 0.01)]
    r_min: f64,
    #[arg(long, default_value_t = 10.0)]
    r_max: f64,
    #[arg(long, default_value_t = 200)]
    count: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PicardArgs {
    #[arg(long, default_value_t = 0.1)]
    mass: f64,
    #[arg(long, default_value_t = 0.5)]
    width: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1.5)]
    p: f64,
    #[arg(long, default_value_t = 1.0)]
    t_max: f64,
    #[arg(long, default_value_t = 128)]
    n: usize,
    #[arg(long, default_value_t = 10.0 * std::f64::consts::PI)]
    box_length: f64,
    #[arg(long, default_value_t = 30)]
    n_max: usize,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_numerical() { 3 } else { 2 };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Error::from(e).into()
    }
}

fn output_dir(flag: Option<PathBuf>, from_config: Option<&String>) -> PathBuf {
    flag.or_else(|| std::env::var_os("KS_LAB_OUT").map(PathBuf::from))
        .or_else(|| from_config.map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn open_out(path: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            Box::new(BufWriter::new(fs::File::create(p)?))
        }
        None => Box::new(io::stdout().lock()),
    })
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize")
}

fn simulate(config: &Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let doc = ConfigDoc::load(config)?;
    let exp = doc.experiment()?;
    let u0 = exp.initial.build(exp.sim.grid)?;
    let dir = output_dir(out, doc.sweep_control.get("output"));
    fs::create_dir_all(&dir)?;
    let outcome = dynamics::run(&exp.sim, &u0)?;
    dynamics::write_diagnostics(
        &outcome,
        BufWriter::new(fs::File::create(dir.join("diagnostics.csv"))?),
    )?;
    Snapshot {
        name: "u_final".into(),
        t: outcome.final_state.t,
        field: outcome.final_state.u.clone(),
    }
    .write_to(BufWriter::new(fs::File::create(dir.join("final.ksf"))?))?;
    let summary = serde_json::json!({
        "config_hash": doc.hash(),
        "verdict": outcome.verdict,
        "steps": outcome.steps,
        "initial_mass": outcome.initial_mass,
        "final_mass_drift": outcome.final_mass_drift(),
        "resolution_lost_at": outcome.resolution_lost_at,
        "tail_violation_at": outcome.tail_violation_at,
        "max_mass_drift_resolved": outcome.max_mass_drift,
        "min_negativity_resolved": outcome.min_negativity,
    });
    fs::write(dir.join("summary.json"), json(&summary))?;
    match &outcome.verdict {
        Verdict::ReachedTEnd => println!("ReachedTEnd at t = {}", outcome.final_state.t),
        Verdict::BlowupDetected { t_star } => println!("BlowupDetected at t* = {t_star}"),
        Verdict::Unresolved { t, reason } => println!("Unresolved from t = {t}: {reason}"),
    }
    println!("outputs in {}", dir.display());
    Ok(())
}

fn run_sweep(config: &Path, out: Option<PathBuf>, workers: Option<usize>) -> Result<(), Failure> {
    let doc = ConfigDoc::load(config)?;
    let dir = output_dir(out, doc.sweep_control.get("output"));
    let mut plan = ExperimentPlan::from_doc(doc, Some(dir))?;
    if let Some(w) = workers {
        plan.workers = w.max(1);
    }
    let records = sweep::run_sweep(&plan)?;
    print!("{}", sweep::report(&records, &plan.axes).render());
    println!("outputs in {}", plan.output_dir.display());
    Ok(())
}

fn run_criteria(args: CriteriaArgs) -> Result<(), Failure> {
    let (u0, alpha, gamma) = if let Some(path) = &args.config {
        let exp = ConfigDoc::load(path)?.experiment()?;
        (
            exp.initial.build(exp.sim.grid)?,
            exp.sim.alpha,
            exp.sim.gamma,
        )
    } else if let Some(path) = &args.snapshot {
        let snap = Snapshot::read_from(BufReader::new(fs::File::open(path)?))?;
        let alpha = args
            .alpha
            .ok_or_else(|| Error::Config("--alpha is required with --snapshot".into()))?;
        (snap.field, alpha, args.gamma)
    } else {
        return Err(Error::Config("pass --config or --snapshot".into()).into());
    };
    let grid = *u0.grid();
    let morrey = criteria::morrey_norm(&u0, 2.0 / alpha, &MorreySearch::default_for(&grid))?;
    let mut report = serde_json::json!({
        "alpha": alpha,
        "gamma": gamma,
        "mass": u0.total_mass(),
        "morrey": morrey,
    });
    if alpha == 2.0 && gamma == 0.0 {
        report["case"] = "i".into();
        report["blowup_by_mass"] = criteria::check_case_i(&u0)?.into();
    } else {
        let case = if alpha == 2.0 { Case::Ii } else { Case::Iii };
        let best = criteria::best_certificate(
            &u0,
            alpha,
            gamma,
            case,
            &CertificateSearch::default_for(&grid),
        )?;
        report["case"] = serde_json::to_value(case).expect("case serializes");
        report["certificate_found"] = best.holds().into();
        report[if best.holds() {
            "certificate"
        } else {
            "best_failed"
        }] = serde_json::to_value(&best).expect("certificate serializes");
    }
    println!("{}", json(&report));
    Ok(())
}

fn run_moments(args: MomentsArgs) -> Result<(), Failure> {
    let constants = BoundConstants::new(args.alpha, args.gamma, args.radius, args.epsilon)?;
    let reader = BufReader::new(fs::File::open(&args.diagnostics)?);
    let rows = moments::shadow_from_diagnostics(reader, args.probe, &constants)?;
    moments::write_shadow(&rows, open_out(&args.out)?)?;
    Ok(())
}

fn run_kernels(args: KernelsArgs) -> Result<(), Failure> {
    if !(args.r_min > 0.0 && args.r_max > args.r_min && args.count >= 2) {
        return Err(Error::Config("need 0 < r_min < r_max and count >= 2".into()).into());
    }
    let radii = criteria::log_space(args.r_min, args.r_max, args.count);
    let rows = kernel::kernel_table(&radii, &args.gammas)?;
    kernel::write_kernel_table(&rows, open_out(&args.out)?)?;
    Ok(())
}

fn run_picard(args: PicardArgs) -> Result<(), Failure> {
    let grid = GridSpec::new(args.n, args.box_length)?;
    let u0 = make_gaussian(grid, args.mass, [0.0, 0.0], args.width)?;
    let norm = WeightedNorm::local(args.p, args.t_max)?;
    let nodes = mild::default_nodes(args.t_max)?;
    let report = mild::picard_iterate(&u0, args.gamma, &norm, &nodes, args.n_max, args.tol)?;
    let mut out = open_out(&args.out)?;
    writeln!(out, "n,triple_norm,increment,ratio")?;
    for (n, norm_n) in report.iterate_norms.iter().enumerate() {
        let inc = n.checked_sub(1).and_then(|k| report.increment_norms.get(k));
        let ratio = n.checked_sub(2).and_then(|k| report.ratios.get(k));
        let fmt = |v: Option<&f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_default();
        writeln!(out, "{n},{norm_n:.17e},{},{}", fmt(inc), fmt(ratio))?;
    }
    out.flush()?;
    drop(out);
    let mut sim = dynamics::SimConfig::new(2.0, args.gamma, grid);
    sim.t_end = args.t_max;
    let outcome = dynamics::run(&sim, &u0)?;
    let diff = outcome.final_state.u.sub(report.limit.last())?;
    let rel = diff.lp_norm(2.0)? / outcome.final_state.u.lp_norm(2.0)?.max(f64::MIN_POSITIVE);
    eprintln!(
        "converged: {}, diverged: {}, iterations: {}, max ratio: {:.3e}",
        report.converged,
        report.diverged,
        report.iterations(),
        report.max_ratio()
    );
    eprintln!(
        "time stepper verdict: {}, relative L2 difference at t = {}: {rel:.3e}",
        outcome.verdict.label(),
        args.t_max
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, out } => simulate(&config, out),
        Command::Sweep {
            config,
            out,
            workers,
        } => run_sweep(&config, out, workers),
        Command::Criteria(args) => run_criteria(args),
        Command::Moments(args) => run_moments(args),
        Command::Kernels(args) => run_kernels(args),
        Command::Picard(args) => run_picard(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
