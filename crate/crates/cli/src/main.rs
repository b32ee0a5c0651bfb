//! `tmdc`: run, compare, sweep and validate flight-control scenarios.
//!
//! Exit codes: 0 on success, 2 for invalid input (bad flags, missing or
//! malformed scenario files, unwritable output), 3 when a flight aborts.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tmdc_core::control::Variant;
use tmdc_core::scenario::{
    bundled, compare_variants, run_scenario, sweep, write_comparison_csv, write_orderings_csv, ParamRange, RunRecord,
    Scenario, ScenarioError, SweepAxis, SweepRequest, SweepStage, DEFAULT_PRECISION,
};

const EXIT_INVALID: u8 = 2;
const EXIT_ABORT: u8 = 3;

#[derive(Parser)]
#[command(name = "tmdc", version, about = "Quadrotor thrust-microstepping controller simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for CSV output (created if missing).
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Override the scenario duration, seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Significant digits of floats in CSV output.
    #[arg(long, default_value_t = DEFAULT_PRECISION, value_parser = clap::value_parser!(usize))]
    csv_precision: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write its trace and metrics.
    Run {
        scenario: String,
        #[command(flatten)]
        common: Common,
        /// Controller variant (tmaf+dmc, tmaf+gt, da+gt, mi+gt).
        #[arg(long)]
        variant: Option<Variant>,
    },
    /// Run scenarios under several variants and tabulate the results.
    Compare {
        #[arg(required = true)]
        scenarios: Vec<String>,
        #[command(flatten)]
        common: Common,
        /// Comma-separated variants; all four when omitted.
        #[arg(long, alias = "variant", value_delimiter = ',')]
        variants: Vec<Variant>,
    },
    /// Grid-search one tuning stage and print the best gains.
    Sweep {
        scenario: String,
        #[command(flatten)]
        common: Common,
        /// Tuning stage: tmaf, pid_v, pid_p or yaw (in that order).
        #[arg(long)]
        stage: SweepStage,
        /// Parameter range, `name=start:end:count` or `name=a,b,c`; repeatable.
        #[arg(long = "range", required = true)]
        ranges: Vec<ParamRange>,
        /// Axes the gains apply to and are scored on: z or xy.
        #[arg(long, default_value = "z")]
        axis: SweepAxis,
        /// Controller variant used for the evaluation runs.
        #[arg(long)]
        variant: Option<Variant>,
        /// Rows shown in the printed ranking.
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Check scenario files without running them.
    Validate {
        #[arg(required = true)]
        scenarios: Vec<String>,
    },
    /// List bundled scenarios and the search path.
    List,
}

#[derive(Debug)]
enum Failure {
    Invalid(String),
    Abort(String),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        if e.is_abort() {
            Failure::Abort(e.to_string())
        } else {
            Failure::Invalid(e.to_string())
        }
    }
}

fn search_dirs() -> Vec<PathBuf> {
    std::env::var_os("TMDC_SCENARIO_PATH")
        .map(|v| std::env::split_paths(&v).filter(|p| !p.as_os_str().is_empty()).collect())
        .unwrap_or_default()
}

/// A file path, a name found on `TMDC_SCENARIO_PATH`, or a bundled name.
fn load(arg: &str) -> Result<Scenario, Failure> {
    let direct = Path::new(arg);
    let mut candidates = vec![direct.to_path_buf()];
    if direct.components().count() == 1 {
        for dir in search_dirs() {
            candidates.push(dir.join(arg));
            candidates.push(dir.join(format!("{arg}.scn")));
        }
    }
    if let Some(path) = candidates.iter().find(|p| p.is_file()) {
        let text = fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
        return Scenario::from_toml(&text).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())));
    }
    match bundled::source(arg) {
        Some(text) => Scenario::from_toml(text).map_err(Failure::from),
        None => Err(Failure::Invalid(format!("scenario '{arg}' not found (not a file, not on TMDC_SCENARIO_PATH, not bundled)"))),
    }
}

fn prepare(arg: &str, common: &Common) -> Result<Scenario, Failure> {
    let mut s = load(arg)?;
    if let Some(seed) = common.seed {
        s.seed = seed;
    }
    if let Some(d) = common.duration {
        s.duration = d;
    }
    s.validate()?;
    Ok(s)
}

fn output(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Invalid(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Invalid(format!("cannot write {}: {e}", path.display())))
}

fn written(r: std::io::Result<()>, what: &str) -> Result<(), Failure> {
    r.map_err(|e| Failure::Invalid(format!("writing {what}: {e}")))
}

fn write_trace(record: &RunRecord, common: &Common, name: &str) -> Result<(), Failure> {
    let file = format!("{name}_trace.csv");
    written(record.write_csv(output(&common.out, &file)?, common.csv_precision), &file)
}

fn cmd_run(arg: &str, common: &Common, variant: Option<Variant>) -> Result<(), Failure> {
    let mut s = prepare(arg, common)?;
    if let Some(v) = variant {
        s.variant = v;
    }
    match run_scenario(&s) {
        Ok(out) => {
            write_trace(&out.record, common, &s.name)?;
            let file = format!("{}_metrics.csv", s.name);
            written(out.metrics.write_csv(&out.record, output(&common.out, &file)?, common.csv_precision), &file)?;
            println!("{} ({}, seed {})", s.name, s.variant, s.seed);
            print!("{}", out.metrics.summary());
            Ok(())
        }
        Err(ScenarioError::Aborted { time, reason, record }) => {
            // keep the trace up to the fault for diagnosis
            write_trace(&record, common, &s.name)?;
            Err(Failure::Abort(format!("{} ({}): flight aborted at t = {time:.3} s: {reason}", s.name, s.variant)))
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_compare(args: &[String], common: &Common, variants: &[Variant]) -> Result<(), Failure> {
    let variants = if variants.is_empty() { Variant::ALL.to_vec() } else { variants.to_vec() };
    let scenarios = args.iter().map(|s| prepare(s, common)).collect::<Result<Vec<_>, _>>()?;
    let mut results = Vec::with_capacity(scenarios.len());
    for s in &scenarios {
        let c = compare_variants(s, &variants)?;
        print!("{}", c.to_text());
        results.push(c);
    }
    written(write_comparison_csv(&results, output(&common.out, "comparison.csv")?, common.csv_precision), "comparison.csv")?;
    written(write_orderings_csv(&results, output(&common.out, "orderings.csv")?, common.csv_precision), "orderings.csv")
}

fn cmd_sweep(arg: &str, common: &Common, request: SweepRequest, variant: Option<Variant>, top: usize) -> Result<(), Failure> {
    let mut s = prepare(arg, common)?;
    if let Some(v) = variant {
        s.variant = v;
    }
    let result = sweep(&s, &request)?;
    print!("{}", result.summary(top));
    let fragment = result.fragment();
    println!("\n# best gains\n{fragment}");
    let base = format!("{}_sweep_{}", s.name, request.stage);
    written(result.write_csv(output(&common.out, &format!("{base}.csv"))?, common.csv_precision), "sweep table")?;
    fs::write(common.out.join(format!("{base}.toml")), fragment).map_err(|e| Failure::Invalid(format!("writing gains fragment: {e}")))
}

fn cmd_validate(args: &[String]) -> Result<(), Failure> {
    let mut bad = 0;
    for arg in args {
        match load(arg) {
            Ok(s) => println!("{arg}: ok ({}, {} s, {} events)", s.name, s.duration, s.events.len()),
            Err(Failure::Invalid(msg)) | Err(Failure::Abort(msg)) => {
                eprintln!("{msg}");
                bad += 1;
            }
        }
    }
    if bad == 0 {
        Ok(())
    } else {
        Err(Failure::Invalid(format!("{bad} of {} scenario(s) invalid", args.len())))
    }
}

fn cmd_list() -> Result<(), Failure> {
    println!("bundled scenarios:");
    for name in bundled::names() {
        let s = bundled::load(name)?;
        println!("  {name:<20} {}", s.description);
    }
    let dirs = search_dirs();
    if !dirs.is_empty() {
        println!("search path (TMDC_SCENARIO_PATH):");
        for d in dirs {
            println!("  {}", d.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { scenario, common, variant } => cmd_run(&scenario, &common, variant),
        Command::Compare { scenarios, common, variants } => cmd_compare(&scenarios, &common, &variants),
        Command::Sweep {
            scenario,
            common,
            stage,
            ranges,
            axis,
            variant,
            top,
        } => cmd_sweep(&scenario, &common, SweepRequest { stage, axis, ranges }, variant, top),
        Command::Validate { scenarios } => cmd_validate(&scenarios),
        Command::List => cmd_list(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INVALID)
        }
        Err(Failure::Abort(msg)) => {
            eprintln!("abort: {msg}");
            ExitCode::from(EXIT_ABORT)
        }
    }
}
