//! Command-line runner: load a scenario, run the Monte-Carlo experiment,
//! write the per-step CSV and the summary JSON, print a summary table.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use radar_crb::config::{self, ScenarioConfig};
use radar_crb::harness::{self, ExperimentOutput};
use radar_crb::Result;

#[derive(Parser, Debug)]
#[command(
    name = "radar-crb",
    about = "Closed-loop transmitter-receiver selection for distributed MIMO radar tracking",
    version
)]
struct Args {
    /// Bundled scenario name (scenario1 | scenario2 | scenario3) or a path
    /// to a scenario TOML file.
    #[arg(long, short = 's')]
    scenario: String,

    /// Monte-Carlo trial count (overrides the scenario's `trials`).
    #[arg(long)]
    mc: Option<usize>,

    /// Time horizon T (overrides the scenario's `horizon`).
    #[arg(long)]
    horizon: Option<usize>,

    /// Master seed (overrides the scenario's `master_seed`).
    #[arg(long)]
    seed: Option<u64>,

    /// Worker thread count (default: available parallelism).
    #[arg(long)]
    workers: Option<usize>,

    /// Output directory for the CSV/JSON artifacts.
    #[arg(long, env = "RADAR_CRB_OUTPUT_DIR", default_value = "out")]
    output_dir: PathBuf,

    /// Comma-separated subset of policy names to run (default: all).
    #[arg(long, value_delimiter = ',')]
    policies: Option<Vec<String>>,

    /// Directory for per-trial debug CSVs (step rows and raw measurements;
    /// intended for small --mc values).
    #[arg(long)]
    debug_dir: Option<PathBuf>,

    /// Print per-policy progress detail.
    #[arg(short, long)]
    verbose: bool,
}

fn load_config(arg: &str) -> Result<ScenarioConfig> {
    match config::bundled(arg) {
        Some(text) => config::parse_scenario(text),
        None => config::load_scenario(Path::new(arg)),
    }
}

fn print_summary(output: &ExperimentOutput, verbose: bool) {
    let s = &output.summary;
    println!(
        "scenario {}  (T = {}, M_c = {}, seed = {})",
        s.scenario, s.horizon, s.trials, s.master_seed
    );
    let k_count = output.weights.len();
    print!("{:<12} {:>10} {:>12} {:>8}", "policy", "ARMSE", "regret", "ASR");
    if verbose && k_count > 1 {
        for k in 1..=k_count {
            print!(" {:>12}", format!("ARMSE(t{k})"));
        }
    }
    println!();
    for p in &s.policies {
        print!("{:<12} {:>10.4} {:>12.2} {:>8.4}", p.name, p.armse, p.total_regret, p.asr);
        if verbose && k_count > 1 {
            for a in &p.armse_per_target {
                print!(" {a:>12.4}");
            }
        }
        println!();
    }
    println!("wall clock: {:.1} s", s.wall_clock_secs);
}

fn run(args: &Args) -> Result<()> {
    let mut config = load_config(&args.scenario)?;
    if let Some(mc) = args.mc {
        config.trials = mc;
    }
    if let Some(t) = args.horizon {
        config.horizon = t;
    }
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    let scenario = config.build()?;
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    let keep_records = args.debug_dir.is_some();

    let output = harness::run_experiment(
        &scenario,
        args.policies.as_deref(),
        scenario.trials,
        scenario.master_seed,
        workers,
        keep_records,
    )?;

    std::fs::create_dir_all(&args.output_dir)?;
    let csv_path = args.output_dir.join(format!("{}_steps.csv", scenario.name));
    let mut csv = std::io::BufWriter::new(std::fs::File::create(&csv_path)?);
    harness::write_steps_csv(&mut csv, &output)?;
    let json_path = args.output_dir.join(format!("{}_summary.json", scenario.name));
    let mut json = std::io::BufWriter::new(std::fs::File::create(&json_path)?);
    harness::write_summary_json(&mut json, &output.summary)?;

    if let Some(debug_dir) = &args.debug_dir {
        std::fs::create_dir_all(debug_dir)?;
        let mut steps =
            std::io::BufWriter::new(std::fs::File::create(debug_dir.join(format!("{}_trials.csv", scenario.name)))?);
        harness::write_trial_debug_csv(&mut steps, &output)?;
        let mut meas = std::io::BufWriter::new(
            std::fs::File::create(debug_dir.join(format!("{}_measurements.csv", scenario.name)))?,
        );
        harness::write_measurement_debug_csv(&mut meas, &output)?;
    }

    print_summary(&output, args.verbose);
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
