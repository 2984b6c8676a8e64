use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pegx::config::Config;
use pegx::harness::{self, EvalGrid, ScenarioSpec};
use pegx::metrics::SummaryStats;
use pegx::report::{self, ResultFile};
use pegx::train::CurvePoint;
use pegx::Error;

const ENV_CONFIG: &str = "PEGX_CONFIG";

#[derive(Parser, Debug)]
#[command(
    name = "pegx",
    version,
    about = "Train, transfer and fine-tune peg-in-hole insertion policies across two simulated robots",
    after_help = "Any config key can be overridden with a long flag of the same name, e.g. \
                  `--sac.batch_size 64` or `--embodiment.B.tau 0.06`.\n\
                  PEGX_CONFIG names a config file used when --config is absent."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Config file (key = value lines)
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; nothing is written outside it
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a policy from scratch on one embodiment
    Train {
        #[arg(long, value_parser = ["A", "B"])]
        embodiment: String,
        /// Agent steps (default: the embodiment's budget in the config)
        #[arg(long)]
        steps: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a checkpoint on the fixed start grid
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, value_parser = ["A", "B"])]
        embodiment: String,
        /// Number of episodes (default: eval.episodes)
        #[arg(long)]
        episodes: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Continue training a checkpoint on a (possibly different) embodiment
    Finetune {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, value_parser = ["A", "B"])]
        embodiment: String,
        /// Agent steps (default: finetune.steps)
        #[arg(long)]
        steps: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Run one of the five transfer scenarios
    Scenario {
        /// 1: A scratch, 2: B scratch, 3: A zero-shot on B, 4: B zero-shot on A, 5: A fine-tuned on B
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=5))]
        id: u32,
        #[command(flatten)]
        common: Common,
    },
    /// Summarize records and curve CSVs into a table and SVG charts
    Report {
        /// Glob of input CSV files (repeatable)
        #[arg(long = "in", required = true)]
        inputs: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

/// Splits `--dotted.key value` config overrides from the rest of argv.
fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Vec<(String, String)>), Failure> {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let Some(flag) = a.strip_prefix("--").filter(|f| f.contains('.')) else {
            rest.push(a);
            continue;
        };
        let (key, inline) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (flag.to_string(), None),
        };
        if !Config::is_key(&key) {
            return Err(Failure::Usage(format!("unknown option --{key}")));
        }
        let value = match inline.or_else(|| it.next()) {
            Some(v) => v,
            None => return Err(Failure::Usage(format!("--{key} needs a value"))),
        };
        overrides.push((key, value));
    }
    Ok((rest, overrides))
}

fn build_config(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Config, Failure> {
    let mut config = Config::default();
    let from_env = std::env::var_os(ENV_CONFIG).map(PathBuf::from);
    if let Some(path) = file.map(Path::to_path_buf).or(from_env) {
        config.apply_file(&path)?;
    }
    for (k, v) in overrides {
        config.set(k, v).map_err(|e| Failure::Usage(e.to_string()))?;
    }
    config.validate()?;
    Ok(config)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    std::fs::write(dir.join(name), contents)?;
    Ok(())
}

fn prepare_out(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn write_summary(dir: &Path, id: u32, stats: SummaryStats) -> Result<(), Failure> {
    let rows = std::iter::once((id, stats)).collect();
    write(dir, "summary.csv", &report::summary_csv(&rows)?)
}

fn print_stats(label: &str, s: &SummaryStats) {
    println!(
        "{label}: success rate {:.2}% over {} episodes, average steps {:.2}",
        s.success_rate_percent, s.episodes, s.avg_steps
    );
}

fn run(cli: Cli, overrides: &[(String, String)]) -> Result<(), Failure> {
    match cli.command {
        Command::Train { embodiment, steps, common } => {
            let config = build_config(common.config.as_deref(), overrides)?;
            let emb = config.embodiment(&embodiment)?.clone();
            let steps = steps.unwrap_or(if embodiment == "A" {
                config.budgets.train_steps_a
            } else {
                config.budgets.train_steps_b
            });
            prepare_out(&common.out)?;
            let (ckpt, rep) = harness::train_scratch(&config, &emb, steps, common.seed)?;
            ckpt.save(&common.out.join("checkpoint.json"))?;
            write(&common.out, "curve.csv", &report::curve_csv(&rep.curve)?)?;
            write(&common.out, "config.txt", &config.to_text())?;
            println!("trained {steps} steps on {embodiment}; {} episodes", rep.episodes.len());
        }
        Command::Eval { ckpt, embodiment, episodes, common } => {
            let config = build_config(common.config.as_deref(), overrides)?;
            let emb = config.embodiment(&embodiment)?.clone();
            let ck = harness::load_prerequisite(&ckpt)?;
            let grid = EvalGrid::new(&config.task, episodes.unwrap_or(config.eval_episodes), common.seed);
            if grid.is_empty() {
                return Err(Failure::Usage("--episodes must be positive".into()));
            }
            prepare_out(&common.out)?;
            let records = harness::evaluate(&ck, &config, &emb, &grid, 0)?;
            let stats = SummaryStats::from_records(&records)?;
            write(&common.out, "records.csv", &report::records_csv(&records)?)?;
            write_summary(&common.out, 0, stats)?;
            print_stats(&format!("{} on {embodiment}", ck.embodiment), &stats);
        }
        Command::Finetune { ckpt, embodiment, steps, common } => {
            let config = build_config(common.config.as_deref(), overrides)?;
            let emb = config.embodiment(&embodiment)?.clone();
            let ck = harness::load_prerequisite(&ckpt)?;
            let steps = steps.unwrap_or(config.budgets.finetune_steps);
            prepare_out(&common.out)?;
            let (tuned, rep) = harness::finetune(&ck, &config, &emb, steps, common.seed)?;
            tuned.save(&common.out.join("checkpoint.json"))?;
            write(&common.out, "curve.csv", &report::curve_csv(&rep.curve)?)?;
            write(&common.out, "config.txt", &config.to_text())?;
            println!("fine-tuned {} policy on {embodiment} for {steps} steps", ck.embodiment);
        }
        Command::Scenario { id, common } => {
            let config = build_config(common.config.as_deref(), overrides)?;
            let spec = ScenarioSpec::from_id(id, &config)?;
            if let Some(p) = spec.prerequisite(&config, &common.out) {
                if !p.is_file() {
                    return Err(Error::Dependency(p).into());
                }
            }
            prepare_out(&common.out)?;
            let outcome = harness::run_scenario(&spec, &config, common.seed, &common.out)?;
            write(&common.out, "records.csv", &report::records_csv(&outcome.records)?)?;
            write_summary(&common.out, id, outcome.summary)?;
            if let Some(curve) = &outcome.curve {
                write(&common.out, "curve.csv", &report::curve_csv(curve)?)?;
            }
            if let Some(ck) = &outcome.checkpoint {
                ck.save(&common.out.join("checkpoint.json"))?;
            }
            write(&common.out, "config.txt", &config.to_text())?;
            print_stats(&format!("scenario {id} ({})", spec.mode.as_str()), &outcome.summary);
        }
        Command::Report { inputs, out } => report_command(&inputs, &out)?,
    }
    Ok(())
}

fn report_command(patterns: &[String], out: &Path) -> Result<(), Failure> {
    let mut files = Vec::new();
    for pat in patterns {
        let paths = glob::glob(pat).map_err(|e| Failure::Usage(format!("bad glob {pat:?}: {e}")))?;
        for p in paths {
            files.push(p.map_err(|e| Failure::Runtime(std::io::Error::from(e).into()))?);
        }
    }
    files.sort();
    files.dedup();
    let mut records = Vec::new();
    let mut curves: Vec<(String, Vec<CurvePoint>)> = Vec::new();
    for f in files.iter().filter(|f| f.is_file()) {
        match report::read_result_csv(f)? {
            ResultFile::Records(r) => records.extend(r),
            ResultFile::Curve(c) => curves.push((f.display().to_string(), c)),
            ResultFile::Summary => {}
        }
    }
    if records.is_empty() {
        return Err(Failure::Usage(format!("no episode records matched {patterns:?}")));
    }
    let table = report::summarize(&records)?;
    prepare_out(out)?;
    write(out, "summary.csv", &report::summary_csv(&table)?)?;
    write(out, "summary.svg", &report::bar_chart_svg(&table))?;
    if !curves.is_empty() {
        write(out, "curves.svg", &report::curve_chart_svg(&curves))?;
    }
    println!("{:>8}  {:>12}  {:>9}  {:>8}", "scenario", "success_rate", "avg_steps", "episodes");
    for (id, s) in &table {
        println!("{id:>8}  {:>12.2}  {:>9.2}  {:>8}", s.success_rate_percent, s.avg_steps, s.episodes);
    }
    Ok(())
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let parsed = split_overrides(args).and_then(|(rest, overrides)| match Cli::try_parse_from(rest) {
        Ok(cli) => Ok((cli, overrides)),
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            std::process::exit(0);
        }
        Err(e) => Err(Failure::Usage(e.render().to_string())),
    });
    let result = parsed.and_then(|(cli, overrides)| run(cli, &overrides));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("{}", msg.trim_end());
            eprintln!("usage: pegx <train|eval|finetune|scenario|report> [options]; see `pegx --help`");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
