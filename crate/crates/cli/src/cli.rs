//! Command-line front end of the `gibbs` binary.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;
use gibbs_core::ConstantsProfile;

use crate::config::{parse_seeds, ExperimentConfig, GenSpec, InstanceSource, OracleSpec, Sweep, Task};
use crate::error::{HarnessError, EXIT_ASSERT, EXIT_OK, EXIT_USAGE};
use crate::report::{write_outputs, RunReport, VERSION};
use crate::run::run_experiment;

#[derive(Debug, Parser)]
#[command(name = "gibbs", version = VERSION, about = "Partition-ratio and count estimation experiments")]
pub struct Args {
    /// Task to run on every seed.
    #[arg(value_enum)]
    pub task: Task,
    /// Instance JSON (or a graph file for the counting applications).
    #[arg(long, conflicts_with = "gen", required_unless_present = "gen")]
    pub instance: Option<PathBuf>,
    /// Generator spec, e.g. `a`, `poly:m=2,q=8`, `family:kind=delta-pair`, `graph:K4`.
    #[arg(long)]
    pub gen: Option<String>,
    #[arg(long, default_value_t = 0.3)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.25)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    /// Seeds: `a..b` (inclusive), a comma list, or one number.
    #[arg(long, default_value = "1")]
    pub seeds: String,
    /// Constants profile.
    #[arg(long, env = "GIBBS_PROFILE", default_value = "desk")]
    pub profile: String,
    /// Output directory.
    #[arg(long, default_value = "gibbs-out")]
    pub out: PathBuf,
    /// Exit with status 2 when coverage or a per-seed check falls short.
    #[arg(long)]
    pub assert: bool,
    /// Seeds run concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// `exact`, `tv:<d>[:up|down|pair]`, `js[:<mixing constant>[:<tv target>]]` or `cmd:<program> <args>`.
    #[arg(long, default_value = "exact")]
    pub oracle: String,
    /// Sweep of a bench run, e.g. `q=2,4,8,16` or `eps=0.5,0.35,0.25`.
    #[arg(long)]
    pub sweep: Option<String>,
    /// Task a bench run measures.
    #[arg(long, value_enum, default_value = "ratio-all")]
    pub bench_task: Task,
}

impl Args {
    pub fn to_config(&self) -> Result<ExperimentConfig, HarnessError> {
        let source = match (&self.instance, &self.gen) {
            (Some(p), None) => InstanceSource::File(p.clone()),
            (None, Some(g)) => InstanceSource::Gen(g.parse::<GenSpec>()?),
            _ => return Err(HarnessError::Usage("give exactly one of --instance and --gen".into())),
        };
        let profile = ConstantsProfile::by_name(&self.profile)
            .ok_or_else(|| HarnessError::Usage(format!("unknown profile {:?} (desk | paper)", self.profile)))?;
        let cfg = ExperimentConfig {
            task: self.task,
            source,
            eps: self.eps,
            gamma: self.gamma,
            delta: self.delta,
            seeds: parse_seeds(&self.seeds)?,
            profile,
            oracle: self.oracle.parse::<OracleSpec>()?,
            jobs: self.jobs,
            bench_task: self.bench_task,
            sweep: self.sweep.as_deref().map(str::parse::<Sweep>).transpose()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn summary(report: &RunReport) -> String {
    let c = &report.coverage;
    let mut line = format!(
        "{}: {}/{} ok (rate {:.3}, threshold {:.3}), mean cost {:.0}",
        report.config.task.name(),
        c.successes,
        c.runs,
        c.rate,
        c.threshold,
        report.cost.mean
    );
    if let Some(s) = &report.scaling {
        line.push_str(&format!(
            ", slope {:.3} [{:.3}, {:.3}] vs {}, monotone {}",
            s.slope, s.slope_ci.0, s.slope_ci.1, s.x_label, s.monotone
        ));
    }
    line
}

/// Parses `args`, runs the experiment and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = args.to_config().and_then(|cfg| {
        let (report, tables) = run_experiment(&cfg)?;
        write_outputs(&args.out, &report, &tables)?;
        Ok(report)
    });
    match result {
        Ok(report) => {
            println!("{}", summary(&report));
            if args.assert && !report.passes() {
                eprintln!("assertion failed: see {}", args.out.join("report.json").display());
                EXIT_ASSERT
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("gibbs: {e}");
            e.exit_code()
        }
    }
}
