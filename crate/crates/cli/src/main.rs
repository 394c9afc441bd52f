//! `deltacert` command-line front end.
//!
//! Exit codes: 0 when the analysis ran (the verdict is in the report),
//! 1 for usage or configuration errors, 2 for numeric failures.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use deltacert_core::config::GridConfig;
use deltacert_core::output::{sweep_csv, trajectory_csv};
use deltacert_core::report::{self, to_toml};
use deltacert_core::roa::point_cloud_csv;
use deltacert_core::Error;

#[derive(Parser)]
#[command(name = "deltacert", version, about = "Delta-dissipativity stability certificates for power grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Grid description (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Seed for randomized scans.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Conditions 1-3, assumption checks and the overall verdict.
    Certify(Common),
    /// Per-device dissipativity checks.
    VerifyDevice {
        #[command(flatten)]
        common: Common,
        /// Restrict to one bus (1-based).
        #[arg(long)]
        bus: Option<usize>,
    },
    /// Coupling condition and weights.
    VerifyCoupling(Common),
    /// Time-domain run from `[simulate]`.
    Simulate(Common),
    /// Critical storage level on the `[roa]` grid.
    Roa(Common),
    /// Load-scale continuation from `[sweep]`.
    Sweep(Common),
    /// Equilibria from the `[equilibria]` seeds.
    Equilibria(Common),
    /// Recover line impedance, load and generator convention from `[calibration]`.
    Calibrate(Common),
}

enum Failure {
    Usage(String),
    Numeric(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Usage(e.to_string()),
            other => Failure::Numeric(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Usage(format!("{}: {e}", path.display()))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| io_err(&path, e))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn load(common: &Common) -> Result<(GridConfig, String), Failure> {
    let text = fs::read_to_string(&common.config).map_err(|e| io_err(&common.config, e))?;
    let cfg =
        GridConfig::from_toml_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", common.config.display())))?;
    Ok((cfg, text))
}

fn common(cmd: &Command) -> &Common {
    match cmd {
        Command::Certify(c)
        | Command::VerifyCoupling(c)
        | Command::Simulate(c)
        | Command::Roa(c)
        | Command::Sweep(c)
        | Command::Equilibria(c)
        | Command::Calibrate(c) => c,
        Command::VerifyDevice { common, .. } => common,
    }
}

fn run(cmd: Command) -> Result<(), Failure> {
    let c = common(&cmd).clone();
    if c.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(c.threads)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    let (cfg, text) = load(&c)?;
    let out = &c.out;
    match cmd {
        Command::Certify(_) => {
            let rep = report::run_certify(&cfg, &text, c.seed)?;
            println!("{}", rep.verdict.statement);
            write(out, "report.toml", &to_toml(&rep)?)?;
        }
        Command::VerifyDevice { bus, .. } => {
            let bus = match bus {
                Some(0) => return Err(Failure::Usage("--bus is 1-based".into())),
                b => b.map(|b| b - 1),
            };
            #[derive(serde::Serialize)]
            struct Devices {
                devices: Vec<report::DeviceSummary>,
            }
            let devices = report::run_verify_device(&cfg, bus)?;
            for d in &devices {
                println!(
                    "bus {}: {} ({}/{} samples pass)",
                    d.bus,
                    if d.condition_met { "holds" } else { "fails" },
                    d.passed,
                    d.samples
                );
            }
            write(out, "devices.toml", &to_toml(&Devices { devices })?)?;
        }
        Command::VerifyCoupling(_) => {
            let cpl = report::run_verify_coupling(&cfg)?;
            println!(
                "coupling {}: lambda_max(K) = {:e}",
                if cpl.feasible { "feasible" } else { "infeasible" },
                cpl.lambda_max_k
            );
            write(out, "coupling.toml", &to_toml(&cpl)?)?;
        }
        Command::Simulate(_) => {
            let tr = report::run_simulate(&cfg)?;
            write(out, "trajectory.csv", &trajectory_csv(&tr))?;
            if let Some(e) = tr.error {
                return Err(Failure::Numeric(format!(
                    "simulation stopped at t = {}: {e}",
                    tr.times.last().copied().unwrap_or(0.0)
                )));
            }
        }
        Command::Roa(_) => {
            let (scan, summary) = report::run_roa(&cfg)?;
            write(out, "roa_points.csv", &point_cloud_csv(&scan))?;
            write(out, "roa.toml", &to_toml(&summary)?)?;
            match summary.l_bar {
                Some(l) => println!("critical level {l}"),
                None => return Err(Failure::Numeric(summary.error.unwrap_or_default())),
            }
        }
        Command::Sweep(_) => {
            let (res, summary) = report::run_sweep(&cfg)?;
            write(out, "sweep.csv", &sweep_csv(&res))?;
            write(out, "sweep.toml", &to_toml(&summary)?)?;
        }
        Command::Equilibria(_) => {
            #[derive(serde::Serialize)]
            struct Listing {
                equilibria: Vec<report::EquilibriumSummary>,
                #[serde(skip_serializing_if = "Vec::is_empty")]
                seed_failures: Vec<String>,
            }
            let (equilibria, seed_failures) = report::run_equilibria(&cfg)?;
            for e in &equilibria {
                println!("seed {}: {:?}, in D_G: {}", e.seed, e.classification, e.in_dg);
            }
            write(out, "equilibria.toml", &to_toml(&Listing { equilibria, seed_failures })?)?;
        }
        Command::Calibrate(_) => {
            let (result, updated) = report::run_calibrate(&cfg)?;
            println!(
                "r = {}, x = {}, load P = {}, {}: deviation {:e} ({})",
                result.r,
                result.x,
                result.load_p,
                result.convention.label(),
                result.equilibrium_deviation,
                if result.reproduced { "reproduced" } else { "NOT reproduced" }
            );
            write(out, "calibration.toml", &to_toml(&result)?)?;
            write(out, "calibrated.toml", &updated.to_toml_string()?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Numeric(m)) => {
            eprintln!("numeric failure: {m}");
            ExitCode::from(2)
        }
    }
}
