//! Command-line interface: run scenarios, print gains, audit recorded runs.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flexible_control::{linearize, synthesize_gains};
use crate::model::TetherModel;
use crate::report::{error_plot, parse_csv, position_plot, to_csv};
use crate::scenario::{
    load_scenario, run, tracking_gain, ControllerKind, ModelKind, ScenarioConfig,
};
use crate::taut_control::SingleLink;
use crate::verify::{audit, lyapunov_certificate};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_AUDIT: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "tetherquad",
    version,
    about = "Simulate and control a quadrotor on a multi-link tether"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModelArg {
    Full,
    Simplified,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scenario file or preset (fig2, fig3, fig4, fig5).
    Run {
        scenario: String,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also write SVG plots.
        #[arg(long)]
        svg: bool,
        /// Keep every N-th row in the CSV.
        #[arg(long)]
        decimate: Option<usize>,
        /// Override the plant model used by the controller.
        #[arg(long, value_enum)]
        model: Option<ModelArg>,
        /// Override the duration, s.
        #[arg(long)]
        duration: Option<f64>,
        /// Exit with status 4 when the audit fails.
        #[arg(long)]
        audit: bool,
    },
    /// Print the controller gains and certificates of a scenario.
    Gains { scenario: String },
    /// Audit a recorded trajectory CSV.
    Verify {
        csv: PathBuf,
        /// Scenario providing the system parameters; the reference system otherwise.
        #[arg(long)]
        scenario: Option<String>,
    },
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    source: &str,
    out: &Path,
    svg: bool,
    decimate: Option<usize>,
    model: Option<ModelArg>,
    duration: Option<f64>,
    strict: bool,
) -> Result<bool> {
    let mut cfg = load_scenario(source)?;
    if let Some(d) = decimate {
        cfg.output.decimate = d;
    }
    if let Some(m) = model {
        cfg.controller.model = match m {
            ModelArg::Full => ModelKind::Full,
            ModelArg::Simplified => ModelKind::Simplified,
        };
    }
    if let Some(d) = duration {
        cfg.duration = d;
    }
    cfg.output.svg |= svg;
    cfg.validate()?;
    let result = run(&cfg)?;
    fs::create_dir_all(out)?;
    write(
        &out.join("trajectory.csv"),
        to_csv(&result.trajectory, cfg.output.decimate)?,
    )?;
    write(&out.join("metrics.json"), json(&result.metrics)?)?;
    write(&out.join("audit.json"), json(&result.audit)?)?;
    write(&out.join("scenario.toml"), cfg.to_toml()?)?;
    if cfg.output.svg {
        let lengths = cfg.params.build()?.link_lengths;
        write(&out.join("errors.svg"), error_plot(&result.trajectory))?;
        write(
            &out.join("positions.svg"),
            position_plot(&lengths, &result.trajectory),
        )?;
    }
    println!("{}", json(&result.metrics)?);
    let passed = result.audit.passed();
    eprintln!(
        "audit {}: constraint drift {:.3e}, EL violations {}, bound violations {}",
        if passed { "passed" } else { "FAILED" },
        result.audit.max_constraint_drift,
        result.audit.el_violations,
        result.audit.bound_violations.unwrap_or(0)
    );
    Ok(passed || !strict)
}

fn cmd_gains(source: &str) -> Result<()> {
    let cfg = load_scenario(source)?;
    let params = cfg.params.build()?;
    let c = &cfg.controller;
    match c.kind {
        ControllerKind::TautN1 | ControllerKind::TautApprox => {
            let link = SingleLink::equivalent(&params);
            let cert = lyapunov_certificate(&c.gains, c.psi_q)?;
            println!("alpha = {:.12}", link.alpha());
            println!("beta  = {:.12}", link.beta());
            println!("gains = {:?}", c.gains);
            println!("P_lower = {}", cert.p_lower);
            println!("P_upper = {}", cert.p_upper);
            println!("W_q = {}", cert.w_q);
            println!(
                "certificate valid on 1 - q.q_d < {}: {}",
                cert.psi_q, cert.is_valid
            );
        }
        ControllerKind::FlexibleTwoPhase => {
            let lin = linearize(&params)?;
            let gains = synthesize_gains(&lin, &c.lqr)?;
            println!("K_x = {}", gains.k_x);
            println!("K_xdot = {}", gains.k_x_dot);
            println!("closed-loop spectral abscissa = {:.6e}", gains.abscissa);
        }
        ControllerKind::None => println!("scenario `{}` has no controller", cfg.name),
    }
    Ok(())
}

fn cmd_verify(csv: &Path, scenario: Option<&str>) -> Result<bool> {
    let traj = parse_csv(&fs::read_to_string(csv)?)?;
    let n = traj.rows[0].links();
    let (params, k_x) = match scenario {
        Some(s) => {
            let cfg: ScenarioConfig = load_scenario(s)?;
            (cfg.params.build()?, tracking_gain(&cfg))
        }
        None => (crate::model::SystemParams::reference(n), None),
    };
    if params.links() != n {
        return Err(Error::Config(format!(
            "trajectory has {n} links but the scenario has {}",
            params.links()
        )));
    }
    let report = audit(&TetherModel::new(params)?, &traj, k_x)?;
    println!("{}", json(&report)?);
    Ok(report.passed())
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_CONFIG
    }
}

/// Runs the parsed command and returns the process exit status.
pub fn execute(cli: Cli) -> i32 {
    let outcome = match cli.command {
        Command::Run {
            scenario,
            out,
            svg,
            decimate,
            model,
            duration,
            audit,
        } => cmd_run(&scenario, &out, svg, decimate, model, duration, audit),
        Command::Gains { scenario } => cmd_gains(&scenario).map(|_| true),
        Command::Verify { csv, scenario } => cmd_verify(&csv, scenario.as_deref()),
    };
    match outcome {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_AUDIT,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
