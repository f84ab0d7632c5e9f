//! The `hbac` command line: argument parsing, configuration loading and the
//! drivers behind `cool run|steady|sweep` and `pulse grape|verify`.
//!
//! Exit codes: 0 success, 1 invalid input (configuration, pulse file, I/O),
//! 2 numerical failure or non-convergence, 3 GRAPE finished below its
//! target fidelity (outputs are still written).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use crate::config::{Preset, RunConfig};
use crate::engine::{run_schedule, steady_state_bias};
use crate::error::{Error, Result};
use crate::grape::optimize;
use crate::noise::{BathModel, NoiseModel};
use crate::pulse::ControlPulse;
use crate::report::{
    sweep_csv, to_json, trajectory_csv, GrapeSummary, RunSummary, SteadyReport, SweepRow,
    VerifyReport,
};
use crate::spin::{gate_fidelity, propagate, robust_report};
use crate::state::PopulationState;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_TARGET_MISSED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "hbac", version, about = "Heat-bath algorithmic cooling simulator and robust pulse optimizer")]
pub struct Cli {
    /// TOML configuration; keys override the preset.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Starting configuration: `ideal` (default) or `calibrated`.
    #[arg(long, global = true, value_name = "NAME")]
    pub preset: Option<String>,
    /// Overrides `output.directory`.
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long)]
    pub print_default_config: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Population-level cooling simulations.
    #[command(subcommand)]
    Cool(CoolCommand),
    /// Robust control pulses.
    #[command(subcommand)]
    Pulse(PulseCommand),
}

#[derive(Debug, Subcommand)]
pub enum CoolCommand {
    /// Run the configured schedule; writes the trajectory CSV and summary JSON.
    Run,
    /// Iterate the PPA to its fixed point; writes the steady-state JSON.
    Steady,
    /// Steady states over the sweep grid; writes the sweep CSV.
    Sweep,
}

#[derive(Debug, Subcommand)]
pub enum PulseCommand {
    /// Optimize a pulse for the configured goal gate.
    Grape,
    /// Evaluate a pulse file over the configured ensemble.
    Verify {
        #[arg(long, value_name = "FILE")]
        pulse: PathBuf,
    },
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Numerical(_) | Error::Convergence { .. } => EXIT_NUMERICAL,
        Error::Domain(_) | Error::Config(_) | Error::PulseFormat(_) | Error::Io(_) => EXIT_INVALID,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to stderr, file paths to stdout.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(cli: &Cli) -> Result<i32> {
    let mut cfg = load_config(cli.config.as_deref(), cli.preset.as_deref())?;
    if let Some(dir) = &cli.out_dir {
        cfg.output.directory = dir.clone();
    }
    if cli.print_default_config {
        print!("{}", cfg.to_toml());
        return Ok(EXIT_OK);
    }
    let Some(command) = &cli.command else {
        return Err(Error::Config("no command given (try `hbac --help`)".into()));
    };
    match command {
        Command::Cool(CoolCommand::Run) => cool_run(&cfg),
        Command::Cool(CoolCommand::Steady) => cool_steady(&cfg),
        Command::Cool(CoolCommand::Sweep) => cool_sweep(&cfg),
        Command::Pulse(PulseCommand::Grape) => pulse_grape(&cfg),
        Command::Pulse(PulseCommand::Verify { pulse }) => pulse_verify(&cfg, pulse),
    }
}

/// Preset values overlaid with the keys present in `path`. Overrides act
/// per field: a field given in the file replaces the preset's value whole.
pub fn load_config(path: Option<&Path>, preset: Option<&str>) -> Result<RunConfig> {
    let preset: Preset = preset.map(str::parse).transpose()?.unwrap_or(Preset::Ideal);
    let base = RunConfig::preset(preset);
    let Some(path) = path else {
        return Ok(base);
    };
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let overlay: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(format!("{}: {e}", path.display())))?;
    let mut merged = toml::Table::try_from(&base).expect("configuration serializes to TOML");
    for (section, value) in overlay {
        match (merged.get_mut(&section), value) {
            (Some(toml::Value::Table(dst)), toml::Value::Table(src)) => dst.extend(src),
            (_, value) => {
                merged.insert(section, value);
            }
        }
    }
    let cfg: RunConfig = merged
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

fn write_output(cfg: &RunConfig, file: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.output.directory)?;
    let path = cfg.output.path(file);
    fs::write(&path, contents)?;
    println!("{}", path.display());
    Ok(path)
}

pub fn cool_run(cfg: &RunConfig) -> Result<i32> {
    let initial = PopulationState::uniform(cfg.system.n_qubits)?;
    let traj = run_schedule(&initial, &cfg.schedule()?, &cfg.bath, &cfg.noise)?;
    write_output(cfg, &cfg.output.trajectory_csv, &trajectory_csv(&traj))?;
    write_output(cfg, &cfg.output.summary_json, &to_json(&RunSummary::new(cfg, &traj)))?;
    Ok(EXIT_OK)
}

pub fn cool_steady(cfg: &RunConfig) -> Result<i32> {
    let steady = steady_state_bias(
        cfg.system.n_qubits,
        &cfg.bath,
        &cfg.noise,
        cfg.steady.tol,
        cfg.steady.max_rounds,
    )?;
    write_output(cfg, &cfg.output.steady_json, &to_json(&SteadyReport::new(cfg, &steady)))?;
    Ok(EXIT_OK)
}

/// Grid points in row order: `n_qubits` outermost, depolarizing innermost.
pub fn sweep_rows(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    let s = &cfg.sweep;
    let mut grid = Vec::new();
    for &n in &s.n_qubits {
        for &e in &s.epsilon {
            for &p in &s.depolarizing {
                grid.push((n, e, p));
            }
        }
    }
    grid.par_iter()
        .map(|&(n_qubits, epsilon, depolarizing)| {
            let bath = BathModel { epsilon0: epsilon, ..cfg.bath.clone() };
            let noise = NoiseModel { depolarizing_per_gate: depolarizing, ..cfg.noise.clone() };
            let steady = steady_state_bias(n_qubits, &bath, &noise, cfg.steady.tol, cfg.steady.max_rounds)?;
            Ok(SweepRow { n_qubits, epsilon, depolarizing, steady, bath })
        })
        .collect()
}

pub fn cool_sweep(cfg: &RunConfig) -> Result<i32> {
    let rows = sweep_rows(cfg)?;
    write_output(cfg, &cfg.output.sweep_csv, &sweep_csv(&rows))?;
    Ok(EXIT_OK)
}

pub fn pulse_grape(cfg: &RunConfig) -> Result<i32> {
    let sys = cfg.spin_system()?;
    let goal = cfg.grape.goal.unitary(sys.n_spins())?;
    let ens = cfg.ensemble_spec()?;
    let result = optimize(&sys, &goal, &ens, &cfg.grape)?;
    write_output(cfg, &cfg.output.pulse_file, &result.pulse.to_text())?;
    write_output(cfg, &cfg.output.history_csv, &result.history_csv())?;
    let summary = GrapeSummary::new(cfg, sys.n_spins(), &result);
    write_output(cfg, &cfg.output.grape_json, &to_json(&summary))?;
    if summary.target_reached {
        Ok(EXIT_OK)
    } else {
        eprintln!(
            "robust fidelity {} below target {} ({:?})",
            summary.robust_fidelity, summary.target_fidelity, summary.termination
        );
        Ok(EXIT_TARGET_MISSED)
    }
}

pub fn pulse_verify(cfg: &RunConfig, pulse_path: &Path) -> Result<i32> {
    let pulse = ControlPulse::read(pulse_path)?;
    let sys = cfg.spin_system()?;
    let goal = cfg.grape.goal.unitary(sys.n_spins())?;
    let pointwise = gate_fidelity(&goal, &propagate(&sys, &pulse, 1.0, 0.0)?)?;
    let grid = robust_report(&sys, &pulse, &goal, &cfg.ensemble_spec()?)?;
    let report = VerifyReport::new(cfg.grape.goal, pulse.len(), pointwise, grid);
    write_output(cfg, &cfg.output.verify_json, &to_json(&report))?;
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_classes_map_to_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 1);
        assert_eq!(exit_code(&Error::PulseFormat("x".into())), 1);
        assert_eq!(exit_code(&Error::Numerical("x".into())), 2);
        assert_eq!(
            exit_code(&Error::Convergence { rounds: 1, previous: 0.0, last: 1.0 }),
            2
        );
    }

    #[test]
    fn overlay_replaces_fields_not_sections() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, "[bath]\nepsilon0 = 0.05\n").unwrap();
        let cfg = load_config(Some(&path), Some("calibrated")).unwrap();
        assert_eq!(cfg.bath.epsilon0, 0.05);
        assert_eq!(cfg.bath.heating_per_refresh, 0.005);
        assert_eq!(cfg.noise.depolarizing_per_gate, 0.01);
    }

    #[test]
    fn bad_preset_and_unknown_key() {
        assert!(matches!(load_config(None, Some("hot")), Err(Error::Config(_))));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, "[bath]\nepsilon_zero = 0.05\n").unwrap();
        assert!(matches!(load_config(Some(&path), None), Err(Error::Config(_))));
    }

    #[test]
    fn sweep_rows_keep_grid_order() {
        let mut cfg = RunConfig::default();
        cfg.sweep.n_qubits = vec![3, 4];
        cfg.sweep.epsilon = vec![0.1, 0.2];
        cfg.sweep.depolarizing = vec![0.0];
        let rows = sweep_rows(&cfg).unwrap();
        let keys: Vec<(usize, f64)> = rows.iter().map(|r| (r.n_qubits, r.epsilon)).collect();
        assert_eq!(keys, vec![(3, 0.1), (3, 0.2), (4, 0.1), (4, 0.2)]);
    }
}
