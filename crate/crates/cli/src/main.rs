//! Command-line front end: certification, simulation, signal validation and
//! parameter sweeps over JSON run configurations.
//!
//! Exit codes: 0 ok, 1 config/validation error, 2 certificate infeasible,
//! 3 runtime invariant violation (e.g. quantizer overflow).

mod config;

use clap::{Parser, Subcommand};
use config::RunConfig;
use dwellcert::certify::{self, CertifyError, CertifyOptions};
use dwellcert::model::{self, AdtParams};
use dwellcert::sim::{self, SimConfig};
use dwellcert::{Certificate, SwitchedSystem};
use nalgebra::DVector;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dwellcert")]
#[command(
    about = "Certify and simulate switched linear systems under sampled, quantized output feedback"
)]
#[command(version)]
struct Cli {
    /// Override the certification tau-grid resolution.
    #[arg(long, global = true)]
    grid: Option<u32>,
    /// Override the signal generator seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress informational output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Compute the certificate and write it as JSON.
    Certify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the closed loop and write trajectory, symbol trace, invariant
    /// report and a plotting script.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
    },
    /// Check the dwell-time and average-dwell-time conditions of a signal.
    ValidateSignal {
        #[arg(long)]
        config: PathBuf,
    },
    /// Sweep a parameter and record (value, nu, nu_bar, tau_a_min) rows.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = ["N", "tau_a", "grid"])]
        param: String,
        /// Comma-separated parameter values.
        #[arg(long)]
        values: String,
        #[arg(long)]
        out: PathBuf,
    },
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn config(message: impl ToString) -> Self {
        Self {
            code: 1,
            message: message.to_string(),
        }
    }

    fn infeasible(message: impl ToString) -> Self {
        Self {
            code: 2,
            message: message.to_string(),
        }
    }

    fn runtime(message: impl ToString) -> Self {
        Self {
            code: 3,
            message: message.to_string(),
        }
    }
}

impl From<CertifyError> for CliError {
    fn from(e: CertifyError) -> Self {
        match e {
            CertifyError::DataRateInsufficient { .. }
            | CertifyError::RhoTooSmall { .. }
            | CertifyError::InfeasibleNu(_) => CliError::infeasible(e),
            other => CliError::config(other),
        }
    }
}

impl From<sim::SimError> for CliError {
    fn from(e: sim::SimError) -> Self {
        match e {
            sim::SimError::Quantizer { .. }
            | sim::SimError::PrecisionExhausted { .. }
            | sim::SimError::LockstepBroken(_) => CliError::runtime(e),
            sim::SimError::Certify(c) => CliError::from(c),
            other => CliError::config(other),
        }
    }
}

impl From<config::ConfigError> for CliError {
    fn from(e: config::ConfigError) -> Self {
        CliError::config(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Commands::Certify { config, out } => cmd_certify(cli, config, out),
        Commands::Simulate { config, out_dir } => cmd_simulate(cli, config, out_dir),
        Commands::ValidateSignal { config } => cmd_validate_signal(cli, config),
        Commands::Sweep {
            config,
            param,
            values,
            out,
        } => cmd_sweep(cli, config, param, values, out),
    }
}

fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    Ok(RunConfig::from_json(&text)?)
}

fn validated_system(cfg: &RunConfig) -> Result<SwitchedSystem, CliError> {
    let sys = cfg.build_system()?;
    let report = model::validate_system(&sys).map_err(CliError::config)?;
    if !report.passed() {
        return Err(CliError::config(format!(
            "system validation failed:\n{report}"
        )));
    }
    Ok(sys)
}

fn cmd_certify(cli: &Cli, config: &Path, out: &Path) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let sys = validated_system(&cfg)?;
    let opts = cfg.build_certify_options(cli.grid)?;
    let cert = certify::certify(&sys, &opts)?;
    let (n_int, n_odd) = certify::min_admissible_n(&sys)?;
    fs::write(out, cert.to_json())
        .map_err(|e| CliError::config(format!("cannot write {}: {e}", out.display())))?;
    if !cli.quiet {
        print_certificate_summary(&cert, n_int, n_odd);
        println!("certificate written to {}", out.display());
    }
    Ok(())
}

fn print_certificate_summary(cert: &Certificate, n_int: u32, n_odd: u32) {
    println!("mode   eta_p   lhs4       theta_p    nu_p");
    for m in &cert.modes {
        println!(
            "{:<6} {:<7} {:<10.6} {:<10.6} {:<10.6}",
            m.mode.0, m.eta_p, m.lhs4, m.theta_p, m.nu_p
        );
    }
    println!("eta       = {}", cert.eta);
    println!("nu        = {:.6}", cert.nu);
    match cert.nu_bar {
        Some(nb) => println!("nu_bar    = {nb:.6}"),
        None => println!("nu_bar    = none (single mode, no switches possible)"),
    }
    println!("tau_a_min = {:.6}", cert.tau_a_min);
    println!("N_int     = {n_int} (smallest integer above the data-rate bound)");
    println!("N_odd     = {n_odd} (smallest admissible odd alphabet)");
    println!(
        "N_used    = {}, grid_points = {}",
        cert.n_quant, cert.grid_points
    );
}

fn cmd_simulate(cli: &Cli, config: &Path, out_dir: &Path) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let sys = validated_system(&cfg)?;
    let qcfg = cfg.build_quantizer()?;
    let opts = cfg.build_certify_options(cli.grid)?;
    let cert = certify::certify(&sys, &opts)?;

    let (signal, adt) = cfg.build_signal(&sys, cli.seed)?;
    let report = model::validate_signal(&signal, sys.tau_s(), &adt);
    if !report.passed() {
        return Err(CliError::config(format!(
            "signal validation failed:\n{report}"
        )));
    }
    let zoom_floor = cert.eta as f64 * sys.tau_s();
    if adt.tau_a <= zoom_floor {
        return Err(CliError::config(format!(
            "zoom-out needs tau_a > eta*tau_s: tau_a = {} must exceed {} for this system",
            adt.tau_a, zoom_floor
        )));
    }
    if adt.tau_a < cert.tau_a_min && !cli.quiet {
        println!(
            "note: declared tau_a = {} is below the certified minimum {:.4}; convergence is \
             not guaranteed by the certificate",
            adt.tau_a, cert.tau_a_min
        );
    }

    let sim_block = cfg
        .simulation
        .as_ref()
        .ok_or_else(|| CliError::config("config error at simulation: missing block"))?;
    let simcfg = SimConfig {
        x0: DVector::from_vec(sim_block.x0.clone()),
        signal,
        t_end: sim_block.t_end,
        substep: sim_block.substep,
        record_intersample: sim_block.record_intersample,
    };
    let log = sim::run(&sys, &simcfg, &qcfg, &cert)?;

    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::config(format!("cannot create {}: {e}", out_dir.display())))?;
    let write = |name: &str, bytes: Vec<u8>| -> Result<(), CliError> {
        let path = out_dir.join(name);
        fs::write(&path, bytes)
            .map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))
    };
    let mut trajectory = Vec::new();
    sim::write_trajectory_csv(&log, &mut trajectory).map_err(CliError::config)?;
    write("trajectory.csv", trajectory)?;
    let mut symbols = Vec::new();
    dwellcert::codec::write_symbol_trace(&log.symbols, &mut symbols).map_err(CliError::config)?;
    write("symbols.csv", symbols)?;
    let inv_report = sim::check_invariants(&log, &cert)?;
    write(
        "invariants.json",
        invariant_report_json(&inv_report).into_bytes(),
    )?;
    write("plot_trajectory.py", plot_script().into_bytes())?;

    let bits_per_sample = (sys.p() as f64 * (qcfg.n() as f64).log2()).ceil()
        + (sys.modes().len() as f64).log2().ceil();
    if !cli.quiet {
        match log.summary.zoom_out_end {
            Some(t) => println!("zoom_out_end     = {t}"),
            None => println!("zoom_out_end     = not reached"),
        }
        match log.summary.first_nonzero_u {
            Some(t) => println!("first_nonzero_u  = {t}"),
            None => println!("first_nonzero_u  = never"),
        }
        println!("final |x|_2      = {:.6e}", log.summary.final_state_norm);
        println!(
            "e_dominance_ok   = {}, cycle_contraction_ok = {}",
            log.summary.e_dominance_ok, log.summary.cycle_contraction_ok
        );
        println!("channel rate     = {bits_per_sample} bits/sample (payload + mode)");
        println!("outputs in {}", out_dir.display());
    }
    if !inv_report.all_ok() {
        return Err(CliError::runtime(format!(
            "trajectory invariant violated: {inv_report:?}"
        )));
    }
    Ok(())
}

fn invariant_report_json(report: &sim::InvariantReport) -> String {
    let dominance = match &report.dominance_violation {
        Some(v) => serde_json::json!({
            "t": v.t, "e_inf": v.e_inf, "e_bound": v.e_bound
        }),
        None => serde_json::Value::Null,
    };
    let lyap = |v: &Option<sim::LyapunovViolation>| match v {
        Some(v) => serde_json::json!({
            "kind": v.kind, "t_start": v.t_start, "t_end": v.t_end,
            "v_start": v.v_start, "v_end": v.v_end, "limit": v.limit
        }),
        None => serde_json::Value::Null,
    };
    let value = serde_json::json!({
        "samples_checked": report.samples_checked,
        "dominance_ok": report.dominance_ok(),
        "dominance_violation": dominance,
        "cycles_checked": report.cycles_checked,
        "cycle_ok": report.cycles_ok(),
        "cycle_violation": lyap(&report.cycle_violation),
        "switches_checked": report.switches_checked,
        "switch_ok": report.switches_ok(),
        "switch_violation": lyap(&report.switch_violation),
    });
    serde_json::to_string_pretty(&value).expect("report serializes")
}

fn plot_script() -> String {
    r#"#!/usr/bin/env python3
"""Plots |x(t)| and |xi(t)| from trajectory.csv (same directory)."""
import csv
import math
import os

import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
rows = list(csv.DictReader(open(os.path.join(here, "trajectory.csv"))))
t = [float(r["t"]) for r in rows]
nx = sum(1 for k in rows[0] if k.startswith("x") and k[1:].isdigit())
x_norm = [math.sqrt(sum(float(r[f"x{i}"]) ** 2 for i in range(1, nx + 1))) for r in rows]
xi_norm = [math.sqrt(sum(float(r[f"xi{i}"]) ** 2 for i in range(1, nx + 1))) for r in rows]

fig, ax = plt.subplots(figsize=(8, 4.5))
ax.plot(t, x_norm, label="|x(t)|", linewidth=1.5)
ax.plot(t, xi_norm, label="|xi(t)|", linewidth=1.5, linestyle="--")
ax.set_xlabel("t [s]")
ax.set_ylabel("Euclidean norm")
ax.legend()
ax.grid(True, alpha=0.3)
fig.tight_layout()
out = os.path.join(here, "trajectory.png")
fig.savefig(out, dpi=150)
print(f"wrote {out}")
"#
    .to_string()
}

fn cmd_validate_signal(cli: &Cli, config: &Path) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let sys = cfg.build_system()?;
    let (signal, adt) = cfg.build_signal(&sys, cli.seed)?;
    let report = model::validate_signal(&signal, sys.tau_s(), &adt);
    print!("{report}");
    if !report.passed() {
        return Err(CliError::config("signal validation failed"));
    }
    if !cli.quiet {
        println!(
            "{} switches over horizon {}, dwell and ADT (N0 = {}, tau_a = {}) satisfied",
            signal.events().len(),
            signal.horizon(),
            adt.n0,
            adt.tau_a
        );
    }
    Ok(())
}

fn cmd_sweep(
    cli: &Cli,
    config: &Path,
    param: &str,
    values_arg: &str,
    out: &Path,
) -> Result<(), CliError> {
    let values: Vec<f64> = values_arg
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| CliError::config(format!("bad sweep value {s:?}")))
        })
        .collect::<Result<_, _>>()?;
    if values.is_empty() {
        return Err(CliError::config("sweep needs at least one value"));
    }
    let values = &values[..];
    let cfg = load_config(config)?;
    let sys = validated_system(&cfg)?;
    let base_opts = cfg.build_certify_options(cli.grid)?;
    let mut csv = String::from("param,value,nu,nu_bar,tau_a_min\n");

    match param {
        "N" => {
            // The pair geometry is alphabet-independent: compute it once.
            let geoms = certify::pair_geometries(&sys, &base_opts)?;
            for &v in values {
                let n = v as u32;
                if n as f64 != v {
                    return Err(CliError::config(format!(
                        "sweep over N needs integer values, got {v}"
                    )));
                }
                let opts = CertifyOptions {
                    n_quant: n,
                    ..base_opts.clone()
                };
                match certify::certify_with_geometry(&sys, &opts, &geoms) {
                    Ok(cert) => push_row(&mut csv, "N", v, &cert),
                    Err(
                        CertifyError::DataRateInsufficient { .. }
                        | CertifyError::RhoTooSmall { .. }
                        | CertifyError::InfeasibleNu(_),
                    ) => {
                        csv.push_str(&format!("N,{v},,,\n"));
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }
        "tau_a" => {
            // Certification does not depend on tau_a; the rows document the
            // certified threshold against each candidate dwell time.
            let cert = certify::certify(&sys, &base_opts)?;
            for &v in values {
                let adt = AdtParams::new(1, v).map_err(CliError::config)?;
                push_row(&mut csv, "tau_a", v, &cert);
                if !cli.quiet {
                    println!(
                        "tau_a = {v}: {} the certified minimum {:.4}",
                        if adt.tau_a > cert.tau_a_min {
                            "above"
                        } else {
                            "below"
                        },
                        cert.tau_a_min
                    );
                }
            }
        }
        "grid" => {
            for &v in values {
                let g = v as u32;
                if g as f64 != v {
                    return Err(CliError::config(format!(
                        "sweep over grid needs integer values, got {v}"
                    )));
                }
                let opts = CertifyOptions {
                    grid_points: g,
                    ..base_opts.clone()
                };
                let cert = certify::certify(&sys, &opts)?;
                push_row(&mut csv, "grid", v, &cert);
            }
        }
        other => {
            return Err(CliError::config(format!(
                "unknown sweep parameter {other}; use N, tau_a or grid"
            )))
        }
    }
    fs::write(out, csv)
        .map_err(|e| CliError::config(format!("cannot write {}: {e}", out.display())))?;
    if !cli.quiet {
        println!("sweep written to {}", out.display());
    }
    Ok(())
}

fn push_row(csv: &mut String, param: &str, value: f64, cert: &Certificate) {
    let nu_bar = cert
        .nu_bar
        .map(|v| format!("{v:.12e}"))
        .unwrap_or_default();
    csv.push_str(&format!(
        "{param},{value},{:.12e},{nu_bar},{:.12e}\n",
        cert.nu, cert.tau_a_min
    ));
}
