//! Experiment commands that write CSV tables.

use std::path::PathBuf;

use carnot_core::hardy::{sharpness_scan, sigma_inf_probe, write_scan_csv, ScanRow};
use carnot_core::parabolic::{evolve, refinement_study, DIAGNOSTIC_COLUMNS, REFINEMENT_COLUMNS};
use carnot_core::report::write_csv;
use carnot_core::{CarnotGroup, GroupKind, PotentialKind};

use crate::config::{Coefficient, Command, ExperimentConfig};
use crate::error::{CliError, CliResult};

const PROBE_COLUMNS: [&str; 6] = [
    "n",
    "inner_radius",
    "numerator_energy",
    "potential_term",
    "denominator",
    "quotient",
];

/// What a command wrote, plus the one-line summary printed to stdout.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub path: PathBuf,
    pub summary: String,
}

fn out_path(config: &ExperimentConfig) -> PathBuf {
    config
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.csv", config.command().name())))
}

fn io_error(path: &std::path::Path) -> impl Fn(carnot_core::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("cannot write {}: {e}", path.display()))
}

pub fn run(config: &ExperimentConfig) -> CliResult<RunOutput> {
    match config.command() {
        Command::HardyScan => run_hardy_scan(config),
        Command::SigmaInf => run_sigma_inf(config),
        Command::Evolve => run_evolve(config),
        Command::Refine => run_refine(config),
        Command::Verify => Err(CliError::Usage("verify does not write a table".into())),
    }
}

pub fn run_hardy_scan(config: &ExperimentConfig) -> CliResult<RunOutput> {
    let g = config.group()?;
    let p = config.p();
    let mut settings = config.scan.settings;
    if let Some(pc) = &config.potential {
        if pc.kind != PotentialKind::HardyPure {
            return Err(CliError::Usage(
                "hardy-scan uses the pure Hardy potential".into(),
            ));
        }
        settings.lambda_factor = match pc.lambda {
            Coefficient::TimesHardy(k) => k,
            Coefficient::Absolute(l) => {
                l / carnot_core::hardy::hardy_constant(&g, p).map_err(CliError::field("p"))?
            }
        };
    }
    let rows =
        sharpness_scan(&g, p, &config.scan.epsilons, &settings).map_err(CliError::field("scan"))?;
    let path = out_path(config);
    write_scan_csv(&path, &config.to_comment(), &rows).map_err(io_error(&path))?;
    let summary = format!(
        "hardy-scan: {} rows, quotient {:.6e} -> {:.6e}, wrote {}",
        rows.len(),
        rows[0].quotient,
        rows[rows.len() - 1].quotient,
        path.display()
    );
    Ok(RunOutput { path, summary })
}

pub fn run_sigma_inf(config: &ExperimentConfig) -> CliResult<RunOutput> {
    let g = config.group()?;
    let p = config.p();
    let potential = config
        .potential_or(Coefficient::TimesHardy(2.0))
        .resolve(&g, p)?;
    let family = config.probe.family()?;
    let n_max = family.inner_radii.len();
    let rows = sigma_inf_probe(
        &g,
        p,
        &potential,
        &family,
        n_max,
        config.probe.epsilon_margin,
        &config.probe.route,
    )
    .map_err(CliError::field("probe"))?;
    let table: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let s: ScanRow = r.as_scan_row();
            vec![
                s.parameter,
                r.inner_radius,
                s.numerator_energy,
                s.potential_term,
                s.denominator,
                s.quotient,
            ]
        })
        .collect();
    let path = out_path(config);
    write_csv(&path, &config.to_comment(), &PROBE_COLUMNS, &table).map_err(io_error(&path))?;
    let last = rows.last().expect("n_max >= 1");
    let summary = format!(
        "sigma-inf: lambda {:.6}, n = 1..{}, final quotient {:.6e}, wrote {}",
        potential.lambda,
        n_max,
        last.quotient,
        path.display()
    );
    Ok(RunOutput { path, summary })
}

fn parabolic_group(g: &CarnotGroup) -> CliResult<()> {
    if g.kind() != GroupKind::Heisenberg || g.ambient_dim() != 3 || g.norm_kappa() != 1.0 {
        return Err(CliError::Usage(
            "evolve and refine run on the first Heisenberg group with the default norm".into(),
        ));
    }
    Ok(())
}

pub fn run_evolve(config: &ExperimentConfig) -> CliResult<RunOutput> {
    let g = config.group()?;
    parabolic_group(&g)?;
    let cfg = config.evolution_config(&g)?;
    let d = evolve(&config.evolution.grid, &cfg).map_err(CliError::field("evolution"))?;
    let rows: Vec<Vec<f64>> = d.records.iter().map(|r| r.to_record()).collect();
    let path = out_path(config);
    write_csv(&path, &config.to_comment(), &DIAGNOSTIC_COLUMNS, &rows).map_err(io_error(&path))?;
    let last = d.last();
    let status = match d.divergence {
        Some((step, t)) => format!("diverged at step {step} (t = {t:.6e})"),
        None => "completed".to_string(),
    };
    let summary = format!(
        "evolve: {} steps of {:.3e}, {status}, final mass {:.6e} sup {:.6e}, wrote {}",
        d.steps,
        d.dt,
        last.mass,
        last.sup,
        path.display()
    );
    Ok(RunOutput { path, summary })
}

pub fn run_refine(config: &ExperimentConfig) -> CliResult<RunOutput> {
    let g = config.group()?;
    parabolic_group(&g)?;
    let cfg = config.evolution_config(&g)?;
    let rows = refinement_study(&config.evolution.grid, &cfg, config.evolution.levels)
        .map_err(CliError::field("evolution.levels"))?;
    let table: Vec<Vec<f64>> = rows.iter().map(|r| r.to_record()).collect();
    let path = out_path(config);
    write_csv(&path, &config.to_comment(), &REFINEMENT_COLUMNS, &table).map_err(io_error(&path))?;
    let sups: Vec<String> = rows
        .iter()
        .map(|r| format!("{:.4e}", r.final_sup))
        .collect();
    let summary = format!(
        "refine: {} levels, final sup [{}], wrote {}",
        rows.len(),
        sups.join(", "),
        path.display()
    );
    Ok(RunOutput { path, summary })
}
