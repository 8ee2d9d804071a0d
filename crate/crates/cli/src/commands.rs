use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use platesize_core::config::DomainSpec;
use platesize_core::estimates::{lps_pitch, reference_field, run_prepared_size_experiment};
use platesize_core::functionals::{boundary_work, frequency, BoundarySpectrum, WorkReport};
use platesize_core::material::derive_plate_tensors;
use platesize_core::report::{write_corpus, write_header, write_report, write_rows, Rows};
use platesize_core::solver::{convergence_study, ExactKind};
use platesize_core::{
    calibrate_constants, lps_check, size_bounds, three_spheres_check, verify_energy_lemma, Error, ExperimentConfig,
    LoadFamily, Result,
};
use rayon::prelude::*;

use crate::{Cli, Command};

pub enum Outcome {
    Ok,
    CheckFailed(String),
}

struct Sink {
    dir: Option<PathBuf>,
}

impl Sink {
    fn open(&self, name: &str) -> Result<Box<dyn Write>> {
        Ok(match &self.dir {
            Some(d) => {
                std::fs::create_dir_all(d)?;
                Box::new(BufWriter::new(File::create(d.join(name))?))
            }
            None => Box::new(io::stdout().lock()),
        })
    }
}

fn apply_flags(cli: &Cli, cfg: &mut ExperimentConfig) -> Result<()> {
    if let Some(t) = cli.tol {
        cfg.tol = t;
    }
    cfg.dense_oracle |= cli.dense_oracle;
    cfg.full_integration |= cli.full_integration;
    cfg.validate()
}

fn load_config(cli: &Cli, path: &Path) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::read(path)?;
    apply_flags(cli, &mut cfg)?;
    Ok(cfg)
}

fn config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::InvalidInput("--config is required for this command".into()))?;
    load_config(cli, path)
}

fn sink(cli: &Cli, cfg: Option<&ExperimentConfig>) -> Sink {
    Sink {
        dir: cli.out.clone().or_else(|| cfg.and_then(|c| c.output.clone())),
    }
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Solve { reference } => solve(cli, *reference),
        Command::Work => work(cli),
        Command::EnergyLemma => energy_lemma(cli),
        Command::Size => size(cli),
        Command::ThreeSpheres => three_spheres(cli),
        Command::Lps => lps(cli),
        Command::Convergence => convergence(cli),
        Command::Calibrate { dir } => calibrate(cli, dir),
    }
}

fn solve(cli: &Cli, reference: bool) -> Result<Outcome> {
    let cfg = config(cli)?;
    let exp = cfg.build()?;
    let (_, state) = if reference || exp.inclusion.is_none() {
        exp.solve_reference()?
    } else {
        exp.solve_inclusion()?
    };
    let mut out = sink(cli, Some(&cfg)).open(&format!("{}-state.csv", cfg.id))?;
    write_header(&mut out, "state", cfg.timestamp)?;
    state.write_csv(&exp.mesh, &mut out)?;
    out.flush()?;
    Ok(Outcome::Ok)
}

fn work(cli: &Cli) -> Result<Outcome> {
    let cfg = config(cli)?;
    let exp = cfg.build()?;
    let (_, s0) = exp.solve_reference()?;
    let w0 = boundary_work(&exp.mesh, &exp.load, &s0)?;
    let w = if exp.inclusion.is_some() {
        let (_, s) = exp.solve_inclusion()?;
        boundary_work(&exp.mesh, &exp.load, &s)?
    } else {
        w0
    };
    let mut rows = WorkReport::new(w, w0).rows();
    match cfg.frequency {
        Some(f) => rows.push(("F".into(), f.to_string())),
        None => {
            let sp = BoundarySpectrum::from_mesh(&exp.mesh)?;
            rows.extend(frequency(&exp.mesh, &sp, &exp.load, exp.rho0())?.rows());
        }
    }
    let mut out = sink(cli, Some(&cfg)).open(&format!("{}-work.csv", cfg.id))?;
    write_header(&mut out, "work", cfg.timestamp)?;
    writeln!(out, "experiment,quantity,value")?;
    write_rows(&mut out, &cfg.id, &rows)?;
    out.flush()?;
    Ok(Outcome::Ok)
}

fn energy_lemma(cli: &Cli) -> Result<Outcome> {
    let cfg = config(cli)?;
    let exp = cfg.build()?;
    let jumps = exp.jumps()?;
    let (raster, _) = exp
        .inclusion
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("energy-lemma needs an inclusion".into()))?;
    let (_, s0) = exp.solve_reference()?;
    let (_, s) = exp.solve_inclusion()?;
    let report = verify_energy_lemma(
        &exp.mesh,
        &s0,
        &s,
        &exp.load,
        &exp.ellipticity,
        exp.material.thickness,
        &jumps,
        &raster.mask,
        exp.options.shear,
    )?;
    let out = sink(cli, Some(&cfg)).open(&format!("{}-energy-lemma.csv", cfg.id))?;
    write_report(out, "energy-lemma", &cfg.id, &report, cfg.timestamp)?;
    if report.pass() {
        Ok(Outcome::Ok)
    } else {
        Ok(Outcome::CheckFailed(format!(
            "lhs = {}, mid = {}, rhs = {}, cross-check = {:e}",
            report.lhs, report.mid, report.rhs, report.cross_check
        )))
    }
}

fn size(cli: &Cli) -> Result<Outcome> {
    let cfg = config(cli)?;
    let exp = cfg.build()?;
    let report = run_prepared_size_experiment(&exp)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let out = sink(cli, Some(&cfg)).open(&format!("{}-size.csv", cfg.id))?;
    write_report(out, "size", &cfg.id, &report, cfg.timestamp)?;
    if !report.sign_consistent {
        return Ok(Outcome::CheckFailed(format!("work gap {} contradicts the jump regime", report.work.gap)));
    }
    if let Some(l) = report.lemma.filter(|l| !l.pass()) {
        return Ok(Outcome::CheckFailed(format!("energy comparison failed: {l:?}")));
    }
    Ok(Outcome::Ok)
}

/// Largest admissible radius around `center`, shrunk by 10% and capped at `rho0 / 2`.
fn default_rho(depth: f64, theta: f64, rho0: f64) -> f64 {
    (0.9 * 2.0 * theta * depth / 7.0).min(0.5 * rho0)
}

fn three_spheres(cli: &Cli) -> Result<Outcome> {
    let cfg = config(cli)?;
    let exp = cfg.build()?;
    let (_, field) = reference_field(&exp, cfg.energy_order)?;
    let center = cfg.center.unwrap_or(exp.domain.apriori().x0);
    let rho = cfg
        .rho
        .unwrap_or_else(|| default_rho(exp.mesh.boundary_distance(&center), cfg.theta, exp.rho0()));
    let report = three_spheres_check(&field, &exp.mesh, center, rho, cfg.theta, exp.rho0())?;
    let out = sink(cli, Some(&cfg)).open(&format!("{}-three-spheres.csv", cfg.id))?;
    write_report(out, "three-spheres", &cfg.id, &report, cfg.timestamp)?;
    if report.holds {
        Ok(Outcome::Ok)
    } else {
        Ok(Outcome::CheckFailed(format!("no admissible exponent: {:?}", report.status)))
    }
}

fn lps(cli: &Cli) -> Result<Outcome> {
    let cfg = config(cli)?;
    let exp = cfg.build()?;
    let (_, field) = reference_field(&exp, cfg.energy_order)?;
    let x0 = exp.domain.apriori().x0;
    let rho = cfg
        .rho
        .unwrap_or_else(|| default_rho(exp.mesh.boundary_distance(&x0), cfg.theta, exp.rho0()));
    let pitch = cfg
        .lps_pitch
        .unwrap_or_else(|| lps_pitch(rho, cfg.theta, cfg.h1.map(|h| h * exp.rho0())));
    let report = lps_check(&field, &exp.mesh, rho, cfg.theta, pitch)?;
    let s = sink(cli, Some(&cfg));
    write_report(s.open(&format!("{}-lps.csv", cfg.id))?, "lps", &cfg.id, &report, cfg.timestamp)?;
    let mut out = s.open(&format!("{}-lps-centers.csv", cfg.id))?;
    write_header(&mut out, "lps-centers", cfg.timestamp)?;
    writeln!(out, "x,y,ratio")?;
    for (c, r) in report.centers.iter().zip(&report.ratios) {
        writeln!(out, "{},{},{}", c.x, c.y, r)?;
    }
    out.flush()?;
    if report.min_ratio > 0.0 {
        Ok(Outcome::Ok)
    } else {
        Ok(Outcome::CheckFailed(format!("zero local energy near ({}, {})", report.argmin.x, report.argmin.y)))
    }
}

fn convergence(cli: &Cli) -> Result<Outcome> {
    let cfg = config(cli)?;
    let DomainSpec::Rect(rect) = cfg.domain else {
        return Err(Error::InvalidInput("convergence needs a rectangular domain (domain_rect)".into()));
    };
    let (kind, a) = match cfg.load {
        LoadFamily::PureBending { a } => (ExactKind::PureBending, a),
        LoadFamily::Twist { a } => (ExactKind::Twist, a),
        ref other => {
            return Err(Error::InvalidInput(format!(
                "convergence needs a closed-form load (pure_bending or twist), got {}",
                other.name()
            )))
        }
    };
    let rows = convergence_study(
        rect,
        &cfg.levels,
        |m| derive_plate_tensors(&cfg.material(m.num_elements())?),
        kind,
        a,
        &cfg.solver_options(),
        cfg.dense_oracle,
    )?;
    let mut out = sink(cli, Some(&cfg)).open(&format!("{}-convergence.csv", cfg.id))?;
    write_header(&mut out, "convergence", cfg.timestamp)?;
    writeln!(
        out,
        "divisions,h,dofs,work,work_exact,energy_error,discrete_energy_error,l2_error,energy_order,discrete_energy_order,l2_order"
    )?;
    for r in &rows {
        let o = |i: usize| r.orders.map(|o| o[i].to_string()).unwrap_or_else(|| "NA".into());
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.divisions,
            r.h,
            r.dofs,
            r.work,
            r.work_exact,
            r.errors.energy,
            r.errors.discrete_energy,
            r.errors.l2,
            o(0),
            o(1),
            o(2)
        )?;
    }
    out.flush()?;
    Ok(Outcome::Ok)
}

fn calibrate(cli: &Cli, dir: &Path) -> Result<Outcome> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "cfg"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidInput(format!("no *.cfg files in {}", dir.display())));
    }
    let configs: Vec<ExperimentConfig> = paths.iter().map(|p| load_config(cli, p)).collect::<Result<_>>()?;
    let rho0 = configs[0].rho0;
    if configs.iter().any(|c| c.rho0 != rho0) {
        return Err(Error::InvalidInput("corpus configs must share rho0".into()));
    }
    let mut reports = configs
        .par_iter()
        .map(|c| run_prepared_size_experiment(&c.build()?))
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<_> = reports.iter().filter_map(|r| r.calibration_point()).collect();
    let cal = calibrate_constants(&points, rho0)?;
    for r in &mut reports {
        r.c1 = Some(cal.c1);
        r.c2 = Some(cal.c2);
        r.bounds = match r.jumps {
            Some(j) if r.sign_consistent => Some(size_bounds(r.work.gap, r.work.w0, &j, cal.c1, cal.c2, rho0)?),
            Some(_) => None,
            None => Some([0.0, 0.0]),
        };
    }
    let timestamp = configs.iter().any(|c| c.timestamp);
    let s = sink(cli, None);
    write_corpus(s.open("corpus.csv")?, &reports, timestamp)?;
    let mut out = s.open("calibration.csv")?;
    write_header(&mut out, "calibration", timestamp)?;
    writeln!(out, "experiment,quantity,value")?;
    let rows = vec![
        ("experiments".to_string(), reports.len().to_string()),
        ("C1".to_string(), cal.c1.to_string()),
        ("C2".to_string(), cal.c2.to_string()),
        ("C2_over_C1".to_string(), cal.c2_over_c1().to_string()),
        ("ratio_spread".to_string(), cal.ratio_spread.to_string()),
    ];
    write_rows(&mut out, "corpus", &rows)?;
    out.flush()?;
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| !r.sign_consistent || r.lemma.is_some_and(|l| !l.pass()))
        .map(|r| r.id.as_str())
        .collect();
    if failed.is_empty() {
        Ok(Outcome::Ok)
    } else {
        Ok(Outcome::CheckFailed(format!("checks failed for {}", failed.join(", "))))
    }
}
