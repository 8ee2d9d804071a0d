//! Inverse-problem layer: the two-sided energy comparison between the work
//! gap and the reference energy stored in the inclusion, area bounds built on
//! it, and empirical unique-continuation probes (three spheres, propagation
//! of smallness).

use rayon::prelude::*;

use crate::config::{Experiment, ExperimentConfig};
use crate::element::ShearInterpolation;
use crate::error::{Error, Result};
use crate::functionals::{
    boundary_work, frequency, integrate, strain_energy_density, strain_energy_density_with, BoundarySpectrum,
    EnergyField, Region, WorkReport,
};
use crate::geometry::{fatness_ratio, ElementMask, Fatness, Mesh, Point};
use crate::material::{EllipticityConstants, JumpBounds, Regime};
use crate::solver::{BoundaryLoad, PlateState};

/// Relative agreement required between the two evaluations of the work gap.
pub const CROSS_CHECK_TOL: f64 = 1e-9;
/// Relative slack of the lemma inequalities.
pub const LEMMA_TOL: f64 = 1e-8;
/// Relative slack of the sign law.
pub const SIGN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyLemmaReport {
    pub regime: Regime,
    pub lhs: f64,
    /// `W0 - W` (stiff) or `W - W0` (soft), from the works.
    pub mid: f64,
    /// Same quantity from the boundary integral of the state differences.
    pub mid_boundary: f64,
    pub rhs: f64,
    pub w: f64,
    pub w0: f64,
    /// `|mid - mid_boundary| / max(|mid|, 1e-12 W0)`.
    pub cross_check: f64,
    pub lower_slack: f64,
    pub upper_slack: f64,
    pub lower_pass: bool,
    pub upper_pass: bool,
    /// The work gap has the sign the regime predicts.
    pub sign_consistent: bool,
}

impl EnergyLemmaReport {
    pub fn pass(&self) -> bool {
        self.lower_pass && self.upper_pass && self.sign_consistent && self.cross_check <= CROSS_CHECK_TOL
    }
}

/// Evaluates both sides of the energy comparison over the inclusion.
///
/// `state0` solves the reference problem, `state` the problem with the
/// inclusion, both for `load` on `mesh`. The reference energy in the
/// inclusion is integrated with the stiffness quadrature and shear strain so
/// the discrete chain is exact up to round-off.
#[allow(clippy::too_many_arguments)]
pub fn verify_energy_lemma(
    mesh: &Mesh,
    state0: &PlateState,
    state: &PlateState,
    load: &BoundaryLoad,
    ellipticity: &EllipticityConstants,
    thickness: f64,
    jumps: &JumpBounds,
    inclusion: &ElementMask,
    shear: ShearInterpolation,
) -> Result<EnergyLemmaReport> {
    if !(jumps.eta > 0.0) || !(jumps.delta > 0.0) {
        return Err(Error::InvalidJump(format!("eta = {}, delta = {}", jumps.eta, jumps.delta)));
    }
    match jumps.regime {
        Regime::Stiff if jumps.delta <= 1.0 => {
            return Err(Error::InvalidJump(format!("stiff regime needs delta > 1, got {}", jumps.delta)))
        }
        Regime::Soft if jumps.delta >= 1.0 => {
            return Err(Error::InvalidJump(format!("soft regime needs delta < 1, got {}", jumps.delta)))
        }
        _ => {}
    }
    let w0 = boundary_work(mesh, load, state0)?;
    let w = boundary_work(mesh, load, state)?;
    let mut diff = state0.clone();
    for (d, s) in diff.dofs.iter_mut().zip(&state.dofs) {
        *d -= s;
    }
    let gap_boundary = boundary_work(mesh, load, &diff)?;
    let gap = w0 - w;

    // rho0 only scales the shear term of E^2, which is not used here.
    let field = strain_energy_density(mesh, state0, 1.0, shear)?;
    let h = thickness;
    let region = Region::Mask(inclusion);
    let weighted = |xi: f64, sigma: f64| {
        integrate(&field, &region, |k| {
            h.powi(3) / 12.0 * xi * field.sym_grad_sq[k] + h * sigma * field.shear_sq[k]
        })
        .value
    };
    let low = weighted(ellipticity.xi0, ellipticity.sigma0);
    let high = weighted(ellipticity.xi1, ellipticity.sigma1);
    let (eta, delta) = (jumps.eta, jumps.delta);
    let (lhs, rhs, sign) = match jumps.regime {
        Regime::Stiff => (eta / delta * low, (delta - 1.0) * high, 1.0),
        Regime::Soft => (eta * low, (1.0 - delta) / delta * high, -1.0),
    };
    let mid = sign * gap;
    let mid_boundary = sign * gap_boundary;
    let cross_check = (mid - mid_boundary).abs() / mid.abs().max(1e-12 * w0.abs()).max(f64::MIN_POSITIVE);
    let tol = LEMMA_TOL * mid.abs().max(rhs);
    Ok(EnergyLemmaReport {
        regime: jumps.regime,
        lhs,
        mid,
        mid_boundary,
        rhs,
        w,
        w0,
        cross_check,
        lower_slack: mid - lhs,
        upper_slack: rhs - mid,
        lower_pass: lhs <= mid + tol,
        upper_pass: mid <= rhs + tol,
        sign_consistent: mid >= -SIGN_TOL * w0.abs(),
    })
}

/// `[lower, upper]` area bounds from the work gap `W0 - W`.
pub fn size_bounds(gap: f64, w0: f64, jumps: &JumpBounds, c1: f64, c2: f64, rho0: f64) -> Result<[f64; 2]> {
    if !(w0 > 0.0) {
        return Err(Error::Degenerate(format!("reference work must be positive, got {w0}")));
    }
    if !(c1 > 0.0 && c2 > 0.0 && rho0 > 0.0) {
        return Err(Error::InvalidInput(format!("constants must be positive: C1 = {c1}, C2 = {c2}, rho0 = {rho0}")));
    }
    let (eta, delta) = (jumps.eta, jumps.delta);
    let signed = match jumps.regime {
        Regime::Stiff => gap,
        Regime::Soft => -gap,
    };
    if signed < -SIGN_TOL * w0 {
        return Err(Error::SignMismatch(format!(
            "work gap {gap} has the wrong sign for a {:?} inclusion",
            jumps.regime
        )));
    }
    let g = signed.max(0.0) * rho0 * rho0 / w0;
    Ok(match jumps.regime {
        Regime::Stiff => [c1 * g / (delta - 1.0), c2 * delta * g / eta],
        Regime::Soft => [c1 * delta * g / (1.0 - delta), c2 * g / eta],
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationPoint {
    pub area: f64,
    pub gap: f64,
    pub w0: f64,
    pub jumps: JumpBounds,
}

impl CalibrationPoint {
    /// `|D| W0 / (rho0^2 |W0 - W|)`.
    pub fn normalized_ratio(&self, rho0: f64) -> f64 {
        self.area * self.w0 / (rho0 * rho0 * self.gap.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub c1: f64,
    pub c2: f64,
    /// max / min of the normalized ratio over the corpus.
    pub ratio_spread: f64,
}

impl Calibration {
    pub fn c2_over_c1(&self) -> f64 {
        self.c2 / self.c1
    }
}

/// Smallest `C1` and largest `C2` that make every corpus area lie inside its
/// bounds.
pub fn calibrate_constants(corpus: &[CalibrationPoint], rho0: f64) -> Result<Calibration> {
    let first = corpus
        .first()
        .ok_or_else(|| Error::Degenerate("empty calibration corpus".into()))?;
    let mut c1 = f64::INFINITY;
    let mut c2 = 0.0f64;
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for (i, p) in corpus.iter().enumerate() {
        if p.jumps.regime != first.jumps.regime {
            return Err(Error::InvalidInput(format!("corpus entry {i} mixes jump regimes")));
        }
        if p.gap == 0.0 || !(p.area > 0.0) {
            return Err(Error::Degenerate(format!("corpus entry {i} has a zero gap or area")));
        }
        let unit = size_bounds(p.gap, p.w0, &p.jumps, 1.0, 1.0, rho0)?;
        c1 = c1.min(p.area / unit[0]);
        c2 = c2.max(p.area / unit[1]);
        let r = p.normalized_ratio(rho0);
        lo = lo.min(r);
        hi = hi.max(r);
    }
    Ok(Calibration {
        c1,
        c2,
        ratio_spread: hi / lo,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TauFit {
    /// `0 < tau* < 1` before clamping.
    Fitted,
    /// All three integrals vanish.
    Undefined,
    /// `I_rho = 0` while `I_3rho > 0`.
    Infeasible,
    /// `I_rho = I_outer > 0`: every exponent works.
    Degenerate,
    /// `tau*` hit the boundary of (0, 1).
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeSpheresReport {
    pub center: Point,
    pub rho: f64,
    pub theta: f64,
    pub outer_radius: f64,
    pub i_rho: f64,
    pub i_3rho: f64,
    pub i_outer: f64,
    /// `log(I_outer/I_3rho) / log(I_outer/I_rho)`, the exponent at which the
    /// interpolation holds with `C (rho0/rho)^2 = 1`.
    pub tau_raw: Option<f64>,
    /// `tau_raw` clamped to `[0.01, 0.99]`.
    pub tau: Option<f64>,
    pub c: Option<f64>,
    pub status: TauFit,
    /// The inequality holds with the reported `(tau, C)`.
    pub holds: bool,
}

pub const TAU_RANGE: (f64, f64) = (0.01, 0.99);

/// Disk integrals at radii `rho`, `3 rho` and `7 rho / (2 theta)` around
/// `center` and the interpolation exponent they admit.
pub fn three_spheres_check(
    field: &EnergyField,
    mesh: &Mesh,
    center: Point,
    rho: f64,
    theta: f64,
    rho0: f64,
) -> Result<ThreeSpheresReport> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidInput(format!("theta must lie in (0, 1), got {theta}")));
    }
    if !(rho > 0.0 && rho < rho0) {
        return Err(Error::InvalidInput(format!("rho must lie in (0, rho0 = {rho0}), got {rho}")));
    }
    let outer = 7.0 * rho / (2.0 * theta);
    let distance = mesh.boundary_distance(&center);
    if distance < outer {
        return Err(Error::Inadmissible {
            distance,
            required: outer,
        });
    }
    let disk = |r: f64| {
        integrate(field, &Region::Disk { center, radius: r }, |k| field.density(k)).value
    };
    let (i1, i3, ir) = (disk(rho), disk(3.0 * rho), disk(outer));
    let scale = (rho / rho0).powi(2);
    let (tau_raw, status) = if ir <= 0.0 {
        (None, TauFit::Undefined)
    } else if i1 <= 0.0 {
        if i3 > 0.0 {
            (None, TauFit::Infeasible)
        } else {
            (Some(1.0), TauFit::Boundary)
        }
    } else if (ir / i1).ln() <= 0.0 {
        (None, TauFit::Degenerate)
    } else {
        let t = (ir / i3).ln() / (ir / i1).ln();
        (Some(t), if t > 0.0 && t < 1.0 { TauFit::Fitted } else { TauFit::Boundary })
    };
    let tau = match status {
        TauFit::Degenerate => Some(0.5),
        _ => tau_raw.map(|t| t.clamp(TAU_RANGE.0, TAU_RANGE.1)),
    };
    let c = match (tau, status) {
        (Some(t), TauFit::Fitted | TauFit::Boundary | TauFit::Degenerate) if i1 > 0.0 => {
            Some((i3.ln() - t * i1.ln() - (1.0 - t) * ir.ln()).exp() * scale)
        }
        _ => None,
    };
    let holds = match (tau, c) {
        (Some(t), Some(c)) => i3 <= c / scale * i1.powf(t) * ir.powf(1.0 - t) * (1.0 + 1e-12),
        _ => status == TauFit::Undefined,
    };
    Ok(ThreeSpheresReport {
        center,
        rho,
        theta,
        outer_radius: outer,
        i_rho: i1,
        i_3rho: i3,
        i_outer: ir,
        tau_raw,
        tau,
        c,
        status,
        holds,
    })
}

/// Grid points inside the mesh at depth at least `depth`, spaced by `pitch`.
pub fn admissible_centers(mesh: &Mesh, depth: f64, pitch: f64) -> Vec<Point> {
    let (mut lo, mut hi) = (Point::new(f64::INFINITY, f64::INFINITY), Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
    for p in mesh.nodes() {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let nx = ((hi.x - lo.x) / pitch).floor() as usize;
    let ny = ((hi.y - lo.y) / pitch).floor() as usize;
    let off = Point::new(
        0.5 * (hi.x - lo.x - nx as f64 * pitch),
        0.5 * (hi.y - lo.y - ny as f64 * pitch),
    );
    let grid: Vec<Point> = (0..=ny)
        .flat_map(|j| (0..=nx).map(move |i| (i, j)))
        .map(|(i, j)| Point::new(lo.x + off.x + i as f64 * pitch, lo.y + off.y + j as f64 * pitch))
        .collect();
    grid.into_par_iter()
        .filter(|p| point_in_mesh(mesh, p) && mesh.boundary_distance(p) >= depth)
        .collect()
}

fn point_in_mesh(mesh: &Mesh, p: &Point) -> bool {
    // Crossing parity over the boundary edges.
    let mut inside = false;
    for e in mesh.boundary_edges() {
        let a = mesh.nodes()[e.nodes[0]];
        let b = mesh.nodes()[e.nodes[1]];
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if x > p.x {
                inside = !inside;
            }
        }
    }
    inside
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpsReport {
    pub rho: f64,
    pub theta: f64,
    pub pitch: f64,
    pub centers: Vec<Point>,
    pub ratios: Vec<f64>,
    pub total: f64,
    /// Empirical propagation constant: the smallest ratio.
    pub min_ratio: f64,
    pub argmin: Point,
}

/// Default center pitch: the covering-square side `4 theta h1 / (2 sqrt2 theta + 7)`
/// (scaled by `rho0`) when a fatness depth is known, never above `rho / 2`.
pub fn lps_pitch(rho: f64, theta: f64, h1_rho0: Option<f64>) -> f64 {
    let half = rho / 2.0;
    match h1_rho0 {
        Some(h) if h > 0.0 => half.min(4.0 * theta * h / (2.0 * 2f64.sqrt() * theta + 7.0)),
        _ => half,
    }
}

/// `int_{B_rho(x)} E^2 / int_Omega E^2` over admissible grid centers.
pub fn lps_check(field: &EnergyField, mesh: &Mesh, rho: f64, theta: f64, pitch: f64) -> Result<LpsReport> {
    if !(rho > 0.0) || !(theta > 0.0 && theta < 1.0) || !(pitch > 0.0 && pitch <= rho / 2.0 * (1.0 + 1e-12)) {
        return Err(Error::InvalidInput(format!(
            "need rho > 0, theta in (0, 1), 0 < pitch <= rho/2; got rho = {rho}, theta = {theta}, pitch = {pitch}"
        )));
    }
    let total = integrate(field, &Region::All, |k| field.density(k)).value;
    if !(total > 0.0) {
        return Err(Error::Degenerate("zero energy field: ratios are 0/0".into()));
    }
    let depth = 7.0 * rho / (2.0 * theta);
    let centers = admissible_centers(mesh, depth, pitch);
    if centers.is_empty() {
        return Err(Error::InvalidInput(format!("no interior points at depth {depth}")));
    }
    let r2 = rho * rho;
    let ratios: Vec<f64> = centers
        .par_iter()
        .map(|c| {
            let mut s = 0.0;
            for k in 0..field.len() {
                let d = field.points[k] - c;
                if d.x.abs() < rho && d.y.abs() < rho && d.norm_squared() < r2 {
                    s += field.weights[k] * field.density(k);
                }
            }
            s / total
        })
        .collect();
    let (imin, &min_ratio) = ratios
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("centers are nonempty");
    Ok(LpsReport {
        rho,
        theta,
        pitch,
        argmin: centers[imin],
        centers,
        ratios,
        total,
        min_ratio,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizeEstimateReport {
    pub id: String,
    /// Area of the rasterized inclusion.
    pub true_area: f64,
    pub work: WorkReport,
    pub bounds: Option<[f64; 2]>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub jumps: Option<JumpBounds>,
    pub fatness: Fatness,
    pub frequency: f64,
    /// True when `frequency` came from the config rather than the load.
    pub frequency_override: bool,
    pub lemma: Option<EnergyLemmaReport>,
    pub sign_consistent: bool,
    pub warnings: Vec<String>,
}

impl SizeEstimateReport {
    pub fn calibration_point(&self) -> Option<CalibrationPoint> {
        Some(CalibrationPoint {
            area: self.true_area,
            gap: self.work.gap,
            w0: self.work.w0,
            jumps: self.jumps?,
        })
    }
}

pub fn run_size_experiment(config: &ExperimentConfig) -> Result<SizeEstimateReport> {
    run_prepared_size_experiment(&config.build()?)
}

/// Reference and inclusion solves, works, bounds and the lemma report.
pub fn run_prepared_size_experiment(exp: &Experiment) -> Result<SizeEstimateReport> {
    let rho0 = exp.rho0();
    let mesh = &exp.mesh;
    let (_, state0) = exp.solve_reference()?;
    let w0 = boundary_work(mesh, &exp.load, &state0)?;
    let frequency_value = match exp.config.frequency {
        Some(f) => f,
        None => {
            let sp = BoundarySpectrum::from_mesh(mesh)?;
            frequency(mesh, &sp, &exp.load, rho0)?.f
        }
    };
    let mut warnings = Vec::new();
    let Some((raster, _)) = &exp.inclusion else {
        return Ok(SizeEstimateReport {
            id: exp.config.id.clone(),
            true_area: 0.0,
            work: WorkReport::new(w0, w0),
            bounds: Some([0.0, 0.0]),
            c1: exp.config.c1,
            c2: exp.config.c2,
            jumps: None,
            fatness: Fatness { ratio: 1.0, empty: true },
            frequency: frequency_value,
            frequency_override: exp.config.frequency.is_some(),
            lemma: None,
            sign_consistent: true,
            warnings,
        });
    };
    warnings.extend(raster.warnings.iter().cloned());
    let jumps = exp.jumps()?;
    let (_, state) = exp.solve_inclusion()?;
    let w = boundary_work(mesh, &exp.load, &state)?;
    let work = WorkReport::new(w, w0);
    let fatness = fatness_ratio(mesh, raster, exp.domain.apriori().h1 * rho0)?;
    if !fatness.holds() {
        warnings.push(format!("fatness ratio {:.3} is below 1/2", fatness.ratio));
    }
    let lemma = verify_energy_lemma(
        mesh,
        &state0,
        &state,
        &exp.load,
        &exp.ellipticity,
        exp.material.thickness,
        &jumps,
        &raster.mask,
        exp.options.shear,
    )?;
    let sign_consistent = lemma.sign_consistent;
    let bounds = match (exp.config.c1, exp.config.c2, sign_consistent) {
        (Some(c1), Some(c2), true) => Some(size_bounds(work.gap, w0, &jumps, c1, c2, rho0)?),
        _ => None,
    };
    Ok(SizeEstimateReport {
        id: exp.config.id.clone(),
        true_area: raster.area(),
        work,
        bounds,
        c1: exp.config.c1,
        c2: exp.config.c2,
        jumps: Some(jumps),
        fatness,
        frequency: frequency_value,
        frequency_override: exp.config.frequency.is_some(),
        lemma: Some(lemma),
        sign_consistent,
        warnings,
    })
}

/// Energy field of a reference solve, sampled at `order` Gauss points.
pub fn reference_field(exp: &Experiment, order: usize) -> Result<(PlateState, EnergyField)> {
    let (_, state0) = exp.solve_reference()?;
    let field = strain_energy_density_with(&exp.mesh, &state0, exp.rho0(), exp.options.shear, order)?;
    Ok((state0, field))
}
