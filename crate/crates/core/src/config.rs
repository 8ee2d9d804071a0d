//! Flat `key = value` experiment configuration and the setup it builds.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{
    generate_mesh_with, read_polygons, rasterize_inclusion, AprioriData, Domain, Mesh, MeshOptions, Point, Polygon,
    RasterizedInclusion,
};
use crate::material::{
    derive_plate_tensors, ellipticity_constants, jump_bounds, EllipticityConstants, InclusionMaterial,
    InclusionTensors, IsotropicMaterial, JumpBounds, PlateTensors,
};
use crate::solver::{
    dense_oracle_solve, solve, BoundaryLoad, CompositeMaterial, LinearSystem, LoadFamily, PlateState, SolverOptions,
    COMPATIBILITY_TOL, DENSE_DOF_CAP,
};

#[derive(Debug, Clone, PartialEq)]
pub enum DomainSpec {
    Polygon(PathBuf),
    Rect([f64; 4]),
}

#[derive(Debug, Clone, PartialEq)]
pub enum InclusionShape {
    Polygons(PathBuf),
    /// Regular polygon approximating a disk.
    Disk { center: Point, radius: f64, sides: usize },
    Rect([f64; 4]),
}

#[derive(Debug, Clone, PartialEq)]
pub enum JumpSpec {
    Contrast(f64),
    Tables { shear: PathBuf, bending: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub id: String,
    pub domain: DomainSpec,
    pub rho0: f64,
    pub m0: Option<f64>,
    pub m1: Option<f64>,
    pub s0: Option<f64>,
    pub x0: Option<Point>,
    pub d0: Option<f64>,
    pub h1: Option<f64>,
    pub target_size: f64,
    pub max_elements: usize,
    pub lambda: f64,
    pub mu: f64,
    pub thickness: f64,
    pub alpha0: Option<f64>,
    pub alpha1: Option<f64>,
    pub gamma0: Option<f64>,
    pub inclusion: Option<InclusionShape>,
    pub jump: Option<JumpSpec>,
    pub load: LoadFamily,
    pub theta: f64,
    pub rho: Option<f64>,
    pub center: Option<Point>,
    pub tol: f64,
    pub output: Option<PathBuf>,
    pub frequency: Option<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub dense_oracle: bool,
    pub full_integration: bool,
    pub timestamp: bool,
    /// Element divisions per side for `convergence`.
    pub levels: Vec<usize>,
    /// Gauss order of the sampled energy density.
    pub energy_order: usize,
    pub lps_pitch: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            id: "experiment".into(),
            domain: DomainSpec::Rect([0.0, 0.0, 1.0, 1.0]),
            rho0: 1.0,
            m0: None,
            m1: None,
            s0: None,
            x0: None,
            d0: None,
            h1: None,
            target_size: 0.05,
            max_elements: MeshOptions::default().max_elements,
            lambda: 1.0,
            mu: 1.0,
            thickness: 1.0,
            alpha0: None,
            alpha1: None,
            gamma0: None,
            inclusion: None,
            jump: None,
            load: LoadFamily::PureBending { a: 1.0 },
            theta: 0.3,
            rho: None,
            center: None,
            tol: COMPATIBILITY_TOL,
            output: None,
            frequency: None,
            c1: None,
            c2: None,
            dense_oracle: false,
            full_integration: false,
            timestamp: false,
            levels: vec![4, 8, 16, 32],
            energy_order: 2,
            lps_pitch: None,
        }
    }
}

fn numbers(key: &str, value: &str, n: usize) -> Result<Vec<f64>> {
    let v: Vec<f64> = value
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::InvalidInput(format!("{key}: {e}")))?;
    if v.len() != n {
        return Err(Error::InvalidInput(format!("{key}: expected {n} numbers, got {}", v.len())));
    }
    Ok(v)
}

fn number(key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .map_err(|e| Error::InvalidInput(format!("{key}: {e}")))
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::InvalidInput(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

impl ExperimentConfig {
    /// Parses config text; relative paths are resolved against `base`.
    pub fn parse(text: &str, source: &str, base: &Path) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut kappa = None;
        let mut shear_table = None;
        let mut bending_table = None;
        let path = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let loc = format!("{source}:{}", lineno + 1);
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::parse(&loc, "expected `key = value`"))?;
            let wrap = |e: Error| match e {
                Error::InvalidInput(m) => Error::parse(&loc, m),
                other => other,
            };
            match key {
                "id" => cfg.id = value.to_string(),
                "domain" => cfg.domain = DomainSpec::Polygon(path(value)),
                "domain_rect" => {
                    let v = numbers(key, value, 4).map_err(wrap)?;
                    cfg.domain = DomainSpec::Rect([v[0], v[1], v[2], v[3]]);
                }
                "rho0" => cfg.rho0 = number(key, value).map_err(wrap)?,
                "M0" | "m0" => cfg.m0 = Some(number(key, value).map_err(wrap)?),
                "M1" | "m1" => cfg.m1 = Some(number(key, value).map_err(wrap)?),
                "s0" => cfg.s0 = Some(number(key, value).map_err(wrap)?),
                "d0" => cfg.d0 = Some(number(key, value).map_err(wrap)?),
                "h1" => cfg.h1 = Some(number(key, value).map_err(wrap)?),
                "x0" => {
                    let v = numbers(key, value, 2).map_err(wrap)?;
                    cfg.x0 = Some(Point::new(v[0], v[1]));
                }
                "target_size" => cfg.target_size = number(key, value).map_err(wrap)?,
                "max_elements" => {
                    cfg.max_elements = value
                        .parse()
                        .map_err(|e| Error::parse(&loc, format!("max_elements: {e}")))?
                }
                "lambda" => cfg.lambda = number(key, value).map_err(wrap)?,
                "mu" => cfg.mu = number(key, value).map_err(wrap)?,
                "h" => cfg.thickness = number(key, value).map_err(wrap)?,
                "alpha0" => cfg.alpha0 = Some(number(key, value).map_err(wrap)?),
                "alpha1" => cfg.alpha1 = Some(number(key, value).map_err(wrap)?),
                "gamma0" => cfg.gamma0 = Some(number(key, value).map_err(wrap)?),
                "inclusion" => cfg.inclusion = Some(InclusionShape::Polygons(path(value))),
                "inclusion_disk" => {
                    let v: Vec<&str> = value.split(',').map(str::trim).collect();
                    if v.len() != 3 && v.len() != 4 {
                        return Err(Error::parse(&loc, "inclusion_disk: expected cx, cy, r[, sides]"));
                    }
                    let sides = match v.get(3) {
                        Some(s) => s.parse().map_err(|e| Error::parse(&loc, format!("sides: {e}")))?,
                        None => 64,
                    };
                    let c = numbers(key, &v[..3].join(","), 3).map_err(wrap)?;
                    cfg.inclusion = Some(InclusionShape::Disk {
                        center: Point::new(c[0], c[1]),
                        radius: c[2],
                        sides,
                    });
                }
                "inclusion_rect" => {
                    let v = numbers(key, value, 4).map_err(wrap)?;
                    cfg.inclusion = Some(InclusionShape::Rect([v[0], v[1], v[2], v[3]]));
                }
                "kappa" => kappa = Some(number(key, value).map_err(wrap)?),
                "shear_table" => shear_table = Some(path(value)),
                "bending_table" => bending_table = Some(path(value)),
                "load" => {
                    cfg.load = match LoadFamily::parse(value).map_err(wrap)? {
                        LoadFamily::Csv(p) => LoadFamily::Csv(path(&p.to_string_lossy())),
                        other => other,
                    }
                }
                "theta" => cfg.theta = number(key, value).map_err(wrap)?,
                "rho" => cfg.rho = Some(number(key, value).map_err(wrap)?),
                "center" => {
                    let v = numbers(key, value, 2).map_err(wrap)?;
                    cfg.center = Some(Point::new(v[0], v[1]));
                }
                "tol" => cfg.tol = number(key, value).map_err(wrap)?,
                "output" => cfg.output = Some(path(value)),
                "frequency" => cfg.frequency = Some(number(key, value).map_err(wrap)?),
                "C1" | "c1" => cfg.c1 = Some(number(key, value).map_err(wrap)?),
                "C2" | "c2" => cfg.c2 = Some(number(key, value).map_err(wrap)?),
                "dense_oracle" => cfg.dense_oracle = flag(key, value).map_err(wrap)?,
                "full_integration" => cfg.full_integration = flag(key, value).map_err(wrap)?,
                "timestamp" => cfg.timestamp = flag(key, value).map_err(wrap)?,
                "levels" => {
                    cfg.levels = value
                        .split(',')
                        .map(|s| s.trim().parse::<usize>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| Error::parse(&loc, format!("levels: {e}")))?
                }
                "energy_order" => {
                    cfg.energy_order = value
                        .parse()
                        .map_err(|e| Error::parse(&loc, format!("energy_order: {e}")))?
                }
                "lps_pitch" => cfg.lps_pitch = Some(number(key, value).map_err(wrap)?),
                _ => return Err(Error::parse(&loc, format!("unknown key {key:?}"))),
            }
        }
        cfg.jump = match (kappa, shear_table, bending_table) {
            (Some(k), None, None) => Some(JumpSpec::Contrast(k)),
            (None, Some(shear), Some(bending)) => Some(JumpSpec::Tables { shear, bending }),
            (None, None, None) => None,
            _ => {
                return Err(Error::parse(
                    source,
                    "give either kappa or both shear_table and bending_table",
                ))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = Self::parse(&text, &path.display().to_string(), base)?;
        if cfg.id == "experiment" {
            if let Some(stem) = path.file_stem() {
                cfg.id = stem.to_string_lossy().into_owned();
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rho0", self.rho0),
            ("target_size", self.target_size),
            ("h", self.thickness),
            ("tol", self.tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::InvalidInput(format!("theta must lie in (0, 1), got {}", self.theta)));
        }
        if let Some(r) = self.rho {
            if !(r > 0.0) {
                return Err(Error::InvalidInput(format!("rho must be positive, got {r}")));
            }
        }
        if let Some(f) = self.frequency {
            if !(f >= 1.0) {
                return Err(Error::InvalidInput(format!("frequency override must be >= 1, got {f}")));
            }
        }
        if self.energy_order == 0 {
            return Err(Error::InvalidInput("energy_order must be at least 1".into()));
        }
        if self.levels.is_empty() || self.levels.contains(&0) {
            return Err(Error::InvalidInput("levels must be positive mesh divisions".into()));
        }
        if self.inclusion.is_some() && self.jump.is_none() {
            return Err(Error::InvalidInput("an inclusion needs kappa or tensor tables".into()));
        }
        if let (DomainSpec::Polygon(p), _) | (_, Some(InclusionShape::Polygons(p))) = (&self.domain, &self.inclusion) {
            if !p.exists() {
                return Err(Error::InvalidInput(format!("{} does not exist", p.display())));
            }
        }
        if let Some(JumpSpec::Tables { shear, bending }) = &self.jump {
            for p in [shear, bending] {
                if !p.exists() {
                    return Err(Error::InvalidInput(format!("{} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    pub fn solver_options(&self) -> SolverOptions {
        let mut o = if self.full_integration {
            SolverOptions::full_integration()
        } else {
            SolverOptions::default()
        };
        o.compatibility_tol = self.tol;
        o
    }

    pub fn domain(&self) -> Result<Domain> {
        let polygon = match &self.domain {
            DomainSpec::Rect([x0, y0, x1, y1]) => Polygon::rectangle(*x0, *y0, *x1, *y1)?,
            DomainSpec::Polygon(p) => {
                let mut polys = read_polygons(p)?;
                if polys.len() != 1 {
                    return Err(Error::InvalidInput(format!(
                        "{} must hold exactly one polygon, found {}",
                        p.display(),
                        polys.len()
                    )));
                }
                polys.remove(0)
            }
        };
        let mut a = AprioriData::derived(&polygon, self.rho0);
        a.m0 = self.m0.unwrap_or(a.m0);
        a.m1 = self.m1.unwrap_or(a.m1);
        a.s0 = self.s0.unwrap_or(a.s0);
        a.x0 = self.x0.unwrap_or(a.x0);
        a.d0 = self.d0.unwrap_or(a.d0);
        a.h1 = self.h1.unwrap_or(a.h1);
        Domain::new(polygon, a)
    }

    pub fn material(&self, num_elements: usize) -> Result<IsotropicMaterial> {
        let mut m = IsotropicMaterial::uniform_tight(num_elements, self.lambda, self.mu, self.thickness);
        m.alpha0 = self.alpha0.unwrap_or(m.alpha0);
        m.alpha1 = self.alpha1.unwrap_or(m.alpha1);
        m.gamma0 = self.gamma0.unwrap_or(m.gamma0);
        m.validate()?;
        Ok(m)
    }

    pub fn inclusion_polygons(&self) -> Result<Vec<Polygon>> {
        Ok(match &self.inclusion {
            None => Vec::new(),
            Some(InclusionShape::Polygons(p)) => read_polygons(p)?,
            Some(InclusionShape::Disk { center, radius, sides }) => vec![Polygon::regular(*center, *radius, *sides)?],
            Some(InclusionShape::Rect([x0, y0, x1, y1])) => vec![Polygon::rectangle(*x0, *y0, *x1, *y1)?],
        })
    }

    /// Builds the domain, mesh, materials and load.
    pub fn build(&self) -> Result<Experiment> {
        self.validate()?;
        let domain = self.domain()?;
        let mesh = generate_mesh_with(
            &domain,
            self.target_size,
            &MeshOptions {
                max_elements: self.max_elements,
                ..MeshOptions::default()
            },
        )?;
        let material = self.material(mesh.num_elements())?;
        material.check_regularity(&mesh, self.rho0)?;
        let tensors = derive_plate_tensors(&material)?;
        let ellipticity = ellipticity_constants(&material)?;
        let inclusion = match &self.jump {
            Some(jump) if self.inclusion.is_some() => {
                let raster = rasterize_inclusion(&mesh, Some(&domain), &self.inclusion_polygons()?);
                let incl = match jump {
                    JumpSpec::Contrast(k) => InclusionMaterial::contrast(*k)?,
                    JumpSpec::Tables { shear, bending } => {
                        InclusionMaterial::Tensors(InclusionTensors::read(shear, bending)?)
                    }
                };
                Some((raster, incl))
            }
            _ => None,
        };
        let load = self.load.build(&mesh, &tensors)?;
        Ok(Experiment {
            config: self.clone(),
            domain,
            mesh,
            material,
            tensors,
            ellipticity,
            inclusion,
            load,
            options: self.solver_options(),
        })
    }
}

/// A configuration turned into concrete numerical objects.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub domain: Domain,
    pub mesh: Mesh,
    pub material: IsotropicMaterial,
    pub tensors: PlateTensors,
    pub ellipticity: EllipticityConstants,
    pub inclusion: Option<(RasterizedInclusion, InclusionMaterial)>,
    pub load: BoundaryLoad,
    pub options: SolverOptions,
}

impl Experiment {
    pub fn rho0(&self) -> f64 {
        self.domain.rho0()
    }

    pub fn reference_material(&self) -> CompositeMaterial {
        CompositeMaterial::homogeneous(self.tensors.clone())
    }

    pub fn inclusion_material(&self) -> CompositeMaterial {
        match &self.inclusion {
            Some((r, m)) => CompositeMaterial::with_inclusion(self.tensors.clone(), r.mask.clone(), m.clone()),
            None => self.reference_material(),
        }
    }

    /// `(eta, delta)` of the inclusion; an error without one.
    pub fn jumps(&self) -> Result<JumpBounds> {
        match &self.inclusion {
            Some((r, m)) => jump_bounds(&self.tensors, m, Some(&r.mask)),
            None => match &self.config.jump {
                Some(JumpSpec::Contrast(k)) => jump_bounds(&self.tensors, &InclusionMaterial::Contrast(*k), None),
                _ => Err(Error::InvalidJump("no inclusion configured".into())),
            },
        }
    }

    pub fn solve_with(&self, material: &CompositeMaterial) -> Result<(LinearSystem, PlateState)> {
        let sys = LinearSystem::assemble(&self.mesh, material, &self.load, &self.options)?;
        let state = if self.config.dense_oracle {
            dense_oracle_solve(&sys, DENSE_DOF_CAP)?
        } else {
            solve(&sys)?
        };
        Ok((sys, state))
    }

    pub fn solve_reference(&self) -> Result<(LinearSystem, PlateState)> {
        self.solve_with(&self.reference_material())
    }

    pub fn solve_inclusion(&self) -> Result<(LinearSystem, PlateState)> {
        self.solve_with(&self.inclusion_material())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let text = "# plate\nrho0 = 1\ntarget_size = 0.25\nkappa = 2\ninclusion_rect = 0.25, 0.25, 0.75, 0.75\nload = twist a=2\ntheta = 0.4\n";
        let cfg = ExperimentConfig::parse(text, "t", Path::new(".")).unwrap();
        assert_eq!(cfg.jump, Some(JumpSpec::Contrast(2.0)));
        assert_eq!(cfg.load, LoadFamily::Twist { a: 2.0 });
        assert_eq!(cfg.theta, 0.4);
        let exp = cfg.build().unwrap();
        assert_eq!(exp.mesh.num_elements(), 16);
        let (r, _) = exp.inclusion.as_ref().unwrap();
        assert_eq!(r.mask.count(), 4);
        assert_eq!(exp.jumps().unwrap().delta, 2.0);
    }

    #[test]
    fn errors_carry_locations() {
        let e = ExperimentConfig::parse("rho0 = 1\nbogus = 3\n", "cfg", Path::new(".")).unwrap_err();
        assert!(e.to_string().contains("cfg:2"), "{e}");
        assert!(ExperimentConfig::parse("rho0 = x", "cfg", Path::new(".")).is_err());
        assert!(ExperimentConfig::parse("theta = 1.5", "cfg", Path::new(".")).is_err());
        assert!(ExperimentConfig::parse("inclusion_rect = 0,0,1,1", "cfg", Path::new(".")).is_err());
        assert!(ExperimentConfig::parse("domain = /nonexistent/poly.txt", "cfg", Path::new(".")).is_err());
        assert!(ExperimentConfig::parse("kappa = 2\nshear_table = a.csv", "cfg", Path::new(".")).is_err());
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("incl.txt"), "0.4 0.4\n0.6 0.4\n0.6 0.6\n0.4 0.6\n").unwrap();
        std::fs::write(
            dir.path().join("exp.cfg"),
            "inclusion = incl.txt\nkappa = 0.5\ntarget_size = 0.1\n",
        )
        .unwrap();
        let cfg = ExperimentConfig::read(&dir.path().join("exp.cfg")).unwrap();
        assert_eq!(cfg.id, "exp");
        let exp = cfg.build().unwrap();
        assert_eq!(exp.inclusion.unwrap().0.mask.count(), 4);
    }
}
