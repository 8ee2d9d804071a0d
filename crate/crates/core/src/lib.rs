//! Reissner–Mindlin plate solver with the tools needed to study size
//! estimates for elastic inclusions from a single boundary work measurement.

pub mod config;
pub mod element;
pub mod error;
pub mod estimates;
pub mod functionals;
pub mod geometry;
pub mod material;
pub mod report;
pub mod solver;
pub mod sparse;

pub use config::{Experiment, ExperimentConfig};
pub use element::ShearInterpolation;
pub use error::{Error, ErrorClass, Result};
pub use estimates::{
    calibrate_constants, lps_check, run_size_experiment, size_bounds, three_spheres_check, verify_energy_lemma,
    Calibration, CalibrationPoint, EnergyLemmaReport, LpsReport, SizeEstimateReport, ThreeSpheresReport,
};
pub use functionals::{
    boundary_work, frequency, region_energy, strain_energy_density, BoundarySpectrum, EnergyField, FrequencyReport,
    Region, WorkReport,
};
pub use geometry::{Domain, ElementMask, Mesh, Point, Polygon};
pub use material::{InclusionMaterial, IsotropicMaterial, JumpBounds, PlateTensors, Regime};
pub use solver::{BoundaryLoad, CompositeMaterial, LinearSystem, LoadFamily, PlateState, SolverOptions};
