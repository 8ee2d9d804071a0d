//! Pure-Neumann plate problem: boundary loads, assembly, the constrained
//! solve and a dense eigen-decomposition oracle.
//!
//! Unknowns are nodal, three per node in the order `(phi1, phi2, w)`. The
//! three rigid modes of the free plate are removed by the constraints
//! `int phi1 = int phi2 = int w = 0`, imposed with Lagrange multipliers.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen, Vector2};
use rayon::prelude::*;

use crate::element::{element_stiffness, shape, square_rule, PointOperators, ShearInterpolation};
use crate::error::{Error, Result};
use crate::geometry::{BoundaryEdge, ElementMask, Mesh, Point};
use crate::material::{ElementCoefficients, InclusionMaterial, PlateTensors};
use crate::sparse::{reverse_cuthill_mckee, CsrMatrix, LdlFactor};

/// Default relative tolerance for load compatibility.
pub const COMPATIBILITY_TOL: f64 = 1e-9;
/// Default dof cap of the dense oracle.
pub const DENSE_DOF_CAP: usize = 600;

pub fn dof(node: usize, component: usize) -> usize {
    3 * node + component
}

/// Two-point Gauss rule on a boundary edge: `(point, weight)` with weights
/// summing to the edge length.
pub fn edge_quadrature(mesh: &Mesh, edge: &BoundaryEdge) -> [(Point, f64); 2] {
    let a = mesh.nodes()[edge.nodes[0]];
    let b = mesh.nodes()[edge.nodes[1]];
    let g = 1.0 / 3f64.sqrt();
    let mid = nalgebra::center(&a, &b);
    let half = (b - a) * 0.5;
    [(mid - half * g, 0.5 * edge.length), (mid + half * g, 0.5 * edge.length)]
}

/// Linear edge shape functions at the two Gauss points.
fn edge_shapes() -> [[f64; 2]; 2] {
    let g = 1.0 / 3f64.sqrt();
    [[0.5 * (1.0 + g), 0.5 * (1.0 - g)], [0.5 * (1.0 - g), 0.5 * (1.0 + g)]]
}

/// Transverse force `q` and couple `m` at one boundary point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LoadSample {
    pub q: f64,
    pub m: Vector2<f64>,
}

/// Load resultants: `force = int Q`, `moment = int (Q x - M)`; both vanish
/// for a compatible load.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Compatibility {
    pub force: f64,
    pub moment: Vector2<f64>,
    /// `int |Q|` and `int (|Q||x| + |M|)`, the scales the resultants are compared against.
    pub force_scale: f64,
    pub moment_scale: f64,
}

impl Compatibility {
    pub fn holds(&self, tol: f64) -> bool {
        self.force.abs() <= tol * self.force_scale && self.moment.norm() <= tol * self.moment_scale
    }
}

/// Boundary load sampled at the two Gauss points of every boundary edge.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryLoad {
    samples: Vec<[LoadSample; 2]>,
    pub tag: Option<String>,
}

impl BoundaryLoad {
    pub fn zero(mesh: &Mesh) -> Self {
        BoundaryLoad {
            samples: vec![[LoadSample::default(); 2]; mesh.boundary_edges().len()],
            tag: None,
        }
    }

    pub fn from_fn(mesh: &Mesh, f: impl Fn(&Point, &BoundaryEdge) -> LoadSample) -> Self {
        let samples = mesh
            .boundary_edges()
            .iter()
            .map(|e| {
                let g = edge_quadrature(mesh, e);
                [f(&g[0].0, e), f(&g[1].0, e)]
            })
            .collect();
        BoundaryLoad { samples, tag: None }
    }

    pub fn from_samples(mesh: &Mesh, samples: Vec<[LoadSample; 2]>) -> Result<Self> {
        if samples.len() != mesh.boundary_edges().len() {
            return Err(Error::MeshMismatch(format!(
                "load has {} edges, mesh boundary has {}",
                samples.len(),
                mesh.boundary_edges().len()
            )));
        }
        Ok(BoundaryLoad { samples, tag: None })
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = Some(tag.into());
        self
    }

    pub fn samples(&self) -> &[[LoadSample; 2]] {
        &self.samples
    }

    pub fn scaled(&self, c: f64) -> Self {
        let samples = self
            .samples
            .iter()
            .map(|s| s.map(|p| LoadSample { q: c * p.q, m: p.m * c }))
            .collect();
        BoundaryLoad {
            samples,
            tag: self.tag.clone(),
        }
    }

    pub fn plus(&self, other: &BoundaryLoad) -> Self {
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| {
                [0, 1].map(|k| LoadSample {
                    q: a[k].q + b[k].q,
                    m: a[k].m + b[k].m,
                })
            })
            .collect();
        BoundaryLoad { samples, tag: None }
    }

    fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        if self.samples.len() != mesh.boundary_edges().len() {
            return Err(Error::MeshMismatch(format!(
                "load has {} edges, mesh boundary has {}",
                self.samples.len(),
                mesh.boundary_edges().len()
            )));
        }
        Ok(())
    }

    pub fn compatibility(&self, mesh: &Mesh) -> Compatibility {
        let mut c = Compatibility {
            force: 0.0,
            moment: Vector2::zeros(),
            force_scale: 0.0,
            moment_scale: 0.0,
        };
        for (edge, s) in mesh.boundary_edges().iter().zip(&self.samples) {
            for ((x, w), p) in edge_quadrature(mesh, edge).iter().zip(s) {
                c.force += w * p.q;
                c.moment += (x.coords * p.q - p.m) * *w;
                c.force_scale += w * p.q.abs();
                c.moment_scale += w * (p.q.abs() * x.coords.norm() + p.m.norm());
            }
        }
        c
    }

    /// Removes the resultants: subtracts the mean of `Q`, then adds the
    /// constant couple that balances the remaining moment.
    pub fn make_compatible(&mut self, mesh: &Mesh) {
        let perimeter: f64 = mesh.boundary_edges().iter().map(|e| e.length).sum();
        let mean_q = self.compatibility(mesh).force / perimeter;
        for s in &mut self.samples {
            for p in s.iter_mut() {
                p.q -= mean_q;
            }
        }
        let shift = self.compatibility(mesh).moment / perimeter;
        for s in &mut self.samples {
            for p in s.iter_mut() {
                p.m += shift;
            }
        }
    }

    /// `(||Q||, ||M||)` in L2 of the boundary.
    pub fn l2_norms(&self, mesh: &Mesh) -> (f64, f64) {
        let mut q = 0.0;
        let mut m = 0.0;
        for (edge, s) in mesh.boundary_edges().iter().zip(&self.samples) {
            for ((_, w), p) in edge_quadrature(mesh, edge).iter().zip(s) {
                q += w * p.q * p.q;
                m += w * p.m.norm_squared();
            }
        }
        (q.sqrt(), m.sqrt())
    }

    /// Reads `edge_id,gauss,q,m1,m2` rows (`gauss` is 0 or 1).
    pub fn read_csv(path: &Path, mesh: &Mesh) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut samples = vec![[LoadSample::default(); 2]; mesh.boundary_edges().len()];
        let mut seen = vec![[false; 2]; samples.len()];
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (lineno == 0 && line.starts_with("edge")) {
                continue;
            }
            let loc = || format!("{}:{}", path.display(), lineno + 1);
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 5 {
                return Err(Error::parse(loc(), "expected edge_id,gauss,q,m1,m2"));
            }
            let edge: usize = f[0].parse().map_err(|_| Error::parse(loc(), "bad edge id"))?;
            let g: usize = f[1].parse().map_err(|_| Error::parse(loc(), "bad gauss index"))?;
            if edge >= samples.len() || g > 1 {
                return Err(Error::parse(loc(), "edge or gauss index out of range"));
            }
            let v: Vec<f64> = f[2..]
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(loc(), e.to_string()))?;
            samples[edge][g] = LoadSample {
                q: v[0],
                m: Vector2::new(v[1], v[2]),
            };
            seen[edge][g] = true;
        }
        if let Some(e) = seen.iter().position(|s| !(s[0] && s[1])) {
            return Err(Error::InvalidInput(format!("load file has no samples for boundary edge {e}")));
        }
        Ok(BoundaryLoad { samples, tag: None })
    }
}

/// Named analytic load families.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadFamily {
    /// `M = B a (1 + nu) n`, `Q = 0`.
    PureBending { a: f64 },
    /// `M = B a (1 - nu) (n2, n1)`, `Q = 0`.
    Twist { a: f64 },
    /// `M = m n` on edges facing the `x1` direction, balanced.
    EdgeMoment { m: f64 },
    /// `Q = q sign(n1)` on edges facing the `x1` direction, balanced.
    ShearPair { q: f64 },
    Csv(std::path::PathBuf),
}

impl LoadFamily {
    /// Parses `name key=value ...`, e.g. `pure_bending a=1` or `csv path`.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut parts = spec.split_whitespace();
        let name = parts
            .next()
            .ok_or_else(|| Error::parse("load", "empty load specification"))?;
        let rest: Vec<&str> = parts.collect();
        if name == "csv" {
            return match rest.as_slice() {
                [path] => Ok(LoadFamily::Csv(path.into())),
                _ => Err(Error::parse("load", "csv load expects one path")),
            };
        }
        let param = |key: &str, default: f64| -> Result<f64> {
            let mut value = default;
            for kv in &rest {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::parse("load", format!("expected key=value, got `{kv}`")))?;
                if k != key {
                    return Err(Error::parse("load", format!("unknown parameter `{k}` for {name}")));
                }
                value = v
                    .parse()
                    .map_err(|_| Error::parse("load", format!("bad number `{v}`")))?;
            }
            Ok(value)
        };
        match name {
            "pure_bending" => Ok(LoadFamily::PureBending { a: param("a", 1.0)? }),
            "twist" => Ok(LoadFamily::Twist { a: param("a", 1.0)? }),
            "edge_moment" => Ok(LoadFamily::EdgeMoment { m: param("m", 1.0)? }),
            "shear_pair" => Ok(LoadFamily::ShearPair { q: param("q", 1.0)? }),
            other => Err(Error::parse("load", format!("unknown load family `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LoadFamily::PureBending { .. } => "pure_bending",
            LoadFamily::Twist { .. } => "twist",
            LoadFamily::EdgeMoment { .. } => "edge_moment",
            LoadFamily::ShearPair { .. } => "shear_pair",
            LoadFamily::Csv(_) => "csv",
        }
    }

    /// Samples the family on `mesh`; couples use the background rigidity of
    /// the element owning each edge.
    pub fn build(&self, mesh: &Mesh, tensors: &PlateTensors) -> Result<BoundaryLoad> {
        if tensors.len() != mesh.num_elements() {
            return Err(Error::MeshMismatch(format!(
                "material has {} elements, mesh has {}",
                tensors.len(),
                mesh.num_elements()
            )));
        }
        let facing_x = |e: &BoundaryEdge| e.normal.x.abs() > 0.5;
        let mut load = match *self {
            LoadFamily::PureBending { a } => BoundaryLoad::from_fn(mesh, |_, e| LoadSample {
                q: 0.0,
                m: e.normal * (tensors.rigidity[e.element] * a * (1.0 + tensors.poisson[e.element])),
            }),
            LoadFamily::Twist { a } => BoundaryLoad::from_fn(mesh, |_, e| LoadSample {
                q: 0.0,
                m: Vector2::new(e.normal.y, e.normal.x)
                    * (tensors.rigidity[e.element] * a * (1.0 - tensors.poisson[e.element])),
            }),
            LoadFamily::EdgeMoment { m } => BoundaryLoad::from_fn(mesh, |_, e| LoadSample {
                q: 0.0,
                m: if facing_x(e) { e.normal * m } else { Vector2::zeros() },
            }),
            LoadFamily::ShearPair { q } => BoundaryLoad::from_fn(mesh, |_, e| LoadSample {
                q: if facing_x(e) { q * e.normal.x.signum() } else { 0.0 },
                m: Vector2::zeros(),
            }),
            LoadFamily::Csv(ref path) => BoundaryLoad::read_csv(path, mesh)?,
        };
        if !matches!(self, LoadFamily::Csv(_)) {
            load.make_compatible(mesh);
        }
        Ok(load.with_tag(self.name()))
    }
}

/// Background plate tensors with an optional inclusion override.
#[derive(Debug, Clone)]
pub struct CompositeMaterial {
    pub background: PlateTensors,
    pub inclusion: Option<(ElementMask, InclusionMaterial)>,
}

impl CompositeMaterial {
    pub fn homogeneous(background: PlateTensors) -> Self {
        CompositeMaterial {
            background,
            inclusion: None,
        }
    }

    pub fn with_inclusion(background: PlateTensors, mask: ElementMask, inclusion: InclusionMaterial) -> Self {
        CompositeMaterial {
            background,
            inclusion: Some((mask, inclusion)),
        }
    }

    pub fn coefficients(&self, e: usize) -> Result<ElementCoefficients> {
        let bg = self.background.coefficients(e);
        match &self.inclusion {
            Some((mask, incl)) if mask.contains(e) => incl.coefficients(&bg, e),
            _ => Ok(bg),
        }
    }

    fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        if self.background.len() != mesh.num_elements() {
            return Err(Error::MeshMismatch(format!(
                "material has {} elements, mesh has {}",
                self.background.len(),
                mesh.num_elements()
            )));
        }
        if let Some((mask, _)) = &self.inclusion {
            if mask.len() != mesh.num_elements() {
                return Err(Error::MeshMismatch("inclusion mask does not match the mesh".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub shear: ShearInterpolation,
    /// Gauss points per direction for element integration.
    pub order: usize,
    pub compatibility_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            shear: ShearInterpolation::AssumedStrain,
            order: 2,
            compatibility_tol: COMPATIBILITY_TOL,
        }
    }
}

impl SolverOptions {
    pub fn full_integration() -> Self {
        SolverOptions {
            shear: ShearInterpolation::Full,
            ..Default::default()
        }
    }
}

pub fn assemble_stiffness(mesh: &Mesh, material: &CompositeMaterial, opts: &SolverOptions) -> Result<CsrMatrix> {
    material.check_mesh(mesh)?;
    let blocks: Vec<_> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let coeffs = material.coefficients(e)?;
            element_stiffness(&mesh.element_coords(e), &coeffs, opts.shear, opts.order)
                .ok_or(Error::SingularJacobian { element: e })
        })
        .collect::<Result<_>>()?;
    let mut triplets = Vec::with_capacity(144 * blocks.len());
    for (el, k) in mesh.elements().iter().zip(&blocks) {
        for a in 0..12 {
            let ga = dof(el[a / 3], a % 3);
            for b in 0..12 {
                triplets.push((ga, dof(el[b / 3], b % 3), k[(a, b)]));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(mesh.num_dofs(), &triplets))
}

/// Rows of the normalization functionals `int phi1`, `int phi2`, `int w`.
pub fn constraint_rows(mesh: &Mesh) -> [Vec<f64>; 3] {
    let mut rows = [0, 1, 2].map(|_| vec![0.0; mesh.num_dofs()]);
    let rule = square_rule(2);
    for (e, el) in mesh.elements().iter().enumerate() {
        let x = mesh.element_coords(e);
        for &(r, s, w) in &rule {
            let op = PointOperators::new(&x, r, s, ShearInterpolation::Full);
            let Some(op) = op else { continue };
            for i in 0..4 {
                let v = w * op.det_j * op.shape[i];
                for (c, row) in rows.iter_mut().enumerate() {
                    row[dof(el[i], c)] += v;
                }
            }
        }
    }
    rows
}

/// Load vector `f_i = int Q v_i + M . psi_i` and the load's resultants.
pub fn assemble_load(mesh: &Mesh, load: &BoundaryLoad, tol: f64) -> Result<(Vec<f64>, Compatibility)> {
    load.check_mesh(mesh)?;
    let compat = load.compatibility(mesh);
    if !compat.holds(tol) {
        return Err(Error::IncompatibleLoad {
            force: compat.force,
            moment_x: compat.moment.x,
            moment_y: compat.moment.y,
        });
    }
    Ok((load_vector(mesh, load), compat))
}

/// Load vector without the compatibility check.
pub fn load_vector(mesh: &Mesh, load: &BoundaryLoad) -> Vec<f64> {
    let mut f = vec![0.0; mesh.num_dofs()];
    let shapes = edge_shapes();
    for (edge, s) in mesh.boundary_edges().iter().zip(load.samples()) {
        for (g, ((_, w), p)) in edge_quadrature(mesh, edge).iter().zip(s).enumerate() {
            for (k, &node) in edge.nodes.iter().enumerate() {
                let n = shapes[g][k] * w;
                f[dof(node, 0)] += n * p.m.x;
                f[dof(node, 1)] += n * p.m.y;
                f[dof(node, 2)] += n * p.q;
            }
        }
    }
    f
}

/// Assembled stiffness, normalization constraints and load vector.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub stiffness: CsrMatrix,
    pub constraints: [Vec<f64>; 3],
    pub rhs: Vec<f64>,
    pub compatibility: Compatibility,
}

impl LinearSystem {
    pub fn assemble(
        mesh: &Mesh,
        material: &CompositeMaterial,
        load: &BoundaryLoad,
        opts: &SolverOptions,
    ) -> Result<Self> {
        let stiffness = assemble_stiffness(mesh, material, opts)?;
        let (rhs, compatibility) = assemble_load(mesh, load, opts.compatibility_tol)?;
        Ok(LinearSystem {
            stiffness,
            constraints: constraint_rows(mesh),
            rhs,
            compatibility,
        })
    }

    pub fn num_dofs(&self) -> usize {
        self.stiffness.dim()
    }
}

/// Normalized discrete solution.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateState {
    pub dofs: Vec<f64>,
    /// `||K u - f|| / ||f||` (absolute when `f = 0`).
    pub residual: f64,
    /// `(int phi1, int phi2, int w)`.
    pub normalization: [f64; 3],
}

impl PlateState {
    pub fn zero(mesh: &Mesh) -> Self {
        PlateState {
            dofs: vec![0.0; mesh.num_dofs()],
            residual: 0.0,
            normalization: [0.0; 3],
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.dofs.len() / 3
    }

    pub fn phi(&self, node: usize) -> Vector2<f64> {
        Vector2::new(self.dofs[dof(node, 0)], self.dofs[dof(node, 1)])
    }

    pub fn w(&self, node: usize) -> f64 {
        self.dofs[dof(node, 2)]
    }

    /// `u^T K u`.
    pub fn energy(&self, stiffness: &CsrMatrix) -> f64 {
        stiffness.quadratic_form(&self.dofs)
    }

    pub fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        if self.dofs.len() != mesh.num_dofs() {
            return Err(Error::MeshMismatch(format!(
                "state has {} dofs, mesh has {}",
                self.dofs.len(),
                mesh.num_dofs()
            )));
        }
        Ok(())
    }

    /// Writes `node_id,x,y,phi1,phi2,w` rows.
    pub fn write_csv<W: Write>(&self, mesh: &Mesh, mut out: W) -> Result<()> {
        self.check_mesh(mesh)?;
        writeln!(out, "node_id,x,y,phi1,phi2,w")?;
        for (i, p) in mesh.nodes().iter().enumerate() {
            let phi = self.phi(i);
            writeln!(out, "{i},{},{},{:e},{:e},{:e}", p.x, p.y, phi.x, phi.y, self.w(i))?;
        }
        Ok(())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn finish_state(system: &LinearSystem, dofs: Vec<f64>) -> PlateState {
    let ku = system.stiffness.matvec(&dofs);
    let r: Vec<f64> = ku.iter().zip(&system.rhs).map(|(a, b)| a - b).collect();
    let fnorm = norm(&system.rhs);
    let residual = if fnorm > 0.0 { norm(&r) / fnorm } else { norm(&r) };
    let normalization = [0, 1, 2].map(|c| dot(&system.constraints[c], &dofs));
    PlateState {
        dofs,
        residual,
        normalization,
    }
}

/// Factorization of the bordered matrix `[K C^T; C 0]`, reusable across loads.
///
/// Ordering: all nodes but one in reverse Cuthill–McKee order, then the three
/// multipliers, then the held-back node. Every leading block is then
/// nonsingular (the rigid modes do not vanish at any single node), so the
/// factorization needs no pivoting.
#[derive(Debug, Clone)]
pub struct SaddleFactorization {
    matrix: CsrMatrix,
    factor: LdlFactor,
    n: usize,
    scale: f64,
}

/// Relative size of the multiplier force above which the right-hand side is
/// reported as having a kernel component.
pub const KERNEL_TOL: f64 = 1e-8;

impl SaddleFactorization {
    pub fn new(stiffness: &CsrMatrix, constraints: &[Vec<f64>; 3]) -> Result<Self> {
        let n = stiffness.dim();
        if n % 3 != 0 || n < 3 {
            return Err(Error::InvalidInput(format!("stiffness dimension {n} is not 3 per node")));
        }
        let nodes = n / 3;
        let kmax = (0..n).map(|i| stiffness.get(i, i).abs()).fold(0.0, f64::max);
        let cmax = constraints.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(kmax > 0.0 && cmax > 0.0) {
            return Err(Error::Degenerate("empty stiffness or constraints".into()));
        }
        let scale = kmax / cmax;

        let mut triplets = Vec::with_capacity(stiffness.nnz() + 6 * n);
        for i in 0..n {
            for (j, v) in stiffness.row(i) {
                triplets.push((i, j, v));
            }
        }
        for (c, row) in constraints.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    triplets.push((n + c, j, scale * v));
                    triplets.push((j, n + c, scale * v));
                }
            }
        }
        let matrix = CsrMatrix::from_triplets(n + 3, &triplets);

        let mut adj = vec![Vec::new(); nodes];
        for i in 0..n {
            for (j, _) in stiffness.row(i) {
                let (a, b) = (i / 3, j / 3);
                if a != b && adj[a].last() != Some(&b) {
                    adj[a].push(b);
                }
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        let order = reverse_cuthill_mckee(&adj);
        let anchor = *order.last().expect("at least one node");
        let mut perm = Vec::with_capacity(n + 3);
        for &node in &order[..nodes - 1] {
            perm.extend([dof(node, 0), dof(node, 1), dof(node, 2)]);
        }
        perm.extend([n, n + 1, n + 2]);
        perm.extend([dof(anchor, 0), dof(anchor, 1), dof(anchor, 2)]);
        let factor = LdlFactor::factor(&matrix, perm)?;
        Ok(SaddleFactorization {
            matrix,
            factor,
            n,
            scale,
        })
    }

    /// Pivot signs: a nonsingular saddle matrix has `n` positive and 3 negative.
    pub fn inertia(&self) -> (usize, usize) {
        self.factor.inertia()
    }

    pub fn factor_nnz(&self) -> usize {
        self.factor.factor_nnz()
    }

    /// Solves for one right-hand side with two steps of iterative refinement.
    /// Returns the primal part and the (unscaled) multipliers.
    pub fn solve_raw(&self, rhs: &[f64]) -> (Vec<f64>, [f64; 3]) {
        let mut b = rhs.to_vec();
        b.extend([0.0; 3]);
        let mut x = self.factor.solve(&b);
        for _ in 0..2 {
            let ax = self.matrix.matvec(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(a, c)| a - c).collect();
            let dx = self.factor.solve(&r);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
        }
        let lambda = [0, 1, 2].map(|c| x[self.n + c] * self.scale);
        x.truncate(self.n);
        (x, lambda)
    }

    pub fn solve(&self, system: &LinearSystem) -> Result<PlateState> {
        self.solve_rhs(system, &system.rhs)
    }

    /// Solves with `rhs` in place of the system's own load vector.
    pub fn solve_rhs(&self, system: &LinearSystem, rhs: &[f64]) -> Result<PlateState> {
        let fnorm = norm(rhs);
        if fnorm == 0.0 {
            return Ok(PlateState {
                dofs: vec![0.0; self.n],
                residual: 0.0,
                normalization: [0.0; 3],
            });
        }
        let (u, lambda) = self.solve_raw(rhs);
        // A compatible right-hand side needs no multiplier force.
        let force: Vec<f64> = (0..self.n)
            .map(|j| (0..3).map(|c| lambda[c] * system.constraints[c][j]).sum())
            .collect();
        let rel = norm(&force) / fnorm;
        if rel > KERNEL_TOL {
            return Err(Error::KernelComponent(rel));
        }
        let mut state = finish_state(system, u);
        if rhs.as_ptr() != system.rhs.as_ptr() {
            let ku = system.stiffness.matvec(&state.dofs);
            let r: Vec<f64> = ku.iter().zip(rhs).map(|(a, b)| a - b).collect();
            state.residual = norm(&r) / fnorm;
        }
        Ok(state)
    }
}

/// Sparse path: factor the bordered system and solve.
pub fn solve(system: &LinearSystem) -> Result<PlateState> {
    SaddleFactorization::new(&system.stiffness, &system.constraints)?.solve(system)
}

/// Eigenvalues below this fraction of the largest count as zero.
pub const KERNEL_EIG_TOL: f64 = 1e-10;

/// Number of numerically zero eigenvalues of the (dense) stiffness.
pub fn kernel_dimension(stiffness: &CsrMatrix, cap: usize) -> Result<usize> {
    let n = stiffness.dim();
    if n > cap {
        return Err(Error::DofCap { dofs: n, cap });
    }
    let eig = SymmetricEigen::new(stiffness.to_dense()).eigenvalues;
    let max = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(eig.iter().filter(|v| v.abs() < KERNEL_EIG_TOL * max).count())
}

/// Oracle: dense eigen-decomposition of `K`, inversion on the complement of
/// the numerical kernel, then the kernel shift that enforces normalization.
pub fn dense_oracle_solve(system: &LinearSystem, cap: usize) -> Result<PlateState> {
    let n = system.num_dofs();
    if n > cap {
        return Err(Error::DofCap { dofs: n, cap });
    }
    let eig = SymmetricEigen::new(system.stiffness.to_dense());
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let f = DVector::from_column_slice(&system.rhs);
    let fnorm = f.norm();
    let mut u = DVector::zeros(n);
    let mut kernel = Vec::new();
    for k in 0..n {
        let v = eig.eigenvectors.column(k);
        let lam = eig.eigenvalues[k];
        if lam.abs() < KERNEL_EIG_TOL * max {
            kernel.push(v.clone_owned());
        } else {
            u += v * (v.dot(&f) / lam);
        }
    }
    if fnorm > 0.0 {
        let comp = kernel.iter().map(|z| z.dot(&f).powi(2)).sum::<f64>().sqrt() / fnorm;
        if comp > KERNEL_TOL {
            return Err(Error::KernelComponent(comp));
        }
    }
    if kernel.len() != 3 {
        return Err(Error::Degenerate(format!("stiffness kernel has dimension {}", kernel.len())));
    }
    let c = DMatrix::from_fn(3, n, |i, j| system.constraints[i][j]);
    let z = DMatrix::from_columns(&kernel);
    let cz = &c * &z;
    let coef = cz
        .lu()
        .solve(&(&c * &u))
        .ok_or_else(|| Error::Degenerate("constraints do not fix the rigid modes".into()))?;
    u -= z * coef;
    Ok(finish_state(system, u.as_slice().to_vec()))
}

/// The three rigid modes: `(phi = e1, w = -x1)`, `(phi = e2, w = -x2)`, `(0, 1)`.
pub fn rigid_modes(mesh: &Mesh) -> [Vec<f64>; 3] {
    let mut modes = [0, 1, 2].map(|_| vec![0.0; mesh.num_dofs()]);
    for (i, p) in mesh.nodes().iter().enumerate() {
        modes[0][dof(i, 0)] = 1.0;
        modes[0][dof(i, 2)] = -p.x;
        modes[1][dof(i, 1)] = 1.0;
        modes[1][dof(i, 2)] = -p.y;
        modes[2][dof(i, 2)] = 1.0;
    }
    modes
}

/// Weak residual of a state against an enriched test space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualReport {
    /// `max_i |(K3 u - f)_i| / max_i |f_i|`, with `K3` integrated by 3x3 Gauss.
    pub nodal: f64,
    /// Largest `|a(u, b)| / max_i |f_i|` over element bubble tests `b`.
    pub bubble: f64,
    /// Element attaining `bubble`.
    pub worst_element: usize,
}

pub fn residual_check(
    mesh: &Mesh,
    material: &CompositeMaterial,
    load: &BoundaryLoad,
    state: &PlateState,
    opts: &SolverOptions,
) -> Result<ResidualReport> {
    state.check_mesh(mesh)?;
    let enriched = SolverOptions { order: 3, ..*opts };
    let k3 = assemble_stiffness(mesh, material, &enriched)?;
    load.check_mesh(mesh)?;
    let f = load_vector(mesh, load);
    let fmax = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if fmax > 0.0 { fmax } else { 1.0 };
    let ku = k3.matvec(&state.dofs);
    let nodal = ku
        .iter()
        .zip(&f)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        / scale;

    let rule = square_rule(3);
    let per_element: Vec<f64> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| -> Result<f64> {
            let x = mesh.element_coords(e);
            let coeffs = material.coefficients(e)?;
            let el = mesh.elements()[e];
            let u: nalgebra::SVector<f64, 12> =
                nalgebra::SVector::from_fn(|a, _| state.dofs[dof(el[a / 3], a % 3)]);
            let mut r = [0.0; 3];
            for &(rr, ss, w) in &rule {
                let op = PointOperators::new(&x, rr, ss, opts.shear)
                    .ok_or(Error::SingularJacobian { element: e })?;
                let f = w * op.det_j;
                let b = (1.0 - rr * rr) * (1.0 - ss * ss);
                let db_ref = Vector2::new(-2.0 * rr * (1.0 - ss * ss), -2.0 * ss * (1.0 - rr * rr));
                let db = bubble_gradient(&x, rr, ss, &db_ref);
                let stress = coeffs.bending * (op.bending * u);
                // Curvature of (b, 0) is (b_x, 0, b_y); of (0, b) is (0, b_y, b_x).
                r[0] += f * (stress[0] * db.x + stress[2] * db.y);
                r[1] += f * (stress[1] * db.y + stress[2] * db.x);
                if opts.shear == ShearInterpolation::Full {
                    // The assumed strain of an edge-vanishing bubble is zero.
                    let shear = coeffs.shear * (op.shear * u);
                    r[0] += f * shear.x * b;
                    r[1] += f * shear.y * b;
                    r[2] += f * shear.dot(&db);
                }
            }
            Ok(r.iter().fold(0.0f64, |m, v| m.max(v.abs())))
        })
        .collect::<Result<_>>()?;
    let (worst_element, worst) = per_element
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |acc, (e, v)| if *v > acc.1 { (e, *v) } else { acc });
    Ok(ResidualReport {
        nodal,
        bubble: worst / scale,
        worst_element,
    })
}

/// Cartesian gradient `J^{-1} d_ref` of a function with reference gradient `d_ref`.
fn bubble_gradient(x: &[Point; 4], r: f64, s: f64, d_ref: &Vector2<f64>) -> Vector2<f64> {
    let dn = [
        [-0.25 * (1.0 - s), -0.25 * (1.0 - r)],
        [0.25 * (1.0 - s), -0.25 * (1.0 + r)],
        [0.25 * (1.0 + s), 0.25 * (1.0 + r)],
        [-0.25 * (1.0 + s), 0.25 * (1.0 - r)],
    ];
    let mut j = Matrix2::zeros();
    for i in 0..4 {
        j[(0, 0)] += dn[i][0] * x[i].x;
        j[(0, 1)] += dn[i][0] * x[i].y;
        j[(1, 0)] += dn[i][1] * x[i].x;
        j[(1, 1)] += dn[i][1] * x[i].y;
    }
    j.try_inverse().map(|ji| ji * d_ref).unwrap_or_else(Vector2::zeros)
}

/// Closed-form free-plate solutions with zero shear strain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExactKind {
    /// `phi = a (x - c)`, `w = -a |x - c|^2 / 2`.
    PureBending,
    /// `phi = a (x2 - c2, x1 - c1)`, `w = -a (x1 - c1)(x2 - c2)`.
    Twist,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactSolution {
    pub kind: ExactKind,
    pub a: f64,
    pub center: Point,
    /// Constant added to `w` so that its mean over the mesh vanishes.
    pub shift: f64,
}

impl ExactSolution {
    pub fn new(mesh: &Mesh, kind: ExactKind, a: f64) -> Self {
        let mut sol = ExactSolution {
            kind,
            a,
            center: mesh.area_centroid(),
            shift: 0.0,
        };
        let rule = square_rule(3);
        let mut integral = 0.0;
        for e in 0..mesh.num_elements() {
            let x = mesh.element_coords(e);
            for &(r, s, w) in &rule {
                if let Some(op) = PointOperators::new(&x, r, s, ShearInterpolation::Full) {
                    integral += w * op.det_j * sol.w(&op.position);
                }
            }
        }
        sol.shift = -integral / mesh.area();
        sol
    }

    pub fn pure_bending(mesh: &Mesh, a: f64) -> Self {
        ExactSolution::new(mesh, ExactKind::PureBending, a)
    }

    pub fn twist(mesh: &Mesh, a: f64) -> Self {
        ExactSolution::new(mesh, ExactKind::Twist, a)
    }

    pub fn phi(&self, x: &Point) -> Vector2<f64> {
        let d = x - self.center;
        match self.kind {
            ExactKind::PureBending => d * self.a,
            ExactKind::Twist => Vector2::new(d.y, d.x) * self.a,
        }
    }

    pub fn grad_phi(&self) -> Matrix2<f64> {
        match self.kind {
            ExactKind::PureBending => Matrix2::identity() * self.a,
            ExactKind::Twist => Matrix2::new(0.0, 1.0, 1.0, 0.0) * self.a,
        }
    }

    pub fn w(&self, x: &Point) -> f64 {
        let d = x - self.center;
        let raw = match self.kind {
            ExactKind::PureBending => -0.5 * self.a * d.norm_squared(),
            ExactKind::Twist => -self.a * d.x * d.y,
        };
        raw + self.shift
    }

    /// `grad w = -phi`.
    pub fn grad_w(&self, x: &Point) -> Vector2<f64> {
        -self.phi(x)
    }

    /// Matching boundary load `M = (P grad phi) n`, `Q = 0`.
    pub fn load(&self, mesh: &Mesh, tensors: &PlateTensors) -> BoundaryLoad {
        let g = self.grad_phi();
        BoundaryLoad::from_fn(mesh, |_, e| {
            let p = crate::material::bending_apply(tensors, e.element, &g);
            LoadSample {
                q: 0.0,
                m: p * e.normal,
            }
        })
    }

    pub fn interpolate(&self, mesh: &Mesh) -> PlateState {
        let mut dofs = vec![0.0; mesh.num_dofs()];
        for (i, p) in mesh.nodes().iter().enumerate() {
            let phi = self.phi(p);
            dofs[dof(i, 0)] = phi.x;
            dofs[dof(i, 1)] = phi.y;
            dofs[dof(i, 2)] = self.w(p);
        }
        PlateState {
            dofs,
            residual: 0.0,
            normalization: [0.0; 3],
        }
    }

    /// `2 B a^2 (1 + nu) |Omega|` (pure bending) or `2 B a^2 (1 - nu) |Omega|` (twist)
    /// for uniform material.
    pub fn work(&self, rigidity: f64, poisson: f64, area: f64) -> f64 {
        let factor = match self.kind {
            ExactKind::PureBending => 1.0 + poisson,
            ExactKind::Twist => 1.0 - poisson,
        };
        2.0 * rigidity * self.a * self.a * factor * area
    }
}

/// Errors of a discrete state against a closed-form solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    /// `a(e, e)^{1/2}` with the pointwise strains `sym grad e_phi` and `e_phi + grad e_w`.
    pub energy: f64,
    /// Same, with the element's own shear strain for the discrete field.
    pub discrete_energy: f64,
    /// `(||e_phi||^2 + ||e_w||^2)^{1/2}`.
    pub l2: f64,
}

pub fn error_norms(
    mesh: &Mesh,
    material: &CompositeMaterial,
    state: &PlateState,
    exact: &ExactSolution,
    opts: &SolverOptions,
) -> Result<ErrorNorms> {
    state.check_mesh(mesh)?;
    let rule = square_rule(4);
    let parts: Vec<[f64; 3]> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| -> Result<[f64; 3]> {
            let x = mesh.element_coords(e);
            let el = mesh.elements()[e];
            let coeffs = material.coefficients(e)?;
            let u: nalgebra::SVector<f64, 12> =
                nalgebra::SVector::from_fn(|a, _| state.dofs[dof(el[a / 3], a % 3)]);
            let mut acc = [0.0; 3];
            for &(r, s, w) in &rule {
                let full = PointOperators::new(&x, r, s, ShearInterpolation::Full)
                    .ok_or(Error::SingularJacobian { element: e })?;
                let own = PointOperators::new(&x, r, s, opts.shear)
                    .ok_or(Error::SingularJacobian { element: e })?;
                let f = w * full.det_j;
                let p = full.position;
                let kappa_exact = crate::material::voigt(&exact.grad_phi());
                let eb = kappa_exact - full.bending * u;
                let bend = eb.dot(&(coeffs.bending * eb));
                let gamma_exact = exact.phi(&p) + exact.grad_w(&p);
                let es = gamma_exact - full.shear * u;
                let ed = gamma_exact - own.shear * u;
                acc[0] += f * (bend + es.dot(&(coeffs.shear * es)));
                acc[1] += f * (bend + ed.dot(&(coeffs.shear * ed)));
                let n = shape(r, s);
                let mut uh = [0.0; 3];
                for i in 0..4 {
                    for c in 0..3 {
                        uh[c] += n[i] * u[3 * i + c];
                    }
                }
                let ph = exact.phi(&p);
                acc[2] += f * ((ph.x - uh[0]).powi(2) + (ph.y - uh[1]).powi(2) + (exact.w(&p) - uh[2]).powi(2));
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let sum = parts.iter().fold([0.0; 3], |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2]]);
    Ok(ErrorNorms {
        energy: sum[0].max(0.0).sqrt(),
        discrete_energy: sum[1].max(0.0).sqrt(),
        l2: sum[2].sqrt(),
    })
}

/// One refinement level of a closed-form convergence study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub divisions: usize,
    /// Element diameter.
    pub h: f64,
    pub dofs: usize,
    pub work: f64,
    pub work_exact: f64,
    pub errors: ErrorNorms,
    /// Observed orders against the previous row: energy, discrete energy, L2.
    pub orders: Option<[f64; 3]>,
}

/// Solves a closed-form problem on a sequence of uniform `n x m` grids of a
/// rectangle (`m` follows the aspect ratio) and records errors and orders.
pub fn convergence_study(
    rect: [f64; 4],
    levels: &[usize],
    tensors_of: impl Fn(&Mesh) -> Result<PlateTensors>,
    kind: ExactKind,
    a: f64,
    opts: &SolverOptions,
    dense_oracle: bool,
) -> Result<Vec<ConvergenceRow>> {
    let [x0, y0, x1, y1] = rect;
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(levels.len());
    for &n in levels {
        let m = ((n as f64 * (y1 - y0) / (x1 - x0)).round() as usize).max(1);
        let mesh = Mesh::rectangle(x0, y0, x1, y1, n, m)?;
        let tensors = tensors_of(&mesh)?;
        let exact = ExactSolution::new(&mesh, kind, a);
        let load = exact.load(&mesh, &tensors);
        let material = CompositeMaterial::homogeneous(tensors.clone());
        let system = LinearSystem::assemble(&mesh, &material, &load, opts)?;
        let state = if dense_oracle {
            dense_oracle_solve(&system, DENSE_DOF_CAP)?
        } else {
            solve(&system)?
        };
        let errors = error_norms(&mesh, &material, &state, &exact, opts)?;
        let work = system.rhs.iter().zip(&state.dofs).map(|(f, u)| f * u).sum();
        let h = mesh.mesh_size();
        let orders = rows.last().map(|p| {
            let rate = |e0: f64, e1: f64| (e0 / e1).ln() / (p.h / h).ln();
            [
                rate(p.errors.energy, errors.energy),
                rate(p.errors.discrete_energy, errors.discrete_energy),
                rate(p.errors.l2, errors.l2),
            ]
        });
        rows.push(ConvergenceRow {
            divisions: n,
            h,
            dofs: mesh.num_dofs(),
            work,
            work_exact: exact.work(tensors.rigidity[0], tensors.poisson[0], mesh.area()),
            errors,
            orders,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::{derive_plate_tensors, IsotropicMaterial};
    use approx::assert_relative_eq;

    fn unit_material(mesh: &Mesh) -> CompositeMaterial {
        CompositeMaterial::homogeneous(
            derive_plate_tensors(&IsotropicMaterial::uniform_tight(mesh.num_elements(), 1.0, 1.0, 1.0)).unwrap(),
        )
    }

    fn pure_bending_system(n: usize) -> (Mesh, CompositeMaterial, BoundaryLoad, LinearSystem) {
        let mesh = Mesh::unit_square(n);
        let mat = unit_material(&mesh);
        let load = LoadFamily::PureBending { a: 1.0 }.build(&mesh, &mat.background).unwrap();
        let sys = LinearSystem::assemble(&mesh, &mat, &load, &SolverOptions::default()).unwrap();
        (mesh, mat, load, sys)
    }

    #[test]
    fn load_family_parsing() {
        assert_eq!(LoadFamily::parse("pure_bending a=2").unwrap(), LoadFamily::PureBending { a: 2.0 });
        assert_eq!(LoadFamily::parse("twist").unwrap(), LoadFamily::Twist { a: 1.0 });
        assert!(LoadFamily::parse("twist b=1").is_err());
        assert!(LoadFamily::parse("spin a=1").is_err());
        assert!(LoadFamily::parse("").is_err());
    }

    #[test]
    fn normal_couple_is_compatible_and_constant_force_is_not() {
        let mesh = Mesh::unit_square(3);
        let couple = BoundaryLoad::from_fn(&mesh, |_, e| LoadSample {
            q: 0.0,
            m: e.normal * 0.7,
        });
        let c = couple.compatibility(&mesh);
        assert_eq!(c.force, 0.0);
        assert!(c.moment.norm() < 1e-15);
        let push = BoundaryLoad::from_fn(&mesh, |_, _| LoadSample {
            q: 1.0,
            m: Vector2::zeros(),
        });
        assert!(matches!(
            assemble_load(&mesh, &push, COMPATIBILITY_TOL),
            Err(Error::IncompatibleLoad { .. })
        ));
        let (f, _) = assemble_load(&mesh, &BoundaryLoad::zero(&mesh), COMPATIBILITY_TOL).unwrap();
        assert!(f.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn make_compatible_balances_any_load() {
        let mesh = Mesh::unit_square(5);
        let mut load = BoundaryLoad::from_fn(&mesh, |x, _| LoadSample {
            q: x.x * x.y + 0.3,
            m: Vector2::new(x.y, -2.0 * x.x),
        });
        assert!(!load.compatibility(&mesh).holds(COMPATIBILITY_TOL));
        load.make_compatible(&mesh);
        assert!(load.compatibility(&mesh).holds(1e-13));
    }

    #[test]
    fn stiffness_symmetric_with_rigid_kernel() {
        let mesh = Mesh::unit_square(2);
        let mat = unit_material(&mesh);
        for opts in [SolverOptions::default(), SolverOptions::full_integration()] {
            let k = assemble_stiffness(&mesh, &mat, &opts).unwrap();
            assert!(k.asymmetry() < 1e-14 * k.max_abs());
            for mode in rigid_modes(&mesh) {
                let km = k.matvec(&mode);
                assert!(norm(&km) < 1e-13 * k.max_abs());
            }
            assert_eq!(kernel_dimension(&k, DENSE_DOF_CAP).unwrap(), 3);
        }
    }

    #[test]
    fn dense_kernel_spans_rigid_modes() {
        let mesh = Mesh::unit_square(2);
        let k = assemble_stiffness(&mesh, &unit_material(&mesh), &SolverOptions::default()).unwrap();
        let eig = SymmetricEigen::new(k.to_dense());
        let max = eig.eigenvalues.amax();
        let modes = rigid_modes(&mesh);
        let basis = DMatrix::from_fn(mesh.num_dofs(), 3, |i, j| modes[j][i]);
        let q = basis.qr().q();
        for k in 0..mesh.num_dofs() {
            if eig.eigenvalues[k].abs() < KERNEL_EIG_TOL * max {
                let v = eig.eigenvectors.column(k);
                let proj = &q * (q.transpose() * v);
                assert!((v - proj).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn zero_load_gives_zero_state() {
        let mesh = Mesh::unit_square(3);
        let mat = unit_material(&mesh);
        let sys = LinearSystem::assemble(&mesh, &mat, &BoundaryLoad::zero(&mesh), &SolverOptions::default()).unwrap();
        assert!(solve(&sys).unwrap().dofs.iter().all(|v| *v == 0.0));
        assert!(dense_oracle_solve(&sys, DENSE_DOF_CAP).unwrap().dofs.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn pure_bending_recovered_exactly() {
        let (mesh, mat, load, sys) = pure_bending_system(6);
        let fact = SaddleFactorization::new(&sys.stiffness, &sys.constraints).unwrap();
        assert_eq!(fact.inertia(), (sys.num_dofs(), 3));
        let state = fact.solve(&sys).unwrap();
        assert!(state.residual < 1e-12);
        assert!(state.normalization.iter().all(|v| v.abs() < 1e-12));
        let exact = ExactSolution::pure_bending(&mesh, 1.0);
        for (i, p) in mesh.nodes().iter().enumerate() {
            assert!((state.phi(i) - exact.phi(p)).norm() < 1e-11);
        }
        let work: f64 = dot(&sys.rhs, &state.dofs);
        assert_relative_eq!(work, 5.0 / 9.0, max_relative = 1e-12);
        let res = residual_check(&mesh, &mat, &load, &state, &SolverOptions::default()).unwrap();
        assert!(res.nodal < 1e-10 && res.bubble < 1e-10, "{res:?}");
    }

    #[test]
    fn sparse_matches_dense_oracle() {
        for n in [2, 4, 6] {
            let mesh = Mesh::unit_square(n);
            let mat = unit_material(&mesh);
            let load = LoadFamily::ShearPair { q: 1.0 }.build(&mesh, &mat.background).unwrap();
            let sys = LinearSystem::assemble(&mesh, &mat, &load, &SolverOptions::default()).unwrap();
            let a = solve(&sys).unwrap();
            let b = dense_oracle_solve(&sys, DENSE_DOF_CAP).unwrap();
            let diff: Vec<f64> = a.dofs.iter().zip(&b.dofs).map(|(x, y)| x - y).collect();
            assert!(norm(&diff) <= 1e-10 * norm(&b.dofs), "n = {n}");
        }
    }

    #[test]
    fn kernel_component_in_rhs_is_flagged() {
        let (mesh, _, _, sys) = pure_bending_system(4);
        let mode = &rigid_modes(&mesh)[0];
        let scale = norm(&sys.rhs) / norm(mode);
        let rhs: Vec<f64> = sys.rhs.iter().zip(mode).map(|(f, k)| f + 1e-3 * scale * k).collect();
        let fact = SaddleFactorization::new(&sys.stiffness, &sys.constraints).unwrap();
        assert!(matches!(fact.solve_rhs(&sys, &rhs), Err(Error::KernelComponent(_))));
        let bad = LinearSystem { rhs, ..sys };
        assert!(matches!(dense_oracle_solve(&bad, DENSE_DOF_CAP), Err(Error::KernelComponent(_))));
    }

    #[test]
    fn dense_cap_enforced() {
        let (_, _, _, sys) = pure_bending_system(14);
        assert!(matches!(dense_oracle_solve(&sys, DENSE_DOF_CAP), Err(Error::DofCap { .. })));
    }

    #[test]
    fn residual_scales_with_perturbation() {
        let (mesh, mat, load, sys) = pure_bending_system(5);
        let state = solve(&sys).unwrap();
        let opts = SolverOptions::default();
        let base = residual_check(&mesh, &mat, &load, &state, &opts).unwrap().nodal;
        assert!(base < 1e-10);
        let pert: Vec<f64> = (0..state.dofs.len()).map(|i| ((i * 7919) % 13) as f64 / 13.0 - 0.5).collect();
        let r = |eps: f64| {
            let mut s = state.clone();
            for (d, p) in s.dofs.iter_mut().zip(&pert) {
                *d += eps * p;
            }
            residual_check(&mesh, &mat, &load, &s, &opts).unwrap().nodal
        };
        let (r1, r2) = (r(1e-3), r(2e-3));
        assert_relative_eq!(r2 / r1, 2.0, max_relative = 1e-6);
    }

    #[test]
    fn twist_solution_recovered() {
        let mesh = Mesh::rectangle(0.0, 0.0, 2.0, 1.0, 8, 4).unwrap();
        let mat = unit_material(&mesh);
        let load = LoadFamily::Twist { a: 0.5 }.build(&mesh, &mat.background).unwrap();
        let sys = LinearSystem::assemble(&mesh, &mat, &load, &SolverOptions::default()).unwrap();
        let state = solve(&sys).unwrap();
        let exact = ExactSolution::twist(&mesh, 0.5);
        let err = error_norms(&mesh, &mat, &state, &exact, &SolverOptions::default()).unwrap();
        assert!(err.discrete_energy < 1e-10 && err.l2 < 1e-10, "{err:?}");
        let w = dot(&sys.rhs, &state.dofs);
        assert_relative_eq!(w, exact.work(2.0 / 9.0, 0.25, 2.0), max_relative = 1e-12);
    }

    #[test]
    fn state_csv_header() {
        let mesh = Mesh::unit_square(1);
        let mut buf = Vec::new();
        PlateState::zero(&mesh).write_csv(&mesh, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("node_id,x,y,phi1,phi2,w\n0,0,0,"));
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn pure_bending_error_matches_interpolant_shear() {
        // The bilinear deflection leaves phi + grad w = x - x_mid per element,
        // so the energy error is h (S/6)^{1/2} and the L2 error is second order.
        let rows = convergence_study(
            [0.0, 0.0, 1.0, 1.0],
            &[4, 8, 16],
            |m| derive_plate_tensors(&IsotropicMaterial::uniform_tight(m.num_elements(), 1.0, 1.0, 1.0)),
            ExactKind::PureBending,
            1.0,
            &SolverOptions::default(),
            false,
        )
        .unwrap();
        for r in &rows {
            assert_relative_eq!(r.errors.energy, (1.0f64 / 6.0).sqrt() / r.divisions as f64, max_relative = 1e-10);
            assert!(r.errors.discrete_energy < 1e-12);
            assert_relative_eq!(r.work, 5.0 / 9.0, max_relative = 1e-12);
        }
        let o = rows[2].orders.unwrap();
        assert_relative_eq!(o[0], 1.0, max_relative = 1e-9);
        assert_relative_eq!(o[2], 2.0, max_relative = 1e-9);
    }
}
