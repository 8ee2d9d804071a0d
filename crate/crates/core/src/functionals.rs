//! Scalar functionals of solved states and loads: boundary work, strain
//! energy density and its region integrals, Korn and Poincaré probes, and
//! spectral negative-order boundary norms with the frequency ratio they define.

use std::collections::HashMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen, Vector2};
use rayon::prelude::*;

use crate::element::{square_rule, PointOperators, ShearInterpolation};
use crate::error::{Error, Result};
use crate::geometry::{ElementMask, Mesh, Point};
use crate::solver::{dof, edge_quadrature, BoundaryLoad, PlateState};

/// `W = int Q w + M . phi` over the boundary.
pub fn boundary_work(mesh: &Mesh, load: &BoundaryLoad, state: &PlateState) -> Result<f64> {
    state.check_mesh(mesh)?;
    if load.samples().len() != mesh.boundary_edges().len() {
        return Err(Error::MeshMismatch("load does not match the mesh boundary".into()));
    }
    let g = 1.0 / 3f64.sqrt();
    let shapes = [[0.5 * (1.0 + g), 0.5 * (1.0 - g)], [0.5 * (1.0 - g), 0.5 * (1.0 + g)]];
    let mut work = 0.0;
    for (edge, s) in mesh.boundary_edges().iter().zip(load.samples()) {
        for (k, ((_, wt), p)) in edge_quadrature(mesh, edge).iter().zip(s).enumerate() {
            let [a, b] = edge.nodes;
            let phi = state.phi(a) * shapes[k][0] + state.phi(b) * shapes[k][1];
            let w = state.w(a) * shapes[k][0] + state.w(b) * shapes[k][1];
            work += wt * (p.q * w + p.m.dot(&phi));
        }
    }
    Ok(work)
}

/// Works with and without the inclusion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkReport {
    pub w: f64,
    pub w0: f64,
    /// `W0 - W`.
    pub gap: f64,
    pub relative_gap: f64,
}

impl WorkReport {
    pub fn new(w: f64, w0: f64) -> Self {
        let gap = w0 - w;
        WorkReport {
            w,
            w0,
            gap,
            relative_gap: if w0 != 0.0 { gap / w0 } else { 0.0 },
        }
    }
}

/// Strain quantities sampled at element quadrature points.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyField {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub element: Vec<usize>,
    /// `|sym grad phi|^2`.
    pub sym_grad_sq: Vec<f64>,
    /// `|grad phi|^2`.
    pub grad_sq: Vec<f64>,
    /// `|phi + grad w|^2`, with the shear strain of the chosen interpolation.
    pub shear_sq: Vec<f64>,
    pub rho0: f64,
    /// `max|phi| / rho0 + max|w| / rho0^2`, the size below which strains are round-off.
    pub state_scale: f64,
}

impl EnergyField {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `E^2 = |sym grad phi|^2 + rho0^-2 |phi + grad w|^2` at point `k`.
    pub fn density(&self, k: usize) -> f64 {
        self.sym_grad_sq[k] + self.shear_sq[k] / (self.rho0 * self.rho0)
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.density(k)).collect()
    }

    pub fn total(&self) -> f64 {
        (0..self.len()).map(|k| self.weights[k] * self.density(k)).sum()
    }

    /// Writes `x,y,weight,E2` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x,y,weight,E2")?;
        for k in 0..self.len() {
            let p = self.points[k];
            writeln!(out, "{},{},{:e},{:e}", p.x, p.y, self.weights[k], self.density(k))?;
        }
        Ok(())
    }
}

/// Samples the energy density with an `order x order` Gauss rule per element.
/// Order 2 matches the stiffness integration, so integrals over element
/// unions reproduce the discrete energy exactly.
pub fn strain_energy_density_with(
    mesh: &Mesh,
    state: &PlateState,
    rho0: f64,
    shear: ShearInterpolation,
    order: usize,
) -> Result<EnergyField> {
    state.check_mesh(mesh)?;
    if !(rho0 > 0.0) {
        return Err(Error::InvalidInput(format!("rho0 must be positive, got {rho0}")));
    }
    let rule = square_rule(order);
    let per: Vec<Vec<(Point, f64, [f64; 3])>> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| -> Result<_> {
            let x = mesh.element_coords(e);
            let el = mesh.elements()[e];
            let u: nalgebra::SVector<f64, 12> =
                nalgebra::SVector::from_fn(|a, _| state.dofs[dof(el[a / 3], a % 3)]);
            rule.iter()
                .map(|&(r, s, w)| {
                    let op = PointOperators::new(&x, r, s, shear).ok_or(Error::SingularJacobian { element: e })?;
                    let c = op.bending * u;
                    let g = op.grad_phi * u;
                    let gamma = op.shear * u;
                    Ok((
                        op.position,
                        w * op.det_j,
                        [
                            c[0] * c[0] + c[1] * c[1] + 0.5 * c[2] * c[2],
                            g.norm_squared(),
                            gamma.norm_squared(),
                        ],
                    ))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let n = rule.len() * mesh.num_elements();
    let mut f = EnergyField {
        points: Vec::with_capacity(n),
        weights: Vec::with_capacity(n),
        element: Vec::with_capacity(n),
        sym_grad_sq: Vec::with_capacity(n),
        grad_sq: Vec::with_capacity(n),
        shear_sq: Vec::with_capacity(n),
        rho0,
        state_scale: {
            let (mut p, mut w) = (0.0f64, 0.0f64);
            for i in 0..state.num_nodes() {
                p = p.max(state.phi(i).amax());
                w = w.max(state.w(i).abs());
            }
            p / rho0 + w / (rho0 * rho0)
        },
    };
    for (e, pts) in per.into_iter().enumerate() {
        for (p, w, v) in pts {
            f.points.push(p);
            f.weights.push(w);
            f.element.push(e);
            f.sym_grad_sq.push(v[0]);
            f.grad_sq.push(v[1]);
            f.shear_sq.push(v[2]);
        }
    }
    Ok(f)
}

/// Energy density at the bending quadrature points (2x2 Gauss).
pub fn strain_energy_density(
    mesh: &Mesh,
    state: &PlateState,
    rho0: f64,
    shear: ShearInterpolation,
) -> Result<EnergyField> {
    strain_energy_density_with(mesh, state, rho0, shear, 2)
}

#[derive(Debug, Clone, Copy)]
pub enum Region<'a> {
    All,
    Mask(&'a ElementMask),
    /// Quadrature points with `|x - center| < radius`.
    Disk { center: Point, radius: f64 },
}

impl Region<'_> {
    pub fn contains(&self, field: &EnergyField, k: usize) -> bool {
        match self {
            Region::All => true,
            Region::Mask(m) => m.contains(field.element[k]),
            Region::Disk { center, radius } => (field.points[k] - center).norm_squared() < radius * radius,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionIntegral {
    pub value: f64,
    /// No quadrature point fell in the region.
    pub empty: bool,
}

/// Integral of `f(k)` over the quadrature points of `region`.
pub fn integrate(field: &EnergyField, region: &Region<'_>, f: impl Fn(usize) -> f64 + Sync) -> RegionIntegral {
    let (value, count) = (0..field.len())
        .into_par_iter()
        .filter(|&k| region.contains(field, k))
        .map(|k| (field.weights[k] * f(k), 1usize))
        .reduce(|| (0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    RegionIntegral {
        value,
        empty: count == 0,
    }
}

/// `int_region E^2`.
pub fn region_energy(field: &EnergyField, region: &Region<'_>) -> RegionIntegral {
    integrate(field, region, |k| field.density(k))
}

/// `||grad phi|| / (||sym grad phi|| + rho0^-1 ||phi + grad w||)`.
pub fn korn_ratio(field: &EnergyField) -> Result<f64> {
    let all = Region::All;
    let grad = integrate(field, &all, |k| field.grad_sq[k]).value.sqrt();
    let sym = integrate(field, &all, |k| field.sym_grad_sq[k]).value.sqrt();
    let shear = integrate(field, &all, |k| field.shear_sq[k]).value.sqrt();
    let den = sym + shear / field.rho0;
    let area: f64 = field.weights.iter().sum();
    if den <= 1e-10 * field.state_scale * area.sqrt() || den <= f64::MIN_POSITIVE {
        return Err(Error::Degenerate("rigid state: Korn ratio denominator vanishes".into()));
    }
    Ok(grad / den)
}

/// `||u - mean(u)|| / (rho0 ||grad u||)` for a nodal scalar field `u`.
pub fn poincare_ratio(mesh: &Mesh, nodal: &[f64], rho0: f64) -> Result<f64> {
    if nodal.len() != mesh.num_nodes() {
        return Err(Error::MeshMismatch(format!(
            "field has {} values, mesh has {} nodes",
            nodal.len(),
            mesh.num_nodes()
        )));
    }
    let rule = square_rule(3);
    let mut samples = Vec::with_capacity(rule.len() * mesh.num_elements());
    for (e, el) in mesh.elements().iter().enumerate() {
        let x = mesh.element_coords(e);
        for &(r, s, w) in &rule {
            let op = PointOperators::new(&x, r, s, ShearInterpolation::Full).ok_or(Error::SingularJacobian { element: e })?;
            let mut val = 0.0;
            let mut grad = Vector2::zeros();
            for i in 0..4 {
                val += op.shape[i] * nodal[el[i]];
                grad += op.grad[i] * nodal[el[i]];
            }
            samples.push((w * op.det_j, val, grad.norm_squared()));
        }
    }
    let area: f64 = samples.iter().map(|s| s.0).sum();
    let mean = samples.iter().map(|s| s.0 * s.1).sum::<f64>() / area;
    let var: f64 = samples.iter().map(|s| s.0 * (s.1 - mean).powi(2)).sum();
    let grad: f64 = samples.iter().map(|s| s.0 * s.2).sum();
    let size: f64 = samples.iter().map(|s| s.0 * s.1 * s.1).sum();
    if rho0 * grad.sqrt() <= 1e-12 * size.sqrt() || grad <= f64::MIN_POSITIVE {
        return Err(Error::Degenerate("constant field: Poincaré ratio is 0/0".into()));
    }
    Ok(var.sqrt() / (rho0 * grad.sqrt()))
}

/// Nodal values of one state component.
pub fn component(state: &PlateState, c: usize) -> Vec<f64> {
    (0..state.num_nodes()).map(|i| state.dofs[dof(i, c)]).collect()
}

/// Eigenpairs of the piecewise-linear Laplace–Beltrami operator on closed
/// boundary polylines, with modes orthonormal in the consistent mass inner
/// product.
#[derive(Debug, Clone)]
pub struct BoundarySpectrum {
    /// Mesh node of each boundary position (empty for bare polylines).
    nodes: Vec<usize>,
    index: HashMap<usize, usize>,
    mass: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    modes: DMatrix<f64>,
}

impl BoundarySpectrum {
    /// Spectrum of a single polyline.
    pub fn from_polyline(points: &[Point], closed: bool) -> Result<Self> {
        if !closed {
            return Err(Error::InvalidInput("boundary polyline must be closed".into()));
        }
        let loop_ids: Vec<usize> = (0..points.len()).collect();
        Self::build(points, &[loop_ids], Vec::new())
    }

    /// Spectrum of all boundary loops of a mesh.
    pub fn from_mesh(mesh: &Mesh) -> Result<Self> {
        let mut nodes = Vec::new();
        let mut loops = Vec::new();
        for lp in mesh.boundary_loops() {
            let start = nodes.len();
            for &e in lp {
                nodes.push(mesh.boundary_edges()[e].nodes[0]);
            }
            loops.push((start..nodes.len()).collect::<Vec<_>>());
        }
        let points: Vec<Point> = nodes.iter().map(|&n| mesh.nodes()[n]).collect();
        Self::build(&points, &loops, nodes)
    }

    fn build(points: &[Point], loops: &[Vec<usize>], nodes: Vec<usize>) -> Result<Self> {
        let n = points.len();
        let mut mass = DMatrix::<f64>::zeros(n, n);
        let mut stiff = DMatrix::<f64>::zeros(n, n);
        for lp in loops {
            if lp.len() < 3 {
                return Err(Error::InvalidInput(format!(
                    "boundary loop needs at least 3 nodes, got {}",
                    lp.len()
                )));
            }
            for k in 0..lp.len() {
                let (a, b) = (lp[k], lp[(k + 1) % lp.len()]);
                let len = (points[b] - points[a]).norm();
                if !(len > 0.0) {
                    return Err(Error::InvalidInput("repeated boundary node".into()));
                }
                mass[(a, a)] += len / 3.0;
                mass[(b, b)] += len / 3.0;
                mass[(a, b)] += len / 6.0;
                mass[(b, a)] += len / 6.0;
                stiff[(a, a)] += 1.0 / len;
                stiff[(b, b)] += 1.0 / len;
                stiff[(a, b)] -= 1.0 / len;
                stiff[(b, a)] -= 1.0 / len;
            }
        }
        let chol = mass
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Degenerate("boundary mass matrix is not positive definite".into()))?;
        let l_inv = chol
            .l()
            .try_inverse()
            .ok_or_else(|| Error::Degenerate("singular boundary mass matrix".into()))?;
        let a = &l_inv * stiff * l_inv.transpose();
        let eig = SymmetricEigen::new((&a + a.transpose()) * 0.5);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i].max(0.0)));
        let sorted = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        let modes = l_inv.transpose() * sorted;
        let index = nodes.iter().enumerate().map(|(k, &n)| (n, k)).collect();
        Ok(BoundarySpectrum {
            nodes,
            index,
            mass,
            eigenvalues,
            modes,
        })
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn mode(&self, k: usize) -> DVector<f64> {
        self.modes.column(k).clone_owned()
    }

    /// Mesh node ids in boundary order.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    /// `(sum_k (1 + rho0^2 lambda_k)^s <g, v_k>^2)^{1/2}` for nodal `g`.
    pub fn fractional_norm(&self, g: &DVector<f64>, s: f64, rho0: f64) -> Result<f64> {
        if g.len() != self.len() {
            return Err(Error::MeshMismatch(format!(
                "boundary data has {} values, spectrum has {}",
                g.len(),
                self.len()
            )));
        }
        let coeffs = self.modes.transpose() * (&self.mass * g);
        Ok(coeffs
            .iter()
            .zip(self.eigenvalues.iter())
            .map(|(c, l)| (1.0 + rho0 * rho0 * l).powf(s) * c * c)
            .sum::<f64>()
            .sqrt())
    }

    pub fn l2_norm(&self, g: &DVector<f64>) -> f64 {
        g.dot(&(&self.mass * g)).max(0.0).sqrt()
    }

    /// L2 projections of `Q`, `M1`, `M2` onto boundary hat functions.
    pub fn project_load(&self, mesh: &Mesh, load: &BoundaryLoad) -> Result<[DVector<f64>; 3]> {
        if self.nodes.is_empty() {
            return Err(Error::InvalidInput("spectrum was not built from a mesh".into()));
        }
        let n = self.len();
        let mut rhs = [DVector::zeros(n), DVector::zeros(n), DVector::zeros(n)];
        let g = 1.0 / 3f64.sqrt();
        let shapes = [[0.5 * (1.0 + g), 0.5 * (1.0 - g)], [0.5 * (1.0 - g), 0.5 * (1.0 + g)]];
        for (edge, s) in mesh.boundary_edges().iter().zip(load.samples()) {
            let idx = edge.nodes.map(|v| self.index.get(&v).copied());
            let [Some(a), Some(b)] = idx else {
                return Err(Error::MeshMismatch("boundary edge outside the spectrum".into()));
            };
            for (k, ((_, w), p)) in edge_quadrature(mesh, edge).iter().zip(s).enumerate() {
                for (node, sh) in [(a, shapes[k][0]), (b, shapes[k][1])] {
                    rhs[0][node] += w * sh * p.q;
                    rhs[1][node] += w * sh * p.m.x;
                    rhs[2][node] += w * sh * p.m.y;
                }
            }
        }
        let chol = self.mass.clone().cholesky().expect("mass was factored at construction");
        Ok(rhs.map(|b| chol.solve(&b)))
    }
}

/// Spectral fractional norm of nodal boundary data.
pub fn boundary_fractional_norm(spectrum: &BoundarySpectrum, g: &DVector<f64>, s: f64, rho0: f64) -> Result<f64> {
    spectrum.fractional_norm(g, s, rho0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyReport {
    /// `||M||_{-1/2} + rho0 ||Q||_{-1/2}`.
    pub norm_half: f64,
    /// `||M||_{-1} + rho0 ||Q||_{-1}`.
    pub norm_one: f64,
    pub f: f64,
}

pub fn frequency(mesh: &Mesh, spectrum: &BoundarySpectrum, load: &BoundaryLoad, rho0: f64) -> Result<FrequencyReport> {
    let [q, m1, m2] = spectrum.project_load(mesh, load)?;
    let norm = |s: f64| -> Result<f64> {
        let m = (spectrum.fractional_norm(&m1, s, rho0)?.powi(2) + spectrum.fractional_norm(&m2, s, rho0)?.powi(2)).sqrt();
        Ok(m + rho0 * spectrum.fractional_norm(&q, s, rho0)?)
    };
    let norm_half = norm(-0.5)?;
    let norm_one = norm(-1.0)?;
    if !(norm_one > 0.0) {
        return Err(Error::Degenerate("zero load has no frequency".into()));
    }
    Ok(FrequencyReport {
        norm_half,
        norm_one,
        f: norm_half / norm_one,
    })
}

/// `(||phi||_H1 + rho0^-1 ||w||_H1) / (||M||_{-1/2} + rho0 ||Q||_{-1/2})`, with
/// `||u||_H1 = rho0^-1 (||u||^2 + rho0^2 ||grad u||^2)^{1/2}`.
pub fn stability_ratio(mesh: &Mesh, state: &PlateState, freq: &FrequencyReport, rho0: f64) -> Result<f64> {
    state.check_mesh(mesh)?;
    let rule = square_rule(2);
    let mut acc = [0.0; 4];
    for (e, el) in mesh.elements().iter().enumerate() {
        let x = mesh.element_coords(e);
        for &(r, s, w) in &rule {
            let op = PointOperators::new(&x, r, s, ShearInterpolation::Full).ok_or(Error::SingularJacobian { element: e })?;
            let f = w * op.det_j;
            let mut val = [0.0; 3];
            let mut grad = [Vector2::zeros(); 3];
            for i in 0..4 {
                for c in 0..3 {
                    let v = state.dofs[dof(el[i], c)];
                    val[c] += op.shape[i] * v;
                    grad[c] += op.grad[i] * v;
                }
            }
            acc[0] += f * (val[0] * val[0] + val[1] * val[1]);
            acc[1] += f * (grad[0].norm_squared() + grad[1].norm_squared());
            acc[2] += f * val[2] * val[2];
            acc[3] += f * grad[2].norm_squared();
        }
    }
    let h1 = |l2: f64, g: f64| (l2 + rho0 * rho0 * g).sqrt() / rho0;
    let num = h1(acc[0], acc[1]) + h1(acc[2], acc[3]) / rho0;
    if !(freq.norm_half > 0.0) {
        return Err(Error::Degenerate("zero load".into()));
    }
    Ok(num / freq.norm_half)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::{derive_plate_tensors, IsotropicMaterial};
    use crate::solver::{
        solve, CompositeMaterial, LinearSystem, LoadFamily, LoadSample, SolverOptions,
    };
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn solved(n: usize, family: LoadFamily) -> (Mesh, BoundaryLoad, LinearSystem, PlateState) {
        let mesh = Mesh::unit_square(n);
        let t = derive_plate_tensors(&IsotropicMaterial::uniform_tight(mesh.num_elements(), 1.0, 1.0, 1.0)).unwrap();
        let load = family.build(&mesh, &t).unwrap();
        let sys = LinearSystem::assemble(&mesh, &CompositeMaterial::homogeneous(t), &load, &SolverOptions::default())
            .unwrap();
        let state = solve(&sys).unwrap();
        (mesh, load, sys, state)
    }

    #[test]
    fn pure_bending_work_and_density() {
        let (mesh, load, sys, state) = solved(8, LoadFamily::PureBending { a: 1.0 });
        let w = boundary_work(&mesh, &load, &state).unwrap();
        assert_relative_eq!(w, 5.0 / 9.0, max_relative = 1e-12);
        assert_relative_eq!(w, state.energy(&sys.stiffness), max_relative = 1e-10);
        let field = strain_energy_density(&mesh, &state, 1.0, ShearInterpolation::AssumedStrain).unwrap();
        for k in 0..field.len() {
            assert_relative_eq!(field.density(k), 2.0, max_relative = 1e-10);
        }
        assert_relative_eq!(region_energy(&field, &Region::All).value, 2.0, max_relative = 1e-10);
        let full = ElementMask::full(&mesh);
        assert_relative_eq!(region_energy(&field, &Region::Mask(&full)).value, 2.0, max_relative = 1e-10);
        assert_relative_eq!(korn_ratio(&field).unwrap(), 1.0, max_relative = 1e-10);
        assert_eq!(boundary_work(&mesh, &BoundaryLoad::zero(&mesh), &state).unwrap(), 0.0);
    }

    #[test]
    fn kernel_state_has_no_energy() {
        let mesh = Mesh::unit_square(4);
        let mut state = PlateState::zero(&mesh);
        for (i, p) in mesh.nodes().iter().enumerate() {
            state.dofs[dof(i, 0)] = 0.3;
            state.dofs[dof(i, 1)] = -0.2;
            state.dofs[dof(i, 2)] = -0.3 * p.x + 0.2 * p.y + 1.5;
        }
        for shear in [ShearInterpolation::AssumedStrain, ShearInterpolation::Full] {
            let f = strain_energy_density(&mesh, &state, 1.0, shear).unwrap();
            assert!(f.values().iter().all(|v| v.abs() < 1e-28));
            assert!(korn_ratio(&f).is_err());
        }
    }

    #[test]
    fn disk_integrals() {
        let (mesh, _, _, state) = solved(40, LoadFamily::PureBending { a: 1.0 });
        let field = strain_energy_density_with(&mesh, &state, 1.0, ShearInterpolation::AssumedStrain, 6).unwrap();
        let r = 0.2;
        let disk = region_energy(&field, &Region::Disk { center: Point::new(0.5, 0.5), radius: r });
        assert!((disk.value - 2.0 * std::f64::consts::PI * r * r).abs() < 0.01 * disk.value);
        let away = region_energy(&field, &Region::Disk { center: Point::new(3.0, 3.0), radius: 0.5 });
        assert!(away.empty && away.value == 0.0);
    }

    #[test]
    fn energy_csv() {
        let (mesh, _, _, state) = solved(1, LoadFamily::PureBending { a: 1.0 });
        let f = strain_energy_density(&mesh, &state, 1.0, ShearInterpolation::AssumedStrain).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x,y,weight,E2\n"));
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn poincare_of_linear_field() {
        let mesh = Mesh::unit_square(10);
        let x1: Vec<f64> = mesh.nodes().iter().map(|p| p.x).collect();
        assert_relative_eq!(poincare_ratio(&mesh, &x1, 1.0).unwrap(), 1.0 / 12f64.sqrt(), max_relative = 1e-12);
        let shifted: Vec<f64> = x1.iter().map(|v| v + 4.0).collect();
        assert_relative_eq!(
            poincare_ratio(&mesh, &shifted, 1.0).unwrap(),
            poincare_ratio(&mesh, &x1, 1.0).unwrap(),
            max_relative = 1e-12
        );
        assert!(poincare_ratio(&mesh, &vec![2.0; mesh.num_nodes()], 1.0).is_err());
    }

    #[test]
    fn korn_projection_bound() {
        let (mesh, _, _, state) = solved(10, LoadFamily::ShearPair { q: 1.0 });
        let f = strain_energy_density(&mesh, &state, 1.0, ShearInterpolation::AssumedStrain).unwrap();
        let all = Region::All;
        let grad = integrate(&f, &all, |k| f.grad_sq[k]).value.sqrt();
        let shear = integrate(&f, &all, |k| f.shear_sq[k]).value.sqrt();
        let ratio = korn_ratio(&f).unwrap();
        assert!(ratio.is_finite());
        assert!(ratio >= grad / (grad + shear) - 1e-12);
    }

    fn square_loop(n: usize) -> Vec<Point> {
        let mut pts = Vec::new();
        for k in 0..n {
            pts.push(Point::new(k as f64 / n as f64, 0.0));
        }
        for k in 0..n {
            pts.push(Point::new(1.0, k as f64 / n as f64));
        }
        for k in 0..n {
            pts.push(Point::new(1.0 - k as f64 / n as f64, 1.0));
        }
        for k in 0..n {
            pts.push(Point::new(0.0, 1.0 - k as f64 / n as f64));
        }
        pts
    }

    #[test]
    fn constant_data_sees_only_the_zero_mode() {
        let sp = BoundarySpectrum::from_polyline(&square_loop(5), true).unwrap();
        let g = DVector::from_element(sp.len(), 3.0);
        let l2 = sp.l2_norm(&g);
        assert_relative_eq!(l2, 6.0, max_relative = 1e-12);
        for s in [-0.5, -1.0] {
            assert_relative_eq!(sp.fractional_norm(&g, s, 1.0).unwrap(), l2, max_relative = 1e-10);
        }
    }

    #[test]
    fn single_mode_norms_match_modal_weight() {
        let sp = BoundarySpectrum::from_polyline(&square_loop(6), true).unwrap();
        for k in [1, 5, 11] {
            let v = sp.mode(k);
            let lam = sp.eigenvalues()[k];
            let rho0 = 0.7;
            for s in [-0.5, -1.0] {
                let expect = (1.0 + rho0 * rho0 * lam).powf(s / 2.0) * sp.l2_norm(&v);
                assert_relative_eq!(sp.fractional_norm(&v, s, rho0).unwrap(), expect, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn degenerate_polylines_rejected() {
        let pts = square_loop(2);
        assert!(BoundarySpectrum::from_polyline(&pts, false).is_err());
        assert!(BoundarySpectrum::from_polyline(&pts[..2], true).is_err());
    }

    #[test]
    fn frequency_of_single_mode_load() {
        let mesh = Mesh::unit_square(6);
        let sp = BoundarySpectrum::from_mesh(&mesh).unwrap();
        let k = 7;
        let v = sp.mode(k);
        let pos: HashMap<usize, usize> = sp.nodes().iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let edge_nodes: Vec<[usize; 2]> = mesh.boundary_edges().iter().map(|e| e.nodes).collect();
        let g = 1.0 / 3f64.sqrt();
        let samples = edge_nodes
            .iter()
            .map(|[a, b]| {
                let (va, vb) = (v[pos[a]], v[pos[b]]);
                [
                    LoadSample { q: 0.0, m: Vector2::new(0.5 * (1.0 + g) * va + 0.5 * (1.0 - g) * vb, 0.0) },
                    LoadSample { q: 0.0, m: Vector2::new(0.5 * (1.0 - g) * va + 0.5 * (1.0 + g) * vb, 0.0) },
                ]
            })
            .collect();
        let load = BoundaryLoad::from_samples(&mesh, samples).unwrap();
        let rho0 = 1.0;
        let r = frequency(&mesh, &sp, &load, rho0).unwrap();
        let lam = sp.eigenvalues()[k];
        assert_relative_eq!(r.f, (1.0 + rho0 * rho0 * lam).powf(0.25), max_relative = 1e-10);
        assert!(frequency(&mesh, &sp, &BoundaryLoad::zero(&mesh), rho0).is_err());
    }

    #[test]
    fn frequency_grows_with_mode_index() {
        let mesh = Mesh::unit_square(8);
        let sp = BoundarySpectrum::from_mesh(&mesh).unwrap();
        let pos: HashMap<usize, usize> = sp.nodes().iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let load_of = |k: usize| {
            let v = sp.mode(k);
            BoundaryLoad::from_samples(
                &mesh,
                mesh.boundary_edges()
                    .iter()
                    .map(|e| {
                        let (a, b) = (v[pos[&e.nodes[0]]], v[pos[&e.nodes[1]]]);
                        [LoadSample { q: a, m: Vector2::zeros() }, LoadSample { q: b, m: Vector2::zeros() }]
                    })
                    .collect(),
            )
            .unwrap()
        };
        // Mix of a low and a high mode; shifting weight to the high one raises F.
        let low = load_of(2);
        let high = load_of(20);
        let mut last = 0.0;
        for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let l = low.scaled(1.0 - t).plus(&high.scaled(t));
            let f = frequency(&mesh, &sp, &l, 1.0).unwrap().f;
            assert!(f >= 1.0 && f >= last - 1e-12);
            last = f;
        }
    }

    #[test]
    fn stability_ratio_is_finite() {
        let (mesh, load, _, state) = solved(6, LoadFamily::ShearPair { q: 1.0 });
        let sp = BoundarySpectrum::from_mesh(&mesh).unwrap();
        let fr = frequency(&mesh, &sp, &load, 1.0).unwrap();
        let r = stability_ratio(&mesh, &state, &fr, 1.0).unwrap();
        assert!(r.is_finite() && r > 0.0);
    }

    proptest! {
        #[test]
        fn fractional_norm_properties(seed in 0u64..500, c in -3.0f64..3.0) {
            let sp = BoundarySpectrum::from_polyline(&square_loop(4), true).unwrap();
            let mk = |salt: u64| DVector::from_fn(sp.len(), |i, _| (((i as u64 + 1) * (seed + salt) * 2654435761 % 1000) as f64) / 500.0 - 1.0);
            let g = mk(1);
            let h = mk(7);
            for s in [-0.5, -1.0] {
                let ng = sp.fractional_norm(&g, s, 1.0).unwrap();
                prop_assert!((sp.fractional_norm(&(&g * c), s, 1.0).unwrap() - c.abs() * ng).abs() <= 1e-10 * (1.0 + ng));
                prop_assert!(sp.fractional_norm(&(&g + &h), s, 1.0).unwrap() <= ng + sp.fractional_norm(&h, s, 1.0).unwrap() + 1e-12);
            }
            prop_assert!(sp.fractional_norm(&g, -1.0, 1.0).unwrap() <= sp.fractional_norm(&g, -0.5, 1.0).unwrap() + 1e-12);
        }

        #[test]
        fn region_energy_additive_and_monotone(r1 in 0.05f64..0.3, dr in 0.0f64..0.2) {
            let (mesh, _, _, state) = solved(12, LoadFamily::ShearPair { q: 1.0 });
            let f = strain_energy_density(&mesh, &state, 1.0, ShearInterpolation::AssumedStrain).unwrap();
            let c = Point::new(0.5, 0.5);
            let small = region_energy(&f, &Region::Disk { center: c, radius: r1 }).value;
            let big = region_energy(&f, &Region::Disk { center: c, radius: r1 + dr }).value;
            prop_assert!(small <= big + 1e-15);
            let flags: Vec<bool> = (0..mesh.num_elements()).map(|e| e % 3 == 0).collect();
            let a = ElementMask::from_flags(&mesh, flags.clone()).unwrap();
            let b = ElementMask::from_flags(&mesh, flags.iter().map(|x| !x).collect()).unwrap();
            let total = region_energy(&f, &Region::All).value;
            let sum = region_energy(&f, &Region::Mask(&a)).value + region_energy(&f, &Region::Mask(&b)).value;
            prop_assert!((sum - total).abs() <= 1e-12 * total);
            prop_assert!(f.values().iter().all(|v| *v >= 0.0));
        }
    }
}
