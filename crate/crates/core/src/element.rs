//! Four-node Reissner–Mindlin quadrilateral.
//!
//! Nodal unknowns are ordered `(phi1, phi2, w)`. Bending uses the full
//! bilinear rotation gradient; the transverse shear strain `phi + grad w` is
//! either taken directly (`Full`) or replaced by the assumed covariant field
//! tied at the edge midpoints (`AssumedStrain`, the MITC4 construction),
//! which removes shear locking.

use nalgebra::{Matrix2, SMatrix, Vector2};

use crate::geometry::Point;
use crate::material::ElementCoefficients;

pub type ElementMatrix = SMatrix<f64, 12, 12>;
pub type ElementVector = SMatrix<f64, 12, 1>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShearInterpolation {
    #[default]
    AssumedStrain,
    Full,
}

const NODE_R: [f64; 4] = [-1.0, 1.0, 1.0, -1.0];
const NODE_S: [f64; 4] = [-1.0, -1.0, 1.0, 1.0];

/// Gauss–Legendre points and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    match n {
        1 => vec![(0.0, 2.0)],
        2 => {
            let a = 1.0 / 3f64.sqrt();
            vec![(-a, 1.0), (a, 1.0)]
        }
        3 => {
            let a = (0.6f64).sqrt();
            vec![(-a, 5.0 / 9.0), (0.0, 8.0 / 9.0), (a, 5.0 / 9.0)]
        }
        4 => {
            let t = 2.0 / 7.0 * (6.0f64 / 5.0).sqrt();
            let a = (3.0 / 7.0 - t).sqrt();
            let b = (3.0 / 7.0 + t).sqrt();
            let wa = (18.0 + 30f64.sqrt()) / 36.0;
            let wb = (18.0 - 30f64.sqrt()) / 36.0;
            vec![(-b, wb), (-a, wa), (a, wa), (b, wb)]
        }
        _ => golub_welsch(n),
    }
}

fn golub_welsch(n: usize) -> Vec<(f64, f64)> {
    let mut jac = nalgebra::DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = k as f64 / ((4 * k * k - 1) as f64).sqrt();
        jac[(k, k - 1)] = b;
        jac[(k - 1, k)] = b;
    }
    let eig = nalgebra::SymmetricEigen::new(jac);
    let mut out: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], 2.0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Tensor-product rule on the reference square: `(r, s, weight)`.
pub fn square_rule(n: usize) -> Vec<(f64, f64, f64)> {
    let g = gauss_legendre(n);
    let mut out = Vec::with_capacity(n * n);
    for &(s, ws) in &g {
        for &(r, wr) in &g {
            out.push((r, s, wr * ws));
        }
    }
    out
}

pub fn shape(r: f64, s: f64) -> [f64; 4] {
    std::array::from_fn(|i| 0.25 * (1.0 + r * NODE_R[i]) * (1.0 + s * NODE_S[i]))
}

fn shape_derivs(r: f64, s: f64) -> [[f64; 2]; 4] {
    std::array::from_fn(|i| {
        [
            0.25 * NODE_R[i] * (1.0 + s * NODE_S[i]),
            0.25 * NODE_S[i] * (1.0 + r * NODE_R[i]),
        ]
    })
}

/// Rows are the covariant base vectors `x_r`, `x_s`.
fn jacobian(x: &[Point; 4], r: f64, s: f64) -> Matrix2<f64> {
    let d = shape_derivs(r, s);
    let mut j = Matrix2::zeros();
    for i in 0..4 {
        j[(0, 0)] += d[i][0] * x[i].x;
        j[(0, 1)] += d[i][0] * x[i].y;
        j[(1, 0)] += d[i][1] * x[i].x;
        j[(1, 1)] += d[i][1] * x[i].y;
    }
    j
}

/// Covariant shear strain rows `(w_r + phi.x_r, w_s + phi.x_s)` at `(r, s)`.
fn covariant_shear(x: &[Point; 4], r: f64, s: f64) -> SMatrix<f64, 2, 12> {
    let n = shape(r, s);
    let d = shape_derivs(r, s);
    let j = jacobian(x, r, s);
    let mut out = SMatrix::<f64, 2, 12>::zeros();
    for i in 0..4 {
        for a in 0..2 {
            out[(a, 3 * i)] = n[i] * j[(a, 0)];
            out[(a, 3 * i + 1)] = n[i] * j[(a, 1)];
            out[(a, 3 * i + 2)] = d[i][a];
        }
    }
    out
}

/// Strain operators of one element at one reference point.
#[derive(Debug, Clone)]
pub struct PointOperators {
    pub shape: [f64; 4],
    pub position: Point,
    pub det_j: f64,
    /// Cartesian shape gradients per node.
    pub grad: [Vector2<f64>; 4],
    /// Voigt curvature `(phi1_x, phi2_y, phi1_y + phi2_x)`.
    pub bending: SMatrix<f64, 3, 12>,
    /// Full rotation gradient `(phi1_x, phi1_y, phi2_x, phi2_y)`.
    pub grad_phi: SMatrix<f64, 4, 12>,
    /// Transverse shear strain under the chosen interpolation.
    pub shear: SMatrix<f64, 2, 12>,
}

impl PointOperators {
    pub fn new(x: &[Point; 4], r: f64, s: f64, interp: ShearInterpolation) -> Option<Self> {
        let n = shape(r, s);
        let d = shape_derivs(r, s);
        let j = jacobian(x, r, s);
        let det_j = j.determinant();
        if !(det_j > 0.0) {
            return None;
        }
        let j_inv = j.try_inverse()?;
        let grad: [Vector2<f64>; 4] =
            std::array::from_fn(|i| j_inv * Vector2::new(d[i][0], d[i][1]));
        let position = Point::from(
            (0..4).map(|i| x[i].coords * n[i]).sum::<Vector2<f64>>(),
        );

        let mut bending = SMatrix::<f64, 3, 12>::zeros();
        let mut grad_phi = SMatrix::<f64, 4, 12>::zeros();
        for i in 0..4 {
            let (gx, gy) = (grad[i].x, grad[i].y);
            bending[(0, 3 * i)] = gx;
            bending[(1, 3 * i + 1)] = gy;
            bending[(2, 3 * i)] = gy;
            bending[(2, 3 * i + 1)] = gx;
            grad_phi[(0, 3 * i)] = gx;
            grad_phi[(1, 3 * i)] = gy;
            grad_phi[(2, 3 * i + 1)] = gx;
            grad_phi[(3, 3 * i + 1)] = gy;
        }

        let shear = match interp {
            ShearInterpolation::Full => {
                let mut g = SMatrix::<f64, 2, 12>::zeros();
                for i in 0..4 {
                    g[(0, 3 * i)] = n[i];
                    g[(0, 3 * i + 2)] = grad[i].x;
                    g[(1, 3 * i + 1)] = n[i];
                    g[(1, 3 * i + 2)] = grad[i].y;
                }
                g
            }
            ShearInterpolation::AssumedStrain => {
                let a = covariant_shear(x, 0.0, -1.0);
                let c = covariant_shear(x, 0.0, 1.0);
                let dd = covariant_shear(x, -1.0, 0.0);
                let b = covariant_shear(x, 1.0, 0.0);
                let mut cov = SMatrix::<f64, 2, 12>::zeros();
                cov.set_row(0, &(a.row(0) * (0.5 * (1.0 - s)) + c.row(0) * (0.5 * (1.0 + s))));
                cov.set_row(1, &(dd.row(1) * (0.5 * (1.0 - r)) + b.row(1) * (0.5 * (1.0 + r))));
                j_inv * cov
            }
        };

        Some(PointOperators {
            shape: n,
            position,
            det_j,
            grad,
            bending,
            grad_phi,
            shear,
        })
    }
}

/// Element stiffness with `order x order` Gauss integration (2 is standard).
pub fn element_stiffness(
    x: &[Point; 4],
    coeffs: &ElementCoefficients,
    interp: ShearInterpolation,
    order: usize,
) -> Option<ElementMatrix> {
    let mut k = ElementMatrix::zeros();
    for (r, s, w) in square_rule(order) {
        let op = PointOperators::new(x, r, s, interp)?;
        let f = w * op.det_j;
        k += op.bending.transpose() * coeffs.bending * op.bending * f;
        k += op.shear.transpose() * coeffs.shear * op.shear * f;
    }
    Some((k + k.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::{derive_plate_tensors, IsotropicMaterial};
    use approx::assert_relative_eq;

    fn square(h: f64) -> [Point; 4] {
        [
            Point::new(0.0, 0.0),
            Point::new(h, 0.0),
            Point::new(h, h),
            Point::new(0.0, h),
        ]
    }

    fn coeffs() -> ElementCoefficients {
        derive_plate_tensors(&IsotropicMaterial::uniform_tight(1, 1.0, 1.0, 1.0))
            .unwrap()
            .coefficients(0)
    }

    #[test]
    fn gauss_rules_integrate_polynomials() {
        for n in 1..=7 {
            let g = gauss_legendre(n);
            let wsum: f64 = g.iter().map(|p| p.1).sum();
            assert_relative_eq!(wsum, 2.0, epsilon = 1e-13);
            for k in 0..2 * n {
                let integral: f64 = g.iter().map(|(x, w)| w * x.powi(k as i32)).sum();
                let exact = if k % 2 == 0 { 2.0 / (k + 1) as f64 } else { 0.0 };
                assert_relative_eq!(integral, exact, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn constant_deflection_has_no_energy() {
        for interp in [ShearInterpolation::AssumedStrain, ShearInterpolation::Full] {
            let k = element_stiffness(&square(1.0), &coeffs(), interp, 2).unwrap();
            let mut k3 = ElementVector::zeros();
            for i in 0..4 {
                k3[3 * i + 2] = 1.0;
            }
            assert!((k * k3).norm() < 1e-15);
            assert_relative_eq!(k, k.transpose());
        }
    }

    #[test]
    fn single_element_kernel_is_three_dimensional() {
        let x = [
            Point::new(0.0, 0.0),
            Point::new(1.2, 0.1),
            Point::new(1.0, 0.9),
            Point::new(-0.1, 1.1),
        ];
        for interp in [ShearInterpolation::AssumedStrain, ShearInterpolation::Full] {
            let k = element_stiffness(&x, &coeffs(), interp, 2).unwrap();
            let eig = nalgebra::SymmetricEigen::new(k).eigenvalues;
            let max = eig.max();
            let zeros = eig.iter().filter(|v| v.abs() < 1e-10 * max).count();
            assert_eq!(zeros, 3, "{interp:?}: {eig}");
        }
    }

    #[test]
    fn rigid_rotation_mode_is_strain_free() {
        // phi = (1, 0), w = -x1: phi + grad w = 0 and grad phi = 0.
        let x = [
            Point::new(0.0, 0.0),
            Point::new(1.2, 0.1),
            Point::new(1.0, 0.9),
            Point::new(-0.1, 1.1),
        ];
        let mut u = ElementVector::zeros();
        for i in 0..4 {
            u[3 * i] = 1.0;
            u[3 * i + 2] = -x[i].x;
        }
        for interp in [ShearInterpolation::AssumedStrain, ShearInterpolation::Full] {
            let op = PointOperators::new(&x, 0.3, -0.2, interp).unwrap();
            assert!((op.shear * u).norm() < 1e-14);
            assert!((op.bending * u).norm() < 1e-14);
        }
    }

    #[test]
    fn assumed_strain_is_exact_for_pure_bending_interpolant() {
        // phi = x, w = -|x|^2/2 has zero shear; the tied field reproduces it.
        let x = square(0.5);
        let mut u = ElementVector::zeros();
        for i in 0..4 {
            u[3 * i] = x[i].x;
            u[3 * i + 1] = x[i].y;
            u[3 * i + 2] = -0.5 * x[i].coords.norm_squared();
        }
        let op = PointOperators::new(&x, 0.577, -0.577, ShearInterpolation::AssumedStrain).unwrap();
        assert!((op.shear * u).norm() < 1e-14);
        let full = PointOperators::new(&x, 0.577, -0.577, ShearInterpolation::Full).unwrap();
        assert!((full.shear * u).norm() > 1e-3);
        let curv = op.bending * u;
        assert_relative_eq!(curv[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(curv[1], 1.0, epsilon = 1e-14);
        assert!(curv[2].abs() < 1e-14);
    }

    #[test]
    fn degenerate_element_has_no_operators() {
        let x = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(0.0, 1.0),
        ];
        assert!(PointOperators::new(&x, 1.0, -1.0, ShearInterpolation::Full).is_none());
    }
}
