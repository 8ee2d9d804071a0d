//! Constitutive data: isotropic Lamé fields, the derived shearing and bending
//! plate tensors, inclusion overrides and the jump constants between them.
//!
//! Bending tensors act on symmetric 2x2 matrices and are stored in Voigt form
//! on `(A11, A22, 2*A12)`, so that `P A . A = e^T D e`.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{Matrix2, Matrix3, SymmetricEigen, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{ElementMask, Mesh};

/// Isotropic background material with per-element Lamé moduli.
#[derive(Debug, Clone, PartialEq)]
pub struct IsotropicMaterial {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    /// Plate thickness.
    pub thickness: f64,
    pub alpha0: f64,
    pub gamma0: f64,
    pub alpha1: f64,
}

impl IsotropicMaterial {
    pub fn uniform(
        num_elements: usize,
        lambda: f64,
        mu: f64,
        thickness: f64,
        alpha0: f64,
        gamma0: f64,
        alpha1: f64,
    ) -> Self {
        IsotropicMaterial {
            lambda: vec![lambda; num_elements],
            mu: vec![mu; num_elements],
            thickness,
            alpha0,
            gamma0,
            alpha1,
        }
    }

    /// Uniform material with the tightest admissible declared constants.
    pub fn uniform_tight(num_elements: usize, lambda: f64, mu: f64, thickness: f64) -> Self {
        IsotropicMaterial::uniform(
            num_elements,
            lambda,
            mu,
            thickness,
            mu,
            2.0 * mu + 3.0 * lambda,
            lambda.abs() + mu,
        )
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    /// Ellipticity floors and sup bounds, element by element.
    pub fn validate(&self) -> Result<()> {
        if !(self.thickness > 0.0) {
            return Err(Error::InvalidInput(format!("thickness must be positive, got {}", self.thickness)));
        }
        if !(self.alpha0 > 0.0 && self.gamma0 > 0.0) {
            return Err(Error::InvalidInput("alpha0 and gamma0 must be positive".into()));
        }
        if self.lambda.len() != self.mu.len() {
            return Err(Error::InvalidInput("lambda and mu fields differ in length".into()));
        }
        for (e, (&l, &m)) in self.lambda.iter().zip(&self.mu).enumerate() {
            if !(m >= self.alpha0) {
                return Err(Error::Ellipticity {
                    element: e,
                    detail: format!("mu = {m} < alpha0 = {}", self.alpha0),
                });
            }
            if !(2.0 * m + 3.0 * l >= self.gamma0) {
                return Err(Error::Ellipticity {
                    element: e,
                    detail: format!("2mu + 3lambda = {} < gamma0 = {}", 2.0 * m + 3.0 * l, self.gamma0),
                });
            }
            if l.abs() + m > self.alpha1 * (1.0 + 1e-12) {
                return Err(Error::Ellipticity {
                    element: e,
                    detail: format!("|lambda| + mu = {} exceeds alpha1 = {}", l.abs() + m, self.alpha1),
                });
            }
        }
        Ok(())
    }

    /// Discrete Lipschitz surrogate: across every interior edge the jump of
    /// `|dlambda| + |dmu|` may not exceed `alpha1 * gap / rho0`, with `gap`
    /// the centroid distance.
    pub fn check_regularity(&self, mesh: &Mesh, rho0: f64) -> Result<()> {
        let mut owner: HashMap<(usize, usize), usize> = HashMap::new();
        for (e, el) in mesh.elements().iter().enumerate() {
            for k in 0..4 {
                let (a, b) = (el[k], el[(k + 1) % 4]);
                let key = (a.min(b), a.max(b));
                if let Some(&f) = owner.get(&key) {
                    let gap = (mesh.centroids()[e] - mesh.centroids()[f]).norm();
                    let jump = (self.lambda[e] - self.lambda[f]).abs() + (self.mu[e] - self.mu[f]).abs();
                    if jump * rho0 > self.alpha1 * gap * (1.0 + 1e-9) {
                        return Err(Error::Ellipticity {
                            element: e,
                            detail: format!("Lamé jump {jump} to element {f} exceeds the Lipschitz bound"),
                        });
                    }
                } else {
                    owner.insert(key, e);
                }
            }
        }
        Ok(())
    }
}

/// Shearing modulus `S = h mu`, bending rigidity `B` and Poisson ratio per element.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateTensors {
    pub shear: Vec<f64>,
    pub rigidity: Vec<f64>,
    pub poisson: Vec<f64>,
    pub young: Vec<f64>,
    pub thickness: f64,
}

/// `S = h mu`, `E = mu(2mu+3lambda)/(mu+lambda)`, `nu = lambda/(2(mu+lambda))`,
/// `B = E h^3 / (12 (1 - nu^2))`. No shear correction factor.
pub fn derive_plate_tensors(mat: &IsotropicMaterial) -> Result<PlateTensors> {
    mat.validate()?;
    let h = mat.thickness;
    let n = mat.len();
    let mut t = PlateTensors {
        shear: Vec::with_capacity(n),
        rigidity: Vec::with_capacity(n),
        poisson: Vec::with_capacity(n),
        young: Vec::with_capacity(n),
        thickness: h,
    };
    for (&l, &m) in mat.lambda.iter().zip(&mat.mu) {
        let young = m * (2.0 * m + 3.0 * l) / (m + l);
        let nu = l / (2.0 * (m + l));
        t.shear.push(h * m);
        t.young.push(young);
        t.poisson.push(nu);
        t.rigidity.push(young * h.powi(3) / (12.0 * (1.0 - nu * nu)));
    }
    Ok(t)
}

impl PlateTensors {
    pub fn len(&self) -> usize {
        self.shear.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shear.is_empty()
    }

    pub fn bending_voigt(&self, e: usize) -> Matrix3<f64> {
        let b = self.rigidity[e];
        let nu = self.poisson[e];
        b * Matrix3::new(1.0, nu, 0.0, nu, 1.0, 0.0, 0.0, 0.0, 0.5 * (1.0 - nu))
    }

    pub fn coefficients(&self, e: usize) -> ElementCoefficients {
        ElementCoefficients {
            shear: Matrix2::identity() * self.shear[e],
            bending: self.bending_voigt(e),
        }
    }
}

/// `P A = B[(1 - nu) sym(A) + nu tr(A) I]`.
pub fn bending_apply(tensors: &PlateTensors, element: usize, a: &Matrix2<f64>) -> Matrix2<f64> {
    let b = tensors.rigidity[element];
    let nu = tensors.poisson[element];
    let sym = (a + a.transpose()) * 0.5;
    (sym * (1.0 - nu) + Matrix2::identity() * (nu * a.trace())) * b
}

/// Voigt vector `(A11, A22, 2 A12)` of the symmetric part of `a`.
pub fn voigt(a: &Matrix2<f64>) -> Vector3<f64> {
    Vector3::new(a[(0, 0)], a[(1, 1)], a[(0, 1)] + a[(1, 0)])
}

/// Symmetric matrix from a Voigt stress vector.
pub fn from_voigt_stress(s: &Vector3<f64>) -> Matrix2<f64> {
    Matrix2::new(s[0], s[2], s[2], s[1])
}

/// Constitutive pair used by element assembly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementCoefficients {
    pub shear: Matrix2<f64>,
    pub bending: Matrix3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticityConstants {
    pub sigma0: f64,
    pub sigma1: f64,
    pub xi0: f64,
    pub xi1: f64,
}

/// Constants from the declared material bounds, with the quadratic sandwiches
/// `h sigma0 <= S <= h sigma1` and `(h^3/12) xi0 |sym A|^2 <= P A.A <= (h^3/12) xi1 |sym A|^2`
/// verified on the symmetric-matrix basis of every element.
pub fn ellipticity_constants(mat: &IsotropicMaterial) -> Result<EllipticityConstants> {
    let tensors = derive_plate_tensors(mat)?;
    let c = EllipticityConstants {
        sigma0: mat.alpha0,
        sigma1: mat.alpha1,
        xi0: (2.0 * mat.alpha0).min(mat.gamma0),
        xi1: 2.0 * mat.alpha1,
    };
    let h = mat.thickness;
    let tol = 1e-12;
    let scale = h.powi(3) / 12.0;
    for e in 0..tensors.len() {
        let s = tensors.shear[e];
        if s < h * c.sigma0 * (1.0 - tol) || s > h * c.sigma1 * (1.0 + tol) {
            return Err(Error::Ellipticity {
                element: e,
                detail: format!("S = {s} outside [{}, {}]", h * c.sigma0, h * c.sigma1),
            });
        }
        let (lo, hi) = bending_frobenius_range(&tensors.bending_voigt(e));
        if lo < scale * c.xi0 * (1.0 - tol) || hi > scale * c.xi1 * (1.0 + tol) {
            return Err(Error::Ellipticity {
                element: e,
                detail: format!(
                    "bending eigenvalues [{lo}, {hi}] outside [{}, {}]",
                    scale * c.xi0,
                    scale * c.xi1
                ),
            });
        }
    }
    Ok(c)
}

/// Extremal values of `P A.A / |A|^2` over symmetric `A`.
pub fn bending_frobenius_range(d: &Matrix3<f64>) -> (f64, f64) {
    // |A|^2 = e1^2 + e2^2 + e3^2/2 in Voigt variables.
    let g = Vector3::new(1.0, 1.0, std::f64::consts::SQRT_2);
    let m = Matrix3::from_fn(|i, j| d[(i, j)] * g[i] * g[j]);
    let eig = SymmetricEigen::new(m).eigenvalues;
    (eig.min(), eig.max())
}

/// Inclusion constitutive data.
#[derive(Debug, Clone, PartialEq)]
pub enum InclusionMaterial {
    /// `S~ = kappa S`, `P~ = kappa P`.
    Contrast(f64),
    /// Explicit tensors per element (only elements inside the inclusion are read).
    Tensors(InclusionTensors),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InclusionTensors {
    pub shear: HashMap<usize, Matrix2<f64>>,
    pub bending: HashMap<usize, Matrix3<f64>>,
}

impl InclusionMaterial {
    pub fn contrast(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidJump(format!("contrast must be positive, got {kappa}")));
        }
        if kappa == 1.0 {
            return Err(Error::InvalidJump("contrast kappa = 1 gives no inclusion".into()));
        }
        Ok(InclusionMaterial::Contrast(kappa))
    }

    pub fn coefficients(&self, background: &ElementCoefficients, e: usize) -> Result<ElementCoefficients> {
        match self {
            InclusionMaterial::Contrast(k) => Ok(ElementCoefficients {
                shear: background.shear * *k,
                bending: background.bending * *k,
            }),
            InclusionMaterial::Tensors(t) => {
                let shear = t.shear.get(&e).copied().ok_or_else(|| {
                    Error::InvalidInput(format!("no inclusion shear tensor for element {e}"))
                })?;
                let bending = t.bending.get(&e).copied().ok_or_else(|| {
                    Error::InvalidInput(format!("no inclusion bending tensor for element {e}"))
                })?;
                Ok(ElementCoefficients { shear, bending })
            }
        }
    }
}

/// Voigt matrix of a fourth-order tensor given as `p[a][b][c][d]`, after
/// checking the minor and major symmetries.
pub fn bending_voigt_from_components(p: &[[[[f64; 2]; 2]; 2]; 2]) -> Result<Matrix3<f64>> {
    let scale = p.iter().flatten().flatten().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                for d in 0..2 {
                    let v = p[a][b][c][d];
                    for w in [p[b][a][c][d], p[a][b][d][c], p[c][d][a][b]] {
                        if (v - w).abs() > 1e-12 * scale {
                            return Err(Error::InvalidInput(format!(
                                "bending tensor lacks minor/major symmetry at ({a}{b}{c}{d})"
                            )));
                        }
                    }
                }
            }
        }
    }
    let idx = [(0, 0), (1, 1), (0, 1)];
    Ok(Matrix3::from_fn(|i, j| p[idx[i].0][idx[i].1][idx[j].0][idx[j].1]))
}

pub fn check_shear_symmetry(s: &Matrix2<f64>) -> Result<()> {
    if (s[(0, 1)] - s[(1, 0)]).abs() > 1e-12 * s.abs().max().max(1e-300) {
        return Err(Error::InvalidInput("inclusion shear tensor is not symmetric".into()));
    }
    Ok(())
}

fn read_table(path: &Path, width: usize) -> Result<Vec<(usize, Vec<f64>)>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let Ok(id) = fields[0].parse::<usize>() else {
            if lineno == 0 {
                continue; // header
            }
            return Err(Error::parse(format!("{}:{}", path.display(), lineno + 1), "bad element id"));
        };
        if fields.len() != width + 1 {
            return Err(Error::parse(
                format!("{}:{}", path.display(), lineno + 1),
                format!("expected {} columns, got {}", width + 1, fields.len()),
            ));
        }
        let vals = fields[1..]
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(format!("{}:{}", path.display(), lineno + 1), e.to_string()))?;
        rows.push((id, vals));
    }
    Ok(rows)
}

impl InclusionTensors {
    /// Reads `element_id,s11,s12,s21,s22` and
    /// `element_id,p1111,p1112,...,p2222` (lexicographic index order) tables.
    pub fn read(shear_path: &Path, bending_path: &Path) -> Result<Self> {
        let mut t = InclusionTensors::default();
        for (id, v) in read_table(shear_path, 4)? {
            let s = Matrix2::new(v[0], v[1], v[2], v[3]);
            check_shear_symmetry(&s)?;
            t.shear.insert(id, s);
        }
        for (id, v) in read_table(bending_path, 16)? {
            let mut p = [[[[0.0; 2]; 2]; 2]; 2];
            for (k, val) in v.iter().enumerate() {
                p[k >> 3 & 1][k >> 2 & 1][k >> 1 & 1][k & 1] = *val;
            }
            t.bending.insert(id, bending_voigt_from_components(&p)?);
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Inclusion stiffer than the background.
    Stiff,
    /// Inclusion softer than the background.
    Soft,
}

/// Jump constants: stiff means `eta X <= X~ - X <= (delta-1) X`, soft means
/// `-(1-delta) X <= X~ - X <= -eta X`, for X the shearing and bending tensors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpBounds {
    pub eta: f64,
    pub delta: f64,
    pub regime: Regime,
}

/// Extremal generalized eigenvalues of `(X~ - X)` relative to `X`.
fn relative_jump_range(bg: &ElementCoefficients, incl: &ElementCoefficients) -> Result<(f64, f64)> {
    let s = bg.shear[(0, 0)];
    check_shear_symmetry(&incl.shear)?;
    let ds = SymmetricEigen::new((incl.shear - bg.shear) / s).eigenvalues;
    let chol = bg
        .bending
        .cholesky()
        .ok_or_else(|| Error::InvalidInput("background bending tensor is not positive definite".into()))?;
    let l_inv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::InvalidInput("singular background bending tensor".into()))?;
    let m = l_inv * (incl.bending - bg.bending) * l_inv.transpose();
    let m = (m + m.transpose()) * 0.5;
    let dp = SymmetricEigen::new(m).eigenvalues;
    Ok((ds.min().min(dp.min()), ds.max().max(dp.max())))
}

/// Tightest `(eta, delta)` for the inclusion over the flagged elements.
pub fn jump_bounds(
    tensors: &PlateTensors,
    inclusion: &InclusionMaterial,
    mask: Option<&ElementMask>,
) -> Result<JumpBounds> {
    match inclusion {
        InclusionMaterial::Contrast(k) => {
            let k = *k;
            if !(k > 0.0) || k == 1.0 {
                return Err(Error::InvalidJump(format!("contrast {k} has no valid jump regime")));
            }
            Ok(if k > 1.0 {
                JumpBounds {
                    eta: k - 1.0,
                    delta: k,
                    regime: Regime::Stiff,
                }
            } else {
                JumpBounds {
                    eta: 1.0 - k,
                    delta: k,
                    regime: Regime::Soft,
                }
            })
        }
        InclusionMaterial::Tensors(_) => {
            let elements: Vec<usize> = match mask {
                Some(m) => m.flagged().collect(),
                None => (0..tensors.len()).collect(),
            };
            if elements.is_empty() {
                return Err(Error::InvalidJump("no inclusion elements to compare".into()));
            }
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            let mut first_pos = None;
            let mut first_neg = None;
            for &e in &elements {
                let bg = tensors.coefficients(e);
                let (a, b) = relative_jump_range(&bg, &inclusion.coefficients(&bg, e)?)?;
                if a <= 0.0 && first_neg.is_none() {
                    first_neg = Some(e);
                }
                if b >= 0.0 && first_pos.is_none() {
                    first_pos = Some(e);
                }
                lo = lo.min(a);
                hi = hi.max(b);
            }
            if lo > 0.0 {
                Ok(JumpBounds {
                    eta: lo,
                    delta: 1.0 + hi,
                    regime: Regime::Stiff,
                })
            } else if hi < 0.0 && lo > -1.0 {
                Ok(JumpBounds {
                    eta: -hi,
                    delta: 1.0 + lo,
                    regime: Regime::Soft,
                })
            } else {
                // Report whichever element breaks the regime suggested by the majority sign.
                let element = if hi >= 0.0 && lo <= 0.0 {
                    first_neg.or(first_pos).unwrap_or(elements[0])
                } else {
                    elements[0]
                };
                Err(Error::IndefiniteJump { element })
            }
        }
    }
}
