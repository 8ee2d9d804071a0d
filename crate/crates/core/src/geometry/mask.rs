use rayon::prelude::*;

use super::mesh::Mesh;
use super::polygon::Polygon;
use super::Domain;
use crate::error::{Error, Result};

/// Per-element indicator with its covered area.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementMask {
    flags: Vec<bool>,
    area: f64,
}

impl ElementMask {
    pub fn from_flags(mesh: &Mesh, flags: Vec<bool>) -> Result<Self> {
        if flags.len() != mesh.num_elements() {
            return Err(Error::MeshMismatch(format!(
                "mask has {} flags, mesh has {} elements",
                flags.len(),
                mesh.num_elements()
            )));
        }
        let area = flags
            .iter()
            .zip(mesh.element_areas())
            .filter(|(f, _)| **f)
            .map(|(_, a)| a)
            .sum();
        Ok(ElementMask { flags, area })
    }

    pub fn empty(mesh: &Mesh) -> Self {
        ElementMask {
            flags: vec![false; mesh.num_elements()],
            area: 0.0,
        }
    }

    pub fn full(mesh: &Mesh) -> Self {
        ElementMask {
            flags: vec![true; mesh.num_elements()],
            area: mesh.area(),
        }
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn contains(&self, element: usize) -> bool {
        self.flags[element]
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|f| **f).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.flags.iter().any(|f| *f)
    }

    pub fn flagged(&self) -> impl Iterator<Item = usize> + '_ {
        self.flags.iter().enumerate().filter(|(_, f)| **f).map(|(e, _)| e)
    }

    pub fn is_subset_of(&self, other: &ElementMask) -> bool {
        self.flags.len() == other.flags.len()
            && self.flags.iter().zip(&other.flags).all(|(a, b)| !*a || *b)
    }
}

/// Elements whose centroid lies farther than `t` from the mesh boundary.
pub fn interior_region(mesh: &Mesh, t: f64) -> Result<ElementMask> {
    if !(t >= 0.0) {
        return Err(Error::InvalidInput(format!("erosion depth must be >= 0, got {t}")));
    }
    let flags = mesh
        .centroids()
        .par_iter()
        .map(|c| mesh.boundary_distance(c) > t)
        .collect();
    ElementMask::from_flags(mesh, flags)
}

/// Inclusion polygons rasterized onto a mesh by centroid membership.
#[derive(Debug, Clone)]
pub struct RasterizedInclusion {
    pub mask: ElementMask,
    pub polygons: Vec<Polygon>,
    /// dist(D, boundary) measured on the polygons, when a domain was given.
    pub boundary_clearance: Option<f64>,
    pub warnings: Vec<String>,
}

impl RasterizedInclusion {
    pub fn area(&self) -> f64 {
        self.mask.area()
    }
}

/// Flags elements whose centroid lies in any of `polygons`. Polygons are
/// expected to be pairwise disjoint (a disconnected inclusion). A clearance
/// below `d0 * rho0` from the domain boundary produces a warning.
pub fn rasterize_inclusion(
    mesh: &Mesh,
    domain: Option<&Domain>,
    polygons: &[Polygon],
) -> RasterizedInclusion {
    let flags: Vec<bool> = mesh
        .centroids()
        .par_iter()
        .map(|c| polygons.iter().any(|p| p.contains(c)))
        .collect();
    let mask = ElementMask::from_flags(mesh, flags).expect("one flag per element");
    let mut warnings = Vec::new();
    let boundary_clearance = domain.filter(|_| !polygons.is_empty()).map(|d| {
        let clearance = polygons
            .iter()
            .map(|p| {
                let inside = p.vertices().iter().all(|v| d.polygon().contains(v));
                if inside {
                    p.boundary_gap(d.polygon())
                } else {
                    0.0
                }
            })
            .fold(f64::INFINITY, f64::min);
        let required = d.apriori().d0 * d.rho0();
        if clearance < required {
            warnings.push(format!(
                "inclusion is {clearance:.4} from the boundary, below d0*rho0 = {required:.4}"
            ));
        }
        clearance
    });
    RasterizedInclusion {
        mask,
        polygons: polygons.to_vec(),
        boundary_clearance,
        warnings,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fatness {
    /// |D_depth| / |D|.
    pub ratio: f64,
    /// Set when the inclusion mask is empty (ratio reported as 1).
    pub empty: bool,
}

impl Fatness {
    /// At least half of D lies deeper than the probed depth.
    pub fn holds(&self) -> bool {
        self.ratio >= 0.5
    }
}

/// Fraction of the inclusion area whose element centroids lie deeper than
/// `depth` inside the inclusion polygons.
pub fn fatness_ratio(mesh: &Mesh, inclusion: &RasterizedInclusion, depth: f64) -> Result<Fatness> {
    if !(depth >= 0.0) {
        return Err(Error::InvalidInput(format!("depth must be >= 0, got {depth}")));
    }
    let mask = &inclusion.mask;
    if mask.is_empty() {
        return Ok(Fatness {
            ratio: 1.0,
            empty: true,
        });
    }
    let deep_area: f64 = mask
        .flagged()
        .filter(|&e| {
            let c = mesh.centroids()[e];
            let d = inclusion
                .polygons
                .iter()
                .map(|p| p.boundary_distance(&c))
                .fold(f64::INFINITY, f64::min);
            d > depth
        })
        .map(|e| mesh.element_areas()[e])
        .fold(0.0, |a, b| a + b);
    Ok(Fatness {
        ratio: deep_area / mask.area(),
        empty: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{point_segment_distance, Point};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn zero_depth_flags_everything() {
        let mesh = Mesh::unit_square(8);
        assert_eq!(interior_region(&mesh, 0.0).unwrap().count(), 64);
        assert!(interior_region(&mesh, 0.5).unwrap().is_empty());
        assert!(interior_region(&mesh, -0.1).is_err());
    }

    #[test]
    fn erosion_matches_brute_force_segment_distance() {
        let mesh = Mesh::unit_square(10);
        let corners = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ];
        let expected = mesh
            .centroids()
            .iter()
            .filter(|c| {
                (0..4)
                    .map(|k| point_segment_distance(c, &corners[k], &corners[(k + 1) % 4]))
                    .all(|d| d > 0.25)
            })
            .count();
        assert_eq!(interior_region(&mesh, 0.25).unwrap().count(), expected);
        assert_eq!(expected, 16);
    }

    #[test]
    fn empty_and_full_inclusions() {
        let mesh = Mesh::unit_square(6);
        let none = rasterize_inclusion(&mesh, None, &[]);
        assert!(none.mask.is_empty());
        assert_eq!(none.area(), 0.0);
        let all = rasterize_inclusion(&mesh, None, &[Polygon::unit_square()]);
        assert_eq!(all.mask.count(), 36);
        assert_relative_eq!(all.area(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn disk_area_within_two_percent() {
        let mesh = Mesh::unit_square(50);
        let disk = Polygon::regular(Point::new(0.5, 0.5), 0.2, 128).unwrap();
        let incl = rasterize_inclusion(&mesh, Some(&Domain::unit_square()), &[disk]);
        let exact = std::f64::consts::PI * 0.04;
        assert!((incl.area() - exact).abs() / exact < 0.02);
        assert!(incl.warnings.is_empty());
    }

    #[test]
    fn clearance_warning() {
        let mesh = Mesh::unit_square(10);
        let near = Polygon::rectangle(0.02, 0.4, 0.2, 0.6).unwrap();
        let incl = rasterize_inclusion(&mesh, Some(&Domain::unit_square()), &[near]);
        assert_eq!(incl.warnings.len(), 1);
        assert_relative_eq!(incl.boundary_clearance.unwrap(), 0.02, epsilon = 1e-12);
    }

    #[test]
    fn fatness_limits() {
        let mesh = Mesh::unit_square(100);
        let r = 0.1;
        let small = Polygon::regular(Point::new(0.5, 0.5), r, 128).unwrap();
        let incl = rasterize_inclusion(&mesh, None, &[small]);
        assert_eq!(fatness_ratio(&mesh, &incl, 0.0).unwrap().ratio, 1.0);
        assert_eq!(fatness_ratio(&mesh, &incl, r).unwrap().ratio, 0.0);

        let big = Polygon::regular(Point::new(0.5, 0.5), 2.0 * r, 256).unwrap();
        let incl = rasterize_inclusion(&mesh, None, &[big]);
        let f = fatness_ratio(&mesh, &incl, r).unwrap();
        assert!((f.ratio - 0.25).abs() < 0.03, "{}", f.ratio);
        assert!(!f.holds());

        let empty = rasterize_inclusion(&mesh, None, &[]);
        let f = fatness_ratio(&mesh, &empty, 0.1).unwrap();
        assert!(f.empty && f.ratio == 1.0);
    }

    #[test]
    fn disk_area_converges_under_refinement() {
        let disk = Polygon::regular(Point::new(0.5, 0.5), 0.23, 64).unwrap();
        let exact = disk.area();
        let dev = |n: usize| {
            let mesh = Mesh::unit_square(n);
            (rasterize_inclusion(&mesh, None, std::slice::from_ref(&disk)).area() - exact).abs()
        };
        // Centroid rasterization converges at first order on average; compare
        // over a factor-4 refinement to damp lattice effects.
        assert!(dev(160) < 0.5 * dev(40));
    }

    proptest! {
        #[test]
        fn erosion_is_monotone(s in 0.0f64..0.5, extra in 0.0f64..0.5) {
            let mesh = Mesh::unit_square(12);
            let outer = interior_region(&mesh, s).unwrap();
            let inner = interior_region(&mesh, s + extra).unwrap();
            prop_assert!(inner.is_subset_of(&outer));
        }

        #[test]
        fn fatness_nonincreasing_in_depth(a in 0.0f64..0.2, b in 0.0f64..0.2) {
            let mesh = Mesh::unit_square(30);
            let p = Polygon::rectangle(0.2, 0.3, 0.7, 0.6).unwrap();
            let incl = rasterize_inclusion(&mesh, None, &[p]);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(fatness_ratio(&mesh, &incl, hi).unwrap().ratio
                <= fatness_ratio(&mesh, &incl, lo).unwrap().ratio);
        }
    }

    #[test]
    fn masks_are_reproducible() {
        let mesh = Mesh::unit_square(20);
        let p = Polygon::regular(Point::new(0.4, 0.6), 0.15, 32).unwrap();
        let a = rasterize_inclusion(&mesh, None, std::slice::from_ref(&p));
        let b = rasterize_inclusion(&mesh, None, &[p]);
        assert_eq!(a.mask, b.mask);
        assert_eq!(a.area().to_bits(), b.area().to_bits());
    }
}
