//! Plate mid-surface geometry: polygonal domains, quadrilateral meshes and
//! element masks (interior erosion, inclusion rasterization, fatness).

mod io;
mod mask;
mod mesh;
mod polygon;

pub use io::{parse_polygons, read_polygons, write_mask_csv};
pub use mask::{
    fatness_ratio, interior_region, rasterize_inclusion, ElementMask, Fatness,
    RasterizedInclusion,
};
pub use mesh::{generate_mesh, generate_mesh_with, BoundaryEdge, Mesh, MeshOptions};
pub use polygon::{
    closest_on_segment, point_segment_distance, segment_segment_distance, Point, Polygon,
};

use crate::error::{Error, Result};

/// A priori geometric constants attached to a domain. All lengths are
/// multiples of the scale `rho0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AprioriData {
    pub rho0: f64,
    /// Lipschitz constant of the boundary; user supplied, never estimated.
    pub m0: f64,
    /// diam(domain) <= m1 * rho0.
    pub m1: f64,
    /// A disk of radius s0 * rho0 around `x0` lies inside the domain.
    pub s0: f64,
    pub x0: Point,
    /// Required inclusion depth: dist(D, boundary) >= d0 * rho0.
    pub d0: f64,
    /// Fatness depth factor.
    pub h1: f64,
}

impl AprioriData {
    /// Constants read off the polygon itself: `m1` is the tight diameter
    /// ratio, `x0` the deepest vertex of a 64x64 probe grid and `s0` slightly
    /// below its depth. `m0`, `d0`, `h1` get the neutral value 0.1 or 1.
    pub fn derived(polygon: &Polygon, rho0: f64) -> Self {
        let (lo, hi) = polygon.bounding_box();
        let mut best = (0.0, polygon.centroid());
        let n = 64;
        for i in 0..=n {
            for j in 0..=n {
                let p = Point::new(
                    lo.x + (hi.x - lo.x) * i as f64 / n as f64,
                    lo.y + (hi.y - lo.y) * j as f64 / n as f64,
                );
                if polygon.contains(&p) {
                    let d = polygon.boundary_distance(&p);
                    if d > best.0 {
                        best = (d, p);
                    }
                }
            }
        }
        AprioriData {
            rho0,
            m0: 1.0,
            m1: polygon.diameter() / rho0,
            s0: 0.99 * best.0 / rho0,
            x0: best.1,
            d0: 0.1,
            h1: 0.1,
        }
    }

    fn check_positive(&self) -> Result<()> {
        let named = [
            ("rho0", self.rho0),
            ("M0", self.m0),
            ("M1", self.m1),
            ("s0", self.s0),
            ("d0", self.d0),
            ("h1", self.h1),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Plate domain: a simple counterclockwise polygon plus its a priori data.
#[derive(Debug, Clone)]
pub struct Domain {
    polygon: Polygon,
    apriori: AprioriData,
}

impl Domain {
    pub fn new(polygon: Polygon, apriori: AprioriData) -> Result<Self> {
        apriori.check_positive()?;
        let diam = polygon.diameter();
        if diam > apriori.m1 * apriori.rho0 * (1.0 + 1e-12) {
            return Err(Error::InvalidInput(format!(
                "diam(domain) = {diam} exceeds M1*rho0 = {}",
                apriori.m1 * apriori.rho0
            )));
        }
        let r = apriori.s0 * apriori.rho0;
        if !polygon.contains(&apriori.x0) || polygon.boundary_distance(&apriori.x0) < r {
            return Err(Error::InvalidInput(format!(
                "disk of radius {r} around ({}, {}) is not inside the domain",
                apriori.x0.x, apriori.x0.y
            )));
        }
        Ok(Domain { polygon, apriori })
    }

    /// Domain with constants derived from the polygon (see [`AprioriData::derived`]).
    pub fn with_derived_constants(polygon: Polygon, rho0: f64) -> Result<Self> {
        let apriori = AprioriData::derived(&polygon, rho0);
        Domain::new(polygon, apriori)
    }

    pub fn unit_square() -> Self {
        Domain::with_derived_constants(Polygon::unit_square(), 1.0).expect("unit square is valid")
    }

    pub fn polygon(&self) -> &Polygon {
        &self.polygon
    }

    pub fn apriori(&self) -> &AprioriData {
        &self.apriori
    }

    pub fn rho0(&self) -> f64 {
        self.apriori.rho0
    }

    pub fn area(&self) -> f64 {
        self.polygon.area()
    }
}

/// Distance from a point to the domain boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryDistance {
    pub distance: f64,
    /// True when the point lies outside the domain.
    pub exterior: bool,
}

pub fn distance_to_boundary(point: &Point, domain: &Domain) -> BoundaryDistance {
    let distance = domain.polygon.boundary_distance(point);
    BoundaryDistance {
        distance,
        exterior: distance > 0.0 && !domain.polygon.contains(point),
    }
}
