use nalgebra::{Point2, Vector2};

use crate::error::{Error, Result};

pub type Point = Point2<f64>;

/// Simple polygon, stored counterclockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl Polygon {
    /// Builds a polygon from its vertices in either orientation. Clockwise
    /// input is reversed so that the stored order is always counterclockwise.
    pub fn new(mut vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() >= 2 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if vertices.len() < 3 {
            return Err(Error::InvalidInput(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|v| !v.x.is_finite() || !v.y.is_finite()) {
            return Err(Error::InvalidInput("non-finite polygon vertex".into()));
        }
        Polygon {
            vertices: vertices.clone(),
        }
        .check_simple()?;
        let area = shoelace(&vertices);
        if area.abs() <= f64::EPSILON * bbox_scale(&vertices).powi(2) {
            return Err(Error::InvalidInput("polygon has zero area".into()));
        }
        if area < 0.0 {
            vertices.reverse();
        }
        Ok(Polygon { vertices })
    }

    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        Polygon::new(vec![
            Point::new(x0, y0),
            Point::new(x1, y0),
            Point::new(x1, y1),
            Point::new(x0, y1),
        ])
    }

    pub fn unit_square() -> Self {
        Polygon::rectangle(0.0, 0.0, 1.0, 1.0).expect("unit square is valid")
    }

    /// Regular `sides`-gon inscribed in the circle of the given radius.
    pub fn regular(center: Point, radius: f64, sides: usize) -> Result<Self> {
        if radius <= 0.0 || sides < 3 {
            return Err(Error::InvalidInput(format!(
                "regular polygon needs radius > 0 and >= 3 sides (got {radius}, {sides})"
            )));
        }
        let vertices = (0..sides)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / sides as f64;
                center + radius * Vector2::new(t.cos(), t.sin())
            })
            .collect();
        Polygon::new(vertices)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn area(&self) -> f64 {
        shoelace(&self.vertices)
    }

    pub fn segments(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for v in &self.vertices {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
        }
        (lo, hi)
    }

    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, a) in self.vertices.iter().enumerate() {
            for b in &self.vertices[i + 1..] {
                d = d.max((b - a).norm());
            }
        }
        d
    }

    /// Area centroid.
    pub fn centroid(&self) -> Point {
        let mut c = Vector2::zeros();
        for (a, b) in self.segments() {
            let cross = a.x * b.y - b.x * a.y;
            c += (a.coords + b.coords) * cross;
        }
        Point::from(c / (6.0 * self.area()))
    }

    /// Even-odd containment test. Points exactly on the boundary may land on
    /// either side.
    pub fn contains(&self, p: &Point) -> bool {
        let mut inside = false;
        for (a, b) in self.segments() {
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Exact distance from `p` to the polygon boundary.
    pub fn boundary_distance(&self, p: &Point) -> f64 {
        self.segments()
            .map(|(a, b)| point_segment_distance(p, &a, &b))
            .fold(f64::INFINITY, f64::min)
    }

    /// Closest point on the boundary to `p`.
    pub fn closest_boundary_point(&self, p: &Point) -> Point {
        let mut best = (f64::INFINITY, self.vertices[0]);
        for (a, b) in self.segments() {
            let q = closest_on_segment(p, &a, &b);
            let d = (q - p).norm();
            if d < best.0 {
                best = (d, q);
            }
        }
        best.1
    }

    /// Distance between the boundaries of two polygons (zero if they cross).
    pub fn boundary_gap(&self, other: &Polygon) -> f64 {
        let mut d = f64::INFINITY;
        for (a, b) in self.segments() {
            for (c, e) in other.segments() {
                d = d.min(segment_segment_distance(&a, &b, &c, &e));
            }
        }
        d
    }

    fn check_simple(&self) -> Result<()> {
        let n = self.vertices.len();
        let segs: Vec<_> = self.segments().collect();
        for i in 0..n {
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                let (a, b) = segs[i];
                let (c, d) = segs[j];
                if adjacent {
                    // Adjacent edges share exactly one endpoint; reject folding back.
                    let shared = if j == i + 1 { b } else { a };
                    let (p, q) = if j == i + 1 { (a, d) } else { (b, c) };
                    let u = p - shared;
                    let v = q - shared;
                    if cross(&u, &v).abs() <= 1e-14 * u.norm() * v.norm() && u.dot(&v) > 0.0 {
                        return Err(Error::NonSimplePolygon {
                            first: i,
                            second: j,
                        });
                    }
                } else if segments_intersect(&a, &b, &c, &d) {
                    return Err(Error::NonSimplePolygon {
                        first: i,
                        second: j,
                    });
                }
            }
        }
        Ok(())
    }
}

fn shoelace(v: &[Point]) -> f64 {
    let n = v.len();
    let mut s = 0.0;
    for i in 0..n {
        let a = v[i];
        let b = v[(i + 1) % n];
        s += a.x * b.y - b.x * a.y;
    }
    0.5 * s
}

fn bbox_scale(v: &[Point]) -> f64 {
    let mut s: f64 = 0.0;
    for p in v {
        s = s.max(p.x.abs()).max(p.y.abs());
    }
    s.max(1.0)
}

pub(crate) fn cross(u: &Vector2<f64>, v: &Vector2<f64>) -> f64 {
    u.x * v.y - u.y * v.x
}

pub fn closest_on_segment(p: &Point, a: &Point, b: &Point) -> Point {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return *a;
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    a + ab * t
}

pub fn point_segment_distance(p: &Point, a: &Point, b: &Point) -> f64 {
    (closest_on_segment(p, a, b) - p).norm()
}

fn orient(a: &Point, b: &Point, c: &Point) -> f64 {
    cross(&(b - a), &(c - a))
}

fn on_segment(a: &Point, b: &Point, p: &Point) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

pub fn segments_intersect(a: &Point, b: &Point, c: &Point, d: &Point) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

pub fn segment_segment_distance(a: &Point, b: &Point, c: &Point, d: &Point) -> f64 {
    if segments_intersect(a, b, c, d) {
        return 0.0;
    }
    point_segment_distance(a, c, d)
        .min(point_segment_distance(b, c, d))
        .min(point_segment_distance(c, a, b))
        .min(point_segment_distance(d, a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn clockwise_input_is_reoriented() {
        let p = Polygon::new(vec![
            Point::new(0.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.0),
        ])
        .unwrap();
        assert_relative_eq!(p.area(), 1.0);
    }

    #[test]
    fn bowtie_is_rejected() {
        let err = Polygon::new(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::NonSimplePolygon { .. }));
    }

    #[test]
    fn regular_polygon_area() {
        let p = Polygon::regular(Point::new(0.5, 0.5), 0.2, 64).unwrap();
        let exact = 0.5 * 64.0 * 0.04 * (2.0 * std::f64::consts::PI / 64.0).sin();
        assert_relative_eq!(p.area(), exact, max_relative = 1e-12);
        assert_relative_eq!(p.centroid().x, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn containment_and_distance() {
        let sq = Polygon::unit_square();
        assert!(sq.contains(&Point::new(0.3, 0.2)));
        assert!(!sq.contains(&Point::new(1.3, 0.2)));
        assert_relative_eq!(sq.boundary_distance(&Point::new(0.3, 0.2)), 0.2);
        assert_relative_eq!(sq.boundary_distance(&Point::new(2.0, 0.5)), 1.0);
        let inner = Polygon::rectangle(0.4, 0.4, 0.6, 0.6).unwrap();
        assert_relative_eq!(sq.boundary_gap(&inner), 0.4, epsilon = 1e-15);
    }
}
