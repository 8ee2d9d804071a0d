use std::collections::HashMap;

use nalgebra::Vector2;

use super::polygon::{cross, Point, Polygon};
use super::Domain;
use crate::error::{Error, Result};

/// A mesh edge on the domain boundary, oriented counterclockwise around the
/// domain.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    /// Element owning the edge.
    pub element: usize,
    /// Outward unit normal.
    pub normal: Vector2<f64>,
    /// Unit tangent, the normal rotated counterclockwise by a right angle.
    pub tangent: Vector2<f64>,
    pub length: f64,
}

/// Conforming quadrilateral mesh of the plate mid-surface.
#[derive(Debug, Clone)]
pub struct Mesh {
    nodes: Vec<Point>,
    elements: Vec<[usize; 4]>,
    boundary_edges: Vec<BoundaryEdge>,
    boundary_loops: Vec<Vec<usize>>,
    element_areas: Vec<f64>,
    centroids: Vec<Point>,
    mesh_size: f64,
}

#[derive(Debug, Clone)]
pub struct MeshOptions {
    pub max_elements: usize,
    /// Move staircase boundary nodes of non-rectangular domains onto the polygon.
    pub snap_boundary: bool,
}

impl Default for MeshOptions {
    fn default() -> Self {
        MeshOptions {
            max_elements: 250_000,
            snap_boundary: true,
        }
    }
}

impl Mesh {
    /// Builds a mesh from raw connectivity. Elements must be counterclockwise
    /// with positive Jacobian at every corner (hence everywhere).
    pub fn from_parts(nodes: Vec<Point>, elements: Vec<[usize; 4]>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidInput("mesh has no elements".into()));
        }
        for (e, el) in elements.iter().enumerate() {
            if el.iter().any(|&n| n >= nodes.len()) {
                return Err(Error::InvalidInput(format!("element {e} references a missing node")));
            }
            let x = el.map(|n| nodes[n]);
            if corner_jacobians(&x).iter().any(|&j| j <= 0.0) {
                return Err(Error::SingularJacobian { element: e });
            }
        }

        // Edge bookkeeping: each undirected edge must be used once (boundary)
        // or twice with opposite orientation (interior).
        let mut uses: HashMap<(usize, usize), Vec<(usize, usize, usize)>> = HashMap::new();
        for (e, el) in elements.iter().enumerate() {
            for k in 0..4 {
                let a = el[k];
                let b = el[(k + 1) % 4];
                uses.entry((a.min(b), a.max(b))).or_default().push((e, a, b));
            }
        }
        let mut boundary_edges = Vec::new();
        for (e, el) in elements.iter().enumerate() {
            for k in 0..4 {
                let a = el[k];
                let b = el[(k + 1) % 4];
                let list = &uses[&(a.min(b), a.max(b))];
                match list.len() {
                    1 => {
                        let d = nodes[b] - nodes[a];
                        let length = d.norm();
                        let tangent = d / length;
                        let normal = Vector2::new(tangent.y, -tangent.x);
                        boundary_edges.push(BoundaryEdge {
                            nodes: [a, b],
                            element: e,
                            normal,
                            tangent,
                            length,
                        });
                    }
                    2 => {
                        if list[0].1 == list[1].1 {
                            return Err(Error::InvalidInput(format!(
                                "elements {} and {} share edge ({a}, {b}) with the same orientation",
                                list[0].0, list[1].0
                            )));
                        }
                    }
                    _ => {
                        return Err(Error::InvalidInput(format!(
                            "edge ({a}, {b}) is shared by more than two elements"
                        )))
                    }
                }
            }
        }
        let boundary_loops = chain_loops(&boundary_edges)?;

        let element_areas = elements
            .iter()
            .map(|el| {
                let x = el.map(|n| nodes[n]);
                0.5 * (cross(&(x[2] - x[0]), &(x[3] - x[1])))
            })
            .collect();
        let centroids = elements
            .iter()
            .map(|el| {
                let c = el.iter().map(|&n| nodes[n].coords).sum::<Vector2<f64>>() / 4.0;
                Point::from(c)
            })
            .collect();
        let mesh_size = elements
            .iter()
            .map(|el| {
                let mut d: f64 = 0.0;
                for i in 0..4 {
                    for j in i + 1..4 {
                        d = d.max((nodes[el[i]] - nodes[el[j]]).norm());
                    }
                }
                d
            })
            .fold(0.0, f64::max);

        Ok(Mesh {
            nodes,
            elements,
            boundary_edges,
            boundary_loops,
            element_areas,
            centroids,
            mesh_size,
        })
    }

    /// Structured `nx` x `ny` grid on an axis-aligned rectangle.
    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || !(x1 > x0) || !(y1 > y0) {
            return Err(Error::InvalidInput("degenerate structured grid".into()));
        }
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                nodes.push(Point::new(
                    x0 + (x1 - x0) * i as f64 / nx as f64,
                    y0 + (y1 - y0) * j as f64 / ny as f64,
                ));
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut elements = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                elements.push([id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        Mesh::from_parts(nodes, elements)
    }

    pub fn unit_square(n: usize) -> Self {
        Mesh::rectangle(0.0, 0.0, 1.0, 1.0, n, n).expect("valid grid")
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn elements(&self) -> &[[usize; 4]] {
        &self.elements
    }

    pub fn element_coords(&self, e: usize) -> [Point; 4] {
        self.elements[e].map(|n| self.nodes[n])
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    /// Closed boundary loops as sequences of indices into [`Mesh::boundary_edges`].
    pub fn boundary_loops(&self) -> &[Vec<usize>] {
        &self.boundary_loops
    }

    pub fn element_areas(&self) -> &[f64] {
        &self.element_areas
    }

    /// Element centroids, taken as the image of the reference-square center.
    pub fn centroids(&self) -> &[Point] {
        &self.centroids
    }

    /// Largest element diameter.
    pub fn mesh_size(&self) -> f64 {
        self.mesh_size
    }

    pub fn area(&self) -> f64 {
        self.element_areas.iter().sum()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn num_dofs(&self) -> usize {
        3 * self.nodes.len()
    }

    /// Area centroid of the meshed region.
    pub fn area_centroid(&self) -> Point {
        // Split each quad into two triangles; vertex averages are only exact
        // for parallelograms.
        let mut exact = Vector2::zeros();
        let mut total = 0.0;
        for e in 0..self.elements.len() {
            let x = self.element_coords(e);
            for (a, b, d) in [(x[0], x[1], x[2]), (x[0], x[2], x[3])] {
                let t = 0.5 * cross(&(b - a), &(d - a));
                exact += (a.coords + b.coords + d.coords) / 3.0 * t;
                total += t;
            }
        }
        Point::from(exact / total)
    }

    /// Minimum distance from `p` to the mesh boundary.
    pub fn boundary_distance(&self, p: &Point) -> f64 {
        self.boundary_edges
            .iter()
            .map(|e| super::point_segment_distance(p, &self.nodes[e.nodes[0]], &self.nodes[e.nodes[1]]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Number of connected components of the element adjacency graph.
    pub fn connected_components(&self) -> usize {
        let n = self.nodes.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for el in &self.elements {
            for k in 1..4 {
                let a = find(&mut parent, el[0]);
                let b = find(&mut parent, el[k]);
                if a != b {
                    parent[a] = b;
                }
            }
        }
        let mut used = vec![false; n];
        for el in &self.elements {
            for &v in el {
                used[v] = true;
            }
        }
        let mut roots: Vec<usize> = (0..n).filter(|&v| used[v]).map(|v| find(&mut parent, v)).collect();
        roots.sort_unstable();
        roots.dedup();
        roots.len()
    }
}

fn corner_jacobians(x: &[Point; 4]) -> [f64; 4] {
    std::array::from_fn(|i| {
        let prev = x[(i + 3) % 4];
        let next = x[(i + 1) % 4];
        cross(&(next - x[i]), &(prev - x[i]))
    })
}

fn chain_loops(edges: &[BoundaryEdge]) -> Result<Vec<Vec<usize>>> {
    let mut outgoing: HashMap<usize, Vec<usize>> = HashMap::new();
    for (k, e) in edges.iter().enumerate() {
        outgoing.entry(e.nodes[0]).or_default().push(k);
    }
    let mut used = vec![false; edges.len()];
    let mut loops = Vec::new();
    for start in 0..edges.len() {
        if used[start] {
            continue;
        }
        let mut lp = vec![start];
        used[start] = true;
        let first = edges[start].nodes[0];
        let mut current = edges[start].nodes[1];
        while current != first {
            let next = outgoing
                .get(&current)
                .and_then(|c| c.iter().copied().find(|&k| !used[k]))
                .ok_or_else(|| Error::InvalidInput("boundary edges do not form closed loops".into()))?;
            used[next] = true;
            lp.push(next);
            current = edges[next].nodes[1];
        }
        loops.push(lp);
    }
    Ok(loops)
}

/// Meshes `domain` with quadrilaterals of size about `target_size`.
pub fn generate_mesh(domain: &Domain, target_size: f64) -> Result<Mesh> {
    generate_mesh_with(domain, target_size, &MeshOptions::default())
}

/// Axis-aligned rectangles become structured grids. Other polygons are
/// covered by a uniform overlay of square cells (kept when the cell center is
/// inside), after which staircase boundary nodes are snapped onto the polygon
/// wherever that keeps every adjacent element valid.
pub fn generate_mesh_with(domain: &Domain, target_size: f64, options: &MeshOptions) -> Result<Mesh> {
    if !(target_size > 0.0 && target_size.is_finite()) {
        return Err(Error::InvalidInput(format!("target_size must be positive, got {target_size}")));
    }
    let polygon = domain.polygon();
    let (lo, hi) = polygon.bounding_box();
    let nx = ((hi.x - lo.x) / target_size - 1e-9).ceil().max(1.0) as usize;
    let ny = ((hi.y - lo.y) / target_size - 1e-9).ceil().max(1.0) as usize;
    let requested = nx.saturating_mul(ny);

    if let Some((x0, y0, x1, y1)) = axis_aligned_rectangle(polygon) {
        if requested > options.max_elements {
            return Err(Error::ElementBudget {
                requested,
                budget: options.max_elements,
            });
        }
        return Mesh::rectangle(x0, y0, x1, y1, nx, ny);
    }

    let dx = (hi.x - lo.x) / nx as f64;
    let dy = (hi.y - lo.y) / ny as f64;
    let mut keep = vec![false; requested];
    let mut count = 0usize;
    for j in 0..ny {
        for i in 0..nx {
            let c = Point::new(lo.x + (i as f64 + 0.5) * dx, lo.y + (j as f64 + 0.5) * dy);
            if polygon.contains(&c) {
                keep[j * nx + i] = true;
                count += 1;
                if count > options.max_elements {
                    return Err(Error::ElementBudget {
                        requested: count,
                        budget: options.max_elements,
                    });
                }
            }
        }
    }
    if count == 0 {
        return Err(Error::InvalidInput("target_size too coarse: no cell inside the polygon".into()));
    }

    let grid_id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut node_of = vec![usize::MAX; (nx + 1) * (ny + 1)];
    let mut nodes = Vec::new();
    let mut elements = Vec::with_capacity(count);
    for j in 0..ny {
        for i in 0..nx {
            if !keep[j * nx + i] {
                continue;
            }
            let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            let el = corners.map(|(a, b)| {
                let g = grid_id(a, b);
                if node_of[g] == usize::MAX {
                    node_of[g] = nodes.len();
                    nodes.push(Point::new(lo.x + a as f64 * dx, lo.y + b as f64 * dy));
                }
                node_of[g]
            });
            elements.push(el);
        }
    }

    let raw = Mesh::from_parts(nodes.clone(), elements.clone())?;
    if raw.connected_components() != 1 {
        return Err(Error::InvalidInput(
            "overlay mesh is disconnected at this target_size; refine it".into(),
        ));
    }
    if !options.snap_boundary {
        return Ok(raw);
    }

    let snap_radius = 0.5 * dx.min(dy);
    let mut node_elements: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    for (e, el) in elements.iter().enumerate() {
        for &n in el {
            node_elements[n].push(e);
        }
    }
    let mut on_boundary = vec![false; nodes.len()];
    for e in raw.boundary_edges() {
        on_boundary[e.nodes[0]] = true;
        on_boundary[e.nodes[1]] = true;
    }
    let min_quality = 0.05 * dx * dy;
    let mut fixed = vec![false; nodes.len()];
    let try_move = |nodes: &mut Vec<Point>, n: usize, target: Point| -> bool {
        let old = nodes[n];
        nodes[n] = target;
        let ok = node_elements[n].iter().all(|&e| {
            let x = elements[e].map(|k| nodes[k]);
            corner_jacobians(&x).iter().all(|&j| j > min_quality)
        });
        if !ok {
            nodes[n] = old;
        }
        ok
    };
    // Polygon corners first, then the remaining staircase nodes.
    for v in polygon.vertices() {
        let candidate = (0..nodes.len())
            .filter(|&n| on_boundary[n] && !fixed[n])
            .map(|n| ((nodes[n] - v).norm(), n))
            .filter(|(d, _)| *d <= snap_radius)
            .min_by(|a, b| a.0.total_cmp(&b.0));
        if let Some((_, n)) = candidate {
            if try_move(&mut nodes, n, *v) {
                fixed[n] = true;
            }
        }
    }
    for n in 0..nodes.len() {
        if !on_boundary[n] || fixed[n] {
            continue;
        }
        let q = polygon.closest_boundary_point(&nodes[n]);
        if (q - nodes[n]).norm() <= snap_radius {
            try_move(&mut nodes, n, q);
        }
    }
    Mesh::from_parts(nodes, elements)
}

fn axis_aligned_rectangle(p: &Polygon) -> Option<(f64, f64, f64, f64)> {
    if p.len() != 4 {
        return None;
    }
    let (lo, hi) = p.bounding_box();
    let corner = |v: &Point| {
        (v.x == lo.x || v.x == hi.x) && (v.y == lo.y || v.y == hi.y)
    };
    if p.vertices().iter().all(corner) {
        Some((lo.x, lo.y, hi.x, hi.y))
    } else {
        None
    }
}
