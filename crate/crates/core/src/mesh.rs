//! Panel detection and meshing.
//!
//! Panels are faces of the planar crease-pattern graph. A click selects the
//! smallest bounded face containing it; the face's keypoints are re-sorted
//! by angle about their centroid, collinear runs are nudged off the line,
//! and the polygon is triangulated with every side kept as a constraint.
//! Triangles always reference the original keypoint ids.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::design::{edge_key, CreasePattern, EdgeKind, KeypointId, Panel, Violation};
use crate::geometry::{
    incircle, is_strictly_simple, locate_point, orient2d, orientation, signed_area,
    vertex_centroid, Containment, Vec2, COLLINEAR_EPS,
};

pub use crate::design::Panel as PanelCycle;

/// Offset applied to collinear keypoints, as a fraction of the pattern's
/// bounding-box diagonal.
pub const PERTURBATION_FRACTION: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("pattern is invalid: {0:?}")]
    InvalidPattern(Vec<Violation>),
    #[error("click lies outside every closed region")]
    NoEnclosingCycle,
    #[error("the enclosing region {cycle:?} has no crease edge")]
    NoCreaseInCycle { cycle: Vec<KeypointId> },
    #[error("click lies on an edge of region {cycle:?}")]
    OnEdgeAmbiguous { cycle: Vec<KeypointId> },
    #[error("panel {cycle:?} is already defined")]
    PanelAlreadyDefined { cycle: Vec<KeypointId> },
    #[error("enclosing region {cycle:?} is not a simple cycle")]
    NonSimpleFace { cycle: Vec<KeypointId> },
    #[error("region {cycle:?} is not star-shaped about its centroid; angle sort scrambles it")]
    NotStarShaped { cycle: Vec<KeypointId> },
    #[error("polygon is degenerate (all points collinear)")]
    DegeneratePolygon,
    #[error("triangulation failed: input polygon is not simple")]
    TriangulationFailed,
    #[error("pattern has no panels")]
    NoPanels,
    #[error("panel {index}: {source}")]
    Panel {
        index: usize,
        #[source]
        source: Box<MeshError>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MeshTriangle {
    pub panel: usize,
    pub ids: [KeypointId; 3],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriMesh {
    pub triangles: Vec<MeshTriangle>,
    /// Every crease and boundary edge, as sorted id pairs.
    pub constrained_edges: BTreeSet<(KeypointId, KeypointId)>,
}

impl TriMesh {
    pub fn panel_triangles(&self, panel: usize) -> impl Iterator<Item = &MeshTriangle> {
        self.triangles.iter().filter(move |t| t.panel == panel)
    }

    pub fn panel_count(&self) -> usize {
        self.triangles.iter().map(|t| t.panel + 1).max().unwrap_or(0)
    }
}

/// A bounded face of the planar graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    /// Counterclockwise boundary walk. May repeat a keypoint when the face
    /// has dangling edges.
    pub walk: Vec<KeypointId>,
    pub area: f64,
}

impl Face {
    pub fn is_simple(&self) -> bool {
        let set: BTreeSet<_> = self.walk.iter().collect();
        set.len() == self.walk.len()
    }
}

/// Enumerate bounded faces by half-edge traversal with neighbors sorted by
/// angle around each keypoint.
pub fn enumerate_faces(pattern: &CreasePattern) -> Vec<Face> {
    let pos: HashMap<KeypointId, Vec2> = pattern
        .keypoints()
        .iter()
        .map(|k| (k.id, k.planar()))
        .collect();
    let mut around: BTreeMap<KeypointId, Vec<KeypointId>> = BTreeMap::new();
    for e in pattern.edges() {
        around.entry(e.a).or_default().push(e.b);
        around.entry(e.b).or_default().push(e.a);
    }
    for (v, nbrs) in around.iter_mut() {
        let o = pos[v];
        nbrs.sort_by(|&p, &q| {
            let ap = (pos[&p] - o).y.atan2((pos[&p] - o).x);
            let aq = (pos[&q] - o).y.atan2((pos[&q] - o).x);
            ap.total_cmp(&aq).then(p.cmp(&q))
        });
    }

    let mut visited: BTreeSet<(KeypointId, KeypointId)> = BTreeSet::new();
    let mut faces = Vec::new();
    let half_edges: Vec<(KeypointId, KeypointId)> = around
        .iter()
        .flat_map(|(&u, nbrs)| nbrs.iter().map(move |&v| (u, v)))
        .collect();
    for start in half_edges {
        if visited.contains(&start) {
            continue;
        }
        let mut walk = Vec::new();
        let (mut u, mut v) = start;
        loop {
            visited.insert((u, v));
            walk.push(u);
            // keep the face on the left: the next edge out of v is the
            // clockwise neighbor of the edge back to u
            let nbrs = &around[&v];
            let back = nbrs.iter().position(|&w| w == u).expect("symmetric adjacency");
            let w = nbrs[(back + nbrs.len() - 1) % nbrs.len()];
            u = v;
            v = w;
            if (u, v) == start {
                break;
            }
        }
        let pts: Vec<Vec2> = walk.iter().map(|id| pos[id]).collect();
        let area = signed_area(&pts);
        if area > 0.0 {
            faces.push(Face { walk, area });
        }
    }
    faces
}

/// Select the panel enclosing `click`.
pub fn detect_panel(pattern: &CreasePattern, click: Vec2) -> Result<Panel, MeshError> {
    let violations = pattern.validate();
    if !violations.is_empty() {
        return Err(MeshError::InvalidPattern(violations));
    }
    let eps = COLLINEAR_EPS.max(1e-12 * pattern.bbox_diagonal());
    let position = |id: KeypointId| pattern.keypoint(id).expect("validated").planar();

    let mut best: Option<(Face, Containment)> = None;
    for face in enumerate_faces(pattern) {
        let pts: Vec<Vec2> = face.walk.iter().map(|&id| position(id)).collect();
        let where_ = locate_point(click, &pts, eps);
        if where_ == Containment::Outside {
            continue;
        }
        if best.as_ref().is_none_or(|(b, _)| face.area < b.area) {
            best = Some((face, where_));
        }
    }
    let (face, where_) = best.ok_or(MeshError::NoEnclosingCycle)?;
    if where_ == Containment::OnBoundary {
        return Err(MeshError::OnEdgeAmbiguous { cycle: face.walk });
    }
    if !face.is_simple() {
        return Err(MeshError::NonSimpleFace { cycle: face.walk });
    }
    let has_crease = (0..face.walk.len()).any(|i| {
        let a = face.walk[i];
        let b = face.walk[(i + 1) % face.walk.len()];
        pattern.edge(a, b).map(|e| e.kind) == Some(EdgeKind::Crease)
    });
    if !has_crease {
        return Err(MeshError::NoCreaseInCycle { cycle: face.walk });
    }

    let sorted = sort_ccw(&face.walk, position)?;
    let n = sorted.len();
    let follows_edges = (0..n).all(|i| pattern.edge(sorted[i], sorted[(i + 1) % n]).is_some());
    let pts: Vec<Vec2> = sorted.iter().map(|&id| position(id)).collect();
    if !follows_edges || signed_area(&pts) <= 0.0 {
        return Err(MeshError::NotStarShaped { cycle: face.walk });
    }
    if pattern.panels().iter().any(|p| p.same_cycle(&sorted)) {
        return Err(MeshError::PanelAlreadyDefined { cycle: sorted });
    }
    Ok(Panel::new(sorted))
}

/// Order the cycle counterclockwise by angle about the vertex centroid,
/// breaking ties by ascending id. The result starts at the smallest id.
pub fn sort_ccw(
    cycle: &[KeypointId],
    position: impl Fn(KeypointId) -> Vec2,
) -> Result<Vec<KeypointId>, MeshError> {
    let pts: Vec<Vec2> = cycle.iter().map(|&id| position(id)).collect();
    if cycle.len() < 3 || is_collinear_set(&pts) {
        return Err(MeshError::DegeneratePolygon);
    }
    let c = vertex_centroid(&pts);
    let mut keyed: Vec<(f64, KeypointId)> = cycle
        .iter()
        .zip(&pts)
        .map(|(&id, p)| ((p.y - c.y).atan2(p.x - c.x), id))
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut out: Vec<KeypointId> = keyed.into_iter().map(|(_, id)| id).collect();
    let start = out
        .iter()
        .enumerate()
        .min_by_key(|(_, id)| **id)
        .map(|(i, _)| i)
        .unwrap_or(0);
    out.rotate_left(start);
    Ok(out)
}

fn is_collinear_set(pts: &[Vec2]) -> bool {
    let scale = pts
        .iter()
        .map(|p| (p - pts[0]).norm())
        .fold(0.0_f64, f64::max);
    if scale == 0.0 {
        return true;
    }
    let far = pts
        .iter()
        .copied()
        .max_by(|p, q| (p - pts[0]).norm().total_cmp(&(q - pts[0]).norm()))
        .expect("non-empty");
    pts.iter()
        .all(|&p| orient2d(pts[0], far, p).abs() <= 1e-12 * scale * scale)
}

/// Move every vertex that sits on a straight run of the polygon boundary
/// inward, perpendicular to the run, so no three consecutive vertices are
/// collinear. A lone collinear vertex moves by exactly `eps`; longer runs
/// follow a shallow parabola peaking slightly above `eps`.
pub fn perturb_collinear(points: &[Vec2], eps: f64) -> Vec<Vec2> {
    let n = points.len();
    let mut out = points.to_vec();
    if n < 4 {
        return out;
    }
    let straight: Vec<bool> = (0..n)
        .map(|i| {
            let prev = points[(i + n - 1) % n];
            let next = points[(i + 1) % n];
            let cur = points[i];
            orientation(prev, cur, next, COLLINEAR_EPS) == 0
                && (cur - prev).dot(&(next - cur)) > 0.0
        })
        .collect();
    if straight.iter().all(|&s| s) {
        return out;
    }
    let inward_sign = if signed_area(points) >= 0.0 { 1.0 } else { -1.0 };
    let anchor = (0..n).find(|&i| !straight[i]).expect("some corner exists");
    let mut i = (anchor + 1) % n;
    let mut prev_corner = anchor;
    let mut run: Vec<usize> = Vec::new();
    for _ in 0..n {
        if straight[i] {
            run.push(i);
        } else {
            if !run.is_empty() {
                let a = points[prev_corner];
                let b = points[i];
                let d = (b - a).normalize();
                let normal = Vec2::new(-d.y, d.x) * inward_sign;
                let k = run.len() as f64;
                for (j, &idx) in run.iter().enumerate() {
                    let j = (j + 1) as f64;
                    out[idx] = points[idx] + normal * (eps * j * (k + 1.0 - j) / k);
                }
                run.clear();
            }
            prev_corner = i;
        }
        i = (i + 1) % n;
    }
    out
}

/// Constrained Delaunay triangulation of a simple polygon whose sides are
/// all constraints. Returns counterclockwise triangles as local indices.
pub fn triangulate_polygon(points: &[Vec2]) -> Result<Vec<[usize; 3]>, MeshError> {
    let n = points.len();
    if n < 3 {
        return Err(MeshError::TriangulationFailed);
    }
    let scale = bbox_extent(points);
    if !is_strictly_simple(points, 1e-15 * scale.max(f64::MIN_POSITIVE)) {
        return Err(MeshError::TriangulationFailed);
    }
    let ccw = signed_area(points) > 0.0;
    let order: Vec<usize> = if ccw {
        (0..n).collect()
    } else {
        (0..n).rev().collect()
    };
    let mut triangles = ear_clip(points, &order)?;
    delaunay_flip(points, &mut triangles);
    Ok(triangles)
}

fn bbox_extent(points: &[Vec2]) -> f64 {
    let mut lo = Vec2::repeat(f64::INFINITY);
    let mut hi = Vec2::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (hi - lo).norm()
}

/// Ear clipping on a counterclockwise index ring.
pub fn ear_clip(points: &[Vec2], ring: &[usize]) -> Result<Vec<[usize; 3]>, MeshError> {
    let mut ring = ring.to_vec();
    let mut out = Vec::with_capacity(ring.len().saturating_sub(2));
    while ring.len() > 3 {
        let m = ring.len();
        let ear = (0..m).find(|&i| {
            let a = ring[(i + m - 1) % m];
            let b = ring[i];
            let c = ring[(i + 1) % m];
            if orient2d(points[a], points[b], points[c]) <= 0.0 {
                return false;
            }
            ring.iter().all(|&p| {
                p == a || p == b || p == c || !in_closed_triangle(points[p], points[a], points[b], points[c])
            })
        });
        let i = ear.ok_or(MeshError::TriangulationFailed)?;
        let m = ring.len();
        out.push([ring[(i + m - 1) % m], ring[i], ring[(i + 1) % m]]);
        ring.remove(i);
    }
    if orient2d(points[ring[0]], points[ring[1]], points[ring[2]]) <= 0.0 {
        return Err(MeshError::TriangulationFailed);
    }
    out.push([ring[0], ring[1], ring[2]]);
    Ok(out)
}

fn in_closed_triangle(p: Vec2, a: Vec2, b: Vec2, c: Vec2) -> bool {
    orient2d(a, b, p) >= 0.0 && orient2d(b, c, p) >= 0.0 && orient2d(c, a, p) >= 0.0
}

fn is_polygon_side(n: usize, a: usize, b: usize) -> bool {
    (a + 1) % n == b || (b + 1) % n == a
}

/// Lawson flips until every unconstrained interior edge is locally Delaunay.
fn delaunay_flip(points: &[Vec2], triangles: &mut [[usize; 3]]) {
    let n = points.len();
    let scale = bbox_extent(points);
    let tol = 1e-10 * scale.powi(4);
    let max_iterations = 10 * n * n + 10;
    for _ in 0..max_iterations {
        let mut flipped = false;
        let mut owner: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                owner.insert((tri[k], tri[(k + 1) % 3]), (t, tri[(k + 2) % 3]));
            }
        }
        'search: for (t1, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b, c) = (tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]);
                if is_polygon_side(n, a, b) {
                    continue;
                }
                let Some(&(t2, d)) = owner.get(&(b, a)) else {
                    continue;
                };
                if incircle(points[a], points[b], points[c], points[d]) <= tol {
                    continue;
                }
                let convex = orient2d(points[c], points[d], points[a])
                    * orient2d(points[c], points[d], points[b])
                    < 0.0;
                if !convex {
                    continue;
                }
                let (new1, new2) = ([a, d, c], [d, b, c]);
                triangles[t1] = new1;
                triangles[t2] = new2;
                flipped = true;
                break 'search;
            }
        }
        if !flipped {
            return;
        }
    }
}

/// Unconstrained interior edges whose opposite vertex falls inside the
/// neighboring circumcircle.
pub fn non_delaunay_edges(points: &[Vec2], triangles: &[[usize; 3]]) -> Vec<(usize, usize)> {
    let n = points.len();
    let tol = 1e-10 * bbox_extent(points).powi(4);
    let mut owner: HashMap<(usize, usize), usize> = HashMap::new();
    for tri in triangles {
        for k in 0..3 {
            owner.insert((tri[k], tri[(k + 1) % 3]), tri[(k + 2) % 3]);
        }
    }
    let mut out = Vec::new();
    for tri in triangles {
        for k in 0..3 {
            let (a, b, c) = (tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]);
            if is_polygon_side(n, a, b) {
                continue;
            }
            if let Some(&d) = owner.get(&(b, a)) {
                if incircle(points[a], points[b], points[c], points[d]) > tol {
                    out.push((a.min(b), a.max(b)));
                }
            }
        }
    }
    out
}

/// Perturb and triangulate one panel. `eps` is the collinear offset.
pub fn triangulate_panel(
    pattern: &CreasePattern,
    panel: &Panel,
    eps: f64,
) -> Result<Vec<[KeypointId; 3]>, MeshError> {
    let pts: Vec<Vec2> = panel
        .cycle
        .iter()
        .map(|&id| {
            pattern
                .layout_position(panel, id)
                .ok_or(MeshError::TriangulationFailed)
        })
        .collect::<Result<_, _>>()?;
    let moved = perturb_collinear(&pts, eps);
    let local = triangulate_polygon(&moved)?;
    Ok(local
        .into_iter()
        .map(|[a, b, c]| [panel.cycle[a], panel.cycle[b], panel.cycle[c]])
        .collect())
}

/// Triangulate every panel of the pattern.
pub fn mesh_pattern(pattern: &CreasePattern) -> Result<TriMesh, MeshError> {
    mesh_pattern_with_offset(pattern, PERTURBATION_FRACTION)
}

/// As [`mesh_pattern`], with the collinear offset given as a fraction of the
/// bounding-box diagonal.
pub fn mesh_pattern_with_offset(
    pattern: &CreasePattern,
    fraction: f64,
) -> Result<TriMesh, MeshError> {
    if pattern.panels().is_empty() {
        return Err(MeshError::NoPanels);
    }
    let eps = fraction * pattern.bbox_diagonal();
    let mut triangles = Vec::new();
    for (index, panel) in pattern.panels().iter().enumerate() {
        let tris = triangulate_panel(pattern, panel, eps).map_err(|e| MeshError::Panel {
            index,
            source: Box::new(e),
        })?;
        triangles.extend(tris.into_iter().map(|ids| MeshTriangle { panel: index, ids }));
    }
    let constrained_edges = pattern.edges().iter().map(|e| edge_key(e.a, e.b)).collect();
    Ok(TriMesh {
        triangles,
        constrained_edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{CreasePattern, EdgeKind, FREE};
    use crate::geometry::Vec3;

    fn v(x: f64, y: f64) -> Vec2 {
        Vec2::new(x, y)
    }

    fn square(diagonal: Option<EdgeKind>, side: EdgeKind) -> CreasePattern {
        let mut cp = CreasePattern::new("square");
        for (x, y) in [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)] {
            cp.add_keypoint(Vec3::new(x, y, 0.0), FREE, None).unwrap();
        }
        for (a, b) in [(0, 1), (1, 2), (2, 3), (3, 0)] {
            cp.add_edge(a, b, side).unwrap();
        }
        if let Some(kind) = diagonal {
            cp.add_edge(0, 2, kind).unwrap();
        }
        cp
    }

    fn area_of(points: &[Vec2], tris: &[[usize; 3]]) -> f64 {
        tris.iter()
            .map(|t| 0.5 * orient2d(points[t[0]], points[t[1]], points[t[2]]))
            .sum()
    }

    #[test]
    fn click_in_lower_triangle() {
        let cp = square(Some(EdgeKind::Crease), EdgeKind::Boundary);
        let panel = detect_panel(&cp, v(0.75, 0.25)).unwrap();
        assert_eq!(panel.cycle, vec![0, 1, 2]);
    }

    #[test]
    fn click_outside_everything() {
        let cp = square(Some(EdgeKind::Crease), EdgeKind::Boundary);
        assert_eq!(
            detect_panel(&cp, v(-1.0, -1.0)),
            Err(MeshError::NoEnclosingCycle)
        );
    }

    #[test]
    fn boundary_only_square_has_no_crease() {
        let cp = square(None, EdgeKind::Boundary);
        assert!(matches!(
            detect_panel(&cp, v(0.5, 0.5)),
            Err(MeshError::NoCreaseInCycle { .. })
        ));
    }

    #[test]
    fn click_on_edge_is_ambiguous() {
        let cp = square(Some(EdgeKind::Crease), EdgeKind::Boundary);
        assert!(matches!(
            detect_panel(&cp, v(0.5, 0.5)),
            Err(MeshError::OnEdgeAmbiguous { .. })
        ));
    }

    #[test]
    fn defining_a_panel_twice() {
        let mut cp = square(Some(EdgeKind::Crease), EdgeKind::Boundary);
        let panel = detect_panel(&cp, v(0.75, 0.25)).unwrap();
        cp.push_panel(panel);
        assert!(matches!(
            detect_panel(&cp, v(0.8, 0.1)),
            Err(MeshError::PanelAlreadyDefined { .. })
        ));
    }

    #[test]
    fn clockwise_triangle_is_flipped() {
        let pts = [v(0.0, 0.0), v(0.0, 1.0), v(1.0, 0.0)];
        let sorted = sort_ccw(&[0, 1, 2], |id| pts[id as usize]).unwrap();
        let ordered: Vec<Vec2> = sorted.iter().map(|&id| pts[id as usize]).collect();
        assert_eq!(signed_area(&ordered), 0.5);
    }

    #[test]
    fn ccw_convex_quad_keeps_its_cyclic_order() {
        let pts = [v(0.0, 0.0), v(2.0, 0.0), v(2.5, 1.0), v(0.0, 1.5)];
        let sorted = sort_ccw(&[0, 1, 2, 3], |id| pts[id as usize]).unwrap();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
        let panel = Panel::new(vec![2, 3, 0, 1]);
        assert!(panel.same_cycle(&sorted));
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let pts = [v(0.0, 0.0), v(1.0, 0.0), v(2.0, 0.0)];
        assert_eq!(
            sort_ccw(&[0, 1, 2], |id| pts[id as usize]),
            Err(MeshError::DegeneratePolygon)
        );
    }

    #[test]
    fn midpoint_moves_inward_by_eps_only() {
        let pts = [v(0.0, 0.0), v(0.5, 0.0), v(1.0, 0.0), v(1.0, 1.0), v(0.0, 1.0)];
        let eps = 1e-9 * 2f64.sqrt();
        let out = perturb_collinear(&pts, eps);
        assert_eq!(out[1], v(0.5, eps));
        for i in [0, 2, 3, 4] {
            assert_eq!(out[i], pts[i]);
        }
    }

    #[test]
    fn no_collinear_triples_is_identity() {
        let pts = [v(0.0, 0.0), v(1.0, 0.0), v(1.0, 1.0), v(0.0, 1.0)];
        assert_eq!(perturb_collinear(&pts, 1e-9), pts.to_vec());
    }

    #[test]
    fn unit_square_two_triangles() {
        let pts = [v(0.0, 0.0), v(1.0, 0.0), v(1.0, 1.0), v(0.0, 1.0)];
        let tris = triangulate_polygon(&pts).unwrap();
        assert_eq!(tris.len(), 2);
        assert!((area_of(&pts, &tris) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn convex_pentagon_three_triangles() {
        let pts: Vec<Vec2> = (0..5)
            .map(|i| {
                let a = i as f64 * std::f64::consts::TAU / 5.0;
                v(a.cos(), a.sin())
            })
            .collect();
        assert_eq!(triangulate_polygon(&pts).unwrap().len(), 3);
    }

    #[test]
    fn non_simple_input_fails() {
        let bowtie = [v(0.0, 0.0), v(1.0, 1.0), v(1.0, 0.0), v(0.0, 1.0)];
        assert_eq!(
            triangulate_polygon(&bowtie),
            Err(MeshError::TriangulationFailed)
        );
    }

    #[test]
    fn empty_pattern_has_no_panels() {
        let cp = square(Some(EdgeKind::Crease), EdgeKind::Boundary);
        assert_eq!(mesh_pattern(&cp), Err(MeshError::NoPanels));
    }

    #[test]
    fn single_square_panel_meshes_to_two_triangles() {
        let mut cp = square(None, EdgeKind::Crease);
        let panel = detect_panel(&cp, v(0.3, 0.6)).unwrap();
        cp.push_panel(panel);
        let mesh = mesh_pattern(&cp).unwrap();
        assert_eq!(mesh.triangles.len(), 2);
        assert_eq!(mesh.constrained_edges.len(), 4);
    }
}
