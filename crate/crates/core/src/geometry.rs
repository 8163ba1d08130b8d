//! Planar predicates shared by the design graph and the mesher.
//!
//! Orientation tests use a relative tolerance scaled by the squared length of
//! the segments involved, so hand-placed points that are collinear up to
//! round-off are treated as collinear.

use nalgebra::{Vector2, Vector3};

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;

/// Collinearity tolerance, in meters, for edge-crossing checks.
pub const COLLINEAR_EPS: f64 = 1e-12;

/// Twice the signed area of the triangle `abc` (positive when counterclockwise).
#[inline]
pub fn orient2d(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Sign of `orient2d` with values whose distance from the line `ab` is below
/// `eps` meters mapped to zero.
pub fn orientation(a: Vec2, b: Vec2, c: Vec2, eps: f64) -> i8 {
    let o = orient2d(a, b, c);
    let len = (b - a).norm().max((c - a).norm()).max(f64::MIN_POSITIVE);
    if o.abs() <= eps * len {
        0
    } else if o > 0.0 {
        1
    } else {
        -1
    }
}

fn on_segment(p: Vec2, a: Vec2, b: Vec2) -> bool {
    let lo = a.inf(&b);
    let hi = a.sup(&b);
    p.x >= lo.x - COLLINEAR_EPS
        && p.x <= hi.x + COLLINEAR_EPS
        && p.y >= lo.y - COLLINEAR_EPS
        && p.y <= hi.y + COLLINEAR_EPS
}

/// True when the closed segments `ab` and `cd` share at least one point.
pub fn segments_intersect(a: Vec2, b: Vec2, c: Vec2, d: Vec2, eps: f64) -> bool {
    let o1 = orientation(a, b, c, eps);
    let o2 = orientation(a, b, d, eps);
    let o3 = orientation(c, d, a, eps);
    let o4 = orientation(c, d, b, eps);
    if o1 * o2 < 0 && o3 * o4 < 0 {
        return true;
    }
    (o1 == 0 && on_segment(c, a, b))
        || (o2 == 0 && on_segment(d, a, b))
        || (o3 == 0 && on_segment(a, c, d))
        || (o4 == 0 && on_segment(b, c, d))
}

/// Segments that share exactly the endpoint `a == c` conflict only when they
/// overlap along a common ray.
pub fn segments_overlap_from_shared(shared: Vec2, p: Vec2, q: Vec2, eps: f64) -> bool {
    orientation(shared, p, q, eps) == 0 && (p - shared).dot(&(q - shared)) > 0.0
}

/// Shoelace signed area.
pub fn signed_area(points: &[Vec2]) -> f64 {
    let n = points.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let p = points[i];
        let q = points[(i + 1) % n];
        acc += p.x * q.y - q.x * p.y;
    }
    0.5 * acc
}

/// Vertex centroid (mean of the points).
pub fn vertex_centroid(points: &[Vec2]) -> Vec2 {
    let sum = points.iter().fold(Vec2::zeros(), |acc, p| acc + p);
    sum / points.len().max(1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Containment {
    Inside,
    Outside,
    OnBoundary,
}

/// Point-in-polygon by crossing number, with an explicit boundary band of
/// width `eps`.
pub fn locate_point(p: Vec2, poly: &[Vec2], eps: f64) -> Containment {
    let n = poly.len();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        if point_segment_distance(p, a, b) <= eps {
            return Containment::OnBoundary;
        }
    }
    let mut inside = false;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    if inside {
        Containment::Inside
    } else {
        Containment::Outside
    }
}

pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// A polygon is strictly simple when no two non-adjacent edges meet,
/// adjacent edges meet only at their shared vertex, and no three consecutive
/// vertices are collinear.
pub fn is_strictly_simple(points: &[Vec2], eps: f64) -> bool {
    let n = points.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let prev = points[(i + n - 1) % n];
        let cur = points[i];
        let next = points[(i + 1) % n];
        if orientation(prev, cur, next, eps) == 0 {
            return false;
        }
    }
    for i in 0..n {
        let a = points[i];
        let b = points[(i + 1) % n];
        for j in (i + 1)..n {
            let c = points[j];
            let d = points[(j + 1) % n];
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            if segments_intersect(a, b, c, d, eps) {
                return false;
            }
        }
    }
    true
}

/// Angle at vertex `b` of the triangle `abc`, in radians.
pub fn corner_angle(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    let u = a - b;
    let v = c - b;
    let cross = u.x * v.y - u.y * v.x;
    cross.abs().atan2(u.dot(&v))
}

/// Smallest interior angle of the triangle.
pub fn min_angle(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    corner_angle(c, a, b)
        .min(corner_angle(a, b, c))
        .min(corner_angle(b, c, a))
}

/// In-circle predicate: positive when `d` lies strictly inside the
/// circumcircle of the counterclockwise triangle `abc`.
pub fn incircle(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> f64 {
    let ad = a - d;
    let bd = b - d;
    let cd = c - d;
    let ad2 = ad.norm_squared();
    let bd2 = bd.norm_squared();
    let cd2 = cd.norm_squared();
    ad.x * (bd.y * cd2 - bd2 * cd.y) - ad.y * (bd.x * cd2 - bd2 * cd.x)
        + ad2 * (bd.x * cd.y - bd.y * cd.x)
}
