//! Bundled example patterns. The JSON copies under `fixtures/` are generated
//! from these builders and checked against them in tests.

use crate::catapult::{build_catapult, CatapultError, REFERENCE_OPTIMUM};
use crate::design::{
    Actuation, Axis, CreasePattern, DesignError, DofMask, EdgeKind, KeypointId, FREE,
};
use crate::geometry::{Vec2, Vec3};
use crate::mesh::{detect_panel, MeshError};

/// Names of every bundled fixture, in a fixed order.
pub const NAMES: [&str; 9] = [
    "three_arm",
    "accordion",
    "corrugation",
    "closed_box",
    "closed_prism",
    "gripper",
    "walker",
    "balancer",
    "catapult",
];

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("unknown fixture `{0}`")]
    Unknown(String),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Catapult(#[from] CatapultError),
}

pub fn by_name(name: &str) -> Result<CreasePattern, FixtureError> {
    match name {
        "three_arm" => three_arm(),
        "accordion" => accordion(),
        "corrugation" => corrugation(),
        "closed_box" => closed_loop("closed_box", 4),
        "closed_prism" => closed_loop("closed_prism", 3),
        "gripper" => gripper(),
        "walker" => walker(),
        "balancer" => balancer(),
        "catapult" => Ok(build_catapult(&REFERENCE_OPTIMUM)?.0),
        other => Err(FixtureError::Unknown(other.to_string())),
    }
}

const Z_ACTUATED: Option<Actuation> = Some(Actuation { axis: Axis::Z });
const FLOOR_ONLY: DofMask = [false, false, true];

fn p(x: f64, y: f64) -> Vec3 {
    Vec3::new(x, y, 0.0)
}

fn edges(cp: &mut CreasePattern, list: &[(KeypointId, KeypointId)], kind: EdgeKind) -> Result<(), DesignError> {
    for &(a, b) in list {
        cp.add_edge(a, b, kind)?;
    }
    Ok(())
}

/// Detect and record the panel around the centroid of `ids`.
fn panel(cp: &mut CreasePattern, ids: &[KeypointId]) -> Result<(), FixtureError> {
    let sum: Vec2 = ids
        .iter()
        .map(|&id| cp.keypoint(id).expect("fixture ids exist").planar())
        .sum();
    let found = detect_panel(cp, sum / ids.len() as f64)?;
    cp.push_panel(found);
    Ok(())
}

/// Central triangle with one triangular arm on each side; the arm tips are
/// actuated along z.
pub fn three_arm() -> Result<CreasePattern, FixtureError> {
    let mut cp = CreasePattern::new("three_arm");
    let h = 0.1 * 3f64.sqrt() / 2.0;
    for (x, y) in [(0.0, 0.0), (0.1, 0.0), (0.05, h)] {
        cp.add_keypoint(p(x, y), FREE, None)?;
    }
    let reach = 0.06;
    let tips = [
        (0.05, -reach),
        (0.075 + reach * 0.5 * 3f64.sqrt(), 0.5 * h + 0.5 * reach),
        (0.025 - reach * 0.5 * 3f64.sqrt(), 0.5 * h + 0.5 * reach),
    ];
    for (x, y) in tips {
        cp.add_keypoint(p(x, y), FREE, Z_ACTUATED)?;
    }
    edges(&mut cp, &[(0, 1), (1, 2), (2, 0)], EdgeKind::Crease)?;
    edges(&mut cp, &[(0, 3), (3, 1), (1, 4), (4, 2), (2, 5), (5, 0)], EdgeKind::Boundary)?;
    for ids in [[0, 1, 2], [0, 3, 1], [1, 4, 2], [2, 5, 0]] {
        panel(&mut cp, &ids)?;
    }
    Ok(cp)
}

/// Two rows of keypoints joined into a strip of `columns - 1` rectangles,
/// with creases on the interior verticals. Returns (bottom ids, top ids).
fn strip(
    cp: &mut CreasePattern,
    columns: usize,
    width: f64,
    height: f64,
) -> Result<(Vec<KeypointId>, Vec<KeypointId>), DesignError> {
    let mut bottom = Vec::new();
    let mut top = Vec::new();
    for i in 0..columns {
        bottom.push(cp.add_keypoint(p(i as f64 * width, 0.0), FREE, None)?);
    }
    for i in 0..columns {
        top.push(cp.add_keypoint(p(i as f64 * width, height), FREE, None)?);
    }
    for i in 0..columns - 1 {
        cp.add_edge(bottom[i], bottom[i + 1], EdgeKind::Boundary)?;
        cp.add_edge(top[i], top[i + 1], EdgeKind::Boundary)?;
    }
    for i in 0..columns {
        let kind = if i == 0 || i == columns - 1 { EdgeKind::Boundary } else { EdgeKind::Crease };
        cp.add_edge(bottom[i], top[i], kind)?;
    }
    Ok((bottom, top))
}

/// Four-panel pleated strip; one end is pinned, the other pushed along x.
pub fn accordion() -> Result<CreasePattern, FixtureError> {
    let mut cp = CreasePattern::new("accordion");
    let (bottom, top) = strip(&mut cp, 5, 0.03, 0.1)?;
    for i in 0..4 {
        panel(&mut cp, &[bottom[i], bottom[i + 1], top[i + 1], top[i]])?;
    }
    for id in [bottom[0], top[0]] {
        cp.set_keypoint_properties(id, [false, false, false], None)?;
    }
    for id in [bottom[4], top[4]] {
        cp.set_keypoint_properties(id, FREE, Some(Actuation { axis: Axis::X }))?;
    }
    Ok(cp)
}

/// 2x2 grid of squares, each split by a diagonal crease in alternating
/// directions; eight triangular panels.
pub fn corrugation() -> Result<CreasePattern, FixtureError> {
    let mut cp = CreasePattern::new("corrugation");
    let s = 0.04;
    let mut id = [[0; 3]; 3];
    for (r, row) in id.iter_mut().enumerate() {
        for (c, slot) in row.iter_mut().enumerate() {
            *slot = cp.add_keypoint(p(c as f64 * s, r as f64 * s), FREE, None)?;
        }
    }
    for r in 0..3 {
        for c in 0..2 {
            let kind = if r == 1 { EdgeKind::Crease } else { EdgeKind::Boundary };
            cp.add_edge(id[r][c], id[r][c + 1], kind)?;
        }
    }
    for c in 0..3 {
        for r in 0..2 {
            let kind = if c == 1 { EdgeKind::Crease } else { EdgeKind::Boundary };
            cp.add_edge(id[r][c], id[r + 1][c], kind)?;
        }
    }
    let mut tris = Vec::new();
    for r in 0..2 {
        for c in 0..2 {
            let (a, b, cc, d) = (id[r][c], id[r][c + 1], id[r + 1][c + 1], id[r + 1][c]);
            if (r + c) % 2 == 0 {
                cp.add_edge(a, cc, EdgeKind::Crease)?;
                tris.push([a, b, cc]);
                tris.push([a, cc, d]);
            } else {
                cp.add_edge(b, d, EdgeKind::Crease)?;
                tris.push([a, b, d]);
                tris.push([b, cc, d]);
            }
        }
    }
    for t in tris {
        panel(&mut cp, &t)?;
    }
    cp.set_keypoint_properties(id[2][2], FREE, Z_ACTUATED)?;
    Ok(cp)
}

/// A strip of `sides` panels whose two end columns are merged, closing it
/// into a tube. The first panel sits on the floor.
pub fn closed_loop(name: &str, sides: usize) -> Result<CreasePattern, FixtureError> {
    let mut cp = CreasePattern::new(name);
    let (bottom, top) = strip(&mut cp, sides + 1, 0.04, 0.04)?;
    for i in 0..sides {
        panel(&mut cp, &[bottom[i], bottom[i + 1], top[i + 1], top[i]])?;
    }
    for id in [bottom[0], bottom[1], top[0], top[1]] {
        cp.set_keypoint_properties(id, FLOOR_ONLY, None)?;
    }
    let cp = cp.merge_keypoints(bottom[0], bottom[sides])?;
    let cp = cp.merge_keypoints(top[0], top[sides])?;
    Ok(cp)
}

/// Three-panel strip: the middle panel stays on the floor while the two
/// outer panels are pulled inward to close like fingers.
pub fn gripper() -> Result<CreasePattern, FixtureError> {
    let mut cp = CreasePattern::new("gripper");
    let (bottom, top) = strip(&mut cp, 4, 0.04, 0.06)?;
    for i in 0..3 {
        panel(&mut cp, &[bottom[i], bottom[i + 1], top[i + 1], top[i]])?;
    }
    for id in [bottom[1], bottom[2], top[1], top[2]] {
        cp.set_keypoint_properties(id, FLOOR_ONLY, None)?;
    }
    for id in [bottom[0], top[0], bottom[3], top[3]] {
        cp.set_keypoint_properties(id, FREE, Some(Actuation { axis: Axis::X }))?;
    }
    Ok(cp)
}

/// Square with both diagonals creased; lifting the centre pulls the corners
/// inward, which a periodic command turns into a shuffling gait.
pub fn walker() -> Result<CreasePattern, FixtureError> {
    let mut cp = CreasePattern::new("walker");
    let s = 0.08;
    for (x, y) in [(0.0, 0.0), (s, 0.0), (s, s), (0.0, s)] {
        cp.add_keypoint(p(x, y), FREE, None)?;
    }
    let c = cp.add_keypoint(p(0.5 * s, 0.5 * s), FREE, Z_ACTUATED)?;
    edges(&mut cp, &[(0, 1), (1, 2), (2, 3), (3, 0)], EdgeKind::Boundary)?;
    edges(&mut cp, &[(0, c), (1, c), (2, c), (3, c)], EdgeKind::Crease)?;
    for (a, b) in [(0, 1), (1, 2), (2, 3), (3, 0)] {
        panel(&mut cp, &[a, b, c])?;
    }
    Ok(cp)
}

/// Hexagonal fan of six triangles around a pinned hub; one rim point is
/// driven along z to shift the balance.
pub fn balancer() -> Result<CreasePattern, FixtureError> {
    let mut cp = CreasePattern::new("balancer");
    let hub = cp.add_keypoint(p(0.0, 0.0), [false, false, false], None)?;
    let r = 0.05;
    let rim: Vec<KeypointId> = (0..6)
        .map(|k| {
            let a = k as f64 * std::f64::consts::PI / 3.0;
            cp.add_keypoint(p(r * a.cos(), r * a.sin()), FREE, None)
        })
        .collect::<Result<_, _>>()?;
    for k in 0..6 {
        cp.add_edge(rim[k], rim[(k + 1) % 6], EdgeKind::Boundary)?;
        cp.add_edge(hub, rim[k], EdgeKind::Crease)?;
    }
    for k in 0..6 {
        panel(&mut cp, &[hub, rim[k], rim[(k + 1) % 6]])?;
    }
    cp.set_keypoint_properties(rim[0], FREE, Z_ACTUATED)?;
    Ok(cp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_fixture_builds_and_validates() {
        for name in NAMES {
            let cp = by_name(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(cp.validate(), vec![], "{name}");
        }
    }

    #[test]
    fn three_arm_has_a_central_triangle_and_three_arms() {
        let cp = three_arm().unwrap();
        assert_eq!(cp.panels().len(), 4);
        assert!(cp.panels().iter().all(|p| p.cycle.len() == 3));
        assert_eq!(cp.keypoints().iter().filter(|k| k.actuation.is_some()).count(), 3);
    }

    #[test]
    fn closed_loops_lose_one_column() {
        assert_eq!(closed_loop("box", 4).unwrap().keypoints().len(), 8);
        assert_eq!(closed_loop("prism", 3).unwrap().keypoints().len(), 6);
    }
}
