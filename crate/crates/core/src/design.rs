//! Crease-pattern graph: keypoints, crease/boundary edges and panels, with
//! validation and the versioned JSON design file.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    segments_intersect, segments_overlap_from_shared, signed_area, Vec2, Vec3, COLLINEAR_EPS,
};

pub type KeypointId = u32;

pub const DESIGN_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn unit(self) -> Vec3 {
        let mut u = Vec3::zeros();
        u[self.index()] = 1.0;
        u
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "x" | "X" => Ok(Axis::X),
            "y" | "Y" => Ok(Axis::Y),
            "z" | "Z" => Ok(Axis::Z),
            other => Err(format!("unknown axis `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Actuation {
    pub axis: Axis,
}

/// Translational freedom along the global x, y and z axes.
pub type DofMask = [bool; 3];

pub const FREE: DofMask = [true, true, true];
pub const PINNED: DofMask = [false, false, false];

#[derive(Debug, Clone, PartialEq)]
pub struct KeyPoint {
    pub id: KeypointId,
    pub position: Vec3,
    pub dof: DofMask,
    pub actuation: Option<Actuation>,
}

impl KeyPoint {
    pub fn planar(&self) -> Vec2 {
        Vec2::new(self.position.x, self.position.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Crease,
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub a: KeypointId,
    pub b: KeypointId,
    pub kind: EdgeKind,
}

impl Edge {
    /// Orientation-insensitive key.
    pub fn key(&self) -> (KeypointId, KeypointId) {
        edge_key(self.a, self.b)
    }

    pub fn touches(&self, id: KeypointId) -> bool {
        self.a == id || self.b == id
    }
}

pub fn edge_key(a: KeypointId, b: KeypointId) -> (KeypointId, KeypointId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// A face of the crease-pattern graph, ordered counterclockwise.
///
/// `layout` holds design-plane positions that differ from the keypoint
/// positions. It is only populated by [`CreasePattern::merge_keypoints`],
/// where a merged keypoint keeps the geometry it had in each panel that
/// referenced the victim.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Panel {
    pub cycle: Vec<KeypointId>,
    pub layout: BTreeMap<KeypointId, Vec2>,
}

impl Panel {
    pub fn new(cycle: Vec<KeypointId>) -> Self {
        Panel {
            cycle,
            layout: BTreeMap::new(),
        }
    }

    /// Consecutive id pairs, including the closing pair.
    pub fn sides(&self) -> impl Iterator<Item = (KeypointId, KeypointId)> + '_ {
        let n = self.cycle.len();
        (0..n).map(move |i| (self.cycle[i], self.cycle[(i + 1) % n]))
    }

    /// Same cyclic sequence, ignoring the starting vertex.
    pub fn same_cycle(&self, other: &[KeypointId]) -> bool {
        let n = self.cycle.len();
        if n != other.len() {
            return false;
        }
        (0..n).any(|shift| (0..n).all(|i| self.cycle[(i + shift) % n] == other[i]))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("keypoint {0} does not exist")]
    UnknownKeypoint(KeypointId),
    #[error("keypoint position must lie in the z = 0 design plane (got z = {0})")]
    OffPlane(f64),
    #[error("actuation axis {axis} is locked by the DOF mask of keypoint {keypoint:?}")]
    InconsistentActuation {
        keypoint: Option<KeypointId>,
        axis: Axis,
    },
    #[error("edge {a}-{b} connects a keypoint to itself")]
    SelfEdge { a: KeypointId, b: KeypointId },
    #[error("edge {a}-{b} already exists")]
    DuplicateEdge { a: KeypointId, b: KeypointId },
    #[error("edge {new:?} crosses existing edge {existing:?}")]
    EdgeCrossing {
        new: (KeypointId, KeypointId),
        existing: (KeypointId, KeypointId),
    },
    #[error("merging {victim} into {survivor} would duplicate edge {a}-{b}")]
    MergeCreatesDuplicateEdge {
        survivor: KeypointId,
        victim: KeypointId,
        a: KeypointId,
        b: KeypointId,
    },
    #[error("merging {victim} into {survivor} would collapse the edge between them")]
    MergeCreatesSelfEdge {
        survivor: KeypointId,
        victim: KeypointId,
    },
    #[error("merging {victim} into {survivor} would pinch panel {panel}")]
    MergePinchesPanel {
        survivor: KeypointId,
        victim: KeypointId,
        panel: usize,
    },
    #[error("keypoint {0} is still referenced by an edge or panel")]
    KeypointInUse(KeypointId),
    #[error("panel index {0} out of range")]
    UnknownPanel(usize),
    #[error("no edge between {a} and {b}")]
    UnknownEdge { a: KeypointId, b: KeypointId },
    #[error("unsupported design file version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed design file: {0}")]
    Parse(String),
}

/// One broken invariant, naming the offending entity.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "code")]
pub enum Violation {
    DuplicateKeypointId { id: KeypointId },
    OffPlaneKeypoint { id: KeypointId },
    InconsistentActuation { id: KeypointId, axis: Axis },
    UnknownKeypoint { edge: (KeypointId, KeypointId), id: KeypointId },
    SelfEdge { id: KeypointId },
    DuplicateEdge { edge: (KeypointId, KeypointId) },
    EdgeCrossing {
        first: (KeypointId, KeypointId),
        second: (KeypointId, KeypointId),
    },
    PanelTooShort { panel: usize },
    PanelUnknownKeypoint { panel: usize, id: KeypointId },
    PanelMissingEdge { panel: usize, edge: (KeypointId, KeypointId) },
    PanelWithoutCrease { panel: usize },
    PanelNotCounterclockwise { panel: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "code")]
pub enum Warning {
    IsolatedKeypoint { id: KeypointId },
}

#[derive(Debug, Clone)]
pub struct CreasePattern {
    pub name: String,
    keypoints: Vec<KeyPoint>,
    edges: Vec<Edge>,
    panels: Vec<Panel>,
    next_id: KeypointId,
}

impl PartialEq for CreasePattern {
    // `next_id` is bookkeeping, not structure.
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.keypoints == other.keypoints
            && self.edges == other.edges
            && self.panels == other.panels
    }
}

impl CreasePattern {
    pub fn new(name: impl Into<String>) -> Self {
        CreasePattern {
            name: name.into(),
            keypoints: Vec::new(),
            edges: Vec::new(),
            panels: Vec::new(),
            next_id: 0,
        }
    }

    pub fn keypoints(&self) -> &[KeyPoint] {
        &self.keypoints
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn panels(&self) -> &[Panel] {
        &self.panels
    }

    pub fn keypoint(&self, id: KeypointId) -> Option<&KeyPoint> {
        self.keypoints
            .binary_search_by_key(&id, |k| k.id)
            .ok()
            .map(|i| &self.keypoints[i])
    }

    fn keypoint_mut(&mut self, id: KeypointId) -> Option<&mut KeyPoint> {
        self.keypoints
            .binary_search_by_key(&id, |k| k.id)
            .ok()
            .map(move |i| &mut self.keypoints[i])
    }

    pub fn contains(&self, id: KeypointId) -> bool {
        self.keypoint(id).is_some()
    }

    pub fn edge(&self, a: KeypointId, b: KeypointId) -> Option<&Edge> {
        let key = edge_key(a, b);
        self.edges.iter().find(|e| e.key() == key)
    }

    /// Design-plane position of `id` as seen from `panel`.
    pub fn layout_position(&self, panel: &Panel, id: KeypointId) -> Option<Vec2> {
        panel
            .layout
            .get(&id)
            .copied()
            .or_else(|| self.keypoint(id).map(KeyPoint::planar))
    }

    /// Diagonal of the design-plane bounding box.
    pub fn bbox_diagonal(&self) -> f64 {
        let mut lo = Vec2::repeat(f64::INFINITY);
        let mut hi = Vec2::repeat(f64::NEG_INFINITY);
        for k in &self.keypoints {
            lo = lo.inf(&k.planar());
            hi = hi.sup(&k.planar());
        }
        for p in &self.panels {
            for q in p.layout.values() {
                lo = lo.inf(q);
                hi = hi.sup(q);
            }
        }
        if lo.x > hi.x {
            0.0
        } else {
            (hi - lo).norm()
        }
    }

    pub fn add_keypoint(
        &mut self,
        position: Vec3,
        dof: DofMask,
        actuation: Option<Actuation>,
    ) -> Result<KeypointId, DesignError> {
        if position.z != 0.0 {
            return Err(DesignError::OffPlane(position.z));
        }
        if let Some(act) = actuation {
            if !dof[act.axis.index()] {
                return Err(DesignError::InconsistentActuation {
                    keypoint: None,
                    axis: act.axis,
                });
            }
        }
        let id = self.next_id;
        self.keypoints.push(KeyPoint {
            id,
            position,
            dof,
            actuation,
        });
        self.next_id += 1;
        Ok(id)
    }

    /// Replace the DOF mask and actuation of an existing keypoint.
    pub fn set_keypoint_properties(
        &mut self,
        id: KeypointId,
        dof: DofMask,
        actuation: Option<Actuation>,
    ) -> Result<(), DesignError> {
        if let Some(act) = actuation {
            if !dof[act.axis.index()] {
                return Err(DesignError::InconsistentActuation {
                    keypoint: Some(id),
                    axis: act.axis,
                });
            }
        }
        let kp = self
            .keypoint_mut(id)
            .ok_or(DesignError::UnknownKeypoint(id))?;
        kp.dof = dof;
        kp.actuation = actuation;
        Ok(())
    }

    /// Move a keypoint within the design plane. Fails if an incident edge
    /// would cross another edge at the new position.
    pub fn move_keypoint(&mut self, id: KeypointId, position: Vec3) -> Result<(), DesignError> {
        if position.z != 0.0 {
            return Err(DesignError::OffPlane(position.z));
        }
        let old = self
            .keypoint(id)
            .ok_or(DesignError::UnknownKeypoint(id))?
            .position;
        self.keypoint_mut(id).expect("checked above").position = position;
        let incident: Vec<Edge> = self.edges.iter().filter(|e| e.touches(id)).copied().collect();
        for e in incident {
            if let Some(existing) = self.first_crossing(e.a, e.b, Some(e.key())) {
                self.keypoint_mut(id).expect("checked above").position = old;
                return Err(DesignError::EdgeCrossing {
                    new: (e.a, e.b),
                    existing,
                });
            }
        }
        Ok(())
    }

    /// Shift every keypoint by `offset`, which must lie in the design plane.
    pub fn translate(&mut self, offset: Vec3) -> Result<(), DesignError> {
        if offset.z != 0.0 {
            return Err(DesignError::OffPlane(offset.z));
        }
        for k in &mut self.keypoints {
            k.position += offset;
        }
        Ok(())
    }

    /// Remove a keypoint that no edge or panel references. Its id is retired.
    pub fn remove_keypoint(&mut self, id: KeypointId) -> Result<(), DesignError> {
        if !self.contains(id) {
            return Err(DesignError::UnknownKeypoint(id));
        }
        let referenced = self.edges.iter().any(|e| e.touches(id))
            || self.panels.iter().any(|p| p.cycle.contains(&id));
        if referenced {
            return Err(DesignError::KeypointInUse(id));
        }
        self.keypoints.retain(|k| k.id != id);
        Ok(())
    }

    pub fn add_edge(
        &mut self,
        a: KeypointId,
        b: KeypointId,
        kind: EdgeKind,
    ) -> Result<Edge, DesignError> {
        for id in [a, b] {
            if !self.contains(id) {
                return Err(DesignError::UnknownKeypoint(id));
            }
        }
        if a == b {
            return Err(DesignError::SelfEdge { a, b });
        }
        if self.edge(a, b).is_some() {
            return Err(DesignError::DuplicateEdge { a, b });
        }
        if let Some(existing) = self.first_crossing(a, b, None) {
            return Err(DesignError::EdgeCrossing {
                new: (a, b),
                existing,
            });
        }
        let edge = Edge { a, b, kind };
        self.edges.push(edge);
        Ok(edge)
    }

    pub fn set_edge_kind(
        &mut self,
        a: KeypointId,
        b: KeypointId,
        kind: EdgeKind,
    ) -> Result<(), DesignError> {
        let key = edge_key(a, b);
        let edge = self
            .edges
            .iter_mut()
            .find(|e| e.key() == key)
            .ok_or(DesignError::UnknownEdge { a, b })?;
        edge.kind = kind;
        Ok(())
    }

    /// Record a panel. Callers normally obtain it from
    /// [`crate::mesh::detect_panel`].
    pub fn push_panel(&mut self, panel: Panel) -> usize {
        self.panels.push(panel);
        self.panels.len() - 1
    }

    pub fn remove_panel(&mut self, index: usize) -> Result<Panel, DesignError> {
        if index >= self.panels.len() {
            return Err(DesignError::UnknownPanel(index));
        }
        Ok(self.panels.remove(index))
    }

    /// Fuse `victim` into `survivor` so that every edge and panel reference
    /// to the victim now names the survivor. Used to close loops whose seam
    /// keypoints are drawn apart in the flat layout.
    pub fn merge_keypoints(
        &self,
        survivor: KeypointId,
        victim: KeypointId,
    ) -> Result<CreasePattern, DesignError> {
        for id in [survivor, victim] {
            if !self.contains(id) {
                return Err(DesignError::UnknownKeypoint(id));
            }
        }
        if survivor == victim || self.edge(survivor, victim).is_some() {
            return Err(DesignError::MergeCreatesSelfEdge { survivor, victim });
        }
        let rename = |id: KeypointId| if id == victim { survivor } else { id };

        // Two copies of a seam edge, each bounding one different panel, fuse
        // into a single crease shared by both panels.
        let single_panel = |e: &Edge| {
            let mut owners = self
                .panels
                .iter()
                .enumerate()
                .filter(|(_, p)| p.sides().any(|(u, v)| edge_key(u, v) == e.key()));
            match (owners.next(), owners.next()) {
                (Some((i, _)), None) => Some(i),
                _ => None,
            }
        };
        let mut seen: HashMap<(KeypointId, KeypointId), usize> = HashMap::new();
        let mut edges: Vec<Edge> = Vec::with_capacity(self.edges.len());
        for (index, e) in self.edges.iter().enumerate() {
            let (a, b) = (rename(e.a), rename(e.b));
            if let Some(&slot) = seen.get(&edge_key(a, b)) {
                let first = &self.edges[slot];
                match (single_panel(first), single_panel(e)) {
                    (Some(p), Some(q)) if p != q => {
                        if let Some(kept) = edges.iter_mut().find(|k| k.key() == edge_key(a, b)) {
                            kept.kind = EdgeKind::Crease;
                        }
                        continue;
                    }
                    _ => {
                        return Err(DesignError::MergeCreatesDuplicateEdge {
                            survivor,
                            victim,
                            a,
                            b,
                        })
                    }
                }
            }
            seen.insert(edge_key(a, b), index);
            edges.push(Edge { a, b, kind: e.kind });
        }

        let victim_pos = self.keypoint(victim).expect("checked above").planar();
        let mut panels = Vec::with_capacity(self.panels.len());
        for (index, p) in self.panels.iter().enumerate() {
            if !p.cycle.contains(&victim) {
                panels.push(p.clone());
                continue;
            }
            if p.cycle.contains(&survivor) {
                return Err(DesignError::MergePinchesPanel {
                    survivor,
                    victim,
                    panel: index,
                });
            }
            let mut layout = p.layout.clone();
            let pos = layout.remove(&victim).unwrap_or(victim_pos);
            layout.insert(survivor, pos);
            panels.push(Panel {
                cycle: p.cycle.iter().map(|&id| rename(id)).collect(),
                layout,
            });
        }

        Ok(CreasePattern {
            name: self.name.clone(),
            keypoints: self
                .keypoints
                .iter()
                .filter(|k| k.id != victim)
                .cloned()
                .collect(),
            edges,
            panels,
            next_id: self.next_id,
        })
    }

    /// Design-plane segment for an edge. Edges that belong to a panel with a
    /// layout override use that panel's geometry.
    pub fn edge_segment(&self, a: KeypointId, b: KeypointId) -> Option<(Vec2, Vec2)> {
        let key = edge_key(a, b);
        for p in &self.panels {
            if p.layout.is_empty() {
                continue;
            }
            if p.sides().any(|(u, v)| edge_key(u, v) == key)
                && (p.layout.contains_key(&a) || p.layout.contains_key(&b))
            {
                return Some((self.layout_position(p, a)?, self.layout_position(p, b)?));
            }
        }
        Some((self.keypoint(a)?.planar(), self.keypoint(b)?.planar()))
    }

    fn first_crossing(
        &self,
        a: KeypointId,
        b: KeypointId,
        skip: Option<(KeypointId, KeypointId)>,
    ) -> Option<(KeypointId, KeypointId)> {
        let (p, q) = self.edge_segment(a, b)?;
        self.edges
            .iter()
            .filter(|e| Some(e.key()) != skip)
            .find(|e| match self.edge_segment(e.a, e.b) {
                Some((r, s)) => segments_conflict((a, b), (p, q), (e.a, e.b), (r, s)),
                None => false,
            })
            .map(|e| (e.a, e.b))
    }

    /// All invariant violations. Empty iff the pattern is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();

        let mut ids = BTreeSet::new();
        for k in &self.keypoints {
            if !ids.insert(k.id) {
                out.push(Violation::DuplicateKeypointId { id: k.id });
            }
            if k.position.z != 0.0 {
                out.push(Violation::OffPlaneKeypoint { id: k.id });
            }
            if let Some(act) = k.actuation {
                if !k.dof[act.axis.index()] {
                    out.push(Violation::InconsistentActuation {
                        id: k.id,
                        axis: act.axis,
                    });
                }
            }
        }

        let mut seen = HashSet::new();
        let mut sound = Vec::new();
        for e in &self.edges {
            let mut ok = true;
            for id in [e.a, e.b] {
                if !self.contains(id) {
                    out.push(Violation::UnknownKeypoint {
                        edge: (e.a, e.b),
                        id,
                    });
                    ok = false;
                }
            }
            if e.a == e.b {
                out.push(Violation::SelfEdge { id: e.a });
                ok = false;
            }
            if !seen.insert(e.key()) {
                out.push(Violation::DuplicateEdge { edge: (e.a, e.b) });
                ok = false;
            }
            if ok {
                sound.push(*e);
            }
        }

        let segments: Vec<(Vec2, Vec2)> = sound
            .iter()
            .map(|e| self.edge_segment(e.a, e.b).expect("endpoints exist"))
            .collect();
        for i in 0..sound.len() {
            for j in (i + 1)..sound.len() {
                let (e, f) = (sound[i], sound[j]);
                if segments_conflict((e.a, e.b), segments[i], (f.a, f.b), segments[j]) {
                    out.push(Violation::EdgeCrossing {
                        first: (e.a, e.b),
                        second: (f.a, f.b),
                    });
                }
            }
        }

        for (index, p) in self.panels.iter().enumerate() {
            if p.cycle.len() < 3 {
                out.push(Violation::PanelTooShort { panel: index });
                continue;
            }
            let mut complete = true;
            for &id in &p.cycle {
                if !self.contains(id) {
                    out.push(Violation::PanelUnknownKeypoint { panel: index, id });
                    complete = false;
                }
            }
            if !complete {
                continue;
            }
            let mut has_crease = false;
            for (a, b) in p.sides() {
                match self.edge(a, b) {
                    Some(e) => has_crease |= e.kind == EdgeKind::Crease,
                    None => out.push(Violation::PanelMissingEdge {
                        panel: index,
                        edge: (a, b),
                    }),
                }
            }
            if !has_crease {
                out.push(Violation::PanelWithoutCrease { panel: index });
            }
            let pts: Vec<Vec2> = p
                .cycle
                .iter()
                .map(|&id| self.layout_position(p, id).expect("checked above"))
                .collect();
            if signed_area(&pts) <= 0.0 {
                out.push(Violation::PanelNotCounterclockwise { panel: index });
            }
        }
        out
    }

    /// Non-fatal findings. Keypoints without any incident edge are allowed.
    pub fn warnings(&self) -> Vec<Warning> {
        self.keypoints
            .iter()
            .filter(|k| !self.edges.iter().any(|e| e.touches(k.id)))
            .map(|k| Warning::IsolatedKeypoint { id: k.id })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&DesignFile::from(self)).expect("design file serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, DesignError> {
        let file: DesignFile =
            serde_json::from_str(text).map_err(|e| DesignError::Parse(e.to_string()))?;
        CreasePattern::try_from(file)
    }
}

fn segments_conflict(
    e: (KeypointId, KeypointId),
    (p, q): (Vec2, Vec2),
    f: (KeypointId, KeypointId),
    (r, s): (Vec2, Vec2),
) -> bool {
    let shared: Vec<KeypointId> = [e.0, e.1]
        .into_iter()
        .filter(|id| *id == f.0 || *id == f.1)
        .collect();
    match shared.len() {
        0 => segments_intersect(p, q, r, s, COLLINEAR_EPS),
        1 => {
            let pivot = shared[0];
            let (origin, far_e) = if e.0 == pivot { (p, q) } else { (q, p) };
            let (origin_f, far_f) = if f.0 == pivot { (r, s) } else { (s, r) };
            if (origin - origin_f).norm() > COLLINEAR_EPS {
                // A merged seam keypoint drawn at two layout positions.
                return segments_intersect(p, q, r, s, COLLINEAR_EPS);
            }
            segments_overlap_from_shared(origin, far_e, far_f, COLLINEAR_EPS)
        }
        _ => false,
    }
}

// ---------------------------------------------------------------------------
// Design file schema

#[derive(Debug, Serialize, Deserialize)]
pub struct DesignFile {
    pub version: u32,
    pub name: String,
    pub keypoints: Vec<KeypointRecord>,
    pub edges: Vec<EdgeRecord>,
    pub panels: Vec<PanelRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct KeypointRecord {
    pub id: KeypointId,
    pub pos: [f64; 3],
    pub dof: [bool; 3],
    pub actuation: Option<Actuation>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub a: KeypointId,
    pub b: KeypointId,
    pub kind: EdgeKind,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PanelRecord {
    Cycle(Vec<KeypointId>),
    WithLayout {
        cycle: Vec<KeypointId>,
        layout: Vec<LayoutRecord>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LayoutRecord {
    pub id: KeypointId,
    pub pos: [f64; 2],
}

impl From<&CreasePattern> for DesignFile {
    fn from(p: &CreasePattern) -> Self {
        DesignFile {
            version: DESIGN_FILE_VERSION,
            name: p.name.clone(),
            keypoints: p
                .keypoints
                .iter()
                .map(|k| KeypointRecord {
                    id: k.id,
                    pos: [k.position.x, k.position.y, k.position.z],
                    dof: k.dof,
                    actuation: k.actuation,
                })
                .collect(),
            edges: p
                .edges
                .iter()
                .map(|e| EdgeRecord {
                    a: e.a,
                    b: e.b,
                    kind: e.kind,
                })
                .collect(),
            panels: p
                .panels
                .iter()
                .map(|panel| {
                    if panel.layout.is_empty() {
                        PanelRecord::Cycle(panel.cycle.clone())
                    } else {
                        PanelRecord::WithLayout {
                            cycle: panel.cycle.clone(),
                            layout: panel
                                .layout
                                .iter()
                                .map(|(&id, pos)| LayoutRecord {
                                    id,
                                    pos: [pos.x, pos.y],
                                })
                                .collect(),
                        }
                    }
                })
                .collect(),
        }
    }
}

impl TryFrom<DesignFile> for CreasePattern {
    type Error = DesignError;

    fn try_from(file: DesignFile) -> Result<Self, Self::Error> {
        if file.version != DESIGN_FILE_VERSION {
            return Err(DesignError::UnsupportedVersion(file.version));
        }
        let mut keypoints: Vec<KeyPoint> = file
            .keypoints
            .into_iter()
            .map(|k| KeyPoint {
                id: k.id,
                position: Vec3::new(k.pos[0], k.pos[1], k.pos[2]),
                dof: k.dof,
                actuation: k.actuation,
            })
            .collect();
        if keypoints.windows(2).any(|w| w[0].id >= w[1].id) {
            return Err(DesignError::Parse(
                "keypoints must be listed in strictly increasing id order".into(),
            ));
        }
        keypoints.shrink_to_fit();
        let next_id = keypoints.last().map_or(0, |k| k.id + 1);
        Ok(CreasePattern {
            name: file.name,
            keypoints,
            edges: file
                .edges
                .into_iter()
                .map(|e| Edge {
                    a: e.a,
                    b: e.b,
                    kind: e.kind,
                })
                .collect(),
            panels: file
                .panels
                .into_iter()
                .map(|p| match p {
                    PanelRecord::Cycle(cycle) => Panel::new(cycle),
                    PanelRecord::WithLayout { cycle, layout } => Panel {
                        cycle,
                        layout: layout
                            .into_iter()
                            .map(|l| (l.id, Vec2::new(l.pos[0], l.pos[1])))
                            .collect(),
                    },
                })
                .collect(),
            next_id,
        })
    }
}
