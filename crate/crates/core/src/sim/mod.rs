//! Deformable-body simulation of triangulated crease patterns.
//!
//! Keypoints are point masses. Each mesh triangle is a constant-strain
//! Saint Venant–Kirchhoff membrane; non-crease edges shared by two
//! triangles carry a linear dihedral spring, while crease edges hinge
//! freely. Panels couple only through the keypoints they share. A ground
//! plane and an optional rigid sphere interact with the sheet through
//! penalty contact with Coulomb friction.
//!
//! [`Simulation`] is an immutable blueprint; [`SimState`] values are cheap
//! to create and step, so independent rollouts can run on separate threads.

mod contact;
mod elastic;
mod rollout;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::{Axis, CreasePattern, DofMask, KeypointId};
use crate::geometry::{Vec2, Vec3};
use crate::mesh::TriMesh;

pub use contact::{closest_point_on_triangle, ContactForces};
pub use elastic::{dihedral_angle, dihedral_gradient};
pub use rollout::{run_rollout, throw_distance, Frame, RolloutOptions, Trajectory};

/// Positions beyond this magnitude mean the integration diverged.
pub const BLOWUP_LIMIT: f64 = 1e3;
/// Rest triangles smaller than this are rejected.
pub const MIN_REST_AREA: f64 = 1e-12;
/// Target for `substep * max_frequency`.
const STABILITY_TARGET: f64 = 0.8;
const MAX_SUBSTEPS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("keypoint {0} belongs to no triangle")]
    ZeroMassKeypoint(KeypointId),
    #[error("triangle {ids:?} has rest area {area:e} m^2")]
    DegenerateRestTriangle { ids: [KeypointId; 3], area: f64 },
    #[error("simulation diverged at step {step} (t = {time} s)")]
    NumericalBlowup { step: u64, time: f64 },
    #[error("keypoint {id} is not actuated on axis {axis}")]
    NotActuatedKeypoint { id: KeypointId, axis: Axis },
    #[error("mesh references unknown keypoint {0}")]
    UnknownKeypoint(KeypointId),
    #[error("the sphere never came to rest")]
    SphereNeverAtRest,
    #[error("trajectory has no sphere")]
    NoSphere,
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaterialParams {
    /// Pa.
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    /// m.
    pub thickness: f64,
    /// kg/m^3.
    pub density: f64,
    /// N·m/rad, across non-crease edges shared by two triangles.
    pub panel_bend_stiffness: f64,
    /// Mass-proportional damping, 1/s.
    pub damping: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        MaterialParams {
            youngs_modulus: 1e7,
            poisson_ratio: 0.3,
            thickness: 0.002,
            density: 1270.0,
            panel_bend_stiffness: 0.05,
            damping: 2.0,
        }
    }
}

impl MaterialParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("youngs_modulus", self.youngs_modulus),
            ("thickness", self.thickness),
            ("density", self.density),
            ("damping", self.damping),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(SimError::InvalidMaterial(format!("{name} must be > 0")));
            }
        }
        if !(0.0..=0.49).contains(&self.poisson_ratio) {
            return Err(SimError::InvalidMaterial(
                "poisson_ratio must lie in [0, 0.49]".into(),
            ));
        }
        if !(self.panel_bend_stiffness >= 0.0 && self.panel_bend_stiffness.is_finite()) {
            return Err(SimError::InvalidMaterial(
                "panel_bend_stiffness must be >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Plane-stress Lamé parameters `(lambda, mu)`.
    pub fn lame(&self) -> (f64, f64) {
        let e = self.youngs_modulus;
        let nu = self.poisson_ratio;
        (e * nu / (1.0 - nu * nu), e / (2.0 * (1.0 + nu)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroundConfig {
    pub enabled: bool,
    /// Plane height, m.
    pub height: f64,
    /// N/m.
    pub contact_stiffness: f64,
    /// N·s/m.
    pub contact_damping: f64,
    pub friction_coeff: f64,
}

impl Default for GroundConfig {
    fn default() -> Self {
        GroundConfig {
            enabled: true,
            height: 0.0,
            contact_stiffness: 1e4,
            contact_damping: 10.0,
            friction_coeff: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidSphere {
    /// kg.
    pub mass: f64,
    /// m.
    pub radius: f64,
    pub initial_position: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub gravity: Vec3,
    pub ground: GroundConfig,
    pub payload: Option<RigidSphere>,
    /// s.
    pub dt: f64,
    /// s.
    pub max_time: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            gravity: Vec3::new(0.0, 0.0, -9.81),
            ground: GroundConfig::default(),
            payload: None,
            dt: 5e-4,
            max_time: 5.0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::InvalidScene("dt must be > 0".into()));
        }
        if !(self.max_time >= 0.0) {
            return Err(SimError::InvalidScene("max_time must be >= 0".into()));
        }
        let g = &self.ground;
        if g.contact_stiffness < 0.0 || g.contact_damping < 0.0 || g.friction_coeff < 0.0 {
            return Err(SimError::InvalidScene(
                "contact parameters must be >= 0".into(),
            ));
        }
        if let Some(s) = &self.payload {
            if !(s.mass > 0.0 && s.radius > 0.0) {
                return Err(SimError::InvalidScene(
                    "sphere mass and radius must be > 0".into(),
                ));
            }
        }
        Ok(())
    }
}

/// When an actuation event fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Trigger {
    /// At a fixed step index.
    AtStep { step: u64 },
    /// Once the sphere has touched the sheet for this many consecutive steps.
    AfterSphereContact { steps: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActuationEvent {
    pub trigger: Trigger,
    pub keypoints: Vec<KeypointId>,
    pub axis: Axis,
    /// m, signed along `axis`.
    pub target_displacement: f64,
    /// m/s.
    pub max_speed: f64,
    /// Servo natural frequency, 1/s.
    pub gain: f64,
    /// Cap on the servo force magnitude, N.
    #[serde(default)]
    pub force_limit: Option<f64>,
    /// Hold the reference position before the trigger fires.
    #[serde(default)]
    pub hold_before_trigger: bool,
}

impl ActuationEvent {
    pub const DEFAULT_MAX_SPEED: f64 = 0.21;
    pub const DEFAULT_GAIN: f64 = 200.0;

    pub fn new(trigger: Trigger, keypoints: Vec<KeypointId>, axis: Axis, displacement: f64) -> Self {
        ActuationEvent {
            trigger,
            keypoints,
            axis,
            target_displacement: displacement,
            max_speed: Self::DEFAULT_MAX_SPEED,
            gain: Self::DEFAULT_GAIN,
            force_limit: None,
            hold_before_trigger: false,
        }
    }

    /// Servo setpoint offset and its rate, `time_since` seconds after firing.
    pub fn setpoint(&self, time_since: f64) -> (f64, f64) {
        let d = self.target_displacement;
        let travel = self.max_speed * time_since.max(0.0);
        if travel >= d.abs() {
            (d, 0.0)
        } else {
            (travel * d.signum(), self.max_speed * d.signum())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereState {
    pub position: Vec3,
    pub velocity: Vec3,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContactFlags {
    /// Per keypoint, touching the ground after the last step.
    pub keypoints: Vec<bool>,
    pub sphere_ground: bool,
    pub sphere_mesh: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub time: f64,
    pub step: u64,
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub sphere: Option<SphereState>,
    pub contacts: ContactFlags,
    /// Step index at which each event fired.
    pub fired_at: Vec<Option<u64>>,
    /// Consecutive steps with sphere-sheet contact.
    pub contact_streak: u32,
}

#[derive(Debug, Clone)]
pub(crate) struct Membrane {
    pub nodes: [usize; 3],
    pub dm_inv: nalgebra::Matrix2<f64>,
    pub rest_area: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Hinge {
    /// Shared edge endpoints, then the apex of each wing.
    pub nodes: [usize; 4],
    pub rest_angle: f64,
    pub stiffness: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Servo {
    pub event: usize,
    pub node: usize,
    pub axis: usize,
}

/// Immutable simulation blueprint.
#[derive(Debug, Clone)]
pub struct Simulation {
    ids: Vec<KeypointId>,
    index: HashMap<KeypointId, usize>,
    rest: Vec<Vec3>,
    mass: Vec<f64>,
    dof: Vec<DofMask>,
    pub(crate) membranes: Vec<Membrane>,
    pub(crate) hinges: Vec<Hinge>,
    pub(crate) surface: Vec<[usize; 3]>,
    servos: Vec<Servo>,
    material: MaterialParams,
    scene: SceneConfig,
    events: Vec<ActuationEvent>,
    lambda: f64,
    mu: f64,
    substeps: usize,
    initial: Option<Vec<Vec3>>,
}

/// Build a simulation from a meshed pattern.
pub fn assemble(
    pattern: &CreasePattern,
    mesh: &TriMesh,
    material: &MaterialParams,
    scene: &SceneConfig,
) -> Result<Simulation, SimError> {
    material.validate()?;
    scene.validate()?;
    let ids: Vec<KeypointId> = pattern.keypoints().iter().map(|k| k.id).collect();
    let index: HashMap<KeypointId, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let rest: Vec<Vec3> = pattern.keypoints().iter().map(|k| k.position).collect();
    let dof: Vec<DofMask> = pattern.keypoints().iter().map(|k| k.dof).collect();
    let mut mass = vec![0.0; ids.len()];
    let mut membranes = Vec::with_capacity(mesh.triangles.len());

    let lookup = |id: KeypointId| index.get(&id).copied().ok_or(SimError::UnknownKeypoint(id));
    for tri in &mesh.triangles {
        let panel = pattern
            .panels()
            .get(tri.panel)
            .ok_or(SimError::UnknownKeypoint(tri.ids[0]))?;
        let nodes = [lookup(tri.ids[0])?, lookup(tri.ids[1])?, lookup(tri.ids[2])?];
        let p: Vec<Vec2> = tri
            .ids
            .iter()
            .map(|&id| pattern.layout_position(panel, id).ok_or(SimError::UnknownKeypoint(id)))
            .collect::<Result<_, _>>()?;
        let dm = nalgebra::Matrix2::from_columns(&[p[1] - p[0], p[2] - p[0]]);
        let area = 0.5 * dm.determinant();
        if area.abs() < MIN_REST_AREA {
            return Err(SimError::DegenerateRestTriangle { ids: tri.ids, area });
        }
        let dm_inv = dm.try_inverse().ok_or(SimError::DegenerateRestTriangle {
            ids: tri.ids,
            area,
        })?;
        let m = material.density * material.thickness * area.abs() / 3.0;
        for &n in &nodes {
            mass[n] += m;
        }
        membranes.push(Membrane {
            nodes,
            dm_inv,
            rest_area: area.abs(),
        });
    }
    if let Some(i) = mass.iter().position(|&m| m <= 0.0) {
        return Err(SimError::ZeroMassKeypoint(ids[i]));
    }

    let hinges = build_hinges(pattern, mesh, &index, material.panel_bend_stiffness);
    let surface = membranes.iter().map(|m| m.nodes).collect();
    let (lambda, mu) = material.lame();
    let mut sim = Simulation {
        ids,
        index,
        rest,
        mass,
        dof,
        membranes,
        hinges,
        surface,
        servos: Vec::new(),
        material: *material,
        scene: scene.clone(),
        events: Vec::new(),
        lambda,
        mu,
        substeps: 1,
        initial: None,
    };
    sim.substeps = sim.stable_substeps();
    Ok(sim)
}

fn build_hinges(
    pattern: &CreasePattern,
    mesh: &TriMesh,
    index: &HashMap<KeypointId, usize>,
    stiffness: f64,
) -> Vec<Hinge> {
    // directed edge -> apex of the triangle that owns it
    let mut owner: BTreeMap<(KeypointId, KeypointId), KeypointId> = BTreeMap::new();
    for tri in &mesh.triangles {
        for k in 0..3 {
            owner.insert((tri.ids[k], tri.ids[(k + 1) % 3]), tri.ids[(k + 2) % 3]);
        }
    }
    let mut hinges = Vec::new();
    for (&(a, b), &apex_a) in &owner {
        if a > b {
            continue;
        }
        let Some(&apex_b) = owner.get(&(b, a)) else {
            continue;
        };
        let is_crease = pattern
            .edge(a, b)
            .is_some_and(|e| e.kind == crate::design::EdgeKind::Crease);
        if is_crease || stiffness == 0.0 {
            continue;
        }
        hinges.push(Hinge {
            nodes: [index[&a], index[&b], index[&apex_a], index[&apex_b]],
            rest_angle: 0.0,
            stiffness,
        });
    }
    hinges
}

impl Simulation {
    pub fn ids(&self) -> &[KeypointId] {
        &self.ids
    }

    pub fn node(&self, id: KeypointId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn rest_positions(&self) -> &[Vec3] {
        &self.rest
    }

    pub fn dof(&self) -> &[DofMask] {
        &self.dof
    }

    pub fn material(&self) -> &MaterialParams {
        &self.material
    }

    pub fn scene(&self) -> &SceneConfig {
        &self.scene
    }

    pub fn events(&self) -> &[ActuationEvent] {
        &self.events
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn hinge_count(&self) -> usize {
        self.hinges.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Attach an actuation schedule.
    pub fn with_events(mut self, events: Vec<ActuationEvent>) -> Result<Self, SimError> {
        let mut servos = Vec::new();
        for (e, event) in events.iter().enumerate() {
            for &id in &event.keypoints {
                let node = self.node(id).ok_or(SimError::UnknownKeypoint(id))?;
                let axis = event.axis.index();
                if !self.dof[node][axis] {
                    return Err(SimError::NotActuatedKeypoint { id, axis: event.axis });
                }
                servos.push(Servo { event: e, node, axis });
            }
        }
        self.events = events;
        self.servos = servos;
        self.substeps = self.stable_substeps();
        Ok(self)
    }

    /// Like [`Simulation::with_events`], but every targeted keypoint must
    /// also carry a matching actuation annotation in the pattern.
    pub fn with_checked_events(
        self,
        pattern: &CreasePattern,
        events: Vec<ActuationEvent>,
    ) -> Result<Self, SimError> {
        for event in &events {
            for &id in &event.keypoints {
                let annotated = pattern
                    .keypoint(id)
                    .and_then(|k| k.actuation)
                    .is_some_and(|a| a.axis == event.axis);
                if !annotated {
                    return Err(SimError::NotActuatedKeypoint { id, axis: event.axis });
                }
            }
        }
        self.with_events(events)
    }

    /// Start rollouts from these positions instead of the rest shape.
    /// Locked components are taken from the rest shape.
    pub fn with_initial_positions(mut self, positions: Vec<Vec3>) -> Self {
        let fixed = positions
            .into_iter()
            .enumerate()
            .map(|(i, mut p)| {
                for k in 0..3 {
                    if !self.dof[i][k] {
                        p[k] = self.rest[i][k];
                    }
                }
                p
            })
            .collect();
        self.initial = Some(fixed);
        self
    }

    /// Start from a folded pose that is also the stress-free shape of the
    /// panel hinges, as for a sheet manufactured in that pose.
    pub fn with_initial_pose(self, positions: Vec<Vec3>) -> Self {
        let mut sim = self.with_initial_positions(positions);
        let x = sim.initial.clone().expect("initial positions were just set");
        for h in &mut sim.hinges {
            let [a, b, c, d] = h.nodes;
            h.rest_angle = dihedral_angle(x[a], x[b], x[c], x[d]);
        }
        sim
    }

    /// Override the integration substep count.
    pub fn with_substeps(mut self, substeps: usize) -> Self {
        self.substeps = substeps.max(1);
        self
    }

    /// Highest natural frequency estimate, rad/s.
    fn max_frequency(&self) -> f64 {
        let n = self.ids.len();
        let mut k_node = vec![0.0; n];
        let modulus = self.lambda + 2.0 * self.mu;
        for m in &self.membranes {
            // shape-function gradients of the three nodes
            let g1 = m.dm_inv.row(0).transpose();
            let g2 = m.dm_inv.row(1).transpose();
            let g0 = -(g1 + g2);
            let norms = [g0.norm(), g1.norm(), g2.norm()];
            let sum: f64 = norms.iter().sum();
            for (j, &node) in m.nodes.iter().enumerate() {
                k_node[node] += modulus * self.material.thickness * m.rest_area * norms[j] * sum;
            }
        }
        for h in &self.hinges {
            let p: Vec<Vec3> = h.nodes.iter().map(|&i| self.rest[i]).collect();
            let e = (p[1] - p[0]).norm();
            let ha = 2.0 * 0.5 * (p[1] - p[0]).cross(&(p[2] - p[0])).norm() / e;
            let hb = 2.0 * 0.5 * (p[1] - p[0]).cross(&(p[3] - p[0])).norm() / e;
            let scale = h.stiffness * 4.0 / ha.min(hb).powi(2);
            for &i in &h.nodes {
                k_node[i] += scale;
            }
        }
        let ground = &self.scene.ground;
        let mut w2: f64 = 0.0;
        for i in 0..n {
            let mut k = k_node[i];
            if ground.enabled {
                k += ground.contact_stiffness;
            }
            w2 = w2.max(k / self.mass[i]);
        }
        if let Some(s) = &self.scene.payload {
            let min_mass = self.mass.iter().copied().fold(f64::INFINITY, f64::min);
            let inv = 1.0 / s.mass + 1.0 / min_mass;
            w2 = w2.max(ground.contact_stiffness * inv);
        }
        let mut w = w2.sqrt();
        for servo in &self.servos {
            w = w.max(2.0 * self.events[servo.event].gain);
        }
        w
    }

    fn stable_substeps(&self) -> usize {
        let w = self.max_frequency();
        let n = (self.scene.dt * w / STABILITY_TARGET).ceil() as usize;
        n.clamp(1, MAX_SUBSTEPS)
    }

    /// State at time zero.
    pub fn initial_state(&self) -> SimState {
        let positions = self.initial.clone().unwrap_or_else(|| self.rest.clone());
        let sphere = self.scene.payload.map(|s| SphereState {
            position: s.initial_position,
            velocity: Vec3::zeros(),
        });
        SimState {
            time: 0.0,
            step: 0,
            velocities: vec![Vec3::zeros(); positions.len()],
            contacts: ContactFlags {
                keypoints: vec![false; positions.len()],
                ..Default::default()
            },
            positions,
            sphere,
            fired_at: vec![None; self.events.len()],
            contact_streak: 0,
        }
    }

    /// Reference position of a node for servo purposes.
    fn reference(&self, node: usize) -> Vec3 {
        match &self.initial {
            Some(p) => p[node],
            None => self.rest[node],
        }
    }

    pub fn membrane_forces(&self, state: &SimState) -> Vec<Vec3> {
        let mut f = vec![Vec3::zeros(); self.ids.len()];
        elastic::add_membrane_forces(self, &state.positions, &mut f);
        f
    }

    pub fn hinge_forces(&self, state: &SimState) -> Vec<Vec3> {
        let mut f = vec![Vec3::zeros(); self.ids.len()];
        elastic::add_hinge_forces(self, &state.positions, &mut f);
        f
    }

    pub fn contact_forces(&self, state: &SimState) -> ContactForces {
        contact::penalty_forces(self, state)
    }

    /// Membrane strain energy, J.
    pub fn membrane_energy(&self, positions: &[Vec3]) -> f64 {
        elastic::membrane_energy(self, positions)
    }

    /// Dihedral spring energy, J.
    pub fn hinge_energy(&self, positions: &[Vec3]) -> f64 {
        elastic::hinge_energy(self, positions)
    }

    /// Servo forces at the given state, N per keypoint.
    pub fn apply_actuation(&self, state: &SimState) -> Vec<Vec3> {
        let mut f = vec![Vec3::zeros(); self.ids.len()];
        self.add_servo_forces(state, &mut f);
        f
    }

    fn add_servo_forces(&self, state: &SimState, f: &mut [Vec3]) {
        for servo in &self.servos {
            let event = &self.events[servo.event];
            let (offset, rate) = match state.fired_at[servo.event] {
                Some(step) => {
                    let since = state.time - step as f64 * self.scene.dt;
                    event.setpoint(since)
                }
                None if event.hold_before_trigger => (0.0, 0.0),
                None => continue,
            };
            let i = servo.node;
            let k = servo.axis;
            let target = self.reference(i)[k] + offset;
            let g = event.gain;
            let m = self.mass[i];
            let mut force =
                m * (g * g * (target - state.positions[i][k]) + 2.0 * g * (rate - state.velocities[i][k]));
            if let Some(limit) = event.force_limit {
                force = force.clamp(-limit, limit);
            }
            f[i][k] += force;
        }
    }

    /// Total mechanical energy: kinetic, gravitational, elastic and
    /// contact penalty energy.
    pub fn energy(&self, state: &SimState) -> f64 {
        let g = self.scene.gravity;
        let mut e = 0.0;
        for i in 0..self.ids.len() {
            e += 0.5 * self.mass[i] * state.velocities[i].norm_squared();
            e -= self.mass[i] * g.dot(&state.positions[i]);
        }
        if let (Some(s), Some(p)) = (&state.sphere, &self.scene.payload) {
            e += 0.5 * p.mass * s.velocity.norm_squared();
            e -= p.mass * g.dot(&s.position);
        }
        e + self.membrane_energy(&state.positions)
            + self.hinge_energy(&state.positions)
            + contact::penalty_energy(self, state)
    }

    /// Advance one outer step of length `scene.dt`.
    pub fn step(&self, state: &SimState) -> Result<SimState, SimError> {
        let mut next = state.clone();
        self.step_in_place(&mut next)?;
        Ok(next)
    }

    pub fn step_in_place(&self, state: &mut SimState) -> Result<(), SimError> {
        self.update_triggers(state);
        let h = self.scene.dt / self.substeps as f64;
        let n = self.ids.len();
        let mut forces = vec![Vec3::zeros(); n];
        let mut touching_mesh = false;
        let mut touching_ground = false;
        let mut ground_flags = vec![false; n];
        for _ in 0..self.substeps {
            forces.iter_mut().for_each(|f| *f = Vec3::zeros());
            elastic::add_membrane_forces(self, &state.positions, &mut forces);
            elastic::add_hinge_forces(self, &state.positions, &mut forces);
            self.add_servo_forces(state, &mut forces);
            let c = self.material.damping;
            for i in 0..n {
                let a = forces[i] / self.mass[i] + self.scene.gravity;
                let v = (state.velocities[i] + a * h) / (1.0 + h * c);
                state.velocities[i] = v;
            }
            if let Some(s) = state.sphere.as_mut() {
                s.velocity += self.scene.gravity * h;
            }
            let flags = contact::resolve(self, state, h);
            touching_mesh |= flags.sphere_mesh;
            touching_ground |= flags.sphere_ground;
            for (g, t) in ground_flags.iter_mut().zip(&flags.keypoints) {
                *g |= *t;
            }
            for i in 0..n {
                for k in 0..3 {
                    if self.dof[i][k] {
                        state.positions[i][k] += h * state.velocities[i][k];
                    } else {
                        state.velocities[i][k] = 0.0;
                    }
                }
            }
            if let Some(s) = state.sphere.as_mut() {
                s.position += h * s.velocity;
            }
            state.time += h;
        }
        state.step += 1;
        state.time = state.step as f64 * self.scene.dt;
        state.contacts = ContactFlags {
            keypoints: ground_flags,
            sphere_ground: touching_ground,
            sphere_mesh: touching_mesh,
        };
        state.contact_streak = if touching_mesh { state.contact_streak + 1 } else { 0 };

        let diverged = state
            .positions
            .iter()
            .chain(state.sphere.iter().map(|s| &s.position))
            .any(|p| !(p.amax() <= BLOWUP_LIMIT));
        if diverged {
            return Err(SimError::NumericalBlowup {
                step: state.step,
                time: state.time,
            });
        }
        Ok(())
    }

    fn update_triggers(&self, state: &mut SimState) {
        for (e, event) in self.events.iter().enumerate() {
            if state.fired_at[e].is_some() {
                continue;
            }
            let fire = match event.trigger {
                Trigger::AtStep { step } => state.step >= step,
                Trigger::AfterSphereContact { steps } => state.contact_streak >= steps,
            };
            if fire {
                state.fired_at[e] = Some(state.step);
            }
        }
    }

    /// All events have fired (or there are none).
    pub fn actuation_complete(&self, state: &SimState) -> bool {
        state.fired_at.iter().all(Option::is_some)
    }
}
