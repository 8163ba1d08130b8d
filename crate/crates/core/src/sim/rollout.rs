//! Rollouts, trajectory frames and the throw-distance measure.

use std::io::Write;

use serde::Serialize;

use super::{SimError, SimState, Simulation, SphereState};
use crate::design::{Axis, KeypointId};
use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutOptions {
    /// Record every n-th step (the first and last frames are always kept).
    pub frame_stride: usize,
    /// Stop once the sphere rests on a surface after all events fired.
    pub early_stop: bool,
    /// m/s.
    pub rest_speed: f64,
    /// s.
    pub rest_duration: f64,
}

impl Default for RolloutOptions {
    fn default() -> Self {
        RolloutOptions {
            frame_stride: 20,
            early_stop: true,
            rest_speed: 1e-3,
            rest_duration: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Frame {
    pub t: f64,
    pub positions: Vec<Vec3>,
    pub sphere: Option<SphereState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub ids: Vec<KeypointId>,
    pub frames: Vec<Frame>,
    pub sphere_initial: Option<Vec3>,
    pub sphere_final: Option<Vec3>,
    /// The early-stop rule fired.
    pub at_rest: bool,
    pub steps: u64,
    pub fired_at: Vec<Option<u64>>,
}

#[derive(Serialize)]
struct FrameLine {
    t: f64,
    kp: Vec<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sphere: Option<SphereLine>,
}

#[derive(Serialize)]
struct SphereLine {
    pos: [f64; 3],
    vel: [f64; 3],
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

impl Frame {
    /// One JSON object on a single line.
    pub fn to_json_line(&self) -> String {
        let line = FrameLine {
            t: self.t,
            kp: self.positions.iter().map(arr).collect(),
            sphere: self.sphere.as_ref().map(|s| SphereLine {
                pos: arr(&s.position),
                vel: arr(&s.velocity),
            }),
        };
        serde_json::to_string(&line).expect("frames serialize")
    }
}

impl Trajectory {
    /// Frames as newline-delimited JSON.
    pub fn write_frames<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for f in &self.frames {
            writeln!(out, "{}", f.to_json_line())?;
        }
        Ok(())
    }

    pub fn frames_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_frames(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("json is utf-8")
    }

    /// Largest displacement of any keypoint from its first-frame position.
    pub fn max_keypoint_displacement(&self) -> f64 {
        let Some(first) = self.frames.first() else {
            return 0.0;
        };
        self.frames
            .iter()
            .flat_map(|f| f.positions.iter().zip(&first.positions).map(|(p, q)| (p - q).norm()))
            .fold(0.0, f64::max)
    }
}

/// Horizontal travel of the sphere between its initial and resting
/// positions, along `axis`.
pub fn throw_distance(trajectory: &Trajectory, axis: Axis) -> Result<f64, SimError> {
    let (Some(start), Some(end)) = (trajectory.sphere_initial, trajectory.sphere_final) else {
        return Err(SimError::NoSphere);
    };
    if !trajectory.at_rest {
        return Err(SimError::SphereNeverAtRest);
    }
    let k = axis.index();
    Ok((end[k] - start[k]).abs())
}

impl Simulation {
    /// Step from the initial state until `max_time` or early stop.
    pub fn rollout(&self, options: &RolloutOptions) -> Result<Trajectory, SimError> {
        self.rollout_with(options, |_| {})
    }

    /// As [`Simulation::rollout`], calling `observe` after every step.
    pub fn rollout_with(
        &self,
        options: &RolloutOptions,
        mut observe: impl FnMut(&SimState),
    ) -> Result<Trajectory, SimError> {
        let mut state = self.initial_state();
        let stride = options.frame_stride.max(1) as u64;
        let max_steps = (self.scene().max_time / self.scene().dt).round() as u64;
        let rest_steps = (options.rest_duration / self.scene().dt).round().max(1.0) as u64;
        let frame = |s: &SimState| Frame {
            t: s.time,
            positions: s.positions.clone(),
            sphere: s.sphere,
        };
        let mut frames = vec![frame(&state)];
        let sphere_initial = state.sphere.map(|s| s.position);
        let mut resting_for = 0u64;
        let mut at_rest = false;
        while state.step < max_steps {
            self.step_in_place(&mut state)?;
            observe(&state);
            if state.step % stride == 0 {
                frames.push(frame(&state));
            }
            if options.early_stop && self.actuation_complete(&state) {
                let resting = state.sphere.is_some_and(|s| {
                    (state.contacts.sphere_ground || state.contacts.sphere_mesh)
                        && s.velocity.norm() < options.rest_speed
                });
                resting_for = if resting { resting_for + 1 } else { 0 };
                if resting_for >= rest_steps {
                    at_rest = true;
                    break;
                }
            }
        }
        if frames.last().is_some_and(|f| f.t != state.time) {
            frames.push(frame(&state));
        }
        Ok(Trajectory {
            ids: self.ids().to_vec(),
            frames,
            sphere_initial,
            sphere_final: state.sphere.map(|s| s.position),
            at_rest,
            steps: state.step,
            fired_at: state.fired_at.clone(),
        })
    }
}

/// Assemble and roll out in one call.
pub fn run_rollout(
    pattern: &crate::design::CreasePattern,
    mesh: &crate::mesh::TriMesh,
    material: &super::MaterialParams,
    scene: &super::SceneConfig,
    events: Vec<super::ActuationEvent>,
    options: &RolloutOptions,
) -> Result<Trajectory, SimError> {
    super::assemble(pattern, mesh, material, scene)?
        .with_events(events)?
        .rollout(options)
}
