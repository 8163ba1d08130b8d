//! Parametric origami catapult and its throw protocol.
//!
//! The template is a sheet folded about a single central vertex `V`:
//!
//! ```text
//!              D_L(4)------------------C_L(3)
//!      A_L(9)    \   wing L              |
//!      / |  K2(2) \                      |
//!     /  |   \     \                     |
//! 10 ----M(5)----- V(0) ------------- B(1)       +x ->
//!     \  |   /     /                     |
//!      \ |  K6(6) /                      |
//!      A_R(11)   /   wing R              |
//!              D_R(8)------------------C_R(7)
//! ```
//!
//! Three creases meet at `V`: the seam `V-B` between the wings and the two
//! side creases `V-K2` and `V-K6`, which enclose the sector angle `theta`
//! measured through the arm. A fourth crease runs along the arm from `M` to
//! the tip `10`. The spine `V-M` is a panel boundary, so it bends
//! elastically and remembers the pose it was built in.
//!
//! `V` and `B` are clamped. The throw starts from a pre-folded pose with the
//! arm raised by `prefold` degrees and the sphere dropped near the tip.
//! While the sphere settles the wings sag towards flat; the corners `C_L`
//! and `C_R` are then driven towards the spine, the wings buckle upwards and
//! the arm snaps up about `V`, throwing the sphere towards +x.
//!
//! With the wings rotated by `phi` about the seam, rigid folding of the
//! vertex gives the arm elevation `beta` from
//! `tan(beta / 2) = tan(theta / 2) * sin(phi)`, so the arm only rises for
//! `theta < 180`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::{Actuation, Axis, CreasePattern, EdgeKind, KeypointId, Panel, FREE};
use crate::geometry::Vec3;
use crate::mesh::{mesh_pattern, MeshError, TriMesh};
use crate::optimizer::{optimize_with, CmaConfig, CmaError, Evaluation, GenerationRecord, OptResult};
use crate::sim::{
    assemble, throw_distance, ActuationEvent, GroundConfig, MaterialParams, RigidSphere,
    RolloutOptions, SceneConfig, SimError, Trajectory, Trigger,
};

pub const THETA_RANGE: (f64, f64) = (100.0, 226.0);
pub const ARM_LENGTH_RANGE: (f64, f64) = (0.08, 0.18);

/// Published best design of the throwing study.
pub const REFERENCE_OPTIMUM: CatapultParams = CatapultParams { theta: 115.5, arm_length: 0.102 };

pub const CENTER: KeypointId = 0;
pub const BASE_END: KeypointId = 1;
pub const SIDE_LEFT: KeypointId = 2;
pub const CORNER_LEFT: KeypointId = 3;
pub const SHOULDER_LEFT: KeypointId = 4;
pub const ARM_JOINT: KeypointId = 5;
pub const SIDE_RIGHT: KeypointId = 6;
pub const CORNER_RIGHT: KeypointId = 7;
pub const SHOULDER_RIGHT: KeypointId = 8;
pub const BLADE_LEFT: KeypointId = 9;
pub const TIP: KeypointId = 10;
pub const BLADE_RIGHT: KeypointId = 11;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatapultError {
    #[error("theta {theta} deg or arm length {arm_length} m outside the design box")]
    ParamsOutOfRange { theta: f64, arm_length: f64 },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CatapultParams {
    /// Sector angle between the side creases, degrees.
    pub theta: f64,
    /// Distance from the central vertex to the arm tip, m.
    pub arm_length: f64,
}

impl CatapultParams {
    pub fn new(theta: f64, arm_length: f64) -> Self {
        CatapultParams { theta, arm_length }
    }

    pub fn check(&self) -> Result<(), CatapultError> {
        let ok = (THETA_RANGE.0..=THETA_RANGE.1).contains(&self.theta)
            && (ARM_LENGTH_RANGE.0..=ARM_LENGTH_RANGE.1).contains(&self.arm_length);
        if ok {
            Ok(())
        } else {
            Err(CatapultError::ParamsOutOfRange {
                theta: self.theta,
                arm_length: self.arm_length,
            })
        }
    }

    fn half_angle(&self) -> f64 {
        (0.5 * self.theta).to_radians()
    }
}

/// Fixed dimensions of the template, m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Template {
    /// x of the seam end `B` and the outer corners.
    pub base_length: f64,
    /// |y| of the wing outer edges.
    pub half_width: f64,
    /// x of the inner ends of the wing outer edges.
    pub shoulder_x: f64,
    /// Distance of `K2`/`K6` from `V`.
    pub side_radius: f64,
    /// Distance of the spine joint `M` from `V`.
    pub joint_length: f64,
    /// |y| of the blade corners, which sit at x = -joint_length.
    pub blade_half_width: f64,
}

impl Default for Template {
    fn default() -> Self {
        Template {
            base_length: 0.045,
            half_width: 0.045,
            shoulder_x: -0.02,
            side_radius: 0.04,
            joint_length: 0.05,
            blade_half_width: 0.02,
        }
    }
}

impl Template {
    fn side_point(&self, params: &CatapultParams, sign: f64) -> Vec3 {
        let a = params.half_angle();
        Vec3::new(-self.side_radius * a.cos(), sign * self.side_radius * a.sin(), 0.0)
    }

    /// The flat crease pattern and its mesh.
    pub fn build(&self, params: &CatapultParams) -> Result<(CreasePattern, TriMesh), CatapultError> {
        params.check()?;
        let mut cp = CreasePattern::new(format!(
            "catapult theta={} l={}",
            params.theta, params.arm_length
        ));
        let lateral = Some(Actuation { axis: Axis::Y });
        let anchored = [false, false, false];
        let corner_dof = [false, true, true];
        let b = self.base_length;
        let w = self.half_width;
        let j = self.joint_length;
        let points: [(Vec3, [bool; 3], Option<Actuation>); 12] = [
            (Vec3::zeros(), anchored, None),
            (Vec3::new(b, 0.0, 0.0), anchored, None),
            (self.side_point(params, 1.0), FREE, None),
            (Vec3::new(b, w, 0.0), corner_dof, lateral),
            (Vec3::new(self.shoulder_x, w, 0.0), FREE, None),
            (Vec3::new(-j, 0.0, 0.0), FREE, None),
            (self.side_point(params, -1.0), FREE, None),
            (Vec3::new(b, -w, 0.0), corner_dof, lateral),
            (Vec3::new(self.shoulder_x, -w, 0.0), FREE, None),
            (Vec3::new(-j, self.blade_half_width, 0.0), FREE, None),
            (Vec3::new(-params.arm_length, 0.0, 0.0), FREE, None),
            (Vec3::new(-j, -self.blade_half_width, 0.0), FREE, None),
        ];
        for (p, dof, act) in points {
            cp.add_keypoint(p, dof, act).expect("template keypoints are consistent");
        }
        use EdgeKind::{Boundary, Crease};
        let edges = [
            (CENTER, BASE_END, Crease),
            (CENTER, SIDE_LEFT, Crease),
            (CENTER, SIDE_RIGHT, Crease),
            (ARM_JOINT, TIP, Crease),
            (CENTER, ARM_JOINT, Boundary),
            (BASE_END, CORNER_LEFT, Boundary),
            (CORNER_LEFT, SHOULDER_LEFT, Boundary),
            (SHOULDER_LEFT, SIDE_LEFT, Boundary),
            (SIDE_LEFT, BLADE_LEFT, Boundary),
            (BLADE_LEFT, ARM_JOINT, Boundary),
            (BLADE_LEFT, TIP, Boundary),
            (BASE_END, CORNER_RIGHT, Boundary),
            (CORNER_RIGHT, SHOULDER_RIGHT, Boundary),
            (SHOULDER_RIGHT, SIDE_RIGHT, Boundary),
            (SIDE_RIGHT, BLADE_RIGHT, Boundary),
            (BLADE_RIGHT, ARM_JOINT, Boundary),
            (BLADE_RIGHT, TIP, Boundary),
        ];
        for (a, b, kind) in edges {
            cp.add_edge(a, b, kind).expect("template edges do not cross");
        }
        let panels: [&[KeypointId]; 6] = [
            &[CENTER, BASE_END, CORNER_LEFT, SHOULDER_LEFT, SIDE_LEFT],
            &[CENTER, SIDE_RIGHT, SHOULDER_RIGHT, CORNER_RIGHT, BASE_END],
            &[CENTER, SIDE_LEFT, BLADE_LEFT, ARM_JOINT],
            &[CENTER, ARM_JOINT, BLADE_RIGHT, SIDE_RIGHT],
            &[ARM_JOINT, BLADE_LEFT, TIP],
            &[ARM_JOINT, TIP, BLADE_RIGHT],
        ];
        for cycle in panels {
            cp.push_panel(Panel::new(cycle.to_vec()));
        }
        let mesh = mesh_pattern(&cp)?;
        Ok((cp, mesh))
    }

    /// Keypoint positions with the wings rigidly rotated by `phi` (radians)
    /// about the seam and the arm raised to match. Returns the positions in
    /// pattern order and the arm elevation.
    pub fn folded(&self, pattern: &CreasePattern, params: &CatapultParams, phi: f64) -> (Vec<Vec3>, f64) {
        let a = params.half_angle();
        let beta = 2.0 * (a.tan() * phi.sin()).atan();
        let spine = Vec3::new(-beta.cos(), 0.0, beta.sin());
        let rot = |p: Vec3, angle: f64| {
            let (s, c) = angle.sin_cos();
            Vec3::new(p.x, p.y * c - p.z * s, p.y * s + p.z * c)
        };
        let side = rot(Vec3::new(-a.cos(), a.sin(), 0.0), phi);
        let across = (side - spine * side.dot(&spine)).normalize();
        let arm = |p: Vec3| {
            let across = Vec3::new(across.x, across.y * p.y.signum(), across.z);
            spine * (-p.x) + across * p.y.abs()
        };
        let positions = pattern
            .keypoints()
            .iter()
            .map(|k| {
                let p = k.position;
                match k.id {
                    CENTER | BASE_END => p,
                    CORNER_LEFT | SHOULDER_LEFT | SIDE_LEFT => rot(p, phi),
                    CORNER_RIGHT | SHOULDER_RIGHT | SIDE_RIGHT => rot(p, -phi),
                    _ => arm(p),
                }
            })
            .collect();
        (positions, beta)
    }

    /// Wing rotation that raises the arm to `beta` (radians), if the arm
    /// can rise at all.
    pub fn wing_angle_for(&self, params: &CatapultParams, beta: f64) -> Option<f64> {
        let t = params.half_angle().tan();
        if !(t > 0.0) || !t.is_finite() {
            return None;
        }
        let s = (0.5 * beta).tan() / t;
        (s <= 1.0).then(|| s.asin())
    }
}

/// Peak angular speed of the actuated corners about the seam, rad/s.
pub const TIP_SPEED_TARGET: f64 = 2.08;

/// Lateral corner speed that turns the corners at `omega` rad/s about the
/// seam, for corners `lever` m from it.
pub fn corner_speed_for(omega: f64, lever: f64) -> f64 {
    omega * lever
}

/// Angular speed the servo commands at the corners, rad/s.
pub fn commanded_corner_rate(protocol: &ThrowProtocol, template: &Template) -> f64 {
    protocol.max_speed / template.half_width
}

/// Material used for catapult throws: stiffer panels than the general
/// default, and more damping so a sphere left on the arm settles.
pub fn default_material() -> MaterialParams {
    MaterialParams {
        panel_bend_stiffness: 0.5,
        damping: 6.0,
        ..MaterialParams::default()
    }
}

/// Everything about a throw that is not the design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThrowProtocol {
    pub sphere_mass: f64,
    pub sphere_radius: f64,
    /// Gap between the sphere and the arm at the start, m.
    pub drop_clearance: f64,
    /// Distance of the sphere's contact point inward from the tip, m.
    pub tip_inset: f64,
    /// Initial arm elevation, degrees.
    pub prefold: f64,
    pub trigger: Trigger,
    /// Inward travel of each actuated corner, m.
    pub stroke: f64,
    pub max_speed: f64,
    pub gain: f64,
    pub force_limit: Option<f64>,
    /// Peak angular speed the actuation is tuned to, rad/s.
    pub tip_speed_target: f64,
    pub axis: Axis,
    pub actuated: bool,
}

impl Default for ThrowProtocol {
    fn default() -> Self {
        ThrowProtocol {
            sphere_mass: 0.001,
            sphere_radius: 0.01,
            drop_clearance: 0.002,
            tip_inset: 0.01,
            prefold: 20.0,
            trigger: Trigger::AfterSphereContact { steps: 10 },
            stroke: 0.005,
            max_speed: corner_speed_for(TIP_SPEED_TARGET, Template::default().half_width),
            gain: 1000.0,
            force_limit: None,
            tip_speed_target: TIP_SPEED_TARGET,
            axis: Axis::X,
            actuated: true,
        }
    }
}

/// A catapult ready to simulate.
#[derive(Debug, Clone)]
pub struct CatapultSetup {
    pub pattern: CreasePattern,
    pub mesh: TriMesh,
    pub initial: Vec<Vec3>,
    pub scene: SceneConfig,
    pub events: Vec<ActuationEvent>,
}

impl CatapultSetup {
    pub fn new(
        template: &Template,
        params: &CatapultParams,
        protocol: &ThrowProtocol,
        scene: &SceneConfig,
    ) -> Result<Self, CatapultError> {
        let (pattern, mesh) = template.build(params)?;
        let phi = template
            .wing_angle_for(params, protocol.prefold.to_radians())
            .unwrap_or(0.0);
        let (initial, beta) = template.folded(&pattern, params, phi);
        let spine = Vec3::new(-beta.cos(), 0.0, beta.sin());
        let normal = Vec3::new(beta.sin(), 0.0, beta.cos());
        let contact = spine * (params.arm_length - protocol.tip_inset);
        let center = contact + normal * (protocol.sphere_radius + protocol.drop_clearance);
        let mut scene = scene.clone();
        scene.payload = Some(RigidSphere {
            mass: protocol.sphere_mass,
            radius: protocol.sphere_radius,
            initial_position: center,
        });
        let events = if protocol.actuated {
            [(CORNER_LEFT, -1.0), (CORNER_RIGHT, 1.0)]
                .into_iter()
                .map(|(id, sign)| ActuationEvent {
                    max_speed: protocol.max_speed,
                    gain: protocol.gain,
                    force_limit: protocol.force_limit,
                    hold_before_trigger: true,
                    ..ActuationEvent::new(protocol.trigger, vec![id], Axis::Y, sign * protocol.stroke)
                })
                .collect()
        } else {
            Vec::new()
        };
        Ok(CatapultSetup {
            pattern,
            mesh,
            initial,
            scene,
            events,
        })
    }

    pub fn rollout(
        &self,
        material: &MaterialParams,
        options: &RolloutOptions,
    ) -> Result<Trajectory, CatapultError> {
        let sim = assemble(&self.pattern, &self.mesh, material, &self.scene)?
            .with_initial_pose(self.initial.clone())
            .with_checked_events(&self.pattern, self.events.clone())?;
        Ok(sim.rollout(options)?)
    }
}

/// Scene used for catapult throws unless overridden.
pub fn default_scene() -> SceneConfig {
    SceneConfig {
        ground: GroundConfig::default(),
        ..SceneConfig::default()
    }
}

pub fn build_catapult(params: &CatapultParams) -> Result<(CreasePattern, TriMesh), CatapultError> {
    Template::default().build(params)
}

/// Throw distance of one design.
pub fn evaluate(
    params: &CatapultParams,
    protocol: &ThrowProtocol,
    material: &MaterialParams,
    scene: &SceneConfig,
) -> Result<f64, CatapultError> {
    let setup = CatapultSetup::new(&Template::default(), params, protocol, scene)?;
    let options = RolloutOptions {
        frame_stride: usize::MAX,
        ..RolloutOptions::default()
    };
    let traj = setup.rollout(material, &options)?;
    Ok(throw_distance(&traj, protocol.axis)?)
}

/// One grid point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub theta: f64,
    pub arm_length: f64,
    pub distance: f64,
    pub failed: bool,
}

/// Evenly spaced values over `range`, endpoints included.
pub fn grid_axis(range: (f64, f64), n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (range.0 + range.1)],
        _ => (0..n)
            .map(|i| range.0 + (range.1 - range.0) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Evaluate every point of a `thetas x lengths` grid. Failed evaluations
/// score zero and are flagged. Rows come out theta-major.
pub fn sweep(
    theta_range: (f64, f64),
    length_range: (f64, f64),
    dims: (usize, usize),
    protocol: &ThrowProtocol,
    material: &MaterialParams,
    scene: &SceneConfig,
    progress: &(dyn Fn(usize) + Sync),
) -> Vec<SweepRow> {
    let thetas = grid_axis(theta_range, dims.0);
    let lengths = grid_axis(length_range, dims.1);
    let points: Vec<(f64, f64)> = thetas
        .iter()
        .flat_map(|&t| lengths.iter().map(move |&l| (t, l)))
        .collect();
    let done = std::sync::atomic::AtomicUsize::new(0);
    points
        .par_iter()
        .map(|&(theta, arm_length)| {
            let result = evaluate(&CatapultParams::new(theta, arm_length), protocol, material, scene);
            progress(done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1);
            let (distance, failed) = match result {
                Ok(d) => (d, false),
                Err(_) => (0.0, true),
            };
            SweepRow {
                theta,
                arm_length,
                distance,
                failed,
            }
        })
        .collect()
}

/// Sweep rows as CSV: `theta_deg,l_m,distance_m,failed`.
pub fn heatmap_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("theta_deg,l_m,distance_m,failed\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.theta, r.arm_length, r.distance, r.failed);
    }
    out
}

/// Mean distance of the sweep rows falling in one cell of a coarser grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeatBin {
    pub theta: (f64, f64),
    pub arm_length: (f64, f64),
    pub mean_distance: f64,
    pub count: usize,
}

impl HeatBin {
    pub fn contains(&self, params: &CatapultParams) -> bool {
        let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        inside(params.theta, self.theta) && inside(params.arm_length, self.arm_length)
    }
}

/// Average sweep rows over `dims` equal bins spanning the ranges. Points on
/// an inner bin edge go to the upper bin; the top edge belongs to the last.
/// Bins come out theta-major; empty bins have count 0 and mean 0.
pub fn bin_rows(
    rows: &[SweepRow],
    theta_range: (f64, f64),
    length_range: (f64, f64),
    dims: (usize, usize),
) -> Vec<HeatBin> {
    let (nt, nl) = dims;
    let index = |v: f64, (lo, hi): (f64, f64), n: usize| -> Option<usize> {
        if !(v >= lo && v <= hi) || n == 0 {
            return None;
        }
        Some((((v - lo) / (hi - lo) * n as f64).floor() as usize).min(n - 1))
    };
    let mut sums = vec![(0.0, 0usize); nt * nl];
    for r in rows {
        if let (Some(i), Some(j)) = (index(r.theta, theta_range, nt), index(r.arm_length, length_range, nl)) {
            let cell = &mut sums[i * nl + j];
            cell.0 += r.distance;
            cell.1 += 1;
        }
    }
    let edge = |(lo, hi): (f64, f64), n: usize, k: usize| lo + (hi - lo) * k as f64 / n as f64;
    (0..nt)
        .flat_map(|i| (0..nl).map(move |j| (i, j)))
        .map(|(i, j)| {
            let (sum, count) = sums[i * nl + j];
            HeatBin {
                theta: (edge(theta_range, nt, i), edge(theta_range, nt, i + 1)),
                arm_length: (edge(length_range, nl, j), edge(length_range, nl, j + 1)),
                mean_distance: if count > 0 { sum / count as f64 } else { 0.0 },
                count,
            }
        })
        .collect()
}

/// Binned heatmap as CSV.
pub fn binned_csv(bins: &[HeatBin]) -> String {
    let mut out = String::from("theta_bin_lo,theta_bin_hi,l_bin_lo,l_bin_hi,mean_distance_m,count\n");
    for b in bins {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            b.theta.0, b.theta.1, b.arm_length.0, b.arm_length.1, b.mean_distance, b.count
        );
    }
    out
}

/// The best tenth of the non-empty bins by mean distance, at least one.
pub fn top_decile(bins: &[HeatBin]) -> Vec<HeatBin> {
    let mut filled: Vec<HeatBin> = bins.iter().filter(|b| b.count > 0).copied().collect();
    filled.sort_by(|a, b| b.mean_distance.total_cmp(&a.mean_distance));
    let keep = (filled.len() as f64 / 10.0).ceil().max(1.0) as usize;
    filled.truncate(keep);
    filled
}

/// CMA-ES settings for the catapult box, with the default step size.
pub fn cma_config(seed: u64, start: Option<CatapultParams>) -> CmaConfig {
    CmaConfig {
        start: start.map(|p| vec![p.theta, p.arm_length]),
        ..CmaConfig::new(vec![THETA_RANGE, ARM_LENGTH_RANGE], seed)
    }
}

/// Maximize throw distance over `(theta, arm_length)`. Designs that fail to
/// build or simulate score zero and are counted as failures.
pub fn optimize_catapult(
    config: &CmaConfig,
    protocol: &ThrowProtocol,
    material: &MaterialParams,
    scene: &SceneConfig,
    progress: impl FnMut(&GenerationRecord),
) -> Result<OptResult, CmaError> {
    let objective = |x: &[f64]| {
        Ok(match evaluate(&CatapultParams::new(x[0], x[1]), protocol, material, scene) {
            Ok(d) => Evaluation::ok(d),
            Err(_) => Evaluation::failed(0.0),
        })
    };
    optimize_with(objective, config, progress)
}
