//! Pipeline entry points shared by the CLI and the job runner.

use std::path::Path;

use origami_core::catapult::{
    self, bin_rows, cma_config, default_material, default_scene, optimize_catapult, HeatBin,
    SweepRow, ThrowProtocol, ARM_LENGTH_RANGE, THETA_RANGE,
};
use origami_core::fixtures;
use origami_core::mesh::{mesh_pattern, TriMesh};
use origami_core::mjcf::{export_mjcf, MjcfDocument};
use origami_core::optimizer::{GenerationRecord, OptResult};
use origami_core::sim::{
    assemble, ActuationEvent, MaterialParams, RolloutOptions, SceneConfig, Trajectory,
};
use origami_core::CreasePattern;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::ApiError;

pub const SCHEMA_VERSION: u32 = 1;

/// Prefix selecting a bundled fixture instead of a file path.
pub const FIXTURE_PREFIX: &str = "fixture:";

/// Read a design from a path, or `fixture:<name>` for a bundled one.
pub fn load_design(source: &str) -> Result<CreasePattern, ApiError> {
    if let Some(name) = source.strip_prefix(FIXTURE_PREFIX) {
        return fixtures::by_name(name).map_err(|e| ApiError::domain(&e).on(source.to_string()));
    }
    let text = std::fs::read_to_string(source)
        .map_err(|e| ApiError::bad_input("UnreadableFile", format!("{source}: {e}")).on(source.to_string()))?;
    CreasePattern::from_json(&text).map_err(|e| ApiError::domain(&e).on(source.to_string()))
}

/// Read an optional JSON settings file, falling back to `fallback`.
pub fn load_json<T: DeserializeOwned>(path: Option<&Path>, fallback: T) -> Result<T, ApiError> {
    let Some(path) = path else { return Ok(fallback) };
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path)
        .map_err(|e| ApiError::bad_input("UnreadableFile", format!("{shown}: {e}")).on(shown.clone()))?;
    parse_json(&text).map_err(|e| e.on(shown))
}

pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T, ApiError> {
    serde_json::from_str(text).map_err(|e| ApiError::bad_input("MalformedJson", e.to_string()))
}

pub fn mesh(pattern: &CreasePattern) -> Result<TriMesh, ApiError> {
    mesh_pattern(pattern).map_err(|e| ApiError::domain(&e))
}

/// Triangles for preview, with the keypoint positions they index.
pub fn mesh_json(pattern: &CreasePattern, mesh: &TriMesh) -> Value {
    json!({
        "version": SCHEMA_VERSION,
        "panels": pattern.panels().len(),
        "keypoints": pattern.keypoints().iter().map(|k| json!({
            "id": k.id,
            "pos": [k.position.x, k.position.y, k.position.z],
        })).collect::<Vec<_>>(),
        "triangles": mesh.triangles.iter().map(|t| json!({
            "panel": t.panel,
            "ids": t.ids,
        })).collect::<Vec<_>>(),
    })
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExportSettings {
    pub scene: SceneConfig,
    pub material: MaterialParams,
}

pub fn export(pattern: &CreasePattern, settings: &ExportSettings) -> Result<MjcfDocument, ApiError> {
    let mesh = mesh(pattern)?;
    export_mjcf(pattern, &mesh, &settings.scene, &settings.material).map_err(|e| ApiError::domain(&e))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateSettings {
    pub scene: SceneConfig,
    pub material: MaterialParams,
    pub events: Vec<ActuationEvent>,
    pub frame_stride: usize,
    pub early_stop: bool,
    /// Overrides `scene.max_time`, s.
    pub max_time: Option<f64>,
}

impl Default for SimulateSettings {
    fn default() -> Self {
        SimulateSettings {
            scene: SceneConfig::default(),
            material: MaterialParams::default(),
            events: Vec::new(),
            frame_stride: RolloutOptions::default().frame_stride,
            early_stop: true,
            max_time: None,
        }
    }
}

pub fn simulate(pattern: &CreasePattern, settings: &SimulateSettings) -> Result<Trajectory, ApiError> {
    let mesh = mesh(pattern)?;
    let mut scene = settings.scene.clone();
    if let Some(t) = settings.max_time {
        scene.max_time = t;
    }
    let options = RolloutOptions {
        frame_stride: settings.frame_stride,
        early_stop: settings.early_stop,
        ..RolloutOptions::default()
    };
    assemble(pattern, &mesh, &settings.material, &scene)
        .and_then(|sim| sim.with_checked_events(pattern, settings.events.clone()))
        .and_then(|sim| sim.rollout(&options))
        .map_err(|e| ApiError::domain(&e))
}

pub fn simulate_summary(trajectory: &Trajectory) -> Value {
    json!({
        "steps": trajectory.steps,
        "frames": trajectory.frames.len(),
        "time": trajectory.frames.last().map_or(0.0, |f| f.t),
        "at_rest": trajectory.at_rest,
        "max_keypoint_displacement": trajectory.max_keypoint_displacement(),
        "sphere_final": trajectory.sphere_final.map(|p| [p.x, p.y, p.z]),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSettings {
    /// Grid points along theta and arm length.
    pub grid: [usize; 2],
    pub theta_range: [f64; 2],
    pub length_range: [f64; 2],
    /// Heatmap bins along theta and arm length.
    pub bins: [usize; 2],
    pub max_time: Option<f64>,
    pub actuated: bool,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            grid: [12, 10],
            theta_range: [THETA_RANGE.0, THETA_RANGE.1],
            length_range: [ARM_LENGTH_RANGE.0, ARM_LENGTH_RANGE.1],
            bins: [12, 10],
            max_time: None,
            actuated: true,
        }
    }
}

pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub bins: Vec<HeatBin>,
}

fn within(range: [f64; 2], allowed: (f64, f64)) -> bool {
    range[0] <= range[1] && range[0] >= allowed.0 && range[1] <= allowed.1
}

pub fn sweep(settings: &SweepSettings, progress: &(dyn Fn(f64) + Sync)) -> Result<SweepOutcome, ApiError> {
    if settings.grid.contains(&0) || settings.bins.contains(&0) {
        return Err(ApiError::bad_input("BadGrid", "grid and bin counts must be positive"));
    }
    if !within(settings.theta_range, THETA_RANGE) || !within(settings.length_range, ARM_LENGTH_RANGE) {
        return Err(ApiError::bad_input(
            "BadRange",
            format!(
                "ranges must lie inside theta {THETA_RANGE:?} deg and arm length {ARM_LENGTH_RANGE:?} m"
            ),
        ));
    }
    let (protocol, material, scene) = catapult_setup(settings.max_time, settings.actuated);
    let theta = (settings.theta_range[0], settings.theta_range[1]);
    let length = (settings.length_range[0], settings.length_range[1]);
    let dims = (settings.grid[0], settings.grid[1]);
    let total = (dims.0 * dims.1) as f64;
    let rows = catapult::sweep(theta, length, dims, &protocol, &material, &scene, &|done| {
        progress(done as f64 / total)
    });
    let bins = bin_rows(&rows, theta, length, (settings.bins[0], settings.bins[1]));
    Ok(SweepOutcome { rows, bins })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizeSettings {
    pub seed: u64,
    pub sigma: f64,
    pub generations: usize,
    pub population: Option<usize>,
    /// Start (theta deg, arm length m); random within the box when absent.
    pub start: Option<[f64; 2]>,
    pub max_time: Option<f64>,
}

impl Default for OptimizeSettings {
    fn default() -> Self {
        OptimizeSettings {
            seed: 0,
            sigma: 0.025,
            generations: 200,
            population: None,
            start: None,
            max_time: None,
        }
    }
}

pub fn optimize(
    settings: &OptimizeSettings,
    progress: impl FnMut(&GenerationRecord),
) -> Result<OptResult, ApiError> {
    let start = settings.start.map(|[t, l]| catapult::CatapultParams::new(t, l));
    let mut config = cma_config(settings.seed, start);
    config.sigma0 = settings.sigma;
    config.max_generations = settings.generations;
    config.population = settings.population;
    let (protocol, material, scene) = catapult_setup(settings.max_time, true);
    optimize_catapult(&config, &protocol, &material, &scene, progress).map_err(|e| ApiError::domain(&e))
}

fn catapult_setup(max_time: Option<f64>, actuated: bool) -> (ThrowProtocol, MaterialParams, SceneConfig) {
    let protocol = ThrowProtocol { actuated, ..ThrowProtocol::default() };
    let mut scene = default_scene();
    if let Some(t) = max_time {
        scene.max_time = t;
    }
    (protocol, default_material(), scene)
}

pub const TRAJECTORY_NAMES: [&str; 2] = ["theta_deg", "l_m"];

/// Write `result.json` and `trajectory.csv` under `dir`.
pub fn write_opt_result(dir: &Path, result: &OptResult) -> Result<(), ApiError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("result.json"), result.to_json())?;
    std::fs::write(dir.join("trajectory.csv"), result.trajectory_csv(&TRAJECTORY_NAMES, "fitness_m"))?;
    Ok(())
}

pub fn opt_summary(result: &OptResult) -> Value {
    json!({
        "generations": result.generations.len(),
        "initial": result.initial_params,
        "initial_fitness": result.initial_fitness,
        "best": result.best_params,
        "best_fitness": result.best_fitness,
    })
}

pub fn sweep_summary(outcome: &SweepOutcome) -> Value {
    let best = outcome
        .rows
        .iter()
        .max_by(|a, b| a.distance.total_cmp(&b.distance));
    json!({
        "rows": outcome.rows.len(),
        "failed": outcome.rows.iter().filter(|r| r.failed).count(),
        "bins": outcome.bins.len(),
        "best": best.map(|r| [r.theta, r.arm_length]),
        "best_distance": best.map(|r| r.distance),
    })
}
