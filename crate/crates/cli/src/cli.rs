//! `origami` command line. Every command ends with one JSON summary line on
//! stdout; exit status is 0 on success, 1 on a domain error and 2 on a usage
//! error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use origami_core::catapult::{binned_csv, heatmap_csv};
use serde_json::{json, Map, Value};

use crate::error::{ApiError, ErrorKind};
use crate::pipeline::{self, ExportSettings, OptimizeSettings, SimulateSettings, SweepSettings};
use crate::server;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "origami", version, about = "Design, simulate, export and optimize origami mechanisms")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a design file against the pattern invariants.
    Validate {
        /// Design file, or `fixture:<name>`.
        design: String,
    },
    /// Triangulate every panel.
    Mesh {
        design: String,
        /// Write the triangles as JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a MuJoCo MJCF model.
    Export {
        design: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        physics: PhysicsFiles,
    },
    /// Roll out a design and optionally dump its frames.
    Simulate {
        design: String,
        #[command(flatten)]
        physics: PhysicsFiles,
        /// JSON array of actuation events.
        #[arg(long)]
        events: Option<PathBuf>,
        /// Newline-delimited JSON frames.
        #[arg(long)]
        frames: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        stride: usize,
        /// Simulated seconds; overrides the scene.
        #[arg(long)]
        max_time: Option<f64>,
        #[arg(long)]
        no_early_stop: bool,
    },
    /// Catapult throw distance over a (theta, arm length) grid.
    Sweep {
        /// Grid points as THETAxLENGTH, e.g. 72x40.
        #[arg(long, default_value = "12x10")]
        grid: Grid,
        /// Heatmap rows as CSV.
        #[arg(long)]
        out: PathBuf,
        /// Heatmap bins as THETAxLENGTH.
        #[arg(long, default_value = "12x10")]
        bins: Grid,
        /// Bin-averaged heatmap as CSV.
        #[arg(long)]
        bins_out: Option<PathBuf>,
        /// Theta range in degrees as LO:HI.
        #[arg(long)]
        theta: Option<Range>,
        /// Arm length range in meters as LO:HI.
        #[arg(long)]
        length: Option<Range>,
        #[arg(long)]
        max_time: Option<f64>,
        /// Disable actuation (passive baseline).
        #[arg(long)]
        passive: bool,
    },
    /// CMA-ES over the catapult design box.
    Optimize {
        #[arg(long, default_value_t = 0.025)]
        sigma: f64,
        #[arg(long, default_value_t = 200)]
        generations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        population: Option<usize>,
        /// Start as THETA,LENGTH; random within the box when absent.
        #[arg(long, value_delimiter = ',', num_args = 2)]
        start: Option<Vec<f64>>,
        #[arg(long)]
        max_time: Option<f64>,
        /// Directory for result.json and trajectory.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the local JSON service.
    Serve {
        #[arg(long, env = "ORIGAMI_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "ORIGAMI_DATA_DIR", default_value = "origami-data")]
        data_dir: PathBuf,
        /// Concurrent jobs.
        #[arg(long, default_value_t = 2)]
        workers: usize,
    },
}

#[derive(Debug, Args)]
pub struct PhysicsFiles {
    /// Scene JSON (gravity, ground, payload, dt, max_time).
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Material JSON.
    #[arg(long)]
    material: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid(pub usize, pub usize);

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected AxB, got `{s}`"))?;
        let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("`{t}`: {e}"));
        let grid = Grid(parse(a)?, parse(b)?);
        if grid.0 == 0 || grid.1 == 0 {
            return Err("grid dimensions must be positive".into());
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range(pub f64, pub f64);

impl FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s.split_once(':').ok_or_else(|| format!("expected LO:HI, got `{s}`"))?;
        let parse = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
        Ok(Range(parse(a)?, parse(b)?))
    }
}

/// Parse `args` and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let name = command_name(&cli.command);
    match dispatch(cli.command) {
        Ok(fields) => {
            print_summary(name, "ok", fields);
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            let mut fields = Map::new();
            fields.insert("error".into(), serde_json::to_value(&e).expect("errors serialize"));
            print_summary(name, "error", fields);
            EXIT_DOMAIN
        }
    }
}

fn command_name(command: &Command) -> &'static str {
    match command {
        Command::Validate { .. } => "validate",
        Command::Mesh { .. } => "mesh",
        Command::Export { .. } => "export",
        Command::Simulate { .. } => "simulate",
        Command::Sweep { .. } => "sweep",
        Command::Optimize { .. } => "optimize",
        Command::Serve { .. } => "serve",
    }
}

fn print_summary(command: &str, status: &str, fields: Map<String, Value>) {
    let mut line = Map::new();
    line.insert("command".into(), command.into());
    line.insert("status".into(), status.into());
    line.extend(fields);
    println!("{}", Value::Object(line));
}

fn object(value: Value) -> Map<String, Value> {
    match value {
        Value::Object(map) => map,
        other => Map::from_iter([("value".to_string(), other)]),
    }
}

fn write(path: &Path, contents: &str) -> Result<(), ApiError> {
    std::fs::write(path, contents)
        .map_err(|e| ApiError::internal(format!("{}: {e}", path.display())).on(path.display().to_string()))
}

fn physics(files: &PhysicsFiles) -> Result<ExportSettings, ApiError> {
    Ok(ExportSettings {
        scene: pipeline::load_json(files.scene.as_deref(), Default::default())?,
        material: pipeline::load_json(files.material.as_deref(), Default::default())?,
    })
}

fn dispatch(command: Command) -> Result<Map<String, Value>, ApiError> {
    match command {
        Command::Validate { design } => {
            let pattern = pipeline::load_design(&design)?;
            let violations = pattern.validate();
            let warnings = pattern.warnings();
            if !violations.is_empty() {
                for v in &violations {
                    eprintln!("violation: {}", serde_json::to_string(v).expect("violations serialize"));
                }
                let listed = serde_json::to_string(&violations).expect("violations serialize");
                return Err(ApiError::new(ErrorKind::Domain, "InvalidPattern", listed).on(design));
            }
            Ok(object(json!({
                "keypoints": pattern.keypoints().len(),
                "edges": pattern.edges().len(),
                "panels": pattern.panels().len(),
                "violations": 0,
                "warnings": warnings,
            })))
        }
        Command::Mesh { design, out } => {
            let pattern = pipeline::load_design(&design)?;
            let mesh = pipeline::mesh(&pattern).map_err(|e| e.on(design))?;
            let body = serde_json::to_string_pretty(&pipeline::mesh_json(&pattern, &mesh)).expect("json");
            match &out {
                Some(path) => write(path, &body)?,
                None => println!("{body}"),
            }
            Ok(object(json!({
                "panels": pattern.panels().len(),
                "triangles": mesh.triangles.len(),
                "out": out,
            })))
        }
        Command::Export { design, out, physics: files } => {
            let pattern = pipeline::load_design(&design)?;
            let doc = pipeline::export(&pattern, &physics(&files)?).map_err(|e| e.on(design))?;
            write(&out, &doc.xml_text)?;
            let mut fields = object(serde_json::to_value(doc.stats).expect("stats serialize"));
            fields.insert("out".into(), json!(out));
            Ok(fields)
        }
        Command::Simulate { design, physics: files, events, frames, stride, max_time, no_early_stop } => {
            let pattern = pipeline::load_design(&design)?;
            let physics = physics(&files)?;
            let settings = SimulateSettings {
                scene: physics.scene,
                material: physics.material,
                events: pipeline::load_json(events.as_deref(), Vec::new())?,
                frame_stride: stride,
                early_stop: !no_early_stop,
                max_time,
            };
            let trajectory = pipeline::simulate(&pattern, &settings).map_err(|e| e.on(design))?;
            if let Some(path) = &frames {
                write(path, &trajectory.frames_text())?;
            }
            let mut fields = object(pipeline::simulate_summary(&trajectory));
            fields.insert("frames_out".into(), json!(frames));
            Ok(fields)
        }
        Command::Sweep { grid, out, bins, bins_out, theta, length, max_time, passive } => {
            let defaults = SweepSettings::default();
            let settings = SweepSettings {
                grid: [grid.0, grid.1],
                theta_range: theta.map_or(defaults.theta_range, |r| [r.0, r.1]),
                length_range: length.map_or(defaults.length_range, |r| [r.0, r.1]),
                bins: [bins.0, bins.1],
                max_time,
                actuated: !passive,
            };
            let outcome = pipeline::sweep(&settings, &|_| {})?;
            write(&out, &heatmap_csv(&outcome.rows))?;
            if let Some(path) = &bins_out {
                write(path, &binned_csv(&outcome.bins))?;
            }
            let mut fields = object(pipeline::sweep_summary(&outcome));
            fields.insert("out".into(), json!(out));
            Ok(fields)
        }
        Command::Optimize { sigma, generations, seed, population, start, max_time, out } => {
            let settings = OptimizeSettings {
                seed,
                sigma,
                generations,
                population,
                start: start.map(|v| [v[0], v[1]]),
                max_time,
            };
            let result = pipeline::optimize(&settings, |_| {})?;
            pipeline::write_opt_result(&out, &result)?;
            let mut fields = object(pipeline::opt_summary(&result));
            fields.insert("out".into(), json!(out));
            Ok(fields)
        }
        Command::Serve { port, data_dir, workers } => {
            server::serve_blocking(port, &data_dir, workers)?;
            Ok(Map::new())
        }
    }
}
