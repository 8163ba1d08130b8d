//! MJCF export and structural parse-back audit.
//!
//! Every keypoint becomes an explicit body with one slide joint per free
//! axis, so per-keypoint DOF locks and actuators carry over. Each panel is a
//! `flex` whose vertices are its keypoint bodies; panels that share a
//! keypoint reference the same body. See `docs/mjcf_schema.md` for the exact
//! element and attribute set.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::design::{Axis, CreasePattern, KeypointId, Violation};
use crate::geometry::{orient2d, Vec3};
use crate::mesh::TriMesh;
use crate::sim::{ActuationEvent, MaterialParams, SceneConfig, SimError};

/// Bodies with joints need positive mass; keypoints outside every panel get this.
pub const MIN_BODY_MASS: f64 = 1e-6;

const POSITION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MjcfError {
    #[error("pattern is invalid: {0:?}")]
    InvalidPattern(Vec<Violation>),
    #[error("panel {0} has no triangles in the mesh")]
    UnmeshedPanel(usize),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MjcfStats {
    pub body_count: usize,
    pub flex_count: usize,
    pub actuator_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MjcfDocument {
    pub xml_text: String,
    pub stats: MjcfStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "code")]
pub enum MjcfViolation {
    Malformed { message: String },
    MissingWorldbody,
    FlexCountMismatch { expected: usize, found: usize },
    MissingFlex { panel: usize },
    MissingBody { flex: String, body: String },
    ElementOutOfRange { flex: String, index: usize, vertex_count: usize },
    ElementCountMismatch { flex: String, expected: usize, found: usize },
    VertexMismatch { flex: String, expected: Vec<KeypointId>, found: Vec<KeypointId> },
    MissingKeypointBody { id: KeypointId },
    DuplicatedSharedKeypoint { id: KeypointId, bodies: Vec<String> },
    MissingActuator { id: KeypointId, axis: Axis },
}

/// Shortest round-trip decimal of `x` rounded to 9 significant digits.
pub fn format_float(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_finite() { "0".into() } else { x.to_string() };
    }
    let rounded: f64 = format!("{x:.8e}").parse().unwrap_or(x);
    format!("{rounded}")
}

fn vec_attr(v: &Vec3) -> String {
    format!("{} {} {}", format_float(v.x), format_float(v.y), format_float(v.z))
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn axis_vector(axis: Axis) -> &'static str {
    match axis {
        Axis::X => "1 0 0",
        Axis::Y => "0 1 0",
        Axis::Z => "0 0 1",
    }
}

pub fn body_name(id: KeypointId) -> String {
    format!("kp{id}")
}

pub fn joint_name(id: KeypointId, axis: Axis) -> String {
    format!("kp{id}_{axis}")
}

pub fn flex_name(panel: usize) -> String {
    format!("panel{panel}")
}

pub fn actuator_name(id: KeypointId, axis: Axis) -> String {
    format!("act_kp{id}_{axis}")
}

/// Flex vertex order for a panel: its cycle, then any further keypoints the
/// triangles use, in first-use order.
fn flex_vertices(pattern: &CreasePattern, mesh: &TriMesh, panel: usize) -> Vec<KeypointId> {
    let mut order: Vec<KeypointId> = pattern.panels()[panel].cycle.clone();
    for tri in mesh.panel_triangles(panel) {
        for id in tri.ids {
            if !order.contains(&id) {
                order.push(id);
            }
        }
    }
    order
}

/// Per-keypoint mass in pattern order: a third of each incident triangle's
/// sheet mass, as in the simulator.
fn lumped_masses(pattern: &CreasePattern, mesh: &TriMesh, material: &MaterialParams) -> Vec<f64> {
    let index: HashMap<KeypointId, usize> =
        pattern.keypoints().iter().enumerate().map(|(i, k)| (k.id, i)).collect();
    let mut mass = vec![0.0; index.len()];
    for tri in &mesh.triangles {
        let Some(panel) = pattern.panels().get(tri.panel) else { continue };
        let p: Option<Vec<_>> = tri.ids.iter().map(|&id| pattern.layout_position(panel, id)).collect();
        let Some(p) = p else { continue };
        let m = material.density * material.thickness * 0.5 * orient2d(p[0], p[1], p[2]).abs() / 3.0;
        for id in tri.ids {
            if let Some(&i) = index.get(&id) {
                mass[i] += m;
            }
        }
    }
    mass
}

pub fn export_mjcf(
    pattern: &CreasePattern,
    mesh: &TriMesh,
    scene: &SceneConfig,
    material: &MaterialParams,
) -> Result<MjcfDocument, MjcfError> {
    let violations = pattern.validate();
    if !violations.is_empty() {
        return Err(MjcfError::InvalidPattern(violations));
    }
    for panel in 0..pattern.panels().len() {
        if mesh.panel_triangles(panel).next().is_none() {
            return Err(MjcfError::UnmeshedPanel(panel));
        }
    }
    material.validate()?;
    scene.validate()?;
    let masses = lumped_masses(pattern, mesh, material);

    let mut xml = String::new();
    let f = format_float;
    let _ = writeln!(xml, "<mujoco model=\"{}\">", escape(&pattern.name));
    let _ = writeln!(
        xml,
        "  <!-- panel_bend_stiffness=\"{}\" (N*m/rad, not representable in MJCF) -->",
        f(material.panel_bend_stiffness)
    );
    let _ = writeln!(
        xml,
        "  <!-- density=\"{}\" (kg/m^3, lumped into keypoint body masses) -->",
        f(material.density)
    );
    let _ = writeln!(
        xml,
        "  <option timestep=\"{}\" gravity=\"{}\"/>",
        f(scene.dt),
        vec_attr(&scene.gravity)
    );
    xml.push_str("  <worldbody>\n");
    let ground = &scene.ground;
    if ground.enabled {
        let _ = writeln!(
            xml,
            "    <!-- ground contact_stiffness=\"{}\" contact_damping=\"{}\" -->",
            f(ground.contact_stiffness),
            f(ground.contact_damping)
        );
        let _ = writeln!(
            xml,
            "    <geom name=\"ground\" type=\"plane\" pos=\"0 0 {}\" size=\"0 0 1\" friction=\"{} 0.005 0.0001\"/>",
            f(ground.height),
            f(ground.friction_coeff)
        );
    }
    for (i, kp) in pattern.keypoints().iter().enumerate() {
        let mass = if masses[i] > 0.0 { masses[i] } else { MIN_BODY_MASS };
        let _ = writeln!(
            xml,
            "    <body name=\"{}\" pos=\"{}\">",
            body_name(kp.id),
            vec_attr(&kp.position)
        );
        let _ = writeln!(
            xml,
            "      <inertial pos=\"0 0 0\" mass=\"{}\" diaginertia=\"{} {} {}\"/>",
            f(mass),
            f(MIN_BODY_MASS * mass),
            f(MIN_BODY_MASS * mass),
            f(MIN_BODY_MASS * mass)
        );
        for axis in Axis::ALL {
            if kp.dof[axis.index()] {
                let _ = writeln!(
                    xml,
                    "      <joint name=\"{}\" type=\"slide\" axis=\"{}\"/>",
                    joint_name(kp.id, axis),
                    axis_vector(axis)
                );
            }
        }
        xml.push_str("    </body>\n");
    }
    if let Some(sphere) = &scene.payload {
        let _ = writeln!(
            xml,
            "    <body name=\"payload\" pos=\"{}\">",
            vec_attr(&sphere.initial_position)
        );
        xml.push_str("      <freejoint name=\"payload_free\"/>\n");
        let _ = writeln!(
            xml,
            "      <geom name=\"payload\" type=\"sphere\" size=\"{}\" mass=\"{}\"/>",
            f(sphere.radius),
            f(sphere.mass)
        );
        xml.push_str("    </body>\n");
    }
    xml.push_str("  </worldbody>\n");

    xml.push_str("  <deformable>\n");
    for panel in 0..pattern.panels().len() {
        let vertices = flex_vertices(pattern, mesh, panel);
        let slot: HashMap<KeypointId, usize> =
            vertices.iter().enumerate().map(|(k, &id)| (id, k)).collect();
        let bodies: Vec<String> = vertices.iter().map(|&id| body_name(id)).collect();
        let elements: Vec<String> = mesh
            .panel_triangles(panel)
            .flat_map(|tri| tri.ids.map(|id| slot[&id].to_string()))
            .collect();
        let _ = writeln!(
            xml,
            "    <flex name=\"{}\" dim=\"2\" radius=\"{}\" body=\"{}\" element=\"{}\">",
            flex_name(panel),
            f(0.5 * material.thickness),
            bodies.join(" "),
            elements.join(" ")
        );
        let _ = writeln!(xml, "      <edge damping=\"{}\"/>", f(material.damping));
        let _ = writeln!(
            xml,
            "      <elasticity young=\"{}\" poisson=\"{}\" thickness=\"{}\"/>",
            f(material.youngs_modulus),
            f(material.poisson_ratio),
            f(material.thickness)
        );
        xml.push_str("    </flex>\n");
    }
    xml.push_str("  </deformable>\n");

    let mut actuator_count = 0;
    let actuated: Vec<_> = pattern
        .keypoints()
        .iter()
        .enumerate()
        .filter_map(|(i, kp)| kp.actuation.map(|a| (i, kp.id, a.axis)))
        .collect();
    if !actuated.is_empty() {
        xml.push_str("  <actuator>\n");
        let gain = ActuationEvent::DEFAULT_GAIN;
        for (i, id, axis) in actuated {
            let mass = if masses[i] > 0.0 { masses[i] } else { MIN_BODY_MASS };
            let _ = writeln!(
                xml,
                "    <position name=\"{}\" joint=\"{}\" kp=\"{}\" kv=\"{}\"/>",
                actuator_name(id, axis),
                joint_name(id, axis),
                f(mass * gain * gain),
                f(2.0 * mass * gain)
            );
            actuator_count += 1;
        }
        xml.push_str("  </actuator>\n");
    }
    xml.push_str("</mujoco>\n");

    Ok(MjcfDocument {
        xml_text: xml,
        stats: MjcfStats {
            body_count: pattern.keypoints().len(),
            flex_count: pattern.panels().len(),
            actuator_count,
        },
    })
}

fn parse_vec(text: &str) -> Option<Vec3> {
    let v: Vec<f64> = text
        .split_whitespace()
        .map(str::parse)
        .collect::<Result<_, _>>()
        .ok()?;
    (v.len() == 3).then(|| Vec3::new(v[0], v[1], v[2]))
}

/// Structural audit of an MJCF text against the pattern and mesh it should
/// encode. Bodies are matched to keypoints by position, so a hand-made copy
/// of a shared keypoint is caught even under a different name.
pub fn check_mjcf(xml_text: &str, pattern: &CreasePattern, mesh: &TriMesh) -> Vec<MjcfViolation> {
    let doc = match roxmltree::Document::parse(xml_text) {
        Ok(doc) => doc,
        Err(e) => return vec![MjcfViolation::Malformed { message: e.to_string() }],
    };
    let mut out = Vec::new();
    let root = doc.root_element();
    let Some(world) = root.children().find(|n| n.has_tag_name("worldbody")) else {
        return vec![MjcfViolation::MissingWorldbody];
    };

    // Body name -> keypoint it sits on, and the joints it carries.
    let mut body_keypoint: BTreeMap<String, Option<KeypointId>> = BTreeMap::new();
    let mut bodies_of: BTreeMap<KeypointId, Vec<String>> = BTreeMap::new();
    let mut joints: BTreeSet<String> = BTreeSet::new();
    for body in world.children().filter(|n| n.has_tag_name("body")) {
        let name = body.attribute("name").unwrap_or_default().to_string();
        let pos = body.attribute("pos").and_then(parse_vec);
        let hit = pos.and_then(|p| {
            pattern
                .keypoints()
                .iter()
                .find(|kp| (kp.position - p).norm() <= POSITION_TOLERANCE)
                .map(|kp| kp.id)
        });
        if let Some(id) = hit {
            bodies_of.entry(id).or_default().push(name.clone());
        }
        for joint in body.children().filter(|n| n.has_tag_name("joint")) {
            if let Some(j) = joint.attribute("name") {
                joints.insert(j.to_string());
            }
        }
        body_keypoint.insert(name, hit);
    }
    for kp in pattern.keypoints() {
        match bodies_of.get(&kp.id) {
            None => out.push(MjcfViolation::MissingKeypointBody { id: kp.id }),
            Some(names) if names.len() > 1 => out.push(MjcfViolation::DuplicatedSharedKeypoint {
                id: kp.id,
                bodies: names.clone(),
            }),
            _ => {}
        }
    }

    let flexes: Vec<_> = root
        .children()
        .filter(|n| n.has_tag_name("deformable"))
        .flat_map(|d| d.children().filter(|n| n.has_tag_name("flex")))
        .collect();
    if flexes.len() != pattern.panels().len() {
        out.push(MjcfViolation::FlexCountMismatch {
            expected: pattern.panels().len(),
            found: flexes.len(),
        });
    }
    for panel in 0..pattern.panels().len() {
        let name = flex_name(panel);
        let Some(flex) = flexes.iter().find(|n| n.attribute("name") == Some(name.as_str())) else {
            out.push(MjcfViolation::MissingFlex { panel });
            continue;
        };
        let names: Vec<&str> = flex.attribute("body").unwrap_or_default().split_whitespace().collect();
        let mut ids = Vec::with_capacity(names.len());
        for body in &names {
            match body_keypoint.get(*body) {
                Some(Some(id)) => ids.push(*id),
                _ => out.push(MjcfViolation::MissingBody {
                    flex: name.clone(),
                    body: body.to_string(),
                }),
            }
        }
        let elements: Vec<usize> = flex
            .attribute("element")
            .unwrap_or_default()
            .split_whitespace()
            .filter_map(|t| t.parse().ok())
            .collect();
        let expected_elements = 3 * mesh.panel_triangles(panel).count();
        if elements.len() != expected_elements {
            out.push(MjcfViolation::ElementCountMismatch {
                flex: name.clone(),
                expected: expected_elements,
                found: elements.len(),
            });
        }
        if let Some(&index) = elements.iter().find(|&&e| e >= names.len()) {
            out.push(MjcfViolation::ElementOutOfRange {
                flex: name.clone(),
                index,
                vertex_count: names.len(),
            });
        }
        if ids.len() == names.len() {
            let mut expected = flex_vertices(pattern, mesh, panel);
            let mut found = ids;
            expected.sort_unstable();
            found.sort_unstable();
            if expected != found {
                out.push(MjcfViolation::VertexMismatch { flex: name, expected, found });
            }
        }
    }

    let actuated_joints: BTreeSet<&str> = root
        .children()
        .filter(|n| n.has_tag_name("actuator"))
        .flat_map(|a| a.children().filter(|n| n.has_tag_name("position")))
        .filter_map(|n| n.attribute("joint"))
        .filter(|j| joints.contains(*j))
        .collect();
    for kp in pattern.keypoints() {
        if let Some(a) = kp.actuation {
            if !actuated_joints.contains(joint_name(kp.id, a.axis).as_str()) {
                out.push(MjcfViolation::MissingActuator { id: kp.id, axis: a.axis });
            }
        }
    }
    out
}
