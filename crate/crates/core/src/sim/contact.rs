//! Ground and sphere contact.
//!
//! Contact is penalty based. [`penalty_forces`] reports the explicit
//! spring-damper forces for inspection; during stepping the same law is
//! applied at velocity level with the damping term taken implicitly, since
//! the default contact damping is far too stiff for an explicit update at
//! the payload's mass.

use super::{SimState, Simulation};
use crate::geometry::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub struct ContactForces {
    pub keypoints: Vec<Vec3>,
    pub sphere: Vec3,
}

pub(crate) struct Touching {
    pub keypoints: Vec<bool>,
    pub sphere_ground: bool,
    pub sphere_mesh: bool,
}

/// Closest point to `p` on triangle `abc`, with its barycentric weights.
pub fn closest_point_on_triangle(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> (Vec3, [f64; 3]) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (a, [1.0, 0.0, 0.0]);
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (b, [0.0, 1.0, 0.0]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, [1.0 - v, v, 0.0]);
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (c, [0.0, 0.0, 1.0]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, [1.0 - w, 0.0, w]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, [0.0, 1.0 - w, w]);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, [1.0 - v - w, v, w])
}

/// Coulomb friction opposing `tangential_velocity`, at most `mu * normal`.
fn friction(tangential_velocity: Vec3, mu: f64, normal: f64) -> Vec3 {
    let speed = tangential_velocity.norm();
    if speed <= f64::EPSILON || normal <= 0.0 {
        return Vec3::zeros();
    }
    -tangential_velocity * (mu * normal / speed)
}

struct SphereHit {
    triangle: usize,
    weights: [f64; 3],
    normal: Vec3,
    depth: f64,
}

/// Triangles within reach of the sphere. The sheet is treated as a slab of
/// the material thickness around the mesh mid-surface.
fn sphere_mesh_hits(sim: &Simulation, x: &[Vec3], center: Vec3, radius: f64) -> Vec<SphereHit> {
    let radius = radius + 0.5 * sim.material.thickness;
    let mut hits = Vec::new();
    for (t, tri) in sim.surface.iter().enumerate() {
        let [a, b, c] = *tri;
        let (q, weights) = closest_point_on_triangle(center, x[a], x[b], x[c]);
        let sep = center - q;
        let dist = sep.norm();
        if dist >= radius {
            continue;
        }
        let normal = if dist > 1e-12 {
            sep / dist
        } else {
            let n = (x[b] - x[a]).cross(&(x[c] - x[a]));
            let n = n.try_normalize(0.0).unwrap_or(Vec3::z());
            if n.z < 0.0 { -n } else { n }
        };
        hits.push(SphereHit {
            triangle: t,
            weights,
            normal,
            depth: radius - dist,
        });
    }
    hits
}

pub(crate) fn penalty_forces(sim: &Simulation, state: &SimState) -> ContactForces {
    let g = &sim.scene.ground;
    let (k, d, mu) = (g.contact_stiffness, g.contact_damping, g.friction_coeff);
    let mut kp = vec![Vec3::zeros(); state.positions.len()];
    let mut sphere_force = Vec3::zeros();
    if g.enabled {
        for (i, (x, v)) in state.positions.iter().zip(&state.velocities).enumerate() {
            let depth = g.height - x.z;
            if depth > 0.0 {
                let fn_ = (k * depth - d * v.z).max(0.0);
                kp[i] = Vec3::new(0.0, 0.0, fn_) + friction(Vec3::new(v.x, v.y, 0.0), mu, fn_);
            }
        }
    }
    if let (Some(s), Some(p)) = (&state.sphere, &sim.scene.payload) {
        if g.enabled {
            let depth = g.height + p.radius - s.position.z;
            if depth > 0.0 {
                let v = s.velocity;
                let fn_ = (k * depth - d * v.z).max(0.0);
                sphere_force += Vec3::new(0.0, 0.0, fn_) + friction(Vec3::new(v.x, v.y, 0.0), mu, fn_);
            }
        }
        for hit in sphere_mesh_hits(sim, &state.positions, s.position, p.radius) {
            let tri = sim.surface[hit.triangle];
            let surface_velocity: Vec3 = (0..3)
                .map(|j| state.velocities[tri[j]] * hit.weights[j])
                .sum();
            let rel = s.velocity - surface_velocity;
            let vn = rel.dot(&hit.normal);
            let fn_ = (k * hit.depth - d * vn).max(0.0);
            let f = hit.normal * fn_ + friction(rel - hit.normal * vn, mu, fn_);
            sphere_force += f;
            for j in 0..3 {
                kp[tri[j]] -= f * hit.weights[j];
            }
        }
    }
    ContactForces {
        keypoints: kp,
        sphere: sphere_force,
    }
}

pub(crate) fn penalty_energy(sim: &Simulation, state: &SimState) -> f64 {
    let g = &sim.scene.ground;
    let k = g.contact_stiffness;
    let mut e = 0.0;
    if g.enabled {
        for x in &state.positions {
            let depth = g.height - x.z;
            if depth > 0.0 {
                e += 0.5 * k * depth * depth;
            }
        }
    }
    if let (Some(s), Some(p)) = (&state.sphere, &sim.scene.payload) {
        if g.enabled {
            let depth = g.height + p.radius - s.position.z;
            if depth > 0.0 {
                e += 0.5 * k * depth * depth;
            }
        }
        for hit in sphere_mesh_hits(sim, &state.positions, s.position, p.radius) {
            e += 0.5 * k * hit.depth * hit.depth;
        }
    }
    e
}

/// Apply contact impulses for one substep of length `h`. Velocities are
/// updated in place; positions are untouched.
pub(crate) fn resolve(sim: &Simulation, state: &mut SimState, h: f64) -> Touching {
    let g = sim.scene.ground;
    let (k, d, mu) = (g.contact_stiffness, g.contact_damping, g.friction_coeff);
    let n = state.positions.len();
    let mut touching = Touching {
        keypoints: vec![false; n],
        sphere_ground: false,
        sphere_mesh: false,
    };
    if g.enabled {
        for i in 0..n {
            let depth = g.height - state.positions[i].z;
            if depth <= 0.0 || !sim.dof[i][2] {
                continue;
            }
            touching.keypoints[i] = true;
            let m = sim.mass[i];
            let v = &mut state.velocities[i];
            ground_impulse(v, depth, m, h, k, d, mu, sim.dof[i]);
        }
    }
    let (Some(sphere), Some(payload)) = (state.sphere.as_mut(), sim.scene.payload.as_ref()) else {
        return touching;
    };
    if g.enabled {
        let depth = g.height + payload.radius - sphere.position.z;
        if depth > 0.0 {
            touching.sphere_ground = true;
            ground_impulse(
                &mut sphere.velocity,
                depth,
                payload.mass,
                h,
                k,
                d,
                mu,
                [true; 3],
            );
        }
    }
    let hits = sphere_mesh_hits(sim, &state.positions, sphere.position, payload.radius);
    touching.sphere_mesh = !hits.is_empty();
    let inv_ms = 1.0 / payload.mass;
    for hit in hits {
        let tri = sim.surface[hit.triangle];
        let nrm = hit.normal;
        let inv_mass = |j: usize, dir: &Vec3| -> f64 {
            let node = tri[j];
            let m = sim.mass[node];
            (0..3)
                .map(|c| if sim.dof[node][c] { dir[c] * dir[c] / m } else { 0.0 })
                .sum::<f64>()
        };
        let w: f64 = inv_ms
            + (0..3)
                .map(|j| hit.weights[j] * hit.weights[j] * inv_mass(j, &nrm))
                .sum::<f64>();
        let surface_velocity: Vec3 = (0..3)
            .map(|j| state.velocities[tri[j]] * hit.weights[j])
            .sum();
        let vn = (sphere.velocity - surface_velocity).dot(&nrm);
        let jn = (h * (k * hit.depth - d * vn) / (1.0 + h * d * w)).max(0.0);
        if jn == 0.0 {
            continue;
        }
        apply_pair_impulse(sim, &mut state.velocities, sphere, payload.mass, &tri, &hit.weights, nrm * jn);

        // friction on the updated relative velocity
        let surface_velocity: Vec3 = (0..3)
            .map(|j| state.velocities[tri[j]] * hit.weights[j])
            .sum();
        let rel = sphere.velocity - surface_velocity;
        let vt = rel - nrm * rel.dot(&nrm);
        let speed = vt.norm();
        if speed > 0.0 {
            let dir = vt / speed;
            let wt: f64 = inv_ms
                + (0..3)
                    .map(|j| hit.weights[j] * hit.weights[j] * inv_mass(j, &dir))
                    .sum::<f64>();
            let jt = (mu * jn).min(speed / wt);
            apply_pair_impulse(sim, &mut state.velocities, sphere, payload.mass, &tri, &hit.weights, -dir * jt);
        }
    }
    touching
}

fn apply_pair_impulse(
    sim: &Simulation,
    velocities: &mut [Vec3],
    sphere: &mut super::SphereState,
    sphere_mass: f64,
    tri: &[usize; 3],
    weights: &[f64; 3],
    impulse: Vec3,
) {
    sphere.velocity += impulse / sphere_mass;
    for j in 0..3 {
        let node = tri[j];
        let m = sim.mass[node];
        for c in 0..3 {
            if sim.dof[node][c] {
                velocities[node][c] -= impulse[c] * weights[j] / m;
            }
        }
    }
}

/// Normal impulse with implicit damping, then Coulomb friction that can
/// stop but never reverse the tangential motion. Returns the normal
/// velocity change.
#[allow(clippy::too_many_arguments)]
fn ground_impulse(
    v: &mut Vec3,
    depth: f64,
    mass: f64,
    h: f64,
    k: f64,
    d: f64,
    mu: f64,
    dof: [bool; 3],
) -> f64 {
    let vz = (v.z + h * k * depth / mass) / (1.0 + h * d / mass);
    let dvz = vz - v.z;
    if dvz <= 0.0 {
        return 0.0;
    }
    v.z = vz;
    let normal_impulse = mass * dvz;
    let vt = nalgebra::Vector2::new(if dof[0] { v.x } else { 0.0 }, if dof[1] { v.y } else { 0.0 });
    let speed = vt.norm();
    if speed > 0.0 {
        let dv = (mu * normal_impulse / mass).min(speed);
        let scale = (speed - dv) / speed;
        if dof[0] {
            v.x *= scale;
        }
        if dof[1] {
            v.y *= scale;
        }
    }
    dvz
}
