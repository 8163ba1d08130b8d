//! Membrane and dihedral-spring forces.

use nalgebra::{Matrix2, Matrix3x2};

use super::Simulation;
use crate::geometry::Vec3;

/// Green strain and deformation gradient of one element.
#[inline]
fn strain(dm_inv: &Matrix2<f64>, x0: Vec3, x1: Vec3, x2: Vec3) -> (Matrix3x2<f64>, Matrix2<f64>) {
    let ds = Matrix3x2::from_columns(&[x1 - x0, x2 - x0]);
    let f = ds * dm_inv;
    let e = 0.5 * (f.transpose() * f - Matrix2::identity());
    (f, e)
}

pub(crate) fn membrane_energy(sim: &Simulation, x: &[Vec3]) -> f64 {
    let t = sim.material.thickness;
    sim.membranes
        .iter()
        .map(|m| {
            let [a, b, c] = m.nodes;
            let (_, e) = strain(&m.dm_inv, x[a], x[b], x[c]);
            let tr = e.trace();
            let density = sim.mu * e.norm_squared() + 0.5 * sim.lambda * tr * tr;
            t * m.rest_area * density
        })
        .sum()
}

pub(crate) fn add_membrane_forces(sim: &Simulation, x: &[Vec3], out: &mut [Vec3]) {
    let t = sim.material.thickness;
    for m in &sim.membranes {
        let [a, b, c] = m.nodes;
        let (f, e) = strain(&m.dm_inv, x[a], x[b], x[c]);
        let s = Matrix2::identity() * (sim.lambda * e.trace()) + e * (2.0 * sim.mu);
        let p = f * s;
        let h = p * m.dm_inv.transpose() * (-t * m.rest_area);
        let f1 = h.column(0).into_owned();
        let f2 = h.column(1).into_owned();
        out[b] += f1;
        out[c] += f2;
        out[a] -= f1 + f2;
    }
}

/// Signed dihedral angle across edge `x0 x1`, with `x2` the apex of the
/// first wing and `x3` of the second. Zero when flat, positive when the
/// wings fold towards the first wing's normal.
pub fn dihedral_angle(x0: Vec3, x1: Vec3, x2: Vec3, x3: Vec3) -> f64 {
    let e = x1 - x0;
    let na = e.cross(&(x2 - x0));
    let nb = (x3 - x0).cross(&e);
    let len = e.norm();
    if len == 0.0 {
        return 0.0;
    }
    na.cross(&nb).dot(&(e / len)).atan2(na.dot(&nb))
}

/// Gradient of [`dihedral_angle`] with respect to the four points.
pub fn dihedral_gradient(x0: Vec3, x1: Vec3, x2: Vec3, x3: Vec3) -> [Vec3; 4] {
    let e = x1 - x0;
    let len = e.norm();
    let na = e.cross(&(x2 - x0));
    let nb = (x3 - x0).cross(&e);
    let na2 = na.norm_squared();
    let nb2 = nb.norm_squared();
    if len == 0.0 || na2 == 0.0 || nb2 == 0.0 {
        return [Vec3::zeros(); 4];
    }
    let ua = na / na2;
    let ub = nb / nb2;
    let g2 = -ua * len;
    let g3 = -ub * len;
    let s2 = (x2 - x0).dot(&e) / (len * len);
    let s3 = (x3 - x0).dot(&e) / (len * len);
    let g1 = -(g2 * s2 + g3 * s3);
    let g0 = -(g1 + g2 + g3);
    [g0, g1, g2, g3]
}

pub(crate) fn hinge_energy(sim: &Simulation, x: &[Vec3]) -> f64 {
    sim.hinges
        .iter()
        .map(|h| {
            let [a, b, c, d] = h.nodes;
            let theta = dihedral_angle(x[a], x[b], x[c], x[d]) - h.rest_angle;
            0.5 * h.stiffness * theta * theta
        })
        .sum()
}

pub(crate) fn add_hinge_forces(sim: &Simulation, x: &[Vec3], out: &mut [Vec3]) {
    for h in &sim.hinges {
        let [a, b, c, d] = h.nodes;
        let theta = dihedral_angle(x[a], x[b], x[c], x[d]) - h.rest_angle;
        if theta == 0.0 {
            continue;
        }
        let grad = dihedral_gradient(x[a], x[b], x[c], x[d]);
        let k = -h.stiffness * theta;
        for (node, g) in h.nodes.iter().zip(grad) {
            out[*node] += g * k;
        }
    }
}
