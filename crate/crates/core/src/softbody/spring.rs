use nalgebra::{DMatrix, Matrix3};

use super::{Material, SoftBody, SoftBodyError};
use crate::mesh::Point;

const COINCIDENT: f64 = 1e-12;

fn spring_material(body: &SoftBody) -> Result<super::SpringMaterial, SoftBodyError> {
    match body.material() {
        Material::Spring(m) => Ok(*m),
        Material::Fem(_) => Err(SoftBodyError::WrongMaterial { expected: "spring" }),
    }
}

fn accumulate(body: &SoftBody, damping: f64) -> Result<Vec<Point>, SoftBodyError> {
    let m = spring_material(body)?;
    let mut forces = vec![Point::zeros(); body.node_count()];
    for (edge, &(i, j, rest)) in body.lattice().edges.iter().enumerate() {
        let d = body.positions[i] - body.positions[j];
        let len = d.norm();
        if len < COINCIDENT {
            return Err(SoftBodyError::SingularEdge { edge, i, j });
        }
        let u = d / len;
        let closing = (body.velocities[i] - body.velocities[j]).dot(&u);
        let f = u * (-m.stiffness * (len - rest) - damping * closing);
        forces[i] += f;
        forces[j] -= f;
    }
    Ok(forces)
}

/// Hooke spring plus dashpot along every lattice edge.
pub fn spring_forces(body: &SoftBody) -> Result<Vec<Point>, SoftBodyError> {
    let m = spring_material(body)?;
    accumulate(body, m.damping)
}

pub fn spring_elastic_forces(body: &SoftBody) -> Result<Vec<Point>, SoftBodyError> {
    accumulate(body, 0.0)
}

pub(super) fn add_damping_matrix(body: &SoftBody, damping: f64, c: &mut DMatrix<f64>) -> Result<(), SoftBodyError> {
    if damping == 0.0 {
        return Ok(());
    }
    for (edge, &(i, j, _)) in body.lattice().edges.iter().enumerate() {
        let d = body.positions[i] - body.positions[j];
        let len = d.norm();
        if len < COINCIDENT {
            return Err(SoftBodyError::SingularEdge { edge, i, j });
        }
        let u = d / len;
        let block: Matrix3<f64> = u * u.transpose() * damping;
        add_pair_block(c, i, j, &block);
    }
    Ok(())
}

/// Rest stiffness and damping matrices (edges at rest length carry no
/// tension, so there is no geometric term).
pub(super) fn rest_matrices(body: &SoftBody) -> Result<(DMatrix<f64>, DMatrix<f64>), SoftBodyError> {
    let m = spring_material(body)?;
    let n = 3 * body.node_count();
    let mut k = DMatrix::zeros(n, n);
    let mut c = DMatrix::zeros(n, n);
    let rest = body.rest_positions();
    for (edge, &(i, j, _)) in body.lattice().edges.iter().enumerate() {
        let d = rest[i] - rest[j];
        let len = d.norm();
        if len < COINCIDENT {
            return Err(SoftBodyError::SingularEdge { edge, i, j });
        }
        let u = d / len;
        let uu: Matrix3<f64> = u * u.transpose();
        add_pair_block(&mut k, i, j, &(uu * m.stiffness));
        add_pair_block(&mut c, i, j, &(uu * m.damping));
    }
    Ok((k, c))
}

/// Adds `block` to (i,i), (j,j) and `-block` to (i,j), (j,i).
pub(crate) fn add_pair_block(m: &mut DMatrix<f64>, i: usize, j: usize, block: &Matrix3<f64>) {
    for r in 0..3 {
        for s in 0..3 {
            let v = block[(r, s)];
            m[(3 * i + r, 3 * i + s)] += v;
            m[(3 * j + r, 3 * j + s)] += v;
            m[(3 * i + r, 3 * j + s)] -= v;
            m[(3 * j + r, 3 * i + s)] -= v;
        }
    }
}
