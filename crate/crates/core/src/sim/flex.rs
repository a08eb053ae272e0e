use nalgebra::{DMatrix, DVector};

use crate::contact::{point_contact, GroundPlane};
use crate::mesh::Point;
use crate::softbody::{SoftBody, SoftBodyError};

/// Advances the free nodes of `body` by one step.
///
/// Elastic and gravity forces are explicit. Internal damping, contact damping,
/// friction and the contact spring are taken at the end-of-step velocity, so
/// the update solves `(M + dt C + dt² K_c) v' = M v + dt f`. Pinned nodes must
/// already carry their end-of-step velocity; their positions are left alone.
pub fn step_soft_body(
    body: &mut SoftBody,
    plane: Option<&GroundPlane>,
    gravity: f64,
    dt: f64,
) -> Result<(), SoftBodyError> {
    let n = body.node_count();
    let free: Vec<usize> = (0..n).filter(|&i| !body.is_pinned(i)).collect();
    if free.is_empty() {
        return Ok(());
    }
    let elastic = body.elastic_forces()?;
    let damping = body.damping_matrix()?;
    let masses = body.masses();
    let mut slot = vec![usize::MAX; n];
    for (k, &i) in free.iter().enumerate() {
        slot[i] = k;
    }

    let size = 3 * free.len();
    let mut a = DMatrix::<f64>::zeros(size, size);
    let mut b = DVector::<f64>::zeros(size);
    for (k, &i) in free.iter().enumerate() {
        let v = body.velocities[i];
        for d in 0..3 {
            a[(3 * k + d, 3 * k + d)] += masses[i];
            b[3 * k + d] = masses[i] * v[d] + dt * elastic[i][d];
        }
        b[3 * k + 2] -= dt * masses[i] * gravity;
        for j in 0..n {
            for d in 0..3 {
                for e in 0..3 {
                    let c = damping[(3 * i + d, 3 * j + e)];
                    if c == 0.0 {
                        continue;
                    }
                    if slot[j] == usize::MAX {
                        b[3 * k + d] -= dt * c * body.velocities[j][e];
                    } else {
                        a[(3 * k + d, 3 * slot[j] + e)] += dt * c;
                    }
                }
            }
        }
        if let Some(c) = plane.and_then(|p| point_contact(&body.positions[i], &v, p).map(|c| (p, c))) {
            let (plane, c) = c;
            b[3 * k + 2] += dt * c.spring;
            a[(3 * k + 2, 3 * k + 2)] += dt * (c.normal_damping + dt * plane.contact_stiffness);
            a[(3 * k, 3 * k)] += dt * c.friction_damping;
            a[(3 * k + 1, 3 * k + 1)] += dt * c.friction_damping;
        }
    }

    let solution = match a.clone().cholesky() {
        Some(ch) => ch.solve(&b),
        None => a
            .lu()
            .solve(&b)
            .ok_or_else(|| SoftBodyError::StateMismatch("singular velocity system".into()))?,
    };
    for (k, &i) in free.iter().enumerate() {
        let v = Point::new(solution[3 * k], solution[3 * k + 1], solution[3 * k + 2]);
        body.velocities[i] = v;
        body.positions[i] += dt * v;
    }
    Ok(())
}
