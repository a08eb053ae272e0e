use nalgebra::{DMatrix, Matrix3, SMatrix, SVector};

use super::{lame_parameters, polar_rotation, FemMaterial, Material, SoftBody, SoftBodyError};
use crate::mesh::{Point, VolumetricLattice};

type Mat12 = SMatrix<f64, 12, 12>;
type Vec12 = SVector<f64, 12>;

/// Per-tetrahedron rest data for the corotational model.
#[derive(Debug, Clone)]
pub struct TetRest {
    pub nodes: [usize; 4],
    pub dm_inv: Matrix3<f64>,
    pub volume: f64,
    /// Linear stiffness at rest, node-major (x0 y0 z0 x1 ...).
    pub stiffness: Mat12,
    /// Stiffness-proportional damping time, s.
    pub damping_time: f64,
    mu: f64,
    lambda: f64,
}

pub(super) fn rest_elements(
    lattice: &VolumetricLattice,
    material: &FemMaterial,
) -> Result<Vec<TetRest>, SoftBodyError> {
    if lattice.tetrahedra.is_empty() {
        return Err(SoftBodyError::NoTetrahedra);
    }
    let (mu, lambda) = lame_parameters(material)?;
    let rest_volume = lattice.rest_volume();
    let density = lattice.total_mass() / rest_volume;

    lattice
        .tetrahedra
        .iter()
        .enumerate()
        .map(|(tet, &nodes)| {
            let x = nodes.map(|i| lattice.nodes[i]);
            let dm = shape_matrix(&x);
            let volume = dm.determinant() / 6.0;
            if !(volume > 0.0) {
                return Err(SoftBodyError::ElementInversion { tet, volume });
            }
            let dm_inv = dm
                .try_inverse()
                .ok_or(SoftBodyError::ElementInversion { tet, volume })?;
            let mut rest = TetRest {
                nodes,
                dm_inv,
                volume,
                stiffness: Mat12::zeros(),
                damping_time: 0.0,
                mu,
                lambda,
            };
            rest.stiffness = probe_linear_stiffness(&rest);
            let k_scale = (0..12).map(|i| rest.stiffness[(i, i)]).fold(0.0, f64::max);
            let mass = density * volume;
            rest.damping_time = if k_scale > 0.0 {
                material.damping_coefficient * (mass / k_scale).sqrt()
            } else {
                0.0
            };
            Ok(rest)
        })
        .collect()
}

fn shape_matrix(x: &[Point; 4]) -> Matrix3<f64> {
    Matrix3::from_columns(&[x[1] - x[0], x[2] - x[0], x[3] - x[0]])
}

/// Nodal forces `-V P Dm^-T` for a first Piola stress `p`.
fn nodal_forces(rest: &TetRest, p: &Matrix3<f64>) -> [Point; 4] {
    let h = -p * rest.dm_inv.transpose() * rest.volume;
    let f1: Point = h.column(0).into();
    let f2: Point = h.column(1).into();
    let f3: Point = h.column(2).into();
    [-(f1 + f2 + f3), f1, f2, f3]
}

/// Small-strain forces for nodal displacements `u`.
fn linear_forces(rest: &TetRest, u: &[Point; 4]) -> [Point; 4] {
    let g = shape_matrix(u) * rest.dm_inv;
    let strain = (g + g.transpose()) * 0.5;
    let p = strain * (2.0 * rest.mu) + Matrix3::identity() * (rest.lambda * strain.trace());
    nodal_forces(rest, &p)
}

/// Columns of the rest stiffness from unit nodal displacements; the
/// small-strain force is linear so each probe is exact.
fn probe_linear_stiffness(rest: &TetRest) -> Mat12 {
    let mut k = Mat12::zeros();
    for col in 0..12 {
        let mut u = [Point::zeros(); 4];
        u[col / 3][col % 3] = 1.0;
        let f = linear_forces(rest, &u);
        for (n, fv) in f.iter().enumerate() {
            for a in 0..3 {
                k[(3 * n + a, col)] = -fv[a];
            }
        }
    }
    k
}

struct Deformed {
    f: Matrix3<f64>,
    r: Matrix3<f64>,
}

fn deform(body: &SoftBody, tet: usize, rest: &TetRest) -> Result<Deformed, SoftBodyError> {
    let x = rest.nodes.map(|i| body.positions[i]);
    let ds = shape_matrix(&x);
    let volume = ds.determinant() / 6.0;
    if !(volume > 0.0) {
        return Err(SoftBodyError::ElementInversion { tet, volume });
    }
    let f = ds * rest.dm_inv;
    Ok(Deformed {
        r: polar_rotation(&f),
        f,
    })
}

fn corotated_stress(rest: &TetRest, d: &Deformed) -> Matrix3<f64> {
    let i = Matrix3::identity();
    (d.f - d.r) * (2.0 * rest.mu) + d.r * (rest.lambda * (d.r.transpose() * d.f - i).trace())
}

fn fem_material(body: &SoftBody) -> Result<(), SoftBodyError> {
    match body.material() {
        Material::Fem(_) => Ok(()),
        Material::Spring(_) => Err(SoftBodyError::WrongMaterial { expected: "fem" }),
    }
}

/// Rotated rest stiffness `R K0 R^T` of one element.
fn rotated_stiffness(rest: &TetRest, r: &Matrix3<f64>) -> Mat12 {
    let mut big_r = Mat12::zeros();
    for n in 0..4 {
        big_r.fixed_view_mut::<3, 3>(3 * n, 3 * n).copy_from(r);
    }
    big_r * rest.stiffness * big_r.transpose()
}

fn element_velocity(body: &SoftBody, rest: &TetRest) -> Vec12 {
    let mut v = Vec12::zeros();
    for (n, &i) in rest.nodes.iter().enumerate() {
        v.fixed_rows_mut::<3>(3 * n).copy_from(&body.velocities[i]);
    }
    v
}

fn accumulate(body: &SoftBody, with_damping: bool) -> Result<Vec<Point>, SoftBodyError> {
    fem_material(body)?;
    let mut forces = vec![Point::zeros(); body.node_count()];
    for (tet, rest) in body.tet_rest().iter().enumerate() {
        let d = deform(body, tet, rest)?;
        let f = nodal_forces(rest, &corotated_stress(rest, &d));
        for (n, &i) in rest.nodes.iter().enumerate() {
            forces[i] += f[n];
        }
        if with_damping && rest.damping_time > 0.0 {
            let fd = -(rotated_stiffness(rest, &d.r) * element_velocity(body, rest)) * rest.damping_time;
            for (n, &i) in rest.nodes.iter().enumerate() {
                forces[i] += Point::new(fd[3 * n], fd[3 * n + 1], fd[3 * n + 2]);
            }
        }
    }
    Ok(forces)
}

/// Corotational linear-elastic forces plus stiffness-proportional damping.
pub fn fem_forces(body: &SoftBody) -> Result<Vec<Point>, SoftBodyError> {
    accumulate(body, true)
}

pub fn fem_elastic_forces(body: &SoftBody) -> Result<Vec<Point>, SoftBodyError> {
    accumulate(body, false)
}

pub(super) fn strain_energy(body: &SoftBody) -> Result<f64, SoftBodyError> {
    fem_material(body)?;
    let mut total = 0.0;
    for (tet, rest) in body.tet_rest().iter().enumerate() {
        let d = deform(body, tet, rest)?;
        let dev = (d.f - d.r).norm_squared();
        let tr = (d.r.transpose() * d.f - Matrix3::identity()).trace();
        total += rest.volume * (rest.mu * dev + 0.5 * rest.lambda * tr * tr);
    }
    Ok(total)
}

fn scatter(m: &mut DMatrix<f64>, rest: &TetRest, block: &Mat12) {
    for (a, &i) in rest.nodes.iter().enumerate() {
        for (b, &j) in rest.nodes.iter().enumerate() {
            for r in 0..3 {
                for s in 0..3 {
                    m[(3 * i + r, 3 * j + s)] += block[(3 * a + r, 3 * b + s)];
                }
            }
        }
    }
}

pub(super) fn add_damping_matrix(body: &SoftBody, c: &mut DMatrix<f64>) -> Result<(), SoftBodyError> {
    fem_material(body)?;
    for (tet, rest) in body.tet_rest().iter().enumerate() {
        if rest.damping_time <= 0.0 {
            continue;
        }
        let d = deform(body, tet, rest)?;
        scatter(c, rest, &(rotated_stiffness(rest, &d.r) * rest.damping_time));
    }
    Ok(())
}

/// Assembled rest stiffness and rest damping of a continuum body.
pub(super) fn rest_matrices(body: &SoftBody) -> Result<(DMatrix<f64>, DMatrix<f64>), SoftBodyError> {
    fem_material(body)?;
    let n = 3 * body.node_count();
    let mut k = DMatrix::zeros(n, n);
    let mut c = DMatrix::zeros(n, n);
    for rest in body.tet_rest() {
        scatter(&mut k, rest, &rest.stiffness);
        scatter(&mut c, rest, &(rest.stiffness * rest.damping_time));
    }
    Ok((k, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{box_mesh, build_lattice, tetrahedron_mesh};
    use nalgebra::{Rotation3, Unit, Vector3};
    use proptest::prelude::*;

    fn body(young_kpa: f64, mesh: &crate::mesh::SurfaceMesh) -> SoftBody {
        let lattice = build_lattice(mesh, 1000.0).unwrap();
        SoftBody::new(lattice, Material::Fem(FemMaterial::from_kpa(young_kpa, 0.3).unwrap())).unwrap()
    }

    fn single_tet(young_kpa: f64) -> SoftBody {
        let lattice = VolumetricLattice {
            nodes: vec![
                Point::zeros(),
                Point::new(1.0, 0.0, 0.0),
                Point::new(0.0, 1.0, 0.0),
                Point::new(0.0, 0.0, 1.0),
            ],
            edges: vec![],
            tetrahedra: vec![[0, 1, 2, 3]],
            node_masses: vec![1.0; 4],
            surface_faces: vec![],
        };
        SoftBody::new(lattice, Material::Fem(FemMaterial::from_kpa(young_kpa, 0.3).unwrap())).unwrap()
    }

    #[test]
    fn rest_state_is_force_free() {
        let b = body(57.0, &box_mesh(Point::zeros(), Point::repeat(1.0)));
        for f in fem_forces(&b).unwrap() {
            assert!(f.norm() < 1e-9);
        }
        assert!(strain_energy(&b).unwrap().abs() < 1e-12);
    }

    #[test]
    fn rigid_rotation_produces_no_elastic_force() {
        let mut b = single_tet(57.0);
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::new(0.3, -1.0, 0.5)), 1.2);
        b.transform_state(|p| rot * p);
        let f = fem_elastic_forces(&b).unwrap();
        // Scale: force from a 1% stretch of the same element.
        let mut probe = single_tet(57.0);
        probe.positions[1].x *= 1.01;
        let scale: f64 = fem_elastic_forces(&probe).unwrap().iter().map(|v| v.norm()).sum();
        let got: f64 = f.iter().map(|v| v.norm()).sum();
        assert!(got <= 1e-6 * scale, "{got} vs {scale}");
    }

    #[test]
    fn inverted_element_is_reported() {
        let mut b = single_tet(57.0);
        b.positions[3].z = -0.5;
        assert!(matches!(
            fem_forces(&b),
            Err(SoftBodyError::ElementInversion { tet: 0, .. })
        ));
    }

    #[test]
    fn rest_stiffness_is_symmetric_with_rigid_null_space() {
        let b = single_tet(100.0);
        let k = b.tet_rest()[0].stiffness;
        assert!((k - k.transpose()).norm() < 1e-6 * k.norm());
        let mut shift = Vec12::zeros();
        for n in 0..4 {
            shift[3 * n + 1] = 1.0;
        }
        assert!((k * shift).norm() < 1e-6 * k.norm());
    }

    #[test]
    fn damping_matrix_matches_damping_forces() {
        let mut b = body(110.0, &tetrahedron_mesh());
        for (k, v) in b.velocities.iter_mut().enumerate() {
            *v = Point::new(0.1 * k as f64, -0.05, (k as f64).cos());
        }
        b.positions[2] += Point::new(0.01, 0.02, -0.01);
        let total = fem_forces(&b).unwrap();
        let elastic = fem_elastic_forces(&b).unwrap();
        let mut c = DMatrix::zeros(3 * b.node_count(), 3 * b.node_count());
        add_damping_matrix(&b, &mut c).unwrap();
        let v = nalgebra::DVector::from_iterator(3 * b.node_count(), b.velocities.iter().flat_map(|v| [v.x, v.y, v.z]));
        let cv = c * v;
        for i in 0..b.node_count() {
            for a in 0..3 {
                let damping = total[i][a] - elastic[i][a];
                assert!((damping + cv[3 * i + a]).abs() < 1e-6 * (1.0 + cv.amax()));
            }
        }
    }

    #[test]
    fn damping_time_follows_coefficient() {
        let b = body(57.0, &tetrahedron_mesh());
        let t0 = b.tet_rest()[0].damping_time;
        assert!(t0 > 0.0);
        let mut stiffer = b.clone();
        stiffer
            .set_material(Material::Fem(FemMaterial::new(57e3, 0.3, 0.2).unwrap()))
            .unwrap();
        assert!((stiffer.tet_rest()[0].damping_time / t0 - 2.0).abs() < 1e-12);
    }

    /// Small-strain FEM assembled from shape-function gradients and the
    /// isotropic elasticity matrix; returns the global stiffness.
    fn oracle_stiffness(lattice: &VolumetricLattice, e: f64, nu: f64) -> DMatrix<f64> {
        let n = lattice.node_count();
        let c = e / ((1.0 + nu) * (1.0 - 2.0 * nu));
        let mut d = SMatrix::<f64, 6, 6>::zeros();
        for i in 0..3 {
            for j in 0..3 {
                d[(i, j)] = if i == j { c * (1.0 - nu) } else { c * nu };
            }
            d[(i + 3, i + 3)] = c * (1.0 - 2.0 * nu) / 2.0;
        }
        let mut k = DMatrix::zeros(3 * n, 3 * n);
        for tet in &lattice.tetrahedra {
            let mut a = nalgebra::Matrix4::zeros();
            for (r, &i) in tet.iter().enumerate() {
                let p = lattice.nodes[i];
                a.set_row(r, &nalgebra::RowVector4::new(1.0, p.x, p.y, p.z));
            }
            let vol = a.determinant().abs() / 6.0;
            let coef = a.try_inverse().unwrap();
            // row 1..3 of coef column r: gradient of shape function r
            let mut b = SMatrix::<f64, 6, 12>::zeros();
            for r in 0..4 {
                let (gx, gy, gz) = (coef[(1, r)], coef[(2, r)], coef[(3, r)]);
                b[(0, 3 * r)] = gx;
                b[(1, 3 * r + 1)] = gy;
                b[(2, 3 * r + 2)] = gz;
                b[(3, 3 * r)] = gy;
                b[(3, 3 * r + 1)] = gx;
                b[(4, 3 * r + 1)] = gz;
                b[(4, 3 * r + 2)] = gy;
                b[(5, 3 * r)] = gz;
                b[(5, 3 * r + 2)] = gx;
            }
            let ke = b.transpose() * d * b * vol;
            for (a_, &i) in tet.iter().enumerate() {
                for (b_, &j) in tet.iter().enumerate() {
                    for r in 0..3 {
                        for s in 0..3 {
                            k[(3 * i + r, 3 * j + s)] += ke[(3 * a_ + r, 3 * b_ + s)];
                        }
                    }
                }
            }
        }
        k
    }

    #[test]
    fn uniaxial_stretch_matches_hand_assembled_oracle() {
        let lattice = build_lattice(&box_mesh(Point::zeros(), Point::repeat(1.0)), 1000.0).unwrap();
        let n = lattice.node_count();
        let k = oracle_stiffness(&lattice, 57e3, 0.3);
        let strain = 0.01;
        // Prescribed: z on both faces; x, y at the origin corner; y at (1,0,0).
        let mut prescribed = vec![None; 3 * n];
        for (i, p) in lattice.nodes.iter().enumerate() {
            if p.z == 0.0 {
                prescribed[3 * i + 2] = Some(0.0);
            } else if p.z == 1.0 {
                prescribed[3 * i + 2] = Some(strain);
            }
            if p.norm() == 0.0 {
                prescribed[3 * i] = Some(0.0);
                prescribed[3 * i + 1] = Some(0.0);
            }
            if *p == Point::new(1.0, 0.0, 0.0) {
                prescribed[3 * i + 1] = Some(0.0);
            }
        }
        let free: Vec<usize> = (0..3 * n).filter(|&d| prescribed[d].is_none()).collect();
        let fixed: Vec<usize> = (0..3 * n).filter(|&d| prescribed[d].is_some()).collect();
        let kff = DMatrix::from_fn(free.len(), free.len(), |r, s| k[(free[r], free[s])]);
        let kfp = DMatrix::from_fn(free.len(), fixed.len(), |r, s| k[(free[r], fixed[s])]);
        let up = nalgebra::DVector::from_iterator(fixed.len(), fixed.iter().map(|&d| prescribed[d].unwrap()));
        let uf = kff.lu().solve(&(-(kfp * &up))).unwrap();
        let mut u = nalgebra::DVector::zeros(3 * n);
        for (r, &d) in free.iter().enumerate() {
            u[d] = uf[r];
        }
        for (r, &d) in fixed.iter().enumerate() {
            u[d] = up[r];
        }
        let reaction = &k * &u;
        let top: Vec<usize> = (0..n).filter(|&i| lattice.nodes[i].z == 1.0).collect();
        let oracle_pull: f64 = top.iter().map(|&i| reaction[3 * i + 2]).sum();
        // sigma = E * strain on a unit area
        assert!((oracle_pull - 570.0).abs() < 0.05 * 570.0, "oracle {oracle_pull}");

        let mut b = SoftBody::new(
            lattice.clone(),
            Material::Fem(FemMaterial::from_kpa(57.0, 0.3).unwrap()),
        )
        .unwrap();
        for i in 0..n {
            b.positions[i] += Point::new(u[3 * i], u[3 * i + 1], u[3 * i + 2]);
        }
        let f = fem_elastic_forces(&b).unwrap();
        let pull: f64 = -top.iter().map(|&i| f[i].z).sum::<f64>();
        assert!(
            (pull - oracle_pull).abs() < 0.05 * oracle_pull,
            "{pull} vs {oracle_pull}"
        );
    }

    proptest! {
        #[test]
        fn forces_balance_and_are_translation_invariant(
            seed in 0u64..500, tx in -2.0f64..2.0, ty in -2.0f64..2.0, tz in -2.0f64..2.0,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut b = body(57.0, &box_mesh(Point::zeros(), Point::new(0.25, 0.1, 0.07)));
            for p in &mut b.positions {
                *p += Point::new(rng.gen_range(-0.005..0.005), rng.gen_range(-0.005..0.005), rng.gen_range(-0.005..0.005));
            }
            for v in &mut b.velocities {
                *v = Point::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
            let f = fem_forces(&b).unwrap();
            let sum: Point = f.iter().sum();
            let scale: f64 = f.iter().map(|v| v.norm()).sum();
            prop_assert!(sum.norm() <= 1e-9 * scale);

            // zero net torque about the centroid for the elastic part
            let fe = fem_elastic_forces(&b).unwrap();
            let c: Point = b.positions.iter().sum::<Point>() / b.node_count() as f64;
            let torque: Point = b.positions.iter().zip(&fe).map(|(p, f)| (p - c).cross(f)).sum();
            let tscale: f64 = b.positions.iter().zip(&fe).map(|(p, f)| (p - c).norm() * f.norm()).sum();
            prop_assert!(torque.norm() <= 1e-9 * tscale.max(1e-300));

            let t = Point::new(tx, ty, tz);
            let mut moved = b.clone();
            moved.transform_state(|p| p + t);
            let g = fem_forces(&moved).unwrap();
            for (a, bb) in f.iter().zip(&g) {
                prop_assert!((a - bb).norm() <= 1e-6 * (1.0 + a.norm()));
            }
        }

        #[test]
        fn elastic_forces_are_rotation_invariant(seed in 0u64..500, angle in 0.0f64..6.2) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut b = body(110.0, &box_mesh(Point::zeros(), Point::new(0.25, 0.1, 0.07)));
            for p in &mut b.positions {
                *p += Point::new(rng.gen_range(-0.005..0.005), rng.gen_range(-0.005..0.005), rng.gen_range(-0.005..0.005));
            }
            let f = fem_elastic_forces(&b).unwrap();
            let rot = Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::new(rng.gen_range(-1.0..1.0), 1.0, 0.2)), angle);
            let mut turned = b.clone();
            turned.transform_state(|p| rot * p);
            let g = fem_elastic_forces(&turned).unwrap();
            let scale: f64 = f.iter().map(|v| v.norm()).sum::<f64>();
            let err: f64 = f.iter().zip(&g).map(|(a, bb)| (rot * a - bb).norm()).sum();
            prop_assert!(err <= 1e-6 * scale);
        }

        #[test]
        fn young_modulus_scales_static_forces(s in 0.1f64..50.0, seed in 0u64..100) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut b = body(57.0, &tetrahedron_mesh());
            for p in &mut b.positions {
                *p += Point::new(rng.gen_range(-0.02..0.02), rng.gen_range(-0.02..0.02), rng.gen_range(-0.02..0.02));
            }
            let base = fem_elastic_forces(&b).unwrap();
            b.set_material(Material::Fem(FemMaterial::new(57e3 * s, 0.3, 0.1).unwrap())).unwrap();
            let scaled = fem_elastic_forces(&b).unwrap();
            for (a, c) in base.iter().zip(&scaled) {
                prop_assert!((a * s - c).norm() <= 1e-9 * c.norm().max(1e-9));
            }
        }
    }
}
