//! Deformable-body force models: edge springs with dashpots and a
//! corotational linear tetrahedral continuum, plus the calibration that maps
//! one onto the other.

mod calibrate;
mod fem;
mod material;
mod spring;

use nalgebra::{DMatrix, Matrix3};
use thiserror::Error;

use crate::mesh::{Point, VolumetricLattice};

pub use calibrate::{calibrate, calibrate_with, static_deflection, Calibration, CalibrationSetup, LoadCase};
pub use fem::{fem_elastic_forces, fem_forces, TetRest};
pub use material::{
    lame_parameters, FemMaterial, Material, MaterialLibrary, MaterialPreset, SpringMaterial, TissueRange,
    DEFAULT_FEM_DAMPING,
};
pub use spring::{spring_elastic_forces, spring_forces};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SoftBodyError {
    #[error("poisson ratio 0.5 is incompressible; Lamé lambda is unbounded")]
    Incompressible,
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
    #[error("edge {edge} ({i}, {j}) has coincident endpoints")]
    SingularEdge { edge: usize, i: usize, j: usize },
    #[error("tetrahedron {tet} is inverted (signed volume {volume:e})")]
    ElementInversion { tet: usize, volume: f64 },
    #[error("operation requires {expected} material")]
    WrongMaterial { expected: &'static str },
    #[error("lattice has no tetrahedra")]
    NoTetrahedra,
    #[error("node index {0} out of range")]
    BadNode(usize),
    #[error("state length mismatch: {0}")]
    StateMismatch(String),
    #[error("stiffness matrix is singular; the fixed nodes do not restrain the body")]
    SingularStiffness,
    #[error("calibration failed: best relative residual {residual:.4}")]
    CalibrationFailure { residual: f64 },
}

/// A deformable body: rest lattice, current state, material, pinned nodes.
#[derive(Debug, Clone)]
pub struct SoftBody {
    lattice: VolumetricLattice,
    pub positions: Vec<Point>,
    pub velocities: Vec<Point>,
    material: Material,
    pinned: Vec<bool>,
    tets: Vec<TetRest>,
}

impl SoftBody {
    /// Body at rest in its lattice configuration.
    pub fn new(lattice: VolumetricLattice, material: Material) -> Result<Self, SoftBodyError> {
        material.validate()?;
        let n = lattice.node_count();
        let mut body = Self {
            positions: lattice.nodes.clone(),
            velocities: vec![Point::zeros(); n],
            pinned: vec![false; n],
            tets: Vec::new(),
            lattice,
            material,
        };
        body.rebuild_tets()?;
        Ok(body)
    }

    fn rebuild_tets(&mut self) -> Result<(), SoftBodyError> {
        self.tets = match self.material {
            Material::Fem(m) => fem::rest_elements(&self.lattice, &m)?,
            Material::Spring(_) => Vec::new(),
        };
        Ok(())
    }

    pub fn lattice(&self) -> &VolumetricLattice {
        &self.lattice
    }

    pub fn rest_positions(&self) -> &[Point] {
        &self.lattice.nodes
    }

    pub fn material(&self) -> &Material {
        &self.material
    }

    pub fn set_material(&mut self, material: Material) -> Result<(), SoftBodyError> {
        material.validate()?;
        self.material = material;
        self.rebuild_tets()
    }

    pub fn node_count(&self) -> usize {
        self.positions.len()
    }

    pub fn masses(&self) -> &[f64] {
        &self.lattice.node_masses
    }

    pub(crate) fn tet_rest(&self) -> &[TetRest] {
        &self.tets
    }

    pub fn set_pinned(&mut self, nodes: &[usize]) -> Result<(), SoftBodyError> {
        let mut mask = vec![false; self.node_count()];
        for &i in nodes {
            *mask.get_mut(i).ok_or(SoftBodyError::BadNode(i))? = true;
        }
        self.pinned = mask;
        Ok(())
    }

    pub fn is_pinned(&self, node: usize) -> bool {
        self.pinned[node]
    }

    pub fn pinned_nodes(&self) -> Vec<usize> {
        (0..self.node_count()).filter(|&i| self.pinned[i]).collect()
    }

    pub fn check_state(&self) -> Result<(), SoftBodyError> {
        let n = self.lattice.node_count();
        if self.positions.len() != n || self.velocities.len() != n {
            return Err(SoftBodyError::StateMismatch(format!(
                "{} nodes, {} positions, {} velocities",
                n,
                self.positions.len(),
                self.velocities.len()
            )));
        }
        Ok(())
    }

    /// Rigidly moves the whole body (rest configuration is untouched).
    pub fn transform_state(&mut self, f: impl Fn(&Point) -> Point) {
        for p in &mut self.positions {
            *p = f(p);
        }
    }

    /// Internal forces including damping.
    pub fn internal_forces(&self) -> Result<Vec<Point>, SoftBodyError> {
        match self.material {
            Material::Spring(_) => spring_forces(self),
            Material::Fem(_) => fem_forces(self),
        }
    }

    /// Internal forces without the velocity-proportional part.
    pub fn elastic_forces(&self) -> Result<Vec<Point>, SoftBodyError> {
        match self.material {
            Material::Spring(_) => spring_elastic_forces(self),
            Material::Fem(_) => fem_elastic_forces(self),
        }
    }

    /// Global damping matrix (3n × 3n) such that damping forces are `-C v`,
    /// linearised at the current configuration.
    pub fn damping_matrix(&self) -> Result<DMatrix<f64>, SoftBodyError> {
        let n = self.node_count();
        let mut c = DMatrix::zeros(3 * n, 3 * n);
        match self.material {
            Material::Spring(m) => spring::add_damping_matrix(self, m.damping, &mut c)?,
            Material::Fem(_) => fem::add_damping_matrix(self, &mut c)?,
        }
        Ok(c)
    }

    /// Kinetic + elastic + gravitational energy (z up, potential zero at z = 0).
    pub fn total_energy(&self, gravity: f64) -> Result<f64, SoftBodyError> {
        let masses = self.masses();
        let kinetic: f64 = self
            .velocities
            .iter()
            .zip(masses)
            .map(|(v, m)| 0.5 * m * v.norm_squared())
            .sum();
        let potential: f64 = self.positions.iter().zip(masses).map(|(p, m)| m * gravity * p.z).sum();
        Ok(kinetic + self.elastic_energy()? + potential)
    }

    pub fn elastic_energy(&self) -> Result<f64, SoftBodyError> {
        match self.material {
            Material::Spring(m) => Ok(self
                .lattice
                .edges
                .iter()
                .map(|&(i, j, rest)| {
                    let ext = (self.positions[i] - self.positions[j]).norm() - rest;
                    0.5 * m.stiffness * ext * ext
                })
                .sum()),
            Material::Fem(_) => fem::strain_energy(self),
        }
    }
}

/// Total energy of a body under gravity `g` (m/s², acting along −z).
pub fn total_energy(body: &SoftBody, gravity: f64) -> Result<f64, SoftBodyError> {
    body.total_energy(gravity)
}

/// Rotation part of the polar decomposition of `f` (proper rotation).
pub(crate) fn polar_rotation(f: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = f.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        // Flip the axis of the smallest singular value.
        let (k, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        let mut u2 = u;
        u2.column_mut(k).neg_mut();
        r = u2 * v_t;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_lattice, VolumetricLattice};

    pub(crate) fn two_node_body(k: f64, c: f64, length: f64) -> SoftBody {
        let lattice = VolumetricLattice {
            nodes: vec![Point::zeros(), Point::new(length, 0.0, 0.0)],
            edges: vec![(0, 1, length)],
            tetrahedra: vec![],
            node_masses: vec![1.0, 1.0],
            surface_faces: vec![],
        };
        SoftBody::new(lattice, Material::Spring(SpringMaterial::new(k, c).unwrap())).unwrap()
    }

    #[test]
    fn energy_zero_at_rest_on_ground() {
        let lattice = VolumetricLattice {
            nodes: vec![Point::zeros()],
            edges: vec![],
            tetrahedra: vec![],
            node_masses: vec![1.0],
            surface_faces: vec![],
        };
        let body = SoftBody::new(lattice, Material::Spring(SpringMaterial::new(1.0, 0.0).unwrap())).unwrap();
        assert_eq!(total_energy(&body, 9.81).unwrap(), 0.0);
    }

    #[test]
    fn energy_of_raised_node_is_mgh() {
        let lattice = VolumetricLattice {
            nodes: vec![Point::new(0.0, 0.0, 1.0)],
            edges: vec![],
            tetrahedra: vec![],
            node_masses: vec![1.0],
            surface_faces: vec![],
        };
        let body = SoftBody::new(lattice, Material::Spring(SpringMaterial::new(1.0, 0.0).unwrap())).unwrap();
        assert!((total_energy(&body, 9.81).unwrap() - 9.81).abs() < 1e-12);
    }

    #[test]
    fn stretched_spring_stores_half_k_x_squared() {
        let mut body = two_node_body(2000.0, 0.0, 1.0);
        body.positions[1].x += 0.01;
        assert!((body.elastic_energy().unwrap() - 0.1).abs() < 1e-9);
        assert!((total_energy(&body, 0.0).unwrap() - 0.1).abs() < 1e-9);
    }

    #[test]
    fn pin_mask_validates_indices() {
        let mut body = two_node_body(1.0, 0.0, 1.0);
        assert!(body.set_pinned(&[1]).is_ok());
        assert!(body.is_pinned(1) && !body.is_pinned(0));
        assert_eq!(body.set_pinned(&[2]), Err(SoftBodyError::BadNode(2)));
    }

    #[test]
    fn fem_material_needs_tetrahedra() {
        let body = two_node_body(1.0, 0.0, 1.0);
        let err = SoftBody::new(
            body.lattice().clone(),
            Material::Fem(FemMaterial::from_kpa(57.0, 0.3).unwrap()),
        );
        assert_eq!(err.unwrap_err(), SoftBodyError::NoTetrahedra);
        let cube = crate::mesh::box_mesh(Point::zeros(), Point::repeat(1.0));
        let l = build_lattice(&cube, 1000.0).unwrap();
        assert!(SoftBody::new(l, Material::Fem(FemMaterial::from_kpa(57.0, 0.3).unwrap())).is_ok());
    }

    #[test]
    fn polar_rotation_recovers_rotation() {
        let r = nalgebra::Rotation3::from_euler_angles(0.3, -0.2, 1.1).into_inner();
        let s = Matrix3::new(1.2, 0.1, 0.0, 0.1, 0.9, 0.05, 0.0, 0.05, 1.1);
        let got = polar_rotation(&(r * s));
        assert!((got - r).norm() < 1e-10);
    }
}
