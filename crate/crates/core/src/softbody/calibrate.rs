use nalgebra::{DMatrix, DVector};

use super::{fem, spring, FemMaterial, Material, SoftBody, SoftBodyError, SpringMaterial};
use crate::mesh::VolumetricLattice;

/// Fixed and loaded nodes for a compression test.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadCase {
    pub fixed: Vec<usize>,
    pub loaded: Vec<usize>,
    /// Total downward load, N, shared equally by the loaded nodes.
    pub load: f64,
}

impl LoadCase {
    /// Nodes within `band` (fraction of height) of the bottom are fixed and
    /// those within `band` of the top carry the load.
    pub fn bands(lattice: &VolumetricLattice, load: f64, band: f64) -> Result<Self, SoftBodyError> {
        if !(load > 0.0 && load.is_finite()) {
            return Err(SoftBodyError::InvalidMaterial(format!(
                "test load must be > 0, got {load}"
            )));
        }
        let (lo, hi) = lattice
            .nodes
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.z), hi.max(p.z))
            });
        let h = hi - lo;
        let fixed: Vec<usize> = (0..lattice.node_count())
            .filter(|&i| lattice.nodes[i].z <= lo + band * h)
            .collect();
        let loaded: Vec<usize> = (0..lattice.node_count())
            .filter(|&i| lattice.nodes[i].z >= hi - band * h)
            .collect();
        if !(h > 0.0) || fixed.len() < 3 || loaded.is_empty() {
            return Err(SoftBodyError::SingularStiffness);
        }
        Ok(Self { fixed, loaded, load })
    }
}

/// Tunables of the calibration search.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSetup {
    pub band: f64,
    pub stiffness_range: (f64, f64),
    pub deflection_tolerance: f64,
    pub settling_tolerance: f64,
    /// Settling band as a fraction of the final deflection.
    pub settling_band: f64,
}

impl Default for CalibrationSetup {
    fn default() -> Self {
        Self {
            band: 0.2,
            stiffness_range: (1.0, 1e7),
            deflection_tolerance: 0.10,
            settling_tolerance: 0.20,
            settling_band: 0.05,
        }
    }
}

/// Spring material equivalent to a continuum material, with the residuals
/// of both matching criteria.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub material: SpringMaterial,
    /// Mean downward displacement of the loaded nodes (positive), m.
    pub continuum_deflection: f64,
    pub spring_deflection: f64,
    pub deflection_residual: f64,
    /// Step-response settling times, s.
    pub continuum_settling: f64,
    pub spring_settling: f64,
    pub settling_residual: f64,
}

/// Linear model restricted to the free degrees of freedom.
struct Reduced {
    k: DMatrix<f64>,
    c: DMatrix<f64>,
    m: DVector<f64>,
    f: DVector<f64>,
    /// Averages the z displacement of the loaded nodes.
    probe: DVector<f64>,
}

impl Reduced {
    fn new(body: &SoftBody, case: &LoadCase) -> Result<Self, SoftBodyError> {
        let n = body.node_count();
        for &i in case.fixed.iter().chain(&case.loaded) {
            if i >= n {
                return Err(SoftBodyError::BadNode(i));
            }
        }
        let (k_full, c_full) = match body.material() {
            Material::Spring(_) => spring::rest_matrices(body)?,
            Material::Fem(_) => fem::rest_matrices(body)?,
        };
        let mut is_fixed = vec![false; n];
        for &i in &case.fixed {
            is_fixed[i] = true;
        }
        let free: Vec<usize> = (0..3 * n).filter(|d| !is_fixed[d / 3]).collect();
        let mut f = DVector::zeros(free.len());
        let mut probe = DVector::zeros(free.len());
        let share = 1.0 / case.loaded.len() as f64;
        for (r, &d) in free.iter().enumerate() {
            if d % 3 == 2 && case.loaded.contains(&(d / 3)) {
                f[r] = -case.load * share;
                probe[r] = -share;
            }
        }
        if probe.iter().all(|&p| p == 0.0) {
            return Err(SoftBodyError::SingularStiffness);
        }
        let pick = |full: &DMatrix<f64>| DMatrix::from_fn(free.len(), free.len(), |r, s| full[(free[r], free[s])]);
        Ok(Self {
            k: pick(&k_full),
            c: pick(&c_full),
            m: DVector::from_iterator(free.len(), free.iter().map(|&d| body.masses()[d / 3])),
            f,
            probe,
        })
    }

    fn static_deflection(&self) -> Result<f64, SoftBodyError> {
        let x = self
            .k
            .clone()
            .cholesky()
            .ok_or(SoftBodyError::SingularStiffness)?
            .solve(&self.f);
        Ok(self.probe.dot(&x))
    }

    /// Lowest undamped natural frequency, rad/s.
    fn omega_min(&self) -> f64 {
        let inv_sqrt_m = self.m.map(|m| 1.0 / m.sqrt());
        let scaled = DMatrix::from_fn(self.k.nrows(), self.k.ncols(), |i, j| {
            self.k[(i, j)] * inv_sqrt_m[i] * inv_sqrt_m[j]
        });
        scaled.symmetric_eigenvalues().min().max(0.0).sqrt()
    }

    /// Time after which the probe stays within `band` of its static value,
    /// for a load switched on at t = 0. `None` if it never settles within
    /// the step budget.
    ///
    /// The system is linear, so the state is advanced with the exact
    /// transition matrix `exp(A dt)` and `dt` only has to resolve the
    /// slowest mode.
    fn settling_time(&self, band: f64) -> Result<Option<f64>, SoftBodyError> {
        const SAMPLES_PER_PERIOD: f64 = 64.0;
        const MAX_STEPS: usize = 1 << 18;
        let n = self.m.len();
        let x_static = self
            .k
            .clone()
            .cholesky()
            .ok_or(SoftBodyError::SingularStiffness)?
            .solve(&self.f);
        let target = self.probe.dot(&x_static);
        let tol = band * target.abs();
        let omega = self.omega_min();
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(SoftBodyError::SingularStiffness);
        }
        let dt = std::f64::consts::TAU / omega / SAMPLES_PER_PERIOD;

        let mut a = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            a[(i, n + i)] = 1.0;
            for j in 0..n {
                a[(n + i, j)] = -self.k[(i, j)] / self.m[i];
                a[(n + i, n + j)] = -self.c[(i, j)] / self.m[i];
            }
        }
        let phi = (a * dt).exp();

        // Deviation from equilibrium; starts at rest in the unloaded shape.
        let mut z = DVector::zeros(2 * n);
        z.rows_mut(0, n).copy_from(&(-&x_static));
        let mut last_out = 0usize;
        let mut horizon = 256usize;
        let mut step = 0usize;
        loop {
            while step < horizon {
                z = &phi * &z;
                step += 1;
                if self.probe.dot(&z.rows(0, n)).abs() > tol {
                    last_out = step;
                }
            }
            if last_out * 2 < horizon {
                return Ok(Some(last_out as f64 * dt));
            }
            if horizon >= MAX_STEPS {
                return Ok(None);
            }
            horizon *= 2;
        }
    }
}

/// Mean downward deflection of the loaded nodes in the linear static
/// solution about the rest configuration.
pub fn static_deflection(body: &SoftBody, case: &LoadCase) -> Result<f64, SoftBodyError> {
    Reduced::new(body, case)?.static_deflection()
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Spring stiffness and damping that reproduce the continuum material's
/// static deflection and step-response settling time on `lattice`.
pub fn calibrate(fem: &FemMaterial, lattice: &VolumetricLattice, test_load: f64) -> Result<Calibration, SoftBodyError> {
    calibrate_with(fem, lattice, test_load, &CalibrationSetup::default())
}

pub fn calibrate_with(
    fem: &FemMaterial,
    lattice: &VolumetricLattice,
    test_load: f64,
    setup: &CalibrationSetup,
) -> Result<Calibration, SoftBodyError> {
    let case = LoadCase::bands(lattice, test_load, setup.band)?;
    let continuum = SoftBody::new(lattice.clone(), Material::Fem(*fem))?;
    let continuum = Reduced::new(&continuum, &case)?;
    let target = continuum.static_deflection()?;

    let mut spring_body = SoftBody::new(lattice.clone(), Material::Spring(SpringMaterial::new(1.0, 0.0)?))?;
    let mut deflect = |k: f64, c: f64| -> Result<Reduced, SoftBodyError> {
        spring_body.set_material(Material::Spring(SpringMaterial::new(k, c)?))?;
        Reduced::new(&spring_body, &case)
    };

    // Deflection falls as k rises. Widen the bracket by decades when the
    // target lies outside it, within hard limits.
    let (mut lo, mut hi) = setup.stiffness_range;
    while deflect(lo, 0.0)?.static_deflection()? < target && lo > 1e-12 {
        lo /= 10.0;
    }
    while deflect(hi, 0.0)?.static_deflection()? > target && hi < 1e12 {
        hi *= 10.0;
    }
    let mut best = (f64::INFINITY, lo);
    for _ in 0..100 {
        let mid = (lo * hi).sqrt();
        let d = deflect(mid, 0.0)?.static_deflection()?;
        let r = relative(d, target);
        if r < best.0 {
            best = (r, mid);
        }
        if d > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if r < 1e-9 || hi / lo < 1.0 + 1e-12 {
            break;
        }
    }
    let (deflection_residual, k) = best;
    if !(deflection_residual <= setup.deflection_tolerance) {
        return Err(SoftBodyError::CalibrationFailure {
            residual: deflection_residual,
        });
    }

    let target_settle = continuum
        .settling_time(setup.settling_band)?
        .ok_or(SoftBodyError::CalibrationFailure {
            residual: f64::INFINITY,
        })?;
    let settle = |c: f64, deflect: &mut dyn FnMut(f64, f64) -> Result<Reduced, SoftBodyError>| {
        deflect(k, c)?
            .settling_time(setup.settling_band)
            .map(|t| t.unwrap_or(f64::INFINITY))
    };

    // Walk down a log grid scaled by the critical value until the settling
    // time first exceeds the target, then bisect that crossing, which lies
    // on the underdamped branch.
    let total_mass: f64 = lattice.node_masses.iter().sum();
    let scale = (k * total_mass).sqrt();
    let mut pick = (f64::INFINITY, scale, f64::INFINITY);
    let mut prev: Option<(f64, f64)> = None;
    let mut bracket = None;
    for e in (-16..=8).rev() {
        let c = scale * 10f64.powf(e as f64 / 4.0);
        let t = settle(c, &mut deflect)?;
        let r = relative(t, target_settle);
        if r < pick.0 {
            pick = (r, c, t);
        }
        if let Some((c_prev, t_prev)) = prev {
            if t > target_settle && t_prev <= target_settle {
                bracket = Some((c, c_prev));
                break;
            }
        }
        prev = Some((c, t));
    }
    if let Some((mut c_lo, mut c_hi)) = bracket {
        for _ in 0..40 {
            if pick.0 < 0.01 {
                break;
            }
            let c = (c_lo * c_hi).sqrt();
            let t = settle(c, &mut deflect)?;
            let r = relative(t, target_settle);
            if r < pick.0 {
                pick = (r, c, t);
            }
            if t > target_settle {
                c_lo = c;
            } else {
                c_hi = c;
            }
        }
    }
    let (settling_residual, c, spring_settling) = pick;
    if !(settling_residual <= setup.settling_tolerance) {
        return Err(SoftBodyError::CalibrationFailure {
            residual: settling_residual,
        });
    }

    Ok(Calibration {
        material: SpringMaterial::new(k, c)?,
        continuum_deflection: target,
        spring_deflection: deflect(k, c)?.static_deflection()?,
        deflection_residual,
        continuum_settling: target_settle,
        spring_settling,
        settling_residual,
    })
}
