use serde::{Deserialize, Serialize};

use super::SoftBodyError;

/// Edge-spring material: stiffness in N/m, dashpot damping in N·s/m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpringMaterial {
    pub stiffness: f64,
    pub damping: f64,
}

impl SpringMaterial {
    pub fn new(stiffness: f64, damping: f64) -> Result<Self, SoftBodyError> {
        let m = Self { stiffness, damping };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), SoftBodyError> {
        if !(self.stiffness >= 0.0 && self.stiffness.is_finite()) {
            return Err(SoftBodyError::InvalidMaterial(format!(
                "stiffness must be >= 0, got {}",
                self.stiffness
            )));
        }
        if !(self.damping >= 0.0 && self.damping.is_finite()) {
            return Err(SoftBodyError::InvalidMaterial(format!(
                "damping must be >= 0, got {}",
                self.damping
            )));
        }
        Ok(())
    }
}

/// Isotropic linear-elastic continuum material.
///
/// `damping_coefficient` is dimensionless: each tetrahedron damps with its
/// rest stiffness times `damping_coefficient * sqrt(m_e / k_e)`, where
/// `m_e` and `k_e` are the element's mass and largest diagonal stiffness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FemMaterial {
    /// Pa.
    pub young_modulus: f64,
    pub poisson_ratio: f64,
    pub damping_coefficient: f64,
}

pub const DEFAULT_FEM_DAMPING: f64 = 0.1;

impl FemMaterial {
    pub fn new(young_modulus: f64, poisson_ratio: f64, damping_coefficient: f64) -> Result<Self, SoftBodyError> {
        let m = Self {
            young_modulus,
            poisson_ratio,
            damping_coefficient,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn from_kpa(young_kpa: f64, poisson_ratio: f64) -> Result<Self, SoftBodyError> {
        Self::new(young_kpa * 1e3, poisson_ratio, DEFAULT_FEM_DAMPING)
    }

    pub fn validate(&self) -> Result<(), SoftBodyError> {
        if self.poisson_ratio == 0.5 {
            return Err(SoftBodyError::Incompressible);
        }
        if !(self.young_modulus > 0.0 && self.young_modulus.is_finite()) {
            return Err(SoftBodyError::InvalidMaterial(format!(
                "young modulus must be > 0, got {}",
                self.young_modulus
            )));
        }
        if !(0.0..0.5).contains(&self.poisson_ratio) {
            return Err(SoftBodyError::InvalidMaterial(format!(
                "poisson ratio must be in [0, 0.5), got {}",
                self.poisson_ratio
            )));
        }
        if !(self.damping_coefficient >= 0.0 && self.damping_coefficient.is_finite()) {
            return Err(SoftBodyError::InvalidMaterial(format!(
                "damping coefficient must be >= 0, got {}",
                self.damping_coefficient
            )));
        }
        Ok(())
    }
}

/// Lamé parameters `(mu, lambda)` in Pa.
pub fn lame_parameters(material: &FemMaterial) -> Result<(f64, f64), SoftBodyError> {
    material.validate()?;
    let e = material.young_modulus;
    let nu = material.poisson_ratio;
    let mu = e / (2.0 * (1.0 + nu));
    let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    Ok((mu, lambda))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Material {
    Spring(SpringMaterial),
    Fem(FemMaterial),
}

impl Material {
    pub fn validate(&self) -> Result<(), SoftBodyError> {
        match self {
            Material::Spring(m) => m.validate(),
            Material::Fem(m) => m.validate(),
        }
    }
}

/// Literature range for one tissue class, stored in the order it is usually
/// quoted (the bounds are not necessarily ascending).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TissueRange {
    pub name: &'static str,
    pub young_kpa: (f64, f64),
    pub poisson: (f64, f64),
    pub note: &'static str,
}

/// A named model configuration: equivalent continuum properties and the
/// edge-spring values used when the flex is driven directly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MaterialPreset {
    pub label: &'static str,
    pub young_kpa: f64,
    pub poisson: f64,
    pub stiffness: f64,
    pub damping: f64,
}

impl MaterialPreset {
    pub fn spring(&self) -> SpringMaterial {
        SpringMaterial {
            stiffness: self.stiffness,
            damping: self.damping,
        }
    }

    pub fn fem(&self) -> FemMaterial {
        FemMaterial {
            young_modulus: self.young_kpa * 1e3,
            poisson_ratio: self.poisson,
            damping_coefficient: DEFAULT_FEM_DAMPING,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaterialLibrary {
    pub tissues: Vec<TissueRange>,
    pub presets: Vec<MaterialPreset>,
}

impl Default for MaterialLibrary {
    fn default() -> Self {
        Self {
            tissues: vec![
                TissueRange {
                    name: "connective",
                    young_kpa: (1.5e6, 2.25e5),
                    poisson: (0.3, 0.3),
                    note: "bounds kept verbatim; order is descending and the intended interval is ambiguous",
                },
                TissueRange {
                    name: "muscle",
                    young_kpa: (164.0, 39.0),
                    poisson: (0.493, 0.3),
                    note: "",
                },
                TissueRange {
                    name: "fat",
                    young_kpa: (18.0, 24.0),
                    poisson: (0.5, 0.13),
                    note: "",
                },
            ],
            presets: vec![
                MaterialPreset {
                    label: "A",
                    young_kpa: 57.0,
                    poisson: 0.3,
                    stiffness: 2000.0,
                    damping: 100.0,
                },
                MaterialPreset {
                    label: "B",
                    young_kpa: 110.0,
                    poisson: 0.3,
                    stiffness: 5000.0,
                    damping: 100.0,
                },
                MaterialPreset {
                    label: "E",
                    young_kpa: 500.0,
                    poisson: 0.3,
                    stiffness: 12000.0,
                    damping: 100.0,
                },
            ],
        }
    }
}

impl MaterialLibrary {
    pub fn preset(&self, label: &str) -> Option<&MaterialPreset> {
        self.presets.iter().find(|p| p.label.eq_ignore_ascii_case(label))
    }

    pub fn tissue(&self, name: &str) -> Option<&TissueRange> {
        self.tissues.iter().find(|t| t.name == name)
    }
}
