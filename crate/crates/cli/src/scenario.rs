//! Scenario files: a TOML description of one simulation plus its assets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use softgait_core::contact::GroundPlane;
use softgait_core::gaitlab::{synth_reference, ReferenceBand, SynthBand};
use softgait_core::mesh::{build_lattice, load_mesh, VolumetricLattice, DEFAULT_TISSUE_DENSITY};
use softgait_core::sim::{tracking_gains, MaterialMode, WorldConfig};
use softgait_core::skeleton::{BodyParams, GaitParams, PdGains, PinSelection, ReferenceMotion};
use softgait_core::softbody::{FemMaterial, Material, MaterialLibrary, SpringMaterial};

use crate::CliError;

/// Label of the skeleton-only model.
pub const SKELETON_ONLY: &str = "SK";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// SK runs without flex feet; other labels name a material preset.
    pub label: String,
    #[serde(default)]
    pub world: WorldSection,
    #[serde(default)]
    pub material: MaterialSection,
    #[serde(default)]
    pub skeleton: SkeletonSection,
    #[serde(default)]
    pub contact: ContactSection,
    #[serde(default)]
    pub reference: ReferenceSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSection {
    /// Defaults to the material mode's step.
    pub dt: Option<f64>,
    pub duration: f64,
    pub gravity: f64,
    pub seed: u64,
}

impl Default for WorldSection {
    fn default() -> Self {
        let w = WorldConfig::default();
        Self {
            dt: None,
            duration: w.duration,
            gravity: w.gravity,
            seed: w.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialSection {
    pub mode: MaterialMode,
    /// Preset to start from; defaults to the scenario label.
    pub preset: Option<String>,
    pub stiffness: Option<f64>,
    pub damping: Option<f64>,
    pub young_kpa: Option<f64>,
    pub poisson: Option<f64>,
    #[serde(alias = "damping_coeff")]
    pub damping_coefficient: Option<f64>,
    /// Vertical shift of each flex foot, (left, right), m.
    pub flex_offsets: [f64; 2],
}

impl Default for MaterialSection {
    fn default() -> Self {
        Self {
            mode: MaterialMode::Spring,
            preset: None,
            stiffness: None,
            damping: None,
            young_kpa: None,
            poisson: None,
            damping_coefficient: None,
            flex_offsets: [0.0; 2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkeletonSection {
    /// Surface meshes of the flex feet in the foot frame. The right foot
    /// defaults to the mirrored left one.
    pub foot_left: Option<PathBuf>,
    pub foot_right: Option<PathBuf>,
    pub density: f64,
    /// Per level (hip, knee, ankle).
    pub kp: Option<[f64; 3]>,
    pub kd: Option<[f64; 3]>,
    pub pin_margin: f64,
}

impl Default for SkeletonSection {
    fn default() -> Self {
        Self {
            foot_left: None,
            foot_right: None,
            density: DEFAULT_TISSUE_DENSITY,
            kp: None,
            kd: None,
            pin_margin: PinSelection::default().margin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactSection {
    pub height: f64,
    pub stiffness: f64,
    pub damping: f64,
    pub friction: f64,
}

impl Default for ContactSection {
    fn default() -> Self {
        let p = GroundPlane::default();
        Self {
            height: p.height,
            stiffness: p.contact_stiffness,
            damping: p.contact_damping,
            friction: p.friction_coefficient,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceSection {
    /// Recorded motion CSV; the synthetic gait is used when absent.
    pub motion: Option<PathBuf>,
    pub gait: GaitParams,
    /// GRF band CSV; the synthetic band is used when absent.
    pub band: Option<PathBuf>,
    pub synth: SynthBand,
    /// Analysis window: cycles after `warmup` seconds.
    pub warmup: f64,
    pub cycles: usize,
    /// Phase alignment against the band; defaults to on except for SK.
    pub offset: Option<bool>,
}

impl Default for ReferenceSection {
    fn default() -> Self {
        Self {
            motion: None,
            gait: GaitParams::default(),
            band: None,
            synth: SynthBand::default(),
            warmup: 1.0,
            cycles: 4,
            offset: None,
        }
    }
}

/// Everything a run needs, loaded and validated.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scenario: Scenario,
    pub config: WorldConfig,
    pub body: BodyParams,
    pub feet: Option<[VolumetricLattice; 2]>,
    pub reference: ReferenceMotion,
    pub band: ReferenceBand,
    /// SHA-256 over the scenario and the bytes of every asset it reads.
    pub hash: String,
}

fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| input(format!("scenario: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| input(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn is_skeleton_only(&self) -> bool {
        self.label.eq_ignore_ascii_case(SKELETON_ONLY)
    }

    /// Phase alignment is on for flex models and off for SK unless set.
    pub fn offset_enabled(&self) -> bool {
        self.reference.offset.unwrap_or(!self.is_skeleton_only())
    }

    /// Material of the flex feet, `None` for SK.
    pub fn material(&self) -> Result<Option<Material>, CliError> {
        if self.is_skeleton_only() {
            return Ok(None);
        }
        let m = &self.material;
        let name = m.preset.as_deref().unwrap_or(&self.label);
        let library = MaterialLibrary::default();
        let preset = library.preset(name);
        let need = |value: Option<f64>, from: Option<f64>, key: &str| {
            value
                .or(from)
                .ok_or_else(|| input(format!("material.{key} is required: `{name}` is not a known preset")))
        };
        let material = match m.mode {
            MaterialMode::Spring => {
                let k = need(m.stiffness, preset.map(|p| p.stiffness), "stiffness")?;
                let c = need(m.damping, preset.map(|p| p.damping), "damping")?;
                Material::Spring(SpringMaterial::new(k, c).map_err(|e| input(format!("material: {e}")))?)
            }
            MaterialMode::Fem => {
                let e = need(m.young_kpa, preset.map(|p| p.young_kpa), "young_kpa")?;
                let nu = need(m.poisson, preset.map(|p| p.poisson), "poisson")?;
                let base = FemMaterial::from_kpa(e, nu).map_err(|e| input(format!("material: {e}")))?;
                let c = m.damping_coefficient.unwrap_or(base.damping_coefficient);
                Material::Fem(FemMaterial::new(base.young_modulus, nu, c).map_err(|e| input(format!("material: {e}")))?)
            }
        };
        Ok(Some(material))
    }

    pub fn world_config(&self) -> Result<WorldConfig, CliError> {
        let material = self.material()?;
        let mut config = WorldConfig::with_material(material);
        if let Some(dt) = self.world.dt {
            config.dt = dt;
        }
        config.duration = self.world.duration;
        config.gravity = self.world.gravity;
        config.seed = self.world.seed;
        config.flex_offsets = self.material.flex_offsets;
        config.plane = GroundPlane {
            height: self.contact.height,
            contact_stiffness: self.contact.stiffness,
            contact_damping: self.contact.damping,
            friction_coefficient: self.contact.friction,
        };
        config.plane.validate().map_err(|e| input(format!("contact: {e}")))?;
        let base = tracking_gains();
        let levels = |g: &[f64; 6]| [g[0], g[1], g[2]];
        config.gains = PdGains::per_level(
            self.skeleton.kp.unwrap_or(levels(&base.kp)),
            self.skeleton.kd.unwrap_or(levels(&base.kd)),
        );
        config.pins.margin = self.skeleton.pin_margin;
        config.validate().map_err(|e| input(format!("world: {e}")))?;
        Ok(config)
    }

    /// Loads the assets relative to `base` and assembles the run inputs.
    pub fn prepare(&self, base: &Path) -> Result<Prepared, CliError> {
        let config = self.world_config()?;
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(self).expect("scenario serializes"));
        let mut read = |key: &str, rel: &Path| -> Result<(PathBuf, Vec<u8>), CliError> {
            let path = base.join(rel);
            let bytes =
                std::fs::read(&path).map_err(|e| input(format!("{key}: cannot read {}: {e}", path.display())))?;
            hasher.update(key.as_bytes());
            hasher.update(Sha256::digest(&bytes));
            Ok((path, bytes))
        };

        let feet = if config.material.is_some() {
            let left_rel = self
                .skeleton
                .foot_left
                .as_ref()
                .ok_or_else(|| input("skeleton.foot_left is required for flex models"))?;
            let (left_path, _) = read("skeleton.foot_left", left_rel)?;
            let left = load_mesh(&left_path)
                .map_err(|e| input(format!("skeleton.foot_left: {}: {e}", left_path.display())))?;
            let right = match &self.skeleton.foot_right {
                Some(rel) => {
                    let (path, _) = read("skeleton.foot_right", rel)?;
                    load_mesh(&path).map_err(|e| input(format!("skeleton.foot_right: {}: {e}", path.display())))?
                }
                None => left.mirrored_y(),
            };
            let lattice =
                |mesh, key: &str| build_lattice(mesh, self.skeleton.density).map_err(|e| input(format!("{key}: {e}")));
            Some([
                lattice(&left, "skeleton.foot_left")?,
                lattice(&right, "skeleton.foot_right")?,
            ])
        } else {
            None
        };

        let reference = match &self.reference.motion {
            Some(rel) => {
                let (path, bytes) = read("reference.motion", rel)?;
                let text = String::from_utf8(bytes)
                    .map_err(|_| input(format!("reference.motion: {} is not UTF-8", path.display())))?;
                ReferenceMotion::parse_csv(&text)
                    .map_err(|e| input(format!("reference.motion: {}: {e}", path.display())))?
            }
            None => ReferenceMotion::synthetic(&self.reference.gait, &BodyParams::default())
                .map_err(|e| input(format!("reference.gait: {e}")))?,
        };
        let band = match &self.reference.band {
            Some(rel) => {
                let (path, bytes) = read("reference.band", rel)?;
                let text = String::from_utf8(bytes)
                    .map_err(|_| input(format!("reference.band: {} is not UTF-8", path.display())))?;
                ReferenceBand::parse_csv(&text)
                    .map_err(|e| input(format!("reference.band: {}: {e}", path.display())))?
            }
            None => synth_reference(&self.reference.synth).map_err(|e| input(format!("reference.synth: {e}")))?,
        };
        if self.reference.cycles == 0 {
            return Err(input("reference.cycles must be >= 1"));
        }

        Ok(Prepared {
            scenario: self.clone(),
            config,
            body: BodyParams::default(),
            feet,
            reference,
            band,
            hash: hex::encode(hasher.finalize()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_scenario_uses_defaults() {
        let s = Scenario::parse("label = \"SK\"").unwrap();
        assert!(s.is_skeleton_only());
        assert!(!s.offset_enabled());
        let c = s.world_config().unwrap();
        assert!(c.material.is_none());
        assert_eq!(c.dt, 1e-3);
    }

    #[test]
    fn presets_fill_material_values() {
        let s = Scenario::parse("label = \"B\"").unwrap();
        assert!(s.offset_enabled());
        match s.material().unwrap() {
            Some(Material::Spring(m)) => assert_eq!((m.stiffness, m.damping), (5000.0, 100.0)),
            other => panic!("{other:?}"),
        }
        let fem = Scenario::parse("label = \"E\"\n[material]\nmode = \"fem\"").unwrap();
        assert_eq!(fem.world_config().unwrap().dt, 5e-4);
    }

    #[test]
    fn overrides_win_over_presets() {
        let s = Scenario::parse("label = \"A\"\n[material]\nstiffness = 3000.0\n[world]\ndt = 2e-4").unwrap();
        let c = s.world_config().unwrap();
        assert_eq!(c.dt, 2e-4);
        assert!(matches!(c.material, Some(Material::Spring(m)) if m.stiffness == 3000.0));
    }

    #[test]
    fn damping_coefficient_has_a_short_alias() {
        let s = Scenario::parse("label = \"E\"\n[material]\nmode = \"fem\"\ndamping_coeff = 0.25").unwrap();
        assert!(matches!(s.material().unwrap(), Some(Material::Fem(m)) if m.damping_coefficient == 0.25));
    }

    #[test]
    fn unknown_label_needs_explicit_values() {
        let s = Scenario::parse("label = \"soft\"").unwrap();
        let err = s.material().unwrap_err().to_string();
        assert!(err.contains("material.stiffness"), "{err}");
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = Scenario::parse("label = \"A\"\n[world]\nstep = 1.0")
            .unwrap_err()
            .to_string();
        assert!(err.contains("step"), "{err}");
    }

    #[test]
    fn missing_foot_mesh_names_the_path() {
        let s = Scenario::parse("label = \"A\"\n[skeleton]\nfoot_left = \"nowhere/foot.obj\"").unwrap();
        let err = s.prepare(Path::new("/tmp")).unwrap_err().to_string();
        assert!(err.contains("nowhere/foot.obj"), "{err}");
    }

    #[test]
    fn round_trips_through_toml() {
        let mut s = Scenario::parse("label = \"E\"").unwrap();
        s.skeleton.foot_left = Some("foot.obj".into());
        assert_eq!(Scenario::parse(&s.to_toml()).unwrap(), s);
    }
}
