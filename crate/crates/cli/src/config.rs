//! Plain-text run configuration: geometry, pore layout, coefficients,
//! loads, time grid, scales and solver knobs, parsed from TOML into the
//! toolkit's typed inputs. Frequencies are given in cycles (per unit length
//! or unit fast time) and converted to angular form internally.

use porohom::ap::{PoreDistribution, TrigPolynomial};
use porohom::coeffs::{BodyLoad, CoefficientField, DensityField, KernelSpec, TimeProfile};
use porohom::geometry::{build_cell, CellGeometry, CellShape};
use porohom::homogenize::{CellInputs, FastTimeTreatment};
use serde::{Deserialize, Serialize};

const TAU: f64 = std::f64::consts::TAU;

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub dimension: usize,
    pub geometry: GeometrySpec,
    pub pores: PoreSpec,
    pub solid: PhaseSpec,
    pub fluid: PhaseSpec,
    #[serde(default)]
    pub loads: LoadsSpec,
    pub time: TimeSpec,
    pub multiscale: MultiscaleSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub validation: ValidationSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    pub shape: String,
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub corner: Option<Vec<f64>>,
    #[serde(default)]
    pub sides: Option<Vec<f64>>,
    #[serde(default)]
    pub axis: Option<usize>,
    #[serde(default)]
    pub thickness: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PoreSpec {
    pub dims: Vec<usize>,
    pub values: Vec<u8>,
    #[serde(default)]
    pub period: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PhaseSpec {
    pub coefficient: CoefficientSpec,
    pub density: ScalarFieldSpec,
    #[serde(default)]
    pub memory: Option<MemorySpec>,
}

/// Matrix coefficient: a constant isotropic value, an isotropic scalar
/// field, per-axis diagonal fields, or two isotropic values keyed by phase.
#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    #[serde(default)]
    pub iso: Option<f64>,
    #[serde(default)]
    pub iso_field: Option<ScalarFieldSpec>,
    #[serde(default)]
    pub diag: Option<Vec<ScalarFieldSpec>>,
    #[serde(default)]
    pub phase: Option<PhaseValues>,
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PhaseValues {
    pub solid: f64,
    pub fluid: f64,
}

/// Real trigonometric polynomial: constant plus cosine/sine terms with
/// frequencies in cycles per axis.
#[derive(Debug, Clone, Deserialize, Serialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct ScalarFieldSpec {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub cos: Vec<TermSpec>,
    #[serde(default)]
    pub sin: Vec<TermSpec>,
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub freq: Vec<f64>,
    pub amp: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MemorySpec {
    pub spatial: CoefficientSpec,
    pub temporal: ScalarFieldSpec,
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct LoadsSpec {
    #[serde(default)]
    pub f: Option<LoadSpec>,
    #[serde(default)]
    pub g: Option<LoadSpec>,
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LoadSpec {
    pub direction: Vec<f64>,
    pub profile: String,
    #[serde(default)]
    pub ramp: Option<f64>,
    #[serde(default)]
    pub omega: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub horizon: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MultiscaleSpec {
    pub epsilons: Vec<f64>,
    pub resolution_per_cell: usize,
    pub cell_resolution: usize,
    pub macro_resolution: usize,
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub cg_tol: f64,
    pub minres_tol: f64,
    pub stabilization: f64,
    pub max_iter: usize,
    pub m_tau: usize,
    pub all_fast_time_modes: bool,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            cg_tol: 1e-12,
            minres_tol: 1e-9,
            stabilization: 0.05,
            max_iter: 200_000,
            m_tau: 16,
            all_fast_time_modes: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct ValidationSpec {
    #[serde(default)]
    pub full_cell: bool,
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
}

/// A config error with the offending field named.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

type CfgResult<T> = Result<T, ConfigError>;

impl SimConfig {
    pub fn parse(text: &str) -> CfgResult<Self> {
        let cfg: SimConfig =
            toml::from_str(text).map_err(|e| ConfigError(format!("parse failure: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> CfgResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Canonical serialization; `normalize = serialize . parse` is
    /// idempotent by construction.
    pub fn normalize(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    fn validate(&self) -> CfgResult<()> {
        if !(1..=3).contains(&self.dimension) {
            return Err(ConfigError(format!("dimension: {} not in 1..=3", self.dimension)));
        }
        if self.time.dt <= 0.0 || self.time.horizon <= 0.0 {
            return Err(ConfigError("time: horizon and dt must be positive".into()));
        }
        if self.multiscale.epsilons.is_empty() {
            return Err(ConfigError("multiscale.epsilons: list is empty".into()));
        }
        for w in self.multiscale.epsilons.windows(2) {
            if w[1] >= w[0] {
                return Err(ConfigError(
                    "multiscale.epsilons: list must be strictly decreasing".into(),
                ));
            }
        }
        // coefficient assumptions gate the run at load time
        let inputs = self.cell_inputs()?;
        inputs
            .elastic
            .check_spd(8, "solid.coefficient")
            .map_err(|e| ConfigError(e.to_string()))?;
        inputs
            .viscous
            .check_spd(8, "fluid.coefficient")
            .map_err(|e| ConfigError(e.to_string()))?;
        inputs
            .density_solid
            .check_bounds(self.dimension, 16)
            .map_err(|e| ConfigError(format!("solid.density: {e}")))?;
        inputs
            .density_fluid
            .check_bounds(self.dimension, 16)
            .map_err(|e| ConfigError(format!("fluid.density: {e}")))?;
        self.geometry()?;
        self.pores()?;
        self.load_f()?;
        self.load_g()?;
        Ok(())
    }

    pub fn geometry(&self) -> CfgResult<CellGeometry> {
        let g = &self.geometry;
        let shape = match g.shape.as_str() {
            "disk" => CellShape::Disk {
                center: g
                    .center
                    .clone()
                    .ok_or_else(|| ConfigError("geometry.center: required for disk".into()))?,
                radius: g
                    .radius
                    .ok_or_else(|| ConfigError("geometry.radius: required for disk".into()))?,
            },
            "box" => CellShape::AxisBox {
                corner: g
                    .corner
                    .clone()
                    .ok_or_else(|| ConfigError("geometry.corner: required for box".into()))?,
                sides: g
                    .sides
                    .clone()
                    .ok_or_else(|| ConfigError("geometry.sides: required for box".into()))?,
            },
            "laminate" => CellShape::Laminate {
                axis: g
                    .axis
                    .ok_or_else(|| ConfigError("geometry.axis: required for laminate".into()))?,
                thickness: g.thickness.ok_or_else(|| {
                    ConfigError("geometry.thickness: required for laminate".into())
                })?,
            },
            other => return Err(ConfigError(format!("geometry.shape: unknown shape '{other}'"))),
        };
        build_cell(self.dimension, shape).map_err(|e| ConfigError(format!("geometry: {e}")))
    }

    pub fn pores(&self) -> CfgResult<PoreDistribution> {
        PoreDistribution::new(
            self.pores.dims.clone(),
            self.pores.values.clone(),
            self.pores.period.clone(),
        )
        .map_err(|e| ConfigError(format!("pores: {e}")))
    }

    fn scalar_field(&self, dim: usize, spec: &ScalarFieldSpec, path: &str) -> CfgResult<TrigPolynomial> {
        let convert = |terms: &[TermSpec]| -> CfgResult<Vec<(Vec<f64>, f64)>> {
            terms
                .iter()
                .map(|t| {
                    if t.freq.len() != dim {
                        return Err(ConfigError(format!(
                            "{path}: frequency {:?} needs {dim} components",
                            t.freq
                        )));
                    }
                    Ok((t.freq.iter().map(|f| f * TAU).collect(), t.amp))
                })
                .collect()
        };
        TrigPolynomial::real(dim, spec.constant, &convert(&spec.cos)?, &convert(&spec.sin)?)
            .map_err(|e| ConfigError(format!("{path}: {e}")))
    }

    fn coefficient(&self, spec: &CoefficientSpec, path: &str) -> CfgResult<CoefficientField> {
        let dim = self.dimension;
        let chosen = spec.iso.is_some() as u8
            + spec.iso_field.is_some() as u8
            + spec.diag.is_some() as u8
            + spec.phase.is_some() as u8;
        if chosen != 1 {
            return Err(ConfigError(format!(
                "{path}: give exactly one of iso, iso_field, diag, phase"
            )));
        }
        if let Some(v) = spec.iso {
            return Ok(CoefficientField::constant_isotropic(dim, v));
        }
        if let Some(p) = &spec.phase {
            return CoefficientField::phase_isotropic(dim, p.solid, p.fluid)
                .map_err(|e| ConfigError(format!("{path}: {e}")));
        }
        if let Some(f) = &spec.iso_field {
            let p = self.scalar_field(dim, f, path)?;
            return CoefficientField::isotropic(dim, p)
                .map_err(|e| ConfigError(format!("{path}: {e}")));
        }
        let diag = spec.diag.as_ref().unwrap();
        if diag.len() != dim {
            return Err(ConfigError(format!("{path}.diag: needs {dim} entries")));
        }
        let fields: CfgResult<Vec<TrigPolynomial>> =
            diag.iter().map(|f| self.scalar_field(dim, f, path)).collect();
        CoefficientField::diagonal(dim, fields?).map_err(|e| ConfigError(format!("{path}: {e}")))
    }

    fn kernel(&self, spec: &Option<MemorySpec>, path: &str) -> CfgResult<KernelSpec> {
        match spec {
            None => Ok(KernelSpec::none(self.dimension)),
            Some(m) => {
                let spatial = self.coefficient(&m.spatial, &format!("{path}.spatial"))?;
                let temporal = self.scalar_field(1, &m.temporal, &format!("{path}.temporal"))?;
                KernelSpec::new(spatial, temporal).map_err(|e| ConfigError(format!("{path}: {e}")))
            }
        }
    }

    fn density(&self, spec: &ScalarFieldSpec, path: &str) -> CfgResult<DensityField> {
        let p = self.scalar_field(self.dimension, spec, path)?;
        DensityField::new(p).map_err(|e| ConfigError(format!("{path}: {e}")))
    }

    fn body_load(&self, spec: &Option<LoadSpec>, path: &str) -> CfgResult<BodyLoad> {
        match spec {
            None => Ok(BodyLoad::zero(self.dimension)),
            Some(l) => {
                if l.direction.len() != self.dimension {
                    return Err(ConfigError(format!(
                        "{path}.direction: needs {} components",
                        self.dimension
                    )));
                }
                let profile = match l.profile.as_str() {
                    "zero" => TimeProfile::Zero,
                    "ramp" => TimeProfile::Ramp {
                        ramp: l.ramp.ok_or_else(|| {
                            ConfigError(format!("{path}.ramp: required for the ramp profile"))
                        })?,
                    },
                    "sine" => TimeProfile::Sine {
                        omega: l.omega.ok_or_else(|| {
                            ConfigError(format!("{path}.omega: required for the sine profile"))
                        })?,
                    },
                    other => {
                        return Err(ConfigError(format!("{path}.profile: unknown '{other}'")))
                    }
                };
                Ok(BodyLoad { direction: l.direction.clone(), profile })
            }
        }
    }

    pub fn load_f(&self) -> CfgResult<BodyLoad> {
        self.body_load(&self.loads.f, "loads.f")
    }

    pub fn load_g(&self) -> CfgResult<BodyLoad> {
        self.body_load(&self.loads.g, "loads.g")
    }

    /// The shared physics and solver inputs.
    pub fn cell_inputs(&self) -> CfgResult<CellInputs> {
        let elastic = self.coefficient(&self.solid.coefficient, "solid.coefficient")?;
        let viscous = self.coefficient(&self.fluid.coefficient, "fluid.coefficient")?;
        let mut inputs = CellInputs::memoryless(self.dimension, elastic, viscous);
        inputs.elastic_kernel = self.kernel(&self.solid.memory, "solid.memory")?;
        inputs.viscous_kernel = self.kernel(&self.fluid.memory, "fluid.memory")?;
        inputs.density_solid = self.density(&self.solid.density, "solid.density")?;
        inputs.density_fluid = self.density(&self.fluid.density, "fluid.density")?;
        inputs.m_tau = self.solver.m_tau;
        inputs.stabilization = self.solver.stabilization;
        inputs.cg_tol = self.solver.cg_tol;
        inputs.minres_tol = self.solver.minres_tol;
        inputs.max_iter = self.solver.max_iter;
        inputs.treatment = if self.solver.all_fast_time_modes {
            FastTimeTreatment::AllModes
        } else {
            FastTimeTreatment::ModeZero
        };
        inputs.full_cell_validation = self.validation.full_cell;
        Ok(inputs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub const SAMPLE: &str = r#"
dimension = 2

[geometry]
shape = "disk"
center = [0.5, 0.5]
radius = 0.25

[pores]
dims = [2, 2]
values = [1, 1, 1, 1]

[solid]
coefficient = { iso = 4.0 }
density = { constant = 2.0 }

[solid.memory]
spatial = { iso = 0.5 }
temporal = { constant = 1.0, cos = [{ freq = [1.0], amp = 1.0 }] }

[fluid]
coefficient = { iso = 1.0 }
density = { constant = 1.0 }

[loads]
f = { direction = [1.0, 0.0], profile = "ramp", ramp = 0.1 }
g = { direction = [1.0, 0.0], profile = "ramp", ramp = 0.1 }

[time]
horizon = 0.25
dt = 0.0078125

[multiscale]
epsilons = [0.25, 0.125]
resolution_per_cell = 4
cell_resolution = 16
macro_resolution = 16
"#;

    #[test]
    fn parses_and_builds_inputs() {
        let cfg = SimConfig::parse(SAMPLE).unwrap();
        let inputs = cfg.cell_inputs().unwrap();
        assert!(!inputs.elastic_kernel.is_zero());
        assert!(inputs.viscous_kernel.is_zero());
        assert_eq!(cfg.geometry().unwrap().dim(), 2);
    }

    #[test]
    fn round_trip_is_idempotent() {
        let cfg = SimConfig::parse(SAMPLE).unwrap();
        let once = cfg.normalize();
        let twice = SimConfig::parse(&once).unwrap().normalize();
        assert_eq!(once, twice);
    }

    #[test]
    fn malformed_frequency_names_the_field() {
        let bad = SAMPLE.replace("freq = [1.0]", "freq = [1.0, 2.0]");
        let err = SimConfig::parse(&bad).unwrap_err();
        assert!(err.0.contains("solid.memory.temporal"), "message: {}", err.0);
    }

    #[test]
    fn indefinite_coefficient_rejected_at_load() {
        let bad = SAMPLE.replace(
            "coefficient = { iso = 4.0 }",
            "coefficient = { diag = [{ constant = 1.0 }, { constant = -2.0 }] }",
        );
        let err = SimConfig::parse(&bad).unwrap_err();
        assert!(err.0.contains("coercivity"), "message: {}", err.0);
    }

    #[test]
    fn empty_epsilon_list_rejected() {
        let bad = SAMPLE.replace("epsilons = [0.25, 0.125]", "epsilons = []");
        assert!(SimConfig::parse(&bad).is_err());
    }
}
