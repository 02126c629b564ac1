//! Scenario files: TOML with every unit spelled out in the key name.

use std::path::{Path, PathBuf};

use darkfringe::acoustics::KickSpec;
use darkfringe::experiment::{BunchCycleConfig, PatternKind, VoltagePattern, DEFAULT_COUNT_FLOOR};
use darkfringe::stochastics::DEFAULT_QUADRATURE_ORDER;
use darkfringe::units::FE57_WAVELENGTH_PM;
use darkfringe::{FrequencyGrid, MotionProfile, NuclearConstants, PlateSpec, ResidualMotionModel, TargetSpec};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Directory for output files, relative to the working directory.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub constants: ConstantsConfig,
    /// Target 1, moved by the piezo.
    pub first: TargetConfig,
    pub second: TargetConfig,
    #[serde(default)]
    pub grid: GridConfig,
    /// Explicit displacement of target 1 for `spectrum` and `time`.
    pub motion: Option<MotionConfig>,
    pub pattern: Option<PatternConfig>,
    pub plate: Option<PlateConfig>,
    #[serde(default)]
    pub residual: ResidualConfig,
    #[serde(default)]
    pub analyzer: AnalyzerConfig,
    #[serde(default)]
    pub cycle: CycleConfig,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub fit: FitConfigSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from(".")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[allow(non_snake_case)]
pub struct ConstantsConfig {
    pub gamma_neV: f64,
    pub lifetime_ns: f64,
    pub energy_keV: f64,
    pub resonant_cross_section_cm2: f64,
    pub iron_density_per_cm3: f64,
    pub ground_moment_muN: f64,
    pub excited_moment_muN: f64,
    pub nuclear_magneton_neV_per_T: f64,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        let c = NuclearConstants::<f64>::default();
        Self {
            gamma_neV: c.gamma_nev,
            lifetime_ns: c.lifetime_ns,
            energy_keV: c.energy_kev,
            resonant_cross_section_cm2: c.resonant_cross_section_cm2,
            iron_density_per_cm3: c.iron_density_cm3,
            ground_moment_muN: c.ground_moment,
            excited_moment_muN: c.excited_moment,
            nuclear_magneton_neV_per_T: c.nuclear_magneton_nev_per_t,
        }
    }
}

impl ConstantsConfig {
    pub fn build(&self) -> NuclearConstants<f64> {
        NuclearConstants {
            gamma_nev: self.gamma_neV,
            lifetime_ns: self.lifetime_ns,
            energy_kev: self.energy_keV,
            resonant_cross_section_cm2: self.resonant_cross_section_cm2,
            iron_density_cm3: self.iron_density_per_cm3,
            ground_moment: self.ground_moment_muN,
            excited_moment: self.excited_moment_muN,
            nuclear_magneton_nev_per_t: self.nuclear_magneton_neV_per_T,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct TargetConfig {
    pub thickness_um: f64,
    pub b_field_T: f64,
    /// Magnetization angle in radians; give this or `alpha_pi`.
    pub alpha_rad: Option<f64>,
    /// Magnetization angle in units of pi.
    pub alpha_pi: Option<f64>,
    /// Electronic absorption exponent; defaults to that of iron.
    pub mu_e_d: Option<f64>,
    #[serde(default = "default_enrichment")]
    pub enrichment: f64,
    #[serde(default = "default_lamb_moessbauer")]
    pub lamb_moessbauer: f64,
    pub line_positions_gamma: Option<[f64; 6]>,
}

fn default_enrichment() -> f64 {
    0.95
}

fn default_lamb_moessbauer() -> f64 {
    0.8
}

impl TargetConfig {
    pub fn build(&self, name: &str) -> Result<TargetSpec<f64>, CliError> {
        let alpha = match (self.alpha_rad, self.alpha_pi) {
            (Some(a), None) => a,
            (None, Some(a)) => a * std::f64::consts::PI,
            _ => return Err(CliError::Config(format!("[{name}] needs exactly one of alpha_rad, alpha_pi"))),
        };
        let base = TargetSpec::alpha_iron(self.thickness_um, self.b_field_T, alpha).map_err(config(name))?;
        let mut t = TargetSpec::new(
            self.thickness_um,
            self.b_field_T,
            alpha,
            self.mu_e_d.unwrap_or(base.mu_e_d),
            self.enrichment,
            self.lamb_moessbauer,
        )
        .map_err(config(name))?;
        if let Some(p) = self.line_positions_gamma {
            t = t.with_line_positions(p).map_err(config(name))?;
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub half_span_gamma: f64,
    pub samples: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { half_span_gamma: 400.0, samples: 1 << 13 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionConfig {
    /// Jumps `[t_ns, dz_pm]`; displacements accumulate.
    #[serde(default)]
    pub steps_ns_pm: Vec<[f64; 2]>,
    /// Piecewise-linear knots `[t_ns, z_pm]`.
    #[serde(default)]
    pub knots_ns_pm: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternConfig {
    pub kind: PatternKindConfig,
    pub tau1_ns: f64,
    #[serde(default = "default_pulse_width")]
    pub pulse_width_ns: f64,
    #[serde(default)]
    pub tau2_ns: f64,
    #[serde(default = "default_amplitude")]
    pub amplitude_pm: f64,
    #[serde(default = "default_pattern_rise")]
    pub rise_time_ns: f64,
    #[serde(default)]
    pub residual_fraction: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternKindConfig {
    Single,
    Double,
}

fn default_pulse_width() -> f64 {
    20.0
}

fn default_amplitude() -> f64 {
    FE57_WAVELENGTH_PM / 2.0
}

fn default_pattern_rise() -> f64 {
    5.0
}

impl PatternConfig {
    pub fn build(&self) -> Result<VoltagePattern, CliError> {
        let p = VoltagePattern {
            kind: match self.kind {
                PatternKindConfig::Single => PatternKind::Single,
                PatternKindConfig::Double => PatternKind::Double,
            },
            tau1_ns: self.tau1_ns,
            pulse_width_ns: self.pulse_width_ns,
            tau2_ns: self.tau2_ns,
            amplitude_pm: self.amplitude_pm,
            rise_time_ns: self.rise_time_ns,
            residual_fraction: self.residual_fraction,
        };
        p.validate().map_err(config("pattern"))?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlateConfig {
    pub thickness_mm: f64,
    pub sound_velocity_m_per_s: f64,
    pub reflection_loss: f64,
    pub dispersion_ns: f64,
    pub kick_amplitude_pm: f64,
    pub kick_rise_time_ns: f64,
    pub kick_duration_ns: f64,
    /// Used only without a voltage pattern; otherwise the kick starts with
    /// the pattern.
    pub kick_start_ns: f64,
}

impl Default for PlateConfig {
    fn default() -> Self {
        let p = PlateSpec::<f64>::default();
        Self {
            thickness_mm: p.thickness_mm,
            sound_velocity_m_per_s: p.sound_velocity_m_s,
            reflection_loss: p.reflection_loss,
            dispersion_ns: p.dispersion_ns,
            kick_amplitude_pm: p.kick.amplitude_pm,
            kick_rise_time_ns: p.kick.rise_time_ns,
            kick_duration_ns: p.kick.duration_ns,
            kick_start_ns: p.kick.start_ns,
        }
    }
}

impl PlateConfig {
    pub fn build(&self) -> Result<PlateSpec<f64>, CliError> {
        let p = PlateSpec {
            thickness_mm: self.thickness_mm,
            sound_velocity_m_s: self.sound_velocity_m_per_s,
            reflection_loss: self.reflection_loss,
            kick: KickSpec {
                amplitude_pm: self.kick_amplitude_pm,
                rise_time_ns: self.kick_rise_time_ns,
                duration_ns: self.kick_duration_ns,
                start_ns: self.kick_start_ns,
            },
            dispersion_ns: self.dispersion_ns,
        };
        p.validate().map_err(config("plate"))?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResidualConfig {
    pub sigma_det_gamma: f64,
    pub quadrature_order: usize,
}

impl Default for ResidualConfig {
    fn default() -> Self {
        Self { sigma_det_gamma: 0.0, quadrature_order: DEFAULT_QUADRATURE_ORDER }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyzerConfig {
    /// Fraction of sigma intensity passed by the analyzer.
    pub leakage: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CycleConfig {
    pub n_bunches: usize,
    pub bunch_spacing_ns: f64,
    pub signal_bunch: usize,
    pub reference_bunch: usize,
    /// Expected counts per cycle per unit intensity per ns.
    pub counts_scale_per_ns: f64,
    /// Number of cycles unless `--cycles` is given.
    pub n_cycles: u64,
    /// Reference counts below which enhancement bins are masked.
    pub count_floor: f64,
}

impl Default for CycleConfig {
    fn default() -> Self {
        let c = BunchCycleConfig::default();
        Self {
            n_bunches: c.n_bunches,
            bunch_spacing_ns: c.bunch_spacing_ns,
            signal_bunch: c.signal_bunch,
            reference_bunch: c.reference_bunch,
            counts_scale_per_ns: 1.0,
            n_cycles: 10_000,
            count_floor: DEFAULT_COUNT_FLOOR,
        }
    }
}

impl CycleConfig {
    pub fn build(&self) -> Result<BunchCycleConfig, CliError> {
        let c = BunchCycleConfig {
            n_bunches: self.n_bunches,
            bunch_spacing_ns: self.bunch_spacing_ns,
            signal_bunch: self.signal_bunch,
            reference_bunch: self.reference_bunch,
        };
        c.validate().map_err(config("cycle"))?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    pub gate_start_ns: Option<f64>,
    pub gate_end_ns: Option<f64>,
    /// Rows are written for `|detuning| <= max_detuning_gamma`.
    pub max_detuning_gamma: f64,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self { gate_start_ns: None, gate_end_ns: None, max_detuning_gamma: 100.0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    pub t_max_ns: f64,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self { t_max_ns: 400.0 }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum FitModelKind {
    /// Target 1 alone, sigma-sigma channel.
    Single,
    /// Static two-target chain with residual motion.
    Two,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum FitParameterName {
    Thickness,
    BField,
    Alpha,
    MuED,
    SigmaDet,
    Scale,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveConfig {
    Poisson,
    WeightedLeastSquares,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfigSection {
    pub model: FitModelKind,
    /// Bunch of the data file to fit; the reference bunch by default.
    pub bunch_index: Option<usize>,
    pub free: Vec<FitParameterName>,
    pub objective: ObjectiveConfig,
    pub veto_ns: f64,
    pub max_iters: u64,
    pub restarts: usize,
    pub refine: bool,
    /// Starting scale; estimated from the data when free.
    pub initial_scale: f64,
    /// Starting sigma_det; `residual.sigma_det_gamma` when absent.
    pub initial_sigma_det_gamma: Option<f64>,
}

impl Default for FitConfigSection {
    fn default() -> Self {
        Self {
            model: FitModelKind::Two,
            bunch_index: None,
            free: vec![FitParameterName::SigmaDet, FitParameterName::Scale],
            objective: ObjectiveConfig::Poisson,
            veto_ns: 16.0,
            max_iters: 4000,
            restarts: 2,
            refine: false,
            initial_scale: 1.0,
            initial_sigma_det_gamma: None,
        }
    }
}

/// Every domain object of a scenario, validated.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub raw: ScenarioConfig,
    pub constants: NuclearConstants<f64>,
    pub first: TargetSpec<f64>,
    pub second: TargetSpec<f64>,
    pub grid: FrequencyGrid<f64>,
    pub motion: MotionProfile<f64>,
    pub pattern: Option<VoltagePattern>,
    pub plate: Option<PlateSpec<f64>>,
    pub residual: ResidualMotionModel<f64>,
    pub cycle: BunchCycleConfig,
}

fn config<E: std::fmt::Display>(section: &str) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::Config(format!("[{section}] {e}"))
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let raw: ScenarioConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let constants = raw.constants.build();
        let first = raw.first.build("first")?;
        let second = raw.second.build("second")?;
        let grid = FrequencyGrid::new(raw.grid.half_span_gamma, raw.grid.samples, constants.lifetime_ns)
            .map_err(config("grid"))?;
        let pattern = raw.pattern.as_ref().map(PatternConfig::build).transpose()?;
        let plate = raw.plate.as_ref().map(PlateConfig::build).transpose()?;
        let motion = match (&raw.motion, &pattern) {
            (Some(m), _) => {
                let pairs = |v: &[[f64; 2]]| v.iter().map(|p| (p[0], p[1])).collect::<Vec<_>>();
                match (m.steps_ns_pm.is_empty(), m.knots_ns_pm.is_empty()) {
                    (false, true) => MotionProfile::steps(&pairs(&m.steps_ns_pm)),
                    (true, false) => MotionProfile::new(pairs(&m.knots_ns_pm), FE57_WAVELENGTH_PM),
                    _ => return Err(CliError::Config("[motion] needs exactly one of steps_ns_pm, knots_ns_pm".into())),
                }
                .map_err(config("motion"))?
            }
            (None, Some(p)) => darkfringe::experiment::voltage_to_motion(p).map_err(config("pattern"))?,
            (None, None) => MotionProfile::stationary(),
        };
        let residual = ResidualMotionModel::new(raw.residual.sigma_det_gamma, raw.residual.quadrature_order)
            .map_err(config("residual"))?;
        let cycle = raw.cycle.build()?;
        if !(0.0..=1.0).contains(&raw.analyzer.leakage) {
            return Err(CliError::Config("[analyzer] leakage must lie in [0, 1]".into()));
        }
        Ok(Self { raw, constants, first, second, grid, motion, pattern, plate, residual, cycle })
    }
}
