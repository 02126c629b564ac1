use rayon::prelude::*;

use super::{voltage_to_motion, BunchCycleConfig, VoltagePattern};
use crate::acoustics::{displacement_history, PlateSpec};
use crate::error::{domain, Result};
use crate::grid::FrequencyGrid;
use crate::hyperfine::{NuclearConstants, NuclearModel, TargetSpec};
use crate::stochastics::{
    fold_events, poisson_events_mixture, BunchHistograms, BunchRates, EventStream, ResidualMotionModel,
};
use crate::timedomain::{target_time_response, WindowedInterferometer};

/// Echo trains of earlier cycles are followed back this many cycles.
const WRAPPED_CYCLES: usize = 16;

/// Everything needed to simulate repeated control cycles.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleSetup {
    pub constants: NuclearConstants<f64>,
    /// Moving target, struck by the piezo.
    pub first: TargetSpec<f64>,
    pub second: TargetSpec<f64>,
    /// Voltage pattern fired in the signal bunch.
    pub pattern: Option<VoltagePattern>,
    /// Support plate; its echoes reach every later bunch.
    pub plate: Option<PlateSpec<f64>>,
    pub residual: ResidualMotionModel<f64>,
    pub cycle: BunchCycleConfig,
    pub grid: FrequencyGrid<f64>,
    /// Expected counts per cycle per unit of detected intensity per ns.
    pub counts_scale: f64,
}

impl CycleSetup {
    /// Default cycle on a `2^13`-point grid spanning +-400 gamma, no motion.
    pub fn new(first: TargetSpec<f64>, second: TargetSpec<f64>) -> Result<Self> {
        Ok(Self {
            constants: NuclearConstants::default(),
            first,
            second,
            pattern: None,
            plate: None,
            residual: ResidualMotionModel::default(),
            cycle: BunchCycleConfig::default(),
            grid: FrequencyGrid::new(400.0, 1 << 13, crate::units::FE57_LIFETIME_NS)?,
            counts_scale: 1.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.cycle.validate()?;
        self.first.validate()?;
        self.second.validate()?;
        self.residual.validate()?;
        if let Some(p) = &self.pattern {
            p.validate()?;
        }
        if let Some(p) = &self.plate {
            p.validate()?;
        }
        if !(self.counts_scale >= 0.0) || !self.counts_scale.is_finite() {
            return Err(domain("counts scale must be finite and >= 0"));
        }
        if self.grid.time_grid().window_ns() < 2.0 * self.cycle.bunch_spacing_ns {
            return Err(domain("grid time window must cover twice the bunch spacing"));
        }
        Ok(())
    }

    /// Start of the acoustic kick within the cycle. The kick is the motion of
    /// the voltage pattern when there is one.
    fn kick_start(&self, plate: &PlateSpec<f64>) -> f64 {
        match &self.pattern {
            Some(p) => self.cycle.bunch_start_ns(self.cycle.signal_bunch) + p.tau1_ns,
            None => plate.kick.start_ns,
        }
    }

    /// Plate displacement at cycle times `t`, summed over the echo trains of
    /// the current and earlier cycles. With a voltage pattern the initial
    /// kick of the current cycle is left to the pattern.
    fn acoustic_displacement(&self, plate: &PlateSpec<f64>, t: &[f64]) -> Result<Vec<f64>> {
        let mut plate = *plate;
        plate.kick.start_ns = self.kick_start(&plate);
        let mut z = displacement_history(&plate, t, self.pattern.is_none())?;
        if plate.reflection_loss < 1.0 {
            let period = self.cycle.cycle_duration_ns();
            for m in 1..=WRAPPED_CYCLES {
                let shifted: Vec<f64> = t.iter().map(|&x| x + m as f64 * period).collect();
                for (a, b) in z.iter_mut().zip(displacement_history(&plate, &shifted, false)?) {
                    *a += b;
                }
            }
        }
        Ok(z)
    }

    /// Target-1 phase at the window samples following excitation of bunch
    /// `index` (1-based).
    fn bunch_phases(&self, index: usize, dt: f64, n: usize) -> Result<Vec<f64>> {
        let lambda = crate::units::FE57_WAVELENGTH_PM;
        let mut z = vec![0.0; n];
        let mut z0 = 0.0;
        if let (Some(p), true) = (&self.pattern, index == self.cycle.signal_bunch) {
            let motion = voltage_to_motion(p)?;
            for (j, zj) in z.iter_mut().enumerate() {
                *zj += motion.displacement(j as f64 * dt);
            }
            z0 += motion.displacement_before(0.0);
        }
        if let Some(plate) = &self.plate {
            let start = self.cycle.bunch_start_ns(index);
            let times: Vec<f64> = (0..n).map(|j| start + j as f64 * dt).collect();
            let acoustic = self.acoustic_displacement(plate, &times)?;
            for (zj, a) in z.iter_mut().zip(&acoustic) {
                *zj += a;
            }
            z0 += acoustic[0];
        }
        Ok(z.iter().map(|zj| 2.0 * std::f64::consts::PI * (zj - z0) / lambda).collect())
    }
}

/// Noiseless and sampled detector response of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleOutput {
    /// Bin centers after each excitation.
    pub time_ns: Vec<f64>,
    /// Residual-motion averaged pi intensity at the bin centers, per bunch.
    pub intensity: Vec<Vec<f64>>,
    /// Expected counts per cycle and bin.
    pub rates: BunchRates,
    pub events: EventStream,
    pub histograms: BunchHistograms,
}

impl CycleOutput {
    /// Expected counts of every bunch over `n_cycles`.
    pub fn expected_per_bunch(&self, n_cycles: u64) -> Vec<f64> {
        self.rates.rates.iter().map(|r| r.iter().sum::<f64>() * n_cycles as f64).collect()
    }
}

/// Simulate `n_cycles` control cycles.
///
/// Every bunch excites both targets afresh. Target 1 follows the voltage
/// pattern (signal bunch only) plus the plate echoes reaching that bunch;
/// within one cycle it carries a single residual detuning drawn from the
/// Gauss-Hermite nodes of `setup.residual`, so the noiseless rates are the
/// residual-motion average while the events keep the shot-to-shot
/// correlation.
pub fn simulate_control_cycle(setup: &CycleSetup, n_cycles: u64, seed: u64) -> Result<CycleOutput> {
    setup.validate()?;
    let c = &setup.constants;
    let m1 = NuclearModel::for_target(&setup.first, c)?;
    let m2 = NuclearModel::for_target(&setup.second, c)?;
    let j1 = target_time_response(&setup.first, &m1, &setup.grid);
    let j2 = target_time_response(&setup.second, &m2, &setup.grid);

    let dt = setup.grid.time_grid().dt;
    let spacing = setup.cycle.bunch_spacing_ns;
    let n_bins = (spacing / dt).floor() as usize;
    // one extra sample so every bin has both edges
    let interferometer = WindowedInterferometer::new(&j1, &j2, (n_bins + 1) as f64 * dt, c.lifetime_ns)?;
    let n = interferometer.len();
    if n < n_bins + 1 {
        return Err(domain("grid window is too short for the bunch spacing"));
    }

    let nodes = if setup.residual.sigma_det == 0.0 { vec![(0.0, 1.0)] } else { setup.residual.nodes()? };
    let phases: Vec<Vec<f64>> =
        (1..=setup.cycle.n_bunches).map(|b| setup.bunch_phases(b, dt, n)).collect::<Result<_>>()?;

    // binned[k][b][i]: intensity of bunch b at node k, averaged over bin i
    let binned: Vec<Vec<Vec<f64>>> = nodes
        .par_iter()
        .map(|&(delta, _)| {
            phases
                .iter()
                .map(|p| {
                    let i = interferometer.field_with_phases(p, delta).pi_intensity();
                    (0..n_bins).map(|j| 0.5 * (i[j] + i[j + 1])).collect()
                })
                .collect()
        })
        .collect();

    let mut intensity = vec![vec![0.0; n_bins]; setup.cycle.n_bunches];
    for ((_, w), per_node) in nodes.iter().zip(&binned) {
        for (acc, b) in intensity.iter_mut().zip(per_node) {
            for (a, x) in acc.iter_mut().zip(b) {
                *a += w * x;
            }
        }
    }
    let to_rates = |v: &Vec<Vec<f64>>| {
        BunchRates::new(dt, v.iter().map(|b| b.iter().map(|x| x * setup.counts_scale * dt).collect()).collect())
    };
    let rates = to_rates(&intensity)?;
    let components: Vec<(f64, BunchRates)> =
        nodes.iter().zip(&binned).map(|(&(_, w), b)| Ok((w, to_rates(b)?))).collect::<Result<_>>()?;
    let events = poisson_events_mixture(&components, n_cycles, seed)?;

    let mut histograms = fold_events(&events, setup.cycle.n_bunches, spacing, dt)?;
    for c in &mut histograms.counts {
        c.truncate(n_bins);
    }
    let time_ns = (0..n_bins).map(|i| (i as f64 + 0.5) * dt).collect();
    Ok(CycleOutput { time_ns, intensity, rates, events, histograms })
}
