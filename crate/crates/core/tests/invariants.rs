use std::f64::consts::PI;

use darkfringe::acoustics::{KickSpec, PlateSpec};
use darkfringe::experiment::{simulate_control_cycle, CycleSetup};
use darkfringe::hyperfine::{NuclearConstants, NuclearModel, TargetSpec};
use darkfringe::timedomain::{target_time_response, two_target_time_field, JonesTimeResponse};
use darkfringe::units::FE57_WAVELENGTH_PM;
use darkfringe::{FrequencyGrid, MotionProfile};
use proptest::prelude::*;

fn response(t: &TargetSpec<f64>, grid: &FrequencyGrid<f64>) -> JonesTimeResponse<f64> {
    let model = NuclearModel::for_target(t, &NuclearConstants::default()).unwrap();
    target_time_response(t, &model, grid)
}

/// Energy scattered by one target for sigma-polarized incidence.
fn scattered_energy(j: &JonesTimeResponse<f64>) -> f64 {
    let dt = j.grid().dt;
    j.ss.scattered.iter().chain(&j.ps.scattered).map(|z| z.norm_sqr()).sum::<f64>() * dt
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn analyzed_energy_is_bounded_by_single_target_scattering(
        d1 in 0.2f64..4.0,
        d2 in 0.2f64..4.0,
        a1 in 0.0f64..PI,
        a2 in 0.0f64..PI,
        t_step in 0.0f64..150.0,
        dz in -FE57_WAVELENGTH_PM..FE57_WAVELENGTH_PM,
    ) {
        let grid = FrequencyGrid::new(400.0, 1 << 12, 141.0).unwrap();
        let t1 = TargetSpec::alpha_iron(d1, 33.0, a1).unwrap();
        let t2 = TargetSpec::alpha_iron(d2, 33.0, a2).unwrap();
        let (j1, j2) = (response(&t1, &grid), response(&t2, &grid));
        let field = two_target_time_field(&j1, &j2, &MotionProfile::step(t_step, dz)).unwrap();
        let analyzed: f64 = field.detected_intensity(0.0).unwrap().iter().sum::<f64>() * grid.time_grid().dt;
        let bound = scattered_energy(&j1).max(scattered_energy(&j2));
        prop_assert!(analyzed <= bound * (1.0 + 1e-9), "{analyzed} > {bound}");
    }

    #[test]
    fn scattered_responses_are_causal(d in 0.2f64..5.0, b in 20.0f64..40.0, a in 0.0f64..PI) {
        // long enough that the natural decay does not wrap into negative times
        let grid = FrequencyGrid::new(400.0, 1 << 14, 141.0).unwrap();
        let j = response(&TargetSpec::alpha_iron(d, b, a).unwrap(), &grid);
        let entries = [&j.ss, &j.sp, &j.ps, &j.pp];
        let strongest = entries.iter().map(|r| r.peak()).fold(0.0, f64::max);
        // channels that vanish by symmetry hold only round-off
        for r in entries.into_iter().filter(|r| r.peak() > 1e-9 * strongest) {
            prop_assert!(r.causality_leakage() < 1e-9, "{}", r.causality_leakage());
        }
    }
}

fn revival_setup(amplitude_pm: f64, loss: f64) -> CycleSetup {
    let first = TargetSpec::alpha_iron(1.89, 32.65, 0.75 * PI).unwrap();
    let second = TargetSpec::alpha_iron(1.92, 32.69, 0.255 * PI).unwrap();
    let mut setup = CycleSetup::new(first, second).unwrap();
    setup.grid = FrequencyGrid::new(400.0, 1 << 12, 141.0).unwrap();
    setup.plate = Some(PlateSpec {
        reflection_loss: loss,
        kick: KickSpec { amplitude_pm, ..KickSpec::default() },
        ..PlateSpec::default()
    });
    setup
}

fn expected_counts(setup: &CycleSetup) -> Vec<f64> {
    simulate_control_cycle(setup, 0, 1).unwrap().expected_per_bunch(1)
}

#[test]
fn zero_kick_leaves_all_bunches_alike() {
    let counts = expected_counts(&revival_setup(0.0, 0.5));
    for c in &counts {
        assert!((c / counts[39] - 1.0).abs() < 1e-12, "{counts:?}");
    }
}

#[test]
fn revival_grows_with_kick_amplitude() {
    let quarter = FE57_WAVELENGTH_PM / 4.0;
    let revival: Vec<f64> =
        [0.0, 0.25, 0.5, 1.0, 2.0].iter().map(|f| expected_counts(&revival_setup(f * quarter, 0.5))[15]).collect();
    assert!(revival.windows(2).all(|w| w[1] > w[0]), "{revival:?}");
}

#[test]
fn revival_fades_with_reflection_loss() {
    let amplitude = FE57_WAVELENGTH_PM / 2.0;
    let revival: Vec<f64> =
        [0.25, 0.5, 0.75, 1.0].iter().map(|&l| expected_counts(&revival_setup(amplitude, l))[15]).collect();
    assert!(revival.windows(2).all(|w| w[1] < w[0]), "{revival:?}");
    // total loss: no echo, the bunch sees only the static targets
    let stat = expected_counts(&revival_setup(0.0, 1.0))[15];
    assert!((revival[3] / stat - 1.0).abs() < 1e-12);
}
