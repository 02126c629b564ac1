//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Tolerances are fixed here and never loosened to make a
//! line pass.

use std::f64::consts::{FRAC_PI_4, PI};
use std::time::Instant;

use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;

use darkfringe::acoustics::{echo_bunch, roundtrip_time, PlateSpec};
use darkfringe::experiment::{
    background_enhancement, enhancement, fit_targets, simulate_control_cycle, CycleSetup, FitConfig, FitData, FitModel,
    FitParameters, ParameterMask, VoltagePattern, FIT_QUADRATURE_ORDER,
};
use darkfringe::hyperfine::{NuclearConstants, NuclearModel, TargetSpec};
use darkfringe::polarimeter::{compose_responses, compose_two_targets, gated_intensity_from, TargetResponse};
use darkfringe::stochastics::{
    averaged_window_intensity, detuned_chain_intensity, detuning_averaged_intensity, displacement_spread, fold_events,
    poisson_events, velocity_of_detuning, BunchRates,
};
use darkfringe::timedomain::{
    apply_motion_jones, compose_time, gated_spectrum, target_time_response, two_target_time_field, JonesTimeResponse,
};
use darkfringe::{FrequencyGrid, MotionProfile, ResidualMotionModel, TimeResponse, WindowedInterferometer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LAMBDA_PM: f64 = darkfringe::units::FE57_WAVELENGTH_PM;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn constants() -> NuclearConstants<f64> {
    NuclearConstants::default()
}

fn model(t: &TargetSpec<f64>) -> NuclearModel<f64> {
    NuclearModel::for_target(t, &constants()).unwrap()
}

/// Foil that is moved in the measurements.
fn moving_target() -> TargetSpec<f64> {
    TargetSpec::alpha_iron(1.89, 32.65, 0.75 * PI).unwrap()
}

/// Foil that stays put.
fn static_target() -> TargetSpec<f64> {
    TargetSpec::alpha_iron(1.92, 32.69, 0.255 * PI).unwrap()
}

fn identical_pair() -> (TargetSpec<f64>, TargetSpec<f64>) {
    let t = TargetSpec::alpha_iron(1.92, 32.69, FRAC_PI_4).unwrap();
    (t, t.with_alpha(-FRAC_PI_4))
}

fn jones(t: &TargetSpec<f64>, grid: &FrequencyGrid<f64>) -> JonesTimeResponse<f64> {
    target_time_response(t, &model(t), grid)
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

fn rel_l2(a: &[num_complex::Complex<f64>], b: &[num_complex::Complex<f64>]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let (a, b) = identical_pair();
    let (ma, mb) = (model(&a), model(&b));
    let grid = FrequencyGrid::new(400.0, 1 << 14, 141.0).unwrap();
    let freq_worst = (0..grid.len())
        .map(|k| compose_two_targets(&a, &ma, &b, &mb, grid.omega(k), 0.0).0.pi.norm_sqr())
        .fold(0.0, f64::max);
    let field = two_target_time_field(&jones(&a, &grid), &jones(&b, &grid), &MotionProfile::stationary()).unwrap();
    // incident pulse carries unit area; compare densities with the prompt-free
    // sigma light as well
    let time_worst = max_of(&field.pi.scattered.iter().map(|z| z.norm_sqr()).collect::<Vec<_>>());
    let elapsed = start.elapsed().as_secs_f64();
    outcome(
        freq_worst < 1e-20 && time_worst < 1e-20 && elapsed < 1.0,
        format!("max |pi|^2 = {freq_worst:.1e} (frequency), {time_worst:.1e} (time); {elapsed:.2} s"),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let draws = 200;
    for _ in 0..draws {
        let t1 = TargetSpec::alpha_iron(rng.random_range(0.3..5.0), rng.random_range(30.0..34.0), FRAC_PI_4).unwrap();
        let t2 = TargetSpec::alpha_iron(rng.random_range(0.3..5.0), rng.random_range(30.0..34.0), -FRAC_PI_4).unwrap();
        let omega = rng.random_range(-80.0..80.0);
        let phi = rng.random_range(0.0..2.0 * PI);
        let (_, ledger) = compose_two_targets(&t1, &model(&t1), &t2, &model(&t2), omega, phi);
        let s0 = ledger.s0.norm();
        worst = worst.max(ledger.s2.norm() / s0).max(ledger.p2.norm() / s0);
    }
    outcome(worst < 1e-12, format!("{draws} unequal pairs, max |S2|,|P2| / |S0| = {worst:.1e}"))
}

fn criterion_3() -> Outcome {
    let (a, b) = identical_pair();
    let grid = FrequencyGrid::new(400.0, 1 << 14, 141.0).unwrap();
    let (j1, j2) = (jones(&a, &grid), jones(&b, &grid));
    let m = model(&a);
    let dt_gamma = grid.dt_gamma();
    let probes = [m.line(6).unwrap(), m.line(3).unwrap() + 1.0, 0.0];
    let mut worst: f64 = 0.0;
    for i in 0..=8 {
        let phi = i as f64 * PI / 4.0;
        // displacement step right after excitation: phase phi on target 1
        let motion = MotionProfile::step(0.0, phi / (2.0 * PI) * LAMBDA_PM);
        let moved = apply_motion_jones(&j1, &motion).unwrap();
        let pi = compose_time(&moved, &j2).unwrap().ps.spectrum(&grid).unwrap();
        for &w in &probes {
            let k = grid.nearest_index(w);
            let r = m.responses_sampled(grid.omega(k), dt_gamma);
            let law = gated_intensity_from(r, a.attenuation(), phi);
            let full = gated_intensity_from(r, a.attenuation(), PI);
            worst = worst.max((pi[k].norm_sqr() - law).abs() / full);
        }
    }
    outcome(
        worst < 1e-3,
        format!("max |I - E^4 sin^2(phi/2) |Tc - Tl|^2| / I(pi) = {worst:.1e} over 9 phases x 3 detunings"),
    )
}

fn criterion_4() -> Outcome {
    let (t1, t2) = (moving_target(), static_target());
    let grid = FrequencyGrid::new(400.0, 1 << 14, 141.0).unwrap();
    let (m1, m2) = (model(&t1), model(&t2));
    let dt_gamma = grid.dt_gamma();
    let product: Vec<_> = (0..grid.len())
        .map(|k| {
            let w = grid.omega(k);
            let r1 = TargetResponse {
                responses: m1.responses_sampled(w, dt_gamma),
                alpha: t1.alpha,
                attenuation: t1.attenuation(),
            };
            let r2 = TargetResponse {
                responses: m2.responses_sampled(w, dt_gamma),
                alpha: t2.alpha,
                attenuation: t2.attenuation(),
            };
            compose_responses(&r1, &r2, 0.0).0.pi
        })
        .collect();
    let from_spectrum = TimeResponse::from_spectrum(num_complex::Complex::new(0.0, 0.0), &product, &grid).unwrap();
    let composed = compose_time(&jones(&t1, &grid), &jones(&t2, &grid)).unwrap();
    let err = rel_l2(&composed.ps.scattered, &from_spectrum.scattered);
    outcome(err < 1e-9, format!("relative L2 = {err:.1e}"))
}

fn criterion_5() -> Outcome {
    let plate = PlateSpec::<f64>::default();
    let rt = roundtrip_time(&plate);
    let predicted = echo_bunch(&plate, 1, 192.0);

    let mut setup = CycleSetup::new(moving_target(), static_target()).unwrap();
    setup.pattern = Some(VoltagePattern::default());
    setup.plate = Some(plate);
    let run = simulate_control_cycle(&setup, 1, 1).unwrap();
    let totals: Vec<f64> = run.intensity.iter().map(|b| b.iter().sum()).collect();
    let (revival, _) =
        totals[1..].iter().enumerate().fold((0, 0.0), |(bi, bv), (i, &v)| if v > bv { (i + 2, v) } else { (bi, bv) });
    outcome(
        (rt - 2.9197).abs() < 1e-4 && (predicted as i64 - 16).abs() <= 1 && (revival as i64 - 16).abs() <= 1,
        format!("roundtrip {rt:.4} us; echo predicted in bunch {predicted}, brightest later bunch {revival}"),
    )
}

fn criterion_6() -> Outcome {
    let m = model(&static_target());
    let v1 = velocity_of_detuning(1.0, &m);
    let vs = velocity_of_detuning(0.302, &m);
    let x = displacement_spread(vs, 100.0).unwrap();
    outcome(
        (v1 - 0.098).abs() <= 0.003 && (vs - 0.0296).abs() <= 0.001 && (x - 47.0).abs() <= 2.0,
        format!("1 gamma -> {v1:.4} mm/s; 0.302 gamma -> {vs:.4} mm/s; 100 Hz -> {x:.1} nm"),
    )
}

fn criterion_7() -> Outcome {
    let (t1, t2) = (moving_target(), static_target());
    let grid = FrequencyGrid::new(400.0, 1 << 13, 141.0).unwrap();
    let (j1, j2) = (jones(&t1, &grid), jones(&t2, &grid));
    let residual = ResidualMotionModel::with_sigma(0.302).unwrap();
    let sigma = residual.sigma_det;
    let n = 10_000;
    let h = 20.0 * sigma / n as f64;
    let riemann = |f: &dyn Fn(f64) -> Vec<f64>| {
        let mut acc: Vec<f64> = Vec::new();
        for k in 0..=n {
            let d = -10.0 * sigma + k as f64 * h;
            let v = f(d);
            acc.resize(v.len(), 0.0);
            let w = residual.density(d) * h;
            for (a, x) in acc.iter_mut().zip(v) {
                *a += w * x;
            }
        }
        acc
    };
    let rel = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / max_of(b);

    // scalar chain of the sigma-sigma channels
    let dt = grid.time_grid().dt;
    let len = grid.time_grid().samples_until(192.0);
    let (e1, e2) = (&j1.ss.scattered[..len], &j2.ss.scattered[..len]);
    let quad = detuning_averaged_intensity(e1, e2, dt, 141.0, &residual).unwrap();
    let oracle = riemann(&|d| detuned_chain_intensity(e1, e2, dt, 141.0, d));
    let scalar = rel(&quad, &oracle);

    // full Jones chain behind the analyzer
    let w = WindowedInterferometer::new(&j1, &j2, 192.0, 141.0).unwrap();
    let zeros = vec![0.0; w.len()];
    let quad = averaged_window_intensity(&w, &zeros, &residual).unwrap();
    let oracle = riemann(&|d| w.field_with_phases(&zeros, d).pi_intensity());
    let full = rel(&quad, &oracle);
    outcome(
        scalar < 1e-5 && full < 1e-5,
        format!("max relative error {scalar:.1e} (scalar chain), {full:.1e} (Jones chain)"),
    )
}

fn bins(width: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| (i as f64 + 0.5) * width).collect()
}

/// Poisson counts with expectations `mu` drawn through the event sampler.
fn noisy(mu: &[f64], width: f64, seed: u64) -> Vec<f64> {
    let rates = BunchRates::new(width, vec![mu.to_vec()]).unwrap();
    let events = poisson_events(&rates, 1, seed).unwrap();
    let h = fold_events(&events, 1, mu.len() as f64 * width, width).unwrap();
    h.bunch(1)[..mu.len()].to_vec()
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let grid = FrequencyGrid::new(400.0, 1 << 12, 141.0).unwrap();
    let times = bins(2.0, 96);
    let rel = |a: f64, b: f64| (a / b - 1.0).abs();

    // single target, parallel polarizers
    let target = static_target();
    let single = FitModel::SingleTarget { target, constants: constants(), grid };
    let mask = ParameterMask { thickness: true, b_field: true, alpha: true, scale: true, ..Default::default() };
    let config = FitConfig { mask, ..Default::default() };
    let shape = single.predict(&FitParameters::from_target(&target, 0.0, 1.0), &times).unwrap();
    let kept: f64 = times.iter().zip(&shape).filter(|(t, _)| **t >= config.veto_ns).map(|(_, s)| s).sum();
    let truth = FitParameters::from_target(&target, 0.0, 1e6 / kept);
    let start_guess = FitParameters { thickness_um: 2.1, b_field_t: 32.4, alpha: 0.23 * PI, ..truth };

    let exact = FitData::new(times.clone(), single.predict(&truth, &times).unwrap()).unwrap();
    let r = fit_targets(&single, &exact, &start_guess, &config).unwrap().parameters;
    let noiseless_single =
        rel(r.thickness_um, truth.thickness_um).max(rel(r.b_field_t, truth.b_field_t)).max(rel(r.alpha, truth.alpha));

    let counts = noisy(&single.predict(&truth, &times).unwrap(), 2.0, 8);
    let data = FitData::new(times.clone(), counts).unwrap();
    let r = fit_targets(&single, &data, &start_guess, &config).unwrap().parameters;
    let noisy_single =
        [rel(r.thickness_um, truth.thickness_um), rel(r.b_field_t, truth.b_field_t), rel(r.alpha, truth.alpha)];

    // two targets, static, residual motion
    let two = FitModel::TwoTarget {
        first: moving_target(),
        second: static_target(),
        constants: constants(),
        grid,
        quadrature_order: FIT_QUADRATURE_ORDER,
    };
    let mask = ParameterMask { sigma_det: true, scale: true, ..Default::default() };
    let config = FitConfig { mask, ..Default::default() };
    let shape = two.predict(&FitParameters::from_target(&moving_target(), 0.302, 1.0), &times).unwrap();
    let kept: f64 = times.iter().zip(&shape).filter(|(t, _)| **t >= config.veto_ns).map(|(_, s)| s).sum();
    let truth = FitParameters::from_target(&moving_target(), 0.302, 1e6 / kept);
    let guess = FitParameters { sigma_det: 0.2, ..truth };
    let exact = FitData::new(times.clone(), two.predict(&truth, &times).unwrap()).unwrap();
    let noiseless_two = rel(fit_targets(&two, &exact, &guess, &config).unwrap().parameters.sigma_det, 0.302);
    let counts = noisy(&two.predict(&truth, &times).unwrap(), 2.0, 9);
    let fitted = fit_targets(&two, &FitData::new(times.clone(), counts).unwrap(), &guess, &config).unwrap();
    let noisy_two = rel(fitted.parameters.sigma_det, 0.302);

    let elapsed = start.elapsed().as_secs_f64();
    let pass = noiseless_single < 1e-4
        && noiseless_two < 1e-4
        && noisy_single.iter().all(|&e| e < 0.02)
        && noisy_two < 0.05
        && elapsed < 300.0;
    outcome(
        pass,
        format!(
            "noiseless max rel error {noiseless_single:.1e} (d, B, alpha), {noiseless_two:.1e} (sigma_det); \
             1e6 counts: d {:.2}%, B {:.2}%, alpha {:.2}%, sigma_det {:.2}% (+- {:.2}%); {elapsed:.0} s",
            100.0 * noisy_single[0],
            100.0 * noisy_single[1],
            100.0 * noisy_single[2],
            100.0 * noisy_two,
            100.0 * fitted.uncertainties.sigma_det / 0.302,
        ),
    )
}

/// Local maxima whose prominence exceeds `min_prominence`.
fn prominent_peaks(v: &[f64], min_prominence: f64) -> Vec<usize> {
    let mut out = Vec::new();
    for i in 1..v.len() - 1 {
        if !(v[i] >= v[i - 1] && v[i] > v[i + 1]) {
            continue;
        }
        // lowest point on each side before reaching higher ground
        let base = |range: &mut dyn Iterator<Item = usize>| {
            let mut low = v[i];
            for j in range {
                if v[j] > v[i] {
                    break;
                }
                low = low.min(v[j]);
            }
            low
        };
        let left = base(&mut (0..i).rev());
        let right = base(&mut (i + 1..v.len()));
        if v[i] - left.max(right) > min_prominence {
            out.push(i);
        }
    }
    out
}

struct Lorentzian<'a> {
    omega: &'a [f64],
    y: &'a [f64],
}

impl Lorentzian<'_> {
    fn eval(p: &[f64], w: f64) -> f64 {
        let x = (w - p[1]) / (0.5 * p[2].abs());
        p[0] / (1.0 + x * x)
    }
}

impl CostFunction for Lorentzian<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> Result<f64, argmin::core::Error> {
        Ok(self.omega.iter().zip(self.y).map(|(&w, &y)| (Self::eval(p, w) - y).powi(2)).sum())
    }
}

/// Least-squares Lorentzian FWHM of the feature within `half_window` of `center`.
fn fitted_width(omega: &[f64], y: &[f64], center: f64, half_window: f64) -> f64 {
    let (w, v): (Vec<f64>, Vec<f64>) =
        omega.iter().zip(y).filter(|(w, _)| (**w - center).abs() <= half_window).map(|(a, b)| (*a, *b)).unzip();
    let start = vec![max_of(&v), center, 4.0];
    let simplex = vec![
        start.clone(),
        vec![start[0] * 1.2, center, 4.0],
        vec![start[0], center + 1.0, 4.0],
        vec![start[0], center, 6.0],
    ];
    let solver = NelderMead::new(simplex).with_sd_tolerance(1e-12).unwrap();
    let res = Executor::new(Lorentzian { omega: &w, y: &v }, solver).configure(|s| s.max_iters(5000)).run().unwrap();
    res.state.best_param.unwrap()[2].abs()
}

fn criterion_9() -> Outcome {
    let (a, b) = identical_pair();
    let grid = FrequencyGrid::new(400.0, 1 << 14, 141.0).unwrap();
    let (j1, j2) = (jones(&a, &grid), jones(&b, &grid));
    let half = LAMBDA_PM / 2.0;
    let motion1 = MotionProfile::step(10.0, half);
    let motion2 = MotionProfile::steps(&[(30.0, half), (110.0, -half)]).unwrap();
    let f1 = two_target_time_field(&j1, &j2, &motion1).unwrap();
    let f2 = two_target_time_field(&j1, &j2, &motion2).unwrap();
    let n = grid.len() / 2;
    let intensity = |f: &darkfringe::PolarizedTimeField<f64>| -> Vec<f64> {
        f.pi.scattered[..n].iter().map(|z| z.norm_sqr()).collect()
    };
    let (i1, i2) = (intensity(&f1), intensity(&f2));
    let time = |j: usize| j as f64 * grid.time_grid().dt;
    let max_where = |v: &[f64], keep: &dyn Fn(f64) -> bool| {
        (0..n).filter(|&j| keep(time(j))).map(|j| v[j]).fold(0.0, f64::max) / max_of(v)
    };
    let before = max_where(&i1, &|t| t < 10.0);
    let after_onset = i1[(0..n).find(|&j| time(j) > 10.0).unwrap()] / max_of(&i1);
    let early = max_where(&i2, &|t| t < 30.0);
    let late = max_where(&i2, &|t| t >= 110.0);

    let s1 = gated_spectrum(&f1.pi, &grid, None).unwrap();
    let s2 = gated_spectrum(&f2.pi, &grid, None).unwrap();
    let direct = gated_spectrum(&f1.sigma, &grid, None).unwrap();
    let omega: Vec<f64> = (0..grid.len()).map(|k| grid.omega(k)).collect();
    let band = |s: &[f64], lo: f64, hi: f64| -> Vec<f64> {
        omega.iter().zip(s).filter(|(w, _)| w.abs() >= lo && w.abs() <= hi).map(|(_, x)| *x).collect()
    };

    // peaks standing out by at least a tenth of the strongest one
    let count = |s: &[f64]| {
        let v = band(s, 0.0, 100.0);
        prominent_peaks(&v, 0.1 * max_of(&v)).len()
    };
    let (n1, n2) = (count(&s1), count(&s2));

    // far wings: the gated light falls away, the direct beam stays near unity
    let wing = |s: &[f64]| max_of(&band(s, 200.0, 300.0)) / max_of(s);
    let wing = wing(&s1).max(wing(&s2));
    let direct_wing = band(&direct, 200.0, 300.0).into_iter().fold(f64::INFINITY, f64::min);

    let line6 = model(&a).line(6).unwrap();
    let width1 = fitted_width(&omega, &s1, line6, 10.0);
    let width2 = fitted_width(&omega, &s2, line6, 10.0);

    let pass = before < 1e-20
        && after_onset > 1e-3
        && early < 1e-6
        && late < 1e-6
        && n1 == 6
        && n2 == 6
        && wing < 1e-2
        && direct_wing > 0.5
        && width2 > width1;
    outcome(
        pass,
        format!(
            "motion 1 before 10 ns {before:.1e} of peak; motion 2 outside [30, 110] ns {early:.1e} before, \
             {late:.1e} after; prominent peaks {n1} (motion 1), {n2} (motion 2); far-wing gated {wing:.1e} of peak \
             vs direct {direct_wing:.2}; fitted line-6 width {width1:.2} -> {width2:.2} gamma"
        ),
    )
}

fn criterion_10() -> Outcome {
    let mut setup = CycleSetup::new(moving_target(), static_target()).unwrap();
    setup.pattern = Some(VoltagePattern { tau1_ns: 48.0, ..Default::default() });
    setup.residual = ResidualMotionModel::with_sigma(0.302).unwrap();
    setup.counts_scale = 1e4;
    let run = simulate_control_cycle(&setup, 0, 1).unwrap();
    let (signal, reference) = (&run.rates.rates[0], &run.rates.rates[39]);
    let floor = 1e-3 * max_of(reference);
    let xi = enhancement(signal, reference, &run.time_ns, floor).unwrap();
    let scale = max_of(signal).max(max_of(reference));

    let big = vec![1e12 * scale; signal.len()];
    let large = background_enhancement(signal, reference, &big, &run.time_ns, floor).unwrap();
    let to_one = large.defined().map(|(_, x)| (x - 1.0).abs()).fold(0.0, f64::max);

    let tiny = vec![1e-12 * scale; signal.len()];
    let small = background_enhancement(signal, reference, &tiny, &run.time_ns, floor).unwrap();
    let to_xi = small
        .xi
        .iter()
        .zip(&xi.xi)
        .filter_map(|(a, b)| Some((a.as_ref()? / b.as_ref()? - 1.0).abs()))
        .fold(0.0, f64::max);
    let peak_xi = xi.defined().map(|(_, x)| x).fold(0.0, f64::max);
    outcome(
        to_one < 1e-6 && to_xi < 1e-6,
        format!("rho -> inf: max |xi_exp - 1| = {to_one:.1e}; rho -> 0: max |xi_exp / xi - 1| = {to_xi:.1e} (peak xi {peak_xi:.1})"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("dark-fringe null", criterion_1),
        ("pathway cancellation", criterion_2),
        ("gating law", criterion_3),
        ("Fourier/convolution oracle", criterion_4),
        ("revival timing", criterion_5),
        ("conversion chain", criterion_6),
        ("quadrature vs Riemann", criterion_7),
        ("fit round trips", criterion_8),
        ("gate window, peaks and linewidths", criterion_9),
        ("background enhancement limits", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!("{} criterion {:>2} ({name}): {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
