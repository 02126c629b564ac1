use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use darkfringe::experiment::{
    background_enhancement, fit_targets, read_histogram_csv, simulate_control_cycle, write_fit_report,
    write_histogram_csv, write_parameter_csv, CycleSetup, EnhancementTrace, FitConfig, FitData, FitModel,
    FitParameters, Objective, ParameterMask,
};
use darkfringe::hyperfine::NuclearModel;
use darkfringe::timedomain::{gated_spectrum, target_time_response, two_target_time_field};
use darkfringe::{Error, PolarizedTimeField};

use crate::config::{FitModelKind, FitParameterName, ObjectiveConfig, Scenario};
use crate::CliError;

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn csv_writer(dir: &Path, name: &str, header: &[&str]) -> Result<csv::Writer<BufWriter<File>>, CliError> {
    let mut w = csv::Writer::from_writer(create(dir, name)?);
    w.write_record(header).map_err(runtime)?;
    Ok(w)
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

/// Two-target field with target 1 following the scenario motion.
fn static_field(s: &Scenario) -> Result<PolarizedTimeField<f64>, CliError> {
    let m1 = NuclearModel::for_target(&s.first, &s.constants)?;
    let m2 = NuclearModel::for_target(&s.second, &s.constants)?;
    let j1 = target_time_response(&s.first, &m1, &s.grid);
    let j2 = target_time_response(&s.second, &m2, &s.grid);
    Ok(two_target_time_field(&j1, &j2, &s.motion)?)
}

pub fn spectrum(s: &Scenario, out: &Path) -> Result<(), CliError> {
    let field = static_field(s)?;
    let cfg = &s.raw.spectrum;
    let gate = match (cfg.gate_start_ns, cfg.gate_end_ns) {
        (None, None) => None,
        (a, b) => Some((a.unwrap_or(f64::NEG_INFINITY), b.unwrap_or(f64::INFINITY))),
    };
    let leakage = s.raw.analyzer.leakage;
    let pi_gated = gated_spectrum(&field.pi, &s.grid, gate).map_err(|e| CliError::Config(e.to_string()))?;
    let sigma_gated = gated_spectrum(&field.sigma, &s.grid, gate)?;
    let pi_all = gated_spectrum(&field.pi, &s.grid, None)?;
    let sigma_all = gated_spectrum(&field.sigma, &s.grid, None)?;

    let mut w = csv_writer(out, "spectrum.csv", &["detuning_gamma", "gated_intensity", "reference_intensity"])?;
    for k in 0..s.grid.len() {
        let omega = s.grid.omega(k);
        if omega.abs() > cfg.max_detuning_gamma {
            continue;
        }
        let gated = pi_gated[k] + leakage * sigma_gated[k];
        w.write_record([num(omega), num(gated), num(pi_all[k] + sigma_all[k])]).map_err(runtime)?;
    }
    w.flush()?;
    Ok(())
}

pub fn time(s: &Scenario, out: &Path) -> Result<(), CliError> {
    let field = static_field(s)?;
    let detected = field.detected_intensity(s.raw.analyzer.leakage)?;
    let mut w =
        csv_writer(out, "time.csv", &["t_ns", "pi_intensity_per_ns2", "sigma_intensity_per_ns2", "detected_per_ns2"])?;
    let n = field.pi.grid.samples_until(s.raw.time.t_max_ns);
    for (j, d) in detected.iter().enumerate().take(n) {
        w.write_record([
            num(field.pi.time(j)),
            num(field.pi.scattered[j].norm_sqr()),
            num(field.sigma.scattered[j].norm_sqr()),
            num(*d),
        ])
        .map_err(runtime)?;
    }
    w.flush()?;
    Ok(())
}

fn write_trace(w: &mut csv::Writer<BufWriter<File>>, t: f64, a: Option<f64>, b: Option<f64>) -> Result<(), CliError> {
    let cell = |x: Option<f64>| x.map(num).unwrap_or_default();
    w.write_record([num(t), cell(a), cell(b)]).map_err(runtime)
}

/// Enhancement trace, or all-masked as `None` per bin.
fn trace(signal: &[f64], reference: &[f64], time: &[f64], floor: f64) -> Result<Vec<Option<f64>>, CliError> {
    let zeros = vec![0.0; signal.len()];
    match background_enhancement(signal, reference, &zeros, time, floor) {
        Ok(EnhancementTrace { xi, .. }) => Ok(xi),
        Err(Error::AllMasked) => Ok(vec![None; signal.len()]),
        Err(e) => Err(e.into()),
    }
}

pub fn cycle(s: &Scenario, out: &Path, seed: u64, cycles: Option<u64>) -> Result<(), CliError> {
    let n_cycles = cycles.unwrap_or(s.raw.cycle.n_cycles);
    let mut setup = CycleSetup::new(s.first, s.second)?;
    setup.constants = s.constants;
    setup.pattern = s.pattern;
    setup.plate = s.plate;
    setup.residual = s.residual;
    setup.cycle = s.cycle;
    setup.grid = s.grid;
    setup.counts_scale = s.raw.cycle.counts_scale_per_ns;
    setup.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let run = simulate_control_cycle(&setup, n_cycles, seed)?;

    let expected: Vec<Vec<f64>> =
        run.rates.rates.iter().map(|r| r.iter().map(|x| x * n_cycles as f64).collect()).collect();
    let sampled: Vec<Vec<f64>> = run.histograms.counts.iter().map(|c| c.iter().map(|&x| x as f64).collect()).collect();
    write_histogram_csv(create(out, "bunch_spectra.csv")?, &run.time_ns, &sampled)?;
    write_histogram_csv(create(out, "bunch_expected.csv")?, &run.time_ns, &expected)?;

    let mut w = csv_writer(out, "bunch_counts.csv", &["bunch_index", "counts", "expected_counts"])?;
    for (b, (n, mu)) in run.histograms.per_bunch().iter().zip(run.expected_per_bunch(n_cycles)).enumerate() {
        w.write_record([(b + 1).to_string(), n.to_string(), num(mu)]).map_err(runtime)?;
    }
    w.flush()?;

    let (sig, refb) = (s.cycle.signal_bunch - 1, s.cycle.reference_bunch - 1);
    let floor = s.raw.cycle.count_floor;
    let measured = trace(&sampled[sig], &sampled[refb], &run.time_ns, floor)?;
    let ideal = trace(&expected[sig], &expected[refb], &run.time_ns, floor)?;
    let mut w = csv_writer(out, "enhancement.csv", &["t_ns", "xi", "xi_expected"])?;
    for ((t, a), b) in run.time_ns.iter().zip(measured).zip(ideal) {
        write_trace(&mut w, *t, a, b)?;
    }
    w.flush()?;

    run.events.write_csv(create(out, "events.csv")?)?;
    Ok(())
}

pub fn fit(s: &Scenario, out: &Path, data: &Path) -> Result<(), CliError> {
    let cfg = &s.raw.fit;
    let file = File::open(data).map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", data.display())))?;
    let histogram = read_histogram_csv(file)?;
    let bunch = cfg.bunch_index.unwrap_or(s.cycle.reference_bunch);
    let measured: &FitData = histogram.bunch(bunch)?;

    let model = match cfg.model {
        FitModelKind::Single => FitModel::SingleTarget { target: s.first, constants: s.constants, grid: s.grid },
        FitModelKind::Two => FitModel::TwoTarget {
            first: s.first,
            second: s.second,
            constants: s.constants,
            grid: s.grid,
            quadrature_order: s.residual.quadrature_order,
        },
    };
    let mut mask = ParameterMask::default();
    for p in &cfg.free {
        match p {
            FitParameterName::Thickness => mask.thickness = true,
            FitParameterName::BField => mask.b_field = true,
            FitParameterName::Alpha => mask.alpha = true,
            FitParameterName::MuED => mask.mu_e_d = true,
            FitParameterName::SigmaDet => mask.sigma_det = true,
            FitParameterName::Scale => mask.scale = true,
        }
    }
    let sigma0 = cfg.initial_sigma_det_gamma.unwrap_or(s.residual.sigma_det);
    let initial = FitParameters::from_target(&s.first, sigma0, cfg.initial_scale);
    let config = FitConfig {
        objective: match cfg.objective {
            ObjectiveConfig::Poisson => Objective::Poisson,
            ObjectiveConfig::WeightedLeastSquares => Objective::WeightedLeastSquares,
        },
        mask,
        veto_ns: cfg.veto_ns,
        max_iters: cfg.max_iters,
        restarts: cfg.restarts,
        refine: cfg.refine,
        ..FitConfig::default()
    };
    let result = match fit_targets(&model, measured, &initial, &config) {
        Ok(r) => r,
        Err(Error::Domain(msg)) => return Err(CliError::Config(format!("[fit] {msg}"))),
        Err(e @ Error::FitNotConverged { .. }) => {
            if let Error::FitNotConverged { best_parameters, .. } = &e {
                let names = FitParameters::NAMES.iter().zip(best_parameters);
                let best: Vec<String> = names.map(|(n, v)| format!("{n}={v:e}")).collect();
                eprintln!("best so far: {}", best.join(" "));
            }
            return Err(e.into());
        }
        Err(e) => return Err(e.into()),
    };
    write_fit_report(create(out, "fit_report.txt")?, &result)?;
    write_parameter_csv(create(out, "fit_parameters.csv")?, &result)?;
    let mut stdout = std::io::stdout().lock();
    write_fit_report(&mut stdout, &result)?;
    stdout.flush()?;
    Ok(())
}
