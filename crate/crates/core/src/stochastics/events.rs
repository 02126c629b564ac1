use std::io::{Read, Write};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Expected counts per time bin per cycle, for every bunch of the cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct BunchRates {
    pub bin_width_ns: f64,
    /// `rates[b][i]`: bunch `b + 1`, bin `[i w, (i + 1) w)`.
    pub rates: Vec<Vec<f64>>,
}

impl BunchRates {
    pub fn new(bin_width_ns: f64, rates: Vec<Vec<f64>>) -> Result<Self> {
        if !(bin_width_ns > 0.0) {
            return Err(domain("bin width must be positive"));
        }
        if rates.is_empty() {
            return Err(domain("at least one bunch is required"));
        }
        let n = rates[0].len();
        for (b, r) in rates.iter().enumerate() {
            if r.len() != n {
                return Err(domain(format!("bunch {} has {} bins, expected {n}", b + 1, r.len())));
            }
            if let Some(x) = r.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
                return Err(domain(format!("rate {x} in bunch {} is negative or not finite", b + 1)));
            }
        }
        Ok(Self { bin_width_ns, rates })
    }

    pub fn n_bunches(&self) -> usize {
        self.rates.len()
    }

    pub fn n_bins(&self) -> usize {
        self.rates[0].len()
    }

    pub fn total_per_cycle(&self) -> f64 {
        self.rates.iter().flatten().sum()
    }
}

/// One detected photon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub cycle: u64,
    /// 1-based bunch index within the control cycle.
    pub bunch: u32,
    /// Time after the excitation of that bunch.
    pub t_ns: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    pub seed: u64,
    pub n_cycles: u64,
    pub events: Vec<Event>,
}

impl EventStream {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// CSV with header `cycle,bunch,t_ns`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        if self.events.is_empty() {
            w.write_record(["cycle", "bunch", "t_ns"])?;
        }
        for e in &self.events {
            w.serialize(e)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, seed: u64, n_cycles: u64) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let events = r.deserialize().collect::<std::result::Result<Vec<Event>, _>>()?;
        Ok(Self { seed, n_cycles, events })
    }
}

/// Per-cycle generator: one ChaCha stream per cycle index, so the result
/// does not depend on how cycles are scheduled across threads.
fn cycle_rng(seed: u64, cycle: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(cycle);
    rng
}

struct BunchSampler {
    total: Option<Poisson<f64>>,
    bins: Option<WeightedIndex<f64>>,
}

impl BunchSampler {
    fn new(rates: &[f64]) -> Self {
        let total: f64 = rates.iter().sum();
        if total > 0.0 {
            Self {
                total: Some(Poisson::new(total).expect("positive finite mean")),
                bins: Some(WeightedIndex::new(rates).expect("nonnegative weights with positive sum")),
            }
        } else {
            Self { total: None, bins: None }
        }
    }

    /// A Poisson total split multinomially is the same law as independent
    /// Poisson draws per bin.
    fn sample(&self, rng: &mut ChaCha8Rng, cycle: u64, bunch: u32, width: f64, out: &mut Vec<Event>) {
        let (Some(total), Some(bins)) = (&self.total, &self.bins) else { return };
        let n = total.sample(rng) as u64;
        for _ in 0..n {
            let i = bins.sample(rng);
            let t_ns = (i as f64 + rng.random::<f64>()) * width;
            out.push(Event { cycle, bunch, t_ns });
        }
    }
}

fn samplers(rates: &BunchRates) -> Vec<BunchSampler> {
    rates.rates.iter().map(|r| BunchSampler::new(r)).collect()
}

/// Independent Poisson counts for every (cycle, bunch, bin), with event
/// times uniform within their bin. Reproducible for a given `seed`.
pub fn poisson_events(rates: &BunchRates, n_cycles: u64, seed: u64) -> Result<EventStream> {
    let rates = BunchRates::new(rates.bin_width_ns, rates.rates.clone())?;
    poisson_events_mixture(&[(1.0, rates)], n_cycles, seed)
}

/// Each cycle first picks one component with probability proportional to
/// its weight (e.g. a residual detuning drawn for that shot), then samples
/// events from that component's rates.
pub fn poisson_events_mixture(components: &[(f64, BunchRates)], n_cycles: u64, seed: u64) -> Result<EventStream> {
    let Some((_, first)) = components.first() else {
        return Err(domain("mixture needs at least one component"));
    };
    for (_, c) in components {
        if c.n_bunches() != first.n_bunches() || c.bin_width_ns != first.bin_width_ns {
            return Err(domain("mixture components must share bunches and binning"));
        }
    }
    let weights: Vec<f64> = components.iter().map(|c| c.0).collect();
    let chooser = WeightedIndex::new(&weights).map_err(|e| domain(format!("mixture weights: {e}")))?;
    let samplers: Vec<Vec<BunchSampler>> = components.iter().map(|c| samplers(&c.1)).collect();
    let width = first.bin_width_ns;
    let single = components.len() == 1;

    let per_cycle: Vec<Vec<Event>> = (0..n_cycles)
        .into_par_iter()
        .map(|cycle| {
            let mut rng = cycle_rng(seed, cycle);
            let k = if single { 0 } else { chooser.sample(&mut rng) };
            let mut out = Vec::new();
            for (b, s) in samplers[k].iter().enumerate() {
                s.sample(&mut rng, cycle, b as u32 + 1, width, &mut out);
            }
            out
        })
        .collect();
    Ok(EventStream { seed, n_cycles, events: per_cycle.into_iter().flatten().collect() })
}

/// Counts per bunch and time bin.
#[derive(Debug, Clone, PartialEq)]
pub struct BunchHistograms {
    pub bin_width_ns: f64,
    /// `counts[b][i]` for bunch `b + 1`.
    pub counts: Vec<Vec<u64>>,
}

impl BunchHistograms {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Integrated counts of each bunch.
    pub fn per_bunch(&self) -> Vec<u64> {
        self.counts.iter().map(|c| c.iter().sum()).collect()
    }

    /// Counts of bunch `index` (1-based) as floats.
    pub fn bunch(&self, index: usize) -> Vec<f64> {
        self.counts[index - 1].iter().map(|&c| c as f64).collect()
    }
}

/// Sort events into per-bunch histograms covering `[0, bunch_spacing_ns)`.
pub fn fold_events(
    stream: &EventStream,
    n_bunches: usize,
    bunch_spacing_ns: f64,
    bin_width_ns: f64,
) -> Result<BunchHistograms> {
    if !(bin_width_ns > 0.0) || !(bunch_spacing_ns > 0.0) {
        return Err(domain("bin width and bunch spacing must be positive"));
    }
    let n_bins = (bunch_spacing_ns / bin_width_ns).ceil() as usize;
    let mut counts = vec![vec![0u64; n_bins]; n_bunches];
    for e in &stream.events {
        if e.bunch == 0 || e.bunch as usize > n_bunches {
            return Err(Error::Event(format!("bunch {} not in 1..={n_bunches}", e.bunch)));
        }
        if !(e.t_ns >= 0.0 && e.t_ns < bunch_spacing_ns) {
            return Err(Error::Event(format!("time {} ns outside [0, {bunch_spacing_ns})", e.t_ns)));
        }
        let i = ((e.t_ns / bin_width_ns) as usize).min(n_bins - 1);
        counts[e.bunch as usize - 1][i] += 1;
    }
    Ok(BunchHistograms { bin_width_ns, counts })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(n: usize) -> Vec<f64> {
        (0..n).map(|i| 0.02 * (-(i as f64) / 40.0).exp() * (1.0 + (i as f64 / 5.0).cos().powi(2))).collect()
    }

    #[test]
    fn zero_rate_gives_nothing() {
        let r = BunchRates::new(2.0, vec![vec![0.0; 96]; 40]).unwrap();
        assert!(poisson_events(&r, 1000, 1).unwrap().is_empty());
    }

    #[test]
    fn rejects_negative_rates() {
        assert!(BunchRates::new(2.0, vec![vec![0.1, -0.1]]).is_err());
        assert!(BunchRates::new(2.0, vec![vec![0.1], vec![0.1, 0.2]]).is_err());
        assert!(BunchRates::new(0.0, vec![vec![0.1]]).is_err());
    }

    #[test]
    fn deterministic_under_seed() {
        let r = BunchRates::new(2.0, vec![shape(96); 3]).unwrap();
        let a = poisson_events(&r, 500, 9).unwrap();
        let b = poisson_events(&r, 500, 9).unwrap();
        let c = poisson_events(&r, 500, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn totals_concentrate() {
        let r = BunchRates::new(2.0, vec![shape(96); 2]).unwrap();
        let n_cycles = 100_000;
        let s = poisson_events(&r, n_cycles, 3).unwrap();
        let expect = n_cycles as f64 * r.total_per_cycle();
        assert!((s.len() as f64 - expect).abs() < 4.0 * expect.sqrt(), "{} vs {expect}", s.len());
    }

    #[test]
    fn folding_recovers_rate_shape() {
        let rates = shape(96);
        let r = BunchRates::new(2.0, vec![rates.clone(), vec![0.0; 96]]).unwrap();
        let n_cycles = 200_000u64;
        let s = poisson_events(&r, n_cycles, 11).unwrap();
        let h = fold_events(&s, 2, 192.0, 2.0).unwrap();
        assert_eq!(h.total() as usize, s.len());
        assert_eq!(h.per_bunch()[1], 0);
        let chi2: f64 = h.counts[0]
            .iter()
            .zip(&rates)
            .map(|(&c, &mu)| {
                let e = mu * n_cycles as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        let dof = rates.len() as f64;
        // chi^2 / dof has standard deviation sqrt(2 / dof) ~ 0.14
        assert!((chi2 / dof - 1.0).abs() < 0.5, "{}", chi2 / dof);
    }

    #[test]
    fn single_event_folds_to_single_bin() {
        let s = EventStream { seed: 0, n_cycles: 1, events: vec![Event { cycle: 0, bunch: 3, t_ns: 17.3 }] };
        let h = fold_events(&s, 40, 192.0, 1.0).unwrap();
        assert_eq!(h.total(), 1);
        assert_eq!(h.counts[2][17], 1);
    }

    #[test]
    fn fold_rejects_foreign_events() {
        let bad_bunch = EventStream { seed: 0, n_cycles: 1, events: vec![Event { cycle: 0, bunch: 41, t_ns: 1.0 }] };
        assert!(matches!(fold_events(&bad_bunch, 40, 192.0, 1.0), Err(Error::Event(_))));
        let late = EventStream { seed: 0, n_cycles: 1, events: vec![Event { cycle: 0, bunch: 1, t_ns: 192.0 }] };
        assert!(fold_events(&late, 40, 192.0, 1.0).is_err());
    }

    #[test]
    fn mixture_selects_whole_cycles() {
        let on = BunchRates::new(2.0, vec![vec![5.0; 10]]).unwrap();
        let off = BunchRates::new(2.0, vec![vec![0.0; 10]]).unwrap();
        let s = poisson_events_mixture(&[(0.5, on), (0.5, off)], 4000, 2).unwrap();
        let mut per_cycle = vec![0u32; 4000];
        for e in &s.events {
            per_cycle[e.cycle as usize] += 1;
        }
        let silent = per_cycle.iter().filter(|&&c| c == 0).count() as f64;
        // P(no events | on) = e^-50, so silent cycles are the "off" draws
        assert!((silent / 4000.0 - 0.5).abs() < 0.04, "{silent}");
    }

    #[test]
    fn csv_round_trip() {
        let r = BunchRates::new(2.0, vec![shape(96); 2]).unwrap();
        let s = poisson_events(&r, 50, 4).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"cycle,bunch,t_ns\n"));
        let back = EventStream::read_csv(buf.as_slice(), 4, 50).unwrap();
        assert_eq!(back, s);
    }
}
