use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::fit::{FitData, FitParameters, FitResult, Objective};
use crate::error::{domain, Result};

#[derive(Debug, Serialize, Deserialize)]
struct HistogramRow {
    bunch_index: usize,
    t_ns: f64,
    counts: f64,
}

/// Counts per bunch and time bin as read from disk.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeasuredHistogram {
    /// Keyed by 1-based bunch index.
    pub bunches: BTreeMap<usize, FitData>,
}

impl MeasuredHistogram {
    pub fn bunch(&self, index: usize) -> Result<&FitData> {
        self.bunches.get(&index).ok_or_else(|| domain(format!("no data for bunch {index}")))
    }
}

/// Read CSV rows `bunch_index,t_ns,counts`, in any order.
pub fn read_histogram_csv<R: Read>(reader: R) -> Result<MeasuredHistogram> {
    let mut rows: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for row in csv::Reader::from_reader(reader).deserialize() {
        let r: HistogramRow = row?;
        if r.bunch_index == 0 {
            return Err(domain("bunch indices start at 1"));
        }
        rows.entry(r.bunch_index).or_default().push((r.t_ns, r.counts));
    }
    if rows.is_empty() {
        return Err(domain("histogram file holds no rows"));
    }
    let mut out = MeasuredHistogram::default();
    for (b, mut v) in rows {
        v.sort_by(|x, y| x.0.total_cmp(&y.0));
        let data = FitData::new(v.iter().map(|x| x.0).collect(), v.iter().map(|x| x.1).collect())
            .map_err(|e| domain(format!("bunch {b}: {e}")))?;
        out.bunches.insert(b, data);
    }
    Ok(out)
}

/// Write per-bunch series in the format read by [`read_histogram_csv`].
pub fn write_histogram_csv<W: Write>(writer: W, time_ns: &[f64], bunches: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["bunch_index", "t_ns", "counts"])?;
    for (b, values) in bunches.iter().enumerate() {
        if values.len() != time_ns.len() {
            return Err(domain(format!("bunch {} has {} bins for {} times", b + 1, values.len(), time_ns.len())));
        }
        for (t, c) in time_ns.iter().zip(values) {
            w.write_record([(b + 1).to_string(), format!("{t:.6}"), format!("{c:e}")])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Parameter table `parameter,value,uncertainty,free`.
pub fn write_parameter_csv<W: Write>(writer: W, result: &FitResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["parameter", "value", "uncertainty", "free"])?;
    let values = result.parameters.to_array();
    let errors = result.uncertainties.to_array();
    for (i, name) in FitParameters::NAMES.iter().enumerate() {
        let free = result.free.contains(name);
        w.write_record([name.to_string(), format!("{:e}", values[i]), format!("{:e}", errors[i]), free.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Human-readable summary of a fit.
pub fn write_fit_report<W: Write>(mut writer: W, result: &FitResult) -> Result<()> {
    let objective = match result.objective {
        Objective::Poisson => "poisson_deviance",
        Objective::WeightedLeastSquares => "weighted_least_squares",
    };
    writeln!(writer, "objective: {objective}")?;
    writeln!(writer, "objective_value: {:e}", result.objective_value)?;
    writeln!(writer, "bins: {}", result.n_bins)?;
    writeln!(writer, "degrees_of_freedom: {}", result.n_bins.saturating_sub(result.free.len()))?;
    writeln!(writer, "iterations: {}", result.iterations)?;
    writeln!(writer, "parameters:")?;
    let values = result.parameters.to_array();
    let errors = result.uncertainties.to_array();
    for (i, name) in FitParameters::NAMES.iter().enumerate() {
        if result.free.contains(name) {
            writeln!(writer, "  {name}: {:.6e} +- {:.2e}", values[i], errors[i])?;
        } else {
            writeln!(writer, "  {name}: {:.6e} (fixed)", values[i])?;
        }
    }
    writeln!(writer, "correlation:")?;
    for (a, row) in result.covariance.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(b, c)| format!("{:+.3}", c / (result.covariance[a][a] * result.covariance[b][b]).sqrt()))
            .collect();
        writeln!(writer, "  {}: [{}]", result.free[a], line.join(", "))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_round_trip() {
        let t = vec![0.5, 1.5, 2.5];
        let bunches = vec![vec![1.0, 2.0, 3.0], vec![0.0, 4.0, 5.0]];
        let mut buf = Vec::new();
        write_histogram_csv(&mut buf, &t, &bunches).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("bunch_index,t_ns,counts\n1,0.500000,1e0\n"));
        let h = read_histogram_csv(buf.as_slice()).unwrap();
        assert_eq!(h.bunches.len(), 2);
        assert_eq!(h.bunch(2).unwrap().counts, vec![0.0, 4.0, 5.0]);
        assert!(h.bunch(3).is_err());
    }

    #[test]
    fn reads_unsorted_rows() {
        let csv = "bunch_index,t_ns,counts\n40,3.0,7\n40,1.0,5\n";
        let h = read_histogram_csv(csv.as_bytes()).unwrap();
        assert_eq!(h.bunch(40).unwrap().time_ns, vec![1.0, 3.0]);
        assert_eq!(h.bunch(40).unwrap().counts, vec![5.0, 7.0]);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(read_histogram_csv("bunch_index,t_ns,counts\n0,1,1\n".as_bytes()).is_err());
        assert!(read_histogram_csv("bunch_index,t_ns,counts\n1,1,-1\n".as_bytes()).is_err());
        assert!(read_histogram_csv("bunch_index,t_ns,counts\n1,1,x\n".as_bytes()).is_err());
        assert!(read_histogram_csv("bunch_index,t_ns,counts\n".as_bytes()).is_err());
    }
}
