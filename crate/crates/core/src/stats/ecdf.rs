use std::io::Write;

use crate::{Error, Result};

/// Empirical distribution function of a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

/// Builds the ECDF `F_n(x) = #{x_i ≤ x} / n`.
pub fn ecdf(samples: &[f64]) -> Result<Ecdf> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "ECDF needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    if let Some(bad) = samples.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite sample {bad}")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Ecdf { sorted })
}

impl Ecdf {
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// Lower empirical quantile: the smallest sample with `F_n ≥ p`.
    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.sorted.len();
        let i = ((p * n as f64).ceil() as usize).clamp(1, n);
        self.sorted[i - 1]
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }

    /// One `x,F` row per distinct sample value, at the top of each step.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.sorted.len() as f64;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "F"])?;
        for (i, &x) in self.sorted.iter().enumerate() {
            if self.sorted.get(i + 1) == Some(&x) {
                continue;
            }
            w.write_record([x.to_string(), ((i + 1) as f64 / n).to_string()])?;
        }
        w.flush().map_err(|e| Error::io("ECDF CSV", e))?;
        Ok(())
    }
}

/// Density histogram with `bins` equal-width bins over the sample range, as
/// (bin centre, density) pairs.
pub fn histogram_pdf(samples: &[f64], bins: usize) -> Result<Vec<(f64, f64)>> {
    if samples.is_empty() || bins == 0 {
        return Err(Error::InvalidArgument("histogram needs samples and bins".into()));
    }
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument("non-finite sample in histogram".into()));
    }
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &x in samples {
        let b = (((x - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let norm = samples.len() as f64 * width;
    Ok(counts
        .iter()
        .enumerate()
        .map(|(b, &c)| (lo + (b as f64 + 0.5) * width, c as f64 / norm))
        .collect())
}

/// Writes `(x, y)` pairs as a two-column CSV.
pub fn write_curve<W: Write>(out: W, header: [&str; 2], points: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for (x, y) in points {
        w.write_record([x.to_string(), y.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("curve CSV", e))?;
    Ok(())
}
