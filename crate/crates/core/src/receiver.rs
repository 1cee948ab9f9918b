//! Matched filtering against PRS replicas.
//!
//! Two routes compute the same matched-filter quantity:
//!
//! - [`caf`] builds the full delay-Doppler map of a composite by FFT
//!   correlation, one row per Doppler hypothesis.
//! - [`interference_sample`] evaluates, for each interferer, only the single
//!   cell at the signal of interest's delay and Doppler.
//!
//! The replica is the transmit burst with its cyclic prefixes blanked, as an
//! OFDM receiver discards them, and keeps its transmit amplitude `√P_TX`.
//! Correlations are time averages over the replica: the sum is divided by
//! the replica's active energy per watt of transmit power, which is the
//! active sample count up to the data-dependent power the CP carried. A clean
//! link therefore peaks at exactly `L·P_TX²`, and comb-disjoint satellites at
//! equal delay and Doppler are exactly orthogonal.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::channel::{delay_in_samples, phasors, render_link, start_index, ReceivedComposite, Transmission};
use crate::geometry::ChannelParams;
use crate::prs::{transmit_burst, BasebandSignal, PrsConfig};
use crate::{Error, Result};

/// Local copy of a satellite's PRS used by the correlator.
#[derive(Debug, Clone, PartialEq)]
pub struct Replica {
    /// Transmit burst with every cyclic prefix set to zero.
    pub signal: BasebandSignal,
    /// Number of non-blanked samples.
    pub active: usize,
    /// Active energy divided by the burst's mean power; divides every
    /// correlation sum.
    pub normalizer: f64,
}

impl Replica {
    pub fn from_burst(tx: &BasebandSignal, config: &PrsConfig) -> Result<Self> {
        let sym = config.symbol_len();
        if tx.len() != config.burst_len() {
            return Err(Error::InvalidArgument(
                "burst length does not match the PRS configuration".into(),
            ));
        }
        let mut signal = tx.clone();
        for (n, s) in signal.samples.iter_mut().enumerate() {
            if n % sym < config.cp_len {
                *s = Complex64::new(0.0, 0.0);
            }
        }
        let normalizer = signal.energy() / tx.mean_power();
        Ok(Self {
            signal,
            active: config.symbols * config.fft_size,
            normalizer,
        })
    }

    pub fn len(&self) -> usize {
        self.signal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signal.is_empty()
    }
}

/// Doppler hypotheses searched by the receiver, Hz, strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DopplerGrid {
    values: Vec<f64>,
}

impl DopplerGrid {
    /// `-max, -max + step, …, +max`.
    pub fn symmetric(max: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !(max >= 0.0) {
            return Err(Error::InvalidArgument("Doppler grid needs max ≥ 0 and step > 0".into()));
        }
        let half = (max / step).round() as i64;
        Self::new((-half..=half).map(|i| i as f64 * step).collect())
    }

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("empty Doppler grid".into()));
        }
        if values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(
                "Doppler grid must be strictly increasing".into(),
            ));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest searched magnitude.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Index of the hypothesis closest to `doppler`.
    pub fn nearest(&self, doppler: f64) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if (v - doppler).abs() < (self.values[best] - doppler).abs() {
                best = i;
            }
        }
        best
    }
}

/// `|χ|²` over delay (columns) and Doppler (rows).
#[derive(Debug, Clone, PartialEq)]
pub struct DelayDopplerMap {
    /// Row-major, one row per Doppler hypothesis.
    pub values: Vec<f64>,
    /// Receiver time at which the replica starts, s.
    pub delays: Vec<f64>,
    pub dopplers: Vec<f64>,
}

impl DelayDopplerMap {
    pub fn get(&self, doppler_idx: usize, delay_idx: usize) -> f64 {
        self.values[doppler_idx * self.delays.len() + delay_idx]
    }

    /// `(doppler index, delay index, value)` of the largest cell.
    pub fn argmax(&self) -> (usize, usize, f64) {
        let (i, v) =
            self.values.iter().enumerate().fold(
                (0, f64::NEG_INFINITY),
                |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) },
            );
        let cols = self.delays.len();
        (i / cols, i % cols, v)
    }

    /// Binary dump: `DDM1`, u32 row and column counts, the Doppler axis, the
    /// delay axis and the row-major values, all little-endian `f64`.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(12 + 8 * (self.values.len() + self.delays.len() + self.dopplers.len()));
        buf.extend_from_slice(b"DDM1");
        buf.extend_from_slice(&(self.dopplers.len() as u32).to_le_bytes());
        buf.extend_from_slice(&(self.delays.len() as u32).to_le_bytes());
        for v in self.dopplers.iter().chain(&self.delays).chain(&self.values) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    /// Wide CSV for the delay columns `[from, to)`: a header row of delays, then
    /// one row per Doppler hypothesis led by its frequency.
    pub fn write_csv<W: Write>(&self, out: W, from: usize, to: usize) -> Result<()> {
        let to = to.min(self.delays.len());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["doppler_hz\\delay_s".to_string()];
        header.extend(self.delays[from..to].iter().map(|d| format!("{d:.9e}")));
        w.write_record(&header)?;
        for (r, f) in self.dopplers.iter().enumerate() {
            let mut row = vec![f.to_string()];
            row.extend((from..to).map(|c| format!("{:e}", self.get(r, c))));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("ddm csv", e))?;
        Ok(())
    }
}

/// Cross-ambiguity of the composite against `replica` for every lag of the
/// buffer and every Doppler hypothesis of `grid`.
pub fn caf(y: &ReceivedComposite, replica: &Replica, grid: &DopplerGrid) -> Result<DelayDopplerMap> {
    let (b, n) = (y.samples.len(), replica.len());
    if grid.is_empty() || b == 0 || n == 0 {
        return Err(Error::InvalidArgument(
            "empty composite, replica or Doppler grid".into(),
        ));
    }
    if n > b {
        return Err(Error::InvalidArgument(format!(
            "replica ({n}) longer than buffer ({b})"
        )));
    }
    if replica.signal.fs != y.fs {
        return Err(Error::InvalidArgument(
            "replica and composite sample rates differ".into(),
        ));
    }
    let size = (b + n - 1).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(size);
    let ifft = planner.plan_fft_inverse(size);

    let mut r = vec![Complex64::new(0.0, 0.0); size];
    r[..n].copy_from_slice(&replica.signal.samples);
    fft.process(&mut r);
    r.iter_mut().for_each(|v| *v = v.conj());

    let epoch = y.start_index();
    let scale = 1.0 / (size as f64 * replica.normalizer);
    let rows: Vec<Vec<f64>> = grid
        .values()
        .par_iter()
        .map(|&doppler| {
            let mut z = vec![Complex64::new(0.0, 0.0); size];
            for ((dst, s), r) in z.iter_mut().zip(&y.samples).zip(phasors(-doppler, epoch, y.fs)) {
                *dst = s * r;
            }
            fft.process(&mut z);
            z.iter_mut().zip(&r).for_each(|(a, b)| *a *= b);
            ifft.process(&mut z);
            z[..b].iter().map(|c| (c * scale).norm_sqr()).collect()
        })
        .collect();

    Ok(DelayDopplerMap {
        values: rows.concat(),
        delays: (0..b).map(|k| (epoch + k as i64) as f64 / y.fs).collect(),
        dopplers: grid.values().to_vec(),
    })
}

/// One satellite's transmit burst and its channel to the user.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub sat_id: u32,
    /// Transmit burst, carrying `√P_TX`.
    pub tx: BasebandSignal,
    pub replica: Replica,
    pub params: ChannelParams,
}

impl Link {
    pub fn new(sat_id: u32, config: &PrsConfig, params: ChannelParams) -> Result<Self> {
        let tx = transmit_burst(config)?;
        let replica = Replica::from_burst(&tx, config)?;
        Ok(Self {
            sat_id,
            tx,
            replica,
            params,
        })
    }

    fn arrival(&self) -> i64 {
        start_index(&self.tx) + delay_in_samples(self.params.delay, self.tx.fs)
    }
}

/// Time-averaged correlation of `received` (receiver samples starting at
/// lattice index `from`) with `replica`, counter-rotated by `doppler`.
pub fn correlate_at(received: &[Complex64], replica: &Replica, from: i64, doppler: f64) -> Complex64 {
    let fs = replica.signal.fs;
    let sum: Complex64 = received
        .iter()
        .zip(&replica.signal.samples)
        .zip(phasors(-doppler, from, fs))
        .map(|((y, r), c)| y * c * r.conj())
        .sum();
    sum / replica.normalizer
}

/// Matched-filter output of `interferer` in the cell of `of_interest`,
/// evaluated at Doppler hypothesis `doppler`.
pub fn cross_term(
    interferer: &Link,
    of_interest: &Link,
    transmission: Transmission,
    doppler: f64,
) -> Result<Complex64> {
    let from = of_interest.arrival();
    let rx = render_link(
        &interferer.tx,
        &interferer.params,
        transmission,
        from,
        of_interest.tx.len(),
    )?;
    Ok(correlate_at(&rx, &of_interest.replica, from, doppler))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub sat_id: u32,
    /// τ_i − τ_s, s.
    pub delta_delay: f64,
    /// υ_i − υ_s, Hz.
    pub delta_doppler: f64,
    /// `|χ|²` of this interferer at the cell of interest.
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceSample {
    pub sat_of_interest: u32,
    /// Sum of the contributions.
    pub total: f64,
    pub contributions: Vec<Contribution>,
}

impl InterferenceSample {
    pub fn total_dbw(&self) -> f64 {
        crate::to_db(self.total)
    }
}

/// Interference seen in the matched-filter peak of link `i`: for every other
/// link, the squared correlation of its received signal with link `i`'s
/// replica at link `i`'s delay and Doppler.
pub fn interference_sample(links: &[Link], i: usize, transmission: Transmission) -> Result<InterferenceSample> {
    if links.len() < 2 {
        return Err(Error::InvalidArgument("interference needs at least two links".into()));
    }
    let target = links
        .get(i)
        .ok_or_else(|| Error::InvalidArgument(format!("link {i} out of range ({})", links.len())))?;
    let mut contributions = Vec::with_capacity(links.len() - 1);
    for (s, other) in links.iter().enumerate() {
        if s == i {
            continue;
        }
        let chi = cross_term(other, target, transmission, target.params.doppler)?;
        contributions.push(Contribution {
            sat_id: other.sat_id,
            delta_delay: target.params.delay - other.params.delay,
            delta_doppler: target.params.doppler - other.params.doppler,
            power: chi.norm_sqr(),
        });
    }
    Ok(InterferenceSample {
        sat_of_interest: target.sat_id,
        total: contributions.iter().map(|c| c.power).sum(),
        contributions,
    })
}

/// Post-correlation SINR of link `i`: `L_i·P_TX / (I / P_TX + σ²)`, with `I`
/// the interference of [`interference_sample`]. Returns `+∞` when both the
/// interference and the noise vanish.
pub fn sinr(links: &[Link], i: usize, noise_variance: f64, transmission: Transmission) -> Result<f64> {
    let target = links
        .get(i)
        .ok_or_else(|| Error::InvalidArgument(format!("link {i} out of range ({})", links.len())))?;
    let power = target.tx.mean_power();
    let interference = if links.len() > 1 {
        interference_sample(links, i, transmission)?.total
    } else {
        0.0
    };
    let denominator = interference / power + noise_variance;
    if denominator == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(target.params.gain * power / denominator)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::receive;
    use crate::prs::PrsConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[allow(clippy::too_many_arguments)]
    fn link(sat_id: u32, m: usize, cs: usize, offset: usize, power: f64, range: f64, doppler: f64, phase: f64) -> Link {
        let c = PrsConfig {
            symbols: m,
            comb_size: cs,
            comb_offset: offset,
            sequence_id: sat_id,
            power,
            ..Default::default()
        };
        let mut params = ChannelParams::from_range(range, 0.0, 2.2e9, phase);
        params.doppler = doppler;
        Link::new(sat_id, &c, params).unwrap()
    }

    fn composite(links: &[&Link], transmission: Transmission) -> ReceivedComposite {
        let pairs: Vec<_> = links.iter().map(|l| (&l.tx, l.params)).collect();
        receive(&pairs, transmission, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    #[test]
    fn grid_axes() {
        let g = DopplerGrid::symmetric(40e3, 500.0).unwrap();
        assert_eq!(g.len(), 161);
        assert_eq!(g.values()[0], -40e3);
        assert_eq!(g.values()[160], 40e3);
        assert_eq!(g.nearest(1_240.0), 82);
        assert!(DopplerGrid::new(vec![]).is_err());
        assert!(DopplerGrid::new(vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn auto_ambiguity_peaks_at_origin() {
        let l = link(0, 1, 4, 0, 3.0, 0.0, 0.0, 0.0);
        let l = Link {
            params: ChannelParams {
                gain: 1.0,
                delay: 0.0,
                ..l.params
            },
            ..l
        };
        let y = composite(&[&l], Transmission::SingleBurst);
        let grid = DopplerGrid::symmetric(2_000.0, 500.0).unwrap();
        let ddm = caf(&y, &l.replica, &grid).unwrap();
        let (d, t, v) = ddm.argmax();
        assert_eq!((d, t), (grid.nearest(0.0), 0));
        assert!((v - 9.0).abs() < 1e-9 * 9.0);
        assert!(ddm.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn clean_link_peak_normalization() {
        let p = crate::from_db(30.0);
        let l = link(5, 4, 4, 2, p, 812_345.0, 12_000.0, 1.1);
        let y = composite(&[&l], Transmission::SingleBurst);
        let grid = DopplerGrid::symmetric(40e3, 500.0).unwrap();
        let ddm = caf(&y, &l.replica, &grid).unwrap();
        let (d, t, v) = ddm.argmax();
        assert_eq!(ddm.dopplers[d], 12_000.0);
        assert_eq!(ddm.delays[t], (l.params.delay * l.tx.fs).round() / l.tx.fs);
        let expect = p * p * l.params.gain;
        assert!((crate::to_db(v) - crate::to_db(expect)).abs() < 0.1);
        assert!((v - expect).abs() < 1e-9 * expect);
    }

    #[test]
    fn aligned_comb_interferer_is_orthogonal() {
        for cs in [4, 6, 12] {
            let p = 1000.0;
            let a = link(1, cs, cs, 0, p, 900e3, 5_000.0, 0.0);
            let b = link(2, cs, cs, 1, p, 900e3, 5_000.0, 2.0);
            let s = interference_sample(&[a.clone(), b.clone()], 0, Transmission::Periodic).unwrap();
            assert!(s.total <= 1e-10 * p * p * b.params.gain, "cs {cs}: {}", s.total);

            let y = composite(&[&b], Transmission::SingleBurst);
            let ddm = caf(&y, &a.replica, &DopplerGrid::new(vec![5_000.0]).unwrap()).unwrap();
            let auto = p * p * a.params.gain;
            assert!(ddm.get(0, 0) <= 1e-10 * auto);
        }
    }

    #[test]
    fn pairwise_matches_ddm_cell() {
        let p = crate::from_db(30.0);
        let a = link(1, 4, 4, 0, p, 700e3, 21_500.0, 0.4);
        // Within one burst length (≈43 km) so single bursts overlap too.
        let b = link(2, 4, 4, 3, p, 720e3, -8_300.0, 2.2);
        let c = link(3, 4, 4, 1, p, 690e3, 33_000.0, 4.0);
        for transmission in [Transmission::Periodic, Transmission::SingleBurst] {
            let links = [a.clone(), b.clone(), c.clone()];
            let sample = interference_sample(&links, 0, transmission).unwrap();
            assert!(
                (sample.total - sample.contributions.iter().map(|c| c.power).sum::<f64>()).abs()
                    <= 1e-12 * sample.total
            );
            for (k, other) in [&b, &c].into_iter().enumerate() {
                let y = composite(&[&a, other], transmission);
                // Remove the signal of interest by building the composite over
                // the same buffer with only the interferer.
                let only = ReceivedComposite {
                    samples: render_link(&other.tx, &other.params, transmission, y.start_index(), y.samples.len())
                        .unwrap(),
                    ..y.clone()
                };
                let ddm = caf(&only, &a.replica, &DopplerGrid::new(vec![a.params.doppler]).unwrap()).unwrap();
                let lag = y.links[0].offset;
                let cell = ddm.get(0, lag);
                let pair = sample.contributions[k].power;
                assert!((cell - pair).abs() <= 1e-6 * pair, "{transmission:?}: {cell} vs {pair}");
            }
        }
    }

    #[test]
    fn phase_invariance_and_gain_linearity() {
        let p = 100.0;
        let a = link(1, 2, 4, 0, p, 700e3, 21_500.0, 0.4);
        let b = link(2, 2, 4, 1, p, 705e3, -8_300.0, 2.2);
        let base = interference_sample(&[a.clone(), b.clone()], 0, Transmission::Periodic).unwrap();

        let rotate = |l: &Link, d: f64| Link {
            params: ChannelParams {
                phase: l.params.phase + d,
                ..l.params
            },
            ..l.clone()
        };
        let rotated = interference_sample(&[rotate(&a, 1.0), rotate(&b, 1.0)], 0, Transmission::Periodic).unwrap();
        assert!((rotated.total - base.total).abs() <= 1e-9 * base.total);

        let louder = Link {
            params: ChannelParams {
                gain: b.params.gain * 3.0,
                ..b.params
            },
            ..b.clone()
        };
        let scaled = interference_sample(&[a.clone(), louder], 0, Transmission::Periodic).unwrap();
        assert!((scaled.total - 3.0 * base.total).abs() <= 1e-9 * base.total);

        assert!(interference_sample(&[a.clone(), b.clone()], 2, Transmission::Periodic).is_err());
        assert!(interference_sample(&[a], 0, Transmission::Periodic).is_err());
    }

    #[test]
    fn sinr_cases() {
        let p = 1000.0;
        let a = link(1, 2, 4, 0, p, 700e3, 1_000.0, 0.0);
        let noise = 1e-12;
        let alone = sinr(std::slice::from_ref(&a), 0, noise, Transmission::Periodic).unwrap();
        assert!((alone - p * a.params.gain / noise).abs() <= 1e-9 * alone);
        assert_eq!(
            sinr(std::slice::from_ref(&a), 0, 0.0, Transmission::Periodic).unwrap(),
            f64::INFINITY
        );

        let aligned = [
            a.clone(),
            link(2, 2, 4, 1, p, 700e3, 1_000.0, 1.0),
            link(3, 2, 4, 2, p, 700e3, 1_000.0, 2.0),
        ];
        assert!(sinr(&aligned, 0, 0.0, Transmission::Periodic).unwrap() >= 1e10);

        // Doubling every range keeps the interference-only SINR.
        let mk = |scale: f64| {
            [
                link(1, 2, 4, 0, p, 700e3 * scale, 15_000.0, 0.0),
                link(2, 2, 4, 1, p, 760e3 * scale, -3_000.0, 1.0),
                link(3, 2, 4, 2, p, 910e3 * scale, 30_000.0, 2.0),
            ]
        };
        // Keep arrival offsets fixed so only the path gains change.
        let mut far = mk(2.0);
        for (f, n) in far.iter_mut().zip(mk(1.0)) {
            f.params.delay = n.params.delay;
        }
        let near = sinr(&mk(1.0), 0, 0.0, Transmission::Periodic).unwrap();
        let farther = sinr(&far, 0, 0.0, Transmission::Periodic).unwrap();
        assert!((near - farther).abs() <= 1e-9 * near, "{near} vs {farther}");
    }

    #[test]
    fn ddm_dumps() {
        let l = link(0, 1, 4, 0, 1.0, 600e3, 0.0, 0.0);
        let y = composite(&[&l], Transmission::SingleBurst);
        let ddm = caf(&y, &l.replica, &DopplerGrid::symmetric(1_000.0, 500.0).unwrap()).unwrap();
        let mut buf = Vec::new();
        ddm.write_csv(&mut buf, 0, 4).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 6);
        let dir = std::env::temp_dir().join(format!("prsim-ddm-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ddm.bin");
        ddm.write_binary(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"DDM1");
        assert_eq!(bytes.len(), 12 + 8 * (5 + ddm.delays.len() + ddm.values.len()));
    }
}
