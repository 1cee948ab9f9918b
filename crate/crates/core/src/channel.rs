//! Line-of-sight channel: path gain, carrier phase, Doppler rotation and an
//! integer-sample delay, plus the multi-satellite received composite.
//!
//! Time is kept on an integer sample lattice: sample `k` of any signal sits at
//! `k / fs` seconds on the receiver clock. Doppler phases are evaluated from
//! that index so every path that renders the same link produces identical
//! samples.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::geometry::ChannelParams;
use crate::prs::BasebandSignal;
use crate::{Error, Result};

/// How a satellite's PRS burst occupies the receiver timeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transmission {
    /// A single burst; nothing is received outside it.
    SingleBurst,
    /// The burst repeats back to back, so every receiver window sees a full
    /// burst-length stretch of each satellite.
    #[default]
    Periodic,
}

/// Sample index of a signal's first sample on the receiver lattice.
pub(crate) fn start_index(signal: &BasebandSignal) -> i64 {
    (signal.t0 * signal.fs).round() as i64
}

/// Delay of `delay` seconds rounded to the nearest sample.
pub fn delay_in_samples(delay: f64, fs: f64) -> i64 {
    (delay * fs).round() as i64
}

fn doppler_phasor(doppler: f64, index: i64, fs: f64) -> Complex64 {
    // Reduce the cycle count before scaling by 2π to keep the phase accurate.
    let cycles = doppler * index as f64 / fs;
    Complex64::from_polar(1.0, TAU * (cycles - cycles.floor()))
}

/// Lattice indices between exactly evaluated phasors.
const ANCHOR: i64 = 32;

/// `e^{j2πυk/fs}` for `k = start, start + 1, …`. Phasors are evaluated exactly
/// at multiples of [`ANCHOR`] and advanced by a fixed rotation in between, so
/// each value depends on `k` alone and not on where the sequence started.
pub(crate) fn phasors(doppler: f64, start: i64, fs: f64) -> impl Iterator<Item = Complex64> {
    let step = doppler_phasor(doppler, 1, fs);
    let mut k = start;
    let mut current = Complex64::new(1.0, 0.0);
    let mut primed = false;
    std::iter::from_fn(move || {
        let offset = k.rem_euclid(ANCHOR);
        if !primed || offset == 0 {
            current = doppler_phasor(doppler, k - offset, fs);
            for _ in 0..offset {
                current *= step;
            }
            primed = true;
        }
        let out = current;
        current *= step;
        k += 1;
        Some(out)
    })
}

fn check_doppler(p: &ChannelParams, fs: f64) -> Result<()> {
    if p.doppler.abs() >= fs / 2.0 {
        return Err(Error::Aliasing {
            doppler_hz: p.doppler,
            fs_hz: fs,
        });
    }
    Ok(())
}

/// Passes `x` through the channel `p`: gain `√L`, phase `e^{jϱ}`, Doppler
/// rotation `e^{j2πυt}` and a delay rounded to the sample grid. The delay is
/// carried in `t0`.
pub fn apply_channel(x: &BasebandSignal, p: &ChannelParams) -> Result<BasebandSignal> {
    check_doppler(p, x.fs)?;
    let start = start_index(x) + delay_in_samples(p.delay, x.fs);
    let amp = p.gain.sqrt();
    let samples = if amp == 1.0 && p.phase == 0.0 && p.doppler == 0.0 {
        x.samples.clone()
    } else {
        let common = Complex64::from_polar(amp, p.phase);
        x.samples
            .iter()
            .zip(phasors(p.doppler, start, x.fs))
            .map(|(s, r)| s * common * r)
            .collect()
    };
    Ok(BasebandSignal {
        samples,
        fs: x.fs,
        t0: start as f64 / x.fs,
    })
}

/// Receiver-side samples `[from, from + len)` (absolute lattice indices) of the
/// transmit burst `tx` after the channel `p`.
pub fn render_link(
    tx: &BasebandSignal,
    p: &ChannelParams,
    transmission: Transmission,
    from: i64,
    len: usize,
) -> Result<Vec<Complex64>> {
    check_doppler(p, tx.fs)?;
    let arrival = start_index(tx) + delay_in_samples(p.delay, tx.fs);
    let n = tx.len() as i64;
    let common = Complex64::from_polar(p.gain.sqrt(), p.phase);
    Ok((from..from + len as i64)
        .zip(phasors(p.doppler, from, tx.fs))
        .map(|(k, r)| {
            let local = k - arrival;
            let x = match transmission {
                Transmission::SingleBurst if (0..n).contains(&local) => tx.samples[local as usize],
                Transmission::SingleBurst => return Complex64::new(0.0, 0.0),
                Transmission::Periodic => tx.samples[local.rem_euclid(n) as usize],
            };
            x * common * r
        })
        .collect())
}

/// Ground truth for one link of a composite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkTruth {
    pub params: Option<ChannelParams>,
    /// Arrival time rounded to the sample grid, s.
    pub quantized_delay: f64,
    /// Offset of the arrival from the composite's first sample.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedComposite {
    pub samples: Vec<Complex64>,
    pub fs: f64,
    /// Receiver time of `samples[0]`: the earliest arrival, s.
    pub t0: f64,
    pub links: Vec<LinkTruth>,
    /// Complex noise variance, W.
    pub noise_variance: f64,
}

impl ReceivedComposite {
    pub(crate) fn start_index(&self) -> i64 {
        (self.t0 * self.fs).round() as i64
    }
}

fn add_noise<R: Rng + ?Sized>(samples: &mut [Complex64], variance: f64, rng: &mut R) {
    if variance > 0.0 {
        let sd = (variance / 2.0).sqrt();
        for s in samples.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *s += Complex64::new(re, im) * sd;
        }
    }
}

fn common_rate(signals: &[BasebandSignal]) -> Result<f64> {
    let fs = signals.first().map(|s| s.fs).unwrap_or(0.0);
    if signals.iter().any(|s| s.fs != fs) {
        return Err(Error::InvalidArgument("signals have different sample rates".into()));
    }
    Ok(fs)
}

/// Sums already-delayed signals into a buffer that starts at the earliest
/// arrival and ends with the latest one, then adds complex white noise of
/// variance `noise_variance`.
pub fn combine<R: Rng + ?Sized>(
    signals: &[BasebandSignal],
    noise_variance: f64,
    rng: &mut R,
) -> Result<ReceivedComposite> {
    let fs = common_rate(signals)?;
    let starts: Vec<i64> = signals.iter().map(start_index).collect();
    let epoch = starts.iter().copied().min().unwrap_or(0);
    let end = signals
        .iter()
        .zip(&starts)
        .map(|(s, &k)| k + s.len() as i64)
        .max()
        .unwrap_or(0);
    let mut samples = vec![Complex64::new(0.0, 0.0); (end - epoch) as usize];
    let mut links = Vec::with_capacity(signals.len());
    for (s, &k) in signals.iter().zip(&starts) {
        let offset = (k - epoch) as usize;
        for (acc, v) in samples[offset..].iter_mut().zip(&s.samples) {
            *acc += v;
        }
        links.push(LinkTruth {
            params: None,
            quantized_delay: k as f64 / fs,
            offset,
        });
    }
    add_noise(&mut samples, noise_variance, rng);
    Ok(ReceivedComposite {
        samples,
        fs,
        t0: if fs > 0.0 { epoch as f64 / fs } else { 0.0 },
        links,
        noise_variance,
    })
}

/// Builds the received composite of several transmit bursts, each through its
/// own channel. The buffer spans one burst plus the largest differential delay.
pub fn receive<R: Rng + ?Sized>(
    links: &[(&BasebandSignal, ChannelParams)],
    transmission: Transmission,
    noise_variance: f64,
    rng: &mut R,
) -> Result<ReceivedComposite> {
    if links.is_empty() {
        return Err(Error::InvalidArgument("no links to receive".into()));
    }
    let txs: Vec<BasebandSignal> = links.iter().map(|(x, _)| (*x).clone()).collect();
    let fs = common_rate(&txs)?;
    let arrivals: Vec<i64> = links
        .iter()
        .map(|(x, p)| start_index(x) + delay_in_samples(p.delay, fs))
        .collect();
    let epoch = *arrivals.iter().min().expect("non-empty");
    let end = links
        .iter()
        .zip(&arrivals)
        .map(|((x, _), &k)| k + x.len() as i64)
        .max()
        .expect("non-empty");
    let len = (end - epoch) as usize;
    let mut samples = vec![Complex64::new(0.0, 0.0); len];
    let mut truth = Vec::with_capacity(links.len());
    for ((x, p), &k) in links.iter().zip(&arrivals) {
        let rx = render_link(x, p, transmission, epoch, len)?;
        for (acc, v) in samples.iter_mut().zip(rx) {
            *acc += v;
        }
        truth.push(LinkTruth {
            params: Some(*p),
            quantized_delay: k as f64 / fs,
            offset: (k - epoch) as usize,
        });
    }
    add_noise(&mut samples, noise_variance, rng);
    Ok(ReceivedComposite {
        samples,
        fs,
        t0: epoch as f64 / fs,
        links: truth,
        noise_variance,
    })
}
