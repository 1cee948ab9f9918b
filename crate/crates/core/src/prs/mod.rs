//! Positioning reference signal generation: QPSK symbols from Gold sequences,
//! comb mapping onto the resource grid and CP-OFDM modulation.
//!
//! Satellites sharing a grid are separated by their comb offset. With the
//! per-symbol relative offsets of [`comb_pattern`], `cs` satellites with
//! offsets `0..cs` tile every resource element exactly once.

mod gold;

use std::f64::consts::FRAC_1_SQRT_2;
use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

pub use gold::gold_sequence;

use crate::{Error, Result};

/// Symbols per slot with normal cyclic prefix.
const SYMBOLS_PER_SLOT: u32 = 14;

/// Per-symbol relative comb offsets for a comb size.
pub fn comb_pattern(comb_size: usize) -> Option<&'static [usize]> {
    match comb_size {
        2 => Some(&[0, 1]),
        4 => Some(&[0, 2, 1, 3]),
        6 => Some(&[0, 3, 1, 4, 2, 5]),
        12 => Some(&[0, 6, 3, 9, 1, 7, 4, 10, 2, 8, 5, 11]),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SequenceSource {
    /// Gold sequence with the standard PRS initialization.
    Gold,
    /// Uniform random QPSK from a seeded generator.
    SeededQpsk { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrsConfig {
    /// OFDM symbols per burst, 1..=12.
    pub symbols: usize,
    pub comb_size: usize,
    pub subcarriers: usize,
    /// Hz.
    pub subcarrier_spacing: f64,
    /// Mean transmit power, W.
    pub power: f64,
    pub sequence_id: u32,
    pub comb_offset: usize,
    /// Slot number fed to the sequence initialization.
    pub slot: u32,
    pub fft_size: usize,
    pub cp_len: usize,
    pub sequence: SequenceSource,
}

impl Default for PrsConfig {
    fn default() -> Self {
        Self {
            symbols: 1,
            comb_size: 4,
            subcarriers: 288,
            subcarrier_spacing: 30e3,
            power: 1.0,
            sequence_id: 0,
            comb_offset: 0,
            slot: 0,
            fft_size: 512,
            cp_len: 36,
            sequence: SequenceSource::Gold,
        }
    }
}

impl PrsConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(1..=12).contains(&self.symbols) {
            return bad(format!("symbol count {} outside 1..=12", self.symbols));
        }
        if comb_pattern(self.comb_size).is_none() {
            return bad(format!("unsupported comb size {}", self.comb_size));
        }
        if self.subcarriers == 0 || !self.subcarriers.is_multiple_of(self.comb_size) {
            return bad(format!(
                "comb size {} does not divide {} subcarriers",
                self.comb_size, self.subcarriers
            ));
        }
        if self.comb_offset >= self.comb_size {
            return bad(format!(
                "comb offset {} >= comb size {}",
                self.comb_offset, self.comb_size
            ));
        }
        if !(self.power > 0.0) || !self.power.is_finite() {
            return bad(format!("transmit power {} W must be positive", self.power));
        }
        if self.fft_size < self.subcarriers {
            return bad(format!(
                "FFT size {} smaller than {} subcarriers",
                self.fft_size, self.subcarriers
            ));
        }
        if self.cp_len >= self.fft_size {
            return bad("cyclic prefix longer than the symbol".into());
        }
        if !(self.subcarrier_spacing > 0.0) {
            return bad("subcarrier spacing must be positive".into());
        }
        Ok(())
    }

    pub fn sample_rate(&self) -> f64 {
        self.fft_size as f64 * self.subcarrier_spacing
    }

    /// Samples per OFDM symbol including the cyclic prefix.
    pub fn symbol_len(&self) -> usize {
        self.fft_size + self.cp_len
    }

    pub fn burst_len(&self) -> usize {
        self.symbols * self.symbol_len()
    }

    /// Relative comb offset of symbol `l`.
    pub fn symbol_offset(&self, l: usize) -> usize {
        let pattern = comb_pattern(self.comb_size).expect("validated comb size");
        pattern[l % pattern.len()]
    }

    pub fn is_occupied(&self, l: usize, k: usize) -> bool {
        (k + 2 * self.comb_size - self.comb_offset - self.symbol_offset(l)).is_multiple_of(self.comb_size)
    }

    /// FFT bin carrying subcarrier `k`, with the band centred on DC.
    fn bin(&self, k: usize) -> usize {
        (k + self.fft_size - self.subcarriers / 2) % self.fft_size
    }
}

/// Sequence initialization for symbol `l` of slot `slot`.
pub fn prs_c_init(sequence_id: u32, slot: u32, l: u32) -> u32 {
    let hi = (sequence_id / 1024) as u64;
    let lo = (sequence_id % 1024) as u64;
    let v =
        (1u64 << 22) * hi + (1u64 << 10) * (SYMBOLS_PER_SLOT as u64 * slot as u64 + l as u64 + 1) * (2 * lo + 1) + lo;
    (v % (1u64 << 31)) as u32
}

fn qpsk(b0: u8, b1: u8) -> Complex64 {
    Complex64::new(1.0 - 2.0 * b0 as f64, 1.0 - 2.0 * b1 as f64) * FRAC_1_SQRT_2
}

/// Unit-modulus QPSK symbols for the occupied REs of symbol `l`.
pub fn prs_symbols(config: &PrsConfig, l: usize, slot: u32) -> Result<Vec<Complex64>> {
    if l >= config.symbols {
        return Err(Error::InvalidArgument(format!("symbol {l} >= {}", config.symbols)));
    }
    let count = config.subcarriers / config.comb_size;
    Ok(match config.sequence {
        SequenceSource::Gold => {
            let c = gold_sequence(prs_c_init(config.sequence_id, slot, l as u32), 2 * count);
            c.chunks_exact(2).map(|b| qpsk(b[0], b[1])).collect()
        }
        SequenceSource::SeededQpsk { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((config.sequence_id as u64) << 32) | ((slot as u64) << 8) | l as u64);
            (0..count)
                .map(|_| qpsk(rng.random_range(0..2), rng.random_range(0..2)))
                .collect()
        }
    })
}

/// `symbols × subcarriers` grid, row-major by symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceGrid {
    pub symbols: usize,
    pub subcarriers: usize,
    pub values: Vec<Complex64>,
    pub occupied: Vec<bool>,
    /// Energy of every occupied RE.
    pub re_energy: f64,
}

impl ResourceGrid {
    pub fn get(&self, l: usize, k: usize) -> Complex64 {
        self.values[l * self.subcarriers + k]
    }

    pub fn is_occupied(&self, l: usize, k: usize) -> bool {
        self.occupied[l * self.subcarriers + k]
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }

    /// Writes `symbol,subcarrier,re,im` rows for every occupied RE.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["symbol", "subcarrier", "re", "im"])?;
        for l in 0..self.symbols {
            for k in 0..self.subcarriers {
                if self.is_occupied(l, k) {
                    let v = self.get(l, k);
                    w.write_record([l.to_string(), k.to_string(), v.re.to_string(), v.im.to_string()])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io("grid csv", e))?;
        Ok(())
    }
}

/// Maps the PRS of `config` onto its comb, scaled so that the modulated burst
/// has mean power `config.power`.
pub fn map_resource_grid(config: &PrsConfig) -> Result<ResourceGrid> {
    config.validate()?;
    let (m, n) = (config.symbols, config.subcarriers);
    let mut values = vec![Complex64::new(0.0, 0.0); m * n];
    let mut occupied = vec![false; m * n];
    for l in 0..m {
        let seq = prs_symbols(config, l, config.slot)?;
        let mut seq = seq.into_iter();
        for k in 0..n {
            if config.is_occupied(l, k) {
                values[l * n + k] = seq.next().expect("one symbol per comb RE");
                occupied[l * n + k] = true;
            }
        }
    }
    let mut grid = ResourceGrid {
        symbols: m,
        subcarriers: n,
        values,
        occupied,
        re_energy: 1.0,
    };
    // The cyclic prefix repeats data-dependent samples, so the unit-grid
    // power is measured rather than derived.
    let unit = modulate_unscaled(&grid, config);
    let unit_power = mean_power(&unit);
    let amplitude = (config.power / unit_power).sqrt();
    grid.values.iter_mut().for_each(|v| *v *= amplitude);
    grid.re_energy = amplitude * amplitude;
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasebandSignal {
    pub samples: Vec<Complex64>,
    /// Sample rate, Hz.
    pub fs: f64,
    /// Time of the first sample, s.
    pub t0: f64,
}

impl BasebandSignal {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean_power(&self) -> f64 {
        mean_power(&self.samples)
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum()
    }
}

pub(crate) fn mean_power(samples: &[Complex64]) -> f64 {
    samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / samples.len() as f64
}

fn modulate_unscaled(grid: &ResourceGrid, config: &PrsConfig) -> Vec<Complex64> {
    let nfft = config.fft_size;
    let ifft = FftPlanner::new().plan_fft_inverse(nfft);
    let norm = 1.0 / (nfft as f64).sqrt();
    let mut out = Vec::with_capacity(grid.symbols * config.symbol_len());
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    for l in 0..grid.symbols {
        buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
        for k in 0..grid.subcarriers {
            buf[config.bin(k)] = grid.get(l, k) * norm;
        }
        ifft.process(&mut buf);
        out.extend_from_slice(&buf[nfft - config.cp_len..]);
        out.extend_from_slice(&buf);
    }
    out
}

/// CP-OFDM modulation with a unitary inverse DFT per symbol.
pub fn ofdm_modulate(grid: &ResourceGrid, config: &PrsConfig) -> Result<BasebandSignal> {
    config.validate()?;
    if grid.subcarriers != config.subcarriers || grid.symbols != config.symbols {
        return Err(Error::InvalidArgument(
            "grid shape does not match the PRS configuration".into(),
        ));
    }
    Ok(BasebandSignal {
        samples: modulate_unscaled(grid, config),
        fs: config.sample_rate(),
        t0: 0.0,
    })
}

/// Strips the cyclic prefixes and recovers the `symbols × subcarriers` grid values.
pub fn ofdm_demodulate(signal: &[Complex64], config: &PrsConfig) -> Result<Vec<Complex64>> {
    let sym = config.symbol_len();
    if signal.len() < config.symbols * sym {
        return Err(Error::InvalidArgument("signal shorter than the burst".into()));
    }
    let nfft = config.fft_size;
    let fft = FftPlanner::new().plan_fft_forward(nfft);
    let norm = 1.0 / (nfft as f64).sqrt();
    let mut out = Vec::with_capacity(config.symbols * config.subcarriers);
    for l in 0..config.symbols {
        let start = l * sym + config.cp_len;
        let mut buf = signal[start..start + nfft].to_vec();
        fft.process(&mut buf);
        out.extend((0..config.subcarriers).map(|k| buf[config.bin(k)] * norm));
    }
    Ok(out)
}

/// Transmit burst for `config`: grid mapping followed by modulation.
pub fn transmit_burst(config: &PrsConfig) -> Result<BasebandSignal> {
    let grid = map_resource_grid(config)?;
    ofdm_modulate(&grid, config)
}
