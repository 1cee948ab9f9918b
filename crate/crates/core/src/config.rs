//! Campaign configuration: a TOML file with one table per concern, every key
//! optional, unknown keys rejected. Command-line overrides `key=value` are
//! applied after the file; `key` is either `section.key` or a bare key that
//! names exactly one field. A scalar given for a list field becomes a
//! one-element list.
//!
//! ```toml
//! [campaign]
//! users = 10
//! iterations = 100
//!
//! [prs]
//! symbols = [1, 4, 12]
//! ptx_dbw = [1, 30]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::Transmission;
use crate::geometry::ShellConfig;
use crate::prs::PrsConfig;
use crate::receiver::DopplerGrid;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignSection {
    pub users: usize,
    /// Iterations per user and sweep point.
    pub iterations: usize,
    pub seed: u64,
    /// Epoch redraws allowed when fewer than four satellites are visible.
    pub retry_budget: usize,
    pub parallel: bool,
    pub transmission: Transmission,
}

impl Default for CampaignSection {
    fn default() -> Self {
        Self {
            users: 10,
            iterations: 100,
            seed: 1,
            retry_budget: 100,
            parallel: true,
            transmission: Transmission::Periodic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    pub altitude_km: f64,
    pub inclination_deg: f64,
    pub planes: u32,
    pub sats_per_plane: u32,
    pub phasing: u32,
    pub mask_deg: f64,
    pub carrier_hz: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self {
            altitude_km: 554.0,
            inclination_deg: 53.0,
            planes: 72,
            sats_per_plane: 22,
            phasing: 1,
            mask_deg: 25.0,
            carrier_hz: 2.2e9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrsSection {
    /// Sweep over the number of PRS symbols m.
    pub symbols: Vec<usize>,
    /// Sweep over the comb size.
    pub comb_size: Vec<usize>,
    /// Sweep over the transmit power, dBW.
    pub ptx_dbw: Vec<f64>,
    pub subcarriers: usize,
    pub subcarrier_spacing_hz: f64,
    pub fft_size: usize,
    pub cp_len: usize,
    pub slot: u32,
}

impl Default for PrsSection {
    fn default() -> Self {
        Self {
            symbols: vec![1, 4, 12],
            comb_size: vec![4],
            ptx_dbw: vec![1.0, 30.0],
            subcarriers: 288,
            subcarrier_spacing_hz: 30e3,
            fft_size: 512,
            cp_len: 36,
            slot: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReceiverSection {
    pub doppler_max_hz: f64,
    pub doppler_step_hz: f64,
}

impl Default for ReceiverSection {
    fn default() -> Self {
        Self {
            doppler_max_hz: 40e3,
            doppler_step_hz: 500.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PassSource {
    /// Propagate the configured shell on the fly.
    #[default]
    Internal,
    /// Read satellite states from a pass-table CSV.
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PassSection {
    pub source: PassSource,
    /// Pass-table CSV, for the external source.
    pub path: String,
    /// Length of the epoch window, s.
    pub span_s: f64,
    /// Epoch and pass-table resolution, s.
    pub step_s: f64,
}

impl Default for PassSection {
    fn default() -> Self {
        Self {
            source: PassSource::Internal,
            path: String::new(),
            span_s: 600.0,
            step_s: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    /// Subsample size of the KS p-value.
    pub n_eff: usize,
    pub ks_seed: u64,
    /// Groups with fewer usable samples are skipped.
    pub min_samples: usize,
    pub histogram_bins: usize,
    pub exclude_doppler_clipped: bool,
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            n_eff: 1000,
            ks_seed: 0,
            min_samples: 50,
            histogram_bins: 60,
            exclude_doppler_clipped: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignConfig {
    pub campaign: CampaignSection,
    pub geometry: GeometrySection,
    pub prs: PrsSection,
    pub receiver: ReceiverSection,
    pub passes: PassSection,
    pub fit: FitSection,
}

/// One point of the (comb size, m, P_TX) sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub index: usize,
    pub symbols: usize,
    pub comb_size: usize,
    pub ptx_dbw: f64,
}

impl CampaignConfig {
    /// Parses `text` and applies `overrides`, then validates.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let file: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut merged = match toml::Value::try_from(Self::default()) {
            Ok(toml::Value::Table(t)) => t,
            _ => unreachable!("the default configuration serializes to a table"),
        };
        for (section, value) in file {
            match (merged.get_mut(&section), value) {
                (Some(toml::Value::Table(dst)), toml::Value::Table(src)) => dst.extend(src),
                (Some(_), _) => return Err(Error::Config(format!("`{section}` must be a table"))),
                (None, _) => return Err(Error::Config(format!("unknown section `{section}`"))),
            }
        }
        for o in overrides {
            apply_override(&mut merged, o)?;
        }
        let config: Self = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads the file at `path` (defaults when `None`) and applies `overrides`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Self::from_toml_str(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.campaign;
        let bad = |m: String| Err(Error::Config(m));
        if c.users == 0 || c.iterations == 0 {
            return bad("campaign.users and campaign.iterations must be at least 1".into());
        }
        let p = &self.prs;
        if p.symbols.is_empty() || p.comb_size.is_empty() || p.ptx_dbw.is_empty() {
            return bad("prs.symbols, prs.comb_size and prs.ptx_dbw must be non-empty".into());
        }
        if !(self.geometry.carrier_hz > 0.0) {
            return bad(format!(
                "geometry.carrier_hz must be positive, got {}",
                self.geometry.carrier_hz
            ));
        }
        if !(0.0..=90.0).contains(&self.geometry.mask_deg) {
            return bad(format!(
                "geometry.mask_deg must be in [0, 90], got {}",
                self.geometry.mask_deg
            ));
        }
        if !(self.passes.span_s > 0.0 && self.passes.step_s > 0.0) {
            return bad("passes.span_s and passes.step_s must be positive".into());
        }
        if self.passes.source == PassSource::External && self.passes.path.is_empty() {
            return bad("passes.source = \"external\" needs passes.path".into());
        }
        if self.fit.n_eff < 10 || self.fit.min_samples < 50 || self.fit.histogram_bins == 0 {
            return bad("fit.n_eff ≥ 10, fit.min_samples ≥ 50 and fit.histogram_bins ≥ 1 are required".into());
        }
        let cfg = |e: Error| Error::Config(e.to_string());
        self.shell().validate().map_err(cfg)?;
        self.doppler_grid().map_err(cfg)?;
        for point in self.sweep() {
            for rank in 0..4 {
                self.prs_config(&point, rank, 0).validate().map_err(cfg)?;
            }
        }
        Ok(())
    }

    pub fn shell(&self) -> ShellConfig {
        let g = &self.geometry;
        ShellConfig {
            altitude: g.altitude_km * 1e3,
            inclination: g.inclination_deg.to_radians(),
            plane_count: g.planes,
            sats_per_plane: g.sats_per_plane,
            phasing: g.phasing,
        }
    }

    pub fn mask(&self) -> f64 {
        self.geometry.mask_deg.to_radians()
    }

    pub fn doppler_grid(&self) -> Result<DopplerGrid> {
        DopplerGrid::symmetric(self.receiver.doppler_max_hz, self.receiver.doppler_step_hz)
    }

    /// Sweep points, comb size outermost and P_TX innermost.
    pub fn sweep(&self) -> Vec<SweepPoint> {
        let p = &self.prs;
        let mut points = Vec::new();
        for &comb_size in &p.comb_size {
            for &symbols in &p.symbols {
                for &ptx_dbw in &p.ptx_dbw {
                    points.push(SweepPoint {
                        index: points.len(),
                        symbols,
                        comb_size,
                        ptx_dbw,
                    });
                }
            }
        }
        points
    }

    /// Waveform of the satellite ranked `rank` (by elevation) in a draw at
    /// `point`: comb offset `rank mod cs`, sequence id `sat_id mod 1008`.
    pub fn prs_config(&self, point: &SweepPoint, rank: usize, sat_id: u32) -> PrsConfig {
        let p = &self.prs;
        PrsConfig {
            symbols: point.symbols,
            comb_size: point.comb_size,
            subcarriers: p.subcarriers,
            subcarrier_spacing: p.subcarrier_spacing_hz,
            power: crate::from_db(point.ptx_dbw),
            sequence_id: sat_id % 1008,
            comb_offset: rank % point.comb_size.max(1),
            slot: p.slot,
            fft_size: p.fft_size,
            cp_len: p.cp_len,
            ..Default::default()
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the canonical TOML form, hex.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

fn apply_override(root: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
    let (key, raw) = (key.trim(), raw.trim());
    let (section, field) = match key.split_once('.') {
        Some((s, f)) => (s.to_string(), f.to_string()),
        None => {
            let owners: Vec<&String> = root
                .iter()
                .filter(|(_, v)| v.as_table().is_some_and(|t| t.contains_key(key)))
                .map(|(s, _)| s)
                .collect();
            match owners.as_slice() {
                [one] => ((*one).clone(), key.to_string()),
                [] => return Err(Error::Config(format!("unknown override key `{key}`"))),
                many => {
                    return Err(Error::Config(format!(
                        "override key `{key}` is ambiguous ({})",
                        many.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
                    )))
                }
            }
        }
    };
    let table = root
        .get_mut(&section)
        .and_then(|v| v.as_table_mut())
        .ok_or_else(|| Error::Config(format!("unknown section `{section}` in override `{item}`")))?;
    // Values are TOML literals; anything that does not parse is a bare string.
    let mut value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    if matches!(table.get(&field), Some(toml::Value::Array(_))) && !value.is_array() {
        value = toml::Value::Array(vec![value]);
    }
    table.insert(field, value);
    Ok(())
}
