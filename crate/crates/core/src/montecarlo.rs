//! Campaign driver: for every user, iteration and sweep point, draw an epoch,
//! take the four highest satellites, synthesize their PRS bursts through
//! their channels and record the interference each one suffers from the
//! other three.
//!
//! Every draw seeds its own generator from `(master seed, user, iteration,
//! sweep index)`, so results do not depend on scheduling, and samples are
//! always emitted in `(user, iteration, sweep, satellite)` order.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{receive, LinkTruth};
use crate::config::{CampaignConfig, PassSource, SweepPoint};
use crate::geometry::{
    channel_params, fibonacci_lattice, look_geometry_ecef, propagate, select_visible, LookGeometry, UserLocation, Vec3,
    VisibleSet, EARTH_RADIUS,
};
use crate::receiver::{caf, interference_sample, Contribution, DelayDopplerMap, Link};
use crate::{Error, Result};

/// Satellites per draw.
pub const SATELLITES_PER_DRAW: usize = 4;

/// dBW value stored for interference that is exactly zero or underflows.
pub const FLOOR_DBW: f64 = -400.0;

/// Highest satellite radius accepted from a pass table, above `EARTH_RADIUS`.
const MAX_PASS_ALTITUDE: f64 = 2_000e3;

pub const PASS_HEADER: [&str; 9] = [
    "user_id", "t_s", "sat_id", "x_m", "y_m", "z_m", "vx_mps", "vy_mps", "vz_mps",
];

pub const SAMPLE_HEADER: [&str; 17] = [
    "user_id",
    "iter",
    "m",
    "cs",
    "ptx_dbw",
    "sat_of_interest",
    "I_dbw",
    "dtau1_s",
    "dnu1_hz",
    "c1_dbw",
    "dtau2_s",
    "dnu2_hz",
    "c2_dbw",
    "dtau3_s",
    "dnu3_hz",
    "c3_dbw",
    "flags",
];

/// Per-draw seed: SplitMix64 folded over the draw coordinates.
pub fn draw_seed(master: u64, user_id: u32, iteration: u32, sweep_index: usize) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    [user_id as u64, iteration as u64, sweep_index as u64]
        .iter()
        .fold(mix(master), |h, &v| mix(h ^ v))
}

fn to_dbw(watts: f64) -> f64 {
    if watts > 0.0 {
        crate::to_db(watts).max(FLOOR_DBW)
    } else {
        FLOOR_DBW
    }
}

/// One satellite state of a pass table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassRow {
    pub user_id: u32,
    pub t: f64,
    pub sat_id: u32,
    /// ECEF, m.
    pub position: Vec3,
    /// ECEF, m/s.
    pub velocity: Vec3,
}

/// Satellite states per (user, epoch), one row per satellite above the mask
/// the table was generated with.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PassTable {
    rows: Vec<PassRow>,
    /// Row indices keyed by (user, epoch in µs).
    index: BTreeMap<(u32, i64), Vec<usize>>,
    epochs: Vec<f64>,
}

fn epoch_key(t: f64) -> i64 {
    (t * 1e6).round() as i64
}

impl PassTable {
    pub fn new(rows: Vec<PassRow>) -> Self {
        let mut index: BTreeMap<(u32, i64), Vec<usize>> = BTreeMap::new();
        let mut epochs: BTreeMap<i64, f64> = BTreeMap::new();
        for (i, r) in rows.iter().enumerate() {
            index.entry((r.user_id, epoch_key(r.t))).or_default().push(i);
            epochs.entry(epoch_key(r.t)).or_insert(r.t);
        }
        Self {
            rows,
            index,
            epochs: epochs.into_values().collect(),
        }
    }

    pub fn rows(&self) -> &[PassRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Distinct epochs, ascending.
    pub fn epochs(&self) -> &[f64] {
        &self.epochs
    }

    pub fn user_count(&self) -> usize {
        let mut users: Vec<u32> = self.index.keys().map(|k| k.0).collect();
        users.dedup();
        users.len()
    }

    pub fn at(&self, user_id: u32, t: f64) -> impl Iterator<Item = &PassRow> {
        self.index
            .get(&(user_id, epoch_key(t)))
            .into_iter()
            .flatten()
            .map(|&i| &self.rows[i])
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(PASS_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.user_id.to_string(),
                r.t.to_string(),
                r.sat_id.to_string(),
                r.position[0].to_string(),
                r.position[1].to_string(),
                r.position[2].to_string(),
                r.velocity[0].to_string(),
                r.velocity[1].to_string(),
                r.velocity[2].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("pass table", e))?;
        Ok(())
    }
}

/// Epochs `k·step` for `k = 0, 1, …` below `span`.
fn epoch_grid(config: &CampaignConfig) -> Vec<f64> {
    let n = (config.passes.span_s / config.passes.step_s).round().max(1.0) as usize;
    (0..n).map(|k| k as f64 * config.passes.step_s).collect()
}

/// Pass table of the configured shell for `campaign.users` lattice users over
/// the epoch window, keeping satellites at or above the elevation mask.
pub fn generate_passes(config: &CampaignConfig) -> Result<PassTable> {
    let shell = config.shell();
    shell.validate()?;
    let users = fibonacci_lattice(config.campaign.users)?;
    let epochs = epoch_grid(config);
    let mask = config.mask();
    let per_user: Vec<Result<Vec<PassRow>>> = users
        .par_iter()
        .map(|u| {
            let ue = u.ecef();
            let mut rows = Vec::new();
            for &t in &epochs {
                for sat_id in 0..shell.satellite_count() {
                    let s = propagate(&shell, sat_id, t)?;
                    if look_geometry_ecef(ue, s.position, s.velocity)?.elevation >= mask {
                        rows.push(PassRow {
                            user_id: u.id,
                            t,
                            sat_id,
                            position: s.position,
                            velocity: s.velocity,
                        });
                    }
                }
            }
            Ok(rows)
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_user {
        rows.extend(r?);
    }
    Ok(PassTable::new(rows))
}

/// Reads and validates a pass-table CSV.
pub fn load_passes(path: &Path) -> Result<PassTable> {
    let name = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(file);
    let fail = |row: usize, message: String| Error::PassTable {
        path: name.clone(),
        row,
        message,
    };
    let mut records = reader.records();
    match records.next() {
        None => return Ok(PassTable::default()),
        Some(header) => {
            let header = header.map_err(|e| fail(1, e.to_string()))?;
            if header.iter().ne(PASS_HEADER) {
                return Err(fail(
                    1,
                    format!(
                        "header {:?} does not match {}",
                        header.iter().collect::<Vec<_>>(),
                        PASS_HEADER.join(",")
                    ),
                ));
            }
        }
    }
    let mut rows = Vec::new();
    let mut last: BTreeMap<u32, f64> = BTreeMap::new();
    for (i, record) in records.enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| fail(row, e.to_string()))?;
        if record.len() != PASS_HEADER.len() {
            return Err(fail(
                row,
                format!("expected {} fields, found {}", PASS_HEADER.len(), record.len()),
            ));
        }
        let int = |j: usize| {
            record[j]
                .trim()
                .parse::<u32>()
                .map_err(|e| fail(row, format!("{}: {e}", PASS_HEADER[j])))
        };
        let float = |j: usize| {
            let v = record[j]
                .trim()
                .parse::<f64>()
                .map_err(|e| fail(row, format!("{}: {e}", PASS_HEADER[j])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(fail(row, format!("{} is not finite", PASS_HEADER[j])))
            }
        };
        let r = PassRow {
            user_id: int(0)?,
            t: float(1)?,
            sat_id: int(2)?,
            position: [float(3)?, float(4)?, float(5)?],
            velocity: [float(6)?, float(7)?, float(8)?],
        };
        let radius = r.position.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(EARTH_RADIUS..=EARTH_RADIUS + MAX_PASS_ALTITUDE).contains(&radius) {
            return Err(fail(
                row,
                format!("satellite radius {radius:.0} m outside [r_E, r_E + 2000 km]"),
            ));
        }
        if let Some(&prev) = last.get(&r.user_id) {
            if r.t < prev {
                return Err(fail(
                    row,
                    format!("time {} precedes {} for user {}", r.t, prev, r.user_id),
                ));
            }
        }
        last.insert(r.user_id, r.t);
        rows.push(r);
    }
    Ok(PassTable::new(rows))
}

/// Where satellite states come from.
enum Source<'a> {
    Internal,
    External(&'a PassTable),
}

/// Above this many epochs the internal source propagates on every draw
/// instead of caching the shell state per epoch.
const MAX_CACHED_EPOCHS: usize = 10_000;

type ShellState = Vec<(Vec3, Vec3)>;

struct Context<'a> {
    config: &'a CampaignConfig,
    source: Source<'a>,
    users: Vec<UserLocation>,
    epochs: Vec<f64>,
    /// Internal source: shell state per epoch index, filled on first use.
    cache: Vec<OnceLock<ShellState>>,
    doppler_window: f64,
}

impl Context<'_> {
    fn shell_state(&self, t: f64) -> Result<ShellState> {
        let shell = self.config.shell();
        (0..shell.satellite_count())
            .map(|id| propagate(&shell, id, t).map(|s| (s.position, s.velocity)))
            .collect()
    }

    fn visible(&self, user: &UserLocation, epoch: usize, count: usize) -> Result<VisibleSet> {
        let t = self.epochs[epoch];
        let ue = user.ecef();
        let mask = self.config.mask();
        let mut all: Vec<(u32, LookGeometry)> = Vec::new();
        let mut consider = |sat_id: u32, position: Vec3, velocity: Vec3| -> Result<()> {
            // Below the horizon, so below any non-negative mask.
            let up: f64 = (0..3).map(|i| (position[i] - ue[i]) * ue[i]).sum();
            if up >= 0.0 || mask < 0.0 {
                all.push((sat_id, look_geometry_ecef(ue, position, velocity)?));
            }
            Ok(())
        };
        match self.source {
            Source::Internal => {
                let fresh;
                let states = match self.cache.get(epoch) {
                    Some(cell) => match cell.get() {
                        Some(s) => s,
                        None => {
                            let s = self.shell_state(t)?;
                            cell.get_or_init(|| s)
                        }
                    },
                    None => {
                        fresh = self.shell_state(t)?;
                        &fresh
                    }
                };
                for (id, (p, v)) in states.iter().enumerate() {
                    consider(id as u32, *p, *v)?;
                }
            }
            Source::External(table) => {
                for r in table.at(user.id, t) {
                    consider(r.sat_id, r.position, r.velocity)?;
                }
            }
        }
        Ok(select_visible(all, mask, count))
    }
}

/// Sample quality flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SampleFlags {
    /// Interference was zero or below [`FLOOR_DBW`]; stored at the floor.
    pub floor: bool,
    /// The satellite of interest's Doppler lies outside the receiver's search
    /// window.
    pub doppler_clipped: bool,
}

impl SampleFlags {
    pub fn encode(&self) -> String {
        let mut parts = Vec::new();
        if self.floor {
            parts.push("floor");
        }
        if self.doppler_clipped {
            parts.push("doppler_clipped");
        }
        parts.join(";")
    }

    pub fn decode(s: &str) -> Result<Self> {
        let mut f = Self::default();
        for part in s.split(';').filter(|p| !p.is_empty()) {
            match part {
                "floor" => f.floor = true,
                "doppler_clipped" => f.doppler_clipped = true,
                other => return Err(Error::InvalidArgument(format!("unknown sample flag `{other}`"))),
            }
        }
        Ok(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSample {
    pub user_id: u32,
    pub iteration: u32,
    pub sweep_index: usize,
    pub symbols: usize,
    pub comb_size: usize,
    pub ptx_dbw: f64,
    /// Drawn epoch, s.
    pub epoch: f64,
    pub sat_of_interest: u32,
    /// Interference power at the matched-filter peak, W.
    pub interference: f64,
    pub contributions: Vec<Contribution>,
    pub flags: SampleFlags,
}

impl CampaignSample {
    pub fn i_dbw(&self) -> f64 {
        to_dbw(self.interference)
    }
}

/// A draw that found fewer than four satellites within the retry budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedDraw {
    pub user_id: u32,
    pub iteration: u32,
    pub sweep_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub samples: Vec<CampaignSample>,
    pub skipped: Vec<SkippedDraw>,
    pub seed: u64,
    pub config_hash: String,
    pub total_draws: usize,
}

/// Campaign metadata written next to the samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignMetadata {
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub created_unix_s: u64,
    pub total_draws: usize,
    pub samples: usize,
    pub samples_per_draw: usize,
    pub sampling: String,
    pub skipped_draws: usize,
    pub floor_samples: usize,
    pub doppler_clipped_samples: usize,
    pub overrides: Vec<String>,
    pub config: String,
}

impl SampleSet {
    pub fn metadata(&self, config: &CampaignConfig, overrides: &[String]) -> CampaignMetadata {
        CampaignMetadata {
            version: env!("CARGO_PKG_VERSION").into(),
            seed: self.seed,
            config_hash: self.config_hash.clone(),
            created_unix_s: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            total_draws: self.total_draws,
            samples: self.samples.len(),
            samples_per_draw: SATELLITES_PER_DRAW,
            sampling: "every satellite of a draw takes a turn as the signal of interest".into(),
            skipped_draws: self.skipped.len(),
            floor_samples: self.samples.iter().filter(|s| s.flags.floor).count(),
            doppler_clipped_samples: self.samples.iter().filter(|s| s.flags.doppler_clipped).count(),
            overrides: overrides.to_vec(),
            config: config.to_toml(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(SAMPLE_HEADER)?;
        for s in &self.samples {
            let mut rec = vec![
                s.user_id.to_string(),
                s.iteration.to_string(),
                s.symbols.to_string(),
                s.comb_size.to_string(),
                s.ptx_dbw.to_string(),
                s.sat_of_interest.to_string(),
                s.i_dbw().to_string(),
            ];
            for k in 0..SATELLITES_PER_DRAW - 1 {
                match s.contributions.get(k) {
                    Some(c) => rec.extend([
                        c.delta_delay.to_string(),
                        c.delta_doppler.to_string(),
                        to_dbw(c.power).to_string(),
                    ]),
                    None => rec.extend([String::new(), String::new(), String::new()]),
                }
            }
            rec.push(s.flags.encode());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("sample CSV", e))?;
        Ok(())
    }

    /// One row per draw: its epoch, or an empty epoch when it was skipped.
    pub fn write_draws_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut draws: BTreeMap<(u32, u32, usize), Option<f64>> = BTreeMap::new();
        for s in &self.samples {
            draws.insert((s.user_id, s.iteration, s.sweep_index), Some(s.epoch));
        }
        for d in &self.skipped {
            draws.insert((d.user_id, d.iteration, d.sweep_index), None);
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["user_id", "iter", "sweep_index", "t_s", "skipped"])?;
        for ((u, i, s), t) in draws {
            w.write_record([
                u.to_string(),
                i.to_string(),
                s.to_string(),
                t.map(|t| t.to_string()).unwrap_or_default(),
                u8::from(t.is_none()).to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("draws CSV", e))?;
        Ok(())
    }
}

enum Draw {
    Samples(Vec<CampaignSample>),
    Skipped(SkippedDraw),
}

fn build_links<R: Rng + ?Sized>(
    ctx: &Context,
    point: &SweepPoint,
    visible: &VisibleSet,
    rng: &mut R,
) -> Result<Vec<Link>> {
    visible
        .satellites
        .iter()
        .enumerate()
        .map(|(rank, (sat_id, geom))| {
            let params = channel_params(geom, ctx.config.geometry.carrier_hz, rng)?;
            Link::new(*sat_id, &ctx.config.prs_config(point, rank, *sat_id), params)
        })
        .collect()
}

fn run_draw(ctx: &Context, user: &UserLocation, iteration: u32, point: &SweepPoint) -> Result<Draw> {
    let c = ctx.config;
    let mut rng = ChaCha8Rng::seed_from_u64(draw_seed(c.campaign.seed, user.id, iteration, point.index));
    for _ in 0..=c.campaign.retry_budget {
        let e = rng.random_range(0..ctx.epochs.len());
        let epoch = ctx.epochs[e];
        let visible = ctx.visible(user, e, SATELLITES_PER_DRAW)?;
        if visible.insufficient {
            continue;
        }
        let links = build_links(ctx, point, &visible, &mut rng)?;
        let mut samples = Vec::with_capacity(links.len());
        for i in 0..links.len() {
            let s = interference_sample(&links, i, c.campaign.transmission)?;
            let flags = SampleFlags {
                floor: !(s.total > 0.0) || crate::to_db(s.total) < FLOOR_DBW,
                doppler_clipped: links[i].params.doppler.abs() > ctx.doppler_window,
            };
            samples.push(CampaignSample {
                user_id: user.id,
                iteration,
                sweep_index: point.index,
                symbols: point.symbols,
                comb_size: point.comb_size,
                ptx_dbw: point.ptx_dbw,
                epoch,
                sat_of_interest: s.sat_of_interest,
                interference: s.total,
                contributions: s.contributions,
                flags,
            });
        }
        return Ok(Draw::Samples(samples));
    }
    Ok(Draw::Skipped(SkippedDraw {
        user_id: user.id,
        iteration,
        sweep_index: point.index,
    }))
}

fn context<'a>(config: &'a CampaignConfig, passes: Option<&'a PassTable>) -> Result<Context<'a>> {
    config.validate()?;
    let (source, epochs) = match (config.passes.source, passes) {
        (_, Some(table)) => (Source::External(table), table.epochs().to_vec()),
        (PassSource::Internal, None) => (Source::Internal, epoch_grid(config)),
        (PassSource::External, None) => {
            return Err(Error::Config(
                "external pass source selected but no pass table given".into(),
            ))
        }
    };
    if epochs.is_empty() {
        return Err(Error::GeometryConfig(
            "the pass table has no epochs to draw from".into(),
        ));
    }
    let cached = match source {
        Source::Internal if epochs.len() <= MAX_CACHED_EPOCHS => epochs.len(),
        _ => 0,
    };
    Ok(Context {
        config,
        source,
        users: fibonacci_lattice(config.campaign.users)?,
        epochs,
        cache: (0..cached).map(|_| OnceLock::new()).collect(),
        doppler_window: config.doppler_grid()?.max_abs(),
    })
}

/// Runs the campaign, reading the pass table named in the configuration when
/// the external source is selected.
pub fn run_campaign(config: &CampaignConfig) -> Result<SampleSet> {
    match config.passes.source {
        PassSource::Internal => run_campaign_with(config, None),
        PassSource::External => {
            let table = load_passes(Path::new(&config.passes.path))?;
            run_campaign_with(config, Some(&table))
        }
    }
}

/// Runs the campaign over `passes` when given, whatever `passes.source` says,
/// and over the internal shell otherwise.
pub fn run_campaign_with(config: &CampaignConfig, passes: Option<&PassTable>) -> Result<SampleSet> {
    let ctx = context(config, passes)?;
    let sweep = config.sweep();
    let mut tasks = Vec::new();
    for user in &ctx.users {
        for iteration in 0..config.campaign.iterations as u32 {
            for point in &sweep {
                tasks.push((user, iteration, point));
            }
        }
    }
    let run = |&(user, iteration, point): &(&UserLocation, u32, &SweepPoint)| run_draw(&ctx, user, iteration, point);
    let draws: Vec<Result<Draw>> = if config.campaign.parallel {
        tasks.par_iter().map(run).collect()
    } else {
        tasks.iter().map(run).collect()
    };

    let mut samples = Vec::with_capacity(tasks.len() * SATELLITES_PER_DRAW);
    let mut skipped = Vec::new();
    for d in draws {
        match d? {
            Draw::Samples(s) => samples.extend(s),
            Draw::Skipped(s) => skipped.push(s),
        }
    }
    if skipped.len() * 2 > tasks.len() {
        return Err(Error::GeometryConfig(format!(
            "{} of {} draws found fewer than {SATELLITES_PER_DRAW} satellites above {}° within {} retries",
            skipped.len(),
            tasks.len(),
            config.geometry.mask_deg,
            config.campaign.retry_budget
        )));
    }
    Ok(SampleSet {
        samples,
        skipped,
        seed: config.campaign.seed,
        config_hash: config.hash(),
        total_draws: tasks.len(),
    })
}

/// One row of a sample CSV as read back for fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub user_id: u32,
    pub iteration: u32,
    pub symbols: usize,
    pub comb_size: usize,
    pub ptx_dbw: f64,
    pub sat_of_interest: u32,
    pub i_dbw: f64,
    pub flags: SampleFlags,
}

pub fn read_samples_csv(path: &Path) -> Result<Vec<SampleRecord>> {
    let name = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let header = reader.headers()?.clone();
    if header.iter().ne(SAMPLE_HEADER) {
        return Err(Error::PassTable {
            path: name,
            row: 1,
            message: "not a sample CSV (header mismatch)".into(),
        });
    }
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let fail = |message: String| Error::PassTable {
            path: name.clone(),
            row: i + 2,
            message,
        };
        let field = |j: usize| record.get(j).unwrap_or("").trim();
        let parse_u = |j: usize| {
            field(j)
                .parse::<u64>()
                .map_err(|e| fail(format!("{}: {e}", SAMPLE_HEADER[j])))
        };
        let parse_f = |j: usize| {
            field(j)
                .parse::<f64>()
                .map_err(|e| fail(format!("{}: {e}", SAMPLE_HEADER[j])))
        };
        out.push(SampleRecord {
            user_id: parse_u(0)? as u32,
            iteration: parse_u(1)? as u32,
            symbols: parse_u(2)? as usize,
            comb_size: parse_u(3)? as usize,
            ptx_dbw: parse_f(4)?,
            sat_of_interest: parse_u(5)? as u32,
            i_dbw: parse_f(6)?,
            flags: SampleFlags::decode(field(16)).map_err(|e| fail(e.to_string()))?,
        });
    }
    Ok(out)
}

/// Delay-Doppler map of the composite received by one user at one epoch.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub ddm: DelayDopplerMap,
    /// Satellites in the composite, by descending elevation.
    pub sat_ids: Vec<u32>,
    pub truth: Vec<LinkTruth>,
    /// Index into `sat_ids` of the satellite whose replica was correlated.
    pub of_interest: usize,
}

/// Full DDM of up to `count` satellites visible to lattice user `user_id` at
/// epoch `t`, correlated against the replica of the `of_interest`-th highest.
/// Uses the first sweep point and no noise.
pub fn ddm_snapshot(
    config: &CampaignConfig,
    user_id: u32,
    t: f64,
    count: usize,
    of_interest: usize,
) -> Result<Snapshot> {
    let table;
    let passes = match config.passes.source {
        PassSource::Internal => None,
        PassSource::External => {
            table = load_passes(Path::new(&config.passes.path))?;
            Some(&table)
        }
    };
    let mut ctx = context(config, passes)?;
    let user = *ctx
        .users
        .get(user_id as usize)
        .ok_or_else(|| Error::Config(format!("user {user_id} outside the {}-user lattice", ctx.users.len())))?;
    ctx.epochs = vec![t];
    ctx.cache = vec![OnceLock::new()];
    let visible = ctx.visible(&user, 0, count.max(1))?;
    if visible.satellites.is_empty() {
        return Err(Error::InvalidGeometry(format!(
            "no satellite above {}° for user {user_id} at t = {t} s",
            config.geometry.mask_deg
        )));
    }
    if of_interest >= visible.satellites.len() {
        return Err(Error::InvalidArgument(format!(
            "satellite {of_interest} requested but only {} visible",
            visible.satellites.len()
        )));
    }
    let point = config.sweep()[0];
    let mut rng = ChaCha8Rng::seed_from_u64(draw_seed(
        config.campaign.seed,
        user_id,
        epoch_key(t) as u32,
        usize::MAX,
    ));
    let links = build_links(&ctx, &point, &visible, &mut rng)?;
    let pairs: Vec<_> = links.iter().map(|l| (&l.tx, l.params)).collect();
    let composite = receive(&pairs, config.campaign.transmission, 0.0, &mut rng)?;
    let ddm = caf(&composite, &links[of_interest].replica, &config.doppler_grid()?)?;
    Ok(Snapshot {
        ddm,
        sat_ids: links.iter().map(|l| l.sat_id).collect(),
        truth: composite.links,
        of_interest,
    })
}
