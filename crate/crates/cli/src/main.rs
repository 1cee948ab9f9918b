//! `prsim`: batch front-end. Each verb reads the campaign configuration
//! (`--config`, then `--override key=value` in order, then `--seed`) and
//! writes its artifacts under `--out`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use prsim::config::{CampaignConfig, PassSource};
use prsim::montecarlo::{self, SampleRecord};
use prsim::stats::{self, Candidate, FitReport, GevModel, GevParams, KsOptions, ParameterFit};
use prsim::{Error, Result};

#[derive(Parser)]
#[command(
    name = "prsim",
    version,
    about = "Interference of comb-multiplexed PRS from LEO satellites"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args)]
struct Common {
    /// Campaign configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if absent.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Master seed, overriding `campaign.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `key=value` or `section.key=value`, applied after the file.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Verb {
    /// Tabulate satellite passes for the lattice users.
    GeneratePasses,
    /// Run the Monte Carlo campaign.
    Simulate,
    /// Fit the six candidate distributions per (m, cs, P_TX) group.
    Fit {
        /// Sample CSV; defaults to `<out>/samples.csv`.
        #[arg(long)]
        samples: Option<PathBuf>,
    },
    /// Regress the fitted GEV parameters on the PRS configuration.
    Model {
        /// Fit report; defaults to `<out>/fits.json`.
        #[arg(long)]
        fits: Option<PathBuf>,
    },
    /// Delay-Doppler map of one user's composite at one epoch.
    Ddm {
        #[arg(long, default_value_t = 0)]
        user: u32,
        /// Epoch, s.
        #[arg(long, default_value_t = 0.0)]
        t: f64,
        /// Satellites in the composite.
        #[arg(long, default_value_t = montecarlo::SATELLITES_PER_DRAW)]
        count: usize,
        /// Rank (by elevation) of the satellite whose replica is correlated.
        #[arg(long, default_value_t = 0)]
        sat: usize,
        /// Delay columns either side of the peak in the CSV window.
        #[arg(long, default_value_t = 64)]
        half_width: usize,
    },
    /// Plain-text summary of the fit and model outputs.
    Report {
        #[arg(long)]
        fits: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.verb, &cli.common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("prsim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

impl Common {
    fn overrides(&self) -> Vec<String> {
        let mut o = self.overrides.clone();
        if let Some(seed) = self.seed {
            o.push(format!("campaign.seed={seed}"));
        }
        o
    }

    fn load(&self) -> Result<CampaignConfig> {
        CampaignConfig::load(self.config.as_deref(), &self.overrides())
    }

    fn out_dir(&self) -> Result<&Path> {
        std::fs::create_dir_all(&self.out).map_err(|e| Error::Io {
            path: self.out.display().to_string(),
            source: e,
        })?;
        Ok(&self.out)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(create(path)?, value)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}

fn run(verb: Verb, common: &Common) -> Result<()> {
    let config = common.load()?;
    match verb {
        Verb::GeneratePasses => generate_passes(&config, common),
        Verb::Simulate => simulate(&config, common),
        Verb::Fit { samples } => {
            let path = samples.unwrap_or_else(|| common.out.join("samples.csv"));
            fit(&config, common, &path)
        }
        Verb::Model { fits } => {
            let path = fits.unwrap_or_else(|| common.out.join("fits.json"));
            model(common, &path)
        }
        Verb::Ddm {
            user,
            t,
            count,
            sat,
            half_width,
        } => ddm(&config, common, user, t, count, sat, half_width),
        Verb::Report { fits, model } => {
            let fits = fits.unwrap_or_else(|| common.out.join("fits.json"));
            let model = model.unwrap_or_else(|| common.out.join("model.json"));
            report(common, &fits, &model)
        }
    }
}

fn generate_passes(config: &CampaignConfig, common: &Common) -> Result<()> {
    let out = common.out_dir()?.join("passes.csv");
    let table = montecarlo::generate_passes(config)?;
    table.write_csv(create(&out)?)?;
    let mut sats: Vec<u32> = table.rows().iter().map(|r| r.sat_id).collect();
    sats.sort_unstable();
    sats.dedup();
    println!(
        "{}: {} rows, {} users, {} distinct satellites, {} epochs",
        out.display(),
        table.len(),
        config.campaign.users,
        sats.len(),
        table.epochs().len()
    );
    Ok(())
}

fn simulate(config: &CampaignConfig, common: &Common) -> Result<()> {
    if config.passes.source == PassSource::External && !Path::new(&config.passes.path).exists() {
        return Err(Error::Io {
            path: config.passes.path.clone(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "pass table not found"),
        });
    }
    let dir = common.out_dir()?;
    let set = montecarlo::run_campaign(config)?;
    set.write_csv(create(&dir.join("samples.csv"))?)?;
    set.write_draws_csv(create(&dir.join("draws.csv"))?)?;
    let meta = set.metadata(config, &common.overrides());
    write_json(&dir.join("metadata.json"), &meta)?;
    println!(
        "{} samples from {} draws ({} skipped, {} at the floor, {} Doppler-clipped) -> {}",
        meta.samples,
        meta.total_draws,
        meta.skipped_draws,
        meta.floor_samples,
        meta.doppler_clipped_samples,
        dir.display()
    );
    Ok(())
}

/// One (m, cs, P_TX) group of a sample file.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
struct GroupKey {
    symbols: usize,
    comb_size: usize,
    ptx_dbw: f64,
}

impl GroupKey {
    fn of(r: &SampleRecord) -> Self {
        Self {
            symbols: r.symbols,
            comb_size: r.comb_size,
            ptx_dbw: r.ptx_dbw,
        }
    }

    fn tag(&self) -> String {
        format!("m{}_cs{}_p{}", self.symbols, self.comb_size, self.ptx_dbw)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct GroupFit {
    #[serde(flatten)]
    key: GroupKey,
    median_dbw: f64,
    report: FitReport,
}

#[derive(Debug, Serialize, Deserialize)]
struct SkippedGroup {
    #[serde(flatten)]
    key: GroupKey,
    samples: usize,
    reason: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct FitOutput {
    source: String,
    excluded_floor: usize,
    excluded_doppler_clipped: usize,
    groups: Vec<GroupFit>,
    warnings: Vec<SkippedGroup>,
}

fn fit(config: &CampaignConfig, common: &Common, samples: &Path) -> Result<()> {
    let records = montecarlo::read_samples_csv(samples)?;
    let dir = common.out_dir()?;
    let f = &config.fit;
    let mut groups: Vec<(GroupKey, Vec<f64>)> = Vec::new();
    let (mut floor, mut clipped) = (0, 0);
    for r in &records {
        if r.flags.floor {
            floor += 1;
            continue;
        }
        if f.exclude_doppler_clipped && r.flags.doppler_clipped {
            clipped += 1;
            continue;
        }
        let key = GroupKey::of(r);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, xs)) => xs.push(r.i_dbw),
            None => groups.push((key, vec![r.i_dbw])),
        }
    }
    groups.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));

    let ks = KsOptions {
        n_eff: f.n_eff,
        seed: f.ks_seed,
    };
    let mut out = FitOutput {
        source: samples.display().to_string(),
        excluded_floor: floor,
        excluded_doppler_clipped: clipped,
        groups: Vec::new(),
        warnings: Vec::new(),
    };
    for (key, xs) in groups {
        if xs.len() < f.min_samples {
            let reason = format!("{} samples, need {}", xs.len(), f.min_samples);
            eprintln!("warning: skipping {}: {reason}", key.tag());
            out.warnings.push(SkippedGroup {
                key,
                samples: xs.len(),
                reason,
            });
            continue;
        }
        let report = stats::fit_candidates_with(&xs, &ks)?;
        let e = stats::ecdf(&xs)?;
        let tag = key.tag();
        e.write_csv(create(&dir.join(format!("ecdf_{tag}.csv")))?)?;
        let hist = stats::histogram_pdf(&xs, f.histogram_bins)?;
        stats::write_curve(create(&dir.join(format!("pdf_hist_{tag}.csv")))?, ["x", "pdf"], &hist)?;
        if let Some(gev) = report.gev() {
            let curve: Vec<(f64, f64)> = hist.iter().map(|&(x, _)| (x, gev.pdf(x))).collect();
            stats::write_curve(create(&dir.join(format!("pdf_gev_{tag}.csv")))?, ["x", "pdf"], &curve)?;
        }
        println!(
            "{tag}: n={} winner={} D={:.4}",
            report.n,
            report.winner.name(),
            report.get(report.winner).map_or(f64::NAN, |c| c.statistic)
        );
        out.groups.push(GroupFit {
            key,
            median_dbw: e.median(),
            report,
        });
    }
    write_json(&dir.join("fits.json"), &out)
}

fn model(common: &Common, fits: &Path) -> Result<()> {
    let input: FitOutput = read_json(fits)?;
    let params: Vec<ParameterFit> = input
        .groups
        .iter()
        .filter_map(|g| {
            g.report.gev().map(|params| ParameterFit {
                symbols: g.key.symbols,
                ptx_dbw: g.key.ptx_dbw,
                comb_size: g.key.comb_size,
                params,
            })
        })
        .collect();
    let model = stats::fit_parameter_models(&params)?;
    let dir = common.out_dir()?;
    write_json(&dir.join("model.json"), &model)?;
    for (&cs, coeffs) in &model.combs {
        let points: Vec<&ParameterFit> = params.iter().filter(|p| p.comb_size == cs).collect();
        type Pick = fn(&GevParams) -> f64;
        let curves: [(&str, Pick, usize); 3] = [
            ("mu", |p| p.location, 2),
            ("sigma", |p| p.scale, 1),
            ("k", |p| p.shape, 0),
        ];
        for (name, pick, slot) in curves {
            let path = dir.join(format!("model_{name}_cs{cs}.csv"));
            let mut w = create(&path)?;
            use std::io::Write;
            let io = |e| Error::Io {
                path: path.display().to_string(),
                source: e,
            };
            writeln!(w, "m,ptx_dbw,fitted,modeled").map_err(io)?;
            for p in &points {
                let (k, sigma, mu) = coeffs.eval(p.symbols as f64, p.ptx_dbw);
                let modeled = [k, sigma, mu][slot];
                writeln!(w, "{},{},{},{}", p.symbols, p.ptx_dbw, pick(&p.params), modeled).map_err(io)?;
            }
            w.flush().map_err(io)?;
        }
        println!(
            "cs={cs}: mu = {:.3}/sqrt(m) + {:.4}*P + {:.2} (rms {:.3}); sigma = {:.4}*m + {:.3} (rms {:.3}); k = {:.4}/sqrt(m) + {:.4} (rms {:.4})",
            coeffs.a1,
            coeffs.a2,
            coeffs.a3,
            coeffs.rms_mu,
            coeffs.b1,
            coeffs.b2,
            coeffs.rms_sigma,
            coeffs.c1,
            coeffs.c2,
            coeffs.rms_k
        );
    }
    Ok(())
}

fn ddm(
    config: &CampaignConfig,
    common: &Common,
    user: u32,
    t: f64,
    count: usize,
    sat: usize,
    half: usize,
) -> Result<()> {
    let snap = montecarlo::ddm_snapshot(config, user, t, count, sat)?;
    let dir = common.out_dir()?;
    snap.ddm.write_binary(&dir.join("ddm.bin"))?;
    let (row, col, peak) = snap.ddm.argmax();
    snap.ddm
        .write_csv(create(&dir.join("ddm.csv"))?, col.saturating_sub(half), col + half + 1)?;

    #[derive(Serialize)]
    struct Truth<'a> {
        user_id: u32,
        t_s: f64,
        sat_ids: &'a [u32],
        of_interest: usize,
        links: &'a [prsim::channel::LinkTruth],
        doppler_bins: usize,
        delay_bins: usize,
        peak: f64,
        peak_delay_s: f64,
        peak_doppler_hz: f64,
    }
    write_json(
        &dir.join("ddm_truth.json"),
        &Truth {
            user_id: user,
            t_s: t,
            sat_ids: &snap.sat_ids,
            of_interest: snap.of_interest,
            links: &snap.truth,
            doppler_bins: snap.ddm.dopplers.len(),
            delay_bins: snap.ddm.delays.len(),
            peak,
            peak_delay_s: snap.ddm.delays[col],
            peak_doppler_hz: snap.ddm.dopplers[row],
        },
    )?;
    println!(
        "{} x {} DDM of satellites {:?}; peak {:.3e} at {:.3e} s, {} Hz",
        snap.ddm.dopplers.len(),
        snap.ddm.delays.len(),
        snap.sat_ids,
        peak,
        snap.ddm.delays[col],
        snap.ddm.dopplers[row]
    );
    Ok(())
}

fn report(common: &Common, fits: &Path, model: &Path) -> Result<()> {
    use std::fmt::Write;
    let input: FitOutput = read_json(fits)?;
    let mut text = String::new();
    let header: Vec<&str> = Candidate::ALL.iter().map(|c| c.name()).collect();
    let _ = writeln!(text, "KS statistic D per group ({})", input.source);
    let _ = writeln!(
        text,
        "{:<20} {:>6} {:>9}  {}  winner",
        "group",
        "n",
        "median",
        header.join("  ")
    );
    for g in &input.groups {
        let ds: Vec<String> = Candidate::ALL
            .iter()
            .map(|&c| {
                let d = g.report.get(c).map_or(f64::NAN, |f| f.statistic);
                format!("{d:>w$.4}", w = c.name().len())
            })
            .collect();
        let _ = writeln!(
            text,
            "{:<20} {:>6} {:>9.2}  {}  {}",
            g.key.tag(),
            g.report.n,
            g.median_dbw,
            ds.join("  "),
            g.report.winner.name()
        );
    }
    for w in &input.warnings {
        let _ = writeln!(text, "skipped {}: {}", w.key.tag(), w.reason);
    }
    if model.exists() {
        let m: GevModel = read_json(model)?;
        let mut by_cs: BTreeMap<usize, String> = BTreeMap::new();
        for (cs, c) in &m.combs {
            by_cs.insert(
                *cs,
                format!(
                    "a1={:.3} a2={:.4} a3={:.2} b1={:.4} b2={:.3} c1={:.4} c2={:.4} (from {} fits)",
                    c.a1, c.a2, c.a3, c.b1, c.b2, c.c1, c.c2, c.points
                ),
            );
        }
        let _ = writeln!(text, "\nGEV parameter models");
        for (cs, line) in by_cs {
            let _ = writeln!(text, "cs={cs}: {line}");
        }
    }
    print!("{text}");
    let path = common.out_dir()?.join("report.txt");
    std::fs::write(&path, text).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}
