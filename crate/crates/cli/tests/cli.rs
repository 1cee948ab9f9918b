use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn prsim(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prsim"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("spawn prsim")
}

fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Small campaign over one comb size, three m values and both powers.
const SMALL: &[&str] = &[
    "--override",
    "users=4",
    "--override",
    "iterations=10",
    "--override",
    "retry_budget=20",
];

fn with<'a>(base: &[&'a str], extra: &[&'a str]) -> Vec<&'a str> {
    base.iter().chain(extra).copied().collect()
}

fn csv_column(path: &Path, name: &str) -> Vec<String> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let j = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(j).unwrap().to_string()).collect()
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

#[test]
fn one_draw_gives_four_samples() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a/b");
    let o = prsim(
        &out,
        &[
            "simulate",
            "--override",
            "users=1",
            "--override",
            "iterations=1",
            "--override",
            "symbols=1",
            "--override",
            "ptx_dbw=30",
        ],
    );
    ok(&o);
    assert_eq!(csv_column(&out.join("samples.csv"), "I_dbw").len(), 4);
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["samples"], 4);
    assert_eq!(meta["skipped_draws"], 0);
    assert_eq!(meta["seed"], 1);
    assert_eq!(meta["overrides"].as_array().unwrap().len(), 4);
}

#[test]
fn simulate_is_idempotent_and_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let args = with(SMALL, &["simulate", "--override", "symbols=4"]);
    ok(&prsim(&dir.path().join("a"), &args));
    ok(&prsim(&dir.path().join("b"), &args));
    ok(&prsim(&dir.path().join("c"), &with(&args, &["--seed", "7"])));
    let read = |d: &str, f: &str| std::fs::read(dir.path().join(d).join(f)).unwrap();
    assert_eq!(read("a", "samples.csv"), read("b", "samples.csv"));
    assert_eq!(read("a", "draws.csv"), read("b", "draws.csv"));
    assert_ne!(read("a", "samples.csv"), read("c", "samples.csv"));
}

#[test]
fn power_override_follows_slope_two() {
    let dir = tempfile::tempdir().unwrap();
    let base = with(SMALL, &["simulate", "--override", "symbols=1"]);
    let (lo, hi) = (dir.path().join("lo"), dir.path().join("hi"));
    ok(&prsim(&lo, &with(&base, &["--override", "ptx_dbw=1"])));
    ok(&prsim(&hi, &with(&base, &["--override", "ptx_dbw=30"])));
    let med = |d: &Path| {
        median(
            csv_column(&d.join("samples.csv"), "I_dbw")
                .iter()
                .map(|s| s.parse().unwrap())
                .collect(),
        )
    };
    let shift = med(&lo) - med(&hi);
    assert!((shift + 58.0).abs() <= 3.0, "median shift {shift} dB");
}

#[test]
fn missing_pass_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere/passes.csv");
    let path = format!("path={}", missing.display());
    let o = prsim(
        dir.path(),
        &["simulate", "--override", "source=external", "--override", &path],
    );
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains(&missing.display().to_string()), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = prsim(dir.path(), &["simulate", "--override", "no_such_key=1"]);
    assert_eq!(o.status.code(), Some(2));
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[campaign]\nusers = 3\nflavour = 1\n").unwrap();
    let o = prsim(dir.path(), &["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn sparse_geometry_aborts_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = prsim(
        dir.path(),
        &[
            "simulate",
            "--override",
            "users=2",
            "--override",
            "iterations=2",
            "--override",
            "symbols=1",
            "--override",
            "ptx_dbw=30",
            "--override",
            "planes=2",
            "--override",
            "sats_per_plane=2",
            "--override",
            "retry_budget=3",
        ],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn generated_passes_are_deterministic_and_loadable() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["generate-passes", "--override", "users=3", "--override", "span_s=20"];
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&prsim(&a, &args));
    ok(&prsim(&b, &args));
    let bytes = std::fs::read(a.join("passes.csv")).unwrap();
    assert_eq!(bytes, std::fs::read(b.join("passes.csv")).unwrap());
    assert!(csv_column(&a.join("passes.csv"), "sat_id").len() > 3 * 20);

    // The same campaign through the written table.
    let path = format!("path={}", a.join("passes.csv").display());
    let o = prsim(
        &dir.path().join("sim"),
        &[
            "simulate",
            "--override",
            "users=3",
            "--override",
            "span_s=20",
            "--override",
            "iterations=2",
            "--override",
            "symbols=1",
            "--override",
            "source=external",
            "--override",
            &path,
        ],
    );
    ok(&o);
}

#[test]
fn zenith_mask_leaves_a_near_empty_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = prsim(
        dir.path(),
        &[
            "generate-passes",
            "--override",
            "users=1",
            "--override",
            "mask_deg=89",
            "--override",
            "span_s=600",
        ],
    );
    ok(&o);
    let rows = csv_column(&dir.path().join("passes.csv"), "sat_id").len();
    assert!(rows < 20, "{rows} rows above 89°");
}

#[test]
fn fit_model_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(&prsim(out, &with(SMALL, &["simulate"])));
    let o = prsim(out, &["fit", "--override", "min_samples=50"]);
    ok(&o);
    let fits: Value = serde_json::from_str(&std::fs::read_to_string(out.join("fits.json")).unwrap()).unwrap();
    let groups = fits["groups"].as_array().unwrap();
    assert_eq!(groups.len(), 6);
    for g in groups {
        let winner = g["report"]["winner"].as_str().unwrap();
        let candidates = g["report"]["candidates"].as_array().unwrap();
        assert_eq!(candidates.len(), 6);
        let best = candidates
            .iter()
            .min_by(|a, b| {
                a["statistic"]
                    .as_f64()
                    .unwrap()
                    .total_cmp(&b["statistic"].as_f64().unwrap())
            })
            .unwrap();
        assert_eq!(best["distribution"].as_str().unwrap(), winner);
        let tag = format!(
            "m{}_cs{}_p{}",
            g["symbols"],
            g["comb_size"],
            g["ptx_dbw"].as_f64().unwrap()
        );
        let f = csv_column(&out.join(format!("ecdf_{tag}.csv")), "F");
        assert_eq!(f.last().unwrap().parse::<f64>().unwrap(), 1.0);
        for kind in ["pdf_hist", "pdf_gev"] {
            assert!(out.join(format!("{kind}_{tag}.csv")).exists());
        }
    }

    ok(&prsim(out, &["model"]));
    let model: Value = serde_json::from_str(&std::fs::read_to_string(out.join("model.json")).unwrap()).unwrap();
    let a2 = model["combs"]["4"]["a2"].as_f64().unwrap();
    assert!((a2 - 2.0).abs() < 0.2, "a2 = {a2}");
    assert!(model["combs"]["4"]["rms_mu"].as_f64().is_some());
    for name in ["mu", "sigma", "k"] {
        assert_eq!(
            csv_column(&out.join(format!("model_{name}_cs4.csv")), "modeled").len(),
            6
        );
    }

    let o = prsim(out, &["report"]);
    ok(&o);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("m12_cs4_p30") && text.contains("a2="), "{text}");
}

#[test]
fn underfilled_groups_are_skipped_and_model_needs_span() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(&prsim(
        out,
        &[
            "simulate",
            "--override",
            "users=2",
            "--override",
            "iterations=10",
            "--override",
            "symbols=1",
        ],
    ));
    let o = prsim(out, &["fit", "--override", "min_samples=1000"]);
    ok(&o);
    assert!(stderr(&o).contains("warning"));
    let fits: Value = serde_json::from_str(&std::fs::read_to_string(out.join("fits.json")).unwrap()).unwrap();
    assert!(fits["groups"].as_array().unwrap().is_empty());
    assert_eq!(fits["warnings"].as_array().unwrap().len(), 2);

    ok(&prsim(out, &["fit", "--override", "min_samples=50"]));
    let o = prsim(out, &["model"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("(m)"), "{}", stderr(&o));
}

#[test]
fn ddm_snapshot_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let o = prsim(
        out,
        &[
            "ddm",
            "--override",
            "users=10",
            "--override",
            "symbols=1",
            "--user",
            "2",
            "--t",
            "100",
            "--count",
            "1",
        ],
    );
    ok(&o);
    let bin = std::fs::read(out.join("ddm.bin")).unwrap();
    assert_eq!(&bin[..4], b"DDM1");
    let rows = u32::from_le_bytes(bin[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bin[8..12].try_into().unwrap()) as usize;
    assert_eq!(rows, 161);
    assert_eq!(bin.len(), 12 + 8 * (rows + cols + rows * cols));
    let values: Vec<f64> = bin[12 + 8 * (rows + cols)..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    assert!(values.iter().all(|&v| v >= 0.0));

    let truth: Value = serde_json::from_str(&std::fs::read_to_string(out.join("ddm_truth.json")).unwrap()).unwrap();
    let link = &truth["links"][0];
    assert_eq!(truth["peak_delay_s"], link["quantized_delay"]);
    let doppler = link["params"]["doppler"].as_f64().unwrap();
    assert!((truth["peak_doppler_hz"].as_f64().unwrap() - doppler).abs() <= 250.0);
    assert_eq!(csv_column(&out.join("ddm.csv"), "doppler_hz\\delay_s").len(), 161);
}

#[test]
fn ddm_without_visible_satellites_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = prsim(dir.path(), &["ddm", "--override", "mask_deg=89.99"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}
