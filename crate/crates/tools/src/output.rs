//! CSV rendering and the per-run output directory.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! value parses back to the identical `f64`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use tnn_core::bounds::CompressionReport;
use tnn_core::training::TrainLogRecord;

use crate::config::{Command, RunConfig};
use crate::error::{Result, ToolError};
use crate::experiments::{self, BoundsReport, GapReport};
use crate::formats;
use crate::verify;

pub const MANIFEST_FILE: &str = "manifest.txt";

pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn log_header(depth: usize) -> String {
    let mut h = String::from(
        "epoch,adv_risk_train,clean_risk_train,adv_risk_test,clean_risk_test,robust_acc,clean_acc,rho,qhat_m,gamma_tilde",
    );
    for l in 1..=depth {
        write!(h, ",fro_l{l}").expect("string write");
    }
    for l in 1..=depth {
        write!(h, ",stable_l{l}").expect("string write");
    }
    h
}

pub fn log_row(r: &TrainLogRecord) -> String {
    let mut row = format!(
        "{},{},{},{},{},{},{},{},{},{}",
        r.epoch,
        num(r.adv_risk_train),
        num(r.clean_risk_train),
        num(r.adv_risk_test),
        num(r.clean_risk_test),
        num(r.robust_accuracy),
        num(r.clean_accuracy),
        num(r.rho),
        num(r.q_hat),
        r.gamma_tilde.map(num).unwrap_or_default(),
    );
    for v in r.layer_fro.iter().chain(&r.stable_ranks) {
        row.push(',');
        row.push_str(&num(*v));
    }
    row
}

pub fn log_csv(log: &[TrainLogRecord]) -> String {
    let depth = log.first().map_or(0, |r| r.layer_fro.len());
    let mut out = log_header(depth);
    out.push('\n');
    for r in log {
        out.push_str(&log_row(r));
        out.push('\n');
    }
    out
}

pub fn gap_csvs(report: &GapReport) -> [(String, String); 3] {
    let mut points = String::from("n,rank_setting,adv_gap,clean_gap\n");
    for p in &report.points {
        writeln!(points, "{},{},{},{}", p.n, p.rank.label(), num(p.adv_gap), num(p.clean_gap)).expect("string write");
    }
    let mut runs = String::from(
        "repeat,n,rank_setting,adv_risk_train,adv_risk_test,clean_risk_train,clean_risk_test,adv_gap,clean_gap\n",
    );
    for r in &report.runs {
        writeln!(
            runs,
            "{},{},{},{},{},{},{},{},{}",
            r.repeat,
            r.n,
            r.rank.label(),
            num(r.adv_risk_train),
            num(r.adv_risk_test),
            num(r.clean_risk_train),
            num(r.clean_risk_test),
            num(r.adv_gap()),
            num(r.clean_gap())
        )
        .expect("string write");
    }
    let mut fits = String::from("rank_setting,slope,intercept,r_squared\n");
    for (rank, f) in &report.fits {
        writeln!(fits, "{},{},{},{}", rank.label(), num(f.slope), num(f.intercept), num(f.r_squared))
            .expect("string write");
    }
    [("gap_vs_n.csv".into(), points), ("gap_vs_n_runs.csv".into(), runs), ("gap_vs_n_fit.csv".into(), fits)]
}

pub fn nuclear_csv(runs: &[(f64, Vec<TrainLogRecord>)]) -> String {
    let depth = runs.first().and_then(|(_, l)| l.first()).map_or(0, |r| r.layer_fro.len());
    let mut out = format!("lambda,{}\n", log_header(depth));
    for (lambda, log) in runs {
        for r in log {
            writeln!(out, "{},{}", num(*lambda), log_row(r)).expect("string write");
        }
    }
    out
}

/// `(quantity, value)` rows of a bounds report.
pub fn bounds_rows(rep: &BoundsReport) -> Vec<(String, String)> {
    let i = &rep.inputs;
    let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    let mut rows: Vec<(String, String)> = vec![
        ("N".into(), i.n.to_string()),
        ("c".into(), i.c.to_string()),
        ("dims".into(), join(&i.dims)),
        ("ranks".into(), join(i.ranks.as_deref().unwrap_or(&[]))),
        ("L_loss".into(), num(i.lipschitz)),
        ("B".into(), num(i.range)),
        ("B_W".into(), num(rep.b_w)),
        ("B_f_tilde".into(), num(rep.b_f_tilde)),
        ("standard_gap_bound".into(), num(rep.standard)),
        ("adv_complexity_full".into(), num(rep.full_complexity)),
        ("adv_gap_bound_full".into(), num(rep.full)),
        ("adv_complexity_lowrank".into(), num(rep.lowrank_complexity)),
        ("adv_gap_bound_lowrank".into(), num(rep.lowrank)),
        ("lowrank_below_full".into(), (rep.lowrank < rep.full).to_string()),
    ];
    let d = &rep.decay;
    rows.extend([
        ("decay_ranks".into(), join(&d.ranks)),
        ("decay_optimal_ranks".into(), join(&d.optimal_ranks)),
        ("decay_r_hat".into(), num(d.r_hat)),
        ("decay_e1".into(), num(d.e1)),
        ("decay_e2".into(), num(d.e2)),
        ("decay_bound".into(), num(d.bound)),
        ("decay_optimal_bound".into(), num(d.optimal_bound)),
    ]);
    rows
}

fn table_csv(rows: &[(String, String)]) -> String {
    let mut out = String::from("quantity,value\n");
    for (k, v) in rows {
        writeln!(out, "{k},{v}").expect("string write");
    }
    out
}

pub fn compress_csvs(rep: &CompressionReport, ranks: &[usize]) -> [(String, String); 2] {
    let mut layers = String::from("layer,rank,delta_fro,delta_spectral\n");
    for (l, ((d, s), r)) in rep.layer_deltas.iter().zip(&rep.layer_deltas_spectral).zip(ranks).enumerate() {
        writeln!(layers, "{},{},{},{}", l + 1, r, num(*d), num(*s)).expect("string write");
    }
    let summary = table_csv(&[
        ("delta".into(), num(rep.delta)),
        ("b_f_tilde".into(), num(rep.b_f_tilde)),
        ("certificate".into(), num(rep.certificate)),
        ("spectral_certificate".into(), num(rep.spectral_certificate)),
        ("observed".into(), num(rep.observed)),
        ("observed_within_certificate".into(), (rep.observed <= rep.certificate).to_string()),
    ]);
    [("compress_layers.csv".into(), layers), ("compress.csv".into(), summary)]
}

/// What a run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    /// Human-readable summary for the terminal.
    pub summary: String,
    /// False when `verify` found a failing check.
    pub success: bool,
}

fn write(dir: &Path, name: &str, contents: &[u8], files: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| ToolError::io(&path, e))?;
    files.push(path);
    Ok(())
}

/// Runs the configured subcommand, writes its CSV files into `out` and the
/// manifest next to them.
pub fn run(cfg: &RunConfig, out: &Path) -> Result<RunOutcome> {
    let mut cfg = cfg.clone();
    cfg.resolve();
    fs::create_dir_all(out).map_err(|e| ToolError::io(out, e))?;
    let mut files = Vec::new();
    let mut summary = String::new();
    let mut success = true;
    match cfg.command {
        Command::GapVsN => {
            let report = experiments::gap_vs_n(&cfg)?;
            for (name, body) in gap_csvs(&report) {
                write(out, &name, body.as_bytes(), &mut files)?;
            }
            for (rank, f) in &report.fits {
                writeln!(summary, "rank {}: slope {:.6}, R^2 {:.4}", rank.label(), f.slope, f.r_squared)
                    .expect("string write");
            }
        }
        Command::ImplicitBias => {
            let log = experiments::implicit_bias(&cfg)?;
            write(out, "train_log.csv", log_csv(&log).as_bytes(), &mut files)?;
            if let (Some(a), Some(b)) = (log.first(), log.last()) {
                writeln!(
                    summary,
                    "adv risk {:.6} -> {:.6}, rho {:.4} -> {:.4}",
                    a.adv_risk_train, b.adv_risk_train, a.rho, b.rho
                )
                .expect("string write");
            }
        }
        Command::NuclearReg => {
            let runs = experiments::nuclear_reg(&cfg)?;
            write(out, "nuclear_reg.csv", nuclear_csv(&runs).as_bytes(), &mut files)?;
            for (lambda, log) in &runs {
                let last = log.last().expect("log has the initial record");
                writeln!(summary, "lambda {lambda}: final stable ranks {:?}", last.stable_ranks).expect("string write");
            }
        }
        Command::Bounds => {
            let report = experiments::bounds(&cfg)?;
            let rows = bounds_rows(&report);
            write(out, "bounds.csv", table_csv(&rows).as_bytes(), &mut files)?;
            for (k, v) in &rows {
                writeln!(summary, "{k:<24} {v}").expect("string write");
            }
        }
        Command::Compress => {
            let report = experiments::compress(&cfg)?;
            let ranks: Vec<usize> = report
                .compressed
                .layers()
                .iter()
                .map(|w| tnn_core::tsvd::tubal_rank(w, report.compressed.transform(), tnn_core::tsvd::RANK_TOL))
                .collect::<tnn_core::Result<_>>()?;
            for (name, body) in compress_csvs(&report, &ranks) {
                write(out, &name, body.as_bytes(), &mut files)?;
            }
            write(out, "compressed.tnnw", &formats::encode_model(&report.compressed), &mut files)?;
            writeln!(
                summary,
                "delta {:.6e}, certificate {:.6e}, observed {:.6e}",
                report.delta, report.certificate, report.observed
            )
            .expect("string write");
        }
        Command::Verify => {
            let results = verify::run_all(cfg.seed);
            write(out, "verify.csv", verify::csv(&results).as_bytes(), &mut files)?;
            for r in &results {
                writeln!(summary, "{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail)
                    .expect("string write");
            }
            success = results.iter().all(|r| r.passed);
        }
    }
    let mut manifest = format!("# tnn {} run manifest\nversion = {}\n", cfg.command.name(), env!("CARGO_PKG_VERSION"));
    manifest.push_str(&cfg.render());
    for f in &files {
        let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        writeln!(manifest, "output = {name}").expect("string write");
    }
    write(out, MANIFEST_FILE, manifest.as_bytes(), &mut files)?;
    Ok(RunOutcome { files, summary, success })
}

/// Re-runs the manifest in `manifest` into `out`.
pub fn replay(manifest: &Path, out: &Path) -> Result<RunOutcome> {
    let text = fs::read_to_string(manifest).map_err(|e| ToolError::io(manifest, e))?;
    let command = text
        .lines()
        .filter_map(|l| l.split_once('='))
        .find(|(k, _)| k.trim() == "command")
        .map(|(_, v)| v.trim().to_string())
        .ok_or_else(|| ToolError::Config("manifest has no command".into()))?;
    let mut cfg = RunConfig::defaults(Command::parse(&command)?);
    cfg.apply_text(&text)?;
    run(&cfg, out)
}
