//! Command-line frontend: `simulate | oracle | estimate | verify`.
//!
//! All structured output is JSON with a `schema_version` field and full
//! provenance (command, seed, configuration), so any report can be
//! re-derived. Datasets travel as CSV with header `w,a,z,m,y`. Exit codes:
//! 0 success, 2 input or validation error, 3 numerical-guard error.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::builtin;
use crate::error::{Error, Result};
use crate::estimator::{
    decompose_ate, decompose_paths, total_influence, AteReport, DecompositionReport,
    EstimateConfig, EstimateReport,
};
use crate::nuisance::{NuisanceConfig, Regression};
use crate::oracle;
use crate::scm::{flatten_w_columns, Dataset, DiscreteScm};
use crate::verify::{run_experiment, ExperimentSpec};

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(
    name = "pathflux",
    about = "Path-specific causal influence on discrete structural causal models",
    version
)]
pub struct Cli {
    /// Worker threads (default: all cores; PATHFLUX_THREADS as fallback).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw i.i.d. rows from a model and write them as CSV.
    Simulate {
        /// Built-in model name (t0, t1) or path to a model JSON file.
        #[arg(long)]
        scm: String,
        /// Number of rows.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact decompositions of a model by enumeration.
    Oracle {
        #[arg(long)]
        scm: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Also decompose the average treatment effect (binary A only).
        #[arg(long)]
        ate: bool,
    },
    /// Cross-fitted one-step estimation from a dataset.
    Estimate {
        /// Input CSV.
        #[arg(long)]
        data: PathBuf,
        /// JSON configuration file (folds, alpha, epsilon, regression,
        /// seed, ci_level, w_columns).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seed override for the fold assignment.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[arg(long)]
        ate: bool,
    },
    /// Run a verification experiment described by a spec file.
    Verify {
        /// Experiment spec JSON.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Json,
    Table,
}

/// Keys accepted in the `--config` file. Everything is optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub folds: Option<usize>,
    pub alpha: Option<f64>,
    pub epsilon: Option<f64>,
    pub regression: Option<Regression>,
    pub seed: Option<u64>,
    pub ci_level: Option<f64>,
    /// Names of the CSV columns jointly forming `W`. When set, the input
    /// header is `<w_columns...>,a,z,m,y` and the columns are flattened to
    /// a single code with the codebook recorded in the output.
    pub w_columns: Option<Vec<String>>,
}

impl FileConfig {
    /// Merge the file keys over the defaults; the flag seed wins.
    pub fn estimate_config(&self, seed_override: Option<u64>) -> EstimateConfig {
        let defaults = NuisanceConfig::default();
        EstimateConfig {
            folds: self.folds.unwrap_or(5),
            seed: seed_override.or(self.seed).unwrap_or(0),
            ci_level: self.ci_level.unwrap_or(0.95),
            nuisance: NuisanceConfig {
                alpha: self.alpha.unwrap_or(defaults.alpha),
                epsilon: self.epsilon.unwrap_or(defaults.epsilon),
                regression: self.regression.unwrap_or(defaults.regression),
            },
        }
    }
}

/// Entry point used by the binary: parse, dispatch, map errors to exit codes.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints its own help/version through the error.
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    init_threads(cli.threads);
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn init_threads(flag: Option<usize>) {
    let n = flag.or_else(|| {
        std::env::var("PATHFLUX_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = n {
        // Ignore failure: the global pool may already exist (e.g. tests).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate { scm, n, seed, out } => cmd_simulate(&scm, n, seed, out.as_deref()),
        Command::Oracle {
            scm,
            out,
            format,
            ate,
        } => cmd_oracle(&scm, out.as_deref(), format, ate),
        Command::Estimate {
            data,
            config,
            seed,
            out,
            format,
            ate,
        } => cmd_estimate(&data, config.as_deref(), seed, out.as_deref(), format, ate),
        Command::Verify { spec, out } => cmd_verify(&spec, out.as_deref()),
    }
}

fn load_scm(name_or_path: &str) -> Result<DiscreteScm> {
    if let Some(s) = builtin::by_name(name_or_path) {
        return Ok(s);
    }
    let path = Path::new(name_or_path);
    if !path.exists() {
        return Err(Error::validation(format!(
            "{name_or_path:?} is neither a built-in model nor an existing file"
        )));
    }
    let scm: DiscreteScm = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    scm.validate()?;
    Ok(scm)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_simulate(scm_name: &str, n: usize, seed: u64, out: Option<&Path>) -> Result<()> {
    let scm = load_scm(scm_name)?;
    let data = scm.sample(n, seed)?;
    emit(out, &data.to_csv())
}

/// The `oracle` report document; shared by the CLI and the C ABI.
pub fn oracle_document(scm: &DiscreteScm, label: &str, ate: bool) -> Result<serde_json::Value> {
    scm.validate()?;
    let d = oracle::path_decomposition(scm)?;
    let t = oracle::total_influence(scm)?;
    let sum_check = (d.theta - d.component_sum()).abs() <= 1e-12;
    let mut doc = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "oracle",
        "scm": label,
        "influence": {
            "rows": [
                {"parameter": "theta", "estimate": d.theta},
                {"parameter": "theta_p1", "estimate": d.p1},
                {"parameter": "theta_p2", "estimate": d.p2},
                {"parameter": "theta_p3", "estimate": d.p3},
                {"parameter": "theta_p4", "estimate": d.p4},
                {"parameter": "theta_p23", "estimate": d.p23},
            ],
            "sum_check": sum_check,
        },
        "total": {
            "theta": t.theta,
            "tau_conf": t.tau_conf,
            "f_curve": t.f_curve,
        },
    });
    if ate {
        let e = oracle::ate_decomposition(scm)?;
        let sum_check = (e.psi - e.component_sum()).abs() <= 1e-12;
        doc["ate"] = json!({
            "rows": [
                {"parameter": "psi", "estimate": e.psi},
                {"parameter": "psi_p1", "estimate": e.p1},
                {"parameter": "psi_p2", "estimate": e.p2},
                {"parameter": "psi_p3", "estimate": e.p3},
                {"parameter": "psi_p4", "estimate": e.p4},
                {"parameter": "psi_p23", "estimate": e.p23},
            ],
            "sum_check": sum_check,
        });
    }
    Ok(doc)
}

fn cmd_oracle(scm_name: &str, out: Option<&Path>, format: Format, ate: bool) -> Result<()> {
    let scm = load_scm(scm_name)?;
    match format {
        Format::Table => {
            let d = oracle::path_decomposition(&scm)?;
            let ate_part = if ate {
                Some(oracle::ate_decomposition(&scm)?)
            } else {
                None
            };
            let mut s = String::new();
            s.push_str(&format!("{:<12} {:>12}\n", "Parameter", "Estimate"));
            for (name, v) in [
                ("theta", d.theta),
                ("theta_p1", d.p1),
                ("theta_p2", d.p2),
                ("theta_p3", d.p3),
                ("theta_p4", d.p4),
                ("theta_p23", d.p23),
            ] {
                s.push_str(&format!("{name:<12} {v:>12.6}\n"));
            }
            if let Some(e) = &ate_part {
                for (name, v) in [
                    ("psi", e.psi),
                    ("psi_p1", e.p1),
                    ("psi_p2", e.p2),
                    ("psi_p3", e.p3),
                    ("psi_p4", e.p4),
                    ("psi_p23", e.p23),
                ] {
                    s.push_str(&format!("{name:<12} {v:>12.6}\n"));
                }
            }
            emit(out, &s)
        }
        Format::Json => {
            let doc = oracle_document(&scm, scm_name, ate)?;
            emit(out, &format!("{}\n", serde_json::to_string_pretty(&doc)?))
        }
    }
}

/// Parse an estimation CSV, flattening multi-column `W` when configured.
pub fn read_estimate_csv(
    text: &str,
    w_columns: Option<&[String]>,
) -> Result<(Dataset, Option<serde_json::Value>)> {
    let Some(wcols) = w_columns else {
        return Ok((Dataset::from_csv(text)?, None));
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Csv {
        line: 1,
        msg: "empty file".into(),
    })?;
    let names: Vec<&str> = header.trim().split(',').collect();
    let find = |n: &str| -> Result<usize> {
        names
            .iter()
            .position(|h| *h == n)
            .ok_or_else(|| Error::Csv {
                line: 1,
                msg: format!("missing column {n:?}"),
            })
    };
    let w_idx: Vec<usize> = wcols.iter().map(|n| find(n)).collect::<Result<_>>()?;
    let (ai, zi, mi, yi) = (find("a")?, find("z")?, find("m")?, find("y")?);

    let mut w_raw: Vec<Vec<i64>> = vec![Vec::new(); w_idx.len()];
    let mut a = Vec::new();
    let mut zc = Vec::new();
    let mut mc = Vec::new();
    let mut y = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != names.len() {
            return Err(Error::Csv {
                line: i + 1,
                msg: format!("expected {} fields, found {}", names.len(), f.len()),
            });
        }
        let int = |s: &str, name: &str| -> Result<i64> {
            s.parse().map_err(|_| Error::Csv {
                line: i + 1,
                msg: format!("column {name}: invalid integer {s:?}"),
            })
        };
        for (k, &ix) in w_idx.iter().enumerate() {
            w_raw[k].push(int(f[ix], &wcols[k])?);
        }
        a.push(int(f[ai], "a")? as usize);
        zc.push(int(f[zi], "z")? as usize);
        mc.push(int(f[mi], "m")? as usize);
        y.push(f[yi].parse::<f64>().map_err(|_| Error::Csv {
            line: i + 1,
            msg: format!("column y: invalid number {:?}", f[yi]),
        })?);
    }
    if a.is_empty() {
        return Err(Error::Csv {
            line: 1,
            msg: "no data rows".into(),
        });
    }
    let (codes, levels) = flatten_w_columns(&w_raw)?;
    let card_w = levels.iter().map(|l| l.len()).product();
    let mut ds = Dataset::with_capacity(a.len(), card_w, 0, 0, 0);
    for i in 0..a.len() {
        ds.push(codes[i], a[i], zc[i], mc[i], y[i]);
    }
    ds.card_a = ds.a.iter().max().unwrap() + 1;
    ds.card_z = ds.z.iter().max().unwrap() + 1;
    ds.card_m = ds.m.iter().max().unwrap() + 1;
    let codebook = json!({
        "w_columns": wcols,
        "levels": levels,
        "order": "first column varies fastest",
    });
    Ok((ds, Some(codebook)))
}

fn report_json(r: &EstimateReport) -> serde_json::Value {
    json!({"point": r.point, "se": r.se, "ci_lo": r.ci_lo, "ci_hi": r.ci_hi})
}

fn decomposition_json(d: &DecompositionReport) -> serde_json::Value {
    json!({
        "rows": d
            .rows()
            .iter()
            .map(|(p, r)| {
                let mut v = report_json(r);
                v["parameter"] = json!(p);
                v
            })
            .collect::<Vec<_>>(),
        "sum_check": (d.theta.point - d.component_sum()).abs() <= 1e-12,
        "mu_a": d.mu_a,
    })
}

fn ate_json(d: &AteReport) -> serde_json::Value {
    json!({
        "rows": d
            .rows()
            .iter()
            .map(|(p, r)| {
                let mut v = report_json(r);
                v["parameter"] = json!(p);
                v
            })
            .collect::<Vec<_>>(),
        "sum_check": (d.psi.point - d.component_sum()).abs() <= 1e-12,
        "means": d.means,
    })
}

/// The `estimate` report document; shared by the CLI and the C ABI.
pub fn estimate_document(
    data: &Dataset,
    cfg: &EstimateConfig,
    source_label: &str,
    codebook: Option<serde_json::Value>,
    ate: bool,
) -> Result<serde_json::Value> {
    data.validate()?;
    let d = decompose_paths(data, cfg)?;
    let t = total_influence(data, cfg)?;
    let mut doc = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "estimate",
        "data": source_label,
        "n": data.len(),
        "config": {
            "folds": cfg.folds,
            "seed": cfg.seed,
            "ci_level": cfg.ci_level,
            "alpha": cfg.nuisance.alpha,
            "epsilon": cfg.nuisance.epsilon,
            "regression": cfg.nuisance.regression,
        },
        "influence": decomposition_json(&d),
        "total": {
            "theta": report_json(&t.theta),
            "tau_conf": report_json(&t.tau_conf),
            "f_curve": t.f_curve.iter().map(report_json).collect::<Vec<_>>(),
            "cov_ay": t.cov_ay,
        },
    });
    if let Some(cb) = codebook {
        doc["w_codebook"] = cb;
    }
    if ate {
        doc["ate"] = ate_json(&decompose_ate(data, cfg)?);
    }
    Ok(doc)
}

fn cmd_estimate(
    data_path: &Path,
    config_path: Option<&Path>,
    seed: Option<u64>,
    out: Option<&Path>,
    format: Format,
    ate: bool,
) -> Result<()> {
    let file_cfg: FileConfig = match config_path {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
        None => FileConfig::default(),
    };
    let cfg = file_cfg.estimate_config(seed);
    let text = std::fs::read_to_string(data_path)?;
    let (data, codebook) = read_estimate_csv(&text, file_cfg.w_columns.as_deref())?;
    data.validate()?;

    match format {
        Format::Table => {
            let d = decompose_paths(&data, &cfg)?;
            let ate_part = if ate {
                Some(decompose_ate(&data, &cfg)?)
            } else {
                None
            };
            let mut s = String::new();
            s.push_str(&format!(
                "{:<12} {:>12} {:>12} {:>12}\n",
                "Parameter", "Estimate", "Lower CI", "Upper CI"
            ));
            for (p, r) in d.rows() {
                s.push_str(&format!(
                    "{p:<12} {:>12.6} {:>12.6} {:>12.6}\n",
                    r.point, r.ci_lo, r.ci_hi
                ));
            }
            if let Some(e) = &ate_part {
                for (p, r) in e.rows() {
                    s.push_str(&format!(
                        "{p:<12} {:>12.6} {:>12.6} {:>12.6}\n",
                        r.point, r.ci_lo, r.ci_hi
                    ));
                }
            }
            emit(out, &s)
        }
        Format::Json => {
            let doc =
                estimate_document(&data, &cfg, &data_path.display().to_string(), codebook, ate)?;
            emit(out, &format!("{}\n", serde_json::to_string_pretty(&doc)?))
        }
    }
}

fn cmd_verify(spec_path: &Path, out: Option<&Path>) -> Result<()> {
    let spec: ExperimentSpec = serde_json::from_str(&std::fs::read_to_string(spec_path)?)?;
    let rep = run_experiment(&spec)?;
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "verify",
        "report": rep,
    });
    emit(out, &format!("{}\n", serde_json::to_string_pretty(&doc)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_overrides() {
        let fc: FileConfig =
            serde_json::from_str(r#"{"folds": 3, "alpha": 1.0, "seed": 9}"#).unwrap();
        let cfg = fc.estimate_config(None);
        assert_eq!(cfg.folds, 3);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.nuisance.alpha, 1.0);
        let cfg2 = fc.estimate_config(Some(11));
        assert_eq!(cfg2.seed, 11);
        let ridge: FileConfig =
            serde_json::from_str(r#"{"regression": {"kind": "ridge_onehot", "lambda": 2.0}}"#)
                .unwrap();
        assert_eq!(
            ridge.regression,
            Some(crate::nuisance::Regression::RidgeOnehot { lambda: 2.0 })
        );
        assert!(serde_json::from_str::<FileConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn multi_column_w_flattening() {
        let csv = "w1,w2,a,z,m,y\n0,5,0,0,0,1.0\n1,5,1,1,1,2.0\n0,7,1,0,1,0.5\n";
        let cols = vec!["w1".to_string(), "w2".to_string()];
        let (ds, codebook) = read_estimate_csv(csv, Some(&cols)).unwrap();
        assert_eq!(ds.card_w, 4);
        assert_eq!(ds.w, vec![0, 1, 2]);
        assert!(codebook.is_some());
    }

    #[test]
    fn unknown_scm_is_validation_error() {
        let err = load_scm("no-such-model").unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
