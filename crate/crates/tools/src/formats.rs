//! On-disk formats: transition datasets, dense tables and result directories.
//!
//! Floats are written with Rust's shortest round-trip representation, so a
//! write followed by a read reproduces every value bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use softirl_core::maxent::MaxEntFit;
use softirl_core::solver::{IrlSolution, NormalizationKind};
use softirl_core::{DatasetMeta, StateActionFn, StateFn, Transition, TransitionDataset};

const DATASET_TAG: &str = "# softirl-dataset";

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{}: {message}", path.display())]
    Invalid { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn read_text(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), FormatError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

/// Renders a dataset:
///
/// ```text
/// # softirl-dataset env=ident seed=7 n=2 n_states=64 n_actions=5
/// 0,4,1
/// 1,2,9
/// ```
pub fn format_dataset(data: &TransitionDataset) -> Result<String, String> {
    if data.weights().is_some() {
        return Err("weighted (population) datasets have no file format".into());
    }
    let meta = data.meta();
    if meta.env.is_empty() || meta.env.contains(char::is_whitespace) {
        return Err(format!("env id {:?} must be a non-empty token without spaces", meta.env));
    }
    let mut out = String::with_capacity(16 * (data.n() + 4));
    writeln!(
        out,
        "{DATASET_TAG} env={} seed={} n={} n_states={} n_actions={}",
        meta.env,
        meta.seed,
        data.n(),
        meta.n_states,
        meta.n_actions
    )
    .expect("writing to a String");
    for t in data.records() {
        writeln!(out, "{},{},{}", t.s, t.a, t.s_next).expect("writing to a String");
    }
    Ok(out)
}

pub fn write_dataset(path: &Path, data: &TransitionDataset) -> Result<(), FormatError> {
    let text = format_dataset(data).map_err(|message| FormatError::Invalid {
        path: path.to_path_buf(),
        message,
    })?;
    write_text(path, &text)
}

pub fn read_dataset(path: &Path) -> Result<TransitionDataset, FormatError> {
    parse_dataset(path, &read_text(path)?)
}

/// Parses dataset text; `path` only labels errors.
pub fn parse_dataset(path: &Path, text: &str) -> Result<TransitionDataset, FormatError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(path, 1, "empty file, expected a dataset header"))?;
    let rest = header
        .strip_prefix(DATASET_TAG)
        .ok_or_else(|| parse_err(path, 1, format!("header must start with {DATASET_TAG:?}")))?;
    let mut env = None;
    let (mut seed, mut n, mut ns, mut na) = (None, None, None, None);
    for field in rest.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| parse_err(path, 1, format!("header field {field:?} is not key=value")))?;
        let number = || {
            value
                .parse::<u64>()
                .map_err(|_| parse_err(path, 1, format!("header field {key} has non-integer value {value:?}")))
        };
        match key {
            "env" => env = Some(value.to_string()),
            "seed" => seed = Some(number()?),
            "n" => n = Some(number()? as usize),
            "n_states" => ns = Some(number()? as usize),
            "n_actions" => na = Some(number()? as usize),
            _ => return Err(parse_err(path, 1, format!("unknown header field {key:?}"))),
        }
    }
    let missing = |name: &str| parse_err(path, 1, format!("header lacks {name}"));
    let meta = DatasetMeta {
        env: env.ok_or_else(|| missing("env"))?,
        seed: seed.ok_or_else(|| missing("seed"))?,
        n_states: ns.ok_or_else(|| missing("n_states"))?,
        n_actions: na.ok_or_else(|| missing("n_actions"))?,
    };
    let n = n.ok_or_else(|| missing("n"))?;

    let mut records = Vec::with_capacity(n);
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let mut field = |name: &str, bound: usize| -> Result<usize, FormatError> {
            let raw = parts
                .next()
                .ok_or_else(|| parse_err(path, line_no, format!("missing {name}; expected s,a,s_next")))?;
            let value: usize = raw
                .trim()
                .parse()
                .map_err(|_| parse_err(path, line_no, format!("{name} {raw:?} is not a non-negative integer")))?;
            if value >= bound {
                return Err(parse_err(path, line_no, format!("{name} {value} out of range (< {bound})")));
            }
            Ok(value)
        };
        let s = field("state", meta.n_states)?;
        let a = field("action", meta.n_actions)?;
        let s_next = field("next state", meta.n_states)?;
        if parts.next().is_some() {
            return Err(parse_err(path, line_no, "too many fields; expected s,a,s_next"));
        }
        records.push(Transition { s, a, s_next });
    }
    if records.len() != n {
        return Err(FormatError::Invalid {
            path: path.to_path_buf(),
            message: format!("header declares n={n} but the file holds {} records", records.len()),
        });
    }
    TransitionDataset::new(meta, records).map_err(|e| FormatError::Invalid {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// `state,0,1,...` followed by one row per state.
pub fn format_table(f: &StateActionFn) -> String {
    let mut out = String::from("state");
    for a in 0..f.n_actions() {
        write!(out, ",{a}").expect("writing to a String");
    }
    out.push('\n');
    for (s, row) in f.rows().enumerate() {
        write!(out, "{s}").expect("writing to a String");
        for x in row {
            write!(out, ",{x}").expect("writing to a String");
        }
        out.push('\n');
    }
    out
}

pub fn parse_table(path: &Path, text: &str) -> Result<StateActionFn, FormatError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| parse_err(path, 1, "empty table"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"state") || cols.len() < 2 {
        return Err(parse_err(path, 1, "table header must be state,0,1,..."));
    }
    let na = cols.len() - 1;
    let mut values = Vec::new();
    let mut n_states = 0;
    for (idx, line) in lines {
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != na + 1 {
            return Err(parse_err(path, line_no, format!("expected {} fields, found {}", na + 1, fields.len())));
        }
        if fields[0].trim().parse::<usize>().ok() != Some(n_states) {
            return Err(parse_err(path, line_no, format!("expected state index {n_states}")));
        }
        for raw in &fields[1..] {
            let x: f64 = raw
                .trim()
                .parse()
                .map_err(|_| parse_err(path, line_no, format!("{raw:?} is not a number")))?;
            values.push(x);
        }
        n_states += 1;
    }
    StateActionFn::new(n_states, na, values).map_err(|e| FormatError::Invalid {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn read_table(path: &Path) -> Result<StateActionFn, FormatError> {
    parse_table(path, &read_text(path)?)
}

/// `state,value` followed by one row per state.
pub fn format_state_fn(c: &StateFn) -> String {
    let mut out = String::from("state,value\n");
    for (s, x) in c.values().iter().enumerate() {
        writeln!(out, "{s},{x}").expect("writing to a String");
    }
    out
}

fn format_vector(header: &str, xs: &[f64]) -> String {
    let mut out = format!("{header}\n");
    for (i, x) in xs.iter().enumerate() {
        writeln!(out, "{i},{x}").expect("writing to a String");
    }
    out
}

/// Metadata and diagnostics stored next to a solution's tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub env: String,
    pub seed: u64,
    pub algorithm: String,
    pub gamma: f64,
    pub normalization: String,
    pub normalization_residual: f64,
    pub iterations: usize,
    pub eta: Vec<f64>,
    pub eta_population: Option<Vec<f64>>,
    pub distance_to_exact: Option<Vec<f64>>,
    pub nu_proxy: f64,
    pub nu: Option<f64>,
    pub kappa_hat: Option<f64>,
    pub unvisited_states: Vec<usize>,
    pub warnings: Vec<String>,
}

pub fn normalization_name(kind: NormalizationKind) -> String {
    match kind {
        NormalizationKind::PointMass(a) => format!("point-mass:{a}"),
        NormalizationKind::Uniform => "uniform".into(),
        NormalizationKind::BehaviorPolicy => "behavior".into(),
    }
}

impl SolutionRecord {
    pub fn new(sol: &IrlSolution, env: &str, seed: u64, algorithm: &str) -> Self {
        let d = &sol.diagnostics;
        Self {
            env: env.to_string(),
            seed,
            algorithm: algorithm.to_string(),
            gamma: sol.gamma,
            normalization: normalization_name(sol.mu.kind),
            normalization_residual: softirl_core::solver::check_normalization(&sol.r_hat, &sol.mu)
                .unwrap_or(f64::NAN),
            iterations: d.iterations,
            eta: d.eta.clone(),
            eta_population: d.eta_population.clone(),
            distance_to_exact: d.distance_to_exact.clone(),
            nu_proxy: d.nu_proxy,
            nu: d.nu,
            kappa_hat: d.kappa_hat,
            unvisited_states: d.unvisited_states.clone(),
            warnings: d.warnings.clone(),
        }
    }
}

/// Writes `r.csv`, `v.csv`, `u.csv`, `c.csv` and `diagnostics.json`.
pub fn write_solution(dir: &Path, sol: &IrlSolution, record: &SolutionRecord) -> Result<(), FormatError> {
    write_text(&dir.join("r.csv"), &format_table(&sol.r_hat))?;
    write_text(&dir.join("v.csv"), &format_table(&sol.v_hat))?;
    write_text(&dir.join("u.csv"), &format_table(&sol.u_hat))?;
    write_text(&dir.join("c.csv"), &format_state_fn(&sol.c_hat))?;
    let json = serde_json::to_string_pretty(record).expect("diagnostics serialize");
    write_text(&dir.join("diagnostics.json"), &(json + "\n"))
}

/// Metadata stored next to a baseline fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub env: String,
    pub seed: u64,
    pub gamma: f64,
    pub best_epoch: usize,
    pub epochs: usize,
}

/// Writes `theta.csv`, `r.csv`, `v.csv`, `loss.csv` and `fit.json`.
pub fn write_fit(dir: &Path, fit: &MaxEntFit, record: &FitRecord) -> Result<(), FormatError> {
    write_text(&dir.join("theta.csv"), &format_vector("index,value", &fit.theta))?;
    write_text(&dir.join("r.csv"), &format_table(&fit.r_hat))?;
    write_text(&dir.join("v.csv"), &format_table(&fit.v_hat))?;
    let mut loss = String::from("epoch,loss,best_loss\n");
    for (i, (l, b)) in fit.loss_trace.iter().zip(&fit.best_trace).enumerate() {
        writeln!(loss, "{i},{l},{b}").expect("writing to a String");
    }
    write_text(&dir.join("loss.csv"), &loss)?;
    let json = serde_json::to_string_pretty(record).expect("fit record serializes");
    write_text(&dir.join("fit.json"), &(json + "\n"))
}

/// Environment id, seed and discount recorded in a solution or fit directory.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct DirOrigin {
    pub env: String,
    pub seed: u64,
    pub gamma: f64,
}

pub fn read_dir_origin(dir: &Path) -> Result<DirOrigin, FormatError> {
    for name in ["diagnostics.json", "fit.json"] {
        let path = dir.join(name);
        if path.exists() {
            return serde_json::from_str(&read_text(&path)?).map_err(|e| FormatError::Invalid {
                path: path.clone(),
                message: e.to_string(),
            });
        }
    }
    Err(FormatError::Invalid {
        path: dir.to_path_buf(),
        message: "neither diagnostics.json nor fit.json found".into(),
    })
}
