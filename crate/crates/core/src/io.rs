//! Config files, run directories and result files.
//!
//! Configs are TOML with flat sections:
//!
//! ```toml
//! n = 2000
//! trials = 300
//! seed = 7
//!
//! [world]
//! kind = "permuted_power_law"
//! universe_size = 10000000
//! fact_count = 1000
//! exponent = 0.0
//!
//! [algorithm]
//! kind = "laplace"
//! alpha = 0.5
//!
//! [bound]
//! delta = 0.1
//! b = 10
//! epsilon = 0.1
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::calibration::{reliability_curve, BinningSpec, ReliabilityRow};
use crate::error::{Error, Result};
use crate::harness::{
    run_experiment, run_trial_detailed, AggregateReport, BoundSettings, ExperimentConfig,
    ExperimentOutput, TrialRecord,
};
use crate::lms::{LmAlgorithm, DEFAULT_LAPLACE_ALPHA};
use crate::worlds::{TypeComponent, WorldModel};

pub const CONFIG_FILE: &str = "config.toml";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRIALS_FILE: &str = "trials.csv";
pub const AGGREGATE_FILE: &str = "aggregate.json";
pub const RELIABILITY_FILE: &str = "reliability.csv";

pub const SIGNIFICANT_DIGITS: usize = 12;

// ---------------------------------------------------------------------------
// Parsing

/// Tracks which keys of a table were read so leftovers can be rejected.
struct Section<'a> {
    prefix: String,
    table: &'a Table,
    used: BTreeSet<&'a str>,
}

impl<'a> Section<'a> {
    fn new(prefix: &str, table: &'a Table) -> Self {
        Self {
            prefix: prefix.to_string(),
            table,
            used: BTreeSet::new(),
        }
    }

    fn key(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        }
    }

    fn raw(&mut self, name: &str) -> Option<&'a Value> {
        let (k, v) = self.table.get_key_value(name)?;
        self.used.insert(k.as_str());
        Some(v)
    }

    fn uint_opt(&mut self, name: &str) -> Result<Option<u64>> {
        match self.raw(name) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(Value::Integer(i)) => Err(Error::config(
                self.key(name),
                format!("must be non-negative, got {i}"),
            )),
            Some(v) => Err(self.type_error(name, "a non-negative integer", v)),
        }
    }

    fn usize_opt(&mut self, name: &str) -> Result<Option<usize>> {
        self.uint_opt(name)?
            .map(|v| usize::try_from(v).map_err(|_| Error::config(self.key(name), "too large")))
            .transpose()
    }

    fn usize(&mut self, name: &str) -> Result<usize> {
        self.usize_opt(name)?.ok_or_else(|| self.missing(name))
    }

    fn float_opt(&mut self, name: &str) -> Result<Option<f64>> {
        match self.raw(name) {
            None => Ok(None),
            Some(Value::Float(f)) => Ok(Some(*f)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(v) => Err(self.type_error(name, "a number", v)),
        }
    }

    fn float(&mut self, name: &str) -> Result<f64> {
        self.float_opt(name)?.ok_or_else(|| self.missing(name))
    }

    fn string(&mut self, name: &str) -> Result<&'a str> {
        match self.raw(name) {
            None => Err(self.missing(name)),
            Some(Value::String(s)) => Ok(s.as_str()),
            Some(v) => Err(self.type_error(name, "a string", v)),
        }
    }

    fn table(&mut self, name: &str) -> Result<Option<&'a Table>> {
        match self.raw(name) {
            None => Ok(None),
            Some(Value::Table(t)) => Ok(Some(t)),
            Some(v) => Err(self.type_error(name, "a table", v)),
        }
    }

    fn array(&mut self, name: &str) -> Result<Option<&'a Vec<Value>>> {
        match self.raw(name) {
            None => Ok(None),
            Some(Value::Array(a)) => Ok(Some(a)),
            Some(v) => Err(self.type_error(name, "an array", v)),
        }
    }

    fn missing(&self, name: &str) -> Error {
        Error::config(self.key(name), "missing required key")
    }

    fn type_error(&self, name: &str, expected: &str, got: &Value) -> Error {
        Error::config(
            self.key(name),
            format!("expected {expected}, got {}", got.type_str()),
        )
    }

    /// Rejects every key that was not read.
    fn finish(self) -> Result<()> {
        match self.table.keys().find(|k| !self.used.contains(k.as_str())) {
            Some(k) => Err(Error::config(self.key(k), "unknown key")),
            None => Ok(()),
        }
    }
}

fn parse_world(sec: &mut Section<'_>, allow_multi: bool) -> Result<WorldModel> {
    let kind = sec.string("kind")?;
    let world = match kind {
        "permuted_power_law" => WorldModel::PermutedPowerLaw {
            universe_size: sec.usize("universe_size")?,
            fact_count: sec.usize("fact_count")?,
            exponent: sec.float_opt("exponent")?.unwrap_or(0.0),
        },
        "w5" => WorldModel::W5 {
            people: sec.usize("people")?,
            dates: sec.usize("dates")?,
            foods: sec.usize("foods")?,
            locations: sec.usize("locations")?,
        },
        "multi_type" if allow_multi => {
            let types = sec
                .array("types")?
                .ok_or_else(|| sec.missing("types"))?;
            let mut worlds = Vec::with_capacity(types.len());
            for (i, v) in types.iter().enumerate() {
                let prefix = format!("{}[{i}]", sec.key("types"));
                let Value::Table(t) = v else {
                    return Err(Error::config(prefix, "expected a table"));
                };
                let mut sub = Section::new(&prefix, t);
                worlds.push(parse_world(&mut sub, false)?);
                sub.finish()?;
            }
            let weights = match sec.array("type_weights")? {
                None => vec![1.0; worlds.len()],
                Some(ws) => {
                    let key = sec.key("type_weights");
                    if ws.len() != worlds.len() {
                        return Err(Error::config(
                            key,
                            format!("expected {} weights, got {}", worlds.len(), ws.len()),
                        ));
                    }
                    ws.iter()
                        .map(|w| match w {
                            Value::Float(f) => Ok(*f),
                            Value::Integer(i) => Ok(*i as f64),
                            other => Err(Error::config(
                                key.clone(),
                                format!("expected numbers, got {}", other.type_str()),
                            )),
                        })
                        .collect::<Result<Vec<_>>>()?
                }
            };
            let total: f64 = weights.iter().sum();
            if !(total > 0.0 && total.is_finite()) {
                return Err(Error::config(
                    sec.key("type_weights"),
                    "weights must have a positive finite sum",
                ));
            }
            WorldModel::MultiType(
                worlds
                    .into_iter()
                    .zip(weights)
                    .map(|(world, w)| TypeComponent {
                        world,
                        weight: w / total,
                    })
                    .collect(),
            )
        }
        other => {
            let kinds = if allow_multi {
                "permuted_power_law, w5, multi_type"
            } else {
                "permuted_power_law, w5"
            };
            return Err(Error::config(
                sec.key("kind"),
                format!("unknown world kind `{other}` (expected one of {kinds})"),
            ));
        }
    };
    world
        .validate()
        .map_err(|e| as_config_error(e, &sec.prefix))?;
    Ok(world)
}

fn simple_algorithm(kind: &str, sec: &mut Section<'_>, key: &str) -> Result<LmAlgorithm> {
    Ok(match kind {
        "monofact_memorizer" => LmAlgorithm::MonofactMemorizer,
        "empirical" => LmAlgorithm::Empirical,
        "laplace" => LmAlgorithm::Laplace {
            alpha: sec.float_opt("alpha")?.unwrap_or(DEFAULT_LAPLACE_ALPHA),
        },
        "uniform" => LmAlgorithm::Uniform,
        "oracle" => LmAlgorithm::Oracle,
        other => {
            return Err(Error::config(
                sec.key(key),
                format!("unknown algorithm `{other}`"),
            ))
        }
    })
}

fn parse_algorithm(sec: &mut Section<'_>) -> Result<LmAlgorithm> {
    let kind = sec.string("kind")?;
    let alg = if kind == "yay_mixture" {
        let base = sec.string("base")?;
        LmAlgorithm::YayMixture {
            base: Box::new(simple_algorithm(base, sec, "base")?),
            lambda: sec.float("lambda")?,
        }
    } else {
        simple_algorithm(kind, sec, "kind")?
    };
    alg.validate().map_err(|e| as_config_error(e, "algorithm"))?;
    Ok(alg)
}

fn parse_bound(sec: &mut Section<'_>) -> Result<BoundSettings> {
    let d = BoundSettings::default();
    let b = match sec.uint_opt("b")? {
        None => d.b,
        Some(v) => u32::try_from(v).map_err(|_| Error::config(sec.key("b"), "too large"))?,
    };
    Ok(BoundSettings {
        delta: sec.float_opt("delta")?.unwrap_or(d.delta),
        b,
        epsilon: sec.float_opt("epsilon")?.unwrap_or(d.epsilon),
        s: sec.float_opt("s")?,
        r: sec.float_opt("r")?,
        k_types: sec.usize_opt("k_types")?,
    })
}

fn qualified_key(name: &str) -> String {
    match name {
        "n" | "trials" | "seed" => name.to_string(),
        "delta" | "b" | "epsilon" | "s" | "r" | "k_types" => format!("bound.{name}"),
        "alpha" | "lambda" => format!("algorithm.{name}"),
        other => format!("world.{other}"),
    }
}

fn as_config_error(e: Error, section: &str) -> Error {
    match e {
        Error::InvalidParameter { name, reason } => {
            let key = qualified_key(name);
            let key = if section.starts_with("world") && key.starts_with("world.") {
                format!("{section}.{name}")
            } else {
                key
            };
            Error::config(key, reason)
        }
        Error::Config { .. } => e,
        other => Error::config(section, other.to_string()),
    }
}

/// Parses and validates a config document.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let table: Table = text.parse().map_err(|source| Error::ConfigSyntax {
        path: PathBuf::from("<config>"),
        source,
    })?;
    config_from_table(&table)
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let table: Table = text.parse().map_err(|source| Error::ConfigSyntax {
        path: path.to_path_buf(),
        source,
    })?;
    config_from_table(&table)
}

fn config_from_table(table: &Table) -> Result<ExperimentConfig> {
    let mut top = Section::new("", table);
    let n = top.usize("n")?;
    let trials = top.usize("trials")?;
    let seed = top.uint_opt("seed")?.unwrap_or(0);

    let world_table = top.table("world")?.ok_or_else(|| top.missing("world"))?;
    let mut ws = Section::new("world", world_table);
    let world = parse_world(&mut ws, true)?;
    ws.finish()?;

    let alg_table = top.table("algorithm")?.ok_or_else(|| top.missing("algorithm"))?;
    let mut alg_sec = Section::new("algorithm", alg_table);
    let algorithm = parse_algorithm(&mut alg_sec)?;
    alg_sec.finish()?;

    let bound = match top.table("bound")? {
        Some(t) => {
            let mut sec = Section::new("bound", t);
            let b = parse_bound(&mut sec)?;
            sec.finish()?;
            b
        }
        None => BoundSettings::default(),
    };
    top.finish()?;

    let cfg = ExperimentConfig {
        world,
        n,
        algorithm,
        bound,
        trials,
        seed,
    };
    cfg.validate().map_err(|e| as_config_error(e, "world"))?;
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// Serialization

fn int(v: usize) -> Value {
    Value::Integer(v as i64)
}

fn world_table(world: &WorldModel) -> Result<Table> {
    let mut t = Table::new();
    match world {
        WorldModel::PermutedPowerLaw {
            universe_size,
            fact_count,
            exponent,
        } => {
            t.insert("kind".into(), "permuted_power_law".into());
            t.insert("universe_size".into(), int(*universe_size));
            t.insert("fact_count".into(), int(*fact_count));
            t.insert("exponent".into(), Value::Float(*exponent));
        }
        WorldModel::W5 {
            people,
            dates,
            foods,
            locations,
        } => {
            t.insert("kind".into(), "w5".into());
            t.insert("people".into(), int(*people));
            t.insert("dates".into(), int(*dates));
            t.insert("foods".into(), int(*foods));
            t.insert("locations".into(), int(*locations));
        }
        WorldModel::MultiType(types) => {
            t.insert("kind".into(), "multi_type".into());
            let tables = types
                .iter()
                .map(|c| world_table(&c.world).map(Value::Table))
                .collect::<Result<Vec<_>>>()?;
            t.insert("types".into(), Value::Array(tables));
            t.insert(
                "type_weights".into(),
                Value::Array(types.iter().map(|c| Value::Float(c.weight)).collect()),
            );
        }
        WorldModel::Explicit(_) => {
            return Err(Error::Unsupported(
                "explicit worlds cannot be written to a config file".into(),
            ))
        }
    }
    Ok(t)
}

fn algorithm_table(alg: &LmAlgorithm) -> Result<Table> {
    let mut t = Table::new();
    let simple = |a: &LmAlgorithm, t: &mut Table, key: &str| -> Result<()> {
        let name = match a {
            LmAlgorithm::MonofactMemorizer => "monofact_memorizer",
            LmAlgorithm::Empirical => "empirical",
            LmAlgorithm::Laplace { alpha } => {
                t.insert("alpha".into(), Value::Float(*alpha));
                "laplace"
            }
            LmAlgorithm::Uniform => "uniform",
            LmAlgorithm::Oracle => "oracle",
            LmAlgorithm::YayMixture { .. } => {
                return Err(Error::Unsupported(
                    "nested mixtures cannot be written to a config file".into(),
                ))
            }
        };
        t.insert(key.into(), name.into());
        Ok(())
    };
    match alg {
        LmAlgorithm::YayMixture { base, lambda } => {
            t.insert("kind".into(), "yay_mixture".into());
            simple(base, &mut t, "base")?;
            t.insert("lambda".into(), Value::Float(*lambda));
        }
        other => simple(other, &mut t, "kind")?,
    }
    Ok(t)
}

/// Inverse of [`parse_config_str`].
pub fn serialize_config(cfg: &ExperimentConfig) -> Result<String> {
    let mut top = Table::new();
    top.insert("n".into(), int(cfg.n));
    top.insert("trials".into(), int(cfg.trials));
    let seed = i64::try_from(cfg.seed).map_err(|_| {
        Error::config("seed", "seeds above 2^63 - 1 cannot be stored in TOML")
    })?;
    top.insert("seed".into(), Value::Integer(seed));
    top.insert("world".into(), Value::Table(world_table(&cfg.world)?));
    top.insert(
        "algorithm".into(),
        Value::Table(algorithm_table(&cfg.algorithm)?),
    );
    let b = &cfg.bound;
    let mut bound = Table::new();
    bound.insert("delta".into(), Value::Float(b.delta));
    bound.insert("b".into(), Value::Integer(b.b.into()));
    bound.insert("epsilon".into(), Value::Float(b.epsilon));
    if let Some(s) = b.s {
        bound.insert("s".into(), Value::Float(s));
    }
    if let Some(r) = b.r {
        bound.insert("r".into(), Value::Float(r));
    }
    if let Some(k) = b.k_types {
        bound.insert("k_types".into(), int(k));
    }
    top.insert("bound".into(), Value::Table(bound));
    toml::to_string(&top).map_err(|e| Error::config("<config>", e.to_string()))
}

// ---------------------------------------------------------------------------
// Run directories

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    /// SHA-256 of the config copy stored next to the manifest.
    pub config_sha256: String,
    pub master_seed: u64,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub files: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunManifest {
    pub fn new(config_text: &str, master_seed: u64) -> Self {
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: sha256_hex(config_text.as_bytes()),
            master_seed,
            timestamp,
            files: [
                CONFIG_FILE,
                MANIFEST_FILE,
                TRIALS_FILE,
                AGGREGATE_FILE,
                RELIABILITY_FILE,
            ]
            .map(String::from)
            .to_vec(),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Creates `dir`, stores the config copy and writes the manifest. Call
/// before running any trial.
pub fn prepare_run_dir(dir: &Path, cfg: &ExperimentConfig) -> Result<RunManifest> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let text = serialize_config(cfg)?;
    write_file(&dir.join(CONFIG_FILE), text.as_bytes())?;
    let manifest = RunManifest::new(&text, cfg.seed);
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Writes trials.csv, aggregate.json and reliability.csv, and refreshes
/// the manifest.
pub fn write_results(
    dir: &Path,
    manifest: &RunManifest,
    records: &[TrialRecord],
    aggregate: &AggregateReport,
    reliability: &[ReliabilityRow],
    type_count: usize,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_json(&dir.join(MANIFEST_FILE), manifest)?;
    write_trials_csv(&dir.join(TRIALS_FILE), records, type_count)?;
    write_json(&dir.join(AGGREGATE_FILE), aggregate)?;
    write_reliability_csv(&dir.join(RELIABILITY_FILE), reliability)
}

/// Full run into `dir`: config copy and manifest first, then the trials,
/// the aggregate, and trial 0's reliability curve under adaptive binning.
pub fn run_to_dir(dir: &Path, cfg: &ExperimentConfig) -> Result<(RunManifest, ExperimentOutput)> {
    cfg.validate()?;
    let manifest = prepare_run_dir(dir, cfg)?;
    let output = run_experiment(cfg)?;
    let first = run_trial_detailed(cfg, 0)?;
    let reliability = reliability_curve(
        first.world.p(),
        &first.g,
        BinningSpec::Adaptive { bins: cfg.bound.b },
    )?;
    let type_count = cfg.world.type_ranges().map_or(0, |r| r.len());
    write_results(
        dir,
        &manifest,
        &output.records,
        &output.aggregate,
        &reliability,
        type_count,
    )?;
    Ok((manifest, output))
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    read_json(&dir.join(MANIFEST_FILE))
}

pub fn read_aggregate(path: &Path) -> Result<AggregateReport> {
    read_json(path)
}

/// Checks the stored config against the manifest hash and returns the
/// parsed config.
pub fn verify_run_dir(dir: &Path) -> Result<(RunManifest, ExperimentConfig)> {
    let manifest = read_manifest(dir)?;
    let path = dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let actual = sha256_hex(text.as_bytes());
    if actual != manifest.config_sha256 {
        return Err(Error::ManifestMismatch {
            expected: manifest.config_sha256,
            actual,
        });
    }
    let cfg = parse_config(&path)?;
    Ok((manifest, cfg))
}

// ---------------------------------------------------------------------------
// CSV

/// Decimal with 12 significant digits and trailing zeros removed;
/// scientific notation outside 1e-15..1e16.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-15..=15).contains(&exp) {
        let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
    }
}

fn fmt_bool(b: bool) -> String {
    b.to_string()
}

fn fmt_opt<T>(v: Option<T>, f: impl Fn(T) -> String) -> String {
    v.map(f).unwrap_or_default()
}

pub fn trials_csv_header(type_count: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "trial",
        "seed",
        "mf",
        "missing_mass",
        "halluc_rate",
        "mc_exact",
        "mc_adaptive_b",
        "mis_eps",
        "kl",
        "cor1_rhs",
        "cor1_ok",
        "cor1_vacuous",
        "corg_rhs",
        "corg_ok",
        "corg_vacuous",
        "corbal_rhs",
        "corbal_ok",
        "corbal_vacuous",
        "corbal_observed_rhs",
        "corb2_rhs",
        "corb2_ok",
        "corb2_vacuous",
        "corb4_rhs",
        "corb4_ok",
        "corb4_vacuous",
        "n",
        "observed",
        "tv_fixed_eps",
        "posterior_term",
        "eq9_holds",
        "eq10_holds",
    ]
    .map(String::from)
    .to_vec();
    for i in 1..=type_count {
        for col in [
            "mf",
            "missing_mass",
            "halluc_rate",
            "mc_adaptive_b",
            "rhs",
            "ok",
            "vacuous",
        ] {
            h.push(format!("type{i}_{col}"));
        }
    }
    h
}

fn trial_row(r: &TrialRecord) -> Vec<String> {
    let f = |x: f64| format_number(x);
    let mut row = vec![r.trial.to_string(), r.seed.to_string()];
    row.extend(
        [
            r.mf,
            r.missing_mass,
            r.halluc_rate,
            r.mc_exact,
            r.mc_adaptive_b,
            r.mis_eps,
            r.kl,
        ]
        .map(f),
    );
    for (i, e) in [r.cor1, r.corg, r.corbal].iter().enumerate() {
        row.extend([f(e.rhs), fmt_bool(e.satisfied), fmt_bool(e.vacuous)]);
        if i == 2 {
            row.push(f(r.corbal_observed_rhs));
        }
    }
    for e in [r.corb2, r.corb4] {
        row.extend([f(e.rhs), fmt_bool(e.satisfied), fmt_bool(e.vacuous)]);
    }
    row.extend([
        r.n.to_string(),
        r.observed.to_string(),
        f(r.tv_fixed_eps),
        fmt_opt(r.posterior_term, f),
        fmt_opt(r.eq9_holds, fmt_bool),
        fmt_bool(r.eq10_holds),
    ]);
    for t in &r.types {
        row.extend([
            f(t.mf),
            f(t.missing_mass),
            f(t.halluc_rate),
            f(t.mc_adaptive_b),
            f(t.cor_types.rhs),
            fmt_bool(t.cor_types.satisfied),
            fmt_bool(t.cor_types.vacuous),
        ]);
    }
    row
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })
}

fn write_rows(path: &Path, header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv_writer(path)?;
    w.write_record(&header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

/// One row per trial in trial order; `type_count` fixes the per-type
/// columns so an empty run still gets the full header.
pub fn write_trials_csv(path: &Path, records: &[TrialRecord], type_count: usize) -> Result<()> {
    if let Some(r) = records.iter().find(|r| r.types.len() != type_count) {
        return Err(Error::param(
            "type_count",
            format!("trial {} has {} types, expected {type_count}", r.trial, r.types.len()),
        ));
    }
    write_rows(path, trials_csv_header(type_count), records.iter().map(trial_row))
}

pub fn write_reliability_csv(path: &Path, rows: &[ReliabilityRow]) -> Result<()> {
    let header = ["bin_value", "g_mass", "p_mass", "bin_size"]
        .map(String::from)
        .to_vec();
    write_rows(
        path,
        header,
        rows.iter().map(|r| {
            vec![
                format_number(r.bin_value),
                format_number(r.g_mass),
                format_number(r.p_mass),
                r.bin_size.to_string(),
            ]
        }),
    )
}

pub fn read_reliability_csv(path: &Path) -> Result<Vec<ReliabilityRow>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_err)
}

/// Plain-text summary of an aggregate report.
pub fn render_report(a: &AggregateReport) -> String {
    let mut out = format!(
        "algorithm {}  trials {}  delta {}  s {:.4}  r {}  n {}\n\n",
        a.algorithm, a.trials, a.params.delta, a.params.s, a.params.r, a.params.n
    );
    out.push_str(&format!(
        "{:<14} {:>9} {:>21} {:>9} {:>9}  {}\n",
        "bound", "freq", "95% CI", "target", "vacuous", "status"
    ));
    for b in &a.bounds {
        let f = &b.satisfaction;
        let status = match (b.checked, f.pass) {
            (false, _) => "unchecked",
            (true, true) => "PASS",
            (true, false) => "FAIL",
        };
        out.push_str(&format!(
            "{:<14} {:>9.4} {:>21} {:>9.4} {:>9.4}  {status}\n",
            b.name,
            f.frequency,
            format!("[{:.4}, {:.4}]", f.ci_low, f.ci_high),
            f.threshold,
            b.vacuous_fraction
        ));
    }
    out.push('\n');
    out.push_str(&format!("{:<14} {:>14} {:>14}\n", "metric", "mean", "std"));
    for (name, m) in &a.metrics {
        out.push_str(&format!("{name:<14} {:>14.6} {:>14.6}\n", m.mean, m.std_dev));
    }
    if let Some(m) = &a.markov {
        out.push_str(&format!(
            "\nmarkov step: eq9 {:.4} (>= {:.4}, {} trials)  eq10 {:.4} (>= {:.4})  {}\n",
            m.eq9.frequency,
            m.eq9.threshold,
            m.eq9.trials,
            m.eq10.frequency,
            m.eq10.threshold,
            if m.pass { "PASS" } else { "FAIL" }
        ));
    }
    out.push_str(if a.pass { "\noverall: PASS\n" } else { "\noverall: FAIL\n" });
    out
}
