//! Experiment runner: a config is resolved against per-kind defaults, hashed,
//! and executed into a run directory holding CSV tables and `summary.json`.

mod experiments;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use levygreen::geometry::Domain;
use levygreen::kernels::DriftField;
use levygreen::spectral::{logspace, ProcessSpec};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    ScalingAudit,
    GreenOracle,
    McExit,
    DuhamelCompare,
    KatoScan,
    SmallBallWindow,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::ScalingAudit => "scaling-audit",
            Kind::GreenOracle => "green-oracle",
            Kind::McExit => "mc-exit",
            Kind::DuhamelCompare => "duhamel-compare",
            Kind::KatoScan => "kato-scan",
            Kind::SmallBallWindow => "small-ball-window",
        }
    }
}

/// Numeric knobs; anything left out takes the default for the experiment kind.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Knobs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub band: Option<f64>,
    /// Walks (Monte Carlo kinds; 0 skips the drifted cross-check of duhamel-compare).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// `euler` or `wos`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub engine: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sources: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_visits: Option<u64>,
    /// Pass threshold of the kind's main error metric.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Significance level of goodness-of-fit checks.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    /// Finite annulus edges of the exit partition, as multiples of the radius.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partition: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sectors: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shell_widths: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cells_per_radius: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<Kind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub process: Option<ProcessSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Domain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<DriftField>,
    #[serde(default)]
    pub knobs: Knobs,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Numeric(#[from] levygreen::Error),
}

impl CliError {
    /// Machine-readable failure class.
    pub fn reason(&self) -> &'static str {
        use levygreen::Error as E;
        match self {
            CliError::Usage(_) => "usage",
            CliError::Numeric(e) => match e {
                E::InvalidParameter(_) => "invalid-parameter",
                E::Quadrature { .. } => "quadrature",
                E::NonIntegrable { .. } => "non-integrable",
                E::OutsideDomain(_) => "outside-domain",
                E::Pole(_) => "pole",
                E::Degenerate(_) => "degenerate",
                E::Unsupported(_) => "unsupported",
                E::Bracket(_) => "bracket",
                E::StepBudget { .. } => "step-budget",
                E::Divergence(_) => "divergence",
                E::Empty(_) => "empty",
                E::Io(_) => "io",
                E::Json(_) => "json",
                E::Csv(_) => "csv",
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| usage(format!("config: {e}")))
    }

    /// Override one knob from a `key=value` flag; the value is read as JSON
    /// when possible and as a string otherwise.
    pub fn set_knob(&mut self, key: &str, raw: &str) -> CliResult<()> {
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut obj = serde_json::to_value(&self.knobs).map_err(|e| usage(e.to_string()))?;
        obj.as_object_mut().expect("knobs serialize to an object").insert(key.to_string(), value);
        self.knobs = serde_json::from_value(obj).map_err(|e| usage(format!("--set {key}: {e}")))?;
        Ok(())
    }

    /// Fill every default for `kind`. The result hashes identically to any
    /// config that spells the same values out.
    pub fn resolve(mut self, kind: Kind) -> CliResult<Self> {
        if let Some(k) = self.kind {
            if k != kind {
                return Err(usage(format!("config is for {}, not {}", k.name(), kind.name())));
            }
        }
        self.kind = Some(kind);
        let spec = match self.process.take() {
            Some(s) => s,
            None => ProcessSpec::stable(1.5, 2)?,
        };
        let d = spec.dim();
        let domain = match self.domain.take() {
            Some(dom) => dom,
            None => Domain::centered_ball(d, 1.0)?,
        };
        if domain.dim() != d {
            return Err(usage(format!("process has d = {d}, domain has d = {}", domain.dim())));
        }
        let drift = match self.drift.take() {
            Some(b) => b,
            None => match kind {
                Kind::DuhamelCompare | Kind::KatoScan | Kind::SmallBallWindow => {
                    let mut v = vec![0.0; d];
                    v[0] = 1.0;
                    DriftField::constant(v)?
                }
                _ => DriftField::zero(),
            },
        };
        let center = domain.balls()[0].center.clone();
        let radius = domain.balls()[0].radius;
        let k = &mut self.knobs;
        let stable = spec.stable_alpha().is_some();
        match kind {
            Kind::ScalingAudit => {
                k.r_grid.get_or_insert_with(|| logspace(1e-3, 1e3, 61));
            }
            Kind::GreenOracle => {
                let h = *k.h.get_or_insert(0.1 * radius);
                k.band.get_or_insert(h);
                k.n.get_or_insert(100_000);
                k.dt.get_or_insert(1e-3);
                k.sources.get_or_insert_with(|| vec![[center[0], center[1]]]);
                k.min_delta.get_or_insert(0.2 * radius);
                k.min_visits.get_or_insert(500);
                k.threshold.get_or_insert(0.10);
            }
            Kind::McExit => {
                let engine = k.engine.get_or_insert_with(|| "euler".into()).clone();
                k.n.get_or_insert(40_000);
                k.x0.get_or_insert_with(|| center.clone());
                k.threshold.get_or_insert(0.02);
                match engine.as_str() {
                    "euler" => {
                        k.dt.get_or_insert(1e-4);
                    }
                    "wos" => {}
                    other => return Err(usage(format!("engine {other:?} is neither euler nor wos"))),
                }
                if stable {
                    // the exit law is always sampled by walk-on-spheres
                    k.eps_b.get_or_insert(1e-12 * domain.r0());
                    k.level.get_or_insert(0.01);
                    k.partition.get_or_insert_with(|| vec![1.0, 1.1, 1.5, 3.0]);
                    k.sectors.get_or_insert(4);
                    k.shell_widths.get_or_insert_with(|| vec![0.1 * radius, 0.01 * radius, 0.001 * radius]);
                }
            }
            Kind::DuhamelCompare => {
                let h = *k.h.get_or_insert(0.1 * radius);
                k.band.get_or_insert(h);
                k.n_max.get_or_insert(4);
                k.tol.get_or_insert(0.0);
                k.sources.get_or_insert_with(|| vec![[center[0], center[1]]]);
                let n = *k.n.get_or_insert(0);
                if n > 0 {
                    k.dt.get_or_insert(1e-5);
                    k.threshold.get_or_insert(0.9);
                }
            }
            Kind::KatoScan => {
                k.radii.get_or_insert_with(|| vec![1.0, 0.5, 0.2, 0.1, 0.05, 0.02, 0.01, 1e-3, 1e-4]);
                k.points.get_or_insert_with(|| domain.balls().iter().map(|b| b.center.clone()).collect());
                k.tol.get_or_insert(0.1);
                k.threshold.get_or_insert(1e-4);
            }
            Kind::SmallBallWindow => {
                k.radii.get_or_insert_with(|| vec![0.2, 0.1, 0.05, 0.02]);
                k.cells_per_radius.get_or_insert(5);
                k.n_max.get_or_insert(4);
            }
        }
        self.seed.get_or_insert(1);
        self.process = Some(spec);
        self.domain = Some(domain);
        self.drift = Some(drift);
        Ok(self)
    }

    /// Hex SHA-256 of the canonical JSON form (sorted keys, no whitespace).
    pub fn hash(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical_json(&v).as_bytes()))
    }
}

/// JSON text with object keys sorted at every level.
pub fn canonical_json(v: &Value) -> String {
    match v {
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            let body: Vec<String> = keys
                .into_iter()
                .map(|k| format!("{}:{}", Value::String(k.clone()), canonical_json(&m[k])))
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(a) => format!("[{}]", a.iter().map(canonical_json).collect::<Vec<_>>().join(",")),
        other => other.to_string(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    /// Hard checks decide the exit code.
    pub hard: bool,
    pub pass: bool,
    pub value: Value,
    pub threshold: Value,
}

impl Check {
    pub fn hard(name: &str, pass: bool, value: impl Serialize, threshold: impl Serialize) -> Self {
        Self { name: name.into(), hard: true, pass, value: json!(value), threshold: json!(threshold) }
    }

    pub fn soft(name: &str, pass: bool, value: impl Serialize, threshold: impl Serialize) -> Self {
        Self { hard: false, ..Self::hard(name, pass, value, threshold) }
    }
}

/// What an experiment hands back besides the files it wrote.
#[derive(Debug, Default)]
pub struct Report {
    pub metrics: BTreeMap<String, Value>,
    pub checks: Vec<Check>,
    /// Output or metric name -> the library operation that produced it.
    pub provenance: BTreeMap<String, String>,
}

impl Report {
    pub fn metric(&mut self, name: &str, value: impl Serialize, source: &str) {
        self.metrics.insert(name.into(), json!(value));
        self.provenance.insert(name.into(), source.into());
    }

    pub fn file(&mut self, name: &str, source: &str) {
        self.provenance.insert(name.into(), source.into());
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Monte Carlo shards; never changes results.
    pub shards: usize,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub summary: Value,
    /// All hard checks passed.
    pub passed: bool,
    pub failure: Option<CliError>,
}

pub fn run_dir_name(kind: Kind, hash: &str) -> String {
    format!("{}-{}", kind.name(), &hash[..16])
}

/// Resolve, hash, execute and write `config.json` and `summary.json`.
///
/// Usage errors are returned before anything is written; numeric failures
/// still produce a summary carrying the reason.
pub fn run_experiment(config: ExperimentConfig, kind: Kind, out_root: &Path, opts: RunOptions) -> CliResult<RunOutcome> {
    let config = config.resolve(kind)?;
    let hash = config.hash();
    let dir = out_root.join(run_dir_name(kind, &hash));
    fs::create_dir_all(&dir).map_err(levygreen::Error::from)?;
    let pretty = serde_json::to_string_pretty(&config).map_err(levygreen::Error::from)?;
    fs::write(dir.join("config.json"), pretty + "\n").map_err(levygreen::Error::from)?;

    let result = experiments::run_kind(&config, &dir, opts);
    let (report, failure) = match result {
        Ok(r) => (r, None),
        Err(e) => (Report::default(), Some(e)),
    };
    let passed = failure.is_none() && report.checks.iter().all(|c| !c.hard || c.pass);
    let mut summary = serde_json::Map::new();
    summary.insert("schema".into(), json!(SCHEMA));
    summary.insert("kind".into(), json!(kind.name()));
    summary.insert("config_hash".into(), json!(hash));
    summary.insert("seed".into(), json!(config.seed));
    summary.insert("passed".into(), json!(passed));
    summary.insert("checks".into(), json!(report.checks));
    summary.insert(
        "provenance".into(),
        json!({ "package": concat!("levygreen ", env!("CARGO_PKG_VERSION")), "sources": report.provenance }),
    );
    summary.insert(
        "error".into(),
        match &failure {
            Some(e) => json!({ "reason": e.reason(), "message": e.to_string() }),
            None => Value::Null,
        },
    );
    for (k, v) in report.metrics {
        summary.entry(k).or_insert(v);
    }
    let summary = Value::Object(summary);
    let text = serde_json::to_string_pretty(&summary).map_err(levygreen::Error::from)?;
    fs::write(dir.join("summary.json"), text + "\n").map_err(levygreen::Error::from)?;
    Ok(RunOutcome { dir, summary, passed, failure })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_json_sorts_keys_recursively() {
        let a: Value = serde_json::from_str(r#"{"b": 1, "a": {"y": [1, {"q": 2, "p": 3}], "x": null}}"#).unwrap();
        assert_eq!(canonical_json(&a), r#"{"a":{"x":null,"y":[1,{"p":3,"q":2}]},"b":1}"#);
    }

    #[test]
    fn defaults_are_spelled_out_by_resolution() {
        let empty = ExperimentConfig::default().resolve(Kind::GreenOracle).unwrap();
        let explicit = ExperimentConfig::from_json(&serde_json::to_string(&empty).unwrap()).unwrap();
        assert_eq!(empty.hash(), explicit.resolve(Kind::GreenOracle).unwrap().hash());
        assert_eq!(empty.knobs.n, Some(100_000));
        assert!(ExperimentConfig::default().resolve(Kind::McExit).unwrap().knobs.eps_b.unwrap() > 0.0);
    }

    #[test]
    fn kind_mismatch_and_unknown_knobs_are_usage_errors() {
        let c = ExperimentConfig::from_json(r#"{"kind": "kato-scan"}"#).unwrap();
        assert!(matches!(c.resolve(Kind::McExit), Err(CliError::Usage(_))));
        assert!(matches!(ExperimentConfig::from_json(r#"{"knobs": {"walks": 3}}"#), Err(CliError::Usage(_))));
        let mut c = ExperimentConfig::default();
        c.set_knob("n", "123").unwrap();
        c.set_knob("engine", "euler").unwrap();
        assert_eq!((c.knobs.n, c.knobs.engine.as_deref()), (Some(123), Some("euler")));
        assert!(c.set_knob("n", "lots").is_err());
        assert!(c.set_knob("nope", "1").is_err());
    }

    #[test]
    fn seed_changes_the_hash() {
        let a = ExperimentConfig::default().resolve(Kind::KatoScan).unwrap();
        let mut b = a.clone();
        b.seed = Some(2);
        assert_ne!(a.hash(), b.hash());
    }
}
