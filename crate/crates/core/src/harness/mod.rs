//! Experiment configuration, report bundles, and the communication table.
//!
//! A run is described by an [`ExperimentConfig`], usually read from TOML and
//! patched with command-line overrides. [`run_experiment`] turns it into a
//! [`ReportBundle`], which holds no timestamps and is identical for identical
//! configurations.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{self, attack_by_name, LeakageReport};
use crate::audit::{run_audit, AuditKind, AuditReport, Grid, AUDIT_TOL};
use crate::error::{Error, Result};
use crate::pir::Database;
use crate::protocol::{Detail, DrawPolicy, Protocol};
use crate::transcript::CommUnit;

pub const REPORT_SCHEMA: &str = "qspir-report/1";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Largest `n` for which `"all"` databases is accepted unless overridden.
pub const DEFAULT_CAP_GRID: usize = 8;

/// Environment variable naming the worker thread count.
pub const THREADS_ENV: &str = "QSPIR_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AllKeyword {
    #[serde(rename = "all")]
    All,
}

/// `"all"` or an explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Selection<T> {
    All(AllKeyword),
    Only(Vec<T>),
}

impl<T> Default for Selection<T> {
    fn default() -> Self {
        Selection::All(AllKeyword::All)
    }
}

/// How the user's randomness is enumerated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RandomnessPolicy {
    /// The protocol's exact enumeration: every scheme randomness value with
    /// every mask tuple, or the balanced mask grid when tuples are too many.
    #[default]
    Exhaustive,
    /// Independent draws from a generator seeded with the config seed.
    Seeded { samples: usize },
}

/// Whether each case uses the whole mask grid or a rotating share of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskCoverage {
    /// Rotate when the protocol cannot enumerate every mask tuple.
    #[default]
    Auto,
    Full,
    Rotating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scheme: String,
    pub n: usize,
    #[serde(default)]
    pub indices: Selection<usize>,
    #[serde(default)]
    pub databases: Selection<Database>,
    #[serde(default)]
    pub randomness: RandomnessPolicy,
    #[serde(default)]
    pub masks: MaskCoverage,
    #[serde(default)]
    pub audits: Selection<AuditKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Pass thresholds per audit, replacing the default of 1e-9.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tolerances: BTreeMap<AuditKind, f64>,
    #[serde(default = "default_cap_grid")]
    pub cap_grid: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_cap_grid() -> usize {
    DEFAULT_CAP_GRID
}

impl ExperimentConfig {
    pub fn new(scheme: impl Into<String>, n: usize) -> Self {
        ExperimentConfig {
            scheme: scheme.into(),
            n,
            indices: Selection::default(),
            databases: Selection::default(),
            randomness: RandomnessPolicy::default(),
            masks: MaskCoverage::default(),
            audits: Selection::default(),
            out: None,
            tolerances: BTreeMap::new(),
            cap_grid: DEFAULT_CAP_GRID,
            seed: 0,
        }
    }

    pub fn with_audits(mut self, audits: Vec<AuditKind>) -> Self {
        self.audits = Selection::Only(audits);
        self
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn protocol(&self) -> Result<Protocol> {
        Protocol::from_name(&self.scheme, self.n)
    }

    pub fn audit_list(&self) -> Vec<AuditKind> {
        match &self.audits {
            Selection::All(_) => AuditKind::STANDARD.to_vec(),
            Selection::Only(v) => {
                let mut v = v.clone();
                v.sort();
                v.dedup();
                v
            }
        }
    }

    /// Checks the config and resolves it into a protocol and audit grid.
    pub fn resolve(&self) -> Result<(Protocol, Grid)> {
        let protocol = self.protocol()?;
        let n = self.n;
        let mut grid = Grid::full(&protocol);
        if let Selection::Only(list) = &self.indices {
            if list.is_empty() {
                return Err(Error::Config("empty index list".into()));
            }
            if let Some(i) = list.iter().find(|&&i| i == 0 || i > n) {
                return Err(Error::Config(format!("index {i} outside 1..={n}")));
            }
            grid.indices = list.clone();
        }
        grid.databases = match &self.databases {
            Selection::All(_) => {
                if n > self.cap_grid {
                    return Err(Error::Config(format!(
                        "\"all\" databases needs n <= cap_grid ({}); got n = {n}",
                        self.cap_grid
                    )));
                }
                Database::all(n).collect()
            }
            Selection::Only(list) => {
                if list.is_empty() {
                    return Err(Error::Config("empty database list".into()));
                }
                if let Some(x) = list.iter().find(|x| x.n() != n) {
                    return Err(Error::Config(format!("database {x} does not have {n} bits")));
                }
                list.clone()
            }
        };
        grid.draws = match self.randomness {
            RandomnessPolicy::Exhaustive => protocol.default_policy(),
            RandomnessPolicy::Seeded { samples } => {
                if samples == 0 {
                    return Err(Error::Config("seeded randomness needs at least one sample".into()));
                }
                DrawPolicy::Seeded { seed: self.seed, samples }
            }
        };
        grid.rotate_masks = match self.masks {
            MaskCoverage::Full => false,
            MaskCoverage::Rotating => true,
            MaskCoverage::Auto => matches!(grid.draws, DrawPolicy::Balanced { .. }),
        };
        for (kind, tol) in &self.tolerances {
            if !(tol.is_finite() && *tol >= 0.0) {
                return Err(Error::Config(format!("tolerance for {kind} must be a nonnegative number")));
            }
        }
        Ok((protocol, grid))
    }
}

/// One row of the communication table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommRow {
    pub scheme: String,
    pub n: usize,
    pub unit: CommUnit,
    pub sent: usize,
    pub returned: usize,
    pub measured: usize,
    pub closed_form: usize,
    pub residual: i64,
    pub matches: bool,
    /// `measured / n^{1/3}`, for cube-based rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_cube_root: Option<f64>,
}

/// Measured communication of one honest run against the closed form.
pub fn comm_row(protocol: &Protocol) -> Result<CommRow> {
    let n = protocol.n();
    let x = Database::new(crate::BitString::zeros(n))?;
    // any one draw; the counters do not depend on it
    let draw = protocol.draws(DrawPolicy::Seeded { seed: 0, samples: 1 })?.swap_remove(0);
    let c = protocol.run(&x, 1, &draw, Detail::OUTPUT)?.communication();
    let closed = protocol.closed_form_comm();
    let cube = protocol.scheme().is_some_and(|s| s.name().starts_with("cube"));
    Ok(CommRow {
        scheme: protocol.name(),
        n,
        unit: protocol.unit(),
        sent: c.sent,
        returned: c.returned,
        measured: c.total(),
        closed_form: closed,
        residual: c.total() as i64 - closed as i64,
        matches: c.total() == closed,
        per_cube_root: cube.then(|| c.total() as f64 / (n as f64).cbrt()),
    })
}

/// Communication rows for every scheme at every listed `n`.
pub fn comm_table(schemes: &[&str], ns: &[usize]) -> Result<Vec<CommRow>> {
    let mut out = Vec::new();
    for s in schemes {
        for &n in ns {
            out.push(comm_row(&Protocol::from_name(s, n)?)?);
        }
    }
    Ok(out)
}

/// The table the `comm-table` subcommand prints by default.
pub fn default_comm_table() -> Result<Vec<CommRow>> {
    let mut rows = comm_table(&["trivial1"], &(1..=8).collect::<Vec<_>>())?;
    rows.extend(comm_table(&["trivial1-classical", "subset2-classical", "subset2"], &[8])?);
    rows.extend(comm_table(&["qspir(cube2)"], &[8, 27, 64])?);
    rows.extend(comm_table(&["bell2"], &[2, 4, 6])?);
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub schema: String,
    pub tool_version: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub audits: Vec<AuditReport>,
    pub comm: Vec<CommRow>,
    pub passed: bool,
}

impl ReportBundle {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text)?;
        let found = v.get("schema").and_then(|s| s.as_str()).unwrap_or_default();
        if found != REPORT_SCHEMA {
            return Err(Error::SchemaVersion { expected: REPORT_SCHEMA.into(), found: found.into() });
        }
        Ok(serde_json::from_value(v)?)
    }

    pub fn failed_audits(&self) -> impl Iterator<Item = &AuditReport> {
        self.audits.iter().filter(|r| !r.passed)
    }
}

pub fn export_bundle(bundle: &ReportBundle, path: &Path) -> Result<()> {
    fs::write(path, bundle.to_json()? + "\n")?;
    Ok(())
}

pub fn load_bundle(path: &Path) -> Result<ReportBundle> {
    ReportBundle::from_json(&fs::read_to_string(path)?)
}

fn apply_tolerance(mut r: AuditReport, tol: f64) -> AuditReport {
    r.tolerance = tol;
    r.passed = r.worst_case_distance <= tol;
    if r.passed {
        r.witness = None;
    }
    r
}

/// Runs every configured audit, independently and possibly in parallel, and
/// writes the bundle to the configured output path.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ReportBundle> {
    let (protocol, grid) = config.resolve()?;
    let audits = config.audit_list();
    let reports = audits
        .par_iter()
        .map(|&kind| {
            let r = run_audit(kind, &protocol, &grid)?;
            Ok(match config.tolerances.get(&kind) {
                Some(&tol) => apply_tolerance(r, tol),
                None => r,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let comm = vec![comm_row(&protocol)?];
    let passed = reports.iter().all(|r| r.passed);
    let bundle = ReportBundle {
        schema: REPORT_SCHEMA.into(),
        tool_version: TOOL_VERSION.into(),
        seed: config.seed,
        config: config.clone(),
        audits: reports,
        comm,
        passed,
    };
    if let Some(path) = &config.out {
        export_bundle(&bundle, path)?;
    }
    Ok(bundle)
}

/// One database under an attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRow {
    pub database: Database,
    pub target: bool,
    pub success_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSummary {
    pub attack: String,
    pub protocol: String,
    pub rows: Vec<AttackRow>,
    pub undetectability: AuditReport,
    pub leakage: LeakageReport,
}

impl AttackSummary {
    pub fn passed(&self) -> bool {
        self.undetectability.passed
    }
}

/// Runs an attack against every `n`-bit database, checks it against the
/// honest servers' view, and measures what it learns.
pub fn attack_experiment(scheme: &str, n: usize, attack: &str, countermeasure: bool) -> Result<AttackSummary> {
    let protocol = Protocol::from_name(scheme, n)?;
    let protocol = if countermeasure { adversary::apply_countermeasure(&protocol) } else { protocol };
    let attack = attack_by_name(attack)?;
    let databases: Vec<Database> = Database::all(n).collect();
    let rows = databases
        .iter()
        .map(|x| {
            let o = adversary::run_attack(attack.as_ref(), &protocol, x)?;
            Ok(AttackRow { database: x.clone(), target: o.target, success_probability: o.success_probability })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AttackSummary {
        attack: attack.name(),
        protocol: protocol.name(),
        rows,
        undetectability: adversary::verify_undetectability(&protocol, attack.as_ref(), &databases)?,
        leakage: adversary::leakage_report(attack.as_ref(), &protocol, None)?,
    })
}

/// Worker threads requested through [`THREADS_ENV`]; `None` when unset.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(t) if t > 0 => Ok(Some(t)),
            _ => Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(None),
    }
}

fn pass_word(passed: bool) -> &'static str {
    if passed {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn render_audits(reports: &[AuditReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<16} {:<30} {:>5} {:>12} {:>10}  grid", "audit", "protocol", "", "worst", "cases");
    for r in reports {
        let _ = writeln!(
            s,
            "{:<16} {:<30} {:>5} {:>12.3e} {:>10}  n={} {} databases, {}",
            r.kind.as_str(),
            r.protocol,
            pass_word(r.passed),
            r.worst_case_distance,
            r.grid.cases,
            r.grid.n,
            r.grid.databases,
            r.grid.draws
        );
        if let Some(w) = &r.witness {
            let _ = writeln!(s, "  witness: {}", serde_json::to_string(w).unwrap_or_default());
        }
    }
    s
}

pub fn render_comm(rows: &[CommRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<22} {:>4} {:>7} {:>6} {:>8} {:>8} {:>11} {:>9} {:>11}",
        "scheme", "n", "unit", "sent", "returned", "measured", "closed form", "residual", "comm/n^1/3"
    );
    for r in rows {
        let unit = match r.unit {
            CommUnit::Qubits => "qubits",
            CommUnit::Bits => "bits",
        };
        let ratio = r.per_cube_root.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            s,
            "{:<22} {:>4} {:>7} {:>6} {:>8} {:>8} {:>11} {:>9} {:>11}",
            r.scheme, r.n, unit, r.sent, r.returned, r.measured, r.closed_form, r.residual, ratio
        );
    }
    s
}

pub fn render_bundle(b: &ReportBundle) -> String {
    let mut s = format!(
        "{} n={} seed={} tool {}\n\n",
        b.config.scheme, b.config.n, b.seed, b.tool_version
    );
    s += &render_audits(&b.audits);
    s += "\n";
    s += &render_comm(&b.comm);
    let _ = writeln!(s, "\noverall: {}", pass_word(b.passed));
    s
}

pub fn render_attack(a: &AttackSummary) -> String {
    let mut s = format!("{} against {}\n\n{:<10} {:>6} {:>9}\n", a.attack, a.protocol, "database", "target", "success");
    for r in &a.rows {
        let _ = writeln!(s, "{:<10} {:>6} {:>9.6}", r.database.to_string(), u8::from(r.target), r.success_probability);
    }
    let _ = writeln!(
        s,
        "\nmean success {:.6}; target information {:.6} bits; database information {:.6} bits",
        a.leakage.success_probability, a.leakage.target_information_bits, a.leakage.mutual_information_bits
    );
    let _ = writeln!(
        s,
        "undetectability: {} (worst trace distance {:.3e}, tolerance {:.0e})",
        pass_word(a.undetectability.passed),
        a.undetectability.worst_case_distance,
        AUDIT_TOL
    );
    s
}
