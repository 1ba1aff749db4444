//! Exact recovery, user-privacy, data-privacy and communication audits.
//!
//! Every audit walks its grid in a fixed order (databases in ascending
//! binary order, indices ascending, draws in policy order, steps in protocol
//! order) and reports the first failing case it meets as the witness.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pir::{check_index, Database, PirScheme};
use crate::protocol::{Detail, DrawPolicy, Protocol};
use crate::quantum::{trace_distance, DensityMatrix, MixtureAccumulator};
use crate::transcript::{Transcript, UserDraw, UserKnowledge};

pub const AUDIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuditKind {
    Recovery,
    UserPrivacy,
    DataPrivacy,
    Comm,
    Undetectability,
}

impl AuditKind {
    /// The audits `all` expands to.
    pub const STANDARD: [AuditKind; 4] =
        [AuditKind::Recovery, AuditKind::UserPrivacy, AuditKind::DataPrivacy, AuditKind::Comm];

    pub fn as_str(self) -> &'static str {
        match self {
            AuditKind::Recovery => "recovery",
            AuditKind::UserPrivacy => "user-privacy",
            AuditKind::DataPrivacy => "data-privacy",
            AuditKind::Comm => "comm",
            AuditKind::Undetectability => "undetectability",
        }
    }
}

impl fmt::Display for AuditKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AuditKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "recovery" => AuditKind::Recovery,
            "user-privacy" => AuditKind::UserPrivacy,
            "data-privacy" => AuditKind::DataPrivacy,
            "comm" => AuditKind::Comm,
            "undetectability" => AuditKind::Undetectability,
            other => return Err(Error::Parse(format!("unknown audit `{other}`"))),
        })
    }
}

/// Parses a comma-separated audit list; `all` means the standard four.
pub fn parse_audits(list: &str) -> Result<Vec<AuditKind>> {
    let mut out = Vec::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if item == "all" {
            out.extend(AuditKind::STANDARD);
        } else {
            out.push(item.parse()?);
        }
    }
    out.sort();
    out.dedup();
    if out.is_empty() {
        return Err(Error::Parse("empty audit list".into()));
    }
    Ok(out)
}

/// The points an audit enumerates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n: usize,
    pub indices: Vec<usize>,
    pub databases: Vec<Database>,
    pub draws: DrawPolicy,
    /// Recovery: instead of every mask tuple for every `(x, i, r)`, give each
    /// `(x, i, r)` one tuple, cycling through the mask grid. User privacy
    /// under a balanced policy: database number `t` uses only the tuples
    /// with offset `t mod offsets`.
    #[serde(default)]
    pub rotate_masks: bool,
}

impl Grid {
    /// All databases, all indices, the protocol's default draw policy.
    pub fn full(protocol: &Protocol) -> Self {
        let n = protocol.n();
        Grid {
            n,
            indices: (1..=n).collect(),
            databases: Database::all(n).collect(),
            draws: protocol.default_policy(),
            rotate_masks: false,
        }
    }

    pub fn with_databases(mut self, databases: Vec<Database>) -> Self {
        self.databases = databases;
        self
    }

    pub fn with_draws(mut self, draws: DrawPolicy) -> Self {
        self.draws = draws;
        self
    }

    pub fn rotating(mut self) -> Self {
        self.rotate_masks = true;
        self
    }

    fn check(&self, protocol: &Protocol) -> Result<()> {
        if self.n != protocol.n() {
            return Err(Error::InvalidParameter(format!("grid n = {} but protocol n = {}", self.n, protocol.n())));
        }
        for &i in &self.indices {
            check_index(i, self.n)?;
        }
        if let Some(x) = self.databases.iter().find(|x| x.n() != self.n) {
            return Err(Error::LengthMismatch(format!("database {x} in a grid with n = {}", self.n)));
        }
        if self.indices.is_empty() || self.databases.is_empty() {
            return Err(Error::InvalidParameter("empty audit grid".into()));
        }
        Ok(())
    }
}

/// What a report says about its grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub n: usize,
    pub indices: Vec<usize>,
    pub databases: usize,
    pub draws: String,
    pub cases: usize,
}

impl GridSummary {
    fn new(grid: &Grid, draws: usize, cases: usize) -> Self {
        let rot = if grid.rotate_masks { ", rotating masks" } else { "" };
        GridSummary {
            n: grid.n,
            indices: grid.indices.clone(),
            databases: grid.databases.len(),
            draws: format!("{} ({draws} draws{rot})", grid.draws),
            cases,
        }
    }
}

/// A concrete case realizing a failure.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Witness {
    pub i: Option<usize>,
    pub i_prime: Option<usize>,
    pub x: Option<Database>,
    pub x_prime: Option<Database>,
    pub server: Option<usize>,
    pub step: Option<String>,
    pub draw: Option<UserDraw>,
    pub distance: f64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub kind: AuditKind,
    pub protocol: String,
    pub grid: GridSummary,
    pub worst_case_distance: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub witness: Option<Witness>,
    /// Data privacy only: the weaker comparison of states mixed over the
    /// user's randomness.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixed_worst_case_distance: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metrics: BTreeMap<String, f64>,
}

impl AuditReport {
    pub(crate) fn finish(
        kind: AuditKind,
        protocol: String,
        grid: GridSummary,
        worst: f64,
        witness: Option<Witness>,
    ) -> Self {
        let passed = worst <= AUDIT_TOL;
        AuditReport {
            kind,
            protocol,
            grid,
            worst_case_distance: worst,
            tolerance: AUDIT_TOL,
            passed,
            witness: if passed { None } else { witness },
            mixed_worst_case_distance: None,
            metrics: BTreeMap::new(),
        }
    }
}

/// Tracks the worst distance and the first case above tolerance.
#[derive(Default)]
pub(crate) struct Worst {
    pub(crate) worst: f64,
    pub(crate) witness: Option<Witness>,
}

impl Worst {
    pub(crate) fn see(&mut self, d: f64, witness: impl FnOnce() -> Witness) {
        if d > self.worst {
            self.worst = d;
        }
        if d > AUDIT_TOL && self.witness.is_none() {
            let mut w = witness();
            w.distance = d;
            self.witness = Some(w);
        }
    }

    /// Folds in the result of a later part of the same grid.
    pub(crate) fn absorb(&mut self, later: Worst) {
        self.worst = self.worst.max(later.worst);
        if self.witness.is_none() {
            self.witness = later.witness;
        }
    }
}

/// The user's per-step holdings: classical knowledge plus the reduced
/// state of the registers the user holds after each step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewRecord {
    pub knowledge: UserKnowledge,
    pub steps: Vec<(String, Option<DensityMatrix>)>,
}

impl ViewRecord {
    pub fn from_transcript(t: &Transcript) -> Self {
        ViewRecord {
            knowledge: t.knowledge.clone(),
            steps: t.steps.iter().map(|s| (s.label.clone(), s.user_state.clone())).collect(),
        }
    }

    /// Largest per-step trace distance, with the first step above tolerance.
    /// Views with different classical knowledge or step sequences are at
    /// distance 1.
    pub fn distance(&self, other: &ViewRecord) -> Result<(f64, Option<String>)> {
        if self.knowledge != other.knowledge || self.steps.len() != other.steps.len() {
            return Ok((1.0, Some("classical knowledge".into())));
        }
        let mut worst = 0.0f64;
        let mut first = None;
        for ((la, a), (lb, b)) in self.steps.iter().zip(&other.steps) {
            let d = match (a, b) {
                _ if la != lb => 1.0,
                (Some(a), Some(b)) if a.layout() == b.layout() => trace_distance(a, b)?,
                (None, None) => 0.0,
                _ => 1.0,
            };
            if d > AUDIT_TOL && first.is_none() {
                first = Some(la.clone());
            }
            worst = worst.max(d);
        }
        Ok((worst, first))
    }
}

/// Recovery probability of each `(x, i)` is averaged over the user's draws;
/// the report's distance is `1 − min` over the grid.
pub fn audit_recovery(protocol: &Protocol, grid: &Grid) -> Result<AuditReport> {
    grid.check(protocol)?;
    let draws = protocol.draws(grid.draws)?;
    let per_r = protocol.mask_grid(grid.draws).map(|g| g.len()).unwrap_or(1).max(1);
    let mut worst = Worst::default();
    let mut min_p = 1.0f64;
    let mut cases = 0;
    let mut counter = 0usize;
    for x in &grid.databases {
        for &i in &grid.indices {
            let want = x.bit(i)?;
            let chosen: Vec<&UserDraw> = if grid.rotate_masks {
                draws
                    .chunks(per_r)
                    .map(|group| {
                        let d = &group[counter % group.len()];
                        counter += 1;
                        d
                    })
                    .collect()
            } else {
                draws.iter().collect()
            };
            let mut total = 0.0;
            let mut first_bad: Option<(UserDraw, f64)> = None;
            for d in &chosen {
                let t = protocol.run(x, i, d, Detail::OUTPUT)?;
                let p = t.output.probability(want);
                if p < 1.0 - AUDIT_TOL && first_bad.is_none() {
                    first_bad = Some(((*d).clone(), p));
                }
                total += p;
                cases += 1;
            }
            let p = total / chosen.len() as f64;
            min_p = min_p.min(p);
            worst.see(1.0 - p, || Witness {
                i: Some(i),
                x: Some(x.clone()),
                draw: first_bad.as_ref().map(|(d, _)| d.clone()),
                note: format!(
                    "recovery probability {p:.6} over the user's randomness{}",
                    first_bad.as_ref().map(|(_, q)| format!("; first failing draw succeeds with {q:.6}")).unwrap_or_default()
                ),
                ..Witness::default()
            });
        }
    }
    let draw_count = if grid.rotate_masks { draws.len() / per_r } else { draws.len() };
    let mut r = AuditReport::finish(
        AuditKind::Recovery,
        protocol.name(),
        GridSummary::new(grid, draw_count, cases),
        worst.worst,
        worst.witness,
    );
    r.metrics.insert("min_success_probability".into(), min_p);
    Ok(r)
}

/// Exact comparison of each server's query multiset across indices.
/// The distance is the total-variation distance between query
/// distributions.
pub fn audit_user_privacy_classical(scheme: &dyn PirScheme, indices: &[usize]) -> Result<AuditReport> {
    let n = scheme.n();
    let shape = scheme.shape();
    let indices: Vec<usize> = if indices.is_empty() { (1..=n).collect() } else { indices.to_vec() };
    let multisets = |i: usize| -> Result<Vec<BTreeMap<crate::BitString, u64>>> {
        let mut out = vec![BTreeMap::new(); shape.k];
        for r in 0..shape.randomness_size {
            let plan = scheme.gen_plan(i, r)?;
            for (j, q) in plan.queries.into_iter().enumerate() {
                *out[j].entry(q).or_insert(0) += 1;
            }
        }
        Ok(out)
    };
    let base = multisets(indices[0])?;
    let mut worst = Worst::default();
    for &i in &indices[1..] {
        let other = multisets(i)?;
        for j in 0..shape.k {
            let keys: std::collections::BTreeSet<_> = base[j].keys().chain(other[j].keys()).collect();
            let tv: f64 = keys
                .iter()
                .map(|q| {
                    let a = *base[j].get(*q).unwrap_or(&0) as f64;
                    let b = *other[j].get(*q).unwrap_or(&0) as f64;
                    (a - b).abs()
                })
                .sum::<f64>()
                / (2.0 * shape.randomness_size as f64);
            worst.see(tv, || Witness {
                i: Some(indices[0]),
                i_prime: Some(i),
                server: Some(j + 1),
                note: "query multisets differ".into(),
                ..Witness::default()
            });
        }
    }
    let grid = GridSummary {
        n,
        indices: indices.clone(),
        databases: 0,
        draws: format!("exhaustive ({} draws)", shape.randomness_size),
        cases: indices.len() * shape.randomness_size as usize,
    };
    Ok(AuditReport::finish(AuditKind::UserPrivacy, format!("{}-classical", scheme.name()), grid, worst.worst, worst.witness))
}

type ServerMixtures = BTreeMap<(String, usize), DensityMatrix>;

/// Mixture over the grid's draws of every server's reduced state at every
/// step where it holds data, for one `(x, i)`.
pub(crate) fn server_mixtures(protocol: &Protocol, x: &Database, i: usize, draws: &[UserDraw]) -> Result<ServerMixtures> {
    let (mut shared, mut own) = server_mixtures_batch(protocol, &[x], i, draws)?;
    shared.append(&mut own[0]);
    Ok(shared)
}

/// [`server_mixtures`] for several databases at once: the mixtures of steps
/// before any server action, which all databases share, and then the rest
/// for each database.
fn server_mixtures_batch(
    protocol: &Protocol,
    xs: &[&Database],
    i: usize,
    draws: &[UserDraw],
) -> Result<(ServerMixtures, Vec<ServerMixtures>)> {
    let w = 1.0 / draws.len() as f64;
    type Acc = BTreeMap<(String, usize), MixtureAccumulator>;
    let mut shared: Acc = BTreeMap::new();
    let mut own: Vec<Acc> = xs.iter().map(|_| BTreeMap::new()).collect();
    let mut failed = None;
    for d in draws {
        protocol.server_steps_batch(xs, i, d, |t, steps| {
            let acc = match t {
                Some(t) => &mut own[t],
                None => &mut shared,
            };
            for s in steps {
                for (j, rho) in &s.server_states {
                    let a = acc
                        .entry((s.label.clone(), *j))
                        .or_insert_with(|| MixtureAccumulator::new(rho.layout().clone()));
                    if let Err(e) = a.add(w, rho) {
                        failed.get_or_insert(e);
                    }
                }
            }
        })?;
        if let Some(e) = failed {
            return Err(e);
        }
    }
    let finish = |acc: Acc| -> ServerMixtures { acc.into_iter().map(|(k, a)| (k, a.finish())).collect() };
    Ok((finish(shared), own.into_iter().map(finish).collect()))
}

// databases simulated together in the user-privacy audit
const BATCH: usize = 16;

/// Every server's state, mixed over the user's randomness, must not depend
/// on `i` at any step where that server holds data.
pub fn audit_user_privacy_quantum(protocol: &Protocol, grid: &Grid) -> Result<AuditReport> {
    grid.check(protocol)?;
    let all_draws = protocol.draws(grid.draws)?;
    let mut worst = Worst::default();
    let mut cases = 0;
    let steps: Vec<String> = protocol
        .server_steps(&grid.databases[0], grid.indices[0], &all_draws[0])?
        .into_iter()
        .map(|s| s.label)
        .collect();
    let classes = match grid.draws {
        DrawPolicy::Balanced { .. } if grid.rotate_masks => protocol.offset_classes(grid.draws),
        _ => 1,
    };
    // one offset class per database; each class alone gives every server a
    // uniform mask marginal
    let class_draws: Vec<Vec<UserDraw>> =
        (0..classes).map(|c| all_draws.iter().skip(c).step_by(classes).cloned().collect()).collect();
    let mut units: Vec<(usize, Vec<&Database>)> = Vec::new();
    for c in 0..classes {
        let members: Vec<&Database> = grid.databases.iter().skip(c).step_by(classes).collect();
        units.extend(members.chunks(BATCH).map(|xs| (c, xs.to_vec())));
    }
    // batches run on the current thread pool and are folded in order
    let results: Vec<Result<(Worst, usize)>> = units
        .par_iter()
        .map(|(c, xs)| {
            let draws = &class_draws[*c];
            let mut worst = Worst::default();
            let mut cases = 0;
            let (base_shared, base) = server_mixtures_batch(protocol, xs, grid.indices[0], draws)?;
            cases += xs.len() * draws.len();
            for &i in &grid.indices[1..] {
                let (shared, others) = server_mixtures_batch(protocol, xs, i, draws)?;
                cases += xs.len() * draws.len();
                // the shared steps are one computation for the whole batch
                compare_mixtures(&steps, &base_shared, &shared, grid.indices[0], i, xs[0], &mut worst)?;
                for ((x, base), other) in xs.iter().zip(&base).zip(&others) {
                    compare_mixtures(&steps, base, other, grid.indices[0], i, x, &mut worst)?;
                }
            }
            Ok((worst, cases))
        })
        .collect();
    for r in results {
        let (w, n) = r?;
        worst.absorb(w);
        cases += n;
    }
    Ok(AuditReport::finish(
        AuditKind::UserPrivacy,
        protocol.name(),
        GridSummary::new(grid, all_draws.len() / classes, cases),
        worst.worst,
        worst.witness,
    ))
}

fn compare_mixtures(
    steps: &[String],
    base: &ServerMixtures,
    other: &ServerMixtures,
    i: usize,
    i_prime: usize,
    x: &Database,
    worst: &mut Worst,
) -> Result<()> {
    // protocol step order, then server
    for label in steps {
        for ((l, j), rho) in base.iter().filter(|((l, _), _)| l == label) {
            let d = match other.get(&(l.clone(), *j)) {
                Some(sigma) if sigma.layout() == rho.layout() => trace_distance(rho, sigma)?,
                _ => 1.0,
            };
            worst.see(d, || Witness {
                i: Some(i),
                i_prime: Some(i_prime),
                x: Some(x.clone()),
                server: Some(*j),
                step: Some(l.clone()),
                note: "server state depends on the index".into(),
                ..Witness::default()
            });
        }
    }
    if other.len() != base.len() {
        worst.see(1.0, || Witness {
            i: Some(i),
            i_prime: Some(i_prime),
            x: Some(x.clone()),
            note: "servers hold data at different steps".into(),
            ..Witness::default()
        });
    }
    Ok(())
}

/// For every index `i` and bit value `v`, every database with `x_i = v` must
/// give the user the same view as the first such database, draw by draw.
/// States are compared as density matrices, so global phases drop out.
pub fn audit_data_privacy(protocol: &Protocol, grid: &Grid) -> Result<AuditReport> {
    grid.check(protocol)?;
    let draws = protocol.draws(grid.draws)?;
    let w = 1.0 / draws.len() as f64;
    let mut worst = Worst::default();
    let mut mixed_worst = 0.0f64;
    let mut cases = 0;
    let mix_views = |views: &[ViewRecord]| -> Result<Vec<Option<DensityMatrix>>> {
        let mut out = Vec::new();
        for k in 0..views[0].steps.len() {
            let Some(first) = &views[0].steps[k].1 else {
                out.push(None);
                continue;
            };
            let mut acc = MixtureAccumulator::new(first.layout().clone());
            for v in views {
                match &v.steps.get(k).and_then(|s| s.1.as_ref()) {
                    Some(rho) if rho.layout() == first.layout() => acc.add(w, rho)?,
                    _ => return Ok(Vec::new()),
                }
            }
            out.push(Some(acc.finish()));
        }
        Ok(out)
    };
    for &i in &grid.indices {
        for v in [false, true] {
            let mut matching = grid.databases.iter().filter(|x| x.bit(i).map(|b| b == v).unwrap_or(false));
            let Some(reference) = matching.next() else { continue };
            let ref_views: Vec<ViewRecord> = draws
                .iter()
                .map(|d| protocol.run(reference, i, d, Detail::USER).map(|t| ViewRecord::from_transcript(&t)))
                .collect::<Result<_>>()?;
            cases += draws.len();
            let ref_mixed = mix_views(&ref_views)?;
            for x in matching {
                let mut views = Vec::with_capacity(draws.len());
                for (d, rv) in draws.iter().zip(&ref_views) {
                    let view = ViewRecord::from_transcript(&protocol.run(x, i, d, Detail::USER)?);
                    let (dist, step) = view.distance(rv)?;
                    worst.see(dist, || Witness {
                        i: Some(i),
                        x: Some(reference.clone()),
                        x_prime: Some(x.clone()),
                        step,
                        draw: Some(d.clone()),
                        note: format!("user views differ although x_{i} = {}", v as u8),
                        ..Witness::default()
                    });
                    views.push(view);
                    cases += 1;
                }
                let mixed = mix_views(&views)?;
                if mixed.len() != ref_mixed.len() {
                    mixed_worst = mixed_worst.max(1.0);
                }
                for (a, b) in mixed.iter().zip(&ref_mixed) {
                    let d = match (a, b) {
                        (Some(a), Some(b)) => trace_distance(a, b)?,
                        (None, None) => 0.0,
                        _ => 1.0,
                    };
                    mixed_worst = mixed_worst.max(d);
                }
            }
        }
    }
    let mut r = AuditReport::finish(
        AuditKind::DataPrivacy,
        protocol.name(),
        GridSummary::new(grid, draws.len(), cases),
        worst.worst,
        worst.witness,
    );
    r.mixed_worst_case_distance = Some(mixed_worst);
    Ok(r)
}

/// Measured transcript counters against the closed form.
pub fn audit_comm(protocol: &Protocol) -> Result<AuditReport> {
    let n = protocol.n();
    let x = Database::new(crate::BitString::zeros(n))?;
    // any one draw; the counters do not depend on it
    let draw = protocol.draws(DrawPolicy::Seeded { seed: 0, samples: 1 })?.swap_remove(0);
    let t = protocol.run(&x, 1, &draw, Detail::OUTPUT)?;
    let measured = t.communication();
    let closed = protocol.closed_form_comm();
    let residual = (measured.total() as f64 - closed as f64).abs();
    let grid = GridSummary { n, indices: vec![1], databases: 1, draws: "one run".into(), cases: 1 };
    let mut r = AuditReport::finish(
        AuditKind::Comm,
        protocol.name(),
        grid,
        residual,
        Some(Witness {
            i: Some(1),
            x: Some(x),
            note: format!("measured {} but closed form is {closed}", measured.total()),
            ..Witness::default()
        }),
    );
    r.metrics.insert("measured".into(), measured.total() as f64);
    r.metrics.insert("sent".into(), measured.sent as f64);
    r.metrics.insert("returned".into(), measured.returned as f64);
    r.metrics.insert("closed_form".into(), closed as f64);
    Ok(r)
}

/// Runs one standard audit. User privacy uses the classical multiset audit
/// for classical protocols.
pub fn run_audit(kind: AuditKind, protocol: &Protocol, grid: &Grid) -> Result<AuditReport> {
    match kind {
        AuditKind::Recovery => audit_recovery(protocol, grid),
        AuditKind::UserPrivacy => match (protocol.is_quantum(), protocol.scheme()) {
            (false, Some(s)) => audit_user_privacy_classical(s.as_ref(), &grid.indices),
            _ => audit_user_privacy_quantum(protocol, grid),
        },
        AuditKind::DataPrivacy => audit_data_privacy(protocol, grid),
        AuditKind::Comm => audit_comm(protocol),
        AuditKind::Undetectability => crate::adversary::verify_undetectability(
            protocol,
            &crate::adversary::ParityAttack,
            &grid.databases,
        ),
    }
}
