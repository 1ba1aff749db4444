//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use qspir_core::adversary::{apply_countermeasure, leakage_report, run_attack, verify_undetectability, ParityAttack};
use qspir_core::audit::{audit_comm, audit_data_privacy, audit_recovery, audit_user_privacy_quantum, AuditReport, Grid};
use qspir_core::pir::Database;
use qspir_core::protocol::{Detail, DrawPolicy, Protocol};
use qspir_core::quantum::{partial_trace, trace_distance, DensityMatrix};
use qspir_core::Result;

use common::cases::sparse_dense_case;

/// Recovery probabilities and privacy distances.
const AUDIT_TOL: f64 = 1e-9;
/// Sparse against dense, and the "exactly" quantities of the attack suite.
const EXACT_TOL: f64 = 1e-12;
const ORACLE_CASES: u64 = 1000;
const MIN_CUBE_MASKS: usize = 512;

struct Verdict {
    passed: bool,
    detail: String,
}

impl Verdict {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Verdict { passed, detail: detail.into() }
    }
}

fn criterion(id: u32, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Result<Verdict>) -> bool {
    let start = Instant::now();
    let verdict = f().unwrap_or_else(|e| Verdict::new(false, format!("error: {e}")));
    let elapsed = start.elapsed();
    let in_time = limit.is_none_or(|l| elapsed < l);
    let passed = verdict.passed && in_time;
    let budget = limit.map(|l| format!(", limit {} s", l.as_secs())).unwrap_or_default();
    println!(
        "criterion {id} {} {name} ({:.1} s{budget}): {}{}",
        if passed { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        verdict.detail,
        if in_time { "" } else { "; over time" }
    );
    passed
}

fn protocol(name: &str, n: usize) -> Result<Protocol> {
    Protocol::from_name(name, n)
}

/// Compiled trivial and subset protocols over every `n <= 4`, each on its
/// full grid.
fn small_compiled() -> Result<Vec<(Protocol, Grid)>> {
    let mut out = Vec::new();
    for name in ["trivial1", "subset2"] {
        for n in 1..=4 {
            let p = protocol(name, n)?;
            let g = Grid::full(&p);
            out.push((p, g));
        }
    }
    Ok(out)
}

/// Cube protocol at `n = 8`: every database, index and scheme randomness
/// value, with the balanced mask grid rotated across cases.
fn cube8() -> Result<(Protocol, Grid)> {
    let p = protocol("cube2", 8)?;
    let g = Grid::full(&p).rotating();
    Ok((p, g))
}

fn summarize(reports: &[AuditReport]) -> Verdict {
    let worst = reports.iter().map(|r| r.worst_case_distance).fold(0.0, f64::max);
    let failed: Vec<String> = reports
        .iter()
        .filter(|r| !(r.passed && r.worst_case_distance <= AUDIT_TOL))
        .map(|r| format!("{} n={}", r.protocol, r.grid.n))
        .collect();
    let cases: usize = reports.iter().map(|r| r.grid.cases).sum();
    let detail = format!("{} grids, {cases} cases, worst {worst:.2e}", reports.len());
    if failed.is_empty() {
        Verdict::new(true, detail)
    } else {
        Verdict::new(false, format!("{detail}; failing: {}", failed.join(", ")))
    }
}

fn recovery_exactness() -> Result<Verdict> {
    let mut reports = Vec::new();
    for (p, g) in small_compiled()? {
        reports.push(audit_recovery(&p, &g)?);
    }
    let (p, g) = cube8()?;
    let masks = p.mask_grid(g.draws)?.len();
    let r = audit_recovery(&p, &g)?;
    let want_cases = 256 * 8 * p.randomness_size() as usize;
    let covered = r.grid.cases == want_cases && masks >= MIN_CUBE_MASKS;
    reports.push(r);
    let mut v = summarize(&reports);
    v.detail += &format!("; cube n=8 uses {masks} mask tuples");
    v.passed &= covered;
    Ok(v)
}

fn user_privacy() -> Result<Verdict> {
    let mut reports = Vec::new();
    for (p, g) in small_compiled()? {
        reports.push(audit_user_privacy_quantum(&p, &g)?);
    }
    let (p, g) = cube8()?;
    reports.push(audit_user_privacy_quantum(&p, &g)?);
    Ok(summarize(&reports))
}

fn data_privacy() -> Result<Verdict> {
    let mut reports = Vec::new();
    for (p, g) in small_compiled()? {
        reports.push(audit_data_privacy(&p, &g)?);
    }
    for n in 1..=6 {
        let p = protocol("bell2", n)?;
        let g = Grid::full(&p);
        reports.push(audit_data_privacy(&p, &g)?);
    }
    Ok(summarize(&reports))
}

fn classical_fails_quantum_passes() -> Result<Verdict> {
    let classical = protocol("subset2-classical", 2)?;
    let c = audit_data_privacy(&classical, &Grid::full(&classical))?;
    let compiled = protocol("subset2", 2)?;
    let q = audit_data_privacy(&compiled, &Grid::full(&compiled))?;
    let witness = c.witness.as_ref().map(|w| w.note.clone()).unwrap_or_else(|| "none".into());
    Ok(Verdict::new(
        !c.passed && c.witness.is_some() && q.passed,
        format!(
            "classical distance {:.3} (witness: {witness}); compiled distance {:.2e}",
            c.worst_case_distance, q.worst_case_distance
        ),
    ))
}

/// Largest distance from the maximally mixed state over every register a
/// message carries, across all databases and indices.
fn transmitted_mixedness(p: &Protocol) -> Result<f64> {
    let n = p.n();
    let draw = p.draws(DrawPolicy::Exhaustive)?.swap_remove(0);
    let mut worst: f64 = 0.0;
    for x in Database::all(n) {
        for i in 1..=n {
            let t = p.run(&x, i, &draw, Detail::FULL)?;
            for step in t.steps.iter().filter(|s| !s.moved.is_empty()) {
                for reg in &step.moved {
                    for b in &step.branches {
                        let rho = partial_trace(&b.state, &[reg.as_str()])?;
                        let half = DensityMatrix::maximally_mixed(rho.layout().clone())?;
                        worst = worst.max(trace_distance(&rho, &half)?);
                    }
                }
            }
        }
    }
    Ok(worst)
}

fn bell_scheme() -> Result<Verdict> {
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [2, 4, 6] {
        let p = protocol("bell2", n)?;
        let rec = audit_recovery(&p, &Grid::full(&p))?;
        let mixed = transmitted_mixedness(&p)?;
        let comm = audit_comm(&p)?.metrics["measured"] as usize;
        ok &= rec.passed && rec.worst_case_distance <= AUDIT_TOL && mixed <= AUDIT_TOL && comm == 2 * n;
        parts.push(format!("n={n}: comm {comm}, mixedness {mixed:.1e}"));
    }
    Ok(Verdict::new(ok, parts.join("; ")))
}

fn comm_accounting() -> Result<Verdict> {
    let mut cases: Vec<(&str, usize, usize)> = (1..=8).map(|n| ("trivial1", n, 2 * n)).collect();
    cases.extend([("subset2", 8, 36), ("cube2", 8, 52), ("cube2", 27, 76), ("cube2", 64, 100)]);
    let mut bad = Vec::new();
    for (name, n, want) in &cases {
        let r = audit_comm(&protocol(name, *n)?)?;
        let (measured, closed) = (r.metrics["measured"] as usize, r.metrics["closed_form"] as usize);
        if measured != *want || closed != *want || !r.passed {
            bad.push(format!("{name} n={n}: measured {measured}, closed form {closed}, expected {want}"));
        }
    }
    let detail = format!("{} protocols, measured = closed form = expected", cases.len());
    Ok(if bad.is_empty() { Verdict::new(true, detail) } else { Verdict::new(false, bad.join("; ")) })
}

fn attack_suite() -> Result<Verdict> {
    let honest = protocol("trivial1", 2)?;
    let guarded = apply_countermeasure(&honest);
    let attack = ParityAttack;
    let dbs: Vec<Database> = Database::all(2).collect();
    let mut min_success: f64 = 1.0;
    let mut guarded_dev: f64 = 0.0;
    for x in &dbs {
        let o = run_attack(&attack, &honest, x)?;
        min_success = min_success.min(o.success_probability);
        let g = run_attack(&attack, &guarded, x)?;
        guarded_dev = guarded_dev.max((g.success_probability - 0.5).abs());
    }
    let hidden = verify_undetectability(&honest, &attack, &dbs)?;
    let leak = leakage_report(&attack, &guarded, None)?;
    let passed = (1.0 - min_success) <= EXACT_TOL
        && hidden.passed
        && hidden.worst_case_distance <= AUDIT_TOL
        && leak.target_information_bits.abs() <= EXACT_TOL
        && (leak.success_probability - 0.5).abs() <= EXACT_TOL
        && guarded_dev <= EXACT_TOL;
    Ok(Verdict::new(
        passed,
        format!(
            "parity success {min_success:.12}; server distance {:.1e}; with countermeasure {:.12} bits, success {:.12}",
            hidden.worst_case_distance, leak.target_information_bits, leak.success_probability
        ),
    ))
}

fn oracle_equivalence() -> Result<Verdict> {
    let worst = (0..ORACLE_CASES).map(sparse_dense_case).fold(0.0, f64::max);
    Ok(Verdict::new(worst <= EXACT_TOL, format!("{ORACLE_CASES} cases up to width 12, worst {worst:.2e}")))
}

fn main() -> ExitCode {
    let minutes = |m: u64| Some(Duration::from_secs(60 * m));
    let results = [
        criterion(1, "recovery exactness", minutes(2), recovery_exactness),
        criterion(2, "user privacy", minutes(5), user_privacy),
        criterion(3, "data privacy", minutes(5), data_privacy),
        criterion(4, "classical subset fails, compiled passes", None, classical_fails_quantum_passes),
        criterion(5, "bell scheme", None, bell_scheme),
        criterion(6, "communication accounting", None, comm_accounting),
        criterion(7, "attack suite", minutes(1), attack_suite),
        criterion(8, "oracle equivalence", None, oracle_equivalence),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria pass", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
