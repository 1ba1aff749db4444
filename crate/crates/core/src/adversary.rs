//! Dishonest-user machinery: one protocol run used as one quantum query to
//! the database, the two-bit parity attack, undetectability checks, and the
//! countermeasure of servers measuring what they receive.
//!
//! The attacker keeps an `index` register (holding `i − 1` in binary) and a
//! one-qubit `target`, and uses `target` in place of the honest `sign` qubit.
//! Conjugating the run by Hadamards on `target` gives, for a fixed classical
//! draw,
//!
//! ```text
//! |i⟩|b⟩ ↦ (−1)^{φ_i}|i⟩|b ⊕ x_i⟩
//! ```
//!
//! where `φ_i` is the phase the honest user would discard as global. For the
//! compiled scheme `φ_i = ⊕_j answer(q_j(i, r), x)·r_j`, so it is the same
//! for every `i` only when the queries do not depend on `i` (the trivial
//! scheme); the Bell scheme has no such phase at all.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::audit::{server_mixtures, AuditKind, AuditReport, GridSummary, Witness, Worst, AUDIT_TOL};
use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::pir::{check_database, Database, QueryPlan};
use crate::protocol::{Detail, Engine, Protocol, ProtocolKind};
use crate::quantum::{hadamard_image, trace_distance, DensityMatrix, MixtureAccumulator, RegisterLayout, SparseState};
use crate::transcript::{OutputDistribution, Party, Step, UserDraw};

pub const INDEX: &str = "index";
pub const TARGET: &str = "target";

/// Width of the index register for an `n`-bit database.
pub fn index_width(n: usize) -> usize {
    (usize::BITS - (n.max(2) - 1).leading_zeros()) as usize
}

/// One honest-looking protocol run, driven coherently by an index register.
#[derive(Debug, Clone)]
pub struct CleanQueryOracle {
    protocol: Protocol,
    draw: UserDraw,
}

impl CleanQueryOracle {
    pub fn new(protocol: Protocol, draw: UserDraw) -> Result<Self> {
        if !protocol.is_quantum() {
            return Err(Error::InvalidParameter("clean queries need a quantum protocol".into()));
        }
        Ok(CleanQueryOracle { protocol, draw })
    }

    pub fn protocol(&self) -> &Protocol {
        &self.protocol
    }

    pub fn draw(&self) -> &UserDraw {
        &self.draw
    }

    pub fn input_layout(&self) -> RegisterLayout {
        RegisterLayout::new([(INDEX, index_width(self.protocol.n())), (TARGET, 1)]).expect("distinct names")
    }

    /// `|i⟩|b⟩` on the input layout.
    pub fn basis_input(&self, i: usize, b: bool) -> Result<SparseState> {
        crate::pir::check_index(i, self.protocol.n())?;
        let w = index_width(self.protocol.n());
        let layout = self.input_layout();
        let bits = layout.assemble(&[BitString::from_uint(i as u64 - 1, w), BitString::from_bits([b])])?;
        SparseState::basis(layout, bits)
    }

    fn work_layout(&self) -> RegisterLayout {
        let names: Vec<(String, usize)> = self
            .protocol
            .layout()
            .registers()
            .iter()
            .filter(|r| r.name != crate::compiler::SIGN)
            .map(|r| (r.name.clone(), r.width))
            .collect();
        RegisterLayout::new(names).expect("protocol registers are distinct")
    }

    fn work_names(&self) -> Vec<String> {
        self.work_layout().names().map(str::to_string).collect()
    }

    /// Runs the query inside an engine. The input must live on
    /// [`input_layout`](Self::input_layout); the returned engine state adds
    /// the protocol's message registers, returned to the user.
    pub(crate) fn run_engine(&self, input: &SparseState, x: &Database, detail: Detail) -> Result<Engine> {
        if input.layout() != &self.input_layout() {
            return Err(Error::LayoutMismatch("clean-query input must be (index, target)".into()));
        }
        check_database(x, self.protocol.n())?;
        let start = input.tensor(&SparseState::zero(self.work_layout()))?;
        let custody = start.layout().names().map(|r| (r.to_string(), Party::User)).collect();
        let mut e = Engine::with_custody(start, custody, detail)?;
        let n = self.protocol.n();
        let index_of = |c: &BitString| -> Option<usize> {
            c.to_uint().map(|v| v as usize + 1).filter(|&i| i <= n)
        };
        match self.protocol.kind() {
            ProtocolKind::Compiled(cp) => {
                let plans: Vec<QueryPlan> =
                    (1..=n).map(|i| cp.scheme().gen_plan(i, self.draw.randomness)).collect::<Result<_>>()?;
                let mut contents = Vec::with_capacity(n);
                for p in &plans {
                    contents.push([
                        cp.register_contents(p, &self.draw.masks, false)?,
                        cp.register_contents(p, &self.draw.masks, true)?,
                    ]);
                }
                let k = cp.servers();
                let width = cp.scheme().shape().t + cp.scheme().shape().a;
                let xor_all = |s: &SparseState| -> Result<SparseState> {
                    let mut s = s.clone();
                    for j in 1..=k {
                        s = s.apply_controlled_xor(&[INDEX, TARGET], &crate::compiler::server_register(j), |c| {
                            match index_of(&c[0]) {
                                Some(i) => contents[i - 1][c[1].get(0) as usize][j - 1].clone(),
                                None => BitString::zeros(width),
                            }
                        })?;
                    }
                    Ok(s)
                };
                e.user_op("encode", |s| xor_all(&s.apply_local_map(TARGET, hadamard_image)?))?;
                self.protocol.server_rounds(&mut e, x)?;
                e.user_op("decode", |s| xor_all(s)?.apply_local_map(TARGET, hadamard_image))?;
            }
            ProtocolKind::Bell(b) => {
                let select = |c: &[BitString]| -> Option<(usize, crate::bell::BellLabel)> {
                    let i = index_of(&c[0])?;
                    if c[1].get(0) {
                        b.slot(i).ok()
                    } else {
                        None
                    }
                };
                let (l, r) = (crate::bell::LEFT, crate::bell::RIGHT);
                e.user_op("encode", |s| {
                    b.prepare_pairs(&s.apply_local_map(TARGET, hadamard_image)?, &[INDEX, TARGET], l, r, select)
                })?;
                self.protocol.server_rounds(&mut e, x)?;
                e.user_op("decode", |s| {
                    b.unprepare_pairs(s, &[INDEX, TARGET], l, r, select)?.apply_local_map(TARGET, hadamard_image)
                })?;
            }
            ProtocolKind::Classical(_) => unreachable!("rejected in the constructor"),
        }
        Ok(e)
    }

    /// Applies `|i⟩|b⟩ ↦ |i⟩|b ⊕ x_i⟩`, returning the state on the input
    /// layout. Fails when the work registers do not return to zero or the
    /// result differs from the ideal map by more than a global phase.
    pub fn query(&self, input: &SparseState, x: &Database) -> Result<SparseState> {
        let (_, branches) = self.run_engine(input, x, Detail::OUTPUT)?.into_parts();
        let [(_, out)] = branches.as_slice() else {
            return Err(Error::ResidualMismatch(format!(
                "servers measured the messages; {} branches remain",
                branches.len()
            )));
        };
        let names = self.work_names();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let (work, rest) = out.factor_out(&refs)?;
        if !work.is_zero() {
            return Err(Error::ResidualMismatch(format!("work registers left at {work}")));
        }
        let ideal = ideal_query(input, x)?;
        if !rest.equal_up_to_global_phase(&ideal, AUDIT_TOL) {
            return Err(Error::ResidualMismatch("branch phases depend on the index beyond x_i".into()));
        }
        Ok(rest)
    }
}

/// The exact map `|i⟩|b⟩ ↦ |i⟩|b ⊕ x_i⟩` on an (index, target) state.
pub fn ideal_query(input: &SparseState, x: &Database) -> Result<SparseState> {
    let n = x.n();
    input.apply_controlled_xor(&[INDEX], TARGET, |c| {
        let bit = c[0].to_uint().map(|v| v as usize + 1).filter(|&i| i <= n).map(|i| x.bit(i).unwrap_or(false));
        BitString::from_bits([bit.unwrap_or(false)])
    })
}

pub fn clean_query(oracle: &CleanQueryOracle, input: &SparseState, x: &Database) -> Result<SparseState> {
    oracle.query(input, x)
}

/// Returns the protocol with every server measuring its incoming messages
/// in the computational basis before acting.
pub fn apply_countermeasure(protocol: &Protocol) -> Protocol {
    protocol.clone().with_countermeasure(true)
}

/// A user strategy run against a protocol.
pub trait Attack: fmt::Debug + Sync {
    fn name(&self) -> String;

    /// The bit the attack tries to output.
    fn target(&self, x: &Database) -> Result<bool>;

    /// Classical draws the attacker uses, one run each.
    fn draws(&self, protocol: &Protocol) -> Result<Vec<UserDraw>> {
        protocol.draws(protocol.default_policy())
    }

    /// One run: recorded steps and the output distribution.
    fn execute(&self, protocol: &Protocol, x: &Database, draw: &UserDraw, detail: Detail)
        -> Result<(Vec<Step>, OutputDistribution)>;
}

/// Index in `(|1⟩ + |2⟩)/√2`, target in `|−⟩`, one clean query, then a
/// Hadamard on the index; outcome `|2⟩` means `x_1 ⊕ x_2 = 1`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ParityAttack;

impl ParityAttack {
    pub fn input(oracle: &CleanQueryOracle) -> Result<SparseState> {
        let layout = oracle.input_layout();
        let h = FRAC_1_SQRT_2 * FRAC_1_SQRT_2;
        let w = index_width(oracle.protocol().n());
        let term = |i: u64, b: bool, a: f64| -> Result<(BitString, Complex64)> {
            Ok((layout.assemble(&[BitString::from_uint(i, w), BitString::from_bits([b])])?, Complex64::new(a, 0.0)))
        };
        SparseState::from_terms(
            layout.clone(),
            [term(0, false, h)?, term(0, true, -h)?, term(1, false, h)?, term(1, true, -h)?],
        )
    }
}

impl Attack for ParityAttack {
    fn name(&self) -> String {
        "parity2".into()
    }

    fn target(&self, x: &Database) -> Result<bool> {
        if x.n() != 2 {
            return Err(Error::InvalidParameter(format!("the parity attack needs n = 2, got {}", x.n())));
        }
        Ok(x.bit(1)? ^ x.bit(2)?)
    }

    fn execute(
        &self,
        protocol: &Protocol,
        x: &Database,
        draw: &UserDraw,
        detail: Detail,
    ) -> Result<(Vec<Step>, OutputDistribution)> {
        self.target(x)?;
        let oracle = CleanQueryOracle::new(protocol.clone(), draw.clone())?;
        let mut e = oracle.run_engine(&ParityAttack::input(&oracle)?, x, detail)?;
        e.user_op("hadamard", |s| s.apply_local_map(INDEX, hadamard_image))?;
        e.measure_output(INDEX)
    }
}

/// The honest protocol at a fixed index, as a reference strategy.
#[derive(Debug, Clone, Copy)]
pub struct HonestBaseline {
    pub index: usize,
}

impl Attack for HonestBaseline {
    fn name(&self) -> String {
        "honest-baseline".into()
    }

    fn target(&self, x: &Database) -> Result<bool> {
        x.bit(self.index)
    }

    fn execute(
        &self,
        protocol: &Protocol,
        x: &Database,
        draw: &UserDraw,
        detail: Detail,
    ) -> Result<(Vec<Step>, OutputDistribution)> {
        let t = protocol.run(x, self.index, draw, detail)?;
        Ok((t.steps, t.output))
    }
}

pub fn attack_by_name(name: &str) -> Result<Box<dyn Attack>> {
    match name {
        "parity2" => Ok(Box::new(ParityAttack)),
        "honest-baseline" => Ok(Box::new(HonestBaseline { index: 1 })),
        other => Err(Error::Parse(format!("unknown attack `{other}`"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerObservation {
    pub step: String,
    pub server: usize,
    pub state: DensityMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub attack: String,
    pub protocol: String,
    pub database: Database,
    /// The value the attack is after.
    pub target: bool,
    /// Output distribution averaged over the attacker's draws.
    pub output: OutputDistribution,
    pub success_probability: f64,
    pub success: bool,
    /// Each server's state mixed over the draws, at every step where it
    /// holds data.
    pub server_states: Vec<ServerObservation>,
}

/// Runs `attack` over all its draws for one database.
pub fn run_attack(attack: &dyn Attack, protocol: &Protocol, x: &Database) -> Result<AttackOutcome> {
    let draws = attack.draws(protocol)?;
    let w = 1.0 / draws.len() as f64;
    let target = attack.target(x)?;
    let mut output = OutputDistribution::default();
    let mut acc: BTreeMap<(usize, String, usize), MixtureAccumulator> = BTreeMap::new();
    for d in &draws {
        let (steps, out) = attack.execute(protocol, x, d, Detail::SERVERS)?;
        output.p0 += w * out.p0;
        output.p1 += w * out.p1;
        for (k, s) in steps.iter().enumerate() {
            for (j, rho) in &s.server_states {
                acc.entry((k, s.label.clone(), *j))
                    .or_insert_with(|| MixtureAccumulator::new(rho.layout().clone()))
                    .add(w, rho)?;
            }
        }
    }
    let success_probability = output.probability(target);
    Ok(AttackOutcome {
        attack: attack.name(),
        protocol: protocol.name(),
        database: x.clone(),
        target,
        output,
        success_probability,
        success: success_probability >= 1.0 - AUDIT_TOL,
        server_states: acc
            .into_iter()
            .map(|((_, step, server), a)| ServerObservation { step, server, state: a.finish() })
            .collect(),
    })
}

pub fn parity_attack(protocol: &Protocol, x: &Database) -> Result<AttackOutcome> {
    run_attack(&ParityAttack, protocol, x)
}

/// Compares every server's state under the attack with the honest protocol
/// at index 1, mixed over the same draw policy, at every step where the
/// server holds data in either run.
pub fn verify_undetectability(protocol: &Protocol, attack: &dyn Attack, databases: &[Database]) -> Result<AuditReport> {
    let honest_draws = protocol.draws(protocol.default_policy())?;
    let mut worst = Worst::default();
    let mut cases = 0;
    for x in databases {
        let honest = server_mixtures(protocol, x, 1, &honest_draws)?;
        let outcome = run_attack(attack, protocol, x)?;
        cases += honest_draws.len() + attack.draws(protocol)?.len();
        let mut seen = std::collections::BTreeSet::new();
        for obs in &outcome.server_states {
            let key = (obs.step.clone(), obs.server);
            seen.insert(key.clone());
            let d = match honest.get(&key) {
                Some(h) if h.layout() == obs.state.layout() => trace_distance(h, &obs.state)?,
                _ => 1.0,
            };
            worst.see(d, || Witness {
                x: Some(x.clone()),
                server: Some(obs.server),
                step: Some(obs.step.clone()),
                note: format!("server state under {} differs from the honest run", attack.name()),
                ..Witness::default()
            });
        }
        for (step, server) in honest.keys().filter(|k| !seen.contains(*k)) {
            worst.see(1.0, || Witness {
                x: Some(x.clone()),
                server: Some(*server),
                step: Some(step.clone()),
                note: "server holds data in the honest run but not under attack".into(),
                ..Witness::default()
            });
        }
    }
    let grid = GridSummary {
        n: protocol.n(),
        indices: vec![1],
        databases: databases.len(),
        draws: format!("{} ({} draws)", protocol.default_policy(), honest_draws.len()),
        cases,
    };
    Ok(AuditReport::finish(
        AuditKind::Undetectability,
        format!("{} vs {}", protocol.name(), attack.name()),
        grid,
        worst.worst,
        worst.witness,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub attack: String,
    pub protocol: String,
    /// `I(output; x)` in bits.
    pub mutual_information_bits: f64,
    /// `I(output; target(x))` in bits.
    pub target_information_bits: f64,
    /// Success probability averaged over the prior.
    pub success_probability: f64,
}

fn mutual_information(joint: &BTreeMap<(String, bool), f64>) -> f64 {
    let mut px: BTreeMap<&str, f64> = BTreeMap::new();
    let mut py: BTreeMap<bool, f64> = BTreeMap::new();
    for ((x, y), p) in joint {
        *px.entry(x).or_default() += p;
        *py.entry(*y).or_default() += p;
    }
    joint
        .iter()
        .filter(|(_, p)| **p > 0.0)
        .map(|((x, y), p)| p * (p / (px[x.as_str()] * py[y])).log2())
        .sum::<f64>()
        .max(0.0)
}

/// Exact mutual information between the attack's output and the database,
/// and between the output and the attack's target bit, under `prior`
/// (uniform over all `n`-bit databases when `None`).
pub fn leakage_report(attack: &dyn Attack, protocol: &Protocol, prior: Option<&[(Database, f64)]>) -> Result<LeakageReport> {
    let owned: Vec<(Database, f64)>;
    let prior = match prior {
        Some(p) => p,
        None => {
            let n = protocol.n();
            let w = 1.0 / (1u64 << n) as f64;
            owned = Database::all(n).map(|x| (x, w)).collect();
            &owned
        }
    };
    let total: f64 = prior.iter().map(|(_, p)| p).sum();
    if prior.is_empty() || prior.iter().any(|(_, p)| *p < 0.0) || (total - 1.0).abs() > AUDIT_TOL {
        return Err(Error::InvalidMixture("prior must be nonnegative and sum to 1".into()));
    }
    let mut by_x = BTreeMap::new();
    let mut by_target = BTreeMap::new();
    let mut success = 0.0;
    for (x, p) in prior {
        let o = run_attack(attack, protocol, x)?;
        for y in [false, true] {
            *by_x.entry((x.to_string(), y)).or_insert(0.0) += p * o.output.probability(y);
            *by_target.entry((o.target.to_string(), y)).or_insert(0.0) += p * o.output.probability(y);
        }
        success += p * o.success_probability;
    }
    // exact zeros should print as zero
    let clean = |v: f64| if v.abs() < 1e-12 { 0.0 } else { v };
    Ok(LeakageReport {
        attack: attack.name(),
        protocol: protocol.name(),
        mutual_information_bits: clean(mutual_information(&by_x)),
        target_information_bits: clean(mutual_information(&by_target)),
        success_probability: success,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn db(s: &str) -> Database {
        s.parse().unwrap()
    }

    fn proto(name: &str, n: usize) -> Protocol {
        Protocol::from_name(name, n).unwrap()
    }

    /// Parity attack that additionally hands the index register to server 1.
    #[derive(Debug)]
    struct IndexToServer;

    impl Attack for IndexToServer {
        fn name(&self) -> String {
            "index-in-clear".into()
        }
        fn target(&self, x: &Database) -> Result<bool> {
            ParityAttack.target(x)
        }
        fn execute(&self, p: &Protocol, x: &Database, d: &UserDraw, detail: Detail) -> Result<(Vec<Step>, OutputDistribution)> {
            let oracle = CleanQueryOracle::new(p.clone(), d.clone())?;
            let mut e = oracle.run_engine(&ParityAttack::input(&oracle)?, x, detail)?;
            e.send(1, &[INDEX.to_string()])?;
            e.give_back(1, &[INDEX.to_string()])?;
            e.measure_output(INDEX)
        }
    }

    #[test]
    fn index_width_values() {
        assert_eq!([1, 2, 3, 4, 5, 8, 9].map(index_width), [1, 1, 2, 2, 3, 3, 4]);
    }

    #[test]
    fn clean_query_basis_and_superposition() {
        for name in ["trivial1", "subset2", "bell2"] {
            let p = proto(name, 2);
            for d in p.draws(p.default_policy()).unwrap() {
                let o = CleanQueryOracle::new(p.clone(), d).unwrap();
                let out = o.query(&o.basis_input(2, false).unwrap(), &db("01")).unwrap();
                assert!(out.equal_up_to_global_phase(&o.basis_input(2, true).unwrap(), 1e-12), "{name}");
                // x = 11: both branches write 1 and the work registers clear
                let layout = o.input_layout();
                let sup = SparseState::from_terms(
                    layout.clone(),
                    [
                        (BitString::from_uint(0b00, 2), Complex64::new(FRAC_1_SQRT_2, 0.0)),
                        (BitString::from_uint(0b10, 2), Complex64::new(FRAC_1_SQRT_2, 0.0)),
                    ],
                )
                .unwrap();
                let out = o.query(&sup, &db("11")).unwrap();
                assert!((out.amplitude(&BitString::from_uint(0b01, 2)).norm() - FRAC_1_SQRT_2).abs() < 1e-12);
                assert!((out.amplitude(&BitString::from_uint(0b11, 2)).norm() - FRAC_1_SQRT_2).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn clean_query_phase_kickback() {
        for name in ["trivial1", "bell2"] {
            let p = proto(name, 2);
            let d = p.draws(p.default_policy()).unwrap().pop().unwrap();
            let o = CleanQueryOracle::new(p, d).unwrap();
            let input = ParityAttack::input(&o).unwrap();
            let out = o.query(&input, &db("10")).unwrap();
            // (−1)^{x_1}|1⟩ + (−1)^{x_2}|2⟩, target untouched
            let want = input.apply_phase_oracle(INDEX, |z| z.is_zero()).unwrap();
            assert!(out.equal_up_to_global_phase(&want, 1e-12), "{name}");
        }
    }

    #[test]
    fn subset_phase_depends_on_the_mask_of_the_second_server() {
        let p = proto("subset2", 2);
        let mut failures = 0;
        for d in p.draws(p.default_policy()).unwrap() {
            let second = d.masks[1].get(0);
            let o = CleanQueryOracle::new(p.clone(), d).unwrap();
            let r = o.query(&ParityAttack::input(&o).unwrap(), &db("10"));
            assert_eq!(r.is_err(), second);
            failures += r.is_err() as usize;
        }
        assert_eq!(failures, 8);
    }

    #[test]
    fn parity_attack_succeeds_and_is_undetectable() {
        for name in ["trivial1", "bell2"] {
            let p = proto(name, 2);
            let xs: Vec<Database> = Database::all(2).collect();
            for x in &xs {
                let o = parity_attack(&p, x).unwrap();
                assert!(o.success, "{name} {x}: {o:?}");
                assert_eq!(o.target, x.bit(1).unwrap() ^ x.bit(2).unwrap());
            }
            let r = verify_undetectability(&p, &ParityAttack, &xs).unwrap();
            assert!(r.passed, "{name}: {r:?}");
        }
    }

    #[test]
    fn subset_attack_is_undetectable_but_partial() {
        let p = proto("subset2", 2);
        let xs: Vec<Database> = Database::all(2).collect();
        assert!(verify_undetectability(&p, &ParityAttack, &xs).unwrap().passed);
        for x in &xs {
            let o = parity_attack(&p, x).unwrap();
            let want = if o.target { 0.5 } else { 1.0 };
            assert!((o.success_probability - want).abs() < 1e-12, "{x}: {}", o.success_probability);
        }
    }

    #[test]
    fn leaking_fixture_is_detected() {
        let p = proto("trivial1", 2);
        let xs: Vec<Database> = Database::all(2).collect();
        let r = verify_undetectability(&p, &IndexToServer, &xs).unwrap();
        assert!(!r.passed);
        assert_eq!(r.witness.unwrap().step.as_deref(), Some("send:1"));
    }

    #[test]
    fn countermeasure_defeats_the_attack() {
        for name in ["trivial1", "bell2", "subset2"] {
            let p = apply_countermeasure(&proto(name, 2));
            for x in Database::all(2) {
                let o = parity_attack(&p, &x).unwrap();
                assert!((o.success_probability - 0.5).abs() < 1e-12, "{name} {x}");
            }
            let l = leakage_report(&ParityAttack, &p, None).unwrap();
            assert_eq!(l.target_information_bits, 0.0, "{name}");
        }
        // basis-state messages are unaffected
        let c = apply_countermeasure(&proto("subset2-classical", 2));
        for x in Database::all(2) {
            assert!(audit_ok(&c, &x));
        }
    }

    #[test]
    fn countermeasure_also_breaks_honest_recovery() {
        for name in ["trivial1", "subset2", "bell2"] {
            let p = apply_countermeasure(&proto(name, 2));
            assert!(!Database::all(2).all(|x| audit_ok(&p, &x)), "{name}");
        }
    }

    fn audit_ok(p: &Protocol, x: &Database) -> bool {
        p.draws(p.default_policy()).unwrap().iter().all(|d| {
            let t = p.run(x, 1, d, Detail::OUTPUT).unwrap();
            t.output_bit() == Some(x.bit(1).unwrap())
        })
    }

    #[test]
    fn leakage_values() {
        let honest = leakage_report(&HonestBaseline { index: 1 }, &proto("subset2", 2), None).unwrap();
        assert!((honest.mutual_information_bits - 1.0).abs() < 1e-12);
        assert!((honest.target_information_bits - 1.0).abs() < 1e-12);
        let attack = leakage_report(&ParityAttack, &proto("trivial1", 2), None).unwrap();
        assert!((attack.mutual_information_bits - 1.0).abs() < 1e-12);
        assert!((attack.target_information_bits - 1.0).abs() < 1e-12);
        assert!((attack.success_probability - 1.0).abs() < 1e-12);
    }

    #[test]
    fn classical_protocols_have_no_clean_query() {
        assert!(CleanQueryOracle::new(proto("subset2-classical", 2), UserDraw::default()).is_err());
        assert!(parity_attack(&proto("trivial1", 3), &db("101")).is_err());
    }
}
