//! Protocol definitions and the step-by-step execution engine that produces
//! transcripts.
//!
//! Three families share one engine: classical linear PIR with messages
//! encoded as basis states, compiled QSPIR, and the Bell scheme. Every run
//! follows the same skeleton: the user prepares, sends one message to each
//! server, each server acts (after measuring its input when the
//! countermeasure is on), returns its message, and the user post-processes
//! and measures the output register. A step is recorded after every custody
//! change and every local operation.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bell::{self, BellScheme};
use crate::bits::BitString;
use crate::compiler::{self, CompiledProtocol};
use crate::error::{Error, Result};
use crate::pir::{check_database, check_index, reconstruct, scheme_by_name, Database, PirScheme, QueryPlan};
use crate::quantum::{
    hadamard_image, partial_trace_onto, DensityMatrix, MixtureAccumulator, OutcomeSource, RegisterLayout, SparseState,
};
use crate::transcript::{
    Branch, CommUnit, Counters, OutputDistribution, Party, Step, Transcript, UserDraw, UserKnowledge,
    TRANSCRIPT_SCHEMA,
};

/// Mask-combination count up to which the default draw policy is exhaustive.
pub const EXHAUSTIVE_MASK_LIMIT: u64 = 4096;

/// Offsets used by the default balanced mask grid.
pub const DEFAULT_OFFSETS: u64 = 4;

/// Which parts of each step a run records. Outputs and counters are always
/// recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Detail {
    pub branches: bool,
    pub user: bool,
    pub servers: bool,
    /// Who holds each register; left empty when off.
    pub custody: bool,
}

impl Detail {
    pub const FULL: Detail = Detail { branches: true, user: true, servers: true, custody: true };
    pub const OUTPUT: Detail = Detail { branches: false, user: false, servers: false, custody: true };
    pub const USER: Detail = Detail { branches: false, user: true, servers: false, custody: true };
    pub const SERVERS: Detail = Detail { branches: false, user: false, servers: true, custody: false };
}

/// How the user's classical randomness is enumerated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DrawPolicy {
    /// Every scheme randomness value with every mask tuple.
    Exhaustive,
    /// Every scheme randomness value; masks `(m, m ⊕ c, …, m ⊕ c)` for all
    /// `m` and the first `offsets` values of `c`. Each server's own mask is
    /// uniform, so per-server mixtures are exact.
    Balanced { offsets: u64 },
    /// `samples` independent draws from a seeded generator.
    Seeded { seed: u64, samples: usize },
}

impl fmt::Display for DrawPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DrawPolicy::Exhaustive => f.write_str("exhaustive"),
            DrawPolicy::Balanced { offsets } => write!(f, "balanced({offsets})"),
            DrawPolicy::Seeded { seed, samples } => write!(f, "seeded({seed}, {samples})"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum ProtocolKind {
    /// Classical base scheme; messages are basis states.
    Classical(Arc<dyn PirScheme>),
    Compiled(CompiledProtocol),
    Bell(BellScheme),
}

/// A runnable protocol, optionally with servers measuring what they receive.
#[derive(Debug, Clone)]
pub struct Protocol {
    kind: ProtocolKind,
    countermeasure: bool,
}

pub const COUNTERMEASURE_SUFFIX: &str = "+countermeasure";

impl Protocol {
    pub fn classical(scheme: Arc<dyn PirScheme>) -> Self {
        Protocol { kind: ProtocolKind::Classical(scheme), countermeasure: false }
    }

    pub fn compiled(scheme: Arc<dyn PirScheme>) -> Self {
        Protocol { kind: ProtocolKind::Compiled(CompiledProtocol::new(scheme)), countermeasure: false }
    }

    pub fn bell(n: usize) -> Result<Self> {
        Ok(Protocol { kind: ProtocolKind::Bell(BellScheme::new(n)?), countermeasure: false })
    }

    /// Parses `bell2`, `qspir(X)`, bare `X` (compiled), or `X-classical`, each
    /// optionally followed by `+countermeasure`.
    pub fn from_name(name: &str, n: usize) -> Result<Self> {
        let (base, cm) = match name.strip_suffix(COUNTERMEASURE_SUFFIX) {
            Some(b) => (b, true),
            None => (name, false),
        };
        let p = if base == "bell2" {
            Protocol::bell(n)?
        } else if let Some(s) = base.strip_prefix("qspir(").and_then(|s| s.strip_suffix(')')) {
            Protocol::compiled(scheme_by_name(s, n)?)
        } else if let Some(s) = base.strip_suffix("-classical") {
            Protocol::classical(scheme_by_name(s, n)?)
        } else {
            Protocol::compiled(scheme_by_name(base, n)?)
        };
        Ok(p.with_countermeasure(cm))
    }

    pub fn with_countermeasure(mut self, on: bool) -> Self {
        self.countermeasure = on;
        self
    }

    pub fn kind(&self) -> &ProtocolKind {
        &self.kind
    }

    pub fn countermeasure(&self) -> bool {
        self.countermeasure
    }

    pub fn name(&self) -> String {
        let base = match &self.kind {
            ProtocolKind::Classical(s) => format!("{}-classical", s.name()),
            ProtocolKind::Compiled(c) => format!("qspir({})", c.scheme().name()),
            ProtocolKind::Bell(_) => "bell2".to_string(),
        };
        if self.countermeasure {
            base + COUNTERMEASURE_SUFFIX
        } else {
            base
        }
    }

    pub fn n(&self) -> usize {
        match &self.kind {
            ProtocolKind::Classical(s) => s.n(),
            ProtocolKind::Compiled(c) => c.scheme().n(),
            ProtocolKind::Bell(b) => b.n(),
        }
    }

    pub fn servers(&self) -> usize {
        match &self.kind {
            ProtocolKind::Classical(s) => s.shape().k,
            ProtocolKind::Compiled(c) => c.servers(),
            ProtocolKind::Bell(_) => 2,
        }
    }

    pub fn unit(&self) -> CommUnit {
        match self.kind {
            ProtocolKind::Classical(_) => CommUnit::Bits,
            _ => CommUnit::Qubits,
        }
    }

    pub fn is_quantum(&self) -> bool {
        self.unit() == CommUnit::Qubits
    }

    /// Base scheme, when there is one.
    pub fn scheme(&self) -> Option<&Arc<dyn PirScheme>> {
        match &self.kind {
            ProtocolKind::Classical(s) => Some(s),
            ProtocolKind::Compiled(c) => Some(c.scheme()),
            ProtocolKind::Bell(_) => None,
        }
    }

    /// Closed-form communication: `k(t + a)` bits, `2k(t + a)` qubits, or
    /// `2n` qubits with `n` rounded up to even.
    pub fn closed_form_comm(&self) -> usize {
        match &self.kind {
            ProtocolKind::Classical(s) => s.comm_cost(),
            ProtocolKind::Compiled(c) => c.qubit_count(),
            ProtocolKind::Bell(b) => b.comm_cost(),
        }
    }

    pub fn layout(&self) -> RegisterLayout {
        match &self.kind {
            ProtocolKind::Classical(s) => classical_layout(s.as_ref()),
            ProtocolKind::Compiled(c) => c.layout().clone(),
            ProtocolKind::Bell(b) => b.layout().clone(),
        }
    }

    /// Registers sent to server `j`.
    pub fn message_registers(&self, j: usize) -> Vec<String> {
        match &self.kind {
            ProtocolKind::Classical(_) => vec![format!("q{j}")],
            ProtocolKind::Compiled(_) => vec![compiler::server_register(j)],
            ProtocolKind::Bell(_) => vec![BellScheme::server_register(j).to_string()],
        }
    }

    /// Registers server `j` sends back.
    pub fn returned_registers(&self, j: usize) -> Vec<String> {
        match &self.kind {
            ProtocolKind::Classical(_) => vec![format!("a{j}")],
            _ => self.message_registers(j),
        }
    }

    /// Registers server `j` holds before the protocol starts.
    pub fn server_owned_registers(&self, j: usize) -> Vec<String> {
        match &self.kind {
            ProtocolKind::Classical(_) => vec![format!("a{j}")],
            _ => Vec::new(),
        }
    }

    /// Server `j`'s operation on the registers it holds.
    pub(crate) fn server_act(&self, state: &SparseState, j: usize, x: &Database) -> Result<SparseState> {
        match &self.kind {
            ProtocolKind::Classical(s) => classical_answer(s.as_ref(), state, j, x),
            ProtocolKind::Compiled(c) => c.server_phase(state, j, x),
            ProtocolKind::Bell(b) => b.server_pauli(state, j, x),
        }
    }

    /// Number of mask tuples the compiled protocol has; 1 otherwise.
    pub fn mask_combinations(&self) -> u64 {
        match &self.kind {
            ProtocolKind::Compiled(c) => {
                let s = c.scheme().shape();
                1u64.checked_shl((s.a * s.k) as u32).unwrap_or(u64::MAX)
            }
            _ => 1,
        }
    }

    pub fn randomness_size(&self) -> u64 {
        self.scheme().map_or(1, |s| s.shape().randomness_size)
    }

    /// Exhaustive when the mask space is small, otherwise the balanced grid.
    pub fn default_policy(&self) -> DrawPolicy {
        if self.mask_combinations() <= EXHAUSTIVE_MASK_LIMIT {
            DrawPolicy::Exhaustive
        } else {
            DrawPolicy::Balanced { offsets: DEFAULT_OFFSETS }
        }
    }

    /// Number of offsets a balanced policy actually uses.
    pub fn offset_classes(&self, policy: DrawPolicy) -> usize {
        match (&self.kind, policy) {
            (ProtocolKind::Compiled(c), DrawPolicy::Balanced { offsets }) if c.servers() > 1 => {
                offsets.clamp(1, 1 << c.scheme().shape().a.min(20)) as usize
            }
            _ => 1,
        }
    }

    /// Mask tuples under a deterministic policy; `[[]]` when the protocol has
    /// no masks.
    pub fn mask_grid(&self, policy: DrawPolicy) -> Result<Vec<Vec<BitString>>> {
        let ProtocolKind::Compiled(c) = &self.kind else {
            return Ok(vec![Vec::new()]);
        };
        let s = c.scheme().shape();
        let per = 1u64 << s.a;
        match policy {
            DrawPolicy::Exhaustive => {
                let total = self.mask_combinations();
                if total > 1 << 20 {
                    return Err(Error::InvalidParameter(format!("{total} mask tuples are too many to enumerate")));
                }
                Ok((0..total)
                    .map(|v| {
                        (0..s.k).map(|j| BitString::from_uint((v >> ((s.k - 1 - j) * s.a)) & (per - 1), s.a)).collect()
                    })
                    .collect())
            }
            DrawPolicy::Balanced { offsets } => {
                if offsets == 0 {
                    return Err(Error::InvalidParameter("balanced grid needs at least one offset".into()));
                }
                let offsets = if s.k == 1 { 1 } else { offsets.min(per) };
                let mut out = Vec::with_capacity((per * offsets) as usize);
                for m in 0..per {
                    for c in 0..offsets {
                        let first = BitString::from_uint(m, s.a);
                        let rest = BitString::from_uint(m ^ c, s.a);
                        let mut tuple = vec![first];
                        tuple.extend((1..s.k).map(|_| rest.clone()));
                        out.push(tuple);
                    }
                }
                Ok(out)
            }
            DrawPolicy::Seeded { .. } => {
                Err(Error::InvalidParameter("seeded policies have no mask grid; use draws".into()))
            }
        }
    }

    /// All user draws under `policy`, scheme randomness outermost.
    pub fn draws(&self, policy: DrawPolicy) -> Result<Vec<UserDraw>> {
        let size = self.randomness_size();
        if let DrawPolicy::Seeded { seed, samples } = policy {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let widths: Vec<usize> = match &self.kind {
                ProtocolKind::Compiled(c) => vec![c.scheme().shape().a; c.servers()],
                _ => Vec::new(),
            };
            return Ok((0..samples)
                .map(|_| {
                    let randomness = rng.random_range(0..size);
                    let masks = widths.iter().map(|&w| BitString::from_bits((0..w).map(|_| rng.random()))).collect();
                    UserDraw { randomness, masks }
                })
                .collect());
        }
        let grid = self.mask_grid(policy)?;
        let mut out = Vec::with_capacity(grid.len() * size as usize);
        for r in 0..size {
            for masks in &grid {
                out.push(UserDraw { randomness: r, masks: masks.clone() });
            }
        }
        Ok(out)
    }

    /// The user's state before anything is sent.
    fn initial_state(&self, i: usize, draw: &UserDraw) -> Result<SparseState> {
        match &self.kind {
            ProtocolKind::Classical(s) => classical_start(s.as_ref(), &self.layout(), &s.gen_plan(i, draw.randomness)?),
            ProtocolKind::Compiled(c) => c.build_query_state(&c.scheme().gen_plan(i, draw.randomness)?, &draw.masks),
            ProtocolKind::Bell(b) => b.query_state(i),
        }
    }

    /// Runs the protocol for database `x`, index `i`, and one user draw.
    pub fn run(&self, x: &Database, i: usize, draw: &UserDraw, detail: Detail) -> Result<Transcript> {
        let n = self.n();
        check_index(i, n)?;
        check_database(x, n)?;
        let mut e = Engine::start(self, self.initial_state(i, draw)?, detail)?;
        self.server_rounds(&mut e, x)?;
        let (steps, output) = match &self.kind {
            ProtocolKind::Classical(s) => {
                let plan = s.gen_plan(i, draw.randomness)?;
                e.user_op("reconstruct", |st| {
                    let controls: Vec<String> = (1..=s.shape().k).map(|j| format!("a{j}")).collect();
                    let refs: Vec<&str> = controls.iter().map(String::as_str).collect();
                    st.apply_controlled_xor(&refs, "out", |c| {
                        let bit = reconstruct(&plan, c).expect("answer widths are fixed by the layout");
                        BitString::from_bits([bit])
                    })
                })?;
                e.measure_output("out")?
            }
            ProtocolKind::Compiled(c) => {
                let plan = c.scheme().gen_plan(i, draw.randomness)?;
                e.user_op("uncompute", |st| c.uncompute(st, &plan, &draw.masks))?;
                e.user_op("hadamard", |st| st.apply_local_map(compiler::SIGN, hadamard_image))?;
                e.measure_output(compiler::SIGN)?
            }
            ProtocolKind::Bell(b) => {
                e.user_op("uncompute", |st| b.uncompute(st, i))?;
                e.user_op("hadamard", |st| st.apply_local_map(bell::SIGN, hadamard_image))?;
                e.measure_output(bell::SIGN)?
            }
        };
        Ok(Transcript {
            schema: TRANSCRIPT_SCHEMA.to_string(),
            protocol: self.name(),
            n,
            database: x.clone(),
            knowledge: UserKnowledge { index: i, draw: draw.clone() },
            layout: self.layout(),
            unit: self.unit(),
            steps,
            output,
        })
    }

    /// The steps of [`run`](Self::run) up to the last return, with server
    /// states only. Servers hold nothing after that point.
    pub(crate) fn server_steps(&self, x: &Database, i: usize, draw: &UserDraw) -> Result<Vec<Step>> {
        let mut out = Vec::new();
        self.server_steps_batch(&[x], i, draw, |_, steps| out.extend_from_slice(steps))?;
        Ok(out)
    }

    /// Server-side steps for several databases sharing one index and draw.
    /// Everything before the first server action is simulated once and
    /// passed to `each` with no database position; the remaining steps
    /// follow for each database in turn.
    pub(crate) fn server_steps_batch(
        &self,
        xs: &[&Database],
        i: usize,
        draw: &UserDraw,
        mut each: impl FnMut(Option<usize>, &[Step]),
    ) -> Result<()> {
        check_index(i, self.n())?;
        for x in xs {
            check_database(x, self.n())?;
        }
        let mut e = Engine::start(self, self.initial_state(i, draw)?, Detail::SERVERS)?;
        self.server_sends(&mut e)?;
        each(None, &std::mem::take(&mut e.steps));
        for (t, x) in xs.iter().enumerate() {
            let mut f = e.clone();
            self.server_answers(&mut f, x)?;
            each(Some(t), &f.steps);
        }
        Ok(())
    }

    /// Sends, optional server measurement, server actions, and returns.
    pub(crate) fn server_rounds(&self, e: &mut Engine, x: &Database) -> Result<()> {
        self.server_sends(e)?;
        self.server_answers(e, x)
    }

    fn server_sends(&self, e: &mut Engine) -> Result<()> {
        let k = self.servers();
        for j in 1..=k {
            e.send(j, &self.message_registers(j))?;
        }
        if self.countermeasure {
            for j in 1..=k {
                e.dephase(j, &self.message_registers(j))?;
            }
        }
        Ok(())
    }

    fn server_answers(&self, e: &mut Engine, x: &Database) -> Result<()> {
        let k = self.servers();
        for j in 1..=k {
            e.server_op(j, |st| self.server_act(st, j, x))?;
        }
        for j in 1..=k {
            e.give_back(j, &self.returned_registers(j))?;
        }
        Ok(())
    }
}

fn classical_layout(s: &dyn PirScheme) -> RegisterLayout {
    let shape = s.shape();
    let mut regs = Vec::new();
    for j in 1..=shape.k {
        regs.push((format!("q{j}"), shape.t));
        regs.push((format!("a{j}"), shape.a));
    }
    regs.push(("out".to_string(), 1));
    RegisterLayout::new(regs).expect("register names are distinct")
}

fn classical_start(s: &dyn PirScheme, layout: &RegisterLayout, plan: &QueryPlan) -> Result<SparseState> {
    let a = s.shape().a;
    let mut parts = Vec::new();
    for q in &plan.queries {
        parts.push(q.clone());
        parts.push(BitString::zeros(a));
    }
    parts.push(BitString::zeros(1));
    SparseState::basis(layout.clone(), layout.assemble(&parts)?)
}

fn classical_answer(s: &dyn PirScheme, state: &SparseState, j: usize, x: &Database) -> Result<SparseState> {
    let q_reg = format!("q{j}");
    let range = state.layout().range(&q_reg)?;
    let mut answers = BTreeMap::new();
    for b in state.support() {
        let q = b.slice(range.start, range.len());
        if !answers.contains_key(&q) {
            let a = s.answer(&q, x)?;
            answers.insert(q, a);
        }
    }
    state.apply_controlled_xor(&[&q_reg], &format!("a{j}"), |c| answers[&c[0]].clone())
}

/// Records a run step by step.
#[derive(Clone)]
pub(crate) struct Engine {
    detail: Detail,
    layout: RegisterLayout,
    branches: Vec<(f64, SparseState)>,
    // shared with recorded steps; copied only when custody changes
    custody: Arc<BTreeMap<String, Party>>,
    counters: Counters,
    steps: Vec<Step>,
    // last recorded state of each server; an entry is dropped whenever an
    // operation may have changed that server's reduced state
    server_cache: BTreeMap<usize, DensityMatrix>,
    // cleared whenever custody changes
    party_layouts: Vec<(Party, Option<RegisterLayout>)>,
}

impl Engine {
    /// Starts from the user's prepared state; every register is the user's
    /// except those the protocol's servers own from the outset.
    pub(crate) fn start(protocol: &Protocol, state: SparseState, detail: Detail) -> Result<Self> {
        let mut custody: BTreeMap<String, Party> =
            state.layout().names().map(|r| (r.to_string(), Party::User)).collect();
        for j in 1..=protocol.servers() {
            for r in protocol.server_owned_registers(j) {
                custody.insert(r, Party::Server(j));
            }
        }
        Self::with_custody(state, custody, detail)
    }

    pub(crate) fn with_custody(state: SparseState, custody: BTreeMap<String, Party>, detail: Detail) -> Result<Self> {
        let layout = state.layout().clone();
        let mut e = Engine {
            detail,
            layout,
            branches: vec![(1.0, state)],
            custody: Arc::new(custody),
            counters: Counters::default(),
            steps: Vec::new(),
            server_cache: BTreeMap::new(),
            party_layouts: Vec::new(),
        };
        e.record("prepare", Party::User, Vec::new())?;
        Ok(e)
    }

    fn holdings(&self, party: Party) -> Vec<&str> {
        // layout order, not custody-map order
        self.layout.names().filter(|r| self.custody.get(*r) == Some(&party)).collect()
    }

    // registers held by `party` as a layout, or `None` if it holds nothing
    fn party_layout(&mut self, party: Party) -> Result<Option<RegisterLayout>> {
        if let Some((_, l)) = self.party_layouts.iter().find(|(p, _)| *p == party) {
            return Ok(l.clone());
        }
        let keep = self.holdings(party);
        let l = if keep.is_empty() { None } else { Some(self.layout.sub_layout(&keep)?) };
        self.party_layouts.push((party, l.clone()));
        Ok(l)
    }

    fn reduced(&self, kept: RegisterLayout) -> Result<DensityMatrix> {
        if let [(_, s)] = self.branches.as_slice() {
            return partial_trace_onto(s, kept);
        }
        let mut acc = MixtureAccumulator::new(kept.clone());
        for (p, s) in &self.branches {
            acc.add(*p, &partial_trace_onto(s, kept.clone())?)?;
        }
        Ok(acc.finish())
    }

    fn record(&mut self, label: &str, party: Party, moved: Vec<String>) -> Result<()> {
        let user_state = match self.detail.user {
            true => self.party_layout(Party::User)?.map(|l| self.reduced(l)).transpose()?,
            false => None,
        };
        let mut server_states = BTreeMap::new();
        if self.detail.servers {
            let holders: Vec<usize> = self
                .custody
                .values()
                .filter_map(|p| if let Party::Server(j) = p { Some(*j) } else { None })
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            for j in holders {
                let rho = match self.server_cache.get(&j) {
                    Some(rho) => rho.clone(),
                    None => {
                        let kept = self.party_layout(Party::Server(j))?.expect("holders hold registers");
                        let rho = self.reduced(kept)?;
                        self.server_cache.insert(j, rho.clone());
                        rho
                    }
                };
                server_states.insert(j, rho);
            }
        }
        let branches = if self.detail.branches {
            self.branches.iter().map(|(p, s)| Branch { probability: *p, state: s.clone() }).collect()
        } else {
            Vec::new()
        };
        self.steps.push(Step {
            label: label.to_string(),
            party,
            moved,
            custody: if self.detail.custody { self.custody.clone() } else { Arc::default() },
            branches,
            user_state,
            server_states,
            counters: self.counters,
        });
        Ok(())
    }

    fn width(&self, regs: &[String]) -> Result<usize> {
        regs.iter().map(|r| self.layout.width(r)).sum()
    }

    fn check_holder(&self, party: Party, regs: &[String]) -> Result<()> {
        for r in regs {
            match self.custody.get(r) {
                Some(p) if *p == party => {}
                Some(p) => {
                    return Err(Error::InvalidParameter(format!("register `{r}` is held by {p}, not {party}")))
                }
                None => return Err(Error::UnknownRegister(r.clone())),
            }
        }
        Ok(())
    }

    pub(crate) fn send(&mut self, j: usize, regs: &[String]) -> Result<()> {
        self.check_holder(Party::User, regs)?;
        for r in regs {
            Arc::make_mut(&mut self.custody).insert(r.clone(), Party::Server(j));
        }
        self.party_layouts.clear();
        self.counters.sent += self.width(regs)?;
        self.server_cache.remove(&j);
        self.record(&format!("send:{j}"), Party::User, regs.to_vec())
    }

    pub(crate) fn give_back(&mut self, j: usize, regs: &[String]) -> Result<()> {
        self.check_holder(Party::Server(j), regs)?;
        for r in regs {
            Arc::make_mut(&mut self.custody).insert(r.clone(), Party::User);
        }
        self.party_layouts.clear();
        self.counters.returned += self.width(regs)?;
        self.server_cache.remove(&j);
        self.record(&format!("return:{j}"), Party::Server(j), regs.to_vec())
    }

    fn map_branches(&mut self, f: impl Fn(&SparseState) -> Result<SparseState>) -> Result<()> {
        for (_, s) in &mut self.branches {
            *s = f(s)?;
        }
        Ok(())
    }

    pub(crate) fn user_op(&mut self, label: &str, f: impl Fn(&SparseState) -> Result<SparseState>) -> Result<()> {
        self.map_branches(f)?;
        self.server_cache.clear();
        self.record(label, Party::User, Vec::new())
    }

    pub(crate) fn server_op(&mut self, j: usize, f: impl Fn(&SparseState) -> Result<SparseState>) -> Result<()> {
        if self.holdings(Party::Server(j)).is_empty() {
            return Err(Error::InvalidParameter(format!("server {j} holds no registers")));
        }
        self.map_branches(f)?;
        // a server's own operation leaves the other servers' states alone
        self.server_cache.remove(&j);
        self.record(&format!("answer:{j}"), Party::Server(j), Vec::new())
    }

    /// Server `j` measures `regs` in the computational basis; every outcome
    /// becomes a separate weighted branch.
    pub(crate) fn dephase(&mut self, j: usize, regs: &[String]) -> Result<()> {
        self.check_holder(Party::Server(j), regs)?;
        for r in regs {
            let mut next = Vec::new();
            for (p, s) in &self.branches {
                for b in s.measure_register(r, OutcomeSource::Enumerate)? {
                    next.push((p * b.probability, b.state));
                }
            }
            self.branches = next;
        }
        self.server_cache.clear();
        self.record(&format!("measure:{j}"), Party::Server(j), Vec::new())
    }

    /// The user measures `reg`; returns the recorded steps and the output
    /// distribution.
    pub(crate) fn measure_output(mut self, reg: &str) -> Result<(Vec<Step>, OutputDistribution)> {
        self.check_holder(Party::User, &[reg.to_string()])?;
        let mut out = OutputDistribution::default();
        let mut next = Vec::new();
        for (p, s) in &self.branches {
            for b in s.measure_register(reg, OutcomeSource::Enumerate)? {
                let w = p * b.probability;
                if b.outcome.get(0) {
                    out.p1 += w;
                } else {
                    out.p0 += w;
                }
                next.push((w, b.state));
            }
        }
        self.branches = next;
        self.server_cache.clear();
        self.record("measure", Party::User, Vec::new())?;
        Ok((self.steps, out))
    }

    pub(crate) fn into_parts(self) -> (Vec<Step>, Vec<(f64, SparseState)>) {
        (self.steps, self.branches)
    }
}
