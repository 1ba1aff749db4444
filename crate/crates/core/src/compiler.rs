//! Compilation of a linear-reconstruction PIR scheme into an honest-user
//! quantum SPIR protocol that needs no shared randomness between servers.
//!
//! The user holds a one-qubit `sign` register and prepares, for server `j`, a
//! register `server{j}` of `t + a` qubits holding a query and a mask:
//!
//! ```text
//! (1/√2)|0⟩|q_1, r_1⟩…|q_k, r_k⟩ + (1/√2)|1⟩|q_1, r'_1⟩…|q_k, r'_k⟩,   r'_j = r_j ⊕ b_j
//! ```
//!
//! Server `j` applies `|q, r⟩ ↦ (−1)^{answer(q, x)·r}|q, r⟩`. Up to a global
//! phase the two branches then differ by `(−1)^{⊕_j a_j·b_j} = (−1)^{x_i}`.
//! The user clears the server registers with sign-controlled XORs, applies a
//! Hadamard to `sign`, and reads `x_i` with certainty.

use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::Arc;

use num_complex::Complex64;

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::pir::{check_database, Database, PirScheme, QueryPlan};
use crate::protocol::{Detail, Protocol};
use crate::quantum::{hadamard_image, OutcomeSource, RegisterLayout, SparseState, NORM_TOL};
use crate::transcript::{Transcript, UserDraw};

pub const SIGN: &str = "sign";

pub fn server_register(j: usize) -> String {
    format!("server{j}")
}

#[derive(Debug, Clone)]
pub struct CompiledProtocol {
    scheme: Arc<dyn PirScheme>,
    layout: RegisterLayout,
}

impl CompiledProtocol {
    pub fn new(scheme: Arc<dyn PirScheme>) -> Self {
        let s = scheme.shape();
        let mut regs = vec![(SIGN.to_string(), 1)];
        regs.extend((1..=s.k).map(|j| (server_register(j), s.t + s.a)));
        let layout = RegisterLayout::new(regs).expect("register names are distinct");
        CompiledProtocol { scheme, layout }
    }

    pub fn scheme(&self) -> &Arc<dyn PirScheme> {
        &self.scheme
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn servers(&self) -> usize {
        self.scheme.shape().k
    }

    /// Quantum communication `2k(t + a)`.
    pub fn qubit_count(&self) -> usize {
        2 * self.scheme.comm_cost()
    }

    fn check_masks(&self, masks: &[BitString]) -> Result<()> {
        let s = self.scheme.shape();
        if masks.len() != s.k {
            return Err(Error::LengthMismatch(format!("{} masks for {} servers", masks.len(), s.k)));
        }
        if let Some(m) = masks.iter().find(|m| m.len() != s.a) {
            return Err(Error::LengthMismatch(format!("mask {m} has {} bits, expected {}", m.len(), s.a)));
        }
        Ok(())
    }

    /// `r'_j = r_j ⊕ b_j`.
    pub fn shifted_masks(&self, plan: &QueryPlan, masks: &[BitString]) -> Result<Vec<BitString>> {
        self.check_masks(masks)?;
        Ok(masks.iter().zip(&plan.reconstruction).map(|(r, b)| r.xor(b)).collect())
    }

    /// Register contents `(q_j, r_j)` for sign 0 or `(q_j, r'_j)` for sign 1.
    pub(crate) fn register_contents(&self, plan: &QueryPlan, masks: &[BitString], sign: bool) -> Result<Vec<BitString>> {
        let shifted;
        let chosen = if sign {
            shifted = self.shifted_masks(plan, masks)?;
            &shifted
        } else {
            self.check_masks(masks)?;
            masks
        };
        Ok(plan.queries.iter().zip(chosen).map(|(q, r)| q.concat(r)).collect())
    }

    pub fn build_query_state(&self, plan: &QueryPlan, masks: &[BitString]) -> Result<SparseState> {
        if plan.reconstruction.iter().all(BitString::is_zero) {
            return Err(Error::DegeneratePlan);
        }
        let branch = |s: bool| -> Result<BitString> {
            let mut parts = vec![BitString::from_bits([s])];
            parts.extend(self.register_contents(plan, masks, s)?);
            self.layout.assemble(&parts)
        };
        let amp = Complex64::new(FRAC_1_SQRT_2, 0.0);
        SparseState::from_terms(self.layout.clone(), [(branch(false)?, amp), (branch(true)?, amp)])
    }

    /// Server `j` (1-based) applies `|q, r⟩ ↦ (−1)^{answer(q, x)·r}|q, r⟩`.
    pub fn server_phase(&self, state: &SparseState, j: usize, x: &Database) -> Result<SparseState> {
        let shape = self.scheme.shape();
        check_database(x, self.scheme.n())?;
        let reg = server_register(j);
        let range = state.layout().range(&reg)?;
        // answers depend on the query alone; compute each distinct one once
        // (a state holds few distinct queries, so a list beats a map)
        let mut answers: Vec<(BitString, BitString)> = Vec::new();
        for b in state.support() {
            let q = b.slice(range.start, shape.t);
            if !answers.iter().any(|(p, _)| *p == q) {
                let a = self.scheme.answer(&q, x)?;
                answers.push((q, a));
            }
        }
        state.apply_phase_oracle(&reg, |z| {
            let q = z.slice(0, shape.t);
            let a = &answers.iter().find(|(p, _)| *p == q).expect("every query was answered").1;
            a.dot(&z.slice(shape.t, shape.a))
        })
    }

    /// Sign-controlled XOR of the register contents, returning every server
    /// register to zero on both branches.
    pub fn uncompute(&self, state: &SparseState, plan: &QueryPlan, masks: &[BitString]) -> Result<SparseState> {
        let zero = self.register_contents(plan, masks, false)?;
        let one = self.register_contents(plan, masks, true)?;
        let mut s = state.clone();
        for j in 1..=self.servers() {
            s = s.apply_controlled_xor(&[SIGN], &server_register(j), |c| {
                if c[0].get(0) {
                    one[j - 1].clone()
                } else {
                    zero[j - 1].clone()
                }
            })?;
        }
        Ok(s)
    }

    /// Clears the server registers, applies a Hadamard to `sign` and measures
    /// it. Fails unless one outcome has probability 1.
    pub fn user_recover(&self, state: &SparseState, plan: &QueryPlan, masks: &[BitString]) -> Result<(bool, SparseState)> {
        let cleared = self.uncompute(state, plan, masks)?;
        let turned = cleared.apply_local_map(SIGN, hadamard_image)?;
        let branches = turned.measure_register(SIGN, OutcomeSource::Enumerate)?;
        let best = branches
            .into_iter()
            .max_by(|a, b| a.probability.total_cmp(&b.probability))
            .expect("measurement has at least one outcome");
        if best.probability < 1.0 - NORM_TOL {
            return Err(Error::NonUnitRecovery(best.probability));
        }
        Ok((best.outcome.get(0), best.state))
    }

    /// Full simulated run with every step recorded.
    pub fn run_protocol(&self, x: &Database, i: usize, r: u64, masks: &[BitString]) -> Result<Transcript> {
        let draw = UserDraw { randomness: r, masks: masks.to_vec() };
        Protocol::compiled(self.scheme.clone()).run(x, i, &draw, Detail::FULL)
    }
}
