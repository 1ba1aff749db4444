//! Two-server QSPIR from Bell states and Pauli encodings.
//!
//! For an `n`-bit database (padded with one zero bit when `n` is odd) the user
//! prepares `m = n/2` Bell pairs plus a `sign` qubit:
//!
//! ```text
//! (1/√2)( |0⟩ B00^{⊗m} + |1⟩ B00^{⊗(j−1)} L B00^{⊗(m−j)} ),   j = ⌈i/2⌉
//! ```
//!
//! with `L = B01` for odd `i` and `L = B10` for even `i`. Server 1 receives
//! the left qubit of every pair (register `s1`), server 2 the right one
//! (register `s2`). Both apply `σ_{x_{2j−1} x_{2j}}` to their qubit of pair
//! `j`; on `B00` this is invisible, while `B01` picks up `(−1)^{x_{2j−1}}` and
//! `B10` picks up `(−1)^{x_{2j}}`.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::pir::{check_database, check_index, Database};
use crate::quantum::{hadamard_image, OutcomeSource, RegisterLayout, SparseState, NORM_TOL};

pub const SIGN: &str = "sign";
pub const LEFT: &str = "s1";
pub const RIGHT: &str = "s2";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BellLabel {
    B00,
    B01,
    B10,
}

impl BellLabel {
    /// The two-qubit pre-image `|ab⟩` with `B_ab = CNOT·(H ⊗ I)|ab⟩`.
    pub fn bits(self) -> (bool, bool) {
        match self {
            BellLabel::B00 => (false, false),
            BellLabel::B01 => (false, true),
            BellLabel::B10 => (true, false),
        }
    }

    /// Terms `(left, right, amplitude)`.
    pub fn terms(self) -> [(bool, bool, f64); 2] {
        let h = FRAC_1_SQRT_2;
        match self {
            BellLabel::B00 => [(false, false, h), (true, true, h)],
            BellLabel::B01 => [(false, true, h), (true, false, h)],
            BellLabel::B10 => [(false, false, h), (true, true, -h)],
        }
    }

    /// Pair label carried in the sign-1 branch for index `i`.
    pub fn for_index(i: usize) -> BellLabel {
        if i % 2 == 1 {
            BellLabel::B01
        } else {
            BellLabel::B10
        }
    }
}

/// `σ_pq`: `p` selects the phase flip, `q` the bit flip. `σ_11 = XZ`, whose
/// matrix is `[0, −1; 1, 0]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PauliLabel {
    pub p: bool,
    pub q: bool,
}

impl PauliLabel {
    pub fn new(p: bool, q: bool) -> Self {
        PauliLabel { p, q }
    }

    /// `σ_pq|z⟩ = (−1)^{p·z}|z ⊕ q⟩`.
    pub fn image(self, z: bool) -> (bool, f64) {
        let sign = if self.p && z { -1.0 } else { 1.0 };
        (z ^ self.q, sign)
    }

    /// Row-major real matrix.
    pub fn matrix(self) -> [[f64; 2]; 2] {
        let mut m = [[0.0; 2]; 2];
        for z in [false, true] {
            let (w, s) = self.image(z);
            m[w as usize][z as usize] = s;
        }
        m
    }
}

pub fn bell_comm_cost(n: usize) -> usize {
    2 * (n + n % 2)
}

/// Builds the query state for an even `n`.
pub fn build_bell_query(i: usize, n: usize) -> Result<SparseState> {
    if n % 2 == 1 {
        return Err(Error::InvalidParameter(format!("Bell scheme needs an even database size, got {n}; pad first")));
    }
    BellScheme::new(n)?.query_state(i)
}

#[derive(Debug, Clone)]
pub struct BellScheme {
    n: usize,
    pairs: usize,
    layout: RegisterLayout,
}

impl BellScheme {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("database size must be positive".into()));
        }
        let pairs = n.div_ceil(2);
        let layout = RegisterLayout::new([(SIGN, 1), (LEFT, pairs), (RIGHT, pairs)])?;
        Ok(BellScheme { n, pairs, layout })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn padded_n(&self) -> usize {
        2 * self.pairs
    }

    pub fn pairs(&self) -> usize {
        self.pairs
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn comm_cost(&self) -> usize {
        bell_comm_cost(self.n)
    }

    pub fn server_register(j: usize) -> &'static str {
        if j == 1 {
            LEFT
        } else {
            RIGHT
        }
    }

    /// 1-based slot and label for index `i`.
    pub fn slot(&self, i: usize) -> Result<(usize, BellLabel)> {
        check_index(i, self.n)?;
        Ok((i.div_ceil(2), BellLabel::for_index(i)))
    }

    /// Direct construction of the query state by expanding the pair product.
    pub fn query_state(&self, i: usize) -> Result<SparseState> {
        let (slot, label) = self.slot(i)?;
        let m = self.pairs;
        let mut terms = Vec::new();
        for sign in [false, true] {
            for choice in 0..1u64 << m {
                let mut left = BitString::zeros(m);
                let mut right = BitString::zeros(m);
                let mut amp = FRAC_1_SQRT_2;
                for p in 0..m {
                    let l = if sign && p + 1 == slot { label } else { BellLabel::B00 };
                    let (a, b, c) = l.terms()[((choice >> p) & 1) as usize];
                    left.set(p, a);
                    right.set(p, b);
                    amp *= c;
                }
                let basis = self.layout.assemble(&[BitString::from_bits([sign]), left, right])?;
                terms.push((basis, Complex64::new(amp, 0.0)));
            }
        }
        SparseState::from_terms(self.layout.clone(), terms)
    }

    /// Applies `σ_{x_{2j−1} x_{2j}}` to the server's qubit of every pair `j`.
    /// `register` names the server's register in `state`, so the same map
    /// serves honest runs and attacks.
    pub fn server_pauli_on(&self, state: &SparseState, register: &str, x: &Database) -> Result<SparseState> {
        check_database(x, self.n)?;
        let padded = x.padded(self.padded_n());
        let paulis: Vec<PauliLabel> =
            (0..self.pairs).map(|p| PauliLabel::new(padded.get(2 * p), padded.get(2 * p + 1))).collect();
        state.apply_local_map(register, |z| {
            let mut out = z.clone();
            let mut sign = 1.0;
            for (p, pauli) in paulis.iter().enumerate() {
                let (w, s) = pauli.image(z.get(p));
                out.set(p, w);
                sign *= s;
            }
            vec![(out, Complex64::new(sign, 0.0))]
        })
    }

    pub fn server_pauli(&self, state: &SparseState, server: usize, x: &Database) -> Result<SparseState> {
        if !(1..=2).contains(&server) {
            return Err(Error::InvalidParameter(format!("Bell scheme has servers 1 and 2, got {server}")));
        }
        self.server_pauli_on(state, Self::server_register(server), x)
    }

    /// Gate-route preparation on registers `left`/`right` that start at zero:
    /// the selected pair gets its pre-image bits XORed in, then `H` on every
    /// left qubit and a CNOT from each left qubit to its right partner.
    /// `select` maps control values to the non-`B00` pair, if any.
    pub(crate) fn prepare_pairs(
        &self,
        state: &SparseState,
        controls: &[&str],
        left: &str,
        right: &str,
        select: impl Fn(&[BitString]) -> Option<(usize, BellLabel)>,
    ) -> Result<SparseState> {
        let m = self.pairs;
        let pre = |c: &[BitString], want_left: bool| {
            let mut z = BitString::zeros(m);
            if let Some((slot, label)) = select(c) {
                let (a, b) = label.bits();
                z.set(slot - 1, if want_left { a } else { b });
            }
            z
        };
        let s = state.apply_controlled_xor(controls, left, |c| pre(c, true))?;
        let s = s.apply_controlled_xor(controls, right, |c| pre(c, false))?;
        let s = s.apply_local_map(left, hadamard_image)?;
        s.apply_controlled_xor(&[left], right, |c| c[0].clone())
    }

    /// Inverse of [`prepare_pairs`](Self::prepare_pairs).
    pub(crate) fn unprepare_pairs(
        &self,
        state: &SparseState,
        controls: &[&str],
        left: &str,
        right: &str,
        select: impl Fn(&[BitString]) -> Option<(usize, BellLabel)>,
    ) -> Result<SparseState> {
        let m = self.pairs;
        let s = state.apply_controlled_xor(&[left], right, |c| c[0].clone())?;
        let s = s.apply_local_map(left, hadamard_image)?;
        let pre = |c: &[BitString], want_left: bool| {
            let mut z = BitString::zeros(m);
            if let Some((slot, label)) = select(c) {
                let (a, b) = label.bits();
                z.set(slot - 1, if want_left { a } else { b });
            }
            z
        };
        let s = s.apply_controlled_xor(controls, right, |c| pre(c, false))?;
        s.apply_controlled_xor(controls, left, |c| pre(c, true))
    }

    /// Same query state built through gates, used to cross-check
    /// [`query_state`](Self::query_state).
    pub fn query_state_by_gates(&self, i: usize) -> Result<SparseState> {
        let (slot, label) = self.slot(i)?;
        let start = SparseState::zero(self.layout.clone()).apply_local_map(SIGN, hadamard_image)?;
        self.prepare_pairs(&start, &[SIGN], LEFT, RIGHT, |c| c[0].get(0).then_some((slot, label)))
    }

    /// Returns both pair registers to zero, conditioned on `sign`.
    pub fn uncompute(&self, state: &SparseState, i: usize) -> Result<SparseState> {
        let (slot, label) = self.slot(i)?;
        self.unprepare_pairs(state, &[SIGN], LEFT, RIGHT, |c| c[0].get(0).then_some((slot, label)))
    }

    /// Uncomputes, applies `H` to `sign` and measures it; the outcome must
    /// have probability 1.
    pub fn bell_recover(&self, state: &SparseState, i: usize) -> Result<bool> {
        let s = self.uncompute(state, i)?.apply_local_map(SIGN, hadamard_image)?;
        let best = s
            .measure_register(SIGN, OutcomeSource::Enumerate)?
            .into_iter()
            .max_by(|a, b| a.probability.total_cmp(&b.probability))
            .expect("measurement has at least one outcome");
        if best.probability < 1.0 - NORM_TOL {
            return Err(Error::NonUnitRecovery(best.probability));
        }
        Ok(best.outcome.get(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{partial_trace, trace_distance, DensityMatrix};

    const H: f64 = FRAC_1_SQRT_2;

    fn bs(s: &str) -> BitString {
        s.parse().unwrap()
    }

    fn db(s: &str) -> Database {
        s.parse().unwrap()
    }

    fn run(n: usize, x: &Database, i: usize) -> bool {
        let b = BellScheme::new(n).unwrap();
        let mut s = b.query_state(i).unwrap();
        s = b.server_pauli(&s, 1, x).unwrap();
        s = b.server_pauli(&s, 2, x).unwrap();
        b.bell_recover(&s, i).unwrap()
    }

    #[test]
    fn pauli_table() {
        assert_eq!(PauliLabel::new(false, false).matrix(), [[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(PauliLabel::new(false, true).matrix(), [[0.0, 1.0], [1.0, 0.0]]);
        assert_eq!(PauliLabel::new(true, false).matrix(), [[1.0, 0.0], [0.0, -1.0]]);
        assert_eq!(PauliLabel::new(true, true).matrix(), [[0.0, -1.0], [1.0, 0.0]]);
        assert_eq!(PauliLabel::new(false, true).image(false), (true, 1.0));
    }

    #[test]
    fn pauli_phase_algebra_on_dense_vectors() {
        // dense 2-qubit vectors indexed by 2·left + right
        let dense = |l: BellLabel| {
            let mut v = [0.0; 4];
            for (a, b, c) in l.terms() {
                v[2 * a as usize + b as usize] = c;
            }
            v
        };
        for p in [false, true] {
            for q in [false, true] {
                let m = PauliLabel::new(p, q).matrix();
                for (label, sign) in [
                    (BellLabel::B00, 1.0),
                    (BellLabel::B01, if p { -1.0 } else { 1.0 }),
                    (BellLabel::B10, if q { -1.0 } else { 1.0 }),
                ] {
                    let v = dense(label);
                    let mut w = [0.0; 4];
                    for r in 0..4 {
                        for c in 0..4 {
                            w[r] += m[r / 2][c / 2] * m[r % 2][c % 2] * v[c];
                        }
                    }
                    for k in 0..4 {
                        assert!((w[k] - sign * v[k]).abs() < 1e-15, "{label:?} p={p} q={q}");
                    }
                }
            }
        }
    }

    #[test]
    fn query_states_n2() {
        let b = BellScheme::new(2).unwrap();
        let s1 = b.query_state(1).unwrap();
        for (basis, a) in [("000", 0.5), ("011", 0.5), ("101", 0.5), ("110", 0.5)] {
            assert!((s1.amplitude(&bs(basis)).re - a).abs() < 1e-15);
        }
        let s2 = b.query_state(2).unwrap();
        for (basis, a) in [("000", 0.5), ("011", 0.5), ("100", 0.5), ("111", -0.5)] {
            assert!((s2.amplitude(&bs(basis)).re - a).abs() < 1e-15);
        }
    }

    #[test]
    fn query_state_n4_slot() {
        let b = BellScheme::new(4).unwrap();
        let s = b.query_state(3).unwrap();
        // sign 1 branch: slot 1 is B00, slot 2 is B01
        // sign 1, slot-1 pair as |00⟩, slot-2 pair as |01⟩
        assert!((s.amplitude(&bs("10001")).re - H * 0.5).abs() < 1e-15);
        assert_eq!(s.amplitude(&bs("10000")).norm(), 0.0);
        assert_eq!(s.len(), 8);
    }

    #[test]
    fn gate_route_matches_direct_construction() {
        for n in [2, 4, 6] {
            let b = BellScheme::new(n).unwrap();
            for i in 1..=n {
                let direct = b.query_state(i).unwrap();
                let gates = b.query_state_by_gates(i).unwrap();
                assert!(direct.equal_up_to_global_phase(&gates, 1e-12), "n={n} i={i}");
                assert!((direct.inner(&gates).re - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn odd_n_rejected_by_free_builder() {
        assert!(build_bell_query(1, 3).is_err());
        assert!(build_bell_query(3, 2).is_err());
        assert_eq!(BellScheme::new(7).unwrap().padded_n(), 8);
    }

    #[test]
    fn server_pauli_examples() {
        let b = BellScheme::new(2).unwrap();
        let s = b.query_state(1).unwrap();
        assert_eq!(b.server_pauli(&s, 1, &db("00")).unwrap(), s);
        // x = 10: both phase flips; the B01 branch turns negative
        let t = b.server_pauli(&b.server_pauli(&s, 1, &db("10")).unwrap(), 2, &db("10")).unwrap();
        assert!((t.amplitude(&bs("000")).re - 0.5).abs() < 1e-15);
        assert!((t.amplitude(&bs("101")).re + 0.5).abs() < 1e-15);
        let s = b.query_state(2).unwrap();
        let t = b.server_pauli(&b.server_pauli(&s, 1, &db("01")).unwrap(), 2, &db("01")).unwrap();
        assert!((t.amplitude(&bs("011")).re - 0.5).abs() < 1e-15);
        assert!((t.amplitude(&bs("111")).re - 0.5).abs() < 1e-15);
        assert!((t.amplitude(&bs("100")).re + 0.5).abs() < 1e-15);
    }

    #[test]
    fn recovery_examples_and_exhaustive_n6() {
        assert!(run(2, &db("10"), 1));
        assert!(!run(2, &db("10"), 2));
        let mut cases = 0;
        for x in Database::all(6) {
            for i in 1..=6 {
                assert_eq!(run(6, &x, i), x.bit(i).unwrap());
                cases += 1;
            }
        }
        assert_eq!(cases, 384);
        for x in Database::all(3) {
            for i in 1..=3 {
                assert_eq!(run(3, &x, i), x.bit(i).unwrap());
            }
        }
    }

    #[test]
    fn every_sent_qubit_is_maximally_mixed() {
        for n in [2, 4] {
            let b = BellScheme::new(n).unwrap();
            let half = DensityMatrix::maximally_mixed(RegisterLayout::new([(LEFT, 1)]).unwrap()).unwrap();
            for i in 1..=n {
                let s = b.query_state(i).unwrap();
                for reg in [LEFT, RIGHT] {
                    let rho = partial_trace(&s, &[reg]).unwrap();
                    for p in 0..b.pairs() {
                        // one-qubit marginal: entries whose other qubits agree
                        let mut m = [[Complex64::new(0.0, 0.0); 2]; 2];
                        for ((r, c), v) in rho.entries() {
                            let (mut r0, mut c0) = (r.clone(), c.clone());
                            r0.set(p, false);
                            c0.set(p, false);
                            if r0 == c0 {
                                m[r.get(p) as usize][c.get(p) as usize] += v;
                            }
                        }
                        let one = DensityMatrix::from_entries(
                            half.layout().clone(),
                            [
                                ((bs("0"), bs("0")), m[0][0]),
                                ((bs("0"), bs("1")), m[0][1]),
                                ((bs("1"), bs("0")), m[1][0]),
                                ((bs("1"), bs("1")), m[1][1]),
                            ],
                        )
                        .unwrap();
                        assert!(trace_distance(&one, &half).unwrap() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn comm_cost() {
        assert_eq!(bell_comm_cost(2), 4);
        assert_eq!(bell_comm_cost(6), 12);
        assert_eq!(bell_comm_cost(7), 16);
    }
}
