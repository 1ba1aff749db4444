//! Sparse pure states over named registers.
//!
//! Every state in this crate is a superposition of a handful of basis strings,
//! so amplitudes are kept in an ordered map keyed by the full basis string.
//! Operations never mutate; each returns a fresh state.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::layout::RegisterLayout;
use super::{C_ONE, C_ZERO, NORM_TOL, PRUNE_TOL, UNITARITY_CHECK_MAX_WIDTH};
use crate::bits::BitString;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "StateRecord", try_from = "StateRecord")]
pub struct SparseState {
    layout: RegisterLayout,
    terms: BTreeMap<BitString, Complex64>,
}

/// Where measurement outcomes come from.
pub enum OutcomeSource<'a> {
    /// Return every outcome with nonzero probability.
    Enumerate,
    /// Draw one outcome with Born probabilities.
    Sample(&'a mut dyn RngCore),
}

#[derive(Debug, Clone)]
pub struct MeasurementBranch {
    pub probability: f64,
    pub outcome: BitString,
    pub state: SparseState,
}

impl SparseState {
    /// Builds a state from explicit terms. Repeated basis strings are summed,
    /// negligible amplitudes are pruned, and the result must have unit norm.
    pub fn from_terms(layout: RegisterLayout, terms: impl IntoIterator<Item = (BitString, Complex64)>) -> Result<Self> {
        let s = Self::collect(layout, terms)?;
        let n = s.norm_sqr();
        if (n - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized(n));
        }
        Ok(s)
    }

    /// Like [`from_terms`](Self::from_terms) but rescales to unit norm.
    pub fn normalized(layout: RegisterLayout, terms: impl IntoIterator<Item = (BitString, Complex64)>) -> Result<Self> {
        let mut s = Self::collect(layout, terms)?;
        let n = s.norm_sqr();
        if n <= PRUNE_TOL {
            return Err(Error::NotNormalized(n));
        }
        let scale = 1.0 / n.sqrt();
        for a in s.terms.values_mut() {
            *a *= scale;
        }
        Ok(s)
    }

    fn collect(layout: RegisterLayout, terms: impl IntoIterator<Item = (BitString, Complex64)>) -> Result<Self> {
        let mut map: BTreeMap<BitString, Complex64> = BTreeMap::new();
        for (b, a) in terms {
            layout.check(&b)?;
            *map.entry(b).or_insert(C_ZERO) += a;
        }
        map.retain(|_, a| a.norm() >= PRUNE_TOL);
        Ok(SparseState { layout, terms: map })
    }

    pub fn basis(layout: RegisterLayout, bits: BitString) -> Result<Self> {
        Self::from_terms(layout, [(bits, C_ONE)])
    }

    /// All registers zero.
    pub fn zero(layout: RegisterLayout) -> Self {
        let w = layout.total_width();
        Self::basis(layout, BitString::zeros(w)).expect("zero basis state is valid")
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn terms(&self) -> impl Iterator<Item = (&BitString, &Complex64)> {
        self.terms.iter()
    }

    pub fn amplitude(&self, basis: &BitString) -> Complex64 {
        self.terms.get(basis).copied().unwrap_or(C_ZERO)
    }

    /// Number of stored terms.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.terms.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn support(&self) -> impl Iterator<Item = &BitString> {
        self.terms.keys()
    }

    pub fn scaled(&self, c: Complex64) -> SparseState {
        SparseState { layout: self.layout.clone(), terms: self.terms.iter().map(|(b, a)| (b.clone(), a * c)).collect() }
    }

    pub fn inner(&self, other: &SparseState) -> Complex64 {
        self.terms.iter().map(|(b, a)| a.conj() * other.amplitude(b)).sum()
    }

    fn rebuilt(&self, terms: impl IntoIterator<Item = (BitString, Complex64)>) -> SparseState {
        let out = Self::collect(self.layout.clone(), terms).expect("basis widths preserved");
        debug_assert!(
            (out.norm_sqr() - self.norm_sqr()).abs() < 1e-8,
            "norm changed from {} to {}",
            self.norm_sqr(),
            out.norm_sqr()
        );
        out
    }

    /// Tensor product; registers of `other` are appended after ours.
    pub fn tensor(&self, other: &SparseState) -> Result<SparseState> {
        let layout = self.layout.concat(&other.layout)?;
        let terms: Vec<_> = self
            .terms
            .iter()
            .flat_map(|(u, a)| other.terms.iter().map(move |(v, b)| (u.concat(v), a * b)))
            .collect();
        Ok(SparseState { layout, terms: terms.into_iter().collect() })
    }

    /// Multiplies every term by `(-1)^{phase_fn(target bits)}`.
    pub fn apply_phase_oracle(&self, target: &str, phase_fn: impl Fn(&BitString) -> bool) -> Result<SparseState> {
        let range = self.layout.range(target)?;
        let terms = self.terms.iter().map(|(b, a)| {
            let flip = phase_fn(&b.slice(range.start, range.len()));
            (b.clone(), if flip { -a } else { *a })
        });
        Ok(SparseState { layout: self.layout.clone(), terms: terms.collect() })
    }

    /// Applies the linear extension of `map` to the target register, where
    /// `map(z)` lists the terms of the image of basis state `z`. For targets up
    /// to 12 bits the map is checked to be unitary first.
    pub fn apply_local_map(
        &self,
        target: &str,
        map: impl Fn(&BitString) -> Vec<(BitString, Complex64)>,
    ) -> Result<SparseState> {
        let range = self.layout.range(target)?;
        if range.len() <= UNITARITY_CHECK_MAX_WIDTH {
            check_unitary(target, range.len(), &map)?;
        }
        let mut cache: HashMap<BitString, Vec<(BitString, Complex64)>> = HashMap::new();
        let mut out = Vec::new();
        for (b, a) in &self.terms {
            let z = b.slice(range.start, range.len());
            let image = cache.entry(z.clone()).or_insert_with(|| map(&z));
            for (w, c) in image.iter() {
                if w.len() != range.len() {
                    return Err(Error::WidthMismatch { expected: range.len(), got: w.len() });
                }
                let mut nb = b.clone();
                nb.splice(range.start, w);
                out.push((nb, a * c));
            }
        }
        Ok(self.rebuilt(out))
    }

    /// XORs `f(control values)` into the target register. The control
    /// registers must not include the target; the map is a permutation of
    /// basis strings and therefore always unitary.
    pub fn apply_controlled_xor(
        &self,
        controls: &[&str],
        target: &str,
        f: impl Fn(&[BitString]) -> BitString,
    ) -> Result<SparseState> {
        if controls.contains(&target) {
            return Err(Error::InvalidParameter(format!("register `{target}` cannot control itself")));
        }
        let ranges = controls.iter().map(|c| self.layout.range(c)).collect::<Result<Vec<_>>>()?;
        let t = self.layout.range(target)?;
        let mut out = BTreeMap::new();
        for (b, a) in &self.terms {
            let ctrl: Vec<BitString> = ranges.iter().map(|r| b.slice(r.start, r.len())).collect();
            let m = f(&ctrl);
            if m.len() != t.len() {
                return Err(Error::WidthMismatch { expected: t.len(), got: m.len() });
            }
            let mut nb = b.clone();
            nb.splice(t.start, &b.slice(t.start, t.len()).xor(&m));
            out.insert(nb, *a);
        }
        Ok(SparseState { layout: self.layout.clone(), terms: out })
    }

    /// Measures a register in the computational basis.
    pub fn measure_register(&self, target: &str, source: OutcomeSource<'_>) -> Result<Vec<MeasurementBranch>> {
        let range = self.layout.range(target)?;
        let mut groups: BTreeMap<BitString, Vec<(BitString, Complex64)>> = BTreeMap::new();
        for (b, a) in &self.terms {
            groups.entry(b.slice(range.start, range.len())).or_default().push((b.clone(), *a));
        }
        let total = self.norm_sqr();
        let mut branches = Vec::with_capacity(groups.len());
        for (outcome, terms) in groups {
            let p: f64 = terms.iter().map(|(_, a)| a.norm_sqr()).sum::<f64>() / total;
            let state = SparseState::normalized(self.layout.clone(), terms)?;
            branches.push(MeasurementBranch { probability: p, outcome, state });
        }
        match source {
            OutcomeSource::Enumerate => Ok(branches),
            OutcomeSource::Sample(rng) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let last = branches.len() - 1;
                for (k, br) in branches.iter().enumerate() {
                    acc += br.probability;
                    if u < acc || k == last {
                        return Ok(vec![br.clone()]);
                    }
                }
                unreachable!("branch list is nonempty")
            }
        }
    }

    /// True iff some unit complex `c` makes `‖self − c·other‖ ≤ tol`. The
    /// phase is read off the largest-magnitude shared term.
    pub fn equal_up_to_global_phase(&self, other: &SparseState, tol: f64) -> bool {
        if self.layout != other.layout {
            return false;
        }
        let anchor = self
            .terms
            .iter()
            .filter(|(b, _)| other.terms.contains_key(*b))
            .max_by(|x, y| x.1.norm().total_cmp(&y.1.norm()));
        let Some((b, a)) = anchor else {
            return self.is_empty() && other.is_empty();
        };
        let o = other.terms[b];
        let ratio = a / o;
        let c = ratio / ratio.norm();
        let mut diff = 0.0;
        for (k, v) in &self.terms {
            diff += (v - c * other.amplitude(k)).norm_sqr();
        }
        for (k, v) in &other.terms {
            if !self.terms.contains_key(k) {
                diff += v.norm_sqr();
            }
        }
        diff.sqrt() <= tol
    }

    /// Splits off registers that hold the same value in every term, returning
    /// that value and the state on the remaining registers.
    pub fn factor_out(&self, names: &[&str]) -> Result<(BitString, SparseState)> {
        let rest_names: Vec<&str> = self.layout.names().filter(|n| !names.contains(n)).collect();
        let rest_layout = self.layout.sub_layout(&rest_names)?;
        let gone_layout = self.layout.sub_layout(names)?;
        let split = |b: &BitString| -> Result<(BitString, BitString)> {
            let gone: Vec<BitString> =
                gone_layout.names().map(|n| self.layout.extract(b, n)).collect::<Result<_>>()?;
            let kept: Vec<BitString> =
                rest_layout.names().map(|n| self.layout.extract(b, n)).collect::<Result<_>>()?;
            Ok((BitString::concat_all(&gone), BitString::concat_all(&kept)))
        };
        let mut fixed: Option<BitString> = None;
        let mut terms = Vec::with_capacity(self.terms.len());
        for (b, a) in &self.terms {
            let (g, k) = split(b)?;
            match &fixed {
                None => fixed = Some(g),
                Some(f) if *f != g => {
                    return Err(Error::ResidualMismatch(format!(
                        "registers {names:?} hold both {f} and {g}; they are entangled with the rest"
                    )))
                }
                _ => {}
            }
            terms.push((k, *a));
        }
        let fixed = fixed.unwrap_or_else(|| BitString::zeros(gone_layout.total_width()));
        Ok((fixed, SparseState::from_terms(rest_layout, terms)?))
    }
}

/// JSON form: layout plus `bitstring → [re, im]`.
#[derive(Serialize, Deserialize)]
struct StateRecord {
    layout: RegisterLayout,
    terms: BTreeMap<BitString, (f64, f64)>,
}

impl From<SparseState> for StateRecord {
    fn from(s: SparseState) -> Self {
        StateRecord { layout: s.layout, terms: s.terms.into_iter().map(|(b, a)| (b, (a.re, a.im))).collect() }
    }
}

impl TryFrom<StateRecord> for SparseState {
    type Error = Error;
    fn try_from(r: StateRecord) -> Result<Self> {
        SparseState::from_terms(r.layout, r.terms.into_iter().map(|(b, (re, im))| (b, Complex64::new(re, im))))
    }
}

fn check_unitary(
    register: &str,
    width: usize,
    map: &impl Fn(&BitString) -> Vec<(BitString, Complex64)>,
) -> Result<()> {
    let dim = 1u64 << width;
    // columns of the map indexed by output string
    let mut by_output: HashMap<BitString, Vec<(u64, Complex64)>> = HashMap::new();
    for z in 0..dim {
        for (w, c) in map(&BitString::from_uint(z, width)) {
            if w.len() != width {
                return Err(Error::WidthMismatch { expected: width, got: w.len() });
            }
            by_output.entry(w).or_default().push((z, c));
        }
    }
    let mut gram: HashMap<(u64, u64), Complex64> = HashMap::new();
    for col in by_output.values() {
        for (a, ca) in col {
            for (b, cb) in col {
                *gram.entry((*a, *b)).or_insert(C_ZERO) += ca.conj() * cb;
            }
        }
    }
    let mut deviation: f64 = 0.0;
    for z in 0..dim {
        let d = gram.get(&(z, z)).copied().unwrap_or(C_ZERO);
        deviation = deviation.max((d - C_ONE).norm());
    }
    for (&(a, b), v) in &gram {
        if a != b {
            deviation = deviation.max(v.norm());
        }
    }
    if deviation > NORM_TOL {
        return Err(Error::NonUnitary { register: register.to_string(), deviation });
    }
    Ok(())
}

/// Image of a basis string under the Hadamard transform on every bit.
pub fn hadamard_image(z: &BitString) -> Vec<(BitString, Complex64)> {
    let w = z.len();
    let scale = FRAC_1_SQRT_2.powi(w as i32);
    (0..1u64 << w)
        .map(|y| {
            let y = BitString::from_uint(y, w);
            let sign = if z.dot(&y) { -scale } else { scale };
            (y, Complex64::new(sign, 0.0))
        })
        .collect()
}

/// Uniform superposition helper: `(1/√2)(|u⟩ + |v⟩)` style states with
/// arbitrary real weights.
pub fn real_terms(items: &[(&str, f64)]) -> Result<Vec<(BitString, Complex64)>> {
    items.iter().map(|(s, a)| Ok((s.parse()?, Complex64::new(*a, 0.0)))).collect()
}
