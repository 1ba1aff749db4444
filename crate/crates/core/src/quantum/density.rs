//! Sparse density matrices, partial traces and trace distance.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use nalgebra::{DMatrix, SymmetricEigen};
use rustc_hash::FxHashMap;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::layout::RegisterLayout;
use super::state::SparseState;
use super::{C_ZERO, NORM_TOL, PRUNE_TOL};
use crate::bits::BitString;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "DensityRecord", try_from = "DensityRecord")]
pub struct DensityMatrix {
    layout: RegisterLayout,
    entries: BTreeMap<(BitString, BitString), Complex64>,
}

impl DensityMatrix {
    /// Builds a matrix from explicit entries without validating it; see
    /// [`validate`](Self::validate).
    pub fn from_entries(
        layout: RegisterLayout,
        entries: impl IntoIterator<Item = ((BitString, BitString), Complex64)>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for ((u, v), c) in entries {
            layout.check(&u)?;
            layout.check(&v)?;
            *map.entry((u, v)).or_insert(C_ZERO) += c;
        }
        map.retain(|_, c: &mut Complex64| c.norm() >= PRUNE_TOL);
        Ok(DensityMatrix { layout, entries: map })
    }

    pub fn pure(state: &SparseState) -> Self {
        let names: Vec<&str> = state.layout().names().collect();
        partial_trace(state, &names).expect("keeping every register is always valid")
    }

    /// Diagonal matrix from (basis string, weight) pairs.
    pub fn diagonal(layout: RegisterLayout, diag: impl IntoIterator<Item = (BitString, f64)>) -> Result<Self> {
        Self::from_entries(layout, diag.into_iter().map(|(b, p)| ((b.clone(), b), Complex64::new(p, 0.0))))
    }

    /// Uniform mixture over every basis string of the layout.
    pub fn maximally_mixed(layout: RegisterLayout) -> Result<Self> {
        let w = layout.total_width();
        if w > 20 {
            return Err(Error::InvalidParameter(format!("maximally mixed state on {w} bits is too large")));
        }
        let p = 1.0 / (1u64 << w) as f64;
        Self::diagonal(layout, (0..1u64 << w).map(|z| (BitString::from_uint(z, w), p)))
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn entries(&self) -> impl Iterator<Item = (&(BitString, BitString), &Complex64)> {
        self.entries.iter()
    }

    pub fn entry(&self, row: &BitString, col: &BitString) -> Complex64 {
        self.entries.get(&(row.clone(), col.clone())).copied().unwrap_or(C_ZERO)
    }

    pub fn trace(&self) -> Complex64 {
        self.entries.iter().filter(|((u, v), _)| u == v).map(|(_, c)| *c).sum()
    }

    /// Basis strings appearing as a row or column index.
    pub fn support(&self) -> BTreeSet<BitString> {
        self.entries.keys().flat_map(|(u, v)| [u.clone(), v.clone()]).collect()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.entries.iter().all(|((u, v), c)| (c - self.entry(v, u).conj()).norm() <= tol)
    }

    /// Dense matrix over the given ordered basis.
    pub fn to_dense(&self, basis: &[BitString]) -> DMatrix<Complex64> {
        let idx: HashMap<&BitString, usize> = basis.iter().enumerate().map(|(k, b)| (b, k)).collect();
        let mut m = DMatrix::from_element(basis.len(), basis.len(), C_ZERO);
        for ((u, v), c) in &self.entries {
            if let (Some(&i), Some(&j)) = (idx.get(u), idx.get(v)) {
                m[(i, j)] += c;
            }
        }
        m
    }

    /// Eigenvalues on the support, one per support element.
    pub fn eigenvalues(&self) -> Vec<f64> {
        block_eigenvalues(&[(self, 1.0)])
    }

    /// Checks the Hermitian, unit-trace and positive-semidefinite invariants.
    pub fn validate(&self) -> Result<()> {
        if !self.is_hermitian(NORM_TOL) {
            return Err(Error::InvalidMixture("matrix is not Hermitian".into()));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > NORM_TOL || tr.im.abs() > NORM_TOL {
            return Err(Error::InvalidMixture(format!("trace is {tr}")));
        }
        if let Some(min) = self.eigenvalues().into_iter().reduce(f64::min) {
            if min < -NORM_TOL {
                return Err(Error::InvalidMixture(format!("negative eigenvalue {min}")));
            }
        }
        Ok(())
    }
}

/// Reduced state on the `keep` registers.
pub fn partial_trace(state: &SparseState, keep: &[&str]) -> Result<DensityMatrix> {
    if keep.is_empty() {
        return Err(Error::InvalidParameter("partial trace must keep at least one register".into()));
    }
    partial_trace_onto(state, state.layout().sub_layout(keep)?)
}

/// [`partial_trace`] onto a sub-layout of the state's layout.
pub(crate) fn partial_trace_onto(state: &SparseState, kept_layout: RegisterLayout) -> Result<DensityMatrix> {
    let layout = state.layout();
    let keep: Vec<&str> = kept_layout.names().collect();
    let kept_ranges: Vec<_> = kept_layout.names().map(|n| layout.range(n)).collect::<Result<_>>()?;
    let traced_ranges: Vec<_> = layout
        .names()
        .filter(|n| !keep.contains(n))
        .map(|n| layout.range(n))
        .collect::<Result<_>>()?;
    // group amplitudes by the traced-out substring
    let mut rows: Vec<(BitString, BitString, Complex64)> =
        state.terms().map(|(b, a)| (b.gather(&traced_ranges), b.gather(&kept_ranges), *a)).collect();
    rows.sort_by(|x, y| x.0.cmp(&y.0));
    let norm = state.norm_sqr();
    let mut entries = Vec::new();
    for group in rows.chunk_by(|x, y| x.0 == y.0) {
        for (_, u, a) in group {
            for (_, v, c) in group {
                entries.push(((u.clone(), v.clone()), a * c.conj() / norm));
            }
        }
    }
    DensityMatrix::from_entries(kept_layout, entries)
}

/// Convex combination of density matrices sharing one layout.
pub fn mix(weights: &[f64], states: &[DensityMatrix]) -> Result<DensityMatrix> {
    if weights.len() != states.len() || states.is_empty() {
        return Err(Error::InvalidMixture(format!("{} weights for {} states", weights.len(), states.len())));
    }
    if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
        return Err(Error::InvalidMixture("weights must be nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > NORM_TOL {
        return Err(Error::InvalidMixture(format!("weights sum to {total}")));
    }
    let layout = states[0].layout.clone();
    if states.iter().any(|s| s.layout != layout) {
        return Err(Error::LayoutMismatch("mixed states have different layouts".into()));
    }
    let mut acc = MixtureAccumulator::new(layout);
    for (w, s) in weights.iter().zip(states) {
        acc.add(*w, s)?;
    }
    Ok(acc.finish())
}

/// Running weighted sum of density matrices, for mixtures over enumerated
/// randomness where the weights are known to total one.
#[derive(Debug, Clone)]
pub struct MixtureAccumulator {
    layout: RegisterLayout,
    pending: Pending,
    merge_at: usize,
    weight: f64,
}

// layouts of at most 64 qubits pack row and column into one integer and sum
// in a hash map; wider ones collect unsorted entries and merge them in bulk
#[derive(Debug, Clone)]
enum Pending {
    Packed(FxHashMap<u128, Complex64>),
    General(Vec<((BitString, BitString), Complex64)>),
}

impl Pending {
    fn len(&self) -> usize {
        match self {
            Pending::Packed(_) => 0,
            Pending::General(v) => v.len(),
        }
    }
}

// sums entries with equal keys; the stable sort keeps insertion order among
// them, so the result is deterministic
fn merge_sorted<K: Ord>(v: &mut Vec<(K, Complex64)>) {
    v.sort_by(|a, b| a.0.cmp(&b.0));
    v.dedup_by(|later, kept| {
        if later.0 == kept.0 {
            kept.1 += later.1;
            true
        } else {
            false
        }
    });
}

impl MixtureAccumulator {
    pub fn new(layout: RegisterLayout) -> Self {
        let pending =
            if layout.total_width() <= 64 { Pending::Packed(FxHashMap::default()) } else { Pending::General(Vec::new()) };
        MixtureAccumulator { layout, pending, merge_at: 1 << 16, weight: 0.0 }
    }

    pub fn add(&mut self, w: f64, rho: &DensityMatrix) -> Result<()> {
        if rho.layout != self.layout {
            return Err(Error::LayoutMismatch("mixture component has a different layout".into()));
        }
        match &mut self.pending {
            Pending::Packed(m) => {
                for ((u, v), c) in &rho.entries {
                    *m.entry(pack(u, v)).or_insert(C_ZERO) += c * w;
                }
            }
            Pending::General(v) => v.extend(rho.entries.iter().map(|(k, c)| (k.clone(), c * w))),
        }
        self.weight += w;
        if self.pending.len() >= self.merge_at {
            self.merge();
            self.merge_at = self.merge_at.max(2 * self.pending.len());
        }
        Ok(())
    }

    pub fn total_weight(&self) -> f64 {
        self.weight
    }

    fn merge(&mut self) {
        if let Pending::General(v) = &mut self.pending {
            merge_sorted(v);
        }
    }

    pub fn finish(mut self) -> DensityMatrix {
        self.merge();
        let width = self.layout.total_width();
        let keep = |c: &Complex64| c.norm() >= PRUNE_TOL;
        let entries = match self.pending {
            Pending::Packed(m) => {
                let mut v: Vec<(u128, Complex64)> = m.into_iter().filter(|(_, c)| keep(c)).collect();
                v.sort_unstable_by_key(|e| e.0);
                v.into_iter()
                    .map(|(k, c)| {
                        let (u, v) = ((k >> 64) as u64, k as u64);
                        ((BitString::from_uint(u, width), BitString::from_uint(v, width)), c)
                    })
                    .collect()
            }
            Pending::General(v) => v.into_iter().filter(|(_, c)| keep(c)).collect(),
        };
        DensityMatrix { layout: self.layout, entries }
    }
}

fn pack(u: &BitString, v: &BitString) -> u128 {
    let word = |b: &BitString| b.to_uint().expect("packed layouts are at most 64 qubits") as u128;
    (word(u) << 64) | word(v)
}

/// `(1/2)·Σ|λ|` over the eigenvalues of `p − q`, with the eigenproblem solved
/// on the joint support only.
pub fn trace_distance(p: &DensityMatrix, q: &DensityMatrix) -> Result<f64> {
    if p.layout != q.layout {
        return Err(Error::LayoutMismatch("trace distance between different layouts".into()));
    }
    let d: f64 = block_eigenvalues(&[(p, 1.0), (q, -1.0)]).iter().map(|l| l.abs()).sum::<f64>() / 2.0;
    Ok(d.clamp(0.0, 1.0))
}

/// Eigenvalues of `Σ w·m` over the joint support. The support splits into
/// connected components of the graph whose edges are nonzero off-diagonal
/// entries; the sum is block diagonal over them, so each block is
/// diagonalized alone.
fn block_eigenvalues(terms: &[(&DensityMatrix, f64)]) -> Vec<f64> {
    if terms.iter().all(|(m, _)| m.entries.keys().all(|(u, v)| u == v)) {
        // each matrix is already sorted, so the stable sort only merges runs
        let mut diag: Vec<(&BitString, f64)> =
            terms.iter().flat_map(|(m, w)| m.entries.iter().map(move |((u, _), c)| (u, w * c.re))).collect();
        diag.sort_by(|a, b| a.0.cmp(b.0));
        diag.dedup_by(|later, kept| {
            if later.0 == kept.0 {
                kept.1 += later.1;
                true
            } else {
                false
            }
        });
        return diag.into_iter().map(|(_, l)| l).collect();
    }
    let mut index: BTreeMap<&BitString, usize> = BTreeMap::new();
    for (m, _) in terms {
        for (u, v) in m.entries.keys() {
            for b in [u, v] {
                let k = index.len();
                index.entry(b).or_insert(k);
            }
        }
    }
    let mut parent: Vec<usize> = (0..index.len()).collect();
    fn root(parent: &mut [usize], mut k: usize) -> usize {
        while parent[k] != k {
            parent[k] = parent[parent[k]];
            k = parent[k];
        }
        k
    }
    for (m, _) in terms {
        for (u, v) in m.entries.keys().filter(|(u, v)| u != v) {
            let (a, b) = (root(&mut parent, index[u]), root(&mut parent, index[v]));
            parent[a] = b;
        }
    }
    // position of every support element inside its block
    let mut block_of = vec![(0usize, 0usize); index.len()];
    let mut sizes: Vec<usize> = Vec::new();
    let mut block_id: HashMap<usize, usize> = HashMap::new();
    for k in 0..index.len() {
        let r = root(&mut parent, k);
        let id = *block_id.entry(r).or_insert_with(|| {
            sizes.push(0);
            sizes.len() - 1
        });
        block_of[k] = (id, sizes[id]);
        sizes[id] += 1;
    }
    let mut dense: Vec<DMatrix<Complex64>> = sizes.iter().map(|&s| DMatrix::from_element(s, s, C_ZERO)).collect();
    for (m, w) in terms {
        for ((u, v), c) in &m.entries {
            let ((bu, iu), (_, iv)) = (block_of[index[u]], block_of[index[v]]);
            dense[bu][(iu, iv)] += c * *w;
        }
    }
    dense
        .into_iter()
        .flat_map(|d| {
            if d.nrows() == 1 {
                vec![d[(0, 0)].re]
            } else {
                SymmetricEigen::new(d).eigenvalues.iter().copied().collect()
            }
        })
        .collect()
}

/// Entry list used by the JSON forms of transcripts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRecord {
    pub layout: RegisterLayout,
    /// `[row, col, re, im]`
    pub entries: Vec<(BitString, BitString, f64, f64)>,
}

impl From<DensityMatrix> for DensityRecord {
    fn from(d: DensityMatrix) -> Self {
        DensityRecord {
            layout: d.layout,
            entries: d.entries.into_iter().map(|((u, v), c)| (u, v, c.re, c.im)).collect(),
        }
    }
}

impl TryFrom<DensityRecord> for DensityMatrix {
    type Error = Error;
    fn try_from(r: DensityRecord) -> Result<Self> {
        DensityMatrix::from_entries(
            r.layout,
            r.entries.into_iter().map(|(u, v, re, im)| ((u, v), Complex64::new(re, im))),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::state::real_terms;
    use std::f64::consts::FRAC_1_SQRT_2 as H;

    fn bs(s: &str) -> BitString {
        s.parse().unwrap()
    }

    fn two_qubits() -> RegisterLayout {
        RegisterLayout::new([("a", 1), ("b", 1)]).unwrap()
    }

    fn qubit() -> RegisterLayout {
        RegisterLayout::new([("a", 1)]).unwrap()
    }

    fn st(layout: RegisterLayout, items: &[(&str, f64)]) -> SparseState {
        SparseState::from_terms(layout, real_terms(items).unwrap()).unwrap()
    }

    #[test]
    fn bell_partial_traces() {
        let bell = st(two_qubits(), &[("00", H), ("11", H)]);
        let full = partial_trace(&bell, &["a", "b"]).unwrap();
        assert!((full.entry(&bs("00"), &bs("11")).re - 0.5).abs() < 1e-12);
        let mut ev = full.eigenvalues();
        ev.sort_by(f64::total_cmp);
        let (top, rest) = ev.split_last().unwrap();
        assert!((top - 1.0).abs() < 1e-12 && rest.iter().all(|e| e.abs() < 1e-12));

        let half = partial_trace(&bell, &["a"]).unwrap();
        let mixed = DensityMatrix::maximally_mixed(qubit()).unwrap();
        assert!(trace_distance(&half, &mixed).unwrap() < 1e-12);
        half.validate().unwrap();

        let prod = st(two_qubits(), &[("01", 1.0)]);
        let a = partial_trace(&prod, &["a"]).unwrap();
        assert_eq!(a.entry(&bs("0"), &bs("0")).re, 1.0);
        let b = partial_trace(&prod, &["b"]).unwrap();
        assert_eq!(b.entry(&bs("1"), &bs("1")).re, 1.0);
        assert!(partial_trace(&prod, &[]).is_err());
        assert!(partial_trace(&prod, &["c"]).is_err());
    }

    #[test]
    fn mixing_examples() {
        let zero = DensityMatrix::pure(&st(qubit(), &[("0", 1.0)]));
        let one = DensityMatrix::pure(&st(qubit(), &[("1", 1.0)]));
        assert_eq!(mix(&[1.0], std::slice::from_ref(&zero)).unwrap(), zero);
        let coin = mix(&[0.5, 0.5], &[zero.clone(), one.clone()]).unwrap();
        assert!(trace_distance(&coin, &DensityMatrix::maximally_mixed(qubit()).unwrap()).unwrap() < 1e-15);
        let same = mix(&[0.3, 0.7], &[one.clone(), one.clone()]).unwrap();
        assert!(trace_distance(&same, &one).unwrap() < 1e-12);
        assert!(mix(&[0.5], &[zero.clone(), one.clone()]).is_err());
        assert!(mix(&[0.6, 0.6], &[zero.clone(), one.clone()]).is_err());
        assert!(mix(&[1.5, -0.5], &[zero, one]).is_err());
    }

    #[test]
    fn trace_distance_examples() {
        let zero = DensityMatrix::pure(&st(qubit(), &[("0", 1.0)]));
        let one = DensityMatrix::pure(&st(qubit(), &[("1", 1.0)]));
        let plus = DensityMatrix::pure(&st(qubit(), &[("0", H), ("1", H)]));
        assert_eq!(trace_distance(&zero, &zero).unwrap(), 0.0);
        assert!((trace_distance(&zero, &one).unwrap() - 1.0).abs() < 1e-12);
        // pure states: sqrt(1 - |<0|+>|^2) = sqrt(1/2)
        let expected = (1.0f64 - 0.5).sqrt();
        assert!((trace_distance(&zero, &plus).unwrap() - expected).abs() < 1e-12);
        let other = DensityMatrix::pure(&st(two_qubits(), &[("00", 1.0)]));
        assert!(trace_distance(&zero, &other).is_err());
    }
}
