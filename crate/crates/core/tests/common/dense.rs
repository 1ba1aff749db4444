//! Dense statevector reference. Basis index `k` of a `w`-bit register file
//! holds bit `j` (counted from the left) at `1 << (w - 1 - j)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C = Complex64;

#[derive(Debug, Clone)]
pub struct Layout {
    pub regs: Vec<(String, usize)>,
}

impl Layout {
    pub fn new(regs: &[(String, usize)]) -> Self {
        Layout { regs: regs.to_vec() }
    }

    pub fn width(&self) -> usize {
        self.regs.iter().map(|r| r.1).sum()
    }

    pub fn dim(&self) -> usize {
        1 << self.width()
    }

    /// `(start, len)` of a register.
    pub fn range(&self, name: &str) -> (usize, usize) {
        let mut start = 0;
        for (n, w) in &self.regs {
            if n == name {
                return (start, *w);
            }
            start += w;
        }
        panic!("no register {name}")
    }

    pub fn field(&self, idx: usize, name: &str) -> usize {
        let (s, l) = self.range(name);
        (idx >> (self.width() - s - l)) & ((1 << l) - 1)
    }

    pub fn with_field(&self, idx: usize, name: &str, v: usize) -> usize {
        let (s, l) = self.range(name);
        let shift = self.width() - s - l;
        (idx & !(((1 << l) - 1) << shift)) | (v << shift)
    }

    /// Concatenated values of `names`, first name most significant.
    pub fn fields(&self, idx: usize, names: &[&str]) -> usize {
        names.iter().fold(0, |acc, n| (acc << self.range(n).1) | self.field(idx, n))
    }

    pub fn concat(&self, other: &Layout) -> Layout {
        Layout { regs: self.regs.iter().chain(&other.regs).cloned().collect() }
    }
}

pub fn phase(layout: &Layout, amp: &DVector<C>, target: &str, table: &[bool]) -> DVector<C> {
    DVector::from_fn(amp.len(), |k, _| if table[layout.field(k, target)] { -amp[k] } else { amp[k] })
}

/// `(U ⊗ I) amp` with `U` acting on `target`.
pub fn local(layout: &Layout, amp: &DVector<C>, target: &str, u: &DMatrix<C>) -> DVector<C> {
    let mut out = DVector::from_element(amp.len(), C::new(0.0, 0.0));
    for k in 0..amp.len() {
        let z = layout.field(k, target);
        for r in 0..u.nrows() {
            out[layout.with_field(k, target, r)] += u[(r, z)] * amp[k];
        }
    }
    out
}

pub fn controlled_xor(layout: &Layout, amp: &DVector<C>, controls: &[&str], target: &str, table: &[usize]) -> DVector<C> {
    let mut out = DVector::from_element(amp.len(), C::new(0.0, 0.0));
    for k in 0..amp.len() {
        let m = table[layout.fields(k, controls)];
        let t = layout.field(k, target) ^ m;
        out[layout.with_field(k, target, t)] += amp[k];
    }
    out
}

pub fn kron(a: &DVector<C>, b: &DVector<C>) -> DVector<C> {
    DVector::from_fn(a.len() * b.len(), |k, _| a[k / b.len()] * b[k % b.len()])
}

/// The `w`-qubit Hadamard transform.
pub fn hadamard(w: usize) -> DMatrix<C> {
    let s = (0.5f64).sqrt().powi(w as i32);
    DMatrix::from_fn(1 << w, 1 << w, |r, c| {
        C::new(if (r & c).count_ones() % 2 == 1 { -s } else { s }, 0.0)
    })
}

/// Reduced density matrix on `keep`, indexed by the kept fields in layout
/// order.
pub fn reduced(layout: &Layout, amp: &DVector<C>, keep: &[&str]) -> DMatrix<C> {
    let kept: Vec<&str> = layout.regs.iter().map(|r| r.0.as_str()).filter(|n| keep.contains(n)).collect();
    let traced: Vec<&str> = layout.regs.iter().map(|r| r.0.as_str()).filter(|n| !keep.contains(n)).collect();
    let kw: usize = kept.iter().map(|n| layout.range(n).1).sum();
    let tw = layout.width() - kw;
    let mut blocks = vec![DVector::from_element(1 << kw, C::new(0.0, 0.0)); 1 << tw];
    for k in 0..amp.len() {
        blocks[layout.fields(k, &traced)][layout.fields(k, &kept)] += amp[k];
    }
    let norm = amp.norm_squared();
    blocks.iter().fold(DMatrix::from_element(1 << kw, 1 << kw, C::new(0.0, 0.0)), |acc, v| {
        acc + v * v.adjoint()
    }) / C::new(norm, 0.0)
}

/// `(outcome, probability, post-measurement state)` for every outcome with
/// a non-negligible amplitude.
pub fn measure(layout: &Layout, amp: &DVector<C>, target: &str) -> Vec<(usize, f64, DVector<C>)> {
    let (_, l) = layout.range(target);
    let total = amp.norm_squared();
    (0..1 << l)
        .filter_map(|o| {
            let v = DVector::from_fn(amp.len(), |k, _| {
                if layout.field(k, target) == o { amp[k] } else { C::new(0.0, 0.0) }
            });
            // the sparse side drops amplitudes below 1e-12
            let present = v.iter().any(|a| a.norm() >= 1e-12);
            present.then(|| (o, v.norm_squared() / total, v.unscale(v.norm())))
        })
        .collect()
}

pub fn trace_distance(p: &DMatrix<C>, q: &DMatrix<C>) -> f64 {
    (p - q).symmetric_eigenvalues().iter().map(|l| l.abs()).sum::<f64>() / 2.0
}
