//! Random sparse-versus-dense comparisons.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qspir_core::quantum::{
    hadamard_image, mix, partial_trace, trace_distance, DensityMatrix, OutcomeSource, RegisterLayout, SparseState,
};
use qspir_core::BitString;

use super::dense::{self, Layout, C};

pub const MAX_WIDTH: usize = 12;
/// Reduced states are compared densely only up to this width.
const MAX_KEPT: usize = 6;

struct Pair {
    dense_layout: Layout,
    amp: DVector<C>,
    sparse: SparseState,
}

fn gaussianish(rng: &mut ChaCha8Rng) -> C {
    C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

fn random_pair(rng: &mut ChaCha8Rng, regs: Vec<(String, usize)>) -> Pair {
    let dl = Layout::new(&regs);
    let dim = dl.dim();
    let support = rng.random_range(1..=dim.min(24));
    let mut amp = DVector::from_element(dim, C::new(0.0, 0.0));
    for k in sample(rng, dim, support) {
        let mut a = gaussianish(rng);
        while a.norm() < 0.05 {
            a = gaussianish(rng);
        }
        amp[k] = a;
    }
    amp.unscale_mut(amp.norm());
    let layout = RegisterLayout::new(regs.iter().map(|(n, w)| (n.clone(), *w))).unwrap();
    let w = dl.width();
    let terms = (0..dim).filter(|&k| amp[k].norm() > 0.0).map(|k| (BitString::from_uint(k as u64, w), amp[k]));
    let sparse = SparseState::normalized(layout, terms).unwrap();
    Pair { dense_layout: dl, amp, sparse }
}

fn random_unitary(rng: &mut ChaCha8Rng, w: usize) -> DMatrix<C> {
    let m = DMatrix::from_fn(1 << w, 1 << w, |_, _| gaussianish(rng));
    m.qr().q()
}

fn amp_deviation(sparse: &SparseState, dl: &Layout, amp: &DVector<C>) -> f64 {
    let w = dl.width();
    let mut dev: f64 = 0.0;
    for k in 0..amp.len() {
        let s = sparse.amplitude(&BitString::from_uint(k as u64, w));
        dev = dev.max((s - amp[k]).norm());
    }
    for (b, _) in sparse.terms() {
        assert_eq!(b.len(), w);
    }
    dev
}

fn matrix_deviation(sparse: &DensityMatrix, d: &DMatrix<C>) -> f64 {
    let w = sparse.layout().total_width();
    let mut dev: f64 = 0.0;
    for r in 0..d.nrows() {
        for c in 0..d.ncols() {
            let s = sparse.entry(&BitString::from_uint(r as u64, w), &BitString::from_uint(c as u64, w));
            dev = dev.max((s - d[(r, c)]).norm());
        }
    }
    dev
}

fn names(dl: &Layout) -> Vec<String> {
    dl.regs.iter().map(|r| r.0.clone()).collect()
}

fn step(rng: &mut ChaCha8Rng, p: &mut Pair, fresh: &mut usize) {
    let regs = names(&p.dense_layout);
    let target = regs[rng.random_range(0..regs.len())].clone();
    let (_, tw) = p.dense_layout.range(&target);
    match rng.random_range(0..5) {
        0 => {
            let table: Vec<bool> = (0..1 << tw).map(|_| rng.random()).collect();
            p.amp = dense::phase(&p.dense_layout, &p.amp, &target, &table);
            p.sparse = p.sparse.apply_phase_oracle(&target, |z| table[z.to_uint().unwrap() as usize]).unwrap();
        }
        1 => {
            let u = random_unitary(rng, tw);
            p.amp = dense::local(&p.dense_layout, &p.amp, &target, &u);
            p.sparse = p
                .sparse
                .apply_local_map(&target, |z| {
                    let c = z.to_uint().unwrap() as usize;
                    (0..u.nrows()).map(|r| (BitString::from_uint(r as u64, tw), u[(r, c)])).collect()
                })
                .unwrap();
        }
        2 => {
            p.amp = dense::local(&p.dense_layout, &p.amp, &target, &dense::hadamard(tw));
            p.sparse = p.sparse.apply_local_map(&target, hadamard_image).unwrap();
        }
        3 if regs.len() > 1 => {
            let others: Vec<&str> = regs.iter().map(String::as_str).filter(|n| *n != target).collect();
            let take = rng.random_range(1..=others.len());
            let controls: Vec<&str> = sample(rng, others.len(), take).into_iter().map(|k| others[k]).collect();
            let cw: usize = controls.iter().map(|c| p.dense_layout.range(c).1).sum();
            let table: Vec<usize> = (0..1 << cw).map(|_| rng.random_range(0..1 << tw)).collect();
            p.amp = dense::controlled_xor(&p.dense_layout, &p.amp, &controls, &target, &table);
            p.sparse = p
                .sparse
                .apply_controlled_xor(&controls, &target, |vals| {
                    BitString::from_uint(table[BitString::concat_all(vals).to_uint().unwrap() as usize] as u64, tw)
                })
                .unwrap();
        }
        _ => {
            let room = MAX_WIDTH - p.dense_layout.width();
            if room == 0 {
                return;
            }
            *fresh += 1;
            let w = rng.random_range(1..=room.min(3));
            let extra = random_pair(rng, vec![(format!("t{fresh}"), w)]);
            p.amp = dense::kron(&p.amp, &extra.amp);
            p.dense_layout = p.dense_layout.concat(&extra.dense_layout);
            p.sparse = p.sparse.tensor(&extra.sparse).unwrap();
        }
    }
}

/// Runs one randomized case and returns the largest disagreement seen.
pub fn sparse_dense_case(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut regs = Vec::new();
    let mut total = 0;
    for k in 0..rng.random_range(1..=4) {
        let w = rng.random_range(1..=4).min(MAX_WIDTH - 2 - total);
        if w == 0 {
            break;
        }
        regs.push((format!("r{k}"), w));
        total += w;
    }
    let mut p = random_pair(&mut rng, regs);
    let mut dev = amp_deviation(&p.sparse, &p.dense_layout, &p.amp);
    let mut fresh = 0;
    for _ in 0..rng.random_range(1..=4) {
        step(&mut rng, &mut p, &mut fresh);
        dev = dev.max(amp_deviation(&p.sparse, &p.dense_layout, &p.amp));
    }
    let dl = &p.dense_layout;
    assert!(dl.width() <= MAX_WIDTH);

    let other = p.sparse.scaled(Complex64::new(0.6, 0.8));
    let inner = p.sparse.inner(&other);
    dev = dev.max((inner - p.amp.dotc(&(p.amp.clone() * C::new(0.6, 0.8)))).norm());
    dev = dev.max((p.sparse.norm_sqr() - p.amp.norm_squared()).abs());

    let regs = names(dl);
    let mut keep: Vec<&str> = Vec::new();
    let mut kept_width = 0;
    for k in sample(&mut rng, regs.len(), regs.len()) {
        let w = dl.range(&regs[k]).1;
        if kept_width + w <= MAX_KEPT && (keep.is_empty() || rng.random()) {
            keep.push(&regs[k]);
            kept_width += w;
        }
    }
    if keep.is_empty() {
        return dev;
    }
    let rho = partial_trace(&p.sparse, &keep).unwrap();
    let rho_d = dense::reduced(dl, &p.amp, &keep);
    dev = dev.max(matrix_deviation(&rho, &rho_d));

    // a second state on the same registers for distances and mixtures
    let moved = keep[rng.random_range(0..keep.len())];
    let u = random_unitary(&mut rng, dl.range(moved).1);
    let amp2 = dense::local(dl, &p.amp, moved, &u);
    let sparse2 = p
        .sparse
        .apply_local_map(moved, |z| {
            let c = z.to_uint().unwrap() as usize;
            (0..u.nrows()).map(|r| (BitString::from_uint(r as u64, dl.range(moved).1), u[(r, c)])).collect()
        })
        .unwrap();
    let sigma = partial_trace(&sparse2, &keep).unwrap();
    let sigma_d = dense::reduced(dl, &amp2, &keep);
    dev = dev.max(matrix_deviation(&sigma, &sigma_d));
    dev = dev.max((trace_distance(&rho, &sigma).unwrap() - dense::trace_distance(&rho_d, &sigma_d)).abs());

    let w: f64 = rng.random_range(0.0..1.0);
    let mixed = mix(&[w, 1.0 - w], &[rho.clone(), sigma]).unwrap();
    let mixed_d = rho_d.scale(w) + sigma_d.scale(1.0 - w);
    dev = dev.max(matrix_deviation(&mixed, &mixed_d));
    dev = dev.max((trace_distance(&rho, &mixed).unwrap() - dense::trace_distance(&rho_d, &mixed_d)).abs());

    let target = &regs[rng.random_range(0..regs.len())];
    let branches = p.sparse.measure_register(target, OutcomeSource::Enumerate).unwrap();
    let dense_branches = dense::measure(dl, &p.amp, target);
    assert_eq!(branches.len(), dense_branches.len(), "outcome count for seed {seed}");
    let tw = dl.range(target).1;
    for (b, (o, prob, post)) in branches.iter().zip(&dense_branches) {
        assert_eq!(b.outcome, BitString::from_uint(*o as u64, tw));
        dev = dev.max((b.probability - prob).abs());
        dev = dev.max(amp_deviation(&b.state, dl, post));
    }
    dev
}
