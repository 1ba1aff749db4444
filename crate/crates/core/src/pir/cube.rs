use super::{check_database, check_index, check_randomness, Database, PirScheme, QueryPlan, SchemeShape};
use crate::bits::BitString;
use crate::error::{Error, Result};

/// Two-server cube scheme with communication `2(3m + 3m + 1)` for `n ≤ m³`.
///
/// The database is laid out as an `m × m × m` cube (zero-padded when `n` is
/// not a perfect cube); index `i` sits at coordinates `(c0, c1, c2)` with
/// `i − 1 = c0·m² + c1·m + c2`. The user draws three subsets `S0, S1, S2 ⊆
/// [m]`; server 1 receives them as is, server 2 receives each one toggled at
/// the matching coordinate of `i`.
///
/// A query is the concatenation of three `m`-bit characteristic vectors. The
/// answer starts with the parity of the sub-cube `T0 × T1 × T2`, followed by
/// `3m` single-toggle parities in axis-major, coordinate-minor order: bit
/// `1 + d·m + ℓ` is the parity with `T_d` toggled at `ℓ`.
///
/// Each server contributes its main parity plus the three toggles at `i`'s
/// coordinates, so together the eight parities cover every corner of the
/// `{S_d, S_d △ {c_d}}` product and XOR to `x_i`.
///
/// Randomness value `r` packs `S0` in bits `0..m`, `S1` in `m..2m`, and
/// `S2` in `2m..3m`.
#[derive(Debug, Clone)]
pub struct CubeScheme {
    n: usize,
    side: usize,
}

impl CubeScheme {
    pub const MAX_SIDE: usize = 21;

    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("database size must be positive".into()));
        }
        let side = (1..).find(|m: &usize| m * m * m >= n).expect("cube side exists");
        if side > Self::MAX_SIDE {
            return Err(Error::InvalidParameter(format!("cube side {side} exceeds {}", Self::MAX_SIDE)));
        }
        Ok(CubeScheme { n, side })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Padded database length `m³`.
    pub fn padded_len(&self) -> usize {
        self.side.pow(3)
    }

    pub fn coordinates(&self, i: usize) -> [usize; 3] {
        let m = self.side;
        let z = i - 1;
        [z / (m * m), (z / m) % m, z % m]
    }

    /// Answer bit position of the toggle of axis `d` at coordinate `l`.
    pub fn toggle_position(&self, d: usize, l: usize) -> usize {
        1 + d * self.side + l
    }
}

impl PirScheme for CubeScheme {
    fn name(&self) -> String {
        "cube2".into()
    }

    fn n(&self) -> usize {
        self.n
    }

    fn shape(&self) -> SchemeShape {
        let m = self.side;
        SchemeShape { k: 2, t: 3 * m, a: 3 * m + 1, randomness_size: 1 << (3 * m) }
    }

    fn gen_plan(&self, i: usize, r: u64) -> Result<QueryPlan> {
        check_index(i, self.n)?;
        let shape = self.shape();
        check_randomness(r, shape.randomness_size)?;
        let m = self.side;
        let coords = self.coordinates(i);
        let q1 = BitString::from_bits((0..3 * m).map(|k| (r >> k) & 1 == 1));
        let mut q2 = q1.clone();
        for (d, c) in coords.iter().enumerate() {
            q2.flip(d * m + c);
        }
        let mut ones = vec![0];
        ones.extend(coords.iter().enumerate().map(|(d, &c)| self.toggle_position(d, c)));
        let b = BitString::with_ones(shape.a, &ones);
        Ok(QueryPlan { index: i, randomness: r, queries: vec![q1, q2], reconstruction: vec![b.clone(), b] })
    }

    fn answer(&self, q: &BitString, x: &Database) -> Result<BitString> {
        let m = self.side;
        if q.len() != 3 * m {
            return Err(Error::MalformedQuery(format!("expected {} query bits, got {}", 3 * m, q.len())));
        }
        check_database(x, self.n)?;
        let cube = x.padded(self.padded_len());
        let sets: [Vec<usize>; 3] = [0, 1, 2].map(|d| (0..m).filter(|&l| q.get(d * m + l)).collect());
        // parity over the two other sets with axis d pinned at l; toggling
        // l in T_d flips the sub-cube parity by exactly this slab
        let slab = |d: usize, l: usize| {
            let (e, f) = ((d + 1) % 3, (d + 2) % 3);
            let mut p = false;
            for &a in &sets[e] {
                for &b in &sets[f] {
                    let mut c = [0; 3];
                    (c[d], c[e], c[f]) = (l, a, b);
                    p ^= cube.get(c[0] * m * m + c[1] * m + c[2]);
                }
            }
            p
        };
        let main = sets[0].iter().fold(false, |p, &a| p ^ slab(0, a));
        let mut out = BitString::zeros(3 * m + 1);
        out.set(0, main);
        for d in 0..3 {
            for l in 0..m {
                out.set(self.toggle_position(d, l), main ^ slab(d, l));
            }
        }
        Ok(out)
    }
}
