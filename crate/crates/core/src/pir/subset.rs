use super::{check_database, check_index, check_randomness, Database, PirScheme, QueryPlan, SchemeShape};
use crate::bits::BitString;
use crate::error::{Error, Result};

/// Two-server subset-parity scheme.
///
/// The user draws a uniform `S ⊆ [n]` and sends `S` to server 1 and `S △ {i}`
/// to server 2, both as characteristic vectors. Each server answers with the
/// parity of the database over its set, and `b_1 = b_2 = 1`.
///
/// Randomness value `r` encodes `S` with bit `ℓ − 1` of `r` marking `ℓ ∈ S`.
#[derive(Debug, Clone)]
pub struct SubsetScheme {
    n: usize,
}

impl SubsetScheme {
    pub const MAX_N: usize = 62;

    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n > Self::MAX_N {
            return Err(Error::InvalidParameter(format!("subset scheme supports 1 <= n <= {}", Self::MAX_N)));
        }
        Ok(SubsetScheme { n })
    }

    fn set_of(&self, r: u64) -> BitString {
        let ones: Vec<usize> = (0..self.n).filter(|l| (r >> l) & 1 == 1).collect();
        BitString::with_ones(self.n, &ones)
    }
}

impl PirScheme for SubsetScheme {
    fn name(&self) -> String {
        "subset2".into()
    }

    fn n(&self) -> usize {
        self.n
    }

    fn shape(&self) -> SchemeShape {
        SchemeShape { k: 2, t: self.n, a: 1, randomness_size: 1 << self.n }
    }

    fn gen_plan(&self, i: usize, r: u64) -> Result<QueryPlan> {
        check_index(i, self.n)?;
        check_randomness(r, 1 << self.n)?;
        let s = self.set_of(r);
        let mut s2 = s.clone();
        s2.flip(i - 1);
        let one = BitString::with_ones(1, &[0]);
        Ok(QueryPlan { index: i, randomness: r, queries: vec![s, s2], reconstruction: vec![one.clone(), one] })
    }

    fn answer(&self, q: &BitString, x: &Database) -> Result<BitString> {
        if q.len() != self.n {
            return Err(Error::MalformedQuery(format!("expected {} query bits, got {}", self.n, q.len())));
        }
        check_database(x, self.n)?;
        Ok(BitString::from_bits([q.dot(x.bits())]))
    }
}
