use super::{check_database, check_index, check_randomness, Database, PirScheme, QueryPlan, SchemeShape};
use crate::bits::BitString;
use crate::error::{Error, Result};

/// One server, empty query, the whole database as the answer; `b_1 = e_i`.
#[derive(Debug, Clone)]
pub struct TrivialScheme {
    n: usize,
}

impl TrivialScheme {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("database size must be positive".into()));
        }
        Ok(TrivialScheme { n })
    }
}

impl PirScheme for TrivialScheme {
    fn name(&self) -> String {
        "trivial1".into()
    }

    fn n(&self) -> usize {
        self.n
    }

    fn shape(&self) -> SchemeShape {
        SchemeShape { k: 1, t: 0, a: self.n, randomness_size: 1 }
    }

    fn gen_plan(&self, i: usize, r: u64) -> Result<QueryPlan> {
        check_index(i, self.n)?;
        check_randomness(r, 1)?;
        Ok(QueryPlan {
            index: i,
            randomness: r,
            queries: vec![BitString::empty()],
            reconstruction: vec![BitString::with_ones(self.n, &[i - 1])],
        })
    }

    fn answer(&self, q: &BitString, x: &Database) -> Result<BitString> {
        if !q.is_empty() {
            return Err(Error::MalformedQuery(format!("trivial scheme takes an empty query, got {q}")));
        }
        check_database(x, self.n)?;
        Ok(x.bits().clone())
    }
}
