//! Classical k-server PIR schemes whose reconstruction is `⊕_j a_j·b_j`.
//!
//! Indices are 1-based throughout (`i ∈ 1..=n`), matching database bit
//! positions `x_1 … x_n`. User randomness is an explicit finite enumeration:
//! every scheme numbers its random strings `0..randomness_size`.

mod cube;
mod subset;
mod trivial;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use cube::CubeScheme;
pub use subset::SubsetScheme;
pub use trivial::TrivialScheme;

use crate::bits::BitString;
use crate::error::{Error, Result};

/// An n-bit database `x_1 … x_n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Database(BitString);

impl Database {
    pub fn new(bits: BitString) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::InvalidParameter("database must have at least one bit".into()));
        }
        Ok(Database(bits))
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    /// `x_i`, 1-based.
    pub fn bit(&self, i: usize) -> Result<bool> {
        check_index(i, self.n())?;
        Ok(self.0.get(i - 1))
    }

    pub fn bits(&self) -> &BitString {
        &self.0
    }

    /// The database extended with zero bits to length `len`.
    pub fn padded(&self, len: usize) -> BitString {
        let mut b = BitString::zeros(len.max(self.n()));
        b.splice(0, &self.0);
        b
    }

    /// Every database of length `n`, in increasing textual order.
    pub fn all(n: usize) -> impl Iterator<Item = Database> {
        assert!(n >= 1 && n < 64, "exhaustive database grids need 1 <= n < 64");
        (0..1u64 << n).map(move |v| Database(BitString::from_uint(v, n)))
    }
}

impl FromStr for Database {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Database::new(s.parse()?)
    }
}

impl fmt::Display for Database {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

pub(crate) fn check_index(i: usize, n: usize) -> Result<()> {
    if i == 0 || i > n {
        return Err(Error::IndexOutOfRange { index: i, n });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeShape {
    /// Number of servers.
    pub k: usize,
    /// Query length in bits.
    pub t: usize,
    /// Answer length in bits.
    pub a: usize,
    /// Size of the enumerated user randomness space.
    pub randomness_size: u64,
}

/// Everything the user derives from `(i, r)`: one query and one
/// reconstruction vector per server.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryPlan {
    pub index: usize,
    pub randomness: u64,
    pub queries: Vec<BitString>,
    pub reconstruction: Vec<BitString>,
}

/// A classical PIR scheme with linear reconstruction.
///
/// `answer` sees only the query and the database, which is what lets the
/// quantum compiler turn it into a phase oracle.
pub trait PirScheme: Send + Sync + fmt::Debug {
    fn name(&self) -> String;

    /// Logical database size.
    fn n(&self) -> usize;

    fn shape(&self) -> SchemeShape;

    fn gen_plan(&self, i: usize, r: u64) -> Result<QueryPlan>;

    fn answer(&self, q: &BitString, x: &Database) -> Result<BitString>;

    /// Classical communication `k(t + a)` in bits.
    fn comm_cost(&self) -> usize {
        let s = self.shape();
        s.k * (s.t + s.a)
    }
}

/// `⊕_j a_j·b_j` over GF(2).
pub fn reconstruct(plan: &QueryPlan, answers: &[BitString]) -> Result<bool> {
    if answers.len() != plan.reconstruction.len() {
        return Err(Error::LengthMismatch(format!(
            "{} answers for {} servers",
            answers.len(),
            plan.reconstruction.len()
        )));
    }
    let mut out = false;
    for (a, b) in answers.iter().zip(&plan.reconstruction) {
        if a.len() != b.len() {
            return Err(Error::LengthMismatch(format!("answer has {} bits, expected {}", a.len(), b.len())));
        }
        out ^= a.dot(b);
    }
    Ok(out)
}

/// Runs the classical scheme end to end.
pub fn retrieve(scheme: &dyn PirScheme, x: &Database, i: usize, r: u64) -> Result<bool> {
    let plan = scheme.gen_plan(i, r)?;
    let answers = plan.queries.iter().map(|q| scheme.answer(q, x)).collect::<Result<Vec<_>>>()?;
    reconstruct(&plan, &answers)
}

pub(crate) fn check_randomness(r: u64, size: u64) -> Result<()> {
    if r >= size {
        return Err(Error::RandomnessOutOfRange { r, size });
    }
    Ok(())
}

pub(crate) fn check_database(x: &Database, n: usize) -> Result<()> {
    if x.n() != n {
        return Err(Error::LengthMismatch(format!("database has {} bits, scheme expects {n}", x.n())));
    }
    Ok(())
}

/// Names of the built-in base schemes.
pub const SCHEME_NAMES: [&str; 3] = ["trivial1", "subset2", "cube2"];

/// Instantiates a built-in base scheme for an n-bit database.
pub fn scheme_by_name(name: &str, n: usize) -> Result<Arc<dyn PirScheme>> {
    Ok(match name {
        "trivial1" => Arc::new(TrivialScheme::new(n)?),
        "subset2" => Arc::new(SubsetScheme::new(n)?),
        "cube2" => Arc::new(CubeScheme::new(n)?),
        other => return Err(Error::UnknownScheme(other.to_string())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn database_basics() {
        let x: Database = "10110".parse().unwrap();
        assert_eq!(x.n(), 5);
        assert!(x.bit(1).unwrap() && !x.bit(2).unwrap() && x.bit(4).unwrap());
        assert!(matches!(x.bit(0), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(x.bit(6), Err(Error::IndexOutOfRange { .. })));
        assert_eq!(x.padded(8).to_string(), "10110000");
        assert_eq!(Database::all(2).map(|d| d.to_string()).collect::<Vec<_>>(), ["00", "01", "10", "11"]);
        assert!("".parse::<Database>().is_err());
    }

    #[test]
    fn reconstruct_checks_lengths() {
        let plan = QueryPlan {
            index: 1,
            randomness: 0,
            queries: vec![BitString::empty()],
            reconstruction: vec!["01".parse().unwrap()],
        };
        assert!(reconstruct(&plan, &[]).is_err());
        assert!(reconstruct(&plan, &["1".parse().unwrap()]).is_err());
        assert!(reconstruct(&plan, &["01".parse().unwrap()]).unwrap());
    }

    #[test]
    fn registry() {
        for name in SCHEME_NAMES {
            assert_eq!(scheme_by_name(name, 8).unwrap().name(), name);
        }
        assert!(matches!(scheme_by_name("cube3", 8), Err(Error::UnknownScheme(_))));
    }

    /// Exhaustive recovery and query-multiset checks shared by every scheme.
    pub(crate) fn exhaustive_recovery(scheme: &dyn PirScheme) {
        let s = scheme.shape();
        for x in Database::all(scheme.n()) {
            for i in 1..=scheme.n() {
                for r in 0..s.randomness_size {
                    assert_eq!(
                        retrieve(scheme, &x, i, r).unwrap(),
                        x.bit(i).unwrap(),
                        "{} x={x} i={i} r={r}",
                        scheme.name()
                    );
                }
            }
        }
    }

    pub(crate) fn query_multisets_match(scheme: &dyn PirScheme) {
        let s = scheme.shape();
        let multiset = |i: usize, j: usize| {
            let mut qs: Vec<BitString> =
                (0..s.randomness_size).map(|r| scheme.gen_plan(i, r).unwrap().queries[j].clone()).collect();
            qs.sort();
            qs
        };
        for j in 0..s.k {
            let base = multiset(1, j);
            for i in 2..=scheme.n() {
                assert_eq!(multiset(i, j), base, "{} server {} i={i}", scheme.name(), j + 1);
            }
        }
    }
}
