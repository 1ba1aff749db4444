//! Symmetrically-private information retrieval laboratory.
//!
//! Classical linear-reconstruction PIR schemes ([`pir`]), their compilation
//! into quantum SPIR protocols without shared randomness ([`compiler`]), the
//! two-server Bell-state scheme ([`bell`]), exact recovery and privacy audits
//! ([`audit`]), the dishonest-user attack and its countermeasure
//! ([`adversary`]), and the experiment harness behind the `qspir` binary
//! ([`harness`]).

pub mod adversary;
pub mod audit;
pub mod bell;
pub mod bits;
pub mod compiler;
pub mod error;
pub mod harness;
pub mod pir;
pub mod protocol;
pub mod quantum;
pub mod transcript;

pub use bits::BitString;
pub use error::{Error, Result};
