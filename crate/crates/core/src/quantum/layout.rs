use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};

/// One named register and its width in bits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Register {
    pub name: String,
    pub width: usize,
}

/// Ordered list of named registers. A basis string over the layout is the
/// concatenation of each register's bits in order; zero-width registers are
/// allowed and occupy no bits.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<Register>", into = "Vec<Register>")]
pub struct RegisterLayout(Arc<Inner>);

#[derive(Debug, Default, PartialEq, Eq)]
struct Inner {
    registers: Vec<Register>,
    offsets: Vec<usize>,
    total: usize,
}

impl PartialEq for RegisterLayout {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0 == other.0
    }
}

impl Eq for RegisterLayout {}

impl RegisterLayout {
    pub fn new<S: Into<String>>(registers: impl IntoIterator<Item = (S, usize)>) -> Result<Self> {
        let registers: Vec<Register> = registers
            .into_iter()
            .map(|(name, width)| Register { name: name.into(), width })
            .collect();
        Self::from_registers(registers)
    }

    fn from_registers(registers: Vec<Register>) -> Result<Self> {
        let mut offsets = Vec::with_capacity(registers.len());
        let mut total = 0;
        for (k, r) in registers.iter().enumerate() {
            if registers[..k].iter().any(|o| o.name == r.name) {
                return Err(Error::DuplicateRegister(r.name.clone()));
            }
            offsets.push(total);
            total += r.width;
        }
        Ok(RegisterLayout(Arc::new(Inner { registers, offsets, total })))
    }

    pub fn total_width(&self) -> usize {
        self.0.total
    }

    pub fn registers(&self) -> &[Register] {
        &self.0.registers
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.registers.iter().map(|r| r.name.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.position(name).is_some()
    }

    fn position(&self, name: &str) -> Option<usize> {
        self.0.registers.iter().position(|r| r.name == name)
    }

    /// Bit range occupied by a register.
    pub fn range(&self, name: &str) -> Result<Range<usize>> {
        let p = self.position(name).ok_or_else(|| Error::UnknownRegister(name.to_string()))?;
        Ok(self.0.offsets[p]..self.0.offsets[p] + self.0.registers[p].width)
    }

    pub fn width(&self, name: &str) -> Result<usize> {
        Ok(self.range(name)?.len())
    }

    /// Layout with `other`'s registers appended.
    pub fn concat(&self, other: &RegisterLayout) -> Result<RegisterLayout> {
        let mut regs = self.0.registers.clone();
        regs.extend(other.0.registers.iter().cloned());
        Self::from_registers(regs)
    }

    /// Sub-layout of the named registers, kept in this layout's order.
    pub fn sub_layout(&self, names: &[&str]) -> Result<RegisterLayout> {
        for n in names {
            if !self.contains(n) {
                return Err(Error::UnknownRegister(n.to_string()));
            }
        }
        let regs = self.0.registers.iter().filter(|r| names.contains(&r.name.as_str())).cloned().collect();
        Self::from_registers(regs)
    }

    /// Extracts the bits of a register from a full basis string.
    pub fn extract(&self, basis: &BitString, name: &str) -> Result<BitString> {
        let r = self.range(name)?;
        Ok(basis.slice(r.start, r.len()))
    }

    pub fn check(&self, basis: &BitString) -> Result<()> {
        if basis.len() != self.0.total {
            return Err(Error::WidthMismatch { expected: self.0.total, got: basis.len() });
        }
        Ok(())
    }

    /// Assembles a basis string from per-register values given in layout order.
    pub fn assemble(&self, parts: &[BitString]) -> Result<BitString> {
        if parts.len() != self.0.registers.len() {
            return Err(Error::LayoutMismatch(format!(
                "{} register values for {} registers",
                parts.len(),
                self.0.registers.len()
            )));
        }
        for (p, r) in parts.iter().zip(&self.0.registers) {
            if p.len() != r.width {
                return Err(Error::WidthMismatch { expected: r.width, got: p.len() });
            }
        }
        Ok(BitString::concat_all(parts))
    }
}

impl TryFrom<Vec<Register>> for RegisterLayout {
    type Error = Error;
    fn try_from(v: Vec<Register>) -> Result<Self> {
        Self::from_registers(v)
    }
}

impl From<RegisterLayout> for Vec<Register> {
    fn from(l: RegisterLayout) -> Self {
        l.0.registers.clone()
    }
}
