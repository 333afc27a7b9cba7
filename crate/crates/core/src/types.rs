//! Small value types shared by every module: bases, bits, BSM outcomes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Encoding family of a BB84 state. `X` is basis bit 0, `Y` is basis bit 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    X,
    Y,
}

impl Basis {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Basis::Y
        } else {
            Basis::X
        }
    }

    pub fn bit(self) -> bool {
        matches!(self, Basis::Y)
    }
}

/// The two bits fed to a BB84 preparation device.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisBit {
    pub basis: Basis,
    pub bit: bool,
}

impl BasisBit {
    pub fn new(basis: Basis, bit: bool) -> Self {
        Self { basis, bit }
    }

    /// Relative phase of the V component, `i^basis * (-1)^bit`, as an angle.
    pub fn polarization_phase(self) -> f64 {
        let mut phase = 0.0;
        if self.basis.bit() {
            phase += std::f64::consts::FRAC_PI_2;
        }
        if self.bit {
            phase += std::f64::consts::PI;
        }
        phase
    }
}

/// Outcome `z` reported by a prover: the parity guess or no detection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    /// Psi+ projection; claims `x ^ y == 0`.
    Zero,
    /// Psi- projection; claims `x ^ y == 1`.
    One,
    Inconclusive,
}

impl Outcome {
    pub fn from_parity(parity: bool) -> Self {
        if parity {
            Outcome::One
        } else {
            Outcome::Zero
        }
    }

    pub fn is_conclusive(self) -> bool {
        !matches!(self, Outcome::Inconclusive)
    }

    /// The claimed parity, if any.
    pub fn parity(self) -> Option<bool> {
        match self {
            Outcome::Zero => Some(false),
            Outcome::One => Some(true),
            Outcome::Inconclusive => None,
        }
    }

    /// True when the outcome is conclusive and disagrees with `x ^ y`.
    pub fn is_error(self, x: bool, y: bool) -> bool {
        self.parity().is_some_and(|p| p != (x ^ y))
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Zero => "0",
            Outcome::One => "1",
            Outcome::Inconclusive => "-",
        })
    }
}

impl FromStr for Outcome {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "0" => Ok(Outcome::Zero),
            "1" => Ok(Outcome::One),
            "-" => Ok(Outcome::Inconclusive),
            other => Err(format!("invalid outcome `{other}`")),
        }
    }
}
