//! Named reference parameter sets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weights::WeightParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// `α = 1`, `λ = 1`, `t = 1`.
    N1,
    /// `α = 1`, `λ = (0.7, 0.3)`, `t = (0.5, 1.5)`.
    N2,
}

impl Preset {
    pub const ALL: [Preset; 2] = [Preset::N1, Preset::N2];

    pub fn name(self) -> &'static str {
        match self {
            Preset::N1 => "n1",
            Preset::N2 => "n2",
        }
    }

    pub fn alpha(self) -> &'static str {
        "1"
    }

    /// `(t_k, λ_k)` as decimal strings.
    pub fn pairs(self) -> &'static [(&'static str, &'static str)] {
        match self {
            Preset::N1 => &[("1", "1")],
            Preset::N2 => &[("0.5", "0.7"), ("1.5", "0.3")],
        }
    }

    pub fn params(self, precision_bits: u32) -> Result<WeightParams> {
        WeightParams::from_decimals(self.alpha(), self.pairs(), precision_bits)
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "n1" => Ok(Preset::N1),
            "n2" => Ok(Preset::N2),
            other => Err(Error::Parameter(format!("unknown preset '{other}' (expected n1 or n2)"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_build_and_parse() {
        for p in Preset::ALL {
            let w = p.params(128).unwrap();
            assert_eq!(*w.alpha(), 1);
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert_eq!(Preset::N2.params(128).unwrap().len(), 2);
        assert!("n3".parse::<Preset>().is_err());
    }
}
