use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Per-epoch learning-rate decay.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    /// `lr0 · (1 − e/E)^power`
    #[default]
    Poly,
    /// `lr0 · power^e`
    Exp,
}

impl LrSchedule {
    pub fn lr(self, lr0: f64, epoch: usize, epochs: usize, power: f64) -> f64 {
        match self {
            LrSchedule::Poly => {
                if epochs == 0 || epoch >= epochs {
                    0.0
                } else {
                    lr0 * (1.0 - epoch as f64 / epochs as f64).powf(power)
                }
            }
            LrSchedule::Exp => lr0 * power.powi(epoch as i32),
        }
    }
}

impl fmt::Display for LrSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LrSchedule::Poly => "poly",
            LrSchedule::Exp => "exp",
        })
    }
}

impl FromStr for LrSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "poly" => Ok(LrSchedule::Poly),
            "exp" => Ok(LrSchedule::Exp),
            other => Err(Error::Config(format!("unknown lr schedule `{other}` (expected poly or exp)"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poly_endpoints() {
        assert_eq!(LrSchedule::Poly.lr(3e-4, 0, 50, 0.9), 3e-4);
        assert_eq!(LrSchedule::Poly.lr(3e-4, 50, 50, 0.9), 0.0);
        assert!((LrSchedule::Poly.lr(3e-4, 25, 50, 0.9) - 1.6077e-4).abs() < 1e-8);
    }

    #[test]
    fn poly_strictly_decreases() {
        let lrs: Vec<f64> = (0..=50).map(|e| LrSchedule::Poly.lr(3e-4, e, 50, 0.9)).collect();
        assert!(lrs.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn exp_decays_geometrically() {
        assert_eq!(LrSchedule::Exp.lr(1.0, 0, 10, 0.9), 1.0);
        assert!((LrSchedule::Exp.lr(1.0, 2, 10, 0.9) - 0.81).abs() < 1e-15);
    }

    #[test]
    fn parses() {
        assert_eq!("exp".parse::<LrSchedule>().unwrap(), LrSchedule::Exp);
        assert!("step".parse::<LrSchedule>().is_err());
    }
}
