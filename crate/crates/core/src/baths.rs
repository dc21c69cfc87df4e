//! Thermal reservoirs: distribution functions and wide-band self-energies.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{NessError, Result};
use crate::lattice::{Flavor, LatticeSpec};

/// Bose occupations below this value are flushed to zero.
pub const BOSE_FLUSH: f64 = 1.0e-300;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistics {
    Boson,
    Fermion,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Reservoir {
    Hot,
    Cold,
}

/// Reservoir temperatures, chemical potential and the wide-band coupling
/// rate shared by both reservoirs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSpec {
    pub t_h: f64,
    pub t_c: f64,
    #[serde(default)]
    pub mu: f64,
    pub gamma: f64,
    pub statistics: Statistics,
}

impl BathSpec {
    pub fn new(statistics: Statistics, t_h: f64, t_c: f64, mu: f64, gamma: f64) -> Result<Self> {
        let bath = BathSpec { t_h, t_c, mu, gamma, statistics };
        bath.validate()?;
        Ok(bath)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(NessError::Validation(format!("coupling rate gamma must be positive, got {}", self.gamma)));
        }
        if !(self.t_h > 0.0 && self.t_h.is_finite()) || !(self.t_c > 0.0 && self.t_c.is_finite()) {
            return Err(NessError::Validation(format!(
                "temperatures must be positive, got T_h = {}, T_c = {}",
                self.t_h, self.t_c
            )));
        }
        if !self.mu.is_finite() {
            return Err(NessError::Validation("chemical potential must be finite".into()));
        }
        if self.statistics == Statistics::Boson && self.mu != 0.0 {
            return Err(NessError::Validation("bosonic chemical potential must be zero".into()));
        }
        Ok(())
    }

    pub fn temperature(&self, reservoir: Reservoir) -> f64 {
        match reservoir {
            Reservoir::Hot => self.t_h,
            Reservoir::Cold => self.t_c,
        }
    }

    pub fn max_temperature(&self) -> f64 {
        self.t_h.max(self.t_c)
    }

    pub fn distribution(&self, omega: f64, reservoir: Reservoir) -> Result<f64> {
        occupation(omega, self.temperature(reservoir), self.mu, self.statistics)
    }

    /// `n_h(omega) - n_c(omega)`, evaluated without cancellation in the
    /// filled fermionic sea.
    pub fn distribution_difference(&self, omega: f64) -> Result<f64> {
        match self.statistics {
            Statistics::Fermion if omega < self.mu => {
                // 1 - n(mu + d) = n(mu - d)
                let mirror = 2.0 * self.mu - omega;
                Ok(occupation(mirror, self.t_c, self.mu, Statistics::Fermion)?
                    - occupation(mirror, self.t_h, self.mu, Statistics::Fermion)?)
            }
            _ => Ok(self.distribution(omega, Reservoir::Hot)? - self.distribution(omega, Reservoir::Cold)?),
        }
    }

    /// Every system eigenfrequency must lie above the (zero) bosonic
    /// chemical potential.
    pub fn check_admissible(&self, energies: impl IntoIterator<Item = f64>) -> Result<()> {
        if self.statistics == Statistics::Boson {
            if let Some(bad) = energies.into_iter().find(|&w| w <= self.mu) {
                return Err(NessError::BosonicDivergence { gap: bad - self.mu });
            }
        }
        Ok(())
    }
}

/// Reservoir occupation `1 / (exp((omega - mu) / T) +- 1)`.
pub fn occupation(omega: f64, temperature: f64, mu: f64, statistics: Statistics) -> Result<f64> {
    let x = (omega - mu) / temperature;
    match statistics {
        Statistics::Fermion => Ok(if x > 0.0 {
            let e = (-x).exp();
            e / (1.0 + e)
        } else {
            1.0 / (x.exp() + 1.0)
        }),
        Statistics::Boson => {
            if !(x > 0.0) {
                return Err(NessError::BosonicDivergence { gap: omega - mu });
            }
            let n = 1.0 / x.exp_m1();
            Ok(if n < BOSE_FLUSH { 0.0 } else { n })
        }
    }
}

/// Diagonal rate matrices `Gamma_h` (column `x = 1`) and `Gamma_c`
/// (column `x = L_X`), stored as their diagonals.
#[derive(Clone, Debug, PartialEq)]
pub struct SelfEnergyPair {
    pub hot: Array1<f64>,
    pub cold: Array1<f64>,
}

impl SelfEnergyPair {
    pub fn dim(&self) -> usize {
        self.hot.len()
    }

    pub fn diagonal(&self, reservoir: Reservoir) -> &Array1<f64> {
        match reservoir {
            Reservoir::Hot => &self.hot,
            Reservoir::Cold => &self.cold,
        }
    }

    pub fn total(&self) -> Array1<f64> {
        &self.hot + &self.cold
    }

    pub fn matrix(&self, reservoir: Reservoir) -> Array2<Complex64> {
        Array2::from_diag(&self.diagonal(reservoir).mapv(Complex64::from))
    }

    pub fn total_matrix(&self) -> Array2<Complex64> {
        Array2::from_diag(&self.total().mapv(Complex64::from))
    }

    /// Indices with a nonzero rate for the given reservoir.
    pub fn support(&self, reservoir: Reservoir) -> Vec<usize> {
        self.diagonal(reservoir).iter().enumerate().filter(|(_, &g)| g != 0.0).map(|(i, _)| i).collect()
    }
}

pub fn build_self_energies(spec: &LatticeSpec, bath: &BathSpec) -> Result<SelfEnergyPair> {
    spec.validate()?;
    bath.validate()?;
    if spec.lx < 2 {
        return Err(NessError::Configuration(
            "hot and cold reservoirs need distinct columns: L_X must be at least 2".into(),
        ));
    }
    let n = spec.dim();
    let mut hot = Array1::zeros(n);
    let mut cold = Array1::zeros(n);
    for y in 1..=spec.ly {
        for f in Flavor::BOTH {
            hot[spec.index_unchecked(1, y, f)] = bath.gamma;
            cold[spec.index_unchecked(spec.lx, y, f)] = bath.gamma;
        }
    }
    Ok(SelfEnergyPair { hot, cold })
}
