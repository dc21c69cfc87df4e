//! Secular weak-coupling steady state in the energy eigenbasis.
//!
//! Each eigenmode `alpha` exchanges particles with the hot reservoir at rate
//! `gamma s_alpha` and with the cold one at rate `gamma r_alpha`, where
//! `s_alpha` and `r_alpha` are its weights on the first and last column.
//! The steady occupation is the rate-weighted average of the two reservoir
//! distributions and all mode coherences decay.

use log::warn;
use ndarray::Array2;
use num_complex::Complex64;
use serde::Serialize;

use crate::baths::{BathSpec, Reservoir, Statistics};
use crate::error::{NessError, Result};
use crate::lattice::{adjoint, LatticeSpec, Spectrum};
use crate::negf::CorrelationMatrix;

/// Energy separation below which two modes count as degenerate.
pub const DEGENERACY_GAP: f64 = 1.0e-8;

/// Total boundary weight below which a mode counts as decoupled.
pub const DECOUPLED_WEIGHT: f64 = 1.0e-14;

#[derive(Clone, Debug, Serialize)]
pub struct ModeCouplings {
    /// Weight of each mode on the hot column `x = 1`.
    pub s: Vec<f64>,
    /// Weight of each mode on the cold column `x = L_X`.
    pub r: Vec<f64>,
    /// Smallest spacing between consecutive mode energies.
    pub min_gap: f64,
    pub degenerate: bool,
}

impl ModeCouplings {
    pub fn max_asymmetry(&self) -> f64 {
        self.s.iter().zip(&self.r).fold(0.0, |m, (s, r)| m.max((s - r).abs()))
    }
}

pub fn mode_couplings(spectrum: &Spectrum, spec: &LatticeSpec) -> Result<ModeCouplings> {
    let u = &spectrum.modes;
    if u.nrows() != spec.dim() {
        return Err(NessError::DimensionMismatch { expected: spec.dim(), found: u.nrows() });
    }
    let column_weight = |x: usize| -> Vec<f64> {
        let rows = spec.column_indices(x);
        (0..u.ncols()).map(|a| rows.iter().map(|&i| u[[i, a]].norm_sqr()).sum()).collect()
    };
    let s = column_weight(1);
    let r = column_weight(spec.lx);
    let min_gap = spectrum.energies.windows(2).into_iter().map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let degenerate = min_gap < DEGENERACY_GAP;
    if degenerate {
        warn!("spectrum has degenerate modes (gap {min_gap:e}); secular form applied regardless");
    }
    Ok(ModeCouplings { s, r, min_gap, degenerate })
}

/// `n_alpha = [s n_h(omega_alpha) + r n_c(omega_alpha)] / (s + r)`.
pub fn weak_coupling_occupations(spectrum: &Spectrum, couplings: &ModeCouplings, bath: &BathSpec) -> Result<Vec<f64>> {
    bath.validate()?;
    if bath.statistics == Statistics::Boson {
        bath.check_admissible(spectrum.energies.iter().copied())?;
    }
    let mut decoupled = 0;
    let mut n = Vec::with_capacity(spectrum.len());
    for (a, &w) in spectrum.energies.iter().enumerate() {
        let nh = bath.distribution(w, Reservoir::Hot)?;
        let nc = bath.distribution(w, Reservoir::Cold)?;
        let (s, r) = (couplings.s[a], couplings.r[a]);
        if s + r < DECOUPLED_WEIGHT {
            decoupled += 1;
            n.push(0.5 * (nh + nc));
        } else {
            n.push((s * nh + r * nc) / (s + r));
        }
    }
    if decoupled > 0 {
        warn!("{decoupled} modes have no boundary weight; their occupation is set to the reservoir mean");
    }
    Ok(n)
}

/// `C = U diag(n_alpha) U^dag`.
pub fn weak_coupling_correlation(
    spectrum: &Spectrum,
    couplings: &ModeCouplings,
    bath: &BathSpec,
) -> Result<CorrelationMatrix> {
    let n = weak_coupling_occupations(spectrum, couplings, bath)?;
    let u = &spectrum.modes;
    let mut scaled = u.clone();
    for (mut col, v) in scaled.columns_mut().into_iter().zip(n.iter()) {
        col.mapv_inplace(|z| z * *v);
    }
    let c = scaled.dot(&adjoint(u));
    let herm = (&c + &adjoint(&c)).mapv(|z| z * 0.5);
    Ok(CorrelationMatrix::from_matrix(herm))
}

/// `max |dC/dt|` under the secular Lindblad generator, evaluated in the
/// frame rotating with the mode energies (the coherent phase `e^{-i w t}`
/// does not enter the fixed-point condition).
///
/// Populations relax as `gamma s (n_h - n) + gamma r (n_c - n)`; the
/// coherence between modes `alpha` and `beta` decays at
/// `gamma (s_alpha + r_alpha + s_beta + r_beta) / 2`.
pub fn lindblad_residual(
    spectrum: &Spectrum,
    couplings: &ModeCouplings,
    bath: &BathSpec,
    c: &CorrelationMatrix,
) -> Result<f64> {
    let u = &spectrum.modes;
    if u.nrows() != c.dim() {
        return Err(NessError::DimensionMismatch { expected: u.nrows(), found: c.dim() });
    }
    let ct = adjoint(u).dot(&c.matrix).dot(u);
    let g = bath.gamma;
    let kappa: Vec<f64> = couplings.s.iter().zip(&couplings.r).map(|(s, r)| s + r).collect();
    let mut residual: f64 = 0.0;
    for a in 0..ct.nrows() {
        let w = spectrum.energies[a];
        let nh = bath.distribution(w, Reservoir::Hot)?;
        let nc = bath.distribution(w, Reservoir::Cold)?;
        for b in 0..ct.ncols() {
            let rate = if a == b {
                let n = ct[[a, a]];
                let d = g * couplings.s[a] * (nh - n.re) + g * couplings.r[a] * (nc - n.re);
                Complex64::new(d, -g * kappa[a] * n.im)
            } else {
                ct[[a, b]] * (-0.5 * g * (kappa[a] + kappa[b]))
            };
            residual = residual.max(rate.norm());
        }
    }
    Ok(residual)
}

/// Rate of change of `<N>` for one mode coupled to one reservoir, split into
/// the non-Hermitian Hamiltonian part and the two jump terms, given the
/// occupation moments `<N>` and `<N^2>`.
///
/// Jumps are `sqrt(rate n) c^dag` (gain) and `sqrt(rate (1 -+ n)) c` (loss),
/// with the upper sign for fermions. The anti-Hermitian generator is
/// `K = (rate / 2) [n + (1 -+ 2 n) N]`.
fn jump_decomposed_rate(rate: f64, nbar: f64, n1: f64, n2: f64, statistics: Statistics) -> f64 {
    let sign = match statistics {
        Statistics::Boson => 1.0,
        Statistics::Fermion => -1.0,
    };
    // <c N c^dag> = <(1 +- N)^2>, <c^dag N c> = <N^2 - N>
    let gain = rate * nbar * (1.0 + 2.0 * sign * n1 + n2);
    let loss = rate * (1.0 + sign * nbar) * (n2 - n1);
    let anti = -rate * (nbar * n1 + (1.0 + 2.0 * sign * nbar) * n2);
    gain + loss + anti
}

/// Verifies on deterministic test occupations that the non-Hermitian
/// Hamiltonian plus quantum-jump form of the dissipator reproduces the
/// mode-wise rate equation to `1e-12` relative.
pub fn jump_decomposition_check(spectrum: &Spectrum, couplings: &ModeCouplings, bath: &BathSpec) -> Result<bool> {
    let stats = bath.statistics;
    let g = bath.gamma;
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    for (a, &w) in spectrum.energies.iter().enumerate() {
        let nh = bath.distribution(w, Reservoir::Hot)?;
        let nc = bath.distribution(w, Reservoir::Cold)?;
        let frac = ((a + 1) as f64 * golden).fract();
        // single-mode Fock moments: a fermion has N^2 = N, a thermal boson
        // state has <N^2> = 2<N>^2 + <N>
        let (n1, n2) = match stats {
            Statistics::Fermion => (frac, frac),
            Statistics::Boson => {
                let n1 = 4.0 * frac;
                (n1, 2.0 * n1 * n1 + n1)
            }
        };
        let decomposed = jump_decomposed_rate(g * couplings.s[a], nh, n1, n2, stats)
            + jump_decomposed_rate(g * couplings.r[a], nc, n1, n2, stats);
        let direct = g * couplings.s[a] * (nh - n1) + g * couplings.r[a] * (nc - n1);
        let scale = g * (1.0 + nh + nc + n2);
        if (decomposed - direct).abs() > 1e-12 * scale {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Commutator `[C, H]` in max norm; vanishes for an energy-diagonal state.
pub fn commutator_norm(c: &CorrelationMatrix, h: &Array2<Complex64>) -> f64 {
    let ch = c.matrix.dot(h);
    let hc = h.dot(&c.matrix);
    (&ch - &hc).iter().fold(0.0, |m, z| m.max(z.norm()))
}
