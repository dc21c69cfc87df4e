//! Particle currents, edge/bulk averages, the Landauer total current and
//! eigenmode occupations extracted from a NESS correlation matrix.

use std::cell::Cell;
use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use serde::Serialize;

use crate::baths::{BathSpec, SelfEnergyPair, Statistics};
use crate::error::{NessError, Result};
use crate::lattice::{adjoint, x_bond_block, y_bond_block, Flavor, LatticeSpec, Spectrum, ZERO};
use crate::negf::{CorrelationMatrix, Domain, EffectiveHamiltonian, Filling, QuadratureSpec, TransmissionKernel};
use crate::quadrature::{Integrator, Tolerance};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Direction {
    X,
    Y,
}

/// Mean bond currents. `jx[[x-1, y-1]]` flows from `(x, y)` to `(x+1, y)`,
/// `jy[[x-1, y-1]]` from `(x, y)` to `(x, y+1)`.
#[derive(Clone, Debug, Serialize)]
pub struct CurrentField {
    pub lx: usize,
    pub ly: usize,
    pub jx: Array2<f64>,
    pub jy: Array2<f64>,
    /// Largest imaginary part discarded when forming the expectation values.
    pub imaginary_residue: f64,
}

impl CurrentField {
    pub fn zeros(lx: usize, ly: usize) -> Self {
        CurrentField {
            lx,
            ly,
            jx: Array2::zeros((lx.saturating_sub(1), ly)),
            jy: Array2::zeros((lx, ly.saturating_sub(1))),
            imaginary_residue: 0.0,
        }
    }

    /// Current on the x bond leaving site `(x, y)`, 1-based.
    pub fn x(&self, x: usize, y: usize) -> f64 {
        self.jx[[x - 1, y - 1]]
    }

    pub fn y(&self, x: usize, y: usize) -> f64 {
        self.jy[[x - 1, y - 1]]
    }

    pub fn max_abs(&self) -> f64 {
        self.jx.iter().chain(self.jy.iter()).fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Every bond as `(x, y, direction, value)`, x bonds first, row-major in y.
    pub fn bonds(&self) -> Vec<(usize, usize, Direction, f64)> {
        let mut out = Vec::with_capacity(self.jx.len() + self.jy.len());
        for y in 1..=self.ly {
            for x in 1..self.lx {
                out.push((x, y, Direction::X, self.x(x, y)));
            }
        }
        for y in 1..self.ly {
            for x in 1..=self.lx {
                out.push((x, y, Direction::Y, self.y(x, y)));
            }
        }
        out
    }

    fn on_perimeter(&self, x: usize, y: usize, dir: Direction) -> bool {
        match dir {
            Direction::X => y == 1 || y == self.ly,
            Direction::Y => x == 1 || x == self.lx,
        }
    }

    /// `max |J|` on perimeter bonds divided by `max |J|` on interior bonds.
    pub fn edge_dominance(&self) -> f64 {
        let (mut edge, mut inner) = (0.0f64, 0.0f64);
        for (x, y, dir, v) in self.bonds() {
            if self.on_perimeter(x, y, dir) {
                edge = edge.max(v.abs());
            } else {
                inner = inner.max(v.abs());
            }
        }
        edge / inner
    }

    /// `sum_y J^X_{x,y}` for each bond column `x = 1..L_X-1`.
    pub fn column_sums(&self) -> Vec<f64> {
        self.jx.rows().into_iter().map(|r| r.sum()).collect()
    }

    /// Net lattice inflow at each site. Zero in a NESS except on the two
    /// bath-coupled columns.
    pub fn divergence(&self) -> Array2<f64> {
        let mut d = Array2::zeros((self.lx, self.ly));
        for x in 1..=self.lx {
            for y in 1..=self.ly {
                let mut v = 0.0;
                if x > 1 {
                    v += self.x(x - 1, y);
                }
                if x < self.lx {
                    v -= self.x(x, y);
                }
                if y > 1 {
                    v += self.y(x, y - 1);
                }
                if y < self.ly {
                    v -= self.y(x, y);
                }
                d[[x - 1, y - 1]] = v;
            }
        }
        d
    }

    /// Largest continuity residual over sites not coupled to a reservoir.
    pub fn max_interior_divergence(&self) -> f64 {
        let d = self.divergence();
        let mut m: f64 = 0.0;
        for x in 2..self.lx {
            for y in 1..=self.ly {
                m = m.max(d[[x - 1, y - 1]].abs());
            }
        }
        m
    }
}

/// `<(t/2i) a^dag_target . B . a_source + h.c.>` with `C_{jk} = <a^dag_k a_j>`.
fn bond_expectation(
    c: &Array2<Complex64>,
    source: usize,
    target: usize,
    amp: f64,
    block: &[[Complex64; 2]; 2],
) -> Complex64 {
    let mut forward = ZERO;
    let mut backward = ZERO;
    for s in 0..2 {
        for s2 in 0..2 {
            forward += block[s][s2] * c[[source + s2, target + s]];
            backward += block[s][s2].conj() * c[[target + s, source + s2]];
        }
    }
    let half = Complex64::new(0.0, -0.5 * amp);
    half * forward - half * backward
}

pub fn bond_currents(c: &CorrelationMatrix, spec: &LatticeSpec) -> Result<CurrentField> {
    if c.dim() != spec.dim() {
        return Err(NessError::DimensionMismatch { expected: spec.dim(), found: c.dim() });
    }
    let m = &c.matrix;
    let mut field = CurrentField::zeros(spec.lx, spec.ly);
    let bx = x_bond_block();
    let by = y_bond_block();
    let mut residue: f64 = 0.0;
    for y in 1..=spec.ly {
        for x in 1..spec.lx {
            let j = bond_expectation(m, spec.block(x, y), spec.block(x + 1, y), spec.tx, &bx);
            residue = residue.max(j.im.abs());
            field.jx[[x - 1, y - 1]] = j.re;
        }
    }
    for y in 1..spec.ly {
        for x in 1..=spec.lx {
            let j = bond_expectation(m, spec.block(x, y), spec.block(x, y + 1), spec.ty, &by);
            residue = residue.max(j.im.abs());
            field.jy[[x - 1, y - 1]] = j.re;
        }
    }
    field.imaginary_residue = residue;
    Ok(field)
}

/// Site densities `n_{x,y} = sum_sigma C_{(x,y,sigma),(x,y,sigma)}` and their
/// rate of change `-i[H, C]` under the closed lattice dynamics. Used as an
/// independent check of the current sign convention.
pub fn hamiltonian_density_rate(c: &CorrelationMatrix, h: &crate::lattice::Hamiltonian) -> Array2<f64> {
    let hc = h.matrix.dot(&c.matrix);
    let comm = &hc - &adjoint(&hc);
    let spec = &h.spec;
    let mut out = Array2::zeros((spec.lx, spec.ly));
    for x in 1..=spec.lx {
        for y in 1..=spec.ly {
            let mut v = ZERO;
            for f in Flavor::BOTH {
                let i = spec.index_unchecked(x, y, f);
                v += comm[[i, i]];
            }
            // -i (HC - CH) with CH = (HC)^dag for Hermitian H and C
            out[[x - 1, y - 1]] = (Complex64::new(0.0, -1.0) * v).re;
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurrentDiagnostics {
    pub j_edge: f64,
    pub j_bulk: f64,
    pub j_tot: f64,
    pub x_mid: usize,
}

/// Edge circulation and mid-column throughput. `J_edge` keeps the
/// `1 / (2 L_X)` prefactor while summing over the `L_X - 1` existing bonds.
pub fn edge_bulk_diagnostics(field: &CurrentField, spec: &LatticeSpec) -> CurrentDiagnostics {
    let (lx, ly) = (spec.lx, spec.ly);
    let mut edge = 0.0;
    for x in 1..lx {
        edge += field.x(x, ly) - field.x(x, 1);
    }
    let j_edge = edge / (2.0 * lx as f64);
    let x_mid = (lx / 2).max(1);
    let j_bulk = if lx > 1 { (1..=ly).map(|y| field.x(x_mid, y)).sum::<f64>() / ly as f64 } else { 0.0 };
    CurrentDiagnostics { j_edge, j_bulk, j_tot: ly as f64 * j_bulk, x_mid }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LandauerCurrent {
    pub j_tot: f64,
    pub error_estimate: f64,
    /// Smallest transmission seen at a quadrature node; non-negative up to
    /// roundoff.
    pub min_transmission: f64,
}

/// `J_tot = int domega/2pi T(omega) [n_h(omega) - n_c(omega)]`.
pub fn landauer_total(
    eff: &EffectiveHamiltonian,
    se: &SelfEnergyPair,
    bath: &BathSpec,
    quad: &QuadratureSpec,
) -> Result<LandauerCurrent> {
    bath.validate()?;
    if bath.statistics == Statistics::Boson {
        bath.check_admissible(eff.eigenvalues.iter().map(|l| l.re))?;
    }
    if bath.t_h == bath.t_c {
        return Ok(LandauerCurrent { j_tot: 0.0, error_estimate: 0.0, min_transmission: 0.0 });
    }
    let domain = Domain::new(eff, Filling::Thermal(bath), quad)?;
    let kernel = TransmissionKernel::new(eff, se);
    let min_t = Cell::new(f64::INFINITY);
    let failed = Cell::new(false);
    // T(omega) has peaks of area ~gamma, so an absolute tolerance that
    // ignores gamma lets the whole integral slip through at weak coupling.
    let integrator = Integrator::new(Tolerance {
        rel: (quad.rel_tol * 1.0e-2).max(1.0e-14),
        abs: (quad.abs_tol * 1.0e-2 * bath.gamma.min(1.0)).max(1.0e-300),
    });
    let est = integrator.integrate(
        |w, out: &mut [Complex64]| {
            let dn = bath.distribution_difference(w).unwrap_or(0.0);
            let t = match kernel.evaluate(eff, se, w) {
                Ok(t) => t,
                Err(_) => {
                    failed.set(true);
                    0.0
                }
            };
            min_t.set(min_t.get().min(t));
            out[0] = Complex64::from(t * dn / (2.0 * PI));
        },
        1,
        domain.lower,
        domain.upper,
        &domain.all(&eff.eigenvalues),
    )?;
    if failed.get() {
        return Err(NessError::LinearAlgebra("transmission evaluation failed".into()));
    }
    Ok(LandauerCurrent { j_tot: est.value[0].re, error_estimate: est.error, min_transmission: min_t.get() })
}

#[derive(Clone, Debug, Serialize)]
pub struct ModeOccupation {
    pub omega: Vec<f64>,
    pub n: Vec<f64>,
    /// Largest imaginary part of a diagonal element of `U^dag C U`.
    pub imaginary_residue: f64,
}

/// `n_alpha = [U^dag C U]_{alpha alpha}`.
pub fn mode_occupations(c: &CorrelationMatrix, spectrum: &Spectrum) -> Result<ModeOccupation> {
    let u = &spectrum.modes;
    if u.nrows() != c.dim() {
        return Err(NessError::DimensionMismatch { expected: u.nrows(), found: c.dim() });
    }
    let cu = c.matrix.dot(u);
    let mut n = Vec::with_capacity(u.ncols());
    let mut residue: f64 = 0.0;
    for a in 0..u.ncols() {
        let v: Complex64 = u.column(a).iter().zip(cu.column(a).iter()).map(|(p, q)| p.conj() * q).sum();
        residue = residue.max(v.im.abs());
        n.push(v.re);
    }
    Ok(ModeOccupation { omega: spectrum.energies.to_vec(), n, imaginary_residue: residue })
}
