//! Real-space QWZ lattice: geometry, site/flavor indexing and the
//! single-particle Hamiltonian with open boundaries.
//!
//! Flat index convention (frozen, shared by every other module): flavor is
//! fastest, then `x`, then `y`,
//!
//! ```text
//! index(x, y, flavor) = flavor + 2 * ((x - 1) + L_X * (y - 1))
//! ```
//!
//! with 1-based coordinates and `Up = 0`, `Down = 1`.

use std::collections::HashSet;

use ndarray::{Array1, Array2, ShapeBuilder};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{NessError, Result};

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub(crate) const I: Complex64 = Complex64::new(0.0, 1.0);

/// Default impurity energy shift, in units of the tunnelling amplitude.
pub const DEFAULT_IMPURITY_SHIFT: f64 = 1.0e4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    Up,
    Down,
}

impl Flavor {
    pub const BOTH: [Flavor; 2] = [Flavor::Up, Flavor::Down];

    pub fn offset(self) -> usize {
        match self {
            Flavor::Up => 0,
            Flavor::Down => 1,
        }
    }
}

/// A lattice site together with its flavor; coordinates are 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SiteIndex {
    pub x: usize,
    pub y: usize,
    pub flavor: Flavor,
}

impl SiteIndex {
    pub fn new(x: usize, y: usize, flavor: Flavor) -> Self {
        SiteIndex { x, y, flavor }
    }
}

/// Geometry and couplings of the clean lattice. Energies are in units of the
/// tunnelling amplitude `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub lx: usize,
    pub ly: usize,
    #[serde(default = "unit")]
    pub tx: f64,
    #[serde(default = "unit")]
    pub ty: f64,
    pub m: f64,
    pub omega0: f64,
}

fn unit() -> f64 {
    1.0
}

impl LatticeSpec {
    pub fn new(lx: usize, ly: usize, tx: f64, ty: f64, m: f64, omega0: f64) -> Result<Self> {
        let spec = LatticeSpec { lx, ly, tx, ty, m, omega0 };
        spec.validate()?;
        Ok(spec)
    }

    /// Square lattice with isotropic hopping `t = 1`.
    pub fn square(l: usize, m: f64, omega0: f64) -> Result<Self> {
        Self::new(l, l, 1.0, 1.0, m, omega0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lx < 1 || self.ly < 1 {
            return Err(NessError::Validation(format!(
                "lattice dimensions must be positive, got {}x{}",
                self.lx, self.ly
            )));
        }
        if !(self.tx > 0.0 && self.tx.is_finite()) || !(self.ty > 0.0 && self.ty.is_finite()) {
            return Err(NessError::Validation(format!(
                "tunnelling amplitudes must be positive and finite, got tx = {}, ty = {}",
                self.tx, self.ty
            )));
        }
        if !self.m.is_finite() || !self.omega0.is_finite() {
            return Err(NessError::Validation("m and omega0 must be finite".into()));
        }
        Ok(())
    }

    pub fn num_sites(&self) -> usize {
        self.lx * self.ly
    }

    /// Dimension of the single-particle Hilbert space, `2 L_X L_Y`.
    pub fn dim(&self) -> usize {
        2 * self.num_sites()
    }

    /// Whether the bulk bands carry a nonzero Chern number.
    ///
    /// The Bloch gap closes at `|m| = tx + ty` and `|m| = |tx - ty|`; the
    /// bands are topological in between. For `tx = ty = t` this is
    /// `0 < |m| < 2t`.
    pub fn is_topological(&self) -> bool {
        let am = self.m.abs();
        am > (self.tx - self.ty).abs() && am < self.tx + self.ty
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (1..=self.lx).contains(&x) && (1..=self.ly).contains(&y)
    }

    pub fn flat_index(&self, site: SiteIndex) -> Result<usize> {
        if !self.contains(site.x, site.y) {
            return Err(NessError::IndexOutOfRange { x: site.x, y: site.y, lx: self.lx, ly: self.ly });
        }
        Ok(self.index_unchecked(site.x, site.y, site.flavor))
    }

    pub fn site_of(&self, index: usize) -> Result<SiteIndex> {
        if index >= self.dim() {
            return Err(NessError::FlatIndexOutOfRange { index, dim: self.dim() });
        }
        let flavor = if index % 2 == 0 { Flavor::Up } else { Flavor::Down };
        let cell = index / 2;
        Ok(SiteIndex { x: cell % self.lx + 1, y: cell / self.lx + 1, flavor })
    }

    #[inline]
    pub(crate) fn index_unchecked(&self, x: usize, y: usize, flavor: Flavor) -> usize {
        flavor.offset() + 2 * ((x - 1) + self.lx * (y - 1))
    }

    /// First flat index of the two-flavor block of site `(x, y)`.
    #[inline]
    pub(crate) fn block(&self, x: usize, y: usize) -> usize {
        2 * ((x - 1) + self.lx * (y - 1))
    }

    /// Flat indices (both flavors) of every site in column `x`.
    pub fn column_indices(&self, x: usize) -> Vec<usize> {
        (1..=self.ly).flat_map(|y| Flavor::BOTH.map(|f| self.index_unchecked(x, y, f))).collect()
    }
}

/// Static on-site impurities: every listed site gets `delta` added to both
/// flavor energies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpuritySet {
    #[serde(default)]
    pub sites: Vec<(usize, usize)>,
    #[serde(default = "default_shift")]
    pub delta: f64,
}

fn default_shift() -> f64 {
    DEFAULT_IMPURITY_SHIFT
}

impl Default for ImpuritySet {
    fn default() -> Self {
        ImpuritySet::none()
    }
}

impl ImpuritySet {
    pub fn none() -> Self {
        ImpuritySet { sites: Vec::new(), delta: DEFAULT_IMPURITY_SHIFT }
    }

    pub fn at(sites: &[(usize, usize)]) -> Self {
        ImpuritySet { sites: sites.to_vec(), delta: DEFAULT_IMPURITY_SHIFT }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn validate(&self, spec: &LatticeSpec) -> Result<()> {
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(NessError::Validation(format!(
                "impurity shift must be finite and non-negative, got {}",
                self.delta
            )));
        }
        let mut seen = HashSet::new();
        for &(x, y) in &self.sites {
            if !spec.contains(x, y) {
                return Err(NessError::IndexOutOfRange { x, y, lx: spec.lx, ly: spec.ly });
            }
            if !seen.insert((x, y)) {
                return Err(NessError::Validation(format!("duplicate impurity site ({x}, {y})")));
            }
        }
        Ok(())
    }
}

/// Dense Hermitian single-particle Hamiltonian in the flat-index basis.
#[derive(Clone, Debug)]
pub struct Hamiltonian {
    pub spec: LatticeSpec,
    pub matrix: Array2<Complex64>,
}

impl Hamiltonian {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Flavor block of a bond operator `sigma_z + i sigma_y` (x bonds).
pub(crate) fn x_bond_block() -> [[Complex64; 2]; 2] {
    [[ONE, ONE], [-ONE, -ONE]]
}

/// Flavor block of a bond operator `sigma_z + i sigma_x` (y bonds).
pub(crate) fn y_bond_block() -> [[Complex64; 2]; 2] {
    [[ONE, I], [I, -ONE]]
}

pub fn build_hamiltonian(spec: &LatticeSpec, impurities: &ImpuritySet) -> Result<Hamiltonian> {
    spec.validate()?;
    impurities.validate(spec)?;
    let n = spec.dim();
    let mut h = Array2::<Complex64>::zeros((n, n));

    for y in 1..=spec.ly {
        for x in 1..=spec.lx {
            let b = spec.block(x, y);
            h[[b, b]] = Complex64::from(spec.omega0 + spec.m);
            h[[b + 1, b + 1]] = Complex64::from(spec.omega0 - spec.m);
        }
    }
    for &(x, y) in &impurities.sites {
        let b = spec.block(x, y);
        h[[b, b]] += impurities.delta;
        h[[b + 1, b + 1]] += impurities.delta;
    }

    // a^dag_{target} . block . a_{source} + h.c.
    let mut hop = |target: usize, source: usize, amp: f64, block: [[Complex64; 2]; 2]| {
        for s in 0..2 {
            for s2 in 0..2 {
                let v = block[s][s2] * (amp / 2.0);
                h[[target + s, source + s2]] += v;
                h[[source + s2, target + s]] += v.conj();
            }
        }
    };
    for y in 1..=spec.ly {
        for x in 1..spec.lx {
            hop(spec.block(x + 1, y), spec.block(x, y), spec.tx, x_bond_block());
        }
    }
    for y in 1..spec.ly {
        for x in 1..=spec.lx {
            hop(spec.block(x, y + 1), spec.block(x, y), spec.ty, y_bond_block());
        }
    }

    Ok(Hamiltonian { spec: spec.clone(), matrix: h })
}

/// Eigenvalues (ascending) and orthonormal eigenvectors (columns) of a
/// Hermitian single-particle Hamiltonian.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub energies: Array1<f64>,
    pub modes: Array2<Complex64>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    /// `max |U^dag U - 1|`.
    pub fn unitarity_defect(&self) -> f64 {
        let u = &self.modes;
        let g = u.t().mapv(|z| z.conj()).dot(u);
        max_abs_diff_identity(&g)
    }
}

pub fn single_particle_spectrum(h: &Hamiltonian) -> Result<Spectrum> {
    let (energies, modes) = fortran_copy(&h.matrix).eigh(UPLO::Lower)?;
    Ok(Spectrum { energies, modes })
}

/// Column-major copy; LAPACK wrappers return conjugated eigenvectors for
/// row-major complex input.
pub(crate) fn fortran_copy(a: &Array2<Complex64>) -> Array2<Complex64> {
    let mut f = Array2::zeros(a.raw_dim().f());
    f.assign(a);
    f
}

pub(crate) fn max_abs_diff_identity(a: &Array2<Complex64>) -> f64 {
    a.indexed_iter().map(|((i, j), z)| if i == j { (z - ONE).norm() } else { z.norm() }).fold(0.0, f64::max)
}

pub(crate) fn max_abs(a: &Array2<Complex64>) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub(crate) fn adjoint(a: &Array2<Complex64>) -> Array2<Complex64> {
    a.t().mapv(|z| z.conj())
}
