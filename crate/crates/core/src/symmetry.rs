//! Discrete lattice and flavor symmetries as matrices on flat indices.
//!
//! A unitary action maps `H -> W H W^dag`; an antiunitary one (composed with
//! complex conjugation `Theta` in the site/flavor basis) maps
//! `H -> W H^* W^dag`. The generalized particle-hole action anticommutes
//! with the Hamiltonian once the on-site energy is removed.

use ndarray::{concatenate, Array1, Array2, Axis};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{NessError, Result};
use crate::lattice::{
    adjoint, fortran_copy, max_abs, single_particle_spectrum, Flavor, Hamiltonian, ImpuritySet, LatticeSpec, Spectrum,
    I, ONE, ZERO,
};
use crate::negf::CorrelationMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SymmetryKind {
    /// Rotation by pi about the lattice centre.
    RPi,
    /// Mirror `x -> L_X + 1 - x`, which exchanges the two reservoirs.
    SigmaY,
    /// Mirror `y -> L_Y + 1 - y`.
    SigmaX,
    /// Flavor rotation `diag(1, -1)` on every site.
    Pi,
    /// `sigma_x` on every site.
    FlavorSwap,
    /// Complex conjugation in the site/flavor basis.
    Theta,
    /// Flavor swap combined with particle-hole conjugation.
    Gph,
    Composite,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Relation {
    Commutes,
    /// `W H^(*) W^dag = -(H - omega0)`.
    AnticommutesShifted,
}

#[derive(Clone, Debug)]
pub struct SymmetryAction {
    pub kind: SymmetryKind,
    pub label: String,
    pub matrix: Array2<Complex64>,
    pub antiunitary: bool,
    pub relation: Relation,
}

fn site_permutation(spec: &LatticeSpec, map: impl Fn(usize, usize) -> (usize, usize)) -> Array2<Complex64> {
    let n = spec.dim();
    let mut p = Array2::zeros((n, n));
    for y in 1..=spec.ly {
        for x in 1..=spec.lx {
            let (x2, y2) = map(x, y);
            for f in Flavor::BOTH {
                p[[spec.index_unchecked(x2, y2, f), spec.index_unchecked(x, y, f)]] = ONE;
            }
        }
    }
    p
}

fn per_site(spec: &LatticeSpec, block: [[Complex64; 2]; 2]) -> Array2<Complex64> {
    let n = spec.dim();
    let mut w = Array2::zeros((n, n));
    for b in (0..n).step_by(2) {
        for s in 0..2 {
            for s2 in 0..2 {
                w[[b + s, b + s2]] = block[s][s2];
            }
        }
    }
    w
}

impl SymmetryAction {
    fn unitary(kind: SymmetryKind, label: &str, matrix: Array2<Complex64>) -> Self {
        SymmetryAction { kind, label: label.into(), matrix, antiunitary: false, relation: Relation::Commutes }
    }

    pub fn r_pi(spec: &LatticeSpec) -> Self {
        let (lx, ly) = (spec.lx, spec.ly);
        Self::unitary(SymmetryKind::RPi, "R_pi", site_permutation(spec, |x, y| (lx + 1 - x, ly + 1 - y)))
    }

    pub fn sigma_y(spec: &LatticeSpec) -> Self {
        let lx = spec.lx;
        Self::unitary(SymmetryKind::SigmaY, "Sigma_y", site_permutation(spec, |x, y| (lx + 1 - x, y)))
    }

    pub fn sigma_x(spec: &LatticeSpec) -> Self {
        let ly = spec.ly;
        Self::unitary(SymmetryKind::SigmaX, "Sigma_x", site_permutation(spec, |x, y| (x, ly + 1 - y)))
    }

    pub fn pi(spec: &LatticeSpec) -> Self {
        Self::unitary(SymmetryKind::Pi, "Pi", per_site(spec, [[ONE, ZERO], [ZERO, -ONE]]))
    }

    pub fn flavor_swap(spec: &LatticeSpec) -> Self {
        Self::unitary(SymmetryKind::FlavorSwap, "S", per_site(spec, [[ZERO, ONE], [ONE, ZERO]]))
    }

    pub fn theta(spec: &LatticeSpec) -> Self {
        SymmetryAction {
            kind: SymmetryKind::Theta,
            label: "Theta".into(),
            matrix: Array2::eye(spec.dim()),
            antiunitary: true,
            relation: Relation::Commutes,
        }
    }

    pub fn gph(spec: &LatticeSpec) -> Self {
        SymmetryAction {
            kind: SymmetryKind::Gph,
            label: "GPH".into(),
            matrix: per_site(spec, [[ZERO, ONE], [ONE, ZERO]]),
            antiunitary: true,
            relation: Relation::AnticommutesShifted,
        }
    }

    /// `self` applied after `first`.
    pub fn after(&self, first: &SymmetryAction) -> Self {
        let inner = if self.antiunitary { first.matrix.mapv(|z| z.conj()) } else { first.matrix.clone() };
        let relation = if self.relation == first.relation { Relation::Commutes } else { Relation::AnticommutesShifted };
        SymmetryAction {
            kind: SymmetryKind::Composite,
            label: format!("{}{}", self.label, first.label),
            matrix: self.matrix.dot(&inner),
            antiunitary: self.antiunitary ^ first.antiunitary,
            relation,
        }
    }

    /// `W A^(*) W^dag`.
    pub fn apply(&self, a: &Array2<Complex64>) -> Array2<Complex64> {
        let inner = if self.antiunitary { a.mapv(|z| z.conj()) } else { a.clone() };
        self.matrix.dot(&inner).dot(&adjoint(&self.matrix))
    }

    pub fn unitarity_defect(&self) -> f64 {
        let p = self.matrix.dot(&adjoint(&self.matrix));
        crate::lattice::max_abs_diff_identity(&p)
    }
}

/// The two symmetries that exchange the reservoirs on the clean lattice.
pub fn pi_r_pi(spec: &LatticeSpec) -> SymmetryAction {
    SymmetryAction::pi(spec).after(&SymmetryAction::r_pi(spec))
}

pub fn pi_theta_sigma_y(spec: &LatticeSpec) -> SymmetryAction {
    SymmetryAction::pi(spec).after(&SymmetryAction::sigma_y(spec)).after(&SymmetryAction::theta(spec))
}

/// The reflection that leaves both reservoirs in place.
pub fn theta_sigma_x(spec: &LatticeSpec) -> SymmetryAction {
    SymmetryAction::sigma_x(spec).after(&SymmetryAction::theta(spec))
}

/// `max |W H^(*) W^dag -+ H|`, with `H` shifted by `-omega0` for the
/// particle-hole relation.
pub fn check_hamiltonian_symmetry(h: &Hamiltonian, action: &SymmetryAction) -> f64 {
    match action.relation {
        Relation::Commutes => max_abs(&(&action.apply(&h.matrix) - &h.matrix)),
        Relation::AnticommutesShifted => {
            let mut shifted = h.matrix.clone();
            for i in 0..shifted.nrows() {
                shifted[[i, i]] -= h.spec.omega0;
            }
            max_abs(&(&action.apply(&shifted) + &shifted))
        }
    }
}

/// `max |C - (1 - S C^* S)|`.
pub fn check_gph_state(c: &CorrelationMatrix) -> f64 {
    let n = c.dim();
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for k in 0..n {
            let (js, ks) = (j ^ 1, k ^ 1);
            let delta = if j == k { 1.0 } else { 0.0 };
            let image = Complex64::from(delta) - c.matrix[[js, ks]].conj();
            worst = worst.max((c.matrix[[j, k]] - image).norm());
        }
    }
    worst
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ImpurityClassification {
    pub sigma_y_symmetric: bool,
    pub r_pi_symmetric: bool,
    /// Invariance under `y -> L_Y + 1 - y`, which does not exchange the baths.
    pub sigma_x_symmetric: bool,
}

impl ImpurityClassification {
    /// Whether a reservoir-exchanging symmetry survives.
    pub fn exchanges_baths(&self) -> bool {
        self.sigma_y_symmetric || self.r_pi_symmetric
    }
}

pub fn classify_impurities(impurities: &ImpuritySet, spec: &LatticeSpec) -> ImpurityClassification {
    let set: std::collections::HashSet<(usize, usize)> = impurities.sites.iter().copied().collect();
    let invariant =
        |f: &dyn Fn(usize, usize) -> (usize, usize)| impurities.sites.iter().all(|&(x, y)| set.contains(&f(x, y)));
    let (lx, ly) = (spec.lx, spec.ly);
    ImpurityClassification {
        sigma_y_symmetric: invariant(&|x, y| (lx + 1 - x, y)),
        r_pi_symmetric: invariant(&|x, y| (lx + 1 - x, ly + 1 - y)),
        sigma_x_symmetric: invariant(&|x, y| (x, ly + 1 - y)),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SymmetryReport {
    pub pi_r_pi: f64,
    pub pi_theta_sigma_y: f64,
    pub theta_sigma_x: f64,
    pub sigma_y_alone: f64,
    /// Only meaningful for fermions.
    pub gph: f64,
    pub impurities: ImpurityClassification,
}

pub fn symmetry_report(h: &Hamiltonian, impurities: &ImpuritySet) -> SymmetryReport {
    let spec = &h.spec;
    SymmetryReport {
        pi_r_pi: check_hamiltonian_symmetry(h, &pi_r_pi(spec)),
        pi_theta_sigma_y: check_hamiltonian_symmetry(h, &pi_theta_sigma_y(spec)),
        theta_sigma_x: check_hamiltonian_symmetry(h, &theta_sigma_x(spec)),
        sigma_y_alone: check_hamiltonian_symmetry(h, &SymmetryAction::sigma_y(spec)),
        gph: check_hamiltonian_symmetry(h, &SymmetryAction::gph(spec)),
        impurities: classify_impurities(impurities, spec),
    }
}

/// Eigenvectors of `W` (a real signed permutation with `W^2 = 1`) split by
/// eigenvalue, each column exact to rounding.
fn involution_sectors(w: &Array2<Complex64>) -> Result<(Array2<f64>, Array2<f64>)> {
    let n = w.nrows();
    let not_involution = || NessError::Validation("symmetry matrix is not a real signed-permutation involution".into());
    let mut plus: Vec<Array1<f64>> = Vec::new();
    let mut minus: Vec<Array1<f64>> = Vec::new();
    for i in 0..n {
        let col = w.column(i);
        let hits: Vec<usize> = (0..n).filter(|&k| col[k].norm() > 0.0).collect();
        let &[j] = hits.as_slice() else { return Err(not_involution()) };
        let sign = col[j];
        if sign.im != 0.0 || sign.re.abs() != 1.0 || w[[i, j]] != sign {
            return Err(not_involution());
        }
        let sign = sign.re;
        if j == i {
            let mut v = Array1::zeros(n);
            v[i] = 1.0;
            if sign > 0.0 {
                plus.push(v)
            } else {
                minus.push(v)
            }
        } else if i < j {
            let r = std::f64::consts::FRAC_1_SQRT_2;
            let mut v = Array1::zeros(n);
            v[i] = r;
            v[j] = sign * r;
            plus.push(v.clone());
            v[j] = -sign * r;
            minus.push(v);
        }
    }
    let stack = |vs: &[Array1<f64>]| {
        let mut q = Array2::zeros((n, vs.len()));
        for (k, v) in vs.iter().enumerate() {
            q.column_mut(k).assign(v);
        }
        q
    };
    Ok((stack(&plus), stack(&minus)))
}

fn sorted(energies: Array1<f64>, modes: Array2<Complex64>) -> Spectrum {
    let mut order: Vec<usize> = (0..energies.len()).collect();
    order.sort_by(|&a, &b| energies[a].total_cmp(&energies[b]));
    Spectrum { energies: energies.select(Axis(0), &order), modes: modes.select(Axis(1), &order) }
}

/// Spectrum whose eigenvectors are exact eigenvectors of the given
/// symmetry, not just eigenvectors of `H`.
///
/// LAPACK mixes nearly degenerate modes from different symmetry sectors at
/// the level of `eps |H| / gap`, which spoils quantities such as the
/// hot/cold coupling balance of a mode. Diagonalizing inside each sector (or,
/// for an antiunitary symmetry, in the basis where it is plain complex
/// conjugation and `H` is real) removes that mixing.
pub fn adapted_spectrum(h: &Hamiltonian, action: &SymmetryAction) -> Result<Spectrum> {
    if action.relation != Relation::Commutes {
        return Err(NessError::Validation(format!("{} does not commute with H", action.label)));
    }
    let scale = max_abs(&h.matrix).max(1.0);
    let residual = check_hamiltonian_symmetry(h, action);
    if residual > SYMMETRY_TOLERANCE * scale {
        return Err(NessError::Validation(format!("{} is broken by {residual:e}", action.label)));
    }
    let (qp, qm) = involution_sectors(&action.matrix)?;
    let (qp, qm) = (qp.mapv(Complex64::from), qm.mapv(Complex64::from));
    if action.antiunitary {
        // W K fixes q for W q = q and i q for W q = -q
        let basis = concatenate![Axis(1), qp, qm.mapv(|z| z * I)];
        let hb = adjoint(&basis).dot(&h.matrix).dot(&basis);
        let imag = hb.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        if imag > SYMMETRY_TOLERANCE * scale {
            return Err(NessError::Validation(format!("H is not real in the {} basis ({imag:e})", action.label)));
        }
        let (energies, v) = hb.mapv(|z| z.re).eigh(UPLO::Lower)?;
        return Ok(sorted(energies, basis.dot(&v.mapv(Complex64::from))));
    }
    let mut energies = Vec::new();
    let mut blocks = Vec::new();
    for q in [qp, qm] {
        if q.ncols() == 0 {
            continue;
        }
        let hq = adjoint(&q).dot(&h.matrix).dot(&q);
        let (e, v) = fortran_copy(&hq).eigh(UPLO::Lower)?;
        energies.extend(e.iter().copied());
        blocks.push(q.dot(&v));
    }
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    let modes = ndarray::concatenate(Axis(1), &views).map_err(|e| NessError::LinearAlgebra(e.to_string()))?;
    Ok(sorted(Array1::from(energies), modes))
}

const SYMMETRY_TOLERANCE: f64 = 1.0e-12;

/// Eigenbasis adapted to the first reservoir-exchanging symmetry that `H`
/// has (`Pi R_pi`, then `Pi Theta Sigma_y`); a plain diagonalization when
/// neither survives. Also returns the label of the symmetry used.
pub fn symmetric_spectrum(h: &Hamiltonian) -> Result<(Spectrum, Option<String>)> {
    for action in [pi_r_pi(&h.spec), pi_theta_sigma_y(&h.spec)] {
        if let Ok(sp) = adapted_spectrum(h, &action) {
            return Ok((sp, Some(action.label)));
        }
    }
    Ok((single_particle_spectrum(h)?, None))
}
