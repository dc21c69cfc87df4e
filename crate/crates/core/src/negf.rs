//! Exact steady state in the wide-band limit.
//!
//! The retarded Green function is `G(omega) = [omega - H_eff]^{-1}` with the
//! frequency-independent non-Hermitian Hamiltonian `H_eff = H - i Gamma / 2`.
//! The steady-state correlation matrix is
//!
//! ```text
//! C = int domega/2pi  G(omega) [Gamma_h n_h(omega) + Gamma_c n_c(omega)] G(omega)^dag
//! ```
//!
//! With `H_eff = V diag(lambda) V^-1` this becomes `C = V (sum_b M_b o K_b) V^dag`
//! where `M_b = V^-1 Gamma_b V^-dag` and, by partial fractions,
//!
//! ```text
//! K_b[i][j] = (Phi_b(lambda_i) - conj(Phi_b(lambda_j))) / (lambda_i - conj(lambda_j)),
//! Phi_b(z)  = int domega/2pi  n_b(omega) [1 / (omega - z) - r(omega)].
//! ```
//!
//! `r` is a fixed regulator that makes the filled fermionic sea integrable and
//! cancels in every difference. Only one scalar resonance integral per
//! eigenvalue and reservoir is needed. When the eigenvector matrix is
//! ill-conditioned the matrix integrand is instead evaluated by direct
//! inversion at every quadrature node.

use log::{debug, warn};
use ndarray::{Array1, Array2, Axis};
use ndarray_linalg::{Eig, Inverse, OperationNorm};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::baths::{BathSpec, Reservoir, SelfEnergyPair, Statistics};
use crate::error::{NessError, Result};
use crate::lattice::{adjoint, fortran_copy, max_abs, Hamiltonian, I, ZERO};
use crate::quadrature::{Bound, Integrator, Tolerance};

/// Eigenvector condition number above which the spectral resolvent is
/// abandoned in favour of per-frequency linear solves.
pub const CONDITION_LIMIT: f64 = 1.0e8;

const RECONSTRUCTION_LIMIT: f64 = 1.0e-10;

const REFINEMENT_STEPS: usize = 2;

/// Scalar resonance integrals are converged this much tighter than the
/// requested matrix tolerance; the partial-fraction denominators amplify
/// their error by at most the inverse boundary weight of a mode.
const SCALAR_TIGHTENING: f64 = 1.0e-3;
/// Occupation below which a reservoir counts as empty at a given energy.
const EMPTY_WEIGHT: f64 = 1.0e-30;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResolventStrategy {
    /// Spectral form unless the eigenvector matrix is ill-conditioned.
    #[default]
    Auto,
    Spectral,
    Direct,
}

/// Tolerances and integration window for the frequency integrals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    #[serde(default = "default_rel")]
    pub rel_tol: f64,
    #[serde(default = "default_abs")]
    pub abs_tol: f64,
    /// Margin added on both sides of the spectrum; defaults to
    /// `20 gamma + 10 max(T_h, T_c) + 2`.
    #[serde(default)]
    pub window_margin: Option<f64>,
    /// Bosonic reservoirs only populate positive frequencies; the lower
    /// integration limit is never below this fraction of the lowest
    /// eigenfrequency.
    #[serde(default = "default_floor")]
    pub boson_floor_fraction: f64,
    #[serde(default)]
    pub resolvent: ResolventStrategy,
}

fn default_rel() -> f64 {
    1.0e-9
}
fn default_abs() -> f64 {
    1.0e-12
}
fn default_floor() -> f64 {
    0.5
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            rel_tol: default_rel(),
            abs_tol: default_abs(),
            window_margin: None,
            boson_floor_fraction: default_floor(),
            resolvent: ResolventStrategy::Auto,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return Err(NessError::Validation("quadrature tolerances must be positive".into()));
        }
        if let Some(w) = self.window_margin {
            if !(w > 0.0 && w.is_finite()) {
                return Err(NessError::Validation(format!("window margin must be positive, got {w}")));
            }
        }
        if !(self.boson_floor_fraction > 0.0 && self.boson_floor_fraction < 1.0) {
            return Err(NessError::Validation("boson_floor_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn margin(&self, bath: &BathSpec) -> f64 {
        self.window_margin.unwrap_or(20.0 * bath.gamma + 10.0 * bath.max_temperature() + 2.0)
    }

    pub(crate) fn integrator(&self, tightening: f64) -> Integrator {
        Integrator::new(Tolerance {
            rel: (self.rel_tol * tightening).max(1.0e-14),
            abs: (self.abs_tol * tightening).max(1.0e-300),
        })
    }
}

#[derive(Clone, Debug)]
pub struct SpectralForm {
    pub right: Array2<Complex64>,
    pub right_inv: Array2<Complex64>,
}

/// `H_eff = H - i (Gamma_h + Gamma_c) / 2` with its eigendecomposition.
#[derive(Clone, Debug)]
pub struct EffectiveHamiltonian {
    pub matrix: Array2<Complex64>,
    pub eigenvalues: Array1<Complex64>,
    /// Present when the eigenvector matrix is well conditioned.
    pub spectral: Option<SpectralForm>,
    /// `||V||_1 ||V^-1||_1`, infinite when `V` could not be inverted.
    pub condition: f64,
    pub reconstruction_error: f64,
}

pub fn effective_hamiltonian(h: &Hamiltonian, se: &SelfEnergyPair) -> Result<EffectiveHamiltonian> {
    let n = h.dim();
    if se.dim() != n {
        return Err(NessError::DimensionMismatch { expected: n, found: se.dim() });
    }
    let mut matrix = h.matrix.clone();
    for (i, g) in se.total().iter().enumerate() {
        matrix[[i, i]] -= I * (0.5 * g);
    }
    from_matrix(matrix, ResolventStrategy::Auto)
}

pub(crate) fn from_matrix(matrix: Array2<Complex64>, strategy: ResolventStrategy) -> Result<EffectiveHamiltonian> {
    let (mut eigenvalues, right) = fortran_copy(&matrix)
        .eig()
        .map_err(|e| NessError::Eigendecomposition { reason: e.to_string(), condition: f64::INFINITY })?;
    let scale = max_abs(&matrix).max(f64::MIN_POSITIVE);

    let (spectral, condition, reconstruction_error) = match refine(&matrix, &mut eigenvalues, right) {
        Some((right, right_inv)) => {
            let condition = right.opnorm_one()? * right_inv.opnorm_one()?;
            let mut scaled = right.clone();
            for (mut col, l) in scaled.axis_iter_mut(Axis(1)).zip(eigenvalues.iter()) {
                col.mapv_inplace(|z| z * l);
            }
            let rebuilt = scaled.dot(&right_inv);
            let err = max_abs(&(&rebuilt - &matrix)) / scale;
            (Some(SpectralForm { right, right_inv }), condition, err)
        }
        None => (None, f64::INFINITY, f64::INFINITY),
    };

    let usable = condition <= CONDITION_LIMIT && reconstruction_error <= RECONSTRUCTION_LIMIT;
    let spectral = match strategy {
        ResolventStrategy::Direct => None,
        ResolventStrategy::Spectral if spectral.is_none() => {
            return Err(NessError::Eigendecomposition { reason: "eigenvector matrix is singular".into(), condition })
        }
        ResolventStrategy::Spectral => spectral,
        ResolventStrategy::Auto if usable => spectral,
        ResolventStrategy::Auto => {
            warn!(
                "eigenvector condition number {condition:e} (reconstruction error \
                 {reconstruction_error:e}): falling back to direct resolvent solves"
            );
            None
        }
    };
    Ok(EffectiveHamiltonian { matrix, eigenvalues, spectral, condition, reconstruction_error })
}

/// Newton refinement of a complete eigendecomposition.
///
/// LAPACK returns eigenpairs with an absolute error of order `eps |H|`. A
/// large impurity potential then swamps the damping rates of the low-energy
/// modes, which set the resonance widths. The residual `H V - V Lambda` is
/// accurate relative to each mode's own scale, so a first-order correction
/// recovers that accuracy.
fn refine(
    matrix: &Array2<Complex64>,
    lambda: &mut Array1<Complex64>,
    mut right: Array2<Complex64>,
) -> Option<(Array2<Complex64>, Array2<Complex64>)> {
    let n = lambda.len();
    let scale = lambda.iter().map(|l| l.norm()).fold(1.0, f64::max);
    let mut right_inv = right.inv().ok()?;
    for _ in 0..REFINEMENT_STEPS {
        let mut resid = matrix.dot(&right);
        for j in 0..n {
            let l = lambda[j];
            for i in 0..n {
                resid[[i, j]] -= right[[i, j]] * l;
            }
        }
        let e = right_inv.dot(&resid);
        let mut corr = Array2::<Complex64>::zeros((n, n));
        for j in 0..n {
            lambda[j] += e[[j, j]];
            for i in 0..n {
                let gap = lambda[j] - lambda[i];
                if i != j && gap.norm() > 1.0e-8 * scale {
                    corr[[i, j]] = e[[i, j]] / gap;
                }
            }
        }
        right = &right + &right.dot(&corr);
        for mut col in right.axis_iter_mut(Axis(1)) {
            let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            col.mapv_inplace(|z| z / norm);
        }
        right_inv = right.inv().ok()?;
    }
    Some((right, right_inv))
}

impl EffectiveHamiltonian {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Largest imaginary part of the spectrum; non-positive for a passive
    /// (damped) system.
    pub fn max_imag(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.im).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn real_range(&self) -> (f64, f64) {
        self.eigenvalues.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), l| (lo.min(l.re), hi.max(l.re)))
    }

    /// Same operator, forced onto the given resolvent strategy.
    pub fn with_strategy(&self, strategy: ResolventStrategy) -> Result<Self> {
        from_matrix(self.matrix.clone(), strategy)
    }

    fn check_pole(&self, omega: f64) -> Result<()> {
        for l in self.eigenvalues.iter() {
            let d = (omega - l).norm();
            if d < 1.0e-14 * omega.abs().max(1.0) {
                return Err(NessError::Singular { omega, distance: d });
            }
        }
        Ok(())
    }
}

/// Retarded Green function `[omega - H_eff]^{-1}`.
pub fn green_function(eff: &EffectiveHamiltonian, omega: f64) -> Result<Array2<Complex64>> {
    eff.check_pole(omega)?;
    match &eff.spectral {
        Some(sf) => {
            let mut left = sf.right.clone();
            for (mut col, l) in left.axis_iter_mut(Axis(1)).zip(eff.eigenvalues.iter()) {
                let d = (omega - l).inv();
                col.mapv_inplace(|z| z * d);
            }
            Ok(left.dot(&sf.right_inv))
        }
        None => direct_green(eff, omega),
    }
}

fn direct_green(eff: &EffectiveHamiltonian, omega: f64) -> Result<Array2<Complex64>> {
    let mut a = eff.matrix.mapv(|z| -z);
    for i in 0..a.nrows() {
        a[[i, i]] += omega;
    }
    Ok(a.inv()?)
}

/// `max |G Gamma G^dag - i (G - G^dag)|` at one frequency.
pub fn resolvent_identity_residual(eff: &EffectiveHamiltonian, se: &SelfEnergyPair, omega: f64) -> Result<f64> {
    let g = green_function(eff, omega)?;
    let gd = adjoint(&g);
    let mut g_gamma = g.clone();
    for (mut col, gam) in g_gamma.axis_iter_mut(Axis(1)).zip(se.total().iter()) {
        col.mapv_inplace(|z| z * gam);
    }
    let lhs = g_gamma.dot(&gd);
    let rhs = (&g - &gd).mapv(|z| z * I);
    Ok(max_abs(&(&lhs - &rhs)))
}

/// Steady-state correlation matrix `C_{jk} = <a^dag_k a_j>`.
#[derive(Clone, Debug)]
pub struct CorrelationMatrix {
    pub matrix: Array2<Complex64>,
    pub diagnostics: SolveDiagnostics,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SolveDiagnostics {
    /// Propagated quadrature error bound (max-norm on `C`).
    pub error_estimate: f64,
    pub evaluations: usize,
    /// Size of the anti-Hermitian part removed by the final symmetrisation.
    pub hermitian_defect: f64,
    /// Largest resolvent-identity residual seen at the spot-check frequencies.
    pub resolvent_residual: f64,
    pub direct_path: bool,
    pub decoupled_modes: usize,
}

impl CorrelationMatrix {
    pub fn from_matrix(matrix: Array2<Complex64>) -> Self {
        CorrelationMatrix { matrix, diagnostics: SolveDiagnostics::default() }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        max_abs(&(&self.matrix - &adjoint(&self.matrix)))
    }

    /// Extreme eigenvalues of the Hermitian part.
    pub fn eigenvalue_range(&self) -> Result<(f64, f64)> {
        use ndarray_linalg::{EigValsh, UPLO};
        let herm = (&self.matrix + &adjoint(&self.matrix)).mapv(|z| z * 0.5);
        let ev = herm.eigvalsh(UPLO::Lower)?;
        Ok((ev[0], ev[ev.len() - 1]))
    }

    /// Checks Hermiticity and the occupation bounds of the statistics.
    pub fn is_physical(&self, statistics: Statistics, eps: f64) -> Result<bool> {
        if self.hermiticity_defect() > 1e-10 {
            return Ok(false);
        }
        let (lo, hi) = self.eigenvalue_range()?;
        Ok(match statistics {
            Statistics::Fermion => lo >= -eps && hi <= 1.0 + eps,
            Statistics::Boson => lo >= -eps,
        })
    }
}

/// Which occupation weights the reservoir terms of the integrand.
#[derive(Clone, Copy, Debug)]
pub(crate) enum Filling<'a> {
    Thermal(&'a BathSpec),
    /// `n_h = n_c = 1`: the integral is the spectral sum rule.
    Unit,
}

impl Filling<'_> {
    fn weight(&self, omega: f64, reservoir: Reservoir) -> f64 {
        match self {
            Filling::Thermal(bath) => bath.distribution(omega, reservoir).unwrap_or(0.0),
            Filling::Unit => 1.0,
        }
    }
}

/// Integration bounds and breakpoints shared by all frequency integrals.
#[derive(Clone, Debug)]
pub(crate) struct Domain {
    pub lower: Bound,
    pub upper: Bound,
    pub(crate) extra: Vec<f64>,
}

impl Domain {
    pub(crate) fn new(eff: &EffectiveHamiltonian, filling: Filling<'_>, quad: &QuadratureSpec) -> Result<Self> {
        quad.validate()?;
        let (re_min, re_max) = eff.real_range();
        let (margin, bath) = match filling {
            Filling::Thermal(b) => (quad.margin(b), Some(b)),
            Filling::Unit => (quad.window_margin.unwrap_or(2.0), None),
        };
        let window = (re_min - margin, re_max + margin);
        let mut extra = vec![window.0, window.1];
        let lower = match bath {
            Some(b) if b.statistics == Statistics::Boson => {
                if !(re_min > b.mu) {
                    return Err(NessError::BosonicDivergence { gap: re_min - b.mu });
                }
                Bound::Finite(window.0.max(b.mu + quad.boson_floor_fraction * (re_min - b.mu)))
            }
            _ => Bound::Infinite,
        };
        if let Some(b) = bath {
            if b.statistics == Statistics::Fermion {
                extra.push(b.mu);
                for t in [b.t_h, b.t_c] {
                    for k in [1.0, 5.0, 20.0] {
                        extra.push(b.mu - k * t);
                        extra.push(b.mu + k * t);
                    }
                }
            }
        }
        Ok(Domain { lower, upper: Bound::Infinite, extra })
    }

    /// Breakpoints around one resonance.
    fn around(&self, z: Complex64) -> Vec<f64> {
        let mut pts = self.extra.clone();
        pts.push(z.re);
        let w = z.im.abs();
        for k in [1.0, 8.0, 64.0] {
            pts.push(z.re - k * w);
            pts.push(z.re + k * w);
        }
        pts
    }

    /// Breakpoints at every resonance.
    pub(crate) fn all(&self, eigenvalues: &Array1<Complex64>) -> Vec<f64> {
        let mut pts = self.extra.clone();
        for l in eigenvalues.iter() {
            pts.push(l.re);
            let w = l.im.abs();
            pts.push(l.re - 4.0 * w);
            pts.push(l.re + 4.0 * w);
        }
        pts
    }
}

struct Assembled {
    matrix: Array2<Complex64>,
    error: f64,
    evaluations: usize,
    decoupled: usize,
}

/// `sum_b int domega/2pi G Gamma_b G^dag w_b(omega)` by the spectral route.
fn assemble_spectral(
    eff: &EffectiveHamiltonian,
    sf: &SpectralForm,
    se: &SelfEnergyPair,
    filling: Filling<'_>,
    quad: &QuadratureSpec,
) -> Result<Assembled> {
    let n = eff.dim();
    let lambda = &eff.eigenvalues;
    let domain = Domain::new(eff, filling, quad)?;
    let integrator = quad.integrator(SCALAR_TIGHTENING);
    // The regulator only has to make each integral converge; centring it on
    // the bulk of the spectrum keeps far-off impurity levels from inflating
    // every phi (and with it the absolute quadrature error).
    let mut re: Vec<f64> = lambda.iter().map(|l| l.re).collect();
    re.sort_by(f64::total_cmp);
    let center = re[re.len() / 2];

    let scale = lambda.iter().map(|l| l.norm()).fold(1.0, f64::max);
    let decoupled: Vec<bool> = lambda.iter().map(|l| l.im.abs() < 1e-14 * scale).collect();
    let n_decoupled = decoupled.iter().filter(|&&d| d).count();
    // A decoupled mode sitting where both reservoirs are empty still enters
    // through its cross terms; its own pole is harmless because the
    // integrand vanishes there.
    let empty: Vec<bool> = lambda
        .iter()
        .map(|l| [Reservoir::Hot, Reservoir::Cold].iter().all(|&r| filling.weight(l.re, r) < EMPTY_WEIGHT))
        .collect();
    let n_dropped = (0..n).filter(|&i| decoupled[i] && !empty[i]).count();
    if n_dropped > 0 {
        warn!("{n_dropped} occupied eigenmodes are decoupled from both reservoirs and were dropped");
    }

    let mut total = Array2::<Complex64>::zeros((n, n));
    let mut error_bound: f64 = 0.0;
    let mut evaluations = 0;
    for reservoir in [Reservoir::Hot, Reservoir::Cold] {
        let support = se.support(reservoir);
        if support.is_empty() {
            continue;
        }
        // M = V^-1 Gamma V^-dag restricted to the coupled columns
        let gam = se.diagonal(reservoir);
        let w_s = sf.right_inv.select(Axis(1), &support);
        let mut w_scaled = w_s.clone();
        for (mut col, &k) in w_scaled.axis_iter_mut(Axis(1)).zip(support.iter()) {
            col.mapv_inplace(|z| z * gam[k]);
        }
        let m = w_scaled.dot(&adjoint(&w_s));

        let phis: Vec<Result<(Complex64, f64, usize, Complex64)>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let z = lambda[i];
                if decoupled[i] && !empty[i] {
                    return Ok((ZERO, 0.0, 0, ZERO));
                }
                let breaks = if decoupled[i] { domain.extra.clone() } else { domain.around(z) };
                let est = integrator.integrate(
                    |w, out: &mut [Complex64]| {
                        let d = w - center;
                        let reg = d / (d * d + 1.0);
                        let n = filling.weight(w, reservoir) / (2.0 * PI);
                        let r = (w - z).inv();
                        out[0] = (r - reg) * n;
                        if let Some(o) = out.get_mut(1) {
                            *o = Complex64::new(r.norm_sqr() * n, 0.0);
                        }
                    },
                    if decoupled[i] { 2 } else { 1 },
                    domain.lower,
                    domain.upper,
                    &breaks,
                )?;
                let diag = if decoupled[i] { est.value[1] } else { ZERO };
                Ok((est.value[0], est.error, est.evaluations, diag))
            })
            .collect();
        let mut phi = Vec::with_capacity(n);
        let mut phi_err = Vec::with_capacity(n);
        let mut direct_diag = Vec::with_capacity(n);
        for r in phis {
            let (v, e, ev, d) = r?;
            phi.push(v);
            phi_err.push(e);
            direct_diag.push(d);
            evaluations += ev;
        }

        let skip = |i: usize| decoupled[i] && !empty[i];
        for i in 0..n {
            if skip(i) {
                continue;
            }
            for j in i..n {
                if skip(j) {
                    continue;
                }
                let denom = lambda[i] - lambda[j].conj();
                let k = if i == j && decoupled[i] { direct_diag[i] } else { (phi[i] - phi[j].conj()) / denom };
                let v = m[[i, j]] * k;
                total[[i, j]] += v;
                error_bound = error_bound.max((phi_err[i] + phi_err[j]) * m[[i, j]].norm() / denom.norm());
                if i != j {
                    total[[j, i]] += v.conj();
                }
            }
        }
    }

    let v = &sf.right;
    let row_sum = v.rows().into_iter().map(|r| r.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max);
    let matrix = v.dot(&total).dot(&adjoint(v));
    Ok(Assembled { matrix, error: error_bound * row_sum * row_sum, evaluations, decoupled: n_decoupled })
}

/// Same integral by inverting `omega - H_eff` at every quadrature node.
fn assemble_direct(
    eff: &EffectiveHamiltonian,
    se: &SelfEnergyPair,
    filling: Filling<'_>,
    quad: &QuadratureSpec,
) -> Result<Assembled> {
    let n = eff.dim();
    let domain = Domain::new(eff, filling, quad)?;
    let integrator = quad.integrator(1.0);
    let hot = se.support(Reservoir::Hot);
    let cold = se.support(Reservoir::Cold);
    let coupled: Vec<(usize, Reservoir)> =
        hot.iter().map(|&k| (k, Reservoir::Hot)).chain(cold.iter().map(|&k| (k, Reservoir::Cold))).collect();
    let packed = n * (n + 1) / 2;

    let est = integrator.integrate(
        |w, out: &mut [Complex64]| {
            let g = match direct_green(eff, w) {
                Ok(g) => g,
                Err(_) => {
                    out.iter_mut().for_each(|z| *z = ZERO);
                    return;
                }
            };
            let nh = filling.weight(w, Reservoir::Hot);
            let nc = filling.weight(w, Reservoir::Cold);
            let cols: Vec<usize> = coupled.iter().map(|&(k, _)| k).collect();
            let g_s = g.select(Axis(1), &cols);
            let weights: Vec<f64> = coupled
                .iter()
                .map(|&(k, r)| se.diagonal(r)[k] * if r == Reservoir::Hot { nh } else { nc } / (2.0 * PI))
                .collect();
            let mut p = 0;
            for a in 0..n {
                for b in a..n {
                    let mut acc = ZERO;
                    for (s, wt) in weights.iter().enumerate() {
                        acc += g_s[[a, s]] * g_s[[b, s]].conj() * *wt;
                    }
                    out[p] = acc;
                    p += 1;
                }
            }
        },
        packed,
        domain.lower,
        domain.upper,
        &domain.all(&eff.eigenvalues),
    )?;

    let mut matrix = Array2::<Complex64>::zeros((n, n));
    let mut p = 0;
    for a in 0..n {
        for b in a..n {
            matrix[[a, b]] = est.value[p];
            matrix[[b, a]] = est.value[p].conj();
            p += 1;
        }
    }
    Ok(Assembled { matrix, error: est.error, evaluations: est.evaluations, decoupled: 0 })
}

fn assemble(
    eff: &EffectiveHamiltonian,
    se: &SelfEnergyPair,
    filling: Filling<'_>,
    quad: &QuadratureSpec,
) -> Result<(Assembled, bool)> {
    if se.dim() != eff.dim() {
        return Err(NessError::DimensionMismatch { expected: eff.dim(), found: se.dim() });
    }
    let use_direct = match quad.resolvent {
        ResolventStrategy::Direct => true,
        _ => eff.spectral.is_none(),
    };
    if use_direct {
        Ok((assemble_direct(eff, se, filling, quad)?, true))
    } else {
        let sf = eff.spectral.as_ref().expect("spectral form present");
        Ok((assemble_spectral(eff, sf, se, filling, quad)?, false))
    }
}

/// Exact NESS correlation matrix of the two-reservoir problem.
pub fn steady_correlation(
    eff: &EffectiveHamiltonian,
    se: &SelfEnergyPair,
    bath: &BathSpec,
    quad: &QuadratureSpec,
) -> Result<CorrelationMatrix> {
    bath.validate()?;
    if bath.statistics == Statistics::Boson {
        bath.check_admissible(eff.eigenvalues.iter().map(|l| l.re))?;
    }
    let (assembled, direct_path) = assemble(eff, se, Filling::Thermal(bath), quad)?;

    let (re_min, re_max) = eff.real_range();
    let mut resolvent_residual: f64 = 0.0;
    for w in [re_min, 0.5 * (re_min + re_max), re_max] {
        if let Ok(r) = resolvent_identity_residual(eff, se, w + 0.5 * bath.gamma) {
            resolvent_residual = resolvent_residual.max(r);
        }
    }
    if resolvent_residual > 1e-8 {
        warn!("resolvent identity violated by {resolvent_residual:e}");
    }

    let c = assembled.matrix;
    let herm = (&c + &adjoint(&c)).mapv(|z| z * 0.5);
    let hermitian_defect = max_abs(&(&c - &herm));
    debug!("hermitization removed {hermitian_defect:e}");

    Ok(CorrelationMatrix {
        matrix: herm,
        diagnostics: SolveDiagnostics {
            error_estimate: assembled.error,
            evaluations: assembled.evaluations,
            hermitian_defect,
            resolvent_residual,
            direct_path,
            decoupled_modes: assembled.decoupled,
        },
    })
}

/// `int domega/2pi G (Gamma_h + Gamma_c) G^dag`, which equals the identity
/// by the canonical (anti-)commutation relations.
pub fn unit_filling_integral(
    eff: &EffectiveHamiltonian,
    se: &SelfEnergyPair,
    quad: &QuadratureSpec,
) -> Result<Array2<Complex64>> {
    let (assembled, _) = assemble(eff, se, Filling::Unit, quad)?;
    Ok(assembled.matrix)
}

/// Boundary-restricted Green function blocks used by the transmission
/// function: `G[cold, hot] = V[cold, :] D(omega) V^-1[:, hot]`.
pub(crate) struct TransmissionKernel {
    lambda: Array1<Complex64>,
    /// `A_ij = P_ij Q_ji` with `P = V^-1 Gamma_h V^-dag`, `Q = V^dag Gamma_c V`.
    pair: Option<Array2<Complex64>>,
}

impl TransmissionKernel {
    pub(crate) fn new(eff: &EffectiveHamiltonian, se: &SelfEnergyPair) -> Self {
        let pair = eff.spectral.as_ref().map(|sf| {
            let hot = se.support(Reservoir::Hot);
            let cold = se.support(Reservoir::Cold);
            let gh = se.diagonal(Reservoir::Hot);
            let gc = se.diagonal(Reservoir::Cold);
            let w_h = sf.right_inv.select(Axis(1), &hot);
            let mut w_hs = w_h.clone();
            for (mut col, &k) in w_hs.axis_iter_mut(Axis(1)).zip(hot.iter()) {
                col.mapv_inplace(|z| z * gh[k]);
            }
            let p = w_hs.dot(&adjoint(&w_h));
            let v_c = sf.right.select(Axis(0), &cold);
            let mut v_cs = v_c.clone();
            for (mut row, &k) in v_cs.axis_iter_mut(Axis(0)).zip(cold.iter()) {
                row.mapv_inplace(|z| z * gc[k]);
            }
            let q = adjoint(&v_c).dot(&v_cs);
            let mut a = p;
            for ((i, j), z) in a.indexed_iter_mut() {
                *z *= q[[j, i]];
            }
            a
        });
        TransmissionKernel { lambda: eff.eigenvalues.clone(), pair }
    }

    /// `T(omega) = Tr[Gamma_c G Gamma_h G^dag]`.
    pub(crate) fn evaluate(&self, eff: &EffectiveHamiltonian, se: &SelfEnergyPair, omega: f64) -> Result<f64> {
        match &self.pair {
            Some(a) => {
                let d: Vec<Complex64> = self.lambda.iter().map(|l| (omega - l).inv()).collect();
                let mut acc = ZERO;
                for (i, row) in a.outer_iter().enumerate() {
                    let mut inner = ZERO;
                    for (j, z) in row.iter().enumerate() {
                        inner += z * d[j].conj();
                    }
                    acc += d[i] * inner;
                }
                Ok(acc.re)
            }
            None => {
                let g = direct_green(eff, omega)?;
                let hot = se.support(Reservoir::Hot);
                let cold = se.support(Reservoir::Cold);
                let block = g.select(Axis(0), &cold);
                let block = block.select(Axis(1), &hot);
                let mut t = 0.0;
                for (a, &j) in cold.iter().enumerate() {
                    for (b, &k) in hot.iter().enumerate() {
                        t += se.cold[j] * se.hot[k] * block[[a, b]].norm_sqr();
                    }
                }
                Ok(t)
            }
        }
    }
}

/// Transmission function `Tr[Gamma_c G(omega) Gamma_h G(omega)^dag]`.
pub fn transmission(eff: &EffectiveHamiltonian, se: &SelfEnergyPair, omega: f64) -> Result<f64> {
    eff.check_pole(omega)?;
    TransmissionKernel::new(eff, se).evaluate(eff, se, omega)
}
