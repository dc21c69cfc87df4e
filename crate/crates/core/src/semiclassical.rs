//! Periodic-boundary Bloch analysis: bands, Berry curvature, Chern numbers
//! and the semiclassical edge-current field.
//!
//! `H(k) = omega0 + h(k) . sigma` with
//! `h(k) = (t_Y sin k_Y, t_X sin k_X, m + t_X cos k_X + t_Y cos k_Y)`, which is
//! the Fourier transform of the real-space lattice with `a_x = sum_k e^{ikx} a_k`.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baths::{BathSpec, Reservoir};
use crate::error::{NessError, Result};
use crate::lattice::LatticeSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Plus,
    Minus,
}

impl Band {
    fn sign(self) -> f64 {
        match self {
            Band::Plus => 1.0,
            Band::Minus => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BlochPoint {
    pub k: (f64, f64),
    pub h: [f64; 3],
    pub omega_plus: f64,
    pub omega_minus: f64,
}

fn h_vector(spec: &LatticeSpec, kx: f64, ky: f64) -> [f64; 3] {
    [spec.ty * ky.sin(), spec.tx * kx.sin(), spec.m + spec.tx * kx.cos() + spec.ty * ky.cos()]
}

fn norm3(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub fn bloch_point(spec: &LatticeSpec, kx: f64, ky: f64) -> BlochPoint {
    let h = h_vector(spec, kx, ky);
    let e = norm3(&h);
    BlochPoint { k: (kx, ky), h, omega_plus: spec.omega0 + e, omega_minus: spec.omega0 - e }
}

fn gapped_norm(spec: &LatticeSpec, kx: f64, ky: f64) -> Result<([f64; 3], f64)> {
    let h = h_vector(spec, kx, ky);
    let e = norm3(&h);
    if e <= 1e-12 * spec.tx.max(spec.ty) {
        return Err(NessError::GapClosing { kx, ky });
    }
    Ok((h, e))
}

/// Berry curvature from the two-band triple product,
/// `F_+- = -+ (1/2) n . (d_x n x d_y n)`; valid for anisotropic hopping.
pub fn berry_curvature(spec: &LatticeSpec, band: Band, kx: f64, ky: f64) -> Result<f64> {
    let (h, e) = gapped_norm(spec, kx, ky)?;
    let dx = [0.0, spec.tx * kx.cos(), -spec.tx * kx.sin()];
    let dy = [spec.ty * ky.cos(), 0.0, -spec.ty * ky.sin()];
    let cross = [dx[1] * dy[2] - dx[2] * dy[1], dx[2] * dy[0] - dx[0] * dy[2], dx[0] * dy[1] - dx[1] * dy[0]];
    let triple = h[0] * cross[0] + h[1] * cross[1] + h[2] * cross[2];
    Ok(-band.sign() * 0.5 * triple / (e * e * e))
}

/// Closed form for isotropic hopping `t_X = t_Y = t`:
/// `F_+- = +- [cos k_X + cos k_Y + (m/t) cos k_X cos k_Y] / (2 |h/t|^3)`.
pub fn berry_curvature_closed_form(spec: &LatticeSpec, band: Band, kx: f64, ky: f64) -> Result<f64> {
    if spec.tx != spec.ty {
        return Err(NessError::Configuration("closed-form curvature requires t_X = t_Y".into()));
    }
    gapped_norm(spec, kx, ky)?;
    let r = spec.m / spec.tx;
    let (cx, cy) = (kx.cos(), ky.cos());
    let d = kx.sin().powi(2) + ky.sin().powi(2) + (r + cx + cy).powi(2);
    Ok(band.sign() * (cx + cy + r * cx * cy) / (2.0 * d.powf(1.5)))
}

/// Normalised Bloch eigenvector of `h . sigma`; the gauge is chosen per
/// point to avoid the vanishing branch.
fn eigenvector(h: &[f64; 3], e: f64, band: Band) -> [Complex64; 2] {
    let (hx, hy, hz) = (h[0], h[1], h[2]);
    let s = band.sign();
    let a = [Complex64::new(hz + s * e, 0.0), Complex64::new(hx, hy)];
    let b = [Complex64::new(hx, -hy), Complex64::new(s * e - hz, 0.0)];
    let na = a[0].norm_sqr() + a[1].norm_sqr();
    let nb = b[0].norm_sqr() + b[1].norm_sqr();
    let (v, n) = if na >= nb { (a, na) } else { (b, nb) };
    let n = n.sqrt();
    [v[0] / n, v[1] / n]
}

fn overlap(u: &[Complex64; 2], v: &[Complex64; 2]) -> Complex64 {
    u[0].conj() * v[0] + u[1].conj() * v[1]
}

/// Berry flux through the plaquette with lower-left corner `(kx, ky)` and
/// side `dk`, from gauge-invariant link variables. `refine` subdivides the
/// plaquette to reduce the geodesic-edge error.
pub fn plaquette_flux(spec: &LatticeSpec, band: Band, kx: f64, ky: f64, dk: f64, refine: usize) -> Result<f64> {
    let r = refine.max(1);
    let step = dk / r as f64;
    let mut states = Vec::with_capacity((r + 1) * (r + 1));
    for j in 0..=r {
        for i in 0..=r {
            let (qx, qy) = (kx + i as f64 * step, ky + j as f64 * step);
            let (h, e) = gapped_norm(spec, qx, qy)?;
            states.push(eigenvector(&h, e, band));
        }
    }
    let at = |i: usize, j: usize| &states[j * (r + 1) + i];
    let mut flux = 0.0;
    for j in 0..r {
        for i in 0..r {
            let w = overlap(at(i, j), at(i + 1, j))
                * overlap(at(i + 1, j), at(i + 1, j + 1))
                * overlap(at(i + 1, j + 1), at(i, j + 1))
                * overlap(at(i, j + 1), at(i, j));
            flux -= w.arg();
        }
    }
    Ok(flux)
}

/// Uniform `n x n` grid over the Brillouin zone at `-pi + (i + offset) dk`.
/// Offsets `0` and `1/2` give grids closed under `k -> -k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KGrid {
    pub n: usize,
    pub offset: f64,
}

impl KGrid {
    pub fn symmetric(n: usize) -> Self {
        KGrid { n, offset: 0.5 }
    }

    pub fn step(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        -PI + (i as f64 + self.offset) * self.step()
    }

    fn sum<F>(&self, f: F) -> Result<Vec<f64>>
    where
        F: Fn(f64, f64) -> Result<Vec<f64>> + Sync,
    {
        let rows: Vec<Result<Vec<f64>>> = (0..self.n)
            .into_par_iter()
            .map(|j| {
                let ky = self.point(j);
                let mut acc: Vec<f64> = Vec::new();
                for i in 0..self.n {
                    let v = f(self.point(i), ky)?;
                    if acc.is_empty() {
                        acc = vec![0.0; v.len()];
                    }
                    for (a, b) in acc.iter_mut().zip(v) {
                        *a += b;
                    }
                }
                Ok(acc)
            })
            .collect();
        let mut total: Vec<f64> = Vec::new();
        for r in rows {
            let r = r?;
            if total.is_empty() {
                total = vec![0.0; r.len()];
            }
            for (a, b) in total.iter_mut().zip(r) {
                *a += b;
            }
        }
        Ok(total)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChernNumber {
    pub value: i32,
    /// Riemann sum before rounding.
    pub raw: f64,
    pub deviation: f64,
}

/// `(1/2pi) sum_k F(k) dk^2`, rounded.
pub fn chern_number(spec: &LatticeSpec, band: Band, grid_n: usize) -> Result<ChernNumber> {
    if grid_n < 50 {
        return Err(NessError::Validation(format!("grid_n must be at least 50, got {grid_n}")));
    }
    let grid = KGrid::symmetric(grid_n);
    let dk = grid.step();
    let total = grid.sum(|kx, ky| Ok(vec![berry_curvature(spec, band, kx, ky)?]))?;
    let raw = total[0] * dk * dk / (2.0 * PI);
    let value = raw.round();
    let deviation = (raw - value).abs();
    if deviation >= 0.1 {
        return Err(NessError::ChernNonConvergence { raw, deviation });
    }
    Ok(ChernNumber { value: value as i32, raw, deviation })
}

/// Largest difference between the link-variable flux and the closed-form
/// curvature integrated over each plaquette of an `n x n` grid.
pub fn curvature_crosscheck(spec: &LatticeSpec, band: Band, grid_n: usize, refine: usize) -> Result<f64> {
    let dk = 2.0 * PI / grid_n as f64;
    // 3-point Gauss-Legendre per direction for the closed form
    let nodes = [-(0.6f64).sqrt(), 0.0, (0.6f64).sqrt()];
    let weights = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
    let rows: Vec<Result<f64>> = (0..grid_n)
        .into_par_iter()
        .map(|j| {
            let ky0 = -PI + j as f64 * dk;
            let mut worst: f64 = 0.0;
            for i in 0..grid_n {
                let kx0 = -PI + i as f64 * dk;
                let mut exact = 0.0;
                for (a, wa) in nodes.iter().zip(weights) {
                    for (b, wb) in nodes.iter().zip(weights) {
                        let kx = kx0 + 0.5 * dk * (1.0 + a);
                        let ky = ky0 + 0.5 * dk * (1.0 + b);
                        exact += wa * wb * berry_curvature_closed_form(spec, band, kx, ky)?;
                    }
                }
                exact *= 0.25 * dk * dk;
                let link = plaquette_flux(spec, band, kx0, ky0, dk, refine)?;
                worst = worst.max((link - exact).abs());
            }
            Ok(worst)
        })
        .collect();
    rows.into_iter().try_fold(0.0f64, |m, r| Ok(m.max(r?)))
}

/// Confining potential `V = (x/s)^p + (y/s)^p` on a square real-space grid
/// centred on the lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(default = "default_power")]
    pub power: i32,
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_gradient_step")]
    pub gradient_step: f64,
}

fn default_scale() -> f64 {
    8.0
}
fn default_power() -> i32 {
    10
}
fn default_half_width() -> f64 {
    10.0
}
fn default_points() -> usize {
    41
}
fn default_gradient_step() -> f64 {
    1e-4
}

impl Default for PotentialSpec {
    fn default() -> Self {
        PotentialSpec {
            scale: default_scale(),
            power: default_power(),
            half_width: default_half_width(),
            points: default_points(),
            gradient_step: default_gradient_step(),
        }
    }
}

impl PotentialSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0) || self.power < 2 || self.power % 2 != 0 {
            return Err(NessError::Validation("potential needs a positive scale and an even power >= 2".into()));
        }
        if self.points < 2 || !(self.half_width > 0.0) || !(self.gradient_step > 0.0) {
            return Err(NessError::Validation("invalid potential grid".into()));
        }
        Ok(())
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        (x / self.scale).powi(self.power) + (y / self.scale).powi(self.power)
    }

    /// Central-difference gradient.
    pub fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        let h = self.gradient_step;
        (
            (self.value(x + h, y) - self.value(x - h, y)) / (2.0 * h),
            (self.value(x, y + h) - self.value(x, y - h)) / (2.0 * h),
        )
    }

    pub fn coordinates(&self) -> Vec<f64> {
        let step = 2.0 * self.half_width / (self.points - 1) as f64;
        (0..self.points).map(|i| -self.half_width + i as f64 * step).collect()
    }
}

/// Occupation that depends on energy only: the mean of the two reservoir
/// distributions, which is the weak-coupling law for symmetric lattices.
pub fn symmetric_occupation(bath: &BathSpec) -> impl Fn(f64) -> Result<f64> + Sync + '_ {
    move |w| Ok(0.5 * (bath.distribution(w, Reservoir::Hot)? + bath.distribution(w, Reservoir::Cold)?))
}

/// `int d^2k {n[w_-] - n[w_+]} F_-(k)`, the strength of the edge velocity term.
pub fn edge_prefactor<N>(spec: &LatticeSpec, occupation: &N, grid: KGrid) -> Result<f64>
where
    N: Fn(f64) -> Result<f64> + Sync,
{
    let dk = grid.step();
    let total = grid.sum(|kx, ky| {
        let p = bloch_point(spec, kx, ky);
        let f = berry_curvature(spec, Band::Minus, kx, ky)?;
        Ok(vec![(occupation(p.omega_minus)? - occupation(p.omega_plus)?) * f])
    })?;
    Ok(total[0] * dk * dk)
}

/// `|int d^2k {n[w_-] - n[w_+]} d_k w_-|`, which vanishes by `k -> -k` parity.
pub fn bulk_cancellation_check<N>(spec: &LatticeSpec, occupation: &N, grid: KGrid) -> Result<f64>
where
    N: Fn(f64) -> Result<f64> + Sync,
{
    let dk = grid.step();
    let total = grid.sum(|kx, ky| {
        let (h, e) = gapped_norm(spec, kx, ky)?;
        let p = bloch_point(spec, kx, ky);
        let weight = occupation(p.omega_minus)? - occupation(p.omega_plus)?;
        // d w_- / dk = -(h . dh/dk) / |h|
        let gx = -(h[1] * spec.tx * kx.cos() - h[2] * spec.tx * kx.sin()) / e;
        let gy = -(h[0] * spec.ty * ky.cos() - h[2] * spec.ty * ky.sin()) / e;
        Ok(vec![weight * gx, weight * gy])
    })?;
    Ok((total[0] * dk * dk).hypot(total[1] * dk * dk))
}

/// Semiclassical current `I = A (d_y V, -d_x V)` on the potential grid.
#[derive(Clone, Debug, Serialize)]
pub struct SemiclassicalField {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// `ix[[i, j]]` at `(xs[i], ys[j])`.
    pub ix: Array2<f64>,
    pub iy: Array2<f64>,
    pub prefactor: f64,
}

impl SemiclassicalField {
    /// Clockwise tangential component `I . (y, -x) / r` at each point.
    pub fn clockwise_components(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (i, &x) in self.xs.iter().enumerate() {
            for (j, &y) in self.ys.iter().enumerate() {
                let r = x.hypot(y);
                if r > 0.0 {
                    out.push((self.ix[[i, j]] * y - self.iy[[i, j]] * x) / r);
                }
            }
        }
        out
    }

    /// Sign of the boundary circulation, positive for clockwise flow (along
    /// `+x` on the upper edge), or `None` if the significant tangential
    /// components disagree in sign or all vanish.
    pub fn circulation_sign(&self) -> Option<f64> {
        let comps = self.clockwise_components();
        let scale = comps.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return None;
        }
        let significant: Vec<f64> = comps.into_iter().filter(|v| v.abs() > 1e-6 * scale).collect();
        let sign = significant[0].signum();
        significant.iter().all(|v| v.signum() == sign).then_some(sign)
    }

    pub fn max_magnitude(&self) -> f64 {
        self.ix.iter().zip(self.iy.iter()).fold(0.0, |m, (a, b)| m.max(a.hypot(*b)))
    }
}

pub fn semiclassical_current_field<N>(
    spec: &LatticeSpec,
    occupation: &N,
    potential: &PotentialSpec,
    grid: KGrid,
) -> Result<SemiclassicalField>
where
    N: Fn(f64) -> Result<f64> + Sync,
{
    potential.validate()?;
    let a = edge_prefactor(spec, occupation, grid)?;
    let xs = potential.coordinates();
    let ys = xs.clone();
    let mut ix = Array2::zeros((xs.len(), ys.len()));
    let mut iy = Array2::zeros((xs.len(), ys.len()));
    for (i, &x) in xs.iter().enumerate() {
        for (j, &y) in ys.iter().enumerate() {
            let (gx, gy) = potential.gradient(x, y);
            ix[[i, j]] = a * gy;
            iy[[i, j]] = -a * gx;
        }
    }
    Ok(SemiclassicalField { xs, ys, ix, iy, prefactor: a })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baths::Statistics;

    fn qwz(m: f64) -> LatticeSpec {
        LatticeSpec::new(2, 2, 1.0, 1.0, m, 10.0).unwrap()
    }

    #[test]
    fn curvature_at_gamma_point() {
        let f = berry_curvature_closed_form(&qwz(1.0), Band::Plus, 0.0, 0.0).unwrap();
        assert!((f - 1.0 / 18.0).abs() < 1e-15);
        let g = berry_curvature(&qwz(1.0), Band::Plus, 0.0, 0.0).unwrap();
        assert!((g - 1.0 / 18.0).abs() < 1e-15);
    }

    #[test]
    fn triple_product_matches_closed_form() {
        let spec = qwz(1.3);
        for i in 0..40 {
            let kx = -3.0 + 0.15 * i as f64;
            let ky = 2.9 - 0.13 * i as f64;
            for band in [Band::Plus, Band::Minus] {
                let a = berry_curvature(&spec, band, kx, ky).unwrap();
                let b = berry_curvature_closed_form(&spec, band, kx, ky).unwrap();
                assert!((a - b).abs() < 1e-13);
            }
            let p = berry_curvature(&spec, Band::Plus, kx, ky).unwrap();
            let q = berry_curvature(&spec, Band::Minus, kx, ky).unwrap();
            assert_eq!(p, -q);
            let r = berry_curvature(&spec, Band::Plus, -kx, -ky).unwrap();
            assert!((p - r).abs() < 1e-14);
        }
    }

    #[test]
    fn gap_closing_is_reported() {
        // h vanishes at (pi, pi) when m = 2t
        assert!(matches!(berry_curvature(&qwz(2.0), Band::Minus, PI, PI), Err(NessError::GapClosing { .. })));
    }

    #[test]
    fn bands_are_ordered() {
        let p = bloch_point(&qwz(1.0), 0.3, -1.1);
        assert!(p.omega_plus >= p.omega_minus);
        assert!((p.omega_plus + p.omega_minus - 20.0).abs() < 1e-14);
    }

    #[test]
    fn link_flux_tracks_curvature() {
        let spec = qwz(1.0);
        let dk = 2.0 * PI / 200.0;
        let (kx, ky) = (0.2, -0.7);
        let link = plaquette_flux(&spec, Band::Minus, kx, ky, dk, 1).unwrap();
        let f = berry_curvature(&spec, Band::Minus, kx + dk / 2.0, ky + dk / 2.0).unwrap();
        assert!((link - f * dk * dk).abs() < 1e-7, "{link} {}", f * dk * dk);
    }

    #[test]
    fn trivial_and_topological_phases() {
        assert_eq!(chern_number(&qwz(3.0), Band::Minus, 100).unwrap().value, 0);
        let c = chern_number(&qwz(1.0), Band::Minus, 100).unwrap();
        assert_eq!(c.value.abs(), 1);
        let d = chern_number(&qwz(-1.0), Band::Minus, 100).unwrap();
        assert_eq!(d.value, -c.value);
        assert!(chern_number(&qwz(1.0), Band::Minus, 10).is_err());
    }

    #[test]
    fn constant_occupation_gives_no_current() {
        let flat = |_: f64| Ok(0.3);
        let f = semiclassical_current_field(&qwz(1.0), &flat, &PotentialSpec::default(), KGrid::symmetric(60)).unwrap();
        assert_eq!(f.max_magnitude(), 0.0);
        assert!(f.circulation_sign().is_none());
    }

    #[test]
    fn field_vanishes_at_potential_minimum() {
        let bath = BathSpec::new(Statistics::Boson, 1.0, 0.01, 0.0, 0.01).unwrap();
        let occ = symmetric_occupation(&bath);
        let pot = PotentialSpec::default();
        let f = semiclassical_current_field(&qwz(2.1), &occ, &pot, KGrid::symmetric(80)).unwrap();
        let mid = pot.points / 2;
        assert_eq!(f.ix[[mid, mid]], 0.0);
        assert!(f.circulation_sign().is_some());
    }

    #[test]
    fn bulk_term_cancels_on_symmetric_grids() {
        let bath = BathSpec::new(Statistics::Fermion, 1.0, 0.01, 10.0, 0.01).unwrap();
        let occ = symmetric_occupation(&bath);
        let r = bulk_cancellation_check(&qwz(1.0), &occ, KGrid::symmetric(64)).unwrap();
        assert!(r < 1e-12);
    }
}
