//! Adaptive 21-point Gauss–Kronrod quadrature for complex vector-valued
//! integrands on the real line.
//!
//! The integration range is split at caller-supplied breakpoints (resonance
//! positions, Fermi levels) and semi-infinite tails are mapped onto `(0, 1]`
//! with `omega = c +- (1 - u) / u`. Panels are bisected until the
//! Kronrod/Gauss error estimate is small either relative to the panel's own
//! contribution or relative to its share of the global budget. Processing
//! order is fixed, so results are bitwise reproducible.

use num_complex::Complex64;

use crate::error::{NessError, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_067_055_082,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

const NODES: usize = 21;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bound {
    Finite(f64),
    Infinite,
}

#[derive(Clone, Debug)]
pub struct Estimate {
    pub value: Vec<Complex64>,
    /// Sum of the accepted panels' error estimates (max-norm per panel).
    pub error: f64,
    pub evaluations: usize,
    /// Panels accepted only because they hit the depth or width limit.
    pub unconverged_panels: usize,
}

#[derive(Clone, Copy, Debug)]
enum Map {
    Identity,
    Above(f64),
    Below(f64),
}

impl Map {
    #[inline]
    fn apply(self, u: f64) -> (f64, f64) {
        match self {
            Map::Identity => (u, 1.0),
            Map::Above(c) => (c + (1.0 - u) / u, 1.0 / (u * u)),
            Map::Below(c) => (c - (1.0 - u) / u, 1.0 / (u * u)),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Panel {
    map: Map,
    a: f64,
    b: f64,
    depth: u32,
}

struct PanelResult {
    value: Vec<Complex64>,
    error: f64,
    magnitude: f64,
}

pub struct Integrator {
    pub tolerance: Tolerance,
    pub max_depth: u32,
    pub max_panels: usize,
    /// Finite seed panels wider than a few `resolution` are cut into pieces
    /// that grow geometrically away from both ends. A single panel spanning
    /// decades would otherwise place no node inside a feature hugging one of
    /// its ends, and the Gauss and Kronrod rules would agree on nothing.
    pub resolution: f64,
}

impl Integrator {
    pub fn new(tolerance: Tolerance) -> Self {
        Integrator { tolerance, max_depth: 60, max_panels: 2_000_000, resolution: 1.0 }
    }

    pub fn with_resolution(mut self, resolution: f64) -> Self {
        self.resolution = resolution;
        self
    }

    /// Integrates `f` over `(lower, upper)`. `f(omega, out)` must overwrite
    /// all `dim` entries of `out`.
    ///
    /// Breakpoints outside a finite bound are ignored; an infinite bound
    /// attaches its tail at the outermost breakpoint.
    pub fn integrate<F>(&self, f: F, dim: usize, lower: Bound, upper: Bound, breakpoints: &[f64]) -> Result<Estimate>
    where
        F: Fn(f64, &mut [Complex64]),
    {
        let seeds = seed_panels(lower, upper, breakpoints, self.resolution)?;
        let measure: f64 = seeds.iter().map(|p| p.b - p.a).sum();
        let tol = self.tolerance;

        let mut scratch = vec![Complex64::new(0.0, 0.0); NODES * dim];
        let mut evaluations = 0usize;

        let mut first: Vec<(Panel, PanelResult)> = Vec::with_capacity(seeds.len());
        let mut rough = vec![Complex64::new(0.0, 0.0); dim];
        for p in seeds {
            let r = evaluate(&f, p, dim, &mut scratch);
            evaluations += NODES;
            for (acc, v) in rough.iter_mut().zip(&r.value) {
                *acc += v;
            }
            first.push((p, r));
        }
        let scale = max_norm(&rough);
        let budget = tol.abs.max(tol.rel * scale);

        let mut total = vec![Complex64::new(0.0, 0.0); dim];
        let mut error = 0.0;
        let mut unconverged = 0usize;
        let mut unconverged_error = 0.0;
        let mut panels = 0usize;

        let mut stack: Vec<(Panel, PanelResult)> = Vec::new();
        for seed in first.into_iter().rev() {
            stack.push(seed);
            while let Some((p, r)) = stack.pop() {
                panels += 1;
                let share = budget * (p.b - p.a) / measure;
                let target = share.max(tol.rel * r.magnitude);
                let mid = 0.5 * (p.a + p.b);
                let too_fine = p.depth >= self.max_depth
                    || !(mid > p.a && mid < p.b)
                    || (p.b - p.a) <= 8.0 * f64::EPSILON * p.a.abs().max(p.b.abs());
                if r.error <= target || too_fine || panels > self.max_panels {
                    if r.error > target {
                        unconverged += 1;
                        unconverged_error += r.error;
                    }
                    for (acc, v) in total.iter_mut().zip(&r.value) {
                        *acc += v;
                    }
                    error += r.error;
                    continue;
                }
                let left = Panel { b: mid, depth: p.depth + 1, ..p };
                let right = Panel { a: mid, depth: p.depth + 1, ..p };
                let rl = evaluate(&f, left, dim, &mut scratch);
                let rr = evaluate(&f, right, dim, &mut scratch);
                evaluations += 2 * NODES;
                stack.push((right, rr));
                stack.push((left, rl));
            }
        }

        let final_budget = tol.abs.max(tol.rel * max_norm(&total));
        if unconverged_error > final_budget {
            return Err(NessError::Integration { estimate: error, tolerance: final_budget });
        }
        Ok(Estimate { value: total, error, evaluations, unconverged_panels: unconverged })
    }
}

fn seed_panels(lower: Bound, upper: Bound, breakpoints: &[f64], resolution: f64) -> Result<Vec<Panel>> {
    let mut pts: Vec<f64> = breakpoints.iter().copied().filter(|x| x.is_finite()).collect();
    if let Bound::Finite(a) = lower {
        pts.retain(|&x| x > a);
        pts.push(a);
    }
    if let Bound::Finite(b) = upper {
        pts.retain(|&x| x < b);
        pts.push(b);
    }
    pts.sort_by(|a, b| a.total_cmp(b));
    pts.dedup();
    if pts.is_empty() {
        return Err(NessError::Validation("an infinite integration range needs at least one breakpoint".into()));
    }
    if let (Bound::Finite(a), Bound::Finite(b)) = (lower, upper) {
        if !(b > a) {
            return Err(NessError::Validation(format!("empty integration range [{a}, {b}]")));
        }
    }

    let mut seeds = Vec::with_capacity(pts.len() + 1);
    if lower == Bound::Infinite {
        seeds.push(Panel { map: Map::Below(pts[0]), a: 0.0, b: 1.0, depth: 0 });
    }
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mut cuts = vec![a];
        if resolution > 0.0 && b - a > 4.0 * resolution {
            let mid = 0.5 * (a + b);
            let mut h = resolution;
            let mut right = Vec::new();
            while a + h < mid {
                cuts.push(a + h);
                right.push(b - h);
                h *= 2.0;
            }
            cuts.push(mid);
            cuts.extend(right.into_iter().rev());
        }
        cuts.push(b);
        for c in cuts.windows(2) {
            seeds.push(Panel { map: Map::Identity, a: c[0], b: c[1], depth: 0 });
        }
    }
    if upper == Bound::Infinite {
        seeds.push(Panel { map: Map::Above(pts[pts.len() - 1]), a: 0.0, b: 1.0, depth: 0 });
    }
    Ok(seeds)
}

fn evaluate<F>(f: &F, p: Panel, dim: usize, fv: &mut [Complex64]) -> PanelResult
where
    F: Fn(f64, &mut [Complex64]),
{
    let center = 0.5 * (p.a + p.b);
    let half = 0.5 * (p.b - p.a);
    // node k <-> abscissa center - half * XGK[k] for k < 10, center for k = 10,
    // center + half * XGK[k - 11] for k > 10
    for k in 0..NODES {
        let u = if k < 10 {
            center - half * XGK[k]
        } else if k == 10 {
            center
        } else {
            center + half * XGK[k - 11]
        };
        let (omega, jac) = p.map.apply(u);
        let out = &mut fv[k * dim..(k + 1) * dim];
        f(omega, out);
        if jac != 1.0 {
            for z in out.iter_mut() {
                *z *= jac;
            }
        }
    }

    let mut value = vec![Complex64::new(0.0, 0.0); dim];
    let mut error: f64 = 0.0;
    let mut magnitude: f64 = 0.0;
    for i in 0..dim {
        let at = |k: usize| fv[k * dim + i];
        let mut kron = at(10) * WGK[10];
        let mut gauss = Complex64::new(0.0, 0.0);
        let mut abs_re = at(10).re.abs() * WGK[10];
        let mut abs_im = at(10).im.abs() * WGK[10];
        for j in 0..10 {
            let pair = at(j) + at(11 + j);
            kron += pair * WGK[j];
            if j % 2 == 1 {
                gauss += pair * WG[j / 2];
            }
            abs_re += WGK[j] * (at(j).re.abs() + at(11 + j).re.abs());
            abs_im += WGK[j] * (at(j).im.abs() + at(11 + j).im.abs());
        }
        let mean = kron * 0.5;
        let mut asc_re = WGK[10] * (at(10).re - mean.re).abs();
        let mut asc_im = WGK[10] * (at(10).im - mean.im).abs();
        for j in 0..10 {
            asc_re += WGK[j] * ((at(j).re - mean.re).abs() + (at(11 + j).re - mean.re).abs());
            asc_im += WGK[j] * ((at(j).im - mean.im).abs() + (at(11 + j).im - mean.im).abs());
        }
        let h = half.abs();
        let e_re = rescale((kron.re - gauss.re) * h, asc_re * h, abs_re * h);
        let e_im = rescale((kron.im - gauss.im) * h, asc_im * h, abs_im * h);
        let v = kron * half;
        value[i] = v;
        error = error.max(e_re.hypot(e_im));
        magnitude = magnitude.max(v.norm());
    }
    PanelResult { value, error, magnitude }
}

fn rescale(raw: f64, resasc: f64, resabs: f64) -> f64 {
    let mut err = raw.abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    err
}

pub(crate) fn max_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Convenience wrapper for scalar real integrands.
pub fn integrate_real<F>(
    integrator: &Integrator,
    f: F,
    lower: Bound,
    upper: Bound,
    breakpoints: &[f64],
) -> Result<(f64, f64)>
where
    F: Fn(f64) -> f64,
{
    let est = integrator.integrate(
        |w, out: &mut [Complex64]| out[0] = Complex64::new(f(w), 0.0),
        1,
        lower,
        upper,
        breakpoints,
    )?;
    Ok((est.value[0].re, est.error))
}
