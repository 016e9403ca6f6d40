//! Kernels, the integral map `T_mu`, the measure `sigma = d(x, E)^{-n} dm_n`,
//! Monte Carlo quadrature over truncated cones and the truncated conical
//! square functions `C_{mu,s}^t`.
//!
//! Cone quadrature is stratified by global dyadic height shells
//! `(2^j, 2^{j+1}]`. Shell `j` draws uniformly in `B(apex, 2^{j+2})` from its
//! own stream, and the first `N` draws never depend on the truncation, so two
//! truncations of the same cone integrate over nested subsets of one sample set.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{uniform_in_ball, unit_ball_volume, ClosedSet, ConeSpec, Point};
use crate::measure::{AtomicMeasure, ComplexAtomicMeasure};
use crate::rng::stream;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub m: f64,
    pub alpha: f64,
    pub beta: f64,
    pub k1: f64,
    pub k2: f64,
}

impl KernelParams {
    /// Decay exponent `m + alpha` of the size estimate.
    pub fn p(&self) -> f64 {
        self.m + self.alpha
    }
}

/// A square-function kernel `S(x, y)` for `x` off `E` and `y` in `E`.
pub trait Kernel: Sync + Send {
    fn eval(&self, x: &Point, y: &Point) -> Complex64;
    fn params(&self) -> KernelParams;
}

/// Built-in kernels, selectable by name in scenario files.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `|x - y|^{-(m + alpha)}`.
    Power { m: f64, alpha: f64 },
    /// `(x_1 - y_1) / |x - y|^{m + alpha + 1}`.
    Signed { m: f64, alpha: f64 },
    /// `|x - y|^{-(m + alpha + excess)}` advertised with the constants of `Power`.
    Broken { m: f64, alpha: f64, excess: f64 },
}

impl KernelSpec {
    pub fn power(m: f64, alpha: f64) -> KernelSpec {
        KernelSpec::Power { m, alpha }
    }

    pub fn validate(&self) -> Result<()> {
        let (m, alpha) = match *self {
            KernelSpec::Power { m, alpha }
            | KernelSpec::Signed { m, alpha }
            | KernelSpec::Broken { m, alpha, .. } => (m, alpha),
        };
        if !(m > 0.0 && alpha > 0.0 && alpha <= 1.0) {
            return Err(invalid(format!("kernel needs m > 0 and alpha in (0, 1], got m={m} alpha={alpha}")));
        }
        Ok(())
    }
}

impl Kernel for KernelSpec {
    fn eval(&self, x: &Point, y: &Point) -> Complex64 {
        let r = x.dist(y);
        let v = match *self {
            KernelSpec::Power { m, alpha } => r.powf(-(m + alpha)),
            KernelSpec::Signed { m, alpha } => (x.get(0) - y.get(0)) * r.powf(-(m + alpha + 1.0)),
            KernelSpec::Broken { m, alpha, excess } => r.powf(-(m + alpha + excess)),
        };
        Complex64::new(v, 0.0)
    }

    fn params(&self) -> KernelParams {
        match *self {
            KernelSpec::Power { m, alpha } | KernelSpec::Broken { m, alpha, .. } => {
                let p = m + alpha;
                KernelParams {
                    m,
                    alpha,
                    beta: 1.0,
                    k1: 1.0,
                    k2: p * 2f64.powf(p + 1.0),
                }
            }
            KernelSpec::Signed { m, alpha } => {
                let p = m + alpha;
                KernelParams {
                    m,
                    alpha,
                    beta: 1.0,
                    k1: 1.0,
                    k2: (p + 2.0) * 2f64.powf(p + 1.0),
                }
            }
        }
    }
}

/// A user kernel given by a closure and its advertised constants.
pub struct FnKernel<F> {
    pub f: F,
    pub params: KernelParams,
}

impl<F: Fn(&Point, &Point) -> Complex64 + Sync + Send> Kernel for FnKernel<F> {
    fn eval(&self, x: &Point, y: &Point) -> Complex64 {
        (self.f)(x, y)
    }

    fn params(&self) -> KernelParams {
        self.params
    }
}

fn off_set(e: &ClosedSet, x: &Point) -> Result<f64> {
    let d = e.distance(x)?;
    if d > 0.0 {
        Ok(d)
    } else {
        Err(invalid("evaluation point lies in E"))
    }
}

/// `T_mu f(x) = sum_i S(x, z_i) f(z_i) w_i`.
pub fn apply_t(
    kernel: &dyn Kernel,
    mu: &AtomicMeasure,
    f: &[Complex64],
    e: &ClosedSet,
    x: &Point,
) -> Result<Complex64> {
    if f.len() != mu.len() {
        return Err(Error::DimensionMismatch {
            expected: mu.len(),
            got: f.len(),
        });
    }
    off_set(e, x)?;
    Ok(t_unchecked(kernel, mu.points(), mu.weights(), f, x))
}

/// `T nu(x)` for a complex atomic measure.
pub fn apply_t_measure(
    kernel: &dyn Kernel,
    nu: &ComplexAtomicMeasure,
    e: &ClosedSet,
    x: &Point,
) -> Result<Complex64> {
    off_set(e, x)?;
    Ok(nu
        .points()
        .iter()
        .zip(nu.weights())
        .map(|(z, w)| kernel.eval(x, z) * w)
        .sum())
}

fn t_unchecked(
    kernel: &dyn Kernel,
    points: &[Point],
    weights: &[f64],
    f: &[Complex64],
    x: &Point,
) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for ((z, w), v) in points.iter().zip(weights).zip(f) {
        if *w != 0.0 && (v.re != 0.0 || v.im != 0.0) {
            acc += kernel.eval(x, z) * v * *w;
        }
    }
    acc
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub samples_per_shell: usize,
    pub seed: u64,
    /// When set, sample counts double until the relative standard error drops
    /// below this value or `max_samples_per_shell` is reached.
    #[serde(default)]
    pub target_rel_err: Option<f64>,
    #[serde(default = "default_max")]
    pub max_samples_per_shell: usize,
}

fn default_max() -> usize {
    1 << 16
}

impl QuadratureConfig {
    pub fn new(samples_per_shell: usize, seed: u64) -> QuadratureConfig {
        QuadratureConfig {
            samples_per_shell,
            seed,
            target_rel_err: None,
            max_samples_per_shell: default_max(),
        }
    }

    pub fn with_target(mut self, rel: f64) -> QuadratureConfig {
        self.target_rel_err = Some(rel);
        self
    }
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig::new(2000, 0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShellEstimate {
    pub j: i32,
    pub value: f64,
    pub stderr: f64,
    pub accepted: usize,
    pub drawn: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub shells: Vec<ShellEstimate>,
}

impl Estimate {
    pub fn zero() -> Estimate {
        Estimate {
            value: 0.0,
            stderr: 0.0,
            shells: Vec::new(),
        }
    }

    pub fn rel_err(&self) -> f64 {
        if self.value == 0.0 {
            if self.stderr == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.stderr / self.value.abs()
        }
    }
}

/// Accepted draws of one height shell.
#[derive(Clone, Debug)]
pub struct ShellSamples {
    pub j: i32,
    /// Volume of the sampling ball.
    pub volume: f64,
    pub drawn: usize,
    pub points: Vec<Point>,
    pub heights: Vec<f64>,
}

impl ShellSamples {
    /// Unbiased `sigma` weight of one draw at height `d`; shell estimates are
    /// means of weighted values over all draws.
    pub fn weight(&self, d: f64, n: usize) -> f64 {
        self.volume * d.powi(-(n as i32))
    }
}

/// Samples of the truncated cone `Γ_s^t(apex)`.
#[derive(Clone, Debug)]
pub struct ConeSampleSet {
    pub apex: Point,
    pub lower: f64,
    pub upper: f64,
    pub shells: Vec<ShellSamples>,
}

fn check_truncation(s: f64, t: f64) -> Result<()> {
    if !(s > 0.0) {
        return Err(invalid(format!("lower truncation must be positive, got {s}")));
    }
    if !(s < t) || !t.is_finite() {
        return Err(invalid(format!("truncation needs s < t < inf, got s={s} t={t}")));
    }
    Ok(())
}

fn shell_range(s: f64, t: f64) -> Vec<i32> {
    let lo = s.log2().floor() as i32 - 1;
    let hi = t.log2().ceil() as i32 + 1;
    (lo..=hi)
        .filter(|&j| 2f64.powi(j) < t && 2f64.powi(j + 1) > s)
        .collect()
}

fn draw_stream_id(stream_id: u64, j: i32) -> [u64; 2] {
    [stream_id, j as i64 as u64]
}

impl ConeSampleSet {
    pub fn generate(
        e: &ClosedSet,
        apex: &Point,
        s: f64,
        t: f64,
        samples: usize,
        seed: u64,
        stream_id: u64,
    ) -> Result<ConeSampleSet> {
        check_truncation(s, t)?;
        if apex.dim() != e.dim() {
            return Err(Error::DimensionMismatch {
                expected: e.dim(),
                got: apex.dim(),
            });
        }
        if samples < 2 {
            return Err(Error::InsufficientSamples {
                got: samples,
                needed: 2,
            });
        }
        let n = e.dim();
        let cone = ConeSpec::truncated(*apex, s, t);
        let shells = shell_range(s, t)
            .into_par_iter()
            .map(|j| {
                let top = 2f64.powi(j + 1);
                let radius = 2.0 * top;
                let mut rng = stream(seed, &draw_stream_id(stream_id, j));
                let mut points = Vec::new();
                let mut heights = Vec::new();
                for _ in 0..samples {
                    let x = uniform_in_ball(&mut rng, apex, radius);
                    let d = e.dist(&x);
                    if d > top / 2.0 && d <= top && cone.contains_with(&x, d) {
                        points.push(x);
                        heights.push(d);
                    }
                }
                ShellSamples {
                    j,
                    volume: unit_ball_volume(n) * radius.powi(n as i32),
                    drawn: samples,
                    points,
                    heights,
                }
            })
            .collect();
        Ok(ConeSampleSet {
            apex: *apex,
            lower: s,
            upper: t,
            shells,
        })
    }

    pub fn dim(&self) -> usize {
        self.apex.dim()
    }

    /// `∫ g(x, d(x, E)) dsigma` over the cone.
    pub fn integrate(&self, g: impl Fn(&Point, f64) -> f64 + Sync) -> Estimate {
        self.integrate_window(self.lower, self.upper, g)
    }

    /// Same integral over the sub-cone `lo < d <= hi` using the same draws.
    pub fn integrate_window(&self, lo: f64, hi: f64, g: impl Fn(&Point, f64) -> f64 + Sync) -> Estimate {
        let n = self.dim();
        let shells: Vec<ShellEstimate> = self
            .shells
            .par_iter()
            .map(|sh| {
                let vals: Vec<f64> = sh
                    .points
                    .iter()
                    .zip(&sh.heights)
                    .filter(|(_, &d)| d > lo && d <= hi)
                    .map(|(x, &d)| g(x, d) * sh.weight(d, n))
                    .collect();
                shell_estimate(sh, &vals)
            })
            .collect();
        combine(shells)
    }

    /// Per-draw integrand values, one vector per shell, for callers that need
    /// several integrands of the same draws.
    pub fn estimate_from(&self, per_shell: &[Vec<f64>]) -> Estimate {
        combine(
            self.shells
                .iter()
                .zip(per_shell)
                .map(|(sh, v)| shell_estimate(sh, v))
                .collect(),
        )
    }

    pub fn accepted(&self) -> usize {
        self.shells.iter().map(|s| s.points.len()).sum()
    }
}

/// Mean and standard error of one shell given the weighted values of its accepted
/// draws; the remaining draws contribute zeros.
fn shell_estimate(sh: &ShellSamples, vals: &[f64]) -> ShellEstimate {
    let n = sh.drawn as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let second = vals.iter().map(|v| v * v).sum::<f64>() / n;
    let var = ((second - mean * mean) * n / (n - 1.0)).max(0.0);
    ShellEstimate {
        j: sh.j,
        value: mean,
        stderr: (var / n).sqrt(),
        accepted: vals.len(),
        drawn: sh.drawn,
    }
}

fn combine(shells: Vec<ShellEstimate>) -> Estimate {
    let value = shells.iter().map(|s| s.value).sum();
    let var: f64 = shells.iter().map(|s| s.stderr * s.stderr).sum();
    Estimate {
        value,
        stderr: var.sqrt(),
        shells,
    }
}

/// `∫_{Γ_s^t(y)} g dsigma`, doubling the sample count under a target error.
pub fn cone_sigma_integral(
    e: &ClosedSet,
    y: &Point,
    s: f64,
    t: f64,
    g: impl Fn(&Point, f64) -> f64 + Sync,
    cfg: &QuadratureConfig,
) -> Result<Estimate> {
    let mut n = cfg.samples_per_shell;
    loop {
        let set = ConeSampleSet::generate(e, y, s, t, n, cfg.seed, 0)?;
        let est = set.integrate(&g);
        match cfg.target_rel_err {
            Some(target) if est.rel_err() > target && 2 * n <= cfg.max_samples_per_shell => n *= 2,
            _ => return Ok(est),
        }
    }
}

/// Upper bound `m_n(B(y, 2t)) / s^n` for `sigma(Γ_s^t(y))`.
pub fn cone_sigma_bound(n: usize, s: f64, t: f64) -> f64 {
    unit_ball_volume(n) * (2.0 * t).powi(n as i32) / s.powi(n as i32)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SquareEstimate {
    pub value: f64,
    pub stderr: f64,
    pub integral: Estimate,
}

impl SquareEstimate {
    /// Square root with first-order error propagation.
    pub fn from_integral(integral: Estimate) -> SquareEstimate {
        let v = integral.value.max(0.0);
        let value = v.sqrt();
        let stderr = if value > 0.0 {
            integral.stderr / (2.0 * value)
        } else {
            integral.stderr.sqrt()
        };
        SquareEstimate {
            value,
            stderr,
            integral,
        }
    }
}

/// `|T_mu f|^2 d^{2 alpha}` at every accepted draw, for several densities at once.
pub fn square_integrands(
    kernel: &dyn Kernel,
    mu: &AtomicMeasure,
    fs: &[Vec<Complex64>],
    set: &ConeSampleSet,
) -> Vec<Vec<Vec<f64>>> {
    let n = set.dim();
    let alpha = kernel.params().alpha;
    let (pts, ws) = (mu.points(), mu.weights());
    let active: Vec<usize> = (0..mu.len()).filter(|&i| ws[i] != 0.0).collect();
    set.shells
        .par_iter()
        .map(|sh| {
            let mut out = vec![Vec::with_capacity(sh.points.len()); fs.len()];
            let mut row = Vec::with_capacity(active.len());
            for (x, &d) in sh.points.iter().zip(&sh.heights) {
                row.clear();
                row.extend(active.iter().map(|&i| kernel.eval(x, &pts[i]) * ws[i]));
                let w = sh.weight(d, n) * d.powf(2.0 * alpha);
                for (f, o) in fs.iter().zip(out.iter_mut()) {
                    let tf: Complex64 = active.iter().zip(&row).map(|(&i, k)| k * f[i]).sum();
                    o.push(tf.norm_sqr() * w);
                }
            }
            out
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(vec![Vec::new(); fs.len()], |mut acc, shell| {
            for (a, s) in acc.iter_mut().zip(shell) {
                a.push(s);
            }
            acc
        })
}

/// `C_{mu,s}^t f(y)` for several densities sharing one sample set.
#[allow(clippy::too_many_arguments)]
pub fn square_function_many(
    kernel: &dyn Kernel,
    mu: &AtomicMeasure,
    fs: &[Vec<Complex64>],
    e: &ClosedSet,
    y: &Point,
    s: f64,
    t: f64,
    cfg: &QuadratureConfig,
) -> Result<Vec<SquareEstimate>> {
    if let Some(f) = fs.iter().find(|f| f.len() != mu.len()) {
        return Err(Error::DimensionMismatch {
            expected: mu.len(),
            got: f.len(),
        });
    }
    let mut n = cfg.samples_per_shell;
    loop {
        let set = ConeSampleSet::generate(e, y, s, t, n, cfg.seed, 0)?;
        let vals = square_integrands(kernel, mu, fs, &set);
        let out: Vec<SquareEstimate> = vals
            .iter()
            .map(|v| SquareEstimate::from_integral(set.estimate_from(v)))
            .collect();
        let worst = out.iter().map(|o| o.integral.rel_err()).fold(0.0, f64::max);
        match cfg.target_rel_err {
            Some(target) if worst > target && 2 * n <= cfg.max_samples_per_shell => n *= 2,
            _ => return Ok(out),
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn square_function(
    kernel: &dyn Kernel,
    mu: &AtomicMeasure,
    f: &[Complex64],
    e: &ClosedSet,
    y: &Point,
    s: f64,
    t: f64,
    cfg: &QuadratureConfig,
) -> Result<SquareEstimate> {
    let mut v = square_function_many(kernel, mu, &[f.to_vec()], e, y, s, t, cfg)?;
    Ok(v.remove(0))
}

/// `C nu(y)` truncated to `Γ_s^t(y)` for a complex measure.
#[allow(clippy::too_many_arguments)]
pub fn square_function_measure(
    kernel: &dyn Kernel,
    nu: &ComplexAtomicMeasure,
    e: &ClosedSet,
    y: &Point,
    s: f64,
    t: f64,
    cfg: &QuadratureConfig,
) -> Result<SquareEstimate> {
    let tv = nu.total_variation();
    let polar = nu.polar();
    square_function(kernel, &tv, &polar, e, y, s, t, cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetricDifference {
    pub estimate: Estimate,
    pub t: f64,
    pub r: f64,
    /// `t` times the estimate, bounded along a `t` ladder when the bound holds.
    pub scaled: f64,
}

/// `sigma(Γ_{tr}(y) Δ Γ_{tr}(y'))` over heights `(tr, tr 2^levels]`.
#[allow(clippy::too_many_arguments)]
pub fn cone_symmetric_difference(
    e: &ClosedSet,
    y: &Point,
    y2: &Point,
    t: f64,
    r: f64,
    levels: u32,
    cfg: &QuadratureConfig,
) -> Result<SymmetricDifference> {
    if t < 10.0 {
        return Err(invalid(format!("t must be at least 10, got {t}")));
    }
    let sep = y.dist(y2);
    if !(r > 0.0 && sep < r) {
        return Err(invalid(format!("need |y - y'| < r, got {sep} and r={r}")));
    }
    if sep == 0.0 {
        return Ok(SymmetricDifference {
            estimate: Estimate::zero(),
            t,
            r,
            scaled: 0.0,
        });
    }
    let n = e.dim();
    let mid = (*y + *y2) * 0.5;
    let (a, b) = (ConeSpec::full(*y), ConeSpec::full(*y2));
    let base = t * r;
    let samples = cfg.samples_per_shell;
    let shells: Vec<ShellEstimate> = (0..levels)
        .into_par_iter()
        .map(|k| {
            let top = base * 2f64.powi(k as i32 + 1);
            let radius = 2.0 * top + sep / 2.0;
            let sh = ShellSamples {
                j: k as i32,
                volume: unit_ball_volume(n) * radius.powi(n as i32),
                drawn: samples,
                points: Vec::new(),
                heights: Vec::new(),
            };
            let mut rng = stream(cfg.seed, &[0x5D1F, k as u64]);
            let mut vals = Vec::new();
            for _ in 0..samples {
                let x = uniform_in_ball(&mut rng, &mid, radius);
                let d = e.dist(&x);
                if d > top / 2.0 && d <= top && a.contains_with(&x, d) != b.contains_with(&x, d) {
                    vals.push(sh.weight(d, n));
                }
            }
            shell_estimate(&sh, &vals)
        })
        .collect();
    let estimate = combine(shells);
    Ok(SymmetricDifference {
        scaled: estimate.value * t,
        estimate,
        t,
        r,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelCheckReport {
    pub samples: usize,
    /// Largest `|S(x,y)| |x-y|^{m+alpha} / K_1`.
    pub size_ratio: f64,
    /// Largest Hölder quotient divided by `K_2`.
    pub holder_ratio: f64,
    pub size_pass: bool,
    pub holder_pass: bool,
    pub pass: bool,
}

fn random_unit<R: Rng>(rng: &mut R, n: usize) -> Point {
    let v = uniform_in_ball(rng, &Point::origin(n), 1.0);
    let l = v.norm();
    if l > 1e-9 {
        v * (1.0 / l)
    } else {
        Point::origin(n).with(0, 1.0)
    }
}

/// Samples `x` off `E` and `y, y'` in `E` with `|y - y'| <= |x - y| / 2` and
/// records the worst size and Hölder ratios against the advertised constants.
pub fn kernel_estimate_check(kernel: &dyn Kernel, e: &ClosedSet, samples: usize, seed: u64) -> KernelCheckReport {
    let kp = kernel.params();
    let p = kp.p();
    let n = e.dim();
    let mut rng = stream(seed, &[0x4B3C]);
    let pool: Vec<Point> = (0..1024).map(|_| e.sample(&mut rng)).collect();
    let mut size_ratio: f64 = 0.0;
    let mut holder_ratio: f64 = 0.0;
    let mut used = 0;
    for _ in 0..samples {
        let y = pool[rng.random_range(0..pool.len())];
        // size: scales from 1e-3 to 10
        let scale = 10f64.powf(rng.random_range(-3.0..1.0));
        let x = y + random_unit(&mut rng, n) * scale;
        if e.dist(&x) > 0.0 {
            let r = x.dist(&y);
            size_ratio = size_ratio.max(kernel.eval(&x, &y).norm() * r.powf(p) / kp.k1);
        }
        // Hölder: a second pool point, then x far enough from y
        let y2 = pool[rng.random_range(0..pool.len())];
        let rho = y.dist(&y2);
        if rho == 0.0 {
            continue;
        }
        let l = 2.0 * rho * (1.0 + 10f64.powf(rng.random_range(-3.0..2.0)));
        let x = y + random_unit(&mut rng, n) * l;
        if e.dist(&x) == 0.0 {
            continue;
        }
        used += 1;
        let r = x.dist(&y);
        let diff = (kernel.eval(&x, &y) - kernel.eval(&x, &y2)).norm();
        holder_ratio = holder_ratio.max(diff * r.powf(p + kp.beta) / rho.powf(kp.beta) / kp.k2);
    }
    let size_pass = size_ratio <= 1.0 + 1e-9;
    let holder_pass = holder_ratio <= 1.0 + 1e-9;
    KernelCheckReport {
        samples: used,
        size_ratio,
        holder_ratio,
        size_pass,
        holder_pass,
        pass: size_pass && holder_pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::maximal_radial_floor;
    use std::f64::consts::PI;

    fn p(c: &[f64]) -> Point {
        Point::new(c).unwrap()
    }

    fn origin_set() -> ClosedSet {
        ClosedSet::cloud(vec![p(&[0.0, 0.0])]).unwrap()
    }

    fn unit_segment() -> ClosedSet {
        ClosedSet::segment(p(&[0.0, 0.0]), p(&[1.0, 0.0])).unwrap()
    }

    fn segment_measure(k: usize) -> AtomicMeasure {
        let pts = (0..k).map(|i| p(&[(i as f64 + 0.5) / k as f64, 0.0])).collect();
        AtomicMeasure::uniform(pts, 1.0).unwrap()
    }

    fn one(n: usize) -> Vec<Complex64> {
        vec![Complex64::new(1.0, 0.0); n]
    }

    #[test]
    fn apply_t_examples() {
        let k = KernelSpec::power(1.0, 0.5);
        let e = origin_set();
        let mu = AtomicMeasure::new(vec![p(&[0.0, 0.0])], vec![1.0]).unwrap();
        let x = p(&[3.0, 4.0]);
        let v = apply_t(&k, &mu, &one(1), &e, &x).unwrap();
        assert!((v.re - 5f64.powf(-1.5)).abs() < 1e-15 && v.im == 0.0);
        let z = apply_t(&k, &mu, &[Complex64::new(0.0, 0.0)], &e, &x).unwrap();
        assert_eq!(z, Complex64::new(0.0, 0.0));
        assert!(apply_t(&k, &mu, &one(1), &e, &p(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn apply_t_matches_reverse_summation() {
        let e = unit_segment();
        let mu = segment_measure(100);
        let mut rng = stream(3, &[]);
        let f: Vec<Complex64> = (0..100)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let k = KernelSpec::Signed { m: 1.0, alpha: 0.5 };
        let x = p(&[0.3, 0.2]);
        let got = apply_t(&k, &mu, &f, &e, &x).unwrap();
        let mut oracle = Complex64::new(0.0, 0.0);
        for i in (0..100).rev() {
            let z = mu.points()[i];
            let r = x.dist(&z);
            oracle += f[i] * ((x.get(0) - z.get(0)) / r.powf(2.5)) * mu.weights()[i];
        }
        assert!((got - oracle).norm() <= 1e-12 * oracle.norm().max(1.0));
    }

    #[test]
    fn sigma_of_point_cone_is_logarithmic() {
        // E = {0} in the plane: Γ_s^t(0) is the annulus s < |x| <= t and
        // sigma of it is 2 pi ln(t/s).
        let e = origin_set();
        let cfg = QuadratureConfig::new(20000, 11);
        for (s, t) in [(0.1f64, 1.0f64), (0.03, 7.0), (1.0, 2.0)] {
            let est = cone_sigma_integral(&e, &p(&[0.0, 0.0]), s, t, |_, _| 1.0, &cfg).unwrap();
            let exact = 2.0 * PI * (t / s).ln();
            assert!(
                (est.value - exact).abs() <= 3.0 * est.stderr,
                "s={s} t={t}: {} vs {exact} (se {})",
                est.value,
                est.stderr
            );
            let zero = cone_sigma_integral(&e, &p(&[0.0, 0.0]), s, t, |_, _| 0.0, &cfg).unwrap();
            assert_eq!(zero.value, 0.0);
        }
    }

    #[test]
    fn truncation_errors() {
        let e = origin_set();
        let y = p(&[0.0, 0.0]);
        let cfg = QuadratureConfig::new(10, 0);
        assert!(cone_sigma_integral(&e, &y, 0.0, 1.0, |_, _| 1.0, &cfg).is_err());
        assert!(cone_sigma_integral(&e, &y, 1.0, 1.0, |_, _| 1.0, &cfg).is_err());
        assert!(cone_sigma_integral(&e, &y, 1.0, f64::INFINITY, |_, _| 1.0, &cfg).is_err());
    }

    #[test]
    fn sigma_bound_on_segment_and_circle() {
        let circle = ClosedSet::Circle {
            dim: 2,
            center: [0.0, 0.0],
            radius: 1.0,
        };
        let cfg = QuadratureConfig::new(4000, 5);
        let mut rng = stream(8, &[]);
        for (i, e) in [unit_segment(), circle].iter().enumerate() {
            for c in 0..10 {
                let y = e.sample(&mut rng);
                let s = 10f64.powf(rng.random_range(-3.0..-1.0));
                let t = s * 10f64.powf(rng.random_range(0.2..2.0));
                let set = ConeSampleSet::generate(e, &y, s, t, cfg.samples_per_shell, cfg.seed, c).unwrap();
                let est = set.integrate(|_, _| 1.0);
                assert!(est.value <= cone_sigma_bound(2, s, t), "set {i}");
            }
        }
    }

    #[test]
    fn square_function_single_atom_closed_form() {
        // E = {0}, mu = delta_0, f = 1, S = |x|^{-(m+alpha)}:
        // C^2 = 2 pi ∫_s^t r^{-2m-1} dr.
        let e = origin_set();
        let mu = AtomicMeasure::new(vec![p(&[0.0, 0.0])], vec![1.0]).unwrap();
        let (m, alpha) = (1.0, 0.5);
        let k = KernelSpec::power(m, alpha);
        let (s, t) = (0.25f64, 4.0f64);
        let exact = (2.0 * PI * (s.powf(-2.0 * m) - t.powf(-2.0 * m)) / (2.0 * m)).sqrt();
        let cfg = QuadratureConfig::new(20000, 2);
        let est = square_function(&k, &mu, &one(1), &e, &p(&[0.0, 0.0]), s, t, &cfg).unwrap();
        assert!((est.value - exact).abs() <= 3.0 * est.stderr, "{est:?} vs {exact}");
        let z = square_function(&k, &mu, &[Complex64::new(0.0, 0.0)], &e, &p(&[0.0, 0.0]), s, t, &cfg).unwrap();
        assert_eq!(z.value, 0.0);
    }

    #[test]
    fn truncation_monotone_on_shared_draws() {
        let e = unit_segment();
        let mu = segment_measure(40);
        let k = KernelSpec::power(1.0, 0.5);
        let y = mu.points()[13];
        let set = ConeSampleSet::generate(&e, &y, 1e-3, 2.0, 1000, 4, 0).unwrap();
        let f = one(40);
        let vals = square_integrands(&k, &mu, &[f], &set);
        let g = |lo: f64, hi: f64| {
            let per: Vec<Vec<f64>> = set
                .shells
                .iter()
                .zip(&vals[0])
                .map(|(sh, v)| {
                    sh.heights
                        .iter()
                        .zip(v)
                        .map(|(&d, &x)| if d > lo && d <= hi { x } else { 0.0 })
                        .collect()
                })
                .collect();
            set.estimate_from(&per).value
        };
        let mut prev = 0.0;
        for (lo, hi) in [(0.5, 1.0), (0.1, 1.0), (0.1, 2.0), (0.01, 2.0), (1e-3, 2.0)] {
            let v = g(lo, hi);
            assert!(v >= prev);
            prev = v;
        }
        // a direct narrower generation reproduces the window exactly
        let narrow = ConeSampleSet::generate(&e, &y, 0.1, 1.0, 1000, 4, 0).unwrap();
        let a = narrow.integrate(|_, _| 1.0).value;
        let b = set.integrate_window(0.1, 1.0, |_, _| 1.0).value;
        assert_eq!(a, b);
    }

    #[test]
    fn square_function_dominated_by_radial_maximal() {
        // For x in Γ_s(y): |x - z| >= (|x - y| + |y - z|) / 5 and
        // sum (a + |y - z|)^{-p} |f| w <= (p / alpha) a^{-alpha} M(y) when the
        // radial maximal function M uses floor s <= a.
        let e = unit_segment();
        let mu = segment_measure(64);
        let (m, alpha) = (1.0, 0.5);
        let pk = m + alpha;
        let k = KernelSpec::Signed { m, alpha };
        let mut rng = stream(21, &[]);
        let cfg = QuadratureConfig::new(1500, 9);
        for trial in 0..5 {
            let f: Vec<Complex64> = (0..64)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let y = mu.points()[rng.random_range(0..64)];
            let (s, t) = (0.01, 1.0);
            let set = ConeSampleSet::generate(&e, &y, s, t, cfg.samples_per_shell, cfg.seed, trial).unwrap();
            let c = SquareEstimate::from_integral(set.estimate_from(&square_integrands(&k, &mu, &[f.clone()], &set)[0]));
            let absf: Vec<f64> = f.iter().map(|v| v.norm()).collect();
            let radial = maximal_radial_floor(&mu.reweighted(&absf), &y, m, s);
            let sigma = set.integrate(|_, _| 1.0).value;
            let bound = 5f64.powf(pk) * (pk / alpha) * radial * sigma.sqrt();
            assert!(c.value <= bound, "{} > {bound}", c.value);
        }
    }

    #[test]
    fn symmetric_difference_on_line() {
        let e = ClosedSet::Hyperplane {
            dim: 2,
            half_width: 1e9,
        };
        let y = p(&[0.0, 0.0]);
        let cfg = QuadratureConfig::new(20000, 1);
        let same = cone_symmetric_difference(&e, &y, &y, 10.0, 1.0, 16, &cfg).unwrap();
        assert_eq!(same.estimate.value, 0.0);
        let r = 1.0;
        let y2 = p(&[r / 2.0, 0.0]);
        // exact: the slivers have width r at every height, so sigma = 2 / t
        for t in [10.0, 40.0] {
            let sd = cone_symmetric_difference(&e, &y, &y2, t, r, 16, &cfg).unwrap();
            assert!((sd.scaled - 2.0).abs() <= 3.0 * sd.estimate.stderr * t + 2.0 * 2f64.powi(-16), "{sd:?}");
        }
        assert!(cone_symmetric_difference(&e, &y, &y2, 5.0, r, 16, &cfg).is_err());
        assert!(cone_symmetric_difference(&e, &y, &y2, 10.0, 0.4, 16, &cfg).is_err());
    }

    #[test]
    fn kernel_checks() {
        let e = unit_segment();
        let power = kernel_estimate_check(&KernelSpec::power(1.0, 0.5), &e, 5000, 1);
        assert!(power.pass, "{power:?}");
        assert!((power.size_ratio - 1.0).abs() < 1e-12);
        let signed = kernel_estimate_check(&KernelSpec::Signed { m: 1.0, alpha: 0.5 }, &e, 5000, 1);
        assert!(signed.pass, "{signed:?}");
        let broken = KernelSpec::Broken {
            m: 1.0,
            alpha: 0.5,
            excess: 0.5,
        };
        let b = kernel_estimate_check(&broken, &e, 5000, 1);
        assert!(!b.size_pass, "{b:?}");
    }

    #[test]
    fn quadrature_is_deterministic() {
        let e = unit_segment();
        let y = p(&[0.5, 0.0]);
        let cfg = QuadratureConfig::new(500, 77);
        let a = cone_sigma_integral(&e, &y, 0.01, 1.0, |_, d| d, &cfg).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| cone_sigma_integral(&e, &y, 0.01, 1.0, |_, d| d, &cfg).unwrap());
        assert_eq!(a, b);
    }
}
