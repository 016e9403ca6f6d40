//! End-to-end pipelines: testing hypotheses on regular balls, the stopping sets
//! of the big-piece construction, the big piece itself and the good-lambda comparison.

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::czdecomp::square_function_at_atoms;
use crate::error::{invalid, Error, Result};
use crate::geometry::{BallSpec, Point};
use crate::lattice::{build_lattice, build_nets, restrict_to_ball, restriction_level, CubeId, RandomConfig, RestrictedLattice};
use crate::martingale::compute_stopping_and_transit;
use crate::measure::{
    ball_mass, find_small_boundary_radius, is_doubling, maximal_centred_density, maximal_radial_floor,
    weak_type_sup, AtomicMeasure, ComplexAtomicMeasure,
};
use crate::operator::{kernel_estimate_check, QuadratureConfig};
use crate::rng::{derive, stream};
use crate::suppression::{build_big_piece, density_radius, BigPieceSet, SuppressedKernel, SuppressionEngine};
use crate::whitney::{whitney_cover, WhitneyParams};

use super::scenario::{Instance, TestMeasureSpec};

const REL: f64 = 1e-12;

/// Regular balls: closed balls around a spread of atoms at dyadic fractions of
/// the diameter, radius nudged to a small-boundary radius, kept when doubling.
/// `E` itself is appended as a ball when it has finite diameter.
pub fn regular_balls(inst: &Instance, centers: usize, scales: u32) -> Result<Vec<BallSpec>> {
    let p = &inst.scenario.params;
    let mu = &inst.mu;
    let support: Vec<usize> = (0..mu.len()).filter(|&i| mu.weights()[i] > 0.0).collect();
    if support.is_empty() {
        return Err(invalid("measure has no positive atoms"));
    }
    let diam = inst.e.diameter();
    let mut out = Vec::new();
    let step = (support.len() / centers.max(1)).max(1);
    for &c in support.iter().step_by(step).take(centers) {
        let y = mu.points()[c];
        for k in 1..=scales {
            let r0 = diam * 0.5f64.powi(k as i32);
            let Ok(r) = find_small_boundary_radius(mu, &y, r0, p.kappa, true) else {
                continue;
            };
            let ball = BallSpec::closed(y, r);
            if ball_mass(mu, &ball) > 0.0 && is_doubling(mu, &ball, p.a, p.b) {
                out.push(ball);
            }
        }
    }
    if diam.is_finite() {
        let y = mu.points()[support[0]];
        out.push(BallSpec::closed(y, diam * (1.0 + 1e-9)));
    }
    if out.is_empty() {
        return Err(Error::NotFound { lo: 0.0, hi: diam });
    }
    Ok(out)
}

/// The test measure `nu_B` on the atom list of `mu`.
pub fn test_measure(inst: &Instance, ball: &BallSpec) -> Result<ComplexAtomicMeasure> {
    let mu = &inst.mu;
    let in_b: Vec<bool> = mu.points().iter().map(|p| ball.contains(p)).collect();
    let w: Vec<Complex64> = match inst.scenario.test_measure {
        TestMeasureSpec::Restriction => (0..mu.len())
            .map(|i| if in_b[i] { Complex64::new(mu.weights()[i], 0.0) } else { Complex64::new(0.0, 0.0) })
            .collect(),
        TestMeasureSpec::Phase { amplitude } => {
            let mut rng = stream(inst.scenario.seed, &[0x9A5E]);
            let raw: Vec<Complex64> = (0..mu.len())
                .map(|i| {
                    let th: f64 = rng.random_range(-1.0..=1.0) * amplitude;
                    if in_b[i] {
                        Complex64::from_polar(mu.weights()[i], th)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect();
            let total: Complex64 = raw.iter().sum();
            let c = Complex64::new(ball_mass(mu, ball), 0.0) / total;
            raw.into_iter().map(|v| v * c).collect()
        }
    };
    ComplexAtomicMeasure::new(mu.points().to_vec(), w)
}

/// The six hypotheses on one ball.
#[derive(Clone, Debug, Serialize)]
pub struct HypothesisReport {
    pub ball: BallSpec,
    pub mu_b: f64,
    pub nu_tv: f64,
    pub support_inside: bool,
    pub mass_identity: f64,
    pub mass_identity_ok: bool,
    /// `|nu|(B) / mu(B)`.
    pub c1_measured: f64,
    pub c1_ok: bool,
    /// Largest `|nu|(A)` over `mu(A) <= eps0 mu(B)`: integral greedy (attained) and fractional (upper bound).
    pub continuity_attained: f64,
    pub continuity_bound: f64,
    pub continuity_limit: f64,
    pub continuity_ok: bool,
    pub exceptional_mass: f64,
    pub exceptional_ok: bool,
    /// `sup_lambda lambda^s mu({C^{r(B)} nu > lambda} off U) / |nu|(B)`, when evaluated.
    pub weak_testing: Option<f64>,
    pub weak_testing_ok: bool,
}

impl HypothesisReport {
    /// Hypotheses checked by exact arithmetic.
    pub fn exact_pass(&self) -> bool {
        self.support_inside && self.mass_identity_ok && self.c1_ok && self.continuity_ok && self.exceptional_ok
    }

    pub fn pass(&self) -> bool {
        self.exact_pass() && self.weak_testing_ok
    }
}

/// Greedy by `|nu|`-density: the integral selection and its fractional relaxation.
fn continuity_extremes(mu: &[f64], nu: &[f64], budget: f64) -> (f64, f64) {
    let mut idx: Vec<usize> = (0..mu.len()).filter(|&i| nu[i] > 0.0).collect();
    let dens = |i: usize| if mu[i] > 0.0 { nu[i] / mu[i] } else { f64::INFINITY };
    idx.sort_by(|&a, &b| dens(b).total_cmp(&dens(a)).then(a.cmp(&b)));
    let (mut used, mut attained, mut bound, mut frac_open) = (0.0, 0.0, 0.0, true);
    for i in idx {
        if used + mu[i] <= budget {
            used += mu[i];
            attained += nu[i];
            if frac_open {
                bound += nu[i];
            }
        } else if frac_open {
            // the relaxation takes the affordable fraction of the densest unaffordable atom
            bound += nu[i] * ((budget - used) / mu[i]).max(0.0);
            frac_open = false;
        }
    }
    (attained, bound.max(attained))
}

/// Evaluates the hypotheses on each ball. The weak-type testing condition is
/// estimated by quadrature at every positive atom of `mu` when `weak` is set.
pub fn check_tb_hypotheses(inst: &Instance, balls: &[BallSpec], weak: bool, cfg: &QuadratureConfig) -> Result<Vec<HypothesisReport>> {
    let p = &inst.scenario.params;
    let mu = &inst.mu;
    let mut out = Vec::with_capacity(balls.len());
    for (bi, ball) in balls.iter().enumerate() {
        let nu = test_measure(inst, ball)?;
        let tv = nu.total_variation();
        let mu_b = ball_mass(mu, ball);
        let nu_tv = tv.total_mass();
        let support_inside = (0..mu.len()).all(|i| nu.weights()[i].norm() == 0.0 || ball.contains(&mu.points()[i]));
        let total: Complex64 = nu.weights().iter().enumerate().filter(|(i, _)| ball.contains(&mu.points()[*i])).map(|(_, w)| *w).sum();
        let mass_identity = (total - Complex64::new(mu_b, 0.0)).norm();
        let mu_in: Vec<f64> = (0..mu.len()).map(|i| if ball.contains(&mu.points()[i]) { mu.weights()[i] } else { 0.0 }).collect();
        let (attained, bound) = continuity_extremes(&mu_in, tv.weights(), p.eps0 * mu_b);
        let limit = nu_tv / (16.0 * p.c1);
        let weak_testing = if weak {
            let apexes: Vec<usize> = (0..mu.len()).filter(|&i| mu.weights()[i] > 0.0).collect();
            let pts: Vec<Point> = apexes.iter().map(|&i| mu.points()[i]).collect();
            let c = QuadratureConfig {
                seed: derive(cfg.seed, &[0x7E57, bi as u64]),
                ..*cfg
            };
            let t = ball.radius.max(p.s_min * 2.0);
            let vals = square_function_at_atoms(&inst.kernel, &inst.e, mu.points(), &[nu.weights().to_vec()], &pts, p.s_min, t, &c)?;
            let values: Vec<f64> = vals[0].iter().map(|v| v.0).collect();
            let masses: Vec<f64> = apexes.iter().map(|&i| mu.weights()[i]).collect();
            Some(weak_type_sup(&values, &masses, p.s_exp) / nu_tv)
        } else {
            None
        };
        out.push(HypothesisReport {
            ball: *ball,
            mu_b,
            nu_tv,
            support_inside,
            mass_identity,
            mass_identity_ok: mass_identity <= REL * mu_b.max(1.0),
            c1_measured: nu_tv / mu_b,
            c1_ok: nu_tv <= p.c1 * mu_b * (1.0 + REL),
            continuity_attained: attained,
            continuity_bound: bound,
            continuity_limit: limit,
            continuity_ok: bound <= limit * (1.0 + REL),
            exceptional_mass: 0.0,
            exceptional_ok: true,
            weak_testing_ok: weak_testing.is_none_or(|w| w <= p.c2),
            weak_testing,
        });
    }
    Ok(out)
}

/// The restricted lattice `D_B(omega)` over all atoms of `mu`, centered at the atom `center`.
pub fn ball_lattice(inst: &Instance, center: usize, ball: &BallSpec, config: &RandomConfig) -> Result<RestrictedLattice> {
    let p = &inst.scenario.params;
    let k0 = restriction_level(p.delta, ball.radius);
    let nets = build_nets(inst.mu.points(), p.delta, center, k0, k0 + p.levels as i32)?;
    restrict_to_ball(build_lattice(&nets, config)?, ball)
}

/// Parameter of the lattice ensemble member `w`.
pub fn ensemble_config(inst: &Instance, ball: &BallSpec, seed: u64, w: usize) -> RandomConfig {
    let k0 = restriction_level(inst.scenario.params.delta, ball.radius);
    RandomConfig::new(derive(seed, &[0xE75E, w as u64]), (k0 + 1, k0 + inst.scenario.params.levels as i32))
}

fn atom_index(mu: &AtomicMeasure, y: &Point) -> Result<usize> {
    mu.points().iter().position(|p| p == y).ok_or_else(|| invalid("ball center is not an atom"))
}

/// Maximal cubes of `D_B` satisfying `pred(mass_nu, mass_mu, integral_b)`, scanned top-down.
fn maximal_cubes(
    d: &RestrictedLattice,
    nu_abs: &[f64],
    mu: &[f64],
    b: &[Complex64],
    pred: impl Fn(f64, f64, Complex64) -> bool,
) -> (Vec<CubeId>, Vec<bool>) {
    let lat = &d.lattice;
    let n = mu.len();
    let mut covered = vec![false; n];
    let mut cubes = Vec::new();
    for q in d.all_cubes() {
        let members = lat.members(q);
        if members.iter().any(|&i| covered[i]) {
            continue;
        }
        let nm: f64 = members.iter().map(|&i| nu_abs[i]).sum();
        let mm: f64 = members.iter().map(|&i| mu[i]).sum();
        let ib: Complex64 = members.iter().map(|&i| b[i] * nu_abs[i]).sum();
        if pred(nm, mm, ib) {
            cubes.push(q);
            for &i in members {
                covered[i] = true;
            }
        }
    }
    (cubes, covered)
}

/// Stopping and exceptional sets of the big-piece construction for one ball.
#[derive(Clone, Debug, Serialize)]
pub struct StoppingSets {
    pub eta: f64,
    pub p0: f64,
    pub floor: f64,
    pub t_cubes: Vec<CubeId>,
    pub f1: Vec<CubeId>,
    pub f2: Vec<CubeId>,
    pub t: Vec<bool>,
    pub h0: Vec<bool>,
    pub h1: Vec<bool>,
    pub h2: Vec<bool>,
    pub h: Vec<bool>,
    pub nu_b: f64,
    pub nu_exceptional: f64,
    pub exceptional_limit: f64,
    pub exceptional_ok: bool,
    /// Extremes of `d|nu|/dmu` over atoms of `B` off `H_2` with positive `mu`.
    pub phi_min: f64,
    pub phi_max: f64,
    pub phi_ok: bool,
}

impl StoppingSets {
    pub fn pass(&self) -> bool {
        self.exceptional_ok && self.phi_ok
    }
}

/// Builds `T_omega`, `H_0`, `H_1`, `H_2` and `H = H_1 ∪ H_2 ∪ U` for the test
/// measure of `ball`, after re-checking the exact hypotheses.
pub fn stopping_sets_pipeline(inst: &Instance, ball: &BallSpec, config: &RandomConfig) -> Result<StoppingSets> {
    let p = &inst.scenario.params;
    let hyp = check_tb_hypotheses(inst, std::slice::from_ref(ball), false, &QuadratureConfig::default())?.remove(0);
    if !hyp.exact_pass() {
        return Err(Error::Violation(format!("hypotheses fail on ball {:?}", ball)));
    }
    let mu = &inst.mu;
    let n = mu.len();
    let nu = test_measure(inst, ball)?;
    let tv = nu.total_variation();
    let b = nu.polar();
    let nu_abs = tv.weights();
    let m = inst.scenario.m();
    let c1 = p.c1;
    let eta = if c1 > 1.0 { (1.0 / (2.0 * c1 - 1.0)).min(0.5) } else { 0.5 };
    let d = ball_lattice(inst, atom_index(mu, &ball.center)?, ball, config)?;
    let (t_cubes, t) = maximal_cubes(&d, nu_abs, mu.weights(), &b, |nm, _, ib| nm > 0.0 && ib.norm() <= eta * nm);
    let p0 = p.maximal_constant * 2f64.powf(m) * c1 / p.eps0;
    // M^m of an atomic measure blows up at its atoms; radii below the atom spacing are ignored
    let support: Vec<usize> = (0..n).filter(|&i| nu_abs[i] > 0.0).collect();
    let mut floor = f64::INFINITY;
    for (a, &i) in support.iter().enumerate() {
        for &j in &support[a + 1..] {
            floor = floor.min(mu.points()[i].dist(&mu.points()[j]));
        }
    }
    if !floor.is_finite() {
        floor = ball.radius;
    }
    let h0: Vec<bool> = mu.points().iter().map(|y| maximal_radial_floor(&tv, y, m, floor) > p0).collect();
    let mut h1 = vec![false; n];
    for y in (0..n).filter(|&i| h0[i]) {
        let r = density_radius(&tv, &mu.points()[y], p0, m);
        let c = mu.points()[y];
        h1[y] = true;
        for (i, x) in mu.points().iter().enumerate() {
            if c.dist(x) < r {
                h1[i] = true;
            }
        }
    }
    let zero = vec![Complex64::new(0.0, 0.0); n];
    let (f1, in_f1) = maximal_cubes(&d, nu_abs, mu.weights(), &zero, |nm, mm, _| mm > 0.0 && nm <= mm / (16.0 * c1));
    let (f2, in_f2) = maximal_cubes(&d, nu_abs, mu.weights(), &zero, |nm, mm, _| nm > 0.0 && nm >= c1 / p.eps0 * mm);
    let h2: Vec<bool> = (0..n).map(|i| in_f1[i] || in_f2[i]).collect();
    let h: Vec<bool> = (0..n).map(|i| h1[i] || h2[i]).collect();
    let nu_b = tv.total_mass();
    let nu_exceptional: f64 = (0..n).filter(|&i| t[i] || h[i]).map(|i| nu_abs[i]).sum();
    let exceptional_limit = (1.0 - 1.0 / (4.0 * c1)) * nu_b;
    let (mut phi_min, mut phi_max) = (f64::INFINITY, 0.0f64);
    for i in 0..n {
        if ball.contains(&mu.points()[i]) && !h2[i] && mu.weights()[i] > 0.0 {
            let phi = nu_abs[i] / mu.weights()[i];
            phi_min = phi_min.min(phi);
            phi_max = phi_max.max(phi);
        }
    }
    let phi_ok = phi_min >= 1.0 / (16.0 * c1) * (1.0 - REL) && phi_max <= c1 / p.eps0 * (1.0 + REL)
        || !phi_min.is_finite();
    Ok(StoppingSets {
        eta,
        p0,
        floor,
        t_cubes,
        f1,
        f2,
        t,
        h0,
        h1,
        h2,
        h,
        nu_b,
        nu_exceptional,
        exceptional_limit,
        exceptional_ok: nu_exceptional <= exceptional_limit * (1.0 + REL),
        phi_min,
        phi_max,
        phi_ok,
    })
}

/// Suppression and big-piece outcome on one ball.
#[derive(Clone, Debug, Serialize)]
pub struct BigPieceReport {
    pub lambda0: f64,
    pub apexes: usize,
    /// Largest `(C~ b - lambda0) / stderr` over apexes, or `-inf` when every value is below `lambda0`.
    pub worst_excess: f64,
    pub bounded: bool,
    /// Apexes of `B \ S` whose suppressed and unsuppressed estimates differ.
    pub disagreements: usize,
    pub kernel_ok: bool,
    pub kernel_size_ratio: f64,
    pub kernel_holder_ratio: f64,
    pub mass_s: f64,
    pub big_piece: BigPieceSet,
}

impl BigPieceReport {
    pub fn pass(&self) -> bool {
        self.bounded
            && self.disagreements == 0
            && self.kernel_ok
            && (!self.big_piece.hypothesis_holds() || self.big_piece.bound_holds)
    }
}

/// Suppresses `C` on `b = d nu_B / d mu` and builds the big piece `G` over the lattice ensemble.
pub fn big_piece_pipeline(inst: &Instance, ball: &BallSpec, cfg: &QuadratureConfig) -> Result<BigPieceReport> {
    let p = &inst.scenario.params;
    let mu = &inst.mu;
    let n = mu.len();
    let sets = stopping_sets_pipeline(inst, ball, &RandomConfig::frozen())?;
    let nu = test_measure(inst, ball)?;
    let in_b: Vec<bool> = mu.points().iter().map(|x| ball.contains(x)).collect();
    let mu_b = mu.restricted(|i| in_b[i]);
    let b: Vec<Complex64> = (0..n)
        .map(|i| if in_b[i] && mu.weights()[i] > 0.0 { nu.weights()[i] / mu.weights()[i] } else { Complex64::new(0.0, 0.0) })
        .collect();
    let center = atom_index(mu, &ball.center)?;
    let mut t_per_seed = Vec::with_capacity(inst.scenario.budget.ensemble);
    for w in 0..inst.scenario.budget.ensemble {
        let cfgw = ensemble_config(inst, ball, cfg.seed, w);
        let d = ball_lattice(inst, center, ball, &cfgw)?;
        let sys = match compute_stopping_and_transit(&d, &mu_b, &b, p.c_acc, &sets.h) {
            Ok(s) => s.t,
            // the top cube is entirely exceptional: every atom is stopped
            Err(Error::Violation(_)) => vec![true; n],
            Err(e) => return Err(e),
        };
        t_per_seed.push(sys);
    }
    let apexes: Vec<usize> = (0..n).filter(|&i| in_b[i] && mu.weights()[i] > 0.0).collect();
    let engine = SuppressionEngine::new(&inst.kernel, &inst.e, &mu_b, &b, &apexes, p.s_min, p.t_max, cfg)?;
    let m = inst.scenario.m();
    let (lambda0, data) = match p.lambda0 {
        Some(l) => (l, engine.suppress(l, p.c0, m)?),
        None => engine.choose_lambda0(p.c0, m, &sets.h, &mu_b, p.delta0)?,
    };
    let pairs = engine.compare(&data);
    let mut worst_excess = f64::NEG_INFINITY;
    let mut bounded = true;
    let mut disagreements = 0;
    for ((plain, supp), &i) in pairs.iter().zip(&apexes) {
        if supp.value > lambda0 {
            let ex = if supp.stderr > 0.0 { (supp.value - lambda0) / supp.stderr } else { f64::INFINITY };
            worst_excess = worst_excess.max(ex);
            bounded &= ex <= 3.0;
        }
        if !data.in_s[i] && plain != supp {
            disagreements += 1;
        }
    }
    let sk = SuppressedKernel {
        base: &inst.kernel,
        region: &data.region,
        e: &inst.e,
    };
    let kc = kernel_estimate_check(&sk, &inst.e, 2000, derive(cfg.seed, &[0xCE]));
    let mass_s = mu_b.mass_where(|i| data.in_s[i]);
    let big_piece = build_big_piece(&mu_b, &sets.h, &t_per_seed, &data.in_s, p.delta0)?;
    Ok(BigPieceReport {
        lambda0,
        apexes: apexes.len(),
        worst_excess,
        bounded,
        disagreements,
        kernel_ok: kc.pass,
        kernel_size_ratio: kc.size_ratio,
        kernel_holder_ratio: kc.holder_ratio,
        mass_s,
        big_piece,
    })
}

/// Distribution comparison at one grid level.
#[derive(Clone, Debug, Serialize)]
pub struct LambdaRow {
    pub lambda: f64,
    pub left: f64,
    pub right: f64,
    pub ratio: Option<f64>,
    pub pass: bool,
    /// Whitney cover of `{C f > lambda}` verified, or `None` when that set is empty or all of `E`.
    pub whitney: Option<bool>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GoodLambdaRow {
    pub rows: Vec<LambdaRow>,
    /// Largest `left / right` over levels with positive right side.
    pub factor: f64,
    /// `||C f||_p / ||f||_p` for `p = 1.5, 2, 3`.
    pub lp_ratios: [f64; 3],
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct GoodLambdaReport {
    pub theta: f64,
    pub allowed: f64,
    pub per_f: Vec<GoodLambdaRow>,
    /// `max / min` of the `L^2` ratios over functions with positive norm.
    pub l2_spread: f64,
}

fn lp_norm(v: &[f64], w: &[f64], p: f64) -> f64 {
    v.iter().zip(w).map(|(x, m)| x.abs().powf(p) * m).sum::<f64>().powf(1.0 / p)
}

/// Random bounded densities with `|f| <= 1`.
pub fn random_densities(count: usize, n: usize, seed: u64) -> Vec<Vec<Complex64>> {
    (0..count)
        .map(|k| {
            let mut rng = stream(seed, &[0xF0, k as u64]);
            (0..n)
                .map(|_| Complex64::from_polar(rng.random_range(0.0..1.0), rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)))
                .collect()
        })
        .collect()
}

/// Measures both sides of the good-lambda inequality on a geometric grid of
/// twelve levels anchored at the median of `C f`, covering `{C f > lambda}`
/// by Whitney balls at each level.
pub fn good_lambda_experiment(inst: &Instance, fs: &[Vec<Complex64>], cfg: &QuadratureConfig) -> Result<GoodLambdaReport> {
    let p = &inst.scenario.params;
    let mu = &inst.mu;
    let n = mu.len();
    if !inst.e.diameter().is_finite() {
        return Err(invalid("the good-lambda experiment needs a set of finite diameter"));
    }
    let theta = (1.0 - p.delta0) / 3.0;
    let allowed = 1.0 - theta / (4.0 * p.b) + 0.05;
    let measures: Vec<Vec<Complex64>> = fs.iter().map(|f| f.iter().zip(mu.weights()).map(|(v, w)| v * w).collect()).collect();
    let vals = square_function_at_atoms(&inst.kernel, &inst.e, mu.points(), &measures, mu.points(), p.s_min, p.t_max, cfg)?;
    let nets = build_nets(mu.points(), p.delta, 0, 0, p.levels as i32 + 1)?;
    let lattice = build_lattice(&nets, &RandomConfig::frozen())?;
    let wp = WhitneyParams {
        a: p.a,
        rho: p.rho,
        b: p.b,
        kappa: p.kappa,
    };
    let mut per_f = Vec::with_capacity(fs.len());
    for (f, v) in fs.iter().zip(&vals) {
        let c: Vec<f64> = v.iter().map(|x| x.0).collect();
        let mf = maximal_centred_density(mu, &f.iter().map(|z| z.norm()).collect::<Vec<_>>());
        let mut sorted: Vec<f64> = c.iter().zip(mu.weights()).filter(|(_, w)| **w > 0.0).map(|(x, _)| *x).collect();
        sorted.sort_by(f64::total_cmp);
        let median = sorted.get(sorted.len() / 2).copied().unwrap_or(0.0);
        let mut rows = Vec::with_capacity(12);
        let mut factor: f64 = 0.0;
        for j in 0..12 {
            let lambda = median * 2f64.powi(j - 6);
            let right = mu.mass_where(|i| c[i] > lambda);
            let left = mu.mass_where(|i| c[i] > (1.0 + p.eps_gl) * lambda && mf[i] <= p.delta_gl * lambda);
            let ratio = (right > 0.0).then(|| left / right);
            if let Some(r) = ratio {
                factor = factor.max(r);
            }
            let in_u: Vec<bool> = (0..n).map(|i| c[i] > lambda).collect();
            let whitney = if in_u.iter().all(|&u| u) || !in_u.iter().any(|&u| u) {
                None
            } else {
                Some(whitney_cover(&in_u, mu, &lattice, wp).is_ok_and(|w| w.checks.all_pass()))
            };
            rows.push(LambdaRow {
                lambda,
                left,
                right,
                ratio,
                pass: left <= allowed * right,
                whitney,
            });
        }
        let fa: Vec<f64> = f.iter().map(|z| z.norm()).collect();
        let lp_ratios = [1.5, 2.0, 3.0].map(|q| {
            let den = lp_norm(&fa, mu.weights(), q);
            if den > 0.0 { lp_norm(&c, mu.weights(), q) / den } else { 0.0 }
        });
        let pass = rows.iter().all(|r| r.pass);
        per_f.push(GoodLambdaRow {
            rows,
            factor,
            lp_ratios,
            pass,
        });
    }
    let l2: Vec<f64> = per_f.iter().map(|r| r.lp_ratios[1]).filter(|&v| v > 0.0).collect();
    let l2_spread = if l2.is_empty() {
        1.0
    } else {
        l2.iter().copied().fold(0.0, f64::max) / l2.iter().copied().fold(f64::INFINITY, f64::min)
    };
    Ok(GoodLambdaReport {
        theta,
        allowed,
        per_f,
        l2_spread,
    })
}
