//! Named verification suites. Each emits one report per check.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::czdecomp::{cz_decompose, single_ball_constants, weak11_experiment, CzParams};
use crate::error::{invalid, Result};
use crate::geometry::{BallSpec, ClosedSet, Point};
use crate::lattice::{
    build_lattice, build_nets, estimate_badness_probability, goodness_gamma, restrict_to_ball, BadnessSetup, CubeId,
    RandomConfig,
};
use crate::martingale::{compute_stopping_and_transit, decompose, matrix_norm_estimate, transit_geometry};
use crate::measure::{
    ball_mass, has_small_boundary, is_doubling, maximal_centred, maximal_radial_floor, AtomicMeasure,
    ComplexAtomicMeasure,
};
use crate::operator::{cone_sigma_bound, cone_sigma_integral, cone_symmetric_difference, QuadratureConfig};
use crate::rng::{derive, stream};

use super::experiments::{
    big_piece_pipeline, check_tb_hypotheses, good_lambda_experiment, random_densities, regular_balls,
    stopping_sets_pipeline,
};
use super::report::{ReportWriter, VerificationReport};
use super::scenario::Scenario;

/// Suite names accepted by `run_suite`, in dependency order.
pub const SUITES: &[&str] = &[
    "exact-measure",
    "lattice",
    "badness",
    "cone",
    "cone-bound",
    "czd",
    "martingale",
    "suppression",
    "hypotheses",
    "stopping-sets",
    "good-lambda",
    "weak11",
];

/// Inputs shared by every suite.
#[derive(Clone, Debug, Default)]
pub struct SuiteContext {
    /// Overrides the built-in scenario of suites that take one.
    pub scenario: Option<Scenario>,
    pub seed: u64,
    /// Overrides the samples per shell of quadrature-based suites.
    pub budget: Option<usize>,
}

impl SuiteContext {
    pub fn new(seed: u64) -> SuiteContext {
        SuiteContext {
            seed,
            ..SuiteContext::default()
        }
    }

    fn samples(&self, default: usize) -> usize {
        self.budget.unwrap_or(default)
    }

    /// The configured scenario, or `fallback` with this context's seed and budget.
    fn scenario_or(&self, fallback: Scenario) -> Scenario {
        let mut s = self.scenario.clone().unwrap_or(fallback);
        if self.scenario.is_none() {
            s.seed = self.seed;
        }
        if let Some(b) = self.budget {
            s.budget.samples_per_shell = b;
        }
        s
    }
}

struct Emitter<'a> {
    suite: &'a str,
    seed: u64,
    out: Vec<VerificationReport>,
    clock: Instant,
}

impl<'a> Emitter<'a> {
    fn new(suite: &'a str, seed: u64) -> Emitter<'a> {
        Emitter {
            suite,
            seed,
            out: Vec::new(),
            clock: Instant::now(),
        }
    }

    /// Records a check, timed since the previous record.
    fn push(&mut self, check: impl Into<String>, anchor: &str, measured: serde_json::Value, tolerance: serde_json::Value, pass: bool) {
        let ms = self.clock.elapsed().as_millis() as u64;
        self.out
            .push(VerificationReport::new(self.suite, check, anchor, measured, tolerance, pass, self.seed).timed(ms));
        self.clock = Instant::now();
    }
}

/// Runs the named suite, writing each report through `w`.
pub fn run_suite(name: &str, ctx: &SuiteContext, w: &mut ReportWriter) -> Result<Vec<VerificationReport>> {
    let mut em = Emitter::new(name, ctx.seed);
    match name {
        "exact-measure" => exact_measure(ctx, &mut em)?,
        "lattice" => lattice_suite(ctx, &mut em)?,
        "badness" => badness(ctx, &mut em)?,
        "cone" => cone(ctx, &mut em, w)?,
        "cone-bound" => cone_bound(ctx, &mut em)?,
        "czd" => czd(ctx, &mut em)?,
        "martingale" => martingale(ctx, &mut em, w)?,
        "suppression" => suppression(ctx, &mut em)?,
        "hypotheses" => hypotheses(ctx, &mut em)?,
        "stopping-sets" => stopping_sets(ctx, &mut em)?,
        "good-lambda" => good_lambda(ctx, &mut em)?,
        "weak11" => weak11(ctx, &mut em)?,
        other => return Err(invalid(format!("unknown suite '{other}'; known: {}", SUITES.join(", ")))),
    }
    w.emit_all(&em.out)?;
    Ok(em.out)
}

fn p(c: &[f64]) -> Point {
    Point::new(c).expect("valid coordinates")
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s.get(s.len() / 2).copied().unwrap_or(0.0)
}

// ---------------------------------------------------------------- exact measure

fn brute_ball_mass(mu: &AtomicMeasure, c: &Point, r: f64, closed: bool) -> f64 {
    let mut s = 0.0;
    for (x, w) in mu.points().iter().zip(mu.weights()) {
        let d = c.dist(x);
        if d < r || (closed && d == r) {
            s += w;
        }
    }
    s
}

fn brute_small_boundary(mu: &AtomicMeasure, ball: &BallSpec, kappa: f64) -> bool {
    let r = ball.radius;
    let m3 = brute_ball_mass(mu, &ball.center, 3.0 * r, ball.closed);
    let jumps: Vec<f64> = mu
        .points()
        .iter()
        .zip(mu.weights())
        .filter(|(_, w)| **w > 0.0)
        .map(|(x, _)| (ball.center.dist(x) - r).abs() / r)
        .filter(|s| *s < 1.0)
        .collect();
    jumps.iter().all(|&s| {
        let mass: f64 = mu
            .points()
            .iter()
            .zip(mu.weights())
            .filter(|(x, w)| **w > 0.0 && (ball.center.dist(x) - r).abs() / r <= s)
            .map(|(_, w)| w)
            .sum();
        mass <= kappa * s * m3
    })
}

fn brute_centred(mu: &AtomicMeasure, nu: &AtomicMeasure, y: &Point) -> f64 {
    let mut best: f64 = 0.0;
    for x in mu.points() {
        let r = y.dist(x);
        let m = brute_ball_mass(mu, y, r, true);
        if m > 0.0 {
            best = best.max(brute_ball_mass(nu, y, r, true) / m);
        }
    }
    best
}

fn brute_radial_floor(nu: &AtomicMeasure, y: &Point, m: f64, floor: f64) -> f64 {
    let mut best: f64 = brute_ball_mass(nu, y, floor, false) / floor.powf(m);
    for x in nu.points() {
        let d = y.dist(x);
        if d >= floor {
            best = best.max(brute_ball_mass(nu, y, d, true) / d.powf(m));
        }
    }
    best
}

/// Random atomic measure on the grid `Z^n / 64` with weights in `Z / 1024`, so
/// every partial sum is exact.
fn dyadic_measure(seed: u64) -> Result<(AtomicMeasure, AtomicMeasure)> {
    let mut rng = stream(seed, &[0xE8AC]);
    let n = rng.random_range(1..=3usize);
    let count = rng.random_range(5..=500usize);
    let mut seen = HashSet::new();
    let mut pts = Vec::with_capacity(count);
    while pts.len() < count {
        let c: Vec<i32> = (0..n).map(|_| rng.random_range(0..64)).collect();
        if seen.insert(c.clone()) {
            pts.push(p(&c.iter().map(|&v| v as f64 / 64.0).collect::<Vec<_>>()));
        }
        if n == 1 && seen.len() == 64 {
            break;
        }
    }
    let k = pts.len();
    let mw: Vec<f64> = (0..k).map(|_| rng.random_range(0..=64) as f64 / 1024.0).collect();
    let nw: Vec<f64> = (0..k).map(|_| rng.random_range(0..=64) as f64 / 1024.0).collect();
    Ok((AtomicMeasure::new(pts.clone(), mw)?, AtomicMeasure::new(pts, nw)?))
}

fn exact_measure(ctx: &SuiteContext, em: &mut Emitter) -> Result<()> {
    const SCENARIOS: usize = 100;
    let rows: Vec<Result<(usize, [usize; 5], usize)>> = (0..SCENARIOS)
        .into_par_iter()
        .map(|s| {
            let seed = derive(ctx.seed, &[s as u64]);
            let (mu, nu) = dyadic_measure(seed)?;
            let mut rng = stream(seed, &[0xBA11]);
            let mut bad = [0usize; 5];
            let mut checks = 0;
            for _ in 0..16 {
                let c = mu.points()[rng.random_range(0..mu.len())];
                let r = rng.random_range(1..=64) as f64 / 64.0;
                let closed = rng.random_bool(0.5);
                let ball = BallSpec { center: c, radius: r, closed, restricted: true };
                let a = [2.0, 3.0][rng.random_range(0..2)];
                let b = [2.0, 4.0, 16.0][rng.random_range(0..3)];
                let kappa = [1.0, 5.0, 50.0][rng.random_range(0..3)];
                bad[0] += usize::from(ball_mass(&mu, &ball) != brute_ball_mass(&mu, &c, r, closed));
                let brute_doubling = brute_ball_mass(&mu, &c, a * r, closed) <= b * brute_ball_mass(&mu, &c, r, closed);
                bad[1] += usize::from(is_doubling(&mu, &ball, a, b) != brute_doubling);
                bad[2] += usize::from(has_small_boundary(&mu, &ball, kappa) != brute_small_boundary(&mu, &ball, kappa));
                checks += 3;
            }
            for _ in 0..8 {
                let y = mu.points()[rng.random_range(0..mu.len())];
                bad[3] += usize::from(maximal_centred(&mu, &nu, &y) != brute_centred(&mu, &nu, &y));
                let m = rng.random_range(1..=3) as f64;
                let floor = rng.random_range(1..=32) as f64 / 64.0;
                bad[4] += usize::from(maximal_radial_floor(&nu, &y, m, floor) != brute_radial_floor(&nu, &y, m, floor));
                checks += 2;
            }
            Ok((mu.len(), bad, checks))
        })
        .collect();
    let (mut total, mut mism, mut atoms) = (0, [0usize; 5], 0);
    for (s, row) in rows.into_iter().enumerate() {
        let (n, bad, checks) = row?;
        total += checks;
        atoms = atoms.max(n);
        for (a, b) in mism.iter_mut().zip(bad) {
            *a += b;
        }
        let miss: usize = bad.iter().sum();
        em.push(
            format!("scenario-{s}"),
            "ball masses, doubling, small boundary and maximal functions equal brute-force enumeration",
            json!({"atoms": n, "checks": checks, "mismatches": bad}),
            json!(0),
            miss == 0,
        );
    }
    let all: usize = mism.iter().sum();
    em.push(
        "summary",
        "exact agreement with enumeration over random dyadic scenarios",
        json!({"scenarios": SCENARIOS, "checks": total, "max_atoms": atoms,
               "mismatches": {"ball_mass": mism[0], "doubling": mism[1], "small_boundary": mism[2],
                              "centred_maximal": mism[3], "radial_maximal": mism[4]}}),
        json!(0),
        all == 0,
    );
    Ok(())
}

// ---------------------------------------------------------------- lattice

fn random_set(kind: usize, rng: &mut impl Rng) -> (ClosedSet, f64) {
    match kind {
        0 => (ClosedSet::Segment { a: p(&[0.0, 0.0]), b: p(&[1.0, rng.random_range(0.0..0.5)]) }, 1.0 / 150.0),
        1 => (ClosedSet::Circle { dim: 2, center: [0.0, 0.0], radius: rng.random_range(0.3..1.0) }, 0.02),
        2 => (ClosedSet::Cantor { level: 4, origin: [0.0, 0.0], side: 1.0 }, 0.01),
        _ => {
            let k = rng.random_range(20..150);
            let pts = (0..k).map(|_| p(&[rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)])).collect();
            (ClosedSet::Cloud { dim: 2, points: pts }, 0.01)
        }
    }
}

fn lattice_suite(ctx: &SuiteContext, em: &mut Emitter) -> Result<()> {
    let rows: Vec<Result<serde_json::Value>> = (0..50u64)
        .into_par_iter()
        .map(|s| {
            let mut rng = stream(ctx.seed, &[0x1A7, s]);
            let (e, mesh) = random_set((s % 4) as usize, &mut rng);
            let (pts, _) = e.discretize(mesh)?;
            let delta = if rng.random_bool(0.5) { 0.25 } else { 0.125 };
            let levels = rng.random_range(4..=5);
            let seed = rng.random::<u64>();
            let fixed = rng.random_range(0..pts.len());
            let nets = build_nets(&pts, delta, fixed, 0, levels - 1)?;
            let cfg = RandomConfig::new(seed, (0, levels - 1));
            let lat = build_lattice(&nets, &cfg)?;
            let again = build_lattice(&nets, &cfg)?;
            let partition = lat.verify_partition().is_ok();
            let nesting = lat.verify_nesting().is_ok();
            let deterministic = lat.same_as(&again);
            let (c_small, c_big) = lat.containment_constants();
            Ok(json!({"set": e, "atoms": pts.len(), "delta": delta, "levels": levels, "seed": seed,
                      "partition": partition, "nesting": nesting, "deterministic": deterministic,
                      "c_small": c_small, "c_big": c_big}))
        })
        .collect();
    for (s, row) in rows.into_iter().enumerate() {
        let mut v = row?;
        let pass = v["partition"] == json!(true) && v["nesting"] == json!(true) && v["deterministic"] == json!(true);
        if let Some(o) = v.as_object_mut() {
            // the full point list is noise in the report; keep the set kind only
            let kind = o["set"]["type"].clone();
            o.insert("set".into(), kind);
        }
        em.push(format!("triple-{s}"), "cubes partition every level, nest across levels and are reproducible", v, json!(0), pass);
    }
    Ok(())
}

// ---------------------------------------------------------------- badness

fn badness(ctx: &SuiteContext, em: &mut Emitter) -> Result<()> {
    const SEEDS: usize = 10_000;
    let segment: Vec<Point> = (0..257).map(|i| p(&[i as f64 / 256.0, 0.0])).collect();
    let circle = ClosedSet::Circle { dim: 2, center: [0.0, 0.0], radius: 0.5 }.discretize(PI / 256.0)?.0;
    let cantor = ClosedSet::Cantor { level: 4, origin: [0.0, 0.0], side: 1.0 }.discretize(0.01)?.0;
    let cases: [(&str, Vec<Point>); 3] = [("segment", segment), ("circle", circle), ("cantor", cantor)];
    let gamma = goodness_gamma(0.5, 1.0);
    for (name, pts) in cases {
        let fixed = pts.len() / 2;
        let nets = build_nets(&pts, 0.25, fixed, -1, 4)?;
        let setup = BadnessSetup {
            nets,
            ball: BallSpec::closed(pts[fixed], 0.1),
            gamma,
            l: 4,
            m: 4,
            range: (-1, 4),
        };
        let d0 = restrict_to_ball(build_lattice(&setup.nets, &RandomConfig::frozen())?, &setup.ball)?;
        let mut cubes: Vec<CubeId> = d0.cubes(4);
        let step = (cubes.len() / 8).max(1);
        cubes = cubes.into_iter().step_by(step).take(8).collect();
        let reps = estimate_badness_probability(&setup, &cubes, &[1, 2, 3, 4], SEEDS, derive(ctx.seed, &[0xBAD]))?;
        for r in reps {
            let pass = r.non_increasing;
            em.push(
                format!("{name}-cube-{}-{}", r.cube.level, r.cube.index),
                "badness probability does not increase with the goodness depth",
                json!({"p_hat": r.p_hat, "ci_low": r.ci_low, "ci_high": r.ci_high, "samples": r.samples}),
                json!("95% Wilson intervals"),
                pass,
            );
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- cone geometry

fn cone(ctx: &SuiteContext, em: &mut Emitter, w: &ReportWriter) -> Result<()> {
    // sigma of the cone over a point of the plane: 2 pi ln(t/s)
    let e = ClosedSet::Cloud { dim: 2, points: vec![p(&[0.0, 0.0])] };
    let (s, t): (f64, f64) = (0.1, 10.0);
    let shells = (t.log2().ceil() - s.log2().floor()) as usize;
    let cfg = QuadratureConfig::new(100_000 / shells, derive(ctx.seed, &[0xC0]));
    let est = cone_sigma_integral(&e, &p(&[0.0, 0.0]), s, t, |_, _| 1.0, &cfg)?;
    let exact = 2.0 * PI * (t / s).ln();
    let z = (est.value - exact).abs() / est.stderr;
    em.push(
        "point-cone-sigma",
        "sigma of the truncated cone over a point equals 2 pi ln(t/s)",
        json!({"estimate": est.value, "stderr": est.stderr, "exact": exact, "z": z, "samples": cfg.samples_per_shell * shells}),
        json!({"max_z": 3.0}),
        z <= 3.0,
    );
    cone_bound(ctx, em)?;
    // symmetric difference ladder
    let ladder = [10.0, 20.0, 40.0, 80.0];
    let sets: [(&str, ClosedSet, Point, Point, f64); 2] = {
        let r_line = 1.0;
        let r_circ: f64 = 1e-4;
        let ang: f64 = r_circ / 2.0;
        [
            ("line", ClosedSet::Hyperplane { dim: 2, half_width: 1e9 }, p(&[0.0, 0.0]), p(&[r_line / 2.0, 0.0]), r_line),
            ("circle", ClosedSet::Circle { dim: 2, center: [0.0, 0.0], radius: 1.0 }, p(&[1.0, 0.0]), p(&[ang.cos(), ang.sin()]), r_circ),
        ]
    };
    for (name, e, y, y2, r) in sets {
        let cfg = QuadratureConfig::new(ctx.samples(100_000), derive(ctx.seed, &[0x5D]));
        let mut scaled = Vec::new();
        let mut rows = Vec::new();
        for &t in &ladder {
            let sd = cone_symmetric_difference(&e, &y, &y2, t, r, 8, &cfg)?;
            scaled.push(sd.scaled);
            rows.push(vec![t, sd.estimate.value, sd.estimate.stderr, sd.scaled]);
        }
        w.ladder(&format!("symmetric-difference-{name}"), &["t", "sigma", "stderr", "t_sigma"], &rows)?;
        let mean = scaled.iter().sum::<f64>() / scaled.len() as f64;
        let dev = scaled.iter().map(|v| (v / mean - 1.0).abs()).fold(0.0, f64::max);
        em.push(
            format!("symmetric-difference-{name}"),
            "t times the sigma measure of the symmetric difference of nearby cones stays bounded along a t ladder",
            json!({"t": ladder, "scaled": scaled, "mean": mean, "max_relative_deviation": dev}),
            json!({"max_relative_deviation": 0.3}),
            mean > 0.0 && dev <= 0.3,
        );
    }
    Ok(())
}

fn cone_bound(ctx: &SuiteContext, em: &mut Emitter) -> Result<()> {
    let sets: Vec<ClosedSet> = match &ctx.scenario {
        Some(s) => vec![s.set.clone()],
        None => vec![
            ClosedSet::Segment { a: p(&[0.0, 0.0]), b: p(&[1.0, 0.0]) },
            ClosedSet::Circle { dim: 2, center: [0.0, 0.0], radius: 1.0 },
            ClosedSet::Cantor { level: 3, origin: [0.0, 0.0], side: 1.0 },
            ClosedSet::Hyperplane { dim: 3, half_width: 10.0 },
        ],
    };
    let rows: Vec<Result<(f64, f64, f64, f64, f64)>> = (0..50u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(ctx.seed, &[0xB0, k]);
            let e = &sets[k as usize % sets.len()];
            let y = e.sample(&mut rng);
            let s = rng.random_range(0.01..0.5);
            let t = s * rng.random_range(2.0..100.0);
            let cfg = QuadratureConfig::new(ctx.samples(2000), derive(ctx.seed, &[0xB1, k]));
            let est = cone_sigma_integral(e, &y, s, t, |_, _| 1.0, &cfg)?;
            Ok((s, t, est.value, est.stderr, cone_sigma_bound(e.dim(), s, t)))
        })
        .collect();
    for (k, row) in rows.into_iter().enumerate() {
        let (s, t, v, se, bound) = row?;
        em.push(
            format!("bound-{k}"),
            "sigma of a truncated cone is at most the volume of B(y, 2t) over s^n",
            json!({"s": s, "t": t, "sigma": v, "stderr": se, "bound": bound}),
            json!({"bound": bound}),
            v <= bound,
        );
    }
    Ok(())
}

// ---------------------------------------------------------------- Calderón-Zygmund

fn czd(ctx: &SuiteContext, em: &mut Emitter) -> Result<()> {
    let e = ClosedSet::Segment { a: p(&[0.0, 0.0]), b: p(&[1.0, 0.0]) };
    let kernel = crate::operator::KernelSpec::power(1.0, 0.5);
    let mut maxima = Vec::new();
    for k in 0..20u64 {
        let mut rng = stream(ctx.seed, &[0xC2, k]);
        let n = rng.random_range(24..48);
        let pts: Vec<Point> = (0..n).map(|i| p(&[(i as f64 + rng.random_range(0.1..0.9)) / n as f64, 0.0])).collect();
        let mu = AtomicMeasure::new(pts.clone(), (0..n).map(|_| rng.random_range(0.5..1.5)).collect())?;
        let w: Vec<Complex64> = (0..n)
            .map(|_| {
                if rng.random_bool(0.2) {
                    Complex64::from_polar(rng.random_range(1.0..4.0), rng.random_range(-PI..PI))
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        let nu = ComplexAtomicMeasure::new(pts, w)?;
        let floor = 8.0 * nu.total_variation().total_mass() / mu.total_mass();
        let lambda = floor * rng.random_range(1.1..2.0);
        let dec = cz_decompose(&nu, &mu, CzParams::new(lambda, 1.0))?;
        let ch = &dec.checks;
        em.push(
            format!("instance-{k}"),
            "the decomposition satisfies all seven Calderón-Zygmund properties",
            json!({"cz": [ch.cz1, ch.cz2, ch.cz3, ch.cz4, ch.cz5, ch.cz6, ch.cz7], "c1": ch.c1, "c7": ch.c7,
                   "overlap": ch.overlap, "good_part": ch.good_part, "balls": dec.balls.len()}),
            json!("exact"),
            ch.all_pass(),
        );
        if dec.balls.is_empty() {
            continue;
        }
        let cfg = QuadratureConfig::new(ctx.samples(200), derive(ctx.seed, &[0xC3, k]));
        let consts = single_ball_constants(&kernel, &e, &mu, &nu, &dec, 0.005, 2.0, &cfg)?;
        let max = consts.iter().map(|c| c.ratio).fold(0.0, f64::max);
        let finite = consts.iter().all(|c| c.ratio.is_finite());
        em.push(
            format!("instance-{k}-ball-constants"),
            "the off-ball integral of C b_i is a finite multiple of |nu|(B_i)",
            json!({"ratios": consts.iter().map(|c| c.ratio).collect::<Vec<_>>(), "max": max}),
            json!("finite"),
            finite,
        );
        maxima.push(max);
    }
    let med = median(&maxima);
    let dev = maxima.iter().map(|v| (v / med - 1.0).abs()).fold(0.0, f64::max);
    em.push(
        "ball-constant-stability",
        "the largest single-ball constant is stable across instances",
        json!({"maxima": maxima, "median": med, "max_relative_deviation": dev}),
        json!({"max_relative_deviation": 0.5}),
        med > 0.0 && dev <= 0.5,
    );
    Ok(())
}

// ---------------------------------------------------------------- martingales

struct MartingaleRun {
    reconstruction: f64,
    zero_mean: f64,
    ratio: f64,
    transit: usize,
}

fn martingale_instance(seed: u64, n: usize, levels: i32) -> Result<MartingaleRun> {
    let mut rng = stream(seed, &[0x3A]);
    let pts: Vec<Point> = (0..n).map(|i| p(&[i as f64 / (n - 1) as f64, 0.0])).collect();
    let mu = AtomicMeasure::new(pts.clone(), (0..n).map(|_| rng.random_range(0.5..1.5)).collect())?;
    let nets = build_nets(&pts, 0.25, n / 2, -2, -2 + levels)?;
    let lat = build_lattice(&nets, &RandomConfig::new(rng.random(), (-1, -2 + levels)))?;
    let d = restrict_to_ball(lat, &BallSpec::closed(pts[n / 2], 0.6))?;
    let b: Vec<Complex64> = (0..n).map(|_| Complex64::from_polar(rng.random_range(0.5..1.5), rng.random_range(-2.0..2.0))).collect();
    let f: Vec<Complex64> = (0..n).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let h = vec![false; n];
    let sys = compute_stopping_and_transit(&d, &mu, &b, 0.3, &h)?;
    let dec = decompose(&f, &sys)?;
    Ok(MartingaleRun {
        reconstruction: dec.reconstruction_error,
        zero_mean: dec.zero_mean_error,
        ratio: dec.norm_ratio(),
        transit: sys.transit_cubes().len(),
    })
}

fn martingale(ctx: &SuiteContext, em: &mut Emitter, w: &ReportWriter) -> Result<()> {
    let seeds: Vec<u64> = (0..50u64).map(|k| derive(ctx.seed, &[0x3B, k])).collect();
    let coarse: Vec<Result<MartingaleRun>> = seeds.par_iter().map(|&s| martingale_instance(s, 4096, 4)).collect();
    let fine: Vec<Result<MartingaleRun>> = seeds.par_iter().map(|&s| martingale_instance(s, 4096, 5)).collect();
    let mut c = [1.0f64; 2];
    for (k, (a, b)) in coarse.into_iter().zip(fine).enumerate() {
        let (a, b) = (a?, b?);
        let pass = a.reconstruction <= 1e-10 && a.zero_mean <= 1e-12 && b.reconstruction <= 1e-10 && b.zero_mean <= 1e-12;
        em.push(
            format!("instance-{k}"),
            "martingale differences reconstruct f and have zero mean on their cubes",
            json!({"reconstruction": [a.reconstruction, b.reconstruction], "zero_mean": [a.zero_mean, b.zero_mean],
                   "norm_ratio": [a.ratio, b.ratio], "transit_cubes": [a.transit, b.transit]}),
            json!({"reconstruction": 1e-10, "zero_mean": 1e-12}),
            pass,
        );
        c[0] = c[0].max(a.ratio).max(1.0 / a.ratio);
        c[1] = c[1].max(b.ratio).max(1.0 / b.ratio);
    }
    let change = (c[1] / c[0] - 1.0).abs();
    em.push(
        "norm-equivalence",
        "the square-sum of martingale differences is comparable to the norm, with a constant stable under refinement",
        json!({"c": c[0], "c_refined": c[1], "relative_change": change}),
        json!({"relative_change": 0.2}),
        change <= 0.2,
    );
    // coefficient matrix ladder: a fixed four-level lattice under a ball of radius 0.1,
    // with the atom count doubling; the finest cubes always hold several atoms
    let sizes = [128usize, 256, 512, 1024, 2048];
    let mut norms = Vec::new();
    let mut rows = Vec::new();
    for n in sizes {
        let pts: Vec<Point> = (0..n).map(|i| p(&[i as f64 / (n - 1) as f64, 0.0])).collect();
        let mu = AtomicMeasure::uniform(pts.clone(), 1.0)?;
        let nets = build_nets(&pts, 0.25, n / 2, 0, 3)?;
        let d = restrict_to_ball(build_lattice(&nets, &RandomConfig::frozen())?, &BallSpec::closed(pts[n / 2], 0.1))?;
        let one = vec![Complex64::new(1.0, 0.0); n];
        let sys = compute_stopping_and_transit(&d, &mu, &one, 0.5, &vec![false; n])?;
        let geom = transit_geometry(&sys);
        let est = matrix_norm_estimate(&geom, &geom, 1.0, 0.5)?;
        rows.push(vec![n as f64, geom.len() as f64, est.norm, est.iterations as f64]);
        norms.push(est.norm);
    }
    w.ladder("matrix-norm", &["atoms", "cubes", "norm", "iterations"], &rows)?;
    let growth: Vec<f64> = norms.windows(2).map(|v| v[1] / v[0] - 1.0).collect();
    let worst = growth.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    em.push(
        "matrix-norm-ladder",
        "the cube coefficient matrix has operator norm bounded independently of the lattice size",
        json!({"atoms": sizes, "norms": norms, "growth": growth}),
        json!({"max_growth": 0.05}),
        worst < 0.05,
    );
    Ok(())
}

// ---------------------------------------------------------------- scenario pipelines

fn pipeline_scenarios(ctx: &SuiteContext) -> Vec<Scenario> {
    match &ctx.scenario {
        Some(_) => vec![ctx.scenario_or(Scenario::segment(65))],
        None => vec![ctx.scenario_or(Scenario::segment(65)), ctx.scenario_or(Scenario::circle(64))],
    }
}

fn suppression(ctx: &SuiteContext, em: &mut Emitter) -> Result<()> {
    for mut sc in pipeline_scenarios(ctx) {
        if ctx.scenario.is_none() {
            sc.budget.samples_per_shell = ctx.samples(120);
            sc.budget.ensemble = 8;
        }
        let inst = sc.instantiate()?;
        let balls = regular_balls(&inst, 2, 2)?;
        for (k, ball) in balls.iter().enumerate() {
            let cfg = QuadratureConfig::new(sc.budget.samples_per_shell, derive(ctx.seed, &[0x5B, k as u64]));
            let r = big_piece_pipeline(&inst, ball, &cfg)?;
            let bp = &r.big_piece;
            em.push(
                format!("{}-ball-{k}", sc.name),
                "the suppressed square function of b stays below lambda0, agrees with the original off S, keeps the kernel constants, and the big piece is large",
                json!({"ball": ball, "lambda0": r.lambda0, "worst_excess_sigmas": r.worst_excess.max(-1e300),
                       "disagreements": r.disagreements, "kernel_size_ratio": r.kernel_size_ratio,
                       "kernel_holder_ratio": r.kernel_holder_ratio, "mass_s": r.mass_s,
                       "mass_g": bp.mass_g, "bound": bp.bound, "hypothesis": bp.hypothesis_holds()}),
                json!({"excess_sigmas": 3.0, "disagreements": 0}),
                r.pass(),
            );
        }
    }
    Ok(())
}

fn hypotheses(ctx: &SuiteContext, em: &mut Emitter) -> Result<()> {
    for mut sc in pipeline_scenarios(ctx) {
        if ctx.scenario.is_none() {
            sc.budget.samples_per_shell = ctx.samples(100);
        }
        let inst = sc.instantiate()?;
        let balls = regular_balls(&inst, 2, 2)?;
        let cfg = QuadratureConfig::new(sc.budget.samples_per_shell, derive(ctx.seed, &[0x4B]));
        for (k, r) in check_tb_hypotheses(&inst, &balls, true, &cfg)?.into_iter().enumerate() {
            let pass = r.pass();
            em.push(
                format!("{}-ball-{k}", sc.name),
                "the test measure satisfies support, mass, size, absolute continuity, exceptional-set and weak testing conditions",
                serde_json::to_value(&r)?,
                json!({"c1": sc.params.c1, "c2": sc.params.c2, "eps0": sc.params.eps0}),
                pass,
            );
        }
    }
    Ok(())
}

fn stopping_sets(ctx: &SuiteContext, em: &mut Emitter) -> Result<()> {
    for sc in pipeline_scenarios(ctx) {
        let inst = sc.instantiate()?;
        let balls = regular_balls(&inst, 2, 2)?;
        for (k, ball) in balls.iter().enumerate() {
            let s = stopping_sets_pipeline(&inst, ball, &RandomConfig::frozen())?;
            em.push(
                format!("{}-ball-{k}", sc.name),
                "stopping and exceptional sets leave a fixed fraction of |nu|(B) and pin the density off the mass-comparison cubes",
                json!({"ball": ball, "eta": s.eta, "p0": s.p0, "t_cubes": s.t_cubes.len(), "f1": s.f1.len(), "f2": s.f2.len(),
                       "nu_exceptional": s.nu_exceptional, "limit": s.exceptional_limit,
                       "phi_min": if s.phi_min.is_finite() { json!(s.phi_min) } else { json!(null) }, "phi_max": s.phi_max}),
                json!({"exceptional_fraction": 1.0 - 1.0 / (4.0 * sc.params.c1),
                       "phi": [1.0 / (16.0 * sc.params.c1), sc.params.c1 / sc.params.eps0]}),
                s.pass(),
            );
        }
    }
    Ok(())
}

fn good_lambda(ctx: &SuiteContext, em: &mut Emitter) -> Result<()> {
    let mut sc = ctx.scenario_or(Scenario::segment(65));
    if ctx.scenario.is_none() {
        sc.budget.samples_per_shell = ctx.samples(150);
    }
    let inst = sc.instantiate()?;
    let fs = random_densities(20, inst.mu.len(), derive(ctx.seed, &[0x6A]));
    let cfg = QuadratureConfig::new(sc.budget.samples_per_shell, derive(ctx.seed, &[0x6B]));
    let r = good_lambda_experiment(&inst, &fs, &cfg)?;
    for (k, row) in r.per_f.iter().enumerate() {
        let whitney_fail = row.rows.iter().filter(|l| l.whitney == Some(false)).count();
        em.push(
            format!("f-{k}"),
            "the good-lambda inequality holds at every grid level",
            json!({"factor": row.factor, "lp_ratios": row.lp_ratios,
                   "left": row.rows.iter().map(|l| l.left).collect::<Vec<_>>(),
                   "right": row.rows.iter().map(|l| l.right).collect::<Vec<_>>(),
                   "whitney_failures": whitney_fail}),
            json!({"factor": r.allowed}),
            row.pass,
        );
    }
    em.push(
        "l2-spread",
        "the L2 ratio of the square function is bounded across densities",
        json!({"l2_ratios": r.per_f.iter().map(|x| x.lp_ratios[1]).collect::<Vec<_>>(), "spread": r.l2_spread, "theta": r.theta}),
        json!({"max_spread": 2.0}),
        r.l2_spread < 2.0,
    );
    Ok(())
}

fn weak11(ctx: &SuiteContext, em: &mut Emitter) -> Result<()> {
    let mut sc = ctx.scenario_or(Scenario::segment(65));
    if ctx.scenario.is_none() {
        sc.budget.samples_per_shell = ctx.samples(150);
    }
    let inst = sc.instantiate()?;
    let mu = &inst.mu;
    let nus: Vec<ComplexAtomicMeasure> = random_densities(10, mu.len(), derive(ctx.seed, &[0x11]))
        .into_iter()
        .map(|f| ComplexAtomicMeasure::with_density(mu, &f))
        .collect();
    let cfg = QuadratureConfig::new(sc.budget.samples_per_shell, derive(ctx.seed, &[0x12]));
    let r = weak11_experiment(&inst.kernel, &inst.e, mu, &nus, sc.params.s_min, sc.params.t_max, &cfg)?;
    em.push(
        "weak-type-spread",
        "lambda mu(C nu > lambda) / |nu|(E) is stable across measures",
        json!({"sup_grid": r.rows.iter().map(|x| x.sup_grid).collect::<Vec<_>>(), "spread": r.spread}),
        json!({"max_spread": 2.0}),
        r.spread <= 2.0,
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_suite_is_an_error() {
        let mut w = ReportWriter::new(None, false).unwrap();
        assert!(run_suite("nope", &SuiteContext::new(0), &mut w).is_err());
    }

    #[test]
    fn brute_force_oracles_on_a_tiny_measure() {
        let mu = AtomicMeasure::new(vec![p(&[0.0]), p(&[0.5]), p(&[1.0])], vec![0.25, 0.5, 0.25]).unwrap();
        assert_eq!(brute_ball_mass(&mu, &p(&[0.0]), 0.5, true), 0.75);
        assert_eq!(brute_ball_mass(&mu, &p(&[0.0]), 0.5, false), 0.25);
        assert_eq!(brute_centred(&mu, &mu, &p(&[0.0])), 1.0);
        // open ball of radius 1/4 holds the center only; closed radius 1/2 holds 3/4
        assert_eq!(brute_radial_floor(&mu, &p(&[0.0]), 1.0, 0.25), 1.5);
    }

    #[test]
    fn exact_measure_suite_passes() {
        let mut w = ReportWriter::new(None, false).unwrap();
        let reps = run_suite("exact-measure", &SuiteContext::new(1), &mut w).unwrap();
        assert_eq!(reps.len(), 101);
        assert!(reps.iter().all(|r| r.pass));
    }
}
