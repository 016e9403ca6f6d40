//! Nested nets, randomized dyadic cubes on a finite set of atoms, the restricted
//! lattices `D_B(omega)`, goodness and the empirical probability of badness.
//!
//! Levels are indexed so that level `k` has side length `delta^k`; larger `k`
//! means finer cubes. Cubes are keyed by `(level, index)` even when two
//! generations share the same atom set.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{BallSpec, Point, MAX_DIM};
use crate::rng::stream;

/// Maximal `delta^k`-separated nested nets `X_k_top ⊂ ... ⊂ X_k_bottom` of atom indices.
#[derive(Clone, Debug, Serialize)]
pub struct NetHierarchy {
    pub delta: f64,
    pub k_top: i32,
    pub fixed: usize,
    pub levels: Vec<Vec<usize>>,
    #[serde(skip)]
    points: Vec<Point>,
}

impl NetHierarchy {
    pub fn k_bottom(&self) -> i32 {
        self.k_top + self.levels.len() as i32 - 1
    }

    pub fn level(&self, k: i32) -> &[usize] {
        &self.levels[(k - self.k_top) as usize]
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn side(&self, k: i32) -> f64 {
        self.delta.powi(k)
    }
}

/// Greedy farthest-point nets seeded at `points[fixed]`, top level first.
/// Ties are broken by the smaller atom index.
pub fn build_nets(
    points: &[Point],
    delta: f64,
    fixed: usize,
    k_top: i32,
    k_bottom: i32,
) -> Result<NetHierarchy> {
    if !(delta > 0.0 && delta <= 0.25) {
        return Err(invalid(format!("delta {delta} outside (0, 1/4]")));
    }
    if fixed >= points.len() {
        return Err(invalid("fixed point index out of range"));
    }
    if k_bottom < k_top {
        return Err(invalid("empty level range"));
    }
    let mut nearest: Vec<f64> = points.iter().map(|p| p.dist(&points[fixed])).collect();
    let mut net = vec![fixed];
    let mut levels = Vec::new();
    for k in k_top..=k_bottom {
        let sep = delta.powi(k);
        loop {
            let mut best: Option<(f64, usize)> = None;
            for (i, &d) in nearest.iter().enumerate() {
                if d >= sep && best.is_none_or(|(bd, _)| d > bd) {
                    best = Some((d, i));
                }
            }
            let Some((_, i)) = best else { break };
            net.push(i);
            let p = points[i];
            for (d, q) in nearest.iter_mut().zip(points) {
                *d = d.min(p.dist(q));
            }
        }
        levels.push(net.clone());
    }
    Ok(NetHierarchy {
        delta,
        k_top,
        fixed,
        levels,
        points: points.to_vec(),
    })
}

/// The random parameter `omega`: per-level choices in `{0..=L} x {1..=M}`,
/// drawn uniformly inside `range` and frozen to `(0, 1)` outside it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomConfig {
    pub seed: u64,
    pub l: u32,
    pub m: u32,
    pub range: (i32, i32),
    /// Shift scale as a multiple of `delta^k`; `None` uses the default safe value.
    #[serde(default)]
    pub theta: Option<f64>,
}

impl RandomConfig {
    pub fn new(seed: u64, range: (i32, i32)) -> RandomConfig {
        RandomConfig {
            seed,
            l: 4,
            m: 4,
            range,
            theta: None,
        }
    }

    /// The reference configuration `omega_0`.
    pub fn frozen() -> RandomConfig {
        RandomConfig {
            seed: 0,
            l: 4,
            m: 4,
            range: (1, 0),
            theta: None,
        }
    }

    pub fn omega(&self, k: i32) -> (u32, u32) {
        if k < self.range.0 || k > self.range.1 {
            return (0, 1);
        }
        let mut rng = stream(self.seed, &[0x0A11_CE, k as u64]);
        (rng.random_range(0..=self.l), rng.random_range(1..=self.m))
    }

    /// Probability that one coordinate takes a prescribed value.
    pub fn hit_probability(&self) -> f64 {
        1.0 / (self.m as f64 * (self.l as f64 + 1.0))
    }
}

/// Largest shift scale for which `B(y, delta^k / 8)` stays inside the level-`k`
/// cube of a point `y` that belongs to every net.
pub fn max_safe_theta(delta: f64) -> f64 {
    let q = delta / (1.0 - delta);
    (0.375 - q) / (1.0 + 2.0 * q)
}

fn directions(dim: usize, count: u32) -> Vec<Point> {
    (0..count)
        .map(|j| {
            let mut rng = stream(0x5EED_D1, &[dim as u64, j as u64]);
            loop {
                let mut c = [0.0; MAX_DIM];
                for v in c.iter_mut().take(dim) {
                    *v = rng.random_range(-1.0..1.0);
                }
                let p = Point::from_array(c, dim);
                let n = p.norm();
                if n > 0.1 && n <= 1.0 {
                    return p * (1.0 / n);
                }
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CubeId {
    pub level: i32,
    pub index: usize,
}

#[derive(Clone, Debug, Serialize)]
struct Level {
    /// Atom index of the reference point of each cube.
    centers: Vec<usize>,
    /// Cube index of every atom at this level.
    label: Vec<usize>,
    members: Vec<Vec<usize>>,
    /// Index of the parent cube one level up (`usize::MAX` at the top).
    parent: Vec<usize>,
    children: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DyadicLattice {
    pub delta: f64,
    pub k_top: i32,
    pub fixed: usize,
    pub theta: f64,
    pub config: RandomConfig,
    levels: Vec<Level>,
    #[serde(skip)]
    points: Vec<Point>,
}

/// One line of the lattice dump.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CubeRecord {
    pub level: i32,
    pub index: usize,
    pub center: Point,
    pub parent: Option<usize>,
    pub atoms: usize,
}

/// Randomized cubes: every level-`k+1` point picks as parent the level-`k` net point
/// nearest to it after all level-`k` centers are shifted by `(l/L) theta delta^k u_m`,
/// with `(l, m) = omega(k)`. Atoms outside the finest net attach the same way.
pub fn build_lattice(nets: &NetHierarchy, config: &RandomConfig) -> Result<DyadicLattice> {
    if nets.levels.iter().any(|l| l.is_empty()) {
        return Err(invalid("empty net level"));
    }
    let delta = nets.delta;
    let theta = config.theta.unwrap_or(0.9 * max_safe_theta(delta));
    let dim = nets.points[0].dim();
    let dirs = directions(dim, config.m.max(1));
    let pts = &nets.points;
    let shift = |k: i32| -> Point {
        let (l, m) = config.omega(k);
        let frac = if config.l == 0 {
            0.0
        } else {
            l as f64 / config.l as f64
        };
        dirs[(m as usize - 1) % dirs.len()] * (frac * theta * delta.powi(k))
    };
    let choose = |x: &Point, centers: &[usize], v: &Point| -> usize {
        let mut best = (f64::INFINITY, 0usize);
        for (a, &c) in centers.iter().enumerate() {
            let d = x.dist2(&(pts[c] + *v));
            if d < best.0 {
                best = (d, a);
            }
        }
        best.1
    };

    let nlev = nets.levels.len();
    let mut levels: Vec<Level> = Vec::with_capacity(nlev);
    // finest level: every atom attaches to a finest-net point
    let kb = nets.k_bottom();
    let finest = nets.level(kb);
    let v = shift(kb);
    let mut pos = vec![usize::MAX; pts.len()];
    for (a, &c) in finest.iter().enumerate() {
        pos[c] = a;
    }
    let label: Vec<usize> = (0..pts.len())
        .map(|i| {
            if pos[i] != usize::MAX {
                pos[i]
            } else {
                choose(&pts[i], finest, &v)
            }
        })
        .collect();
    levels.push(make_level(finest.to_vec(), label));

    for k in (nets.k_top..kb).rev() {
        let centers = nets.level(k).to_vec();
        let v = shift(k);
        let below = levels.last_mut().expect("finer level exists");
        let parent: Vec<usize> = below
            .centers
            .iter()
            .map(|&c| choose(&pts[c], &centers, &v))
            .collect();
        below.parent = parent.clone();
        let label = below.label.iter().map(|&b| parent[b]).collect();
        let mut lev = make_level(centers, label);
        for (b, &p) in parent.iter().enumerate() {
            lev.children[p].push(b);
        }
        levels.push(lev);
    }
    levels.reverse();
    Ok(DyadicLattice {
        delta,
        k_top: nets.k_top,
        fixed: nets.fixed,
        theta,
        config: *config,
        levels,
        points: pts.clone(),
    })
}

fn make_level(centers: Vec<usize>, label: Vec<usize>) -> Level {
    let mut members = vec![Vec::new(); centers.len()];
    for (i, &c) in label.iter().enumerate() {
        members[c].push(i);
    }
    let n = centers.len();
    Level {
        centers,
        label,
        members,
        parent: vec![usize::MAX; n],
        children: vec![Vec::new(); n],
    }
}

impl DyadicLattice {
    pub fn k_bottom(&self) -> i32 {
        self.k_top + self.levels.len() as i32 - 1
    }

    fn lev(&self, k: i32) -> &Level {
        &self.levels[(k - self.k_top) as usize]
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn side(&self, k: i32) -> f64 {
        self.delta.powi(k)
    }

    pub fn num_cubes(&self, k: i32) -> usize {
        self.lev(k).centers.len()
    }

    pub fn members(&self, q: CubeId) -> &[usize] {
        &self.lev(q.level).members[q.index]
    }

    pub fn center(&self, q: CubeId) -> Point {
        self.points[self.lev(q.level).centers[q.index]]
    }

    pub fn parent(&self, q: CubeId) -> Option<CubeId> {
        (q.level > self.k_top).then(|| CubeId {
            level: q.level - 1,
            index: self.lev(q.level).parent[q.index],
        })
    }

    pub fn children(&self, q: CubeId) -> Vec<CubeId> {
        if q.level >= self.k_bottom() {
            return Vec::new();
        }
        self.lev(q.level).children[q.index]
            .iter()
            .map(|&index| CubeId {
                level: q.level + 1,
                index,
            })
            .collect()
    }

    /// The level-`k` cube containing atom `i`.
    pub fn cube_of(&self, i: usize, k: i32) -> CubeId {
        CubeId {
            level: k,
            index: self.lev(k).label[i],
        }
    }

    pub fn labels(&self, k: i32) -> &[usize] {
        &self.lev(k).label
    }

    pub fn cubes(&self, k: i32) -> impl Iterator<Item = CubeId> + '_ {
        (0..self.num_cubes(k)).map(move |index| CubeId { level: k, index })
    }

    pub fn dump(&self) -> Vec<CubeRecord> {
        (self.k_top..=self.k_bottom())
            .flat_map(|k| self.cubes(k))
            .map(|q| CubeRecord {
                level: q.level,
                index: q.index,
                center: self.center(q),
                parent: self.parent(q).map(|p| p.index),
                atoms: self.members(q).len(),
            })
            .collect()
    }

    /// Every atom lies in exactly one cube of each generation.
    pub fn verify_partition(&self) -> Result<()> {
        for k in self.k_top..=self.k_bottom() {
            let mut seen = vec![0u32; self.points.len()];
            for m in &self.lev(k).members {
                for &i in m {
                    seen[i] += 1;
                }
            }
            if let Some(i) = seen.iter().position(|&c| c != 1) {
                return Err(Error::Violation(format!(
                    "atom {i} lies in {} cubes of level {k}",
                    seen[i]
                )));
            }
        }
        Ok(())
    }

    /// Each cube is the disjoint union of its children, so any two cubes are
    /// disjoint or nested.
    pub fn verify_nesting(&self) -> Result<()> {
        for k in self.k_top..self.k_bottom() {
            let (up, down) = (self.lev(k), self.lev(k + 1));
            for i in 0..self.points.len() {
                if down.parent[down.label[i]] != up.label[i] {
                    return Err(Error::Violation(format!(
                        "atom {i}: level {} cube not inside its parent",
                        k + 1
                    )));
                }
            }
            for (a, kids) in up.children.iter().enumerate() {
                let n: usize = kids.iter().map(|&b| down.members[b].len()).sum();
                if n != up.members[a].len() {
                    return Err(Error::Violation(format!("cube ({k},{a}) != union of children")));
                }
            }
        }
        Ok(())
    }

    /// Measured `(c_small, C_big)`: the largest `c` and smallest `C` with
    /// `B(z, c delta^k) ∩ atoms ⊂ Q ⊂ closed B(z, C delta^k)` for every cube.
    pub fn containment_constants(&self) -> (f64, f64) {
        let mut c_small = f64::INFINITY;
        let mut c_big: f64 = 0.0;
        for k in self.k_top..=self.k_bottom() {
            let l = self.side(k);
            let lev = self.lev(k);
            for (a, &c) in lev.centers.iter().enumerate() {
                let z = self.points[c];
                for (i, p) in self.points.iter().enumerate() {
                    let d = z.dist(p) / l;
                    if lev.label[i] == a {
                        c_big = c_big.max(d);
                    } else {
                        c_small = c_small.min(d);
                    }
                }
            }
        }
        (c_small, c_big)
    }

    /// Bitwise equality of every level's labels and centers.
    pub fn same_as(&self, other: &DyadicLattice) -> bool {
        self.k_top == other.k_top
            && self.levels.len() == other.levels.len()
            && self
                .levels
                .iter()
                .zip(&other.levels)
                .all(|(a, b)| a.centers == b.centers && a.label == b.label && a.parent == b.parent)
    }
}

/// `D_B(omega)`: the cubes of level `>= k0` inside the level-`k0` cube `Q_B`
/// that contains the center of `B`.
#[derive(Clone, Debug)]
pub struct RestrictedLattice {
    pub lattice: DyadicLattice,
    pub ball: BallSpec,
    pub k0: i32,
    pub top: CubeId,
}

/// The level `k0` with `r < delta^k0 / 8 <= r / delta`.
pub fn restriction_level(delta: f64, r: f64) -> i32 {
    let u = (8.0 * r).ln() / delta.ln();
    let mut k = u.ceil() as i32 - 1;
    // correct floating error by checking the defining inequalities directly
    while delta.powi(k) / 8.0 <= r {
        k -= 1;
    }
    while delta.powi(k + 1) / 8.0 > r {
        k += 1;
    }
    k
}

pub fn restrict_to_ball(lattice: DyadicLattice, ball: &BallSpec) -> Result<RestrictedLattice> {
    ball.validate(None)?;
    let y = lattice.points[lattice.fixed];
    if ball.center != y {
        return Err(invalid(format!(
            "ball center {:?} is not the fixed net point {:?}",
            ball.center, y
        )));
    }
    let k0 = restriction_level(lattice.delta, ball.radius);
    if k0 < lattice.k_top || k0 > lattice.k_bottom() {
        return Err(invalid(format!(
            "restriction level {k0} outside lattice levels [{}, {}]",
            lattice.k_top,
            lattice.k_bottom()
        )));
    }
    let top = lattice.cube_of(lattice.fixed, k0);
    for (i, p) in lattice.points.iter().enumerate() {
        if ball.contains(p) && lattice.cube_of(i, k0) != top {
            return Err(Error::Violation(format!("atom {i} of B lies outside Q_B")));
        }
    }
    Ok(RestrictedLattice {
        lattice,
        ball: *ball,
        k0,
        top,
    })
}

impl RestrictedLattice {
    pub fn k_bottom(&self) -> i32 {
        self.lattice.k_bottom()
    }

    pub fn in_top(&self, i: usize) -> bool {
        self.lattice.cube_of(i, self.k0) == self.top
    }

    /// Cubes of `D_B` at level `k` (descendants of `Q_B`).
    pub fn cubes(&self, k: i32) -> Vec<CubeId> {
        let mut ids: Vec<usize> = self
            .lattice
            .members(self.top)
            .iter()
            .map(|&i| self.lattice.labels(k)[i])
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids.into_iter().map(|index| CubeId { level: k, index }).collect()
    }

    /// All cubes of `D_B`, coarse to fine.
    pub fn all_cubes(&self) -> Vec<CubeId> {
        (self.k0..=self.k_bottom()).flat_map(|k| self.cubes(k)).collect()
    }
}

/// `gamma = alpha / (2 (m + alpha))`.
pub fn goodness_gamma(alpha: f64, m: f64) -> f64 {
    alpha / (2.0 * (m + alpha))
}

/// Levels `l` of `D_B(omega)` at which some cube `Q` violates
/// `max(d(R, Q), d(R, E \ Q)) >= l(R)^gamma l(Q)^(1 - gamma)` for the cube `R`
/// given by its atoms and level `j`. Levels range over `[k0, j - 1]`.
pub fn bad_levels(r_atoms: &[usize], j: i32, d: &RestrictedLattice, gamma: f64) -> Vec<i32> {
    let lat = &d.lattice;
    let pts = lat.points();
    let n = pts.len();
    let mut in_r = vec![false; n];
    for &i in r_atoms {
        in_r[i] = true;
    }
    let dist_to_r: Vec<f64> = pts
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if in_r[i] {
                0.0
            } else {
                r_atoms
                    .iter()
                    .map(|&a| p.dist2(&pts[a]))
                    .fold(f64::INFINITY, f64::min)
                    .sqrt()
            }
        })
        .collect();
    let in_top: Vec<bool> = (0..n).map(|i| d.in_top(i)).collect();
    let mut out = Vec::new();
    for l in d.k0..j {
        let thr = lat.delta.powf(j as f64 * gamma + l as f64 * (1.0 - gamma));
        let labels = lat.labels(l);
        // cubes of D_B met by R, with their distance to the complement
        let mut hit: Vec<(usize, f64)> = Vec::new();
        for &a in r_atoms {
            if in_top[a] && !hit.iter().any(|h| h.0 == labels[a]) {
                hit.push((labels[a], f64::INFINITY));
            }
        }
        let mut bad = false;
        for i in 0..n {
            let cube = if in_top[i] { Some(labels[i]) } else { None };
            for h in hit.iter_mut() {
                if cube != Some(h.0) {
                    h.1 = h.1.min(dist_to_r[i]);
                }
            }
            // a cube of D_B disjoint from R must stay at distance thr from it
            if let Some(c) = cube {
                if !in_r[i] && dist_to_r[i] < thr && !hit.iter().any(|h| h.0 == c) {
                    bad = true;
                }
            }
        }
        if bad || hit.iter().any(|h| h.1 < thr) {
            out.push(l);
        }
    }
    out
}

/// Whether `R` (atoms and level) is `D_B`-good for the parameter `r`.
pub fn is_good(r_atoms: &[usize], j: i32, d: &RestrictedLattice, gamma: f64, r: u32) -> bool {
    if j - (r as i32) < d.k0 {
        return true;
    }
    bad_levels(r_atoms, j, d, gamma)
        .iter()
        .all(|&l| l > j - r as i32)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BadnessReport {
    pub cube: CubeId,
    pub samples: usize,
    pub r: Vec<u32>,
    pub bad_counts: Vec<usize>,
    pub p_hat: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    pub hit_probability: f64,
    /// Fitted `eta` in `p ≈ C delta^(gamma r eta)`, when at least two `p_hat` are positive.
    pub eta_hat: Option<f64>,
    pub c_hat: Option<f64>,
    /// No `p_hat(r+1)` exceeds `p_hat(r)` beyond the 95% intervals.
    pub non_increasing: bool,
}

/// Wilson score interval at 95% confidence.
pub fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    let z = 1.959_963_984_540_054;
    let (k, n) = (k as f64, n as f64);
    let p = k / n;
    let den = 1.0 + z * z / n;
    let mid = (p + z * z / (2.0 * n)) / den;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / den;
    let lo = if k == 0.0 { 0.0 } else { (mid - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (mid + half).min(1.0) };
    (lo, hi)
}

/// Inputs shared by every seed of a badness experiment.
#[derive(Clone, Debug)]
pub struct BadnessSetup {
    pub nets: NetHierarchy,
    pub ball: BallSpec,
    pub gamma: f64,
    pub l: u32,
    pub m: u32,
    pub range: (i32, i32),
}

/// Monte Carlo estimate of `P(R is D_B(omega)-bad)` for each cube `R` of the
/// reference lattice `D_0 = D_B(omega_0)` listed in `cubes`.
pub fn estimate_badness_probability(
    setup: &BadnessSetup,
    cubes: &[CubeId],
    rs: &[u32],
    seeds: usize,
    base_seed: u64,
) -> Result<Vec<BadnessReport>> {
    const MIN_SAMPLES: usize = 30;
    if seeds < MIN_SAMPLES {
        return Err(Error::InsufficientSamples {
            got: seeds,
            needed: MIN_SAMPLES,
        });
    }
    let frozen = RandomConfig {
        l: setup.l,
        m: setup.m,
        ..RandomConfig::frozen()
    };
    let d0 = restrict_to_ball(build_lattice(&setup.nets, &frozen)?, &setup.ball)?;
    let targets: Vec<(Vec<usize>, i32)> = cubes
        .iter()
        .map(|&q| (d0.lattice.members(q).to_vec(), q.level))
        .collect();
    // coarsest bad level per (seed, cube); i32::MAX when good at every level
    let worst: Vec<Vec<i32>> = (0..seeds)
        .into_par_iter()
        .map(|s| -> Result<Vec<i32>> {
            let cfg = RandomConfig {
                seed: crate::rng::derive(base_seed, &[s as u64]),
                l: setup.l,
                m: setup.m,
                range: setup.range,
                theta: None,
            };
            let d = restrict_to_ball(build_lattice(&setup.nets, &cfg)?, &setup.ball)?;
            Ok(targets
                .iter()
                .map(|(atoms, j)| {
                    bad_levels(atoms, *j, &d, setup.gamma)
                        .into_iter()
                        .min()
                        .unwrap_or(i32::MAX)
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let delta = setup.nets.delta;
    Ok(cubes
        .iter()
        .enumerate()
        .map(|(c, &q)| {
            let counts: Vec<usize> = rs
                .iter()
                .map(|&r| {
                    let lim = q.level as i64 - r as i64;
                    worst.iter().filter(|w| (w[c] as i64) <= lim).count()
                })
                .collect();
            let p_hat: Vec<f64> = counts.iter().map(|&k| k as f64 / seeds as f64).collect();
            let ci: Vec<(f64, f64)> = counts.iter().map(|&k| wilson_interval(k, seeds)).collect();
            let non_increasing = ci.windows(2).all(|w| w[1].0 <= w[0].1);
            let (eta_hat, c_hat) = fit_decay(rs, &p_hat, setup.gamma, delta);
            BadnessReport {
                cube: q,
                samples: seeds,
                r: rs.to_vec(),
                bad_counts: counts,
                p_hat,
                ci_low: ci.iter().map(|c| c.0).collect(),
                ci_high: ci.iter().map(|c| c.1).collect(),
                hit_probability: frozen.hit_probability(),
                eta_hat,
                c_hat,
                non_increasing,
            }
        })
        .collect())
}

/// Least-squares fit of `ln p = ln C + gamma eta r ln delta` over positive `p`.
fn fit_decay(rs: &[u32], p: &[f64], gamma: f64, delta: f64) -> (Option<f64>, Option<f64>) {
    let pts: Vec<(f64, f64)> = rs
        .iter()
        .zip(p)
        .filter(|(_, p)| **p > 0.0)
        .map(|(r, p)| (*r as f64, p.ln()))
        .collect();
    if pts.len() < 2 {
        return (None, None);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (
        Some(slope / (gamma * delta.ln())),
        Some((my - slope * mx).exp()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest};

    fn p1(x: f64) -> Point {
        Point::new(&[x]).unwrap()
    }

    fn segment_grid(n: usize) -> Vec<Point> {
        (0..n).map(|i| p1(i as f64 / (n - 1) as f64)).collect()
    }

    fn pairwise_ok(pts: &[Point], net: &[usize], sep: f64) -> bool {
        let separated = net
            .iter()
            .enumerate()
            .all(|(a, &i)| net[a + 1..].iter().all(|&j| pts[i].dist(&pts[j]) >= sep));
        let maximal = pts
            .iter()
            .all(|p| net.iter().any(|&i| pts[i].dist(p) < sep));
        separated && maximal
    }

    #[test]
    fn nets_examples() {
        let single = build_nets(&[p1(0.0)], 0.25, 0, 0, 3).unwrap();
        assert!(single.levels.iter().all(|l| l == &vec![0]));
        let two = build_nets(&[p1(0.0), p1(1.0)], 0.25, 0, 0, 0).unwrap();
        assert_eq!(two.levels[0], vec![0, 1]);
        assert!(build_nets(&[p1(0.0)], 0.3, 0, 0, 1).is_err());
    }

    #[test]
    fn nets_are_separated_maximal_and_nested() {
        let pts = segment_grid(1000);
        let nets = build_nets(&pts, 0.25, 500, -1, 4).unwrap();
        for k in nets.k_top..=nets.k_bottom() {
            assert!(pairwise_ok(&pts, nets.level(k), nets.side(k)), "level {k}");
            assert!(nets.level(k).contains(&500));
            if k > nets.k_top {
                let coarse = nets.level(k - 1);
                assert!(coarse.iter().all(|i| nets.level(k).contains(i)));
            }
        }
    }

    #[test]
    fn two_level_partition_on_four_points() {
        let pts = vec![p1(0.0), p1(0.3), p1(0.6), p1(1.0)];
        let nets = build_nets(&pts, 0.25, 0, 0, 1).unwrap();
        let lat = build_lattice(&nets, &RandomConfig::new(1, (0, 1))).unwrap();
        lat.verify_partition().unwrap();
        lat.verify_nesting().unwrap();
        for i in 0..4 {
            let q1 = lat.cube_of(i, 1);
            assert_eq!(lat.parent(q1).unwrap(), lat.cube_of(i, 0));
        }
    }

    #[test]
    fn chain_of_single_cubes() {
        let nets = build_nets(&[p1(0.0)], 0.25, 0, 0, 3).unwrap();
        let lat = build_lattice(&nets, &RandomConfig::new(5, (0, 3))).unwrap();
        for k in 0..=3 {
            assert_eq!(lat.num_cubes(k), 1);
        }
    }

    #[test]
    fn restriction_level_boundaries() {
        for delta in [0.25f64, 0.125] {
            for j in -2..4 {
                // delta^k0 / 8 = 2 r
                let r = delta.powi(j) / 16.0;
                let k0 = restriction_level(delta, r);
                assert_eq!(k0, j);
                assert!(r < delta.powi(k0) / 8.0 && delta.powi(k0) / 8.0 <= r / delta);
                // 8 r = delta^j exactly: the upper inequality is an equality
                let r = delta.powi(j) / 8.0;
                let k0 = restriction_level(delta, r);
                assert!(r < delta.powi(k0) / 8.0 && delta.powi(k0) / 8.0 <= r / delta);
            }
        }
    }

    #[test]
    fn ball_lies_in_top_cube() {
        let pts = segment_grid(401);
        let nets = build_nets(&pts, 0.25, 200, -1, 4).unwrap();
        for seed in 0..20 {
            let lat = build_lattice(&nets, &RandomConfig::new(seed, (-1, 4))).unwrap();
            let ball = BallSpec::closed(pts[200], 0.1);
            let d = restrict_to_ball(lat, &ball).unwrap();
            for (i, p) in pts.iter().enumerate() {
                if ball.contains(p) {
                    assert!(d.in_top(i));
                }
            }
        }
        let lat = build_lattice(&nets, &RandomConfig::frozen()).unwrap();
        assert!(restrict_to_ball(lat, &BallSpec::closed(pts[3], 0.1)).is_err());
    }

    #[test]
    fn single_cube_lattice_restricts_to_itself() {
        let nets = build_nets(&[p1(0.0)], 0.25, 0, -2, 2).unwrap();
        let lat = build_lattice(&nets, &RandomConfig::frozen()).unwrap();
        let d = restrict_to_ball(lat, &BallSpec::closed(p1(0.0), 0.01)).unwrap();
        assert_eq!(d.lattice.members(d.top), &[0]);
    }

    #[test]
    fn goodness_examples() {
        let pts = segment_grid(257);
        let nets = build_nets(&pts, 0.25, 128, -1, 4).unwrap();
        let lat = build_lattice(&nets, &RandomConfig::frozen()).unwrap();
        let d = restrict_to_ball(lat, &BallSpec::closed(pts[128], 0.1)).unwrap();
        let gamma = goodness_gamma(1.0, 1.0);
        // vacuous scope
        let r0 = d.lattice.cube_of(128, d.k0 + 1);
        assert!(is_good(d.lattice.members(r0), r0.level, &d, gamma, 2));
        // the cube around the fixed point is deep inside every ancestor
        let deep = d.lattice.cube_of(128, 4);
        assert!(bad_levels(d.lattice.members(deep), 4, &d, gamma).is_empty());
        // a cube straddling a level-k0+1 boundary is bad
        let k = d.k0 + 1;
        let i = (0..pts.len() - 1)
            .find(|&i| {
                d.in_top(i)
                    && d.in_top(i + 1)
                    && d.lattice.cube_of(i, k) != d.lattice.cube_of(i + 1, k)
            })
            .expect("a boundary inside Q_B");
        let straddle = [i, i + 1];
        assert!(bad_levels(&straddle, 4, &d, gamma).contains(&k));
        assert!(!is_good(&straddle, 4, &d, gamma, 1));
    }

    #[test]
    fn wilson_interval_contains_estimate() {
        let (lo, hi) = wilson_interval(30, 100);
        assert!(lo < 0.3 && 0.3 < hi);
        assert_eq!(wilson_interval(0, 100).0, 0.0);
    }

    #[test]
    fn badness_needs_samples_and_decays() {
        let pts = segment_grid(257);
        let nets = build_nets(&pts, 0.25, 128, -1, 4).unwrap();
        let setup = BadnessSetup {
            nets,
            ball: BallSpec::closed(pts[128], 0.1),
            gamma: goodness_gamma(1.0, 1.0),
            l: 4,
            m: 4,
            range: (-1, 4),
        };
        assert!(estimate_badness_probability(&setup, &[], &[1], 10, 0).is_err());
        let cubes: Vec<CubeId> = (0..pts.len()).step_by(16).map(|i| CubeId {
            level: 4,
            index: build_lattice(&setup.nets, &RandomConfig::frozen()).unwrap().labels(4)[i],
        }).collect();
        let reps = estimate_badness_probability(&setup, &cubes, &[1, 2, 3, 4, 5, 6], 64, 3).unwrap();
        for rep in &reps {
            assert!(rep.non_increasing);
            assert!(rep.p_hat.windows(2).all(|w| w[1] <= w[0]));
            assert_eq!(*rep.p_hat.last().unwrap(), 0.0);
            assert!((rep.hit_probability - 1.0 / 20.0).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn lattice_invariants(seed in 0u64..1000, n in 5usize..80) {
            let mut rng = stream(seed, &[]);
            let pts: Vec<Point> = (0..n)
                .map(|_| Point::new(&[rng.random(), rng.random()]).unwrap())
                .collect();
            let nets = build_nets(&pts, 0.25, 0, 0, 3).unwrap();
            let cfg = RandomConfig::new(seed, (0, 3));
            let a = build_lattice(&nets, &cfg).unwrap();
            let b = build_lattice(&nets, &cfg).unwrap();
            prop_assert!(a.verify_partition().is_ok());
            prop_assert!(a.verify_nesting().is_ok());
            prop_assert!(a.same_as(&b));
        }
    }
}
