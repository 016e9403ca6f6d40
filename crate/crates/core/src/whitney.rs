//! Whitney-type covers of a relatively open `U ⊊ E` by disjoint regular balls.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::geometry::BallSpec;
use crate::lattice::{CubeId, DyadicLattice};
use crate::measure::{ball_mass, find_small_boundary_radius, has_small_boundary, AtomicMeasure};

#[derive(Clone, Copy, Debug, Serialize)]
pub struct WhitneyParams {
    pub a: f64,
    pub rho: f64,
    pub b: f64,
    pub kappa: f64,
}

impl WhitneyParams {
    pub fn c1(&self) -> f64 {
        self.rho / 8.0
    }

    pub fn c2(&self, delta: f64) -> f64 {
        (12.0 + self.rho) / (6.0 * delta)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct WhitneyBall {
    pub ball: BallSpec,
    pub cube: CubeId,
    pub doubling_ratio: f64,
    pub atoms: Vec<usize>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct WhitneyChecks {
    pub disjoint: bool,
    pub overlap_d0: usize,
    pub dilate_inside: bool,
    pub dilate_meets_complement: bool,
    pub regular: bool,
    pub mass_fraction: f64,
    pub mass_bound: bool,
}

impl WhitneyChecks {
    pub fn all_pass(&self) -> bool {
        self.disjoint
            && self.dilate_inside
            && self.dilate_meets_complement
            && self.regular
            && self.mass_bound
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct WhitneyCover {
    pub balls: Vec<WhitneyBall>,
    pub params: WhitneyParams,
    pub c1: f64,
    pub c2: f64,
    pub whitney_cubes: usize,
    pub doubling_cubes: usize,
    /// Mass of `U` not reached by any Whitney cube within the lattice depth.
    pub unreached_mass: f64,
    pub mass_u: f64,
    pub checks: WhitneyChecks,
}

fn ball_atoms(mu: &AtomicMeasure, ball: &BallSpec) -> Vec<usize> {
    (0..mu.len())
        .filter(|&i| ball.contains(&mu.points()[i]))
        .collect()
}

fn meets(a: &[usize], b: &[usize]) -> bool {
    // both sorted
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

/// Builds the cover following the maximal-cube construction and re-verifies
/// every property of the result. `in_u[i]` marks the atoms of `U`; `E` is the
/// atom set of the lattice.
pub fn whitney_cover(
    in_u: &[bool],
    mu: &AtomicMeasure,
    lattice: &DyadicLattice,
    params: WhitneyParams,
) -> Result<WhitneyCover> {
    let n = mu.len();
    if in_u.len() != n || lattice.points().len() != n {
        return Err(invalid("U, mu and the lattice must share the atom set"));
    }
    if !(params.a >= 3.0 && params.rho >= 16.0 * params.a) {
        return Err(invalid("need a >= 3 and rho >= 16 a"));
    }
    if in_u.iter().all(|&u| u) {
        return Err(invalid("U must be a proper subset of E"));
    }
    if !in_u.iter().any(|&u| u) {
        return Err(invalid("U is empty"));
    }
    let pts = mu.points();
    let comp: Vec<usize> = (0..n).filter(|&i| !in_u[i]).collect();
    let dist_comp: Vec<f64> = pts
        .iter()
        .map(|p| {
            comp.iter()
                .map(|&j| p.dist2(&pts[j]))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect();
    let delta = lattice.delta;
    let (_, c_big) = lattice.containment_constants();
    let c_rho = (f64::max(12.0, 2.0 * c_big) + params.rho) / delta;

    // maximal cubes with d(Q, E \ U) >= rho l(Q), coarse to fine
    let mut taken = vec![false; n];
    let mut cubes: Vec<CubeId> = Vec::new();
    for k in lattice.k_top..=lattice.k_bottom() {
        let l = lattice.side(k);
        for q in lattice.cubes(k) {
            let members = lattice.members(q);
            if members.is_empty() || taken[members[0]] {
                continue;
            }
            let d = members
                .iter()
                .map(|&i| dist_comp[i])
                .fold(f64::INFINITY, f64::min);
            if d >= params.rho * l {
                let dc = dist_comp[lattice_center_index(lattice, q)];
                if !(dc < c_rho * l) {
                    return Err(Error::Violation(format!(
                        "cube {q:?}: d(c_Q, E \\ U) = {dc} not below C(rho) l(Q) = {}",
                        c_rho * l
                    )));
                }
                for &i in members {
                    taken[i] = true;
                }
                cubes.push(q);
            }
        }
    }
    let mass_u = mu.mass_where(|i| in_u[i]);
    let unreached_mass = mu.mass_where(|i| in_u[i] && !taken[i]);

    // inflate to small-boundary closed balls, keep the doubling ones
    let mut candidates: Vec<WhitneyBall> = Vec::new();
    for &q in &cubes {
        let c = lattice.center(q);
        let r = find_small_boundary_radius(mu, &c, 6.0 * lattice.side(q.level), params.kappa, true)?;
        let ball = BallSpec::closed(c, r);
        let inner = ball_mass(mu, &ball);
        let outer = ball_mass(mu, &ball.dilate(params.a));
        if outer <= params.b * inner {
            candidates.push(WhitneyBall {
                ball,
                cube: q,
                doubling_ratio: if inner > 0.0 { outer / inner } else { f64::INFINITY },
                atoms: ball_atoms(mu, &ball),
            });
        }
    }
    let doubling_cubes = candidates.len();

    // greedy Vitali selection by decreasing radius, ties by construction order
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&i, &j| candidates[j].ball.radius.total_cmp(&candidates[i].ball.radius).then(i.cmp(&j)));
    let mut chosen: Vec<usize> = Vec::new();
    for i in order {
        if chosen.iter().all(|&j| !meets(&candidates[i].atoms, &candidates[j].atoms)) {
            chosen.push(i);
        }
    }
    chosen.sort_unstable();
    let balls: Vec<WhitneyBall> = chosen.into_iter().map(|i| candidates[i].clone()).collect();

    let required = mass_u / (2.0 * params.b);
    if balls.is_empty() {
        return Err(Error::EmptyCover {
            covered: 0.0,
            required,
        });
    }
    let mut cover = WhitneyCover {
        balls,
        params,
        c1: params.c1(),
        c2: params.c2(delta),
        whitney_cubes: cubes.len(),
        doubling_cubes,
        unreached_mass,
        mass_u,
        checks: WhitneyChecks::default(),
    };
    cover.checks = verify_cover(&cover, in_u, mu);
    Ok(cover)
}

fn lattice_center_index(lattice: &DyadicLattice, q: CubeId) -> usize {
    let c = lattice.center(q);
    lattice
        .members(q)
        .iter()
        .copied()
        .find(|&i| lattice.points()[i] == c)
        .expect("a cube contains its reference point")
}

/// Direct recomputation of the five cover properties.
pub fn verify_cover(cover: &WhitneyCover, in_u: &[bool], mu: &AtomicMeasure) -> WhitneyChecks {
    let balls = &cover.balls;
    let atoms: Vec<Vec<usize>> = balls.iter().map(|b| ball_atoms(mu, &b.ball)).collect();
    let disjoint = (0..balls.len())
        .all(|i| (i + 1..balls.len()).all(|j| !meets(&atoms[i], &atoms[j])));
    let half: Vec<Vec<usize>> = balls
        .iter()
        .map(|b| ball_atoms(mu, &b.ball.dilate(cover.c1 / 2.0)))
        .collect();
    let overlap_d0 = (0..balls.len())
        .map(|i| (0..balls.len()).filter(|&j| meets(&half[i], &half[j])).count())
        .max()
        .unwrap_or(0);
    let dilate_inside = balls
        .iter()
        .all(|b| ball_atoms(mu, &b.ball.dilate(cover.c1)).iter().all(|&i| in_u[i]));
    let dilate_meets_complement = balls
        .iter()
        .all(|b| ball_atoms(mu, &b.ball.dilate(cover.c2)).iter().any(|&i| !in_u[i]));
    let p = cover.params;
    let regular = balls.iter().all(|b| {
        ball_mass(mu, &b.ball.dilate(p.a)) <= p.b * ball_mass(mu, &b.ball)
            && has_small_boundary(mu, &b.ball, p.kappa)
    });
    let mut covered = vec![false; mu.len()];
    for a in &atoms {
        for &i in a {
            covered[i] = true;
        }
    }
    let mass = mu.mass_where(|i| covered[i]);
    let mass_fraction = if cover.mass_u > 0.0 { mass / cover.mass_u } else { 1.0 };
    WhitneyChecks {
        disjoint,
        overlap_d0,
        dilate_inside,
        dilate_meets_complement,
        regular,
        mass_fraction,
        mass_bound: mass >= cover.mass_u / (2.0 * p.b),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::lattice::{build_lattice, build_nets, RandomConfig};

    fn p1(x: f64) -> Point {
        Point::new(&[x]).unwrap()
    }

    fn params() -> WhitneyParams {
        WhitneyParams {
            a: 10.0,
            rho: 160.0,
            b: 100.0,
            kappa: 100.0,
        }
    }

    #[test]
    fn paper_constants() {
        let p = params();
        assert_eq!(p.c1(), 20.0);
        assert!((p.c2(1.0 / 1000.0) - 86000.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_input() {
        let pts = vec![p1(0.0), p1(1.0)];
        let mu = AtomicMeasure::uniform(pts.clone(), 1.0).unwrap();
        let nets = build_nets(&pts, 0.25, 0, -5, 0).unwrap();
        let lat = build_lattice(&nets, &RandomConfig::frozen()).unwrap();
        assert!(whitney_cover(&[true, true], &mu, &lat, params()).is_err());
        let bad = WhitneyParams { rho: 100.0, ..params() };
        assert!(whitney_cover(&[true, false], &mu, &lat, bad).is_err());
    }

    #[test]
    fn isolated_atom_gets_one_ball() {
        let mut pts: Vec<Point> = (0..50).map(|i| p1(i as f64 * 1e-3)).collect();
        pts.push(p1(100.0));
        let n = pts.len();
        let mu = AtomicMeasure::uniform(pts.clone(), 1.0).unwrap();
        let nets = build_nets(&pts, 0.25, 0, -8, 6).unwrap();
        let lat = build_lattice(&nets, &RandomConfig::frozen()).unwrap();
        let in_u: Vec<bool> = (0..n).map(|i| i == n - 1).collect();
        let cover = whitney_cover(&in_u, &mu, &lat, params()).unwrap();
        assert_eq!(cover.balls.len(), 1);
        assert_eq!(cover.balls[0].atoms, vec![n - 1]);
        assert!(cover.checks.all_pass(), "{:?}", cover.checks);
    }

    #[test]
    fn middle_third_of_segment() {
        let n = 2001;
        let pts: Vec<Point> = (0..n).map(|i| p1(i as f64 / (n - 1) as f64)).collect();
        let mu = AtomicMeasure::uniform(pts.clone(), 1.0).unwrap();
        let nets = build_nets(&pts, 0.25, 1000, -4, 6).unwrap();
        let lat = build_lattice(&nets, &RandomConfig::new(7, (-4, 6))).unwrap();
        let in_u: Vec<bool> = pts
            .iter()
            .map(|p| p.get(0) > 1.0 / 3.0 && p.get(0) < 2.0 / 3.0)
            .collect();
        let cover = whitney_cover(&in_u, &mu, &lat, params()).unwrap();
        assert!(cover.checks.all_pass(), "{:?}", cover.checks);
        assert!(cover.checks.mass_fraction >= 1.0 / 200.0);
        // exhaustive recheck of disjointness and containment from raw coordinates
        for (i, a) in cover.balls.iter().enumerate() {
            for b in &cover.balls[i + 1..] {
                assert!(pts.iter().all(|p| !(a.ball.contains(p) && b.ball.contains(p))));
            }
            for (k, p) in pts.iter().enumerate() {
                if a.ball.center.dist(p) <= 20.0 * a.ball.radius {
                    assert!(in_u[k]);
                }
            }
        }
    }
}
