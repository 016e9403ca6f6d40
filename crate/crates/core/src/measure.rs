//! Atomic measures on `E`: ball masses, order-`m` constants, doubling and
//! small-boundary tests, and the centred and radial maximal operators.
//!
//! Everything here is exact: each quantity is a step function of the radius
//! whose jumps sit at atom distances, so suprema reduce to enumerations.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{contains_at, BallSpec, ClosedSet, Point};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomicMeasure {
    points: Vec<Point>,
    weights: Vec<f64>,
    #[serde(skip)]
    total: f64,
}

impl AtomicMeasure {
    pub fn new(points: Vec<Point>, weights: Vec<f64>) -> Result<AtomicMeasure> {
        if points.len() != weights.len() {
            return Err(invalid("points and weights differ in length"));
        }
        if let Some(p) = points.first() {
            let n = p.dim();
            if let Some(q) = points.iter().find(|q| q.dim() != n) {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: q.dim(),
                });
            }
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(invalid("weights must be finite and nonnegative"));
        }
        let total = weights.iter().sum();
        Ok(AtomicMeasure {
            points,
            weights,
            total,
        })
    }

    /// Equal weights `mass / N` on the given points.
    pub fn uniform(points: Vec<Point>, mass: f64) -> Result<AtomicMeasure> {
        let w = mass / points.len().max(1) as f64;
        let n = points.len();
        AtomicMeasure::new(points, vec![w; n])
    }

    pub fn zero(points: Vec<Point>) -> AtomicMeasure {
        let n = points.len();
        AtomicMeasure::new(points, vec![0.0; n]).expect("zero measure is valid")
    }

    /// Recomputes the cached total after deserialization.
    pub fn revalidate(self) -> Result<AtomicMeasure> {
        AtomicMeasure::new(self.points, self.weights)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, |p| p.dim())
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.total
    }

    /// Checks that every atom lies within `tol` of `E`.
    pub fn check_support(&self, e: &ClosedSet, tol: f64) -> Result<()> {
        for p in &self.points {
            let d = e.distance(p)?;
            if d > tol {
                return Err(Error::NotInSet { distance: d });
            }
        }
        Ok(())
    }

    /// Same atoms, weights zeroed where `keep` is false.
    pub fn restricted(&self, keep: impl Fn(usize) -> bool) -> AtomicMeasure {
        let w = (0..self.len())
            .map(|i| if keep(i) { self.weights[i] } else { 0.0 })
            .collect();
        AtomicMeasure::new(self.points.clone(), w).expect("restriction stays valid")
    }

    /// Multiplies each weight by `f[i]` (absolute values are taken).
    pub fn reweighted(&self, f: &[f64]) -> AtomicMeasure {
        let w = self.weights.iter().zip(f).map(|(w, f)| w * f.abs()).collect();
        AtomicMeasure::new(self.points.clone(), w).expect("reweighting stays valid")
    }

    pub fn mass_of(&self, idx: impl IntoIterator<Item = usize>) -> f64 {
        idx.into_iter().map(|i| self.weights[i]).sum()
    }

    pub fn mass_where(&self, pred: impl Fn(usize) -> bool) -> f64 {
        (0..self.len())
            .filter(|&i| pred(i))
            .map(|i| self.weights[i])
            .sum()
    }

    pub fn ball_mass(&self, b: &BallSpec) -> f64 {
        ball_mass(self, b)
    }

    pub fn to_complex(&self) -> ComplexAtomicMeasure {
        ComplexAtomicMeasure {
            points: self.points.clone(),
            weights: self.weights.iter().map(|&w| Complex64::new(w, 0.0)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexAtomicMeasure {
    points: Vec<Point>,
    weights: Vec<Complex64>,
}

impl ComplexAtomicMeasure {
    pub fn new(points: Vec<Point>, weights: Vec<Complex64>) -> Result<ComplexAtomicMeasure> {
        if points.len() != weights.len() {
            return Err(invalid("points and weights differ in length"));
        }
        if weights.iter().any(|w| !(w.re.is_finite() && w.im.is_finite())) {
            return Err(invalid("non-finite complex weight"));
        }
        Ok(ComplexAtomicMeasure { points, weights })
    }

    /// The measure `f mu`.
    pub fn with_density(mu: &AtomicMeasure, f: &[Complex64]) -> ComplexAtomicMeasure {
        ComplexAtomicMeasure {
            points: mu.points.clone(),
            weights: mu.weights.iter().zip(f).map(|(w, f)| f * w).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn weights(&self) -> &[Complex64] {
        &self.weights
    }

    pub fn total_variation(&self) -> AtomicMeasure {
        let w = self.weights.iter().map(|w| w.norm()).collect();
        AtomicMeasure::new(self.points.clone(), w).expect("moduli are valid weights")
    }

    /// The polar function `b` with `nu = b |nu|`; set to 1 on zero atoms.
    pub fn polar(&self) -> Vec<Complex64> {
        self.weights
            .iter()
            .map(|w| {
                let r = w.norm();
                if r > 0.0 {
                    w / r
                } else {
                    Complex64::new(1.0, 0.0)
                }
            })
            .collect()
    }

    pub fn integral_over(&self, idx: impl IntoIterator<Item = usize>) -> Complex64 {
        idx.into_iter().map(|i| self.weights[i]).sum()
    }

    pub fn total(&self) -> Complex64 {
        self.weights.iter().sum()
    }
}

pub fn ball_mass(mu: &AtomicMeasure, b: &BallSpec) -> f64 {
    mu.points
        .iter()
        .zip(&mu.weights)
        .filter(|(p, _)| b.contains(p))
        .map(|(_, w)| w)
        .sum()
}

/// Distinct distances from `y` to the atoms of the listed measures, with the
/// mass of each measure at that exact distance, sorted ascending.
fn distance_profile(y: &Point, measures: &[&AtomicMeasure]) -> Vec<(f64, Vec<f64>)> {
    let k = measures.len();
    let mut entries: Vec<(f64, usize, f64)> = Vec::new();
    for (j, mu) in measures.iter().enumerate() {
        for (p, w) in mu.points.iter().zip(&mu.weights) {
            entries.push((y.dist(p), j, *w));
        }
    }
    entries.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, Vec<f64>)> = Vec::new();
    for (d, j, w) in entries {
        match out.last_mut() {
            Some((dl, masses)) if *dl == d => masses[j] += w,
            _ => {
                let mut masses = vec![0.0; k];
                masses[j] = w;
                out.push((d, masses));
            }
        }
    }
    out
}

/// Cumulative closed-ball masses at each distinct distance.
fn cumulative(profile: &[(f64, Vec<f64>)]) -> Vec<(f64, Vec<f64>)> {
    let mut acc: Vec<f64> = vec![0.0; profile.first().map_or(0, |p| p.1.len())];
    profile
        .iter()
        .map(|(d, m)| {
            for (a, v) in acc.iter_mut().zip(m) {
                *a += v;
            }
            (*d, acc.clone())
        })
        .collect()
}

/// `sup_{r >= floor, r > 0} nu(B(y, r)) / r^m` for open balls.
pub fn maximal_radial_floor(nu: &AtomicMeasure, y: &Point, m: f64, floor: f64) -> f64 {
    let cum = cumulative(&distance_profile(y, &[nu]));
    let mut best: f64 = 0.0;
    for (k, (d, mass)) in cum.iter().enumerate() {
        let n = mass[0];
        if n <= 0.0 {
            continue;
        }
        let next = cum.get(k + 1).map_or(f64::INFINITY, |c| c.0);
        let v = if floor <= *d {
            if *d == 0.0 {
                f64::INFINITY
            } else {
                n / d.powf(m)
            }
        } else if floor <= next {
            n / floor.powf(m)
        } else {
            continue;
        };
        best = best.max(v);
    }
    best
}

/// The radial maximal function `M^m nu(y) = sup_r |nu|(B(y, r)) / r^m`.
pub fn maximal_radial(nu: &AtomicMeasure, y: &Point, m: f64) -> f64 {
    maximal_radial_floor(nu, y, m, 0.0)
}

/// The centred maximal function `M_mu nu(y) = sup_r |nu|(B(y, r)) / mu(B(y, r))`
/// over radii with `mu(B(y, r)) > 0`.
pub fn maximal_centred(mu: &AtomicMeasure, nu: &AtomicMeasure, y: &Point) -> f64 {
    cumulative(&distance_profile(y, &[mu, nu]))
        .iter()
        .filter(|(_, m)| m[0] > 0.0)
        .map(|(_, m)| m[1] / m[0])
        .fold(0.0, f64::max)
}

/// `M_mu (f mu)` at every atom of `mu`.
pub fn maximal_centred_density(mu: &AtomicMeasure, f: &[f64]) -> Vec<f64> {
    let nu = mu.reweighted(f);
    mu.points
        .iter()
        .map(|y| maximal_centred(mu, &nu, y))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrderReport {
    /// Exact supremum over centers in `supp mu` and all radii; infinite when any atom is positive.
    pub sup: f64,
    /// Supremum over radii at least `min_radius`.
    pub scale_sup: f64,
    /// Smallest positive distance between atoms of positive weight.
    pub min_radius: f64,
    pub argmax_atom: Option<usize>,
}

/// Order-`m` constant of `mu` with centers on `supp mu`.
pub fn order_m_constant(mu: &AtomicMeasure, m: f64) -> Result<OrderReport> {
    if !(m > 0.0) {
        return Err(invalid("order m must be positive"));
    }
    let support: Vec<usize> = (0..mu.len()).filter(|&i| mu.weights[i] > 0.0).collect();
    if support.is_empty() {
        return Ok(OrderReport {
            sup: 0.0,
            scale_sup: 0.0,
            min_radius: 0.0,
            argmax_atom: None,
        });
    }
    let mut min_radius = f64::INFINITY;
    for (a, &i) in support.iter().enumerate() {
        for &j in &support[a + 1..] {
            min_radius = min_radius.min(mu.points[i].dist(&mu.points[j]));
        }
    }
    if !min_radius.is_finite() {
        // a single atom: every radius is "interesting", report the unit scale
        min_radius = 1.0;
    }
    let centers: Vec<Point> = support.iter().map(|&i| mu.points[i]).collect();
    let (scale_sup, arg) = order_constant_over(mu, m, &centers, min_radius);
    Ok(OrderReport {
        sup: f64::INFINITY,
        scale_sup,
        min_radius,
        argmax_atom: arg.map(|a| support[a]),
    })
}

/// `sup_{c in centers, r >= floor} mu(B(c, r)) / r^m` and the maximizing center index.
pub fn order_constant_over(
    mu: &AtomicMeasure,
    m: f64,
    centers: &[Point],
    floor: f64,
) -> (f64, Option<usize>) {
    let mut best = (0.0, None);
    for (i, c) in centers.iter().enumerate() {
        let v = maximal_radial_floor(mu, c, m, floor);
        if v > best.0 {
            best = (v, Some(i));
        }
    }
    best
}

/// `mu(a B) <= b mu(B)`, with both balls sharing the closure flag of `ball`.
pub fn is_doubling(mu: &AtomicMeasure, ball: &BallSpec, a: f64, b: f64) -> bool {
    ball_mass(mu, &ball.dilate(a)) <= b * ball_mass(mu, ball)
}

/// The worst jump point of the small-boundary condition, if any violates it.
fn small_boundary_violation(mu: &AtomicMeasure, ball: &BallSpec, kappa: f64) -> Option<f64> {
    let r = ball.radius;
    let m3 = ball_mass(mu, &ball.dilate(3.0));
    let mut jumps: Vec<(f64, f64)> = mu
        .points
        .iter()
        .zip(&mu.weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(p, w)| ((ball.center.dist(p) - r).abs() / r, *w))
        .filter(|(s, _)| *s < 1.0)
        .collect();
    jumps.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut acc = 0.0;
    let mut i = 0;
    while i < jumps.len() {
        let s = jumps[i].0;
        while i < jumps.len() && jumps[i].0 == s {
            acc += jumps[i].1;
            i += 1;
        }
        if acc > kappa * s * m3 {
            return Some(s);
        }
    }
    None
}

/// Exact test of `mu({r(1-s) < |x - x0| < r(1+s)}) <= kappa s mu(3B)` for all `s` in `[0, 1]`.
pub fn has_small_boundary(mu: &AtomicMeasure, ball: &BallSpec, kappa: f64) -> bool {
    small_boundary_violation(mu, ball, kappa).is_none()
}

/// Smallest radius in a scan of `[r, 1.2 r]` whose ball has `kappa`-small boundary.
/// The scan is a uniform grid refined with midpoints between consecutive atom distances.
pub fn find_small_boundary_radius(
    mu: &AtomicMeasure,
    center: &Point,
    r: f64,
    kappa: f64,
    closed: bool,
) -> Result<f64> {
    if !(r > 0.0) {
        return Err(invalid("radius must be positive"));
    }
    let (lo, hi) = (r, 1.2 * r);
    let mut cands: Vec<f64> = (0..=1000).map(|i| lo + (hi - lo) * i as f64 / 1000.0).collect();
    let mut ds: Vec<f64> = mu
        .points
        .iter()
        .map(|p| center.dist(p))
        .filter(|d| *d >= lo && *d <= hi)
        .collect();
    ds.sort_by(f64::total_cmp);
    ds.dedup();
    cands.extend(ds.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    cands.sort_by(f64::total_cmp);
    cands
        .into_iter()
        .find(|&rr| {
            let ball = BallSpec {
                center: *center,
                radius: rr,
                closed,
                restricted: true,
            };
            has_small_boundary(mu, &ball, kappa)
        })
        .ok_or(Error::NotFound { lo, hi })
}

/// `sup_{lambda > 0} lambda^s mu({v > lambda})` for values `v_i` carried by masses `w_i`.
pub fn weak_type_sup(values: &[f64], masses: &[f64], s: f64) -> f64 {
    let mut pairs: Vec<(f64, f64)> = values
        .iter()
        .zip(masses)
        .filter(|(v, _)| **v > 0.0)
        .map(|(v, w)| (*v, *w))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut acc = 0.0;
    let mut best: f64 = 0.0;
    let mut i = 0;
    while i < pairs.len() {
        let v = pairs[i].0;
        while i < pairs.len() && pairs[i].0 == v {
            acc += pairs[i].1;
            i += 1;
        }
        best = best.max(v.powf(s) * acc);
    }
    best
}

/// `max_{lambda in grid} lambda^s mu({v > lambda})`.
pub fn weak_type_on_grid(values: &[f64], masses: &[f64], s: f64, grid: &[f64]) -> f64 {
    grid.iter()
        .map(|&l| {
            let m: f64 = values
                .iter()
                .zip(masses)
                .filter(|(v, _)| **v > l)
                .map(|(_, w)| w)
                .sum();
            l.powf(s) * m
        })
        .fold(0.0, f64::max)
}

/// Mass in the open annulus `{r(1 - s) < |x - x0| < r(1 + s)}`.
pub fn annulus_mass(mu: &AtomicMeasure, center: &Point, r: f64, s: f64) -> f64 {
    mu.points
        .iter()
        .zip(&mu.weights)
        .filter(|(p, _)| {
            let d = center.dist(p);
            !contains_at(d, r * (1.0 - s), true) && contains_at(d, r * (1.0 + s), false)
        })
        .map(|(_, w)| w)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::{prop_assert, proptest};
    use rand::Rng;

    fn p(c: &[f64]) -> Point {
        Point::new(c).unwrap()
    }

    fn grid(n: usize) -> AtomicMeasure {
        let pts = (0..n)
            .map(|i| p(&[i as f64 / (n - 1) as f64]))
            .collect::<Vec<_>>();
        AtomicMeasure::uniform(pts, 1.0).unwrap()
    }

    fn dyadic_measure(seed: u64, n: usize, dim: usize) -> AtomicMeasure {
        let mut rng = stream(seed, &[]);
        let pts = (0..n)
            .map(|_| {
                let c: Vec<f64> = (0..dim).map(|_| rng.random_range(0..64) as f64 / 64.0).collect();
                p(&c)
            })
            .collect();
        let w = (0..n).map(|_| rng.random_range(0..16) as f64 / 16.0).collect();
        AtomicMeasure::new(pts, w).unwrap()
    }

    #[test]
    fn ball_mass_examples() {
        let mu = AtomicMeasure::new(vec![p(&[0.0, 0.0])], vec![1.0]).unwrap();
        assert_eq!(ball_mass(&mu, &BallSpec::open(p(&[0.0, 0.0]), 1.0)), 1.0);
        let nu = AtomicMeasure::new(vec![p(&[1.0, 0.0])], vec![1.0]).unwrap();
        assert_eq!(ball_mass(&nu, &BallSpec::open(p(&[0.0, 0.0]), 1.0)), 0.0);
        assert_eq!(ball_mass(&nu, &BallSpec::closed(p(&[0.0, 0.0]), 1.0)), 1.0);
    }

    #[test]
    fn negative_weight_rejected() {
        assert!(AtomicMeasure::new(vec![p(&[0.0])], vec![-1.0]).is_err());
    }

    #[test]
    fn order_constant_examples() {
        let single = AtomicMeasure::new(vec![p(&[0.0])], vec![1.0]).unwrap();
        let rep = order_m_constant(&single, 1.0).unwrap();
        assert!(rep.sup.is_infinite());
        assert!(order_m_constant(&single, 0.0).is_err());
        let zero = AtomicMeasure::zero(vec![p(&[0.0])]);
        assert_eq!(order_m_constant(&zero, 1.0).unwrap().sup, 0.0);
        // interior atom, radius just above the spacing h: three atoms of mass 1/N over h
        for n in [11usize, 51, 101] {
            let rep = order_m_constant(&grid(n), 1.0).unwrap();
            let expect = 3.0 * (n - 1) as f64 / n as f64;
            assert!((rep.scale_sup - expect).abs() < 1e-12, "{n}: {}", rep.scale_sup);
        }
    }

    #[test]
    fn doubling_examples() {
        let mu = grid(1000);
        assert!(is_doubling(&mu, &BallSpec::closed(p(&[0.5]), 0.1), 10.0, 12.0));
        let far = AtomicMeasure::new(vec![p(&[5.0])], vec![1.0]).unwrap();
        assert!(!is_doubling(&far, &BallSpec::closed(p(&[0.0]), 1.0), 10.0, 100.0));
        let at = AtomicMeasure::new(vec![p(&[0.0])], vec![1.0]).unwrap();
        assert!(is_doubling(&at, &BallSpec::open(p(&[0.0]), 1.0), 1.0, 1.0));
    }

    #[test]
    fn small_boundary_examples() {
        let mu = AtomicMeasure::new(vec![p(&[0.0, 0.0]), p(&[1.0, 0.0])], vec![1.0, 1.0]).unwrap();
        let b = BallSpec::open(p(&[0.0, 0.0]), 1.0);
        assert!(!has_small_boundary(&mu, &b, 0.5));
        let inner = AtomicMeasure::new(vec![p(&[0.0, 0.0])], vec![1.0]).unwrap();
        assert!(has_small_boundary(&inner, &b, 1e-9));
    }

    /// Direct evaluation of the annulus inequality at every jump point, one-sided from above.
    fn small_boundary_oracle(mu: &AtomicMeasure, ball: &BallSpec, kappa: f64) -> bool {
        let m3: f64 = (0..mu.len())
            .filter(|&i| ball.dilate(3.0).contains(&mu.points()[i]))
            .map(|i| mu.weights()[i])
            .sum();
        for i in 0..mu.len() {
            let sj = (ball.center.dist(&mu.points()[i]) - ball.radius).abs() / ball.radius;
            if sj >= 1.0 || mu.weights()[i] == 0.0 {
                continue;
            }
            let lhs: f64 = (0..mu.len())
                .filter(|&k| {
                    (ball.center.dist(&mu.points()[k]) - ball.radius).abs() / ball.radius <= sj
                })
                .map(|k| mu.weights()[k])
                .sum();
            if lhs > kappa * sj * m3 {
                return false;
            }
        }
        true
    }

    #[test]
    fn small_boundary_matches_jump_oracle_on_segment() {
        let mu = grid(400);
        for (c, r) in [(0.5, 0.1), (0.5, 0.2), (0.3, 0.05), (0.5, 0.1003)] {
            let b = BallSpec::closed(p(&[c]), r);
            assert_eq!(has_small_boundary(&mu, &b, 50.0), small_boundary_oracle(&mu, &b, 50.0));
        }
        let b = BallSpec::closed(p(&[0.5]), 0.1 + 0.5 / 399.0);
        assert!(has_small_boundary(&mu, &b, 50.0));
    }

    #[test]
    fn small_boundary_radius_search() {
        let mu = AtomicMeasure::new(vec![p(&[0.0, 0.0])], vec![1.0]).unwrap();
        let r = find_small_boundary_radius(&mu, &p(&[0.0, 0.0]), 1.0, 1.0, true).unwrap();
        assert_eq!(r, 1.0);
        assert!(find_small_boundary_radius(&mu, &p(&[0.0, 0.0]), 0.0, 1.0, true).is_err());

        let seg = grid(2000);
        let c = p(&[0.5]);
        let found = find_small_boundary_radius(&seg, &c, 0.1, 100.0, true).unwrap();
        assert!((0.1..=0.12).contains(&found));
        assert!(small_boundary_oracle(&seg, &BallSpec::closed(c, found), 100.0));
        let dense_first = (0..=10_000)
            .map(|i| 0.1 + 0.02 * i as f64 / 10_000.0)
            .find(|&rr| small_boundary_oracle(&seg, &BallSpec::closed(c, rr), 100.0));
        assert!(dense_first.is_some());

        // mass on the sphere of radius 1.1 r
        let ring: Vec<Point> = (0..64)
            .map(|i| {
                let t = std::f64::consts::TAU * i as f64 / 64.0;
                p(&[1.1 * t.cos(), 1.1 * t.sin()])
            })
            .collect();
        let ring = AtomicMeasure::uniform(ring, 1.0).unwrap();
        let o = p(&[0.0, 0.0]);
        assert!(matches!(
            find_small_boundary_radius(&ring, &o, 1.0, 0.01, true),
            Err(Error::NotFound { .. })
        ));
        for i in 0..=10_000 {
            let rr = 1.0 + 0.2 * i as f64 / 10_000.0;
            assert!(!small_boundary_oracle(&ring, &BallSpec::closed(o, rr), 0.01));
        }
    }

    #[test]
    fn maximal_examples() {
        let mu = grid(101);
        let ones = vec![1.0; mu.len()];
        for v in maximal_centred_density(&mu, &ones) {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let z = p(&[0.3, 0.4]);
        let delta = AtomicMeasure::new(vec![z], vec![1.0]).unwrap();
        let y = p(&[0.0, 0.0]);
        assert!((maximal_radial(&delta, &y, 1.0) - 2.0).abs() < 1e-15);
        assert!((maximal_radial(&delta, &y, 2.0) - 4.0).abs() < 1e-14);
        assert!(maximal_radial(&delta, &z, 1.0).is_infinite());
    }

    /// Brute force over closed balls at every atom distance, summed in index order.
    fn centred_oracle(mu: &AtomicMeasure, nu: &AtomicMeasure, y: &Point) -> f64 {
        let mut best: f64 = 0.0;
        let radii: Vec<f64> = mu.points().iter().chain(nu.points()).map(|q| y.dist(q)).collect();
        for &r in &radii {
            let b = BallSpec::closed(*y, r);
            let (a, c) = (ball_mass(mu, &b), ball_mass(nu, &b));
            if a > 0.0 {
                best = best.max(c / a);
            }
        }
        best
    }

    fn radial_oracle(nu: &AtomicMeasure, y: &Point, m: f64) -> f64 {
        let mut best: f64 = 0.0;
        for q in nu.points() {
            let r = y.dist(q);
            let mass = ball_mass(nu, &BallSpec::closed(*y, r));
            if mass > 0.0 {
                best = best.max(if r == 0.0 { f64::INFINITY } else { mass / r.powf(m) });
            }
        }
        best
    }

    #[test]
    fn maximal_operators_match_brute_force() {
        for seed in 0..5 {
            let mu = dyadic_measure(seed, 200, 2);
            let nu = dyadic_measure(seed + 100, 200, 2);
            for y in mu.points().iter().take(30) {
                assert_eq!(maximal_centred(&mu, &nu, y), centred_oracle(&mu, &nu, y));
                assert_eq!(maximal_radial(&nu, y, 1.0), radial_oracle(&nu, y, 1.0));
            }
        }
    }

    #[test]
    fn radial_dominated_by_centred_times_order_constant() {
        let mu = grid(200);
        let rep = order_m_constant(&mu, 1.0).unwrap();
        let mut rng = stream(9, &[]);
        let f: Vec<f64> = (0..mu.len()).map(|_| rng.random::<f64>()).collect();
        let nu = mu.reweighted(&f);
        for y in mu.points() {
            let radial = maximal_radial_floor(&nu, y, 1.0, rep.min_radius);
            let centred = maximal_centred(&mu, &nu, y);
            assert!(radial <= rep.scale_sup * centred * (1.0 + 1e-12));
        }
    }

    #[test]
    fn weak_type_sup_is_exact() {
        let vals = [3.0, 1.0, 2.0, 2.0];
        let masses = [1.0, 1.0, 1.0, 1.0];
        // lambda -> 2-: 2 * 3 = 6 ; lambda -> 3-: 3 ; lambda -> 1-: 4
        assert_eq!(weak_type_sup(&vals, &masses, 1.0), 6.0);
        let grid: Vec<f64> = (1..3000).map(|i| i as f64 * 1e-3).collect();
        assert!(weak_type_on_grid(&vals, &masses, 1.0, &grid) <= 6.0);
        assert!(weak_type_on_grid(&vals, &masses, 1.0, &grid) > 5.99);
    }

    #[test]
    fn centred_maximal_weak_type_is_bounded() {
        let mu = grid(300);
        let mut consts = Vec::new();
        for seed in 0..5 {
            let mut rng = stream(seed, &[1]);
            let f: Vec<f64> = (0..mu.len())
                .map(|_| if rng.random::<f64>() < 0.1 { 1.0 } else { 0.0 })
                .collect();
            let nu = mu.reweighted(&f);
            let vals = maximal_centred_density(&mu, &f);
            consts.push(weak_type_sup(&vals, mu.weights(), 1.0) / nu.total_mass());
        }
        assert!(consts.iter().all(|c| *c <= 3.0), "{consts:?}");
    }

    proptest! {
        #[test]
        fn open_ball_mass_monotone(r1 in 0.01f64..1.0, dr in 0.0f64..1.0, seed in 0u64..20) {
            let mu = dyadic_measure(seed, 50, 2);
            let c = mu.points()[0];
            prop_assert!(
                ball_mass(&mu, &BallSpec::open(c, r1)) <= ball_mass(&mu, &BallSpec::open(c, r1 + dr))
            );
            prop_assert!(
                ball_mass(&mu, &BallSpec::open(c, r1)) <= ball_mass(&mu, &BallSpec::closed(c, r1))
            );
        }

        #[test]
        fn annulus_matches_jump_representation(s in 0.0f64..1.0, seed in 0u64..20) {
            let mu = dyadic_measure(seed, 50, 2);
            let b = BallSpec::open(mu.points()[1], 0.3);
            let lhs = annulus_mass(&mu, &b.center, b.radius, s);
            let m3 = ball_mass(&mu, &b.dilate(3.0));
            if has_small_boundary(&mu, &b, 2.0) {
                prop_assert!(lhs <= 2.0 * s * m3 + 1e-12);
            }
        }
    }
}
