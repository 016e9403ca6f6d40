//! `b`-adapted martingale differences on a restricted lattice: stopping and
//! transit cubes, the decomposition `f = E f + sum_Q Delta_Q f`, the matrix
//! `A^s_{Q,R}` and the dyadic Carleson numbers `a_Q`.
//!
//! Cubes are keyed by `(level, index)`; two generations with the same atoms
//! are different cubes.

use std::collections::HashMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::Point;
use crate::lattice::{CubeId, RestrictedLattice};
use crate::measure::AtomicMeasure;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Debug)]
struct CubeData {
    id: CubeId,
    mass: f64,
    int_b: Complex64,
    transit: bool,
    children: Vec<usize>,
}

/// Stopping cubes and transit flags of `D_B(omega)` for a function `b`.
#[derive(Clone, Debug)]
pub struct BAdaptedSystem<'a> {
    pub lattice: &'a RestrictedLattice,
    pub mu: &'a AtomicMeasure,
    pub b: Vec<Complex64>,
    pub c_acc: f64,
    /// Atoms of `H`.
    pub h: Vec<bool>,
    /// Atoms of `T_omega`.
    pub t: Vec<bool>,
    pub stopping: Vec<CubeId>,
    cubes: Vec<CubeData>,
    index: HashMap<CubeId, usize>,
}

fn average(int: Complex64, mass: f64) -> Complex64 {
    if mass > 0.0 {
        int / mass
    } else {
        ZERO
    }
}

/// Top-down scan for the maximal cubes with `|∫_R b dmu| < c_acc mu(R)`, then
/// transit flags: a cube is transit when it carries positive mass outside `T ∪ H`.
pub fn compute_stopping_and_transit<'a>(
    lattice: &'a RestrictedLattice,
    mu: &'a AtomicMeasure,
    b: &[Complex64],
    c_acc: f64,
    h: &[bool],
) -> Result<BAdaptedSystem<'a>> {
    let n = mu.len();
    if lattice.lattice.points().len() != n || b.len() != n || h.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.len().min(h.len()).min(lattice.lattice.points().len()),
        });
    }
    if b.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(invalid("b must be finite"));
    }
    if !(c_acc > 0.0) {
        return Err(invalid("c_acc must be positive"));
    }
    let lat = &lattice.lattice;
    let w = mu.weights();
    let ids = lattice.all_cubes();
    let index: HashMap<CubeId, usize> = ids.iter().enumerate().map(|(i, q)| (*q, i)).collect();
    let mut cubes: Vec<CubeData> = ids
        .iter()
        .map(|&q| {
            let m = lat.members(q);
            CubeData {
                id: q,
                mass: m.iter().map(|&i| w[i]).sum(),
                int_b: m.iter().map(|&i| b[i] * w[i]).sum(),
                transit: false,
                children: Vec::new(),
            }
        })
        .collect();
    for c in cubes.iter_mut() {
        c.children = lat.children(c.id).iter().map(|q| index[q]).collect();
    }

    let mut stopping = Vec::new();
    let mut t = vec![false; n];
    let mut stack = vec![index[&lattice.top]];
    while let Some(i) = stack.pop() {
        let c = &cubes[i];
        if c.int_b.norm() < c_acc * c.mass {
            stopping.push(c.id);
            for &a in lat.members(c.id) {
                t[a] = true;
            }
        } else {
            stack.extend(c.children.iter().rev());
        }
    }
    stopping.sort();
    for c in cubes.iter_mut() {
        c.transit = lat.members(c.id).iter().any(|&a| w[a] > 0.0 && !t[a] && !h[a]);
    }
    if !cubes[index[&lattice.top]].transit {
        return Err(Error::Violation("top cube is not transit: T ∪ H covers B".into()));
    }
    for c in cubes.iter().filter(|c| c.transit) {
        if c.int_b.norm() < c_acc * c.mass {
            return Err(Error::Violation(format!("transit cube {:?} is not accretive", c.id)));
        }
    }
    Ok(BAdaptedSystem {
        lattice,
        mu,
        b: b.to_vec(),
        c_acc,
        h: h.to_vec(),
        t,
        stopping,
        cubes,
        index,
    })
}

impl BAdaptedSystem<'_> {
    pub fn is_transit(&self, q: CubeId) -> bool {
        self.index.get(&q).is_some_and(|&i| self.cubes[i].transit)
    }

    pub fn transit_cubes(&self) -> Vec<CubeId> {
        self.cubes.iter().filter(|c| c.transit).map(|c| c.id).collect()
    }

    pub fn mass(&self, q: CubeId) -> f64 {
        self.cubes[self.index[&q]].mass
    }

    /// `mu(T_omega ∪ H)`.
    pub fn exceptional_mass(&self) -> f64 {
        self.mu.mass_where(|i| self.t[i] || self.h[i])
    }
}

/// Per-cube record of a decomposition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeDifference {
    pub level: i32,
    pub index: usize,
    /// `<f>_Q / <b>_Q`.
    pub ratio: Complex64,
    /// `(level, index, coefficient)` of transit children; non-transit children
    /// and leaf atoms carry `f - ratio b` instead of a constant.
    pub transit_children: Vec<(i32, usize, Complex64)>,
    /// `|∫_Q Delta_Q f dmu|`.
    pub mean_residual: f64,
    /// `||Delta_Q f||_2^2`.
    pub norm2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MartingaleDecomposition {
    /// `E_{Q_B} f` at every atom (zero off `Q_B`).
    pub top: Vec<Complex64>,
    pub differences: Vec<CubeDifference>,
    /// `f - E f - sum Delta_Q f` at every atom of `Q_B`.
    pub reconstruction_error: f64,
    /// Largest `|∫_Q Delta_Q f| / (||f||_inf mu(Q))`.
    pub zero_mean_error: f64,
    pub f_norm2: f64,
    pub top_norm2: f64,
    pub sum_norm2: f64,
}

impl MartingaleDecomposition {
    /// `(||E f||^2 + sum ||Delta_Q f||^2) / ||f||^2`.
    pub fn norm_ratio(&self) -> f64 {
        (self.top_norm2 + self.sum_norm2) / self.f_norm2
    }
}

/// Martingale differences of `f`; transit cubes on the finest level treat
/// their atoms as children, for which both branches of the coefficient agree.
pub fn decompose(f: &[Complex64], sys: &BAdaptedSystem) -> Result<MartingaleDecomposition> {
    let n = sys.mu.len();
    if f.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: f.len(),
        });
    }
    let lat = &sys.lattice.lattice;
    let w = sys.mu.weights();
    let b = &sys.b;
    let ratio_of = |c: &CubeData| -> Result<Complex64> {
        let ib = average(c.int_b, c.mass);
        if ib == ZERO {
            return Err(Error::Violation(format!("transit cube {:?} has <b> = 0", c.id)));
        }
        let ifv: Complex64 = lat.members(c.id).iter().map(|&i| f[i] * w[i]).sum();
        Ok(average(ifv, c.mass) / ib)
    };

    let top_c = &sys.cubes[sys.index[&sys.lattice.top]];
    let top_ratio = ratio_of(top_c)?;
    let mut top = vec![ZERO; n];
    for &i in lat.members(top_c.id) {
        top[i] = top_ratio * b[i];
    }
    let transit: Vec<&CubeData> = sys.cubes.iter().filter(|c| c.transit).collect();
    let ratios: HashMap<CubeId, Complex64> = transit
        .iter()
        .map(|c| ratio_of(c).map(|r| (c.id, r)))
        .collect::<Result<_>>()?;

    let f_inf = f.iter().map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let diffs: Vec<(CubeDifference, Vec<(usize, Complex64)>)> = transit
        .par_iter()
        .map(|c| {
            let r = ratios[&c.id];
            let mut values: Vec<(usize, Complex64)> = Vec::new();
            let mut kids = Vec::new();
            if c.children.is_empty() {
                for &i in lat.members(c.id) {
                    values.push((i, f[i] - r * b[i]));
                }
            } else {
                for &k in &c.children {
                    let child = &sys.cubes[k];
                    if child.transit {
                        let coef = ratios[&child.id] - r;
                        kids.push((child.id.level, child.id.index, coef));
                        for &i in lat.members(child.id) {
                            values.push((i, coef * b[i]));
                        }
                    } else {
                        for &i in lat.members(child.id) {
                            values.push((i, f[i] - r * b[i]));
                        }
                    }
                }
            }
            let mean: Complex64 = values.iter().map(|(i, v)| v * w[*i]).sum();
            let norm2 = values.iter().map(|(i, v)| v.norm_sqr() * w[*i]).sum();
            (
                CubeDifference {
                    level: c.id.level,
                    index: c.id.index,
                    ratio: r,
                    transit_children: kids,
                    mean_residual: mean.norm(),
                    norm2,
                },
                values,
            )
        })
        .collect();

    let mut recon = top.clone();
    let mut zero_mean_error: f64 = 0.0;
    for (d, values) in &diffs {
        for (i, v) in values {
            recon[*i] += v;
        }
        let mass = sys.mass(CubeId {
            level: d.level,
            index: d.index,
        });
        if mass > 0.0 {
            zero_mean_error = zero_mean_error.max(d.mean_residual / (f_inf * mass));
        }
    }
    let reconstruction_error = lat
        .members(top_c.id)
        .iter()
        .map(|&i| (recon[i] - f[i]).norm())
        .fold(0.0, f64::max)
        / f_inf;
    let in_top = lat.members(top_c.id);
    let f_norm2 = in_top.iter().map(|&i| f[i].norm_sqr() * w[i]).sum();
    let top_norm2 = in_top.iter().map(|&i| top[i].norm_sqr() * w[i]).sum();
    let sum_norm2 = diffs.iter().map(|(d, _)| d.norm2).sum();
    Ok(MartingaleDecomposition {
        top,
        differences: diffs.into_iter().map(|(d, _)| d).collect(),
        reconstruction_error,
        zero_mean_error,
        f_norm2,
        top_norm2,
        sum_norm2,
    })
}

/// Side length, mass and atoms of a cube, enough to form `A^s_{Q,R}`.
#[derive(Clone, Debug)]
pub struct CubeGeom {
    pub side: f64,
    pub mass: f64,
    pub atoms: Vec<Point>,
}

impl CubeGeom {
    pub fn dist(&self, o: &CubeGeom) -> f64 {
        let mut best = f64::INFINITY;
        for p in &self.atoms {
            for q in &o.atoms {
                best = best.min(p.dist2(q));
            }
        }
        best.sqrt()
    }
}

/// Geometry of the transit cubes of a system.
pub fn transit_geometry(sys: &BAdaptedSystem) -> Vec<CubeGeom> {
    let lat = &sys.lattice.lattice;
    sys.cubes
        .iter()
        .filter(|c| c.transit)
        .map(|c| CubeGeom {
            side: lat.side(c.id.level),
            mass: c.mass,
            atoms: lat.members(c.id).iter().map(|&i| lat.points()[i]).collect(),
        })
        .collect()
}

/// `A^s_{Q,R} = l(Q)^{s/2} l(R)^{s/2} D^{-(m+s)} mu(Q)^{1/2} mu(R)^{1/2}`.
pub fn matrix_entry(q: &CubeGeom, r: &CubeGeom, m: f64, s: f64) -> f64 {
    let d = q.side + r.side + q.dist(r);
    (q.side * r.side).powf(s / 2.0) / d.powf(m + s) * (q.mass * r.mass).sqrt()
}

pub fn coefficient_matrix(rows: &[CubeGeom], cols: &[CubeGeom], m: f64, s: f64) -> Vec<Vec<f64>> {
    rows.par_iter()
        .map(|q| cols.iter().map(|r| matrix_entry(q, r, m, s)).collect())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub norm: f64,
    pub iterations: usize,
    pub residual: f64,
    pub rows: usize,
    pub cols: usize,
}

/// Operator norm of a nonnegative matrix by power iteration on `A^T A`.
pub fn power_iteration(a: &[Vec<f64>], tol: f64, max_iter: usize) -> Result<NormEstimate> {
    let rows = a.len();
    let cols = a.first().map_or(0, |r| r.len());
    if rows == 0 || cols == 0 {
        return Err(invalid("empty coefficient matrix"));
    }
    let mut v = vec![1.0 / (cols as f64).sqrt(); cols];
    let mut est = 0.0;
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let av: Vec<f64> = a.par_iter().map(|r| r.iter().zip(&v).map(|(x, y)| x * y).sum()).collect();
        let mut atav = vec![0.0; cols];
        for (r, s) in a.iter().zip(&av) {
            for (o, x) in atav.iter_mut().zip(r) {
                *o += x * s;
            }
        }
        let nrm = atav.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm == 0.0 {
            return Ok(NormEstimate {
                norm: 0.0,
                iterations: it,
                residual: 0.0,
                rows,
                cols,
            });
        }
        let new = nrm.sqrt();
        residual = (new - est).abs() / new;
        est = new;
        v = atav.into_iter().map(|x| x / nrm).collect();
        if residual < tol {
            return Ok(NormEstimate {
                norm: est,
                iterations: it,
                residual,
                rows,
                cols,
            });
        }
    }
    Err(Error::NoConvergence {
        residual,
        iterations: max_iter,
    })
}

/// `||A^s||` between two cube families.
pub fn matrix_norm_estimate(rows: &[CubeGeom], cols: &[CubeGeom], m: f64, s: f64) -> Result<NormEstimate> {
    if !(s > 0.0) {
        return Err(invalid("s must be positive"));
    }
    power_iteration(&coefficient_matrix(rows, cols, m, s), 1e-12, 10_000)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarlesonRow {
    pub level: i32,
    pub index: usize,
    /// `sum_{Q ⊂ Q0 transit} a_Q`.
    pub sum_a: f64,
    /// `∫_{Q0} (C~ b)^2 dmu` over the same windows.
    pub square_integral: f64,
    pub mass: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarlesonReport {
    pub rows: Vec<CarlesonRow>,
    /// `max sum a_Q / mu(Q0)`.
    pub constant: f64,
    /// `sum a_Q <= ∫_{Q0} (C~ b)^2` for every `Q0`.
    pub dominated: bool,
}

/// Carleson numbers `a_Q = sum_y mu_y sum_{R ∋ y, Q(R, r) = Q} ∫_{Γ_{delta l(R)}^{l(R)}(y)} |T~ b|^2 d^{2 alpha} dsigma`
/// with `R` ranging over transit cubes of the same lattice with `s < l(R) <= t`
/// and `Q(R, r)` the `r`-th ancestor. `window(atom, lo, hi)` returns the inner
/// cone integral of the suppressed operator at that atom.
pub fn carleson_check(
    sys: &BAdaptedSystem,
    r: u32,
    s: f64,
    t: f64,
    window: impl Fn(usize, f64, f64) -> f64 + Sync,
) -> CarlesonReport {
    let lat = &sys.lattice.lattice;
    let delta = lat.delta;
    let w = sys.mu.weights();
    let k0 = sys.lattice.k0;
    let kb = sys.lattice.k_bottom();
    let atoms: Vec<usize> = lat
        .members(sys.lattice.top)
        .iter()
        .copied()
        .filter(|&i| w[i] > 0.0)
        .collect();
    // per atom: (ancestor Q, contribution) for every admissible R ∋ y, and the full integral
    let per_atom: Vec<(usize, Vec<(CubeId, f64)>, f64)> = atoms
        .par_iter()
        .map(|&y| {
            let mut parts = Vec::new();
            let mut total = 0.0;
            for k in (k0 + r as i32)..=kb {
                let l = lat.side(k);
                if !(l > s && l <= t) {
                    continue;
                }
                let rc = lat.cube_of(y, k);
                let (lo, hi) = ((delta * l).max(s), l);
                let v = window(y, lo, hi) * w[y];
                total += v;
                if sys.is_transit(rc) {
                    parts.push((lat.cube_of(y, k - r as i32), v));
                }
            }
            (y, parts, total)
        })
        .collect();
    let mut a: HashMap<CubeId, f64> = HashMap::new();
    for (_, parts, _) in &per_atom {
        for (q, v) in parts {
            if sys.is_transit(*q) {
                *a.entry(*q).or_default() += v;
            }
        }
    }
    let rows: Vec<CarlesonRow> = sys
        .cubes
        .iter()
        .filter(|c| c.mass > 0.0)
        .map(|c| {
            let q0 = c.id;
            let sum_a: f64 = a
                .iter()
                .filter(|(q, _)| q.level >= q0.level && lat.cube_of(lat.members(**q)[0], q0.level) == q0)
                .map(|(_, v)| v)
                .sum();
            let square_integral: f64 = per_atom
                .iter()
                .filter(|(y, _, _)| lat.cube_of(*y, q0.level) == q0)
                .map(|(_, _, tot)| tot)
                .sum();
            CarlesonRow {
                level: q0.level,
                index: q0.index,
                sum_a,
                square_integral,
                mass: c.mass,
                ratio: sum_a / c.mass,
            }
        })
        .collect();
    let constant = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let dominated = rows.iter().all(|r| r.sum_a <= r.square_integral * (1.0 + 1e-12));
    CarlesonReport {
        rows,
        constant,
        dominated,
    }
}
