//! Ambient Euclidean geometry: points, the closed set `E`, balls and cones.

use std::ops::{Add, Mul, Sub};

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Error, Result};

pub const MAX_DIM: usize = 4;

/// A point of `R^n` with `1 <= n <= 4`, stored inline so it is `Copy`.
#[derive(Clone, Copy, PartialEq)]
pub struct Point {
    c: [f64; MAX_DIM],
    dim: u8,
}

impl Point {
    pub fn new(coords: &[f64]) -> Result<Point> {
        let dim = coords.len();
        if dim == 0 || dim > MAX_DIM {
            return Err(invalid(format!("ambient dimension {dim} outside 1..=4")));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite coordinate"));
        }
        let mut c = [0.0; MAX_DIM];
        c[..dim].copy_from_slice(coords);
        Ok(Point { c, dim: dim as u8 })
    }

    pub fn origin(dim: usize) -> Point {
        assert!((1..=MAX_DIM).contains(&dim));
        Point {
            c: [0.0; MAX_DIM],
            dim: dim as u8,
        }
    }

    /// Builds a point from a fixed array, truncating to `dim` coordinates.
    pub fn from_array(c: [f64; MAX_DIM], dim: usize) -> Point {
        let mut p = Point::origin(dim);
        p.c[..dim].copy_from_slice(&c[..dim]);
        p
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn coords(&self) -> &[f64] {
        &self.c[..self.dim as usize]
    }

    pub fn get(&self, i: usize) -> f64 {
        self.c[i]
    }

    pub fn with(mut self, i: usize, v: f64) -> Point {
        self.c[i] = v;
        self
    }

    pub fn dist2(&self, o: &Point) -> f64 {
        debug_assert_eq!(self.dim, o.dim);
        let mut s = 0.0;
        for i in 0..self.dim as usize {
            let d = self.c[i] - o.c[i];
            s += d * d;
        }
        s
    }

    pub fn dist(&self, o: &Point) -> f64 {
        self.dist2(o).sqrt()
    }

    pub fn norm(&self) -> f64 {
        self.coords().iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl std::fmt::Debug for Point {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}", self.coords())
    }
}

impl Add for Point {
    type Output = Point;
    fn add(mut self, o: Point) -> Point {
        for i in 0..self.dim as usize {
            self.c[i] += o.c[i];
        }
        self
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(mut self, o: Point) -> Point {
        for i in 0..self.dim as usize {
            self.c[i] -= o.c[i];
        }
        self
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(mut self, k: f64) -> Point {
        for i in 0..self.dim as usize {
            self.c[i] *= k;
        }
        self
    }
}

impl Serialize for Point {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coords().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        Point::new(&v).map_err(serde::de::Error::custom)
    }
}

/// Uniform point in the Euclidean ball `B(center, radius)` by cube rejection.
pub fn uniform_in_ball<R: Rng + ?Sized>(rng: &mut R, center: &Point, radius: f64) -> Point {
    let n = center.dim();
    loop {
        let mut c = [0.0; MAX_DIM];
        let mut r2 = 0.0;
        for v in c.iter_mut().take(n) {
            *v = rng.random_range(-1.0..1.0);
            r2 += *v * *v;
        }
        if r2 < 1.0 {
            return *center + Point::from_array(c, n) * radius;
        }
    }
}

/// Volume of the unit ball in `R^n`.
pub fn unit_ball_volume(n: usize) -> f64 {
    use std::f64::consts::PI;
    match n {
        1 => 2.0,
        2 => PI,
        3 => 4.0 * PI / 3.0,
        4 => PI * PI / 2.0,
        _ => panic!("dimension {n} unsupported"),
    }
}

/// The closed set `E`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClosedSet {
    /// Finite set of pairwise distinct points.
    Cloud { dim: usize, points: Vec<Point> },
    /// The hyperplane `{x_n = 0}`; `half_width` bounds the sampler and discretizations.
    Hyperplane { dim: usize, half_width: f64 },
    Segment { a: Point, b: Point },
    /// Circle in the `x1 x2` plane, remaining coordinates equal to zero.
    Circle {
        dim: usize,
        center: [f64; 2],
        radius: f64,
    },
    /// Level-`level` four-corner Cantor set in the square `origin + [0, side]^2`.
    Cantor {
        level: u32,
        origin: [f64; 2],
        side: f64,
    },
}

impl ClosedSet {
    pub fn cloud(points: Vec<Point>) -> Result<ClosedSet> {
        let dim = points
            .first()
            .map(|p| p.dim())
            .ok_or_else(|| invalid("empty point cloud"))?;
        let set = ClosedSet::Cloud { dim, points };
        set.validate()?;
        Ok(set)
    }

    pub fn segment(a: Point, b: Point) -> Result<ClosedSet> {
        let set = ClosedSet::Segment { a, b };
        set.validate()?;
        Ok(set)
    }

    pub fn dim(&self) -> usize {
        match self {
            ClosedSet::Cloud { dim, .. }
            | ClosedSet::Hyperplane { dim, .. }
            | ClosedSet::Circle { dim, .. } => *dim,
            ClosedSet::Segment { a, .. } => a.dim(),
            ClosedSet::Cantor { .. } => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if !(1..=MAX_DIM).contains(&n) {
            return Err(invalid(format!("ambient dimension {n} outside 1..=4")));
        }
        match self {
            ClosedSet::Cloud { dim, points } => {
                if points.is_empty() {
                    return Err(invalid("empty point cloud"));
                }
                if let Some(p) = points.iter().find(|p| p.dim() != *dim) {
                    return Err(Error::DimensionMismatch {
                        expected: *dim,
                        got: p.dim(),
                    });
                }
                let mut sorted: Vec<&Point> = points.iter().collect();
                sorted.sort_by(|a, b| {
                    a.coords()
                        .iter()
                        .zip(b.coords())
                        .map(|(x, y)| x.total_cmp(y))
                        .find(|o| o.is_ne())
                        .unwrap_or(std::cmp::Ordering::Equal)
                });
                if sorted.windows(2).any(|w| w[0] == w[1]) {
                    return Err(invalid("point cloud has repeated points"));
                }
            }
            ClosedSet::Hyperplane { dim, half_width } => {
                if *dim < 2 || *half_width <= 0.0 {
                    return Err(invalid("hyperplane needs dim >= 2 and positive half width"));
                }
            }
            ClosedSet::Segment { a, b } => {
                if a.dim() != b.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: a.dim(),
                        got: b.dim(),
                    });
                }
                if a == b {
                    return Err(invalid("degenerate segment"));
                }
            }
            ClosedSet::Circle { dim, radius, .. } => {
                if *dim < 2 || *radius <= 0.0 {
                    return Err(invalid("circle needs dim >= 2 and positive radius"));
                }
            }
            ClosedSet::Cantor { side, level, .. } => {
                if *side <= 0.0 || *level > 12 {
                    return Err(invalid("cantor set needs positive side and level <= 12"));
                }
            }
        }
        Ok(())
    }

    /// Exact distance `d(x, E)`.
    pub fn distance(&self, x: &Point) -> Result<f64> {
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.dim(),
            });
        }
        Ok(self.dist(x))
    }

    /// Unchecked variant of [`ClosedSet::distance`] for hot loops.
    pub fn dist(&self, x: &Point) -> f64 {
        match self {
            ClosedSet::Cloud { points, .. } => points
                .iter()
                .map(|p| p.dist2(x))
                .fold(f64::INFINITY, f64::min)
                .sqrt(),
            ClosedSet::Hyperplane { dim, .. } => x.get(dim - 1).abs(),
            ClosedSet::Segment { a, b } => {
                let ab = *b - *a;
                let ax = *x - *a;
                let len2 = ab.dist2(&Point::origin(ab.dim()));
                let dot: f64 = ab.coords().iter().zip(ax.coords()).map(|(u, v)| u * v).sum();
                let t = (dot / len2).clamp(0.0, 1.0);
                x.dist(&(*a + ab * t))
            }
            ClosedSet::Circle {
                dim,
                center,
                radius,
            } => {
                let rho = (x.get(0) - center[0]).hypot(x.get(1) - center[1]);
                let rest: f64 = (2..*dim).map(|i| x.get(i) * x.get(i)).sum();
                ((rho - radius).powi(2) + rest).sqrt()
            }
            ClosedSet::Cantor {
                level,
                origin,
                side,
            } => {
                let mut best = f64::INFINITY;
                cantor_dist(x, *origin, *side, *level, &mut best);
                best.sqrt()
            }
        }
    }

    /// Draws a point of `E`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let n = self.dim();
        match self {
            ClosedSet::Cloud { points, .. } => points[rng.random_range(0..points.len())],
            ClosedSet::Hyperplane { dim, half_width } => {
                let mut c = [0.0; MAX_DIM];
                for v in c.iter_mut().take(dim - 1) {
                    *v = rng.random_range(-half_width..*half_width);
                }
                Point::from_array(c, n)
            }
            ClosedSet::Segment { a, b } => *a + (*b - *a) * rng.random_range(0.0..=1.0),
            ClosedSet::Circle { center, radius, .. } => {
                let th = rng.random_range(0.0..std::f64::consts::TAU);
                Point::origin(n)
                    .with(0, center[0] + radius * th.cos())
                    .with(1, center[1] + radius * th.sin())
            }
            ClosedSet::Cantor {
                level,
                origin,
                side,
            } => {
                let mut o = *origin;
                let mut s = *side;
                for _ in 0..*level {
                    s /= 4.0;
                    o[0] += 3.0 * s * rng.random_range(0..2) as f64;
                    o[1] += 3.0 * s * rng.random_range(0..2) as f64;
                }
                Point::origin(2)
                    .with(0, o[0] + s * rng.random_range(0.0..=1.0))
                    .with(1, o[1] + s * rng.random_range(0.0..=1.0))
            }
        }
    }

    /// A finite subset of `E` whose covering radius (returned second) is at most `mesh`.
    pub fn discretize(&self, mesh: f64) -> Result<(Vec<Point>, f64)> {
        if mesh <= 0.0 {
            return Err(invalid("mesh must be positive"));
        }
        let n = self.dim();
        Ok(match self {
            ClosedSet::Cloud { points, .. } => (points.clone(), 0.0),
            ClosedSet::Hyperplane { dim, half_width } => {
                let k = (dim - 1) as i32;
                let steps = (2.0 * half_width * (k as f64).sqrt() / mesh).ceil() as usize;
                let h = 2.0 * half_width / steps as f64;
                let mut out = Vec::new();
                let total = (steps + 1).pow(k as u32);
                for idx in 0..total {
                    let mut c = [0.0; MAX_DIM];
                    let mut r = idx;
                    for v in c.iter_mut().take(dim - 1) {
                        *v = -half_width + h * (r % (steps + 1)) as f64;
                        r /= steps + 1;
                    }
                    out.push(Point::from_array(c, n));
                }
                (out, h * (k as f64).sqrt() / 2.0)
            }
            ClosedSet::Segment { a, b } => {
                let steps = (a.dist(b) / mesh).ceil().max(1.0) as usize;
                let pts = (0..=steps)
                    .map(|i| *a + (*b - *a) * (i as f64 / steps as f64))
                    .collect();
                (pts, a.dist(b) / steps as f64 / 2.0)
            }
            ClosedSet::Circle { center, radius, .. } => {
                let steps = (std::f64::consts::TAU * radius / mesh).ceil().max(3.0) as usize;
                let pts = (0..steps)
                    .map(|i| {
                        let th = std::f64::consts::TAU * i as f64 / steps as f64;
                        Point::origin(n)
                            .with(0, center[0] + radius * th.cos())
                            .with(1, center[1] + radius * th.sin())
                    })
                    .collect();
                let half = std::f64::consts::PI / steps as f64;
                (pts, 2.0 * radius * (half / 2.0).sin())
            }
            ClosedSet::Cantor {
                level,
                origin,
                side,
            } => {
                let s = side / 4f64.powi(*level as i32);
                let steps = (s * 2f64.sqrt() / mesh).ceil().max(1.0) as usize;
                let h = s / steps as f64;
                let mut pts = Vec::new();
                let mut squares = vec![*origin];
                let mut cur = *side;
                for _ in 0..*level {
                    cur /= 4.0;
                    squares = squares
                        .iter()
                        .flat_map(|o| {
                            [(0.0, 0.0), (3.0, 0.0), (0.0, 3.0), (3.0, 3.0)]
                                .map(|(i, j)| [o[0] + i * cur, o[1] + j * cur])
                        })
                        .collect();
                }
                for o in squares {
                    for i in 0..=steps {
                        for j in 0..=steps {
                            pts.push(
                                Point::origin(2)
                                    .with(0, o[0] + h * i as f64)
                                    .with(1, o[1] + h * j as f64),
                            );
                        }
                    }
                }
                (pts, h * 2f64.sqrt() / 2.0)
            }
        })
    }

    /// Diameter of `E` (of the sampling window for the hyperplane).
    pub fn diameter(&self) -> f64 {
        match self {
            ClosedSet::Cloud { points, .. } => {
                let mut d: f64 = 0.0;
                for (i, p) in points.iter().enumerate() {
                    for q in &points[i + 1..] {
                        d = d.max(p.dist(q));
                    }
                }
                d
            }
            ClosedSet::Hyperplane { dim, half_width } => {
                2.0 * half_width * ((dim - 1) as f64).sqrt()
            }
            ClosedSet::Segment { a, b } => a.dist(b),
            ClosedSet::Circle { radius, .. } => 2.0 * radius,
            ClosedSet::Cantor { side, .. } => side * 2f64.sqrt(),
        }
    }
}

fn box_dist2(x: &Point, o: [f64; 2], s: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..2 {
        let v = x.get(i);
        let d = if v < o[i] {
            o[i] - v
        } else if v > o[i] + s {
            v - o[i] - s
        } else {
            0.0
        };
        acc += d * d;
    }
    acc
}

fn cantor_dist(x: &Point, o: [f64; 2], s: f64, level: u32, best: &mut f64) {
    let d = box_dist2(x, o, s);
    if d >= *best {
        return;
    }
    if level == 0 {
        *best = d;
        return;
    }
    let c = s / 4.0;
    let mut kids = [(0.0, 0.0), (3.0, 0.0), (0.0, 3.0), (3.0, 3.0)]
        .map(|(i, j)| [o[0] + i * c, o[1] + j * c])
        .map(|k| (box_dist2(x, k, c), k));
    kids.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (_, k) in kids {
        cantor_dist(x, k, c, level - 1, best);
    }
}

pub fn distance_to_set(x: &Point, e: &ClosedSet) -> Result<f64> {
    e.distance(x)
}

/// A ball `B(center, radius)`, open or closed, optionally restricted to `E`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallSpec {
    pub center: Point,
    pub radius: f64,
    pub closed: bool,
    #[serde(default = "yes")]
    pub restricted: bool,
}

fn yes() -> bool {
    true
}

impl BallSpec {
    pub fn open(center: Point, radius: f64) -> BallSpec {
        BallSpec {
            center,
            radius,
            closed: false,
            restricted: true,
        }
    }

    pub fn closed(center: Point, radius: f64) -> BallSpec {
        BallSpec {
            closed: true,
            ..BallSpec::open(center, radius)
        }
    }

    pub fn validate(&self, e: Option<&ClosedSet>) -> Result<()> {
        if !(self.radius > 0.0) {
            return Err(invalid("ball radius must be positive"));
        }
        if let (true, Some(e)) = (self.restricted, e) {
            let d = e.distance(&self.center)?;
            if d > 0.0 {
                return Err(Error::NotInSet { distance: d });
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &Point) -> bool {
        contains_at(self.center.dist(p), self.radius, self.closed)
    }

    /// Same center and closure flag, radius multiplied by `k`.
    pub fn dilate(&self, k: f64) -> BallSpec {
        BallSpec {
            radius: self.radius * k,
            ..*self
        }
    }
}

#[inline]
pub fn contains_at(dist: f64, radius: f64, closed: bool) -> bool {
    if closed {
        dist <= radius
    } else {
        dist < radius
    }
}

/// The truncated cone `Γ_s^t(apex)`; `upper` may be infinite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeSpec {
    pub apex: Point,
    pub lower: f64,
    pub upper: f64,
}

impl ConeSpec {
    pub fn full(apex: Point) -> ConeSpec {
        ConeSpec {
            apex,
            lower: 0.0,
            upper: f64::INFINITY,
        }
    }

    pub fn truncated(apex: Point, lower: f64, upper: f64) -> ConeSpec {
        ConeSpec { apex, lower, upper }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lower >= 0.0 && self.upper > self.lower) {
            return Err(invalid(format!(
                "cone truncation needs 0 <= s < t, got s={} t={}",
                self.lower, self.upper
            )));
        }
        Ok(())
    }

    /// Membership when `d = d(x, E)` is already known.
    #[inline]
    pub fn contains_with(&self, x: &Point, d: f64) -> bool {
        d > self.lower && d <= self.upper && self.apex.dist(x) < 2.0 * d
    }
}

pub fn cone_contains(c: &ConeSpec, x: &Point, e: &ClosedSet) -> bool {
    c.contains_with(x, e.dist(x))
}

/// Returns `|x - z| / (|x - y| + |y - z|)` for `x` in the untruncated cone at `y`.
pub fn comparable_distance_check(y: &Point, z: &Point, x: &Point, e: &ClosedSet) -> Result<f64> {
    if !cone_contains(&ConeSpec::full(*y), x, e) {
        return Err(Error::NotInCone {
            apex: y.coords().to_vec(),
        });
    }
    let den = x.dist(y) + y.dist(z);
    Ok(x.dist(z) / den)
}
