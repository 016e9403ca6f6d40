//! The JSON scenario schema and its validation.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ClosedSet, Point};
use crate::lattice::goodness_gamma;
use crate::measure::AtomicMeasure;
use crate::operator::{Kernel, KernelSpec, QuadratureConfig};
use crate::rng::stream;

/// How the measure `mu` is placed on `E`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MeasureSpec {
    /// Equal weights on a discretization of `E` with the given mesh.
    Uniform {
        mesh: f64,
        #[serde(default = "one")]
        mass: f64,
    },
    /// Random points of `E` with weights uniform in `[1 - spread, 1 + spread]`.
    Random {
        count: usize,
        #[serde(default)]
        spread: f64,
        #[serde(default = "one")]
        mass: f64,
    },
    Atoms { points: Vec<Point>, weights: Vec<f64> },
}

/// The test measure `nu_B` supplied on each regular ball.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TestMeasureSpec {
    /// `nu_B = mu` restricted to `B`.
    #[default]
    Restriction,
    /// `nu_B = c e^{i theta} mu` on `B` with phases uniform in `[-amplitude, amplitude]`
    /// and `c` normalizing `nu_B(B) = mu(B)`.
    Phase { amplitude: f64 },
}

fn one() -> f64 {
    1.0
}

/// Constants of the theorem and of the numerical pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub beta: f64,
    /// Lattice ratio.
    pub delta: f64,
    /// Goodness exponent; derived from the kernel when absent.
    pub gamma: Option<f64>,
    /// Goodness depth.
    pub r: u32,
    /// Whitney dilation.
    pub a: f64,
    pub rho: f64,
    /// Doubling constant of regular balls.
    pub b: f64,
    pub kappa: f64,
    /// Suppression threshold; chosen from the mass budget when absent.
    pub lambda0: Option<f64>,
    pub c0: f64,
    pub c_acc: f64,
    pub delta0: f64,
    pub eps0: f64,
    /// Weak-type exponent `s`.
    pub s_exp: f64,
    pub c1: f64,
    pub c2: f64,
    /// Lower and upper cone truncation.
    pub s_min: f64,
    pub t_max: f64,
    /// Lattice depth below the top cube.
    pub levels: u32,
    /// Good-lambda `epsilon` and `delta`.
    pub eps_gl: f64,
    pub delta_gl: f64,
    /// Weak (1,1) constant of `M^m` used in the `H_0` threshold.
    pub maximal_constant: f64,
}

impl Default for Params {
    fn default() -> Params {
        Params {
            beta: 1.0,
            delta: 0.25,
            gamma: None,
            r: 2,
            a: 10.0,
            rho: 160.0,
            b: 100.0,
            kappa: 50.0,
            lambda0: None,
            c0: 1.0,
            c_acc: 0.5,
            delta0: 0.5,
            eps0: 0.05,
            s_exp: 1.0,
            c1: 1.0,
            c2: 50.0,
            s_min: 1e-3,
            t_max: 1.0,
            levels: 5,
            eps_gl: 0.5,
            delta_gl: 0.05,
            maximal_constant: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budget {
    pub samples_per_shell: usize,
    /// Size of the finite ensemble of lattice parameters.
    pub ensemble: usize,
}

impl Default for Budget {
    fn default() -> Budget {
        Budget {
            samples_per_shell: 300,
            ensemble: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    pub set: ClosedSet,
    pub measure: MeasureSpec,
    #[serde(default = "default_kernel")]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub test_measure: TestMeasureSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub budget: Budget,
    #[serde(default)]
    pub suites: Vec<String>,
}

fn default_name() -> String {
    "scenario".into()
}

fn default_kernel() -> KernelSpec {
    KernelSpec::power(1.0, 0.5)
}

/// A scenario with its set, measure and kernel materialized.
#[derive(Clone, Debug)]
pub struct Instance {
    pub scenario: Scenario,
    pub e: ClosedSet,
    pub mu: AtomicMeasure,
    pub kernel: KernelSpec,
}

fn field(name: &str, msg: impl std::fmt::Display) -> Error {
    Error::Scenario(format!("{name}: {msg}"))
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Scenario::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Scenario> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    /// Uniform measure of total mass one on the unit segment of the plane.
    pub fn segment(atoms: usize) -> Scenario {
        let a = Point::new(&[0.0, 0.0]).expect("valid point");
        let b = Point::new(&[1.0, 0.0]).expect("valid point");
        Scenario {
            name: "segment".into(),
            set: ClosedSet::Segment { a, b },
            measure: MeasureSpec::Uniform {
                mesh: 1.0 / (atoms.max(2) - 1) as f64,
                mass: 1.0,
            },
            kernel: default_kernel(),
            params: Params::default(),
            test_measure: TestMeasureSpec::Restriction,
            seed: 0,
            budget: Budget::default(),
            suites: Vec::new(),
        }
    }

    /// Uniform measure on the unit circle of the plane.
    pub fn circle(atoms: usize) -> Scenario {
        Scenario {
            name: "circle".into(),
            set: ClosedSet::Circle {
                dim: 2,
                center: [0.0, 0.0],
                radius: 1.0,
            },
            measure: MeasureSpec::Uniform {
                mesh: std::f64::consts::TAU / atoms.max(3) as f64,
                mass: 1.0,
            },
            ..Scenario::segment(2)
        }
    }

    pub fn m(&self) -> f64 {
        self.kernel.params().m
    }

    pub fn alpha(&self) -> f64 {
        self.kernel.params().alpha
    }

    pub fn gamma(&self) -> f64 {
        self.params.gamma.unwrap_or_else(|| goodness_gamma(self.alpha(), self.m()))
    }

    pub fn quadrature(&self, seed: u64) -> QuadratureConfig {
        QuadratureConfig::new(self.budget.samples_per_shell, seed)
    }

    /// Checks the standing constraints field by field.
    pub fn validate(&self) -> Result<()> {
        self.set.validate().map_err(|e| field("set", e))?;
        self.kernel.validate().map_err(|e| field("kernel", e))?;
        let p = &self.params;
        let m = self.m();
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if !unit(p.beta) {
            return Err(field("params.beta", "must lie in (0, 1]"));
        }
        if !(p.delta > 0.0 && p.delta <= 0.25) {
            return Err(field("params.delta", "must lie in (0, 1/4]"));
        }
        if let Some(g) = p.gamma {
            if !(g > 0.0 && g < 1.0) {
                return Err(field("params.gamma", "must lie in (0, 1)"));
            }
        }
        if p.a < 3.0 {
            return Err(field("params.a", "must be at least 3"));
        }
        if p.rho < 16.0 * p.a {
            return Err(field("params.rho", "must be at least 16 a"));
        }
        if !(p.b > p.a.powf(m)) {
            return Err(field("params.b", format!("must exceed a^m = {}", p.a.powf(m))));
        }
        for (name, v) in [
            ("params.kappa", p.kappa),
            ("params.c0", p.c0),
            ("params.c_acc", p.c_acc),
            ("params.s_exp", p.s_exp),
            ("params.c1", p.c1),
            ("params.c2", p.c2),
            ("params.s_min", p.s_min),
            ("params.eps_gl", p.eps_gl),
            ("params.delta_gl", p.delta_gl),
            ("params.maximal_constant", p.maximal_constant),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(field(name, "must be positive and finite"));
            }
        }
        if let Some(l) = p.lambda0 {
            if !(l > 0.0) {
                return Err(field("params.lambda0", "must be positive"));
            }
        }
        if p.c1 < 1.0 {
            return Err(field("params.c1", "must be at least 1 since |nu|(B) >= nu(B) = mu(B)"));
        }
        if !(0.0..1.0).contains(&p.delta0) {
            return Err(field("params.delta0", "must lie in [0, 1)"));
        }
        if !(p.eps0 > 0.0 && p.eps0 < 1.0) {
            return Err(field("params.eps0", "must lie in (0, 1)"));
        }
        if !(p.t_max > p.s_min && p.t_max.is_finite()) {
            return Err(field("params.t_max", "must exceed s_min"));
        }
        if p.levels == 0 || p.levels > 12 {
            return Err(field("params.levels", "must lie in 1..=12"));
        }
        if self.budget.samples_per_shell < 2 {
            return Err(field("budget.samples_per_shell", "must be at least 2"));
        }
        if self.budget.ensemble == 0 {
            return Err(field("budget.ensemble", "must be positive"));
        }
        match &self.measure {
            MeasureSpec::Uniform { mesh, mass } => {
                if !(*mesh > 0.0) || !(*mass > 0.0) {
                    return Err(field("measure", "mesh and mass must be positive"));
                }
            }
            MeasureSpec::Random { count, spread, mass } => {
                if *count == 0 || !(0.0..1.0).contains(spread) || !(*mass > 0.0) {
                    return Err(field("measure", "need count > 0, spread in [0, 1) and mass > 0"));
                }
            }
            MeasureSpec::Atoms { points, weights } => {
                if points.len() != weights.len() || points.is_empty() {
                    return Err(field("measure", "points and weights must be non-empty and of equal length"));
                }
            }
        }
        if let TestMeasureSpec::Phase { amplitude } = self.test_measure {
            if !(0.0..std::f64::consts::FRAC_PI_2).contains(&amplitude) {
                return Err(field("test_measure.amplitude", "must lie in [0, pi/2)"));
            }
        }
        Ok(())
    }

    pub fn instantiate(&self) -> Result<Instance> {
        self.validate()?;
        let mu = match &self.measure {
            MeasureSpec::Uniform { mesh, mass } => {
                let (pts, _) = self.set.discretize(*mesh).map_err(|e| field("measure.mesh", e))?;
                AtomicMeasure::uniform(pts, *mass)?
            }
            MeasureSpec::Random { count, spread, mass } => {
                let mut rng = stream(self.seed, &[0x4D55]);
                let pts: Vec<Point> = (0..*count).map(|_| self.set.sample(&mut rng)).collect();
                let w: Vec<f64> = (0..*count)
                    .map(|_| 1.0 + spread * rng.random_range(-1.0..=1.0))
                    .collect();
                let tot: f64 = w.iter().sum();
                AtomicMeasure::new(pts, w.iter().map(|v| v * mass / tot).collect())?
            }
            MeasureSpec::Atoms { points, weights } => AtomicMeasure::new(points.clone(), weights.clone())?,
        };
        mu.check_support(&self.set, 1e-9).map_err(|e| field("measure", e))?;
        if mu.dim() != self.set.dim() {
            return Err(field("measure", "dimension differs from the set"));
        }
        Ok(Instance {
            scenario: self.clone(),
            e: self.set.clone(),
            mu,
            kernel: self.kernel,
        })
    }
}
