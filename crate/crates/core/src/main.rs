use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde_json::json;

use conesq::czdecomp::{cz_decompose, CzParams};
use conesq::geometry::BallSpec;
use conesq::harness::experiments::{
    big_piece_pipeline, check_tb_hypotheses, good_lambda_experiment, random_densities, regular_balls,
    stopping_sets_pipeline,
};
use conesq::harness::scenario::Instance;
use conesq::harness::{run_suite, ReportWriter, Scenario, SuiteContext, VerificationReport, SUITES};
use conesq::lattice::{build_lattice, build_nets, RandomConfig};
use conesq::measure::{ball_mass, order_m_constant, ComplexAtomicMeasure};
use conesq::operator::{Kernel, QuadratureConfig};
use conesq::rng::derive;
use conesq::whitney::{whitney_cover, WhitneyParams};
use conesq::{Error, Result};

/// Conical square functions on closed sets: constructions, checks and experiments.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario file (JSON). Defaults to the uniform unit segment.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Root seed; overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Quadrature samples per height shell.
    #[arg(long, global = true)]
    budget: Option<usize>,
    /// Directory for report.jsonl, ladders and artefacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Nested nets of the scenario's atoms.
    Nets,
    /// Random dyadic lattice with partition and nesting checks.
    Lattice,
    /// Whitney cover of E minus a ball.
    Whitney,
    /// Calderón-Zygmund decomposition of a phase-modulated measure.
    Czd,
    /// Square function of the constant density at every atom.
    Sqfn,
    /// Suppression and big piece on the regular balls.
    Suppress,
    /// Runs a verification suite, "all", or the scenario's own suite list when omitted.
    Verify { suite: Option<String> },
    /// Runs an experiment: hypotheses, stopping-sets, good-lambda or big-piece.
    Experiment { name: String },
}

struct Run {
    scenario: Scenario,
    seed: u64,
    explicit: bool,
    budget: Option<usize>,
}

impl Run {
    fn load(c: &Common) -> Result<Run> {
        let (mut scenario, explicit) = match &c.scenario {
            Some(p) => (Scenario::load(p)?, true),
            None => (Scenario::segment(65), false),
        };
        if let Some(s) = c.seed {
            scenario.seed = s;
        }
        if let Some(b) = c.budget {
            scenario.budget.samples_per_shell = b;
            scenario.validate()?;
        }
        Ok(Run {
            seed: scenario.seed,
            scenario,
            explicit,
            budget: c.budget,
        })
    }

    fn instance(&self) -> Result<Instance> {
        self.scenario.instantiate()
    }

    fn cfg(&self) -> QuadratureConfig {
        self.scenario.quadrature(self.seed)
    }

    fn report(&self, suite: &str, check: &str, anchor: &str, measured: serde_json::Value, tol: serde_json::Value, pass: bool, t: Instant) -> VerificationReport {
        VerificationReport::new(suite, check, anchor, measured, tol, pass, self.seed).timed(t.elapsed().as_millis() as u64)
    }
}

fn nets(run: &Run, w: &mut ReportWriter) -> Result<()> {
    let t = Instant::now();
    let inst = run.instance()?;
    let p = &run.scenario.params;
    let nets = build_nets(inst.mu.points(), p.delta, 0, 0, p.levels as i32)?;
    let pts = inst.mu.points();
    let mut ok = true;
    for k in nets.k_top..=nets.k_bottom() {
        let lvl = nets.level(k);
        for (a, &i) in lvl.iter().enumerate() {
            ok &= lvl[a + 1..].iter().all(|&j| pts[i].dist(&pts[j]) >= nets.side(k));
        }
        if k > nets.k_top {
            ok &= nets.level(k - 1).iter().all(|i| lvl.contains(i));
        }
    }
    let sizes: Vec<usize> = nets.levels.iter().map(Vec::len).collect();
    w.artefact("nets.json", &serde_json::to_value(&nets)?)?;
    w.emit(&run.report("nets", "separated-nested", "each level is delta^k separated and contains the coarser one", json!({"sizes": sizes}), json!(0), ok, t))
}

fn lattice(run: &Run, w: &mut ReportWriter) -> Result<()> {
    let t = Instant::now();
    let inst = run.instance()?;
    let p = &run.scenario.params;
    let nets = build_nets(inst.mu.points(), p.delta, 0, 0, p.levels as i32)?;
    let cfg = RandomConfig::new(run.seed, (0, p.levels as i32));
    let lat = build_lattice(&nets, &cfg)?;
    let again = build_lattice(&nets, &cfg)?;
    let partition = lat.verify_partition().is_ok();
    let nesting = lat.verify_nesting().is_ok();
    let same = lat.same_as(&again);
    let (c_small, c_big) = lat.containment_constants();
    w.artefact("lattice.json", &serde_json::to_value(lat.dump())?)?;
    w.emit(&run.report(
        "lattice",
        "partition-nesting-determinism",
        "cubes partition every level, nest across levels and are reproducible",
        json!({"partition": partition, "nesting": nesting, "deterministic": same, "c_small": c_small, "c_big": c_big}),
        json!(0),
        partition && nesting && same,
        t,
    ))
}

fn whitney(run: &Run, w: &mut ReportWriter) -> Result<()> {
    let t = Instant::now();
    let inst = run.instance()?;
    let p = &run.scenario.params;
    let hole = BallSpec::closed(inst.mu.points()[0], inst.e.diameter().min(1e6) / 4.0);
    let in_u: Vec<bool> = inst.mu.points().iter().map(|x| !hole.contains(x)).collect();
    let nets = build_nets(inst.mu.points(), p.delta, 0, 0, p.levels as i32 + 1)?;
    let lat = build_lattice(&nets, &RandomConfig::new(run.seed, (0, p.levels as i32 + 1)))?;
    let cover = whitney_cover(&in_u, &inst.mu, &lat, WhitneyParams { a: p.a, rho: p.rho, b: p.b, kappa: p.kappa })?;
    w.artefact("whitney.json", &serde_json::to_value(&cover)?)?;
    w.emit(&run.report(
        "whitney",
        "cover",
        "disjoint regular balls inside U whose dilates meet the complement and carry a fixed fraction of mu(U)",
        json!({"balls": cover.balls.len(), "checks": cover.checks, "mass_u": cover.mass_u, "unreached_mass": cover.unreached_mass}),
        json!("exact"),
        cover.checks.all_pass(),
        t,
    ))
}

fn czd(run: &Run, w: &mut ReportWriter) -> Result<()> {
    let t = Instant::now();
    let inst = run.instance()?;
    let mu = &inst.mu;
    let f = random_densities(1, mu.len(), run.seed).remove(0);
    let mut weights: Vec<Complex64> = f.iter().zip(mu.weights()).map(|(v, m)| v * m).collect();
    // one heavy atom forces at least one selected ball
    weights[mu.len() / 2] += Complex64::new(mu.total_mass(), 0.0);
    let nu = ComplexAtomicMeasure::new(mu.points().to_vec(), weights)?;
    let n = inst.e.dim() as i32;
    let lambda = 1.5 * 2f64.powi(n + 1) * nu.total_variation().total_mass() / mu.total_mass();
    let dec = cz_decompose(&nu, mu, CzParams::new(lambda, run.scenario.m()))?;
    w.artefact("czd.json", &serde_json::to_value(&dec)?)?;
    w.emit(&run.report(
        "czd",
        "properties",
        "the decomposition satisfies all seven Calderón-Zygmund properties",
        json!({"lambda": lambda, "balls": dec.balls.len(), "checks": dec.checks}),
        json!("exact"),
        dec.checks.all_pass(),
        t,
    ))
}

fn sqfn(run: &Run, w: &mut ReportWriter) -> Result<()> {
    let t = Instant::now();
    let inst = run.instance()?;
    let p = &run.scenario.params;
    let mu = &inst.mu;
    let ones = vec![Complex64::new(1.0, 0.0); mu.len()];
    let measures = vec![ones.iter().zip(mu.weights()).map(|(v, m)| v * m).collect::<Vec<_>>()];
    let vals = conesq::czdecomp::square_function_at_atoms(&inst.kernel, &inst.e, mu.points(), &measures, mu.points(), p.s_min, p.t_max, &run.cfg())?;
    let v: Vec<f64> = vals[0].iter().map(|x| x.0).collect();
    let se: Vec<f64> = vals[0].iter().map(|x| x.1).collect();
    let order = order_m_constant(mu, inst.kernel.params().m)?;
    let finite = v.iter().all(|x| x.is_finite() && *x >= 0.0);
    w.artefact("sqfn.json", &json!({"values": v, "stderr": se}))?;
    w.emit(&run.report(
        "sqfn",
        "values",
        "the truncated square function of mu is finite at every atom",
        json!({"min": v.iter().copied().fold(f64::INFINITY, f64::min), "max": v.iter().copied().fold(0.0, f64::max),
               "max_stderr": se.iter().copied().fold(0.0, f64::max), "order_constant": order.scale_sup}),
        json!("finite"),
        finite,
        t,
    ))
}

fn suppress(run: &Run, w: &mut ReportWriter) -> Result<()> {
    let inst = run.instance()?;
    let balls = regular_balls(&inst, 2, 2)?;
    for (k, ball) in balls.iter().enumerate() {
        let t = Instant::now();
        let r = big_piece_pipeline(&inst, ball, &QuadratureConfig { seed: derive(run.seed, &[k as u64]), ..run.cfg() })?;
        w.emit(&run.report(
            "suppress",
            &format!("ball-{k}"),
            "the suppressed square function of b stays below lambda0 and agrees with the original off S",
            json!({"ball": ball, "mu_b": ball_mass(&inst.mu, ball), "report": r}),
            json!({"excess_sigmas": 3.0, "disagreements": 0}),
            r.pass(),
            t,
        ))?;
    }
    Ok(())
}

fn experiment(run: &Run, name: &str, w: &mut ReportWriter) -> Result<()> {
    let inst = run.instance()?;
    let p = &run.scenario.params;
    match name {
        "hypotheses" => {
            let balls = regular_balls(&inst, 3, 3)?;
            let t = Instant::now();
            for (k, r) in check_tb_hypotheses(&inst, &balls, true, &run.cfg())?.iter().enumerate() {
                w.emit(&run.report("hypotheses", &format!("ball-{k}"), "testing hypotheses on a regular ball", serde_json::to_value(r)?, json!({"c1": p.c1, "c2": p.c2}), r.pass(), t))?;
            }
        }
        "stopping-sets" => {
            for (k, ball) in regular_balls(&inst, 3, 3)?.iter().enumerate() {
                let t = Instant::now();
                let s = stopping_sets_pipeline(&inst, ball, &RandomConfig::frozen())?;
                let pass = s.pass();
                w.emit(&run.report("stopping-sets", &format!("ball-{k}"), "stopping and exceptional sets on a regular ball", serde_json::to_value(&s)?, json!({"c1": p.c1, "eps0": p.eps0}), pass, t))?;
            }
        }
        "good-lambda" => {
            let t = Instant::now();
            let fs = random_densities(20, inst.mu.len(), run.seed);
            let r = good_lambda_experiment(&inst, &fs, &run.cfg())?;
            let pass = r.per_f.iter().all(|f| f.pass);
            w.artefact("good-lambda.json", &serde_json::to_value(&r)?)?;
            w.emit(&run.report("good-lambda", "inequality", "the good-lambda inequality at every grid level", json!({"factors": r.per_f.iter().map(|f| f.factor).collect::<Vec<_>>(), "l2_spread": r.l2_spread}), json!({"factor": r.allowed}), pass, t))?;
        }
        "big-piece" => suppress(run, w)?,
        other => return Err(Error::InvalidParameter(format!("unknown experiment '{other}'"))),
    }
    Ok(())
}

fn verify(run: &Run, suite: Option<&str>, w: &mut ReportWriter) -> Result<()> {
    let names: Vec<String> = match suite {
        Some("all") => SUITES.iter().map(|s| s.to_string()).collect(),
        Some(s) => vec![s.to_string()],
        None => run.scenario.suites.clone(),
    };
    let ctx = SuiteContext {
        scenario: run.explicit.then(|| run.scenario.clone()),
        seed: run.seed,
        budget: run.budget,
    };
    for n in &names {
        run_suite(n, &ctx, w)?;
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<bool> {
    let run = Run::load(&cli.common)?;
    let mut w = ReportWriter::new(cli.common.out.as_deref(), true)?;
    match &cli.command {
        Command::Nets => nets(&run, &mut w)?,
        Command::Lattice => lattice(&run, &mut w)?,
        Command::Whitney => whitney(&run, &mut w)?,
        Command::Czd => czd(&run, &mut w)?,
        Command::Sqfn => sqfn(&run, &mut w)?,
        Command::Suppress => suppress(&run, &mut w)?,
        Command::Verify { suite } => verify(&run, suite.as_deref(), &mut w)?,
        Command::Experiment { name } => experiment(&run, name, &mut w)?,
    }
    w.finish()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
