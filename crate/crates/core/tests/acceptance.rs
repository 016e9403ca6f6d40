//! Acceptance gate: one PASS/FAIL line per criterion, each with its time limit.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use conesq::harness::{run_suite, ReportWriter, SuiteContext};

struct Criterion {
    id: u32,
    name: &'static str,
    suites: &'static [&'static str],
    limit: Duration,
}

const CRITERIA: &[Criterion] = &[
    Criterion { id: 1, name: "exact measure", suites: &["exact-measure"], limit: Duration::from_secs(30) },
    Criterion { id: 2, name: "lattice", suites: &["lattice"], limit: Duration::from_secs(60) },
    Criterion { id: 3, name: "badness", suites: &["badness"], limit: Duration::from_secs(120) },
    Criterion { id: 4, name: "cone", suites: &["cone", "cone-bound"], limit: Duration::from_secs(180) },
    Criterion { id: 5, name: "czd", suites: &["czd"], limit: Duration::from_secs(120) },
    Criterion { id: 6, name: "martingale", suites: &["martingale"], limit: Duration::from_secs(120) },
    Criterion { id: 7, name: "suppression", suites: &["suppression"], limit: Duration::from_secs(120) },
    Criterion { id: 8, name: "good-lambda", suites: &["good-lambda"], limit: Duration::from_secs(120) },
    Criterion { id: 9, name: "weak11", suites: &["weak11"], limit: Duration::from_secs(120) },
];

fn main() -> ExitCode {
    let ctx = SuiteContext::new(0);
    let mut all = true;
    for c in CRITERIA {
        let clock = Instant::now();
        let mut w = ReportWriter::new(None, false).expect("writer");
        let mut checks = 0;
        let mut failed = Vec::new();
        for suite in c.suites {
            match run_suite(suite, &ctx, &mut w) {
                Ok(reports) => {
                    checks += reports.len();
                    failed.extend(reports.iter().filter(|r| !r.pass).map(|r| format!("{}/{}", r.suite, r.check)));
                }
                Err(e) => failed.push(format!("{suite}: error: {e}")),
            }
        }
        let elapsed = clock.elapsed();
        let in_time = elapsed <= c.limit;
        let pass = failed.is_empty() && in_time && checks > 0;
        all &= pass;
        let mut line = format!(
            "{} criterion {} ({}): {} checks, {:.1}s of {}s",
            if pass { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            checks,
            elapsed.as_secs_f64(),
            c.limit.as_secs()
        );
        if !in_time {
            line.push_str(", over time");
        }
        if !failed.is_empty() {
            line.push_str(&format!(", failing: {}", failed.join(", ")));
        }
        println!("{line}");
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
