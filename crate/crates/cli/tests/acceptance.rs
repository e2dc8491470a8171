//! Full-profile acceptance battery: one PASS/FAIL line per criterion.

use delayembed_cli::acceptance::acceptance_suite;

fn main() {
    let started = std::time::Instant::now();
    let summary = acceptance_suite("full");
    println!("acceptance criteria (profile: full)");
    for line in summary.lines() {
        println!("{line}");
    }
    let failed = summary.criteria.iter().filter(|c| !c.passed).count();
    println!(
        "acceptance: {} passed, {failed} failed, {:.1}s total",
        summary.criteria.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
