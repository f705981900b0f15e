//! Feeds observations one at a time to the online detector.

use double_disorder::detect::Detector;
use double_disorder::simulate::Simulator;
use double_disorder::{solve, ModelSpec, SolverConfig};

fn main() -> anyhow::Result<()> {
    let mut spec = ModelSpec::tiny();
    spec.p1 = 0.9;
    spec.q1 = 0.1;
    let policy = solve(&spec, &SolverConfig::default())?;
    let traj = Simulator::new(&spec).sample_seeded(60, 21);

    let mut det = Detector::new(&spec, &policy);
    for &x in &traj.observations[1..] {
        if det.is_finished() {
            break;
        }
        det.observe(x)?;
    }
    let mut result = det.finish();
    result.score(traj.theta1, traj.theta2);
    println!("truth:    theta1={} theta2={}", traj.theta1, traj.theta2);
    println!(
        "detected: tau={:?} sigma={:?} exact hit: {}",
        result.tau,
        result.sigma,
        result.hit()
    );
    for row in result.trace.iter().filter(|r| r.action.as_str() != "continue") {
        println!("n={} action={}", row.n, row.action.as_str());
    }
    Ok(())
}
