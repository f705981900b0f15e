//! Simulates one trajectory and prints the posterior of each change point
//! as the observations arrive.

use double_disorder::filter::predicted_event_probs;
use double_disorder::simulate::Simulator;
use double_disorder::{init_filter, ModelSpec};

fn main() -> anyhow::Result<()> {
    let spec = ModelSpec::tiny();
    let traj = Simulator::new(&spec).sample_seeded(20, 3);
    println!("true change points: theta1={} theta2={}", traj.theta1, traj.theta2);
    println!(" n  x   P(θ1<=n)  P(θ2<=n)  P(θ1=n+1|F_n)");

    let mut state = init_filter(&spec);
    for (n, &x) in traj.observations.iter().enumerate() {
        if n > 0 {
            state = state.step(&spec, x)?;
        }
        let ahead = predicted_event_probs(&spec, &state);
        let onset_next = ahead.first_by_next[0] - state.belief.pi1[0];
        println!(
            "{n:2}  {x}   {:.4}    {:.4}    {:.4}",
            state.belief.total_pi1(),
            state.belief.total_pi2(),
            onset_next
        );
    }
    Ok(())
}
