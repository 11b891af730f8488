//! Developer probe: Q-values versus age for a trained bundle.

use qnet_core::sac::train::ModelBundle;
use qnet_core::sac::AgentObservation;

fn main() {
    let path = std::env::args().nth(1).expect("usage: qprobe <model.qnck>");
    let bundle = ModelBundle::load(std::path::Path::new(&path)).unwrap();
    println!("range {:?} alpha {:.4}", bundle.range, bundle.learner.alpha());
    println!("age  Q(stay)      Q(query)    diff        pi(query)");
    for age in [0u64, 1, 2, 3, 5, 8, 12, 20, 30, 50, 80, 120, 200, 400] {
        let obs = AgentObservation {
            estimate: [3.0, -2.0, 3.0, -2.0],
            age_slots: age,
        };
        let feats = bundle.assembly.features(&obs, 0, 0);
        let q = bundle.learner.q_values(&feats);
        let p = bundle.learner.policy_pmf(&feats);
        println!(
            "{age:>4} {:>11.4} {:>11.4} {:>11.4} {:>8.3}",
            q[0],
            q[1],
            q[1] - q[0],
            p[1]
        );
    }
}
