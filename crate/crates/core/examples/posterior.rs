//! Posterior over senders after a single observed session, next to the
//! closed-form posterior parameters.
//!
//!     cargo run --example posterior

use netpriv::adversary::{entropy_of, observe_session, posterior_from_observation};
use netpriv::analytic::{self, AnalyticInputs, PosteriorMode};
use netpriv::model::{build_population, rng_stream, Scenario, ScenarioConfig, StreamDomain};
use netpriv::sim::{execute_session, SessionSpec};

fn main() {
    for scenario in Scenario::ALL {
        let config = ScenarioConfig {
            n_users: 100,
            n_exits: 10,
            rho: 0.2,
            scenario,
            seed: 11,
            ..ScenarioConfig::default()
        };
        let (pop, view) = build_population(&config).unwrap();
        let alice = pop.honest_users().nth(5).unwrap();
        let inputs = AnalyticInputs::from_config(&config);
        let assumed = analytic::expected_cc_break(config.rho, config.p_f, inputs.cap).unwrap();

        let mut rng = rng_stream(config.seed, StreamDomain::Trial, 0);
        let trace = execute_session(&config, &pop, alice, SessionSpec { id: 0, key: 0 }, &mut rng).unwrap();
        let log = observe_session(&trace, &view, scenario);
        let dist = posterior_from_observation(&log, &pop, assumed);

        let params = analytic::posterior_params(&inputs, scenario, PosteriorMode::Normalized).unwrap();
        println!("{scenario}");
        println!("  cascade {:?}", trace.cascade.members);
        println!("  observed {:?}", log.observed_users());
        println!(
            "  P(alice)={:.4}  support={}  H={:.3} bits",
            dist.probability(alice),
            dist.support_size(),
            entropy_of(&dist)
        );
        println!(
            "  closed form: p_a1={:.4} p_other={:.5} H={:.3} bits\n",
            params.p_a1,
            params.p_other,
            params.entropy()
        );
    }
}
