//! Build random-walk cascades and compare their lengths with the
//! break-length distribution.
//!
//!     cargo run --release --example cascade_walk

use netpriv::analytic;
use netpriv::model::{build_population, rng_stream, Scenario, ScenarioConfig, StreamDomain, UserId};
use netpriv::sim::establish_cc_random_walk;
use rand::Rng;

fn main() {
    let config = ScenarioConfig {
        n_users: 10_000,
        rho: 0.2,
        p_f: 2.0 / 3.0,
        scenario: Scenario::P2PrivP2P,
        seed: 1,
        ..ScenarioConfig::default()
    };
    let (pop, _) = build_population(&config).unwrap();
    let honest: Vec<UserId> = pop.honest_users().collect();
    let mut rng = rng_stream(config.seed, StreamDomain::Trial, 0);

    let alice = honest[0];
    let walk = establish_cc_random_walk(&pop, alice, config.p_f, config.effective_cap(), true, &mut rng).unwrap();
    println!("one walk from {alice}: path {:?}, absorbed: {}", walk.path, walk.is_broken());

    let trials = 200_000;
    let mut counts = [0u32; 16];
    for _ in 0..trials {
        let alice = honest[rng.gen_range(0..honest.len())];
        let c = establish_cc_random_walk(&pop, alice, config.p_f, config.effective_cap(), true, &mut rng).unwrap();
        counts[c.walk_len().min(15)] += 1;
    }
    println!("\nlen  simulated  P(|CC_break|=len)");
    for (len, &c) in counts.iter().enumerate().take(11).skip(1) {
        let p = analytic::cc_break_pmf(len, config.rho, config.p_f).unwrap();
        println!("{len:>3}  {:>9.5}  {p:.5}", c as f64 / trials as f64);
    }
}
