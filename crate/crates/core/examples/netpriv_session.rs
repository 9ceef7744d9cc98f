//! One NetPriv session end to end: cascade, token custody, sealed exit
//! requests, and what the colluders log.
//!
//!     cargo run --example netpriv_session

use netpriv::adversary::observe_session;
use netpriv::model::{build_population, rng_stream, NetPrivCascade, Scenario, ScenarioConfig, StreamDomain};
use netpriv::sim::{execute_session, SessionSpec};

fn main() {
    let config = ScenarioConfig {
        n_users: 50,
        n_exits: 10,
        rho: 0.2,
        rho_e: 0.5,
        scenario: Scenario::NetPrivClientServer,
        netpriv_cascade: NetPrivCascade::Fixed(4),
        seed: 3,
        ..ScenarioConfig::default()
    };
    let (pop, view) = build_population(&config).unwrap();
    let alice = pop.honest_users().next().unwrap();
    println!("colluding users {:?}", view.malicious_users);
    println!("colluding exits {:?}\n", view.malicious_exits);

    for s in 0..2 {
        let mut rng = rng_stream(config.seed, StreamDomain::Session, s);
        let trace = execute_session(&config, &pop, alice, SessionSpec { id: s, key: 0 }, &mut rng).unwrap();
        print!("{}", trace.to_canonical());
        let log = observe_session(&trace, &view, config.scenario);
        println!("observed sources {:?}, server count {:?}\n", log.observed_users(), log.server_count());
    }
}
