//! Intersecting candidate sets across sessions: fresh P2Priv cascades give
//! the sender away, a persistent NetPriv cascade does not.
//!
//!     cargo run --release --example longterm_attack

use netpriv::harness::run_longterm;
use netpriv::model::{NetPrivCascade, Scenario, ScenarioConfig};

fn main() {
    let base = ScenarioConfig {
        n_users: 100,
        n_exits: 10,
        rho: 0.1,
        rho_e: 0.5,
        ..ScenarioConfig::default()
    };
    let seeds: Vec<u64> = (0..200).collect();

    for (label, config) in [
        ("p2priv-cs", ScenarioConfig { scenario: Scenario::P2PrivClientServer, ..base.clone() }),
        (
            "netpriv-cs |CC|=4",
            ScenarioConfig {
                scenario: Scenario::NetPrivClientServer,
                netpriv_cascade: NetPrivCascade::Fixed(4),
                ..base.clone()
            },
        ),
    ] {
        let stats = run_longterm(&config, 50, &seeds).unwrap();
        println!(
            "{label:<18} isolated {:>5.1}% of seeds, median session {:?}, 99% by {:?}",
            100.0 * stats.isolation_fraction(),
            stats.median_isolation(),
            stats.sessions_to_isolate(0.99)
        );
        println!("{:<18} first trajectory {:?}", "", &stats.runs[0].trajectory[..8]);
    }
}
