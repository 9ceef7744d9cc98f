//! Monte Carlo entropy estimates and a parameter sweep.
//!
//!     cargo run --release --example monte_carlo

use netpriv::harness::{run_monte_carlo, sweep, SweepAxis, SweepParam};
use netpriv::model::{Scenario, ScenarioConfig};

fn main() {
    let config = ScenarioConfig {
        scenario: Scenario::NetPrivClientServer,
        rho: 0.2,
        seed: 7,
        ..ScenarioConfig::default()
    };
    let r = run_monte_carlo(&config, 50_000).unwrap();
    println!("{}", serde_json::to_string_pretty(&r).unwrap());

    let base = ScenarioConfig { scenario: Scenario::P2PrivClientServer, seed: 7, ..ScenarioConfig::default() };
    let axes = [SweepAxis::new(SweepParam::Rho, vec![0.1, 0.2, 0.3, 0.4, 0.5])];
    println!("\n rho  analytic  at-mean-b  empirical");
    for r in sweep(&base, &axes, 20_000).unwrap() {
        println!(
            "{:.2}  {:>8.4}  {:>9.4}  {:>9.4} +- {:.4}",
            r.config.rho, r.h_analytic, r.h_paper_style, r.h_empirical_mean, r.h_empirical_ci95
        );
    }
}
