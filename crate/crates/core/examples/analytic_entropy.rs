//! Closed-form sender entropy for the three deployment scenarios.
//!
//!     cargo run --example analytic_entropy

use netpriv::analytic::{self, AnalyticInputs};
use netpriv::model::{BreakCap, Scenario};

fn main() {
    let n_users = 1000;
    let p_f = 2.0 / 3.0;

    println!("mean cascade length");
    for p in [0.5, 2.0 / 3.0, 0.8, 6.0 / 7.0] {
        println!("  p_f={p:.3}  {:.3}", analytic::mean_cc_length(p).unwrap());
    }

    println!("\nentropy in bits, |N|={n_users}, p_f=2/3, rho_e=0.5");
    println!("{:>5} {:>9} {:>9} {:>9} {:>9} {:>8}", "rho", "max", "p2p", "cs", "netpriv", "E|CC|");
    for k in 0..=10 {
        let rho = k as f64 * 0.05;
        let inputs = AnalyticInputs {
            n_users,
            rho,
            rho_e: 0.5,
            p_f,
            cap: BreakCap::Auto.resolve(n_users, rho),
        };
        let h = |s| analytic::scenario_entropy(s, &inputs).unwrap();
        let b = if rho > 0.0 {
            analytic::expected_cc_break(rho, p_f, inputs.cap).unwrap()
        } else {
            f64::NAN
        };
        println!(
            "{rho:>5.2} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {b:>8.3}",
            analytic::max_entropy(n_users, rho).unwrap(),
            h(Scenario::P2PrivP2P),
            h(Scenario::P2PrivClientServer),
            h(Scenario::NetPrivClientServer),
        );
    }

    // truncating the sum at a short cascade instead of the honest population
    let rho = 0.15;
    println!("\nE|CC_break| at rho={rho}: cap 4 -> {:.4}, cap auto -> {:.4}, closed form |CC|=4 -> {:.4}",
        analytic::expected_cc_break(rho, p_f, 4).unwrap(),
        analytic::expected_cc_break(rho, p_f, BreakCap::Auto.resolve(n_users, rho)).unwrap(),
        analytic::expected_cc_break_closed_form(rho, p_f, 4).unwrap(),
    );
}
