//! Figure datasets without the CLI. Prints one curve per preset.
//!
//!     cargo run --release --example reproduce_figures

use netpriv::harness::{reproduce, FigureId};

fn main() {
    for fig in FigureId::ALL {
        let data = reproduce(fig, 0, 0).unwrap();
        let p = &data.preset;
        let p_f = p.p_fs[0];
        let rho_e = *p.rho_es.last().unwrap();
        let curve: Vec<String> = data
            .curve(p_f, rho_e)
            .iter()
            .step_by(4)
            .map(|pt| format!("{:.2}:{:.2}", pt.rho, pt.h_analytic))
            .collect();
        println!("{fig} {} ({} points)", p.title, data.analytic.len());
        println!("  p_f={p_f:.3} rho_e={rho_e}  {}", curve.join(" "));
    }
}
