//! Closed-form anonymity quantities for P2Priv and NetPriv.
//!
//! Everything here is a pure function of its arguments. The simulator is
//! validated against these values.
//!
//! Conventions:
//!
//! * The maximum entropy sums `1/(|N|(1-rho))` terms over the honest users
//!   only, so its upper summation bound is `|N|(1-rho)`.
//! * The expected broken-cascade size is computed by direct summation of
//!   the break-length distribution up to a cap (by default the honest
//!   population). The truncated distribution is not renormalized.
//! * Fractional expected set sizes enter the two-component entropy as
//!   real-valued weights.
//! * The probability of an unobserved honest node defaults to the
//!   normalized form `(1 - e/b) / (|N| - rho|N| - e)`, used for both P2P and
//!   NetPriv. [`PosteriorMode::Literal`] swaps in `(1 - 1/b) / (...)` for
//!   side-by-side reporting; it is not a distribution in general.
//! * At `rho = 0` no break ever happens and the adversary has nothing to act
//!   on, so every entropy collapses to `log2 |N|`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Scenario, ScenarioConfig};

const SIZE_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticError {
    #[error("no honest candidates: n_users * (1 - rho) = {0} < 1")]
    NoCandidates(f64),
    #[error("p_f = {0} is outside [0, 1)")]
    ForwardingOutOfRange(f64),
    #[error("{name} = {value} is outside its domain {domain}")]
    OutOfDomain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },
    #[error("cascade position must be at least 1")]
    ZeroPosition,
    #[error("cap must be at least 1")]
    ZeroCap,
    #[error("expected broken cascade size {0} is below 1")]
    BreakBelowOne(f64),
    #[error("outside set is empty ({0}) while residual probability remains")]
    EmptyOutsideSet(f64),
}

type Result<T> = std::result::Result<T, AnalyticError>;

/// Symbols shared by the closed forms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticInputs {
    pub n_users: usize,
    pub rho: f64,
    pub rho_e: f64,
    pub p_f: f64,
    /// Summation bound for the expected broken cascade.
    pub cap: usize,
}

impl AnalyticInputs {
    pub fn from_config(config: &ScenarioConfig) -> Self {
        AnalyticInputs {
            n_users: config.n_users,
            rho: config.rho,
            rho_e: config.rho_e,
            p_f: config.p_f,
            cap: config.effective_cap(),
        }
    }

    fn validate(&self) -> Result<()> {
        unit("rho", self.rho)?;
        unit("rho_e", self.rho_e)?;
        forwarding(self.p_f)?;
        if self.cap == 0 {
            return Err(AnalyticError::ZeroCap);
        }
        Ok(())
    }

    fn honest_real(&self) -> f64 {
        self.n_users as f64 * (1.0 - self.rho)
    }
}

fn unit(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(AnalyticError::OutOfDomain {
            name,
            value,
            domain: "[0, 1]",
        })
    }
}

fn forwarding(p_f: f64) -> Result<()> {
    if (0.0..1.0).contains(&p_f) {
        Ok(())
    } else {
        Err(AnalyticError::ForwardingOutOfRange(p_f))
    }
}

/// Entropy of a uniform guess over the honest users, `log2(|N|(1-rho))`.
pub fn max_entropy(n_users: usize, rho: f64) -> Result<f64> {
    unit("rho", rho)?;
    let honest = n_users as f64 * (1.0 - rho);
    if honest < 1.0 - SIZE_EPS {
        return Err(AnalyticError::NoCandidates(honest));
    }
    Ok(honest.max(1.0).log2())
}

/// Mean length of an unbroken random-walk cascade, Alice included:
/// `(p_f - 2) / (p_f - 1)`.
///
/// Note `p_f = 1/2` gives 3; the mapping `{1/2, 2/3, 4/5, 6/7} -> {2, 4, 6, 8}`
/// only holds from `2/3` on.
pub fn mean_cc_length(p_f: f64) -> Result<f64> {
    forwarding(p_f)?;
    Ok((p_f - 2.0) / (p_f - 1.0))
}

/// Probability that the adversary leaves exactly `n` honest nodes (Alice
/// included) in the cascade.
pub fn cc_break_pmf(n: usize, rho: f64, p_f: f64) -> Result<f64> {
    unit("rho", rho)?;
    forwarding(p_f)?;
    match n {
        0 => Err(AnalyticError::ZeroPosition),
        1 => Ok(rho),
        _ => {
            let k = (n - 1) as i32;
            Ok((1.0 - rho).powi(k) * (p_f.powi(k) * rho + (1.0 - p_f) * p_f.powi(k - 1)))
        }
    }
}

/// `sum_{n=1}^{cap} n * Pr(|CC_break| = n)`, not renormalized.
pub fn expected_cc_break(rho: f64, p_f: f64, cap: usize) -> Result<f64> {
    unit("rho", rho)?;
    forwarding(p_f)?;
    if cap == 0 {
        return Err(AnalyticError::ZeroCap);
    }
    // Running powers instead of powi per term: the sum reaches 10^5 terms
    // for large populations.
    let mut total = rho;
    let mut honest_pow = 1.0 - rho; // (1-rho)^(n-1)
    let mut fwd_pow = 1.0; // p_f^(n-2)
    for n in 2..=cap {
        let term = honest_pow * (fwd_pow * p_f * rho + (1.0 - p_f) * fwd_pow);
        total += n as f64 * term;
        honest_pow *= 1.0 - rho;
        fwd_pow *= p_f;
        if honest_pow * fwd_pow < 1e-300 {
            break;
        }
    }
    Ok(total)
}

/// The printed closed form of the expected broken-cascade size, with `cc_len`
/// standing for `|CC|`.
///
/// Read as `[...] / (p_f (1 + p_f (rho - 1)))`. It agrees with the direct sum
/// for large `cc_len` but not with the sum truncated at small `cc_len`; see
/// the cross-validation tests.
pub fn expected_cc_break_closed_form(rho: f64, p_f: f64, cc_len: u32) -> Result<f64> {
    unit("rho", rho)?;
    forwarding(p_f)?;
    if p_f == 0.0 {
        return Err(AnalyticError::OutOfDomain {
            name: "p_f",
            value: p_f,
            domain: "(0, 1) for the closed form",
        });
    }
    let c = cc_len as i32;
    let cf = cc_len as f64;
    let r1 = rho - 1.0;
    let bracket = (1.0 + cf) * p_f.powi(c) * r1.powi(c) - cf * p_f.powi(c + 1) * r1.powi(c + 1)
        - p_f * (rho - 2.0)
        + p_f * p_f * r1;
    Ok(bracket / (p_f * (1.0 + p_f * r1)))
}

/// `fraction * n_break`: the directly observed part of the cascade.
pub fn eavesdrop_size(fraction: f64, n_break: f64) -> Result<f64> {
    unit("fraction", fraction)?;
    if n_break < 0.0 {
        return Err(AnalyticError::OutOfDomain {
            name: "n_break",
            value: n_break,
            domain: "[0, inf)",
        });
    }
    Ok(fraction * n_break)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PosteriorMode {
    /// `p_other = (1 - e/b) / (|N| - rho|N| - e)`; a proper distribution.
    #[default]
    Normalized,
    /// `p_other = (1 - 1/b) / (|N| - rho|N| - e)`, evaluated as printed.
    Literal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorParams {
    /// Probability of each observed cascade member.
    pub p_a1: f64,
    /// Probability of each honest node outside the observed set.
    pub p_other: f64,
    pub n_eavesdropped: f64,
    pub n_break: f64,
    /// `|N| - rho|N| - e`, real valued.
    pub n_outside: f64,
}

impl PosteriorParams {
    pub fn total_probability(&self) -> f64 {
        self.p_a1 * self.n_eavesdropped + self.p_other * self.n_outside
    }

    /// Two-component entropy; empty weights contribute nothing.
    pub fn entropy(&self) -> f64 {
        let inside = self.n_eavesdropped / self.n_break;
        let outside = self.p_other * self.n_outside;
        let mut h = 0.0;
        if inside > 0.0 {
            h += inside * self.n_break.log2();
        }
        if outside > 0.0 {
            h -= outside * self.p_other.log2();
        }
        h
    }
}

/// Posterior parameters for explicit set sizes.
pub fn posterior_params_at(
    n_users: usize,
    rho: f64,
    n_break: f64,
    n_eavesdropped: f64,
    mode: PosteriorMode,
) -> Result<PosteriorParams> {
    unit("rho", rho)?;
    if n_break < 1.0 - SIZE_EPS {
        return Err(AnalyticError::BreakBelowOne(n_break));
    }
    if !(0.0..=n_break + SIZE_EPS).contains(&n_eavesdropped) {
        return Err(AnalyticError::OutOfDomain {
            name: "n_eavesdropped",
            value: n_eavesdropped,
            domain: "[0, n_break]",
        });
    }
    let p_a1 = 1.0 / n_break;
    let n_outside = n_users as f64 - rho * n_users as f64 - n_eavesdropped;
    let residual = match mode {
        PosteriorMode::Normalized => 1.0 - n_eavesdropped / n_break,
        PosteriorMode::Literal => 1.0 - p_a1,
    };
    let p_other = if residual <= 0.0 {
        0.0
    } else if n_outside <= SIZE_EPS {
        return Err(AnalyticError::EmptyOutsideSet(n_outside));
    } else {
        residual / n_outside
    };
    Ok(PosteriorParams {
        p_a1,
        p_other,
        n_eavesdropped,
        n_break,
        n_outside: n_outside.max(0.0),
    })
}

/// Observed fraction of the broken cascade for a scenario: `rho` for P2P
/// peers, everything for a compromised server, `rho_e` behind exits.
pub fn eavesdrop_fraction(scenario: Scenario, rho: f64, rho_e: f64) -> f64 {
    match scenario {
        Scenario::P2PrivP2P => rho,
        Scenario::P2PrivClientServer => 1.0,
        Scenario::NetPrivClientServer => rho_e,
    }
}

/// Posterior parameters with `n_break = E|CC_break|`.
pub fn posterior_params(
    inputs: &AnalyticInputs,
    scenario: Scenario,
    mode: PosteriorMode,
) -> Result<PosteriorParams> {
    inputs.validate()?;
    let n_break = expected_cc_break(inputs.rho, inputs.p_f, inputs.cap)?;
    let fraction = eavesdrop_fraction(scenario, inputs.rho, inputs.rho_e);
    let e = eavesdrop_size(fraction, n_break)?;
    posterior_params_at(inputs.n_users, inputs.rho, n_break, e, mode)
}

/// Scenario entropy evaluated at an explicit broken-cascade size.
///
/// This is what a Monte Carlo run plugs its empirical mean `|CC_break|`
/// into.
pub fn scenario_entropy_at(
    scenario: Scenario,
    n_users: usize,
    rho: f64,
    rho_e: f64,
    n_break: f64,
) -> Result<f64> {
    unit("rho", rho)?;
    unit("rho_e", rho_e)?;
    let h_max = max_entropy(n_users, rho)?;
    if rho == 0.0 {
        return Ok(h_max);
    }
    if n_break < 1.0 - SIZE_EPS {
        return Err(AnalyticError::BreakBelowOne(n_break));
    }
    match scenario {
        Scenario::P2PrivClientServer => Ok(n_break.max(1.0).log2()),
        Scenario::P2PrivP2P | Scenario::NetPrivClientServer => {
            let fraction = eavesdrop_fraction(scenario, rho, rho_e);
            let e = eavesdrop_size(fraction, n_break)?;
            let params = posterior_params_at(n_users, rho, n_break, e, PosteriorMode::Normalized)?;
            Ok(params.entropy())
        }
    }
}

/// Analytic entropy for a scenario.
pub fn scenario_entropy(scenario: Scenario, inputs: &AnalyticInputs) -> Result<f64> {
    inputs.validate()?;
    if inputs.rho == 0.0 {
        return max_entropy(inputs.n_users, 0.0);
    }
    if inputs.honest_real() < 1.0 - SIZE_EPS {
        return Err(AnalyticError::NoCandidates(inputs.honest_real()));
    }
    let n_break = expected_cc_break(inputs.rho, inputs.p_f, inputs.cap)?;
    scenario_entropy_at(scenario, inputs.n_users, inputs.rho, inputs.rho_e, n_break)
}

/// P2Priv sharing between peers: two-component entropy with `e = rho * b`.
pub fn entropy_p2priv_p2p(inputs: &AnalyticInputs) -> Result<f64> {
    scenario_entropy(Scenario::P2PrivP2P, inputs)
}

/// P2Priv against a compromised server: `log2 E|CC_break|`. Independent of
/// `n_users` for a fixed cap.
pub fn entropy_p2priv_cs(inputs: &AnalyticInputs) -> Result<f64> {
    scenario_entropy(Scenario::P2PrivClientServer, inputs)
}

/// NetPriv against a compromised server: two-component entropy with
/// `e = rho_e * b`. At `rho_e = 1` it equals [`entropy_p2priv_cs`].
pub fn entropy_netpriv(inputs: &AnalyticInputs) -> Result<f64> {
    scenario_entropy(Scenario::NetPrivClientServer, inputs)
}
