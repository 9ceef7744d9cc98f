//! Monte Carlo runs, parameter sweeps, long-term intersection runs and the
//! figure presets.
//!
//! Every trial draws from its own RNG stream, so a parallel run and a
//! sequential run with the same seed give identical reports.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{entropy_of, observe_session, posterior_from_observation, IntersectionAttack};
use crate::analytic::{self, AnalyticError, AnalyticInputs};
use crate::model::{
    build_population, rng_stream, ModelError, NetPrivCascade, Population, Scenario,
    ScenarioConfig, StreamDomain, UserId,
};
use crate::sim::{execute_session, SessionSpec, SimError};

pub const DEFAULT_TRIALS: u64 = 100_000;

#[derive(Debug, Error, PartialEq)]
pub enum HarnessError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("sessions must be at least 1")]
    NoSessions,
    #[error("sweep axis {0} has no values")]
    EmptyAxis(SweepParam),
    #[error("unknown figure '{0}' (valid: fig2, fig3, fig4, fig5, fig6, fig7, fig8, fig9)")]
    UnknownFigure(String),
}

type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub config: ScenarioConfig,
    pub h_analytic: f64,
    pub h_max: f64,
    pub h_empirical_mean: f64,
    /// Half-width of the 95% confidence interval of `h_empirical_mean`.
    pub h_empirical_ci95: f64,
    /// Analytic formula evaluated at the empirical mean `|CC_break|`.
    pub h_paper_style: f64,
    /// Empirical mean number of connecting cascade members.
    pub mean_break: f64,
    pub trials: u64,
    pub seed: u64,
}

struct TrialOutcome {
    entropy: f64,
    members: usize,
}

fn run_trial(
    config: &ScenarioConfig,
    population: &Population,
    view: &crate::model::AdversaryView,
    honest: &[UserId],
    assumed_break: f64,
    trial: u64,
) -> Result<TrialOutcome> {
    let mut rng = rng_stream(config.seed, StreamDomain::Trial, trial);
    let alice = honest[rng.gen_range(0..honest.len())];
    let trace = execute_session(
        config,
        population,
        alice,
        SessionSpec { id: trial, key: trial },
        &mut rng,
    )?;
    let log = observe_session(&trace, view, config.scenario);
    let dist = posterior_from_observation(&log, population, assumed_break);
    Ok(TrialOutcome {
        entropy: entropy_of(&dist),
        members: trace.cascade.len(),
    })
}

/// Expected cascade size the adversary assumes when it cannot count
/// connections.
fn assumed_break(config: &ScenarioConfig) -> f64 {
    if config.rho == 0.0 {
        return analytic::mean_cc_length(config.p_f).unwrap_or(1.0);
    }
    analytic::expected_cc_break(config.rho, config.p_f, config.effective_cap()).unwrap_or(1.0)
}

/// Run `trials` independent sessions, each with a fresh uniformly chosen
/// honest Alice, and compare the adversary's entropy with the analytic
/// value.
pub fn run_monte_carlo(config: &ScenarioConfig, trials: u64) -> Result<EntropyReport> {
    if trials == 0 {
        return Err(HarnessError::NoTrials);
    }
    let (population, view) = build_population(config)?;
    let inputs = AnalyticInputs::from_config(config);
    let h_analytic = analytic::scenario_entropy(config.scenario, &inputs)?;
    let h_max = analytic::max_entropy(config.n_users, config.rho)?;
    let honest: Vec<UserId> = population.honest_users().collect();
    let assumed = assumed_break(config);

    let outcomes = (0..trials)
        .into_par_iter()
        .map(|t| run_trial(config, &population, &view, &honest, assumed, t))
        .collect::<Result<Vec<_>>>()?;

    // Sequential fold over the ordered results keeps the sums bit-identical
    // however rayon split the work.
    let n = trials as f64;
    let mean_h = outcomes.iter().map(|o| o.entropy).sum::<f64>() / n;
    let mean_b = outcomes.iter().map(|o| o.members as f64).sum::<f64>() / n;
    let var = if trials > 1 {
        outcomes.iter().map(|o| (o.entropy - mean_h).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let h_paper_style = analytic::scenario_entropy_at(
        config.scenario,
        config.n_users,
        config.rho,
        config.rho_e,
        mean_b,
    )?;

    Ok(EntropyReport {
        config: config.clone(),
        h_analytic,
        h_max,
        h_empirical_mean: mean_h,
        h_empirical_ci95: 1.96 * (var / n).sqrt(),
        h_paper_style,
        mean_break: mean_b,
        trials,
        seed: config.seed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    Rho,
    RhoE,
    PF,
    NUsers,
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParam::Rho => "rho",
            SweepParam::RhoE => "rho_e",
            SweepParam::PF => "p_f",
            SweepParam::NUsers => "n_users",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

impl SweepAxis {
    pub fn new(param: SweepParam, values: impl Into<Vec<f64>>) -> Self {
        SweepAxis {
            param,
            values: values.into(),
        }
    }

    fn apply(&self, config: &mut ScenarioConfig, value: f64) {
        match self.param {
            SweepParam::Rho => config.rho = value,
            SweepParam::RhoE => config.rho_e = value,
            SweepParam::PF => config.p_f = value,
            SweepParam::NUsers => config.n_users = value.round() as usize,
        }
    }
}

/// Cartesian product of the axes, first axis outermost.
pub fn grid(base: &ScenarioConfig, axes: &[SweepAxis]) -> Result<Vec<ScenarioConfig>> {
    if let Some(empty) = axes.iter().find(|a| a.values.is_empty()) {
        return Err(HarnessError::EmptyAxis(empty.param));
    }
    let mut points = vec![base.clone()];
    for axis in axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.values.iter().map(move |&v| {
                    let mut q = p.clone();
                    axis.apply(&mut q, v);
                    q
                })
            })
            .collect();
    }
    Ok(points)
}

/// One Monte Carlo report per grid point, in grid order.
pub fn sweep(base: &ScenarioConfig, axes: &[SweepAxis], trials: u64) -> Result<Vec<EntropyReport>> {
    grid(base, axes)?
        .iter()
        .map(|c| run_monte_carlo(c, trials))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LongTermRun {
    pub seed: u64,
    pub alice: UserId,
    /// Candidate-set size after each session.
    pub trajectory: Vec<usize>,
    /// 1-based session index at which only Alice remained.
    pub isolated_at: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LongTermStats {
    pub runs: Vec<LongTermRun>,
}

impl LongTermStats {
    pub fn isolation_fraction(&self) -> f64 {
        let isolated = self.runs.iter().filter(|r| r.isolated_at.is_some()).count();
        isolated as f64 / self.runs.len().max(1) as f64
    }

    /// Median isolation index over all seeds, `None` counting as infinite.
    pub fn median_isolation(&self) -> Option<usize> {
        let mut idx: Vec<usize> = self
            .runs
            .iter()
            .map(|r| r.isolated_at.unwrap_or(usize::MAX))
            .collect();
        if idx.is_empty() {
            return None;
        }
        idx.sort_unstable();
        let m = idx[(idx.len() - 1) / 2];
        (m != usize::MAX).then_some(m)
    }

    /// Smallest session count by which `fraction` of the seeds isolated Alice.
    pub fn sessions_to_isolate(&self, fraction: f64) -> Option<usize> {
        let mut idx: Vec<usize> = self.runs.iter().filter_map(|r| r.isolated_at).collect();
        idx.sort_unstable();
        let need = (fraction * self.runs.len() as f64).ceil() as usize;
        (need >= 1 && need <= idx.len()).then(|| idx[need - 1])
    }
}

fn longterm_one(config: &ScenarioConfig, sessions: usize) -> Result<LongTermRun> {
    let (population, view) = build_population(config)?;
    let honest: Vec<UserId> = population.honest_users().collect();
    let mut pick = rng_stream(config.seed, StreamDomain::Alice, 0);
    let alice = honest[pick.gen_range(0..honest.len())];
    let mut attack = IntersectionAttack::new(assumed_break(config));
    let mut trajectory = Vec::with_capacity(sessions);
    let mut isolated_at = None;
    // NetPriv sessions all share one session key: Alice keeps her cascade.
    let key = 0;
    for s in 0..sessions as u64 {
        let mut rng = rng_stream(config.seed, StreamDomain::Session, s);
        let trace = execute_session(config, &population, alice, SessionSpec { id: s, key }, &mut rng)?;
        let log = observe_session(&trace, &view, config.scenario);
        let current = attack.observe(&log, &population);
        if isolated_at.is_none() && current.len() == 1 && current.contains(&alice) {
            isolated_at = Some(s as usize + 1);
        }
        trajectory.push(current.len());
    }
    Ok(LongTermRun {
        seed: config.seed,
        alice,
        trajectory,
        isolated_at,
    })
}

/// Per seed: fix an Alice, run `sessions` sessions and intersect the
/// adversary's candidate sets.
pub fn run_longterm(config: &ScenarioConfig, sessions: usize, seeds: &[u64]) -> Result<LongTermStats> {
    if sessions == 0 {
        return Err(HarnessError::NoSessions);
    }
    let runs = seeds
        .par_iter()
        .map(|&seed| longterm_one(&config.with_seed(seed), sessions))
        .collect::<Result<Vec<_>>>()?;
    Ok(LongTermStats { runs })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FigureId {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Fig7,
    Fig8,
    Fig9,
}

impl FigureId {
    pub const ALL: [FigureId; 8] = [
        FigureId::Fig2,
        FigureId::Fig3,
        FigureId::Fig4,
        FigureId::Fig5,
        FigureId::Fig6,
        FigureId::Fig7,
        FigureId::Fig8,
        FigureId::Fig9,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FigureId::Fig2 => "fig2",
            FigureId::Fig3 => "fig3",
            FigureId::Fig4 => "fig4",
            FigureId::Fig5 => "fig5",
            FigureId::Fig6 => "fig6",
            FigureId::Fig7 => "fig7",
            FigureId::Fig8 => "fig8",
            FigureId::Fig9 => "fig9",
        }
    }

    pub fn preset(self) -> FigurePreset {
        use FigureId::*;
        let four_pf = vec![0.5, 2.0 / 3.0, 0.8, 6.0 / 7.0];
        let (scenario, n_users, p_fs, rho_es, title) = match self {
            Fig2 => (Scenario::P2PrivP2P, 10, four_pf, vec![0.0], "P2Priv P2P entropy vs max, |N|=10"),
            Fig3 => (Scenario::P2PrivP2P, 1000, four_pf, vec![0.0], "P2Priv P2P entropy vs max, |N|=1000"),
            Fig4 => (Scenario::P2PrivClientServer, 10, four_pf, vec![1.0], "P2Priv client-server entropy, |N|=10"),
            Fig5 => (Scenario::P2PrivClientServer, 1000, four_pf, vec![1.0], "P2Priv client-server entropy, |N|=1000"),
            Fig6 => (Scenario::NetPrivClientServer, 10, vec![2.0 / 3.0], twentieths(), "NetPriv entropy over rho and rho_e, |N|=10"),
            Fig7 => (Scenario::NetPrivClientServer, 1000, vec![2.0 / 3.0], twentieths(), "NetPriv entropy over rho and rho_e, |N|=1000"),
            Fig8 => (Scenario::NetPrivClientServer, 10, four_pf, vec![0.5], "NetPriv entropy at rho_e=1/2, |N|=10"),
            Fig9 => (Scenario::NetPrivClientServer, 1000, four_pf, vec![0.5], "NetPriv entropy at rho_e=1/2, |N|=1000"),
        };
        FigurePreset {
            id: self,
            title,
            scenario,
            n_users,
            p_fs,
            rhos: twentieths().into_iter().filter(|r| *r < 1.0).collect(),
            rho_es,
        }
    }
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FigureId {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        FigureId::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| HarnessError::UnknownFigure(s.to_string()))
    }
}

/// `0, 0.05, ..., 1`, each value exact as `k / 20`.
fn twentieths() -> Vec<f64> {
    (0..=20).map(|k| k as f64 / 20.0).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FigurePreset {
    pub id: FigureId,
    pub title: &'static str,
    pub scenario: Scenario,
    pub n_users: usize,
    pub p_fs: Vec<f64>,
    pub rhos: Vec<f64>,
    pub rho_es: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticPoint {
    pub scenario: Scenario,
    pub n_users: usize,
    pub rho: f64,
    pub rho_e: f64,
    pub p_f: f64,
    pub cap: usize,
    pub h_max: f64,
    pub h_analytic: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FigureDataset {
    pub preset: FigurePreset,
    /// Points where the analytic model is defined, ordered p_f, rho_e, rho.
    pub analytic: Vec<AnalyticPoint>,
    pub overlay: Vec<EntropyReport>,
}

impl FigureDataset {
    /// One curve (fixed p_f and rho_e), ordered by rho.
    pub fn curve(&self, p_f: f64, rho_e: f64) -> Vec<&AnalyticPoint> {
        self.analytic
            .iter()
            .filter(|p| p.p_f == p_f && p.rho_e == rho_e)
            .collect()
    }
}

/// Base config used for overlays: exits sized so every `rho_e` grid value
/// maps to a whole number of colluding exits.
fn overlay_base(preset: &FigurePreset, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        n_users: preset.n_users,
        n_exits: 100,
        scenario: preset.scenario,
        seed,
        ..ScenarioConfig::default()
    }
}

/// Analytic dataset for a figure, plus a Monte Carlo overlay when
/// `overlay_trials > 0`. The overlay uses the rho values that give a whole
/// number of colluders and a coarser grid than the analytic curves.
pub fn reproduce(figure: FigureId, overlay_trials: u64, seed: u64) -> Result<FigureDataset> {
    let preset = figure.preset();
    let mut analytic = Vec::new();
    for &p_f in &preset.p_fs {
        for &rho_e in &preset.rho_es {
            for &rho in &preset.rhos {
                let cap = crate::model::honest_count_real(preset.n_users, rho).max(1);
                let inputs = AnalyticInputs {
                    n_users: preset.n_users,
                    rho,
                    rho_e,
                    p_f,
                    cap,
                };
                let (Ok(h_max), Ok(h)) = (
                    analytic::max_entropy(preset.n_users, rho),
                    analytic::scenario_entropy(preset.scenario, &inputs),
                ) else {
                    continue;
                };
                analytic.push(AnalyticPoint {
                    scenario: preset.scenario,
                    n_users: preset.n_users,
                    rho,
                    rho_e,
                    p_f,
                    cap,
                    h_max,
                    h_analytic: h,
                });
            }
        }
    }

    let mut overlay = Vec::new();
    if overlay_trials > 0 {
        let base = overlay_base(&preset, seed);
        let rhos = [0.1, 0.3, 0.5, 0.7];
        let rho_es: Vec<f64> = if preset.rho_es.len() > 1 {
            vec![0.0, 0.25, 0.5, 0.75, 1.0]
        } else {
            preset.rho_es.clone()
        };
        let p_fs = if preset.p_fs.len() > 1 {
            vec![2.0 / 3.0, 6.0 / 7.0]
        } else {
            preset.p_fs.clone()
        };
        let axes = [
            SweepAxis::new(SweepParam::PF, p_fs),
            SweepAxis::new(SweepParam::RhoE, rho_es),
            SweepAxis::new(SweepParam::Rho, rhos.to_vec()),
        ];
        for point in grid(&base, &axes)? {
            let mut point = point;
            if point.scenario == Scenario::NetPrivClientServer {
                point.netpriv_cascade = NetPrivCascade::WalkLaw;
            }
            // analytic model undefined here (e.g. cap too small for |N|=10)
            match run_monte_carlo(&point, overlay_trials) {
                Ok(r) => overlay.push(r),
                Err(HarnessError::Analytic(_)) => continue,
                Err(e) => return Err(e),
            }
        }
    }

    Ok(FigureDataset {
        preset,
        analytic,
        overlay,
    })
}
