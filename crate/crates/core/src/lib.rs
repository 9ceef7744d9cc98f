//! Anonymity simulator for parallel-link request cloning.
//!
//! A sender's request is copied across a cloning cascade of peers so that
//! several users contact the destination at once. The crate computes how much
//! sender anonymity survives a colluding adversary, both from closed-form
//! expressions ([`analytic`]) and by simulating sessions ([`sim`],
//! [`adversary`], [`harness`]).

pub mod adversary;
pub mod analytic;
pub mod cli;
pub mod harness;
pub mod model;
pub mod sim;

pub use adversary::{
    entropy_of, intersection_attack, observe_session, posterior_from_observation,
    CandidateDistribution, IntersectionAttack, ObservationLog,
};
pub use analytic::{AnalyticError, AnalyticInputs, PosteriorMode, PosteriorParams};
pub use harness::{run_longterm, run_monte_carlo, sweep, EntropyReport, FigureId, HarnessError};
pub use model::{
    build_population, AdversaryView, BreakCap, NetPrivCascade, Population, Scenario,
    ScenarioConfig, UserId,
};
pub use sim::{execute_session, Cascade, SessionSpec, SessionTrace};
