//! What the colluding coalition sees, what it concludes, and how it
//! combines sessions over time.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::model::{AdversaryView, Destination, Endpoint, Population, Scenario, Tick, UserId};
use crate::sim::SessionTrace;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObservationPoint {
    MaliciousPeer,
    MaliciousExit,
    Server,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenIntercept {
    pub holder: UserId,
    pub at: Tick,
    pub content_hash: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservedConnection {
    pub source: Endpoint,
    pub point: ObservationPoint,
    pub at: Tick,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationLog {
    pub session_id: u64,
    pub token_intercepts: Vec<TokenIntercept>,
    pub observed_connections: Vec<ObservedConnection>,
}

impl ObservationLog {
    pub fn is_empty(&self) -> bool {
        self.token_intercepts.is_empty() && self.observed_connections.is_empty()
    }

    /// Distinct user addresses the adversary saw carrying the content.
    pub fn observed_users(&self) -> BTreeSet<UserId> {
        self.observed_connections
            .iter()
            .filter_map(|o| match o.source {
                Endpoint::User(u) => Some(u),
                _ => None,
            })
            .collect()
    }

    /// Connections counted at a compromised server, if any were seen there.
    pub fn server_count(&self) -> Option<usize> {
        let n = self
            .observed_connections
            .iter()
            .filter(|o| o.point == ObservationPoint::Server)
            .count();
        (n > 0).then_some(n)
    }
}

/// Filter a trace through the adversary's sensors.
///
/// * custody of the token at a colluder reveals the token content;
/// * P2P: a colluding destination peer sees the member that connects to it;
/// * client-server: the compromised server sees every destination-side
///   source (members for P2Priv, exits for NetPriv);
/// * NetPriv: a colluding exit opens its sealed request and sees the member.
///
/// Without a single colluding user there is no coalition to act on the
/// content and the log stays empty.
pub fn observe_session(trace: &SessionTrace, view: &AdversaryView, scenario: Scenario) -> ObservationLog {
    let mut log = ObservationLog {
        session_id: trace.session_id,
        ..ObservationLog::default()
    };
    if !view.has_coalition() {
        return log;
    }

    let content_hash = trace.token.content_hash();
    log.token_intercepts = trace
        .token_path_events
        .iter()
        .filter(|ev| view.malicious_users.contains(&ev.holder))
        .map(|ev| TokenIntercept {
            holder: ev.holder,
            at: ev.at,
            content_hash,
        })
        .collect();

    for c in &trace.connections {
        match scenario {
            Scenario::P2PrivP2P => {
                if let Destination::Peer(p) = c.destination {
                    if view.malicious_users.contains(&p) {
                        log.observed_connections.push(ObservedConnection {
                            source: Endpoint::User(c.origin),
                            point: ObservationPoint::MaliciousPeer,
                            at: c.sent_at,
                        });
                    }
                }
            }
            Scenario::P2PrivClientServer | Scenario::NetPrivClientServer => {
                if let Some(exit) = c.exit {
                    if view.malicious_exits.contains(&exit) {
                        log.observed_connections.push(ObservedConnection {
                            source: Endpoint::User(c.origin),
                            point: ObservationPoint::MaliciousExit,
                            at: c.sent_at,
                        });
                    }
                }
                if view.server_compromised && c.destination == Destination::Server {
                    log.observed_connections.push(ObservedConnection {
                        source: c.destination_side_source(),
                        point: ObservationPoint::Server,
                        at: c.sent_at,
                    });
                }
            }
        }
    }
    log
}

/// The adversary's posterior over honest users.
///
/// Stored compactly: explicit probabilities for singled-out users and one
/// shared probability for every other honest user.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateDistribution {
    focus: BTreeMap<UserId, f64>,
    background: f64,
    malicious: Arc<[bool]>,
    honest: usize,
}

impl CandidateDistribution {
    pub fn uniform(population: &Population) -> Self {
        CandidateDistribution {
            focus: BTreeMap::new(),
            background: 1.0 / population.honest_count() as f64,
            malicious: population.malicious_mask(),
            honest: population.honest_count(),
        }
    }

    fn background_count(&self) -> usize {
        self.honest - self.focus.len()
    }

    pub fn probability(&self, user: UserId) -> f64 {
        match self.malicious.get(user.0 as usize) {
            None | Some(true) => 0.0,
            Some(false) => self.focus.get(&user).copied().unwrap_or(self.background),
        }
    }

    /// Every honest user with its probability, ascending by id.
    pub fn iter(&self) -> impl Iterator<Item = (UserId, f64)> + '_ {
        self.malicious
            .iter()
            .enumerate()
            .filter(|(_, m)| !**m)
            .map(|(i, _)| {
                let u = UserId(i as u32);
                (u, self.probability(u))
            })
    }

    pub fn total(&self) -> f64 {
        self.focus.values().sum::<f64>() + self.background * self.background_count() as f64
    }

    /// Users with non-zero probability.
    pub fn support(&self) -> BTreeSet<UserId> {
        if self.background > 0.0 {
            self.iter().filter(|(_, p)| *p > 0.0).map(|(u, _)| u).collect()
        } else {
            self.focus.iter().filter(|(_, p)| **p > 0.0).map(|(u, _)| *u).collect()
        }
    }

    pub fn support_size(&self) -> usize {
        let focus = self.focus.values().filter(|p| **p > 0.0).count();
        if self.background > 0.0 {
            focus + self.background_count()
        } else {
            focus
        }
    }
}

/// Turn one session's log into a posterior.
///
/// Observed users each get `1/b`, where `b` is the cascade size: the number
/// of connections counted at the server when it is compromised, otherwise
/// `assumed_break` (raised above the number of observed users if needed).
/// The remaining mass is spread evenly over the other honest users.
pub fn posterior_from_observation(
    log: &ObservationLog,
    population: &Population,
    assumed_break: f64,
) -> CandidateDistribution {
    let observed: Vec<UserId> = log
        .observed_users()
        .into_iter()
        .filter(|u| !population.is_malicious(*u))
        .collect();
    if observed.is_empty() {
        return CandidateDistribution::uniform(population);
    }

    let k = observed.len() as f64;
    // Without a server-side count the adversary cannot know it saw the whole
    // cascade, so some mass always stays outside the observed set.
    let size = match log.server_count() {
        Some(n) => (n as f64).max(k),
        None => assumed_break.max(k + 1.0),
    };
    let p_observed = 1.0 / size;
    let honest = population.honest_count();
    let rest = honest - observed.len();
    let residual = 1.0 - k / size;
    let (p_observed, background) = if residual > 0.0 && rest > 0 {
        (p_observed, residual / rest as f64)
    } else {
        (1.0 / k, 0.0)
    };
    CandidateDistribution {
        focus: observed.into_iter().map(|u| (u, p_observed)).collect(),
        background,
        malicious: population.malicious_mask(),
        honest,
    }
}

/// Shannon entropy in bits.
pub fn entropy_of(dist: &CandidateDistribution) -> f64 {
    if dist.focus.is_empty() {
        return (dist.background_count() as f64).log2();
    }
    let term = |p: f64| if p > 0.0 { -p * p.log2() } else { 0.0 };
    let focus: f64 = dist.focus.values().map(|&p| term(p)).sum();
    focus + dist.background_count() as f64 * term(dist.background)
}

/// Running intersection of per-session candidate sets.
///
/// A session's candidate set is the support of its posterior, so a session
/// without observations contributes every honest user and Alice is never
/// evicted.
#[derive(Clone, Debug)]
pub struct IntersectionAttack {
    current: Option<BTreeSet<UserId>>,
    assumed_break: f64,
}

impl IntersectionAttack {
    pub fn new(assumed_break: f64) -> Self {
        IntersectionAttack {
            current: None,
            assumed_break,
        }
    }

    pub fn observe(&mut self, log: &ObservationLog, population: &Population) -> &BTreeSet<UserId> {
        let candidates = posterior_from_observation(log, population, self.assumed_break).support();
        let next = match self.current.take() {
            None => candidates,
            Some(prev) => prev.intersection(&candidates).copied().collect(),
        };
        self.current.insert(next)
    }

    pub fn candidates(&self) -> Option<&BTreeSet<UserId>> {
        self.current.as_ref()
    }
}

/// Candidate set after each session.
pub fn intersection_attack(
    logs: &[ObservationLog],
    population: &Population,
    assumed_break: f64,
) -> Vec<BTreeSet<UserId>> {
    let mut attack = IntersectionAttack::new(assumed_break);
    logs.iter()
        .map(|log| attack.observe(log, population).clone())
        .collect()
}
