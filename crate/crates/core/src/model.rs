//! Domain types shared by every module: node identities, scenario
//! parameters, the population with its colluding subset, and the two
//! protocol messages (cloning token and sealed exit request).

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Logical clock tick.
pub type Tick = u64;

/// Tolerance used when flooring products such as `rho * n` that are meant
/// to be integers but come out of binary floating point slightly short.
const FLOOR_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("{name} = {value} is outside [0, 1]")]
    FractionOutOfRange { name: &'static str, value: f64 },
    #[error("p_f = {0} is outside [0, 1)")]
    ForwardingOutOfRange(f64),
    #[error("n_users = {0}: at least 2 users are required")]
    TooFewUsers(usize),
    #[error("a NetPriv scenario requires at least one exit node")]
    NoExits,
    #[error("break cap must be at least 1")]
    ZeroCap,
    #[error("jitter_max must be positive")]
    ZeroJitter,
    #[error("no honest user left (n_users = {n_users}, rho = {rho})")]
    NoHonestUsers { n_users: usize, rho: f64 },
    #[error("request_time {request_time} does not exceed injection time {injected_at} plus traversal bound {traversal}")]
    RequestTooEarly {
        request_time: Tick,
        injected_at: Tick,
        traversal: Tick,
    },
    #[error("exit request is sealed for exit {sealed_for}, not {opener}")]
    SealedForOther { sealed_for: ExitId, opener: ExitId },
    #[error("unknown scenario '{0}' (expected p2priv-p2p, p2priv-cs or netpriv-cs)")]
    UnknownScenario(String),
}

/// A user node (potential initiator, clone, or colluder).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UserId(pub u32);

/// An exit node of the NetPriv overlay.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ExitId(pub u32);

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "u{}", self.0)
    }
}

impl fmt::Display for ExitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

/// Any addressable node, as seen on the wire.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Endpoint {
    User(UserId),
    Exit(ExitId),
    Server,
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::User(u) => u.fmt(f),
            Endpoint::Exit(e) => e.fmt(f),
            Endpoint::Server => f.write_str("server"),
        }
    }
}

/// Where content is fetched from.
///
/// `Swarm` only appears in cloning tokens of the P2P scenario: each clone
/// then picks a concrete `Peer` for its own connection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Destination {
    Server,
    Swarm,
    Peer(UserId),
}

impl fmt::Display for Destination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Destination::Server => f.write_str("server"),
            Destination::Swarm => f.write_str("swarm"),
            Destination::Peer(u) => u.fmt(f),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    /// P2Priv sharing content between equivalent peers.
    P2PrivP2P,
    /// P2Priv clones all connecting to one (compromised) server.
    P2PrivClientServer,
    /// NetPriv: persistent cascade, each link terminated by an exit node.
    NetPrivClientServer,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [
        Scenario::P2PrivP2P,
        Scenario::P2PrivClientServer,
        Scenario::NetPrivClientServer,
    ];

    pub fn is_client_server(self) -> bool {
        !matches!(self, Scenario::P2PrivP2P)
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::P2PrivP2P => "p2priv-p2p",
            Scenario::P2PrivClientServer => "p2priv-cs",
            Scenario::NetPrivClientServer => "netpriv-cs",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| ModelError::UnknownScenario(s.to_string()))
    }
}

/// Upper bound on cascade positions, both for the expectation sum and for
/// the simulated walk.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BreakCap {
    /// `floor(n_users * (1 - rho))`: the cascade cannot outgrow the honest
    /// population.
    Auto,
    Fixed(usize),
}

impl BreakCap {
    pub fn resolve(self, n_users: usize, rho: f64) -> usize {
        match self {
            BreakCap::Auto => honest_count_real(n_users, rho),
            BreakCap::Fixed(cap) => cap,
        }
    }
}

impl fmt::Display for BreakCap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BreakCap::Auto => f.write_str("auto"),
            BreakCap::Fixed(c) => write!(f, "{c}"),
        }
    }
}

/// How a NetPriv sender fixes her persistent cloning cascade.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NetPrivCascade {
    /// Composition drawn once per session key from the truncated
    /// random-walk law (mean length `(p_f - 2)/(p_f - 1)`, 4 at `p_f = 2/3`),
    /// subject to the active break, then reused for every session.
    WalkLaw,
    /// Alice plus `len - 1` honest clones chosen by the sender.
    Fixed(usize),
}

impl fmt::Display for NetPrivCascade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NetPrivCascade::WalkLaw => f.write_str("walk"),
            NetPrivCascade::Fixed(k) => write!(f, "{k}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_users: usize,
    pub n_exits: usize,
    /// Fraction of colluding user nodes.
    pub rho: f64,
    /// Fraction of colluding exit nodes (NetPriv only).
    pub rho_e: f64,
    /// Random-walk forwarding probability.
    pub p_f: f64,
    pub scenario: Scenario,
    pub break_cap: BreakCap,
    /// `None` selects 4 x the traversal bound.
    pub jitter_max: Option<Tick>,
    pub netpriv_cascade: NetPrivCascade,
    /// Truncate cascades at the first colluding token holder.
    pub active_break: bool,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_users: 1000,
            n_exits: 100,
            rho: 0.1,
            rho_e: 0.5,
            p_f: 2.0 / 3.0,
            scenario: Scenario::P2PrivClientServer,
            break_cap: BreakCap::Auto,
            jitter_max: None,
            netpriv_cascade: NetPrivCascade::WalkLaw,
            active_break: true,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        check_fraction("rho", self.rho)?;
        check_fraction("rho_e", self.rho_e)?;
        if !(0.0..1.0).contains(&self.p_f) {
            return Err(ModelError::ForwardingOutOfRange(self.p_f));
        }
        if self.n_users < 2 {
            return Err(ModelError::TooFewUsers(self.n_users));
        }
        if self.scenario == Scenario::NetPrivClientServer && self.n_exits == 0 {
            return Err(ModelError::NoExits);
        }
        if self.break_cap == BreakCap::Fixed(0) {
            return Err(ModelError::ZeroCap);
        }
        if self.jitter_max == Some(0) {
            return Err(ModelError::ZeroJitter);
        }
        if self.n_users - colluder_count(self.n_users, self.rho) == 0 {
            return Err(ModelError::NoHonestUsers {
                n_users: self.n_users,
                rho: self.rho,
            });
        }
        Ok(())
    }

    /// Effective cap, never below 1.
    pub fn effective_cap(&self) -> usize {
        self.break_cap.resolve(self.n_users, self.rho).max(1)
    }

    /// Worst-case number of ticks the token spends in the mix layer: one
    /// tick per honest walk position plus the absorbing colluder.
    pub fn traversal_bound(&self) -> Tick {
        let positions = match (self.scenario, self.netpriv_cascade) {
            (Scenario::NetPrivClientServer, NetPrivCascade::Fixed(k)) => k,
            _ => self.effective_cap(),
        };
        positions as Tick + 1
    }

    pub fn jitter_max(&self) -> Tick {
        self.jitter_max.unwrap_or(4 * self.traversal_bound())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ScenarioConfig {
            seed,
            ..self.clone()
        }
    }
}

fn check_fraction(name: &'static str, value: f64) -> Result<(), ModelError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(ModelError::FractionOutOfRange { name, value })
    }
}

/// `floor(fraction * count)`, robust to products like `0.29 * 100`.
pub fn colluder_count(count: usize, fraction: f64) -> usize {
    ((fraction * count as f64) + FLOOR_EPS).floor() as usize
}

/// `floor(n * (1 - rho))`.
pub fn honest_count_real(n_users: usize, rho: f64) -> usize {
    ((n_users as f64 * (1.0 - rho)) + FLOOR_EPS).floor().max(0.0) as usize
}

/// Which RNG stream family a draw belongs to. Streams never overlap, so
/// every consumer of randomness is independent of the others and of the
/// order in which parallel workers run.
#[derive(Clone, Copy, Debug)]
#[repr(u8)]
pub enum StreamDomain {
    Population = 1,
    Trial = 2,
    Session = 3,
    Persistent = 4,
    Alice = 5,
}

/// Deterministic per-purpose RNG split from a master seed.
pub fn rng_stream(seed: u64, domain: StreamDomain, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << 56) ^ (index & 0x00ff_ffff_ffff_ffff));
    rng
}

/// SplitMix64 finalizer, used to fold several keys into one stream index.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// What the adversary controls.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversaryView {
    pub malicious_users: BTreeSet<UserId>,
    pub malicious_exits: BTreeSet<ExitId>,
    pub server_compromised: bool,
}

impl AdversaryView {
    /// Observation needs at least one colluding user: without one the
    /// adversary has no way to act on, or learn of, the content of interest.
    pub fn has_coalition(&self) -> bool {
        !self.malicious_users.is_empty()
    }
}

/// Role assignment for one scenario instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Population {
    seed: u64,
    user_malicious: Arc<[bool]>,
    exit_malicious: Arc<[bool]>,
    has_server: bool,
}

impl Population {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_users(&self) -> usize {
        self.user_malicious.len()
    }

    pub fn n_exits(&self) -> usize {
        self.exit_malicious.len()
    }

    pub fn has_server(&self) -> bool {
        self.has_server
    }

    pub fn is_malicious(&self, user: UserId) -> bool {
        self.user_malicious[user.0 as usize]
    }

    pub fn is_malicious_exit(&self, exit: ExitId) -> bool {
        self.exit_malicious[exit.0 as usize]
    }

    /// Shared mask `mask[i] == true` iff user `i` colludes.
    pub fn malicious_mask(&self) -> Arc<[bool]> {
        Arc::clone(&self.user_malicious)
    }

    pub fn users(&self) -> impl Iterator<Item = UserId> + '_ {
        (0..self.n_users() as u32).map(UserId)
    }

    pub fn honest_users(&self) -> impl Iterator<Item = UserId> + '_ {
        self.users().filter(|u| !self.is_malicious(*u))
    }

    pub fn honest_count(&self) -> usize {
        self.user_malicious.iter().filter(|m| !**m).count()
    }
}

/// Assign colluders uniformly at random (exact counts) under the config seed.
pub fn build_population(
    config: &ScenarioConfig,
) -> Result<(Population, AdversaryView), ModelError> {
    config.validate()?;
    let mut rng = rng_stream(config.seed, StreamDomain::Population, 0);

    let n_users = config.n_users;
    let n_exits = if config.scenario == Scenario::NetPrivClientServer {
        config.n_exits
    } else {
        0
    };

    let mut user_malicious = vec![false; n_users];
    let bad_users = colluder_count(n_users, config.rho);
    for i in index::sample(&mut rng, n_users, bad_users) {
        user_malicious[i] = true;
    }

    let mut exit_malicious = vec![false; n_exits];
    let bad_exits = colluder_count(n_exits, config.rho_e);
    for i in index::sample(&mut rng, n_exits, bad_exits) {
        exit_malicious[i] = true;
    }

    let view = AdversaryView {
        malicious_users: flagged(&user_malicious).map(UserId).collect(),
        malicious_exits: flagged(&exit_malicious).map(ExitId).collect(),
        server_compromised: config.scenario.is_client_server(),
    };
    let population = Population {
        seed: config.seed,
        user_malicious: user_malicious.into(),
        exit_malicious: exit_malicious.into(),
        has_server: config.scenario.is_client_server(),
    };
    Ok((population, view))
}

fn flagged(mask: &[bool]) -> impl Iterator<Item = u32> + '_ {
    mask.iter()
        .enumerate()
        .filter(|(_, m)| **m)
        .map(|(i, _)| i as u32)
}

/// Signalling message that recruits clones.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloningToken {
    pub dest_addr: Destination,
    pub request_time: Tick,
    pub request: Vec<u8>,
}

impl CloningToken {
    /// Build a token injected at `injected_at` into a cascade whose traversal
    /// takes at most `traversal` ticks. The request time must lie strictly
    /// after the token can have reached every clone.
    pub fn new(
        dest_addr: Destination,
        request_time: Tick,
        request: Vec<u8>,
        injected_at: Tick,
        traversal: Tick,
    ) -> Result<Self, ModelError> {
        if request_time <= injected_at + traversal {
            return Err(ModelError::RequestTooEarly {
                request_time,
                injected_at,
                traversal,
            });
        }
        Ok(CloningToken {
            dest_addr,
            request_time,
            request,
        })
    }

    /// Stable fingerprint of the token content, as recorded by a colluding
    /// custodian.
    pub fn content_hash(&self) -> u64 {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(self.dest_addr.to_string().as_bytes());
        hasher.update(self.request_time.to_le_bytes());
        hasher.update(&self.request);
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
    }
}

/// `{src_addr, dest_addr, request}` sealed under one exit node's key.
/// Only that exit can open it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExitRequest {
    src_addr: UserId,
    dest_addr: Destination,
    request: Vec<u8>,
    sealed_for: ExitId,
}

impl ExitRequest {
    pub fn seal(src_addr: UserId, dest_addr: Destination, request: Vec<u8>, exit: ExitId) -> Self {
        ExitRequest {
            src_addr,
            dest_addr,
            request,
            sealed_for: exit,
        }
    }

    pub fn sealed_for(&self) -> ExitId {
        self.sealed_for
    }

    pub fn open(&self, opener: ExitId) -> Result<(UserId, Destination, &[u8]), ModelError> {
        if opener != self.sealed_for {
            return Err(ModelError::SealedForOther {
                sealed_for: self.sealed_for,
                opener,
            });
        }
        Ok((self.src_addr, self.dest_addr, &self.request))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n_users: usize, rho: f64, seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            n_users,
            rho,
            seed,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn zero_fraction_has_no_colluders() {
        let (_, view) = build_population(&cfg(10, 0.0, 1)).unwrap();
        assert!(view.malicious_users.is_empty());
    }

    #[test]
    fn exact_colluder_count() {
        let (pop, view) = build_population(&cfg(10, 0.2, 1)).unwrap();
        assert_eq!(view.malicious_users.len(), 2);
        assert_eq!(pop.honest_count(), 8);
        // 0.29 * 100 is 28.999999999999996 in binary
        assert_eq!(colluder_count(100, 0.29), 29);
    }

    #[test]
    fn same_seed_same_population() {
        let a = build_population(&cfg(1000, 0.5, 42)).unwrap();
        let b = build_population(&cfg(1000, 0.5, 42)).unwrap();
        assert_eq!(a, b);
        let c = build_population(&cfg(1000, 0.5, 43)).unwrap();
        assert_ne!(a.1.malicious_users, c.1.malicious_users);
    }

    #[test]
    fn exits_only_in_netpriv() {
        let mut c = cfg(100, 0.1, 3);
        c.rho_e = 0.5;
        c.n_exits = 20;
        let (pop, view) = build_population(&c).unwrap();
        assert_eq!(pop.n_exits(), 0);
        assert!(view.malicious_exits.is_empty());
        assert!(view.server_compromised);

        c.scenario = Scenario::NetPrivClientServer;
        let (pop, view) = build_population(&c).unwrap();
        assert_eq!(pop.n_exits(), 20);
        assert_eq!(view.malicious_exits.len(), 10);

        c.scenario = Scenario::P2PrivP2P;
        let (pop, view) = build_population(&c).unwrap();
        assert!(!pop.has_server());
        assert!(!view.server_compromised);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(matches!(
            build_population(&cfg(10, 1.5, 0)),
            Err(ModelError::FractionOutOfRange { name: "rho", .. })
        ));
        let mut c = cfg(10, 0.1, 0);
        c.rho_e = -0.1;
        assert!(build_population(&c).is_err());
        assert_eq!(
            build_population(&cfg(1, 0.0, 0)).unwrap_err(),
            ModelError::TooFewUsers(1)
        );
        let mut c = cfg(10, 0.1, 0);
        c.p_f = 1.0;
        assert!(build_population(&c).is_err());
        let mut c = cfg(10, 0.1, 0);
        c.scenario = Scenario::NetPrivClientServer;
        c.n_exits = 0;
        assert_eq!(build_population(&c).unwrap_err(), ModelError::NoExits);
        assert!(build_population(&cfg(10, 1.0, 0)).is_err());
    }

    #[test]
    fn auto_cap_is_honest_population() {
        let c = cfg(1000, 0.15, 0);
        assert_eq!(c.effective_cap(), 850);
        let c = cfg(10, 0.7, 0);
        assert_eq!(c.effective_cap(), 3);
    }

    #[test]
    fn colluders_are_uniform_over_seeds() {
        let n = 50;
        let rho = 0.3;
        let seeds = 4000;
        let mut hits = vec![0u32; n];
        for seed in 0..seeds {
            let (pop, _) = build_population(&cfg(n, rho, seed)).unwrap();
            for u in pop.users() {
                if pop.is_malicious(u) {
                    hits[u.0 as usize] += 1;
                }
            }
        }
        let se = (rho * (1.0 - rho) / seeds as f64).sqrt();
        for h in hits {
            let freq = h as f64 / seeds as f64;
            // 4 sigma: 50 users are checked at once
            assert!((freq - rho).abs() < 4.0 * se, "freq {freq}");
        }
    }

    #[test]
    fn token_timing_rule() {
        assert!(CloningToken::new(Destination::Server, 5, vec![], 0, 5).is_err());
        let tok = CloningToken::new(Destination::Server, 6, b"x".to_vec(), 0, 5).unwrap();
        assert_eq!(tok.content_hash(), tok.clone().content_hash());
        let other = CloningToken::new(Destination::Server, 6, b"y".to_vec(), 0, 5).unwrap();
        assert_ne!(tok.content_hash(), other.content_hash());
    }

    #[test]
    fn exit_request_opens_only_for_its_exit() {
        let req = ExitRequest::seal(UserId(3), Destination::Server, b"get".to_vec(), ExitId(7));
        assert!(req.open(ExitId(6)).is_err());
        let (src, dest, body) = req.open(ExitId(7)).unwrap();
        assert_eq!(src, UserId(3));
        assert_eq!(dest, Destination::Server);
        assert_eq!(body, b"get");
    }

    #[test]
    fn scenario_names_round_trip() {
        for sc in Scenario::ALL {
            assert_eq!(sc.name().parse::<Scenario>().unwrap(), sc);
        }
        assert!("tor".parse::<Scenario>().is_err());
    }
}
