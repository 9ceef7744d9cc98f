//! One protocol session, simulated on a logical clock.
//!
//! A session establishes the cloning cascade (random walk for P2Priv, a
//! sender-fixed persistent cascade for NetPriv), delivers the cloning token
//! through a perfect mix layer, then every surviving member connects at
//! `request_time` plus a private random delay. NetPriv members go through
//! an exit node that re-originates the request under its own address.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    mix64, rng_stream, CloningToken, Destination, Endpoint, ExitId, ExitRequest, ModelError,
    NetPrivCascade, Population, Scenario, ScenarioConfig, StreamDomain, Tick, UserId,
};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0} is not an honest user")]
    DishonestSender(UserId),
    #[error("cascade length {requested} exceeds the {available} honest users")]
    CascadeTooLong { requested: usize, available: usize },
    #[error("cascade length must be at least 1")]
    EmptyCascade,
    #[error("token request_time {request_time} leaves no room for {hops} hops injected at {injected_at}")]
    TokenTooEarly {
        request_time: Tick,
        injected_at: Tick,
        hops: usize,
    },
}

/// Alice and her clones.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cascade {
    /// Distinct members in order of first custody; `members[0]` is Alice.
    pub members: Vec<UserId>,
    /// Every token holder in custody order, revisits included. When the
    /// cascade was broken the last entry is the colluder that absorbed it.
    pub path: Vec<UserId>,
    /// Index into `path` of the absorbing colluder.
    pub break_index: Option<usize>,
    pub persistent: bool,
}

impl Cascade {
    pub fn alice(&self) -> UserId {
        self.members[0]
    }

    /// Honest walk positions, Alice included and revisits counted. This is
    /// the quantity the break-length distribution describes.
    pub fn walk_len(&self) -> usize {
        self.path.len() - usize::from(self.break_index.is_some())
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn is_broken(&self) -> bool {
        self.break_index.is_some()
    }
}

/// P2Priv cascade: a random walk from Alice.
///
/// The first hop always happens; after each honest hop the walk continues
/// with probability `p_f`. Next hops are uniform over all users except the
/// current holder. With `active` set, the first colluder to receive the
/// token absorbs it. The walk never grows past `cap` honest positions.
pub fn establish_cc_random_walk(
    population: &Population,
    alice: UserId,
    p_f: f64,
    cap: usize,
    active: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Cascade, SimError> {
    if population.is_malicious(alice) {
        return Err(SimError::DishonestSender(alice));
    }
    let n = population.n_users() as u32;
    let mut path = vec![alice];
    let mut members = vec![alice];
    let mut seen = HashSet::from([alice]);
    let mut break_index = None;
    let mut holder = alice;
    let mut positions = 1;

    while positions < cap {
        let mut next = rng.gen_range(0..n - 1);
        if next >= holder.0 {
            next += 1;
        }
        let next = UserId(next);
        path.push(next);
        if active && population.is_malicious(next) {
            break_index = Some(path.len() - 1);
            break;
        }
        if seen.insert(next) {
            members.push(next);
        }
        holder = next;
        positions += 1;
        if !rng.gen_bool(p_f) {
            break;
        }
    }

    Ok(Cascade {
        members,
        path,
        break_index,
        persistent: false,
    })
}

fn persistent_rng(population: &Population, alice: UserId, session_key: u64) -> ChaCha8Rng {
    let index = mix64(session_key ^ mix64(u64::from(alice.0)));
    rng_stream(population.seed(), StreamDomain::Persistent, index)
}

/// NetPriv cascade: Alice fixes `target_len - 1` honest clones for a whole
/// session key. The same `(population, alice, session_key)` always yields
/// the same cascade.
pub fn establish_cc_persistent(
    population: &Population,
    alice: UserId,
    target_len: usize,
    session_key: u64,
) -> Result<Cascade, SimError> {
    if population.is_malicious(alice) {
        return Err(SimError::DishonestSender(alice));
    }
    if target_len == 0 {
        return Err(SimError::EmptyCascade);
    }
    let available = population.honest_count();
    if target_len > available {
        return Err(SimError::CascadeTooLong {
            requested: target_len,
            available,
        });
    }
    let others: Vec<UserId> = population.honest_users().filter(|u| *u != alice).collect();
    let mut rng = persistent_rng(population, alice, session_key);
    let mut members = vec![alice];
    members.extend(index::sample(&mut rng, others.len(), target_len - 1).iter().map(|i| others[i]));
    Ok(Cascade {
        path: members.clone(),
        members,
        break_index: None,
        persistent: true,
    })
}

/// NetPriv cascade whose composition follows the truncated random-walk
/// law, drawn once per session key.
pub fn establish_cc_persistent_walk(
    population: &Population,
    alice: UserId,
    p_f: f64,
    cap: usize,
    active: bool,
    session_key: u64,
) -> Result<Cascade, SimError> {
    let mut rng = persistent_rng(population, alice, session_key);
    let mut cascade = establish_cc_random_walk(population, alice, p_f, cap, active, &mut rng)?;
    cascade.persistent = true;
    Ok(cascade)
}

/// The signalling layer, assumed to be a perfect mix: an outside observer
/// cannot link hops; only custodians themselves see the token.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PerfectMix {
    pub injected_at: Tick,
    pub hop_latency: Tick,
}

impl Default for PerfectMix {
    fn default() -> Self {
        PerfectMix {
            injected_at: 0,
            hop_latency: 1,
        }
    }
}

/// Token custody: `holder` received the token at `at`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CustodyEvent {
    pub holder: UserId,
    pub at: Tick,
}

/// Walk the token along the cascade path through the mix layer.
pub fn deliver_token(
    cascade: &Cascade,
    token: &CloningToken,
    mix: &PerfectMix,
) -> Result<Vec<CustodyEvent>, SimError> {
    let hops = cascade.path.len();
    if token.request_time <= mix.injected_at + hops as Tick * mix.hop_latency {
        return Err(SimError::TokenTooEarly {
            request_time: token.request_time,
            injected_at: mix.injected_at,
            hops,
        });
    }
    Ok(cascade
        .path
        .iter()
        .enumerate()
        .map(|(i, &holder)| CustodyEvent {
            holder,
            at: mix.injected_at + i as Tick * mix.hop_latency,
        })
        .collect())
}

/// A content connection by one cascade member.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Connection {
    pub origin: UserId,
    /// NetPriv exit that re-originates the request.
    pub exit: Option<ExitId>,
    pub destination: Destination,
    pub sent_at: Tick,
}

impl Connection {
    /// Source address as seen by the destination.
    pub fn destination_side_source(&self) -> Endpoint {
        match self.exit {
            Some(e) => Endpoint::Exit(e),
            None => Endpoint::User(self.origin),
        }
    }
}

/// Ground truth of one session.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionTrace {
    pub session_id: u64,
    pub alice: UserId,
    pub cascade: Cascade,
    pub token: CloningToken,
    pub token_path_events: Vec<CustodyEvent>,
    /// Sorted by send time; equal times in random order.
    pub connections: Vec<Connection>,
    pub break_index: Option<usize>,
}

impl SessionTrace {
    /// The member whose connection leaves first.
    pub fn earliest_connector(&self) -> Option<UserId> {
        self.connections.first().map(|c| c.origin)
    }

    /// Line-oriented canonical form used for regression fixtures:
    ///
    /// ```text
    /// session <id> alice <user>
    /// cascade <user>...
    /// token <dest> <request_time> <hex request>
    /// custody <holder> <tick>
    /// connect <origin> <exit|-> <destination> <tick>
    /// break <path index|->
    /// ```
    pub fn to_canonical(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "session {} alice {}", self.session_id, self.alice);
        out.push_str("cascade");
        for m in &self.cascade.members {
            let _ = write!(out, " {m}");
        }
        out.push('\n');
        let hex: String = self.token.request.iter().map(|b| format!("{b:02x}")).collect();
        let _ = writeln!(
            out,
            "token {} {} {}",
            self.token.dest_addr, self.token.request_time, hex
        );
        for ev in &self.token_path_events {
            let _ = writeln!(out, "custody {} {}", ev.holder, ev.at);
        }
        for c in &self.connections {
            let exit = c.exit.map_or_else(|| "-".to_string(), |e| e.to_string());
            let _ = writeln!(out, "connect {} {} {} {}", c.origin, exit, c.destination, c.sent_at);
        }
        match self.break_index {
            Some(i) => {
                let _ = writeln!(out, "break {i}");
            }
            None => out.push_str("break -\n"),
        }
        out
    }
}

/// Identifies a session: `id` is unique per run, `key` selects the NetPriv
/// persistent cascade (sessions sharing a key share the cascade and exits).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SessionSpec {
    pub id: u64,
    pub key: u64,
}

/// The exit each member of a persistent cascade uses, fixed per key.
pub fn persistent_exits(
    population: &Population,
    cascade: &Cascade,
    session_key: u64,
) -> Vec<ExitId> {
    let alice = cascade.alice();
    let mut rng = rng_stream(
        population.seed(),
        StreamDomain::Persistent,
        mix64(mix64(session_key) ^ u64::from(alice.0) ^ 0x5ec7_e417),
    );
    let n_exits = population.n_exits() as u32;
    cascade
        .members
        .iter()
        .map(|_| ExitId(rng.gen_range(0..n_exits)))
        .collect()
}

fn request_payload(session: &SessionSpec) -> Vec<u8> {
    format!("GET /item-of-interest?s={}", session.id).into_bytes()
}

/// Run one session for `alice`.
pub fn execute_session(
    config: &ScenarioConfig,
    population: &Population,
    alice: UserId,
    session: SessionSpec,
    rng: &mut ChaCha8Rng,
) -> Result<SessionTrace, SimError> {
    let cap = config.effective_cap();
    let cascade = match config.scenario {
        Scenario::P2PrivP2P | Scenario::P2PrivClientServer => {
            establish_cc_random_walk(population, alice, config.p_f, cap, config.active_break, rng)?
        }
        Scenario::NetPrivClientServer => match config.netpriv_cascade {
            NetPrivCascade::Fixed(len) => {
                establish_cc_persistent(population, alice, len, session.key)?
            }
            NetPrivCascade::WalkLaw => establish_cc_persistent_walk(
                population,
                alice,
                config.p_f,
                cap,
                config.active_break,
                session.key,
            )?,
        },
    };

    let mix = PerfectMix::default();
    let traversal = config.traversal_bound();
    let dest_addr = match config.scenario {
        Scenario::P2PrivP2P => Destination::Swarm,
        _ => Destination::Server,
    };
    let token = CloningToken::new(
        dest_addr,
        mix.injected_at + traversal + 1,
        request_payload(&session),
        mix.injected_at,
        traversal,
    )?;
    let token_path_events = deliver_token(&cascade, &token, &mix)?;

    let exits = match config.scenario {
        Scenario::NetPrivClientServer => Some(persistent_exits(population, &cascade, session.key)),
        _ => None,
    };

    let jitter = config.jitter_max();
    let n_users = population.n_users() as u32;
    let mut connections = Vec::with_capacity(cascade.len());
    for (i, &member) in cascade.members.iter().enumerate() {
        let sent_at = token.request_time + rng.gen_range(0..=jitter);
        let conn = match (&exits, token.dest_addr) {
            (Some(exits), dest) => {
                let sealed = ExitRequest::seal(member, dest, token.request.clone(), exits[i]);
                let exit = sealed.sealed_for();
                let (_src, dest, _body) = sealed.open(exit)?;
                Connection {
                    origin: member,
                    exit: Some(exit),
                    destination: dest,
                    sent_at,
                }
            }
            (None, Destination::Swarm) => {
                let mut peer = rng.gen_range(0..n_users - 1);
                if peer >= member.0 {
                    peer += 1;
                }
                Connection {
                    origin: member,
                    exit: None,
                    destination: Destination::Peer(UserId(peer)),
                    sent_at,
                }
            }
            (None, dest) => Connection {
                origin: member,
                exit: None,
                destination: dest,
                sent_at,
            },
        };
        connections.push(conn);
    }
    connections.shuffle(rng);
    connections.sort_by_key(|c| c.sent_at);

    Ok(SessionTrace {
        session_id: session.id,
        alice,
        break_index: cascade.break_index,
        cascade,
        token,
        token_path_events,
        connections,
    })
}
