//! Seeded discrete-event execution of the protocol over a scenario.
//!
//! Pending messages live in one pool; every step removes a uniformly chosen
//! message and hands it to its destination. Virtual time is the step index.
//! The source's own delivery is stamped at time 0.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::rc::Rc;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::protocol::{Information, Message, NodeState, ProtocolError, Setting, VisitedSet};
use crate::topology::{NodeId, NodeSet, Topology};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("node {0} is not in the topology")]
    UnknownNode(NodeId),
    #[error("the source {0} cannot be Byzantine")]
    ByzantineSource(NodeId),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("scripted injection from {from} to {to} at t={time}: {reason}")]
    BadInjection {
        time: u64,
        from: NodeId,
        to: NodeId,
        reason: &'static str,
    },
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("trace line {line}: {reason}")]
pub struct TraceParseError {
    pub line: usize,
    pub reason: String,
}

/// Topology, source and Byzantine placement: the omniscient view.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scenario {
    topology: Arc<Topology>,
    source: NodeId,
    byzantine: NodeSet,
    genuine: Information,
}

impl Scenario {
    pub fn new<I>(
        topology: Arc<Topology>,
        source: NodeId,
        byzantine: I,
        genuine: Information,
    ) -> Result<Self, ScenarioError>
    where
        I: IntoIterator<Item = NodeId>,
    {
        if !topology.contains(source) {
            return Err(ScenarioError::UnknownNode(source));
        }
        let mut set = NodeSet::with_capacity(topology.node_count());
        for node in byzantine {
            if !topology.contains(node) {
                return Err(ScenarioError::UnknownNode(node));
            }
            if node == source {
                return Err(ScenarioError::ByzantineSource(node));
            }
            set.insert(node);
        }
        Ok(Scenario {
            topology,
            source,
            byzantine: set,
            genuine,
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn shared_topology(&self) -> &Arc<Topology> {
        &self.topology
    }

    pub fn source(&self) -> NodeId {
        self.source
    }

    pub fn byzantine(&self) -> &NodeSet {
        &self.byzantine
    }

    pub fn genuine(&self) -> &Information {
        &self.genuine
    }

    #[inline]
    pub fn is_byzantine(&self, node: NodeId) -> bool {
        self.byzantine.contains(node)
    }

    #[inline]
    pub fn is_correct(&self, node: NodeId) -> bool {
        !self.byzantine.contains(node)
    }

    pub fn correct_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.topology.nodes().filter(|&n| self.is_correct(n))
    }
}

/// Behavior of every Byzantine node in a run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Adversary {
    /// Byzantine nodes never send.
    Silent,
    /// Each Byzantine node multicasts `(forged, {})` at start and then relays
    /// the forged value exactly like a correct node would. The genuine value
    /// is never relayed.
    Forge(Information),
    /// Explicit sends; everything Byzantine nodes receive is dropped.
    Script(Vec<Injection>),
}

/// One scripted send, enqueued once `time` steps have elapsed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Injection {
    pub time: u64,
    pub from: NodeId,
    pub to: NodeId,
    pub message: Message,
}

/// Outcome of a run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    /// Per node, each delivered value with the step at which it happened.
    pub deliveries: Vec<Vec<(Information, u64)>>,
    /// Channel messages sent by correct nodes (one per neighbor per multicast).
    pub message_count: u64,
    pub quiescent: bool,
    pub steps: u64,
}

impl Trace {
    pub fn node_count(&self) -> usize {
        self.deliveries.len()
    }

    pub fn delivered(&self, node: NodeId, info: &Information) -> bool {
        self.deliveries[node.index()].iter().any(|(i, _)| i == info)
    }

    /// Delivery events ordered by time, then node.
    pub fn events(&self) -> Vec<(u64, NodeId, &Information)> {
        let mut events: Vec<_> = self
            .deliveries
            .iter()
            .enumerate()
            .flat_map(|(node, ds)| ds.iter().map(move |(info, t)| (*t, NodeId::from(node), info)))
            .collect();
        events.sort();
        events
    }

    /// One `step node info_hex` line per delivery (`-` for an empty
    /// payload), then a summary line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (t, node, info) in self.events() {
            let hex = info.to_hex();
            let hex = if hex.is_empty() { "-".to_owned() } else { hex };
            let _ = writeln!(out, "{t} {node} {hex}");
        }
        let _ = writeln!(
            out,
            "summary nodes={} messages={} quiescent={} steps={}",
            self.node_count(),
            self.message_count,
            self.quiescent,
            self.steps
        );
        out
    }

    pub fn parse(text: &str) -> Result<Trace, TraceParseError> {
        let err = |line: usize, reason: &str| TraceParseError {
            line,
            reason: reason.to_owned(),
        };
        let mut events = Vec::new();
        let mut summary = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix("summary ") {
                let mut fields = [None; 4];
                for kv in rest.split_whitespace() {
                    let (key, value) = kv.split_once('=').ok_or_else(|| err(line, "bad field"))?;
                    let slot = match key {
                        "nodes" => 0,
                        "messages" => 1,
                        "quiescent" => 2,
                        "steps" => 3,
                        _ => return Err(err(line, "unknown summary field")),
                    };
                    fields[slot] = Some(value);
                }
                let [Some(nodes), Some(messages), Some(quiescent), Some(steps)] = fields else {
                    return Err(err(line, "incomplete summary"));
                };
                let num = |v: &str| v.parse::<u64>().map_err(|_| err(line, "bad number"));
                let quiescent = quiescent
                    .parse::<bool>()
                    .map_err(|_| err(line, "bad quiescent flag"))?;
                summary = Some((num(nodes)? as usize, num(messages)?, quiescent, num(steps)?));
                continue;
            }
            let mut fields = content.split_whitespace();
            let (Some(t), Some(node), Some(hex), None) =
                (fields.next(), fields.next(), fields.next(), fields.next())
            else {
                return Err(err(line, "expected `step node info_hex`"));
            };
            let t = t.parse::<u64>().map_err(|_| err(line, "bad step"))?;
            let node = node.parse::<usize>().map_err(|_| err(line, "bad node"))?;
            let info = if hex == "-" {
                Information::new(Vec::new())
            } else {
                Information::from_hex(hex).map_err(|e| err(line, &e.to_string()))?
            };
            events.push((line, t, node, info));
        }
        let (nodes, message_count, quiescent, steps) =
            summary.ok_or_else(|| err(text.lines().count(), "missing summary line"))?;
        let mut deliveries = vec![Vec::new(); nodes];
        for (line, t, node, info) in events {
            deliveries
                .get_mut(node)
                .ok_or_else(|| err(line, "node out of range"))?
                .push((info, t));
        }
        Ok(Trace {
            deliveries,
            message_count,
            quiescent,
            steps,
        })
    }
}

/// Upper bound on channel messages of a fault-free run:
/// `|G| * (1 + d + ... + d^H) * d` with `d` the maximum degree.
pub fn count_bound(topology: &Topology, setting: &Setting) -> u64 {
    let d = topology.max_degree() as u64;
    let mut power: u64 = 1;
    let mut geometric: u64 = 0;
    for _ in 0..=setting.h_max() {
        geometric = geometric.saturating_add(power);
        power = power.saturating_mul(d);
    }
    (topology.node_count() as u64)
        .saturating_mul(geometric)
        .saturating_mul(d)
}

/// Step ceiling used when none is given: 64 times [`count_bound`].
pub fn default_max_steps(topology: &Topology, setting: &Setting) -> u64 {
    count_bound(topology, setting).saturating_mul(64).max(1)
}

struct Envelope {
    from: NodeId,
    to: NodeId,
    msg: Rc<Message>,
}

struct Network<'s> {
    scenario: &'s Scenario,
    pool: Vec<Envelope>,
    message_count: u64,
}

impl Network<'_> {
    fn multicast(&mut self, from: NodeId, msg: Message) {
        let msg = Rc::new(msg);
        let neighbors = self.scenario.topology().neighbors(from);
        if self.scenario.is_correct(from) {
            self.message_count += neighbors.len() as u64;
        }
        for &to in neighbors {
            self.pool.push(Envelope {
                from,
                to,
                msg: Rc::clone(&msg),
            });
        }
    }
}

/// Runs the protocol until the pool drains or `max_steps` messages have
/// been processed. Identical arguments give identical traces.
pub fn run(
    scenario: &Scenario,
    setting: &Setting,
    adversary: &Adversary,
    seed: u64,
    max_steps: u64,
) -> Result<Trace, SimError> {
    let topology = scenario.topology();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network {
        scenario,
        pool: Vec::new(),
        message_count: 0,
    };

    let mut states: Vec<Option<NodeState>> = topology
        .nodes()
        .map(|n| {
            scenario
                .is_correct(n)
                .then(|| NodeState::new(n, topology.neighbors(n), scenario.source()))
        })
        .collect();
    // Forge relays: tuples each Byzantine node has already forwarded.
    let mut relayed: Vec<BTreeSet<VisitedSet>> = vec![BTreeSet::new(); topology.node_count()];
    let mut deliveries = vec![Vec::new(); topology.node_count()];

    let source = scenario.source();
    let opening = states[source.index()]
        .as_mut()
        .expect("source is correct")
        .originate(scenario.genuine().clone());
    deliveries[source.index()].push((scenario.genuine().clone(), 0));
    net.multicast(source, opening);

    let mut script: Vec<&Injection> = Vec::new();
    match adversary {
        Adversary::Silent => {}
        Adversary::Forge(forged) => {
            for b in scenario.byzantine().iter() {
                net.multicast(b, crate::protocol::source_init(forged.clone()));
            }
        }
        Adversary::Script(injections) => {
            for inj in injections {
                let reason = if !scenario.is_byzantine(inj.from) {
                    Some("sender is not Byzantine")
                } else if !topology.contains(inj.to) || !topology.are_neighbors(inj.from, inj.to) {
                    Some("no channel between sender and target")
                } else {
                    None
                };
                if let Some(reason) = reason {
                    return Err(SimError::BadInjection {
                        time: inj.time,
                        from: inj.from,
                        to: inj.to,
                        reason,
                    });
                }
                script.push(inj);
            }
            script.sort_by_key(|inj| inj.time);
        }
    }
    let mut script = script.into_iter().peekable();

    let mut steps = 0u64;
    let quiescent = loop {
        while let Some(inj) = script.next_if(|inj| inj.time <= steps || net.pool.is_empty()) {
            net.pool.push(Envelope {
                from: inj.from,
                to: inj.to,
                msg: Rc::new(inj.message.clone()),
            });
            if inj.time > steps {
                break;
            }
        }
        if net.pool.is_empty() {
            break true;
        }
        if steps >= max_steps {
            break false;
        }
        let pick = rng.gen_range(0..net.pool.len() as u64) as usize;
        let env = net.pool.swap_remove(pick);
        steps += 1;

        if let Some(state) = states[env.to.index()].as_mut() {
            let out = state.on_receive(setting, env.from, &env.msg)?;
            for info in out.new_deliveries {
                deliveries[env.to.index()].push((info, steps));
            }
            for msg in out.outgoing {
                net.multicast(env.to, msg);
            }
        } else if let Adversary::Forge(forged) = adversary {
            let msg = &env.msg;
            if msg.info == *forged
                && !msg.visited.contains(env.from)
                && msg.visited.len() < setting.h_max()
            {
                let extended = msg.visited.with(env.from);
                if relayed[env.to.index()].insert(extended.clone()) {
                    net.multicast(
                        env.to,
                        Message {
                            info: forged.clone(),
                            visited: extended,
                        },
                    );
                }
            }
        }
    };

    Ok(Trace {
        deliveries,
        message_count: net.message_count,
        quiescent,
        steps,
    })
}
