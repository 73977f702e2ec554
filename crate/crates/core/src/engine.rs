//! Synchronous round-based simulation.
//!
//! A round runs four phases over the whole population:
//!
//! 1. correct nodes push their ID to `α·l1` view members and the adversary
//!    spreads its balanced pushes;
//! 2. correct nodes authenticate each of their `β·l1` pull targets, then
//!    either swap half-views (both trusted) or receive the target's full view
//!    (Byzantine targets answer with Byzantine IDs only);
//! 3. each correct node evicts part of its untrusted pulled IDs (trusted
//!    nodes only), feeds its sample list, and renews its view unless it
//!    received more pushes than expected;
//! 4. inboxes are cleared and the round counter advances.
//!
//! Views are only written in phase 3, so every pull answer reflects the
//! target's view at the start of the round. Randomness comes from
//! [`crate::rng::stream`], keyed by node, round and phase.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;

use crate::adversary::{self, AdversaryConfig, IdentObservation};
use crate::brahms::{self, BrahmsParams, RoundInbox, View};
use crate::error::{Error, Result};
use crate::id::{NodeClass, NodeId};
use crate::metrics::{self, IdentReport, RoundMetrics, StabilityBound, STABILITY_BOUND};
use crate::rng::{self, Phase};
use crate::sampler::SampleList;
use crate::trusted::{self, EvictionPolicy, SecretKey};

/// Node index used for adversary-wide random streams.
const ADVERSARY_STREAM: u64 = u64::MAX;

/// Parameters of a single simulation run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub n: usize,
    /// Fraction of Byzantine nodes.
    pub f: f64,
    /// Fraction of trusted nodes.
    pub t: f64,
    pub l1: usize,
    /// Sample list size; `None` means `l1`.
    pub l2: Option<usize>,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub rounds: u32,
    pub seed: u64,
    pub eviction: EvictionPolicy,
    /// Multiplier on the per-Byzantine-node push budget, whose unit is the
    /// honest push rate `round(α·l1)`.
    pub push_budget_factor: f64,
    pub ident_threshold: f64,
    /// Extra poisoned trusted nodes as a fraction of `n`.
    pub injection_fraction: f64,
    /// Record pull-answer observations for the identification attack.
    pub identification: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n: 10_000,
            f: 0.10,
            t: 0.01,
            l1: 200,
            l2: None,
            alpha: 0.4,
            beta: 0.4,
            gamma: 0.2,
            rounds: 200,
            seed: 0,
            eviction: EvictionPolicy::Adaptive,
            push_budget_factor: 1.0,
            ident_threshold: 0.10,
            injection_fraction: 0.0,
            identification: false,
        }
    }
}

fn round_count(frac: f64, n: usize) -> usize {
    (frac * n as f64 + 0.5 + 1e-9).floor() as usize
}

impl RunConfig {
    pub fn brahms_params(&self) -> BrahmsParams {
        BrahmsParams {
            l1: self.l1,
            l2: self.l2.unwrap_or(self.l1),
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
        }
    }

    pub fn byzantine_count(&self) -> usize {
        round_count(self.f, self.n)
    }

    pub fn trusted_count(&self) -> usize {
        round_count(self.t, self.n)
    }

    pub fn poisoned_count(&self) -> usize {
        round_count(self.injection_fraction, self.n)
    }

    pub fn push_budget(&self) -> usize {
        let unit = self.brahms_params().push_quota() as f64;
        (unit * self.push_budget_factor + 0.5 + 1e-9).floor() as usize
    }

    /// The same run without trusted nodes or injection.
    pub fn baseline(&self) -> RunConfig {
        RunConfig {
            t: 0.0,
            injection_fraction: 0.0,
            eviction: EvictionPolicy::Fixed(0.0),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let frac = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(format!("{name} = {v} is outside [0, 1]")))
            }
        };
        frac("f", self.f)?;
        frac("t", self.t)?;
        frac("injection", self.injection_fraction)?;
        if self.f + self.t > 1.0 + 1e-12 {
            return Err(Error::config(format!(
                "f + t must not exceed 1 (f = {}, t = {})",
                self.f, self.t
            )));
        }
        if self.n < 2 {
            return Err(Error::config("n must be at least 2"));
        }
        if self.byzantine_count() + self.trusted_count() > self.n {
            return Err(Error::config("rounded Byzantine and trusted counts exceed n"));
        }
        if self.byzantine_count() >= self.n {
            return Err(Error::config("at least one correct node is required"));
        }
        self.brahms_params().validate()?;
        if self.l1 >= self.n + self.poisoned_count() {
            return Err(Error::config(format!(
                "l1 = {} must be smaller than the membership size",
                self.l1
            )));
        }
        if let EvictionPolicy::Fixed(r) = self.eviction {
            frac("eviction rate", r)?;
        }
        if !(self.push_budget_factor >= 0.0 && self.push_budget_factor.is_finite()) {
            return Err(Error::config("push budget factor must be non-negative"));
        }
        if !(self.ident_threshold > 0.0 && self.ident_threshold < 1.0) {
            return Err(Error::config("identification threshold must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// IDs a node has seen so far: its bootstrap view plus everything it fed to
/// its sample list.
#[derive(Clone, Debug)]
struct Discovered {
    bits: Vec<u64>,
    counted: usize,
}

impl Discovered {
    fn new(size: usize) -> Self {
        Discovered {
            bits: vec![0; size.div_ceil(64)],
            counted: 0,
        }
    }

    /// Returns true if `i` was not seen before.
    #[inline]
    fn insert(&mut self, i: usize) -> bool {
        let (w, b) = (i / 64, 1u64 << (i % 64));
        let fresh = self.bits[w] & b == 0;
        self.bits[w] |= b;
        fresh
    }
}

#[derive(Clone, Debug)]
pub struct NodeState {
    pub id: NodeId,
    pub class: NodeClass,
    pub key: SecretKey,
    /// Empty for Byzantine nodes, which keep no protocol state.
    pub view: View,
    pub samples: SampleList,
    discovered: Discovered,
}

impl NodeState {
    fn byz_fraction(&self, is_byz: &[bool]) -> f64 {
        if self.view.is_empty() {
            return 0.0;
        }
        let byz = self.view.ids().filter(|id| is_byz[id.index()]).count();
        byz as f64 / self.view.len() as f64
    }
}

/// What happened during one round, beyond the node states themselves.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RoundStats {
    /// Rates applied by trusted nodes under the adaptive policy.
    pub adaptive_rates: Vec<f64>,
    pub blocked: usize,
    pub trusted_exchanges: usize,
    pub handshakes: usize,
}

/// Per-round, per-target sums of the pull-answer observations made by
/// Byzantine nodes.
#[derive(Clone, Debug, Default)]
pub struct ObservationLog {
    rounds: Vec<BTreeMap<NodeId, (f64, u32)>>,
}

impl ObservationLog {
    fn record(&mut self, o: IdentObservation) {
        let r = o.round as usize;
        if self.rounds.len() <= r {
            self.rounds.resize_with(r + 1, BTreeMap::new);
        }
        let e = self.rounds[r].entry(o.target).or_default();
        e.0 += o.byz_fraction;
        e.1 += 1;
    }

    /// Per-target mean over the observations of rounds `from..=to`.
    pub fn target_means(&self, from: u32, to: u32) -> BTreeMap<NodeId, f64> {
        let mut acc: BTreeMap<NodeId, (f64, u32)> = BTreeMap::new();
        for r in self.rounds.iter().take(to as usize + 1).skip(from as usize) {
            for (&id, &(s, c)) in r {
                let e = acc.entry(id).or_default();
                e.0 += s;
                e.1 += c;
            }
        }
        acc.into_iter()
            .map(|(id, (s, c))| (id, s / c as f64))
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.iter().all(BTreeMap::is_empty)
    }
}

/// Labels targets whose mean lies more than `threshold` below the mean of
/// all per-target means. Same rule as [`adversary::identify_trusted`].
pub fn label_from_means(means: &BTreeMap<NodeId, f64>, threshold: f64) -> BTreeSet<NodeId> {
    if means.is_empty() {
        return BTreeSet::new();
    }
    let global = means.values().sum::<f64>() / means.len() as f64;
    means
        .iter()
        .filter(|&(_, &m)| global - m > threshold)
        .map(|(&id, _)| id)
        .collect()
}

pub struct SimulationState {
    pub round: u32,
    pub nodes: Vec<NodeState>,
    pub params: BrahmsParams,
    pub adversary: AdversaryConfig,
    pub policy: EvictionPolicy,
    master_seed: u64,
    is_byz: Vec<bool>,
    /// Honest and genuine trusted nodes: the population every metric is
    /// computed over.
    measured: Vec<bool>,
    measured_total: usize,
    correct_ids: Vec<NodeId>,
    inboxes: Vec<RoundInbox>,
    identification: bool,
    observations: ObservationLog,
}

/// Builds the population: `round(f·n)` Byzantine, `round(t·n)` trusted
/// sharing one key, the rest honest with private keys, plus any injected
/// poisoned trusted nodes. Correct nodes start with a uniform sample of the
/// membership as their view.
pub fn build_population(cfg: &RunConfig) -> Result<SimulationState> {
    cfg.validate()?;
    let params = cfg.brahms_params();
    let seed = cfg.seed;
    let n = cfg.n;
    let nb = cfg.byzantine_count();
    let nt = cfg.trusted_count();
    let np = cfg.poisoned_count();
    let total = n + np;

    let mut classes = vec![NodeClass::Honest; total];
    let layout = index::sample(&mut rng::stream(seed, 0, 0, Phase::Layout), n, n).into_vec();
    for (rank, &i) in layout.iter().enumerate() {
        classes[i] = if rank < nb {
            NodeClass::Byzantine
        } else if rank < nb + nt {
            NodeClass::Trusted
        } else {
            NodeClass::Honest
        };
    }
    for c in classes.iter_mut().skip(n) {
        *c = NodeClass::PoisonedTrusted;
    }

    let is_byz: Vec<bool> = classes.iter().map(|c| c.is_byzantine()).collect();
    let measured: Vec<bool> = classes
        .iter()
        .map(|c| matches!(c, NodeClass::Honest | NodeClass::Trusted))
        .collect();
    let byz_ids: Vec<NodeId> = (0..total)
        .filter(|&i| is_byz[i])
        .map(|i| NodeId(i as u64))
        .collect();
    let correct_ids: Vec<NodeId> = (0..total)
        .filter(|&i| !is_byz[i])
        .map(|i| NodeId(i as u64))
        .collect();

    let adversary = AdversaryConfig {
        byz_ids,
        push_budget_per_node: cfg.push_budget(),
        ident_threshold: cfg.ident_threshold,
        poisoned_injection_fraction: cfg.injection_fraction,
    };

    let trusted_key = SecretKey::random(&mut rng::stream(seed, ADVERSARY_STREAM, 0, Phase::Keys));

    let mut nodes: Vec<NodeState> = (0..total)
        .map(|i| {
            let id = NodeId(i as u64);
            let class = classes[i];
            let key = if class.holds_trusted_key() {
                trusted_key.clone()
            } else {
                SecretKey::random(&mut rng::stream(seed, i as u64, 0, Phase::Keys))
            };
            let mut state = NodeState {
                id,
                class,
                key,
                view: View::new(id),
                samples: SampleList::from_seeds(std::iter::empty()),
                discovered: Discovered::new(total),
            };
            if class == NodeClass::Byzantine || class == NodeClass::PoisonedTrusted {
                return state;
            }
            let mut r = rng::stream(seed, i as u64, 0, Phase::Bootstrap);
            // uniform sample of the membership, self excluded
            let picks = index::sample(&mut r, total - 1, params.l1);
            state.view = View::from_ids(
                id,
                picks.into_iter().map(|k| NodeId((if k >= i { k + 1 } else { k }) as u64)),
            );
            state.samples = SampleList::new(params.l2, &mut rng::stream(seed, i as u64, 0, Phase::Samplers));
            state
        })
        .collect();

    let poisoned_ids: Vec<NodeId> = (n..total).map(|i| NodeId(i as u64)).collect();
    let poisoned = adversary::bootstrap_poisoned_trusted(
        &adversary,
        &poisoned_ids,
        &trusted_key,
        params.l1,
        params.l2,
        &mut rng::stream(seed, ADVERSARY_STREAM, 0, Phase::Poison),
    );
    for p in poisoned {
        let node = &mut nodes[p.id.index()];
        node.view = p.view;
        node.samples = p.samples;
        node.key = p.key;
    }

    // Everything a node starts out knowing counts as discovered; correct
    // nodes also feed their bootstrap view to their samplers.
    for node in nodes.iter_mut().filter(|nd| !nd.class.is_byzantine()) {
        let own = node.id.index();
        node.discovered.insert(own);
        if measured[own] {
            node.discovered.counted += 1;
        }
        let initial: Vec<NodeId> = if node.class == NodeClass::PoisonedTrusted {
            adversary.byz_ids.clone()
        } else {
            node.view.ids().collect()
        };
        for id in initial {
            if node.discovered.insert(id.index()) {
                if measured[id.index()] {
                    node.discovered.counted += 1;
                }
                if node.class != NodeClass::PoisonedTrusted {
                    node.samples.feed_one(id);
                }
            }
        }
    }

    Ok(SimulationState {
        round: 0,
        params,
        adversary,
        policy: cfg.eviction,
        master_seed: seed,
        measured_total: measured.iter().filter(|&&m| m).count(),
        is_byz,
        measured,
        correct_ids,
        inboxes: vec![RoundInbox::default(); total],
        identification: cfg.identification,
        observations: ObservationLog::default(),
        nodes,
    })
}

impl SimulationState {
    pub fn is_byzantine(&self, id: NodeId) -> bool {
        self.is_byz[id.index()]
    }

    pub fn observations(&self) -> &ObservationLog {
        &self.observations
    }

    pub fn ids_of(&self, class: NodeClass) -> BTreeSet<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.class == class)
            .map(|n| n.id)
            .collect()
    }

    /// Number of measured (honest or genuine trusted) IDs a node has seen.
    pub fn discovered_count(&self, id: NodeId) -> usize {
        self.nodes[id.index()].discovered.counted
    }

    fn stream(&self, node: usize, phase: Phase) -> rng::SimRng {
        rng::stream(self.master_seed, node as u64, self.round as u64 + 1, phase)
    }

    /// Advances the simulation by one round.
    pub fn run_round(&mut self) -> RoundStats {
        self.run_round_observed(|_, _| {})
    }

    /// [`run_round`](Self::run_round), showing `inspect` every correct
    /// node's complete inbox before eviction and renewal.
    pub fn run_round_observed(&mut self, mut inspect: impl FnMut(NodeId, &RoundInbox)) -> RoundStats {
        let mut stats = RoundStats::default();
        let total = self.nodes.len();

        // Phase 1: pushes.
        for u in 0..total {
            if self.is_byz[u] {
                continue;
            }
            let mut r = self.stream(u, Phase::Push);
            for target in brahms::select_push_targets(&self.nodes[u].view, &self.params, &mut r) {
                if !self.is_byz[target.index()] {
                    self.inboxes[target.index()].pushes.push(NodeId(u as u64));
                }
            }
        }
        let mut r = self.stream(ADVERSARY_STREAM as usize, Phase::Adversary);
        for (target, pushed) in adversary::balanced_pushes(&self.adversary, &self.correct_ids, &mut r) {
            self.inboxes[target.index()].pushes.push(pushed);
        }

        if self.identification {
            self.observe();
        }

        // Phase 2: authenticated pulls against start-of-round views.
        let mut trusted_partners = vec![0usize; total];
        let mut pull_partners = vec![0usize; total];
        for u in 0..total {
            if self.is_byz[u] {
                continue;
            }
            let mut r = self.stream(u, Phase::Pull);
            let targets = brahms::select_pull_targets(&self.nodes[u].view, &self.params, &mut r);
            pull_partners[u] = targets.len();
            for v in targets {
                let vi = v.index();
                let hs = trusted::handshake(&self.nodes[u].key, &self.nodes[vi].key, &mut r);
                stats.handshakes += 1;
                if self.is_byz[vi] {
                    let reply = adversary::byzantine_pull_reply(&self.adversary, self.params.l1, &mut r);
                    self.inboxes[u].pulled_untrusted.extend(reply);
                } else if hs.initiator_trusts && hs.responder_trusts {
                    let ex = trusted::trusted_exchange(&self.nodes[u].view, &self.nodes[vi].view, &mut r);
                    self.inboxes[u].pulled_trusted.extend(ex.received_by_initiator);
                    self.inboxes[vi].pulled_trusted.extend(ex.received_by_responder);
                    trusted_partners[u] += 1;
                    stats.trusted_exchanges += 1;
                } else {
                    let reply = brahms::make_pull_reply(&self.nodes[vi].view);
                    self.inboxes[u].pulled_untrusted.extend(reply);
                }
            }
        }

        // Phase 3: eviction, sampling, renewal.
        for u in 0..total {
            if self.is_byz[u] {
                continue;
            }
            let mut r = self.stream(u, Phase::Renew);
            let mut inbox = std::mem::take(&mut self.inboxes[u]);
            inspect(NodeId(u as u64), &inbox);
            let node = &mut self.nodes[u];
            if node.class.holds_trusted_key() {
                let rate = self.policy.rate(trusted_partners[u], pull_partners[u]);
                if self.policy.is_adaptive() {
                    stats.adaptive_rates.push(rate);
                }
                if rate > 0.0 {
                    inbox.pulled_untrusted = trusted::evict(&inbox.pulled_untrusted, rate, &mut r);
                }
            }

            let own = node.id;
            let fresh = inbox
                .pushes
                .iter()
                .chain(inbox.pulled_untrusted.iter())
                .chain(inbox.pulled_trusted.iter());
            for &id in fresh {
                if id != own && node.discovered.insert(id.index()) {
                    if self.measured[id.index()] {
                        node.discovered.counted += 1;
                    }
                    // Re-offering an ID can never change a min-wise sampler,
                    // so only first sightings are fed.
                    node.samples.feed_one(id);
                }
            }

            if brahms::detect_push_flood(&inbox, &self.params) {
                stats.blocked += 1;
                node.view.age_all();
            } else {
                node.view = brahms::renew_view(&node.view, &inbox, &node.samples, &self.params, &mut r);
            }
            inbox.clear();
            self.inboxes[u] = inbox;
        }

        self.round += 1;
        stats
    }

    /// Every Byzantine node pulls from `β·l1` random correct nodes and
    /// records the Byzantine share of each answer.
    fn observe(&mut self) {
        let round = self.round + 1;
        let k = self.params.pull_quota().min(self.correct_ids.len());
        for b in self.adversary.byz_ids.clone() {
            let mut r = self.stream(b.index(), Phase::Observe);
            for i in index::sample(&mut r, self.correct_ids.len(), k) {
                let target = self.correct_ids[i];
                let frac = self.nodes[target.index()].byz_fraction(&self.is_byz);
                self.observations.record(IdentObservation {
                    observer: b,
                    target,
                    byz_fraction: frac,
                    round,
                });
            }
        }
    }

    /// Metrics over honest and genuine trusted nodes, at the current round.
    pub fn measure(&self) -> RoundMetrics {
        let mut sum = 0.0;
        let mut count = 0usize;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut by_class: BTreeMap<&'static str, (f64, usize)> = BTreeMap::new();
        let mut disc = f64::INFINITY;
        for node in &self.nodes {
            let key = match node.class {
                NodeClass::Byzantine => continue,
                NodeClass::Honest => "honest",
                NodeClass::Trusted => "trusted",
                NodeClass::PoisonedTrusted => "poisoned",
            };
            let frac = node.byz_fraction(&self.is_byz);
            let e = by_class.entry(key).or_default();
            e.0 += frac;
            e.1 += 1;
            if !self.measured[node.id.index()] {
                continue;
            }
            sum += frac;
            count += 1;
            min = min.min(frac);
            max = max.max(frac);
            disc = disc.min(node.discovered.counted as f64 / self.measured_total as f64);
        }
        let class_mean = |k| by_class.get(k).map(|&(s, c)| s / c as f64);
        let mut row = RoundMetrics {
            round: self.round,
            mean_byz_fraction: sum / count as f64,
            min_byz_fraction: min,
            max_byz_fraction: max,
            trusted_mean_byz_fraction: class_mean("trusted"),
            honest_mean_byz_fraction: class_mean("honest"),
            poisoned_mean_byz_fraction: class_mean("poisoned"),
            discovery_fraction: disc.min(1.0),
            stability_reached: false,
        };
        row.stability_reached = StabilityBound::Absolute.holds(&row, STABILITY_BOUND);
        row
    }

    /// In-degree of every measured node, counting view entries of measured
    /// nodes only.
    pub fn in_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.nodes.len()];
        for node in self.nodes.iter().filter(|n| self.measured[n.id.index()]) {
            for id in node.view.ids() {
                deg[id.index()] += 1;
            }
        }
        (0..self.nodes.len())
            .filter(|&i| self.measured[i])
            .map(|i| deg[i])
            .collect()
    }
}

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub config: RunConfig,
    /// Row 0 describes the bootstrap state, row `r` the state after round `r`.
    pub rows: Vec<RoundMetrics>,
    pub adaptive_rates: RateRange,
    /// Identification attack result, when enabled.
    pub ident: Option<IdentOutcome>,
}

/// Range of adaptive eviction rates applied over a run.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RateRange {
    pub count: usize,
    pub min: f64,
    pub max: f64,
}

impl RateRange {
    fn absorb(&mut self, rates: &[f64]) {
        for &r in rates {
            if self.count == 0 {
                self.min = r;
                self.max = r;
            } else {
                self.min = self.min.min(r);
                self.max = self.max.max(r);
            }
            self.count += 1;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdentOutcome {
    /// Last round whose observations were used.
    pub window_end: u32,
    pub labeled: BTreeSet<NodeId>,
    /// Against genuine and poisoned trusted nodes together.
    pub report: IdentReport,
    /// Labeled nodes that are poisoned trusted nodes.
    pub poisoned_labeled: usize,
}

/// Runs `rounds` rounds and returns one metrics row per round plus the
/// initial state.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunOutcome> {
    let mut state = build_population(cfg)?;
    let mut rows = Vec::with_capacity(cfg.rounds as usize + 1);
    rows.push(state.measure());
    let mut rates = RateRange::default();
    for _ in 0..cfg.rounds {
        let stats = state.run_round();
        rates.absorb(&stats.adaptive_rates);
        rows.push(state.measure());
    }

    let ident = cfg.identification.then(|| {
        // Observations from round 1 until stability, or the whole run.
        let end = metrics::stability_time(&rows).unwrap_or(cfg.rounds).max(1);
        let labeled = label_from_means(&state.observations.target_means(1, end), cfg.ident_threshold);
        let poisoned = state.ids_of(NodeClass::PoisonedTrusted);
        let mut truth = state.ids_of(NodeClass::Trusted);
        truth.extend(poisoned.iter().copied());
        IdentOutcome {
            window_end: end,
            report: metrics::ident_report(&labeled, &truth),
            poisoned_labeled: labeled.intersection(&poisoned).count(),
            labeled,
        }
    });

    Ok(RunOutcome {
        config: cfg.clone(),
        rows,
        adaptive_rates: rates,
        ident,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(f: f64, t: f64) -> RunConfig {
        RunConfig {
            n: 100,
            f,
            t,
            l1: 10,
            rounds: 5,
            seed: 11,
            ..RunConfig::default()
        }
    }

    #[test]
    fn population_counts() {
        let cfg = RunConfig {
            n: 10_000,
            f: 0.10,
            t: 0.01,
            l1: 20,
            rounds: 0,
            ..RunConfig::default()
        };
        let s = build_population(&cfg).unwrap();
        assert_eq!(s.ids_of(NodeClass::Byzantine).len(), 1000);
        assert_eq!(s.ids_of(NodeClass::Trusted).len(), 100);
        assert_eq!(s.ids_of(NodeClass::Honest).len(), 8900);
    }

    #[test]
    fn pure_brahms_population() {
        let s = build_population(&small(0.0, 0.0)).unwrap();
        assert_eq!(s.ids_of(NodeClass::Honest).len(), 100);
        assert!(s.nodes.iter().all(|n| n.view.len() == 10 && !n.view.contains(n.id)));
    }

    #[test]
    fn same_seed_same_views() {
        let a = build_population(&small(0.1, 0.1)).unwrap();
        let b = build_population(&small(0.1, 0.1)).unwrap();
        for (x, y) in a.nodes.iter().zip(&b.nodes) {
            assert_eq!(x.view, y.view);
            assert_eq!(x.class, y.class);
        }
    }

    #[test]
    fn invalid_fractions_are_rejected() {
        assert!(build_population(&small(0.6, 0.5)).is_err());
        assert!(build_population(&small(-0.1, 0.0)).is_err());
        assert!(build_population(&RunConfig { l1: 100, ..small(0.0, 0.0) }).is_err());
    }

    #[test]
    fn flooded_node_keeps_its_view() {
        let mut s = build_population(&small(0.0, 0.0)).unwrap();
        // Pre-load one more push than the push quota: honest pushes arrive on
        // top, so the node is certainly blocked.
        let victim = 7;
        let before = s.nodes[victim].view.clone();
        let quota = s.params.push_quota();
        s.inboxes[victim].pushes = vec![NodeId(1); quota + 1];
        s.run_round();
        let after = &s.nodes[victim].view;
        assert_eq!(after.ids().collect::<Vec<_>>(), before.ids().collect::<Vec<_>>());
        assert!(after.entries().iter().zip(before.entries()).all(|(a, b)| a.age == b.age + 1));
    }

    #[test]
    fn all_trusted_pull_targets_give_minimum_rate() {
        // Everybody is trusted: every pull partner authenticates.
        let cfg = RunConfig {
            t: 1.0,
            ..small(0.0, 1.0)
        };
        let mut s = build_population(&cfg).unwrap();
        let stats = s.run_round();
        assert!(!stats.adaptive_rates.is_empty());
        assert!(stats.adaptive_rates.iter().all(|&r| (r - 0.2).abs() < 1e-12));
        assert_eq!(stats.trusted_exchanges, stats.handshakes);
    }

    #[test]
    fn rows_and_determinism() {
        let out = run_experiment(&RunConfig { rounds: 0, ..small(0.1, 0.1) }).unwrap();
        assert_eq!(out.rows.len(), 1);
        let a = run_experiment(&small(0.1, 0.1)).unwrap();
        let b = run_experiment(&small(0.1, 0.1)).unwrap();
        assert_eq!(a.rows.len(), 6);
        assert_eq!(a.rows, b.rows);
    }

    #[test]
    fn observation_means_follow_the_identification_rule() {
        let mut log = ObservationLog::default();
        for (round, target, frac) in [(1, 1, 0.2), (2, 1, 0.3), (1, 2, 0.35), (1, 3, 0.6), (5, 1, 0.9)] {
            log.record(IdentObservation {
                observer: NodeId(0),
                target: NodeId(target),
                byz_fraction: frac,
                round,
            });
        }
        let means = log.target_means(1, 2);
        assert!((means[&NodeId(1)] - 0.25).abs() < 1e-12);
        let labeled = label_from_means(&means, 0.1);
        assert_eq!(labeled, [NodeId(1)].into_iter().collect());
    }
}
