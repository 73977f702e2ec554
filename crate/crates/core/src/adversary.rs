//! The adversary: a single actor with global membership knowledge that
//! controls every Byzantine node.
//!
//! It floods correct nodes with an evenly balanced stream of Byzantine
//! pushes, answers every pull with Byzantine IDs only, can try to single out
//! trusted nodes from the pull answers they give, and can inject genuine
//! trusted nodes whose initial state it poisoned.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::brahms::View;
use crate::id::NodeId;
use crate::sampler::SampleList;
use crate::trusted::SecretKey;

#[derive(Clone, Debug, PartialEq)]
pub struct AdversaryConfig {
    pub byz_ids: Vec<NodeId>,
    pub push_budget_per_node: usize,
    /// Gap, in absolute fraction points, below the population average at
    /// which a node is labelled trusted.
    pub ident_threshold: f64,
    /// Extra poisoned trusted nodes, as a fraction of the population size.
    pub poisoned_injection_fraction: f64,
}

impl AdversaryConfig {
    pub fn new(byz_ids: Vec<NodeId>, push_budget_per_node: usize) -> Self {
        AdversaryConfig {
            byz_ids,
            push_budget_per_node,
            ident_threshold: 0.10,
            poisoned_injection_fraction: 0.0,
        }
    }
}

/// One measurement of a pull answer received by a Byzantine node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdentObservation {
    pub observer: NodeId,
    pub target: NodeId,
    pub byz_fraction: f64,
    pub round: u32,
}

/// `|byz_ids| · budget` pushes spread round-robin over a random permutation
/// of `correct_nodes`, so per-target counts differ by at most one.
pub fn balanced_pushes<R: Rng + ?Sized>(
    cfg: &AdversaryConfig,
    correct_nodes: &[NodeId],
    rng: &mut R,
) -> Vec<(NodeId, NodeId)> {
    let total = cfg.byz_ids.len() * cfg.push_budget_per_node;
    if total == 0 || correct_nodes.is_empty() {
        return Vec::new();
    }
    let mut order = correct_nodes.to_vec();
    order.shuffle(rng);
    (0..total)
        .map(|i| {
            let target = order[i % order.len()];
            let pushed = cfg.byz_ids[rng.gen_range(0..cfg.byz_ids.len())];
            (target, pushed)
        })
        .collect()
}

/// `l1` Byzantine IDs: distinct when there are enough of them, otherwise
/// drawn with replacement.
pub fn byzantine_pull_reply<R: Rng + ?Sized>(cfg: &AdversaryConfig, l1: usize, rng: &mut R) -> Vec<NodeId> {
    let byz = &cfg.byz_ids;
    if byz.is_empty() {
        return Vec::new();
    }
    if byz.len() >= l1 {
        index::sample(rng, byz.len(), l1)
            .into_iter()
            .map(|i| byz[i])
            .collect()
    } else {
        (0..l1).map(|_| byz[rng.gen_range(0..byz.len())]).collect()
    }
}

/// Per-target mean of the observed Byzantine fractions.
pub fn per_target_means(observations: &[IdentObservation]) -> BTreeMap<NodeId, f64> {
    let mut acc: BTreeMap<NodeId, (f64, usize)> = BTreeMap::new();
    for o in observations {
        let e = acc.entry(o.target).or_default();
        e.0 += o.byz_fraction;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(id, (sum, n))| (id, sum / n as f64))
        .collect()
}

/// Labels as trusted every observed node whose average pull-answer pollution
/// lies more than `threshold` below the average over all observed nodes.
pub fn identify_trusted(observations: &[IdentObservation], threshold: f64) -> BTreeSet<NodeId> {
    let means = per_target_means(observations);
    if means.is_empty() {
        return BTreeSet::new();
    }
    let global = means.values().sum::<f64>() / means.len() as f64;
    means
        .into_iter()
        .filter(|&(_, m)| global - m > threshold)
        .map(|(id, _)| id)
        .collect()
}

/// Initial state of one poisoned trusted node.
#[derive(Clone, Debug)]
pub struct PoisonedNode {
    pub id: NodeId,
    pub key: SecretKey,
    pub view: View,
    pub samples: SampleList,
}

/// Trusted nodes that spent their bootstrap surrounded by Byzantine nodes:
/// full Byzantine views and sample lists fed only Byzantine IDs.
pub fn bootstrap_poisoned_trusted<R: Rng + ?Sized>(
    cfg: &AdversaryConfig,
    ids: &[NodeId],
    trusted_key: &SecretKey,
    l1: usize,
    l2: usize,
    rng: &mut R,
) -> Vec<PoisonedNode> {
    ids.iter()
        .map(|&id| {
            let view = View::from_ids(id, byzantine_pull_reply(cfg, l1, rng));
            let mut samples = SampleList::new(l2, rng);
            samples.feed(cfg.byz_ids.iter().copied());
            PoisonedNode {
                id,
                key: trusted_key.clone(),
                view,
                samples,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trusted::handshake;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn ids(r: std::ops::Range<u64>) -> Vec<NodeId> {
        r.map(NodeId).collect()
    }

    fn per_target_counts(pushes: &[(NodeId, NodeId)], correct: &[NodeId]) -> Vec<usize> {
        correct
            .iter()
            .map(|c| pushes.iter().filter(|(t, _)| t == c).count())
            .collect()
    }

    #[test]
    fn balanced_pushes_spread_evenly() {
        let cfg = AdversaryConfig::new(ids(1000..1010), 4);
        let correct = ids(0..100);
        let pushes = balanced_pushes(&cfg, &correct, &mut rng(1));
        assert_eq!(pushes.len(), 40);
        let counts = per_target_counts(&pushes, &correct);
        assert!(counts.iter().all(|&c| c <= 1));
        assert_eq!(counts.iter().sum::<usize>(), 40);
        assert!(pushes.iter().all(|(_, p)| cfg.byz_ids.contains(p)));
    }

    #[test]
    fn zero_budget_means_no_pushes() {
        let cfg = AdversaryConfig::new(ids(1000..1010), 0);
        assert!(balanced_pushes(&cfg, &ids(0..10), &mut rng(2)).is_empty());
    }

    #[test]
    fn pull_replies_are_byzantine_only() {
        let cfg = AdversaryConfig::new(ids(10_000..11_000), 1);
        let reply = byzantine_pull_reply(&cfg, 200, &mut rng(3));
        assert_eq!(reply.len(), 200);
        assert_eq!(reply.iter().collect::<BTreeSet<_>>().len(), 200);
        assert!(reply.iter().all(|id| id.0 >= 10_000));

        let single = AdversaryConfig::new(vec![NodeId(5)], 1);
        assert_eq!(byzantine_pull_reply(&single, 200, &mut rng(4)), vec![NodeId(5); 200]);
    }

    fn obs(target: u64, frac: f64) -> IdentObservation {
        IdentObservation {
            observer: NodeId(999),
            target: NodeId(target),
            byz_fraction: frac,
            round: 1,
        }
    }

    #[test]
    fn identification_rule() {
        // Per-target averages 0.25, 0.35 and 0.60 give a global average of 0.40.
        let o = vec![
            obs(1, 0.20),
            obs(1, 0.30),
            obs(2, 0.35),
            obs(3, 0.60),
        ];
        let labeled = identify_trusted(&o, 0.10);
        assert!(labeled.contains(&NodeId(1)), "0.40 - 0.25 = 0.15 > 0.10");
        assert!(!labeled.contains(&NodeId(2)), "0.40 - 0.35 = 0.05");
        assert!(!labeled.contains(&NodeId(3)));
    }

    #[test]
    fn a_single_target_is_never_labeled() {
        assert!(identify_trusted(&[obs(1, 0.0), obs(1, 0.9)], 0.0).is_empty());
    }

    #[test]
    fn poisoned_nodes_are_fully_byzantine_and_trusted() {
        let cfg = AdversaryConfig::new(ids(500..600), 40);
        let mut r = rng(5);
        let key = SecretKey::random(&mut r);
        assert!(bootstrap_poisoned_trusted(&cfg, &[], &key, 50, 50, &mut r).is_empty());
        let nodes = bootstrap_poisoned_trusted(&cfg, &ids(1000..1003), &key, 50, 50, &mut r);
        assert_eq!(nodes.len(), 3);
        for n in &nodes {
            assert_eq!(n.view.len(), 50);
            assert!(n.view.ids().all(|id| cfg.byz_ids.contains(&id)));
            assert!(n.samples.stored_ids().all(|id| cfg.byz_ids.contains(&id)));
            let hs = handshake(&key, &n.key, &mut r);
            assert!(hs.initiator_trusts && hs.responder_trusts);
        }
    }

    proptest! {
        #[test]
        fn balance_holds_for_any_sizes(seed in any::<u64>(), byz in 1u64..50, budget in 0usize..20, correct in 1u64..300) {
            let cfg = AdversaryConfig::new(ids(10_000..10_000 + byz), budget);
            let correct = ids(0..correct);
            let pushes = balanced_pushes(&cfg, &correct, &mut rng(seed));
            let counts = per_target_counts(&pushes, &correct);
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
            prop_assert!(pushes.iter().all(|(t, p)| p.0 >= 10_000 && t.0 < 10_000));
        }

        #[test]
        fn threshold_extremes(fracs in prop::collection::vec(0.0f64..=1.0, 1..40)) {
            let o: Vec<_> = fracs.iter().enumerate().map(|(i, &f)| obs(i as u64, f)).collect();
            prop_assert!(identify_trusted(&o, 1.0).is_empty());
            let mean = fracs.iter().sum::<f64>() / fracs.len() as f64;
            let below: BTreeSet<NodeId> = fracs
                .iter()
                .enumerate()
                .filter(|&(_, &f)| mean - f > 0.0)
                .map(|(i, _)| NodeId(i as u64))
                .collect();
            prop_assert_eq!(identify_trusted(&o, 0.0), below);
        }
    }
}
