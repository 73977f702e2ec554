//! Per-node Brahms round logic.
//!
//! A node pushes its own ID to `α·l1` view members, pulls the views of
//! `β·l1` others, and at the end of the round rebuilds its view from three
//! sources: received pushes, pulled IDs and its own sample list. A round in
//! which more pushes than expected arrive is treated as a flooding attempt and
//! the view is left untouched.

use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::id::NodeId;
use crate::sampler::SampleList;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ViewEntry {
    pub id: NodeId,
    /// Rounds since insertion.
    pub age: u32,
}

impl ViewEntry {
    pub fn fresh(id: NodeId) -> Self {
        ViewEntry { id, age: 0 }
    }
}

/// The dynamic view of one node. Never contains the owner's ID.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct View {
    owner: NodeId,
    entries: Vec<ViewEntry>,
}

impl View {
    pub fn new(owner: NodeId) -> Self {
        View {
            owner,
            entries: Vec::new(),
        }
    }

    /// Builds a view from IDs, silently dropping the owner's own ID.
    pub fn from_ids(owner: NodeId, ids: impl IntoIterator<Item = NodeId>) -> Self {
        View {
            owner,
            entries: ids
                .into_iter()
                .filter(|&id| id != owner)
                .map(ViewEntry::fresh)
                .collect(),
        }
    }

    pub(crate) fn from_entries(owner: NodeId, entries: Vec<ViewEntry>) -> Self {
        debug_assert!(entries.iter().all(|e| e.id != owner));
        View { owner, entries }
    }

    pub fn owner(&self) -> NodeId {
        self.owner
    }

    pub fn entries(&self) -> &[ViewEntry] {
        &self.entries
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.entries.iter().map(|e| e.id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.entries.iter().any(|e| e.id == id)
    }

    /// Every entry survives one more round.
    pub fn age_all(&mut self) {
        for e in &mut self.entries {
            e.age += 1;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BrahmsParams {
    pub l1: usize,
    pub l2: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for BrahmsParams {
    fn default() -> Self {
        BrahmsParams {
            l1: 200,
            l2: 200,
            alpha: 0.4,
            beta: 0.4,
            gamma: 0.2,
        }
    }
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5 + 1e-9).floor() as usize
}

impl BrahmsParams {
    pub fn with_view_size(l1: usize) -> Self {
        BrahmsParams {
            l1,
            l2: l1,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.l1 == 0 {
            return Err(Error::config("l1 must be at least 1"));
        }
        if self.l2 == 0 {
            return Err(Error::config("l2 must be at least 1"));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(0.0..=1.0).contains(&v) || v.is_nan() {
                return Err(Error::config(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        let sum = self.alpha + self.beta + self.gamma;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "alpha + beta + gamma must be 1, got {sum}"
            )));
        }
        Ok(())
    }

    /// `(push, pull, history)` quotas. The first two round half-up (the pull
    /// quota shrinking if both round up past `l1`); history takes whatever is
    /// left so the three always sum to `l1`.
    pub fn quotas(&self) -> (usize, usize, usize) {
        let a = round_half_up(self.alpha * self.l1 as f64).min(self.l1);
        let b = round_half_up(self.beta * self.l1 as f64).min(self.l1 - a);
        (a, b, self.l1 - a - b)
    }

    pub fn push_quota(&self) -> usize {
        self.quotas().0
    }

    pub fn pull_quota(&self) -> usize {
        self.quotas().1
    }
}

/// Everything a node collected during the current round.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RoundInbox {
    pub pushes: Vec<NodeId>,
    pub pulled_untrusted: Vec<NodeId>,
    /// IDs received through trusted swaps; always empty on untrusted nodes.
    pub pulled_trusted: Vec<NodeId>,
}

impl RoundInbox {
    pub fn clear(&mut self) {
        self.pushes.clear();
        self.pulled_untrusted.clear();
        self.pulled_trusted.clear();
    }

    /// The pulled stream used for renewal: untrusted answers (after any
    /// eviction) followed by trusted-swap IDs.
    pub fn pulled(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.pulled_untrusted
            .iter()
            .chain(self.pulled_trusted.iter())
            .copied()
    }
}

fn sample_view<R: Rng + ?Sized>(v: &View, count: usize, rng: &mut R) -> Vec<NodeId> {
    let count = count.min(v.len());
    index::sample(rng, v.len(), count)
        .into_iter()
        .map(|i| v.entries[i].id)
        .collect()
}

/// `round(α·l1)` distinct view members to push to (all of them if the view
/// is shorter).
pub fn select_push_targets<R: Rng + ?Sized>(v: &View, p: &BrahmsParams, rng: &mut R) -> Vec<NodeId> {
    sample_view(v, p.push_quota(), rng)
}

/// `round(β·l1)` distinct view members to pull from, drawn independently of
/// the push targets.
pub fn select_pull_targets<R: Rng + ?Sized>(v: &View, p: &BrahmsParams, rng: &mut R) -> Vec<NodeId> {
    sample_view(v, p.pull_quota(), rng)
}

/// True when more pushes than the expected `α·l1` arrived.
pub fn detect_push_flood(inbox: &RoundInbox, p: &BrahmsParams) -> bool {
    inbox.pushes.len() > p.push_quota()
}

/// Answer to a pull request: the whole current view.
pub fn make_pull_reply(v: &View) -> Vec<NodeId> {
    v.ids().collect()
}

/// Where an entry of a renewed view came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Source {
    Push,
    Pull,
    History,
}

const SOURCES: [Source; 3] = [Source::Push, Source::Pull, Source::History];

/// A multiset of candidate IDs consumed by a lazy Fisher-Yates shuffle, so
/// every draw is uniform over the remaining positions.
struct Pool {
    items: Vec<NodeId>,
    next: usize,
}

impl Pool {
    fn new(items: Vec<NodeId>) -> Self {
        Pool { items, next: 0 }
    }

    fn exhausted(&self) -> bool {
        self.next >= self.items.len()
    }

    /// Draws up to `want` IDs not yet in `taken`.
    fn draw_distinct<R: Rng + ?Sized>(
        &mut self,
        want: usize,
        taken: &mut HashSet<NodeId>,
        rng: &mut R,
        out: &mut Vec<NodeId>,
    ) -> usize {
        let mut got = 0;
        while got < want && self.next < self.items.len() {
            let j = rng.gen_range(self.next..self.items.len());
            self.items.swap(self.next, j);
            let id = self.items[self.next];
            self.next += 1;
            if taken.insert(id) {
                out.push(id);
                got += 1;
            }
        }
        got
    }
}

/// Splits `amount` evenly over `slots`, the remainder going to the first ones.
fn split_evenly(amount: usize, slots: usize) -> impl Iterator<Item = usize> {
    let base = amount / slots;
    let extra = amount % slots;
    (0..slots).map(move |i| base + usize::from(i < extra))
}

/// Rebuilds the view from the round's pushes, pulled IDs and history sample.
///
/// Quotas follow [`BrahmsParams::quotas`]. A source that cannot fill its
/// quota with IDs not already chosen hands the shortfall to the remaining
/// sources in equal parts; this also covers a completely empty source. Only
/// when no source can supply another distinct ID are duplicates allowed. If
/// every source is empty the old view is kept, one round older.
///
/// The caller is responsible for skipping this call on blocked rounds.
pub fn renew_view<R: Rng + ?Sized>(
    v: &View,
    inbox: &RoundInbox,
    sl: &SampleList,
    p: &BrahmsParams,
    rng: &mut R,
) -> View {
    renew_view_with_sources(v, inbox, sl, p, rng).0
}

/// [`renew_view`] that also reports the source of every new entry.
pub fn renew_view_with_sources<R: Rng + ?Sized>(
    v: &View,
    inbox: &RoundInbox,
    sl: &SampleList,
    p: &BrahmsParams,
    rng: &mut R,
) -> (View, Vec<Source>) {
    let owner = v.owner();
    let not_owner = |id: &NodeId| *id != owner;
    let mut pools = [
        Pool::new(inbox.pushes.iter().copied().filter(not_owner).collect()),
        Pool::new(inbox.pulled().filter(not_owner).collect()),
        Pool::new(sl.stored_ids().filter(not_owner).collect()),
    ];

    if pools.iter().all(|pl| pl.items.is_empty()) {
        let mut kept = v.clone();
        kept.age_all();
        let tags = Vec::new();
        return (kept, tags);
    }

    let (qa, qb, qg) = p.quotas();
    let mut want = [qa, qb, qg];
    let mut taken = HashSet::with_capacity(p.l1 * 2);
    let mut ids = Vec::with_capacity(p.l1);
    let mut tags = Vec::with_capacity(p.l1);

    loop {
        let mut shortfall = 0;
        for (i, pool) in pools.iter_mut().enumerate() {
            if want[i] == 0 {
                continue;
            }
            let got = pool.draw_distinct(want[i], &mut taken, rng, &mut ids);
            tags.extend(std::iter::repeat_n(SOURCES[i], got));
            shortfall += want[i] - got;
            want[i] = 0;
        }
        if shortfall == 0 {
            break;
        }
        let open: Vec<usize> = (0..3).filter(|&i| !pools[i].exhausted()).collect();
        if open.is_empty() {
            // Not enough distinct IDs anywhere: pad with repeats drawn from
            // the union of all sources.
            let all: Vec<(NodeId, Source)> = pools
                .iter()
                .zip(SOURCES)
                .flat_map(|(pl, s)| pl.items.iter().map(move |&id| (id, s)))
                .collect();
            for _ in 0..shortfall {
                let (id, s) = all[rng.gen_range(0..all.len())];
                ids.push(id);
                tags.push(s);
            }
            break;
        }
        for (slot, extra) in open.iter().zip(split_evenly(shortfall, open.len())) {
            want[*slot] += extra;
        }
    }

    let entries = ids.into_iter().map(ViewEntry::fresh).collect();
    (View::from_entries(owner, entries), tags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ids(range: std::ops::Range<u64>) -> Vec<NodeId> {
        range.map(NodeId).collect()
    }

    fn params(l1: usize) -> BrahmsParams {
        BrahmsParams::with_view_size(l1)
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn sample_list_with(ids: &[NodeId], l2: usize, seed: u64) -> SampleList {
        let mut sl = SampleList::new(l2, &mut rng(seed));
        sl.feed(ids.iter().copied());
        sl
    }

    #[test]
    fn default_params_are_valid() {
        let p = BrahmsParams::default();
        p.validate().unwrap();
        assert_eq!(p.quotas(), (80, 80, 40));
        assert_eq!(params(10).quotas(), (4, 4, 2));
    }

    #[test]
    fn invalid_params_rejected() {
        let p = BrahmsParams {
            alpha: 0.5,
            ..BrahmsParams::default()
        };
        assert!(p.validate().is_err());
        let p = BrahmsParams {
            l1: 0,
            ..BrahmsParams::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn quotas_always_sum_to_l1() {
        for l1 in 1..300 {
            for (a, b) in [(0.4, 0.4), (0.45, 0.45), (0.33, 0.33), (0.5, 0.5), (0.15, 0.35)] {
                let p = BrahmsParams {
                    l1,
                    l2: l1,
                    alpha: a,
                    beta: b,
                    gamma: 1.0 - a - b,
                };
                let (qa, qb, qg) = p.quotas();
                assert_eq!(qa + qb + qg, l1);
            }
        }
    }

    #[test]
    fn push_targets_distinct_and_from_view() {
        let v = View::from_ids(NodeId(0), ids(1..11));
        let t = select_push_targets(&v, &params(10), &mut rng(1));
        assert_eq!(t.len(), 4);
        let set: HashSet<_> = t.iter().collect();
        assert_eq!(set.len(), 4);
        assert!(t.iter().all(|&id| v.contains(id)));
    }

    #[test]
    fn full_alpha_returns_whole_view() {
        let v = View::from_ids(NodeId(0), ids(1..11));
        let p = BrahmsParams {
            l1: 10,
            l2: 10,
            alpha: 1.0,
            beta: 0.0,
            gamma: 0.0,
        };
        let mut t = select_push_targets(&v, &p, &mut rng(2));
        t.sort();
        assert_eq!(t, ids(1..11));
    }

    #[test]
    fn short_view_returns_everything() {
        let v = View::from_ids(NodeId(0), ids(1..3));
        assert_eq!(select_push_targets(&v, &params(10), &mut rng(3)).len(), 2);
    }

    #[test]
    fn target_selection_is_deterministic() {
        let v = View::from_ids(NodeId(0), ids(1..201));
        let a = select_pull_targets(&v, &params(200), &mut rng(4));
        let b = select_pull_targets(&v, &params(200), &mut rng(4));
        assert_eq!(a, b);
        assert_eq!(a.len(), 80);
    }

    #[test]
    fn zero_beta_pulls_nobody() {
        let v = View::from_ids(NodeId(0), ids(1..11));
        let p = BrahmsParams {
            l1: 10,
            l2: 10,
            alpha: 0.5,
            beta: 0.0,
            gamma: 0.5,
        };
        assert!(select_pull_targets(&v, &p, &mut rng(5)).is_empty());
    }

    #[test]
    fn push_and_pull_draws_are_independent() {
        let v = View::from_ids(NodeId(0), ids(1..11));
        let p = params(10);
        let mut r = rng(6);
        let overlap = (0..200).any(|_| {
            let push: HashSet<_> = select_push_targets(&v, &p, &mut r).into_iter().collect();
            select_pull_targets(&v, &p, &mut r)
                .iter()
                .any(|id| push.contains(id))
        });
        assert!(overlap);
    }

    #[test]
    fn flood_threshold() {
        let p = params(10);
        let mut inbox = RoundInbox::default();
        assert!(!detect_push_flood(&inbox, &p));
        inbox.pushes = ids(1..5);
        assert!(!detect_push_flood(&inbox, &p));
        inbox.pushes.push(NodeId(5));
        assert!(detect_push_flood(&inbox, &p));
    }

    #[test]
    fn pull_reply_is_whole_view() {
        let v = View::from_ids(NodeId(0), ids(0..201));
        let reply = make_pull_reply(&v);
        assert_eq!(reply.len(), 200);
        assert!(!reply.contains(&NodeId(0)));
        let boot = View::from_ids(NodeId(99), ids(1..6));
        assert_eq!(make_pull_reply(&boot).len(), 5);
    }

    #[test]
    fn renewal_proportions() {
        let p = params(10);
        let v = View::from_ids(NodeId(0), ids(1..11));
        let inbox = RoundInbox {
            pushes: ids(100..110),
            pulled_untrusted: ids(200..230),
            pulled_trusted: vec![],
        };
        let sl = sample_list_with(&ids(300..400), 10, 7);
        let (nv, tags) = renew_view_with_sources(&v, &inbox, &sl, &p, &mut rng(8));
        assert_eq!(nv.len(), 10);
        let count = |s| tags.iter().filter(|&&t| t == s).count();
        assert_eq!((count(Source::Push), count(Source::Pull), count(Source::History)), (4, 4, 2));
        assert!(nv.entries().iter().all(|e| e.age == 0));
        assert!(nv.ids().take(4).all(|id| (100..110).contains(&id.0)));
    }

    #[test]
    fn empty_push_stream_quota_is_split() {
        // Oracle: enumerate source tags. The push quota of 4 is split 2/2
        // between pulls and history, giving 6 pulled and 4 history entries.
        let p = params(10);
        let v = View::from_ids(NodeId(0), ids(1..11));
        let inbox = RoundInbox {
            pushes: vec![],
            pulled_untrusted: ids(200..260),
            pulled_trusted: vec![],
        };
        let sl = sample_list_with(&ids(300..1300), 40, 9);
        let distinct_history = sl.stored_ids().collect::<HashSet<_>>().len();
        assert!(distinct_history >= 4);
        let (nv, tags) = renew_view_with_sources(&v, &inbox, &sl, &p, &mut rng(10));
        assert_eq!(nv.len(), 10);
        let pulled = tags.iter().filter(|&&t| t == Source::Pull).count();
        let history = tags.iter().filter(|&&t| t == Source::History).count();
        assert_eq!((pulled, history), (6, 4));
        for (e, t) in nv.entries().iter().zip(&tags) {
            match t {
                Source::Pull => assert!((200..260).contains(&e.id.0)),
                Source::History => assert!((300..1300).contains(&e.id.0)),
                Source::Push => unreachable!(),
            }
        }
    }

    #[test]
    fn all_sources_empty_keeps_view() {
        let p = params(10);
        let mut v = View::from_ids(NodeId(0), ids(1..11));
        v.age_all();
        let sl = SampleList::new(10, &mut rng(11));
        let nv = renew_view(&v, &RoundInbox::default(), &sl, &p, &mut rng(12));
        assert_eq!(nv.ids().collect::<Vec<_>>(), ids(1..11));
        assert!(nv.entries().iter().all(|e| e.age == 2));
    }

    #[test]
    fn own_id_is_filtered_and_duplicates_pad_small_streams() {
        let p = params(10);
        let v = View::from_ids(NodeId(0), ids(1..11));
        let inbox = RoundInbox {
            pushes: vec![NodeId(0), NodeId(1)],
            pulled_untrusted: vec![NodeId(0), NodeId(2), NodeId(2)],
            pulled_trusted: vec![NodeId(3)],
        };
        let sl = sample_list_with(&[NodeId(0)], 4, 13);
        let nv = renew_view(&v, &inbox, &sl, &p, &mut rng(14));
        assert_eq!(nv.len(), 10);
        assert!(!nv.contains(NodeId(0)));
        let distinct: HashSet<_> = nv.ids().collect();
        assert_eq!(distinct, [1, 2, 3].into_iter().map(NodeId).collect());
    }

    #[test]
    fn push_weight_follows_multiplicity() {
        // A sender pushing twice is twice as likely to be selected.
        let p = BrahmsParams {
            l1: 2,
            l2: 2,
            alpha: 0.5,
            beta: 0.5,
            gamma: 0.0,
        };
        let v = View::from_ids(NodeId(0), ids(1..3));
        let inbox = RoundInbox {
            pushes: vec![NodeId(5), NodeId(5), NodeId(6)],
            pulled_untrusted: ids(50..60),
            pulled_trusted: vec![],
        };
        let sl = SampleList::new(2, &mut rng(15));
        let mut r = rng(16);
        let trials = 6000;
        let fives = (0..trials)
            .filter(|_| renew_view(&v, &inbox, &sl, &p, &mut r).entries()[0].id == NodeId(5))
            .count() as f64;
        assert!((fives / trials as f64 - 2.0 / 3.0).abs() < 0.03);
    }

    proptest! {
        #[test]
        fn composition_when_sources_are_rich(seed in any::<u64>(), l1 in 5usize..120) {
            let p = params(l1);
            let v = View::from_ids(NodeId(0), ids(1..(l1 as u64 + 1)));
            let inbox = RoundInbox {
                pushes: ids(10_000..10_000 + l1 as u64),
                pulled_untrusted: ids(20_000..20_000 + 3 * l1 as u64),
                pulled_trusted: vec![],
            };
            let sl = sample_list_with(&ids(30_000..30_000 + 50 * l1 as u64), 3 * l1, seed);
            let distinct_history = sl.stored_ids().collect::<HashSet<_>>().len();
            prop_assume!(distinct_history >= p.quotas().2);
            let (nv, tags) = renew_view_with_sources(&v, &inbox, &sl, &p, &mut rng(seed));
            let count = |s| tags.iter().filter(|&&t| t == s).count();
            prop_assert_eq!(nv.len(), l1);
            prop_assert_eq!((count(Source::Push), count(Source::Pull), count(Source::History)), p.quotas());
            let distinct: HashSet<_> = nv.ids().collect();
            prop_assert_eq!(distinct.len(), l1);
        }

        #[test]
        fn renewed_view_has_l1_entries_and_no_owner(
            seed in any::<u64>(),
            pushes in prop::collection::vec(0u64..40, 0..30),
            pulled in prop::collection::vec(0u64..40, 0..60),
        ) {
            let p = params(10);
            let v = View::from_ids(NodeId(0), ids(1..11));
            let inbox = RoundInbox {
                pushes: pushes.into_iter().map(NodeId).collect(),
                pulled_untrusted: pulled.into_iter().map(NodeId).collect(),
                pulled_trusted: vec![],
            };
            let sl = sample_list_with(&ids(0..40), 10, seed);
            let nv = renew_view(&v, &inbox, &sl, &p, &mut rng(seed));
            prop_assert_eq!(nv.len(), 10);
            prop_assert!(!nv.contains(NodeId(0)));
        }
    }
}
