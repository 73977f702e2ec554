//! Local sampling component: an array of independent min-wise samplers.
//!
//! Each sampler picks a keyed hash at construction time and keeps the ID with
//! the smallest hash among everything it has been fed. Because the output only
//! depends on the *set* of IDs fed so far, a sampler is insensitive to how often
//! an adversary repeats its own IDs in the stream.

use rand::Rng;

use crate::id::NodeId;
use crate::rng::mix64;

/// 64-bit keyed hash used to approximate a min-wise independent permutation.
#[inline]
pub fn keyed_hash(seed: u64, id: NodeId) -> u64 {
    let k = mix64(seed ^ 0x243f_6a88_85a3_08d3);
    mix64(mix64(id.0 ^ k).wrapping_add(k.rotate_left(29)))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sampler {
    hash_seed: u64,
    stored: Option<(NodeId, u64)>,
}

impl Sampler {
    pub fn new(hash_seed: u64) -> Self {
        Sampler {
            hash_seed,
            stored: None,
        }
    }

    pub fn hash_seed(&self) -> u64 {
        self.hash_seed
    }

    /// Offer `id`; returns the ID stored after the offer.
    ///
    /// A strictly smaller hash displaces the stored ID, equal hashes keep it.
    pub fn next(&mut self, id: NodeId) -> NodeId {
        let h = keyed_hash(self.hash_seed, id);
        match self.stored {
            Some((stored, stored_hash)) if stored_hash <= h => stored,
            _ => {
                self.stored = Some((id, h));
                id
            }
        }
    }

    pub fn stored(&self) -> Option<NodeId> {
        self.stored.map(|(id, _)| id)
    }

    pub fn stored_hash(&self) -> Option<u64> {
        self.stored.map(|(_, h)| h)
    }
}

/// The sample list: `l2` samplers with independent seeds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleList {
    samplers: Vec<Sampler>,
}

impl SampleList {
    /// `l2` empty samplers with seeds drawn from `rng`.
    pub fn new<R: Rng + ?Sized>(l2: usize, rng: &mut R) -> Self {
        SampleList {
            samplers: (0..l2).map(|_| Sampler::new(rng.gen())).collect(),
        }
    }

    pub fn from_seeds(seeds: impl IntoIterator<Item = u64>) -> Self {
        SampleList {
            samplers: seeds.into_iter().map(Sampler::new).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.samplers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samplers.is_empty()
    }

    pub fn samplers(&self) -> &[Sampler] {
        &self.samplers
    }

    /// Offer every ID of `stream`, in order, to every sampler.
    pub fn feed<I>(&mut self, stream: I)
    where
        I: IntoIterator<Item = NodeId>,
    {
        for id in stream {
            self.feed_one(id);
        }
    }

    #[inline]
    pub fn feed_one(&mut self, id: NodeId) {
        for s in &mut self.samplers {
            s.next(id);
        }
    }

    /// IDs currently held by non-empty samplers, in sampler order.
    pub fn stored_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.samplers.iter().filter_map(Sampler::stored)
    }

    /// `k` draws, uniform with replacement, over the non-empty samplers.
    ///
    /// Returns an empty vector when every sampler is still empty.
    pub fn random<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<NodeId> {
        let stored: Vec<NodeId> = self.stored_ids().collect();
        if stored.is_empty() {
            return Vec::new();
        }
        (0..k)
            .map(|_| stored[rng.gen_range(0..stored.len())])
            .collect()
    }
}
