use std::fmt;

/// Opaque node identifier, unique across the membership and stable for a
/// node's lifetime.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u64);

impl NodeId {
    /// Dense index of the node inside a simulated population.
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

impl From<u64> for NodeId {
    fn from(v: u64) -> Self {
        NodeId(v)
    }
}

/// Role of a node for the whole run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NodeClass {
    /// Runs plain Brahms with a private random key.
    Honest,
    /// Holds the shared key and runs the trusted extensions.
    Trusted,
    /// Controlled by the adversary.
    Byzantine,
    /// A genuine trusted node whose initial state was filled with Byzantine
    /// IDs by the adversary.
    PoisonedTrusted,
}

impl NodeClass {
    pub fn is_byzantine(self) -> bool {
        self == NodeClass::Byzantine
    }

    /// Nodes that hold the shared key and follow the trusted protocol.
    pub fn holds_trusted_key(self) -> bool {
        matches!(self, NodeClass::Trusted | NodeClass::PoisonedTrusted)
    }
}
