use std::fmt;

use serde::{Deserialize, Serialize};

/// One (source, information type) pair. Each pair is scheduled, aged and
/// queued independently of every other pair hosted by the same source.
///
/// Ordering is lexicographic on `(source, info_type)`, which is also the
/// tie-break order used by the scheduling policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InstanceId {
    pub source: u16,
    pub info_type: u8,
}

impl InstanceId {
    pub const fn new(source: u16, info_type: u8) -> Self {
        InstanceId { source, info_type }
    }
}

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.source, self.info_type)
    }
}
