//! Named random streams derived from one master seed.
//!
//! Every stochastic entity draws from its own ChaCha stream, so changing one
//! axis of an experiment (say, the number of sources) leaves the draws of the
//! untouched entities unchanged.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::instance::InstanceId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamName {
    Traffic(InstanceId),
    Channel(u16),
    Access(InstanceId),
    /// Loss draws of one instance's contention link.
    Link(InstanceId),
    /// Free-form stream for oracles and tests.
    Other(u32),
}

impl StreamName {
    fn id(self) -> u64 {
        match self {
            StreamName::Traffic(i) => {
                (1 << 56) | (u64::from(i.source) << 8) | u64::from(i.info_type)
            }
            StreamName::Channel(s) => (2 << 56) | u64::from(s),
            StreamName::Access(i) => {
                (3 << 56) | (u64::from(i.source) << 8) | u64::from(i.info_type)
            }
            StreamName::Other(n) => (4 << 56) | u64::from(n),
            StreamName::Link(i) => (5 << 56) | (u64::from(i.source) << 8) | u64::from(i.info_type),
        }
    }
}

pub fn stream(seed: u64, name: StreamName) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(name.id());
    rng
}
