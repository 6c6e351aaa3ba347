//! Process-local monotonic clock in microseconds.

use std::time::{Duration, Instant};

use crate::time::Timestamp;

#[derive(Debug, Clone, Copy)]
pub struct Clock {
    origin: Instant,
}

impl Default for Clock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock {
    pub fn new() -> Self {
        Clock {
            origin: Instant::now(),
        }
    }

    pub fn now(&self) -> Timestamp {
        Timestamp(self.origin.elapsed().as_micros() as u64)
    }

    pub fn at(&self, instant: Instant) -> Timestamp {
        Timestamp(instant.saturating_duration_since(self.origin).as_micros() as u64)
    }

    /// Wall time left until `t`, zero if it has passed.
    pub fn until(&self, t: Timestamp) -> Duration {
        Duration::from_micros(t.0.saturating_sub(self.now().0))
    }
}
