//! Update generators, advanced lazily up to whatever time the simulator needs.

use bytes::Bytes;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use super::config::{StreamSpec, TrafficKind};
use super::rng::{stream, StreamName};
use crate::instance::InstanceId;
use crate::queueing::Update;
use crate::time::Timestamp;

static ZEROS: [u8; 65536] = [0; 65536];

/// Payload of `size` zero bytes; shared storage when it fits.
pub fn zero_payload(size: usize) -> Bytes {
    if size <= ZEROS.len() {
        Bytes::from_static(&ZEROS[..size])
    } else {
        Bytes::from(vec![0u8; size])
    }
}

#[derive(Debug, Clone)]
pub struct TrafficSource {
    spec: StreamSpec,
    rng: ChaCha8Rng,
    /// Next generation instant in seconds, kept in f64 so that short Poisson
    /// gaps do not accumulate rounding.
    next_s: f64,
    last_admitted: Option<Timestamp>,
    generated: u64,
    limited: u64,
}

impl TrafficSource {
    pub fn new(instance: InstanceId, spec: StreamSpec, seed: u64) -> Self {
        let mut rng = stream(seed, StreamName::Traffic(instance));
        let next_s = match spec.kind {
            TrafficKind::Poisson => Self::gap(&mut rng, spec.rate_hz),
            // a random phase keeps periodic sources from marching in lockstep
            TrafficKind::Periodic => rng.random::<f64>() / spec.rate_hz,
        };
        TrafficSource {
            spec,
            rng,
            next_s,
            last_admitted: None,
            generated: 0,
            limited: 0,
        }
    }

    fn gap(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
        let e: f64 = Exp1.sample(rng);
        e / rate
    }

    /// Updates generated so far, including rate-limited ones.
    pub fn generated(&self) -> u64 {
        self.generated
    }

    /// Updates discarded by the static rate limiter.
    pub fn limited(&self) -> u64 {
        self.limited
    }

    pub fn next_time(&self) -> Timestamp {
        Timestamp::from_secs_f64(self.next_s)
    }

    /// Emits every update generated at or before `until`, in order.
    pub fn advance(&mut self, until: Timestamp, mut sink: impl FnMut(Update)) {
        loop {
            let at = self.next_time();
            if at > until {
                return;
            }
            self.next_s += match self.spec.kind {
                TrafficKind::Poisson => Self::gap(&mut self.rng, self.spec.rate_hz),
                TrafficKind::Periodic => 1.0 / self.spec.rate_hz,
            };
            self.generated += 1;
            if let Some(limit) = self.spec.rate_limit_hz {
                let min_gap = (1e6 / limit) as u64;
                if self
                    .last_admitted
                    .is_some_and(|last| at.0 - last.0 < min_gap)
                {
                    self.limited += 1;
                    continue;
                }
            }
            self.last_admitted = Some(at);
            sink(Update {
                gen_timestamp: at,
                info_type: self.spec.info_type,
                payload: zero_payload(self.spec.size),
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn collect(src: &mut TrafficSource, until: Timestamp) -> Vec<Update> {
        let mut out = Vec::new();
        src.advance(until, |u| out.push(u));
        out
    }

    #[test]
    fn periodic_spacing() {
        let id = InstanceId::new(0, 0);
        let mut src = TrafficSource::new(id, StreamSpec::periodic(0, 10.0, 20), 1);
        let ups = collect(&mut src, Timestamp::from_secs(1));
        assert_eq!(ups.len(), 10);
        for w in ups.windows(2) {
            let gap = (w[1].gen_timestamp - w[0].gen_timestamp).0;
            assert!((99_999..=100_001).contains(&gap), "{gap}");
        }
        assert!(ups.iter().all(|u| u.payload.len() == 20));
    }

    #[test]
    fn poisson_rate() {
        let id = InstanceId::new(3, 1);
        let mut src = TrafficSource::new(id, StreamSpec::poisson(1, 1000.0, 10), 9);
        let n = collect(&mut src, Timestamp::from_secs(20)).len() as f64;
        assert!((n - 20_000.0).abs() < 5.0 * 20_000f64.sqrt(), "{n}");
    }

    #[test]
    fn advance_is_incremental() {
        let id = InstanceId::new(0, 0);
        let spec = StreamSpec::poisson(0, 500.0, 10);
        let mut whole = TrafficSource::new(id, spec.clone(), 4);
        let mut pieces = TrafficSource::new(id, spec, 4);
        let a = collect(&mut whole, Timestamp::from_secs(2));
        let mut b = collect(&mut pieces, Timestamp::from_millis(700));
        b.extend(collect(&mut pieces, Timestamp::from_secs(2)));
        assert_eq!(a, b);
    }

    #[test]
    fn rate_limiter_caps_admissions() {
        let id = InstanceId::new(0, 0);
        let mut spec = StreamSpec::periodic(0, 100.0, 10);
        spec.rate_limit_hz = Some(10.0);
        let mut src = TrafficSource::new(id, spec, 2);
        let n = collect(&mut src, Timestamp::from_secs(10)).len();
        assert!((99..=101).contains(&n), "{n}");
        assert_eq!(src.generated(), src.limited() + n as u64);
    }
}
