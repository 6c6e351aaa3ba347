//! Time-ordered event queue with a deterministic tie order.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("event scheduled at {at:?}, before the current time {now:?}")]
pub struct PastEvent {
    pub at: Timestamp,
    pub now: Timestamp,
}

#[derive(Debug)]
struct Entry<E> {
    key: (Timestamp, u8, u64),
    event: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key.cmp(&other.key)
    }
}

/// Pops by `(time, priority class, insertion order)`; lower class first.
#[derive(Debug)]
pub struct EventQueue<E> {
    heap: BinaryHeap<Reverse<Entry<E>>>,
    now: Timestamp,
    inserted: u64,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            now: Timestamp::ZERO,
            inserted: 0,
        }
    }

    /// Time of the last popped event.
    pub fn now(&self) -> Timestamp {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn schedule(&mut self, at: Timestamp, class: u8, event: E) -> Result<(), PastEvent> {
        if at < self.now {
            return Err(PastEvent { at, now: self.now });
        }
        self.heap.push(Reverse(Entry {
            key: (at, class, self.inserted),
            event,
        }));
        self.inserted += 1;
        Ok(())
    }

    pub fn peek_time(&self) -> Option<Timestamp> {
        self.heap.peek().map(|Reverse(e)| e.key.0)
    }

    pub fn pop(&mut self) -> Option<(Timestamp, E)> {
        let Reverse(entry) = self.heap.pop()?;
        self.now = entry.key.0;
        Some((entry.key.0, entry.event))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tie_order_is_class_then_insertion() {
        let mut q = EventQueue::new();
        let t = Timestamp(5);
        q.schedule(t, 1, "b1").unwrap();
        q.schedule(t, 0, "a").unwrap();
        q.schedule(t, 1, "b2").unwrap();
        q.schedule(Timestamp(1), 9, "early").unwrap();
        let order: Vec<_> = std::iter::from_fn(|| q.pop().map(|(_, e)| e)).collect();
        assert_eq!(order, ["early", "a", "b1", "b2"]);
    }

    #[test]
    fn rejects_the_past() {
        let mut q = EventQueue::new();
        q.schedule(Timestamp(10), 0, ()).unwrap();
        q.pop();
        assert!(q.schedule(Timestamp(9), 0, ()).is_err());
        assert!(q.schedule(Timestamp(10), 0, ()).is_ok());
    }
}
