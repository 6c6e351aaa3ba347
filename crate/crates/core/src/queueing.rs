//! Source-side queueing disciplines: FCFS with a capacity and drop policy,
//! the single-slot freshest-only queue (LCFS-1), and the fragment FIFO.
//!
//! Every push that discards an item hands the victim back to the caller, so
//! drop logging is just a matter of looking at the return value.

use std::collections::VecDeque;

use bytes::Bytes;
use serde::{Deserialize, Serialize};

use crate::time::Timestamp;

/// Anything carrying a generation timestamp.
pub trait Stamped {
    fn gen_timestamp(&self) -> Timestamp;
}

impl Stamped for Timestamp {
    fn gen_timestamp(&self) -> Timestamp {
        *self
    }
}

/// One information update as produced by an application.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Update {
    pub gen_timestamp: Timestamp,
    pub info_type: u8,
    pub payload: Bytes,
}

impl Update {
    pub fn new(gen_timestamp: Timestamp, info_type: u8, payload: impl Into<Bytes>) -> Self {
        Update {
            gen_timestamp,
            info_type,
            payload: payload.into(),
        }
    }

    pub fn payload_size(&self) -> usize {
        self.payload.len()
    }
}

impl Stamped for Update {
    fn gen_timestamp(&self) -> Timestamp {
        self.gen_timestamp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropPolicy {
    /// Reject the arriving item when full.
    TailDrop,
    /// Evict the oldest queued item to admit the arriving one.
    HeadDrop,
}

/// Push/pop/drop counters. `pushes == pops + drops + len` always holds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueueStats {
    pub pushes: u64,
    pub pops: u64,
    pub drops: u64,
}

#[derive(Debug, Clone)]
pub struct FcfsQueue<T> {
    items: VecDeque<T>,
    capacity: Option<usize>,
    drop_policy: DropPolicy,
    stats: QueueStats,
}

impl<T> FcfsQueue<T> {
    pub fn bounded(capacity: usize, drop_policy: DropPolicy) -> Self {
        FcfsQueue {
            items: VecDeque::new(),
            capacity: Some(capacity),
            drop_policy,
            stats: QueueStats::default(),
        }
    }

    pub fn unbounded() -> Self {
        FcfsQueue {
            items: VecDeque::new(),
            capacity: None,
            drop_policy: DropPolicy::TailDrop,
            stats: QueueStats::default(),
        }
    }

    /// Appends at the tail; returns the dropped item if the queue was full.
    pub fn push(&mut self, item: T) -> Option<T> {
        self.stats.pushes += 1;
        let full = self.capacity.is_some_and(|c| self.items.len() >= c);
        if !full {
            self.items.push_back(item);
            return None;
        }
        self.stats.drops += 1;
        match self.drop_policy {
            DropPolicy::TailDrop => Some(item),
            DropPolicy::HeadDrop => {
                let victim = self.items.pop_front();
                self.items.push_back(item);
                // capacity 0 head-drop: the arrival itself is the victim
                victim.or_else(|| self.items.pop_back())
            }
        }
    }

    pub fn pop(&mut self) -> Option<T> {
        let item = self.items.pop_front();
        if item.is_some() {
            self.stats.pops += 1;
        }
        item
    }

    pub fn peek(&self) -> Option<&T> {
        self.items.front()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn drop_count(&self) -> u64 {
        self.stats.drops
    }

    pub fn stats(&self) -> QueueStats {
        self.stats
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }
}

/// Head-drop queue of size one: keeps only the freshest update.
#[derive(Debug, Clone)]
pub struct Lcfs1Queue<T> {
    slot: Option<T>,
    replaced: u64,
    stats: QueueStats,
}

impl<T> Default for Lcfs1Queue<T> {
    fn default() -> Self {
        Lcfs1Queue {
            slot: None,
            replaced: 0,
            stats: QueueStats::default(),
        }
    }
}

impl<T: Stamped> Lcfs1Queue<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Keeps `item` if it is at least as fresh as the occupant (ties go to the
    /// newer push). Returns whichever item was discarded.
    pub fn push(&mut self, item: T) -> Option<T> {
        self.stats.pushes += 1;
        match &self.slot {
            Some(held) if item.gen_timestamp() < held.gen_timestamp() => {
                self.stats.drops += 1;
                Some(item)
            }
            Some(_) => {
                self.replaced += 1;
                self.stats.drops += 1;
                self.slot.replace(item)
            }
            None => {
                self.slot = Some(item);
                None
            }
        }
    }

    pub fn take(&mut self) -> Option<T> {
        let item = self.slot.take();
        if item.is_some() {
            self.stats.pops += 1;
        }
        item
    }

    pub fn peek(&self) -> Option<&T> {
        self.slot.as_ref()
    }

    pub fn is_empty(&self) -> bool {
        self.slot.is_none()
    }

    pub fn len(&self) -> usize {
        usize::from(self.slot.is_some())
    }

    /// Number of times an occupant was displaced by a fresher push.
    pub fn replaced_count(&self) -> u64 {
        self.replaced
    }

    pub fn stats(&self) -> QueueStats {
        self.stats
    }
}

/// Unbounded newest-first stack. Serving the top is age-equivalent to
/// [`Lcfs1Queue`]: whatever lies below the top is older than something already
/// served and can never lower the age.
#[derive(Debug, Clone)]
pub struct LcfsStack<T> {
    items: Vec<T>,
}

impl<T> Default for LcfsStack<T> {
    fn default() -> Self {
        LcfsStack { items: Vec::new() }
    }
}

impl<T> LcfsStack<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, item: T) {
        self.items.push(item);
    }

    pub fn pop(&mut self) -> Option<T> {
        self.items.pop()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Plain FIFO holding the remaining fragments of the update being drained.
#[derive(Debug, Clone)]
pub struct FragFifo<T> {
    items: VecDeque<T>,
}

impl<T> Default for FragFifo<T> {
    fn default() -> Self {
        FragFifo {
            items: VecDeque::new(),
        }
    }
}

impl<T> FragFifo<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, item: T) {
        self.items.push_back(item);
    }

    pub fn pop(&mut self) -> Option<T> {
        self.items.pop_front()
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

impl<T> Extend<T> for FragFifo<T> {
    fn extend<I: IntoIterator<Item = T>>(&mut self, iter: I) {
        self.items.extend(iter);
    }
}

/// Queue configuration as it appears in experiment files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum QueueSpec {
    Lcfs1,
    Fcfs { capacity: usize, drop: DropPolicy },
}

impl Default for QueueSpec {
    /// The WiFi/UDP style baseline: 1000 packets, tail drop.
    fn default() -> Self {
        QueueSpec::Fcfs {
            capacity: 1000,
            drop: DropPolicy::TailDrop,
        }
    }
}

impl QueueSpec {
    pub fn label(&self) -> String {
        match self {
            QueueSpec::Lcfs1 => "lcfs1".to_string(),
            QueueSpec::Fcfs {
                capacity,
                drop: DropPolicy::TailDrop,
            } => format!("fcfs{capacity}"),
            QueueSpec::Fcfs {
                capacity,
                drop: DropPolicy::HeadDrop,
            } => format!("fcfs{capacity}hd"),
        }
    }

    pub fn build<T: Stamped>(&self) -> QueueDiscipline<T> {
        match *self {
            QueueSpec::Lcfs1 => QueueDiscipline::Lcfs1(Lcfs1Queue::new()),
            QueueSpec::Fcfs { capacity, drop } => {
                QueueDiscipline::Fcfs(FcfsQueue::bounded(capacity, drop))
            }
        }
    }
}

/// Either discipline behind one interface.
#[derive(Debug, Clone)]
pub enum QueueDiscipline<T> {
    Fcfs(FcfsQueue<T>),
    Lcfs1(Lcfs1Queue<T>),
}

impl<T: Stamped> QueueDiscipline<T> {
    pub fn push(&mut self, item: T) -> Option<T> {
        match self {
            QueueDiscipline::Fcfs(q) => q.push(item),
            QueueDiscipline::Lcfs1(q) => q.push(item),
        }
    }

    pub fn take(&mut self) -> Option<T> {
        match self {
            QueueDiscipline::Fcfs(q) => q.pop(),
            QueueDiscipline::Lcfs1(q) => q.take(),
        }
    }

    pub fn peek(&self) -> Option<&T> {
        match self {
            QueueDiscipline::Fcfs(q) => q.peek(),
            QueueDiscipline::Lcfs1(q) => q.peek(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            QueueDiscipline::Fcfs(q) => q.len(),
            QueueDiscipline::Lcfs1(q) => q.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stats(&self) -> QueueStats {
        match self {
            QueueDiscipline::Fcfs(q) => q.stats(),
            QueueDiscipline::Lcfs1(q) => q.stats(),
        }
    }
}
