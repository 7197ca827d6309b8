//! Discrete-event engine: a clock, a cancellable priority queue ordered by
//! `(fire_time, insertion sequence)`, and labelled RNG substreams.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::SimError;

/// Simulation time in seconds.
pub type Time = f64;

/// Generator type handed out for every labelled stream.
pub type RngStream = ChaCha8Rng;

/// Opaque handle returned by [`Kernel::schedule`]; used for cancellation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventHandle(u64);

struct Entry<E> {
    fire_time: Time,
    seq: u64,
    payload: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    // BinaryHeap is a max-heap: invert so the earliest (time, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .fire_time
            .total_cmp(&self.fire_time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Event queue plus simulation clock.
pub struct Kernel<E> {
    now: Time,
    next_seq: u64,
    queue: BinaryHeap<Entry<E>>,
    cancelled: HashSet<u64>,
    master_seed: u64,
}

impl<E> Kernel<E> {
    pub fn new(master_seed: u64) -> Self {
        Kernel {
            now: 0.0,
            next_seq: 0,
            queue: BinaryHeap::new(),
            cancelled: HashSet::new(),
            master_seed,
        }
    }

    pub fn now(&self) -> Time {
        self.now
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Number of live (not cancelled) events still queued.
    pub fn pending(&self) -> usize {
        self.queue.len() - self.cancelled.len()
    }

    pub fn schedule(&mut self, fire_time: Time, payload: E) -> Result<EventHandle, SimError> {
        if !fire_time.is_finite() || fire_time < self.now {
            return Err(SimError::ScheduleInPast {
                fire_time,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Entry {
            fire_time,
            seq,
            payload,
        });
        Ok(EventHandle(seq))
    }

    /// Marks a queued event so it is skipped when it reaches the head.
    /// Returns false if the event already fired or was already cancelled.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        if self.cancelled.contains(&handle.0) || !self.queue.iter().any(|e| e.seq == handle.0) {
            return false;
        }
        self.cancelled.insert(handle.0)
    }

    /// Pops the next live event with `fire_time <= t_end`, advancing the clock.
    pub fn pop_until(&mut self, t_end: Time) -> Option<(Time, E)> {
        while let Some(head) = self.queue.peek() {
            if head.fire_time > t_end {
                return None;
            }
            let entry = self.queue.pop().expect("peeked");
            if self.cancelled.remove(&entry.seq) {
                continue;
            }
            self.now = entry.fire_time;
            return Some((entry.fire_time, entry.payload));
        }
        None
    }

    /// Processes every event with `fire_time <= t_end` in order, then leaves
    /// the clock at `t_end`. Handler errors abort the run.
    pub fn run_until<F, Err>(&mut self, t_end: Time, mut handler: F) -> Result<Time, Err>
    where
        F: FnMut(&mut Self, Time, E) -> Result<(), Err>,
        Err: From<SimError>,
    {
        if t_end < self.now {
            return Err(SimError::ScheduleInPast {
                fire_time: t_end,
                now: self.now,
            }
            .into());
        }
        while let Some((t, ev)) = self.pop_until(t_end) {
            handler(self, t, ev)?;
        }
        self.now = t_end;
        Ok(self.now)
    }

    /// Independent stream for `label` under this kernel's master seed.
    pub fn rng(&self, label: &str) -> RngStream {
        rng_stream(self.master_seed, label)
    }
}

/// Stream keyed by `(master_seed, label)`. Identical on every platform.
pub fn rng_stream(master_seed: u64, label: &str) -> RngStream {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest[..32]);
    ChaCha8Rng::from_seed(seed)
}

/// Derives the seed of replication `index` from a master seed.
pub fn derive_seed(master_seed: u64, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update(b"replication");
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(word)
}
