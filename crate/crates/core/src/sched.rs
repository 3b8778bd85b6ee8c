//! Discrete-event queue ordered by `(time, insertion)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::Tick;

struct Slot<E> {
    at: Tick,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Slot<E> {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}

impl<E> Eq for Slot<E> {}

impl<E> PartialOrd for Slot<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Slot<E> {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

pub struct Scheduler<E> {
    heap: BinaryHeap<Slot<E>>,
    now: Tick,
    seq: u64,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self {
            heap: BinaryHeap::new(),
            now: 0,
            seq: 0,
        }
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> Tick {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Events in the past are clamped to the current time.
    pub fn schedule(&mut self, at: Tick, event: E) {
        self.seq += 1;
        self.heap.push(Slot {
            at: at.max(self.now),
            seq: self.seq,
            event,
        });
    }

    pub fn peek_time(&self) -> Option<Tick> {
        self.heap.peek().map(|s| s.at)
    }

    pub fn pop(&mut self) -> Option<(Tick, E)> {
        let s = self.heap.pop()?;
        self.now = s.at;
        Some((s.at, s.event))
    }

    /// Moves the clock forward without an event.
    pub fn advance_to(&mut self, t: Tick) {
        self.now = self.now.max(t);
    }
}
