use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::SimTime;
use crate::error::SimError;

/// A scheduled action. Events are totally ordered by `(time, seq)`.
#[derive(Debug, Clone)]
pub struct Event<A> {
    pub time: SimTime,
    pub seq: u64,
    pub action: A,
}

impl<A> PartialEq for Event<A> {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}

impl<A> Eq for Event<A> {}

impl<A> PartialOrd for Event<A> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<A> Ord for Event<A> {
    // Reversed so the max-heap pops the earliest event first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

/// Min-ordered event queue that owns the simulation clock.
#[derive(Debug)]
pub struct EventQueue<A> {
    heap: BinaryHeap<Event<A>>,
    now: SimTime,
    next_seq: u64,
}

impl<A> Default for EventQueue<A> {
    fn default() -> Self {
        Self::new()
    }
}

impl<A> EventQueue<A> {
    pub fn new() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            now: SimTime::ZERO,
            next_seq: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Inserts an action at an absolute time, returning its sequence number.
    pub fn schedule(&mut self, time: SimTime, action: A) -> Result<u64, SimError> {
        if time < self.now {
            return Err(SimError::EventInPast { at: time, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event { time, seq, action });
        Ok(seq)
    }

    pub fn schedule_in(&mut self, delay: SimTime, action: A) -> u64 {
        let at = self.now + delay;
        self.schedule(at, action).expect("relative schedule is never in the past")
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|e| e.time)
    }

    /// Removes the earliest event and advances the clock to it.
    pub fn pop(&mut self) -> Option<Event<A>> {
        let ev = self.heap.pop()?;
        debug_assert!(ev.time >= self.now);
        self.now = ev.time;
        Some(ev)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Event<A>> {
        self.heap.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pops_in_time_order() {
        let mut q = EventQueue::new();
        q.schedule(SimTime(5), "late").unwrap();
        q.schedule(SimTime(3), "early").unwrap();
        assert_eq!(q.pop().unwrap().action, "early");
        assert_eq!(q.pop().unwrap().action, "late");
        assert_eq!(q.now(), SimTime(5));
    }

    #[test]
    fn equal_times_pop_in_seq_order() {
        let mut q = EventQueue::new();
        let a = q.schedule(SimTime(7), 'a').unwrap();
        let b = q.schedule(SimTime(7), 'b').unwrap();
        assert!(a < b);
        assert_eq!(q.pop().unwrap().seq, a);
        assert_eq!(q.pop().unwrap().seq, b);
    }

    #[test]
    fn past_event_is_rejected() {
        let mut q = EventQueue::new();
        q.schedule(SimTime(10), ()).unwrap();
        q.pop();
        let err = q.schedule(SimTime(9), ()).unwrap_err();
        assert_eq!(err, SimError::EventInPast { at: SimTime(9), now: SimTime(10) });
    }

    proptest! {
        #[test]
        fn random_inserts_pop_sorted(times in proptest::collection::vec(0u64..500, 1..1000)) {
            let mut q = EventQueue::new();
            let mut oracle = Vec::new();
            for t in &times {
                let seq = q.schedule(SimTime(*t), ()).unwrap();
                oracle.push((*t, seq));
            }
            oracle.sort();
            let popped: Vec<(u64, u64)> =
                std::iter::from_fn(|| q.pop()).map(|e| (e.time.0, e.seq)).collect();
            prop_assert_eq!(popped, oracle);
        }
    }
}
