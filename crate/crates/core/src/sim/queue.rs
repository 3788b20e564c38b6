use std::cmp::Reverse;
use std::collections::BinaryHeap;

/// Time-ordered event queue. Events at the same instant pop by ascending
/// class, then in insertion order.
#[derive(Debug)]
pub struct EventQueue<E> {
    heap: BinaryHeap<Reverse<(u64, u8, u64, Slot<E>)>>,
    seq: u64,
    now: u64,
}

#[derive(Debug)]
struct Slot<E>(E);

impl<E> PartialEq for Slot<E> {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl<E> Eq for Slot<E> {}

impl<E> PartialOrd for Slot<E> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Slot<E> {
    fn cmp(&self, _: &Self) -> std::cmp::Ordering {
        std::cmp::Ordering::Equal
    }
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        Self {
            heap: BinaryHeap::new(),
            seq: 0,
            now: 0,
        }
    }

    /// Schedules `event`; times in the past are clamped to now.
    pub fn push(&mut self, time_us: u64, class: u8, event: E) {
        let t = time_us.max(self.now);
        self.heap.push(Reverse((t, class, self.seq, Slot(event))));
        self.seq += 1;
    }

    pub fn pop(&mut self) -> Option<(u64, E)> {
        let Reverse((t, _, _, Slot(e))) = self.heap.pop()?;
        self.now = t;
        Some((t, e))
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orders_by_time_class_then_insertion() {
        let mut q = EventQueue::new();
        q.push(10, 1, "c");
        q.push(10, 0, "b");
        q.push(5, 9, "a");
        q.push(10, 1, "d");
        let order: Vec<_> = std::iter::from_fn(|| q.pop()).map(|(_, e)| e).collect();
        assert_eq!(order, vec!["a", "b", "c", "d"]);
    }

    #[test]
    fn past_events_run_now() {
        let mut q = EventQueue::new();
        q.push(100, 0, 1);
        q.pop();
        q.push(50, 0, 2);
        assert_eq!(q.pop(), Some((100, 2)));
    }
}
