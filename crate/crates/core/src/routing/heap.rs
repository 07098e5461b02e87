//! Indexed binary max-heap over dense node indices with in-place key increase.
//!
//! Ordering is by key (larger first), then by node index (smaller first).
//! Every key comparison is counted.

use std::cmp::Ordering;

use crate::seg::LinkDuration;

const ABSENT: usize = usize::MAX;

#[derive(Debug)]
pub(crate) struct KeyedHeap {
    slots: Vec<usize>,
    position: Vec<usize>,
    keys: Vec<LinkDuration>,
    pub comparisons: u64,
}

impl KeyedHeap {
    pub fn with_capacity(nodes: usize) -> Self {
        KeyedHeap {
            slots: Vec::with_capacity(nodes),
            position: vec![ABSENT; nodes],
            keys: vec![LinkDuration::Finite(f64::NEG_INFINITY); nodes],
            comparisons: 0,
        }
    }

    #[cfg(test)]
    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn key(&self, node: usize) -> LinkDuration {
        self.keys[node]
    }

    fn above(&mut self, a: usize, b: usize) -> bool {
        self.comparisons += 1;
        match self.keys[a].total_cmp(&self.keys[b]) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => a < b,
        }
    }

    pub fn push(&mut self, node: usize, key: LinkDuration) {
        debug_assert_eq!(self.position[node], ABSENT);
        self.keys[node] = key;
        self.slots.push(node);
        self.position[node] = self.slots.len() - 1;
        self.sift_up(self.slots.len() - 1);
    }

    /// Raises `node`'s key if `key` is larger; returns whether it changed.
    pub fn increase(&mut self, node: usize, key: LinkDuration) -> bool {
        let at = self.position[node];
        debug_assert_ne!(at, ABSENT);
        self.comparisons += 1;
        if key.total_cmp(&self.keys[node]) != Ordering::Greater {
            return false;
        }
        self.keys[node] = key;
        self.sift_up(at);
        true
    }

    pub fn pop(&mut self) -> Option<usize> {
        let top = *self.slots.first()?;
        let last = self.slots.pop().expect("non-empty");
        self.position[top] = ABSENT;
        if !self.slots.is_empty() {
            self.slots[0] = last;
            self.position[last] = 0;
            self.sift_down(0);
        }
        Some(top)
    }

    fn swap(&mut self, i: usize, j: usize) {
        self.slots.swap(i, j);
        self.position[self.slots[i]] = i;
        self.position[self.slots[j]] = j;
    }

    fn sift_up(&mut self, mut at: usize) {
        while at > 0 {
            let parent = (at - 1) / 2;
            if self.above(self.slots[at], self.slots[parent]) {
                self.swap(at, parent);
                at = parent;
            } else {
                break;
            }
        }
    }

    fn sift_down(&mut self, mut at: usize) {
        loop {
            let (left, right) = (2 * at + 1, 2 * at + 2);
            let mut best = at;
            if left < self.slots.len() && self.above(self.slots[left], self.slots[best]) {
                best = left;
            }
            if right < self.slots.len() && self.above(self.slots[right], self.slots[best]) {
                best = right;
            }
            if best == at {
                break;
            }
            self.swap(at, best);
            at = best;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn pops_in_descending_key_then_ascending_index(
            keys in proptest::collection::vec(0u8..6, 1..60),
            raises in proptest::collection::vec((0usize..60, 0u8..10), 0..30),
        ) {
            let n = keys.len();
            let mut heap = KeyedHeap::with_capacity(n);
            let mut model: Vec<f64> = keys.iter().map(|&k| k as f64).collect();
            for (i, &k) in keys.iter().enumerate() {
                heap.push(i, LinkDuration::Finite(k as f64));
            }
            for (i, k) in raises {
                let i = i % n;
                heap.increase(i, LinkDuration::Finite(k as f64));
                model[i] = model[i].max(k as f64);
            }
            let mut expected: Vec<usize> = (0..n).collect();
            expected.sort_by(|&a, &b| model[b].total_cmp(&model[a]).then(a.cmp(&b)));
            let popped: Vec<usize> = std::iter::from_fn(|| heap.pop()).collect();
            prop_assert_eq!(popped, expected);
        }
    }

    #[test]
    fn unbounded_outranks_finite() {
        let mut heap = KeyedHeap::with_capacity(3);
        heap.push(0, LinkDuration::Finite(1e9));
        heap.push(2, LinkDuration::Unbounded);
        heap.push(1, LinkDuration::Unbounded);
        assert_eq!(heap.pop(), Some(1));
        assert_eq!(heap.pop(), Some(2));
        assert_eq!(heap.pop(), Some(0));
        assert!(heap.is_empty());
        assert!(heap.comparisons > 0);
    }
}
