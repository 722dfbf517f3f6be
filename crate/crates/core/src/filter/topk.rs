//! Bounded top-k selection under the crate-wide result order: higher score
//! first, ties broken by ascending id.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::Candidate;

/// Total order where `Less` means "ranks ahead of".
pub fn rank_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.score.total_cmp(&a.score).then(a.id.cmp(&b.id))
}

/// Heap entry ordered so that the worst candidate sits at the top.
#[derive(Debug, Clone, Copy)]
struct Worst(Candidate);

impl PartialEq for Worst {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Worst {}

impl PartialOrd for Worst {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Worst {
    fn cmp(&self, other: &Self) -> Ordering {
        rank_order(&self.0, &other.0)
    }
}

/// Keeps the best `k` candidates seen so far in O(log k) per insertion.
#[derive(Debug, Clone)]
pub struct TopK {
    k: usize,
    heap: BinaryHeap<Worst>,
}

impl TopK {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k.min(1 << 20) + 1),
        }
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// True if a candidate with this score and id would be kept.
    #[inline]
    pub fn admits(&self, score: f64, id: u64) -> bool {
        if self.heap.len() < self.k {
            return self.k > 0;
        }
        match self.heap.peek() {
            Some(Worst(w)) => score > w.score || (score == w.score && id < w.id),
            None => false,
        }
    }

    #[inline]
    pub fn push(&mut self, id: u64, score: f64) {
        if !self.admits(score, id) {
            return;
        }
        if self.heap.len() == self.k {
            self.heap.pop();
        }
        self.heap.push(Worst(Candidate { id, score }));
    }

    /// Lowest kept score once `k` candidates are held.
    #[inline]
    pub fn floor(&self) -> Option<f64> {
        if self.heap.len() < self.k {
            return None;
        }
        self.heap.peek().map(|Worst(w)| w.score)
    }

    pub fn merge(&mut self, other: TopK) {
        for Worst(c) in other.heap {
            self.push(c.id, c.score);
        }
    }

    /// Best first.
    pub fn into_sorted(self) -> Vec<Candidate> {
        self.heap
            .into_sorted_vec()
            .into_iter()
            .map(|w| w.0)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn floor_once_full() {
        let mut top = TopK::new(2);
        top.push(1, 0.5);
        assert_eq!(top.floor(), None);
        top.push(2, 0.7);
        assert_eq!(top.floor(), Some(0.5));
        top.push(3, 0.6);
        assert_eq!(top.floor(), Some(0.6));
    }

    #[test]
    fn keeps_best_with_id_tiebreak() {
        let mut top = TopK::new(3);
        for (id, score) in [(5, 0.5), (1, 0.9), (9, 0.5), (2, 0.5), (7, 0.1), (3, 0.95)] {
            top.push(id, score);
        }
        let ids: Vec<u64> = top.into_sorted().iter().map(|c| c.id).collect();
        assert_eq!(ids, vec![3, 1, 2]);
    }

    #[test]
    fn zero_k_keeps_nothing() {
        let mut top = TopK::new(0);
        top.push(1, 1.0);
        assert!(top.is_empty());
    }

    proptest! {
        #[test]
        fn matches_full_sort(scores in prop::collection::vec(-3i32..3, 0..200), k in 0usize..50) {
            let all: Vec<Candidate> = scores
                .iter()
                .enumerate()
                .map(|(i, &s)| Candidate { id: (i as u64 * 7919) % 1009, score: f64::from(s) / 2.0 })
                .collect();
            // ids above may collide; dedupe to keep the order total.
            let mut seen = std::collections::HashSet::new();
            let all: Vec<Candidate> = all.into_iter().filter(|c| seen.insert(c.id)).collect();

            let mut top = TopK::new(k);
            for c in &all {
                top.push(c.id, c.score);
            }
            let mut sorted = all.clone();
            sorted.sort_by(rank_order);
            sorted.truncate(k);
            prop_assert_eq!(top.into_sorted(), sorted);
        }

        #[test]
        fn sharded_merge_equals_single_pass(scores in prop::collection::vec(-5i32..5, 1..300), k in 1usize..40, shards in 1usize..7) {
            let mut single = TopK::new(k);
            for (i, &s) in scores.iter().enumerate() {
                single.push(i as u64, f64::from(s));
            }
            let chunk = scores.len().div_ceil(shards);
            let mut merged = TopK::new(k);
            for (c, part) in scores.chunks(chunk).enumerate() {
                let mut local = TopK::new(k);
                for (j, &s) in part.iter().enumerate() {
                    local.push((c * chunk + j) as u64, f64::from(s));
                }
                merged.merge(local);
            }
            prop_assert_eq!(single.into_sorted(), merged.into_sorted());
        }
    }
}
