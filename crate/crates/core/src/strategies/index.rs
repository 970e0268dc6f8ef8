//! Incrementally maintained eligibility structures for large topic sets.
//!
//! The engine keeps one [`ArmIndex`] in step with its ledger so single-pick
//! decisions cost `O(log |T|)` instead of a scan. Every query returns the same
//! ids, in the same order, as the scanning path, so results do not depend on
//! whether an index is attached.

use super::Cap;
use crate::ledger::{Ledger, TopicId};
use std::cmp::Ordering;
use std::collections::BTreeSet;

/// Fenwick tree over 0/1 membership flags with order-statistic lookup.
#[derive(Debug, Clone)]
struct OrderedSet {
    tree: Vec<u32>,
    member: Vec<bool>,
    len: usize,
    top_bit: usize,
}

impl OrderedSet {
    fn new(n: usize) -> Self {
        Self {
            tree: vec![0; n + 1],
            member: vec![false; n],
            len: 0,
            top_bit: if n == 0 {
                0
            } else {
                1 << (usize::BITS - 1 - n.leading_zeros())
            },
        }
    }

    fn set(&mut self, id: usize, on: bool) {
        if self.member[id] == on {
            return;
        }
        self.member[id] = on;
        let mut i = id + 1;
        while i < self.tree.len() {
            if on {
                self.tree[i] += 1;
            } else {
                self.tree[i] -= 1;
            }
            i += i & i.wrapping_neg();
        }
        if on {
            self.len += 1;
        } else {
            self.len -= 1;
        }
    }

    /// The `k`-th smallest member (0-based).
    fn nth(&self, mut k: usize) -> Option<usize> {
        if k >= self.len {
            return None;
        }
        let mut pos = 0;
        let mut step = self.top_bit;
        while step > 0 {
            let next = pos + step;
            if next < self.tree.len() && (self.tree[next] as usize) <= k {
                pos = next;
                k -= self.tree[next] as usize;
            }
            step >>= 1;
        }
        Some(pos)
    }

    fn to_vec(&self) -> Vec<usize> {
        (0..self.member.len()).filter(|&t| self.member[t]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64, TopicId);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    /// Highest mean first, then ascending id.
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(self.1.cmp(&other.1))
    }
}

#[derive(Debug, Clone)]
pub struct ArmIndex {
    eligible: OrderedSet,
    unsampled: OrderedSet,
    ranked: BTreeSet<Key>,
    key: Vec<Option<f64>>,
}

impl ArmIndex {
    pub fn new(ledger: &Ledger, cap: Cap, blocked: &[bool]) -> Self {
        let n = ledger.n_topics();
        let mut index = Self {
            eligible: OrderedSet::new(n),
            unsampled: OrderedSet::new(n),
            ranked: BTreeSet::new(),
            key: vec![None; n],
        };
        for t in 0..n {
            index.refresh(t, ledger, cap, blocked);
        }
        index
    }

    /// Re-derives the state of `t` after its count, mean or block flag changed.
    pub fn refresh(&mut self, t: TopicId, ledger: &Ledger, cap: Cap, blocked: &[bool]) {
        let eligible = !blocked[t] && cap.allows(ledger.count(t));
        let mean = ledger.mean_unchecked(t);
        self.eligible.set(t, eligible);
        self.unsampled.set(t, eligible && mean.is_none());
        if let Some(old) = self.key[t].take() {
            self.ranked.remove(&Key(old, t));
        }
        if eligible {
            if let Some(m) = mean {
                self.ranked.insert(Key(m, t));
                self.key[t] = Some(m);
            }
        }
    }

    pub fn eligible_len(&self) -> usize {
        self.eligible.len
    }

    pub fn eligible_nth(&self, k: usize) -> Option<TopicId> {
        self.eligible.nth(k)
    }

    pub fn eligible_ids(&self) -> Vec<TopicId> {
        self.eligible.to_vec()
    }

    pub fn unsampled_len(&self) -> usize {
        self.unsampled.len
    }

    pub fn unsampled_nth(&self, k: usize) -> Option<TopicId> {
        self.unsampled.nth(k)
    }

    pub fn unsampled_ids(&self) -> Vec<TopicId> {
        self.unsampled.to_vec()
    }

    /// Best mean among sampled eligible topics and how many topics share it.
    pub fn best(&self) -> Option<(f64, usize)> {
        let first = self.ranked.first()?;
        let ties = self.ranked.iter().take_while(|k| k.0 == first.0).count();
        Some((first.0, ties))
    }

    /// The `k`-th (ascending id) of the topics tied at the best mean.
    pub fn best_nth(&self, k: usize) -> Option<TopicId> {
        self.ranked.iter().nth(k).map(|key| key.1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordered_set_nth() {
        let mut s = OrderedSet::new(10);
        for t in [7, 2, 9, 0] {
            s.set(t, true);
        }
        assert_eq!((0..4).map(|k| s.nth(k).unwrap()).collect::<Vec<_>>(), vec![0, 2, 7, 9]);
        assert_eq!(s.nth(4), None);
        s.set(2, false);
        s.set(2, false);
        assert_eq!(s.len, 3);
        assert_eq!(s.nth(1), Some(7));
        assert_eq!(s.to_vec(), vec![0, 7, 9]);
    }

    #[test]
    fn tracks_ledger() {
        let mut ledger = Ledger::new(5);
        let mut blocked = vec![false; 5];
        let cap = Cap::Bounded(2);
        ledger.record_value(1, 10.0).unwrap();
        ledger.record_value(3, 10.0).unwrap();
        ledger.record_value(4, 3.0).unwrap();
        let mut idx = ArmIndex::new(&ledger, cap, &blocked);
        assert_eq!(idx.unsampled_ids(), vec![0, 2]);
        assert_eq!(idx.best(), Some((10.0, 2)));
        assert_eq!(idx.best_nth(1), Some(3));

        ledger.record_value(1, 10.0).unwrap();
        idx.refresh(1, &ledger, cap, &blocked);
        assert_eq!(idx.best(), Some((10.0, 1)));
        assert_eq!(idx.eligible_ids(), vec![0, 2, 3, 4]);

        blocked[0] = true;
        idx.refresh(0, &ledger, cap, &blocked);
        assert_eq!(idx.unsampled_ids(), vec![2]);
        assert_eq!(idx.eligible_nth(0), Some(2));
    }
}
