//! Array-backed binary min-heap holding the marching front.
//!
//! There is no decrease-key: an improved node is simply pushed again and
//! stale entries (nodes already accepted) are discarded when they surface at
//! the root. The array is stored 0-based, so the children of slot `k` are
//! `2k + 1` and `2k + 2` (the 1-based `2k`, `2k + 1` rule shifted by one).

use std::cmp::Ordering;

#[derive(Clone, Copy, Debug, PartialEq)]
struct Entry<K> {
    key: K,
    node: usize,
}

impl<K: PartialOrd> Entry<K> {
    /// Orders by key, then by node index.
    #[inline]
    fn precedes(&self, other: &Self) -> bool {
        match self.key.partial_cmp(&other.key) {
            Some(Ordering::Less) => true,
            Some(Ordering::Greater) => false,
            _ => self.node < other.node,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct FrontHeap<K> {
    entries: Vec<Entry<K>>,
}

impl<K: PartialOrd + Copy> FrontHeap<K> {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(cap: usize) -> Self {
        Self {
            entries: Vec::with_capacity(cap),
        }
    }

    /// Number of stored entries, stale ones included.
    #[inline]
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, key: K, node: usize) {
        self.entries.push(Entry { key, node });
        let mut k = self.entries.len() - 1;
        while k > 0 {
            let parent = (k - 1) / 2;
            if self.entries[k].precedes(&self.entries[parent]) {
                self.entries.swap(k, parent);
                k = parent;
            } else {
                break;
            }
        }
    }

    /// Removes and returns the root entry, stale or not.
    pub fn pop(&mut self) -> Option<(K, usize)> {
        let last = self.entries.pop()?;
        if self.entries.is_empty() {
            return Some((last.key, last.node));
        }
        let top = std::mem::replace(&mut self.entries[0], last);
        let n = self.entries.len();
        let mut k = 0;
        loop {
            let left = 2 * k + 1;
            if left >= n {
                break;
            }
            let right = left + 1;
            let child = if right < n && self.entries[right].precedes(&self.entries[left]) {
                right
            } else {
                left
            };
            if self.entries[child].precedes(&self.entries[k]) {
                self.entries.swap(child, k);
                k = child;
            } else {
                break;
            }
        }
        Some((top.key, top.node))
    }

    /// Returns the smallest entry whose node is not marked in `known`,
    /// discarding stale entries on the way. `None` once the front is exhausted.
    pub fn extract_min(&mut self, known: &[bool]) -> Option<(K, usize)> {
        while let Some((key, node)) = self.pop() {
            if !known[node] {
                return Some((key, node));
            }
        }
        None
    }

    /// Checks the heap property over the whole array.
    pub fn is_valid(&self) -> bool {
        (1..self.entries.len()).all(|k| !self.entries[k].precedes(&self.entries[(k - 1) / 2]))
    }
}
