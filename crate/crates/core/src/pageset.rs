use rand::Rng;
use rustc_hash::FxHashMap;

use crate::trace::PageId;

/// Set of pages with O(1) insert, remove, membership and uniform sampling.
#[derive(Clone, Debug, Default)]
pub struct PageSet {
    items: Vec<PageId>,
    pos: FxHashMap<PageId, usize>,
}

impl PageSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(cap: usize) -> Self {
        PageSet {
            items: Vec::with_capacity(cap),
            pos: FxHashMap::with_capacity_and_hasher(cap, Default::default()),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn contains(&self, page: PageId) -> bool {
        self.pos.contains_key(&page)
    }

    /// Returns `false` if the page was already present.
    pub fn insert(&mut self, page: PageId) -> bool {
        if self.pos.contains_key(&page) {
            return false;
        }
        self.pos.insert(page, self.items.len());
        self.items.push(page);
        true
    }

    /// Returns `false` if the page was absent.
    pub fn remove(&mut self, page: PageId) -> bool {
        let Some(i) = self.pos.remove(&page) else {
            return false;
        };
        let last = self.items.pop().expect("nonempty");
        if i < self.items.len() {
            self.items[i] = last;
            self.pos.insert(last, i);
        }
        true
    }

    pub fn clear(&mut self) {
        self.items.clear();
        self.pos.clear();
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = PageId> + '_ {
        self.items.iter().copied()
    }

    pub fn as_slice(&self) -> &[PageId] {
        &self.items
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<PageId> {
        if self.items.is_empty() {
            None
        } else {
            Some(self.items[rng.random_range(0..self.items.len())])
        }
    }

    /// Pages in ascending id order; insertion order depends on history.
    pub fn sorted(&self) -> Vec<PageId> {
        let mut v = self.items.clone();
        v.sort_unstable();
        v
    }
}

impl FromIterator<PageId> for PageSet {
    fn from_iter<T: IntoIterator<Item = PageId>>(iter: T) -> Self {
        let mut s = PageSet::new();
        for p in iter {
            s.insert(p);
        }
        s
    }
}
