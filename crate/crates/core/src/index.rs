//! Reuse index management.
//!
//! Identifier 0 is reserved for passive values. Released identifiers go on a
//! LIFO free list and are handed out again before fresh ones.

use crate::active::{Identifier, MAX_IDENTIFIER};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct IndexManager {
    next_fresh: u32,
    free_list: Vec<u32>,
    live: Vec<bool>,
    pinned: Vec<bool>,
    live_count: usize,
}

impl Default for IndexManager {
    fn default() -> Self {
        Self::new()
    }
}

impl IndexManager {
    pub fn new() -> Self {
        IndexManager {
            next_fresh: 1,
            free_list: Vec::new(),
            live: vec![false],
            pinned: vec![false],
            live_count: 0,
        }
    }

    /// Most recently freed identifier if any, else the next fresh one.
    pub fn acquire(&mut self) -> Result<Identifier> {
        match self.free_list.pop() {
            Some(id) => {
                self.live[id as usize] = true;
                self.live_count += 1;
                Ok(Identifier::new(id))
            }
            None => self.acquire_unused(),
        }
    }

    /// Always issues an identifier that has never been used.
    pub fn acquire_unused(&mut self) -> Result<Identifier> {
        let id = self.next_fresh;
        if id > MAX_IDENTIFIER {
            return Err(Error::IdentifiersExhausted);
        }
        self.next_fresh += 1;
        self.live.push(true);
        self.pinned.push(false);
        self.live_count += 1;
        Ok(Identifier::new(id))
    }

    pub fn release(&mut self, id: Identifier) -> Result<()> {
        let raw = id.get();
        if raw == 0 {
            return Err(Error::PassiveIdentifier);
        }
        if !self.is_live(id) {
            return Err(Error::NotLive(raw));
        }
        self.live[raw as usize] = false;
        self.live_count -= 1;
        if !self.pinned[raw as usize] {
            self.free_list.push(raw);
        }
        Ok(())
    }

    /// Keeps `id` out of the free list until [`IndexManager::reset`].
    pub fn pin(&mut self, id: Identifier) -> Result<()> {
        let raw = id.get();
        if raw == 0 {
            return Err(Error::PassiveIdentifier);
        }
        if !self.is_live(id) {
            return Err(Error::NotLive(raw));
        }
        self.pinned[raw as usize] = true;
        Ok(())
    }

    pub fn is_pinned(&self, id: Identifier) -> bool {
        self.pinned.get(id.get() as usize).copied().unwrap_or(false)
    }

    pub fn is_live(&self, id: Identifier) -> bool {
        self.live.get(id.get() as usize).copied().unwrap_or(false)
    }

    pub fn max_issued(&self) -> u32 {
        self.next_fresh - 1
    }

    pub fn live_count(&self) -> usize {
        self.live_count
    }

    pub fn free_list(&self) -> &[u32] {
        &self.free_list
    }

    pub fn live_ids(&self) -> impl Iterator<Item = Identifier> + '_ {
        self.live
            .iter()
            .enumerate()
            .filter(|(_, &l)| l)
            .map(|(i, _)| Identifier::new(i as u32))
    }

    pub fn reset(&mut self) {
        *self = Self::new();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn id(n: u32) -> Identifier {
        Identifier::new(n)
    }

    #[test]
    fn fresh_manager_issues_one() {
        let mut m = IndexManager::new();
        assert_eq!(m.max_issued(), 0);
        assert_eq!(m.acquire().unwrap(), id(1));
    }

    #[test]
    fn dense_fresh_issue() {
        let mut m = IndexManager::new();
        let got: Vec<u32> = (0..3).map(|_| m.acquire().unwrap().get()).collect();
        assert_eq!(got, vec![1, 2, 3]);
    }

    #[test]
    fn lifo_reuse() {
        let mut m = IndexManager::new();
        assert_eq!(m.acquire().unwrap(), id(1));
        assert_eq!(m.acquire().unwrap(), id(2));
        m.release(id(1)).unwrap();
        assert_eq!(m.acquire().unwrap(), id(1));

        m.release(id(2)).unwrap();
        assert_eq!(m.acquire().unwrap(), id(2));
    }

    #[test]
    fn release_errors() {
        let mut m = IndexManager::new();
        assert_eq!(m.release(id(0)), Err(Error::PassiveIdentifier));
        assert_eq!(m.release(id(5)), Err(Error::NotLive(5)));
        m.acquire().unwrap();
        m.release(id(1)).unwrap();
        assert_eq!(m.release(id(1)), Err(Error::NotLive(1)));
    }

    #[test]
    fn max_issued_is_monotone() {
        let mut m = IndexManager::new();
        for _ in 0..4 {
            m.acquire().unwrap();
        }
        assert_eq!(m.max_issued(), 4);
        m.release(id(3)).unwrap();
        assert_eq!(m.max_issued(), 4);
    }

    #[test]
    fn pinned_ids_are_not_reused() {
        let mut m = IndexManager::new();
        let a = m.acquire().unwrap();
        m.pin(a).unwrap();
        m.pin(a).unwrap();
        m.release(a).unwrap();
        assert_eq!(m.acquire().unwrap(), id(2));
        m.reset();
        assert_eq!(m.acquire().unwrap(), id(1));
    }

    proptest! {
        #[test]
        fn live_and_free_are_disjoint(ops in proptest::collection::vec(any::<(bool, u8)>(), 1..400)) {
            let mut m = IndexManager::new();
            let mut live: Vec<u32> = Vec::new();
            let (mut acquires, mut releases) = (0usize, 0usize);
            let mut last_max = 0;
            for (acq, pick) in ops {
                if acq || live.is_empty() {
                    let i = m.acquire().unwrap().get();
                    prop_assert!(i != 0);
                    prop_assert!(!live.contains(&i));
                    live.push(i);
                    acquires += 1;
                } else {
                    let k = pick as usize % live.len();
                    let i = live.swap_remove(k);
                    m.release(id(i)).unwrap();
                    releases += 1;
                }
                prop_assert!(m.max_issued() >= last_max);
                last_max = m.max_issued();
                prop_assert_eq!(m.live_count(), acquires - releases);
                for f in m.free_list() {
                    prop_assert!(!live.contains(f));
                    prop_assert!(*f != 0);
                }
            }
        }
    }
}
