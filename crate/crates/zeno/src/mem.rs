//! Cache bookkeeping structures and physical page storage.
//!
//! `LruCache` models a set-associative structure with true-LRU replacement.
//! It tracks presence only; whoever uses it decides what a hit means and
//! what data backs it. With `ways = 0` the cache is fully associative,
//! which is the configuration whose hit counts obey the stack-inclusion
//! property across capacities.

pub const PAGE_BYTES: u64 = 4096;
pub const LINE_BYTES: u64 = 64;
pub const WORDS_PER_PAGE: usize = (PAGE_BYTES / 8) as usize;

/// Keys must map themselves to a set-index value; the low bits select the
/// set. Using an explicit function keeps placement deterministic across
/// runs and hosts.
pub trait CacheKey: Copy + Eq {
    fn index_bits(&self) -> u64;
}

impl CacheKey for u64 {
    fn index_bits(&self) -> u64 {
        *self
    }
}

impl CacheKey for (u64, u64) {
    fn index_bits(&self) -> u64 {
        self.0 ^ self.1.rotate_left(17)
    }
}

/// Set-associative LRU cache. Each set is kept in MRU-first order.
#[derive(Debug, Clone)]
pub struct LruCache<K: CacheKey, V = ()> {
    sets: Vec<Vec<(K, V)>>,
    ways: usize,
}

impl<K: CacheKey, V> LruCache<K, V> {
    /// `entries` total capacity; `ways = 0` means fully associative.
    pub fn new(entries: usize, ways: usize) -> Self {
        assert!(entries >= 1);
        let (set_count, ways) = if ways == 0 || ways >= entries {
            (1, entries)
        } else {
            assert!(entries % ways == 0, "entries must divide into ways");
            (entries / ways, ways)
        };
        LruCache { sets: (0..set_count).map(|_| Vec::new()).collect(), ways }
    }

    fn set_of(&self, key: &K) -> usize {
        (key.index_bits() % self.sets.len() as u64) as usize
    }

    /// Probe for `key`; on a hit the entry moves to MRU position.
    pub fn probe(&mut self, key: &K) -> Option<&mut V> {
        let set = self.set_of(key);
        let entries = &mut self.sets[set];
        let pos = entries.iter().position(|(k, _)| k == key)?;
        let entry = entries.remove(pos);
        entries.insert(0, entry);
        Some(&mut entries[0].1)
    }

    /// Look without touching recency.
    pub fn peek(&mut self, key: &K) -> Option<&mut V> {
        let set = self.set_of(key);
        self.sets[set].iter_mut().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    /// Insert at MRU, evicting the LRU entry of the set when full.
    /// Returns the victim.
    pub fn insert(&mut self, key: K, value: V) -> Option<(K, V)> {
        let set = self.set_of(&key);
        let entries = &mut self.sets[set];
        if let Some(pos) = entries.iter().position(|(k, _)| *k == key) {
            let old = entries.remove(pos);
            entries.insert(0, (key, value));
            return Some(old);
        }
        let victim = if entries.len() >= self.ways { entries.pop() } else { None };
        entries.insert(0, (key, value));
        victim
    }

    pub fn invalidate(&mut self, key: &K) -> Option<V> {
        let set = self.set_of(key);
        let entries = &mut self.sets[set];
        let pos = entries.iter().position(|(k, _)| k == key)?;
        Some(entries.remove(pos).1)
    }

    /// Drop every entry matching the predicate; returns how many went.
    pub fn invalidate_matching(&mut self, mut pred: impl FnMut(&K, &V) -> bool) -> u64 {
        let mut dropped = 0;
        for set in &mut self.sets {
            set.retain(|(k, v)| {
                let hit = pred(k, v);
                dropped += hit as u64;
                !hit
            });
        }
        dropped
    }

    pub fn clear(&mut self) -> u64 {
        let mut dropped = 0;
        for set in &mut self.sets {
            dropped += set.len() as u64;
            set.clear();
        }
        dropped
    }

    pub fn len(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.iter().all(Vec::is_empty)
    }
}

/// One 4 KiB physical page plus a capability-tag bit per aligned 64-bit
/// word. Ordinary stores clear the covered tags; only whole-word tagged
/// stores can set one.
#[derive(Debug, Clone)]
pub struct Page {
    pub bytes: Box<[u8]>,
    tags: [u64; WORDS_PER_PAGE / 64],
}

impl Default for Page {
    fn default() -> Self {
        Page { bytes: vec![0u8; PAGE_BYTES as usize].into_boxed_slice(), tags: [0; 8] }
    }
}

impl Page {
    pub fn read(&self, offset: usize, out: &mut [u8]) {
        out.copy_from_slice(&self.bytes[offset..offset + out.len()]);
    }

    /// Plain (untagged) store: writes bytes and clears the tags of every
    /// word the store overlaps.
    pub fn write(&mut self, offset: usize, data: &[u8]) {
        self.bytes[offset..offset + data.len()].copy_from_slice(data);
        let first_word = offset / 8;
        let last_word = (offset + data.len() - 1) / 8;
        for w in first_word..=last_word {
            self.tags[w / 64] &= !(1u64 << (w % 64));
        }
    }

    /// Whole-word store carrying a tag. `offset` must be 8-aligned.
    pub fn write_tagged(&mut self, offset: usize, value: u64, tag: bool) {
        debug_assert_eq!(offset % 8, 0);
        self.bytes[offset..offset + 8].copy_from_slice(&value.to_le_bytes());
        let w = offset / 8;
        if tag {
            self.tags[w / 64] |= 1u64 << (w % 64);
        } else {
            self.tags[w / 64] &= !(1u64 << (w % 64));
        }
    }

    /// Tag of the aligned word at `offset`; unaligned reads see no tag.
    pub fn word_tag(&self, offset: usize) -> bool {
        if offset % 8 != 0 {
            return false;
        }
        let w = offset / 8;
        self.tags[w / 64] & (1u64 << (w % 64)) != 0
    }
}

/// Per-node physical memory: a growable pool of pages addressed by ppn.
#[derive(Debug, Clone, Default)]
pub struct PageStore {
    pages: Vec<Page>,
}

impl PageStore {
    pub fn alloc(&mut self) -> u64 {
        self.pages.push(Page::default());
        (self.pages.len() - 1) as u64
    }

    pub fn page(&self, ppn: u64) -> &Page {
        &self.pages[ppn as usize]
    }

    pub fn page_mut(&mut self, ppn: u64) -> &mut Page {
        &mut self.pages[ppn as usize]
    }

    pub fn page_count(&self) -> usize {
        self.pages.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lru_evicts_least_recent() {
        let mut c: LruCache<u64> = LruCache::new(2, 0);
        assert!(c.insert(1, ()).is_none());
        assert!(c.insert(2, ()).is_none());
        assert!(c.probe(&1).is_some()); // 1 becomes MRU
        let victim = c.insert(3, ());
        assert_eq!(victim.map(|(k, _)| k), Some(2));
        assert!(c.probe(&1).is_some());
        assert!(c.probe(&2).is_none());
    }

    #[test]
    fn set_associative_indexing_isolates_sets() {
        // 4 entries, 2 ways -> 2 sets; even keys in set 0, odd in set 1.
        let mut c: LruCache<u64> = LruCache::new(4, 2);
        c.insert(0, ());
        c.insert(2, ());
        c.insert(4, ()); // evicts 0 from set 0
        assert!(c.probe(&0).is_none());
        assert!(c.probe(&2).is_some());
        c.insert(1, ());
        assert!(c.probe(&1).is_some());
    }

    #[test]
    fn invalidate_matching_counts() {
        let mut c: LruCache<u64> = LruCache::new(8, 0);
        for k in 0..6 {
            c.insert(k, ());
        }
        assert_eq!(c.invalidate_matching(|k, _| k % 2 == 0), 3);
        assert_eq!(c.len(), 3);
    }

    #[test]
    fn stack_inclusion_for_fully_associative_lru() {
        // Hits at capacity c are a subset of hits at capacity c' > c for
        // the same trace.
        let trace: Vec<u64> = (0..500u64).map(|i| (i * 7919 + i * i * 104729) % 37).collect();
        let mut prev_hits = 0u64;
        for cap in [2usize, 4, 8, 16, 32, 64] {
            let mut c: LruCache<u64> = LruCache::new(cap, 0);
            let mut hits = 0;
            for k in &trace {
                if c.probe(k).is_some() {
                    hits += 1;
                } else {
                    c.insert(*k, ());
                }
            }
            assert!(hits >= prev_hits, "cap {cap}: {hits} < {prev_hits}");
            prev_hits = hits;
        }
    }

    #[test]
    fn page_tags_cleared_by_plain_writes() {
        let mut p = Page::default();
        p.write_tagged(16, 0xdead, true);
        assert!(p.word_tag(16));
        p.write(20, &[1]); // partial overlap clears the word tag
        assert!(!p.word_tag(16));
        p.write_tagged(24, 7, true);
        p.write_tagged(24, 7, false);
        assert!(!p.word_tag(24));
    }
}
