//! Byte-budgeted block caches with timestamp eviction.
//!
//! Every touch stamps the entry with a fresh tick from a monotonic clock and
//! pushes `(tick, key)` onto a min-heap. Eviction pops the heap and discards
//! nodes whose tick is no longer the entry's current stamp, so the victim is
//! always the entry with the oldest live timestamp.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet, VecDeque};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use crate::container::ContainerHandle;
use crate::error::{Error, Result};
use crate::volume::{Block, BlockKey};

pub type CacheKey = BlockKey;

/// FIFO of keys waiting to be loaded, without duplicates.
#[derive(Clone, Debug, Default)]
pub struct RequestQueue {
    order: VecDeque<CacheKey>,
    members: HashSet<CacheKey>,
}

impl RequestQueue {
    pub fn push(&mut self, key: CacheKey) -> bool {
        if self.members.insert(key) {
            self.order.push_back(key);
            true
        } else {
            false
        }
    }

    pub fn remove(&mut self, key: &CacheKey) -> bool {
        if self.members.remove(key) {
            self.order.retain(|k| k != key);
            true
        } else {
            false
        }
    }

    pub fn drain(&mut self, limit: usize) -> Vec<CacheKey> {
        let n = limit.min(self.order.len());
        let out: Vec<CacheKey> = self.order.drain(..n).collect();
        for k in &out {
            self.members.remove(k);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn keys(&self) -> Vec<CacheKey> {
        self.order.iter().copied().collect()
    }
}

struct Entry {
    block: Arc<Block>,
    size_bytes: usize,
    stamp: AtomicU64,
}

#[derive(Default)]
struct Slots {
    entries: HashMap<CacheKey, Entry>,
    total_bytes: usize,
}

/// Counters reported in render statistics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
    pub resident_bytes: usize,
    pub peak_bytes: usize,
    pub capacity_bytes: usize,
}

/// A least-recently-used block cache with a byte budget.
///
/// `get` and `peek` take the slot map's shared lock; `insert` takes it
/// exclusively. No lock is held while a caller reads from disk.
pub struct BlockCache {
    capacity: usize,
    slots: RwLock<Slots>,
    heap: Mutex<BinaryHeap<Reverse<(u64, CacheKey)>>>,
    requests: Mutex<RequestQueue>,
    clock: AtomicU64,
    hits: AtomicU64,
    misses: AtomicU64,
    evictions: AtomicU64,
    peak: AtomicUsize,
}

impl std::fmt::Debug for BlockCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BlockCache")
            .field("capacity", &self.capacity)
            .field("stats", &self.stats())
            .finish()
    }
}

impl BlockCache {
    pub fn new(capacity_bytes: usize) -> Self {
        BlockCache {
            capacity: capacity_bytes,
            slots: RwLock::new(Slots::default()),
            heap: Mutex::new(BinaryHeap::new()),
            requests: Mutex::new(RequestQueue::default()),
            clock: AtomicU64::new(0),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
            evictions: AtomicU64::new(0),
            peak: AtomicUsize::new(0),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    fn tick(&self) -> u64 {
        self.clock.fetch_add(1, Ordering::Relaxed) + 1
    }

    /// On a hit the entry is re-stamped; on a miss the key is queued for
    /// loading (once).
    pub fn get(&self, key: &CacheKey) -> Option<Arc<Block>> {
        let slots = self.slots.read().unwrap();
        if let Some(entry) = slots.entries.get(key) {
            let stamp = self.tick();
            entry.stamp.store(stamp, Ordering::Relaxed);
            let mut heap = self.heap.lock().unwrap();
            heap.push(Reverse((stamp, *key)));
            if heap.len() > 4 * slots.entries.len() + 64 {
                *heap = rebuild_heap(&slots);
            }
            drop(heap);
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Some(entry.block.clone());
        }
        drop(slots);
        self.misses.fetch_add(1, Ordering::Relaxed);
        self.requests.lock().unwrap().push(*key);
        None
    }

    /// Lookup that neither stamps nor queues.
    pub fn peek(&self, key: &CacheKey) -> Option<Arc<Block>> {
        self.slots.read().unwrap().entries.get(key).map(|e| e.block.clone())
    }

    pub fn contains(&self, key: &CacheKey) -> bool {
        self.slots.read().unwrap().entries.contains_key(key)
    }

    /// Stores `block`, evicting oldest-stamped entries until it fits.
    /// Returns the evicted keys, oldest first.
    pub fn insert(&self, key: CacheKey, block: Arc<Block>) -> Result<Vec<CacheKey>> {
        let size = block.byte_len();
        if size > self.capacity {
            return Err(Error::BlockTooLarge {
                size,
                capacity: self.capacity,
            });
        }
        let mut slots = self.slots.write().unwrap();
        let mut heap = self.heap.lock().unwrap();
        if let Some(old) = slots.entries.remove(&key) {
            slots.total_bytes -= old.size_bytes;
        }
        let mut evicted = Vec::new();
        while slots.total_bytes + size > self.capacity {
            let Some(Reverse((stamp, victim))) = heap.pop() else {
                unreachable!("cache over budget with an empty heap");
            };
            let live = slots
                .entries
                .get(&victim)
                .is_some_and(|e| e.stamp.load(Ordering::Relaxed) == stamp);
            if live {
                let e = slots.entries.remove(&victim).unwrap();
                slots.total_bytes -= e.size_bytes;
                evicted.push(victim);
            }
        }
        let stamp = self.tick();
        slots.entries.insert(
            key,
            Entry {
                block,
                size_bytes: size,
                stamp: AtomicU64::new(stamp),
            },
        );
        slots.total_bytes += size;
        heap.push(Reverse((stamp, key)));
        if heap.len() > 4 * slots.entries.len() + 64 {
            *heap = rebuild_heap(&slots);
        }
        self.peak.fetch_max(slots.total_bytes, Ordering::Relaxed);
        self.evictions.fetch_add(evicted.len() as u64, Ordering::Relaxed);
        drop(heap);
        drop(slots);
        self.requests.lock().unwrap().remove(&key);
        Ok(evicted)
    }

    /// Removes up to `limit` pending keys in FIFO order.
    pub fn drain_requests(&self, limit: usize) -> Vec<CacheKey> {
        self.requests.lock().unwrap().drain(limit)
    }

    pub fn pending_requests(&self) -> Vec<CacheKey> {
        self.requests.lock().unwrap().keys()
    }

    pub fn len(&self) -> usize {
        self.slots.read().unwrap().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn resident_bytes(&self) -> usize {
        self.slots.read().unwrap().total_bytes
    }

    pub fn peak_bytes(&self) -> usize {
        self.peak.load(Ordering::Relaxed)
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
            evictions: self.evictions.load(Ordering::Relaxed),
            resident_bytes: self.resident_bytes(),
            peak_bytes: self.peak_bytes(),
            capacity_bytes: self.capacity,
        }
    }

    /// Current stamp of a resident key (test and diagnostics hook).
    pub fn stamp_of(&self, key: &CacheKey) -> Option<u64> {
        self.slots
            .read()
            .unwrap()
            .entries
            .get(key)
            .map(|e| e.stamp.load(Ordering::Relaxed))
    }
}

fn rebuild_heap(slots: &Slots) -> BinaryHeap<Reverse<(u64, CacheKey)>> {
    slots
        .entries
        .iter()
        .map(|(k, e)| Reverse((e.stamp.load(Ordering::Relaxed), *k)))
        .collect()
}

/// Disk → memory cache → render cache. A render-cache miss falls through to
/// the memory cache, which falls through to the container.
#[derive(Debug)]
pub struct BlockStore {
    container: Arc<ContainerHandle>,
    pub memory: BlockCache,
    pub render: BlockCache,
    disk_reads: AtomicU64,
    checksum_errors: AtomicU64,
}

impl BlockStore {
    pub fn new(container: Arc<ContainerHandle>, memory_bytes: usize, render_bytes: usize) -> Self {
        BlockStore {
            container,
            memory: BlockCache::new(memory_bytes),
            render: BlockCache::new(render_bytes),
            disk_reads: AtomicU64::new(0),
            checksum_errors: AtomicU64::new(0),
        }
    }

    pub fn container(&self) -> &ContainerHandle {
        &self.container
    }

    pub fn disk_reads(&self) -> u64 {
        self.disk_reads.load(Ordering::Relaxed)
    }

    pub fn checksum_errors(&self) -> u64 {
        self.checksum_errors.load(Ordering::Relaxed)
    }

    /// Makes `key` resident in the render cache, loading it if needed.
    pub fn fetch(&self, key: CacheKey) -> Result<Arc<Block>> {
        if let Some(b) = self.render.get(&key) {
            return Ok(b);
        }
        let block = match self.memory.get(&key) {
            Some(b) => b,
            None => {
                self.disk_reads.fetch_add(1, Ordering::Relaxed);
                let block = match self.container.read_block(key) {
                    Ok(b) => Arc::new(b),
                    Err(e) => {
                        if matches!(e, Error::ChecksumMismatch { .. }) {
                            self.checksum_errors.fetch_add(1, Ordering::Relaxed);
                        }
                        return Err(e);
                    }
                };
                self.memory.insert(key, block.clone())?;
                block
            }
        };
        self.render.insert(key, block.clone())?;
        Ok(block)
    }

    /// Loads up to `limit` keys the render cache has queued. Returns how many
    /// were loaded.
    pub fn service_requests(&self, limit: usize) -> Result<usize> {
        let keys = self.render.drain_requests(limit);
        for key in &keys {
            self.fetch(*key)?;
        }
        Ok(keys.len())
    }

    /// A resident copy of `key` from either cache level, without touching
    /// timestamps or queueing a request.
    pub fn resident(&self, key: &CacheKey) -> Option<Arc<Block>> {
        self.render.peek(key).or_else(|| self.memory.peek(key))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(tag: u32) -> Arc<Block> {
        Arc::new(Block {
            key: BlockKey::new(0, [tag, 0, 0]),
            block_size: 8,
            channels: 1,
            bits_per_channel: 8,
            data: vec![tag as u8; 512],
        })
    }

    fn key(tag: u32) -> CacheKey {
        BlockKey::new(0, [tag, 0, 0])
    }

    #[test]
    fn miss_enqueues_once() {
        let cache = BlockCache::new(1024);
        assert!(cache.get(&key(1)).is_none());
        assert!(cache.get(&key(1)).is_none());
        assert_eq!(cache.pending_requests(), vec![key(1)]);
        cache.insert(key(1), block(1)).unwrap();
        assert_eq!(cache.get(&key(1)).unwrap().data[0], 1);
        assert!(cache.pending_requests().is_empty());
    }

    #[test]
    fn touched_entry_survives() {
        let cache = BlockCache::new(1024);
        cache.insert(key(0), block(0)).unwrap();
        cache.insert(key(1), block(1)).unwrap();
        cache.get(&key(0));
        assert_eq!(cache.insert(key(2), block(2)).unwrap(), vec![key(1)]);
    }

    #[test]
    fn oldest_evicted_without_touch() {
        let cache = BlockCache::new(1024);
        cache.insert(key(0), block(0)).unwrap();
        cache.insert(key(1), block(1)).unwrap();
        assert_eq!(cache.insert(key(2), block(2)).unwrap(), vec![key(0)]);
        assert_eq!(cache.resident_bytes(), 1024);
    }

    #[test]
    fn oversize_block_rejected() {
        let cache = BlockCache::new(100);
        assert!(matches!(cache.insert(key(0), block(0)), Err(Error::BlockTooLarge { .. })));
    }

    #[test]
    fn drain_is_fifo_and_bounded() {
        let cache = BlockCache::new(1024);
        for t in 0..3 {
            cache.get(&key(t));
        }
        assert_eq!(cache.drain_requests(0), vec![]);
        assert_eq!(cache.drain_requests(2), vec![key(0), key(1)]);
        assert_eq!(cache.pending_requests(), vec![key(2)]);
        assert_eq!(cache.drain_requests(5), vec![key(2)]);
        assert_eq!(cache.drain_requests(5), vec![]);
    }

    #[test]
    fn stamps_strictly_increase() {
        let cache = BlockCache::new(4096);
        cache.insert(key(0), block(0)).unwrap();
        let mut last = cache.stamp_of(&key(0)).unwrap();
        for _ in 0..10 {
            cache.get(&key(0));
            let now = cache.stamp_of(&key(0)).unwrap();
            assert!(now > last);
            last = now;
        }
    }

    #[test]
    fn reinsert_replaces_without_double_counting() {
        let cache = BlockCache::new(1024);
        cache.insert(key(0), block(0)).unwrap();
        cache.insert(key(0), block(0)).unwrap();
        assert_eq!(cache.len(), 1);
        assert_eq!(cache.resident_bytes(), 512);
    }

    #[test]
    fn heap_compaction_keeps_lru_order() {
        let cache = BlockCache::new(512 * 3);
        for t in 0..3 {
            cache.insert(key(t), block(t)).unwrap();
        }
        for _ in 0..500 {
            cache.get(&key(0));
            cache.get(&key(2));
        }
        cache.insert(key(3), block(3)).unwrap_or_default();
        // key(1) was never touched after insertion
        assert!(!cache.contains(&key(1)));
        assert!(cache.contains(&key(0)) && cache.contains(&key(2)));
    }
}
