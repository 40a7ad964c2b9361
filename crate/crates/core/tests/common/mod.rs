//! Shared oracles for the integration tests.
#![allow(dead_code)]

use std::collections::VecDeque;
use std::sync::Arc;

use voxcast::volume::{Block, BlockKey};

/// Reference LRU over a recency list (front = least recent).
#[derive(Default)]
pub struct LruModel {
    pub capacity: usize,
    order: VecDeque<(BlockKey, usize)>,
    bytes: usize,
}

impl LruModel {
    pub fn new(capacity: usize) -> Self {
        LruModel {
            capacity,
            ..Default::default()
        }
    }

    pub fn get(&mut self, key: BlockKey) -> bool {
        match self.order.iter().position(|(k, _)| *k == key) {
            Some(i) => {
                let e = self.order.remove(i).unwrap();
                self.order.push_back(e);
                true
            }
            None => false,
        }
    }

    pub fn insert(&mut self, key: BlockKey, size: usize) -> Vec<BlockKey> {
        if let Some(i) = self.order.iter().position(|(k, _)| *k == key) {
            self.bytes -= self.order.remove(i).unwrap().1;
        }
        let mut evicted = Vec::new();
        while self.bytes + size > self.capacity {
            let (k, s) = self.order.pop_front().unwrap();
            self.bytes -= s;
            evicted.push(k);
        }
        self.order.push_back((key, size));
        self.bytes += size;
        evicted
    }

    pub fn bytes(&self) -> usize {
        self.bytes
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }
}

pub fn sized_block(key: BlockKey, size: usize) -> Arc<Block> {
    Arc::new(Block {
        key,
        block_size: 8,
        channels: 1,
        bits_per_channel: 8,
        data: vec![key.coords[0] as u8; size],
    })
}

/// Cache operation for model-based tests.
#[derive(Clone, Copy, Debug)]
pub enum CacheOp {
    Get(u32),
    Insert(u32, usize),
}
