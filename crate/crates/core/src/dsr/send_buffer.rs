use std::collections::VecDeque;

use super::packet::Data;
use crate::engine::SimTime;
use crate::NodeId;

/// Data waiting at its source for a route.
#[derive(Debug, Clone, PartialEq)]
pub struct Buffered {
    pub data: Data,
    pub destination: NodeId,
    pub enqueued: SimTime,
}

#[derive(Debug, Clone)]
pub struct SendBuffer {
    queue: VecDeque<Buffered>,
    capacity: usize,
}

impl SendBuffer {
    pub fn new(capacity: usize) -> Self {
        SendBuffer {
            queue: VecDeque::new(),
            capacity,
        }
    }

    /// Hands the packet back when the buffer is full.
    pub fn push(&mut self, entry: Buffered) -> Result<(), Buffered> {
        if self.queue.len() >= self.capacity {
            return Err(entry);
        }
        self.queue.push_back(entry);
        Ok(())
    }

    /// Remove and return all packets for `dst`, oldest first.
    pub fn take_for(&mut self, dst: NodeId) -> Vec<Buffered> {
        let (taken, kept): (Vec<_>, Vec<_>) =
            self.queue.drain(..).partition(|b| b.destination == dst);
        self.queue = kept.into();
        taken
    }

    /// Remove packets that have waited at least `timeout`.
    pub fn expire(&mut self, now: SimTime, timeout: SimTime) -> Vec<Buffered> {
        let (expired, kept): (Vec<_>, Vec<_>) = self
            .queue
            .drain(..)
            .partition(|b| now.saturating_sub(b.enqueued) >= timeout);
        self.queue = kept.into();
        expired
    }

    pub fn has_packets_for(&self, dst: NodeId) -> bool {
        self.queue.iter().any(|b| b.destination == dst)
    }

    pub fn destinations(&self) -> Vec<NodeId> {
        let mut d: Vec<_> = self.queue.iter().map(|b| b.destination).collect();
        d.sort();
        d.dedup();
        d
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }
}
