//! Timestamped observation buffers that emulate sensor delay.

use std::collections::VecDeque;

/// Ordered buffer of `(timestamp, observation)`.
#[derive(Clone, Debug)]
pub struct LatencyQueue<T> {
    items: VecDeque<(f64, T)>,
    /// Entries older than `newest - horizon` are dropped, keeping at least one.
    horizon: f64,
}

impl<T> LatencyQueue<T> {
    pub fn new(horizon: f64) -> Self {
        LatencyQueue {
            items: VecDeque::new(),
            horizon,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }

    /// Appends an observation; timestamps must not decrease.
    pub fn push(&mut self, t: f64, obs: T) {
        if let Some((last, _)) = self.items.back() {
            debug_assert!(t >= *last, "latency queue timestamps must be ordered");
        }
        self.items.push_back((t, obs));
        // Keep the newest entry at or before the horizon so lookups up to it stay exact.
        while self.items.len() > 1 && self.items[1].0 <= t - self.horizon {
            self.items.pop_front();
        }
    }

    pub fn get(&self, latency: f64, now: f64) -> Option<&T> {
        apply_latency(&self.items, latency, now)
    }

    pub fn items(&self) -> &VecDeque<(f64, T)> {
        &self.items
    }
}

/// Newest observation with timestamp `<= now - latency`, or the oldest one when
/// none qualifies. `None` only for an empty queue.
pub fn apply_latency<T>(queue: &VecDeque<(f64, T)>, latency: f64, now: f64) -> Option<&T> {
    let cutoff = now - latency;
    // Small epsilon absorbs accumulated float error in simulated clocks.
    let eps = 1e-9;
    let idx = queue.partition_point(|(t, _)| *t <= cutoff + eps);
    match idx {
        0 => queue.front().map(|(_, o)| o),
        k => Some(&queue[k - 1].1),
    }
}
