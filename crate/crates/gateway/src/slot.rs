//! Single-value handoff between the reader and the control loop.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

/// Holds at most one value; a new value replaces an unconsumed one.
#[derive(Debug, Default)]
pub struct LatestSlot<T> {
    value: Mutex<Option<T>>,
    puts: AtomicU64,
    takes: AtomicU64,
    overwritten: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SlotStats {
    pub puts: u64,
    pub takes: u64,
    pub overwritten: u64,
    /// Values held at the moment of sampling (0 or 1).
    pub depth: usize,
}

impl<T> LatestSlot<T> {
    pub fn new() -> Self {
        Self { value: Mutex::new(None), puts: AtomicU64::new(0), takes: AtomicU64::new(0), overwritten: AtomicU64::new(0) }
    }

    pub fn put(&self, v: T) {
        let mut slot = self.value.lock().unwrap_or_else(|e| e.into_inner());
        if slot.replace(v).is_some() {
            self.overwritten.fetch_add(1, Ordering::Relaxed);
        }
        self.puts.fetch_add(1, Ordering::Relaxed);
    }

    pub fn take(&self) -> Option<T> {
        let v = self.value.lock().unwrap_or_else(|e| e.into_inner()).take();
        if v.is_some() {
            self.takes.fetch_add(1, Ordering::Relaxed);
        }
        v
    }

    pub fn stats(&self) -> SlotStats {
        let depth = usize::from(self.value.lock().unwrap_or_else(|e| e.into_inner()).is_some());
        SlotStats {
            puts: self.puts.load(Ordering::Relaxed),
            takes: self.takes.load(Ordering::Relaxed),
            overwritten: self.overwritten.load(Ordering::Relaxed),
            depth,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn newest_value_wins() {
        let s = LatestSlot::new();
        s.put(1);
        s.put(2);
        s.put(3);
        assert_eq!(s.stats().depth, 1);
        assert_eq!(s.take(), Some(3));
        assert_eq!(s.take(), None);
        let st = s.stats();
        assert_eq!((st.puts, st.takes, st.overwritten, st.depth), (3, 1, 2, 0));
        // Every put is either consumed or overwritten, except one in flight.
        assert_eq!(st.puts, st.takes + st.overwritten + st.depth as u64);
    }
}
