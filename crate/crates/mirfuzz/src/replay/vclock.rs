//! Vector clocks over fork-order thread ids.

/// Componentwise logical clock; absent components are zero.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VectorClock {
    clocks: Vec<u64>,
}

impl VectorClock {
    pub fn new() -> VectorClock {
        VectorClock { clocks: Vec::new() }
    }

    pub fn get(&self, thread: u32) -> u64 {
        self.clocks.get(thread as usize).copied().unwrap_or(0)
    }

    pub fn tick(&mut self, thread: u32) {
        let i = thread as usize;
        if i >= self.clocks.len() {
            self.clocks.resize(i + 1, 0);
        }
        self.clocks[i] += 1;
    }

    /// Componentwise max.
    pub fn join(&mut self, other: &VectorClock) {
        if other.clocks.len() > self.clocks.len() {
            self.clocks.resize(other.clocks.len(), 0);
        }
        for (i, &v) in other.clocks.iter().enumerate() {
            if v > self.clocks[i] {
                self.clocks[i] = v;
            }
        }
    }

    /// Componentwise less-or-equal.
    pub fn le(&self, other: &VectorClock) -> bool {
        self.clocks.iter().enumerate().all(|(i, &v)| v <= other.get(i as u32))
    }

    pub fn concurrent_with(&self, other: &VectorClock) -> bool {
        !self.le(other) && !other.le(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_and_concurrency() {
        let mut a = VectorClock::new();
        let mut b = VectorClock::new();
        a.tick(0);
        assert!(a.le(&a));
        assert!(!a.le(&b));
        b.join(&a);
        b.tick(1);
        assert!(a.le(&b));
        assert!(!b.le(&a));
        let mut c = VectorClock::new();
        c.tick(2);
        assert!(b.concurrent_with(&c));
    }

    #[test]
    fn join_is_componentwise_max() {
        let mut a = VectorClock::new();
        a.tick(0);
        a.tick(0);
        let mut b = VectorClock::new();
        b.tick(1);
        let mut j = a.clone();
        j.join(&b);
        assert_eq!(j.get(0), 2);
        assert_eq!(j.get(1), 1);
        let mut j2 = b.clone();
        j2.join(&a);
        assert_eq!(j, j2);
    }
}
