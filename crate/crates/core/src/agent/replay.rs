use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;

use super::{Action, StateVector};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: StateVector,
    pub a: Action,
    pub r: f64,
    pub s_next: StateVector,
    pub done: bool,
}

/// Fixed-capacity FIFO experience store.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Appends a transition, evicting the oldest when full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// `n` distinct transitions drawn uniformly, or `None` if fewer are stored.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Option<Vec<&Transition>> {
        if self.items.len() < n {
            return None;
        }
        Some(
            index::sample(rng, self.items.len(), n)
                .into_iter()
                .map(|i| &self.items[i])
                .collect(),
        )
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn tagged(r: f64) -> Transition {
        let s = StateVector {
            x_gnb: 0.0,
            x_gnb_ue: 0.0,
            y_gnb_ue: 0.0,
            x_gnb_obs: 0.0,
            y_gnb_obs: 0.0,
            vx_gnb: 0.0,
            vx_ue: 0.0,
            vy_ue: 0.0,
            vx_obs: 0.0,
            vy_obs: 0.0,
            los_status: 0.0,
        };
        Transition {
            s,
            a: Action::Maintain,
            r,
            s_next: s,
            done: false,
        }
    }

    proptest! {
        #[test]
        fn keeps_last_capacity_in_order(capacity in 1usize..64, extra in 0usize..100) {
            let mut buf = ReplayBuffer::new(capacity);
            let total = capacity + extra;
            for i in 0..total {
                buf.push(tagged(i as f64));
            }
            prop_assert_eq!(buf.len(), capacity);
            let kept: Vec<f64> = buf.iter().map(|t| t.r).collect();
            let expected: Vec<f64> = (extra..total).map(|i| i as f64).collect();
            prop_assert_eq!(kept, expected);
        }
    }

    #[test]
    fn sampling_needs_enough_items() {
        let mut buf = ReplayBuffer::new(10);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for i in 0..4 {
            buf.push(tagged(i as f64));
        }
        assert!(buf.sample(5, &mut rng).is_none());
        let batch = buf.sample(4, &mut rng).unwrap();
        let mut seen: Vec<f64> = batch.iter().map(|t| t.r).collect();
        seen.sort_by(f64::total_cmp);
        assert_eq!(seen, vec![0.0, 1.0, 2.0, 3.0]);
    }
}
