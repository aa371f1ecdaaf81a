/// Binary tree over a fixed number of leaves where every internal node holds
/// the sum (and, in a parallel array, the max) of its children.
///
/// Leaves are addressed by slot index `0..capacity`. Sampling walks from the
/// root, descending left when the query mass fits in the left subtree.
#[derive(Debug, Clone)]
pub struct SumTree {
    leaves: usize,
    sums: Vec<f64>,
    maxes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        let leaves = capacity.max(1).next_power_of_two();
        Self {
            leaves,
            sums: vec![0.0; 2 * leaves],
            maxes: vec![0.0; 2 * leaves],
        }
    }

    pub fn capacity(&self) -> usize {
        self.leaves
    }

    pub fn total(&self) -> f64 {
        self.sums[1]
    }

    pub fn max(&self) -> f64 {
        self.maxes[1]
    }

    pub fn get(&self, slot: usize) -> f64 {
        self.sums[self.leaves + slot]
    }

    pub fn set(&mut self, slot: usize, value: f64) {
        debug_assert!(value >= 0.0 && value.is_finite(), "priority {value}");
        let mut ix = self.leaves + slot;
        self.sums[ix] = value;
        self.maxes[ix] = value;
        while ix > 1 {
            ix /= 2;
            // Recompute from children instead of adding deltas so the root never drifts.
            self.sums[ix] = self.sums[2 * ix] + self.sums[2 * ix + 1];
            self.maxes[ix] = self.maxes[2 * ix].max(self.maxes[2 * ix + 1]);
        }
    }

    /// Slot whose cumulative-sum interval contains `mass`, for `mass` in `[0, total)`.
    /// Zero-priority leaves are never returned while the total is positive.
    pub fn find(&self, mass: f64) -> usize {
        let mut ix = 1;
        let mut mass = mass;
        while ix < self.leaves {
            let left = 2 * ix;
            if mass < self.sums[left] || self.sums[left + 1] <= 0.0 {
                ix = left;
            } else {
                mass -= self.sums[left];
                ix = left + 1;
            }
        }
        // Floating-point slack at the right edge can land on an empty leaf.
        let mut slot = ix - self.leaves;
        while self.get(slot) <= 0.0 && slot > 0 {
            slot -= 1;
        }
        slot
    }

    /// Sum of all leaves, recomputed directly; for consistency checks.
    pub fn leaf_sum(&self) -> f64 {
        self.sums[self.leaves..].iter().sum()
    }
}
