use rand::Rng;

/// Complete binary tree of priority sums over a fixed number of leaves.
///
/// Node `1` is the root; node `k` has children `2k` and `2k + 1`; leaf `i`
/// lives at `leaf_base + i`. Parents are recomputed as the sum of their
/// children on every update, so the sums never accumulate drift.
#[derive(Debug, Clone)]
pub struct SumTree {
    capacity: usize,
    leaf_base: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "sum tree needs at least one leaf");
        let leaf_base = capacity.next_power_of_two();
        Self { capacity, leaf_base, nodes: vec![0.0; 2 * leaf_base] }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, leaf: usize) -> f64 {
        self.nodes[self.leaf_base + leaf]
    }

    /// Set leaf `leaf` to `priority` and refresh the sums on its root path.
    pub fn set(&mut self, leaf: usize, priority: f64) {
        assert!(leaf < self.capacity, "leaf {leaf} out of range");
        debug_assert!(priority >= 0.0 && priority.is_finite());
        let mut k = self.leaf_base + leaf;
        self.nodes[k] = priority;
        while k > 1 {
            k /= 2;
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
    }

    /// Leaf whose cumulative interval contains `mass ∈ [0, total)`.
    ///
    /// Descends left when `mass` is below the left subtree sum. Masses at or
    /// beyond the total (possible only through rounding) land on the last leaf
    /// with positive priority.
    pub fn find(&self, mass: f64) -> usize {
        let mut k = 1;
        let mut m = mass.max(0.0);
        while k < self.leaf_base {
            let left = self.nodes[2 * k];
            let right = self.nodes[2 * k + 1];
            if m < left || right <= 0.0 {
                k *= 2;
            } else {
                m -= left;
                k = 2 * k + 1;
            }
        }
        let mut leaf = k - self.leaf_base;
        // rounding may walk into a zero leaf; back off to a positive one
        while self.get(leaf) <= 0.0 && leaf > 0 {
            leaf -= 1;
        }
        leaf
    }

    /// Stratified proportional draws: the total mass is cut into `n` equal
    /// segments, one uniform draw per segment, and the results are shuffled
    /// so each position is marginally distributed as `p_i = w_i / Σ w`.
    pub fn sample_stratified<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        let total = self.total();
        let seg = total / n as f64;
        let mut out: Vec<usize> = (0..n).map(|j| self.find(seg * (j as f64 + rng.random::<f64>()))).collect();
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            out.swap(i, j);
        }
        out
    }

    /// Largest relative deviation of any internal node from the sum of its children.
    pub fn max_node_residual(&self) -> f64 {
        (1..self.leaf_base)
            .map(|k| {
                let sum = self.nodes[2 * k] + self.nodes[2 * k + 1];
                let diff = (self.nodes[k] - sum).abs();
                if sum > 0.0 {
                    diff / sum
                } else {
                    diff
                }
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::rng_from_seed;

    #[test]
    fn find_matches_cumulative_intervals() {
        let mut t = SumTree::new(5);
        for (i, w) in [1.0, 0.0, 2.0, 3.0, 0.5].iter().enumerate() {
            t.set(i, *w);
        }
        assert_eq!(t.total(), 6.5);
        assert_eq!(t.find(0.0), 0);
        assert_eq!(t.find(0.999), 0);
        assert_eq!(t.find(1.0), 2);
        assert_eq!(t.find(2.99), 2);
        assert_eq!(t.find(3.0), 3);
        assert_eq!(t.find(6.2), 4);
        assert_eq!(t.find(100.0), 4);
    }

    #[test]
    fn node_sums_stay_consistent() {
        let mut rng = rng_from_seed(7);
        let mut t = SumTree::new(37);
        let mut leaves = vec![0.0; 37];
        for _ in 0..5000 {
            let i = rng.random_range(0..37);
            let w = rng.random_range(0.0..10.0);
            t.set(i, w);
            leaves[i] = w;
        }
        let brute: f64 = leaves.iter().sum();
        assert!((t.total() - brute).abs() <= 1e-9 * brute);
        assert!(t.max_node_residual() == 0.0);
    }
}
