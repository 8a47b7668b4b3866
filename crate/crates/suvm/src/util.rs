//! Small shared utilities: union-find, streaming moments, seeding.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Disjoint-set forest with path halving and union by size.
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }

    pub fn same(&mut self, a: usize, b: usize) -> bool {
        self.find(a) == self.find(b)
    }

    /// Groups of member indices, largest first; singletons included.
    pub fn components(&mut self) -> Vec<Vec<usize>> {
        let n = self.parent.len();
        let mut by_root: std::collections::HashMap<usize, Vec<usize>> =
            std::collections::HashMap::new();
        for i in 0..n {
            let r = self.find(i);
            by_root.entry(r).or_default().push(i);
        }
        let mut groups: Vec<Vec<usize>> = by_root.into_values().collect();
        // deterministic order: by size desc, then by smallest member
        groups.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
        groups
    }
}

/// Welford running mean/variance with a commutative merge.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunningMoments {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl RunningMoments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Population variance (n in the denominator); 0 for fewer than 2 samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / self.count as f64).max(0.0)
        }
    }

    pub fn merge(&mut self, other: &RunningMoments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n1 = self.count as f64;
        let n2 = other.count as f64;
        let delta = other.mean - self.mean;
        let n = n1 + n2;
        self.mean += delta * n2 / n;
        self.m2 += other.m2 + delta * delta * n1 * n2 / n;
        self.count += other.count;
    }
}

/// Standard normal draw (Box-Muller).
pub fn standard_normal(rng: &mut impl rand::Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Deterministic sub-seed derivation (SplitMix64 over the pair).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Least-squares fit of y = a + b·x; returns (a, b, r²).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (a, b, r2)
}

/// Weighted geometric median in the plane (Weiszfeld iteration).
pub fn geometric_median(points: &[(f64, f64)], weights: &[f64]) -> (f64, f64) {
    assert!(!points.is_empty());
    assert_eq!(points.len(), weights.len());
    let wsum: f64 = weights.iter().sum();
    let mut cx = points.iter().zip(weights).map(|(p, w)| p.0 * w).sum::<f64>() / wsum;
    let mut cy = points.iter().zip(weights).map(|(p, w)| p.1 * w).sum::<f64>() / wsum;
    for _ in 0..100 {
        let mut nx = 0.0;
        let mut ny = 0.0;
        let mut denom = 0.0;
        for (p, w) in points.iter().zip(weights) {
            let d = ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt();
            if d < 1e-12 {
                // iterate sits on a data point; that point is the median
                return (p.0, p.1);
            }
            let coef = w / d;
            nx += coef * p.0;
            ny += coef * p.1;
            denom += coef;
        }
        let (px, py) = (cx, cy);
        cx = nx / denom;
        cy = ny / denom;
        if (cx - px).abs() + (cy - py).abs() < 1e-10 {
            break;
        }
    }
    (cx, cy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn union_find_components_sorted_by_size() {
        let mut uf = UnionFind::new(6);
        uf.union(0, 1);
        uf.union(1, 2);
        uf.union(3, 4);
        let comps = uf.components();
        assert_eq!(comps[0], vec![0, 1, 2]);
        assert_eq!(comps[1], vec![3, 4]);
        assert_eq!(comps[2], vec![5]);
    }

    #[test]
    fn moments_match_naive() {
        let xs = [1.0, 2.0, 4.0, 8.0, 16.5];
        let mut m = RunningMoments::default();
        for &x in &xs {
            m.push(x);
        }
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / xs.len() as f64;
        assert!((m.mean - mean).abs() < 1e-12);
        assert!((m.variance() - var).abs() < 1e-12);
    }

    #[test]
    fn moments_merge_equals_single_stream() {
        let xs: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
        let mut whole = RunningMoments::default();
        for &x in &xs {
            whole.push(x);
        }
        let mut a = RunningMoments::default();
        let mut b = RunningMoments::default();
        for &x in &xs[..13] {
            a.push(x);
        }
        for &x in &xs[13..] {
            b.push(x);
        }
        let mut merged = a;
        merged.merge(&b);
        assert!((merged.mean - whole.mean).abs() < 1e-12);
        assert!((merged.variance() - whole.variance()).abs() < 1e-12);
        // opposite merge order
        let mut merged2 = b;
        merged2.merge(&a);
        assert!((merged2.mean - whole.mean).abs() < 1e-12);
        assert!((merged2.variance() - whole.variance()).abs() < 1e-12);
    }

    #[test]
    fn geometric_median_resists_outlier() {
        let pts = [(0.0, 0.0), (0.1, 0.0), (0.0, 0.1), (50.0, 50.0)];
        let w = [1.0; 4];
        let (x, y) = geometric_median(&pts, &w);
        assert!(x < 1.0 && y < 1.0, "median pulled to outlier: {x},{y}");
    }

    #[test]
    fn linear_fit_recovers_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [3.0, 5.0, 7.0, 9.0];
        let (a, b, r2) = linear_fit(&xs, &ys);
        assert!((a - 1.0).abs() < 1e-12);
        assert!((b - 2.0).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
    }
}
