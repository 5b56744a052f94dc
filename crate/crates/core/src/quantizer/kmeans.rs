//! Lloyd's algorithm with k-means++ seeding.

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use super::{nearest, sq_dist};
use crate::error::{GprError, Result};
use crate::rng;

#[derive(Clone, Debug)]
pub struct KMeansConfig {
    pub max_iterations: usize,
    /// Stop once the relative distortion change falls below this.
    pub tolerance: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            max_iterations: 100,
            tolerance: 1e-7,
        }
    }
}

#[derive(Clone, Debug)]
pub struct KMeansFit {
    pub centroids: Array2<f64>,
    pub assignments: Vec<usize>,
    /// Total squared distortion after the seeding assignment and after every Lloyd step.
    pub distortion_trace: Vec<f64>,
}

impl KMeansFit {
    pub fn distortion(&self) -> f64 {
        *self.distortion_trace.last().unwrap_or(&0.0)
    }
}

pub fn kmeans_fit(points: ArrayView2<'_, f64>, k: usize, seed: u64) -> Result<KMeansFit> {
    kmeans_fit_with(points, k, seed, &KMeansConfig::default())
}

pub fn kmeans_fit_with(
    points: ArrayView2<'_, f64>,
    k: usize,
    seed: u64,
    cfg: &KMeansConfig,
) -> Result<KMeansFit> {
    let n = points.nrows();
    if n == 0 {
        return Err(GprError::invalid("k-means on an empty point set"));
    }
    if k == 0 || k > n {
        return Err(GprError::invalid(format!("k = {k} must lie in 1..={n}")));
    }
    let mut rng = rng::seeded(seed);
    let mut centroids = plus_plus_seeds(points, k, &mut rng);
    let (mut assignments, mut dists) = assign(points, centroids.view());
    let mut trace = vec![dists.iter().sum::<f64>()];

    for _ in 0..cfg.max_iterations {
        update_means(points, &assignments, &mut centroids);
        reseed_empty(points, &assignments, &mut centroids, &mut dists);
        let (a, d) = assign(points, centroids.view());
        assignments = a;
        dists = d;
        let prev = *trace.last().unwrap();
        let cur: f64 = dists.iter().sum();
        trace.push(cur);
        if prev <= 0.0 || (prev - cur).abs() <= cfg.tolerance * prev {
            break;
        }
    }
    Ok(KMeansFit {
        centroids,
        assignments,
        distortion_trace: trace,
    })
}

fn plus_plus_seeds(points: ArrayView2<'_, f64>, k: usize, rng: &mut impl Rng) -> Array2<f64> {
    let n = points.nrows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), points.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave `target` above the final partial sum.
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            // Every remaining point coincides with a seed.
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), points.row(next)));
        }
    }
    let mut centroids = Array2::zeros((k, points.ncols()));
    for (row, &i) in chosen.iter().enumerate() {
        centroids.row_mut(row).assign(&points.row(i));
    }
    centroids
}

pub(crate) fn assign(points: ArrayView2<'_, f64>, centroids: ArrayView2<'_, f64>) -> (Vec<usize>, Vec<f64>) {
    points
        .outer_iter()
        .map(|p| nearest(centroids, p))
        .unzip()
}

fn update_means(points: ArrayView2<'_, f64>, assignments: &[usize], centroids: &mut Array2<f64>) {
    let mut sums = Array2::<f64>::zeros(centroids.raw_dim());
    let mut counts = vec![0usize; centroids.nrows()];
    for (p, &a) in points.outer_iter().zip(assignments) {
        let mut row = sums.row_mut(a);
        row += &p;
        counts[a] += 1;
    }
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 {
            let mean = &sums.row(c) / count as f64;
            centroids.row_mut(c).assign(&mean);
        }
    }
}

/// Moves every empty centroid onto the point farthest from its own centroid.
fn reseed_empty(
    points: ArrayView2<'_, f64>,
    assignments: &[usize],
    centroids: &mut Array2<f64>,
    dists: &mut [f64],
) {
    let mut counts = vec![0usize; centroids.nrows()];
    for &a in assignments {
        counts[a] += 1;
    }
    if counts.iter().all(|&c| c > 0) {
        return;
    }
    for (i, p) in points.outer_iter().enumerate() {
        dists[i] = sq_dist(p, centroids.row(assignments[i]));
    }
    for c in 0..centroids.nrows() {
        if counts[c] > 0 {
            continue;
        }
        let far = (0..dists.len())
            .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
            .unwrap();
        centroids.row_mut(c).assign(&points.row(far));
        dists[far] = 0.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand_distr::{Distribution, Normal};

    fn one_d(xs: &[f64]) -> Array2<f64> {
        Array2::from_shape_vec((xs.len(), 1), xs.to_vec()).unwrap()
    }

    fn sorted_1d(c: &Array2<f64>) -> Vec<f64> {
        let mut v: Vec<f64> = c.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    /// Distortion of the best 2-partition of a 1-D set, by exhaustive enumeration.
    fn best_two_partition(xs: &[f64]) -> (f64, Vec<f64>) {
        let n = xs.len();
        let mut best = (f64::INFINITY, vec![]);
        for mask in 1..(1u32 << n) - 1 {
            let (a, b): (Vec<f64>, Vec<f64>) = (0..n)
                .map(|i| (mask >> i) & 1 == 1)
                .zip(xs)
                .fold((vec![], vec![]), |(mut a, mut b), (in_a, &x)| {
                    if in_a { a.push(x) } else { b.push(x) }
                    (a, b)
                });
            let ma = a.iter().sum::<f64>() / a.len() as f64;
            let mb = b.iter().sum::<f64>() / b.len() as f64;
            let d: f64 = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>()
                + b.iter().map(|x| (x - mb).powi(2)).sum::<f64>();
            if d < best.0 {
                let mut c = vec![ma, mb];
                c.sort_by(f64::total_cmp);
                best = (d, c);
            }
        }
        best
    }

    #[test]
    fn two_pairs_match_exhaustive_partition() {
        let xs = [0.0, 0.0, 10.0, 10.0];
        let (d, centers) = best_two_partition(&xs);
        assert_eq!(centers, vec![0.0, 10.0]);
        assert_eq!(d, 0.0);
        for seed in 0..10 {
            let fit = kmeans_fit(one_d(&xs).view(), 2, seed).unwrap();
            assert_eq!(sorted_1d(&fit.centroids), centers);
            assert_eq!(fit.distortion(), d);
        }
    }

    #[test]
    fn k_equals_n_recovers_points() {
        let pts = array![[0.0, 1.0], [2.0, -1.0], [5.0, 5.0], [-3.0, 0.5]];
        let fit = kmeans_fit(pts.view(), 4, 11).unwrap();
        assert_eq!(fit.distortion(), 0.0);
        let mut got: Vec<Vec<f64>> = fit.centroids.outer_iter().map(|r| r.to_vec()).collect();
        let mut want: Vec<Vec<f64>> = pts.outer_iter().map(|r| r.to_vec()).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, want);
    }

    #[test]
    fn separated_blobs_locate_means() {
        let sigma = 1.0;
        let n = 400;
        let mut rng = rng::seeded(5);
        let normal = Normal::new(0.0, sigma).unwrap();
        let mut xs = Vec::with_capacity(n);
        for i in 0..n {
            let center = if i < n / 2 { 0.0 } else { 100.0 * sigma };
            xs.push(center + normal.sample(&mut rng));
        }
        let mean_a = xs[..n / 2].iter().sum::<f64>() / (n / 2) as f64;
        let mean_b = xs[n / 2..].iter().sum::<f64>() / (n / 2) as f64;
        let fit = kmeans_fit(one_d(&xs).view(), 2, 9).unwrap();
        let c = sorted_1d(&fit.centroids);
        let tol = 3.0 * sigma / ((n / 2) as f64).sqrt();
        assert!((c[0] - mean_a).abs() <= tol, "{} vs {}", c[0], mean_a);
        assert!((c[1] - mean_b).abs() <= tol, "{} vs {}", c[1], mean_b);
    }

    #[test]
    fn distortion_never_increases() {
        let mut rng = rng::seeded(1);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let pts = Array2::from_shape_fn((300, 3), |_| normal.sample(&mut rng));
        for seed in 0..5 {
            let fit = kmeans_fit(pts.view(), 7, seed).unwrap();
            for w in fit.distortion_trace.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", fit.distortion_trace);
            }
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let mut rng = rng::seeded(2);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let pts = Array2::from_shape_fn((100, 2), |_| normal.sample(&mut rng));
        let a = kmeans_fit(pts.view(), 5, 42).unwrap();
        let b = kmeans_fit(pts.view(), 5, 42).unwrap();
        assert_eq!(a.centroids, b.centroids);
        assert_eq!(a.distortion_trace, b.distortion_trace);
    }

    #[test]
    fn duplicates_do_not_break_seeding() {
        let pts = one_d(&[1.0, 1.0, 1.0, 1.0]);
        let fit = kmeans_fit(pts.view(), 3, 0).unwrap();
        assert_eq!(fit.distortion(), 0.0);
    }

    #[test]
    fn rejects_bad_k() {
        let pts = one_d(&[1.0, 2.0]);
        assert!(kmeans_fit(pts.view(), 3, 0).is_err());
        assert!(kmeans_fit(pts.view(), 0, 0).is_err());
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(kmeans_fit(empty.view(), 1, 0).is_err());
    }
}
