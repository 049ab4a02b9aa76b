//! Brute-force greedy covering construction.

/// Number of centers the greedy covering of `points` needs at the given
/// radius (Euclidean metric): repeatedly pick the first uncovered point as a
/// center and mark everything within `radius` of it as covered.
///
/// Greedy centers are pairwise more than `radius` apart, so the count is
/// also a packing lower bound; either way it dominates no covering number
/// and can be compared directly against analytic covering bounds.
pub fn greedy_cover_count(points: &[Vec<f64>], radius: f64) -> usize {
    assert!(radius > 0.0, "radius must be positive");
    let n = points.len();
    let mut covered = vec![false; n];
    let mut count = 0;
    for i in 0..n {
        if covered[i] {
            continue;
        }
        count += 1;
        let center = &points[i];
        for j in i..n {
            if covered[j] {
                continue;
            }
            let mut dist2 = 0.0;
            for (a, b) in center.iter().zip(points[j].iter()) {
                let d = a - b;
                dist2 += d * d;
            }
            if dist2 <= radius * radius {
                covered[j] = true;
            }
        }
    }
    count
}
