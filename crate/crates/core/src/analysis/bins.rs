//! Equal-count bins with median summaries.

pub const DEFAULT_BIN_SIZE: usize = 50;

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Sizes of `⌊n/target⌋` (at least one) contiguous bins differing by at most one.
pub fn bin_sizes(n: usize, target: usize) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let k = (n / target.max(1)).max(1);
    let (base, extra) = (n / k, n % k);
    (0..k).map(|b| base + usize::from(b < extra)).collect()
}

/// Sort by `(x, y)`, cut into equal-count bins and return each bin's
/// `(median x, median y)`. The result does not depend on input order.
pub fn bin_scatter(x: &[f64], y: &[f64], target: usize) -> Vec<(f64, f64)> {
    assert_eq!(x.len(), y.len(), "x and y lengths differ");
    let mut pts: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut out = Vec::new();
    let mut start = 0;
    for size in bin_sizes(pts.len(), target) {
        let bin = &pts[start..start + size];
        let xs: Vec<f64> = bin.iter().map(|p| p.0).collect();
        let mut ys: Vec<f64> = bin.iter().map(|p| p.1).collect();
        ys.sort_by(f64::total_cmp);
        out.push((median(&xs), median(&ys)));
        start += size;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::KeyedStream;
    use proptest::prelude::*;

    #[test]
    fn even_split() {
        assert_eq!(bin_sizes(100, 50), vec![50, 50]);
        assert_eq!(bin_sizes(30, 50), vec![30]);
    }

    #[test]
    fn uneven_split_differs_by_one() {
        let s = bin_sizes(503, 50);
        assert_eq!(s.len(), 10);
        assert_eq!(s.iter().sum::<usize>(), 503);
        assert_eq!(s.iter().max().unwrap() - s.iter().min().unwrap(), 1);
        assert_eq!(*s.iter().max().unwrap(), 503usize.div_ceil(10));
    }

    #[test]
    fn identity_data_lies_on_diagonal() {
        let mut rng = KeyedStream::new(4, &[]);
        let x: Vec<f64> = (0..437).map(|_| rng.standard_normal()).collect();
        for (a, b) in bin_scatter(&x, &x, 50) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn medians_are_exact() {
        let x = [4.0, 1.0, 3.0, 2.0];
        let y = [40.0, 10.0, 30.0, 20.0];
        assert_eq!(bin_scatter(&x, &y, 2), vec![(1.5, 15.0), (3.5, 35.0)]);
    }

    proptest! {
        #[test]
        fn permutation_invariant(seed in 0u64..1000, n in 50usize..400) {
            let mut rng = KeyedStream::new(seed, &[]);
            let x: Vec<f64> = (0..n).map(|_| (rng.standard_normal() * 4.0).round()).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
            let mut idx: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                idx.swap(i, rng.below(i as u64 + 1) as usize);
            }
            let xp: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
            let yp: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            prop_assert_eq!(bin_scatter(&x, &y, 50), bin_scatter(&xp, &yp, 50));
        }
    }
}
