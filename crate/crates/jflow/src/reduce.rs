//! Deterministic reductions.
//!
//! All grid reductions in this crate go through the pairwise tree below with
//! a fixed fan-out, so sums are bit-identical regardless of how many worker
//! threads evaluate the pointwise maps that feed them.

/// Leaf size of the pairwise summation tree. Fixed so the reduction order
/// never depends on the thread count.
const LEAF: usize = 64;

/// Pairwise (cascade) sum over a slice.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= LEAF {
        let mut s = 0.0;
        for &v in x {
            s += v;
        }
        return s;
    }
    let mid = x.len() / 2;
    pairwise_sum(&x[..mid]) + pairwise_sum(&x[mid..])
}

/// Pairwise sum of `f(i)` over `0..len` without materializing the values.
pub fn pairwise_sum_fn(len: usize, f: &mut impl FnMut(usize) -> f64) -> f64 {
    fn go(lo: usize, hi: usize, f: &mut impl FnMut(usize) -> f64) -> f64 {
        if hi - lo <= LEAF {
            let mut s = 0.0;
            for i in lo..hi {
                s += f(i);
            }
            return s;
        }
        let mid = lo + (hi - lo) / 2;
        go(lo, mid, f) + go(mid, hi, f)
    }
    if len == 0 {
        0.0
    } else {
        go(0, len, f)
    }
}

/// Mean over a slice (pairwise sum divided by length).
pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    pairwise_sum(x) / x.len() as f64
}

/// Minimum (exact, order-independent).
pub fn min(x: &[f64]) -> f64 {
    x.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Maximum (exact, order-independent).
pub fn max(x: &[f64]) -> f64 {
    x.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Max of |x| (exact, order-independent).
pub fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |a, &v| a.max(v.abs()))
}

/// Fixed chunk length for grid reductions. Partial sums are computed per
/// chunk (in parallel when the grid is large) and combined by the pairwise
/// tree, so the result is bit-identical for every thread count.
const GRID_CHUNK: usize = 1024;

/// Threshold below which parallel dispatch is pure overhead.
const PAR_THRESHOLD: usize = 8192;

/// Canonical deterministic grid sum of `f(p)` for `p` in `0..len`.
pub fn grid_sum(len: usize, f: impl Fn(usize) -> f64 + Sync) -> f64 {
    let chunks = len.div_ceil(GRID_CHUNK);
    let mut partials = vec![0.0f64; chunks];
    let chunk_sum = |ci: usize| -> f64 {
        let lo = ci * GRID_CHUNK;
        let hi = (lo + GRID_CHUNK).min(len);
        let mut s = 0.0;
        for p in lo..hi {
            s += f(p);
        }
        s
    };
    if len < PAR_THRESHOLD {
        for (ci, slot) in partials.iter_mut().enumerate() {
            *slot = chunk_sum(ci);
        }
    } else {
        use rayon::prelude::*;
        partials
            .par_iter_mut()
            .enumerate()
            .for_each(|(ci, slot)| *slot = chunk_sum(ci));
    }
    pairwise_sum(&partials)
}

/// Deterministic parallel fill of a slice: out[p] = f(p). The output does
/// not depend on the thread count (each slot is written exactly once).
pub fn fill_slice<T: Send>(out: &mut [T], f: impl Fn(usize) -> T + Sync) {
    if out.len() < PAR_THRESHOLD {
        for (p, slot) in out.iter_mut().enumerate() {
            *slot = f(p);
        }
    } else {
        use rayon::prelude::*;
        out.par_chunks_mut(GRID_CHUNK)
            .enumerate()
            .for_each(|(ci, chunk)| {
                let base = ci * GRID_CHUNK;
                for (k, slot) in chunk.iter_mut().enumerate() {
                    *slot = f(base + k);
                }
            });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_matches_naive_on_small_inputs() {
        let x: Vec<f64> = (0..37).map(|i| (i as f64).sin()).collect();
        let naive: f64 = x.iter().sum();
        assert!((pairwise_sum(&x) - naive).abs() < 1e-12);
    }

    #[test]
    fn sum_fn_matches_slice_sum() {
        let x: Vec<f64> = (0..10_001).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let a = pairwise_sum(&x);
        let b = pairwise_sum_fn(x.len(), &mut |i| x[i]);
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn pairwise_beats_sequential_on_cancellation() {
        // 1 + eps summed a million times: pairwise keeps the small parts.
        let n = 1 << 20;
        let x: Vec<f64> = (0..n).map(|_| 1.0 + 1e-16).collect();
        let exact = n as f64 * (1.0 + 1e-16);
        assert!((pairwise_sum(&x) - exact).abs() / exact < 1e-15);
    }

    #[test]
    fn extrema() {
        let x = [3.0, -1.0, 7.5, 0.0];
        assert_eq!(min(&x), -1.0);
        assert_eq!(max(&x), 7.5);
        assert_eq!(max_abs(&x), 7.5);
    }

    #[test]
    fn grid_sum_is_thread_count_independent() {
        let x: Vec<f64> = (0..50_000).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
        let serial = {
            let partials: Vec<f64> = x.chunks(1024).map(|c| c.iter().sum()).collect();
            // same structure the parallel path uses
            let mut naive_partials = Vec::new();
            for c in x.chunks(1024) {
                let mut s = 0.0;
                for &v in c {
                    s += v;
                }
                naive_partials.push(s);
            }
            assert_eq!(partials.len(), naive_partials.len());
            pairwise_sum(&naive_partials)
        };
        let par = grid_sum(x.len(), |p| x[p]);
        assert_eq!(serial.to_bits(), par.to_bits());
    }
}
