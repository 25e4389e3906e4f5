use std::rc::Rc;

use super::tape::Mat;

/// Bucket of a relative offset `key - query`, following the T5 scheme: half
/// the buckets cover small offsets exactly, the rest grow logarithmically up
/// to `max_distance`. Bidirectional tables split buckets by sign; causal
/// tables map every future offset to bucket 0.
pub fn relative_bucket(offset: i64, bidirectional: bool, num_buckets: usize, max_distance: usize) -> usize {
    let mut n = -offset;
    let mut buckets = num_buckets;
    let mut base = 0;
    if bidirectional {
        buckets /= 2;
        if n < 0 {
            base = buckets;
        }
        n = n.abs();
    } else {
        n = n.max(0);
    }
    let n = n as usize;
    let max_exact = (buckets / 2).max(1);
    if n < max_exact {
        return base + n;
    }
    let scaled = (n as f64 / max_exact as f64).ln() / (max_distance as f64 / max_exact as f64).ln()
        * (buckets - max_exact) as f64;
    base + (max_exact + scaled as usize).min(buckets - 1)
}

/// Row-major `rows×cols` grid of buckets for query `i`, key `j`.
pub fn bucket_grid(rows: usize, cols: usize, bidirectional: bool, num_buckets: usize, max_distance: usize) -> Rc<Vec<usize>> {
    let mut grid = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            grid.push(relative_bucket(j as i64 - i as i64, bidirectional, num_buckets, max_distance));
        }
    }
    Rc::new(grid)
}

/// Fixed sinusoidal absolute position encodings, one row per position.
pub fn sinusoidal(len: usize, dim: usize) -> Mat {
    Mat::from_shape_fn((len, dim), |(pos, i)| {
        let rate = 1.0 / 10_000f64.powf((2 * (i / 2)) as f64 / dim as f64);
        let angle = pos as f64 * rate;
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}
