//! Deterministic sharding: work is cut into fixed-size chunks whose order and
//! random streams do not depend on the number of worker threads.

use gauss_quad::{GaussHermite, GaussLegendre};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex, OnceLock};

pub const CHUNK: usize = 1024;

/// Random stream for chunk `chunk` of a batch seeded with `seed`.
pub fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

pub fn n_chunks(n: usize) -> usize {
    n.div_ceil(CHUNK)
}

/// Pairwise sum; the split points depend only on the slice length.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Mean and unbiased sample variance of `f(i)` for i in 0..n, reduced chunk by
/// chunk so the result does not depend on the thread count.
pub fn try_mean_var<F>(n: usize, f: F) -> crate::Result<(f64, f64)>
where
    F: Fn(usize) -> crate::Result<f64> + Sync,
{
    assert!(n > 0);
    let sums: Vec<(f64, f64)> = (0..n_chunks(n))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            let vals = (lo..hi).map(&f).collect::<crate::Result<Vec<f64>>>()?;
            let sq: Vec<f64> = vals.iter().map(|v| v * v).collect();
            Ok((pairwise_sum(&vals), pairwise_sum(&sq)))
        })
        .collect::<crate::Result<_>>()?;
    let s: Vec<f64> = sums.iter().map(|p| p.0).collect();
    let q: Vec<f64> = sums.iter().map(|p| p.1).collect();
    let mean = pairwise_sum(&s) / n as f64;
    let var = if n > 1 {
        ((pairwise_sum(&q) - n as f64 * mean * mean) / (n as f64 - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok((mean, var))
}

/// Gauss–Legendre nodes and weights on [−1, 1], cached per degree.
pub fn gauss_legendre(n: usize) -> Arc<[(f64, f64)]> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<[(f64, f64)]>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let mut map = cache.lock().unwrap();
    map.entry(n)
        .or_insert_with(|| {
            let rule = GaussLegendre::new(NonZeroUsize::new(n).expect("degree ≥ 1"));
            rule.as_node_weight_pairs().iter().copied().collect()
        })
        .clone()
}

/// Gauss–Hermite nodes and weights for weight e^{−x²}, cached per degree.
pub fn gauss_hermite(n: usize) -> Arc<[(f64, f64)]> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<[(f64, f64)]>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let mut map = cache.lock().unwrap();
    map.entry(n)
        .or_insert_with(|| {
            let rule = GaussHermite::new(NonZeroUsize::new(n).expect("degree ≥ 1"));
            rule.as_node_weight_pairs().iter().copied().collect()
        })
        .clone()
}

/// Composite Gauss–Legendre over [a, b] split into `panels` equal pieces.
#[cfg(test)]
pub fn composite_gl<F: FnMut(f64) -> f64>(a: f64, b: f64, panels: usize, order: usize, mut f: F) -> f64 {
    let nodes = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut parts = Vec::with_capacity(panels);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        let s: f64 = nodes.iter().map(|(x, w)| w * f(mid + 0.5 * h * x)).sum();
        parts.push(0.5 * h * s);
    }
    pairwise_sum(&parts)
}
