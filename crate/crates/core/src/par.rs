//! Data-parallel helpers with a serial fallback.
//!
//! Reductions in [`Reduction::FixedOrder`] mode sum fixed-size chunks and then
//! combine the chunk partials left to right, so the result is bitwise identical
//! whatever the thread count (and identical to a build without `parallel`).

use alloc::vec::Vec;

/// Summation contract for dot products and norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    /// Chunked, fixed combination order: serial and parallel runs agree bitwise.
    #[default]
    FixedOrder,
    /// Work-stealing reduction; results may differ in the last bits between runs.
    Unordered,
}

const CHUNK: usize = 4096;

fn chunk_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn dot(a: &[f64], b: &[f64], mode: Reduction) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        match mode {
            Reduction::FixedOrder => {
                let partials: Vec<f64> = a
                    .par_chunks(CHUNK)
                    .zip(b.par_chunks(CHUNK))
                    .map(|(x, y)| chunk_dot(x, y))
                    .collect();
                partials.iter().sum()
            }
            Reduction::Unordered => a.par_iter().zip(b.par_iter()).map(|(x, y)| x * y).sum(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = mode;
        let partials: Vec<f64> =
            a.chunks(CHUNK).zip(b.chunks(CHUNK)).map(|(x, y)| chunk_dot(x, y)).collect();
        partials.iter().sum()
    }
}

/// `out[i] = f(i)` for every index.
pub(crate) fn fill<T, F>(out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        out.par_iter_mut().enumerate().for_each(|(i, o)| *o = f(i));
    }
    #[cfg(not(feature = "parallel"))]
    for (i, o) in out.iter_mut().enumerate() {
        *o = f(i);
    }
}

/// Collects `f(i)` for `i in 0..n`, in index order.
pub(crate) fn collect<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Calls `f(chunk_index, chunk)` on consecutive `chunk`-sized pieces of `out`.
pub(crate) fn for_each_chunk<T, F>(out: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        out.par_chunks_mut(chunk).enumerate().for_each(|(k, c)| f(k, c));
    }
    #[cfg(not(feature = "parallel"))]
    for (k, c) in out.chunks_mut(chunk).enumerate() {
        f(k, c);
    }
}

/// `y[i] += alpha * x[i]`.
pub(crate) fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        y.par_iter_mut().zip(x.par_iter()).for_each(|(y, x)| *y += alpha * x);
    }
    #[cfg(not(feature = "parallel"))]
    for (y, x) in y.iter_mut().zip(x) {
        *y += alpha * x;
    }
}

/// `p[i] = z[i] + beta * p[i]`.
pub(crate) fn xpby(p: &mut [f64], z: &[f64], beta: f64) {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        p.par_iter_mut().zip(z.par_iter()).for_each(|(p, z)| *p = z + beta * *p);
    }
    #[cfg(not(feature = "parallel"))]
    for (p, z) in p.iter_mut().zip(z) {
        *p = z + beta * *p;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn fixed_order_dot_is_chunked_sum() {
        let a: Vec<f64> = (0..10_000).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let b = vec![1.0; a.len()];
        let d = dot(&a, &b, Reduction::FixedOrder);
        let mut expect = 0.0;
        for c in a.chunks(CHUNK) {
            expect += c.iter().sum::<f64>();
        }
        assert_eq!(d, expect);
    }
}
