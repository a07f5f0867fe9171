//! Fan-out primitives for the data-parallel parts of the pipeline.
//!
//! Instances in a sweep and the `k x m` judge queries inside a step are
//! independent by construction (all randomness is keyed, see
//! [`crate::streams`]), so they may run in any order. [`map_ordered`]
//! dispatches to a rayon pool when the `parallel` feature is enabled and
//! degrades to a plain loop otherwise; outputs always keep input order, so
//! results are bit-identical across both paths and any thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items`, preserving input order in the output.
pub fn map_ordered<I, T, F>(items: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Send + Sync,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Sequential twin of [`map_ordered`]; the baseline the bench suite
/// compares against.
pub fn map_ordered_seq<I, T, F>(items: &[I], f: F) -> Vec<T>
where
    F: Fn(&I) -> T,
{
    items.iter().map(f).collect()
}
