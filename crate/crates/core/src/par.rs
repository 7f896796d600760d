//! Data-parallel map helpers.
//!
//! The hot loops (episode arms, ensemble gradient steps, batch scoring) map
//! an indexed closure over independent work items. With the `parallel`
//! feature (default) the maps run on rayon; without it they fall back to
//! plain iteration. Results are collected in item order either way, so the
//! feature flag cannot change any computed value.
//!
//! `seq_*` variants are always sequential regardless of the feature; the
//! criterion bench suite uses them as the comparison baseline.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map over a slice, parallel when the `parallel` feature is enabled.
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
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

/// Always-sequential counterpart of [`par_map`].
pub fn seq_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Map over indices `0..n`, parallel when enabled.
pub fn par_map_indexed<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Always-sequential counterpart of [`par_map_indexed`].
pub fn seq_map_indexed<R, F>(n: usize, f: F) -> Vec<R>
where
    F: Fn(usize) -> R,
{
    (0..n).map(f).collect()
}

/// Apply `f` to every element of a mutable slice, parallel when enabled.
/// Used for independent per-model gradient steps in ensemble training.
pub fn par_for_each_mut<T, F>(items: &mut [T], f: F)
where
    T: Send,
    F: Fn(&mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter_mut().for_each(f);
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter_mut().for_each(f);
    }
}

/// Always-sequential counterpart of [`par_for_each_mut`].
pub fn seq_for_each_mut<T, F>(items: &mut [T], f: F)
where
    F: Fn(&mut T),
{
    items.iter_mut().for_each(f);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree_in_order() {
        let items: Vec<u64> = (0..257).collect();
        let f = |x: &u64| x.wrapping_mul(2654435761).rotate_left(7);
        assert_eq!(par_map(&items, f), seq_map(&items, f));
        let g = |i: usize| (i as f64).sqrt().sin();
        let a = par_map_indexed(100, g);
        let b = seq_map_indexed(100, g);
        assert_eq!(a, b);
    }
}
