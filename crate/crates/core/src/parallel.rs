//! Runtime-switchable data parallelism. Items are always collected back in
//! index order, so results are bit-identical regardless of the switch.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items`, using the rayon thread pool when `parallel` is true
/// and the crate is built with the `parallel` feature.
pub fn map_items<T, R, F>(parallel: bool, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if parallel {
            return items.par_iter().map(f).collect();
        }
    }
    let _ = parallel;
    items.iter().map(f).collect()
}

/// Index-driven variant for workloads that are cheaper to address by index.
pub fn map_indices<R, F>(parallel: bool, count: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if parallel {
            return (0..count).into_par_iter().map(f).collect();
        }
    }
    let _ = parallel;
    (0..count).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let items: Vec<u64> = (0..257).collect();
        let seq = map_items(false, &items, |&x| x.wrapping_mul(0x9e3779b9) ^ x);
        let par = map_items(true, &items, |&x| x.wrapping_mul(0x9e3779b9) ^ x);
        assert_eq!(seq, par);
        let seq = map_indices(false, 100, |i| (i as f64).sqrt());
        let par = map_indices(true, 100, |i| (i as f64).sqrt());
        assert_eq!(seq, par);
    }
}
