//! Data-parallel helpers. With the `parallel` feature these run on the rayon
//! pool; without it they are plain sequential iterators with the same
//! results and ordering.

pub use self::actual::{map_collect, map_reduce};

#[cfg(feature = "parallel")]
mod actual {
    use rayon::prelude::*;

    /// Maps every element and collects results in input order.
    pub fn map_collect<T, F, R>(source: &[T], map_op: F) -> Vec<R>
    where
        T: Sync,
        F: Fn(&T) -> R + Sync + Send,
        R: Send,
    {
        source.par_iter().map(map_op).collect()
    }

    /// Maps every element and folds the results with an associative reducer.
    pub fn map_reduce<T, FM, FR, FD, R>(source: &[T], map_op: FM, identity: FD, reduce_op: FR) -> R
    where
        T: Sync,
        FM: Fn(&T) -> R + Sync + Send,
        FR: Fn(R, R) -> R + Sync + Send,
        FD: Fn() -> R + Sync + Send,
        R: Send,
    {
        source.par_iter().map(map_op).reduce(identity, reduce_op)
    }
}

#[cfg(not(feature = "parallel"))]
mod actual {
    pub fn map_collect<T, F, R>(source: &[T], map_op: F) -> Vec<R>
    where
        T: Sync,
        F: Fn(&T) -> R + Sync + Send,
        R: Send,
    {
        source.iter().map(map_op).collect()
    }

    pub fn map_reduce<T, FM, FR, FD, R>(source: &[T], map_op: FM, identity: FD, reduce_op: FR) -> R
    where
        T: Sync,
        FM: Fn(&T) -> R + Sync + Send,
        FR: Fn(R, R) -> R + Sync + Send,
        FD: Fn() -> R + Sync + Send,
        R: Send,
    {
        source.iter().map(map_op).fold(identity(), reduce_op)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_order_and_reduces() {
        let v: Vec<u64> = (0..1000).collect();
        assert_eq!(map_collect(&v, |x| x * 2), v.iter().map(|x| x * 2).collect::<Vec<_>>());
        assert_eq!(map_reduce(&v, |x| *x, || 0, |a, b| a + b), 499_500);
    }
}
