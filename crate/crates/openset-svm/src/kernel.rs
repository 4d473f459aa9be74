//! RBF kernel evaluation and a bounded-memory kernel-row cache.

use crate::data::SparseSample;
use crate::error::{Error, Result};
use std::collections::HashMap;
use std::sync::Arc;

/// Values below this are flushed to zero: far below any stopping tolerance,
/// and it keeps subnormals out of the hot loops.
const FLUSH_THRESHOLD: f64 = 1e-300;

/// RBF kernel parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    gamma: f64,
}

impl KernelParams {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
        }
        Ok(Self { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// A radial kernel: value depends only on the squared distance and must
/// vanish as the distance grows, so that far-field decision values approach
/// the bias term. Only the RBF profile ships; this is the seam for other
/// radial kernels with the same limit.
pub trait RadialProfile {
    fn value(&self, sq_dist: f64) -> f64;
}

impl RadialProfile for KernelParams {
    fn value(&self, sq_dist: f64) -> f64 {
        rbf_from_sq_dist(self.gamma, sq_dist)
    }
}

fn rbf_from_sq_dist(gamma: f64, sq_dist: f64) -> f64 {
    let v = (-gamma * sq_dist.max(0.0)).exp();
    if v < FLUSH_THRESHOLD {
        0.0
    } else {
        v
    }
}

/// Merge-walk sparse dot product.
fn dot(a: &SparseSample, b: &SparseSample) -> f64 {
    crate::data::sparse_dot(a, b)
}

/// Squared Euclidean distance via norms: `|a|^2 + |b|^2 - 2<a,b>`.
pub fn sq_dist(a: &SparseSample, b: &SparseSample) -> f64 {
    a.norm_sq() + b.norm_sq() - 2.0 * dot(a, b)
}

/// RBF kernel `exp(-gamma * |a - b|^2)`, in (0, 1] (0 only past the flush
/// threshold), symmetric, and exactly 1 at zero distance.
pub fn rbf(a: &SparseSample, b: &SparseSample, params: KernelParams) -> f64 {
    rbf_from_sq_dist(params.gamma, sq_dist(a, b))
}

struct CacheSlot {
    row: Arc<[f64]>,
    last_used: u64,
}

/// LRU cache of kernel rows under a byte budget (counting stored values).
///
/// Cached rows are the exact vectors the evaluation produced, so hits and
/// misses are bit-for-bit interchangeable.
pub struct KernelCache {
    capacity_bytes: usize,
    used_bytes: usize,
    tick: u64,
    rows: HashMap<usize, CacheSlot>,
}

impl KernelCache {
    pub fn with_capacity(capacity_bytes: usize) -> Self {
        Self {
            capacity_bytes,
            used_bytes: 0,
            tick: 0,
            rows: HashMap::new(),
        }
    }

    pub fn unbounded() -> Self {
        Self::with_capacity(usize::MAX)
    }

    pub fn get(&mut self, i: usize) -> Option<Arc<[f64]>> {
        self.tick += 1;
        let tick = self.tick;
        self.rows.get_mut(&i).map(|slot| {
            slot.last_used = tick;
            Arc::clone(&slot.row)
        })
    }

    pub fn insert(&mut self, i: usize, row: Arc<[f64]>) {
        let bytes = row.len() * std::mem::size_of::<f64>();
        if bytes > self.capacity_bytes {
            return;
        }
        self.tick += 1;
        if let Some(old) = self.rows.insert(
            i,
            CacheSlot {
                row,
                last_used: self.tick,
            },
        ) {
            self.used_bytes -= old.row.len() * std::mem::size_of::<f64>();
        }
        self.used_bytes += bytes;
        while self.used_bytes > self.capacity_bytes {
            let lru = self
                .rows
                .iter()
                .filter(|(&k, _)| k != i)
                .min_by_key(|(_, slot)| slot.last_used)
                .map(|(&k, _)| k);
            match lru {
                Some(k) => {
                    let slot = self.rows.remove(&k).expect("lru key present");
                    self.used_bytes -= slot.row.len() * std::mem::size_of::<f64>();
                }
                None => break,
            }
        }
    }

    pub fn used_bytes(&self) -> usize {
        self.used_bytes
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Row `i` of the kernel matrix over `set`, served from the cache when
/// present.
pub fn kernel_row(
    i: usize,
    set: &[SparseSample],
    params: KernelParams,
    cache: &mut KernelCache,
) -> Arc<[f64]> {
    if let Some(row) = cache.get(i) {
        return row;
    }
    let row: Arc<[f64]> = set.iter().map(|x| rbf(&set[i], x, params)).collect();
    cache.insert(i, Arc::clone(&row));
    row
}

/// Kernel evaluation bound to one training set: squared norms are computed
/// once up front, rows go through an owned LRU cache. Each training job owns
/// its own instance (single-writer cache).
pub struct TrainingKernel<'a> {
    set: &'a [SparseSample],
    norms: Vec<f64>,
    params: KernelParams,
    cache: KernelCache,
}

impl<'a> TrainingKernel<'a> {
    pub fn new(set: &'a [SparseSample], params: KernelParams, cache: KernelCache) -> Self {
        let norms = set.iter().map(|s| s.norm_sq()).collect();
        Self {
            set,
            norms,
            params,
            cache,
        }
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    /// Diagonal entry; exactly 1 for RBF.
    pub fn diag(&self, _i: usize) -> f64 {
        rbf_from_sq_dist(self.params.gamma, 0.0)
    }

    pub fn row(&mut self, i: usize) -> Arc<[f64]> {
        if let Some(row) = self.cache.get(i) {
            return row;
        }
        let norms = &self.norms;
        let set = self.set;
        let gamma = self.params.gamma;
        let row: Arc<[f64]> = (0..set.len())
            .map(|j| rbf_from_sq_dist(gamma, norms[i] + norms[j] - 2.0 * dot(&set[i], &set[j])))
            .collect();
        self.cache.insert(i, Arc::clone(&row));
        row
    }

    /// Hand the cache back (e.g. to reuse it across solves on the same set).
    pub fn into_cache(self) -> KernelCache {
        self.cache
    }
}
