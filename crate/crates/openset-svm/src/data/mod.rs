//! Sparse samples, dataset text I/O, synthetic 2D generators, and open-set
//! experimental splits.

mod sparse;
mod split;
mod synthetic;

pub use sparse::{
    class_counts, class_labels, dataset_manifest_csv, dot as sparse_dot, parse_line, read_sparse,
    read_sparse_str, write_sparse, write_sparse_str, SparseSample,
};
pub use split::{make_open_split, make_open_split_with_fraction, OpenSetSplit};
pub use synthetic::{gen_blob_mixture, gen_synthetic, SyntheticKind};
