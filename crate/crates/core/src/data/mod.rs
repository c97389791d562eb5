//! Datasets: the synthetic 1-D toy problem, CSV and IDX loaders, standardization and splits.

mod csv_loader;
mod dataset;
mod idx;
mod toy;

pub use csv_loader::{load_csv, load_csv_regression};
pub use dataset::{split, standardize, Dataset, Normalization, SplitOrder, SplitSpec, Task};
pub use idx::{load_idx_images, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use toy::{synth_toy1d, toy1d_mean, TOY_CLUSTER_CENTER, TOY_CLUSTER_HALF_WIDTH, TOY_NOISE_STD};
