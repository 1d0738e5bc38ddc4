//! Dataset ingestion, hyperspectral feature extraction, splitting and model
//! persistence.

mod dataset;
mod hsi;
mod persist;
mod synthetic;
mod tabular;

pub use dataset::Dataset;
pub use hsi::{
    extract_spatial_spectral, load_cube, parse_counts, raw_features, save_cube, split_indices, split_per_class,
    HsiCube, SpatialSpectral,
};
pub use persist::{load_model, load_pca, model_to_string, save_model, save_pca, MODEL_MAGIC};
pub use synthetic::gaussian_mixture;
pub use tabular::{load_dataset, load_labels, load_matrix_csv, save_labels, save_matrix_csv};
