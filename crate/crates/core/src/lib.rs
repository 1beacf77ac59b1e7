//! Bilingual word embeddings, pivot-language semantic graphs, and the
//! graph-based semantic distance between languages.

pub mod cca;
pub mod corpus_io;
pub mod distance_matrix;
pub mod embedding_store;
pub mod evaluation;
pub mod linalg;
pub mod pivot_graphs;
pub mod scalar;
pub mod seed;
pub mod stats;
pub mod trainer;

pub use scalar::Real;

pub type Embeddings = embedding_store::EmbeddingSpace<f64>;
pub type Embeddings32 = embedding_store::EmbeddingSpace<f32>;
pub type Bilingual = embedding_store::BilingualSpace<f64>;
pub type Graph = pivot_graphs::PivotGraph<f64>;
pub type Graph32 = pivot_graphs::PivotGraph<f32>;
pub type Distances = distance_matrix::DistanceMatrix<f64>;
pub type Cca = cca::CcaModel<f64>;
