pub mod capsule;
pub mod checkpoint;
pub mod dataset;
pub mod embedvocab;
pub mod error;
pub mod evaluation;
pub mod linalg;
pub mod nncore;
pub mod profile;
pub mod textprep;
pub mod training;

pub use error::{Error, Result};
