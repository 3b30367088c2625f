//! Text and binary file formats: matrix specs, images, vectors, key/value files.

pub mod kv;
pub mod matrix_file;
pub mod pfm;
pub mod pgm;
pub mod vector;

pub use kv::KeyValues;
pub use matrix_file::{load_matrix, parse_block, parse_matrix, save_matrix, write_matrix, MATRIX_MAGIC};
pub use pfm::{read_pfm, write_pfm};
pub use pgm::{read_pgm16, write_pgm16};
pub use vector::{load_vector, save_vector};
