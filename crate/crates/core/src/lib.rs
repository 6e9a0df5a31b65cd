pub mod dist;
pub mod error;
pub mod evaluator;
pub mod geometry;
pub mod io;
pub mod par;
pub mod policy;
pub mod special;
pub mod trainer;

pub use error::{Error, Result};

#[cfg(test)]
mod mapping_props;
