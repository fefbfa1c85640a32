pub mod candidates;
pub mod corpus;
pub mod eval;
mod error;
pub mod io;
pub mod merger;
pub mod model;
pub mod pipeline;
pub mod retriever;
pub mod scorer;
pub mod stem;
pub mod toy;

pub use error::{Error, Result};
