pub mod decode;
pub mod discovery;
pub mod error;
pub mod gallery;
pub mod inference;
pub mod io;
pub mod model;
pub mod objective;
pub mod prob;
mod segment;
pub mod trajectory;
