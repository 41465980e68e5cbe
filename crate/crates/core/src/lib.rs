pub mod container;
pub mod jpeg;
pub mod model;
pub mod pipeline;
pub mod range_coder;
