pub mod fixtures;
pub mod geometry;
pub mod imageops;
pub mod optics;
pub mod pipeline;
pub mod sync;
pub mod warpfield;
