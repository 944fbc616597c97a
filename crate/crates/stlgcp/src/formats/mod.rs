pub mod geo;
pub mod raster;
pub mod tables;
