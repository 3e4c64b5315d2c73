pub mod anomaly;
pub mod data;
pub mod federation;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod rolann;
