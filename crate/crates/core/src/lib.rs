pub mod analysis;
pub mod linsys;
pub mod io;
pub mod logmath;
pub mod mc;
pub mod rng;
pub mod rubin;
pub mod spectrum;
pub mod stats;
pub mod tape;
pub mod verify;
pub mod walk;
