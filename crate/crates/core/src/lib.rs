pub mod event;
pub mod warp;
pub mod contrast;
pub mod bounds;
pub mod sim;
pub mod solver;
pub mod io;
pub mod experiment;
