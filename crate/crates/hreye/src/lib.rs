//! Host-side tooling around `hreye-core`: the simulated driver and its PPM
//! renderer, study CSV readers, the player session and HTTP service, and the
//! `hreye` command line.

pub mod catalog_dir;
pub mod cli;
pub mod driver_sim;
pub mod responses;
pub mod service;
pub mod session;

pub use driver_sim::{DriverSim, RenderTarget};
pub use session::{Device, Session};
