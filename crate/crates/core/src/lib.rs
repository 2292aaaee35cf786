pub mod dynamics;
pub mod einselection;
pub mod error;
pub mod exec;
pub mod hilbert;
pub mod io;
pub mod phase_space;
pub mod special;
pub mod trajectories;

pub use error::{Error, Result};
