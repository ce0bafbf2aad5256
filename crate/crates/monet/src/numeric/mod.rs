//! Small shared numerical building blocks.

pub mod cubic;
pub mod neldermead;
pub mod stats;
