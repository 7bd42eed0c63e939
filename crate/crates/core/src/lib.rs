pub mod agent;
pub mod cmdp;
pub mod env;
pub mod error;
pub mod kv;
pub mod learner;
pub mod oracle;
pub mod orlp;
pub mod registry;
pub mod rng;

pub use error::{Error, Result};
