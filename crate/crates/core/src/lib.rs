pub mod chebyshev;
pub mod error;
pub mod moment;
pub mod numeric;
pub mod quadrature;
pub mod scenario;
pub mod simulate;
pub mod spectral;
pub mod synthesis;
pub mod verify;

pub use error::{Error, FailureClass, Result};
