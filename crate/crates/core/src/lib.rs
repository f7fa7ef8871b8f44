pub mod bayes;
pub mod error;
pub mod eval;
pub mod io;
pub mod nop;
pub mod pde;
pub mod random;
pub mod spectral;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use pde::{Dataset, FieldSample, Grid};
pub use random::Rng;
pub use tensor::{Tape, Tensor, Var};
