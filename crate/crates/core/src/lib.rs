pub mod error;
pub mod flow;
pub mod fock;
pub mod observable;
pub mod operator;
pub mod potential;
pub mod quadrature;
pub mod sampler;
pub mod special;
pub mod statistic;
pub mod toeplitz;

pub use error::{Error, Result};
pub use flow::{FlowOptions, FourierAlongFlow, LevelCurve};
pub use fock::FockParams;
pub use num_complex::Complex64;
pub use observable::{Atom, ScalarField, TestFunction};
pub use operator::{KernelField, OperatorMatrix, SpectralData};
pub use potential::{DropletGrid, DropletSpec, Potential, PotentialSpec, RadialProfile};
pub use quadrature::{FockQuadrature, QuadratureSpec};
pub use statistic::{Ensemble, Prediction, Workspace};
pub use toeplitz::{EdgeWindow, ToeplitzSymbol};
pub use sampler::{PointConfiguration, SamplerConfig};
