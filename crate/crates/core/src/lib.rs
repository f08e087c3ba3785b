pub mod distributions;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod fem;
pub mod plasticity;
pub mod quadrature;
pub mod random_field;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision instantiations of the generic types.
pub type Mesh64 = fem::Mesh<f64>;
pub type Discretization64 = fem::Discretization<f64>;
pub type KLBasis64 = random_field::KLBasis<f64>;
pub type GammaParams64 = distributions::GammaParams<f64>;
pub type ElastoplasticParams64 = plasticity::ElastoplasticParams<f64>;

/// Single-precision instantiations.
pub type Mesh32 = fem::Mesh<f32>;
pub type Discretization32 = fem::Discretization<f32>;
pub type KLBasis32 = random_field::KLBasis<f32>;
