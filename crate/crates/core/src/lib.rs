pub mod characteristics;
pub mod linearization;
pub mod mcriteria;
pub mod model;
pub mod ode;
pub mod quadrature;
pub mod special;
