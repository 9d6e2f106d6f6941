pub mod auxpde;
pub mod expansion;
pub mod identities;
pub mod quadrature;
pub mod specfun;
