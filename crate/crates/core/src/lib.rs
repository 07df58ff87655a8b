pub mod circuit;
pub mod derivatives;
pub mod ensembles;
pub mod error;
pub mod experiments;
pub mod haar_verify;
pub mod linalg;
pub mod par;
pub mod statevector;
pub mod stats;
pub mod theory;
