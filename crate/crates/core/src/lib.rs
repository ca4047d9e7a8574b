pub mod crypto;
pub mod envelope;
pub mod term;
pub mod token;
pub mod xml;
