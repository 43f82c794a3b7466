//! Semidefinite-programming bounds on entanglement generation over quantum
//! broadcast channels.

pub mod capacity;
pub mod cli;
pub mod channels;
pub mod combing;
pub mod error;
pub mod fidelity;
pub mod oracle;
pub mod random;
pub mod sdp;
pub mod tensor;
