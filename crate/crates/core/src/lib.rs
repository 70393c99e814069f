//! Core of an interactive tensor-network compiler.
//!
//! User actions on a [`network::NetworkState`] are lowered into an
//! [`ir::OpDag`] of elementary operations (contraction, transposition, QR and
//! SVD splitting), optimized by structural rewrite passes and emitted as
//! Python/NumPy source. A dense reference interpreter evaluates any dag and
//! serves as the semantic oracle for the optimizer and the code generator.

pub mod codegen;
pub mod equivalence;
pub mod fuzz;
pub mod interp;
pub mod ir;
mod keyed;
pub mod lowering;
pub mod network;
pub mod optimizer;
pub mod scripts;

pub use interp::DenseTensor;
pub use ir::{NodeId, Op, OpDag, PortRef};
pub use lowering::{lower_script, Lowerer};
pub use network::{NetworkState, TensorId, UserAction};
