//! LSTM cells, deep stacks with a dense head, and backpropagation through
//! time.
//!
//! One step of a cell maps `(x_t, h_{t-1}, c_{t-1})` to
//!
//! ```text
//! i = σ(Wx_i x + Wh_i h + b_i)     f = σ(Wx_f x + Wh_f h + b_f)
//! o = σ(Wx_o x + Wh_o h + b_o)     g = tanh(Wx_g x + Wh_g h + b_g)
//! c_t = f ⊗ c_{t-1} + i ⊗ g        h_t = o ⊗ tanh(c_t)
//! ```

mod batch;
mod cell;
mod gradcheck;
mod network;

pub use batch::{backward_block, forward_block, BlockScratch, BlockTape};
pub use cell::{cell_forward, cell_forward_detailed, CellParams, CellState, Gate, GateActivations};
pub use gradcheck::{grad_check, grad_check_corrupted, GRADCHECK_EPSILON};
pub use network::{
    backward, backward_into, forward, forward_into, Architecture, BpttScratch, DenseLayer,
    Gradients, LayerTape, NetworkParams, Tape,
};
