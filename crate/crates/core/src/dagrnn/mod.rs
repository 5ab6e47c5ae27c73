//! Recurrent networks over image lattices. The undirected 2-D grid is
//! approximated by four directed acyclic sweeps (south-east, south-west,
//! north-west, north-east); each sweep runs its own recurrence and the four
//! hidden maps meet in a shared output layer.

mod lattice;
mod rnn;

pub use lattice::{Connectivity, DagSet, Direction, LatticeDag};
pub use rnn::{
    dagrnn_backward, dagrnn_forward, DagRnnActivations, DagRnnGrads, DagRnnParams, DirectionParams,
};
