//! Simulation and reconstruction of two-qubit process tomography for the
//! controlled-phase channel.

pub mod chi_io;
pub mod mle;
pub mod quantum;
pub mod reporting;
pub mod tomography;

pub use quantum::{
    apply_channel, born_probability, cp_unitary, ideal_chi, phi_grid, process_fidelity,
    psd_project, ChannelParameter, ChiLabel, Mat16, Op4, PauliBasis, ProcessMatrix, QuantumError,
    C64,
};
