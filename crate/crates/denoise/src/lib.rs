//! Learned post-processing of reconstructed process matrices: a
//! convolutional denoising autoencoder and a forked feed-forward regressor
//! that reads the channel phase off a (denoised) matrix.

pub mod autoencoder;
pub mod extractor;
mod training;

use thiserror::Error;

pub use autoencoder::{kernel_sweep, Autoencoder, AutoencoderSpec, SweepEntry, SweepReport};
pub use extractor::{residue_report, Extractor, FfnnSpec, ResiduePoint, ResidueReport};
pub use training::{EpochLog, TrainLog};

#[derive(Debug, Error)]
pub enum DenoiseError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("dataset has no {0} records")]
    EmptySplit(&'static str),
    #[error("training diverged at epoch {epoch}: {source}")]
    Divergence {
        epoch: usize,
        #[source]
        source: qpdn_nn::NnError,
    },
    #[error("model file: {0}")]
    Model(String),
    #[error(transparent)]
    Nn(#[from] qpdn_nn::NnError),
    #[error(transparent)]
    Tomography(#[from] qpdn_core::tomography::TomographyError),
    #[error(transparent)]
    Quantum(#[from] qpdn_core::QuantumError),
    #[error(transparent)]
    Report(#[from] qpdn_core::reporting::ReportError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
