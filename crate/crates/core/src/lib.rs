//! Simulation and analysis toolkit for loss-tolerant quantum position
//! verification with BB84 qubits and three-intensity decoy states.
//!
//! * [`quantum`]: small dense complex matrices, BB84 states, partial
//!   transpose, Hermitian eigensolver.
//! * [`bounds`]: Helstrom value, PPT certificate checks, LOCC attacks and
//!   soundness errors.
//! * [`optics`]: linear-optics Bell-state measurement with loss, misalignment
//!   and dark counts.
//! * [`decoy`]: single-photon bounds from decoy-state count tables.
//! * [`protocol`]: qubit and decoy protocol engines with timing checks.
//! * [`experiments`]: Monte Carlo drivers, the error-rate-versus-loss
//!   pipeline and output writers.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod decoy;
pub mod error;
pub mod experiments;
pub mod optics;
pub mod protocol;
pub mod quantum;
pub mod rng;
pub mod types;

pub use bounds::{AttackStrategy, CertificateReport, SoundnessInput};
pub use decoy::{CountTable, DecoyEstimate, IntensityConfig, PhotonTruth};
pub use error::{Error, Result};
pub use experiments::{ExperimentReport, Figure3Point, RunManifest};
pub use optics::{BsmOutcome, ChannelModel, ClickPattern, PulsePair};
pub use protocol::{Geometry, ProtocolParams, RoundRecord, Verdict};
pub use quantum::{DensityMatrix, Matrix, MeasurementOperator};
pub use types::{Basis, BasisBit, Outcome};
