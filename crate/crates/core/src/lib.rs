//! Dynamic MRI reconstruction by alternating x-f de-aliasing and
//! image-domain recurrent refinement.
//!
//! Data flow: a fully sampled [`ComplexVolume`] is undersampled with a
//! shear-grid [`SamplingMask`] into a [`KtMeasurement`]; the cascaded
//! network in [`model`] maps the measurement back to an image sequence.

pub mod error;
pub mod fft;
pub mod io;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod phantom;
pub mod sampling;
pub mod volume;
pub mod xf;

pub use error::{Error, FormatError, Result};
pub use metrics::ReconMetrics;
pub use model::{KtNextConfig, XfInputMode};
pub use sampling::{AcquisitionSpec, KtMeasurement, SamplingMask};
pub use volume::{Axis, ComplexVolume, Domain};
pub use xf::{DcLambda, XfPair};
