//! Measurement ingestion: time records to fixed-frequency amplitudes, sensor
//! gap filling, and the measured NtD matrix with a noise-level estimate.

mod csvio;
mod measured;
mod noise;
mod record;
mod spectral;
mod spline;

pub use csvio::{read_record_csv, read_sidecar, write_record_csv, write_sidecar};
pub use measured::{
    assemble_measured_ntd, force_channel_name, load_for_force_channel, load_response,
    load_resultant, Axis, LoadResponse, MeasuredNtd, SensorChannel, SensorLayout, Side,
};
pub use noise::{estimate_noise, mean_matrix, NoiseEstimate, NOISE_SAFETY_FACTOR};
pub use record::{trim_and_align, Channel, RawRecord, Series, SweepRecord, TRIM_FRACTION};
pub use spectral::{fourier_extract, AnalysisBands, SpectralSample, Window};
pub use spline::{interpolate_missing, NaturalSpline};
