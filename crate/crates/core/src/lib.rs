//! Intra-day seasonality, time deformation and slotted autocorrelation
//! estimates for tick-by-tick transaction data.

pub mod acf;
pub mod fit;
pub mod ingest;
pub mod kernel;
pub mod numeric;
pub mod pattern;
pub mod synth;
pub mod table;
pub mod theta;
pub mod warp;
