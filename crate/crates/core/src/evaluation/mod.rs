//! Clustering accuracy and calibration of `rho` from labeled data.

pub mod calibrate;
pub mod fmeasure;

pub use calibrate::{calibrate_rho, region_near_rho, uniform_grid, CalibrationResult, DatasetCurve, LabeledRun};
pub use fmeasure::f_measure;
