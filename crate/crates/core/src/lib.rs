//! Road telemetry pipeline core.
//!
//! A recording session ("package") holds an IMU stream, a GPS stream and
//! video-frame metadata. This crate defines that on-disk format and the
//! analysis built on it:
//!
//! * [`model`]: sample types, the package manifest and package validation.
//! * [`timeline`]: time indexes, nearest/range lookups and stream alignment.
//! * [`kinematics`]: windowed RMS roughness, robust spike detection and the
//!   pothole / steering / calm event rule.
//! * [`geo`]: distances, chainage along a reference line, GPS snap quality,
//!   begin/end-log joins against reference IRI and fit metrics.
//! * [`packstore`]: the on-device package library and upload state machine.
//! * [`drivesim`]: a seeded synthetic drive generator with ground truth.

pub mod canonical;
pub mod drivesim;
pub mod geo;
pub mod kinematics;
pub mod model;
pub mod packstore;
pub mod timeline;
