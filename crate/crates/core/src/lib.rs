//! Building blocks for turning a chest CT volume and its written report into a
//! narrated, panel-based video report.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`volume`] loads NIfTI CT volumes, resamples, windows and slices them.
//! * [`report`] turns report text into ranked, organ-matched findings with
//!   lay-language explanations through an [`report::LlmProvider`].
//! * [`segmentation`] obtains organ masks through a
//!   [`segmentation::SegmentationProvider`] and derives bounding boxes.
//! * [`registration`] rigidly aligns a healthy reference scan to the query scan.
//! * [`organ3d`] extracts a closed surface from a mask and renders turntables.
//! * [`storyboard`] compiles everything into a timed, three-phase-per-finding plan.
//! * [`media`] narrates, composites frames and muxes the final video.

pub mod grid;
pub mod hashing;
pub mod media;
pub mod organ3d;
pub mod phantom;
pub mod provider;
pub mod registration;
pub mod report;
pub mod segmentation;
pub mod storyboard;
pub mod telemetry;
pub mod volume;

pub use grid::Grid;
