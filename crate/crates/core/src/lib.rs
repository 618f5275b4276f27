//! Automatic license plate recognition: SIFT digit-template localization,
//! Otsu segmentation and a transition-vector character classifier.

pub mod eval;
pub mod image;
pub mod locator;
pub mod matchdb;
pub mod ocr;
pub mod pipeline;
pub mod segment;
pub mod sift;
pub mod synth;
