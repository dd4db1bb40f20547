//! Core algorithms for river-surface scum monitoring.
//!
//! The pipeline has two halves. The training half turns camera frames into
//! labeled 128x256 patches, expands them with mixture augmentation (mixup,
//! Cutout, RICAP) and fits a small convolutional classifier on soft targets.
//! The prediction half runs the classifier over the 4x5 patch grid of each
//! frame, assembles the per-patch probabilities into a matrix, renders a
//! scaled heatmap, binarizes it into a scum mask and reduces the mask to a
//! single "scum-on-river" ratio per timestamp.
//!
//! Modules map onto the pipeline stages:
//!
//! - [`imagecore`]: raster type, far-region crop, patch grid extraction
//! - [`augment`]: the three mixture operators and their soft labels
//! - [`model`]: the from-scratch patch classifier and its training loop
//! - [`scumindex`]: probability matrix -> heatmap -> mask -> ratio chain
//! - [`evalkit`]: confusion-matrix metrics and synthetic scene generation
//!
//! Everything is deterministic given a seed; see [`rng`].

pub mod augment;
pub mod error;
pub mod evalkit;
pub mod imagecore;
pub mod model;
pub mod rng;
pub mod scumindex;

pub use augment::{AugmentParams, AugmentPolicy, LabeledPatch, ScumClass, SoftLabel};
pub use error::{Error, Result};
pub use imagecore::{ImageBuffer, Patch, PatchGridSpec};
pub use model::{ClassProbs, Classifier, TinyConvNet, TrainConfig};
pub use scumindex::{CameraProfile, ClassMode, Heatmap, IndexRecord, ProbabilityMatrix, ScumMask};
