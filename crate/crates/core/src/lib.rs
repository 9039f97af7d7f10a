//! Three-step MRI slice processing: cartoon/texture decomposition, joint
//! bias correction and denoising with a multiaffine ADMM, and K-means
//! tissue segmentation, plus a synthetic phantom and evaluation metrics.

pub mod admm;
pub mod basis;
pub mod decompose;
pub mod image;
pub mod metrics;
pub mod phantom;
pub mod pipeline;
pub mod segmentation;
