//! Pixel-level segmentation of handwritten annotations on printed
//! historical pages.
//!
//! The crate covers the whole pipeline: image primitives and adaptive
//! binarization ([`imaging`]), PAGE-XML polygons rasterized into
//! three-class label maps ([`page_gt`]), training-patch samplers
//! ([`augment`]), a CPU FCN-8s with hand-written backprop ([`fcn`]),
//! overlapping tiled inference ([`infer`]), IoU evaluation ([`eval`]) and
//! a synthetic page generator ([`synth`]).

pub mod augment;
pub mod error;
pub mod eval;
pub mod fcn;
pub mod imaging;
pub mod infer;
pub mod page_gt;
pub mod synth;

pub use error::{Error, Result};
