//! Abdominal aortic aneurysm detection from CT-like volumes.
//!
//! The pipeline runs in two stages. A 3D U-Net segments the aorta
//! ([`unet`], built from the layer primitives in [`tensor`] and trained by
//! [`training`]). The binary mask is then measured slice by slice with
//! direct least-squares ellipse fits and tilt correction ([`geometry`]),
//! and studies whose largest corrected diameter exceeds 30 mm are flagged
//! ([`detect`]). [`phantom`] generates synthetic studies with closed-form
//! ground truth, and [`pipeline`] holds the file formats and the
//! cross-validation driver used by the `aaa` command line tool.

pub mod detect;
pub mod error;
pub mod geometry;
pub mod phantom;
pub mod pipeline;
pub mod tensor;
pub mod training;
pub mod unet;
pub mod volume;

pub use error::{Error, Result};
pub use tensor::{DenseTensor, LayerGrads, Mode, Real};
pub use volume::{CtType, MaskVolume, StudyVolume, Volume};
