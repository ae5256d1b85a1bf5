//! Upright adjustment of equirectangular panoramas.
//!
//! The library has two halves that implement the same task at different
//! levels of fidelity:
//!
//! * an exact analytic path — tilt angles → rotation matrix → remapping
//!   look-up table (LUT) → bilinear remap — usable on its own and serving
//!   as the ground-truth oracle everywhere else;
//! * a small trainable pipeline (orientation CNN, transformer LUT
//!   generator, GAN reconstructor) built on a minimal reverse-mode
//!   autodiff engine, trained on synthetic panoramas.
//!
//! Conventions shared by every module:
//!
//! * world axes are x-forward, y-left, z-up; pitch rotates about the
//!   y-axis, roll about the x-axis, and the combined tilt is
//!   `R = R_roll * R_pitch`;
//! * angles are degrees at public interfaces, radians internally;
//! * equirectangular pixels use pixel-center sampling (`+0.5`), so the
//!   grid is symmetric about the equator;
//! * LUTs store destination-indexed source coordinates normalized to
//!   `[-1, 1]` (gather semantics).

pub mod dataset;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod image;
pub mod lut;
pub mod models;
pub mod nn;
pub mod remap;

pub use error::UprightError;
pub use geometry::{EquirectGrid, RotationMatrix, TiltAngles, UnitVector};
pub use image::EquirectImage;
pub use lut::{Lut, LutDirection, LutErrorReport, LutGrid};
pub use remap::Interp;
