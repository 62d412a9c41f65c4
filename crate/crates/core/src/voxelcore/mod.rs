//! Geometry-aware volumes, preprocessing, augmentation and the EXNV file format.
//!
//! Axis order is `(z, y, x)` everywhere: `z` is the axial (slice) axis and
//! `x` varies fastest in memory.

mod augment;
mod components;
pub mod io;
mod patches;
mod preprocess;
mod volume;

pub use augment::{apply_augmentation, flip_volume, AugSpec};
pub use components::{connected_components, mask_to_bboxes, Component, Connectivity};
pub use io::{read_volume, write_volume};
pub use patches::{sliding_patches, PatchWindow};
pub use preprocess::{apply_lobe_mask, clip_intensity, crop_patch, resample_to_isotropic};
pub use volume::{BBox3, Geometry, LobeLabelMap, Mask, Volume, VoxelData, AIR_HU};

use thiserror::Error;

/// Lower HU bound of the standard CT clip window.
pub const CLIP_LO_HU: f32 = -1000.0;
/// Upper HU bound of the standard CT clip window.
pub const CLIP_HI_HU: f32 = 600.0;

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("voxel count {actual} does not match geometry ({expected})")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("expected a {expected} volume")]
    WrongKind { expected: &'static str },
    #[error("geometry mismatch between grids")]
    GeometryMismatch,
    #[error("invalid label value {0}")]
    InvalidLabel(u8),
    #[error("invalid box min={min:?} max={max:?}")]
    InvalidBox { min: [i64; 3], max: [i64; 3] },
    #[error("target spacing must be positive, got {0}")]
    NonPositiveSpacing(f64),
    #[error("clip bounds must satisfy lo < hi, got ({lo}, {hi})")]
    InvalidClipBounds { lo: f32, hi: f32 },
    #[error("crop center {center:?} out of range for dims {dims:?}")]
    CenterOutOfRange { center: [i64; 3], dims: [usize; 3] },
    #[error("lobe keep set is empty")]
    EmptyKeepSet,
    #[error("invalid augmentation spec: {0}")]
    InvalidAugSpec(String),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("unknown dtype code {0}")]
    UnknownDtype(u8),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
