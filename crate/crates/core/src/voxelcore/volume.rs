use serde::{Deserialize, Serialize};

use super::VolumeError;
use crate::lobe::LobeId;

/// Air, in Hounsfield units. Used as the pad value for intensity grids.
pub const AIR_HU: f32 = -1000.0;

/// Grid geometry shared by volumes, masks and label maps.
///
/// All per-axis arrays use `(z, y, x)` order with `z` the axial axis.
/// Voxels are stored with `z` outermost and `x` innermost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub dims: [usize; 3],
    /// Millimetres per voxel.
    pub spacing: [f64; 3],
    /// World position (mm) of voxel `[0, 0, 0]`.
    pub origin: [f64; 3],
}

impl Geometry {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self, VolumeError> {
        if dims.iter().any(|&d| d == 0) {
            return Err(VolumeError::InvalidGeometry(format!("zero dimension in {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(VolumeError::InvalidGeometry(format!("non-positive spacing {spacing:?}")));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(VolumeError::InvalidGeometry(format!("non-finite origin {origin:?}")));
        }
        Ok(Geometry { dims, spacing, origin })
    }

    /// Unit-spaced geometry at the world origin.
    pub fn isotropic(dims: [usize; 3]) -> Result<Self, VolumeError> {
        Geometry::new(dims, [1.0; 3], [0.0; 3])
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[2] + x
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let x = idx % self.dims[2];
        let rest = idx / self.dims[2];
        [rest / self.dims[1], rest % self.dims[1], x]
    }

    pub fn contains(&self, p: [i64; 3]) -> bool {
        (0..3).all(|a| p[a] >= 0 && (p[a] as usize) < self.dims[a])
    }

    pub fn voxel_volume_mm3(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn is_isotropic(&self, spacing: f64, tol: f64) -> bool {
        self.spacing.iter().all(|s| (s - spacing).abs() <= tol)
    }

    pub(crate) fn ensure_same(&self, other: &Geometry) -> Result<(), VolumeError> {
        if self == other {
            Ok(())
        } else {
            Err(VolumeError::GeometryMismatch)
        }
    }
}

/// Voxel payload; the element kind is fixed per volume.
#[derive(Debug, Clone, PartialEq)]
pub enum VoxelData {
    /// CT intensities in HU.
    Intensity(Vec<f32>),
    /// Small non-negative label codes.
    Label(Vec<u8>),
}

impl VoxelData {
    pub fn len(&self) -> usize {
        match self {
            VoxelData::Intensity(v) => v.len(),
            VoxelData::Label(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A dense 3D scalar grid with physical geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    geometry: Geometry,
    data: VoxelData,
}

impl Volume {
    pub fn new(geometry: Geometry, data: VoxelData) -> Result<Self, VolumeError> {
        if data.len() != geometry.len() {
            return Err(VolumeError::LengthMismatch { expected: geometry.len(), actual: data.len() });
        }
        Ok(Volume { geometry, data })
    }

    pub fn from_intensities(geometry: Geometry, voxels: Vec<f32>) -> Result<Self, VolumeError> {
        Volume::new(geometry, VoxelData::Intensity(voxels))
    }

    pub fn from_labels(geometry: Geometry, voxels: Vec<u8>) -> Result<Self, VolumeError> {
        Volume::new(geometry, VoxelData::Label(voxels))
    }

    pub fn filled(geometry: Geometry, value: f32) -> Self {
        Volume { geometry, data: VoxelData::Intensity(vec![value; geometry.len()]) }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    pub fn data(&self) -> &VoxelData {
        &self.data
    }

    pub fn is_label(&self) -> bool {
        matches!(self.data, VoxelData::Label(_))
    }

    pub fn intensities(&self) -> Result<&[f32], VolumeError> {
        match &self.data {
            VoxelData::Intensity(v) => Ok(v),
            VoxelData::Label(_) => Err(VolumeError::WrongKind { expected: "intensity" }),
        }
    }

    pub fn intensities_mut(&mut self) -> Result<&mut [f32], VolumeError> {
        match &mut self.data {
            VoxelData::Intensity(v) => Ok(v),
            VoxelData::Label(_) => Err(VolumeError::WrongKind { expected: "intensity" }),
        }
    }

    pub fn labels(&self) -> Result<&[u8], VolumeError> {
        match &self.data {
            VoxelData::Label(v) => Ok(v),
            VoxelData::Intensity(_) => Err(VolumeError::WrongKind { expected: "label" }),
        }
    }

    /// Intensity at `(z, y, x)`; panics on label volumes or out-of-range indices.
    pub fn at(&self, z: usize, y: usize, x: usize) -> f32 {
        let idx = self.geometry.index(z, y, x);
        match &self.data {
            VoxelData::Intensity(v) => v[idx],
            VoxelData::Label(v) => f32::from(v[idx]),
        }
    }
}

/// Binary mask sharing the geometry of a parent volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    geometry: Geometry,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(geometry: Geometry, data: Vec<bool>) -> Result<Self, VolumeError> {
        if data.len() != geometry.len() {
            return Err(VolumeError::LengthMismatch { expected: geometry.len(), actual: data.len() });
        }
        Ok(Mask { geometry, data })
    }

    pub fn empty(geometry: Geometry) -> Self {
        Mask { geometry, data: vec![false; geometry.len()] }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [bool] {
        &mut self.data
    }

    pub fn get(&self, z: usize, y: usize, x: usize) -> bool {
        self.data[self.geometry.index(z, y, x)]
    }

    pub fn set(&mut self, z: usize, y: usize, x: usize, value: bool) {
        let idx = self.geometry.index(z, y, x);
        self.data[idx] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn to_volume(&self) -> Volume {
        Volume {
            geometry: self.geometry,
            data: VoxelData::Label(self.data.iter().map(|&b| u8::from(b)).collect()),
        }
    }

    /// Interprets a label volume as a mask; any label other than 0 or 1 is rejected.
    pub fn from_volume(vol: &Volume) -> Result<Self, VolumeError> {
        let labels = vol.labels()?;
        let data = labels
            .iter()
            .map(|&l| match l {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(VolumeError::InvalidLabel(other)),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Mask::new(vol.geometry, data)
    }
}

/// Per-voxel lobe labels (`0` background, `1..=5` see [`LobeId`]).
#[derive(Debug, Clone, PartialEq)]
pub struct LobeLabelMap {
    geometry: Geometry,
    data: Vec<u8>,
}

impl LobeLabelMap {
    pub fn new(geometry: Geometry, data: Vec<u8>) -> Result<Self, VolumeError> {
        if data.len() != geometry.len() {
            return Err(VolumeError::LengthMismatch { expected: geometry.len(), actual: data.len() });
        }
        if let Some(&bad) = data.iter().find(|&&l| l > 5) {
            return Err(VolumeError::InvalidLabel(bad));
        }
        Ok(LobeLabelMap { geometry, data })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn lobe_at(&self, z: usize, y: usize, x: usize) -> Option<LobeId> {
        LobeId::from_label(self.data[self.geometry.index(z, y, x)])
    }

    pub fn lobe_mask(&self, lobe: LobeId) -> Mask {
        let code = lobe.label();
        Mask { geometry: self.geometry, data: self.data.iter().map(|&l| l == code).collect() }
    }

    pub fn to_volume(&self) -> Volume {
        Volume { geometry: self.geometry, data: VoxelData::Label(self.data.clone()) }
    }

    pub fn from_volume(vol: &Volume) -> Result<Self, VolumeError> {
        LobeLabelMap::new(vol.geometry, vol.labels()?.to_vec())
    }
}

/// Axis-aligned box in voxel index space: `min` inclusive, `max` exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BBox3 {
    pub min: [i64; 3],
    pub max: [i64; 3],
}

impl BBox3 {
    pub fn new(min: [i64; 3], max: [i64; 3]) -> Result<Self, VolumeError> {
        if (0..3).any(|a| min[a] >= max[a]) {
            return Err(VolumeError::InvalidBox { min, max });
        }
        Ok(BBox3 { min, max })
    }

    pub fn extent(&self) -> [i64; 3] {
        [self.max[0] - self.min[0], self.max[1] - self.min[1], self.max[2] - self.min[2]]
    }

    /// Number of voxels covered.
    pub fn voxel_count(&self) -> u64 {
        self.extent().iter().map(|&e| e as u64).product()
    }

    pub fn intersection(&self, other: &BBox3) -> Option<BBox3> {
        let mut min = [0; 3];
        let mut max = [0; 3];
        for a in 0..3 {
            min[a] = self.min[a].max(other.min[a]);
            max[a] = self.max[a].min(other.max[a]);
            if min[a] >= max[a] {
                return None;
            }
        }
        Some(BBox3 { min, max })
    }

    pub fn contains_point(&self, p: [f64; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] as f64 && p[a] <= (self.max[a] - 1) as f64)
    }

    pub fn center(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| (self.min[a] + self.max[a] - 1) as f64 / 2.0)
    }

    /// Grows the box by `margin` voxels on every side, clamped to `dims`.
    pub fn dilate_clamped(&self, margin: i64, dims: [usize; 3]) -> BBox3 {
        BBox3 {
            min: [0, 1, 2].map(|a| (self.min[a] - margin).max(0)),
            max: [0, 1, 2].map(|a| (self.max[a] + margin).min(dims[a] as i64)),
        }
    }

    pub fn within(&self, dims: [usize; 3]) -> bool {
        (0..3).all(|a| self.min[a] >= 0 && self.max[a] <= dims[a] as i64)
    }
}
