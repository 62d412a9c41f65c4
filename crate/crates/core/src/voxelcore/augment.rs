use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::preprocess::crop_patch;
use super::volume::{Geometry, Mask, Volume, VoxelData, AIR_HU};
use super::{VolumeError, CLIP_HI_HU, CLIP_LO_HU};

/// Randomized augmentation parameters.
///
/// Ranges are `(lo, hi)` pairs sampled uniformly; a degenerate pair always
/// yields its single value. Geometric parts (rotation, scaling, flipping,
/// cropping) are applied to both the volume and its mask; the rest touch
/// intensities only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugSpec {
    /// Rotation about each of the (z, y, x) axes, degrees.
    pub rotation_deg: [(f64, f64); 3],
    /// Isotropic scale factor.
    pub scale: (f64, f64),
    pub flip_axes: [bool; 3],
    /// Chance that each enabled axis is flipped.
    pub flip_probability: f64,
    /// Standard deviation of additive noise, HU.
    pub noise_sigma: f64,
    /// Gaussian blur standard deviation, mm.
    pub blur_sigma: f64,
    /// Additive HU offset.
    pub brightness: (f64, f64),
    /// Multiplicative contrast about the volume mean.
    pub contrast: (f64, f64),
    /// Gamma exponent applied within the CT clip window.
    pub gamma: (f64, f64),
    pub crop_size: Option<[usize; 3]>,
}

impl AugSpec {
    /// The identity transform.
    pub fn identity() -> Self {
        AugSpec {
            rotation_deg: [(0.0, 0.0); 3],
            scale: (1.0, 1.0),
            flip_axes: [false; 3],
            flip_probability: 0.5,
            noise_sigma: 0.0,
            blur_sigma: 0.0,
            brightness: (0.0, 0.0),
            contrast: (1.0, 1.0),
            gamma: (1.0, 1.0),
            crop_size: None,
        }
    }

    /// Full augmentation set used for segmentation training.
    pub fn segmentation() -> Self {
        AugSpec {
            rotation_deg: [(-30.0, 30.0); 3],
            scale: (0.70, 1.40),
            flip_axes: [true; 3],
            flip_probability: 0.5,
            noise_sigma: 10.0,
            blur_sigma: 0.5,
            brightness: (-50.0, 50.0),
            contrast: (0.9, 1.1),
            gamma: (0.8, 1.25),
            crop_size: None,
        }
    }

    /// Segmentation set without rotation and flipping, used for detection.
    pub fn detection() -> Self {
        AugSpec { rotation_deg: [(0.0, 0.0); 3], flip_axes: [false; 3], ..AugSpec::segmentation() }
    }

    pub fn validate(&self) -> Result<(), VolumeError> {
        let bad = |msg: String| Err(VolumeError::InvalidAugSpec(msg));
        let ordered = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        for (axis, &r) in self.rotation_deg.iter().enumerate() {
            if !ordered(r) || r.0 < -30.0 || r.1 > 30.0 {
                return bad(format!("rotation range {r:?} on axis {axis} outside [-30, 30]"));
            }
        }
        if !ordered(self.scale) || self.scale.0 < 0.70 || self.scale.1 > 1.40 {
            return bad(format!("scale range {:?} outside [0.70, 1.40]", self.scale));
        }
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return bad(format!("flip probability {}", self.flip_probability));
        }
        if !(self.noise_sigma >= 0.0) || !(self.blur_sigma >= 0.0) {
            return bad("negative noise or blur sigma".into());
        }
        for (name, r) in [("brightness", self.brightness), ("contrast", self.contrast), ("gamma", self.gamma)] {
            if !ordered(r) {
                return bad(format!("{name} range {r:?} is not ordered"));
            }
        }
        if self.gamma.0 <= 0.0 {
            return bad("gamma lower bound must be positive".into());
        }
        if let Some(size) = self.crop_size {
            if size.iter().any(|&s| s == 0) {
                return bad("zero crop size".into());
            }
        }
        Ok(())
    }
}

fn sample(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// Applies one random draw of `spec` to a volume and its mask.
///
/// All randomness comes from `seed`, so equal inputs give bit-identical
/// outputs.
pub fn apply_augmentation(
    vol: &Volume,
    mask: &Mask,
    spec: &AugSpec,
    seed: u64,
) -> Result<(Volume, Mask), VolumeError> {
    spec.validate()?;
    vol.geometry().ensure_same(mask.geometry())?;
    vol.intensities()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Draw every parameter up front so the sequence does not depend on
    // which branches run.
    let angles = spec.rotation_deg.map(|r| sample(&mut rng, r).to_radians());
    let scale = sample(&mut rng, spec.scale);
    let flips = [0, 1, 2].map(|a| {
        let u: f64 = rng.gen();
        spec.flip_axes[a] && u < spec.flip_probability
    });
    let crop_u: [f64; 3] = [rng.gen(), rng.gen(), rng.gen()];
    let brightness = sample(&mut rng, spec.brightness);
    let contrast = sample(&mut rng, spec.contrast);
    let gamma = sample(&mut rng, spec.gamma);
    let noise_seed: u64 = rng.gen();

    let mut img = vol.intensities()?.to_vec();
    let mut lab: Vec<bool> = mask.data().to_vec();
    let mut geom = *vol.geometry();

    if angles.iter().any(|&a| a != 0.0) || scale != 1.0 {
        let (i, m) = affine_resample(&geom, &img, &lab, angles, scale);
        img = i;
        lab = m;
    }
    for axis in 0..3 {
        if flips[axis] {
            flip_in_place(&geom, &mut img, axis);
            flip_in_place(&geom, &mut lab, axis);
        }
    }
    if let Some(size) = spec.crop_size {
        let center: [i64; 3] = [0, 1, 2].map(|a| {
            let room = geom.dims[a].saturating_sub(size[a]);
            let start = (crop_u[a] * (room + 1) as f64).floor().min(room as f64) as i64;
            start + (size[a] / 2) as i64
        });
        let cropped = crop_patch(&Volume::from_intensities(geom, img)?, center, size)?;
        let cropped_mask = crop_patch(&Mask::new(geom, lab)?.to_volume(), center, size)?;
        geom = *cropped.geometry();
        img = cropped.intensities()?.to_vec();
        lab = cropped_mask.labels()?.iter().map(|&l| l != 0).collect();
    }

    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");
        let mut nrng = ChaCha8Rng::seed_from_u64(noise_seed);
        for v in img.iter_mut() {
            *v = (f64::from(*v) + normal.sample(&mut nrng)) as f32;
        }
    }
    if spec.blur_sigma > 0.0 {
        gaussian_blur(&geom, &mut img, spec.blur_sigma);
    }
    if brightness != 0.0 {
        img.iter_mut().for_each(|v| *v = (f64::from(*v) + brightness) as f32);
    }
    if contrast != 1.0 {
        let mean = img.iter().map(|&v| f64::from(v)).sum::<f64>() / img.len() as f64;
        img.iter_mut().for_each(|v| *v = (mean + contrast * (f64::from(*v) - mean)) as f32);
    }
    if gamma != 1.0 {
        let (lo, hi) = (f64::from(CLIP_LO_HU), f64::from(CLIP_HI_HU));
        img.iter_mut().for_each(|v| {
            let t = ((f64::from(*v) - lo) / (hi - lo)).clamp(0.0, 1.0);
            *v = (lo + (hi - lo) * t.powf(gamma)) as f32;
        });
    }

    Ok((Volume::from_intensities(geom, img)?, Mask::new(geom, lab)?))
}

/// Mirrors a volume of either kind along `axis` (0 = z, 1 = y, 2 = x).
pub fn flip_volume(vol: &Volume, axis: usize) -> Volume {
    assert!(axis < 3, "axis {axis} out of range");
    let g = *vol.geometry();
    let data = match vol.data() {
        VoxelData::Intensity(v) => {
            let mut v = v.clone();
            flip_in_place(&g, &mut v, axis);
            VoxelData::Intensity(v)
        }
        VoxelData::Label(v) => {
            let mut v = v.clone();
            flip_in_place(&g, &mut v, axis);
            VoxelData::Label(v)
        }
    };
    Volume::new(g, data).expect("same geometry and length")
}

fn flip_in_place<T>(g: &Geometry, data: &mut [T], axis: usize) {
    let [nz, ny, nx] = g.dims;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let c = [z, y, x];
                if c[axis] >= g.dims[axis] / 2 {
                    continue;
                }
                let mut m = c;
                m[axis] = g.dims[axis] - 1 - c[axis];
                data.swap(g.index(c[0], c[1], c[2]), g.index(m[0], m[1], m[2]));
            }
        }
    }
}

type Mat3 = [[f64; 3]; 3];

fn rotation(angles: [f64; 3]) -> Mat3 {
    let mul = |a: Mat3, b: Mat3| -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        out
    };
    let axis_rot = |axis: usize, t: f64| -> Mat3 {
        let (s, c) = t.sin_cos();
        let (i, j) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let mut m = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        m[i][i] = c;
        m[i][j] = -s;
        m[j][i] = s;
        m[j][j] = c;
        m
    };
    mul(mul(axis_rot(0, angles[0]), axis_rot(1, angles[1])), axis_rot(2, angles[2]))
}

/// Pulls each output voxel through the inverse rotation/scale about the
/// volume center (in mm). Intensities are trilinear with air padding; the
/// mask is nearest-neighbour with background padding.
fn affine_resample(g: &Geometry, img: &[f32], mask: &[bool], angles: [f64; 3], scale: f64) -> (Vec<f32>, Vec<bool>) {
    let r = rotation(angles);
    // inverse of (scale * R) is R^T / scale
    let inv = |p: [f64; 3]| -> [f64; 3] { [0, 1, 2].map(|i| (0..3).map(|k| r[k][i] * p[k]).sum::<f64>() / scale) };
    let center_mm = [0, 1, 2].map(|a| (g.dims[a] - 1) as f64 * g.spacing[a] / 2.0);
    let mut out_img = Vec::with_capacity(g.len());
    let mut out_mask = Vec::with_capacity(g.len());
    for idx in 0..g.len() {
        let c = g.coords(idx);
        let rel = [0, 1, 2].map(|a| c[a] as f64 * g.spacing[a] - center_mm[a]);
        let src_mm = inv(rel);
        let u = [0, 1, 2].map(|a| (src_mm[a] + center_mm[a]) / g.spacing[a]);
        out_img.push(trilinear(g, img, u));
        let n = u.map(|v| v.round() as i64);
        out_mask.push(g.contains(n) && mask[g.index(n[0] as usize, n[1] as usize, n[2] as usize)]);
    }
    (out_img, out_mask)
}

fn trilinear(g: &Geometry, img: &[f32], u: [f64; 3]) -> f32 {
    let base = u.map(|v| v.floor() as i64);
    let frac = [0, 1, 2].map(|a| u[a] - base[a] as f64);
    let mut acc = 0.0;
    for corner in 0..8 {
        let off = [(corner >> 2) & 1, (corner >> 1) & 1, corner & 1];
        let p = [0, 1, 2].map(|a| base[a] + off[a] as i64);
        let w: f64 = (0..3).map(|a| if off[a] == 1 { frac[a] } else { 1.0 - frac[a] }).product();
        if w == 0.0 {
            continue;
        }
        let v = if g.contains(p) {
            f64::from(img[g.index(p[0] as usize, p[1] as usize, p[2] as usize)])
        } else {
            f64::from(AIR_HU)
        };
        acc += w * v;
    }
    acc as f32
}

/// Separable Gaussian blur with edge clamping; `sigma_mm` is converted to
/// voxels per axis.
fn gaussian_blur(g: &Geometry, img: &mut [f32], sigma_mm: f64) {
    for axis in 0..3 {
        let sigma = sigma_mm / g.spacing[axis];
        let radius = (3.0 * sigma).ceil() as i64;
        if radius == 0 {
            continue;
        }
        let kernel: Vec<f64> = (-radius..=radius).map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp()).collect();
        let norm: f64 = kernel.iter().sum();
        let src = img.to_vec();
        let n = g.dims[axis] as i64;
        for idx in 0..g.len() {
            let c = g.coords(idx);
            let mut acc = 0.0;
            for (ki, k) in (-radius..=radius).enumerate() {
                let mut p = c;
                p[axis] = (c[axis] as i64 + k).clamp(0, n - 1) as usize;
                acc += kernel[ki] * f64::from(src[g.index(p[0], p[1], p[2])]);
            }
            img[idx] = (acc / norm) as f32;
        }
    }
}
