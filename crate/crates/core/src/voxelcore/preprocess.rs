use std::collections::BTreeSet;

use super::volume::{Geometry, LobeLabelMap, Volume, VoxelData, AIR_HU};
use super::VolumeError;
use crate::lobe::LobeId;

/// Resamples onto an isotropic grid with `target_spacing` mm voxels.
///
/// Output dims are `round(dims * spacing / target)` (at least 1) and the
/// origin is kept, so output voxel `i` samples continuous input index
/// `i * target / spacing`, clamped to the input extent. Intensities are
/// interpolated trilinearly, labels take the nearest input voxel.
pub fn resample_to_isotropic(vol: &Volume, target_spacing: f64) -> Result<Volume, VolumeError> {
    if !(target_spacing > 0.0 && target_spacing.is_finite()) {
        return Err(VolumeError::NonPositiveSpacing(target_spacing));
    }
    let g = vol.geometry();
    let dims_out: [usize; 3] =
        [0, 1, 2].map(|a| ((g.dims[a] as f64 * g.spacing[a] / target_spacing).round() as usize).max(1));
    let geom_out = Geometry::new(dims_out, [target_spacing; 3], g.origin)?;

    // Per-axis sample positions in input index space.
    let positions: [Vec<f64>; 3] = [0, 1, 2].map(|a| {
        let step = target_spacing / g.spacing[a];
        let last = (g.dims[a] - 1) as f64;
        (0..dims_out[a]).map(|i| (i as f64 * step).min(last)).collect()
    });

    let data = match vol.data() {
        VoxelData::Intensity(src) => {
            let taps: [Vec<(usize, usize, f64)>; 3] = [0, 1, 2].map(|a| {
                positions[a]
                    .iter()
                    .map(|&u| {
                        let i0 = u.floor() as usize;
                        let i1 = (i0 + 1).min(g.dims[a] - 1);
                        (i0, i1, u - i0 as f64)
                    })
                    .collect()
            });
            let mut out = Vec::with_capacity(geom_out.len());
            for &(z0, z1, tz) in &taps[0] {
                for &(y0, y1, ty) in &taps[1] {
                    for &(x0, x1, tx) in &taps[2] {
                        let s = |z, y, x| f64::from(src[g.index(z, y, x)]);
                        let c00 = s(z0, y0, x0) * (1.0 - tx) + s(z0, y0, x1) * tx;
                        let c01 = s(z0, y1, x0) * (1.0 - tx) + s(z0, y1, x1) * tx;
                        let c10 = s(z1, y0, x0) * (1.0 - tx) + s(z1, y0, x1) * tx;
                        let c11 = s(z1, y1, x0) * (1.0 - tx) + s(z1, y1, x1) * tx;
                        let c0 = c00 * (1.0 - ty) + c01 * ty;
                        let c1 = c10 * (1.0 - ty) + c11 * ty;
                        out.push((c0 * (1.0 - tz) + c1 * tz) as f32);
                    }
                }
            }
            VoxelData::Intensity(out)
        }
        VoxelData::Label(src) => {
            let nearest: [Vec<usize>; 3] =
                [0, 1, 2].map(|a| positions[a].iter().map(|&u| u.round() as usize).collect());
            let mut out = Vec::with_capacity(geom_out.len());
            for &z in &nearest[0] {
                for &y in &nearest[1] {
                    for &x in &nearest[2] {
                        out.push(src[g.index(z, y, x)]);
                    }
                }
            }
            VoxelData::Label(out)
        }
    };
    Volume::new(geom_out, data)
}

/// Clamps every intensity into `[lo, hi]`.
pub fn clip_intensity(vol: &Volume, lo: f32, hi: f32) -> Result<Volume, VolumeError> {
    if !(lo < hi) {
        return Err(VolumeError::InvalidClipBounds { lo, hi });
    }
    let src = vol.intensities()?;
    let out = src.iter().map(|&v| v.clamp(lo, hi)).collect();
    Volume::from_intensities(*vol.geometry(), out)
}

/// Extracts a `size` patch centred on `center`.
///
/// For even sizes the center lands at output index `size / 2`. Voxels
/// outside the source are padded with air (intensity) or 0 (labels). The
/// output origin is shifted so world positions are preserved.
pub fn crop_patch(vol: &Volume, center: [i64; 3], size: [usize; 3]) -> Result<Volume, VolumeError> {
    let g = vol.geometry();
    if size.iter().any(|&s| s == 0) {
        return Err(VolumeError::InvalidGeometry(format!("zero crop size {size:?}")));
    }
    for a in 0..3 {
        let (lo, hi) = (-(size[a] as i64), (g.dims[a] + size[a]) as i64);
        if center[a] < lo || center[a] >= hi {
            return Err(VolumeError::CenterOutOfRange { center, dims: g.dims });
        }
    }
    let start: [i64; 3] = [0, 1, 2].map(|a| center[a] - (size[a] / 2) as i64);
    let origin = [0, 1, 2].map(|a| g.origin[a] + start[a] as f64 * g.spacing[a]);
    let geom_out = Geometry::new(size, g.spacing, origin)?;

    let src_index = |o: [usize; 3]| -> Option<usize> {
        let p = [0, 1, 2].map(|a| start[a] + o[a] as i64);
        g.contains(p).then(|| g.index(p[0] as usize, p[1] as usize, p[2] as usize))
    };
    let data = match vol.data() {
        VoxelData::Intensity(src) => VoxelData::Intensity(gather(size, |o| {
            src_index(o).map_or(AIR_HU, |i| src[i])
        })),
        VoxelData::Label(src) => VoxelData::Label(gather(size, |o| src_index(o).map_or(0, |i| src[i]))),
    };
    Volume::new(geom_out, data)
}

fn gather<T>(size: [usize; 3], mut f: impl FnMut([usize; 3]) -> T) -> Vec<T> {
    let mut out = Vec::with_capacity(size.iter().product());
    for z in 0..size[0] {
        for y in 0..size[1] {
            for x in 0..size[2] {
                out.push(f([z, y, x]));
            }
        }
    }
    out
}

/// Keeps voxels whose lobe label is in `keep`; everything else becomes `fill`.
pub fn apply_lobe_mask(
    vol: &Volume,
    lobes: &LobeLabelMap,
    keep: &BTreeSet<LobeId>,
    fill: f32,
) -> Result<Volume, VolumeError> {
    if keep.is_empty() {
        return Err(VolumeError::EmptyKeepSet);
    }
    vol.geometry().ensure_same(lobes.geometry())?;
    let mut codes = [false; 6];
    for lobe in keep {
        codes[lobe.label() as usize] = true;
    }
    let out = vol
        .intensities()?
        .iter()
        .zip(lobes.data())
        .map(|(&v, &l)| if codes[l as usize] { v } else { fill })
        .collect();
    Volume::from_intensities(*vol.geometry(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(dims: [usize; 3], spacing: [f64; 3], axis: usize) -> Volume {
        let g = Geometry::new(dims, spacing, [0.0; 3]).unwrap();
        let data = (0..g.len()).map(|i| (g.coords(i)[axis] as f64 * spacing[axis]) as f32).collect();
        Volume::from_intensities(g, data).unwrap()
    }

    #[test]
    fn constant_volume_stays_constant() {
        let g = Geometry::new([5, 6, 7], [2.0, 2.0, 2.0], [1.0, 2.0, 3.0]).unwrap();
        let out = resample_to_isotropic(&Volume::filled(g, 40.0), 1.0).unwrap();
        assert_eq!(out.dims(), [10, 12, 14]);
        assert_eq!(out.geometry().origin, [1.0, 2.0, 3.0]);
        assert!(out.intensities().unwrap().iter().all(|&v| v == 40.0));
    }

    #[test]
    fn dims_follow_rounding_rule() {
        let g = Geometry::new([4, 4, 4], [2.0; 3], [0.0; 3]).unwrap();
        let out = resample_to_isotropic(&Volume::filled(g, 0.0), 1.0).unwrap();
        assert_eq!(out.dims(), [8, 8, 8]);
        assert_eq!(out.geometry().spacing, [1.0; 3]);

        let g = Geometry::new([1, 3, 5], [0.2, 1.25, 0.7], [0.0; 3]).unwrap();
        let out = resample_to_isotropic(&Volume::filled(g, 0.0), 1.0).unwrap();
        // round(0.2)=0 -> 1, round(3.75)=4, round(3.5)=4
        assert_eq!(out.dims(), [1, 4, 4]);
    }

    #[test]
    fn linear_ramp_reproduced_in_interior() {
        for axis in 0..3 {
            let mut spacing = [1.0; 3];
            spacing[axis] = 2.5;
            let vol = ramp([6, 6, 6], spacing, axis);
            let out = resample_to_isotropic(&vol, 1.0).unwrap();
            let g = *out.geometry();
            let last_world = 5.0 * 2.5;
            for idx in 0..g.len() {
                let c = g.coords(idx);
                // analytic field at the output sample's world position
                let world = c[axis] as f64 * 1.0;
                if world <= last_world {
                    let got = f64::from(out.intensities().unwrap()[idx]);
                    assert!((got - world).abs() < 1e-6, "axis {axis} {c:?}: {got} vs {world}");
                }
            }
        }
    }

    #[test]
    fn same_spacing_is_identity() {
        let g = Geometry::isotropic([3, 4, 5]).unwrap();
        let data: Vec<f32> = (0..g.len()).map(|i| (i as f32).sin() * 100.0).collect();
        let vol = Volume::from_intensities(g, data).unwrap();
        assert_eq!(resample_to_isotropic(&vol, 1.0).unwrap(), vol);
    }

    #[test]
    fn labels_use_nearest() {
        let g = Geometry::new([1, 1, 4], [1.0, 1.0, 2.0], [0.0; 3]).unwrap();
        let vol = Volume::from_labels(g, vec![1, 2, 3, 4]).unwrap();
        let out = resample_to_isotropic(&vol, 1.0).unwrap();
        // positions 0, .5, 1, 1.5, ... round half away from zero
        assert_eq!(out.labels().unwrap(), &[1, 2, 2, 3, 3, 4, 4, 4]);
    }

    #[test]
    fn resample_rejects_bad_spacing() {
        let vol = Volume::filled(Geometry::isotropic([2, 2, 2]).unwrap(), 0.0);
        assert!(matches!(resample_to_isotropic(&vol, 0.0), Err(VolumeError::NonPositiveSpacing(_))));
        assert!(resample_to_isotropic(&vol, -1.0).is_err());
    }

    #[test]
    fn clip_examples() {
        let g = Geometry::isotropic([1, 1, 3]).unwrap();
        let vol = Volume::from_intensities(g, vec![-2000.0, 700.0, 0.0]).unwrap();
        let out = clip_intensity(&vol, -1000.0, 600.0).unwrap();
        assert_eq!(out.intensities().unwrap(), &[-1000.0, 600.0, 0.0]);
        assert_eq!(clip_intensity(&out, -1000.0, 600.0).unwrap(), out);
    }

    #[test]
    fn clip_errors() {
        let g = Geometry::isotropic([1, 1, 1]).unwrap();
        let vol = Volume::filled(g, 0.0);
        assert!(matches!(clip_intensity(&vol, 5.0, 5.0), Err(VolumeError::InvalidClipBounds { .. })));
        let labels = Volume::from_labels(g, vec![1]).unwrap();
        assert!(matches!(clip_intensity(&labels, -1.0, 1.0), Err(VolumeError::WrongKind { .. })));
    }

    #[test]
    fn crop_identity_and_padding() {
        let g = Geometry::isotropic([4, 4, 4]).unwrap();
        let data: Vec<f32> = (0..64).map(|i| i as f32).collect();
        let vol = Volume::from_intensities(g, data).unwrap();
        let same = crop_patch(&vol, [2, 2, 2], [4, 4, 4]).unwrap();
        assert_eq!(same, vol);

        let corner = crop_patch(&vol, [0, 0, 0], [4, 4, 4]).unwrap();
        let v = corner.intensities().unwrap();
        let cg = corner.geometry();
        assert_eq!(cg.origin, [-2.0, -2.0, -2.0]);
        for idx in 0..cg.len() {
            let [z, y, x] = cg.coords(idx);
            if z < 2 || y < 2 || x < 2 {
                assert_eq!(v[idx], AIR_HU);
            } else {
                assert_eq!(v[idx], vol.at(z - 2, y - 2, x - 2));
            }
        }
    }

    #[test]
    fn crop_is_idempotent() {
        let g = Geometry::isotropic([6, 7, 8]).unwrap();
        let data: Vec<f32> = (0..g.len()).map(|i| i as f32).collect();
        let vol = Volume::from_intensities(g, data).unwrap();
        let a = crop_patch(&vol, [1, 5, 3], [3, 4, 5]).unwrap();
        let b = crop_patch(&vol, [1, 5, 3], [3, 4, 5]).unwrap();
        assert_eq!(a, b);
        // re-cropping the patch around its own center is the identity
        assert_eq!(crop_patch(&a, [1, 2, 2], [3, 4, 5]).unwrap(), a);
    }

    #[test]
    fn crop_label_pads_zero_and_checks_range() {
        let g = Geometry::isotropic([2, 2, 2]).unwrap();
        let vol = Volume::from_labels(g, vec![3; 8]).unwrap();
        let out = crop_patch(&vol, [0, 0, 0], [2, 2, 2]).unwrap();
        assert_eq!(out.labels().unwrap().iter().filter(|&&l| l == 0).count(), 7);
        assert!(matches!(
            crop_patch(&vol, [4, 0, 0], [2, 2, 2]),
            Err(VolumeError::CenterOutOfRange { .. })
        ));
        assert!(crop_patch(&vol, [-3, 0, 0], [2, 2, 2]).is_err());
        assert!(crop_patch(&vol, [-2, 0, 0], [2, 2, 2]).is_ok());
    }

    #[test]
    fn lobe_mask_fills_outside() {
        let g = Geometry::isotropic([1, 1, 6]).unwrap();
        let vol = Volume::from_intensities(g, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let lobes = LobeLabelMap::new(g, vec![0, 1, 2, 3, 4, 5]).unwrap();
        let all: BTreeSet<_> = LobeId::ALL.into_iter().collect();
        let out = apply_lobe_mask(&vol, &lobes, &all, AIR_HU).unwrap();
        assert_eq!(out.intensities().unwrap(), &[AIR_HU, 2.0, 3.0, 4.0, 5.0, 6.0]);

        let rul: BTreeSet<_> = [LobeId::Rul].into_iter().collect();
        let out = apply_lobe_mask(&vol, &lobes, &rul, AIR_HU).unwrap();
        assert_eq!(out.intensities().unwrap(), &[AIR_HU, 2.0, AIR_HU, AIR_HU, AIR_HU, AIR_HU]);

        assert!(matches!(
            apply_lobe_mask(&vol, &lobes, &BTreeSet::new(), AIR_HU),
            Err(VolumeError::EmptyKeepSet)
        ));
    }
}
