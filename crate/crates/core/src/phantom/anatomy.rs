//! Fixed thoracic layout: an elliptical body, two lung ellipsoids and
//! fissure planes along z.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::lobe::LobeId;
use crate::voxelcore::{BBox3, Geometry, LobeLabelMap, VolumeError};

/// Volume shape (z, y, x) at 1 mm.
pub const DIMS: [usize; 3] = [96, 128, 160];
pub const AIR_HU: f32 = -1000.0;
pub const LUNG_HU: f32 = -800.0;
pub const TISSUE_HU: f32 = 0.0;

const BODY_CENTER: [f64; 2] = [64.0, 80.0];
const BODY_SEMI: [f64; 2] = [56.0, 76.0];
const LUNG_SEMI: [f64; 3] = [40.0, 40.0, 28.0];
const RIGHT_LUNG: [f64; 3] = [48.0, 64.0, 48.0];
const LEFT_LUNG: [f64; 3] = [48.0, 64.0, 112.0];
/// Right lung: RLL below the first plane, RML between, RUL above.
const RIGHT_FISSURES: [f64; 2] = [38.0, 56.0];
/// Left lung: LLL below, LUL above.
const LEFT_FISSURE: f64 = 48.0;

/// Fissure positions after seeded jitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fissures {
    pub right: [f64; 2],
    pub left: f64,
}

impl Fissures {
    pub fn nominal() -> Self {
        Fissures { right: RIGHT_FISSURES, left: LEFT_FISSURE }
    }

    /// Each plane shifted by a uniform draw in `[-jitter_mm, jitter_mm]`.
    pub fn jittered(rng: &mut ChaCha8Rng, jitter_mm: f64) -> Self {
        let jitter_mm = jitter_mm.clamp(0.0, 8.0);
        if jitter_mm == 0.0 {
            return Self::nominal();
        }
        let mut d = || rng.gen_range(-jitter_mm..=jitter_mm);
        Fissures { right: [RIGHT_FISSURES[0] + d(), RIGHT_FISSURES[1] + d()], left: LEFT_FISSURE + d() }
    }

    pub fn lobe_at(&self, p: [f64; 3]) -> Option<LobeId> {
        let z = p[0];
        if in_ellipsoid(p, RIGHT_LUNG, LUNG_SEMI) {
            Some(if z < self.right[0] {
                LobeId::Rll
            } else if z < self.right[1] {
                LobeId::Rml
            } else {
                LobeId::Rul
            })
        } else if in_ellipsoid(p, LEFT_LUNG, LUNG_SEMI) {
            Some(if z < self.left { LobeId::Lll } else { LobeId::Lul })
        } else {
            None
        }
    }
}

fn in_ellipsoid(p: [f64; 3], c: [f64; 3], r: [f64; 3]) -> bool {
    (0..3).map(|a| ((p[a] - c[a]) / r[a]).powi(2)).sum::<f64>() <= 1.0
}

pub fn in_body(y: f64, x: f64) -> bool {
    ((y - BODY_CENTER[0]) / BODY_SEMI[0]).powi(2) + ((x - BODY_CENTER[1]) / BODY_SEMI[1]).powi(2) <= 1.0
}

pub fn geometry() -> Geometry {
    Geometry::isotropic(DIMS).expect("fixed dims are valid")
}

pub fn rasterize_lobes(fissures: &Fissures) -> Result<LobeLabelMap, VolumeError> {
    let g = geometry();
    let mut labels = vec![0u8; g.len()];
    for (i, l) in labels.iter_mut().enumerate() {
        let [z, y, x] = g.coords(i);
        if let Some(lobe) = fissures.lobe_at([z as f64, y as f64, x as f64]) {
            *l = lobe.label();
        }
    }
    LobeLabelMap::new(g, labels)
}

/// Tight voxel box of every lobe, indexed by `label - 1`.
pub fn lobe_boxes(lobes: &LobeLabelMap) -> [Option<BBox3>; 5] {
    let g = lobes.geometry();
    let mut lo = [[i64::MAX; 3]; 5];
    let mut hi = [[i64::MIN; 3]; 5];
    for (i, &l) in lobes.data().iter().enumerate() {
        if l == 0 {
            continue;
        }
        let c = g.coords(i);
        let k = usize::from(l - 1);
        for a in 0..3 {
            lo[k][a] = lo[k][a].min(c[a] as i64);
            hi[k][a] = hi[k][a].max(c[a] as i64 + 1);
        }
    }
    std::array::from_fn(|k| BBox3::new(lo[k], hi[k]).ok())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn all_lobes_nonempty_and_inside_body() {
        let lobes = rasterize_lobes(&Fissures::nominal()).unwrap();
        let boxes = lobe_boxes(&lobes);
        assert!(boxes.iter().all(Option::is_some));
        let g = lobes.geometry();
        for (i, &l) in lobes.data().iter().enumerate() {
            if l != 0 {
                let [_, y, x] = g.coords(i);
                assert!(in_body(y as f64, x as f64));
            }
        }
    }

    #[test]
    fn fissures_split_along_z() {
        let f = Fissures::nominal();
        assert_eq!(f.lobe_at([30.0, 64.0, 48.0]), Some(LobeId::Rll));
        assert_eq!(f.lobe_at([45.0, 64.0, 48.0]), Some(LobeId::Rml));
        assert_eq!(f.lobe_at([70.0, 64.0, 48.0]), Some(LobeId::Rul));
        assert_eq!(f.lobe_at([30.0, 64.0, 112.0]), Some(LobeId::Lll));
        assert_eq!(f.lobe_at([70.0, 64.0, 112.0]), Some(LobeId::Lul));
        assert_eq!(f.lobe_at([48.0, 64.0, 80.0]), None);
    }

    #[test]
    fn jitter_is_seeded_and_bounded() {
        let a = Fissures::jittered(&mut ChaCha8Rng::seed_from_u64(3), 2.0);
        let b = Fissures::jittered(&mut ChaCha8Rng::seed_from_u64(3), 2.0);
        assert_eq!(a, b);
        assert!((a.left - LEFT_FISSURE).abs() <= 2.0);
        assert_eq!(Fissures::jittered(&mut ChaCha8Rng::seed_from_u64(3), 0.0), Fissures::nominal());
    }
}
