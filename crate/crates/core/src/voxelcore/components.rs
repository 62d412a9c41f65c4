use std::collections::VecDeque;

use super::volume::{BBox3, Geometry, Mask};

/// Neighbourhood used for connected-component labelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    /// Face neighbours only.
    Six,
    /// Face, edge and corner neighbours.
    TwentySix,
}

impl Connectivity {
    fn offsets(self) -> Vec<[i64; 3]> {
        let mut out = Vec::new();
        for dz in -1..=1i64 {
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let manhattan = dz.abs() + dy.abs() + dx.abs();
                    let keep = match self {
                        Connectivity::Six => manhattan == 1,
                        Connectivity::TwentySix => manhattan > 0,
                    };
                    if keep {
                        out.push([dz, dy, dx]);
                    }
                }
            }
        }
        out
    }
}

/// One connected foreground region.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    /// Flat voxel indices, in discovery order.
    pub voxels: Vec<usize>,
    pub bbox: BBox3,
}

impl Component {
    pub fn centroid(&self, geometry: &Geometry) -> [f64; 3] {
        let mut sum = [0.0f64; 3];
        for &i in &self.voxels {
            let c = geometry.coords(i);
            for a in 0..3 {
                sum[a] += c[a] as f64;
            }
        }
        let n = self.voxels.len() as f64;
        sum.map(|s| s / n)
    }
}

/// Labels the foreground of `foreground` (a flat grid with `geometry`) into
/// connected components. Components are returned in raster order of their
/// first voxel.
pub fn connected_components(geometry: &Geometry, foreground: &[bool], connectivity: Connectivity) -> Vec<Component> {
    let dims = geometry.dims;
    let offsets = connectivity.offsets();
    let mut visited = vec![false; foreground.len()];
    let mut queue = VecDeque::new();
    let mut out = Vec::new();

    for seed in 0..foreground.len() {
        if !foreground[seed] || visited[seed] {
            continue;
        }
        visited[seed] = true;
        queue.push_back(seed);
        let mut voxels = Vec::new();
        let mut min = [i64::MAX; 3];
        let mut max = [i64::MIN; 3];
        while let Some(idx) = queue.pop_front() {
            voxels.push(idx);
            let c = geometry.coords(idx).map(|v| v as i64);
            for a in 0..3 {
                min[a] = min[a].min(c[a]);
                max[a] = max[a].max(c[a] + 1);
            }
            for off in &offsets {
                let n = [c[0] + off[0], c[1] + off[1], c[2] + off[2]];
                if (0..3).any(|a| n[a] < 0 || n[a] >= dims[a] as i64) {
                    continue;
                }
                let ni = geometry.index(n[0] as usize, n[1] as usize, n[2] as usize);
                if foreground[ni] && !visited[ni] {
                    visited[ni] = true;
                    queue.push_back(ni);
                }
            }
        }
        out.push(Component { voxels, bbox: BBox3 { min, max } });
    }
    out
}

/// Tight bounding boxes of the mask's connected components, sorted by min
/// corner (then max corner).
pub fn mask_to_bboxes(mask: &Mask, connectivity: Connectivity) -> Vec<BBox3> {
    let mut boxes: Vec<BBox3> = connected_components(mask.geometry(), mask.data(), connectivity)
        .into_iter()
        .map(|c| c.bbox)
        .collect();
    boxes.sort();
    boxes
}
