use serde::{Deserialize, Serialize};

/// A sub-volume window in voxel index space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchWindow {
    pub start: [usize; 3],
    pub size: [usize; 3],
}

impl PatchWindow {
    pub fn end(&self) -> [usize; 3] {
        [0, 1, 2].map(|a| self.start[a] + self.size[a])
    }

    pub fn contains(&self, p: [usize; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.start[a] && p[a] < self.start[a] + self.size[a])
    }
}

/// Overlapping windows covering a `dims` grid.
///
/// Starts step by `stride` and the last start on each axis is pulled back
/// so the window ends at the grid edge. An axis shorter than the patch
/// yields a single window at 0 that extends into zero padding. Windows are
/// ordered lexicographically by start. Zero patch or stride components are
/// treated as 1.
pub fn sliding_patches(dims: [usize; 3], patch: [usize; 3], stride: [usize; 3]) -> Vec<PatchWindow> {
    let starts: [Vec<usize>; 3] = [0, 1, 2].map(|a| axis_starts(dims[a], patch[a].max(1), stride[a].max(1)));
    let mut out = Vec::with_capacity(starts.iter().map(Vec::len).product());
    for &z in &starts[0] {
        for &y in &starts[1] {
            for &x in &starts[2] {
                out.push(PatchWindow { start: [z, y, x], size: patch.map(|p| p.max(1)) });
            }
        }
    }
    out
}

fn axis_starts(dim: usize, patch: usize, stride: usize) -> Vec<usize> {
    if dim <= patch {
        return vec![0];
    }
    let last = dim - patch;
    let mut starts = Vec::new();
    let mut s = 0;
    loop {
        starts.push(s.min(last));
        if s >= last {
            break;
        }
        s += stride;
    }
    starts.dedup();
    starts
}
