//! Nodule candidate detection and per-candidate segmentation.
//!
//! [`NoduleDetector`] is the seam where a learned model plugs in. The
//! bundled [`ThresholdDetector`] is a classical stand-in: it thresholds each
//! sliding window, labels 26-connected components, keeps the ones sitting in
//! lung-density context, scores them by contrast, and merges windows with
//! non-maximum suppression.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{iou3d, Detection};
use crate::voxelcore::{
    connected_components, crop_patch, sliding_patches, BBox3, Connectivity, Geometry, Mask, PatchWindow, Volume,
    VolumeError,
};

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("detector expects an isotropic volume, got spacing {0:?}")]
    NonIsotropic([f64; 3]),
    #[error("candidate centroid {0:?} lies outside the volume")]
    CentroidOutside([f64; 3]),
    #[error("invalid detector config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Foreground threshold, HU.
    pub hu_threshold: f32,
    /// Smallest accepted candidate box, mm³.
    pub min_volume: f64,
    /// Largest accepted candidate box, mm³.
    pub max_volume: f64,
    /// Minimum confidence for a candidate to be reported.
    pub classifier_threshold: f64,
    /// Boxes overlapping a stronger one by more than this IoU are dropped.
    pub nms_iou: f64,
    pub detect_patch: [usize; 3],
    pub segment_patch: [usize; 3],
    /// Width of the surrounding shell used for the context test, mm.
    pub context_margin_mm: f64,
    /// A component is in lung context when its shell mean is below this, HU.
    pub context_max_hu: f64,
    /// Contrast (HU) that maps to a score of 1.
    pub contrast_scale_hu: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            hu_threshold: -300.0,
            min_volume: 14.0,
            max_volume: 1.4e5,
            classifier_threshold: 0.5,
            nms_iou: 0.1,
            detect_patch: [96; 3],
            segment_patch: [64; 3],
            context_margin_mm: 5.0,
            context_max_hu: -400.0,
            contrast_scale_hu: 600.0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        let bad = |m: &str| Err(DetectError::InvalidConfig(m.to_string()));
        if !(self.min_volume >= 0.0 && self.min_volume < self.max_volume) {
            return bad("min_volume must be below max_volume");
        }
        if !(0.0..=1.0).contains(&self.classifier_threshold) {
            return bad("classifier_threshold outside [0, 1]");
        }
        if !(self.nms_iou > 0.0 && self.nms_iou <= 1.0) {
            return bad("nms_iou outside (0, 1]");
        }
        if self.detect_patch.iter().chain(&self.segment_patch).any(|&p| p == 0) {
            return bad("zero patch size");
        }
        if !(self.contrast_scale_hu > 0.0) || !(self.context_margin_mm >= 0.0) {
            return bad("contrast scale and context margin must be positive");
        }
        Ok(())
    }
}

/// A detected nodule hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    #[serde(rename = "box")]
    pub bbox: BBox3,
    pub score: f64,
    /// Voxel-space centroid of the supporting component.
    pub centroid: [f64; 3],
}

impl From<&Candidate> for Detection {
    fn from(c: &Candidate) -> Self {
        Detection { bbox: c.bbox, score: c.score }
    }
}

/// One JSON-lines record of a candidate list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub case_id: u32,
    pub box_min: [i64; 3],
    pub box_max: [i64; 3],
    pub score: f64,
    pub centroid: [f64; 3],
}

impl CandidateRecord {
    pub fn new(case_id: u32, c: &Candidate) -> Self {
        CandidateRecord { case_id, box_min: c.bbox.min, box_max: c.bbox.max, score: c.score, centroid: c.centroid }
    }

    pub fn into_candidate(self) -> Result<Candidate, VolumeError> {
        Ok(Candidate { bbox: BBox3::new(self.box_min, self.box_max)?, score: self.score, centroid: self.centroid })
    }
}

/// Serializes candidates as JSON lines, one record per line.
pub fn to_json_lines(case_id: u32, cands: &[Candidate]) -> String {
    cands
        .iter()
        .map(|c| serde_json::to_string(&CandidateRecord::new(case_id, c)).expect("serializable record") + "\n")
        .collect()
}

/// Pluggable detector interface.
pub trait NoduleDetector: Send + Sync {
    fn detect(&self, vol: &Volume) -> Result<Vec<Candidate>, DetectError>;
    fn segment(&self, vol: &Volume, cand: &Candidate) -> Result<Mask, DetectError>;
}

/// The classical reference detector.
#[derive(Debug, Clone, Default)]
pub struct ThresholdDetector {
    pub config: DetectorConfig,
}

impl ThresholdDetector {
    pub fn new(config: DetectorConfig) -> Self {
        ThresholdDetector { config }
    }
}

impl NoduleDetector for ThresholdDetector {
    fn detect(&self, vol: &Volume) -> Result<Vec<Candidate>, DetectError> {
        detect_candidates(vol, &self.config)
    }

    fn segment(&self, vol: &Volume, cand: &Candidate) -> Result<Mask, DetectError> {
        segment_candidate(vol, cand, &self.config)
    }
}

/// Runs the reference detector over sliding windows of `vol`.
pub fn detect_candidates(vol: &Volume, cfg: &DetectorConfig) -> Result<Vec<Candidate>, DetectError> {
    cfg.validate()?;
    let g = *vol.geometry();
    let sp = g.spacing;
    if (sp[0] - sp[1]).abs() > 1e-9 || (sp[0] - sp[2]).abs() > 1e-9 {
        return Err(DetectError::NonIsotropic(sp));
    }
    let hu = vol.intensities()?;
    let foreground: Vec<bool> = hu.iter().map(|&v| v > cfg.hu_threshold).collect();
    let stride = cfg.detect_patch.map(|p| (p / 2).max(1));
    let windows = sliding_patches(g.dims, cfg.detect_patch, stride);
    let margin = (cfg.context_margin_mm / sp[0]).round() as i64;
    let voxel_mm3 = g.voxel_volume_mm3();

    let raw: Vec<Candidate> = windows
        .par_iter()
        .map(|w| window_candidates(&g, hu, &foreground, w, margin, voxel_mm3, cfg))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();

    let merged = nms(&raw, cfg.nms_iou);
    Ok(merged.into_iter().filter(|c| c.score >= cfg.classifier_threshold).collect())
}

fn window_candidates(
    g: &Geometry,
    hu: &[f32],
    foreground: &[bool],
    w: &PatchWindow,
    margin: i64,
    voxel_mm3: f64,
    cfg: &DetectorConfig,
) -> Vec<Candidate> {
    let end = [0, 1, 2].map(|a| (w.start[a] + w.size[a]).min(g.dims[a]));
    let local_dims = [0, 1, 2].map(|a| end[a] - w.start[a]);
    let local = Geometry::isotropic(local_dims).expect("non-empty window");
    let mut local_fg = Vec::with_capacity(local.len());
    for z in w.start[0]..end[0] {
        for y in w.start[1]..end[1] {
            let row = g.index(z, y, w.start[2]);
            local_fg.extend_from_slice(&foreground[row..row + local_dims[2]]);
        }
    }

    let mut out = Vec::new();
    for comp in connected_components(&local, &local_fg, Connectivity::TwentySix) {
        // Components cut by an inner window face are seen whole by a neighbouring window.
        let cut = (0..3).any(|a| {
            (comp.bbox.min[a] == 0 && w.start[a] > 0) || (comp.bbox.max[a] == local_dims[a] as i64 && end[a] < g.dims[a])
        });
        if cut {
            continue;
        }
        let offset = w.start.map(|s| s as i64);
        let bbox = BBox3 {
            min: [0, 1, 2].map(|a| comp.bbox.min[a] + offset[a]),
            max: [0, 1, 2].map(|a| comp.bbox.max[a] + offset[a]),
        };
        let box_mm3 = bbox.voxel_count() as f64 * voxel_mm3;
        if box_mm3 < cfg.min_volume || box_mm3 > cfg.max_volume {
            continue;
        }
        let global: Vec<usize> = comp
            .voxels
            .iter()
            .map(|&i| {
                let c = local.coords(i);
                g.index(c[0] + w.start[0], c[1] + w.start[1], c[2] + w.start[2])
            })
            .collect();
        let inside = global.iter().map(|&i| f64::from(hu[i])).sum::<f64>() / global.len() as f64;
        let Some(shell) = shell_mean(g, hu, &bbox, &global, margin) else {
            continue;
        };
        if shell >= cfg.context_max_hu {
            continue;
        }
        let score = ((inside - shell) / cfg.contrast_scale_hu).clamp(0.0, 1.0);
        let centroid = comp.centroid(&local);
        out.push(Candidate { bbox, score, centroid: [0, 1, 2].map(|a| centroid[a] + offset[a] as f64) });
    }
    out
}

/// Mean intensity of the voxels around a component: its box grown by
/// `margin`, minus the component itself.
fn shell_mean(g: &Geometry, hu: &[f32], bbox: &BBox3, voxels: &[usize], margin: i64) -> Option<f64> {
    let outer = bbox.dilate_clamped(margin, g.dims);
    let ext = outer.extent().map(|e| e as usize);
    let mut member = vec![false; ext[0] * ext[1] * ext[2]];
    let local = |c: [usize; 3]| {
        ((c[0] - outer.min[0] as usize) * ext[1] + (c[1] - outer.min[1] as usize)) * ext[2] + (c[2] - outer.min[2] as usize)
    };
    for &i in voxels {
        member[local(g.coords(i))] = true;
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for z in outer.min[0] as usize..outer.max[0] as usize {
        for y in outer.min[1] as usize..outer.max[1] as usize {
            for x in outer.min[2] as usize..outer.max[2] as usize {
                if !member[local([z, y, x])] {
                    sum += f64::from(hu[g.index(z, y, x)]);
                    n += 1;
                }
            }
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Greedy non-maximum suppression in descending score order (ties by box
/// corners). A candidate is dropped when its IoU with an already kept one
/// exceeds `iou_thr`.
pub fn nms(cands: &[Candidate], iou_thr: f64) -> Vec<Candidate> {
    let mut order: Vec<&Candidate> = cands.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.bbox.cmp(&b.bbox)));
    let mut kept: Vec<Candidate> = Vec::new();
    for c in order {
        if kept.iter().all(|k| iou3d(&k.bbox, &c.bbox) <= iou_thr) {
            kept.push(c.clone());
        }
    }
    kept
}

/// Segments one candidate inside a `segment_patch` crop around its centroid.
///
/// The crop is thresholded and only the component containing the crop
/// center (or, failing that, the nearest one) is kept. The result is
/// embedded back into the full volume's geometry.
pub fn segment_candidate(vol: &Volume, cand: &Candidate, cfg: &DetectorConfig) -> Result<Mask, DetectError> {
    let g = *vol.geometry();
    let center = cand.centroid.map(|c| c.round() as i64);
    if cand.centroid.iter().any(|c| !c.is_finite()) || !g.contains(center) {
        return Err(DetectError::CentroidOutside(cand.centroid));
    }
    let patch = crop_patch(vol, center, cfg.segment_patch)?;
    let pg = *patch.geometry();
    let fg: Vec<bool> = patch.intensities()?.iter().map(|&v| v > cfg.hu_threshold).collect();
    let comps = connected_components(&pg, &fg, Connectivity::TwentySix);

    let local_center = cfg.segment_patch.map(|s| (s / 2) as i64);
    let center_idx = pg.index(local_center[0] as usize, local_center[1] as usize, local_center[2] as usize);
    let chosen = comps.iter().position(|c| fg[center_idx] && c.voxels.contains(&center_idx)).or_else(|| {
        comps
            .iter()
            .enumerate()
            .map(|(ci, c)| {
                let d = c
                    .voxels
                    .iter()
                    .map(|&i| {
                        let p = pg.coords(i);
                        (0..3).map(|a| (p[a] as i64 - local_center[a]).pow(2)).sum::<i64>()
                    })
                    .min()
                    .unwrap_or(i64::MAX);
                (d, ci)
            })
            .min()
            .map(|(_, ci)| ci)
    });

    let mut mask = Mask::empty(g);
    if let Some(ci) = chosen {
        let start = [0, 1, 2].map(|a| center[a] - local_center[a]);
        for &i in &comps[ci].voxels {
            let p = pg.coords(i);
            let q = [0, 1, 2].map(|a| p[a] as i64 + start[a]);
            if g.contains(q) {
                mask.set(q[0] as usize, q[1] as usize, q[2] as usize, true);
            }
        }
    }
    Ok(mask)
}
