//! Lobe assignment, phenotype filtering and the two-stage case pipeline.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::{Candidate, DetectError, DetectorConfig, NoduleDetector, ThresholdDetector};
use crate::extract::{extract_phenotype, Backend, ExtractError, TumorPhenotype};
use crate::lobe::LobeId;
use crate::metrics::{case_outcome, iou3d, CaseOutcome, Detection};
use crate::phantom::CohortCase;
use crate::voxelcore::{
    apply_lobe_mask, clip_intensity, resample_to_isotropic, LobeLabelMap, Mask, Volume, VolumeError, AIR_HU,
    CLIP_HI_HU, CLIP_LO_HU,
};

/// IoU at which a kept candidate counts as finding a tumor.
pub const MATCH_IOU: f64 = 0.5;

#[derive(Debug, Error)]
pub enum GuideError {
    #[error("candidate box {0:?} lies outside the lobe map")]
    BoxOutside(crate::voxelcore::BBox3),
    #[error("{candidates} candidates but {assignments} lobe assignments")]
    Misaligned { candidates: usize, assignments: usize },
    #[error("guided filtering needs at least one phenotype lobe")]
    EmptyPhenotype,
    #[error("guided mode needs an extraction backend")]
    MissingBackend,
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Unguided,
    Guided,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Unguided => "unguided",
            Mode::Guided => "guided",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "unguided" => Ok(Mode::Unguided),
            "guided" => Ok(Mode::Guided),
            other => Err(format!("unknown mode {other:?}, expected guided or unguided")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LobeAssignment {
    pub candidate: usize,
    pub lobe: Option<LobeId>,
    /// Share of the box's voxels carrying the assigned lobe's label.
    pub overlap_fraction: f64,
}

/// Assigns the lobe with the most voxels inside the candidate box; ties go
/// to the smaller lobe id, and a box touching no lobe gets `None`.
pub fn assign_lobe(candidate: usize, cand: &Candidate, lobes: &LobeLabelMap) -> Result<LobeAssignment, GuideError> {
    let g = lobes.geometry();
    if !cand.bbox.within(g.dims) {
        return Err(GuideError::BoxOutside(cand.bbox));
    }
    let mut counts = [0u64; 6];
    let b = cand.bbox;
    for z in b.min[0]..b.max[0] {
        for y in b.min[1]..b.max[1] {
            let row = g.index(z as usize, y as usize, b.min[2] as usize);
            let width = (b.max[2] - b.min[2]) as usize;
            for &l in &lobes.data()[row..row + width] {
                counts[usize::from(l)] += 1;
            }
        }
    }
    let best = (1..=5).fold(None::<(usize, u64)>, |acc, l| match acc {
        Some((_, c)) if c >= counts[l] => acc,
        _ if counts[l] > 0 => Some((l, counts[l])),
        _ => acc,
    });
    Ok(match best {
        Some((l, c)) => LobeAssignment {
            candidate,
            lobe: LobeId::from_label(l as u8),
            overlap_fraction: c as f64 / b.voxel_count() as f64,
        },
        None => LobeAssignment { candidate, lobe: None, overlap_fraction: 0.0 },
    })
}

pub fn assign_lobes(cands: &[Candidate], lobes: &LobeLabelMap) -> Result<Vec<LobeAssignment>, GuideError> {
    cands.iter().enumerate().map(|(i, c)| assign_lobe(i, c, lobes)).collect()
}

/// Partition of a candidate list.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterResult {
    pub kept: Vec<Candidate>,
    /// Lobe of each kept candidate.
    pub kept_lobes: Vec<LobeId>,
    pub removed_by_phenotype: Vec<Candidate>,
    pub discarded_no_lobe: Vec<Candidate>,
}

/// Drops candidates without a lobe and, when a phenotype is given, those
/// outside its lobes.
pub fn filter_candidates(
    cands: &[Candidate],
    assigns: &[LobeAssignment],
    phenotype: Option<&TumorPhenotype>,
) -> Result<FilterResult, GuideError> {
    if cands.len() != assigns.len() {
        return Err(GuideError::Misaligned { candidates: cands.len(), assignments: assigns.len() });
    }
    if phenotype.is_some_and(|p| p.lobes.is_empty()) {
        return Err(GuideError::EmptyPhenotype);
    }
    let mut out = FilterResult::default();
    for (c, a) in cands.iter().zip(assigns) {
        match (a.lobe, phenotype) {
            (None, _) => out.discarded_no_lobe.push(c.clone()),
            (Some(l), Some(p)) if !p.lobes.contains(&l) => out.removed_by_phenotype.push(c.clone()),
            (Some(l), _) => {
                out.kept.push(c.clone());
                out.kept_lobes.push(l);
            }
        }
    }
    Ok(out)
}

/// Outcome of one case in one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case_id: u32,
    pub mode: Mode,
    pub detected: usize,
    /// Guided: removed by the phenotype. Unguided: discarded for lacking a lobe.
    pub removed: usize,
    pub discarded_no_lobe: usize,
    pub kept: Vec<Candidate>,
    pub kept_lobes: Vec<LobeId>,
    /// One segmentation per kept candidate; not serialized.
    #[serde(skip)]
    pub masks: Vec<Mask>,
    pub mask_voxels: Vec<usize>,
    pub phenotype: Option<TumorPhenotype>,
    pub outcome: CaseOutcome,
}

impl CaseResult {
    pub fn kept_detections(&self) -> Vec<Detection> {
        self.kept.iter().map(Detection::from).collect()
    }
}

/// Brings a case to 1 mm and the clip range; no-op for phantom output.
pub fn preprocess(vol: &Volume, lobes: &LobeLabelMap) -> Result<(Volume, LobeLabelMap), GuideError> {
    if vol.geometry().is_isotropic(1.0, 1e-9) {
        return Ok((clip_intensity(vol, CLIP_LO_HU, CLIP_HI_HU)?, lobes.clone()));
    }
    let v = clip_intensity(&resample_to_isotropic(vol, 1.0)?, CLIP_LO_HU, CLIP_HI_HU)?;
    let l = LobeLabelMap::from_volume(&resample_to_isotropic(&lobes.to_volume(), 1.0)?)?;
    Ok((v, l))
}

/// Runs the pipeline with the reference detector configured by `cfg`.
pub fn run_pipeline(
    case: &CohortCase,
    mode: Mode,
    cfg: &DetectorConfig,
    backend: Option<&Backend>,
) -> Result<CaseResult, GuideError> {
    run_pipeline_with(case, mode, &ThresholdDetector::new(cfg.clone()), backend)
}

/// Detect, assign lobes, filter (guided only), segment kept candidates and
/// score against ground truth at IoU 0.5.
pub fn run_pipeline_with(
    case: &CohortCase,
    mode: Mode,
    detector: &dyn NoduleDetector,
    backend: Option<&Backend>,
) -> Result<CaseResult, GuideError> {
    let (vol, lobes) = preprocess(&case.volume, &case.lobes)?;
    let extraction = || -> Result<Option<TumorPhenotype>, GuideError> {
        match mode {
            Mode::Unguided => Ok(None),
            Mode::Guided => {
                let backend = backend.ok_or(GuideError::MissingBackend)?;
                Ok(Some(extract_phenotype(&case.report, backend)?))
            }
        }
    };
    let (cands, phenotype) = rayon::join(|| detector.detect(&vol), extraction);
    let cands = cands?;
    let phenotype = phenotype?;

    let assigns = assign_lobes(&cands, &lobes)?;
    let filtered = filter_candidates(&cands, &assigns, phenotype.as_ref())?;
    let masks = filtered.kept.iter().map(|c| detector.segment(&vol, c)).collect::<Result<Vec<_>, _>>()?;
    let kept_dets: Vec<Detection> = filtered.kept.iter().map(Detection::from).collect();
    let outcome = case_outcome(&kept_dets, &case.gt_bboxes(), MATCH_IOU);
    let removed = match mode {
        Mode::Guided => filtered.removed_by_phenotype.len(),
        Mode::Unguided => filtered.discarded_no_lobe.len(),
    };
    Ok(CaseResult {
        case_id: case.case_id(),
        mode,
        detected: cands.len(),
        removed,
        discarded_no_lobe: filtered.discarded_no_lobe.len(),
        mask_voxels: masks.iter().map(Mask::count).collect(),
        masks,
        kept: filtered.kept,
        kept_lobes: filtered.kept_lobes,
        phenotype,
        outcome,
    })
}

/// Alternative guidance path: blank every voxel outside the phenotype
/// lobes, detect again, and keep lobe-assigned candidates.
pub fn masked_redetection(
    case: &CohortCase,
    phenotype: &TumorPhenotype,
    detector: &dyn NoduleDetector,
) -> Result<Vec<Candidate>, GuideError> {
    if phenotype.lobes.is_empty() {
        return Err(GuideError::EmptyPhenotype);
    }
    let (vol, lobes) = preprocess(&case.volume, &case.lobes)?;
    let masked = apply_lobe_mask(&vol, &lobes, &phenotype.lobes, AIR_HU)?;
    let cands = detector.detect(&masked)?;
    let assigns = assign_lobes(&cands, &lobes)?;
    Ok(filter_candidates(&cands, &assigns, Some(phenotype))?.kept)
}

/// True when every box in `a` has an IoU ≥ `thr` partner in `b` and vice
/// versa, with `a.len() == b.len()`.
pub fn same_kept_set(a: &[Candidate], b: &[Candidate], thr: f64) -> bool {
    let covered = |x: &[Candidate], y: &[Candidate]| x.iter().all(|c| y.iter().any(|d| iou3d(&c.bbox, &d.bbox) >= thr));
    a.len() == b.len() && covered(a, b) && covered(b, a)
}

/// Lobes present in a kept set.
pub fn kept_lobe_set(result: &CaseResult) -> BTreeSet<LobeId> {
    result.kept_lobes.iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxelcore::{BBox3, Geometry};

    fn cand(min: [i64; 3], max: [i64; 3]) -> Candidate {
        let bbox = BBox3::new(min, max).unwrap();
        Candidate { bbox, score: 0.9, centroid: bbox.center() }
    }

    fn two_lobe_map() -> LobeLabelMap {
        let g = Geometry::isotropic([10, 10, 10]).unwrap();
        let data = (0..g.len())
            .map(|i| {
                let [_, _, x] = g.coords(i);
                match x {
                    0..=1 => 0,
                    2..=5 => LobeId::Lul.label(),
                    _ => LobeId::Lll.label(),
                }
            })
            .collect();
        LobeLabelMap::new(g, data).unwrap()
    }

    #[test]
    fn containment_none_and_straddle() {
        let lobes = two_lobe_map();
        let a = assign_lobe(0, &cand([0, 0, 2], [2, 2, 5]), &lobes).unwrap();
        assert_eq!((a.lobe, a.overlap_fraction), (Some(LobeId::Lul), 1.0));
        let none = assign_lobe(1, &cand([0, 0, 0], [3, 3, 2]), &lobes).unwrap();
        assert_eq!((none.lobe, none.overlap_fraction), (None, 0.0));
        // 3 LUL columns (x 3..6) vs 2 LLL columns (x 6..8)
        let s = assign_lobe(2, &cand([0, 0, 3], [1, 1, 8]), &lobes).unwrap();
        assert_eq!(s.lobe, Some(LobeId::Lul));
        assert!((s.overlap_fraction - 0.6).abs() < 1e-12);
        // 2 vs 2 tie goes to the smaller id
        let t = assign_lobe(3, &cand([0, 0, 4], [1, 1, 8]), &lobes).unwrap();
        assert_eq!(t.lobe, Some(LobeId::Lul));
        assert!(matches!(assign_lobe(4, &cand([0, 0, 8], [1, 1, 12]), &lobes), Err(GuideError::BoxOutside(_))));
    }

    fn assigned(lobes: &[Option<LobeId>]) -> (Vec<Candidate>, Vec<LobeAssignment>) {
        let cands: Vec<Candidate> =
            (0..lobes.len()).map(|i| cand([i as i64 * 3, 0, 0], [i as i64 * 3 + 2, 2, 2])).collect();
        let assigns = lobes
            .iter()
            .enumerate()
            .map(|(i, &lobe)| LobeAssignment { candidate: i, lobe, overlap_fraction: 1.0 })
            .collect();
        (cands, assigns)
    }

    #[test]
    fn filter_case4_layout() {
        use LobeId::*;
        let (cands, assigns) = assigned(&[Some(Rll), Some(Rll), Some(Rll), Some(Lll), Some(Lll), Some(Lul), Some(Lul)]);
        let p = TumorPhenotype { lobes: [Lul].into_iter().collect(), ..Default::default() };
        let r = filter_candidates(&cands, &assigns, Some(&p)).unwrap();
        assert_eq!((r.kept.len(), r.removed_by_phenotype.len()), (2, 5));
        let u = filter_candidates(&cands, &assigns, None).unwrap();
        assert_eq!((u.kept.len(), u.removed_by_phenotype.len()), (7, 0));
    }

    #[test]
    fn filter_no_lobe_and_errors() {
        let (cands, assigns) = assigned(&[None]);
        let p = TumorPhenotype { lobes: [LobeId::Lul].into_iter().collect(), ..Default::default() };
        let r = filter_candidates(&cands, &assigns, Some(&p)).unwrap();
        assert_eq!((r.kept.len(), r.discarded_no_lobe.len()), (0, 1));
        assert!(matches!(
            filter_candidates(&cands, &assigns, Some(&TumorPhenotype::default())),
            Err(GuideError::EmptyPhenotype)
        ));
        assert!(matches!(filter_candidates(&cands, &[], None), Err(GuideError::Misaligned { .. })));
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("Guided".parse::<Mode>().unwrap(), Mode::Guided);
        assert_eq!(Mode::Unguided.to_string(), "unguided");
        assert!("half".parse::<Mode>().is_err());
    }
}
