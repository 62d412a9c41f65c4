//! Synthetic thoracic phantoms with paired report text.
//!
//! A case is a 1 mm volume of air, soft tissue and two lungs split into
//! five lobes, with spherical nodules of three kinds: true tumors,
//! distractors (detectable, but not in the report as malignant) and
//! suppressed tumors (too faint for the default detector). Everything is a
//! pure function of the cohort spec and seed.

pub mod anatomy;
mod report;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::TumorPhenotype;
use crate::lobe::LobeId;
use crate::voxelcore::{
    mask_to_bboxes, read_volume, write_volume, BBox3, Connectivity, LobeLabelMap, Mask, Volume, VolumeError,
    CLIP_HI_HU, CLIP_LO_HU,
};

pub use anatomy::Fissures;
pub use report::generate_report;

/// Contrast used when a detectable nodule spec leaves it unset.
pub const DEFAULT_CONTRAST_HU: f64 = 600.0;
/// Contrast used when a suppressed tumor spec leaves it unset.
pub const SUPPRESSED_CONTRAST_HU: f64 = 80.0;

static TABLE3_JSON: &str = include_str!("../../fixtures/table3.json");

#[derive(Debug, Error)]
pub enum PhantomError {
    #[error("invalid case spec: {0}")]
    InvalidSpec(String),
    #[error("case {case_id}: nodule {index} center falls outside {lobe}")]
    CenterOutsideLobe { case_id: u32, index: usize, lobe: LobeId },
    #[error("case {case_id}: nodule {index} rasterizes to {components} components")]
    BadNoduleShape { case_id: u32, index: usize, components: usize },
    #[error("duplicate case id {0}")]
    DuplicateCaseId(u32),
    #[error("case file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoduleKind {
    TrueTumor,
    Distractor,
    SuppressedTumor,
}

impl NoduleKind {
    /// True and suppressed tumors are ground truth; distractors are not.
    pub fn is_tumor(self) -> bool {
        !matches!(self, NoduleKind::Distractor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoduleSpec {
    pub lobe: LobeId,
    /// Position inside the lobe's bounding box, each axis in `[0, 1]`.
    pub center_frac: [f64; 3],
    pub radius_mm: f64,
    /// HU added to the lung background.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contrast_hu: Option<f64>,
    pub kind: NoduleKind,
}

impl NoduleSpec {
    pub fn contrast(&self) -> f64 {
        self.contrast_hu.unwrap_or(match self.kind {
            NoduleKind::SuppressedTumor => SUPPRESSED_CONTRAST_HU,
            _ => DEFAULT_CONTRAST_HU,
        })
    }

    fn validate(&self) -> Result<(), String> {
        if !self.center_frac.iter().all(|f| (0.0..=1.0).contains(f)) {
            return Err(format!("center_frac {:?} outside [0, 1]", self.center_frac));
        }
        if !(self.radius_mm > 0.0 && self.radius_mm <= 20.0) {
            return Err(format!("radius {} mm outside (0, 20]", self.radius_mm));
        }
        if self.kind != NoduleKind::SuppressedTumor && self.radius_mm < 2.0 {
            return Err("detectable nodules need radius ≥ 2 mm".into());
        }
        let c = self.contrast();
        if !c.is_finite() || c < 0.0 {
            return Err(format!("contrast {c} must be finite and non-negative"));
        }
        if self.kind == NoduleKind::SuppressedTumor && c >= 500.0 {
            return Err(format!("suppressed tumor contrast {c} is visible to the default threshold"));
        }
        Ok(())
    }
}

fn default_noise() -> f64 {
    20.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub case_id: u32,
    pub nodules: Vec<NoduleSpec>,
    #[serde(default = "default_noise")]
    pub noise_sigma: f64,
    /// Uniform jitter applied to each fissure plane, mm.
    #[serde(default)]
    pub lobe_jitter_mm: f64,
    /// Malignant lymph stations to report, e.g. `4R`.
    #[serde(default)]
    pub lymph_stations: BTreeSet<String>,
}

impl CaseSpec {
    pub fn validate(&self) -> Result<(), PhantomError> {
        let bad = |m: String| Err(PhantomError::InvalidSpec(format!("case {}: {m}", self.case_id)));
        if !self.nodules.iter().any(|n| n.kind.is_tumor()) {
            return bad("needs at least one true or suppressed tumor".into());
        }
        for (i, n) in self.nodules.iter().enumerate() {
            if let Err(m) = n.validate() {
                return bad(format!("nodule {i}: {m}"));
            }
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be finite and non-negative".into());
        }
        if !(0.0..=8.0).contains(&self.lobe_jitter_mm) {
            return bad("lobe_jitter_mm outside [0, 8]".into());
        }
        for s in &self.lymph_stations {
            if crate::extract::station_mentions(&format!("station {s}")).into_iter().collect::<Vec<_>>() != [s.clone()]
            {
                return bad(format!("station {s:?} is not a canonical code"));
            }
        }
        Ok(())
    }
}

/// A list of case specs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub name: String,
    pub cases: Vec<CaseSpec>,
}

impl CohortSpec {
    pub fn from_json(text: &str) -> Result<Self, PhantomError> {
        let spec: CohortSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PhantomError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// The bundled ten-case fixture.
    pub fn table3() -> Self {
        Self::from_json(TABLE3_JSON).expect("bundled fixture is valid")
    }

    pub fn validate(&self) -> Result<(), PhantomError> {
        let mut seen = BTreeSet::new();
        for c in &self.cases {
            c.validate()?;
            if !seen.insert(c.case_id) {
                return Err(PhantomError::DuplicateCaseId(c.case_id));
            }
        }
        Ok(())
    }

    /// `n` cases of well-separated, detectable nodules fully inside their
    /// lobes. Distractors may share a lobe with a tumor.
    pub fn random(n: usize, seed: u64) -> Self {
        let lobes = anatomy::rasterize_lobes(&Fissures::nominal()).expect("nominal lobes");
        let boxes = anatomy::lobe_boxes(&lobes);
        let cases = (0..n)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i as u64));
                random_case(i as u32 + 1, &lobes, &boxes, &mut rng)
            })
            .collect();
        CohortSpec { name: format!("random-{n}-{seed}"), cases }
    }
}

const STATIONS: [&str; 8] = ["2R", "4R", "4L", "5", "7", "10R", "10L", "11L"];

fn random_case(case_id: u32, lobes: &LobeLabelMap, boxes: &[Option<BBox3>; 5], rng: &mut ChaCha8Rng) -> CaseSpec {
    let n_tumors = rng.gen_range(1..=2);
    let n_distractors = rng.gen_range(0..=3);
    let mut placed: Vec<([f64; 3], f64)> = Vec::new();
    let mut nodules = Vec::new();
    for k in 0..n_tumors + n_distractors {
        let kind = if k < n_tumors { NoduleKind::TrueTumor } else { NoduleKind::Distractor };
        let radius = if kind.is_tumor() { rng.gen_range(4..=7) } else { rng.gen_range(3..=5) } as f64;
        for _ in 0..2000 {
            let lobe = LobeId::ALL[rng.gen_range(0..5)];
            let b = boxes[usize::from(lobe.label() - 1)].expect("nominal lobes are non-empty");
            let c: [f64; 3] = std::array::from_fn(|a| rng.gen_range(b.min[a]..b.max[a]) as f64);
            if placed.iter().any(|(p, r)| dist(*p, c) <= r + radius + 6.0) || !fits(lobes, lobe, c, radius) {
                continue;
            }
            let center_frac = std::array::from_fn(|a| (c[a] - b.min[a] as f64) / ((b.max[a] - 1 - b.min[a]) as f64));
            placed.push((c, radius));
            nodules.push(NoduleSpec { lobe, center_frac, radius_mm: radius, contrast_hu: None, kind });
            break;
        }
    }
    let n_stations = rng.gen_range(0..=2);
    let lymph_stations = (0..n_stations).map(|_| STATIONS[rng.gen_range(0..STATIONS.len())].to_string()).collect();
    CaseSpec { case_id, nodules, noise_sigma: 20.0, lobe_jitter_mm: 0.0, lymph_stations }
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt()
}

/// Sphere plus a 1 mm rim stays in `lobe`, and a 3 mm rim stays in lung.
fn fits(lobes: &LobeLabelMap, lobe: LobeId, c: [f64; 3], r: f64) -> bool {
    let reach = (r + 3.0).ceil() as i64;
    let g = lobes.geometry();
    for dz in -reach..=reach {
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let p = [c[0] as i64 + dz, c[1] as i64 + dy, c[2] as i64 + dx];
                let d = ((dz * dz + dy * dy + dx * dx) as f64).sqrt();
                if d > r + 3.0 {
                    continue;
                }
                if !g.contains(p) {
                    return false;
                }
                let here = lobes.lobe_at(p[0] as usize, p[1] as usize, p[2] as usize);
                if here.is_none() || (d <= r + 1.0 && here != Some(lobe)) {
                    return false;
                }
            }
        }
    }
    true
}

/// A ground-truth tumor box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GtNodule {
    #[serde(rename = "box")]
    pub bbox: BBox3,
    pub lobe: LobeId,
    pub kind: NoduleKind,
}

/// One synthetic patient.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortCase {
    pub spec: CaseSpec,
    pub seed: u64,
    pub volume: Volume,
    pub lobes: LobeLabelMap,
    /// One mask per true or suppressed tumor, aligned with `gt_boxes`.
    pub gt_masks: Vec<Mask>,
    pub gt_boxes: Vec<GtNodule>,
    pub phenotype_gt: TumorPhenotype,
    pub report: String,
}

impl CohortCase {
    pub fn case_id(&self) -> u32 {
        self.spec.case_id
    }

    pub fn gt_bboxes(&self) -> Vec<BBox3> {
        self.gt_boxes.iter().map(|g| g.bbox).collect()
    }

    /// Writes `volume.exnv`, `lobes.exnv`, `gt_mask_<i>.exnv`,
    /// `report.txt` and `case.json` into `dir`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<(), PhantomError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        write_volume(&self.volume, dir.join("volume.exnv"))?;
        write_volume(&self.lobes.to_volume(), dir.join("lobes.exnv"))?;
        for (i, m) in self.gt_masks.iter().enumerate() {
            write_volume(&m.to_volume(), dir.join(format!("gt_mask_{i}.exnv")))?;
        }
        fs::write(dir.join("report.txt"), &self.report)?;
        let meta = CaseMeta {
            spec: self.spec.clone(),
            seed: self.seed,
            gt_boxes: self.gt_boxes.clone(),
            phenotype_gt: self.phenotype_gt.clone(),
        };
        fs::write(dir.join("case.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
        Ok(())
    }

    pub fn read_dir(dir: impl AsRef<Path>) -> Result<Self, PhantomError> {
        let dir = dir.as_ref();
        let meta: CaseMeta = serde_json::from_str(&fs::read_to_string(dir.join("case.json"))?)?;
        let volume = read_volume(dir.join("volume.exnv"))?;
        let lobes = LobeLabelMap::from_volume(&read_volume(dir.join("lobes.exnv"))?)?;
        let gt_masks = (0..meta.gt_boxes.len())
            .map(|i| Mask::from_volume(&read_volume(dir.join(format!("gt_mask_{i}.exnv")))?))
            .collect::<Result<Vec<_>, VolumeError>>()?;
        let report = fs::read_to_string(dir.join("report.txt"))?;
        Ok(CohortCase {
            spec: meta.spec,
            seed: meta.seed,
            volume,
            lobes,
            gt_masks,
            gt_boxes: meta.gt_boxes,
            phenotype_gt: meta.phenotype_gt,
            report,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct CaseMeta {
    spec: CaseSpec,
    seed: u64,
    gt_boxes: Vec<GtNodule>,
    phenotype_gt: TumorPhenotype,
}

/// Style seed for a case's report, derived from its generation seed.
pub fn report_seed(seed: u64) -> u64 {
    seed ^ 0x5EED_0F_AB1E
}

pub fn generate_case(spec: &CaseSpec, seed: u64) -> Result<CohortCase, PhantomError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fissures = Fissures::jittered(&mut rng, spec.lobe_jitter_mm);
    let lobes = anatomy::rasterize_lobes(&fissures)?;
    let boxes = anatomy::lobe_boxes(&lobes);
    let g = *lobes.geometry();

    let mut hu: Vec<f32> = (0..g.len())
        .map(|i| {
            let [_, y, x] = g.coords(i);
            if lobes.data()[i] != 0 {
                anatomy::LUNG_HU
            } else if anatomy::in_body(y as f64, x as f64) {
                anatomy::TISSUE_HU
            } else {
                anatomy::AIR_HU
            }
        })
        .collect();

    let mut gt_masks = Vec::new();
    let mut gt_boxes = Vec::new();
    for (index, n) in spec.nodules.iter().enumerate() {
        let outside = || PhantomError::CenterOutsideLobe { case_id: spec.case_id, index, lobe: n.lobe };
        let b = boxes[usize::from(n.lobe.label() - 1)].ok_or_else(outside)?;
        let c: [f64; 3] =
            std::array::from_fn(|a| b.min[a] as f64 + n.center_frac[a] * (b.max[a] - 1 - b.min[a]) as f64);
        let rc = c.map(|v| v.round() as i64);
        if !g.contains(rc) || lobes.lobe_at(rc[0] as usize, rc[1] as usize, rc[2] as usize) != Some(n.lobe) {
            return Err(outside());
        }
        let mut mask = Mask::empty(g);
        let value = (f64::from(anatomy::LUNG_HU) + n.contrast()) as f32;
        let reach = n.radius_mm.ceil() as i64 + 1;
        for z in rc[0] - reach..=rc[0] + reach {
            for y in rc[1] - reach..=rc[1] + reach {
                for x in rc[2] - reach..=rc[2] + reach {
                    if !g.contains([z, y, x]) {
                        continue;
                    }
                    let d = dist(c, [z as f64, y as f64, x as f64]);
                    let (z, y, x) = (z as usize, y as usize, x as usize);
                    if d <= n.radius_mm && lobes.lobe_at(z, y, x) == Some(n.lobe) {
                        hu[g.index(z, y, x)] = value;
                        mask.set(z, y, x, true);
                    }
                }
            }
        }
        if n.kind.is_tumor() {
            let comps = mask_to_bboxes(&mask, Connectivity::TwentySix);
            if comps.len() != 1 {
                return Err(PhantomError::BadNoduleShape { case_id: spec.case_id, index, components: comps.len() });
            }
            gt_boxes.push(GtNodule { bbox: comps[0], lobe: n.lobe, kind: n.kind });
            gt_masks.push(mask);
        }
    }

    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0f32, spec.noise_sigma as f32).expect("validated sigma");
        for v in hu.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    for v in hu.iter_mut() {
        *v = v.clamp(CLIP_LO_HU, CLIP_HI_HU);
    }

    let phenotype_gt = TumorPhenotype {
        lobes: gt_boxes.iter().map(|g| g.lobe).collect(),
        lymph_stations: spec.lymph_stations.clone(),
    };
    let mut case = CohortCase {
        spec: spec.clone(),
        seed,
        volume: Volume::from_intensities(g, hu)?,
        lobes,
        gt_masks,
        gt_boxes,
        phenotype_gt,
        report: String::new(),
    };
    case.report = generate_report(&case, report_seed(seed));
    Ok(case)
}

/// Generates every case in parallel; case `i` (0-based) uses `seed ^ i`.
pub fn generate_cohort(spec: &CohortSpec, seed: u64) -> Result<Vec<CohortCase>, PhantomError> {
    spec.validate()?;
    spec.cases.par_iter().enumerate().map(|(i, c)| generate_case(c, seed ^ i as u64)).collect()
}
