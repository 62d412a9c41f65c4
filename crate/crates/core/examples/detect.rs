//! Runs the reference detector on a generated case and scores the raw
//! candidates against ground truth.

use noduleguide::detect::{detect_candidates, DetectorConfig};
use noduleguide::guide::{assign_lobes, preprocess};
use noduleguide::metrics::{match_detections, Detection};
use noduleguide::phantom::{generate_cohort, CohortSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = DetectorConfig::default();
    for case in generate_cohort(&CohortSpec::random(3, 1), 1)? {
        let (vol, lobes) = preprocess(&case.volume, &case.lobes)?;
        let cands = detect_candidates(&vol, &cfg)?;
        let assigns = assign_lobes(&cands, &lobes)?;
        println!("case {}: {} candidates", case.case_id(), cands.len());
        for (c, a) in cands.iter().zip(&assigns) {
            let lobe = a.lobe.map_or("-".to_string(), |l| l.to_string());
            println!("  {:?}..{:?} score {:.3} lobe {lobe}", c.bbox.min, c.bbox.max, c.score);
        }
        let dets: Vec<Detection> = cands.iter().map(Detection::from).collect();
        let m = match_detections(&dets, &case.gt_bboxes(), 0.5);
        println!("  tp {} fp {} fn {}", m.tp, m.fp, m.fn_);
    }
    Ok(())
}
