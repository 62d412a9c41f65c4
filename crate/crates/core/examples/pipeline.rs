//! Runs one case through both pipeline modes and prints what guidance
//! removed.

use std::env;

use noduleguide::detect::DetectorConfig;
use noduleguide::extract::Backend;
use noduleguide::guide::{run_pipeline, Mode};
use noduleguide::phantom::{generate_case, CohortSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let id: u32 = env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(7);
    let spec = CohortSpec::table3();
    let (index, case_spec) =
        spec.cases.iter().enumerate().find(|(_, c)| c.case_id == id).ok_or("no such case")?;
    let case = generate_case(case_spec, 42 ^ index as u64)?;
    let cfg = DetectorConfig::default();
    for mode in [Mode::Unguided, Mode::Guided] {
        let r = run_pipeline(&case, mode, &cfg, Some(&Backend::RuleBased))?;
        println!(
            "{mode}: detected {} removed {} kept {:?} verdict {:?}",
            r.detected, r.removed, r.kept_lobes, r.outcome.verdict
        );
        if let Some(p) = &r.phenotype {
            println!("  phenotype {p}");
        }
        println!("  mask voxels {:?}", r.mask_voxels);
    }
    Ok(())
}
