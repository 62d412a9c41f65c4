//! Generates one case from the bundled ten-case cohort and prints its
//! report, nodules and lobe volumes.
//!
//! `cargo run --example phantom_gen -- [case_id] [out_dir]`

use std::env;

use noduleguide::lobe::LobeId;
use noduleguide::phantom::{generate_case, CohortSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = env::args().skip(1);
    let id: u32 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(4);
    let spec = CohortSpec::table3();
    let (index, case_spec) =
        spec.cases.iter().enumerate().find(|(_, c)| c.case_id == id).ok_or("no such case")?;
    let case = generate_case(case_spec, 42 ^ index as u64)?;

    println!("{}", case.report);
    for (n, gt) in case_spec.nodules.iter().zip(case.gt_masks.iter()) {
        println!("{:?} in {} r={} mm: {} voxels", n.kind, n.lobe, n.radius_mm, gt.count());
    }
    for lobe in LobeId::ALL {
        println!("{lobe}: {} voxels", case.lobes.lobe_mask(lobe).count());
    }
    println!("ground truth phenotype: {}", case.phenotype_gt);
    if let Some(dir) = args.next() {
        case.write_dir(&dir)?;
        println!("wrote {dir}");
    }
    Ok(())
}
