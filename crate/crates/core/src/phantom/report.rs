//! Templated report text for a generated case.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CohortCase, NoduleKind};
use crate::lobe::LobeId;

const TUMOR: &[&str] = &[
    "Biopsy-proven carcinoma involving the {lobe}.",
    "Current malignancy in the {lobe}.",
    "Determinate tumor identified in the {lobe}.",
    "Pathology confirms carcinoma of the {lobe}.",
    "There is a {size} mm spiculated tumor in the {lobe}.",
];

const INDETERMINATE: &[&str] = &[
    "Indeterminate nodule in the {lobe}.",
    "A {size} mm indeterminate nodule is seen in the {lobe}; follow-up imaging is suggested.",
    "Small indeterminate opacity in the {lobe}, likely benign.",
];

const HISTORY: &[&str] = &[
    "History of previously treated {lobe} tumor.",
    "Prior carcinoma of the {lobe} treated in 2019 without recurrence.",
];

const FILLER: &[&str] = &[
    "No pleural effusion.",
    "Heart size is normal.",
    "Airways are patent.",
    "Osseous structures are unremarkable.",
];

fn lobe_name(lobe: LobeId, rng: &mut ChaCha8Rng) -> String {
    if rng.gen_bool(0.5) {
        lobe.full_name().to_string()
    } else {
        lobe.abbreviation().to_string()
    }
}

fn fill(template: &str, lobe: &str, size: u32) -> String {
    template.replace("{lobe}", lobe).replace("{size}", &size.to_string())
}

fn join_list(items: &[&str]) -> String {
    match items {
        [] => String::new(),
        [one] => one.to_string(),
        [init @ .., last] => format!("{} and {}", init.join(", "), last),
    }
}

fn lymph_sentence(stations: &[&str], rng: &mut ChaCha8Rng) -> String {
    if let [one] = stations {
        if rng.gen_bool(0.5) {
            return format!("Station {one} node is malignant.");
        }
    }
    let list = join_list(stations);
    let plural = if stations.len() > 1 { "stations" } else { "station" };
    if rng.gen_bool(0.5) {
        format!("Pathology confirms malignant lymph node involvement at {plural} {list}.")
    } else {
        format!("Malignant adenopathy at {plural} {list}.")
    }
}

/// Renders a report whose determinate sentences name exactly the case's
/// phenotype lobes. Indeterminate and history sentences only name other
/// lobes; sentence order and wording follow `style_seed`.
pub fn generate_report(case: &CohortCase, style_seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(style_seed);
    let mut out: Vec<String> = Vec::new();
    let tumor_lobes = &case.phenotype_gt.lobes;

    for n in case.spec.nodules.iter().filter(|n| n.kind.is_tumor()) {
        let t = TUMOR.choose(&mut rng).expect("non-empty");
        let size = (2.0 * n.radius_mm).round() as u32;
        out.push(fill(t, &lobe_name(n.lobe, &mut rng), size));
    }

    let distractor_lobes: BTreeSet<LobeId> = case
        .spec
        .nodules
        .iter()
        .filter(|n| n.kind == NoduleKind::Distractor && !tumor_lobes.contains(&n.lobe))
        .map(|n| n.lobe)
        .collect();
    for lobe in distractor_lobes {
        let t = INDETERMINATE.choose(&mut rng).expect("non-empty");
        let size = rng.gen_range(4..=9);
        out.push(fill(t, &lobe_name(lobe, &mut rng), size));
    }

    let others: Vec<LobeId> = LobeId::ALL.into_iter().filter(|l| !tumor_lobes.contains(l)).collect();
    if !others.is_empty() && rng.gen_bool(0.4) {
        let lobe = *others.choose(&mut rng).expect("non-empty");
        let t = HISTORY.choose(&mut rng).expect("non-empty");
        out.push(fill(t, &lobe_name(lobe, &mut rng), 0));
    }

    let stations: Vec<&str> = case.phenotype_gt.lymph_stations.iter().map(String::as_str).collect();
    if !stations.is_empty() {
        out.push(lymph_sentence(&stations, &mut rng));
    }

    let n_filler = rng.gen_range(1..=2);
    out.extend(FILLER.choose_multiple(&mut rng, n_filler).map(|s| s.to_string()));
    out.shuffle(&mut rng);

    let mut text = format!("CT CHEST, CASE {}\nFINDINGS:\n", case.spec.case_id);
    text.push_str(&out.join(" "));
    text.push('\n');
    text
}
