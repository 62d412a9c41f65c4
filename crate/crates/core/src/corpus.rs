//! The bundled synthetic report corpus and its canned chat answers.
//!
//! Thirty reports: the ten Table-3 cases plus twenty random cases, all at
//! seed 42. `fixtures/reports.json` and `fixtures/mock_responses.json` are
//! checked-in snapshots of [`build_corpus`] and [`mock_fixtures_for`]; the
//! `bundle_fixtures` example regenerates them.

use serde::{Deserialize, Serialize};

use crate::extract::{MockFixtures, TumorPhenotype};
use crate::phantom::{generate_cohort, CohortSpec, PhantomError};

pub const CORPUS_SEED: u64 = 42;
pub const RANDOM_CASES: usize = 20;

static REPORTS_JSON: &str = include_str!("../fixtures/reports.json");
static MOCK_JSON: &str = include_str!("../fixtures/mock_responses.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub id: String,
    pub report: String,
    pub phenotype: TumorPhenotype,
}

/// Regenerates the corpus from the phantom generator.
pub fn build_corpus() -> Result<Vec<CorpusReport>, PhantomError> {
    let mut out = Vec::new();
    for (prefix, spec) in [
        ("table3", CohortSpec::table3()),
        ("random", CohortSpec::random(RANDOM_CASES, CORPUS_SEED)),
    ] {
        for case in generate_cohort(&spec, CORPUS_SEED)? {
            out.push(CorpusReport {
                id: format!("{prefix}-{:02}", case.case_id()),
                report: case.report,
                phenotype: case.phenotype_gt,
            });
        }
    }
    Ok(out)
}

/// Canned answers rendered from each report's ground-truth phenotype.
pub fn mock_fixtures_for(corpus: &[CorpusReport]) -> MockFixtures {
    let mut f = MockFixtures::default();
    for r in corpus {
        f.insert(&r.report, MockFixtures::entry_for(&r.phenotype));
    }
    f
}

pub fn bundled_reports() -> Vec<CorpusReport> {
    serde_json::from_str(REPORTS_JSON).expect("bundled reports parse")
}

pub fn bundled_mock_fixtures() -> MockFixtures {
    MockFixtures::from_json(MOCK_JSON).expect("bundled mock fixtures parse")
}

pub fn corpus_json(corpus: &[CorpusReport]) -> String {
    serde_json::to_string_pretty(corpus).expect("corpus serializes") + "\n"
}
