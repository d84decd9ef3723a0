//! Self-contained demo inputs: phantom scans, a report, a scripted LLM
//! fixture and a config wired to the offline providers.

use std::path::{Path, PathBuf};

use radvid_core::phantom::chest;
use radvid_core::report::{OrganVocabulary, PromptSet, ReportError, Script};
use radvid_core::volume::{save_volume, VolumeError};
use radvid_core::Grid;
use thiserror::Error;

pub const DEMO_DIMS: [usize; 3] = [64, 64, 40];
pub const DEMO_SPACING: [f64; 3] = [1.0, 1.0, 3.0];

pub const CONFIG_FILE: &str = "radvid.toml";
pub const QUERY_FILE: &str = "query.nii.gz";
pub const NORMAL_FILE: &str = "normal.nii.gz";
pub const REPORT_FILE: &str = "report.txt";
pub const FIXTURE_FILE: &str = "llm_fixture.json";

/// Bronchial findings in both lower lobes, with normal heart and vessels.
pub const LOWER_LOBES_REPORT: &str = include_str!("../data/lower_lobes_report.txt");

const PAIR_REPORT: &str = "The heart is mildly enlarged. A 9 mm solid nodule is seen in the right lung.";
const CLEAR_REPORT: &str = "The lungs are clear. Heart size is normal. No acute abnormality.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scenario {
    /// One finding spanning both lower lobes.
    #[default]
    LowerLobes,
    /// Two findings whose ranking reverses report order.
    Pair,
    /// No positive findings.
    Clear,
}

impl std::str::FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "lower-lobes" => Ok(Scenario::LowerLobes),
            "pair" => Ok(Scenario::Pair),
            "clear" => Ok(Scenario::Clear),
            other => Err(format!(
                "unknown scenario {other:?}; expected lower-lobes, pair or clear"
            )),
        }
    }
}

#[derive(Debug, Error)]
pub enum DemoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Report(#[from] ReportError),
}

#[derive(Debug, Clone)]
pub struct DemoFiles {
    pub dir: PathBuf,
    pub config: PathBuf,
    pub query: PathBuf,
    pub normal: PathBuf,
    pub report: PathBuf,
    pub fixture: PathBuf,
}

fn triple(what: &str, looks: &str, normal: &str) -> String {
    serde_json::json!({
        "abnormality_explanation": what,
        "input_scan_appearance": looks,
        "normal_scan_appearance": normal,
    })
    .to_string()
}

fn lower_lobes_triple() -> String {
    triple(
        "The small airways at the bottom of both lungs look irritated, with thicker walls and tiny branching spots. This usually points to an infection or inflammation of the airways.",
        "On your scan, the lower parts of both lungs show small bright dots and lines that branch like the buds of a tree.",
        "In a healthy scan, the lower lungs look evenly dark, with thin airway walls and no clusters of small bright spots.",
    )
}

fn nodule_triple() -> String {
    triple(
        "There is a small round spot in your right lung, about the size of a pea. Most spots like this are harmless, but your doctor may want to check it again later.",
        "On your scan, the spot shows up as a small bright circle inside the dark lung.",
        "A healthy lung looks dark and even, with only thin branching vessels and no round spots.",
    )
}

fn heart_triple() -> String {
    triple(
        "Your heart is a little larger than usual. This can happen with high blood pressure or when the heart works harder than normal.",
        "On your scan, the heart takes up a bit more space in the middle of your chest.",
        "A healthy heart fills less than half the width of the chest on a scan like this.",
    )
}

/// Scripted LLM answers for `scenario`, as the fixture JSON.
pub fn fixture_json(scenario: Scenario) -> Result<String, ReportError> {
    let prompts = PromptSet::builtin();
    let vocab = OrganVocabulary::builtin();
    let s = Script::new(&prompts, &vocab);
    let mock = match scenario {
        Scenario::LowerLobes => {
            let phrase = LOWER_LOBES_REPORT.split_inclusive(". ").next().unwrap().trim();
            let phrases = serde_json::json!([{
                "phrase": phrase,
                "organs": ["left lung lower lobe", "right lung lower lobe"],
            }])
            .to_string();
            s.organs(LOWER_LOBES_REPORT, "left lung lower lobe,right lung lower lobe")?
                .phrases(LOWER_LOBES_REPORT, &phrases)?
                .explanation(phrase, &lower_lobes_triple())?
                .into_mock()
        }
        Scenario::Pair => {
            let heart = "The heart is mildly enlarged.";
            let nodule = "A 9 mm solid nodule is seen in the right lung.";
            let phrases = serde_json::json!([
                {"phrase": heart, "organs": ["heart"]},
                {"phrase": nodule, "organs": ["right lung"]},
            ])
            .to_string();
            s.organs(PAIR_REPORT, "heart,right lung")?
                .phrases(PAIR_REPORT, &phrases)?
                .explanation(heart, &heart_triple())?
                .explanation(nodule, &nodule_triple())?
                .ranking(&[heart, nodule], "[2, 1]")?
                .into_mock()
        }
        Scenario::Clear => s.organs(CLEAR_REPORT, "none")?.into_mock(),
    };
    Ok(mock.to_json())
}

pub fn report_text(scenario: Scenario) -> &'static str {
    match scenario {
        Scenario::LowerLobes => LOWER_LOBES_REPORT,
        Scenario::Pair => PAIR_REPORT,
        Scenario::Clear => CLEAR_REPORT,
    }
}

pub const DEMO_CONFIG: &str = r#"# Demo pipeline: phantom scans, scripted LLM answers, offline narration.

[paths]
query = "query.nii.gz"
normal = "normal.nii.gz"
report = "report.txt"
cache_dir = ".radvid-cache"
output = "out"

[providers]
llm = "mock"
segmentation = "phantom"
tts = "offline"

[llm]
fixture = "llm_fixture.json"
"#;

/// Write the demo inputs into `dir`.
pub fn write_demo(dir: &Path, scenario: Scenario) -> Result<DemoFiles, DemoError> {
    std::fs::create_dir_all(dir)?;
    let grid = Grid::new(DEMO_DIMS, DEMO_SPACING, [0.0; 3]);
    let shifted = Grid::new(DEMO_DIMS, DEMO_SPACING, [4.0, -3.0, 6.0]);
    let files = DemoFiles {
        dir: dir.to_path_buf(),
        config: dir.join(CONFIG_FILE),
        query: dir.join(QUERY_FILE),
        normal: dir.join(NORMAL_FILE),
        report: dir.join(REPORT_FILE),
        fixture: dir.join(FIXTURE_FILE),
    };
    save_volume(&chest(&grid, "query", true), &files.query)?;
    save_volume(&chest(&shifted, "normal", false), &files.normal)?;
    std::fs::write(&files.report, format!("{}\n", report_text(scenario)))?;
    std::fs::write(&files.fixture, fixture_json(scenario)?)?;
    std::fs::write(&files.config, DEMO_CONFIG)?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use radvid_core::report::MockLlm;

    #[test]
    fn fixtures_have_one_answer_per_prompt() {
        let n = |s| MockLlm::from_json(&fixture_json(s).unwrap()).unwrap().len();
        assert_eq!(n(Scenario::LowerLobes), 3);
        assert_eq!(n(Scenario::Pair), 5);
        assert_eq!(n(Scenario::Clear), 1);
    }

    #[test]
    fn demo_files_exist() {
        let dir = tempfile::tempdir().unwrap();
        let f = write_demo(dir.path(), Scenario::Clear).unwrap();
        for p in [&f.config, &f.query, &f.normal, &f.report, &f.fixture] {
            assert!(p.is_file(), "{}", p.display());
        }
        let cfg = crate::config::PipelineConfig::load(&f.config).unwrap();
        assert_eq!(cfg.paths.query.as_deref(), Some(f.query.as_path()));
        cfg.validate().unwrap();
    }
}
