//! From report text to ranked findings with lay-language explanations.
//!
//! The stage runs four provider calls per report: organ matching (which also
//! decides whether anything is positive at all), phrase extraction, one
//! explanation per phrase, and a significance ranking.

mod llm;
pub mod parse;
pub mod prompts;
mod script;
mod vocab;

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::provider::ProviderError;
pub use llm::{prompt_hash, HttpLlm, LlmProvider, MockLlm};
use parse::{parse_json_lenient, parse_organ_answer, OrganAnswer};
pub use prompts::{PromptSet, PromptTemplate};
pub use script::Script;
pub use vocab::{normalize_label, OrganVocabulary, VOCABULARY_SIZE};

/// Default per-field character budget of an explanation.
pub const DEFAULT_CHAR_BUDGET: usize = 800;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("report text is empty")]
    EmptyReport,
    #[error("finding phrase is empty")]
    EmptyPhrase,
    #[error("provider returned an organ outside the vocabulary: {0:?}")]
    UnknownOrganLabel(String),
    #[error("provider failure: {0}")]
    ProviderFailure(#[from] ProviderError),
    #[error("malformed provider output: {0}")]
    MalformedProviderOutput(String),
    #[error("invalid finding: {0}")]
    InvalidFinding(String),
    #[error("prompt template error: {0}")]
    Template(String),
    #[error("organ vocabulary error: {0}")]
    Vocabulary(String),
}

/// The three lay-language messages for one finding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplanationTriple {
    /// What the finding is and what it means clinically.
    pub abnormality_explanation: String,
    /// How it looks on this patient's scan.
    pub input_scan_appearance: String,
    /// How a scan without the abnormality looks.
    pub normal_scan_appearance: String,
}

impl ExplanationTriple {
    pub const KEYS: [&'static str; 3] = [
        "abnormality_explanation",
        "input_scan_appearance",
        "normal_scan_appearance",
    ];

    pub fn fields(&self) -> [&str; 3] {
        [
            &self.abnormality_explanation,
            &self.input_scan_appearance,
            &self.normal_scan_appearance,
        ]
    }

    /// All fields non-empty and at most `budget` characters.
    pub fn validate(&self, budget: usize) -> Result<(), ReportError> {
        for (key, value) in Self::KEYS.iter().zip(self.fields()) {
            if value.trim().is_empty() {
                return Err(ReportError::MalformedProviderOutput(format!("{key} is empty")));
            }
            let n = value.chars().count();
            if n > budget {
                return Err(ReportError::MalformedProviderOutput(format!(
                    "{key} has {n} characters, budget is {budget}"
                )));
            }
        }
        Ok(())
    }
}

/// One positive finding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Finding {
    /// 1 = most significant.
    pub rank: u32,
    /// Verbatim span of the report.
    pub phrase: String,
    /// Vocabulary labels, first one is the primary organ.
    pub organs: Vec<String>,
    pub explanation: ExplanationTriple,
}

impl Finding {
    /// Build a finding, canonicalizing organ labels against `vocab`.
    pub fn new(
        rank: u32,
        phrase: impl Into<String>,
        organs: &[String],
        explanation: ExplanationTriple,
        vocab: &OrganVocabulary,
    ) -> Result<Self, ReportError> {
        let organs = canonical_organs(organs, vocab)?;
        if organs.is_empty() {
            return Err(ReportError::InvalidFinding("no organs".into()));
        }
        if rank == 0 {
            return Err(ReportError::InvalidFinding("rank must be >= 1".into()));
        }
        Ok(Self {
            rank,
            phrase: phrase.into(),
            organs,
            explanation,
        })
    }

    /// Re-check invariants on a deserialized finding.
    pub fn validate(&self, vocab: &OrganVocabulary) -> Result<(), ReportError> {
        if self.organs.is_empty() {
            return Err(ReportError::InvalidFinding("no organs".into()));
        }
        for o in &self.organs {
            if vocab.resolve(o) != Some(o.as_str()) {
                return Err(ReportError::UnknownOrganLabel(o.clone()));
            }
        }
        Ok(())
    }
}

/// Ranks of a finding list must be a permutation of `1..=n`.
pub fn ranks_are_permutation(findings: &[Finding]) -> bool {
    let n = findings.len();
    let mut seen = vec![false; n];
    for f in findings {
        let r = f.rank as usize;
        if r == 0 || r > n || seen[r - 1] {
            return false;
        }
        seen[r - 1] = true;
    }
    true
}

fn canonical_organs(labels: &[String], vocab: &OrganVocabulary) -> Result<Vec<String>, ReportError> {
    let mut out: Vec<String> = Vec::new();
    for l in labels {
        let canon = vocab
            .resolve(l)
            .ok_or_else(|| ReportError::UnknownOrganLabel(l.trim().to_string()))?;
        if !out.iter().any(|o| o == canon) {
            out.push(canon.to_string());
        }
    }
    Ok(out)
}

/// Organs with positive findings, as answered by the organ-matching prompt.
/// An answer of `none` yields an empty list.
pub fn match_organs(
    report_text: &str,
    vocab: &OrganVocabulary,
    prompts: &PromptSet,
    llm: &dyn LlmProvider,
) -> Result<Vec<String>, ReportError> {
    if report_text.trim().is_empty() {
        return Err(ReportError::EmptyReport);
    }
    let prompt = prompts.match_organs.render(&[
        ("organs", &vocab.as_list_literal()),
        ("report", report_text.trim()),
    ])?;
    let answer = llm.complete(&prompt)?;
    match parse_organ_answer(&answer) {
        OrganAnswer::None => Ok(Vec::new()),
        OrganAnswer::Labels(labels) => canonical_organs(&labels, vocab),
    }
}

#[derive(Debug, Deserialize)]
struct RawExtracted {
    phrase: String,
    organs: Vec<String>,
}

/// A finding phrase with its organs, before explanation and ranking.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedFinding {
    pub phrase: String,
    pub organs: Vec<String>,
}

/// Split the report into positive-finding phrases. Every phrase must occur
/// verbatim in `report_text`.
pub fn extract_findings(
    report_text: &str,
    vocab: &OrganVocabulary,
    prompts: &PromptSet,
    llm: &dyn LlmProvider,
) -> Result<Vec<ExtractedFinding>, ReportError> {
    if report_text.trim().is_empty() {
        return Err(ReportError::EmptyReport);
    }
    let prompt = prompts.extract_findings.render(&[
        ("organs", &vocab.as_list_literal()),
        ("report", report_text.trim()),
    ])?;
    let answer = llm.complete(&prompt)?;
    if parse_organ_answer(&answer) == OrganAnswer::None && !answer.contains('{') {
        return Ok(Vec::new());
    }
    let raw: Vec<RawExtracted> =
        parse_json_lenient(&answer).map_err(ReportError::MalformedProviderOutput)?;
    let mut out: Vec<ExtractedFinding> = Vec::with_capacity(raw.len());
    for r in raw {
        let phrase = r.phrase.trim().to_string();
        if phrase.is_empty() || !report_text.contains(&phrase) {
            return Err(ReportError::MalformedProviderOutput(format!(
                "phrase {:?} does not occur in the report",
                r.phrase
            )));
        }
        let organs = canonical_organs(&r.organs, vocab)?;
        if organs.is_empty() {
            return Err(ReportError::MalformedProviderOutput(format!(
                "phrase {phrase:?} has no organs"
            )));
        }
        if out.iter().any(|f| f.phrase == phrase) {
            continue;
        }
        out.push(ExtractedFinding { phrase, organs });
    }
    Ok(out)
}

/// Ask for the three-part explanation of one finding phrase.
pub fn explain_finding(
    phrase: &str,
    prompts: &PromptSet,
    llm: &dyn LlmProvider,
    char_budget: usize,
) -> Result<ExplanationTriple, ReportError> {
    if phrase.trim().is_empty() {
        return Err(ReportError::EmptyPhrase);
    }
    let prompt = prompts.explain_finding.render(&[("phrase", phrase.trim())])?;
    let answer = llm.complete(&prompt)?;
    parse_explanation(&answer, char_budget)
}

/// Parse and validate an explanation answer.
pub fn parse_explanation(answer: &str, char_budget: usize) -> Result<ExplanationTriple, ReportError> {
    let triple: ExplanationTriple =
        parse_json_lenient(answer).map_err(ReportError::MalformedProviderOutput)?;
    triple.validate(char_budget)?;
    Ok(triple)
}

/// Result of [`rank_findings`].
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub findings: Vec<Finding>,
    /// Set when the provider's ordering was unusable and input order was kept.
    pub fallback: Option<String>,
}

/// Numbered phrase list filled into the ranking prompt.
pub fn ranking_listing<S: AsRef<str>>(phrases: &[S]) -> String {
    phrases
        .iter()
        .enumerate()
        .map(|(i, p)| format!("{}. {}", i + 1, p.as_ref()))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Parse a ranking answer: a JSON array that is a permutation of `1..=n`.
pub fn parse_ranking(answer: &str, n: usize) -> Result<Vec<usize>, String> {
    let order: Vec<usize> = parse_json_lenient(answer)?;
    if order.len() != n {
        return Err(format!("expected {n} entries, got {}", order.len()));
    }
    let mut seen = vec![false; n];
    for &i in &order {
        if i == 0 || i > n || seen[i - 1] {
            return Err(format!("{order:?} is not a permutation of 1..={n}"));
        }
        seen[i - 1] = true;
    }
    Ok(order)
}

/// Order findings from most to least clinically significant and assign ranks
/// `1..=n`. Any provider problem falls back to input order, reported in
/// [`Ranking::fallback`] and the log.
pub fn rank_findings(
    findings: Vec<Finding>,
    prompts: &PromptSet,
    llm: &dyn LlmProvider,
) -> Ranking {
    let n = findings.len();
    let assign = |list: Vec<Finding>| -> Vec<Finding> {
        list.into_iter()
            .enumerate()
            .map(|(i, mut f)| {
                f.rank = i as u32 + 1;
                f
            })
            .collect()
    };
    if n <= 1 {
        return Ranking {
            findings: assign(findings),
            fallback: None,
        };
    }
    let phrases: Vec<&str> = findings.iter().map(|f| f.phrase.as_str()).collect();
    let listing = ranking_listing(&phrases);
    let outcome = prompts
        .rank_findings
        .render(&[("findings", &listing)])
        .map_err(|e| e.to_string())
        .and_then(|p| llm.complete(&p).map_err(|e| e.to_string()))
        .and_then(|answer| parse_ranking(&answer, n));
    match outcome {
        Ok(order) => {
            let mut slots: Vec<Option<Finding>> = findings.into_iter().map(Some).collect();
            let ordered = order
                .iter()
                .map(|&i| slots[i - 1].take().expect("permutation checked"))
                .collect();
            Ranking {
                findings: assign(ordered),
                fallback: None,
            }
        }
        Err(reason) => {
            log::warn!("finding ranking fell back to report order: {reason}");
            Ranking {
                findings: assign(findings),
                fallback: Some(reason),
            }
        }
    }
}

/// Options for [`analyze_report`].
#[derive(Debug, Clone)]
pub struct ReportOptions {
    pub char_budget: usize,
    /// Maximum concurrent explanation calls.
    pub concurrency: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            char_budget: DEFAULT_CHAR_BUDGET,
            concurrency: 2,
        }
    }
}

/// Everything the report stage produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportAnalysis {
    /// Answer of the organ-matching prompt.
    pub matched_organs: Vec<String>,
    pub findings: Vec<Finding>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranking_fallback: Option<String>,
}

/// Run the whole report stage.
pub fn analyze_report(
    report_text: &str,
    vocab: &OrganVocabulary,
    prompts: &PromptSet,
    llm: &dyn LlmProvider,
    opts: &ReportOptions,
) -> Result<ReportAnalysis, ReportError> {
    let matched = match_organs(report_text, vocab, prompts, llm)?;
    if matched.is_empty() {
        return Ok(ReportAnalysis {
            matched_organs: matched,
            findings: Vec::new(),
            ranking_fallback: None,
        });
    }
    let mut extracted = extract_findings(report_text, vocab, prompts, llm)?;
    if extracted.is_empty() {
        log::warn!(
            "organ matching reported {matched:?} but phrase extraction found nothing; \
             using the whole report as one finding"
        );
        extracted.push(ExtractedFinding {
            phrase: report_text.trim().to_string(),
            organs: matched.clone(),
        });
    }
    let explanations = explain_all(&extracted, prompts, llm, opts)?;
    let findings = extracted
        .iter()
        .zip(explanations)
        .enumerate()
        .map(|(i, (e, expl))| Finding::new(i as u32 + 1, &e.phrase, &e.organs, expl, vocab))
        .collect::<Result<Vec<_>, _>>()?;
    let ranking = rank_findings(findings, prompts, llm);
    Ok(ReportAnalysis {
        matched_organs: matched,
        findings: ranking.findings,
        ranking_fallback: ranking.fallback,
    })
}

/// Explain each phrase with at most `opts.concurrency` calls in flight;
/// results keep input order.
fn explain_all(
    extracted: &[ExtractedFinding],
    prompts: &PromptSet,
    llm: &dyn LlmProvider,
    opts: &ReportOptions,
) -> Result<Vec<ExplanationTriple>, ReportError> {
    let workers = opts.concurrency.clamp(1, extracted.len().max(1));
    let next = AtomicUsize::new(0);
    let mut results: Vec<Option<Result<ExplanationTriple, ReportError>>> =
        (0..extracted.len()).map(|_| None).collect();
    let chunks: Vec<Vec<(usize, Result<ExplanationTriple, ReportError>)>> =
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|_| {
                    s.spawn(|| {
                        let mut done = Vec::new();
                        loop {
                            let i = next.fetch_add(1, Ordering::Relaxed);
                            if i >= extracted.len() {
                                break;
                            }
                            let r = explain_finding(
                                &extracted[i].phrase,
                                prompts,
                                llm,
                                opts.char_budget,
                            );
                            done.push((i, r));
                        }
                        done
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("explanation worker panicked"))
                .collect()
        });
    for (i, r) in chunks.into_iter().flatten() {
        results[i] = Some(r);
    }
    results
        .into_iter()
        .map(|r| r.expect("every index visited"))
        .collect()
}
