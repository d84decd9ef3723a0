use super::{ranking_listing, MockLlm, OrganVocabulary, PromptSet, ReportError};

/// Records canned answers to the report-stage prompts in a [`MockLlm`].
///
/// Each method renders the same prompt the pipeline would send, so the
/// resulting fixture replays a whole report without a live model.
pub struct Script<'a> {
    prompts: &'a PromptSet,
    vocab: &'a OrganVocabulary,
    llm: MockLlm,
}

impl<'a> Script<'a> {
    pub fn new(prompts: &'a PromptSet, vocab: &'a OrganVocabulary) -> Self {
        Self {
            prompts,
            vocab,
            llm: MockLlm::new(),
        }
    }

    /// Answer to the organ-matching prompt, e.g. `"left lung,heart"` or `"none"`.
    pub fn organs(self, report: &str, answer: &str) -> Result<Self, ReportError> {
        let prompt = self.prompts.match_organs.render(&[
            ("organs", &self.vocab.as_list_literal()),
            ("report", report.trim()),
        ])?;
        self.llm.insert(&prompt, answer);
        Ok(self)
    }

    /// Answer to the phrase-extraction prompt: a JSON list of
    /// `{"phrase", "organs"}` objects.
    pub fn phrases(self, report: &str, answer: &str) -> Result<Self, ReportError> {
        let prompt = self.prompts.extract_findings.render(&[
            ("organs", &self.vocab.as_list_literal()),
            ("report", report.trim()),
        ])?;
        self.llm.insert(&prompt, answer);
        Ok(self)
    }

    /// Answer to the explanation prompt for `phrase`.
    pub fn explanation(self, phrase: &str, answer: &str) -> Result<Self, ReportError> {
        let prompt = self
            .prompts
            .explain_finding
            .render(&[("phrase", phrase.trim())])?;
        self.llm.insert(&prompt, answer);
        Ok(self)
    }

    /// Answer to the ranking prompt for phrases in extraction order.
    pub fn ranking(self, phrases: &[&str], answer: &str) -> Result<Self, ReportError> {
        let prompt = self
            .prompts
            .rank_findings
            .render(&[("findings", &ranking_listing(phrases))])?;
        self.llm.insert(&prompt, answer);
        Ok(self)
    }

    pub fn into_mock(self) -> MockLlm {
        self.llm
    }
}
