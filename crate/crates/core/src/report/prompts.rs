//! Versioned prompt templates with `{{name}}` placeholders.
//!
//! Templates are plain UTF-8 files named `<name>.v<version>.txt`. The bundled
//! set can be replaced by a directory of the same layout.

use std::path::Path;

use super::ReportError;

pub const MATCH_ORGANS: &str = "match_organs";
pub const EXTRACT_FINDINGS: &str = "extract_findings";
pub const EXPLAIN_FINDING: &str = "explain_finding";
pub const RANK_FINDINGS: &str = "rank_findings";

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub name: String,
    pub version: u32,
    pub text: String,
}

impl PromptTemplate {
    pub fn new(name: impl Into<String>, version: u32, text: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            version,
            text: text.into(),
        }
    }

    /// `name.vN`, e.g. `match_organs.v1`.
    pub fn id(&self) -> String {
        format!("{}.v{}", self.name, self.version)
    }

    /// Names of the placeholders in template order (with repeats removed).
    pub fn placeholders(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut rest = self.text.as_str();
        while let Some(start) = rest.find("{{") {
            let after = &rest[start + 2..];
            match after.find("}}") {
                Some(end) => {
                    let name = after[..end].trim().to_string();
                    if !out.contains(&name) {
                        out.push(name);
                    }
                    rest = &after[end + 2..];
                }
                None => break,
            }
        }
        out
    }

    /// Substitute every placeholder in one pass, so substituted values are
    /// never themselves scanned for placeholders.
    pub fn render(&self, values: &[(&str, &str)]) -> Result<String, ReportError> {
        let mut out = String::with_capacity(self.text.len() + 256);
        let mut rest = self.text.as_str();
        while let Some(start) = rest.find("{{") {
            out.push_str(&rest[..start]);
            let after = &rest[start + 2..];
            let end = after.find("}}").ok_or_else(|| {
                ReportError::Template(format!("{}: unterminated placeholder", self.id()))
            })?;
            let name = after[..end].trim();
            let value = values
                .iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| *v)
                .ok_or_else(|| {
                    ReportError::Template(format!("{}: no value for {{{{{name}}}}}", self.id()))
                })?;
            out.push_str(value);
            rest = &after[end + 2..];
        }
        out.push_str(rest);
        Ok(out)
    }
}

/// The four templates the report stage uses.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSet {
    pub match_organs: PromptTemplate,
    pub extract_findings: PromptTemplate,
    pub explain_finding: PromptTemplate,
    pub rank_findings: PromptTemplate,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PromptSet {
    pub fn builtin() -> Self {
        Self {
            match_organs: PromptTemplate::new(
                MATCH_ORGANS,
                1,
                include_str!("../../data/prompts/match_organs.v1.txt"),
            ),
            extract_findings: PromptTemplate::new(
                EXTRACT_FINDINGS,
                1,
                include_str!("../../data/prompts/extract_findings.v1.txt"),
            ),
            explain_finding: PromptTemplate::new(
                EXPLAIN_FINDING,
                1,
                include_str!("../../data/prompts/explain_finding.v1.txt"),
            ),
            rank_findings: PromptTemplate::new(
                RANK_FINDINGS,
                1,
                include_str!("../../data/prompts/rank_findings.v1.txt"),
            ),
        }
    }

    /// Load the highest version of each template found in `dir`; templates
    /// missing from the directory keep their bundled version.
    pub fn load_dir(dir: &Path) -> Result<Self, ReportError> {
        let mut set = Self::builtin();
        let entries = std::fs::read_dir(dir)
            .map_err(|e| ReportError::Template(format!("{}: {e}", dir.display())))?;
        let mut found: Vec<(String, u32, std::path::PathBuf)> = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| ReportError::Template(e.to_string()))?;
            let fname = entry.file_name().to_string_lossy().to_string();
            if let Some((name, version)) = parse_file_name(&fname) {
                found.push((name, version, entry.path()));
            }
        }
        found.sort();
        for (name, version, path) in found {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| ReportError::Template(format!("{}: {e}", path.display())))?;
            let slot = match name.as_str() {
                MATCH_ORGANS => &mut set.match_organs,
                EXTRACT_FINDINGS => &mut set.extract_findings,
                EXPLAIN_FINDING => &mut set.explain_finding,
                RANK_FINDINGS => &mut set.rank_findings,
                _ => continue,
            };
            *slot = PromptTemplate::new(name, version, text);
        }
        set.validate()?;
        Ok(set)
    }

    /// Each template must use exactly the placeholders the pipeline fills.
    pub fn validate(&self) -> Result<(), ReportError> {
        let expect: [(&PromptTemplate, &[&str]); 4] = [
            (&self.match_organs, &["organs", "report"]),
            (&self.extract_findings, &["organs", "report"]),
            (&self.explain_finding, &["phrase"]),
            (&self.rank_findings, &["findings"]),
        ];
        for (t, names) in expect {
            let mut got = t.placeholders();
            got.sort();
            let mut want: Vec<String> = names.iter().map(|s| s.to_string()).collect();
            want.sort();
            if got != want {
                return Err(ReportError::Template(format!(
                    "{} uses placeholders {got:?}, expected {want:?}",
                    t.id()
                )));
            }
        }
        Ok(())
    }

    /// Stable identifier of the whole set, for cache keys.
    pub fn fingerprint(&self) -> String {
        let parts = [
            &self.match_organs,
            &self.extract_findings,
            &self.explain_finding,
            &self.rank_findings,
        ];
        crate::hashing::sha256_parts(parts.iter().map(|t| t.text.as_bytes()))
    }
}

fn parse_file_name(fname: &str) -> Option<(String, u32)> {
    let stem = fname.strip_suffix(".txt")?;
    let (name, version) = stem.rsplit_once(".v")?;
    Some((name.to_string(), version.parse().ok()?))
}
