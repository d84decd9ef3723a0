//! Pipeline configuration file.
//!
//! Precedence, lowest to highest: built-in defaults, the TOML file, command
//! line flags. Relative paths in the file resolve against the file's
//! directory; relative paths given as flags resolve against the working
//! directory. Secrets never appear here: the LLM API key is read from the
//! environment variable named by `llm.api_key_env`.

use std::path::{Path, PathBuf};

use radvid_core::media::{FrameLayout, DEFAULT_AVATAR_FRACTION, DEFAULT_SAMPLE_RATE, DEFAULT_WPM};
use radvid_core::registration::RegistrationConfig;
use radvid_core::report::DEFAULT_CHAR_BUDGET;
use radvid_core::storyboard::{StoryboardConfig, WindowTable};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub providers: Providers,
    pub storyboard: StoryboardSection,
    pub windows: WindowTable,
    pub registration: RegistrationConfig,
    pub narration: NarrationSection,
    pub llm: LlmSection,
    pub segmentation: SegmentationSection,
    pub media: MediaSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub query: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub normal: Option<PathBuf>,
    /// Directory of `<organ>.nii.gz` masks for the `files` segmentation provider.
    pub mask_dir: Option<PathBuf>,
    pub cache_dir: PathBuf,
    pub output: PathBuf,
    /// Directory of `<name>.v<version>.txt` prompt templates replacing the
    /// built-in ones.
    pub prompts_dir: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            query: None,
            report: None,
            normal: None,
            mask_dir: None,
            cache_dir: PathBuf::from(".radvid-cache"),
            output: PathBuf::from("radvid-out"),
            prompts_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmKind {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegKind {
    Files,
    Http,
    #[default]
    Phantom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TtsKind {
    #[default]
    Offline,
    Http,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Providers {
    pub llm: LlmKind,
    pub segmentation: SegKind,
    pub tts: TtsKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoryboardSection {
    pub fps: u32,
    pub resolution: [u32; 2],
    pub max_duration: f64,
    pub turntable_period: f64,
}

impl Default for StoryboardSection {
    fn default() -> Self {
        let d = StoryboardConfig::default();
        Self {
            fps: d.fps,
            resolution: d.resolution,
            max_duration: d.max_duration,
            turntable_period: d.turntable_period,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NarrationSection {
    pub wpm: f64,
    pub voice: String,
    pub sample_rate: u32,
    /// Narration calls in flight at once.
    pub concurrency: usize,
    pub endpoint: Option<String>,
    /// Use offline narration when the remote service fails.
    pub allow_fallback: bool,
    pub timeout_s: u64,
    pub retries: u32,
}

impl Default for NarrationSection {
    fn default() -> Self {
        Self {
            wpm: DEFAULT_WPM,
            voice: "default".into(),
            sample_rate: DEFAULT_SAMPLE_RATE,
            concurrency: 2,
            endpoint: None,
            allow_fallback: false,
            timeout_s: 120,
            retries: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    /// Recorded responses for the `mock` provider: JSON object mapping
    /// `sha256(prompt)` to the answer.
    pub fixture: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub char_budget: usize,
    pub concurrency: usize,
    pub timeout_s: u64,
    pub retries: u32,
}

impl Default for LlmSection {
    fn default() -> Self {
        Self {
            fixture: None,
            endpoint: None,
            model: "gpt-4o".into(),
            api_key_env: "RADVID_LLM_API_KEY".into(),
            char_budget: DEFAULT_CHAR_BUDGET,
            concurrency: 2,
            timeout_s: 120,
            retries: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationSection {
    pub endpoint: Option<String>,
    pub timeout_s: u64,
    pub retries: u32,
}

impl Default for SegmentationSection {
    fn default() -> Self {
        Self {
            endpoint: None,
            timeout_s: 300,
            retries: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MediaSection {
    /// Encoder command template with `{fps}`, `{w}`, `{h}`, `{out}` and
    /// `{audio}` placeholders. Unset: write the frame-directory fallback.
    pub encoder: Option<String>,
    /// File name of the video inside the output directory.
    pub video_name: String,
    pub captions: bool,
    pub avatar_fraction: f64,
}

impl Default for MediaSection {
    fn default() -> Self {
        Self {
            encoder: None,
            video_name: "report.mp4".into(),
            captions: true,
            avatar_fraction: DEFAULT_AVATAR_FRACTION,
        }
    }
}

fn config_err(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Read a config file, resolving its relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let p = &mut self.paths;
        for opt in [
            &mut p.query,
            &mut p.report,
            &mut p.normal,
            &mut p.mask_dir,
            &mut p.prompts_dir,
            &mut self.llm.fixture,
        ] {
            if let Some(x) = opt.as_mut() {
                fix(x);
            }
        }
        fix(&mut p.cache_dir);
        fix(&mut p.output);
    }

    /// Apply a `--provider key=value` flag.
    pub fn set_provider(&mut self, spec: &str) -> Result<(), CliError> {
        let (k, v) = spec
            .split_once('=')
            .ok_or_else(|| config_err("--provider", format!("expected key=value, got {spec:?}")))?;
        let parse = |what: &str| -> Result<String, CliError> {
            let quoted = toml::Value::String(v.trim().to_string()).to_string();
            Ok(format!("{what} = {quoted}"))
        };
        let field = match k.trim() {
            "llm" => "llm",
            "seg" | "segmentation" => "segmentation",
            "tts" => "tts",
            other => return Err(config_err("--provider", format!("unknown provider {other:?}"))),
        };
        self.providers = toml::from_str::<ProvidersPatch>(&parse(field)?)
            .map_err(|e| config_err("--provider", e.message().trim()))?
            .apply(self.providers.clone());
        Ok(())
    }

    pub fn storyboard_config(&self) -> StoryboardConfig {
        StoryboardConfig {
            fps: self.storyboard.fps,
            resolution: self.storyboard.resolution,
            max_duration: self.storyboard.max_duration,
            turntable_period: self.storyboard.turntable_period,
            windows: self.windows.clone(),
        }
    }

    pub fn layout(&self) -> Result<FrameLayout, CliError> {
        let [w, h] = self.storyboard.resolution;
        FrameLayout::new(w as usize, h as usize, self.media.avatar_fraction)
            .map_err(|e| config_err("media.avatar_fraction", e))
    }

    /// Checks that do not touch the file system.
    pub fn validate(&self) -> Result<(), CliError> {
        self.storyboard_config()
            .validate()
            .map_err(|e| config_err("storyboard", e))?;
        self.registration
            .validate()
            .map_err(|e| config_err("registration", e))?;
        self.layout()?;
        let n = &self.narration;
        if !(n.wpm.is_finite() && n.wpm > 0.0) {
            return Err(config_err("narration.wpm", "must be > 0"));
        }
        if n.sample_rate == 0 {
            return Err(config_err("narration.sample_rate", "must be > 0"));
        }
        if n.concurrency == 0 {
            return Err(config_err("narration.concurrency", "must be >= 1"));
        }
        if self.llm.concurrency == 0 {
            return Err(config_err("llm.concurrency", "must be >= 1"));
        }
        if self.llm.char_budget == 0 {
            return Err(config_err("llm.char_budget", "must be >= 1"));
        }
        if self.media.video_name.is_empty()
            || self.media.video_name.contains(['/', '\\'])
        {
            return Err(config_err("media.video_name", "must be a plain file name"));
        }
        let need = |field: &str, v: &Option<String>, when: bool| {
            let blank = v.as_deref().map_or(true, |s| s.trim().is_empty());
            if when && blank {
                Err(config_err(field, "required by the selected provider"))
            } else {
                Ok(())
            }
        };
        need("llm.endpoint", &self.llm.endpoint, self.providers.llm == LlmKind::Http)?;
        need(
            "segmentation.endpoint",
            &self.segmentation.endpoint,
            self.providers.segmentation == SegKind::Http,
        )?;
        need(
            "narration.endpoint",
            &self.narration.endpoint,
            self.providers.tts == TtsKind::Http,
        )?;
        if self.providers.segmentation == SegKind::Files && self.paths.mask_dir.is_none() {
            return Err(config_err("paths.mask_dir", "required by the files provider"));
        }
        Ok(())
    }

    /// An input file named by `field` must be configured and exist.
    pub fn require_file(&self, field: &str) -> Result<PathBuf, CliError> {
        let p = match field {
            "paths.query" => &self.paths.query,
            "paths.report" => &self.paths.report,
            "paths.normal" => &self.paths.normal,
            "llm.fixture" => &self.llm.fixture,
            other => return Err(config_err(other, "not a file setting")),
        };
        let p = p.as_ref().ok_or_else(|| config_err(field, "required"))?;
        if !p.is_file() {
            return Err(config_err(field, format!("file not found: {}", p.display())));
        }
        Ok(p.clone())
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProvidersPatch {
    llm: Option<LlmKind>,
    segmentation: Option<SegKind>,
    tts: Option<TtsKind>,
}

impl ProvidersPatch {
    fn apply(self, mut p: Providers) -> Providers {
        if let Some(v) = self.llm {
            p.llm = v;
        }
        if let Some(v) = self.segmentation {
            p.segmentation = v;
        }
        if let Some(v) = self.tts {
            p.tts = v;
        }
        p
    }
}
