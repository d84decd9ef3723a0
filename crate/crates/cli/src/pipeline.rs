//! Stage orchestration: load, resample, report, segment, register, narrate,
//! storyboard, meshes and media.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use radvid_core::hashing::{sha256_hex, sha256_parts};
use radvid_core::media::{
    mux, narrate_all, panel_content, FallbackNarrator, HttpNarrator, MuxReport, NarrationClip,
    NarrationProvider, OfflineNarrator, StoryboardVideo,
};
use radvid_core::organ3d::{marching_cubes, turntable};
use radvid_core::phantom::ChestPhantom;
use radvid_core::provider::RetryPolicy;
use radvid_core::registration::{
    apply_transform, register_rigid, transform_mask, Interpolation, RegError, RegistrationResult,
};
use radvid_core::report::{
    analyze_report, HttpLlm, LlmProvider, MockLlm, OrganVocabulary, PromptSet, ReportAnalysis,
    ReportOptions,
};
use radvid_core::segmentation::{
    bounding_box, mask_file_name, save_mask_file, segment, union_box, BoundingBox3D,
    FileMaskProvider, HttpSegmentation, OrganMask, SegError, SegmentationProvider,
};
use radvid_core::storyboard::{build_storyboard, FindingInput, Phase, Storyboard, NOTICE_TEXT};
use radvid_core::telemetry::CallLog;
use radvid_core::volume::{resample, CtVolume, GrayImage, PIPELINE_SPACING};
use serde::Serialize;

use crate::cache::{Cache, CachedLlm, CachedNarrator, CachedSegmentation, LoggedNarrator};
use crate::config::{LlmKind, PipelineConfig, SegKind, TtsKind};
use crate::error::{AtStage, CliError};
use crate::runlog::{Event, RunLog};

pub const STORYBOARD_FILE: &str = "storyboard.json";
pub const FINDINGS_FILE: &str = "findings.json";
pub const TRANSFORM_FILE: &str = "transform.json";
pub const ERROR_FILE: &str = "error.json";
pub const MASKS_DIR: &str = "masks";
pub const MESHES_DIR: &str = "meshes";

/// Stages runnable on their own with `radvid stage <name>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageName {
    Findings,
    Segment,
    Register,
    Mesh,
}

impl StageName {
    pub fn as_str(self) -> &'static str {
        match self {
            StageName::Findings => "findings",
            StageName::Segment => "segment",
            StageName::Register => "register",
            StageName::Mesh => "mesh",
        }
    }
}

impl std::str::FromStr for StageName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "findings" => Ok(StageName::Findings),
            "segment" => Ok(StageName::Segment),
            "register" => Ok(StageName::Register),
            "mesh" => Ok(StageName::Mesh),
            other => Err(format!(
                "unknown stage {other:?}; expected findings, segment, register or mesh"
            )),
        }
    }
}

/// Organ masks found by the segment stage, keyed by vocabulary label.
#[derive(Debug, Default)]
pub struct Masks {
    pub query: BTreeMap<String, OrganMask>,
    /// On the resampled normal grid.
    pub normal: BTreeMap<String, OrganMask>,
}

/// Registration output and the normal scan moved onto the query grid.
pub struct Registered {
    pub result: RegistrationResult,
    pub normal: CtVolume,
    pub boxes: BTreeMap<String, BoundingBox3D>,
}

/// Everything up to and including the storyboard.
pub struct Plan {
    pub query: CtVolume,
    pub analysis: ReportAnalysis,
    pub masks: Masks,
    pub registered: Option<Registered>,
    pub storyboard: Storyboard,
    /// One clip per storyboard segment.
    pub clips: Vec<NarrationClip>,
}

#[derive(Debug)]
pub struct GenerateOutcome {
    pub storyboard: Storyboard,
    pub mux: MuxReport,
    pub out_dir: PathBuf,
}

pub struct Pipeline {
    pub cfg: PipelineConfig,
    pub cache: Cache,
    pub calls: CallLog,
    pub vocab: OrganVocabulary,
    pub prompts: PromptSet,
}

fn policy(timeout_s: u64, retries: u32) -> RetryPolicy {
    RetryPolicy {
        timeout: std::time::Duration::from_secs(timeout_s),
        retries,
        ..Default::default()
    }
}

fn write_file(stage: &str, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).at(stage)?;
    }
    std::fs::write(path, bytes).at(stage)
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("artifact serializes");
    s.push('\n');
    s
}

/// Narration strings in storyboard order.
pub fn narration_texts(analysis: &ReportAnalysis) -> Vec<String> {
    if analysis.findings.is_empty() {
        return vec![NOTICE_TEXT.to_string()];
    }
    let mut ranked: Vec<_> = analysis.findings.iter().collect();
    ranked.sort_by_key(|f| f.rank);
    ranked
        .iter()
        .flat_map(|f| Phase::ALL.iter().map(move |p| p.narration(f).to_string()))
        .collect()
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self, CliError> {
        cfg.validate()?;
        let prompts = match &cfg.paths.prompts_dir {
            Some(dir) => PromptSet::load_dir(dir)
                .map_err(|e| CliError::Config(format!("paths.prompts_dir: {e}")))?,
            None => PromptSet::builtin(),
        };
        Ok(Self {
            cache: Cache::new(&cfg.paths.cache_dir),
            cfg,
            calls: CallLog::new(),
            vocab: OrganVocabulary::builtin(),
            prompts,
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.cfg.paths.output
    }

    pub fn config_hash(&self) -> String {
        sha256_hex(self.cfg.to_toml().as_bytes())
    }

    // Backends.

    fn llm_backend_id(&self) -> Result<String, CliError> {
        Ok(match self.cfg.providers.llm {
            LlmKind::Mock => {
                let path = self.cfg.require_file("llm.fixture")?;
                let bytes = std::fs::read(&path)
                    .map_err(|e| CliError::Config(format!("llm.fixture: {e}")))?;
                format!("mock:{}", sha256_hex(&bytes))
            }
            LlmKind::Http => format!(
                "http:{}:{}",
                self.cfg.llm.endpoint.as_deref().unwrap_or_default(),
                self.cfg.llm.model
            ),
        })
    }

    /// The configured LLM behind the cache; `live = false` answers from the
    /// cache only.
    pub fn llm(&self, live: bool) -> Result<CachedLlm, CliError> {
        let backend_id = self.llm_backend_id()?;
        let inner: Option<Box<dyn LlmProvider>> = match (live, self.cfg.providers.llm) {
            (false, _) => None,
            (true, LlmKind::Mock) => {
                let path = self.cfg.require_file("llm.fixture")?;
                let mock = MockLlm::from_file(&path)
                    .map_err(|e| CliError::Config(format!("llm.fixture: {e}")))?;
                Some(Box::new(mock))
            }
            (true, LlmKind::Http) => {
                let key = std::env::var(&self.cfg.llm.api_key_env).ok();
                if key.is_none() {
                    log::warn!("{} is not set; calling the LLM without a key", self.cfg.llm.api_key_env);
                }
                let l = &self.cfg.llm;
                let http = HttpLlm::new(
                    l.endpoint.clone().unwrap_or_default(),
                    l.model.clone(),
                    key,
                    policy(l.timeout_s, l.retries),
                )
                .at("report")?;
                Some(Box::new(http))
            }
        };
        Ok(CachedLlm {
            inner,
            backend_id,
            cache: self.cache.clone(),
            log: self.calls.clone(),
        })
    }

    fn seg_backend_id(&self) -> Result<String, CliError> {
        Ok(match self.cfg.providers.segmentation {
            SegKind::Phantom => "phantom".into(),
            SegKind::Http => format!(
                "http:{}",
                self.cfg.segmentation.endpoint.as_deref().unwrap_or_default()
            ),
            SegKind::Files => {
                let dir = self.cfg.paths.mask_dir.as_ref().expect("validated");
                format!("files:{}", dir_digest(dir)?)
            }
        })
    }

    pub fn segmenter(&self, live: bool) -> Result<CachedSegmentation, CliError> {
        let backend_id = self.seg_backend_id()?;
        let inner: Option<Box<dyn SegmentationProvider>> = match (live, self.cfg.providers.segmentation) {
            (false, _) => None,
            (true, SegKind::Phantom) => Some(Box::new(ChestPhantom)),
            (true, SegKind::Files) => Some(Box::new(FileMaskProvider::new(
                self.cfg.paths.mask_dir.clone().expect("validated"),
            ))),
            (true, SegKind::Http) => {
                let s = &self.cfg.segmentation;
                Some(Box::new(
                    HttpSegmentation::new(
                        s.endpoint.clone().unwrap_or_default(),
                        policy(s.timeout_s, s.retries),
                    )
                    .at("segment")?,
                ))
            }
        };
        Ok(CachedSegmentation {
            inner,
            backend_id,
            cache: self.cache.clone(),
            log: self.calls.clone(),
        })
    }

    fn offline_narrator(&self) -> Result<OfflineNarrator, CliError> {
        let n = &self.cfg.narration;
        let layout = self.cfg.layout()?;
        Ok(OfflineNarrator::new(
            n.wpm,
            n.sample_rate,
            self.cfg.storyboard.fps as f64,
            layout.avatar.w.max(1),
        ))
    }

    pub fn narrator(&self) -> Result<Box<dyn NarrationProvider>, CliError> {
        let n = &self.cfg.narration;
        let offline = self.offline_narrator()?;
        Ok(match self.cfg.providers.tts {
            TtsKind::Offline => Box::new(LoggedNarrator {
                inner: Arc::new(offline),
                log: self.calls.clone(),
            }),
            TtsKind::Http => {
                let endpoint = n.endpoint.clone().unwrap_or_default();
                let http = HttpNarrator::new(
                    endpoint.clone(),
                    n.voice.clone(),
                    n.sample_rate,
                    policy(n.timeout_s, n.retries),
                )
                .at("narration")?;
                let cached = CachedNarrator {
                    inner: Box::new(http),
                    backend_id: format!("http:{endpoint}:{}:{}", n.voice, n.sample_rate),
                    cache: self.cache.clone(),
                    log: self.calls.clone(),
                };
                Box::new(FallbackNarrator {
                    primary: Box::new(cached),
                    fallback: Box::new(LoggedNarrator {
                        inner: Arc::new(offline),
                        log: self.calls.clone(),
                    }),
                    allow_fallback: n.allow_fallback,
                })
            }
        })
    }

    // Stages.

    /// Load a configured volume and resample it to the pipeline spacing.
    ///
    /// The result always passes through its NIfTI encoding, so a fresh
    /// resample and a cache hit give bit-identical volumes.
    pub fn load_volume(&self, field: &str, id: &str) -> Result<CtVolume, CliError> {
        let path = self.cfg.require_file(field)?;
        let bytes = std::fs::read(&path).at("load")?;
        let key = sha256_parts([
            b"resample".as_slice(),
            sha256_hex(&bytes).as_bytes(),
            format!("{PIPELINE_SPACING:?}").as_bytes(),
        ]);
        if let Some(hit) = self.cache.get("volume", &key, "nii.gz") {
            if let Ok(v) = CtVolume::from_nifti_bytes(&hit, id) {
                return Ok(v);
            }
        }
        let raw = CtVolume::from_nifti_bytes(&bytes, id)
            .map_err(|e| CliError::pipeline("load", format!("{}: {e}", path.display())))?;
        let res = resample(&raw, PIPELINE_SPACING).at("resample")?;
        let enc = res.to_nifti_bytes(true);
        self.cache.put("volume", &key, "nii.gz", &enc).at("resample")?;
        CtVolume::from_nifti_bytes(&enc, id).at("resample")
    }

    fn report_text(&self) -> Result<String, CliError> {
        let path = self.cfg.require_file("paths.report")?;
        std::fs::read_to_string(&path).at("load")
    }

    fn findings_key(&self, report: &str) -> Result<String, CliError> {
        Ok(sha256_parts([
            b"findings".as_slice(),
            report.as_bytes(),
            self.prompts.fingerprint().as_bytes(),
            self.llm_backend_id()?.as_bytes(),
            self.cfg.llm.char_budget.to_string().as_bytes(),
        ]))
    }

    pub fn analyze(&self) -> Result<ReportAnalysis, CliError> {
        let text = self.report_text()?;
        let llm = self.llm(true)?;
        let opts = ReportOptions {
            char_budget: self.cfg.llm.char_budget,
            concurrency: self.cfg.llm.concurrency,
        };
        let analysis = analyze_report(&text, &self.vocab, &self.prompts, &llm, &opts).at("report")?;
        let key = self.findings_key(&text)?;
        self.cache
            .put("findings", &key, "json", to_json(&analysis).as_bytes())
            .at("report")?;
        Ok(analysis)
    }

    /// Findings of an earlier run with the same report, prompts and LLM.
    pub fn cached_findings(&self, stage: &str) -> Result<ReportAnalysis, CliError> {
        let text = self.report_text()?;
        let key = self.findings_key(&text)?;
        let bytes = self
            .cache
            .get("findings", &key, "json")
            .ok_or_else(|| CliError::missing(stage, "findings (run `stage findings`)"))?;
        serde_json::from_slice(&bytes).at(stage)
    }

    fn organs(&self, analysis: &ReportAnalysis) -> BTreeSet<String> {
        analysis
            .findings
            .iter()
            .flat_map(|f| &f.organs)
            .map(|o| self.vocab.resolve(o).unwrap_or(o).to_string())
            .collect()
    }

    /// Masks for every finding organ. Organs the provider finds nothing for
    /// are skipped; the finding is then shown without a box.
    pub fn segment(
        &self,
        analysis: &ReportAnalysis,
        query: &CtVolume,
        normal: Option<&CtVolume>,
        seg: &dyn SegmentationProvider,
    ) -> Result<Masks, CliError> {
        let mut masks = Masks::default();
        for organ in self.organs(analysis) {
            match segment(query, &organ, &self.vocab, seg) {
                Ok(m) => {
                    masks.query.insert(organ.clone(), m);
                }
                Err(SegError::EmptyMask { .. }) => {
                    log::warn!("no {organ} found on the query scan");
                    continue;
                }
                Err(e) => return Err(e).at("segment"),
            }
            if let Some(n) = normal {
                match segment(n, &organ, &self.vocab, seg) {
                    Ok(m) => {
                        masks.normal.insert(organ, m);
                    }
                    Err(SegError::EmptyMask { .. }) => {
                        log::warn!("no {organ} found on the normal scan")
                    }
                    Err(e) => return Err(e).at("segment"),
                }
            }
        }
        Ok(masks)
    }

    fn registration_key(&self, query: &CtVolume, normal: &CtVolume) -> String {
        let cfg = serde_json::to_string(&self.cfg.registration).expect("config serializes");
        sha256_parts([
            b"registration".as_slice(),
            query.content_hash().as_bytes(),
            normal.content_hash().as_bytes(),
            cfg.as_bytes(),
        ])
    }

    /// Rigid registration of the normal scan (moving) onto the query (fixed).
    pub fn register(&self, query: &CtVolume, normal: &CtVolume) -> Result<RegistrationResult, CliError> {
        let key = self.registration_key(query, normal);
        if let Some(hit) = self.cache.get("registration", &key, "json") {
            if let Ok(r) = serde_json::from_slice::<RegistrationResult>(&hit) {
                return Ok(r);
            }
        }
        let r = register_rigid(query, normal, &self.cfg.registration).at("register")?;
        log::info!(
            "registration metric {:.2} -> {:.2}, converged: {}",
            r.initial_metric,
            r.final_metric,
            r.converged
        );
        self.cache
            .put("registration", &key, "json", to_json(&r).as_bytes())
            .at("register")?;
        Ok(r)
    }

    pub fn apply_registration(
        &self,
        result: RegistrationResult,
        query: &CtVolume,
        normal: &CtVolume,
        masks: &Masks,
    ) -> Result<Registered, CliError> {
        let t = &result.transform;
        let moved = apply_transform(normal, t, query.grid(), Interpolation::Trilinear).at("register")?;
        let mut boxes = BTreeMap::new();
        for (organ, m) in &masks.normal {
            match transform_mask(m, t, query.grid()) {
                Ok(moved) => {
                    boxes.insert(organ.clone(), bounding_box(&moved).at("register")?);
                }
                Err(RegError::EmptyMask { .. }) => {
                    log::warn!("{organ} of the normal scan falls outside the query grid")
                }
                Err(e) => return Err(e).at("register"),
            }
        }
        Ok(Registered {
            result,
            normal: moved,
            boxes,
        })
    }

    pub fn finding_inputs(
        &self,
        analysis: &ReportAnalysis,
        masks: &Masks,
        registered: Option<&Registered>,
    ) -> Result<Vec<FindingInput>, CliError> {
        analysis
            .findings
            .iter()
            .map(|f| {
                let organs: Vec<&str> = f
                    .organs
                    .iter()
                    .map(|o| self.vocab.resolve(o).unwrap_or(o))
                    .collect();
                let query_boxes = organs
                    .iter()
                    .filter_map(|o| masks.query.get(*o))
                    .map(bounding_box)
                    .collect::<Result<Vec<_>, _>>()
                    .at("segment")?;
                let normal_boxes: Vec<BoundingBox3D> = registered
                    .map(|r| organs.iter().filter_map(|o| r.boxes.get(*o).copied()).collect())
                    .unwrap_or_default();
                Ok(FindingInput {
                    finding: f.clone(),
                    query_box: union_box(&query_boxes).ok(),
                    normal_box: union_box(&normal_boxes).ok(),
                    mesh_organ: organs
                        .iter()
                        .find(|o| masks.query.contains_key(**o))
                        .map(|o| o.to_string()),
                })
            })
            .collect()
    }

    pub fn narrate(&self, analysis: &ReportAnalysis) -> Result<HashMap<String, NarrationClip>, CliError> {
        let texts = narration_texts(analysis);
        let provider = self.narrator()?;
        let clips = narrate_all(&texts, provider.as_ref(), self.cfg.narration.concurrency)
            .at("narration")?;
        Ok(texts.into_iter().zip(clips).collect())
    }

    pub fn storyboard(
        &self,
        inputs: &[FindingInput],
        query: &CtVolume,
        clips: &HashMap<String, NarrationClip>,
    ) -> Result<(Storyboard, Vec<NarrationClip>), CliError> {
        let sb = build_storyboard(inputs, query.dims()[2], &self.cfg.storyboard_config(), &|t| {
            clips.get(t).map_or(f64::NAN, |c| c.duration)
        })
        .at("storyboard")?;
        let ordered = sb
            .segments
            .iter()
            .map(|s| clips[&s.narration_text].clone())
            .collect();
        Ok((sb, ordered))
    }

    /// Everything through the storyboard, logging each stage.
    pub fn plan(&self, log: &mut RunLog) -> Result<Plan, CliError> {
        let (query, normal) = log.stage("load", || {
            Ok::<_, CliError>((
                self.load_volume("paths.query", "query")?,
                self.load_volume("paths.normal", "normal")?,
            ))
        })?;
        let analysis = log.stage("report", || self.analyze())?;
        let seg = self.segmenter(true)?;
        let masks = log.stage("segment", || self.segment(&analysis, &query, Some(&normal), &seg))?;
        let registered = if analysis.findings.is_empty() {
            None
        } else {
            Some(log.stage("register", || {
                let r = self.register(&query, &normal)?;
                self.apply_registration(r, &query, &normal, &masks)
            })?)
        };
        let inputs = self.finding_inputs(&analysis, &masks, registered.as_ref())?;
        let clips = log.stage("narration", || self.narrate(&analysis))?;
        let (storyboard, clips) = log.stage("storyboard", || self.storyboard(&inputs, &query, &clips))?;
        Ok(Plan {
            query,
            analysis,
            masks,
            registered,
            storyboard,
            clips,
        })
    }

    pub fn turntables(&self, plan: &Plan) -> Result<BTreeMap<String, Vec<GrayImage>>, CliError> {
        let layout = self.cfg.layout()?;
        let content = panel_content(layout.organ3d);
        let side = content.w.min(content.h).max(1);
        let organs: BTreeSet<&str> = plan
            .storyboard
            .segments
            .iter()
            .filter_map(|s| s.panels.organ3d.as_ref())
            .map(|p| p.organ.as_str())
            .collect();
        let frames = self.cfg.storyboard_config().turntable_frames();
        let mut out = BTreeMap::new();
        for organ in organs {
            let mask = plan
                .masks
                .query
                .get(organ)
                .ok_or_else(|| CliError::pipeline("mesh", format!("no mask for {organ}")))?;
            let mesh = marching_cubes(mask).at("mesh")?;
            out.insert(organ.to_string(), turntable(&mesh, frames, (side, side)).at("mesh")?);
        }
        Ok(out)
    }

    fn write_plan_artifacts(&self, plan: &Plan) -> Result<(), CliError> {
        let out = self.out_dir();
        write_file("storyboard", &out.join(STORYBOARD_FILE), plan.storyboard.to_json().as_bytes())?;
        write_file("report", &out.join(FINDINGS_FILE), to_json(&plan.analysis).as_bytes())?;
        if let Some(r) = &plan.registered {
            let mut json = r.result.transform.to_json();
            json.push('\n');
            write_file("register", &out.join(TRANSFORM_FILE), json.as_bytes())?;
        }
        Ok(())
    }

    pub fn generate(&self, log: &mut RunLog) -> Result<GenerateOutcome, CliError> {
        let plan = self.plan(log)?;
        self.write_plan_artifacts(&plan)?;
        let turntables = log.stage("mesh", || self.turntables(&plan))?;
        let report = log.stage("media", || {
            let layout = self.cfg.layout()?;
            let video = StoryboardVideo::new(
                &plan.storyboard,
                layout,
                &plan.query,
                plan.registered.as_ref().map(|r| &r.normal),
                &turntables,
                &plan.clips,
                self.cfg.media.captions,
            )
            .at("media")?;
            let audio = video.audio(self.cfg.narration.sample_rate);
            let target = self.out_dir().join(&self.cfg.media.video_name);
            mux(
                &video,
                &audio,
                plan.storyboard.fps,
                &target,
                self.cfg.media.encoder.as_deref(),
            )
            .at("media")
        })?;
        Ok(GenerateOutcome {
            storyboard: plan.storyboard,
            mux: report,
            out_dir: self.out_dir().to_path_buf(),
        })
    }

    /// Run one stage and write its artifact; returns the written paths.
    pub fn stage(&self, name: StageName, log: &mut RunLog) -> Result<Vec<PathBuf>, CliError> {
        let stage = name.as_str();
        let out = self.out_dir().to_path_buf();
        match name {
            StageName::Findings => {
                let a = log.stage(stage, || self.analyze())?;
                let p = out.join(FINDINGS_FILE);
                write_file(stage, &p, to_json(&a).as_bytes())?;
                Ok(vec![p])
            }
            StageName::Segment => {
                let analysis = self.cached_findings(stage)?;
                let query = log.stage("load", || self.load_volume("paths.query", "query"))?;
                let normal = match self.cfg.paths.normal {
                    Some(_) => Some(log.stage("load", || self.load_volume("paths.normal", "normal"))?),
                    None => None,
                };
                let seg = self.segmenter(true)?;
                let masks = log.stage(stage, || self.segment(&analysis, &query, normal.as_ref(), &seg))?;
                let mut written = Vec::new();
                for (sub, set) in [("query", &masks.query), ("normal", &masks.normal)] {
                    let dir = out.join(MASKS_DIR).join(sub);
                    std::fs::create_dir_all(&dir).at(stage)?;
                    for (organ, m) in set {
                        let p = dir.join(mask_file_name(organ));
                        save_mask_file(m, &p).at(stage)?;
                        written.push(p);
                    }
                }
                Ok(written)
            }
            StageName::Register => {
                let (query, normal) = log.stage("load", || {
                    Ok::<_, CliError>((
                        self.load_volume("paths.query", "query")?,
                        self.load_volume("paths.normal", "normal")?,
                    ))
                })?;
                let r = log.stage(stage, || self.register(&query, &normal))?;
                let p = out.join(TRANSFORM_FILE);
                let mut json = r.transform.to_json();
                json.push('\n');
                write_file(stage, &p, json.as_bytes())?;
                Ok(vec![p])
            }
            StageName::Mesh => {
                let analysis = self.cached_findings(stage)?;
                let query = log.stage("load", || self.load_volume("paths.query", "query"))?;
                let seg = self.segmenter(false)?;
                log.stage(stage, || {
                    let mut written = Vec::new();
                    for organ in self.organs(&analysis) {
                        let mask = match segment(&query, &organ, &self.vocab, &seg) {
                            Ok(m) => m,
                            Err(SegError::EmptyMask { .. }) => continue,
                            Err(SegError::ProviderFailure(_)) => {
                                return Err(CliError::missing(
                                    stage,
                                    format!("mask for {organ:?} (run `stage segment`)"),
                                ))
                            }
                            Err(e) => return Err(e).at(stage),
                        };
                        let mesh = marching_cubes(&mask).at(stage)?;
                        let name = mask_file_name(&organ).replace(".nii.gz", ".stl");
                        let p = out.join(MESHES_DIR).join(name);
                        write_file(stage, &p, mesh.to_stl_ascii(&organ).as_bytes())?;
                        written.push(p);
                    }
                    Ok(written)
                })
            }
        }
    }

    pub fn run_event(&self, command: &str, status: &str, exit_code: Option<i32>) -> Event {
        Event::Run {
            command: command.to_string(),
            status: status.to_string(),
            config_sha256: self.config_hash(),
            exit_code,
        }
    }
}

/// Digest of a mask directory's file names and contents.
fn dir_digest(dir: &Path) -> Result<String, CliError> {
    let rd = std::fs::read_dir(dir)
        .map_err(|e| CliError::Config(format!("paths.mask_dir: {}: {e}", dir.display())))?;
    let mut entries: Vec<(String, String)> = Vec::new();
    for entry in rd {
        let entry = entry.map_err(|e| CliError::Config(format!("paths.mask_dir: {e}")))?;
        let p = entry.path();
        if p.is_file() {
            let bytes = std::fs::read(&p).map_err(|e| CliError::Config(format!("paths.mask_dir: {e}")))?;
            entries.push((entry.file_name().to_string_lossy().into_owned(), sha256_hex(&bytes)));
        }
    }
    entries.sort();
    Ok(sha256_parts(
        entries.iter().flat_map(|(n, h)| [n.as_bytes(), h.as_bytes()]),
    ))
}
