use std::collections::HashMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{MaskData, SegError, SegmentationProvider};
use crate::provider::{check_status, transport, ProviderError, RetryPolicy};
use crate::volume::CtVolume;

/// File-system-safe form of an organ label: lowercase alphanumerics joined by
/// single underscores, e.g. `thoracic vertebrae 7 (t7)` -> `thoracic_vertebrae_7_t7`.
pub fn sanitize_label(label: &str) -> String {
    let mut out = String::with_capacity(label.len());
    for c in label.trim().chars().flat_map(|c| c.to_lowercase()) {
        if c.is_ascii_alphanumeric() {
            out.push(c);
        } else if !out.is_empty() && !out.ends_with('_') {
            out.push('_');
        }
    }
    while out.ends_with('_') {
        out.pop();
    }
    out
}

/// `<sanitized label>.nii.gz`
pub fn mask_file_name(label: &str) -> String {
    format!("{}.nii.gz", sanitize_label(label))
}

/// Reads precomputed masks from a directory of `<sanitized label>.nii.gz`
/// (or `.nii`) files. A missing file means the organ was not found.
#[derive(Debug, Clone)]
pub struct FileMaskProvider {
    dir: PathBuf,
}

impl FileMaskProvider {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
}

impl SegmentationProvider for FileMaskProvider {
    fn name(&self) -> &str {
        "files"
    }

    fn segment(&self, _vol: &CtVolume, organ: &str) -> Result<MaskData, SegError> {
        let stem = sanitize_label(organ);
        for ext in ["nii.gz", "nii"] {
            let path = self.dir.join(format!("{stem}.{ext}"));
            if path.is_file() {
                let bytes = std::fs::read(&path).map_err(|e| SegError::Io {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
                return MaskData::from_nifti_bytes(&bytes);
            }
        }
        log::info!("no mask file for {organ:?} in {}", self.dir.display());
        Err(SegError::EmptyMask {
            organ: organ.to_string(),
        })
    }
}

/// Analytic mask shape in voxel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    /// Inclusive index box, clipped to the volume.
    Box { min: [usize; 3], max: [usize; 3] },
    Ellipsoid { center: [f64; 3], radii: [f64; 3] },
    Union { parts: Vec<Shape> },
    Empty,
}

impl Shape {
    /// Whether voxel `p` is inside the shape.
    pub fn contains(&self, p: [usize; 3]) -> bool {
        match self {
            Shape::Empty => false,
            Shape::Box { min, max } => (0..3).all(|a| min[a] <= p[a] && p[a] <= max[a]),
            Shape::Ellipsoid { center, radii } => {
                let d: f64 = (0..3)
                    .map(|a| ((p[a] as f64 - center[a]) / radii[a].max(1e-9)).powi(2))
                    .sum();
                d <= 1.0
            }
            Shape::Union { parts } => parts.iter().any(|s| s.contains(p)),
        }
    }

    pub fn rasterize(&self, dims: [usize; 3]) -> Vec<u8> {
        let [nx, ny, _] = dims;
        let len = dims.iter().product();
        (0..len)
            .map(|idx| u8::from(self.contains([idx % nx, (idx / nx) % ny, idx / (nx * ny)])))
            .collect()
    }
}

/// Deterministic synthetic masks for tests and offline runs.
///
/// Labels with an explicit shape use it. Other labels get an ellipsoid whose
/// placement is derived from a hash of the label when `auto` is enabled, and
/// an empty mask otherwise.
#[derive(Debug, Clone, Default)]
pub struct PhantomProvider {
    shapes: HashMap<String, Shape>,
    auto: bool,
}

impl PhantomProvider {
    pub fn new() -> Self {
        Self::default()
    }

    /// Provider that invents a shape for every label.
    pub fn auto() -> Self {
        Self {
            shapes: HashMap::new(),
            auto: true,
        }
    }

    pub fn with_shape(mut self, organ: &str, shape: Shape) -> Self {
        self.shapes.insert(crate::report::normalize_label(organ), shape);
        self
    }

    /// Shape used for `organ` on a volume of `dims`.
    pub fn shape_for(&self, organ: &str, dims: [usize; 3]) -> Shape {
        if let Some(s) = self.shapes.get(&crate::report::normalize_label(organ)) {
            return s.clone();
        }
        if !self.auto {
            return Shape::Empty;
        }
        let h = crate::hashing::sha256_hex(crate::report::normalize_label(organ).as_bytes());
        let frac = |n: usize| -> f64 {
            let byte = u8::from_str_radix(&h[2 * n..2 * n + 2], 16).unwrap_or(128);
            byte as f64 / 255.0
        };
        let center = std::array::from_fn(|a| (dims[a] as f64 - 1.0) * (0.4 + 0.2 * frac(a)));
        let radii = std::array::from_fn(|a| (dims[a] as f64 * (0.12 + 0.06 * frac(a + 3))).max(1.0));
        Shape::Ellipsoid { center, radii }
    }
}

impl SegmentationProvider for PhantomProvider {
    fn name(&self) -> &str {
        "phantom"
    }

    fn segment(&self, vol: &CtVolume, organ: &str) -> Result<MaskData, SegError> {
        let dims = vol.dims();
        Ok(MaskData {
            grid: *vol.grid(),
            voxels: self.shape_for(organ, dims).rasterize(dims),
        })
    }
}

#[derive(Debug, Deserialize)]
struct ErrorBody {
    code: serde_json::Value,
    message: String,
}

/// Remote text-prompted segmentation service.
///
/// `POST <endpoint>` as `multipart/form-data` with a `volume` part (gzip NIfTI
/// bytes of the canonical volume) and an `organ` text part. Success is the
/// NIfTI mask body on the same grid; failures are JSON `{code, message}`.
pub struct HttpSegmentation {
    endpoint: String,
    policy: RetryPolicy,
    client: reqwest::blocking::Client,
}

impl HttpSegmentation {
    pub fn new(endpoint: impl Into<String>, policy: RetryPolicy) -> Result<Self, ProviderError> {
        Ok(Self {
            endpoint: endpoint.into(),
            client: policy.client()?,
            policy,
        })
    }

    fn attempt(&self, volume_bytes: &[u8], organ: &str) -> Result<Vec<u8>, ProviderError> {
        let part = reqwest::blocking::multipart::Part::bytes(volume_bytes.to_vec())
            .file_name("volume.nii.gz")
            .mime_str("application/octet-stream")
            .map_err(transport)?;
        let form = reqwest::blocking::multipart::Form::new()
            .part("volume", part)
            .text("organ", organ.to_string());
        let resp = self
            .client
            .post(&self.endpoint)
            .multipart(form)
            .send()
            .map_err(transport)?;
        let resp = check_status(resp).map_err(|e| match e {
            ProviderError::Status { status, body } => ProviderError::Status {
                status,
                body: describe_error_body(&body),
            },
            other => other,
        })?;
        let bytes = resp.bytes().map_err(transport)?;
        Ok(bytes.to_vec())
    }
}

fn describe_error_body(body: &str) -> String {
    match serde_json::from_str::<ErrorBody>(body) {
        Ok(e) => format!("{}: {}", e.code, e.message),
        Err(_) => body.to_string(),
    }
}

impl SegmentationProvider for HttpSegmentation {
    fn name(&self) -> &str {
        "http"
    }

    fn segment(&self, vol: &CtVolume, organ: &str) -> Result<MaskData, SegError> {
        let body = vol.to_nifti_bytes(true);
        let bytes = self.policy.run(|| self.attempt(&body, organ))?;
        if bytes.first() == Some(&b'{') {
            let text = String::from_utf8_lossy(&bytes);
            return Err(SegError::ProviderFailure(ProviderError::BadResponse(
                describe_error_body(&text),
            )));
        }
        MaskData::from_nifti_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::report::OrganVocabulary;
    use crate::segmentation::{segment, OrganMask};

    fn volume() -> CtVolume {
        CtVolume::from_fn(Grid::new([8, 7, 6], [1.0, 1.0, 3.0], [0.0; 3]), "v", |_| 0.0).unwrap()
    }

    #[test]
    fn sanitizing() {
        assert_eq!(sanitize_label("thoracic vertebrae 7 (t7)"), "thoracic_vertebrae_7_t7");
        assert_eq!(sanitize_label("Left Lung  Lower lobe"), "left_lung_lower_lobe");
        assert_eq!(mask_file_name("heart"), "heart.nii.gz");
    }

    #[test]
    fn every_vocabulary_label_has_a_distinct_file_name() {
        let vocab = OrganVocabulary::builtin();
        let mut names: Vec<String> = vocab.labels().iter().map(|l| sanitize_label(l)).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), vocab.len());
    }

    #[test]
    fn file_provider_reads_and_reports_missing() {
        let dir = tempfile::tempdir().unwrap();
        let vol = volume();
        let mut v = vec![0u8; vol.grid().len()];
        v[10] = 1;
        let m = OrganMask::new("left lung", *vol.grid(), v, "v").unwrap();
        std::fs::write(dir.path().join("left_lung.nii.gz"), m.to_nifti_bytes(true)).unwrap();
        let p = FileMaskProvider::new(dir.path());
        let vocab = OrganVocabulary::builtin();
        let got = segment(&vol, "left lung", &vocab, &p).unwrap();
        assert_eq!(got.voxels(), m.voxels());
        assert!(matches!(
            segment(&vol, "heart", &vocab, &p),
            Err(SegError::EmptyMask { .. })
        ));
    }

    #[test]
    fn auto_phantom_is_deterministic_and_nonempty() {
        let vol = CtVolume::from_fn(Grid::new([32, 32, 16], [1.0; 3], [0.0; 3]), "v", |_| 0.0)
            .unwrap();
        let p = PhantomProvider::auto();
        let a = p.segment(&vol, "heart").unwrap();
        let b = p.segment(&vol, "heart").unwrap();
        assert_eq!(a, b);
        assert!(a.voxels.iter().any(|&x| x == 1));
        let c = p.segment(&vol, "aorta").unwrap();
        assert_ne!(a.voxels, c.voxels);
    }

    #[test]
    fn http_contract_success_and_error() {
        let vol = volume();
        let mut v = vec![0u8; vol.grid().len()];
        v[3] = 1;
        let mask = OrganMask::new("heart", *vol.grid(), v, "v").unwrap();
        let mut server = mockito::Server::new();
        let ok = server
            .mock("POST", "/segment")
            .match_header(
                "content-type",
                mockito::Matcher::Regex("multipart/form-data".into()),
            )
            .match_body(mockito::Matcher::Regex("name=\"organ\"\r\n\r\nheart".into()))
            .with_status(200)
            .with_body(mask.to_nifti_bytes(true))
            .create();
        let p = HttpSegmentation::new(format!("{}/segment", server.url()), RetryPolicy::default())
            .unwrap();
        let got = segment(&vol, "heart", &OrganVocabulary::builtin(), &p).unwrap();
        assert_eq!(got.voxels(), mask.voxels());
        ok.assert();

        let err = server
            .mock("POST", "/segment")
            .match_body(mockito::Matcher::Regex("name=\"organ\"\r\n\r\naorta".into()))
            .with_status(400)
            .with_body(r#"{"code": 400, "message": "unknown organ"}"#)
            .create();
        let e = segment(&vol, "aorta", &OrganVocabulary::builtin(), &p).unwrap_err();
        match e {
            SegError::ProviderFailure(ProviderError::Status { status, body }) => {
                assert_eq!(status, 400);
                assert!(body.contains("unknown organ"));
            }
            other => panic!("unexpected {other:?}"),
        }
        err.assert();
    }
}
