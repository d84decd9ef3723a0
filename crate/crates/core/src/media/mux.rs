use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::audio::Pcm;
use super::image::RgbImage;
use super::video::FrameSource;
use super::MediaError;
use crate::hashing::sha256_hex;

pub const AUDIO_FILE: &str = "narration.wav";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const FRAMES_DIR: &str = "frames";

/// Written next to the numbered frames when no encoder is available.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub fps: u32,
    pub resolution: [usize; 2],
    pub frame_count: usize,
    pub audio_file: String,
    pub duration: f64,
    /// Hash of the per-frame hashes, newline-joined.
    pub frames_sha256: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MuxTarget {
    Video(PathBuf),
    /// Frame directory, WAV and manifest.
    Fallback(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MuxReport {
    pub target: MuxTarget,
    pub frame_count: usize,
    pub duration: f64,
    /// SHA-256 of each frame's raw RGB bytes, in order.
    pub frame_hashes: Vec<String>,
    pub frames_sha256: String,
}

/// Directory the fallback artifact goes to: `out` without its extension.
pub fn fallback_dir(out: &Path) -> PathBuf {
    if out.extension().is_some() {
        out.with_extension("")
    } else {
        out.to_path_buf()
    }
}

/// WAV written beside `out` for the encoder's `{audio}` input.
pub fn audio_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".wav");
    out.with_file_name(name)
}

/// Expand `{fps}`, `{w}`, `{h}`, `{out}` and `{audio}` in each word of a
/// shell-quoted command template.
pub fn expand_template(
    template: &str,
    fps: u32,
    size: (usize, usize),
    out: &Path,
    audio: &Path,
) -> Result<Vec<String>, MediaError> {
    let words = shlex::split(template).ok_or_else(|| {
        MediaError::InvalidInput(format!("encoder command {template:?} has unbalanced quotes"))
    })?;
    let out = out.to_string_lossy();
    let audio = audio.to_string_lossy();
    Ok(words
        .into_iter()
        .map(|w| {
            w.replace("{fps}", &fps.to_string())
                .replace("{w}", &size.0.to_string())
                .replace("{h}", &size.1.to_string())
                .replace("{out}", &out)
                .replace("{audio}", &audio)
        })
        .collect())
}

/// Write the final video.
///
/// With an encoder template, the audio goes to a WAV beside `out` and frames
/// are piped to the encoder's stdin as raw RGB24 in index order. Without one,
/// or when its program is not installed, a fallback directory holds numbered
/// PNG frames, the WAV and a manifest.
pub fn mux(
    frames: &dyn FrameSource,
    audio: &Pcm,
    fps: u32,
    out: &Path,
    encoder_cmd: Option<&str>,
) -> Result<MuxReport, MediaError> {
    if fps == 0 {
        return Err(MediaError::InvalidInput("fps must be positive".into()));
    }
    let n = frames.frame_count();
    let video = n as f64 / fps as f64;
    let tolerance = 1.0 / fps as f64 + 1e-9;
    if (video - audio.duration()).abs() > tolerance {
        return Err(MediaError::AvSyncMismatch {
            video,
            audio: audio.duration(),
            fps,
        });
    }
    let wav = audio.to_wav_bytes()?;
    let template = encoder_cmd.map(str::trim).filter(|t| !t.is_empty());
    if let Some(template) = template {
        let audio_file = audio_path(out);
        let words = expand_template(template, fps, frames.size(), out, &audio_file)?;
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&audio_file, &wav)?;
        match Command::new(&words[0])
            .args(&words[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
        {
            Ok(child) => {
                let hashes = pipe_frames(child, frames)?;
                return Ok(report(MuxTarget::Video(out.to_path_buf()), hashes, video));
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                log::warn!("encoder {:?} not found; writing frame directory", words[0]);
                let _ = std::fs::remove_file(&audio_file);
            }
            Err(e) => return Err(e.into()),
        }
    }
    write_fallback(frames, &wav, fps, &fallback_dir(out), video)
}

fn report(target: MuxTarget, frame_hashes: Vec<String>, duration: f64) -> MuxReport {
    MuxReport {
        target,
        frame_count: frame_hashes.len(),
        duration,
        frames_sha256: sha256_hex(frame_hashes.join("\n").as_bytes()),
        frame_hashes,
    }
}

/// Compose frames in parallel batches and hand them to `sink` in order.
fn for_each_frame<T: Send>(
    frames: &dyn FrameSource,
    map: impl Fn(RgbImage) -> Result<T, MediaError> + Sync,
    mut sink: impl FnMut(usize, T) -> Result<(), MediaError>,
) -> Result<(), MediaError> {
    let n = frames.frame_count();
    let (w, h) = frames.size();
    let batch = (rayon::current_num_threads() * 2).max(1);
    for start in (0..n).step_by(batch) {
        let end = (start + batch).min(n);
        let done: Vec<T> = (start..end)
            .into_par_iter()
            .map(|i| {
                let f = frames.frame(i)?;
                if (f.width, f.height) != (w, h) {
                    return Err(MediaError::InvalidInput(format!(
                        "frame {i} is {}x{}, expected {w}x{h}",
                        f.width, f.height
                    )));
                }
                map(f)
            })
            .collect::<Result<_, _>>()?;
        for (k, t) in done.into_iter().enumerate() {
            sink(start + k, t)?;
        }
    }
    Ok(())
}

fn pipe_frames(
    mut child: std::process::Child,
    frames: &dyn FrameSource,
) -> Result<Vec<String>, MediaError> {
    let mut stderr = child.stderr.take().expect("piped stderr");
    let reader = std::thread::spawn(move || {
        let mut s = String::new();
        let _ = stderr.read_to_string(&mut s);
        s
    });
    let mut stdin = child.stdin.take().expect("piped stdin");
    let mut hashes = Vec::with_capacity(frames.frame_count());
    let written = for_each_frame(
        frames,
        |f| Ok((sha256_hex(&f.data), f)),
        |_, (hash, f)| {
            hashes.push(hash);
            stdin.write_all(&f.data).map_err(MediaError::Io)
        },
    );
    drop(stdin);
    let status = child.wait()?;
    let stderr = reader.join().unwrap_or_default();
    if !status.success() {
        return Err(MediaError::EncoderFailure {
            status: status.code(),
            stderr,
        });
    }
    match written {
        Err(MediaError::Io(e)) => Err(MediaError::EncoderFailure {
            status: status.code(),
            stderr: format!("encoder stopped reading frames: {e}\n{stderr}"),
        }),
        Err(e) => Err(e),
        Ok(()) => Ok(hashes),
    }
}

fn write_fallback(
    frames: &dyn FrameSource,
    wav: &[u8],
    fps: u32,
    dir: &Path,
    duration: f64,
) -> Result<MuxReport, MediaError> {
    let frame_dir = dir.join(FRAMES_DIR);
    std::fs::create_dir_all(&frame_dir)?;
    let mut hashes = Vec::with_capacity(frames.frame_count());
    for_each_frame(
        frames,
        |f| Ok((sha256_hex(&f.data), encode_png(&f)?)),
        |i, (hash, png)| {
            hashes.push(hash);
            std::fs::write(frame_dir.join(format!("{i:06}.png")), png)?;
            Ok(())
        },
    )?;
    std::fs::write(dir.join(AUDIO_FILE), wav)?;
    let (w, h) = frames.size();
    let rep = report(MuxTarget::Fallback(dir.to_path_buf()), hashes, duration);
    let manifest = Manifest {
        fps,
        resolution: [w, h],
        frame_count: rep.frame_count,
        audio_file: AUDIO_FILE.to_string(),
        duration,
        frames_sha256: rep.frames_sha256.clone(),
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    std::fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(rep)
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>, MediaError> {
    let mut buf = Vec::new();
    let mut enc = png::Encoder::new(&mut buf, img.width as u32, img.height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    enc.set_compression(png::Compression::Fast);
    let png_err = |e: png::EncodingError| MediaError::InvalidInput(format!("PNG: {e}"));
    let mut w = enc.write_header().map_err(png_err)?;
    w.write_image_data(&img.data).map_err(png_err)?;
    w.finish().map_err(png_err)?;
    Ok(buf)
}
