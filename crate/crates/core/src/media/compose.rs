use serde::{Deserialize, Serialize};

use super::image::{draw_text, wrap, Rect, Rgb, RgbImage, GLYPH};
use super::MediaError;
use crate::segmentation::BoundingBox3D;
use crate::volume::{slice_pixel, GrayImage};

pub const BACKGROUND: Rgb = [12, 14, 20];
pub const HIGHLIGHT: Rgb = [255, 48, 48];
pub const TITLE_COLOR: Rgb = [196, 202, 214];
pub const CAPTION_COLOR: Rgb = [240, 240, 240];
pub const BOX_THICKNESS: usize = 2;
pub const TITLE_SCALE: usize = 2;
pub const CAPTION_SCALE: usize = 3;
pub const MIN_CAPTION_SCALE: usize = 2;
pub const DEFAULT_AVATAR_FRACTION: f64 = 0.22;

/// Pixel rectangles of one video frame.
///
/// The default arrangement puts the three panels side by side across the top
/// and the avatar bottom-left, with the caption band to its right. An avatar
/// rectangle may overlap a panel (it is drawn last, as an overlay); no other
/// pair may overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameLayout {
    pub width: usize,
    pub height: usize,
    pub query: Rect,
    pub normal: Rect,
    pub organ3d: Rect,
    pub avatar: Rect,
    pub caption: Rect,
}

impl FrameLayout {
    pub fn new(width: usize, height: usize, avatar_fraction: f64) -> Result<Self, MediaError> {
        if !(avatar_fraction > 0.0 && avatar_fraction < 1.0) {
            return Err(MediaError::InvalidLayout(format!(
                "avatar fraction {avatar_fraction} outside (0, 1)"
            )));
        }
        let m = (height / 60).max(2);
        let a = (height as f64 * avatar_fraction).round() as usize;
        let top = height.checked_sub(3 * m + a).unwrap_or(0);
        let pw = width.saturating_sub(4 * m) / 3;
        let cx = 2 * m + a;
        let layout = Self {
            width,
            height,
            query: Rect::new(m, m, pw, top),
            normal: Rect::new(2 * m + pw, m, pw, top),
            organ3d: Rect::new(3 * m + 2 * pw, m, pw, top),
            avatar: Rect::new(m, height.saturating_sub(m + a), a, a),
            caption: Rect::new(cx, height.saturating_sub(m + a), width.saturating_sub(cx + m), a),
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn panels(&self) -> [(&'static str, Rect); 3] {
        [
            ("query", self.query),
            ("normal", self.normal),
            ("organ3d", self.organ3d),
        ]
    }

    pub fn validate(&self) -> Result<(), MediaError> {
        let named = [
            ("query", self.query),
            ("normal", self.normal),
            ("organ3d", self.organ3d),
            ("avatar", self.avatar),
            ("caption", self.caption),
        ];
        for (name, r) in named {
            if !r.fits(self.width, self.height) {
                return Err(MediaError::InvalidLayout(format!(
                    "{name} rectangle {r:?} does not fit {}x{}",
                    self.width, self.height
                )));
            }
        }
        for (i, (a, ra)) in named.iter().enumerate() {
            for (b, rb) in &named[i + 1..] {
                let overlay = *a == "avatar" && *b != "caption" || *b == "avatar" && *a != "caption";
                if ra.intersects(rb) && !overlay {
                    return Err(MediaError::InvalidLayout(format!("{a} overlaps {b}")));
                }
            }
        }
        if self.avatar.x >= self.width / 2 || self.avatar.bottom() * 2 <= self.height {
            return Err(MediaError::InvalidLayout(
                "avatar must sit in the bottom-left quadrant".into(),
            ));
        }
        Ok(())
    }
}

/// A display slice with an optional highlight, in slice pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceView {
    pub image: GrayImage,
    pub highlight: Option<Rect>,
}

/// Pixel rectangle of `bbox` on axial slice `z`, or `None` when the slice is
/// outside the box.
pub fn slice_highlight(bbox: &BoundingBox3D, z: usize, nx: usize, ny: usize) -> Option<Rect> {
    if z < bbox.min[2] || z > bbox.max[2] || bbox.max[0] >= nx || bbox.max[1] >= ny {
        return None;
    }
    let (c0, r0) = slice_pixel(bbox.max[0], bbox.max[1], nx, ny);
    let (c1, r1) = slice_pixel(bbox.min[0], bbox.min[1], nx, ny);
    Some(Rect::new(c0, r0, c1 - c0 + 1, r1 - r0 + 1))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FrameInputs<'a> {
    pub query: Option<&'a SliceView>,
    pub normal: Option<&'a SliceView>,
    pub organ: Option<&'a GrayImage>,
    pub avatar: Option<&'a RgbImage>,
    pub caption: &'a str,
}

const TITLE_STRIP: usize = GLYPH * TITLE_SCALE + 6;

/// Image area of a panel: below its title strip when there is room for one.
pub fn panel_content(rect: Rect) -> Rect {
    if rect.h > 2 * TITLE_STRIP {
        Rect::new(rect.x, rect.y + TITLE_STRIP, rect.w, rect.h - TITLE_STRIP)
    } else {
        rect
    }
}

const TITLES: [&str; 3] = ["Your scan", "Healthy reference", "3D view"];

/// Render one frame. Pure: equal inputs give equal pixels.
pub fn compose_frame(layout: &FrameLayout, inputs: &FrameInputs<'_>) -> Result<RgbImage, MediaError> {
    let mut img = RgbImage::new(layout.width, layout.height, BACKGROUND);
    let gray_panels: [(Rect, &str, Option<(&GrayImage, Option<Rect>)>); 3] = [
        (
            layout.query,
            TITLES[0],
            inputs.query.map(|v| (&v.image, v.highlight)),
        ),
        (
            layout.normal,
            TITLES[1],
            inputs.normal.map(|v| (&v.image, v.highlight)),
        ),
        (layout.organ3d, TITLES[2], inputs.organ.map(|g| (g, None))),
    ];
    for (rect, title, content) in gray_panels {
        let Some((gray, highlight)) = content else {
            continue;
        };
        let area = panel_content(rect);
        if area != rect {
            let max_chars = rect.w / (GLYPH * TITLE_SCALE);
            let shown: String = title.chars().take(max_chars).collect();
            draw_text(&mut img, rect.x, rect.y, &shown, TITLE_SCALE, TITLE_COLOR);
        }
        draw_gray(&mut img, area, gray, highlight);
    }
    if let Some(av) = inputs.avatar {
        let lb = layout.avatar.letterbox(av.width, av.height);
        if lb.w > 0 && lb.h > 0 {
            img.blit(&av.resize_nearest(lb.w, lb.h), lb.x, lb.y);
        }
    }
    draw_caption(&mut img, layout.caption, inputs.caption)?;
    Ok(img)
}

fn draw_gray(img: &mut RgbImage, area: Rect, gray: &GrayImage, highlight: Option<Rect>) {
    let lb = area.letterbox(gray.width, gray.height);
    if lb.w == 0 || lb.h == 0 {
        return;
    }
    let g8 = gray.to_u8();
    for y in 0..lb.h {
        let sy = y * gray.height / lb.h;
        for x in 0..lb.w {
            let sx = x * gray.width / lb.w;
            let v = g8[sy * gray.width + sx];
            img.put(lb.x + x, lb.y + y, [v, v, v]);
        }
    }
    if let Some(h) = highlight {
        // Source pixel edges mapped onto the scaled image.
        let x0 = lb.x + h.x * lb.w / gray.width;
        let x1 = lb.x + (h.right() * lb.w).div_ceil(gray.width);
        let y0 = lb.y + h.y * lb.h / gray.height;
        let y1 = lb.y + (h.bottom() * lb.h).div_ceil(gray.height);
        let r = Rect::new(x0, y0, (x1 - x0).max(BOX_THICKNESS), (y1 - y0).max(BOX_THICKNESS));
        img.stroke_rect(r, BOX_THICKNESS, HIGHLIGHT);
    }
}

/// Lines of `text` laid out in `band`, trying the preferred scale first.
pub fn caption_lines(band: Rect, text: &str) -> Result<(usize, Vec<String>), MediaError> {
    if text.trim().is_empty() {
        return Ok((CAPTION_SCALE, Vec::new()));
    }
    for scale in (MIN_CAPTION_SCALE..=CAPTION_SCALE).rev() {
        let (chars, rows) = caption_capacity(band, scale);
        if chars == 0 || rows == 0 {
            continue;
        }
        let lines = wrap(text, chars);
        if lines.len() <= rows {
            return Ok((scale, lines));
        }
    }
    Err(MediaError::LayoutOverflow(format!(
        "{} characters do not fit a {}x{} caption band",
        text.chars().count(),
        band.w,
        band.h
    )))
}

/// Characters per line and line count of `band` at `scale`.
pub fn caption_capacity(band: Rect, scale: usize) -> (usize, usize) {
    let line_h = (GLYPH + 2) * scale;
    (band.w / (GLYPH * scale), band.h / line_h)
}

fn draw_caption(img: &mut RgbImage, band: Rect, text: &str) -> Result<(), MediaError> {
    let (scale, lines) = caption_lines(band, text)?;
    let line_h = (GLYPH + 2) * scale;
    for (i, line) in lines.iter().enumerate() {
        draw_text(img, band.x, band.y + i * line_h, line, scale, CAPTION_COLOR);
    }
    Ok(())
}

/// Time-sliced subtitles for one narration.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptionTrack {
    /// `(start seconds, text)`, ascending.
    pub chunks: Vec<(f64, String)>,
}

impl CaptionTrack {
    /// Split `text` into pages that fit `band` at the minimum scale when it
    /// does not fit whole. Each page is on screen for a share of `duration`
    /// proportional to its length.
    pub fn new(text: &str, duration: f64, band: Rect) -> Self {
        if text.trim().is_empty() {
            return Self { chunks: Vec::new() };
        }
        if caption_lines(band, text).is_ok() {
            return Self {
                chunks: vec![(0.0, text.to_string())],
            };
        }
        let (chars, rows) = caption_capacity(band, MIN_CAPTION_SCALE);
        let pages: Vec<String> = wrap(text, chars.max(1))
            .chunks(rows.max(1))
            .map(|c| c.join(" "))
            .collect();
        let total: usize = pages.iter().map(|p| p.chars().count()).sum();
        let mut start = 0usize;
        let chunks = pages
            .into_iter()
            .map(|p| {
                let t = duration * start as f64 / total.max(1) as f64;
                start += p.chars().count();
                (t, p)
            })
            .collect();
        Self { chunks }
    }

    pub fn at(&self, t: f64) -> &str {
        let i = self.chunks.partition_point(|(s, _)| *s <= t);
        match i {
            0 => self.chunks.first().map_or("", |c| c.1.as_str()),
            i => &self.chunks[i - 1].1,
        }
    }
}
