use font8x8::{UnicodeFonts, BASIC_FONTS, LATIN_FONTS};

use crate::volume::GrayImage;

pub type Rgb = [u8; 3];

/// 8-bit RGB image, row-major, 3 bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, fill: Rgb) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&fill);
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Option<Self> {
        (data.len() == width * height * 3).then_some(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_gray(img: &GrayImage) -> Self {
        let data = img.to_u8().iter().flat_map(|&v| [v, v, v]).collect();
        Self {
            width: img.width,
            height: img.height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Rgb {
        let o = 3 * (y * self.width + x);
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: usize, y: usize, c: Rgb) {
        if x < self.width && y < self.height {
            let o = 3 * (y * self.width + x);
            self.data[o..o + 3].copy_from_slice(&c);
        }
    }

    pub fn fill_rect(&mut self, r: Rect, c: Rgb) {
        for y in r.y..(r.y + r.h).min(self.height) {
            for x in r.x..(r.x + r.w).min(self.width) {
                self.put(x, y, c);
            }
        }
    }

    /// Outline of `thickness` pixels drawn inward from the edge of `r`.
    pub fn stroke_rect(&mut self, r: Rect, thickness: usize, c: Rgb) {
        if r.w == 0 || r.h == 0 {
            return;
        }
        let t = thickness.min(r.w).min(r.h);
        self.fill_rect(Rect::new(r.x, r.y, r.w, t), c);
        self.fill_rect(Rect::new(r.x, r.y + r.h - t, r.w, t), c);
        self.fill_rect(Rect::new(r.x, r.y, t, r.h), c);
        self.fill_rect(Rect::new(r.x + r.w - t, r.y, t, r.h), c);
    }

    /// Copy `src` with its top-left corner at `(x, y)`, clipped.
    pub fn blit(&mut self, src: &RgbImage, x: usize, y: usize) {
        for sy in 0..src.height {
            let dy = y + sy;
            if dy >= self.height {
                break;
            }
            let w = src.width.min(self.width.saturating_sub(x));
            if w == 0 {
                break;
            }
            let s = 3 * sy * src.width;
            let d = 3 * (dy * self.width + x);
            self.data[d..d + 3 * w].copy_from_slice(&src.data[s..s + 3 * w]);
        }
    }

    /// Nearest-neighbour resize with integer index arithmetic.
    pub fn resize_nearest(&self, w: usize, h: usize) -> RgbImage {
        let mut out = RgbImage::new(w, h, [0; 3]);
        if self.width == 0 || self.height == 0 {
            return out;
        }
        for y in 0..h {
            let sy = y * self.height / h;
            for x in 0..w {
                let sx = x * self.width / w;
                out.put(x, y, self.get(sx, sy));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub const fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    pub fn right(&self) -> usize {
        self.x + self.w
    }

    pub fn bottom(&self) -> usize {
        self.y + self.h
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.right() && y >= self.y && y < self.bottom()
    }

    pub fn intersects(&self, o: &Rect) -> bool {
        self.x < o.right() && o.x < self.right() && self.y < o.bottom() && o.y < self.bottom()
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.w > 0 && self.h > 0 && self.right() <= width && self.bottom() <= height
    }

    /// Largest aspect-preserving placement of a `w` x `h` image, centred.
    pub fn letterbox(&self, w: usize, h: usize) -> Rect {
        if w == 0 || h == 0 {
            return Rect::new(self.x, self.y, 0, 0);
        }
        // Compare w/h against self.w/self.h without floating point.
        let (ow, oh) = if w * self.h >= h * self.w {
            (self.w, (h * self.w / w).max(1))
        } else {
            ((w * self.h / h).max(1), self.h)
        };
        Rect::new(self.x + (self.w - ow) / 2, self.y + (self.h - oh) / 2, ow, oh)
    }
}

pub const GLYPH: usize = 8;

/// ASCII stand-ins for typographic characters the bitmap font lacks.
fn fold_char(c: char) -> char {
    match c {
        '\u{2018}' | '\u{2019}' | '\u{201A}' | '\u{2032}' => '\'',
        '\u{201C}' | '\u{201D}' | '\u{201E}' | '\u{2033}' => '"',
        '\u{2010}'..='\u{2015}' | '\u{2212}' => '-',
        '\u{2026}' => '.',
        '\u{00A0}' | '\t' | '\n' | '\r' => ' ',
        c => c,
    }
}

fn glyph(c: char) -> [u8; 8] {
    let c = fold_char(c);
    BASIC_FONTS
        .get(c)
        .or_else(|| LATIN_FONTS.get(c))
        .or_else(|| BASIC_FONTS.get('?'))
        .unwrap_or([0; 8])
}

/// Draw `text` on one line at `scale` pixels per font pixel.
pub fn draw_text(img: &mut RgbImage, x: usize, y: usize, text: &str, scale: usize, c: Rgb) {
    for (n, ch) in text.chars().enumerate() {
        let g = glyph(ch);
        let ox = x + n * GLYPH * scale;
        for (row, bits) in g.iter().enumerate() {
            for col in 0..GLYPH {
                if bits >> col & 1 == 1 {
                    img.fill_rect(
                        Rect::new(ox + col * scale, y + row * scale, scale, scale),
                        c,
                    );
                }
            }
        }
    }
}

/// Greedy word wrap to at most `max_chars` per line; overlong words are split.
pub fn wrap(text: &str, max_chars: usize) -> Vec<String> {
    let max_chars = max_chars.max(1);
    let mut lines = Vec::new();
    let mut line = String::new();
    for word in text.split_whitespace() {
        let mut word: Vec<char> = word.chars().collect();
        while word.len() > max_chars {
            if !line.is_empty() {
                lines.push(std::mem::take(&mut line));
            }
            lines.push(word.drain(..max_chars).collect());
        }
        let word: String = word.into_iter().collect();
        if word.is_empty() {
            continue;
        }
        let len = line.chars().count();
        if len == 0 {
            line = word;
        } else if len + 1 + word.chars().count() <= max_chars {
            line.push(' ');
            line.push_str(&word);
        } else {
            lines.push(std::mem::replace(&mut line, word));
        }
    }
    if !line.is_empty() {
        lines.push(line);
    }
    lines
}
