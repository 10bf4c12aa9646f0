//! Bundled toy corpora so the toolkit is self-contained: procedural
//! digit-style glyphs, random texture blobs (for memorization/reconstruction
//! tasks), and a combinatorial Q&A fact corpus. External corpora can be
//! supplied through the manifest format instead.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::text::ParaphraseRules;
use super::{ImageSample, ImageShape, SampleId};
use crate::rng::Stream;
use crate::{Error, Result};

/// An untokenized question/answer pair, as ingested or generated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawQa {
    pub question: String,
    pub answer: String,
}

const GLYPHS: [[u8; 7]; 10] = [
    [0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110],
    [0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110],
    [0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111],
    [0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110],
    [0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010],
    [0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110],
    [0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110],
    [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000],
    [0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110],
    [0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100],
];

fn render_glyph(
    canvas: &mut [f32],
    height: usize,
    width: usize,
    channel: usize,
    digit: usize,
    scale: usize,
    ox: isize,
    oy: isize,
    intensity: f32,
) {
    let glyph = &GLYPHS[digit];
    for (gy, row) in glyph.iter().enumerate() {
        for gx in 0..5 {
            if row & (1 << (4 - gx)) == 0 {
                continue;
            }
            for sy in 0..scale {
                for sx in 0..scale {
                    let y = oy + (gy * scale + sy) as isize;
                    let x = ox + (gx * scale + sx) as isize;
                    if y >= 0 && x >= 0 && (y as usize) < height && (x as usize) < width {
                        canvas[(channel * height + y as usize) * width + x as usize] = intensity;
                    }
                }
            }
        }
    }
}

/// Grayscale 28x28 digit-style corpus, `per_class` samples per digit 0-9.
/// Each sample gets a seeded position/intensity jitter and mild background
/// texture.
pub fn digit_corpus(per_class: usize, seed: u64) -> Vec<ImageSample> {
    let shape = ImageShape { depth: 1, height: 28, width: 28 };
    let stream = Stream::new(seed).child("digits");
    let mut out = Vec::with_capacity(per_class * 10);
    let mut id = 0u32;
    for digit in 0..10 {
        for k in 0..per_class {
            let mut rng = stream.index(digit as u64 * 1_000_003 + k as u64).rng();
            let mut pixels = vec![0.0f32; shape.pixels()];
            for p in pixels.iter_mut() {
                *p = rng.random_range(0.0..0.05);
            }
            let ox = 4 + rng.random_range(-2i32..=2) as isize;
            let oy = 2 + rng.random_range(-2i32..=2) as isize;
            let intensity = rng.random_range(0.75..1.0);
            render_glyph(&mut pixels, 28, 28, 0, digit, 3, ox + 2, oy, intensity);
            out.push(ImageSample { id: SampleId(id), label: digit as u32, shape, pixels });
            id += 1;
        }
    }
    out
}

/// RGB 32x32 variant of the digit corpus; each class renders in its own hue.
pub fn digit_corpus_rgb(per_class: usize, seed: u64) -> Vec<ImageSample> {
    const COLORS: [[f32; 3]; 10] = [
        [1.0, 0.2, 0.2],
        [0.2, 1.0, 0.2],
        [0.2, 0.4, 1.0],
        [1.0, 0.8, 0.2],
        [0.9, 0.3, 0.9],
        [0.2, 0.9, 0.9],
        [1.0, 0.6, 0.3],
        [0.6, 0.6, 1.0],
        [0.5, 0.9, 0.4],
        [0.9, 0.5, 0.6],
    ];
    let shape = ImageShape { depth: 3, height: 32, width: 32 };
    let stream = Stream::new(seed).child("digits-rgb");
    let mut out = Vec::with_capacity(per_class * 10);
    let mut id = 0u32;
    for digit in 0..10 {
        for k in 0..per_class {
            let mut rng = stream.index(digit as u64 * 1_000_003 + k as u64).rng();
            let mut pixels = vec![0.0f32; shape.pixels()];
            for p in pixels.iter_mut() {
                *p = rng.random_range(0.0..0.05);
            }
            let ox = 6 + rng.random_range(-2i32..=2) as isize;
            let oy = 2 + rng.random_range(-2i32..=2) as isize;
            let intensity = rng.random_range(0.75..1.0);
            for c in 0..3 {
                render_glyph(&mut pixels, 32, 32, c, digit, 4, ox, oy, intensity * COLORS[digit][c]);
            }
            out.push(ImageSample { id: SampleId(id), label: digit as u32, shape, pixels });
            id += 1;
        }
    }
    out
}

/// Random smoothed texture blobs: every sample is a unique high-contrast
/// pattern, so models must memorize individual samples rather than class
/// structure. This is the corpus behind the reconstruction-based experiments.
pub fn blob_corpus(classes: usize, per_class: usize, height: usize, width: usize, seed: u64) -> Vec<ImageSample> {
    let shape = ImageShape { depth: 1, height, width };
    let stream = Stream::new(seed).child("blobs");
    let grid = 4usize;
    let mut out = Vec::with_capacity(classes * per_class);
    let mut id = 0u32;
    for class in 0..classes {
        for k in 0..per_class {
            let mut rng = stream.index(class as u64 * 1_000_003 + k as u64).rng();
            let mut coarse = vec![0.0f64; grid * grid];
            for c in coarse.iter_mut() {
                *c = rng.random_range(0.0..1.0);
            }
            let mut pixels = vec![0.0f32; shape.pixels()];
            for y in 0..height {
                for x in 0..width {
                    let gy = y as f64 * (grid - 1) as f64 / (height - 1) as f64;
                    let gx = x as f64 * (grid - 1) as f64 / (width - 1) as f64;
                    let (y0, x0) = (gy as usize, gx as usize);
                    let (y1, x1) = ((y0 + 1).min(grid - 1), (x0 + 1).min(grid - 1));
                    let (fy, fx) = (gy - y0 as f64, gx - x0 as f64);
                    let v = coarse[y0 * grid + x0] * (1.0 - fy) * (1.0 - fx)
                        + coarse[y0 * grid + x1] * (1.0 - fy) * fx
                        + coarse[y1 * grid + x0] * fy * (1.0 - fx)
                        + coarse[y1 * grid + x1] * fy * fx;
                    // stretch contrast so blobs are far from mid-gray
                    pixels[y * width + x] = ((v - 0.5) * 2.4 + 0.5).clamp(0.0, 1.0) as f32;
                }
            }
            out.push(ImageSample { id: SampleId(id), label: class as u32, shape, pixels });
            id += 1;
        }
    }
    out
}

const ATTRS: [&str; 20] = [
    "code", "color", "name", "size", "mark", "tone", "rank", "sign", "motto", "badge", "seal", "flag",
    "key", "tune", "scent", "title", "emblem", "charm", "token", "glyph",
];
const ADJS: [&str; 10] =
    ["old", "new", "tall", "small", "quiet", "bright", "hidden", "ancient", "stone", "distant"];
const OBJS: [&str; 25] = [
    "harbor", "garden", "tower", "bridge", "market", "temple", "forest", "island", "castle", "mill",
    "lantern", "archive", "gallery", "fountain", "granary", "lighthouse", "observatory", "workshop",
    "vineyard", "meadow", "cavern", "citadel", "depot", "terrace", "orchard",
];
const VALS_A: [&str; 15] = [
    "amber", "violet", "copper", "silver", "crimson", "golden", "ivory", "indigo", "scarlet", "emerald",
    "cobalt", "russet", "sable", "pearl", "bronze",
];
const VALS_B: [&str; 15] = [
    "seven", "three", "nine", "five", "eleven", "twelve", "two", "eight", "four", "six", "one", "ten",
    "thirteen", "fifteen", "twenty",
];

/// Synthetic Q&A fact corpus. Questions are unique (attribute, adjective,
/// place) combinations; answers carry a two-word value so memorization is
/// checkable. At most `ATTRS x ADJS x OBJS` distinct samples exist.
pub fn qa_corpus(n: usize, seed: u64) -> Result<Vec<RawQa>> {
    let max = ATTRS.len() * ADJS.len() * OBJS.len();
    if n > max {
        return Err(Error::capacity(format!("qa corpus supports at most {max} samples, asked for {n}")));
    }
    let mut combos: Vec<usize> = (0..max).collect();
    combos.shuffle(&mut Stream::new(seed).child("qa").rng());
    let mut out = Vec::with_capacity(n);
    for &combo in combos.iter().take(n) {
        let attr = ATTRS[combo % ATTRS.len()];
        let adj = ADJS[(combo / ATTRS.len()) % ADJS.len()];
        let obj = OBJS[combo / (ATTRS.len() * ADJS.len())];
        let mut vrng = Stream::new(seed).child("vals").index(combo as u64).rng();
        let v1 = VALS_A[vrng.random_range(0..VALS_A.len())];
        let v2 = VALS_B[vrng.random_range(0..VALS_B.len())];
        out.push(RawQa {
            question: format!("what is the {attr} of the {adj} {obj}"),
            answer: format!("the {attr} is {v1} {v2}"),
        });
    }
    Ok(out)
}

/// Substitution table used by the bundled text presets. The words cover the
///`qa_corpus` vocabulary, so at least one rule always applies.
pub fn default_paraphrase_rules() -> ParaphraseRules {
    let s = |a: &str, b: &str| (String::from(a), String::from(b));
    ParaphraseRules {
        synonyms: vec![s("what", "which"), s("is", "stands"), s("the", "that"), s("of", "for")],
        fillers: vec![
            vec![String::from("please")],
            vec![String::from("kindly")],
            vec![String::from("tell"), String::from("me")],
            vec![String::from("now")],
        ],
        reorder: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpora_are_deterministic_and_in_range() {
        let a = digit_corpus(3, 7);
        let b = digit_corpus(3, 7);
        assert_eq!(a, b);
        assert_eq!(a.len(), 30);
        assert!(a.iter().all(|s| s.pixels.iter().all(|p| (0.0..=1.0).contains(p))));

        let blobs = blob_corpus(3, 4, 16, 16, 1);
        assert_eq!(blobs.len(), 12);
        assert!(blobs.iter().all(|s| s.pixels.iter().all(|p| (0.0..=1.0).contains(p))));

        let rgb = digit_corpus_rgb(2, 3);
        assert_eq!(rgb.len(), 20);
        assert_eq!(rgb[0].shape.pixels(), 3 * 32 * 32);
    }

    #[test]
    fn qa_corpus_is_unique_and_bounded() {
        let qs = qa_corpus(2600, 3).unwrap();
        assert_eq!(qs.len(), 2600);
        let mut uniq: Vec<&str> = qs.iter().map(|q| q.question.as_str()).collect();
        uniq.sort_unstable();
        uniq.dedup();
        assert_eq!(uniq.len(), 2600);
        assert!(qa_corpus(6000, 3).is_err());
    }
}
