//! Seeded seven-segment style digit glyphs on a 28x28 canvas, a drop-in
//! stand-in for MNIST when no IDX file is available.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::Image;

pub const GLYPH_SIZE: usize = 28;

// Segment endpoints as indices into the six anchor points
// 0 top-left, 1 top-right, 2 mid-left, 3 mid-right, 4 bottom-left, 5 bottom-right.
const SEGMENTS: [(usize, usize); 7] = [(0, 1), (1, 3), (3, 5), (4, 5), (2, 4), (0, 2), (2, 3)];

// a b c d e f g
const DIGITS: [[bool; 7]; 10] = [
    [true, true, true, true, true, true, false],
    [false, true, true, false, false, false, false],
    [true, true, false, true, true, false, true],
    [true, true, true, true, false, false, true],
    [false, true, true, false, false, true, true],
    [true, false, true, true, false, true, true],
    [true, false, true, true, true, true, true],
    [true, true, true, false, false, false, false],
    [true; 7],
    [true, true, true, true, false, true, true],
];

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

/// Renders one jittered glyph of `digit` (0-9).
pub fn render_glyph(digit: usize, rng: &mut impl Rng) -> Image {
    let mut jitter = |v: f64| v + rng.random_range(-1.5..1.5);
    let (left, right, top, mid, bottom) = (8.0, 20.0, 4.0, 14.0, 24.0);
    let anchors = [
        (jitter(left), jitter(top)),
        (jitter(right), jitter(top)),
        (jitter(left), jitter(mid)),
        (jitter(right), jitter(mid)),
        (jitter(left), jitter(bottom)),
        (jitter(right), jitter(bottom)),
    ];
    let shear: f64 = rng.random_range(-0.2..0.2);
    let half_width: f64 = rng.random_range(1.0..1.9);
    let anchors = anchors.map(|(x, y)| (x - shear * (y - mid), y));
    let lines: Vec<_> = DIGITS[digit % 10]
        .iter()
        .zip(SEGMENTS)
        .filter(|(on, _)| **on)
        .map(|(_, (a, b))| (anchors[a], anchors[b]))
        .collect();
    let mut img = Image::filled(GLYPH_SIZE, GLYPH_SIZE, 1, 0.0);
    for y in 0..GLYPH_SIZE {
        for x in 0..GLYPH_SIZE {
            let p = (x as f64 + 0.5, y as f64 + 0.5);
            let d = lines
                .iter()
                .map(|&(a, b)| segment_distance(p, a, b))
                .fold(f64::INFINITY, f64::min);
            *img.at_mut(y, x, 0) = (half_width + 0.5 - d).clamp(0.0, 1.0);
        }
    }
    img
}

/// `count` glyphs with labels cycling through a seeded permutation of 0-9.
pub fn synthetic_digits(count: usize, seed: u64) -> Vec<(Image, u8)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let d = rng.random_range(0..10usize);
            (render_glyph(d, &mut rng), d as u8)
        })
        .collect()
}
