//! Desk-scale dataset: synthetic digit glyphs rendered with jitter and
//! pixel noise. Deterministic for a fixed seed.

use crate::error::{Error, Result};
use crate::nn::layers::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Vec<Tensor>,
    pub labels: Vec<usize>,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn subset(&self, count: usize) -> Dataset {
        Dataset {
            images: self.images.iter().take(count).cloned().collect(),
            labels: self.labels.iter().take(count).copied().collect(),
            ..self.clone()
        }
    }
}

// 5x7 digit glyphs, one row per scanline, LSB on the left.
const GLYPHS: [[u8; 7]; 10] = [
    [0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110], // 0
    [0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110], // 1
    [0b01110, 0b10001, 0b00001, 0b00110, 0b01000, 0b10000, 0b11111], // 2
    [0b01110, 0b10001, 0b00001, 0b00110, 0b00001, 0b10001, 0b01110], // 3
    [0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010], // 4
    [0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110], // 5
    [0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110], // 6
    [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000], // 7
    [0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110], // 8
    [0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100], // 9
];

const IMG: usize = 12;

fn render_digit(digit: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut img = vec![0.0f64; IMG * IMG];
    // Centered placement with one pixel of jitter in each direction.
    let dy = 1 + rng.gen_range(0..=2);
    let dx = 2 + rng.gen_range(0..=2);
    let intensity = rng.gen_range(0.7..1.0);
    for (row, bits) in GLYPHS[digit].iter().enumerate() {
        for col in 0..5 {
            if bits >> (4 - col) & 1 == 1 {
                img[(row + dy) * IMG + col + dx] = intensity;
            }
        }
    }
    let noise = Normal::new(0.0, 0.06).expect("valid sigma");
    for v in img.iter_mut() {
        *v = (*v + noise.sample(rng)).clamp(0.0, 1.0);
    }
    img
}

/// Generate `per_class` samples of each digit class, shuffled.
pub fn synthetic_digits(per_class: usize, seed: u64) -> Result<Dataset> {
    if per_class == 0 {
        return Err(Error::EmptyRange("need at least one sample per class".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(per_class * 10);
    for digit in 0..10 {
        for _ in 0..per_class {
            entries.push((render_digit(digit, &mut rng), digit));
        }
    }
    // Fisher-Yates with the same stream keeps generation deterministic.
    for i in (1..entries.len()).rev() {
        let j = rng.gen_range(0..=i);
        entries.swap(i, j);
    }
    let mut images = Vec::with_capacity(entries.len());
    let mut labels = Vec::with_capacity(entries.len());
    for (img, label) in entries {
        images.push(Tensor::chw(1, IMG, IMG, img)?);
        labels.push(label);
    }
    Ok(Dataset {
        images,
        labels,
        channels: 1,
        height: IMG,
        width: IMG,
        classes: 10,
    })
}

/// Two linearly separable point clouds embedded as flat tensors; the
/// sanity floor for the trainer.
pub fn separable_blobs(per_class: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for class in 0..2usize {
        let center = if class == 0 { 0.25 } else { 0.75 };
        for _ in 0..per_class {
            let x = center + rng.gen_range(-0.15..0.15);
            let y = center + rng.gen_range(-0.15..0.15);
            images.push(Tensor::Flat(vec![x, y]));
            labels.push(class);
        }
    }
    Ok(Dataset {
        images,
        labels,
        channels: 1,
        height: 1,
        width: 2,
        classes: 2,
    })
}
