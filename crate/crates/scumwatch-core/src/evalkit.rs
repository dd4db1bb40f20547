//! Evaluation metrics and synthetic data generation.
//!
//! The confusion-matrix metrics follow the usual patch-classification
//! protocol: overall accuracy plus per-class and macro precision/recall.
//! Since real river footage cannot ship with the code, a seeded synthetic
//! scene generator produces separable three-class textures (sparse blobs,
//! dense blobs, structured stripes) for desk-scale end-to-end verification.

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::augment::{LabeledPatch, ScumClass, SoftLabel};
use crate::error::{Error, Result};
use crate::imagecore::{ImageBuffer, PatchGridSpec};
use crate::model::Classifier;
use crate::rng::{derived, sample_standard_normal, seeded};
use crate::scumindex::ScumMask;

/// 3x3 confusion counts; rows are the true class, columns the prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_counts(counts: [[u64; 3]; 3]) -> Self {
        Self { counts }
    }

    pub fn observe(&mut self, truth: ScumClass, predicted: ScumClass) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn count(&self, truth: ScumClass, predicted: ScumClass) -> u64 {
        self.counts[truth.index()][predicted.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

/// The Table-style metric set: accuracy plus per-class and macro P/R.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: [f64; 3],
    pub recall: [f64; 3],
    pub macro_precision: f64,
    pub macro_recall: f64,
}

impl Metrics {
    /// Precision of the grow-thick scum class, the headline number for
    /// monitoring (missed scum is the costly error).
    pub fn scum_precision(&self) -> f64 {
        self.precision[ScumClass::GrowThick.index()]
    }

    pub fn scum_recall(&self) -> f64 {
        self.recall[ScumClass::GrowThick.index()]
    }
}

/// Compute accuracy, precision and recall from a confusion matrix.
///
/// Empty columns (a class never predicted) yield precision 0 for that
/// class; likewise empty rows for recall.
pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptySet);
    }
    let mut trace = 0u64;
    let mut precision = [0.0; 3];
    let mut recall = [0.0; 3];
    for k in 0..3 {
        trace += cm.counts[k][k];
        let col: u64 = (0..3).map(|r| cm.counts[r][k]).sum();
        let row: u64 = cm.counts[k].iter().sum();
        precision[k] = if col == 0 { 0.0 } else { cm.counts[k][k] as f64 / col as f64 };
        recall[k] = if row == 0 { 0.0 } else { cm.counts[k][k] as f64 / row as f64 };
    }
    Ok(Metrics {
        accuracy: trace as f64 / total as f64,
        precision,
        recall,
        macro_precision: precision.iter().sum::<f64>() / 3.0,
        macro_recall: recall.iter().sum::<f64>() / 3.0,
    })
}

/// Run a classifier over labeled patches and tally the confusion matrix.
/// Truth is the dominant label weight; prediction the argmax probability.
pub fn evaluate_classifier(
    classifier: &dyn Classifier,
    samples: &[LabeledPatch],
) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new();
    for sample in samples {
        let probs = classifier.predict(&sample.image)?;
        let mut best = 0;
        for k in 1..3 {
            if probs[k] > probs[best] {
                best = k;
            }
        }
        cm.observe(sample.label.dominant(), ScumClass::from_index(best).unwrap());
    }
    Ok(cm)
}

/// Parameters of the synthetic three-class scene generator.
///
/// The classes are separable by construction: early scum is a sparse
/// scattering of light blobs on dark water, grow-thick scum a dense one,
/// and background shows striped structure with vertical poles. The blob
/// density ranges must not overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSceneSpec {
    pub patch_height: u32,
    pub patch_width: u32,
    /// Blob coverage range for C0, early scum.
    pub c0_density: (f64, f64),
    /// Blob coverage range for C1, grow-thick scum.
    pub c1_density: (f64, f64),
    /// Per-channel Gaussian pixel noise.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthSceneSpec {
    fn default() -> Self {
        Self {
            patch_height: 128,
            patch_width: 256,
            c0_density: (0.02, 0.08),
            c1_density: (0.25, 0.5),
            noise_sigma: 6.0,
            seed: 0,
        }
    }
}

impl SynthSceneSpec {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_height == 0 || self.patch_width == 0 {
            return Err(Error::InvalidParam("patch dimensions must be positive".into()));
        }
        let ranges = [self.c0_density, self.c1_density];
        for (lo, hi) in ranges {
            if !(0.0..1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
                return Err(Error::InvalidParam(format!("bad density range ({lo},{hi})")));
            }
        }
        if self.c0_density.1 >= self.c1_density.0 {
            return Err(Error::InvalidParam(
                "class density ranges must be disjoint (c0 below c1)".into(),
            ));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidParam("noise sigma must be nonnegative".into()));
        }
        Ok(())
    }
}

// Palette. Every entry keeps R != G so that no rendered pixel can collide
// with the neutral Cutout fill gray when noise is disabled.
const WATER: [f64; 3] = [26.0, 58.0, 88.0];
const BLOB: [f64; 3] = [168.0, 186.0, 140.0];
const STRIPE_A: [f64; 3] = [118.0, 126.0, 139.0];
const STRIPE_B: [f64; 3] = [146.0, 154.0, 166.0];
const POLE: [f64; 3] = [70.0, 76.0, 86.0];
const SKY_TOP: [f64; 3] = [182.0, 188.0, 198.0];
const SKYLINE: [f64; 3] = [88.0, 92.0, 104.0];

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn put(pixels: &mut [f64], w: usize, x: usize, y: usize, color: [f64; 3]) {
    let o = (y * w + x) * 3;
    pixels[o..o + 3].copy_from_slice(&color);
}

/// Scatter filled disks until the requested area fraction is covered
/// (overlaps are not compensated; density is approximate by design).
fn scatter_blobs<R: Rng>(pixels: &mut [f64], w: usize, h: usize, density: f64, rng: &mut R) {
    let target = density * (w * h) as f64;
    let mut placed = 0.0;
    while placed < target {
        let r = rng.random_range(3..=9) as i64;
        let cx = rng.random_range(0..w) as i64;
        let cy = rng.random_range(0..h) as i64;
        let jitter = rng.random_range(-15.0..15.0);
        let color = [BLOB[0] + jitter, BLOB[1] + jitter, BLOB[2] + jitter];
        for y in (cy - r).max(0)..(cy + r + 1).min(h as i64) {
            for x in (cx - r).max(0)..(cx + r + 1).min(w as i64) {
                let (dx, dy) = (x - cx, y - cy);
                if dx * dx + dy * dy <= r * r {
                    put(pixels, w, x as usize, y as usize, color);
                }
            }
        }
        placed += std::f64::consts::PI * (r * r) as f64;
    }
}

fn water_base(pixels: &mut [f64], w: usize, h: usize) {
    for y in 0..h {
        let lift = 12.0 * y as f64 / h.max(1) as f64;
        for x in 0..w {
            put(pixels, w, x, y, [WATER[0] + lift, WATER[1] + lift, WATER[2] + lift]);
        }
    }
}

/// Striped structure with a few dark poles: the mirrored-background look.
fn structure_texture<R: Rng>(pixels: &mut [f64], w: usize, h: usize, rng: &mut R) {
    let band = rng.random_range(6..=14usize);
    let phase = rng.random_range(0..band.max(1));
    for y in 0..h {
        let color = if ((y + phase) / band) % 2 == 0 { STRIPE_A } else { STRIPE_B };
        for x in 0..w {
            put(pixels, w, x, y, color);
        }
    }
    for _ in 0..rng.random_range(2..=5) {
        let pole_w = rng.random_range(3..=6usize).min(w);
        let x0 = rng.random_range(0..w.saturating_sub(pole_w).max(1));
        for y in 0..h {
            for x in x0..x0 + pole_w {
                put(pixels, w, x, y, POLE);
            }
        }
    }
}

fn add_noise_and_quantize<R: Rng>(pixels: &[f64], sigma: f64, rng: &mut R) -> Vec<u8> {
    pixels
        .iter()
        .map(|&v| {
            let noisy = if sigma > 0.0 { v + sigma * sample_standard_normal(rng) } else { v };
            clamp_u8(noisy)
        })
        .collect()
}

/// Render one patch of the given class.
fn render_class_patch<R: Rng>(spec: &SynthSceneSpec, class: ScumClass, rng: &mut R) -> Result<ImageBuffer> {
    let (w, h) = (spec.patch_width as usize, spec.patch_height as usize);
    let mut pixels = vec![0.0f64; w * h * 3];
    match class {
        ScumClass::EarlyScum => {
            water_base(&mut pixels, w, h);
            let density = rng.random_range(spec.c0_density.0..spec.c0_density.1);
            scatter_blobs(&mut pixels, w, h, density, rng);
        }
        ScumClass::GrowThick => {
            water_base(&mut pixels, w, h);
            let density = rng.random_range(spec.c1_density.0..spec.c1_density.1);
            scatter_blobs(&mut pixels, w, h, density, rng);
        }
        ScumClass::Background => structure_texture(&mut pixels, w, h, rng),
    }
    let data = add_noise_and_quantize(&pixels, spec.noise_sigma, rng);
    ImageBuffer::new(spec.patch_width, spec.patch_height, data)
}

/// Generate `3 * n_per_class` one-hot labeled patches, class-major order.
///
/// Each patch draws from its own generator derived from `(seed, index)`,
/// so the dataset is identical however generation is parallelized.
pub fn generate_synthetic_dataset(spec: &SynthSceneSpec, n_per_class: usize) -> Result<Vec<LabeledPatch>> {
    spec.validate()?;
    if n_per_class == 0 {
        return Err(Error::InvalidParam("n_per_class must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(3 * n_per_class);
    for class in ScumClass::ALL {
        for i in 0..n_per_class {
            let index = (class.index() * n_per_class + i) as u64;
            let mut rng = derived(spec.seed, index);
            let image = render_class_patch(spec, class, &mut rng)?;
            out.push(LabeledPatch::new(image, SoftLabel::one_hot(class)));
        }
    }
    Ok(out)
}

/// One synthetic frame with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceFrame {
    pub timestamp: DateTime<Utc>,
    pub frame: ImageBuffer,
    /// Cropped-resolution mask marking the scheduled scum cells.
    pub truth_mask: ScumMask,
    /// Scheduled cell count over total cells, in percent.
    pub truth_ratio: f64,
}

/// Compose full frames for a schedule of `(timestamp, scum cells)` entries.
///
/// Every frame carries a sky far region on top; grid cells listed in the
/// schedule carry grow-thick scum texture, the rest background texture.
pub fn generate_synthetic_frame_sequence(
    spec: &SynthSceneSpec,
    grid: &PatchGridSpec,
    schedule: &[(DateTime<Utc>, Vec<(u32, u32)>)],
) -> Result<Vec<SequenceFrame>> {
    spec.validate()?;
    let cell_spec = SynthSceneSpec {
        patch_height: grid.patch_height,
        patch_width: grid.patch_width,
        ..spec.clone()
    };
    let mut frames = Vec::with_capacity(schedule.len());
    for (frame_idx, (timestamp, cells)) in schedule.iter().enumerate() {
        let mut seen = HashSet::new();
        for &(r, c) in cells {
            if r >= grid.rows || c >= grid.cols {
                return Err(Error::InvalidParam(format!(
                    "scheduled cell ({r},{c}) outside the {}x{} grid",
                    grid.rows, grid.cols
                )));
            }
            if !seen.insert((r, c)) {
                return Err(Error::InvalidParam(format!("cell ({r},{c}) scheduled twice")));
            }
        }

        let mut frame = ImageBuffer::filled(grid.cropped_width(), grid.frame_height(), [0, 0, 0])?;
        let mut frame_rng = derived(spec.seed ^ 0x5caff01d, frame_idx as u64);
        paint_far_region(&mut frame, grid.crop_top, &mut frame_rng);

        let mut mask_bits = vec![0u8; (grid.cropped_width() * grid.cropped_height()) as usize];
        for r in 0..grid.rows {
            for c in 0..grid.cols {
                let cell_idx = (frame_idx as u64) << 32 | (r * grid.cols + c) as u64;
                let mut rng = derived(spec.seed ^ 0xfacade, cell_idx);
                let class = if seen.contains(&(r, c)) { ScumClass::GrowThick } else { ScumClass::Background };
                let patch = render_class_patch(&cell_spec, class, &mut rng)?;
                frame.blit(&patch, c * grid.patch_width, grid.crop_top + r * grid.patch_height)?;
                if class == ScumClass::GrowThick {
                    for y in r * grid.patch_height..(r + 1) * grid.patch_height {
                        let row = (y * grid.cropped_width()) as usize;
                        let x0 = (c * grid.patch_width) as usize;
                        mask_bits[row + x0..row + x0 + grid.patch_width as usize].fill(1);
                    }
                }
            }
        }
        let truth_mask = ScumMask::from_bits(grid.cropped_width(), grid.cropped_height(), mask_bits)?;
        frames.push(SequenceFrame {
            timestamp: *timestamp,
            frame,
            truth_mask,
            truth_ratio: 100.0 * cells.len() as f64 / grid.patch_count() as f64,
        });
    }
    Ok(frames)
}

fn paint_far_region<R: Rng>(frame: &mut ImageBuffer, crop_top: u32, rng: &mut R) {
    if crop_top == 0 {
        return;
    }
    let skyline_start = crop_top.saturating_sub(crop_top / 4);
    for y in 0..crop_top {
        let t = y as f64 / crop_top as f64;
        let base = if y >= skyline_start {
            SKYLINE
        } else {
            [
                SKY_TOP[0] - 30.0 * t,
                SKY_TOP[1] - 30.0 * t,
                SKY_TOP[2] - 30.0 * t,
            ]
        };
        for x in 0..frame.width() {
            let jitter = rng.random_range(-2.0..2.0);
            frame.set(x, y, [
                clamp_u8(base[0] + jitter),
                clamp_u8(base[1] + jitter),
                clamp_u8(base[2] + jitter),
            ]);
        }
    }
}

/// Train/test membership of one dataset entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Manifest(format!("unknown split '{other}'"))),
        }
    }
}

/// Assign a seeded train/test split; `test_fraction` 0.1 gives the 9:1
/// protocol. Membership is a pure function of `(n, test_fraction, seed)`.
pub fn assign_splits(n: usize, test_fraction: f64, seed: u64) -> Result<Vec<Split>> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::InvalidParam(format!(
            "test fraction must lie in [0,1), got {test_fraction}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded(seed));
    let n_test = (n as f64 * test_fraction).round() as usize;
    let mut splits = vec![Split::Train; n];
    for &idx in order.iter().take(n_test) {
        splits[idx] = Split::Test;
    }
    Ok(splits)
}

/// Write patches as PNGs plus a manifest; returns the manifest path.
///
/// Manifest format: one line per patch,
/// `relative_path,w0,w1,w2,split`.
pub fn export_dataset(dir: &Path, patches: &[LabeledPatch], splits: &[Split]) -> Result<PathBuf> {
    if patches.len() != splits.len() {
        return Err(Error::CountMismatch { expected: patches.len(), got: splits.len() });
    }
    std::fs::create_dir_all(dir)?;
    let manifest_path = dir.join("manifest.txt");
    let mut manifest = std::io::BufWriter::new(std::fs::File::create(&manifest_path)?);
    for (i, (patch, split)) in patches.iter().zip(splits).enumerate() {
        let name = format!("patch_{i:06}.png");
        patch.image.save_png(&dir.join(&name))?;
        let [w0, w1, w2] = patch.label.weights();
        writeln!(manifest, "{name},{w0},{w1},{w2},{}", split.name())?;
    }
    Ok(manifest_path)
}

/// Read a manifest written by [`export_dataset`]. Paths resolve relative
/// to the manifest's directory.
pub fn load_dataset(manifest_path: &Path) -> Result<Vec<(LabeledPatch, Split)>> {
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let file = std::fs::File::open(manifest_path)?;
    let mut out = Vec::new();
    for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Manifest(format!(
                "line {}: expected 5 comma-separated fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Manifest(format!("line {}: bad weight '{s}'", lineno + 1)))
        };
        let weights = [parse(fields[1])?, parse(fields[2])?, parse(fields[3])?];
        let label = SoftLabel::new(weights)
            .map_err(|e| Error::Manifest(format!("line {}: {e}", lineno + 1)))?;
        let split: Split = fields[4].parse()?;
        let image = ImageBuffer::load_png(&base.join(fields[0]))?;
        out.push((LabeledPatch::new(image, label), split));
    }
    if out.is_empty() {
        return Err(Error::Manifest(format!(
            "{} lists no patches",
            manifest_path.display()
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn perfect_confusion_matrix_scores_ones() {
        let cm = ConfusionMatrix::from_counts([[10, 0, 0], [0, 10, 0], [0, 0, 10]]);
        let m = metrics(&cm).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.precision, [1.0; 3]);
        assert_eq!(m.recall, [1.0; 3]);
        assert_eq!(m.macro_precision, 1.0);
        assert_eq!(m.macro_recall, 1.0);
    }

    #[test]
    fn hand_counted_matrix_matches_tally_oracle() {
        let counts = [[8u64, 2, 0], [1, 9, 0], [0, 0, 10]];
        let cm = ConfusionMatrix::from_counts(counts);
        let m = metrics(&cm).unwrap();
        assert!((m.accuracy - 27.0 / 30.0).abs() < 1e-12);
        assert!((m.precision[1] - 9.0 / 11.0).abs() < 1e-12);
        assert!((m.recall[1] - 0.9).abs() < 1e-12);

        // per-sample tally oracle: expand the matrix into (truth, pred)
        // pairs and recount correctness one sample at a time
        let mut correct = 0u64;
        let mut total = 0u64;
        for t in 0..3 {
            for p in 0..3 {
                for _ in 0..counts[t][p] {
                    total += 1;
                    if t == p {
                        correct += 1;
                    }
                }
            }
        }
        assert_eq!(m.accuracy, correct as f64 / total as f64);
    }

    #[test]
    fn random_predictions_on_balanced_set_approach_chance() {
        let mut rng = seeded(21);
        let mut cm = ConfusionMatrix::new();
        for k in 0..3 {
            let truth = ScumClass::from_index(k).unwrap();
            for _ in 0..3334 {
                let pred = ScumClass::from_index(rng.random_range(0..3)).unwrap();
                cm.observe(truth, pred);
            }
        }
        let m = metrics(&cm).unwrap();
        assert!((m.accuracy - 1.0 / 3.0).abs() < 0.05, "accuracy {}", m.accuracy);
    }

    #[test]
    fn empty_matrix_is_rejected() {
        assert!(matches!(metrics(&ConfusionMatrix::new()), Err(Error::EmptySet)));
    }

    #[test]
    fn metrics_permute_with_classes() {
        let counts = [[8u64, 2, 0], [1, 9, 0], [3, 0, 7]];
        let m = metrics(&ConfusionMatrix::from_counts(counts)).unwrap();
        // swap classes 0 and 2 everywhere
        let mut swapped = [[0u64; 3]; 3];
        let map = [2usize, 1, 0];
        for t in 0..3 {
            for p in 0..3 {
                swapped[map[t]][map[p]] = counts[t][p];
            }
        }
        let s = metrics(&ConfusionMatrix::from_counts(swapped)).unwrap();
        assert_eq!(m.accuracy, s.accuracy);
        for k in 0..3 {
            assert_eq!(m.precision[k], s.precision[map[k]]);
            assert_eq!(m.recall[k], s.recall[map[k]]);
        }
        assert!((m.macro_precision - s.macro_precision).abs() < 1e-12);
    }

    #[test]
    fn dataset_has_expected_shape_and_is_deterministic() {
        let spec = SynthSceneSpec { patch_height: 32, patch_width: 64, ..SynthSceneSpec::with_seed(5) };
        let a = generate_synthetic_dataset(&spec, 4).unwrap();
        let b = generate_synthetic_dataset(&spec, 4).unwrap();
        assert_eq!(a.len(), 12);
        assert_eq!(a, b);
        for (i, p) in a.iter().enumerate() {
            assert_eq!(p.image.width(), 64);
            assert_eq!(p.image.height(), 32);
            let expected = ScumClass::ALL[i / 4];
            assert_eq!(p.label, SoftLabel::one_hot(expected));
        }
    }

    #[test]
    fn dataset_rejects_bad_parameters() {
        let spec = SynthSceneSpec::with_seed(0);
        assert!(matches!(generate_synthetic_dataset(&spec, 0), Err(Error::InvalidParam(_))));
        let overlapping = SynthSceneSpec {
            c0_density: (0.02, 0.3),
            c1_density: (0.25, 0.5),
            ..SynthSceneSpec::with_seed(0)
        };
        assert!(matches!(generate_synthetic_dataset(&overlapping, 1), Err(Error::InvalidParam(_))));
    }

    /// Nearest-centroid on per-channel means: the separability oracle.
    struct Centroids {
        means: [[f64; 3]; 3],
    }

    impl Centroids {
        fn fit(samples: &[&LabeledPatch]) -> Self {
            let mut sums = [[0.0f64; 3]; 3];
            let mut counts = [0usize; 3];
            for s in samples {
                let k = s.label.dominant().index();
                let m = s.image.channel_means();
                for c in 0..3 {
                    sums[k][c] += m[c];
                }
                counts[k] += 1;
            }
            let mut means = [[0.0; 3]; 3];
            for k in 0..3 {
                for c in 0..3 {
                    means[k][c] = sums[k][c] / counts[k].max(1) as f64;
                }
            }
            Self { means }
        }

        fn predict(&self, image: &ImageBuffer) -> ScumClass {
            let f = image.channel_means();
            let mut best = (f64::INFINITY, 0);
            for k in 0..3 {
                let d: f64 = (0..3).map(|c| (f[c] - self.means[k][c]).powi(2)).sum();
                if d < best.0 {
                    best = (d, k);
                }
            }
            ScumClass::from_index(best.1).unwrap()
        }
    }

    #[test]
    fn classes_are_separable_by_centroid_oracle() {
        let spec = SynthSceneSpec { patch_height: 64, patch_width: 128, ..SynthSceneSpec::with_seed(9) };
        let data = generate_synthetic_dataset(&spec, 30).unwrap();
        let splits = assign_splits(data.len(), 0.2, 7).unwrap();
        let train: Vec<&LabeledPatch> = data
            .iter()
            .zip(&splits)
            .filter(|(_, s)| **s == Split::Train)
            .map(|(p, _)| p)
            .collect();
        let test: Vec<&LabeledPatch> = data
            .iter()
            .zip(&splits)
            .filter(|(_, s)| **s == Split::Test)
            .map(|(p, _)| p)
            .collect();
        assert!(!test.is_empty());
        let oracle = Centroids::fit(&train);
        let correct = test
            .iter()
            .filter(|p| oracle.predict(&p.image) == p.label.dominant())
            .count();
        let accuracy = correct as f64 / test.len() as f64;
        assert!(accuracy >= 0.9, "centroid oracle accuracy {accuracy}");
    }

    #[test]
    fn splits_follow_nine_to_one() {
        let splits = assign_splits(360, 0.1, 3).unwrap();
        let tests = splits.iter().filter(|s| **s == Split::Test).count();
        assert_eq!(tests, 36);
        // deterministic membership
        assert_eq!(splits, assign_splits(360, 0.1, 3).unwrap());
        assert_ne!(splits, assign_splits(360, 0.1, 4).unwrap());
    }

    #[test]
    fn sequence_frames_carry_the_schedule() {
        let spec = SynthSceneSpec::with_seed(13);
        let grid = PatchGridSpec::default();
        let t0 = DateTime::parse_from_rfc3339("2021-07-01T00:00:00Z").unwrap().to_utc();
        let schedule = vec![
            (t0, vec![]),
            (t0 + chrono::Duration::minutes(10), vec![(0, 0), (1, 1), (2, 2), (3, 3), (0, 4)]),
        ];
        let frames = generate_synthetic_frame_sequence(&spec, &grid, &schedule).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[0].truth_ratio, 0.0);
        assert!(frames[0].truth_mask.data().iter().all(|&b| b == 0));
        assert_eq!(frames[1].truth_ratio, 25.0);
        assert_eq!(frames[1].frame.width(), 1280);
        assert_eq!(frames[1].frame.height(), 720);
        let marked: u64 = frames[1].truth_mask.data().iter().map(|&b| b as u64).sum();
        assert_eq!(marked, 5 * 32768);
    }

    #[test]
    fn sequence_rejects_cells_outside_grid() {
        let spec = SynthSceneSpec::with_seed(13);
        let grid = PatchGridSpec::default();
        let t0 = DateTime::parse_from_rfc3339("2021-07-01T00:00:00Z").unwrap().to_utc();
        let schedule = vec![(t0, vec![(4, 0)])];
        assert!(matches!(
            generate_synthetic_frame_sequence(&spec, &grid, &schedule),
            Err(Error::InvalidParam(_))
        ));
    }

    #[test]
    fn single_peak_schedule_has_single_argmax() {
        let spec = SynthSceneSpec::with_seed(13);
        let grid = PatchGridSpec::default();
        let t0 = DateTime::parse_from_rfc3339("2021-07-01T00:00:00Z").unwrap().to_utc();
        // ramp 0,1,3,5,3,1,0 cells
        let counts = [0usize, 1, 3, 5, 3, 1, 0];
        let all_cells: Vec<(u32, u32)> =
            (0..4).flat_map(|r| (0..5).map(move |c| (r, c))).collect();
        let schedule: Vec<_> = counts
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                (t0 + chrono::Duration::minutes(10 * i as i64), all_cells[..n].to_vec())
            })
            .collect();
        let frames = generate_synthetic_frame_sequence(&spec, &grid, &schedule).unwrap();
        let ratios: Vec<f64> = frames.iter().map(|f| f.truth_ratio).collect();
        let peak = ratios
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(peak, 3);
        let maxima = ratios.windows(3).filter(|w| w[1] > w[0] && w[1] > w[2]).count();
        assert_eq!(maxima, 1);
    }

    #[test]
    fn export_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSceneSpec { patch_height: 16, patch_width: 32, ..SynthSceneSpec::with_seed(3) };
        let data = generate_synthetic_dataset(&spec, 2).unwrap();
        let splits = assign_splits(data.len(), 0.34, 1).unwrap();
        let manifest = export_dataset(dir.path(), &data, &splits).unwrap();
        let loaded = load_dataset(&manifest).unwrap();
        assert_eq!(loaded.len(), data.len());
        for ((patch, split), (orig, orig_split)) in loaded.iter().zip(data.iter().zip(&splits)) {
            assert_eq!(&patch.image, &orig.image);
            assert_eq!(patch.label, orig.label);
            assert_eq!(split, orig_split);
        }
    }

    #[test]
    fn load_rejects_malformed_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("manifest.txt");
        std::fs::write(&manifest, "only,three,fields\n").unwrap();
        assert!(matches!(load_dataset(&manifest), Err(Error::Manifest(_))));
    }
}
