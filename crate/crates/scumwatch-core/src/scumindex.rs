//! The prediction-stage chain: per-patch probabilities to scum-on-river ratio.
//!
//! For each frame the classifier yields one probability vector per grid
//! cell. Those are assembled into a 4x5 matrix, floored when the frame mean
//! is negligible, rendered as a 0-255 scaled heatmap at cropped-frame
//! resolution, binarized into a scum mask, and finally reduced to the
//! scum-on-river ratio: scum pixels over river (non-background) pixels.

use std::path::Path;

use chrono::{DateTime, Utc};

use crate::error::{Error, Result};
use crate::imagecore::{crop_far_region, extract_patches, ImageBuffer, PatchGridSpec};
use crate::model::{ClassProbs, Classifier};

/// Which class probabilities feed the index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClassMode {
    /// Grow-thick scum only (C1), the monitoring target.
    #[default]
    C1Only,
    /// Early plus grow-thick scum (C0 + C1), for early-warning use.
    C0PlusC1,
}

impl ClassMode {
    fn cell_value(self, probs: &ClassProbs) -> f64 {
        match self {
            ClassMode::C1Only => probs[1],
            ClassMode::C0PlusC1 => (probs[0] + probs[1]).min(1.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassMode::C1Only => "c1",
            ClassMode::C0PlusC1 => "c0c1",
        }
    }
}

impl std::str::FromStr for ClassMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "c1" => Ok(ClassMode::C1Only),
            "c0c1" => Ok(ClassMode::C0PlusC1),
            other => Err(Error::InvalidParam(format!(
                "unknown class mode '{other}' (expected c1|c0c1)"
            ))),
        }
    }
}

/// Per-cell selected-class probabilities for one frame, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix {
    rows: u32,
    cols: u32,
    cells: Vec<f64>,
    class_mode: ClassMode,
}

impl ProbabilityMatrix {
    pub fn rows(&self) -> u32 {
        self.rows
    }

    pub fn cols(&self) -> u32 {
        self.cols
    }

    pub fn class_mode(&self) -> ClassMode {
        self.class_mode
    }

    pub fn get(&self, row: u32, col: u32) -> f64 {
        self.cells[(row * self.cols + col) as usize]
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    /// Mean over all cells: the frame's average patch probability.
    pub fn mean(&self) -> f64 {
        self.cells.iter().sum::<f64>() / self.cells.len() as f64
    }

    /// Build a matrix from raw cell values; used by tests and tooling that
    /// bypass a classifier.
    pub fn from_cells(rows: u32, cols: u32, cells: Vec<f64>, class_mode: ClassMode) -> Result<Self> {
        if cells.len() != (rows * cols) as usize {
            return Err(Error::CountMismatch { expected: (rows * cols) as usize, got: cells.len() });
        }
        if cells.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidParam("matrix cells must lie in [0,1]".into()));
        }
        Ok(Self { rows, cols, cells, class_mode })
    }
}

/// Combine the per-patch probability vectors into the frame matrix.
///
/// `patch_probs` must hold exactly `rows * cols` vectors in the row-major
/// patch order produced by `extract_patches`.
pub fn assemble_matrix(
    patch_probs: &[ClassProbs],
    spec: &PatchGridSpec,
    class_mode: ClassMode,
) -> Result<ProbabilityMatrix> {
    if patch_probs.len() != spec.patch_count() {
        return Err(Error::CountMismatch { expected: spec.patch_count(), got: patch_probs.len() });
    }
    for (i, p) in patch_probs.iter().enumerate() {
        let sum: f64 = p.iter().sum();
        if p.iter().any(|x| *x < 0.0) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParam(format!(
                "patch {i} probabilities are not on the simplex: {p:?}"
            )));
        }
    }
    let cells = patch_probs.iter().map(|p| class_mode.cell_value(p)).collect();
    Ok(ProbabilityMatrix { rows: spec.rows, cols: spec.cols, cells, class_mode })
}

/// Zero the whole matrix when its mean is at or below `floor`.
///
/// All-or-nothing by design: a frame whose average patch probability is
/// negligible yields no scum at all instead of an unstable heatmap.
pub fn apply_probability_floor(m: &ProbabilityMatrix, floor: f64) -> ProbabilityMatrix {
    debug_assert!((0.0..1.0).contains(&floor), "floor must lie in [0,1)");
    let mut out = m.clone();
    if m.mean() <= floor {
        out.cells.fill(0.0);
    }
    out
}

/// Scaled heatmap: the matrix rendered as an 8-bit grayscale raster at
/// cropped-frame resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Heatmap {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl Heatmap {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[(y * self.width + x) as usize]
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        save_gray_png(self.width, self.height, self.data.clone(), path)
    }
}

/// Round half up, the intensity quantization rule: 0.5 maps to 128.
fn round_half_up(x: f64) -> u8 {
    (x + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Render the matrix as a heatmap: each cell becomes a constant block of
/// `patch_height x patch_width` pixels with intensity `round(255 * p)`.
///
/// Scaling is absolute, never per-frame min-max normalized, so intensities
/// depend only on the matrix values.
pub fn render_heatmap(m: &ProbabilityMatrix, spec: &PatchGridSpec) -> Heatmap {
    let width = m.cols * spec.patch_width;
    let height = m.rows * spec.patch_height;
    let mut data = vec![0u8; (width * height) as usize];
    for r in 0..m.rows {
        for c in 0..m.cols {
            let intensity = round_half_up(255.0 * m.get(r, c));
            for y in r * spec.patch_height..(r + 1) * spec.patch_height {
                let row = (y * width) as usize;
                let x0 = (c * spec.patch_width) as usize;
                data[row + x0..row + x0 + spec.patch_width as usize].fill(intensity);
            }
        }
    }
    Heatmap { width, height, data }
}

/// Binary scum mask at cropped-frame resolution; 1 marks scum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScumMask {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl ScumMask {
    pub fn from_bits(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if data.len() != (width * height) as usize {
            return Err(Error::DimensionMismatch(format!(
                "mask data holds {} pixels, {width}x{height} needs {}",
                data.len(),
                width * height
            )));
        }
        if data.iter().any(|b| *b > 1) {
            return Err(Error::InvalidParam("mask pixels must be 0 or 1".into()));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[(y * self.width + x) as usize]
    }

    /// Emit as 8-bit grayscale PNG with scum rendered white.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes = self.data.iter().map(|&b| if b == 1 { 255 } else { 0 }).collect();
        save_gray_png(self.width, self.height, bytes, path)
    }
}

/// Threshold the heatmap: mask pixel is 1 iff intensity >= `threshold`.
pub fn binarize(h: &Heatmap, threshold: u8) -> ScumMask {
    let data = h.data.iter().map(|&v| u8::from(v >= threshold)).collect();
    ScumMask { width: h.width, height: h.height, data }
}

/// Constant per-camera raster marking non-river pixels (1 = background).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackgroundMask {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl BackgroundMask {
    pub fn from_bits(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if data.len() != (width * height) as usize {
            return Err(Error::DimensionMismatch(format!(
                "background data holds {} pixels, {width}x{height} needs {}",
                data.len(),
                width * height
            )));
        }
        if data.iter().any(|b| *b > 1) {
            return Err(Error::InvalidParam("background pixels must be 0 or 1".into()));
        }
        Ok(Self { width, height, data })
    }

    /// Load from PNG; any nonzero gray value marks background.
    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)?.into_luma8();
        let (width, height) = img.dimensions();
        let data = img.into_raw().into_iter().map(|v| u8::from(v != 0)).collect();
        Self::from_bits(width, height, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[(y * self.width + x) as usize]
    }

    pub fn background_count(&self) -> u64 {
        self.data.iter().filter(|&&b| b == 1).count() as u64
    }
}

/// Everything fixed about one camera: grid geometry, constant background,
/// and the index thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraProfile {
    pub camera_id: String,
    pub grid_spec: PatchGridSpec,
    /// `None` means the whole cropped frame is river.
    pub background_mask: Option<BackgroundMask>,
    pub binarize_threshold: u8,
    pub probability_floor: f64,
    pub class_mode: ClassMode,
}

impl CameraProfile {
    pub fn new(camera_id: impl Into<String>, grid_spec: PatchGridSpec) -> Self {
        Self {
            camera_id: camera_id.into(),
            grid_spec,
            background_mask: None,
            binarize_threshold: 128,
            probability_floor: 0.01,
            class_mode: ClassMode::C1Only,
        }
    }

    pub fn with_background(mut self, mask: BackgroundMask) -> Result<Self> {
        if mask.width != self.grid_spec.cropped_width() || mask.height != self.grid_spec.cropped_height()
        {
            return Err(Error::DimensionMismatch(format!(
                "background mask is {}x{}, cropped frames are {}x{}",
                mask.width,
                mask.height,
                self.grid_spec.cropped_width(),
                self.grid_spec.cropped_height()
            )));
        }
        self.background_mask = Some(mask);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.probability_floor) {
            return Err(Error::InvalidParam(format!(
                "probability floor must lie in [0,1), got {}",
                self.probability_floor
            )));
        }
        Ok(())
    }
}

/// Pixel counts behind one ratio value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioCounts {
    /// Scum-on-river ratio in percent, `100 * scum / river`.
    pub ratio_percent: f64,
    pub scum_pixels: u64,
    pub river_pixels: u64,
}

/// Count scum and river pixels and form the ratio.
///
/// A pixel is scum when the mask marks it and it is not background; the
/// river region is everything the background mask leaves uncovered.
pub fn compute_ratio(mask: &ScumMask, profile: &CameraProfile) -> Result<RatioCounts> {
    let (w, h) = (mask.width, mask.height);
    if let Some(bg) = &profile.background_mask {
        if bg.width != w || bg.height != h {
            return Err(Error::DimensionMismatch(format!(
                "scum mask is {w}x{h}, background mask is {}x{}",
                bg.width, bg.height
            )));
        }
    }
    let (scum, river) = match &profile.background_mask {
        None => {
            let scum = mask.data.iter().filter(|&&m| m == 1).count() as u64;
            (scum, (w as u64) * (h as u64))
        }
        Some(bg) => {
            let mut scum = 0u64;
            let mut river = 0u64;
            for (m, b) in mask.data.iter().zip(&bg.data) {
                if *b == 0 {
                    river += 1;
                    scum += u64::from(*m == 1);
                }
            }
            (scum, river)
        }
    };
    if river == 0 {
        return Err(Error::EmptyRiver);
    }
    Ok(RatioCounts {
        ratio_percent: 100.0 * scum as f64 / river as f64,
        scum_pixels: scum,
        river_pixels: river,
    })
}

/// One row of the scum index time series.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexRecord {
    /// Frame timestamp, UTC, minute precision.
    pub timestamp: DateTime<Utc>,
    /// Scum-on-river ratio in percent.
    pub ratio: f64,
    /// Frame mean patch probability, before the floor rule.
    pub mean_probability: f64,
    pub scum_pixels: u64,
    pub river_pixels: u64,
}

/// Heatmap and mask kept alongside the record for emission.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameIndex {
    pub record: IndexRecord,
    pub heatmap: Heatmap,
    pub mask: ScumMask,
}

/// Run the whole prediction chain on one raw frame.
///
/// Crops the far region, classifies all grid patches, assembles and floors
/// the probability matrix, renders the heatmap, binarizes it and counts.
pub fn index_frame(
    frame: &ImageBuffer,
    profile: &CameraProfile,
    classifier: &dyn Classifier,
    timestamp: DateTime<Utc>,
) -> Result<FrameIndex> {
    profile.validate()?;
    let cropped = crop_far_region(frame, &profile.grid_spec)?;
    let patches = extract_patches(&cropped, &profile.grid_spec)?;
    let probs: Vec<ClassProbs> = patches
        .iter()
        .map(|p| classifier.predict(&p.pixels))
        .collect::<Result<_>>()?;
    let matrix = assemble_matrix(&probs, &profile.grid_spec, profile.class_mode)?;
    let mean_probability = matrix.mean();
    let floored = apply_probability_floor(&matrix, profile.probability_floor);
    let heatmap = render_heatmap(&floored, &profile.grid_spec);
    let mask = binarize(&heatmap, profile.binarize_threshold);
    let counts = compute_ratio(&mask, profile)?;
    Ok(FrameIndex {
        record: IndexRecord {
            timestamp,
            ratio: counts.ratio_percent,
            mean_probability,
            scum_pixels: counts.scum_pixels,
            river_pixels: counts.river_pixels,
        },
        heatmap,
        mask,
    })
}

fn save_gray_png(width: u32, height: u32, data: Vec<u8>, path: &Path) -> Result<()> {
    let img: image::GrayImage = image::ImageBuffer::from_raw(width, height, data)
        .expect("raster length is validated at construction");
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn default_spec() -> PatchGridSpec {
        PatchGridSpec::default()
    }

    fn uniform_probs(p: ClassProbs, n: usize) -> Vec<ClassProbs> {
        vec![p; n]
    }

    #[test]
    fn assemble_selects_target_class() {
        let spec = default_spec();
        let m = assemble_matrix(&uniform_probs([0.0, 1.0, 0.0], 20), &spec, ClassMode::C1Only).unwrap();
        assert!(m.cells().iter().all(|&c| c == 1.0));

        let third = [1.0 / 3.0; 3];
        let m = assemble_matrix(&uniform_probs(third, 20), &spec, ClassMode::C0PlusC1).unwrap();
        assert!(m.cells().iter().all(|&c| (c - 2.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn assemble_rejects_wrong_count() {
        let spec = default_spec();
        let err = assemble_matrix(&uniform_probs([0.0, 1.0, 0.0], 19), &spec, ClassMode::C1Only);
        assert!(matches!(err, Err(Error::CountMismatch { expected: 20, got: 19 })));
    }

    #[test]
    fn assemble_rejects_off_simplex_vectors() {
        let spec = default_spec();
        let err = assemble_matrix(&uniform_probs([0.5, 0.6, 0.2], 20), &spec, ClassMode::C1Only);
        assert!(matches!(err, Err(Error::InvalidParam(_))));
    }

    #[test]
    fn floor_zeroes_negligible_frames() {
        let spec = default_spec();
        let m = ProbabilityMatrix::from_cells(spec.rows, spec.cols, vec![0.005; 20], ClassMode::C1Only).unwrap();
        let out = apply_probability_floor(&m, 0.01);
        assert!(out.cells().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn floor_keeps_ordinary_frames() {
        let spec = default_spec();
        let m = ProbabilityMatrix::from_cells(spec.rows, spec.cols, vec![0.5; 20], ClassMode::C1Only).unwrap();
        let out = apply_probability_floor(&m, 0.01);
        assert_eq!(out, m);
    }

    #[test]
    fn floor_uses_the_frame_mean_not_cell_values() {
        // one cell at 0.21: mean 0.0105 > 0.01, so nothing changes
        let spec = default_spec();
        let mut cells = vec![0.0; 20];
        cells[7] = 0.21;
        let m = ProbabilityMatrix::from_cells(spec.rows, spec.cols, cells, ClassMode::C1Only).unwrap();
        let out = apply_probability_floor(&m, 0.01);
        assert_eq!(out, m);
    }

    #[test]
    fn heatmap_scales_endpoints_and_midpoint() {
        let spec = default_spec();
        let mut cells = vec![0.0; 20];
        cells[0] = 1.0;
        cells[1] = 0.5;
        let m = ProbabilityMatrix::from_cells(spec.rows, spec.cols, cells, ClassMode::C1Only).unwrap();
        let h = render_heatmap(&m, &spec);
        assert_eq!(h.width(), 1280);
        assert_eq!(h.height(), 512);
        assert_eq!(h.get(0, 0), 255); // cell (0,0)
        assert_eq!(h.get(256, 0), 128); // cell (0,1): round-half-up of 127.5
        assert_eq!(h.get(512, 0), 0); // cell (0,2)
        // block constancy
        assert_eq!(h.get(255, 127), 255);
        assert_eq!(h.get(511, 127), 128);
    }

    #[test]
    fn binarize_thresholds_inclusively() {
        let spec = default_spec();
        let m = ProbabilityMatrix::from_cells(spec.rows, spec.cols, vec![1.0; 20], ClassMode::C1Only).unwrap();
        let mask = binarize(&render_heatmap(&m, &spec), 128);
        assert!(mask.data().iter().all(|&b| b == 1));

        let zero = ProbabilityMatrix::from_cells(spec.rows, spec.cols, vec![0.0; 20], ClassMode::C1Only).unwrap();
        let mask = binarize(&render_heatmap(&zero, &spec), 128);
        assert!(mask.data().iter().all(|&b| b == 0));

        // exactly at the threshold counts as scum
        let m = ProbabilityMatrix::from_cells(spec.rows, spec.cols, vec![0.5; 20], ClassMode::C1Only).unwrap();
        let mask = binarize(&render_heatmap(&m, &spec), 128);
        assert!(mask.data().iter().all(|&b| b == 1));
    }

    #[test]
    fn checkerboard_mask_counts_blocks() {
        let spec = default_spec();
        let cells: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 0.9 } else { 0.1 }).collect();
        let m = ProbabilityMatrix::from_cells(spec.rows, spec.cols, cells, ClassMode::C1Only).unwrap();
        let mask = binarize(&render_heatmap(&m, &spec), 128);
        let profile = CameraProfile::new("cam", spec);
        let counts = compute_ratio(&mask, &profile).unwrap();
        assert_eq!(counts.scum_pixels, 10 * 32768);
        assert_eq!(counts.river_pixels, 20 * 32768);
        assert!((counts.ratio_percent - 50.0).abs() < 1e-12);
    }

    #[test]
    fn three_blocks_of_twenty_is_fifteen_percent() {
        let spec = default_spec();
        let mut cells = vec![0.0; 20];
        for c in cells.iter_mut().take(3) {
            *c = 1.0;
        }
        let m = ProbabilityMatrix::from_cells(spec.rows, spec.cols, cells, ClassMode::C1Only).unwrap();
        let mask = binarize(&render_heatmap(&m, &spec), 128);
        let counts = compute_ratio(&mask, &CameraProfile::new("cam", spec)).unwrap();
        assert_eq!(counts.ratio_percent, 15.0);
    }

    #[test]
    fn background_blocks_are_excluded_from_both_counts() {
        let spec = default_spec();
        // background covers 2 full patch blocks (cells 0 and 1)
        let mut bg = vec![0u8; (1280 * 512) as usize];
        for y in 0..128u32 {
            for x in 0..512u32 {
                bg[(y * 1280 + x) as usize] = 1;
            }
        }
        let bg = BackgroundMask::from_bits(1280, 512, bg).unwrap();
        let profile = CameraProfile::new("cam", spec.clone()).with_background(bg).unwrap();

        // scum on one non-background block (cell 2) and one background block (cell 0)
        let mut cells = vec![0.0; 20];
        cells[0] = 1.0;
        cells[2] = 1.0;
        let m = ProbabilityMatrix::from_cells(spec.rows, spec.cols, cells, ClassMode::C1Only).unwrap();
        let mask = binarize(&render_heatmap(&m, &spec), 128);
        let counts = compute_ratio(&mask, &profile).unwrap();
        assert_eq!(counts.scum_pixels, 32768);
        assert_eq!(counts.river_pixels, 18 * 32768);
        assert!((counts.ratio_percent - 100.0 / 18.0).abs() < 1e-9);
    }

    #[test]
    fn all_background_river_is_an_error() {
        let spec = PatchGridSpec::new(1, 1, 4, 4, 0).unwrap();
        let bg = BackgroundMask::from_bits(4, 4, vec![1; 16]).unwrap();
        let profile = CameraProfile::new("cam", spec).with_background(bg).unwrap();
        let mask = ScumMask::from_bits(4, 4, vec![0; 16]).unwrap();
        assert!(matches!(compute_ratio(&mask, &profile), Err(Error::EmptyRiver)));
    }

    /// Ground-truth classifier for pipeline tests: reports C1 with the
    /// probability painted into the patch's top-left pixel red channel.
    struct PixelOracle;

    impl Classifier for PixelOracle {
        fn predict(&self, patch: &ImageBuffer) -> crate::error::Result<ClassProbs> {
            let p = patch.get(0, 0)[0] as f64 / 255.0;
            Ok([0.0, p, 1.0 - p])
        }

        fn input_dims(&self) -> (u32, u32) {
            (128, 256)
        }
    }

    #[test]
    fn index_frame_runs_the_whole_chain() {
        let spec = default_spec();
        let mut frame = ImageBuffer::filled(1280, 720, [0, 0, 0]).unwrap();
        // paint cells 0..3 as full scum via the oracle's red channel
        for cell in 0..3u32 {
            let x0 = cell * 256;
            for y in 208..336 {
                for x in x0..x0 + 256 {
                    frame.set(x, y, [255, 0, 0]);
                }
            }
        }
        let profile = CameraProfile::new("cam", spec);
        let ts = DateTime::parse_from_rfc3339("2021-07-01T10:20:00Z").unwrap().to_utc();
        let out = index_frame(&frame, &profile, &PixelOracle, ts).unwrap();
        assert_eq!(out.record.ratio, 15.0);
        assert_eq!(out.record.scum_pixels, 3 * 32768);
        assert!((out.record.mean_probability - 0.15).abs() < 1e-12);
        assert_eq!(out.record.timestamp, ts);
        assert_eq!(out.heatmap.get(0, 0), 255);
        assert_eq!(out.mask.get(0, 0), 1);
        assert_eq!(out.mask.get(1279, 511), 0);
    }

    #[test]
    fn index_frame_applies_the_floor() {
        let spec = default_spec();
        // red channel 2/255 ~ 0.0078 < 0.01 mean -> floored to zero
        let frame = ImageBuffer::filled(1280, 720, [2, 0, 0]).unwrap();
        let profile = CameraProfile::new("cam", spec);
        let ts = DateTime::parse_from_rfc3339("2021-07-01T10:30:00Z").unwrap().to_utc();
        let out = index_frame(&frame, &profile, &PixelOracle, ts).unwrap();
        assert_eq!(out.record.ratio, 0.0);
        assert_eq!(out.record.scum_pixels, 0);
        assert!(out.heatmap.data().iter().all(|&v| v == 0));
        // the pre-floor mean is still reported
        assert!((out.record.mean_probability - 2.0 / 255.0).abs() < 1e-9);
    }

    #[test]
    fn masks_round_trip_through_png() {
        let dir = tempfile::tempdir().unwrap();
        let spec = PatchGridSpec::new(2, 2, 8, 8, 0).unwrap();
        let cells = vec![0.9, 0.1, 0.4, 0.8];
        let m = ProbabilityMatrix::from_cells(2, 2, cells, ClassMode::C1Only).unwrap();
        let heat = render_heatmap(&m, &spec);
        let mask = binarize(&heat, 128);

        let hp = dir.path().join("heat.png");
        heat.save_png(&hp).unwrap();
        let img = image::open(&hp).unwrap().into_luma8();
        assert_eq!(img.as_raw().as_slice(), heat.data());

        let mp = dir.path().join("mask.png");
        mask.save_png(&mp).unwrap();
        let back = BackgroundMask::load_png(&mp).unwrap();
        assert_eq!(back.data, mask.data);
    }

    /// Brute-force oracle: nested per-pixel loops, no shared code with
    /// `compute_ratio`.
    fn ratio_by_pixel_walk(mask: &ScumMask, bg: Option<&BackgroundMask>) -> (u64, u64) {
        let mut scum = 0;
        let mut river = 0;
        for y in 0..mask.height() {
            for x in 0..mask.width() {
                let is_bg = bg.map(|b| b.get(x, y) == 1).unwrap_or(false);
                if !is_bg {
                    river += 1;
                    if mask.get(x, y) == 1 {
                        scum += 1;
                    }
                }
            }
        }
        (scum, river)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        /// compute_ratio agrees with the per-pixel oracle exactly.
        #[test]
        fn ratio_matches_pixel_walk(seed in 0u64..10_000, w in 1u32..40, h in 1u32..40, with_bg in proptest::bool::ANY) {
            let mut rng = seeded(seed);
            let mask_bits: Vec<u8> = (0..w as usize * h as usize).map(|_| rng.random_range(0..=1u8)).collect();
            let mask = ScumMask::from_bits(w, h, mask_bits).unwrap();
            let spec = PatchGridSpec::new(1, 1, h, w, 0).unwrap();
            let mut profile = CameraProfile::new("cam", spec);
            let mut bg = None;
            if with_bg {
                let bits: Vec<u8> = (0..w as usize * h as usize).map(|_| u8::from(rng.random_range(0..4u8) == 0)).collect();
                let m = BackgroundMask::from_bits(w, h, bits).unwrap();
                bg = Some(m.clone());
                profile = profile.with_background(m).unwrap();
            }
            let (scum, river) = ratio_by_pixel_walk(&mask, bg.as_ref());
            match compute_ratio(&mask, &profile) {
                Ok(counts) => {
                    prop_assert_eq!(counts.scum_pixels, scum);
                    prop_assert_eq!(counts.river_pixels, river);
                    prop_assert_eq!(counts.ratio_percent, 100.0 * scum as f64 / river as f64);
                    prop_assert!((0.0..=100.0).contains(&counts.ratio_percent));
                }
                Err(Error::EmptyRiver) => prop_assert_eq!(river, 0),
                Err(e) => return Err(TestCaseError::fail(format!("unexpected error {e}"))),
            }
        }

        /// Raising one matrix cell never lowers scum pixels or the ratio.
        #[test]
        fn raising_a_cell_is_monotone(seed in 0u64..10_000, cell in 0usize..20, bump in 0.0f64..1.0) {
            let spec = PatchGridSpec::default();
            let mut rng = seeded(seed);
            let cells: Vec<f64> = (0..20).map(|_| rng.random::<f64>()).collect();
            let mut raised = cells.clone();
            raised[cell] = (raised[cell] + bump).min(1.0);

            let profile = CameraProfile::new("cam", spec.clone());
            let run = |cells: Vec<f64>| {
                let m = ProbabilityMatrix::from_cells(spec.rows, spec.cols, cells, ClassMode::C1Only).unwrap();
                let mask = binarize(&render_heatmap(&m, &spec), profile.binarize_threshold);
                compute_ratio(&mask, &profile).unwrap()
            };
            let base = run(cells);
            let lifted = run(raised);
            prop_assert!(lifted.scum_pixels >= base.scum_pixels);
            prop_assert!(lifted.ratio_percent >= base.ratio_percent);
        }

        /// The floor rule is all-or-nothing.
        #[test]
        fn floor_is_all_or_nothing(seed in 0u64..10_000, floor in 0.0f64..0.5) {
            let mut rng = seeded(seed);
            let cells: Vec<f64> = (0..20).map(|_| rng.random::<f64>() * 0.2).collect();
            let m = ProbabilityMatrix::from_cells(4, 5, cells, ClassMode::C1Only).unwrap();
            let out = apply_probability_floor(&m, floor);
            if m.mean() <= floor {
                prop_assert!(out.cells().iter().all(|&c| c == 0.0));
            } else {
                prop_assert_eq!(out, m);
            }
        }
    }
}
