//! Mixture image augmentation: mixup, Cutout and RICAP.
//!
//! All three operators take labeled patches and produce a new labeled patch
//! whose class weights live on the 3-simplex. mixup blends two images and
//! their labels with a Beta-distributed weight, Cutout erases one random
//! square and keeps the label, RICAP tiles crops of four images and mixes
//! the labels in proportion to the tile areas.
//!
//! Operators are pure given an explicit generator, so identical inputs and
//! seeds give bit-identical outputs.

use rand::Rng;

use crate::error::{Error, Result};
use crate::imagecore::ImageBuffer;
use crate::rng::sample_standard_normal;

/// The three river-surface conditions a patch can show.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScumClass {
    /// C0: thin scum starting to form.
    EarlyScum,
    /// C1: grown, thick scum. The target class of the monitoring index.
    GrowThick,
    /// C2: plain water and mirrored structures.
    Background,
}

impl ScumClass {
    pub const ALL: [ScumClass; 3] = [ScumClass::EarlyScum, ScumClass::GrowThick, ScumClass::Background];

    pub fn index(self) -> usize {
        match self {
            ScumClass::EarlyScum => 0,
            ScumClass::GrowThick => 1,
            ScumClass::Background => 2,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ScumClass::EarlyScum => "early-scum",
            ScumClass::GrowThick => "grow-thick",
            ScumClass::Background => "background",
        }
    }
}

/// Class-weight vector on the 3-simplex.
///
/// One-hot labels are the pure corners; the mixture operators produce
/// interior points. Weights are stored exactly as computed, never
/// renormalized, so operator identities hold bit-exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftLabel {
    weights: [f64; 3],
}

/// Tolerance on the simplex-sum invariant.
pub const LABEL_SUM_TOLERANCE: f64 = 1e-9;

impl SoftLabel {
    pub fn new(weights: [f64; 3]) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0 || *w > 1.0) {
            return Err(Error::InvalidParam(format!(
                "label weights must lie in [0,1], got {weights:?}"
            )));
        }
        if (sum - 1.0).abs() > LABEL_SUM_TOLERANCE {
            return Err(Error::InvalidParam(format!(
                "label weights must sum to 1, got {sum}"
            )));
        }
        Ok(Self { weights })
    }

    pub fn one_hot(class: ScumClass) -> Self {
        let mut weights = [0.0; 3];
        weights[class.index()] = 1.0;
        Self { weights }
    }

    pub fn weights(&self) -> [f64; 3] {
        self.weights
    }

    pub fn weight(&self, class: ScumClass) -> f64 {
        self.weights[class.index()]
    }

    /// Class with the largest weight; ties go to the lower index.
    pub fn dominant(&self) -> ScumClass {
        let mut best = 0;
        for k in 1..3 {
            if self.weights[k] > self.weights[best] {
                best = k;
            }
        }
        ScumClass::from_index(best).unwrap()
    }

    /// `lambda * a + (1 - lambda) * b`, the mixup label rule.
    pub fn mix(a: &SoftLabel, b: &SoftLabel, lambda: f64) -> Self {
        let mut weights = [0.0; 3];
        for k in 0..3 {
            weights[k] = lambda * a.weights[k] + (1.0 - lambda) * b.weights[k];
        }
        Self { weights }
    }

    /// Area-weighted mixture of four labels, the RICAP label rule.
    pub fn mix4(labels: [&SoftLabel; 4], lambdas: [f64; 4]) -> Self {
        let mut weights = [0.0; 3];
        for (label, lambda) in labels.iter().zip(lambdas) {
            for k in 0..3 {
                weights[k] += lambda * label.weights[k];
            }
        }
        Self { weights }
    }
}

/// A patch image together with its soft class label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPatch {
    pub image: ImageBuffer,
    pub label: SoftLabel,
}

impl LabeledPatch {
    pub fn new(image: ImageBuffer, label: SoftLabel) -> Self {
        Self { image, label }
    }
}

/// Gray value written into Cutout holes. Roughly the dataset mean.
pub const DEFAULT_CUTOUT_FILL: u8 = 128;

/// RICAP boundary sampling mode. Only the unrestricted variant is used:
/// the boundary may fall anywhere in the patch, including its edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RicapMode {
    #[default]
    Anywhere,
}

/// Parameters shared by the augmentation operators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub mixup_alpha: f64,
    pub cutout_drop_rate: f64,
    pub cutout_fill: u8,
    pub ricap_mode: RicapMode,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            mixup_alpha: 1.0,
            cutout_drop_rate: 0.5,
            cutout_fill: DEFAULT_CUTOUT_FILL,
            ricap_mode: RicapMode::Anywhere,
        }
    }
}

impl AugmentParams {
    pub fn new(mixup_alpha: f64, cutout_drop_rate: f64) -> Result<Self> {
        if !mixup_alpha.is_finite() || mixup_alpha <= 0.0 {
            return Err(Error::InvalidParam(format!(
                "mixup alpha must be positive, got {mixup_alpha}"
            )));
        }
        if !cutout_drop_rate.is_finite() || cutout_drop_rate <= 0.0 || cutout_drop_rate >= 1.0 {
            return Err(Error::InvalidParam(format!(
                "cutout drop rate must lie in (0,1), got {cutout_drop_rate}"
            )));
        }
        Ok(Self { mixup_alpha, cutout_drop_rate, ..Self::default() })
    }
}

/// Which operator the training loop applies. Exactly one operator is
/// applied per sample; operators are never stacked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AugmentPolicy {
    #[default]
    None,
    Mixup,
    Cutout,
    Ricap,
}

impl AugmentPolicy {
    pub const ALL: [AugmentPolicy; 4] =
        [AugmentPolicy::None, AugmentPolicy::Mixup, AugmentPolicy::Cutout, AugmentPolicy::Ricap];

    pub fn name(self) -> &'static str {
        match self {
            AugmentPolicy::None => "baseline",
            AugmentPolicy::Mixup => "mixup",
            AugmentPolicy::Cutout => "cutout",
            AugmentPolicy::Ricap => "ricap",
        }
    }
}

impl std::str::FromStr for AugmentPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "baseline" => Ok(AugmentPolicy::None),
            "mixup" => Ok(AugmentPolicy::Mixup),
            "cutout" => Ok(AugmentPolicy::Cutout),
            "ricap" => Ok(AugmentPolicy::Ricap),
            other => Err(Error::InvalidParam(format!(
                "unknown augment policy '{other}' (expected baseline|mixup|cutout|ricap)"
            ))),
        }
    }
}

/// One draw from Beta(alpha, alpha).
///
/// Realized as `g1 / (g1 + g2)` with two independent Gamma(alpha, 1) draws:
/// Marsaglia-Tsang squeeze for alpha >= 1, the standard `U^(1/alpha)` boost
/// below 1. For alpha = 1 the result is uniform on [0, 1].
pub fn sample_beta<R: Rng>(rng: &mut R, alpha: f64) -> Result<f64> {
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(Error::InvalidParam(format!("beta alpha must be positive, got {alpha}")));
    }
    loop {
        let g1 = sample_gamma(rng, alpha);
        let g2 = sample_gamma(rng, alpha);
        let sum = g1 + g2;
        if sum > 0.0 {
            return Ok(g1 / sum);
        }
        // Both draws underflowed to zero; only possible at tiny alpha.
    }
}

/// Gamma(shape, 1) draw, shape > 0.
fn sample_gamma<R: Rng>(rng: &mut R, shape: f64) -> f64 {
    if shape < 1.0 {
        // Boost: G(a) = G(a + 1) * U^(1/a)
        let u: f64 = loop {
            let u = rng.random::<f64>();
            if u > 0.0 {
                break u;
            }
        };
        return sample_gamma_ge1(rng, shape + 1.0) * u.powf(1.0 / shape);
    }
    sample_gamma_ge1(rng, shape)
}

/// Marsaglia-Tsang rejection sampler, valid for shape >= 1.
fn sample_gamma_ge1<R: Rng>(rng: &mut R, shape: f64) -> f64 {
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = sample_standard_normal(rng);
        let v = (1.0 + c * x).powi(3);
        if v <= 0.0 {
            continue;
        }
        let u: f64 = rng.random();
        if u < 1.0 - 0.0331 * x.powi(4) {
            return d * v;
        }
        if u > 0.0 && u.ln() < 0.5 * x * x + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// mixup: pixel-wise `lambda * a + (1 - lambda) * b` in real arithmetic,
/// rounded to the nearest 8-bit value; labels mixed the same way.
pub fn mixup(a: &LabeledPatch, b: &LabeledPatch, lambda: f64) -> Result<LabeledPatch> {
    if a.image.width() != b.image.width() || a.image.height() != b.image.height() {
        return Err(Error::DimensionMismatch(format!(
            "mixup inputs are {}x{} and {}x{}",
            a.image.width(),
            a.image.height(),
            b.image.width(),
            b.image.height()
        )));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidParam(format!("mixup lambda must lie in [0,1], got {lambda}")));
    }
    let data: Vec<u8> = a
        .image
        .data()
        .iter()
        .zip(b.image.data())
        .map(|(&pa, &pb)| {
            let mixed = lambda * pa as f64 + (1.0 - lambda) * pb as f64;
            mixed.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    let image = ImageBuffer::new(a.image.width(), a.image.height(), data)?;
    Ok(LabeledPatch::new(image, SoftLabel::mix(&a.label, &b.label, lambda)))
}

/// Side (in pixels) of the Cutout square for a drop rate on an HxW patch:
/// `round(sqrt(d * H * W))`, so the square area matches the requested
/// fraction of the patch area.
pub fn cutout_square_side(drop_rate: f64, height: u32, width: u32) -> Result<u32> {
    if !drop_rate.is_finite() || drop_rate <= 0.0 || drop_rate >= 1.0 {
        return Err(Error::InvalidParam(format!(
            "cutout drop rate must lie in (0,1), got {drop_rate}"
        )));
    }
    Ok((drop_rate * height as f64 * width as f64).sqrt().round() as u32)
}

/// Cutout with an explicit square center. The square is clipped at the
/// patch borders; the label is never touched.
pub fn cutout_with_center(
    patch: &LabeledPatch,
    drop_rate: f64,
    center_x: u32,
    center_y: u32,
    fill: u8,
) -> Result<LabeledPatch> {
    let (w, h) = (patch.image.width(), patch.image.height());
    if center_x >= w || center_y >= h {
        return Err(Error::InvalidParam(format!(
            "cutout center ({center_x},{center_y}) outside {w}x{h} patch"
        )));
    }
    let side = cutout_square_side(drop_rate, h, w)? as i64;
    let x0 = center_x as i64 - side / 2;
    let y0 = center_y as i64 - side / 2;
    let x_lo = x0.max(0) as u32;
    let y_lo = y0.max(0) as u32;
    let x_hi = (x0 + side).min(w as i64) as u32;
    let y_hi = (y0 + side).min(h as i64) as u32;

    let mut image = patch.image.clone();
    for y in y_lo..y_hi {
        for x in x_lo..x_hi {
            image.set(x, y, [fill, fill, fill]);
        }
    }
    Ok(LabeledPatch::new(image, patch.label))
}

/// Cutout: erase one square region whose center is uniform over the patch.
pub fn cutout<R: Rng>(patch: &LabeledPatch, drop_rate: f64, rng: &mut R) -> Result<LabeledPatch> {
    cutout_with_fill(patch, drop_rate, DEFAULT_CUTOUT_FILL, rng)
}

pub fn cutout_with_fill<R: Rng>(
    patch: &LabeledPatch,
    drop_rate: f64,
    fill: u8,
    rng: &mut R,
) -> Result<LabeledPatch> {
    let cx = rng.random_range(0..patch.image.width());
    let cy = rng.random_range(0..patch.image.height());
    cutout_with_center(patch, drop_rate, cx, cy, fill)
}

/// How one RICAP draw carved up the output patch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RicapSample {
    /// Boundary column: sources 1 and 3 contribute `boundary_w` columns.
    pub boundary_w: u32,
    /// Boundary row: sources 1 and 2 contribute `boundary_h` rows.
    pub boundary_h: u32,
    /// Crop sizes per source, `(w_m, h_m)`.
    pub crop_sizes: [(u32, u32); 4],
    /// Upper-left corner of the crop taken from each source.
    pub crop_origins: [(u32, u32); 4],
    /// Area ratios `w_m * h_m / (w * h)`; the label mixing weights.
    pub lambdas: [f64; 4],
}

/// RICAP: tile crops of four sources into one patch and mix their labels
/// by tile area. Boundary and crop origins are discrete uniform draws.
pub fn ricap<R: Rng>(sources: &[LabeledPatch; 4], rng: &mut R) -> Result<LabeledPatch> {
    ricap_trace(sources, rng).map(|(patch, _)| patch)
}

/// RICAP, returning the sampled geometry alongside the output.
pub fn ricap_trace<R: Rng>(
    sources: &[LabeledPatch; 4],
    rng: &mut R,
) -> Result<(LabeledPatch, RicapSample)> {
    let (w_bar, h_bar) = (sources[0].image.width(), sources[0].image.height());
    let boundary_w = rng.random_range(0..=w_bar);
    let boundary_h = rng.random_range(0..=h_bar);
    ricap_with_boundary(sources, boundary_w, boundary_h, rng)
}

/// RICAP with the boundary position fixed; only crop origins are sampled.
pub fn ricap_with_boundary<R: Rng>(
    sources: &[LabeledPatch; 4],
    boundary_w: u32,
    boundary_h: u32,
    rng: &mut R,
) -> Result<(LabeledPatch, RicapSample)> {
    let (w_bar, h_bar) = (sources[0].image.width(), sources[0].image.height());
    for s in sources.iter().skip(1) {
        if s.image.width() != w_bar || s.image.height() != h_bar {
            return Err(Error::DimensionMismatch(format!(
                "ricap sources must share dimensions, got {}x{} and {}x{}",
                w_bar,
                h_bar,
                s.image.width(),
                s.image.height()
            )));
        }
    }
    if boundary_w > w_bar || boundary_h > h_bar {
        return Err(Error::InvalidParam(format!(
            "ricap boundary ({boundary_w},{boundary_h}) outside {w_bar}x{h_bar} patch"
        )));
    }

    // Region sizes: left column pair shares boundary_w, top row pair shares
    // boundary_h. The four tiles partition the output by construction.
    let crop_sizes = [
        (boundary_w, boundary_h),
        (w_bar - boundary_w, boundary_h),
        (boundary_w, h_bar - boundary_h),
        (w_bar - boundary_w, h_bar - boundary_h),
    ];
    let tile_offsets = [
        (0, 0),
        (boundary_w, 0),
        (0, boundary_h),
        (boundary_w, boundary_h),
    ];

    let mut crop_origins = [(0u32, 0u32); 4];
    let mut out = ImageBuffer::filled(w_bar, h_bar, [0, 0, 0])?;
    for m in 0..4 {
        let (w_m, h_m) = crop_sizes[m];
        let x_m = rng.random_range(0..=w_bar - w_m);
        let y_m = rng.random_range(0..=h_bar - h_m);
        crop_origins[m] = (x_m, y_m);
        if w_m == 0 || h_m == 0 {
            continue;
        }
        let crop = sources[m].image.sub_image(x_m, y_m, w_m, h_m)?;
        out.blit(&crop, tile_offsets[m].0, tile_offsets[m].1)?;
    }

    let area = w_bar as f64 * h_bar as f64;
    let lambdas = [
        crop_sizes[0].0 as f64 * crop_sizes[0].1 as f64 / area,
        crop_sizes[1].0 as f64 * crop_sizes[1].1 as f64 / area,
        crop_sizes[2].0 as f64 * crop_sizes[2].1 as f64 / area,
        crop_sizes[3].0 as f64 * crop_sizes[3].1 as f64 / area,
    ];
    let label = SoftLabel::mix4(
        [&sources[0].label, &sources[1].label, &sources[2].label, &sources[3].label],
        lambdas,
    );
    let sample = RicapSample { boundary_w, boundary_h, crop_sizes, crop_origins, lambdas };
    Ok((LabeledPatch::new(out, label), sample))
}

/// Produce the training view of `dataset[index]` under `policy`.
///
/// Partners for mixup and RICAP are drawn uniformly from the whole dataset
/// regardless of class; mixing within a class is allowed.
pub fn augment_sample<R: Rng>(
    dataset: &[LabeledPatch],
    index: usize,
    policy: AugmentPolicy,
    params: &AugmentParams,
    rng: &mut R,
) -> Result<LabeledPatch> {
    let base = &dataset[index];
    match policy {
        AugmentPolicy::None => Ok(base.clone()),
        AugmentPolicy::Mixup => {
            let partner = &dataset[rng.random_range(0..dataset.len())];
            let lambda = sample_beta(rng, params.mixup_alpha)?;
            mixup(base, partner, lambda)
        }
        AugmentPolicy::Cutout => cutout_with_fill(base, params.cutout_drop_rate, params.cutout_fill, rng),
        AugmentPolicy::Ricap => {
            let pick = |rng: &mut R| dataset[rng.random_range(0..dataset.len())].clone();
            let sources = [base.clone(), pick(rng), pick(rng), pick(rng)];
            ricap(&sources, rng)
        }
    }
}
