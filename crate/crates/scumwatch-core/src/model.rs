//! From-scratch convolutional patch classifier with soft-target training.
//!
//! `TinyConvNet` is a deliberately small stand-in for a heavyweight backbone:
//! three conv/ReLU/maxpool stages, global average pooling and an affine head
//! over the three classes. Patches are average-pooled 4x before entering the
//! network (128x256 becomes 32x64), which keeps CPU training in the seconds
//! range. Anything implementing [`Classifier`] can replace it downstream.
//!
//! All parameters live in one flat `Vec<f64>`, so the SGD step, the
//! serializer and finite-difference gradient probes all address weights the
//! same way.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::augment::{augment_sample, AugmentParams, AugmentPolicy, LabeledPatch, ScumClass, SoftLabel};
use crate::error::{Error, Result};
use crate::imagecore::{ImageBuffer, CHANNELS};

/// Probabilities over the three classes, in class index order.
pub type ClassProbs = [f64; 3];

/// A patch classifier. Output probabilities are nonnegative and sum to one
/// within 1e-6.
pub trait Classifier {
    fn predict(&self, patch: &ImageBuffer) -> Result<ClassProbs>;

    /// Native (height, width) consumed by the network.
    fn input_dims(&self) -> (u32, u32);

    fn class_names(&self) -> [&'static str; 3] {
        [ScumClass::EarlyScum.name(), ScumClass::GrowThick.name(), ScumClass::Background.name()]
    }
}

const KERNEL: usize = 3;
const N_CLASSES: usize = 3;
/// Patches are average-pooled by this factor before entering the network.
const DOWNSAMPLE: u32 = 4;
/// Channel widths of the three conv stages.
const STAGE_CHANNELS: [usize; 3] = [8, 16, 32];

/// Network shape. Fixed except for the input plane size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Arch {
    input_h: usize,
    input_w: usize,
    channels: [usize; 3],
}

impl Arch {
    fn new(input_h: usize, input_w: usize, channels: [usize; 3]) -> Result<Self> {
        // three 2x2 pools halve the plane three times
        if input_h == 0 || input_w == 0 || input_h % 8 != 0 || input_w % 8 != 0 {
            return Err(Error::InvalidParam(format!(
                "network input must be a positive multiple of 8, got {input_h}x{input_w}"
            )));
        }
        if channels.iter().any(|&c| c == 0) {
            return Err(Error::InvalidParam("stage channels must be positive".into()));
        }
        Ok(Self { input_h, input_w, channels })
    }

    /// (in_ch, out_ch) per conv stage.
    fn conv_shapes(&self) -> [(usize, usize); 3] {
        [
            (CHANNELS, self.channels[0]),
            (self.channels[0], self.channels[1]),
            (self.channels[1], self.channels[2]),
        ]
    }

    /// Plane size entering each stage.
    fn stage_dims(&self) -> [(usize, usize); 3] {
        [
            (self.input_h, self.input_w),
            (self.input_h / 2, self.input_w / 2),
            (self.input_h / 4, self.input_w / 4),
        ]
    }

    /// Flat layout: conv1 w, conv1 b, conv2 w, conv2 b, conv3 w, conv3 b,
    /// fc w, fc b.
    fn tensor_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::new();
        for (ci, co) in self.conv_shapes() {
            sizes.push(co * ci * KERNEL * KERNEL);
            sizes.push(co);
        }
        sizes.push(N_CLASSES * self.channels[2]);
        sizes.push(N_CLASSES);
        sizes
    }

    fn param_count(&self) -> usize {
        self.tensor_sizes().iter().sum()
    }

    fn tensor_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::new();
        let mut acc = 0;
        for s in self.tensor_sizes() {
            offsets.push(acc);
            acc += s;
        }
        offsets
    }
}

/// Reference implementation of [`Classifier`].
#[derive(Debug, Clone, PartialEq)]
pub struct TinyConvNet {
    arch: Arch,
    params: Vec<f64>,
}

impl TinyConvNet {
    /// Network for a given native input plane, all parameters zero.
    pub fn new(input_h: u32, input_w: u32) -> Result<Self> {
        let arch = Arch::new(input_h as usize, input_w as usize, STAGE_CHANNELS)?;
        let params = vec![0.0; arch.param_count()];
        Ok(Self { arch, params })
    }

    /// Network sized for the production 128x256 patches (native 32x64).
    pub fn for_default_patch() -> Self {
        Self::new(128 / DOWNSAMPLE, 256 / DOWNSAMPLE).expect("default arch is valid")
    }

    /// Network sized so that `patch_h x patch_w` patches enter after the
    /// standard 4x average-pool.
    pub fn for_patch_dims(patch_h: u32, patch_w: u32) -> Result<Self> {
        if patch_h % DOWNSAMPLE != 0 || patch_w % DOWNSAMPLE != 0 {
            return Err(Error::InvalidParam(format!(
                "patch dimensions {patch_h}x{patch_w} are not a multiple of the {DOWNSAMPLE}x downsample"
            )));
        }
        Self::new(patch_h / DOWNSAMPLE, patch_w / DOWNSAMPLE)
    }

    /// Glorot-uniform conv weights; conv biases and the whole affine head
    /// start at zero, so a fresh network predicts exactly (1/3, 1/3, 1/3).
    pub fn init_weights<R: Rng>(&mut self, rng: &mut R) {
        let offsets = self.arch.tensor_offsets();
        let sizes = self.arch.tensor_sizes();
        for p in self.params.iter_mut() {
            *p = 0.0;
        }
        for (stage, (ci, co)) in self.arch.conv_shapes().into_iter().enumerate() {
            let fan_in = ci * KERNEL * KERNEL;
            let fan_out = co * KERNEL * KERNEL;
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let start = offsets[stage * 2];
            for i in 0..sizes[stage * 2] {
                self.params[start + i] = rng.random_range(-bound..bound);
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn param(&self, index: usize) -> f64 {
        self.params[index]
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        self.params[index] = value;
    }

    /// One SGD step: `params -= learning_rate * grads`.
    pub fn apply_gradients(&mut self, grads: &[f64], learning_rate: f64) {
        assert_eq!(grads.len(), self.params.len());
        for (p, g) in self.params.iter_mut().zip(grads) {
            *p -= learning_rate * g;
        }
    }

    /// Normalize a patch into the network's CHW input layout.
    ///
    /// Accepts any patch that is an exact `k`x multiple of the native input
    /// plane; each `k`x`k` block is averaged, then scaled to [0, 1].
    pub fn preprocess(&self, patch: &ImageBuffer) -> Result<Vec<f64>> {
        let (h, w) = (patch.height() as usize, patch.width() as usize);
        let (ih, iw) = (self.arch.input_h, self.arch.input_w);
        if h % ih != 0 || w % iw != 0 || h / ih != w / iw {
            return Err(Error::DimensionMismatch(format!(
                "patch {w}x{h} is not an integer multiple of network input {iw}x{ih}"
            )));
        }
        let k = h / ih;
        let data = patch.data();
        let mut out = vec![0.0; CHANNELS * ih * iw];
        let norm = 1.0 / (k * k) as f64 / 255.0;
        for c in 0..CHANNELS {
            for y in 0..ih {
                for x in 0..iw {
                    let mut sum = 0.0;
                    for dy in 0..k {
                        let row = (y * k + dy) * w;
                        for dx in 0..k {
                            sum += data[(row + x * k + dx) * CHANNELS + c] as f64;
                        }
                    }
                    out[c * ih * iw + y * iw + x] = sum * norm;
                }
            }
        }
        Ok(out)
    }

    /// Class probabilities for a normalized input (see [`Self::preprocess`]).
    pub fn forward_input(&self, input: &[f64]) -> ClassProbs {
        self.forward_trace(input).probs
    }

    /// Cross-entropy of the prediction against a soft target.
    pub fn loss(&self, input: &[f64], target: &SoftLabel) -> f64 {
        soft_cross_entropy(&self.forward_input(input), target)
    }

    /// Loss plus d(loss)/d(param) for every parameter, flat-indexed like
    /// [`Self::param`].
    pub fn loss_and_gradients(&self, input: &[f64], target: &SoftLabel) -> (f64, Vec<f64>) {
        let trace = self.forward_trace(input);
        let loss = soft_cross_entropy(&trace.probs, target);
        let grads = self.backward(input, &trace, target);
        (loss, grads)
    }

    fn forward_trace(&self, input: &[f64]) -> Trace {
        let arch = &self.arch;
        assert_eq!(input.len(), CHANNELS * arch.input_h * arch.input_w);
        let offsets = arch.tensor_offsets();
        let mut stage_in: Vec<f64> = input.to_vec();
        let mut conv_out = Vec::with_capacity(3);
        let mut pool_out = Vec::with_capacity(3);
        let mut pool_argmax = Vec::with_capacity(3);

        for (stage, ((ci, co), (h, w))) in
            arch.conv_shapes().into_iter().zip(arch.stage_dims()).enumerate()
        {
            let weights = &self.params[offsets[stage * 2]..offsets[stage * 2] + co * ci * KERNEL * KERNEL];
            let bias = &self.params[offsets[stage * 2 + 1]..offsets[stage * 2 + 1] + co];
            let mut conv = vec![0.0; co * h * w];
            conv_forward(&stage_in, ci, h, w, weights, bias, co, &mut conv);
            let mut pooled = vec![0.0; co * (h / 2) * (w / 2)];
            let mut argmax = vec![0usize; pooled.len()];
            // ReLU fused into pooling: max(0, .) commutes with max-pool only
            // if applied first, so clamp during the pool scan.
            maxpool_relu_forward(&conv, co, h, w, &mut pooled, &mut argmax);
            conv_out.push(conv);
            pool_out.push(pooled.clone());
            pool_argmax.push(argmax);
            stage_in = pooled;
        }

        // global average pool over the last stage
        let c3 = arch.channels[2];
        let spatial = (arch.input_h / 8) * (arch.input_w / 8);
        let mut gap = vec![0.0; c3];
        for c in 0..c3 {
            let plane = &stage_in[c * spatial..(c + 1) * spatial];
            gap[c] = plane.iter().sum::<f64>() / spatial as f64;
        }

        let fc_w = &self.params[offsets[6]..offsets[6] + N_CLASSES * c3];
        let fc_b = &self.params[offsets[7]..offsets[7] + N_CLASSES];
        let mut logits = [0.0; N_CLASSES];
        for o in 0..N_CLASSES {
            logits[o] = fc_b[o] + fc_w[o * c3..(o + 1) * c3].iter().zip(&gap).map(|(w, g)| w * g).sum::<f64>();
        }
        let probs = softmax(logits);
        Trace { conv_out, pool_out, pool_argmax, gap, probs }
    }

    fn backward(&self, input: &[f64], trace: &Trace, target: &SoftLabel) -> Vec<f64> {
        let arch = &self.arch;
        let offsets = arch.tensor_offsets();
        let mut grads = vec![0.0; self.params.len()];
        let c3 = arch.channels[2];
        let spatial3 = (arch.input_h / 8) * (arch.input_w / 8);

        // softmax with cross-entropy: d(loss)/d(logit) = p - t
        let tw = target.weights();
        let mut dlogits = [0.0; N_CLASSES];
        for o in 0..N_CLASSES {
            dlogits[o] = trace.probs[o] - tw[o];
        }

        let fc_w = &self.params[offsets[6]..offsets[6] + N_CLASSES * c3];
        let mut dgap = vec![0.0; c3];
        {
            let (dw, db) = {
                let (head, tail) = grads.split_at_mut(offsets[7]);
                (&mut head[offsets[6]..], tail)
            };
            for o in 0..N_CLASSES {
                db[o] = dlogits[o];
                for i in 0..c3 {
                    dw[o * c3 + i] = dlogits[o] * trace.gap[i];
                    dgap[i] += fc_w[o * c3 + i] * dlogits[o];
                }
            }
        }

        // GAP spreads each channel gradient uniformly over the plane
        let mut dpool = vec![0.0; c3 * spatial3];
        for c in 0..c3 {
            let g = dgap[c] / spatial3 as f64;
            for s in 0..spatial3 {
                dpool[c * spatial3 + s] = g;
            }
        }

        // walk the stages backwards
        for stage in (0..3).rev() {
            let (ci, co) = arch.conv_shapes()[stage];
            let (h, w) = arch.stage_dims()[stage];
            let conv = &trace.conv_out[stage];
            let argmax = &trace.pool_argmax[stage];

            // pool + relu backward into the conv output
            let mut dconv = vec![0.0; co * h * w];
            for (cell, &src) in argmax.iter().enumerate() {
                if conv[src] > 0.0 {
                    dconv[src] += dpool[cell];
                }
            }

            let stage_input: &[f64] =
                if stage == 0 { input } else { &trace.pool_out[stage - 1] };
            let weights =
                &self.params[offsets[stage * 2]..offsets[stage * 2] + co * ci * KERNEL * KERNEL];
            let mut dinput = if stage > 0 { Some(vec![0.0; ci * h * w]) } else { None };
            {
                let (dw_region, db_region) = {
                    let (head, tail) = grads.split_at_mut(offsets[stage * 2 + 1]);
                    (&mut head[offsets[stage * 2]..], &mut tail[..co])
                };
                conv_backward(
                    stage_input,
                    ci,
                    h,
                    w,
                    weights,
                    co,
                    &dconv,
                    dw_region,
                    db_region,
                    dinput.as_deref_mut(),
                );
            }
            if let Some(d) = dinput {
                dpool = d;
            }
        }
        grads
    }

    /// Serialize: magic, version, shape table, then all parameters as
    /// little-endian f32 in flat order. Round-trips bit-exactly.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        out.write_all(MAGIC)?;
        write_u32(&mut out, FORMAT_VERSION)?;
        write_u32(&mut out, self.arch.input_h as u32)?;
        write_u32(&mut out, self.arch.input_w as u32)?;
        write_u32(&mut out, 3)?; // conv stages
        for (ci, co) in self.arch.conv_shapes() {
            write_u32(&mut out, ci as u32)?;
            write_u32(&mut out, co as u32)?;
            write_u32(&mut out, KERNEL as u32)?;
        }
        write_u32(&mut out, self.arch.channels[2] as u32)?;
        write_u32(&mut out, N_CLASSES as u32)?;
        write_u32(&mut out, self.params.len() as u32)?;
        for &p in &self.params {
            out.write_all(&(p as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut input = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::ModelFormat("bad magic bytes".into()));
        }
        let version = read_u32(&mut input)?;
        if version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!("unsupported version {version}")));
        }
        let input_h = read_u32(&mut input)? as usize;
        let input_w = read_u32(&mut input)? as usize;
        let n_conv = read_u32(&mut input)?;
        if n_conv != 3 {
            return Err(Error::ModelFormat(format!("expected 3 conv stages, got {n_conv}")));
        }
        let mut channels = [0usize; 3];
        let mut prev = CHANNELS;
        for (stage, ch) in channels.iter_mut().enumerate() {
            let ci = read_u32(&mut input)? as usize;
            let co = read_u32(&mut input)? as usize;
            let k = read_u32(&mut input)? as usize;
            if ci != prev || k != KERNEL || co == 0 {
                return Err(Error::ModelFormat(format!("inconsistent conv shape at stage {stage}")));
            }
            *ch = co;
            prev = co;
        }
        let fc_in = read_u32(&mut input)? as usize;
        let fc_out = read_u32(&mut input)? as usize;
        if fc_in != channels[2] || fc_out != N_CLASSES {
            return Err(Error::ModelFormat("inconsistent head shape".into()));
        }
        let arch = Arch::new(input_h, input_w, channels)
            .map_err(|e| Error::ModelFormat(e.to_string()))?;
        let count = read_u32(&mut input)? as usize;
        if count != arch.param_count() {
            return Err(Error::ModelFormat(format!(
                "shape table implies {} parameters, file declares {count}",
                arch.param_count()
            )));
        }
        let mut params = Vec::with_capacity(count);
        let mut buf = [0u8; 4];
        for _ in 0..count {
            input.read_exact(&mut buf)?;
            params.push(f32::from_le_bytes(buf) as f64);
        }
        Ok(Self { arch, params })
    }
}

impl Classifier for TinyConvNet {
    fn predict(&self, patch: &ImageBuffer) -> Result<ClassProbs> {
        let input = self.preprocess(patch)?;
        Ok(self.forward_input(&input))
    }

    fn input_dims(&self) -> (u32, u32) {
        (self.arch.input_h as u32, self.arch.input_w as u32)
    }
}

const MAGIC: &[u8; 4] = b"SCMN";
const FORMAT_VERSION: u32 = 1;

fn write_u32<W: Write>(out: &mut W, v: u32) -> Result<()> {
    out.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

struct Trace {
    conv_out: Vec<Vec<f64>>,
    pool_out: Vec<Vec<f64>>,
    pool_argmax: Vec<Vec<usize>>,
    gap: Vec<f64>,
    probs: ClassProbs,
}

/// 3x3 convolution, stride 1, zero padding 1. Plane size is preserved.
fn conv_forward(
    input: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    weights: &[f64],
    bias: &[f64],
    c_out: usize,
    out: &mut [f64],
) {
    for oc in 0..c_out {
        let out_plane = &mut out[oc * h * w..(oc + 1) * h * w];
        out_plane.fill(bias[oc]);
        for ic in 0..c_in {
            let in_plane = &input[ic * h * w..(ic + 1) * h * w];
            let k = &weights[(oc * c_in + ic) * 9..(oc * c_in + ic + 1) * 9];
            for y in 0..h {
                for ky in 0..KERNEL {
                    let iy = y + ky;
                    if iy < 1 || iy > h {
                        continue;
                    }
                    let in_row = &in_plane[(iy - 1) * w..iy * w];
                    let out_row = &mut out_plane[y * w..(y + 1) * w];
                    for kx in 0..KERNEL {
                        let wk = k[ky * KERNEL + kx];
                        if wk == 0.0 {
                            continue;
                        }
                        // x + kx - 1 must land in [0, w)
                        let x_lo = 1usize.saturating_sub(kx);
                        let x_hi = (w + 1 - kx).min(w);
                        for x in x_lo..x_hi {
                            out_row[x] += wk * in_row[x + kx - 1];
                        }
                    }
                }
            }
        }
    }
}

/// Gradients of [`conv_forward`] w.r.t. weights, bias and (optionally) input.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    weights: &[f64],
    c_out: usize,
    dout: &[f64],
    dweights: &mut [f64],
    dbias: &mut [f64],
    mut dinput: Option<&mut [f64]>,
) {
    for oc in 0..c_out {
        let dout_plane = &dout[oc * h * w..(oc + 1) * h * w];
        dbias[oc] += dout_plane.iter().sum::<f64>();
        for ic in 0..c_in {
            let in_plane = &input[ic * h * w..(ic + 1) * h * w];
            let k = &weights[(oc * c_in + ic) * 9..(oc * c_in + ic + 1) * 9];
            let dk = &mut dweights[(oc * c_in + ic) * 9..(oc * c_in + ic + 1) * 9];
            for y in 0..h {
                let dout_row = &dout_plane[y * w..(y + 1) * w];
                for ky in 0..KERNEL {
                    let iy = y + ky;
                    if iy < 1 || iy > h {
                        continue;
                    }
                    let in_row = &in_plane[(iy - 1) * w..iy * w];
                    for kx in 0..KERNEL {
                        let x_lo = 1usize.saturating_sub(kx);
                        let x_hi = (w + 1 - kx).min(w);
                        let mut acc = 0.0;
                        for x in x_lo..x_hi {
                            acc += dout_row[x] * in_row[x + kx - 1];
                        }
                        dk[ky * KERNEL + kx] += acc;
                    }
                }
            }
            if let Some(din) = dinput.as_deref_mut() {
                let din_plane = &mut din[ic * h * w..(ic + 1) * h * w];
                for y in 0..h {
                    let dout_row = &dout_plane[y * w..(y + 1) * w];
                    for ky in 0..KERNEL {
                        let iy = y + ky;
                        if iy < 1 || iy > h {
                            continue;
                        }
                        let din_row = &mut din_plane[(iy - 1) * w..iy * w];
                        for kx in 0..KERNEL {
                            let wk = k[ky * KERNEL + kx];
                            if wk == 0.0 {
                                continue;
                            }
                            let x_lo = 1usize.saturating_sub(kx);
                            let x_hi = (w + 1 - kx).min(w);
                            for x in x_lo..x_hi {
                                din_row[x + kx - 1] += wk * dout_row[x];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// 2x2 max-pool of `max(0, input)`, stride 2. Records the flat index of the
/// winning element; ties go to scan order (top-left first).
fn maxpool_relu_forward(
    input: &[f64],
    c: usize,
    h: usize,
    w: usize,
    out: &mut [f64],
    argmax: &mut [usize],
) {
    let (ph, pw) = (h / 2, w / 2);
    for ch in 0..c {
        for py in 0..ph {
            for px in 0..pw {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let idx = ch * h * w + (py * 2 + dy) * w + px * 2 + dx;
                        if input[idx] > best {
                            best = input[idx];
                            best_idx = idx;
                        }
                    }
                }
                let cell = ch * ph * pw + py * pw + px;
                out[cell] = best.max(0.0);
                argmax[cell] = best_idx;
            }
        }
    }
}

/// Numerically stable softmax over the three logits.
///
/// Invariant under adding a constant to every logit.
pub fn softmax(logits: [f64; N_CLASSES]) -> ClassProbs {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut exps = [0.0; N_CLASSES];
    let mut sum = 0.0;
    for (e, &z) in exps.iter_mut().zip(&logits) {
        *e = (z - m).exp();
        sum += *e;
    }
    for e in exps.iter_mut() {
        *e /= sum;
    }
    exps
}

/// Cross-entropy against a soft target: `-sum_k t_k ln(p_k)`, with
/// predictions floored at 1e-12 before the log.
pub fn soft_cross_entropy(pred: &ClassProbs, target: &SoftLabel) -> f64 {
    let tw = target.weights();
    let mut loss = 0.0;
    for k in 0..N_CLASSES {
        loss -= tw[k] * pred[k].max(1e-12).ln();
    }
    loss
}

/// Training hyperparameters. `augment_policy` picks which single mixture
/// operator is applied to every sample before the forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub augment_policy: AugmentPolicy,
    pub augment_params: AugmentParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 16,
            learning_rate: 0.5,
            seed: 42,
            augment_policy: AugmentPolicy::None,
            augment_params: AugmentParams::default(),
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParam("epochs and batch_size must be positive".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::InvalidParam(format!(
                "learning rate must be finite and nonnegative, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Mean training loss per epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epoch_loss: Vec<f64>,
}

/// Fit a fresh `TinyConvNet` on the dataset with plain minibatch SGD.
///
/// Deterministic given the generator state: initialization, epoch shuffles
/// and per-sample augmentation all draw from `rng` in a fixed order. Callers
/// conventionally pass `rng::seeded(cfg.seed)`.
pub fn train<R: Rng>(
    dataset: &[LabeledPatch],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<(TinyConvNet, TrainReport)> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::DegenerateDataset("dataset is empty".into()));
    }
    let (ph, pw) = (dataset[0].image.height(), dataset[0].image.width());
    for p in dataset {
        if p.image.height() != ph || p.image.width() != pw {
            return Err(Error::DimensionMismatch(
                "training patches must share dimensions".into(),
            ));
        }
    }
    for class in ScumClass::ALL {
        if !dataset.iter().any(|p| p.label.dominant() == class) {
            return Err(Error::DegenerateDataset(format!(
                "class {} is absent from the dataset",
                class.name()
            )));
        }
    }

    let mut net = TinyConvNet::for_patch_dims(ph, pw)?;
    net.init_weights(rng);

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut batch_grads = vec![0.0; net.param_count()];
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            batch_grads.fill(0.0);
            for &idx in batch {
                let sample =
                    augment_sample(dataset, idx, cfg.augment_policy, &cfg.augment_params, rng)?;
                let input = net.preprocess(&sample.image)?;
                let (loss, grads) = net.loss_and_gradients(&input, &sample.label);
                loss_sum += loss;
                for (acc, g) in batch_grads.iter_mut().zip(&grads) {
                    *acc += g;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for g in batch_grads.iter_mut() {
                *g *= scale;
            }
            net.apply_gradients(&batch_grads, cfg.learning_rate);
        }
        let mean = loss_sum / dataset.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        epoch_loss.push(mean);
    }
    Ok((net, TrainReport { epoch_loss }))
}
