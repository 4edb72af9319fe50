//! The mask-then-classify network.
//!
//! ```text
//! x ─► conv·bn·relu ×3 ─► conv·sigmoid ─► m          (mask subnet)
//! x ⊙ m ─► conv/2·bn·relu ─► time-major sequence ─► BiGRU ─► [h→ ; h←]
//!       ─► (linear·relu)* ─► linear ─► 4 logits
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    activate, activate_backward, Activation, Allocator, BatchNorm2d, BnCache, Conv2d, Dims, Gru,
    GruCache, Linear,
};
use super::scalar::Real;
use crate::error::{Error, Result};
use crate::features::{DEFAULT_F_BINS, DEFAULT_T_FRAMES};

/// Largest allowed trainable parameter count.
pub const PARAM_BUDGET: usize = 2_300_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    /// Square kernel side; padding is `kernel / 2`.
    pub kernel: usize,
    pub stride: usize,
}

impl ConvSpec {
    pub const fn new(in_ch: usize, out_ch: usize, kernel: usize, stride: usize) -> Self {
        Self {
            in_ch,
            out_ch,
            kernel,
            stride,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// `[channels, f_bins, t_frames]`.
    pub input: [usize; 3],
    /// Mask subnet; the last stage ends in a sigmoid and has no normalisation.
    pub mask_convs: Vec<ConvSpec>,
    pub classifier_conv: ConvSpec,
    pub gru_hidden: usize,
    /// Widths of hidden dense layers between the recurrent stage and the
    /// output layer.
    pub dense_hidden: Vec<usize>,
    pub classes: usize,
}

impl ModelSpec {
    /// Full-size network: about 0.9 M parameters.
    pub fn standard() -> Self {
        Self {
            input: [2, DEFAULT_F_BINS, DEFAULT_T_FRAMES],
            mask_convs: vec![
                ConvSpec::new(2, 8, 3, 1),
                ConvSpec::new(8, 16, 3, 1),
                ConvSpec::new(16, 16, 3, 1),
                ConvSpec::new(16, 2, 3, 1),
            ],
            classifier_conv: ConvSpec::new(2, 32, 3, 2),
            gru_hidden: 128,
            dense_hidden: vec![],
            classes: 4,
        }
    }

    /// Same topology with narrower layers, roughly a tenth of the compute of
    /// [`ModelSpec::standard`]. Used where training has to finish in minutes
    /// on one core.
    pub fn compact() -> Self {
        Self {
            input: [2, DEFAULT_F_BINS, DEFAULT_T_FRAMES],
            mask_convs: vec![
                ConvSpec::new(2, 4, 3, 1),
                ConvSpec::new(4, 4, 3, 1),
                ConvSpec::new(4, 4, 3, 1),
                ConvSpec::new(4, 2, 3, 1),
            ],
            classifier_conv: ConvSpec::new(2, 8, 3, 2),
            gru_hidden: 48,
            dense_hidden: vec![32],
            classes: 4,
        }
    }

    /// A few thousand parameters over a small input, for gradient checks.
    pub fn tiny() -> Self {
        Self {
            input: [2, 8, 9],
            mask_convs: vec![
                ConvSpec::new(2, 3, 3, 1),
                ConvSpec::new(3, 3, 3, 1),
                ConvSpec::new(3, 3, 3, 1),
                ConvSpec::new(3, 2, 3, 1),
            ],
            classifier_conv: ConvSpec::new(2, 4, 3, 2),
            gru_hidden: 6,
            dense_hidden: vec![5],
            classes: 4,
        }
    }

    pub fn input_len(&self) -> usize {
        self.input.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.input.contains(&0) {
            return bad(format!("input shape {:?} has a zero dimension", self.input));
        }
        if self.mask_convs.is_empty() {
            return bad("mask subnet needs at least one convolution".into());
        }
        let mut ch = self.input[0];
        for c in &self.mask_convs {
            if c.in_ch != ch || c.kernel == 0 || c.kernel % 2 == 0 || c.stride != 1 {
                return bad(format!("mask convolution {c:?} does not fit"));
            }
            ch = c.out_ch;
        }
        if ch != self.input[0] {
            return bad(format!("mask has {ch} channels, input has {}", self.input[0]));
        }
        let c = self.classifier_conv;
        if c.in_ch != ch || c.kernel == 0 || c.kernel.is_multiple_of(2) || c.stride == 0 {
            return bad(format!("classifier convolution {c:?} does not fit"));
        }
        if self.gru_hidden == 0 || self.dense_hidden.contains(&0) {
            return bad("zero-width recurrent or dense layer".into());
        }
        if self.classes != 4 {
            return bad(format!("decoder emits 4 classes, not {}", self.classes));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct MaskStage {
    conv: Conv2d,
    bn: Option<BatchNorm2d>,
    act: Activation,
}

#[derive(Debug, Clone)]
struct Arch {
    mask: Vec<MaskStage>,
    conv: Conv2d,
    bn: BatchNorm2d,
    gru_fwd: Gru,
    gru_bwd: Gru,
    dense: Vec<Linear>,
    n_params: usize,
    n_buffers: usize,
}

impl Arch {
    fn build(spec: &ModelSpec) -> Self {
        let mut p = Allocator::default();
        let mut b = Allocator::default();
        let mut dims = Dims {
            c: spec.input[0],
            h: spec.input[1],
            w: spec.input[2],
        };
        let last = spec.mask_convs.len() - 1;
        let mask = spec
            .mask_convs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let pad = c.kernel / 2;
                let conv = Conv2d::new(dims, c.out_ch, [c.kernel; 2], [1; 2], [pad; 2], &mut p);
                dims = conv.output;
                let (bn, act) = if i == last {
                    (None, Activation::Sigmoid)
                } else {
                    (Some(BatchNorm2d::new(dims, &mut p, &mut b)), Activation::Relu)
                };
                MaskStage { conv, bn, act }
            })
            .collect();
        let c = spec.classifier_conv;
        let conv = Conv2d::new(dims, c.out_ch, [c.kernel; 2], [c.stride; 2], [c.kernel / 2; 2], &mut p);
        let bn = BatchNorm2d::new(conv.output, &mut p, &mut b);
        let feat = conv.output.c * conv.output.h;
        let gru_fwd = Gru::new(feat, spec.gru_hidden, &mut p);
        let gru_bwd = Gru::new(feat, spec.gru_hidden, &mut p);
        let mut width = 2 * spec.gru_hidden;
        let mut dense = Vec::new();
        for &h in spec.dense_hidden.iter().chain(std::iter::once(&spec.classes)) {
            dense.push(Linear::new(width, h, &mut p));
            width = h;
        }
        Self {
            mask,
            conv,
            bn,
            gru_fwd,
            gru_bwd,
            dense,
            n_params: p.total(),
            n_buffers: b.total(),
        }
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug)]
pub struct Trace<T> {
    batch: usize,
    input: Vec<T>,
    /// Input to each mask convolution.
    mask_in: Vec<Vec<T>>,
    mask_bn: Vec<Option<BnCache<T>>>,
    /// Output of the mask subnet, shaped like the input.
    pub mask: Vec<T>,
    masked: Vec<T>,
    bn: Option<BnCache<T>>,
    conv_out: Vec<T>,
    seq: Vec<T>,
    seq_rev: Vec<T>,
    gru_fwd: GruCache<T>,
    gru_bwd: GruCache<T>,
    dense_in: Vec<Vec<T>>,
    pub logits: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in normalisation layers.
    Train,
    /// Running statistics.
    Eval,
}

/// Network weights in one flat vector plus normalisation running statistics.
#[derive(Debug, Clone)]
pub struct Network<T: Real> {
    spec: ModelSpec,
    arch: Arch,
    pub params: Vec<T>,
    pub buffers: Vec<T>,
}

impl<T: Real> Network<T> {
    /// Fresh network with uniform `±1/√fan_in` weights.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let arch = Arch::build(&spec);
        if arch.n_params > PARAM_BUDGET {
            return Err(Error::Config(format!(
                "{} parameters exceed the budget of {PARAM_BUDGET}",
                arch.n_params
            )));
        }
        let mut net = Self {
            params: vec![T::zero(); arch.n_params],
            buffers: vec![T::zero(); arch.n_buffers],
            spec,
            arch,
        };
        net.init(seed);
        Ok(net)
    }

    /// Rebuilds a network from stored weights.
    pub fn from_parts(spec: ModelSpec, params: Vec<T>, buffers: Vec<T>) -> Result<Self> {
        spec.validate()?;
        let arch = Arch::build(&spec);
        if params.len() != arch.n_params {
            return Err(Error::shape(format!("{} parameters", arch.n_params), params.len()));
        }
        if buffers.len() != arch.n_buffers {
            return Err(Error::shape(format!("{} buffer values", arch.n_buffers), buffers.len()));
        }
        Ok(Self {
            spec,
            arch,
            params,
            buffers,
        })
    }

    fn init(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |params: &mut [T], bound: f64| {
            for p in params {
                *p = T::of(rng.random_range(-bound..bound));
            }
        };
        let a = &self.arch;
        let convs = a.mask.iter().map(|s| &s.conv).chain(std::iter::once(&a.conv));
        for c in convs {
            let bound = 1.0 / (c.fan_in() as f64).sqrt();
            fill(&mut self.params[c.weight.range()], bound);
            fill(&mut self.params[c.bias.range()], bound);
        }
        for g in [&a.gru_fwd, &a.gru_bwd] {
            let bound = 1.0 / (g.hidden as f64).sqrt();
            for s in [g.w_ih, g.w_hh, g.b_ih, g.b_hh] {
                fill(&mut self.params[s.range()], bound);
            }
        }
        for d in &a.dense {
            let bound = 1.0 / (d.input as f64).sqrt();
            fill(&mut self.params[d.weight.range()], bound);
            fill(&mut self.params[d.bias.range()], bound);
        }
        for bn in a.mask.iter().filter_map(|s| s.bn.as_ref()).chain(std::iter::once(&a.bn)) {
            self.params[bn.gamma.range()].fill(T::one());
            self.params[bn.beta.range()].fill(T::zero());
            self.buffers[bn.running_mean.range()].fill(T::zero());
            self.buffers[bn.running_var.range()].fill(T::one());
        }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Parameter ranges of the dense layers' weight matrices.
    pub fn dense_weight_ranges(&self) -> Vec<std::ops::Range<usize>> {
        self.arch.dense.iter().map(|d| d.weight.range()).collect()
    }

    /// Converts to another element type.
    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            spec: self.spec.clone(),
            arch: self.arch.clone(),
            params: self.params.iter().map(|v| U::of(Real::to_f64(*v))).collect(),
            buffers: self.buffers.iter().map(|v| U::of(Real::to_f64(*v))).collect(),
        }
    }

    fn check_input(&self, input: &[T], batch: usize) -> Result<()> {
        let per = self.spec.input_len();
        if batch == 0 || input.len() != batch * per {
            return Err(Error::shape(
                format!("{batch} × {:?} input values", self.spec.input),
                input.len(),
            ));
        }
        Ok(())
    }

    /// Logits, `batch × 4`, with running normalisation statistics.
    pub fn forward(&self, input: &[T], batch: usize) -> Result<Vec<T>> {
        Ok(self.run(input, batch, Mode::Eval)?.logits)
    }

    /// Mask subnet output for each sample, shaped like the input.
    pub fn mask(&self, input: &[T], batch: usize) -> Result<Vec<T>> {
        Ok(self.run(input, batch, Mode::Eval)?.mask)
    }

    pub fn run(&self, input: &[T], batch: usize, mode: Mode) -> Result<Trace<T>> {
        self.check_input(input, batch)?;
        let a = &self.arch;
        let p = &self.params[..];
        let mut x = input.to_vec();
        let mut mask_in = Vec::with_capacity(a.mask.len());
        let mut mask_bn = Vec::with_capacity(a.mask.len());
        for stage in &a.mask {
            let mut y = stage.conv.forward(p, &x, batch);
            let cache = match (&stage.bn, mode) {
                (Some(bn), Mode::Train) => {
                    let (out, c) = bn.forward_train(p, &y, batch);
                    y = out;
                    Some(c)
                }
                (Some(bn), Mode::Eval) => {
                    y = bn.forward_eval(p, &self.buffers, &y, batch);
                    None
                }
                (None, _) => None,
            };
            activate(stage.act, &mut y);
            mask_in.push(std::mem::replace(&mut x, y));
            mask_bn.push(cache);
        }
        let mask = x;
        let masked: Vec<T> = input.iter().zip(&mask).map(|(&v, &m)| v * m).collect();

        let y = a.conv.forward(p, &masked, batch);
        let (mut conv_out, bn) = match mode {
            Mode::Train => {
                let (out, c) = a.bn.forward_train(p, &y, batch);
                (out, Some(c))
            }
            Mode::Eval => (a.bn.forward_eval(p, &self.buffers, &y, batch), None),
        };
        activate(Activation::Relu, &mut conv_out);

        let (seq, steps, feat) = self.to_sequence(&conv_out, batch);
        let seq_rev = reverse_time(&seq, steps, batch * feat);
        let (h_fwd, gru_fwd) = a.gru_fwd.forward(p, &seq, steps, batch);
        let (h_bwd, gru_bwd) = a.gru_bwd.forward(p, &seq_rev, steps, batch);
        let hd = self.spec.gru_hidden;
        let mut z = Vec::with_capacity(batch * 2 * hd);
        for b in 0..batch {
            z.extend_from_slice(&h_fwd[b * hd..(b + 1) * hd]);
            z.extend_from_slice(&h_bwd[b * hd..(b + 1) * hd]);
        }
        let mut dense_in = Vec::with_capacity(a.dense.len());
        let last = a.dense.len() - 1;
        for (i, d) in a.dense.iter().enumerate() {
            let mut y = d.forward(p, &z, batch);
            if i != last {
                activate(Activation::Relu, &mut y);
            }
            dense_in.push(std::mem::replace(&mut z, y));
        }
        Ok(Trace {
            batch,
            input: input.to_vec(),
            mask_in,
            mask_bn,
            mask,
            masked,
            bn,
            conv_out,
            seq,
            seq_rev,
            gru_fwd,
            gru_bwd,
            dense_in,
            logits: z,
        })
    }

    /// `[B, C, F, T]` → time-major `[T, B, C·F]`.
    fn to_sequence(&self, y: &[T], batch: usize) -> (Vec<T>, usize, usize) {
        let d = self.arch.conv.output;
        let feat = d.c * d.h;
        let mut seq = vec![T::zero(); d.w * batch * feat];
        for b in 0..batch {
            for c in 0..d.c {
                for f in 0..d.h {
                    let src = &y[((b * d.c + c) * d.h + f) * d.w..][..d.w];
                    for (t, &v) in src.iter().enumerate() {
                        seq[(t * batch + b) * feat + c * d.h + f] = v;
                    }
                }
            }
        }
        (seq, d.w, feat)
    }

    fn from_sequence(&self, seq: &[T], batch: usize) -> Vec<T> {
        let d = self.arch.conv.output;
        let feat = d.c * d.h;
        let mut y = vec![T::zero(); batch * d.size()];
        for b in 0..batch {
            for c in 0..d.c {
                for f in 0..d.h {
                    let dst = &mut y[((b * d.c + c) * d.h + f) * d.w..][..d.w];
                    for (t, v) in dst.iter_mut().enumerate() {
                        *v = seq[(t * batch + b) * feat + c * d.h + f];
                    }
                }
            }
        }
        y
    }

    /// Folds the batch statistics of a training pass into the running
    /// estimates.
    pub fn update_running_stats(&mut self, trace: &Trace<T>) {
        let a = &self.arch;
        for (stage, cache) in a.mask.iter().zip(&trace.mask_bn) {
            if let (Some(bn), Some(c)) = (&stage.bn, cache) {
                bn.update_running(&mut self.buffers, c, trace.batch * bn.dims.plane());
            }
        }
        if let Some(c) = &trace.bn {
            a.bn.update_running(&mut self.buffers, c, trace.batch * a.bn.dims.plane());
        }
    }

    /// Parameter gradient given the gradient on the logits. The trace must
    /// come from a [`Mode::Train`] pass.
    pub fn backward(&self, trace: &Trace<T>, dlogits: &[T]) -> Vec<T> {
        let a = &self.arch;
        let p = &self.params[..];
        let batch = trace.batch;
        let mut g = vec![T::zero(); p.len()];

        let mut dz = dlogits.to_vec();
        let last = a.dense.len() - 1;
        for (i, d) in a.dense.iter().enumerate().rev() {
            if i != last {
                // dense_in[i + 1] is this layer's rectified output
                activate_backward(Activation::Relu, &trace.dense_in[i + 1], &mut dz);
            }
            dz = d.backward(p, &mut g, &trace.dense_in[i], &dz, batch);
        }

        let hd = self.spec.gru_hidden;
        let mut dh_fwd = Vec::with_capacity(batch * hd);
        let mut dh_bwd = Vec::with_capacity(batch * hd);
        for row in dz.chunks_exact(2 * hd) {
            dh_fwd.extend_from_slice(&row[..hd]);
            dh_bwd.extend_from_slice(&row[hd..]);
        }
        let d = a.conv.output;
        let steps = d.w;
        let feat = d.c * d.h;
        let mut dseq = a.gru_fwd.backward(p, &mut g, &trace.seq, &trace.gru_fwd, &dh_fwd, steps, batch);
        let dseq_rev = a.gru_bwd.backward(p, &mut g, &trace.seq_rev, &trace.gru_bwd, &dh_bwd, steps, batch);
        for (v, r) in dseq.iter_mut().zip(reverse_time(&dseq_rev, steps, batch * feat)) {
            *v = *v + r;
        }
        let mut dy = self.from_sequence(&dseq, batch);
        activate_backward(Activation::Relu, &trace.conv_out, &mut dy);
        let bn_cache = trace.bn.as_ref().expect("backward needs a training-mode trace");
        let dy = a.bn.backward(p, &mut g, bn_cache, &dy, batch);
        let dmasked = a
            .conv
            .backward(p, &mut g, &trace.masked, &dy, batch, true)
            .expect("input gradient requested");

        let mut dx: Vec<T> = dmasked.iter().zip(&trace.input).map(|(&d, &x)| d * x).collect();
        let mut out = &trace.mask;
        for (i, stage) in a.mask.iter().enumerate().rev() {
            activate_backward(stage.act, out, &mut dx);
            if let (Some(bn), Some(c)) = (&stage.bn, &trace.mask_bn[i]) {
                dx = bn.backward(p, &mut g, c, &dx, batch);
            }
            let want = i > 0;
            if let Some(next) = stage.conv.backward(p, &mut g, &trace.mask_in[i], &dx, batch, want) {
                dx = next;
            }
            out = &trace.mask_in[i];
        }
        g
    }
}

fn reverse_time<T: Copy>(seq: &[T], steps: usize, row: usize) -> Vec<T> {
    (0..steps)
        .rev()
        .flat_map(|t| seq[t * row..(t + 1) * row].iter().copied())
        .collect()
}

/// Summed softmax cross-entropy over the batch and its gradient on the
/// logits.
pub fn cross_entropy<T: Real>(logits: &[T], labels: &[u8], classes: usize) -> (T, Vec<T>) {
    let mut loss = T::zero();
    let mut grad = vec![T::zero(); logits.len()];
    for (b, (row, &y)) in logits.chunks_exact(classes).zip(labels).enumerate() {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let sum: T = row.iter().map(|&v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss = loss + log_z - row[y as usize];
        for (k, &v) in row.iter().enumerate() {
            let p = (v - log_z).exp();
            grad[b * classes + k] = if k == y as usize { p - T::one() } else { p };
        }
    }
    (loss, grad)
}

pub fn argmax<T: Real>(row: &[T]) -> u8 {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_spec_is_within_budget() {
        let net = Network::<f32>::new(ModelSpec::standard(), 0).unwrap();
        assert!(net.param_count() <= PARAM_BUDGET);
        assert!(net.param_count() > 800_000);
    }

    #[test]
    fn oversized_spec_rejected() {
        let mut spec = ModelSpec::standard();
        spec.gru_hidden = 1024;
        assert!(matches!(Network::<f32>::new(spec, 0), Err(Error::Config(_))));
    }

    #[test]
    fn zero_input_gives_finite_logits_and_bounded_mask() {
        let net = Network::<f32>::new(ModelSpec::compact(), 1).unwrap();
        let n = net.spec().input_len();
        let logits = net.forward(&vec![0.0; n], 1).unwrap();
        assert_eq!(logits.len(), 4);
        assert!(logits.iter().all(|v| v.is_finite()));
        let x: Vec<f32> = (0..n).map(|i| ((i * 37 % 101) as f32 - 50.0) / 10.0).collect();
        let m = net.mask(&x, 1).unwrap();
        assert!(m.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn wrong_input_shape_is_error() {
        let net = Network::<f32>::new(ModelSpec::tiny(), 1).unwrap();
        assert!(matches!(net.forward(&[0.0; 10], 1), Err(Error::Shape { .. })));
    }

    #[test]
    fn batch_rows_are_independent_in_eval_mode() {
        let net = Network::<f64>::new(ModelSpec::tiny(), 2).unwrap();
        let n = net.spec().input_len();
        let x: Vec<f64> = (0..3 * n).map(|i| ((i * 13 % 17) as f64 - 8.0) / 4.0).collect();
        let all = net.forward(&x, 3).unwrap();
        for b in 0..3 {
            let one = net.forward(&x[b * n..(b + 1) * n], 1).unwrap();
            for k in 0..4 {
                assert!((one[k] - all[b * 4 + k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cross_entropy_matches_direct_formula() {
        let logits = [1.0f64, 2.0, 0.5, -1.0];
        let (loss, grad) = cross_entropy(&logits, &[1], 4);
        let z: f64 = logits.iter().map(|v| v.exp()).sum();
        assert!((loss - (z.ln() - 2.0)).abs() < 1e-12);
        assert!((grad.iter().sum::<f64>()).abs() < 1e-12);
        assert!((grad[1] - (2f64.exp() / z - 1.0)).abs() < 1e-12);
    }
}
