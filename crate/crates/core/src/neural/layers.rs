//! Layer kernels over flat, row-major buffers.
//!
//! Layers own no storage: weights live in the network's flat parameter
//! vector and each layer records where its slices start. Forward passes
//! return what the backward pass needs; backward passes accumulate into a
//! gradient vector with the same layout as the parameters.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::scalar::{matmul, matmul_at, matmul_bt, sigmoid, Real};

/// A contiguous slice of the flat parameter (or buffer) vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub offset: usize,
    pub len: usize,
}

impl Slot {
    pub fn range(self) -> Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Hands out consecutive slots.
#[derive(Debug, Default)]
pub struct Allocator {
    next: usize,
}

impl Allocator {
    pub fn take(&mut self, len: usize) -> Slot {
        let s = Slot {
            offset: self.next,
            len,
        };
        self.next += len;
        s
    }

    pub fn total(&self) -> usize {
        self.next
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    None,
    Relu,
    Sigmoid,
}

/// Spatial dimensions of one feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub fn size(self) -> usize {
        self.c * self.h * self.w
    }

    pub fn plane(self) -> usize {
        self.h * self.w
    }
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub input: Dims,
    pub output: Dims,
    pub kernel: [usize; 2],
    pub stride: [usize; 2],
    pub pad: [usize; 2],
    pub weight: Slot,
    pub bias: Slot,
}

impl Conv2d {
    pub fn new(
        input: Dims,
        out_c: usize,
        kernel: [usize; 2],
        stride: [usize; 2],
        pad: [usize; 2],
        alloc: &mut Allocator,
    ) -> Self {
        let h = (input.h + 2 * pad[0] - kernel[0]) / stride[0] + 1;
        let w = (input.w + 2 * pad[1] - kernel[1]) / stride[1] + 1;
        let k = input.c * kernel[0] * kernel[1];
        Self {
            input,
            output: Dims { c: out_c, h, w },
            kernel,
            stride,
            pad,
            weight: alloc.take(out_c * k),
            bias: alloc.take(out_c),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.input.c * self.kernel[0] * self.kernel[1]
    }

    fn im2col<T: Real>(&self, x: &[T], cols: &mut [T]) {
        let (ho, wo) = (self.output.h, self.output.w);
        let [kh, kw] = self.kernel;
        let mut row = 0;
        for c in 0..self.input.c {
            let plane = &x[c * self.input.plane()..(c + 1) * self.input.plane()];
            for ki in 0..kh {
                for kj in 0..kw {
                    let dst = &mut cols[row * ho * wo..(row + 1) * ho * wo];
                    for oi in 0..ho {
                        let ii = (oi * self.stride[0] + ki) as isize - self.pad[0] as isize;
                        let out_row = &mut dst[oi * wo..(oi + 1) * wo];
                        if ii < 0 || ii >= self.input.h as isize {
                            out_row.fill(T::zero());
                            continue;
                        }
                        let src = &plane[ii as usize * self.input.w..(ii as usize + 1) * self.input.w];
                        for (oj, o) in out_row.iter_mut().enumerate() {
                            let jj = (oj * self.stride[1] + kj) as isize - self.pad[1] as isize;
                            *o = if jj < 0 || jj >= self.input.w as isize {
                                T::zero()
                            } else {
                                src[jj as usize]
                            };
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    fn col2im<T: Real>(&self, cols: &[T], dx: &mut [T]) {
        let (ho, wo) = (self.output.h, self.output.w);
        let [kh, kw] = self.kernel;
        let mut row = 0;
        for c in 0..self.input.c {
            let plane = &mut dx[c * self.input.plane()..(c + 1) * self.input.plane()];
            for ki in 0..kh {
                for kj in 0..kw {
                    let src = &cols[row * ho * wo..(row + 1) * ho * wo];
                    for oi in 0..ho {
                        let ii = (oi * self.stride[0] + ki) as isize - self.pad[0] as isize;
                        if ii < 0 || ii >= self.input.h as isize {
                            continue;
                        }
                        let dst = &mut plane[ii as usize * self.input.w..(ii as usize + 1) * self.input.w];
                        for (oj, &g) in src[oi * wo..(oi + 1) * wo].iter().enumerate() {
                            let jj = (oj * self.stride[1] + kj) as isize - self.pad[1] as isize;
                            if jj >= 0 && jj < self.input.w as isize {
                                dst[jj as usize] = dst[jj as usize] + g;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    pub fn forward<T: Real>(&self, params: &[T], x: &[T], batch: usize) -> Vec<T> {
        let k = self.fan_in();
        let hw = self.output.plane();
        let w = &params[self.weight.range()];
        let b = &params[self.bias.range()];
        let mut out = vec![T::zero(); batch * self.output.size()];
        let mut cols = vec![T::zero(); k * hw];
        for n in 0..batch {
            self.im2col(&x[n * self.input.size()..(n + 1) * self.input.size()], &mut cols);
            let y = &mut out[n * self.output.size()..(n + 1) * self.output.size()];
            for (oc, plane) in y.chunks_exact_mut(hw).enumerate() {
                plane.fill(b[oc]);
            }
            matmul(self.output.c, k, hw, w, &cols, T::one(), y);
        }
        out
    }

    /// Accumulates weight/bias gradients; returns the input gradient when
    /// `want_dx`.
    pub fn backward<T: Real>(
        &self,
        params: &[T],
        grads: &mut [T],
        x: &[T],
        dy: &[T],
        batch: usize,
        want_dx: bool,
    ) -> Option<Vec<T>> {
        let k = self.fan_in();
        let hw = self.output.plane();
        let oc = self.output.c;
        let w = &params[self.weight.range()];
        let mut cols = vec![T::zero(); k * hw];
        let mut dcols = vec![T::zero(); k * hw];
        let mut dx = want_dx.then(|| vec![T::zero(); batch * self.input.size()]);
        for n in 0..batch {
            let dy_n = &dy[n * self.output.size()..(n + 1) * self.output.size()];
            {
                let gb = &mut grads[self.bias.range()];
                for (c, plane) in dy_n.chunks_exact(hw).enumerate() {
                    gb[c] = gb[c] + plane.iter().copied().sum::<T>();
                }
            }
            self.im2col(&x[n * self.input.size()..(n + 1) * self.input.size()], &mut cols);
            // dW (oc×k) += dY (oc×hw) · colsᵀ
            matmul_bt(oc, hw, k, dy_n, &cols, T::one(), &mut grads[self.weight.range()]);
            if let Some(dx) = dx.as_mut() {
                // dcols (k×hw) = Wᵀ · dY
                matmul_at(k, oc, hw, w, dy_n, T::zero(), &mut dcols);
                self.col2im(&dcols, &mut dx[n * self.input.size()..(n + 1) * self.input.size()]);
            }
        }
        dx
    }
}

/// Per-channel normalisation with batch statistics in training and running
/// statistics at inference.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub dims: Dims,
    pub gamma: Slot,
    pub beta: Slot,
    pub running_mean: Slot,
    pub running_var: Slot,
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Saved by the training-mode forward pass.
#[derive(Debug, Clone)]
pub struct BnCache<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl BatchNorm2d {
    pub fn new(dims: Dims, params: &mut Allocator, buffers: &mut Allocator) -> Self {
        Self {
            dims,
            gamma: params.take(dims.c),
            beta: params.take(dims.c),
            running_mean: buffers.take(dims.c),
            running_var: buffers.take(dims.c),
        }
    }

    pub fn forward_train<T: Real>(&self, params: &[T], x: &[T], batch: usize) -> (Vec<T>, BnCache<T>) {
        let c_n = self.dims.c;
        let hw = self.dims.plane();
        let m = T::of((batch * hw) as f64);
        let mut mean = vec![T::zero(); c_n];
        let mut var = vec![T::zero(); c_n];
        for n in 0..batch {
            for c in 0..c_n {
                let plane = &x[(n * c_n + c) * hw..(n * c_n + c + 1) * hw];
                mean[c] = mean[c] + plane.iter().copied().sum::<T>();
            }
        }
        for v in &mut mean {
            *v = *v / m;
        }
        for n in 0..batch {
            for c in 0..c_n {
                let plane = &x[(n * c_n + c) * hw..(n * c_n + c + 1) * hw];
                var[c] = var[c] + plane.iter().map(|&v| (v - mean[c]) * (v - mean[c])).sum::<T>();
            }
        }
        for v in &mut var {
            *v = *v / m;
        }
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + T::of(BN_EPS)).sqrt()).collect();
        let gamma = &params[self.gamma.range()];
        let beta = &params[self.beta.range()];
        let mut xhat = vec![T::zero(); x.len()];
        let mut y = vec![T::zero(); x.len()];
        for n in 0..batch {
            for c in 0..c_n {
                let r = (n * c_n + c) * hw..(n * c_n + c + 1) * hw;
                for i in r {
                    let h = (x[i] - mean[c]) * inv_std[c];
                    xhat[i] = h;
                    y[i] = gamma[c] * h + beta[c];
                }
            }
        }
        (
            y,
            BnCache {
                xhat,
                inv_std,
                mean,
                var,
            },
        )
    }

    /// Folds batch statistics into the running estimates (unbiased variance).
    pub fn update_running<T: Real>(&self, buffers: &mut [T], cache: &BnCache<T>, count: usize) {
        let mom = T::of(BN_MOMENTUM);
        let unbias = if count > 1 {
            T::of(count as f64 / (count as f64 - 1.0))
        } else {
            T::one()
        };
        for c in 0..self.dims.c {
            let rm = self.running_mean.offset + c;
            let rv = self.running_var.offset + c;
            buffers[rm] = (T::one() - mom) * buffers[rm] + mom * cache.mean[c];
            buffers[rv] = (T::one() - mom) * buffers[rv] + mom * cache.var[c] * unbias;
        }
    }

    pub fn forward_eval<T: Real>(&self, params: &[T], buffers: &[T], x: &[T], batch: usize) -> Vec<T> {
        let c_n = self.dims.c;
        let hw = self.dims.plane();
        let gamma = &params[self.gamma.range()];
        let beta = &params[self.beta.range()];
        let rm = &buffers[self.running_mean.range()];
        let rv = &buffers[self.running_var.range()];
        let mut y = vec![T::zero(); x.len()];
        for n in 0..batch {
            for c in 0..c_n {
                let scale = gamma[c] / (rv[c] + T::of(BN_EPS)).sqrt();
                let shift = beta[c] - rm[c] * scale;
                let r = (n * c_n + c) * hw..(n * c_n + c + 1) * hw;
                for i in r {
                    y[i] = x[i] * scale + shift;
                }
            }
        }
        y
    }

    pub fn backward<T: Real>(
        &self,
        params: &[T],
        grads: &mut [T],
        cache: &BnCache<T>,
        dy: &[T],
        batch: usize,
    ) -> Vec<T> {
        let c_n = self.dims.c;
        let hw = self.dims.plane();
        let m = T::of((batch * hw) as f64);
        let mut sum_dy = vec![T::zero(); c_n];
        let mut sum_dy_xhat = vec![T::zero(); c_n];
        for n in 0..batch {
            for c in 0..c_n {
                let r = (n * c_n + c) * hw..(n * c_n + c + 1) * hw;
                for i in r {
                    sum_dy[c] = sum_dy[c] + dy[i];
                    sum_dy_xhat[c] = sum_dy_xhat[c] + dy[i] * cache.xhat[i];
                }
            }
        }
        for c in 0..c_n {
            let g = self.gamma.offset + c;
            let b = self.beta.offset + c;
            grads[g] = grads[g] + sum_dy_xhat[c];
            grads[b] = grads[b] + sum_dy[c];
        }
        let gamma = &params[self.gamma.range()];
        let mut dx = vec![T::zero(); dy.len()];
        for n in 0..batch {
            for c in 0..c_n {
                let k = gamma[c] * cache.inv_std[c] / m;
                let r = (n * c_n + c) * hw..(n * c_n + c + 1) * hw;
                for i in r {
                    dx[i] = k * (m * dy[i] - sum_dy[c] - cache.xhat[i] * sum_dy_xhat[c]);
                }
            }
        }
        dx
    }
}

pub fn activate<T: Real>(act: Activation, x: &mut [T]) {
    match act {
        Activation::None => {}
        Activation::Relu => x.iter_mut().for_each(|v| *v = v.max(T::zero())),
        Activation::Sigmoid => x.iter_mut().for_each(|v| *v = sigmoid(*v)),
    }
}

/// Gradient through an activation, given its output `y`.
pub fn activate_backward<T: Real>(act: Activation, y: &[T], dy: &mut [T]) {
    match act {
        Activation::None => {}
        Activation::Relu => {
            for (d, &v) in dy.iter_mut().zip(y) {
                if v <= T::zero() {
                    *d = T::zero();
                }
            }
        }
        Activation::Sigmoid => {
            for (d, &v) in dy.iter_mut().zip(y) {
                *d = *d * v * (T::one() - v);
            }
        }
    }
}

/// Fully connected layer, `y = x·Wᵀ + b` with `W` stored `out × in`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub input: usize,
    pub output: usize,
    pub weight: Slot,
    pub bias: Slot,
}

impl Linear {
    pub fn new(input: usize, output: usize, alloc: &mut Allocator) -> Self {
        Self {
            input,
            output,
            weight: alloc.take(input * output),
            bias: alloc.take(output),
        }
    }

    pub fn forward<T: Real>(&self, params: &[T], x: &[T], batch: usize) -> Vec<T> {
        let b = &params[self.bias.range()];
        let mut y: Vec<T> = (0..batch).flat_map(|_| b.iter().copied()).collect();
        matmul_bt(batch, self.input, self.output, x, &params[self.weight.range()], T::one(), &mut y);
        y
    }

    pub fn backward<T: Real>(&self, params: &[T], grads: &mut [T], x: &[T], dy: &[T], batch: usize) -> Vec<T> {
        {
            let gb = &mut grads[self.bias.range()];
            for row in dy.chunks_exact(self.output) {
                for (g, &d) in gb.iter_mut().zip(row) {
                    *g = *g + d;
                }
            }
        }
        // dW (out×in) += dYᵀ · X
        matmul_at(self.output, batch, self.input, dy, x, T::one(), &mut grads[self.weight.range()]);
        let mut dx = vec![T::zero(); batch * self.input];
        matmul(batch, self.output, self.input, dy, &params[self.weight.range()], T::zero(), &mut dx);
        dx
    }
}

/// Single-direction gated recurrent unit with gates ordered reset, update,
/// candidate:
///
/// ```text
/// r = σ(Wir·x + bir + Whr·h + bhr)
/// z = σ(Wiz·x + biz + Whz·h + bhz)
/// n = tanh(Win·x + bin + r ⊙ (Whn·h + bhn))
/// h' = (1 − z) ⊙ n + z ⊙ h
/// ```
#[derive(Debug, Clone)]
pub struct Gru {
    pub input: usize,
    pub hidden: usize,
    pub w_ih: Slot,
    pub w_hh: Slot,
    pub b_ih: Slot,
    pub b_hh: Slot,
}

/// Per-step state kept for backpropagation through time.
#[derive(Debug, Clone)]
pub struct GruCache<T> {
    /// Hidden states `h_0 … h_T`, each `batch × hidden`.
    pub h: Vec<Vec<T>>,
    pub r: Vec<Vec<T>>,
    pub z: Vec<Vec<T>>,
    pub n: Vec<Vec<T>>,
    pub gh_n: Vec<Vec<T>>,
}

impl Gru {
    pub fn new(input: usize, hidden: usize, alloc: &mut Allocator) -> Self {
        Self {
            input,
            hidden,
            w_ih: alloc.take(3 * hidden * input),
            w_hh: alloc.take(3 * hidden * hidden),
            b_ih: alloc.take(3 * hidden),
            b_hh: alloc.take(3 * hidden),
        }
    }

    /// Runs over `x` (`steps × batch × input`, time-major) from a zero state
    /// and returns the final hidden state with the cache.
    pub fn forward<T: Real>(&self, params: &[T], x: &[T], steps: usize, batch: usize) -> (Vec<T>, GruCache<T>) {
        let hd = self.hidden;
        let g3 = 3 * hd;
        let b_ih = &params[self.b_ih.range()];
        let b_hh = &params[self.b_hh.range()];
        let w_hh = &params[self.w_hh.range()];
        let mut gi: Vec<T> = (0..steps * batch).flat_map(|_| b_ih.iter().copied()).collect();
        matmul_bt(steps * batch, self.input, g3, x, &params[self.w_ih.range()], T::one(), &mut gi);

        let mut cache = GruCache {
            h: vec![vec![T::zero(); batch * hd]],
            r: Vec::with_capacity(steps),
            z: Vec::with_capacity(steps),
            n: Vec::with_capacity(steps),
            gh_n: Vec::with_capacity(steps),
        };
        let mut gh = vec![T::zero(); batch * g3];
        for t in 0..steps {
            let h_prev = cache.h.last().expect("initial state");
            for row in gh.chunks_exact_mut(g3) {
                row.copy_from_slice(b_hh);
            }
            matmul_bt(batch, hd, g3, h_prev, w_hh, T::one(), &mut gh);
            let mut r = vec![T::zero(); batch * hd];
            let mut z = vec![T::zero(); batch * hd];
            let mut n = vec![T::zero(); batch * hd];
            let mut ghn = vec![T::zero(); batch * hd];
            let mut h = vec![T::zero(); batch * hd];
            for b in 0..batch {
                let gi_row = &gi[(t * batch + b) * g3..(t * batch + b + 1) * g3];
                let gh_row = &gh[b * g3..(b + 1) * g3];
                for j in 0..hd {
                    let i = b * hd + j;
                    let rv = sigmoid(gi_row[j] + gh_row[j]);
                    let zv = sigmoid(gi_row[hd + j] + gh_row[hd + j]);
                    let nv = (gi_row[2 * hd + j] + rv * gh_row[2 * hd + j]).tanh();
                    r[i] = rv;
                    z[i] = zv;
                    n[i] = nv;
                    ghn[i] = gh_row[2 * hd + j];
                    h[i] = (T::one() - zv) * nv + zv * h_prev[i];
                }
            }
            cache.r.push(r);
            cache.z.push(z);
            cache.n.push(n);
            cache.gh_n.push(ghn);
            cache.h.push(h);
        }
        let last = cache.h.last().expect("state").clone();
        (last, cache)
    }

    /// Backpropagates a gradient on the final hidden state. Returns the
    /// input gradient (`steps × batch × input`).
    #[allow(clippy::too_many_arguments)]
    pub fn backward<T: Real>(
        &self,
        params: &[T],
        grads: &mut [T],
        x: &[T],
        cache: &GruCache<T>,
        dh_last: &[T],
        steps: usize,
        batch: usize,
    ) -> Vec<T> {
        let hd = self.hidden;
        let g3 = 3 * hd;
        let w_hh = &params[self.w_hh.range()];
        let mut dgi = vec![T::zero(); steps * batch * g3];
        let mut dh = dh_last.to_vec();
        let mut dgh = vec![T::zero(); batch * g3];
        for t in (0..steps).rev() {
            let h_prev = &cache.h[t];
            let (r, z, n, ghn) = (&cache.r[t], &cache.z[t], &cache.n[t], &cache.gh_n[t]);
            let mut dh_prev = vec![T::zero(); batch * hd];
            for b in 0..batch {
                let dgi_row = &mut dgi[(t * batch + b) * g3..(t * batch + b + 1) * g3];
                let dgh_row = &mut dgh[b * g3..(b + 1) * g3];
                for j in 0..hd {
                    let i = b * hd + j;
                    let d = dh[i];
                    let dn = d * (T::one() - z[i]);
                    let dz = d * (h_prev[i] - n[i]);
                    dh_prev[i] = d * z[i];
                    let dn_pre = dn * (T::one() - n[i] * n[i]);
                    let dr = dn_pre * ghn[i];
                    let dr_pre = dr * r[i] * (T::one() - r[i]);
                    let dz_pre = dz * z[i] * (T::one() - z[i]);
                    dgi_row[j] = dr_pre;
                    dgi_row[hd + j] = dz_pre;
                    dgi_row[2 * hd + j] = dn_pre;
                    dgh_row[j] = dr_pre;
                    dgh_row[hd + j] = dz_pre;
                    dgh_row[2 * hd + j] = dn_pre * r[i];
                }
            }
            {
                let gb = &mut grads[self.b_hh.range()];
                for row in dgh.chunks_exact(g3) {
                    for (g, &v) in gb.iter_mut().zip(row) {
                        *g = *g + v;
                    }
                }
            }
            // dWhh (3H×H) += dGHᵀ · h_prev
            matmul_at(g3, batch, hd, &dgh, h_prev, T::one(), &mut grads[self.w_hh.range()]);
            // dh_prev += dGH · Whh
            matmul(batch, g3, hd, &dgh, w_hh, T::one(), &mut dh_prev);
            dh = dh_prev;
        }
        {
            let gb = &mut grads[self.b_ih.range()];
            for row in dgi.chunks_exact(g3) {
                for (g, &v) in gb.iter_mut().zip(row) {
                    *g = *g + v;
                }
            }
        }
        matmul_at(g3, steps * batch, self.input, &dgi, x, T::one(), &mut grads[self.w_ih.range()]);
        let mut dx = vec![T::zero(); steps * batch * self.input];
        matmul(steps * batch, g3, self.input, &dgi, &params[self.w_ih.range()], T::zero(), &mut dx);
        dx
    }
}
