//! Network building blocks with analytic backward passes.

use crate::error::{Error, Result};
use crate::model::tensor::Tensor4;
use rand::Rng;

/// 2D convolution, stride 1. Kernel 3 uses zero padding 1 (spatial dims
/// preserved); kernel 1 has no padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_c: usize,
    pub out_c: usize,
    pub ksize: usize,
    /// [out_c][in_c][k][k], flat.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    pub fn zeros(in_c: usize, out_c: usize, ksize: usize) -> Self {
        assert!(ksize == 1 || ksize == 3);
        Conv2d {
            in_c,
            out_c,
            ksize,
            weights: vec![0.0; out_c * in_c * ksize * ksize],
            bias: vec![0.0; out_c],
        }
    }

    /// He-style fan-in scaled normal init, biases zero.
    pub fn init<R: Rng>(in_c: usize, out_c: usize, ksize: usize, rng: &mut R) -> Self {
        let mut conv = Conv2d::zeros(in_c, out_c, ksize);
        let fan_in = (in_c * ksize * ksize) as f64;
        let std = (2.0 / fan_in).sqrt();
        for w in &mut conv.weights {
            *w = crate::rng::gauss(rng) * std;
        }
        conv
    }

    #[inline]
    fn widx(&self, o: usize, c: usize, u: usize, v: usize) -> usize {
        ((o * self.in_c + c) * self.ksize + u) * self.ksize + v
    }

    fn check_input(&self, x: &Tensor4) -> Result<()> {
        if x.c() != self.in_c {
            return Err(Error::ShapeMismatch(format!(
                "conv expects {} input channels, got {}",
                self.in_c,
                x.c()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        self.check_input(x)?;
        let out = match self.ksize {
            1 => self.forward1(x),
            _ => self.forward3(x),
        };
        out.debug_check_finite("conv forward");
        Ok(out)
    }

    fn forward1(&self, x: &Tensor4) -> Tensor4 {
        let (n, h, w) = (x.n(), x.h(), x.w());
        let mut out = Tensor4::zeros([n, self.out_c, h, w]);
        for ni in 0..n {
            for o in 0..self.out_c {
                let b = self.bias[o];
                let plane = out.plane_mut(ni, o);
                plane.fill(b);
            }
            for ci in 0..self.in_c {
                let xp = x.plane(ni, ci).to_vec();
                for o in 0..self.out_c {
                    let wt = self.weights[self.widx(o, ci, 0, 0)];
                    for (op, &xv) in out.plane_mut(ni, o).iter_mut().zip(&xp) {
                        *op += wt * xv;
                    }
                }
            }
        }
        out
    }

    /// Zero-pad one plane into an (h+2)x(w+2) buffer.
    fn pad_plane(plane: &[f64], h: usize, w: usize, buf: &mut [f64]) {
        let pw = w + 2;
        buf.fill(0.0);
        for row in 0..h {
            buf[(row + 1) * pw + 1..(row + 1) * pw + 1 + w]
                .copy_from_slice(&plane[row * w..(row + 1) * w]);
        }
    }

    fn forward3(&self, x: &Tensor4) -> Tensor4 {
        let (n, h, w) = (x.n(), x.h(), x.w());
        let pw = w + 2;
        let mut out = Tensor4::zeros([n, self.out_c, h, w]);
        let mut padded = vec![0.0f64; self.in_c * (h + 2) * pw];
        for ni in 0..n {
            for ci in 0..self.in_c {
                Self::pad_plane(
                    x.plane(ni, ci),
                    h,
                    w,
                    &mut padded[ci * (h + 2) * pw..(ci + 1) * (h + 2) * pw],
                );
            }
            for o in 0..self.out_c {
                let plane = out.plane_mut(ni, o);
                plane.fill(self.bias[o]);
                for ci in 0..self.in_c {
                    let pad = &padded[ci * (h + 2) * pw..(ci + 1) * (h + 2) * pw];
                    for u in 0..3 {
                        for v in 0..3 {
                            let wt = self.weights[self.widx(o, ci, u, v)];
                            if wt == 0.0 {
                                continue;
                            }
                            for row in 0..h {
                                let src = &pad[(row + u) * pw + v..(row + u) * pw + v + w];
                                let dst = &mut plane[row * w..(row + 1) * w];
                                for (d, &s) in dst.iter_mut().zip(src) {
                                    *d += wt * s;
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Analytic gradients of the forward map.
    pub fn backward(&self, x: &Tensor4, grad_out: &Tensor4) -> Result<(Tensor4, ConvGrads)> {
        self.check_input(x)?;
        if grad_out.shape != [x.n(), self.out_c, x.h(), x.w()] {
            return Err(Error::ShapeMismatch(format!(
                "conv grad_out {:?} for input {:?}",
                grad_out.shape, x.shape
            )));
        }
        let res = match self.ksize {
            1 => self.backward1(x, grad_out),
            _ => self.backward3(x, grad_out),
        };
        res.0.debug_check_finite("conv backward");
        Ok(res)
    }

    fn backward1(&self, x: &Tensor4, grad_out: &Tensor4) -> (Tensor4, ConvGrads) {
        let n = x.n();
        let mut gx = Tensor4::zeros(x.shape);
        let mut gw = vec![0.0f64; self.weights.len()];
        let mut gb = vec![0.0f64; self.out_c];
        for ni in 0..n {
            for o in 0..self.out_c {
                let go = grad_out.plane(ni, o);
                gb[o] += go.iter().sum::<f64>();
                for ci in 0..self.in_c {
                    let xp = x.plane(ni, ci);
                    let mut acc = 0.0;
                    for (g, xv) in go.iter().zip(xp) {
                        acc += g * xv;
                    }
                    gw[self.widx(o, ci, 0, 0)] += acc;
                    let wt = self.weights[self.widx(o, ci, 0, 0)];
                    for (d, &g) in gx.plane_mut(ni, ci).iter_mut().zip(go) {
                        *d += wt * g;
                    }
                }
            }
        }
        (gx, ConvGrads { weights: gw, bias: gb })
    }

    fn backward3(&self, x: &Tensor4, grad_out: &Tensor4) -> (Tensor4, ConvGrads) {
        let (n, h, w) = (x.n(), x.h(), x.w());
        let pw = w + 2;
        let plen = (h + 2) * pw;
        let mut gx = Tensor4::zeros(x.shape);
        let mut gw = vec![0.0f64; self.weights.len()];
        let mut gb = vec![0.0f64; self.out_c];
        let mut padded = vec![0.0f64; self.in_c * plen];
        let mut gpad = vec![0.0f64; plen];
        for ni in 0..n {
            for ci in 0..self.in_c {
                Self::pad_plane(x.plane(ni, ci), h, w, &mut padded[ci * plen..(ci + 1) * plen]);
            }
            for o in 0..self.out_c {
                let go = grad_out.plane(ni, o);
                gb[o] += go.iter().sum::<f64>();
            }
            for ci in 0..self.in_c {
                let pad = &padded[ci * plen..(ci + 1) * plen];
                gpad.fill(0.0);
                for o in 0..self.out_c {
                    let go = grad_out.plane(ni, o);
                    for u in 0..3 {
                        for v in 0..3 {
                            // weight gradient: correlate grad_out with the
                            // shifted padded input
                            let mut acc = 0.0;
                            for row in 0..h {
                                let src = &pad[(row + u) * pw + v..(row + u) * pw + v + w];
                                let g = &go[row * w..(row + 1) * w];
                                for (gv, sv) in g.iter().zip(src) {
                                    acc += gv * sv;
                                }
                            }
                            gw[self.widx(o, ci, u, v)] += acc;
                            // input gradient: scatter grad_out through the
                            // same taps into the padded buffer
                            let wt = self.weights[self.widx(o, ci, u, v)];
                            if wt == 0.0 {
                                continue;
                            }
                            for row in 0..h {
                                let dst = &mut gpad[(row + u) * pw + v..(row + u) * pw + v + w];
                                let g = &go[row * w..(row + 1) * w];
                                for (d, &gv) in dst.iter_mut().zip(g) {
                                    *d += wt * gv;
                                }
                            }
                        }
                    }
                }
                let gplane = gx.plane_mut(ni, ci);
                for row in 0..h {
                    let src = &gpad[(row + 1) * pw + 1..(row + 1) * pw + 1 + w];
                    gplane[row * w..(row + 1) * w].copy_from_slice(src);
                }
            }
        }
        (gx, ConvGrads { weights: gw, bias: gb })
    }
}

pub fn relu_forward(x: &Tensor4) -> Tensor4 {
    let mut out = x.clone();
    for v in &mut out.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// `y` must be the forward output; the gradient gates on y > 0.
pub fn relu_backward(y: &Tensor4, grad_out: &Tensor4) -> Tensor4 {
    let mut gx = grad_out.clone();
    for (g, &yv) in gx.data.iter_mut().zip(&y.data) {
        if yv <= 0.0 {
            *g = 0.0;
        }
    }
    gx
}

pub fn sigmoid_forward(x: &Tensor4) -> Tensor4 {
    let mut out = x.clone();
    for v in &mut out.data {
        *v = 1.0 / (1.0 + (-*v).exp());
    }
    out
}

pub fn sigmoid_backward(y: &Tensor4, grad_out: &Tensor4) -> Tensor4 {
    let mut gx = grad_out.clone();
    for (g, &yv) in gx.data.iter_mut().zip(&y.data) {
        *g *= yv * (1.0 - yv);
    }
    gx
}

/// 2x2 max pooling, stride 2. Backward routes the gradient to the argmax,
/// first-index tie-break in row-major window order.
pub struct MaxPool2x2;

impl MaxPool2x2 {
    /// Returns the pooled tensor and per-output flat argmax indices into
    /// the input plane.
    pub fn forward(x: &Tensor4) -> Result<(Tensor4, Vec<usize>)> {
        let (n, c, h, w) = (x.n(), x.c(), x.h(), x.w());
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::OddSpatialDims { h, w });
        }
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Tensor4::zeros([n, c, oh, ow]);
        let mut argmax = vec![0usize; n * c * oh * ow];
        let mut oi = 0;
        for ni in 0..n {
            for ci in 0..c {
                let plane = x.plane(ni, ci);
                let oplane = out.plane_mut(ni, ci);
                for row in 0..oh {
                    for col in 0..ow {
                        let base = 2 * row * w + 2 * col;
                        let candidates = [base, base + 1, base + w, base + w + 1];
                        let mut best = candidates[0];
                        for &cand in &candidates[1..] {
                            if plane[cand] > plane[best] {
                                best = cand;
                            }
                        }
                        oplane[row * ow + col] = plane[best];
                        argmax[oi] = best;
                        oi += 1;
                    }
                }
            }
        }
        Ok((out, argmax))
    }

    pub fn backward(grad_out: &Tensor4, argmax: &[usize], in_shape: [usize; 4]) -> Tensor4 {
        let mut gx = Tensor4::zeros(in_shape);
        let (n, c) = (grad_out.n(), grad_out.c());
        let ohw = grad_out.h() * grad_out.w();
        for ni in 0..n {
            for ci in 0..c {
                let go = grad_out.plane(ni, ci);
                let gplane = gx.plane_mut(ni, ci);
                let base = (ni * c + ci) * ohw;
                for (k, &g) in go.iter().enumerate() {
                    gplane[argmax[base + k]] += g;
                }
            }
        }
        gx
    }
}

/// Nearest-neighbor 2x upsampling; backward sums each 2x2 block.
pub struct UpsampleNearest2x;

impl UpsampleNearest2x {
    pub fn forward(x: &Tensor4) -> Tensor4 {
        let (n, c, h, w) = (x.n(), x.c(), x.h(), x.w());
        let mut out = Tensor4::zeros([n, c, h * 2, w * 2]);
        for ni in 0..n {
            for ci in 0..c {
                let plane = x.plane(ni, ci).to_vec();
                let oplane = out.plane_mut(ni, ci);
                for row in 0..h {
                    for col in 0..w {
                        let v = plane[row * w + col];
                        let base = 2 * row * 2 * w + 2 * col;
                        oplane[base] = v;
                        oplane[base + 1] = v;
                        oplane[base + 2 * w] = v;
                        oplane[base + 2 * w + 1] = v;
                    }
                }
            }
        }
        out
    }

    pub fn backward(grad_out: &Tensor4) -> Tensor4 {
        let (n, c, oh, ow) = (grad_out.n(), grad_out.c(), grad_out.h(), grad_out.w());
        let (h, w) = (oh / 2, ow / 2);
        let mut gx = Tensor4::zeros([n, c, h, w]);
        for ni in 0..n {
            for ci in 0..c {
                let go = grad_out.plane(ni, ci).to_vec();
                let gplane = gx.plane_mut(ni, ci);
                for row in 0..h {
                    for col in 0..w {
                        let base = 2 * row * ow + 2 * col;
                        gplane[row * w + col] =
                            go[base] + go[base + 1] + go[base + ow] + go[base + ow + 1];
                    }
                }
            }
        }
        gx
    }
}

/// Post-activation residual block: y = ReLU(conv2(ReLU(conv1(x))) + proj(x)),
/// with `proj` an identity when channel counts match, else a 1x1 conv.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub proj: Option<Conv2d>,
}

/// Forward intermediates kept for the backward pass.
pub struct BlockCache {
    pub hidden: Tensor4,
    pub output: Tensor4,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrads {
    pub conv1: ConvGrads,
    pub conv2: ConvGrads,
    pub proj: Option<ConvGrads>,
}

impl ResidualBlock {
    pub fn zeros(in_c: usize, out_c: usize) -> Self {
        ResidualBlock {
            conv1: Conv2d::zeros(in_c, out_c, 3),
            conv2: Conv2d::zeros(out_c, out_c, 3),
            proj: (in_c != out_c).then(|| Conv2d::zeros(in_c, out_c, 1)),
        }
    }

    pub fn init<R: Rng>(in_c: usize, out_c: usize, rng: &mut R) -> Self {
        ResidualBlock {
            conv1: Conv2d::init(in_c, out_c, 3, rng),
            conv2: Conv2d::init(out_c, out_c, 3, rng),
            proj: (in_c != out_c).then(|| Conv2d::init(in_c, out_c, 1, rng)),
        }
    }

    pub fn forward(&self, x: &Tensor4) -> Result<(Tensor4, BlockCache)> {
        let hidden = relu_forward(&self.conv1.forward(x)?);
        let mut pre = self.conv2.forward(&hidden)?;
        match &self.proj {
            Some(proj) => {
                let shortcut = proj.forward(x)?;
                for (p, s) in pre.data.iter_mut().zip(&shortcut.data) {
                    *p += s;
                }
            }
            None => {
                for (p, s) in pre.data.iter_mut().zip(&x.data) {
                    *p += s;
                }
            }
        }
        let output = relu_forward(&pre);
        Ok((output.clone(), BlockCache { hidden, output }))
    }

    pub fn backward(
        &self,
        x: &Tensor4,
        cache: &BlockCache,
        grad_out: &Tensor4,
    ) -> Result<(Tensor4, BlockGrads)> {
        let dpre = relu_backward(&cache.output, grad_out);
        let (dhidden_post, g2) = self.conv2.backward(&cache.hidden, &dpre)?;
        let da1 = relu_backward(&cache.hidden, &dhidden_post);
        let (mut gx, g1) = self.conv1.backward(x, &da1)?;
        let gproj = match &self.proj {
            Some(proj) => {
                let (gxs, gp) = proj.backward(x, &dpre)?;
                for (a, b) in gx.data.iter_mut().zip(&gxs.data) {
                    *a += b;
                }
                Some(gp)
            }
            None => {
                for (a, b) in gx.data.iter_mut().zip(&dpre.data) {
                    *a += b;
                }
                None
            }
        };
        Ok((gx, BlockGrads { conv1: g1, conv2: g2, proj: gproj }))
    }
}
