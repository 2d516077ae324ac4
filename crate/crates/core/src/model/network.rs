//! The residual U-Net: D downsampling residual stages with filter counts
//! doubling per stage, a central residual stage, D upsampling residual
//! stages with skip concatenation, and a 1x1 conv + sigmoid head.

use crate::error::{Error, Result};
use crate::model::layers::{
    sigmoid_backward, sigmoid_forward, BlockCache, BlockGrads, Conv2d, ConvGrads, MaxPool2x2,
    ResidualBlock, UpsampleNearest2x,
};
use crate::model::tensor::Tensor4;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Number of down/up stages.
    pub depth: usize,
    /// Channels of the first stage; stage i has base_filters * 2^i.
    pub base_filters: usize,
    pub patch_size: usize,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig { depth: 5, base_filters: 8, patch_size: 128, seed: 0 }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.base_filters == 0 {
            return Err(Error::Config("depth and base_filters must be >= 1".into()));
        }
        if self.patch_size % (1 << self.depth) != 0 {
            return Err(Error::BadSpatialSize { size: self.patch_size, depth: self.depth });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: NetworkConfig,
    pub encoders: Vec<ResidualBlock>,
    pub center: ResidualBlock,
    pub decoders: Vec<ResidualBlock>,
    pub head: Conv2d,
}

/// Every intermediate the backward pass needs, one forward's worth.
pub struct ForwardCache {
    enc_inputs: Vec<Tensor4>,
    enc_caches: Vec<BlockCache>,
    pool_argmax: Vec<Vec<usize>>,
    center_input: Tensor4,
    center_cache: BlockCache,
    dec_inputs: Vec<Tensor4>,
    dec_caches: Vec<BlockCache>,
    probs: Tensor4,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGrads {
    pub encoders: Vec<BlockGrads>,
    pub center: BlockGrads,
    pub decoders: Vec<BlockGrads>,
    pub head: ConvGrads,
}

impl Network {
    pub fn new(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let f0 = config.base_filters;
        let d = config.depth;
        let mut encoders = Vec::with_capacity(d);
        for i in 0..d {
            let in_c = if i == 0 { 1 } else { f0 << (i - 1) };
            encoders.push(ResidualBlock::init(in_c, f0 << i, &mut rng));
        }
        let center = ResidualBlock::init(f0 << (d - 1), f0 << d, &mut rng);
        let mut decoders = Vec::with_capacity(d);
        for i in 0..d {
            // upsampled path carries f0*2^(i+1) channels, the skip f0*2^i
            decoders.push(ResidualBlock::init((f0 << (i + 1)) + (f0 << i), f0 << i, &mut rng));
        }
        let head = Conv2d::init(f0, 1, 1, &mut rng);
        Ok(Network { config, encoders, center, decoders, head })
    }

    /// Output channel count of stage i, i in 0..=depth.
    pub fn stage_channels(&self, i: usize) -> usize {
        self.config.base_filters << i
    }

    fn check_input(&self, x: &Tensor4) -> Result<()> {
        if x.c() != 1 {
            return Err(Error::ShapeMismatch(format!("expected 1 channel, got {}", x.c())));
        }
        let div = 1 << self.config.depth;
        if x.h() % div != 0 || x.w() % div != 0 {
            return Err(Error::BadSpatialSize { size: x.h(), depth: self.config.depth });
        }
        Ok(())
    }

    /// Full forward pass; probabilities are in (0,1).
    pub fn forward(&self, x: &Tensor4) -> Result<(Tensor4, ForwardCache)> {
        self.check_input(x)?;
        let d = self.config.depth;
        let mut enc_inputs = Vec::with_capacity(d);
        let mut enc_caches = Vec::with_capacity(d);
        let mut pool_argmax = Vec::with_capacity(d);
        let mut cur = x.clone();
        for block in &self.encoders {
            enc_inputs.push(cur.clone());
            let (out, cache) = block.forward(&cur)?;
            let (pooled, argmax) = MaxPool2x2::forward(&out)?;
            enc_caches.push(cache);
            pool_argmax.push(argmax);
            cur = pooled;
        }
        let center_input = cur;
        let (mut cur, center_cache) = self.center.forward(&center_input)?;
        let mut dec_inputs = vec![Tensor4::zeros([0, 0, 0, 0]); d];
        let mut dec_caches: Vec<Option<BlockCache>> = (0..d).map(|_| None).collect();
        for i in (0..d).rev() {
            let up = UpsampleNearest2x::forward(&cur);
            let cat = Tensor4::concat_channels(&up, &enc_caches[i].output)?;
            let (out, cache) = self.decoders[i].forward(&cat)?;
            dec_inputs[i] = cat;
            dec_caches[i] = Some(cache);
            cur = out;
        }
        let logits = self.head.forward(&cur)?;
        let probs = sigmoid_forward(&logits);
        probs.debug_check_finite("network output");
        let cache = ForwardCache {
            enc_inputs,
            enc_caches,
            pool_argmax,
            center_input,
            center_cache,
            dec_inputs,
            dec_caches: dec_caches.into_iter().map(Option::unwrap).collect(),
            probs: probs.clone(),
        };
        Ok((probs, cache))
    }

    /// Forward without keeping intermediates.
    pub fn predict(&self, x: &Tensor4) -> Result<Tensor4> {
        self.forward(x).map(|(probs, _)| probs)
    }

    /// Backpropagate a gradient with respect to the output probabilities.
    pub fn backward(&self, cache: &ForwardCache, grad_probs: &Tensor4) -> Result<NetworkGrads> {
        let d = self.config.depth;
        let grad_logits = sigmoid_backward(&cache.probs, grad_probs);
        let head_input = &cache.dec_caches[0].output;
        let (mut cur_grad, head_grads) = self.head.backward(head_input, &grad_logits)?;

        let mut dec_grads: Vec<Option<BlockGrads>> = (0..d).map(|_| None).collect();
        let mut skip_grads: Vec<Option<Tensor4>> = (0..d).map(|_| None).collect();
        for i in 0..d {
            let (gcat, bg) =
                self.decoders[i].backward(&cache.dec_inputs[i], &cache.dec_caches[i], &cur_grad)?;
            dec_grads[i] = Some(bg);
            let up_channels = self.stage_channels(i + 1);
            let (gup, gskip) = gcat.split_channels(up_channels);
            skip_grads[i] = Some(gskip);
            cur_grad = UpsampleNearest2x::backward(&gup);
        }

        let (mut cur_grad, center_grads) =
            self.center.backward(&cache.center_input, &cache.center_cache, &cur_grad)?;

        let mut enc_grads: Vec<Option<BlockGrads>> = (0..d).map(|_| None).collect();
        for i in (0..d).rev() {
            let enc_out_shape = [
                cache.enc_inputs[i].n(),
                self.stage_channels(i),
                cache.enc_inputs[i].h(),
                cache.enc_inputs[i].w(),
            ];
            let mut gout = MaxPool2x2::backward(&cur_grad, &cache.pool_argmax[i], enc_out_shape);
            if let Some(gskip) = &skip_grads[i] {
                for (a, b) in gout.data.iter_mut().zip(&gskip.data) {
                    *a += b;
                }
            }
            let (gin, bg) = self.encoders[i].backward(&cache.enc_inputs[i], &cache.enc_caches[i], &gout)?;
            enc_grads[i] = Some(bg);
            cur_grad = gin;
        }

        Ok(NetworkGrads {
            encoders: enc_grads.into_iter().map(Option::unwrap).collect(),
            center: center_grads,
            decoders: dec_grads.into_iter().map(Option::unwrap).collect(),
            head: head_grads,
        })
    }

    /// Mutable parameter vectors in the fixed crate-wide ordering.
    pub fn param_vecs_mut(&mut self) -> Vec<&mut Vec<f64>> {
        fn push_conv<'a>(conv: &'a mut Conv2d, out: &mut Vec<&'a mut Vec<f64>>) {
            out.push(&mut conv.weights);
            out.push(&mut conv.bias);
        }
        let mut out = Vec::new();
        for block in self
            .encoders
            .iter_mut()
            .chain(std::iter::once(&mut self.center))
            .chain(self.decoders.iter_mut())
        {
            push_conv(&mut block.conv1, &mut out);
            push_conv(&mut block.conv2, &mut out);
            if let Some(proj) = &mut block.proj {
                push_conv(proj, &mut out);
            }
        }
        push_conv(&mut self.head, &mut out);
        out
    }

    pub fn param_sizes(&self) -> Vec<usize> {
        self.param_entries().iter().map(|(_, _, data)| data.len()).collect()
    }

    /// (name, shape, values) triples in the same fixed ordering.
    pub fn param_entries(&self) -> Vec<(String, Vec<usize>, &Vec<f64>)> {
        fn push_conv<'a>(
            prefix: String,
            conv: &'a Conv2d,
            out: &mut Vec<(String, Vec<usize>, &'a Vec<f64>)>,
        ) {
            out.push((
                format!("{prefix}.weight"),
                vec![conv.out_c, conv.in_c, conv.ksize, conv.ksize],
                &conv.weights,
            ));
            out.push((format!("{prefix}.bias"), vec![conv.out_c], &conv.bias));
        }
        fn push_block<'a>(
            prefix: &str,
            block: &'a ResidualBlock,
            out: &mut Vec<(String, Vec<usize>, &'a Vec<f64>)>,
        ) {
            push_conv(format!("{prefix}.conv1"), &block.conv1, out);
            push_conv(format!("{prefix}.conv2"), &block.conv2, out);
            if let Some(proj) = &block.proj {
                push_conv(format!("{prefix}.proj"), proj, out);
            }
        }
        let mut out = Vec::new();
        for (i, block) in self.encoders.iter().enumerate() {
            push_block(&format!("enc{i}"), block, &mut out);
        }
        push_block("center", &self.center, &mut out);
        for (i, block) in self.decoders.iter().enumerate() {
            push_block(&format!("dec{i}"), block, &mut out);
        }
        push_conv("head".to_string(), &self.head, &mut out);
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_sizes().iter().sum()
    }
}

impl NetworkGrads {
    /// Gradient slices aligned with `Network::param_vecs_mut`.
    pub fn flat(&self) -> Vec<&[f64]> {
        fn push_conv<'a>(g: &'a ConvGrads, out: &mut Vec<&'a [f64]>) {
            out.push(g.weights.as_slice());
            out.push(g.bias.as_slice());
        }
        let mut out = Vec::new();
        for bg in self.encoders.iter().chain(std::iter::once(&self.center)).chain(self.decoders.iter()) {
            push_conv(&bg.conv1, &mut out);
            push_conv(&bg.conv2, &mut out);
            if let Some(p) = &bg.proj {
                push_conv(p, &mut out);
            }
        }
        push_conv(&self.head, &mut out);
        out
    }
}

// Checkpoint container, little-endian:
//   magic b"AUGSEGNC", version u32 (1),
//   config_json_len u32, config JSON bytes,
//   param_count u32, then per parameter:
//     name_len u32, name utf-8, ndims u32, dims u32..., values f64.
const CKPT_MAGIC: &[u8; 8] = b"AUGSEGNC";
const CKPT_VERSION: u32 = 1;

pub fn save_checkpoint(net: &Network) -> Vec<u8> {
    let cfg_json = serde_json::to_vec(&net.config).expect("config serializes");
    let entries = net.param_entries();
    let mut out = Vec::new();
    out.extend_from_slice(CKPT_MAGIC);
    out.extend_from_slice(&CKPT_VERSION.to_le_bytes());
    out.extend_from_slice(&(cfg_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&cfg_json);
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, shape, data) in entries {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for d in shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<Network> {
    fn bad(msg: &str) -> Error {
        Error::BadContainer(format!("checkpoint: {msg}"))
    }
    fn take<'a>(bytes: &'a [u8], off: &mut usize, n: usize) -> Result<&'a [u8]> {
        if *off + n > bytes.len() {
            return Err(bad("truncated"));
        }
        let s = &bytes[*off..*off + n];
        *off += n;
        Ok(s)
    }
    fn u32_field(bytes: &[u8], off: &mut usize) -> Result<u32> {
        Ok(u32::from_le_bytes(take(bytes, off, 4)?.try_into().unwrap()))
    }
    let mut off = 0usize;
    if take(bytes, &mut off, 8)? != CKPT_MAGIC {
        return Err(bad("bad magic"));
    }
    if u32_field(bytes, &mut off)? != CKPT_VERSION {
        return Err(bad("unknown version"));
    }
    let cfg_len = u32_field(bytes, &mut off)? as usize;
    let config: NetworkConfig = serde_json::from_slice(take(bytes, &mut off, cfg_len)?)
        .map_err(|e| bad(&format!("config: {e}")))?;
    let mut net = Network::new(config)?;
    let count = u32_field(bytes, &mut off)? as usize;
    let expected = net.param_entries();
    if count != expected.len() {
        return Err(bad(&format!("expected {} params, got {count}", expected.len())));
    }
    let expected: Vec<(String, Vec<usize>, usize)> = expected
        .into_iter()
        .map(|(n, s, d)| (n, s, d.len()))
        .collect();
    let mut loaded: Vec<Vec<f64>> = Vec::with_capacity(count);
    for (name, shape, len) in &expected {
        let name_len = u32_field(bytes, &mut off)? as usize;
        let got_name = std::str::from_utf8(take(bytes, &mut off, name_len)?)
            .map_err(|_| bad("name not utf-8"))?
            .to_string();
        if got_name != *name {
            return Err(bad(&format!("param {got_name}, expected {name}")));
        }
        let ndims = u32_field(bytes, &mut off)? as usize;
        let mut got_shape = Vec::with_capacity(ndims);
        for _ in 0..ndims {
            got_shape.push(u32_field(bytes, &mut off)? as usize);
        }
        if got_shape != *shape {
            return Err(bad(&format!("{name}: shape {got_shape:?}, expected {shape:?}")));
        }
        let raw = take(bytes, &mut off, len * 8)?;
        loaded.push(
            raw.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        );
    }
    if off != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    for (param, values) in net.param_vecs_mut().into_iter().zip(loaded) {
        *param = values;
    }
    Ok(net)
}
