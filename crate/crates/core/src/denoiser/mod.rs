//! Conditional noise-prediction network.
//!
//! Target patches are tokenized by space-to-depth plus a linear map; reference
//! patches by two strided convolutions. A stack of pre-norm blocks applies
//! self-attention over target tokens, cross-attention from target tokens to the
//! concatenated reference tokens, and a feed-forward layer. Queries and keys are
//! modulated by the spatiotemporal index codes in [`crate::spen`].

mod config;
mod embed;
mod init;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numeric::kernels::{self, PAD};
use crate::numeric::{Graph, ParamStore, Tensor, Var};
use crate::patch_grid::{PatchIndex, ReferencePatchSet};
use crate::spen::{self, SpenVariant};

pub use config::DenoiserConfig;
pub use embed::{coordinate_embedding, timestep_embedding};

/// Where a token matrix came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenOrigin {
    Target,
    Reference,
}

/// Token features with their position and time indices.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenMatrix {
    pub tokens: Tensor,
    pub pos_index: Vec<usize>,
    pub time_index: Vec<usize>,
    pub origin: TokenOrigin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttentionKind {
    SelfAttention,
    CrossAttention,
}

impl AttentionKind {
    fn prefix(self) -> &'static str {
        match self {
            AttentionKind::SelfAttention => "self",
            AttentionKind::CrossAttention => "cross",
        }
    }
}

/// One side of an attention call: token features, their indices and the
/// coordinate codes added to their queries or keys.
#[derive(Clone, Copy, Debug)]
pub struct Side<'a> {
    pub x: Var,
    pub pos: &'a [usize],
    pub time: &'a [usize],
    pub coords: Var,
}

/// Graph handles for one forward evaluation.
#[derive(Clone, Copy, Debug)]
pub struct ForwardVars {
    /// Residual stream entering the first block.
    pub stream_in: Var,
    /// Residual stream leaving the last block.
    pub stream_out: Var,
    /// Predicted noise, `H x W x M`.
    pub noise: Var,
}

#[derive(Clone, Debug)]
pub struct Denoiser {
    cfg: DenoiserConfig,
    params: ParamStore,
    to_tokens: Arc<[u32]>,
    from_tokens: Arc<[u32]>,
    conv1_w: Arc<[u32]>,
    conv2_w: Arc<[u32]>,
    target_coords: Tensor,
    ref_coords: Tensor,
}

impl Denoiser {
    /// Fresh parameters drawn from `cfg.init_seed`.
    pub fn new(cfg: DenoiserConfig) -> Result<Self> {
        cfg.validate()?;
        let params = init::initial_params(&cfg);
        Self::from_params(cfg, params)
    }

    pub fn from_params(cfg: DenoiserConfig, params: ParamStore) -> Result<Self> {
        cfg.validate()?;
        let expected = init::param_shapes(&cfg);
        if expected.len() != params.len() {
            return Err(Error::Config(format!(
                "expected {} parameters, found {}",
                expected.len(),
                params.len()
            )));
        }
        for (name, shape) in &expected {
            match params.get(name) {
                Some(t) if t.shape() == shape.as_slice() => {}
                Some(t) => {
                    return Err(Error::Config(format!(
                        "parameter `{name}` has shape {:?}, expected {shape:?}",
                        t.shape()
                    )))
                }
                None => return Err(Error::Config(format!("missing parameter `{name}`"))),
            }
        }
        let (p, h) = (cfg.token_size, cfg.patch_size);
        let (tok_side, ref_side) = (cfg.token_grid(), cfg.ref_grid());
        Ok(Self {
            to_tokens: space_to_depth_index(h, p, cfg.m).into(),
            from_tokens: depth_to_space_index(h, p, cfg.m).into(),
            conv1_w: conv_weight_index(cfg.enc_hidden(), 1, 3).into(),
            conv2_w: conv_weight_index(cfg.d, cfg.enc_hidden(), 3).into(),
            target_coords: coordinate_embedding(tok_side, h as f64 / tok_side as f64, cfg.d),
            ref_coords: coordinate_embedding(ref_side, h as f64 / ref_side as f64, cfg.d),
            cfg,
            params,
        })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore {
        self.params
    }

    pub fn variant(&self) -> SpenVariant {
        self.cfg.variant
    }

    /// Tokens per target patch, `(h*w) * M`.
    pub fn target_token_count(&self) -> usize {
        self.cfg.token_grid().pow(2) * self.cfg.m
    }

    /// Tokens per reference patch, `(h'*w') * N`.
    pub fn reference_token_count(&self, n: usize) -> usize {
        self.cfg.ref_grid().pow(2) * n
    }

    fn check_target(&self, x: &Tensor) -> Result<()> {
        let c = &self.cfg;
        if x.shape() != [c.patch_size, c.patch_size, c.m] {
            return Err(Error::Dimension(format!(
                "target must be {0}x{0}x{1}, got {2:?}",
                c.patch_size,
                c.m,
                x.shape()
            )));
        }
        Ok(())
    }

    fn check_refs(&self, refs: &ReferencePatchSet) -> Result<()> {
        let c = &self.cfg;
        if refs.is_empty() || refs.patch_size() != (c.patch_size, c.patch_size) {
            return Err(Error::Dimension(format!(
                "reference patches must be non-empty {0}x{0} tiles",
                c.patch_size
            )));
        }
        if refs.steps() + c.m > c.capacity.time {
            return Err(Error::Config(format!(
                "N + M = {} exceeds time-code capacity {}",
                refs.steps() + c.m,
                c.capacity.time
            )));
        }
        Ok(())
    }

    /// Raw space-to-depth tokens (`b x p^2`) of an `H x W x M` target.
    pub fn space_to_depth(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let p2 = self.cfg.token_size.pow(2);
        let b = self.target_token_count();
        g.gather(x, self.to_tokens.clone(), &[b, p2])
    }

    /// Inverse of [`Denoiser::space_to_depth`].
    pub fn depth_to_space(&self, g: &mut Graph, tokens: Var) -> Result<Var> {
        let c = &self.cfg;
        g.gather(tokens, self.from_tokens.clone(), &[c.patch_size, c.patch_size, c.m])
    }

    fn target_indices(&self, n: usize, target: PatchIndex) -> (Vec<usize>, Vec<usize>) {
        let cells = self.cfg.token_grid().pow(2);
        let b = cells * self.cfg.m;
        let pos = vec![target.linear_id; b];
        let time = (0..b).map(|r| n + r / cells).collect();
        (pos, time)
    }

    fn reference_indices(&self, refs: &ReferencePatchSet) -> (Vec<usize>, Vec<usize>) {
        let cells = self.cfg.ref_grid().pow(2);
        let n = refs.steps();
        let mut pos = Vec::with_capacity(refs.len() * n * cells);
        let mut time = Vec::with_capacity(pos.capacity());
        for idx in &refs.indices {
            for step in 0..n {
                for _ in 0..cells {
                    pos.push(idx.linear_id);
                    time.push(step);
                }
            }
        }
        (pos, time)
    }

    fn project(&self, g: &mut Graph, x: Var, w: &str, b: Option<&str>) -> Result<Var> {
        let wv = g.param(&self.params, w);
        let y = g.matmul(x, wv)?;
        match b {
            Some(b) => {
                let bv = g.param(&self.params, b);
                g.add_row(y, bv)
            }
            None => Ok(y),
        }
    }

    fn norm(&self, g: &mut Graph, x: Var, prefix: &str) -> Result<Var> {
        let gain = g.param(&self.params, &format!("{prefix}.g"));
        let bias = g.param(&self.params, &format!("{prefix}.b"));
        g.layer_norm(x, gain, bias)
    }

    /// Target tokens (`b x d`): space-to-depth followed by the learned input projection.
    pub fn tokenize_target(&self, g: &mut Graph, x: Var, n: usize, target: PatchIndex) -> Result<(Var, Vec<usize>, Vec<usize>)> {
        self.check_target(g.value(x))?;
        let raw = self.space_to_depth(g, x)?;
        let tokens = self.project(g, raw, "target_in.w", Some("target_in.b"))?;
        let (pos, time) = self.target_indices(n, target);
        Ok((tokens, pos, time))
    }

    /// Reference tokens for all patches, concatenated patch-major then step-major.
    pub fn encode_references(&self, g: &mut Graph, refs: &ReferencePatchSet) -> Result<(Var, Vec<usize>, Vec<usize>)> {
        self.check_refs(refs)?;
        let h = self.cfg.patch_size;
        let n = refs.steps();
        let images = refs.len() * n;
        // channels-last image stack, image id = patch * N + step
        let mut layout = Vec::with_capacity(images * h * h);
        for i in 0..refs.len() {
            for s in 0..n {
                for y in 0..h {
                    for x in 0..h {
                        layout.push((((i * h + y) * h + x) * n + s) as u32);
                    }
                }
            }
        }
        let cols1: Vec<u32> = kernels::im2col_hwc(images, h, h, 1, 3, 2)
            .into_iter()
            .map(|j| if j == PAD { PAD } else { layout[j as usize] })
            .collect();
        let h1 = kernels::conv_out_extent(h, 2);
        let h2 = kernels::conv_out_extent(h1, 2);
        let c1 = self.cfg.enc_hidden();

        let input = g.constant(refs.patches.clone());
        let x1 = g.gather(input, cols1.into(), &[images * h1 * h1, 9])?;
        let w1 = g.param(&self.params, "enc.conv1.w");
        let w1 = g.gather(w1, self.conv1_w.clone(), &[9, c1])?;
        let y1 = g.matmul(x1, w1)?;
        let b1 = g.param(&self.params, "enc.conv1.b");
        let y1 = g.add_row(y1, b1)?;
        let y1 = g.gelu(y1)?;

        let cols2 = kernels::im2col_hwc(images, h1, h1, c1, 3, 2);
        let x2 = g.gather(y1, cols2.into(), &[images * h2 * h2, 9 * c1])?;
        let w2 = g.param(&self.params, "enc.conv2.w");
        let w2 = g.gather(w2, self.conv2_w.clone(), &[9 * c1, self.cfg.d])?;
        let y2 = g.matmul(x2, w2)?;
        let b2 = g.param(&self.params, "enc.conv2.b");
        let tokens = g.add_row(y2, b2)?;
        let (pos, time) = self.reference_indices(refs);
        Ok((tokens, pos, time))
    }

    fn modulate(&self, g: &mut Graph, x: Var, pos: &[usize], time: &[usize]) -> Result<Var> {
        if self.cfg.variant == SpenVariant::NoEmbd {
            return Ok(x);
        }
        let m = spen::modulation(pos, time, self.cfg.variant, self.cfg.capacity, self.cfg.d)?;
        let mv = g.constant(m);
        g.mul(x, mv)
    }

    /// Multi-head attention from `queries` to `context`.
    ///
    /// The scaled within-patch coordinate codes are added to the projected
    /// queries and keys, which are then SpEn-modulated; values are not.
    pub fn attention(&self, g: &mut Graph, block: usize, kind: AttentionKind, queries: Side, context: Side) -> Result<Var> {
        let pre = format!("blocks.{block}.{}", kind.prefix());
        let q = self.project(g, queries.x, &format!("{pre}.q"), None)?;
        let q = g.add(q, queries.coords)?;
        let q = self.modulate(g, q, queries.pos, queries.time)?;
        let k = self.project(g, context.x, &format!("{pre}.k"), None)?;
        let k = g.add(k, context.coords)?;
        let k = self.modulate(g, k, context.pos, context.time)?;
        let v = self.project(g, context.x, &format!("{pre}.v"), None)?;

        let heads = self.cfg.heads;
        let d = self.cfg.d;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let (bq, _) = g.value(q).dims2()?;
        let (bk, _) = g.value(k).dims2()?;
        let out = if heads == 1 {
            let s = g.matmul_t(q, false, k, true)?;
            let s = g.scale(s, scale)?;
            let a = g.softmax_rows(s)?;
            g.matmul(a, v)?
        } else {
            let mut parts = Vec::with_capacity(heads);
            for h in 0..heads {
                let qh = g.gather(q, column_slice(bq, d, h * dh, dh).into(), &[bq, dh])?;
                let kh = g.gather(k, column_slice(bk, d, h * dh, dh).into(), &[bk, dh])?;
                let vh = g.gather(v, column_slice(bk, d, h * dh, dh).into(), &[bk, dh])?;
                let s = g.matmul_t(qh, false, kh, true)?;
                let s = g.scale(s, scale)?;
                let a = g.softmax_rows(s)?;
                parts.push(g.matmul(a, vh)?);
            }
            g.concat_cols(&parts)?
        };
        self.project(g, out, &format!("{pre}.o"), None)
    }

    fn feed_forward(&self, g: &mut Graph, block: usize, x: Var) -> Result<Var> {
        let pre = format!("blocks.{block}.ff");
        let h = self.project(g, x, &format!("{pre}.w1"), Some(&format!("{pre}.b1")))?;
        let h = g.gelu(h)?;
        self.project(g, h, &format!("{pre}.w2"), Some(&format!("{pre}.b2")))
    }

    /// Records one forward pass of the noise predictor.
    ///
    /// `x_t` is the noisy `H x W x M` target, `t` the diffusion step, `target`
    /// the grid position of the patch being generated.
    pub fn forward(
        &self,
        g: &mut Graph,
        x_t: &Tensor,
        t: usize,
        refs: &ReferencePatchSet,
        target: PatchIndex,
    ) -> Result<ForwardVars> {
        if t == 0 {
            return Err(Error::Config("diffusion step must be >= 1".into()));
        }
        let n = refs.steps();
        let x = g.constant(x_t.clone());
        let (tokens, tpos, ttime) = self.tokenize_target(g, x, n, target)?;

        let temb = g.constant(timestep_embedding(t, self.cfg.d));
        let temb = self.project(g, temb, "time_embed.w", Some("time_embed.b"))?;
        let stream = g.add_row(tokens, temb)?;
        let tcoords = tile_rows(&self.target_coords, self.cfg.m);
        let coords = g.constant(tcoords.clone());
        let stream_in = g.add(stream, coords)?;
        let tqk = g.constant(tcoords.map(|v| v * self.cfg.qk_coord_gain));

        let (ref_tokens, rpos, rtime) = self.encode_references(g, refs)?;
        let rcoords = tile_rows(&self.ref_coords, refs.len() * n);
        let rqk = g.constant(rcoords.map(|v| v * self.cfg.qk_coord_gain));
        let ref_coords = g.constant(rcoords);
        let ctx = g.add(ref_tokens, ref_coords)?;
        let ctx = self.norm(g, ctx, "ref_norm")?;

        let mut x = stream_in;
        for l in 0..self.cfg.blocks {
            let h = self.norm(g, x, &format!("blocks.{l}.ln1"))?;
            let side = Side { x: h, pos: &tpos, time: &ttime, coords: tqk };
            let a = self.attention(g, l, AttentionKind::SelfAttention, side, side)?;
            x = g.add(x, a)?;
            let h = self.norm(g, x, &format!("blocks.{l}.ln2"))?;
            let q = Side { x: h, pos: &tpos, time: &ttime, coords: tqk };
            let kv = Side { x: ctx, pos: &rpos, time: &rtime, coords: rqk };
            let a = self.attention(g, l, AttentionKind::CrossAttention, q, kv)?;
            x = g.add(x, a)?;
            let h = self.norm(g, x, &format!("blocks.{l}.ln3"))?;
            let f = self.feed_forward(g, l, h)?;
            x = g.add(x, f)?;
        }
        let stream_out = x;
        let h = self.norm(g, x, "final_norm")?;
        let out = self.project(g, h, "out.w", Some("out.b"))?;
        let noise = self.depth_to_space(g, out)?;
        Ok(ForwardVars { stream_in, stream_out, noise })
    }

    /// Noise estimate for `x_t` without keeping the graph.
    pub fn predict_noise(&self, x_t: &Tensor, t: usize, refs: &ReferencePatchSet, target: PatchIndex) -> Result<Tensor> {
        let mut g = Graph::new();
        let f = self.forward(&mut g, x_t, t, refs, target)?;
        Ok(g.value(f.noise).clone())
    }

    /// Target tokens as a [`TokenMatrix`].
    pub fn target_tokens(&self, x: &Tensor, n: usize, target: PatchIndex) -> Result<TokenMatrix> {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let (v, pos_index, time_index) = self.tokenize_target(&mut g, xv, n, target)?;
        Ok(TokenMatrix { tokens: g.value(v).clone(), pos_index, time_index, origin: TokenOrigin::Target })
    }

    /// One [`TokenMatrix`] per reference patch.
    pub fn reference_tokens(&self, refs: &ReferencePatchSet) -> Result<Vec<TokenMatrix>> {
        let mut g = Graph::new();
        let (v, pos, time) = self.encode_references(&mut g, refs)?;
        let all = g.value(v);
        let d = self.cfg.d;
        let per = self.reference_token_count(refs.steps());
        Ok((0..refs.len())
            .map(|i| TokenMatrix {
                tokens: Tensor::new(vec![per, d], all.data()[i * per * d..(i + 1) * per * d].to_vec()).unwrap(),
                pos_index: pos[i * per..(i + 1) * per].to_vec(),
                time_index: time[i * per..(i + 1) * per].to_vec(),
                origin: TokenOrigin::Reference,
            })
            .collect())
    }

    /// Attention of block `block` evaluated on token matrices. Several key/value
    /// matrices are concatenated into one context.
    pub fn attend(&self, block: usize, kind: AttentionKind, queries: &TokenMatrix, keys_values: &[TokenMatrix]) -> Result<Tensor> {
        if block >= self.cfg.blocks {
            return Err(Error::Config(format!("block {block} out of range")));
        }
        let d = self.cfg.d;
        let mut kv = Vec::new();
        let mut kcoords = Vec::new();
        let (mut kpos, mut ktime) = (Vec::new(), Vec::new());
        for m in keys_values {
            if m.tokens.dims2()?.1 != d {
                return Err(Error::Config(format!("key/value width must be {d}")));
            }
            kv.extend_from_slice(m.tokens.data());
            kcoords.extend_from_slice(self.qk_coords(m)?.data());
            kpos.extend_from_slice(&m.pos_index);
            ktime.extend_from_slice(&m.time_index);
        }
        if queries.tokens.dims2()?.1 != d {
            return Err(Error::Config(format!("query width must be {d}")));
        }
        let mut g = Graph::new();
        let q = g.constant(queries.tokens.clone());
        let qc = g.constant(self.qk_coords(queries)?);
        let c = g.constant(Tensor::new(vec![kpos.len(), d], kv)?);
        let kc = g.constant(Tensor::new(vec![kpos.len(), d], kcoords)?);
        let qs = Side { x: q, pos: &queries.pos_index, time: &queries.time_index, coords: qc };
        let ks = Side { x: c, pos: &kpos, time: &ktime, coords: kc };
        let out = self.attention(&mut g, block, kind, qs, ks)?;
        Ok(g.value(out).clone())
    }

    /// Scaled coordinate codes for the rows of `m`; row `r` sits at cell `r mod cells`.
    fn qk_coords(&self, m: &TokenMatrix) -> Result<Tensor> {
        let table = match m.origin {
            TokenOrigin::Target => &self.target_coords,
            TokenOrigin::Reference => &self.ref_coords,
        };
        let (cells, d) = table.dims2()?;
        let rows = m.tokens.shape()[0];
        let g = self.cfg.qk_coord_gain;
        Tensor::new(vec![rows, d], (0..rows * d).map(|i| g * table.data()[(i / d % cells) * d + i % d]).collect())
    }
}

/// Repeats the rows of `t` `times` times.
fn tile_rows(t: &Tensor, times: usize) -> Tensor {
    let (r, c) = t.dims2().expect("matrix");
    let mut data = Vec::with_capacity(r * c * times);
    for _ in 0..times {
        data.extend_from_slice(t.data());
    }
    Tensor::new(vec![r * times, c], data).unwrap()
}

fn column_slice(rows: usize, cols: usize, start: usize, width: usize) -> Vec<u32> {
    let mut idx = Vec::with_capacity(rows * width);
    for r in 0..rows {
        for c in start..start + width {
            idx.push((r * cols + c) as u32);
        }
    }
    idx
}

/// Token row `m*(h*w) + by*w + bx`, column `iy*p + ix`, from an `H x W x M` tensor.
fn space_to_depth_index(h: usize, p: usize, m: usize) -> Vec<u32> {
    let side = h / p;
    let mut idx = Vec::with_capacity(h * h * m);
    for step in 0..m {
        for by in 0..side {
            for bx in 0..side {
                for iy in 0..p {
                    for ix in 0..p {
                        let (y, x) = (by * p + iy, bx * p + ix);
                        idx.push(((y * h + x) * m + step) as u32);
                    }
                }
            }
        }
    }
    idx
}

fn depth_to_space_index(h: usize, p: usize, m: usize) -> Vec<u32> {
    let forward = space_to_depth_index(h, p, m);
    let mut inv = vec![0u32; forward.len()];
    for (tok, &src) in forward.iter().enumerate() {
        inv[src as usize] = tok as u32;
    }
    inv
}

/// Maps a `c_out x c_in x k x k` kernel onto the `(ky, kx, c_in) x c_out` matrix used with im2col.
fn conv_weight_index(c_out: usize, c_in: usize, k: usize) -> Vec<u32> {
    let mut idx = Vec::with_capacity(k * k * c_in * c_out);
    for ky in 0..k {
        for kx in 0..k {
            for c in 0..c_in {
                for o in 0..c_out {
                    idx.push((((o * c_in + c) * k + ky) * k + kx) as u32);
                }
            }
        }
    }
    idx
}

#[cfg(test)]
mod tests;
