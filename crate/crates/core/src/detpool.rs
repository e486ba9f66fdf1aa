//! A small vision transformer whose attention can be restricted by an object
//! segmentation mask, with four pooling heads and exact gradients.
//!
//! Tokens are the non-overlapping `P x P` patches of an `H x W x C` image in
//! row-major patch order; within a patch the features are ordered
//! `(dy, dx, c)`. An optional CLS token sits at row 0 and receives no
//! positional encoding.

use std::fmt;

use ndarray::{s, Array1, Array2, Array3, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::layers::uniform_vec;
use crate::nn::params::join;
use crate::nn::{sinusoidal_2d, Linear, Parameters, StackCache, TensorError, TensorTable, TransformerStack};
use crate::rng::stream;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetPoolError {
    #[error("dimension mismatch for {what}: expected {expected:?}, found {found:?}")]
    DimensionMismatch { what: &'static str, expected: Vec<usize>, found: Vec<usize> },
    #[error("no patch is flagged as object")]
    EmptyObject,
    #[error("{0} pooling needs patch flags")]
    MissingFlags(PoolingMode),
    #[error("CLS pooling needs include_cls")]
    ClsUnavailable,
    #[error("non-finite activation in {0}")]
    NonFiniteActivation(&'static str),
    #[error("invalid encoder config: {0}")]
    InvalidConfig(String),
    #[error("invalid PGM: {0}")]
    Pgm(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = DetPoolError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub image_height: usize,
    pub image_width: usize,
    pub channels: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub include_cls: bool,
    /// Minimum fraction of object pixels for a patch to be flagged; 0 flags
    /// any patch with at least one object pixel.
    pub patch_coverage: f64,
    /// Debug switch. When false, Det mode still pools object tokens but
    /// attention is left unrestricted.
    pub mask_attention_in_det: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            image_height: 32,
            image_width: 32,
            channels: 3,
            patch_size: 4,
            embed_dim: 64,
            layers: 2,
            heads: 4,
            mlp_ratio: 4,
            include_cls: false,
            patch_coverage: 0.0,
            mask_attention_in_det: true,
        }
    }
}

impl EncoderConfig {
    /// Smaller configuration used for finite-difference gradient checks.
    pub fn gradient_check() -> Self {
        Self { image_height: 16, image_width: 16, embed_dim: 32, heads: 2, mlp_ratio: 2, include_cls: true, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DetPoolError::InvalidConfig(m));
        if self.patch_size == 0 || self.image_height == 0 || self.image_width == 0 || self.channels == 0 {
            return bad("image size, channels and patch size must be positive".into());
        }
        if self.image_height % self.patch_size != 0 || self.image_width % self.patch_size != 0 {
            return bad(format!(
                "image {}x{} is not divisible by patch size {}",
                self.image_height, self.image_width, self.patch_size
            ));
        }
        if self.heads == 0 || self.embed_dim % self.heads != 0 {
            return bad(format!("embed_dim {} is not divisible by heads {}", self.embed_dim, self.heads));
        }
        if self.embed_dim % 4 != 0 {
            return bad(format!("embed_dim {} must be divisible by 4 for 2-D sinusoidal encoding", self.embed_dim));
        }
        if self.mlp_ratio == 0 {
            return bad("mlp_ratio must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.patch_coverage) {
            return bad(format!("patch_coverage {} outside [0, 1]", self.patch_coverage));
        }
        Ok(())
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.image_height / self.patch_size, self.image_width / self.patch_size)
    }

    pub fn num_patches(&self) -> usize {
        let (r, c) = self.grid();
        r * c
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * self.channels
    }

    fn cls_offset(&self) -> usize {
        usize::from(self.include_cls)
    }
}

/// Object mask; `true` marks an object pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct SegMask(pub Array2<bool>);

impl SegMask {
    pub fn from_rect(height: usize, width: usize, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Self {
        Self(Array2::from_shape_fn((height, width), |(y, x)| rows.contains(&y) && cols.contains(&x)))
    }

    /// Binary PGM (P5). Any nonzero sample is an object pixel.
    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let err = |m: &str| DetPoolError::Pgm(m.to_string());
        let mut pos = 0;
        let mut fields = Vec::new();
        while fields.len() < 4 {
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
                pos += 1;
            }
            if start == pos {
                return Err(err("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| err("header is not ASCII"))?);
        }
        if fields[0] != "P5" {
            return Err(err("magic is not P5"));
        }
        let num = |s: &str, what: &str| s.parse::<usize>().map_err(|_| err(&format!("bad {what} {s:?}")));
        let width = num(fields[1], "width")?;
        let height = num(fields[2], "height")?;
        let maxval = num(fields[3], "maxval")?;
        if maxval == 0 || maxval > 65535 {
            return Err(err("maxval must be in 1..=65535"));
        }
        if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
            return Err(err("missing separator before raster"));
        }
        pos += 1;
        let bps = if maxval > 255 { 2 } else { 1 };
        let raster = &bytes[pos..];
        if raster.len() != width * height * bps {
            return Err(err(&format!("raster has {} bytes, expected {}", raster.len(), width * height * bps)));
        }
        let data = raster.chunks_exact(bps).map(|c| c.iter().any(|&b| b != 0)).collect();
        Ok(Self(Array2::from_shape_vec((height, width), data).expect("shape")))
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let (h, w) = self.0.dim();
        let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
        out.extend(self.0.iter().map(|&b| if b { 255u8 } else { 0 }));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchFlags(pub Vec<bool>);

impl PatchFlags {
    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&f| f).count()
    }

    pub fn object_indices(&self) -> Vec<usize> {
        self.0.iter().enumerate().filter(|(_, &f)| f).map(|(i, _)| i).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolingMode {
    Mean,
    Cls,
    Attention,
    Det,
}

impl PoolingMode {
    pub const ALL: [PoolingMode; 4] = [PoolingMode::Mean, PoolingMode::Cls, PoolingMode::Attention, PoolingMode::Det];
}

impl fmt::Display for PoolingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoolingMode::Mean => "mean",
            PoolingMode::Cls => "cls",
            PoolingMode::Attention => "attention",
            PoolingMode::Det => "det",
        })
    }
}

pub fn mask_to_flags(mask: &SegMask, cfg: &EncoderConfig) -> Result<PatchFlags> {
    let (h, w) = mask.0.dim();
    if (h, w) != (cfg.image_height, cfg.image_width) {
        return Err(DetPoolError::DimensionMismatch {
            what: "mask",
            expected: vec![cfg.image_height, cfg.image_width],
            found: vec![h, w],
        });
    }
    let p = cfg.patch_size;
    let (rows, cols) = cfg.grid();
    let mut flags = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let block = mask.0.slice(s![r * p..(r + 1) * p, c * p..(c + 1) * p]);
            let hits = block.iter().filter(|&&b| b).count();
            let flag = if cfg.patch_coverage == 0.0 {
                hits > 0
            } else {
                hits > 0 && hits as f64 >= cfg.patch_coverage * (p * p) as f64
            };
            flags.push(flag);
        }
    }
    Ok(PatchFlags(flags))
}

/// Allowed `(query, key)` pairs. Tokens attend only within their own class;
/// the CLS token, when present, is row 0 and counts as non-object.
pub fn build_attention_mask(flags: &PatchFlags, include_cls: bool) -> Result<Array2<bool>> {
    if flags.count() == 0 {
        return Err(DetPoolError::EmptyObject);
    }
    let classes: Vec<bool> = include_cls.then_some(false).into_iter().chain(flags.0.iter().copied()).collect();
    let n = classes.len();
    Ok(Array2::from_shape_fn((n, n), |(i, j)| classes[i] == classes[j]))
}

/// Learnable tensors of the encoder. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub patch_embed: Linear,
    pub cls: Option<Array1<f64>>,
    pub pool_query: Array1<f64>,
    pub stack: TransformerStack,
}

impl Parameters for EncoderParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.patch_embed.visit(&join(prefix, "patch_embed"), f);
        if let Some(cls) = &self.cls {
            f(&join(prefix, "cls"), cls.shape(), cls.as_slice().expect("contiguous"));
        }
        f(&join(prefix, "pool_query"), self.pool_query.shape(), self.pool_query.as_slice().expect("contiguous"));
        self.stack.visit(&join(prefix, "stack"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        self.patch_embed.visit_mut(&join(prefix, "patch_embed"), f);
        if let Some(cls) = &mut self.cls {
            let shape = cls.shape().to_vec();
            f(&join(prefix, "cls"), &shape, cls.as_slice_mut().expect("contiguous"));
        }
        let shape = self.pool_query.shape().to_vec();
        f(&join(prefix, "pool_query"), &shape, self.pool_query.as_slice_mut().expect("contiguous"));
        self.stack.visit_mut(&join(prefix, "stack"), f);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderState {
    pub config: EncoderConfig,
    pub seed: u64,
    pub params: EncoderParams,
    pos: Array2<f64>,
}

impl EncoderState {
    /// Deterministic random initialization.
    pub fn init(config: EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream(seed);
        let d = config.embed_dim;
        let patch_embed = Linear::new(config.patch_dim(), d, &mut rng);
        let bound = 1.0 / (d as f64).sqrt();
        let cls = config.include_cls.then(|| uniform_vec(d, bound, &mut rng));
        let pool_query = uniform_vec(d, bound, &mut rng);
        let stack = TransformerStack::new(d, config.layers, config.heads, config.mlp_ratio, &mut rng);
        let (rows, cols) = config.grid();
        let pos = sinusoidal_2d(rows, cols, d);
        Ok(Self { config, seed, params: EncoderParams { patch_embed, cls, pool_query, stack }, pos })
    }

    /// Positional encodings of the patch tokens, one row per patch.
    pub fn positional_encoding(&self) -> &Array2<f64> {
        &self.pos
    }

    pub fn to_blob(&self) -> Vec<u8> {
        self.params.to_table().to_bytes()
    }

    /// Loads a blob written by [`EncoderState::to_blob`] for the same config.
    pub fn from_blob(config: EncoderConfig, bytes: &[u8]) -> Result<Self> {
        let table = TensorTable::from_bytes(bytes)?;
        let mut state = Self::init(config, 0)?;
        state.params.load_table(&table)?;
        Ok(state)
    }

    fn check_image(&self, image: &Array3<f64>) -> Result<()> {
        let c = &self.config;
        let want = [c.image_height, c.image_width, c.channels];
        if image.shape() != want {
            return Err(DetPoolError::DimensionMismatch { what: "image", expected: want.to_vec(), found: image.shape().to_vec() });
        }
        Ok(())
    }
}

/// Image to `[patches, P*P*C]` rows.
pub fn patchify(image: &Array3<f64>, patch: usize) -> Array2<f64> {
    let (h, w, c) = image.dim();
    let (rows, cols) = (h / patch, w / patch);
    let mut out = Array2::zeros((rows * cols, patch * patch * c));
    for r in 0..rows {
        for q in 0..cols {
            let mut row = out.row_mut(r * cols + q);
            let mut k = 0;
            for dy in 0..patch {
                for dx in 0..patch {
                    for ch in 0..c {
                        row[k] = image[[r * patch + dy, q * patch + dx, ch]];
                        k += 1;
                    }
                }
            }
        }
    }
    out
}

fn unpatchify(patches: &Array2<f64>, h: usize, w: usize, c: usize, patch: usize) -> Array3<f64> {
    let cols = w / patch;
    let mut out = Array3::zeros((h, w, c));
    for (t, row) in patches.axis_iter(Axis(0)).enumerate() {
        let (r, q) = (t / cols, t % cols);
        let mut k = 0;
        for dy in 0..patch {
            for dx in 0..patch {
                for ch in 0..c {
                    out[[r * patch + dy, q * patch + dx, ch]] = row[k];
                    k += 1;
                }
            }
        }
    }
    out
}

/// Patch embeddings plus positional encoding, one row per patch (no CLS).
pub fn embed_patches(image: &Array3<f64>, state: &EncoderState) -> Result<Array2<f64>> {
    state.check_image(image)?;
    let patches = patchify(image, state.config.patch_size);
    Ok(state.params.patch_embed.forward(&patches) + &state.pos)
}

/// Runs the transformer stack on an arbitrary token sequence.
pub fn run_tokens(tokens: &Array2<f64>, state: &EncoderState, mask: Option<&Array2<bool>>) -> Array2<f64> {
    state.params.stack.forward(tokens, mask).0
}

/// Mean of the selected rows, summed in index order.
fn mean_rows(z: &Array2<f64>, rows: &[usize]) -> Array1<f64> {
    let mut acc = Array1::zeros(z.ncols());
    for &i in rows {
        acc += &z.row(i);
    }
    acc / rows.len() as f64
}

struct Forward {
    patches: Array2<f64>,
    cache: StackCache,
    z: Array2<f64>,
    pooled_rows: Vec<usize>,
    attn_weights: Option<Array1<f64>>,
    out: Array1<f64>,
}

fn forward(image: &Array3<f64>, state: &EncoderState, mode: PoolingMode, flags: Option<&PatchFlags>) -> Result<Forward> {
    state.check_image(image)?;
    let cfg = &state.config;
    let n = cfg.num_patches();
    let off = cfg.cls_offset();
    if let Some(f) = flags {
        if f.0.len() != n {
            return Err(DetPoolError::DimensionMismatch { what: "flags", expected: vec![n], found: vec![f.0.len()] });
        }
    }
    let mask = match mode {
        PoolingMode::Det => {
            let f = flags.ok_or(DetPoolError::MissingFlags(mode))?;
            let m = build_attention_mask(f, cfg.include_cls)?;
            cfg.mask_attention_in_det.then_some(m)
        }
        PoolingMode::Cls if !cfg.include_cls => return Err(DetPoolError::ClsUnavailable),
        _ => None,
    };
    let patches = patchify(image, cfg.patch_size);
    let tokens = state.params.patch_embed.forward(&patches) + &state.pos;
    let x = match &state.params.cls {
        Some(cls) => {
            let mut x = Array2::zeros((n + 1, cfg.embed_dim));
            x.row_mut(0).assign(cls);
            x.slice_mut(s![1.., ..]).assign(&tokens);
            x
        }
        None => tokens,
    };
    let (z, cache) = state.params.stack.forward(&x, mask.as_ref());
    if !z.iter().all(|v| v.is_finite()) {
        return Err(DetPoolError::NonFiniteActivation("transformer"));
    }
    let patch_rows: Vec<usize> = (off..off + n).collect();
    let (out, pooled_rows, attn_weights) = match mode {
        PoolingMode::Mean => (mean_rows(&z, &patch_rows), patch_rows, None),
        PoolingMode::Det => {
            let rows: Vec<usize> = flags.expect("checked").object_indices().iter().map(|i| i + off).collect();
            (mean_rows(&z, &rows), rows, None)
        }
        PoolingMode::Cls => (z.row(0).to_owned(), vec![0], None),
        PoolingMode::Attention => {
            let scores: Array1<f64> = patch_rows.iter().map(|&i| z.row(i).dot(&state.params.pool_query)).collect();
            let max = scores.fold(f64::MIN, |a, &b| a.max(b));
            let e = scores.mapv(|s| (s - max).exp());
            let w = &e / e.sum();
            let mut out = Array1::zeros(cfg.embed_dim);
            for (&i, &wi) in patch_rows.iter().zip(&w) {
                out.scaled_add(wi, &z.row(i));
            }
            (out, patch_rows, Some(w))
        }
    };
    if !out.iter().all(|v| v.is_finite()) {
        return Err(DetPoolError::NonFiniteActivation("pooling"));
    }
    Ok(Forward { patches, cache, z, pooled_rows, attn_weights, out })
}

/// Embedding of one image.
pub fn encode(image: &Array3<f64>, state: &EncoderState, mode: PoolingMode, flags: Option<&PatchFlags>) -> Result<Array1<f64>> {
    Ok(forward(image, state, mode, flags)?.out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrad {
    pub params: EncoderParams,
    pub image: Array3<f64>,
}

/// Gradients of `<upstream, encode(...)>` with respect to parameters and image.
pub fn encode_grad(
    image: &Array3<f64>,
    state: &EncoderState,
    mode: PoolingMode,
    flags: Option<&PatchFlags>,
    upstream: &Array1<f64>,
) -> Result<(Array1<f64>, EncoderGrad)> {
    let cfg = &state.config;
    if upstream.len() != cfg.embed_dim {
        return Err(DetPoolError::DimensionMismatch { what: "upstream", expected: vec![cfg.embed_dim], found: vec![upstream.len()] });
    }
    let fw = forward(image, state, mode, flags)?;
    let mut grad = state.params.zeroed();
    let mut dz = Array2::zeros(fw.z.raw_dim());
    match &fw.attn_weights {
        None => {
            let scale = 1.0 / fw.pooled_rows.len() as f64;
            for &i in &fw.pooled_rows {
                dz.row_mut(i).scaled_add(scale, upstream);
            }
        }
        Some(w) => {
            let dw: Array1<f64> = fw.pooled_rows.iter().map(|&i| upstream.dot(&fw.z.row(i))).collect();
            let c = w.dot(&dw);
            for (k, &i) in fw.pooled_rows.iter().enumerate() {
                let ds = w[k] * (dw[k] - c);
                let mut row = dz.row_mut(i);
                row.scaled_add(w[k], upstream);
                row.scaled_add(ds, &state.params.pool_query);
                grad.pool_query.scaled_add(ds, &fw.z.row(i));
            }
        }
    }
    let dx = state.params.stack.backward(&fw.cache, &dz, &mut grad.stack);
    let off = cfg.cls_offset();
    if let Some(g) = &mut grad.cls {
        *g += &dx.row(0);
    }
    let dtokens = dx.slice(s![off.., ..]).to_owned();
    let dpatches = state.params.patch_embed.backward(&fw.patches, &dtokens, &mut grad.patch_embed);
    let dimage = unpatchify(&dpatches, cfg.image_height, cfg.image_width, cfg.channels, cfg.patch_size);
    Ok((fw.out, EncoderGrad { params: grad, image: dimage }))
}

/// Pixels outside every flagged patch.
pub fn background_pixels(flags: &PatchFlags, cfg: &EncoderConfig) -> Array2<bool> {
    let p = cfg.patch_size;
    let cols = cfg.grid().1;
    Array2::from_shape_fn((cfg.image_height, cfg.image_width), |(y, x)| !flags.0[(y / p) * cols + x / p])
}

/// Random image with values in `[0, 1)`.
pub fn random_image<R: Rng + ?Sized>(cfg: &EncoderConfig, rng: &mut R) -> Array3<f64> {
    Array3::from_shape_fn((cfg.image_height, cfg.image_width, cfg.channels), |_| rng.random::<f64>())
}

/// Random axis-aligned object mask not aligned to the patch grid; covers at
/// least one pixel and leaves at least one patch unflagged.
pub fn random_rect_mask<R: Rng + ?Sized>(cfg: &EncoderConfig, rng: &mut R) -> SegMask {
    let (h, w) = (cfg.image_height, cfg.image_width);
    let y0 = rng.random_range(0..h / 2);
    let x0 = rng.random_range(0..w / 2);
    let y1 = rng.random_range(y0 + 1..=(y0 + h / 2).min(h));
    let x1 = rng.random_range(x0 + 1..=(x0 + w / 2).min(w));
    SegMask::from_rect(h, w, y0..y1, x0..x1)
}

pub mod checks;

#[cfg(test)]
mod tests {
    use super::*;

    fn state(cfg: EncoderConfig) -> EncoderState {
        EncoderState::init(cfg, 7).unwrap()
    }

    #[test]
    fn single_pixel_flags_first_patch() {
        let cfg = EncoderConfig::default();
        let mut m = SegMask(Array2::from_elem((32, 32), false));
        assert_eq!(mask_to_flags(&m, &cfg).unwrap().count(), 0);
        m.0[[0, 0]] = true;
        let f = mask_to_flags(&m, &cfg).unwrap();
        assert_eq!(f.object_indices(), vec![0]);
        let bad = SegMask(Array2::from_elem((8, 32), false));
        assert!(matches!(mask_to_flags(&bad, &cfg), Err(DetPoolError::DimensionMismatch { .. })));
    }

    #[test]
    fn coverage_threshold_drops_sparse_patches() {
        let cfg = EncoderConfig { patch_coverage: 0.5, ..EncoderConfig::default() };
        let m = SegMask::from_rect(32, 32, 0..4, 0..6);
        let f = mask_to_flags(&m, &cfg).unwrap();
        assert_eq!(f.object_indices(), vec![0, 1]);
        let m = SegMask::from_rect(32, 32, 0..4, 0..5);
        assert_eq!(mask_to_flags(&m, &cfg).unwrap().object_indices(), vec![0]);
    }

    #[test]
    fn attention_mask_blocks() {
        let f = PatchFlags(vec![true, false, true]);
        let m = build_attention_mask(&f, true).unwrap();
        assert_eq!(m.dim(), (4, 4));
        assert!(m[[0, 2]] && !m[[0, 1]] && m[[1, 3]] && !m[[1, 2]]);
        assert_eq!(build_attention_mask(&PatchFlags(vec![false; 3]), false), Err(DetPoolError::EmptyObject));
    }

    #[test]
    fn patchify_round_trip() {
        let cfg = EncoderConfig::default();
        let img = random_image(&cfg, &mut stream(1));
        let p = patchify(&img, 4);
        assert_eq!(p.dim(), (64, 48));
        assert_eq!(p[[1, 0]], img[[0, 4, 0]]);
        assert_eq!(p[[8, 5]], img[[4, 1, 2]]);
        assert_eq!(unpatchify(&p, 32, 32, 3, 4), img);
    }

    #[test]
    fn det_all_flags_equals_mean_bitwise() {
        let s = state(EncoderConfig::default());
        let img = random_image(&s.config, &mut stream(2));
        let all = PatchFlags(vec![true; 64]);
        let det = encode(&img, &s, PoolingMode::Det, Some(&all)).unwrap();
        let mean = encode(&img, &s, PoolingMode::Mean, None).unwrap();
        assert_eq!(det, mean);
    }

    #[test]
    fn mode_requirements() {
        let s = state(EncoderConfig::default());
        let img = random_image(&s.config, &mut stream(2));
        assert_eq!(encode(&img, &s, PoolingMode::Cls, None), Err(DetPoolError::ClsUnavailable));
        assert_eq!(encode(&img, &s, PoolingMode::Det, None), Err(DetPoolError::MissingFlags(PoolingMode::Det)));
        let none = PatchFlags(vec![false; 64]);
        assert_eq!(encode(&img, &s, PoolingMode::Det, Some(&none)), Err(DetPoolError::EmptyObject));
        let small = Array3::zeros((16, 16, 3));
        assert!(matches!(encode(&small, &s, PoolingMode::Mean, None), Err(DetPoolError::DimensionMismatch { .. })));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let s = state(EncoderConfig::gradient_check());
        let img = random_image(&s.config, &mut stream(3));
        let (_, g) = encode_grad(&img, &s, PoolingMode::Attention, None, &Array1::zeros(32)).unwrap();
        assert!(g.params.flatten().iter().all(|&v| v == 0.0));
        assert!(g.image.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn blob_round_trip() {
        let cfg = EncoderConfig { include_cls: true, ..EncoderConfig::gradient_check() };
        let s = state(cfg.clone());
        let back = EncoderState::from_blob(cfg, &s.to_blob()).unwrap();
        assert_eq!(back.params, s.params);
        let other = EncoderConfig { include_cls: false, ..EncoderConfig::gradient_check() };
        assert!(matches!(EncoderState::from_blob(other, &s.to_blob()), Err(DetPoolError::Tensor(TensorError::Unexpected(_)))));
    }

    #[test]
    fn pgm_round_trip_and_errors() {
        let m = SegMask::from_rect(6, 5, 1..3, 2..5);
        let bytes = m.to_pgm();
        assert_eq!(SegMask::from_pgm(&bytes).unwrap(), m);
        let with_comment = b"P5 # mask\n2 1\n# depth\n255\n\x00\x07";
        assert_eq!(SegMask::from_pgm(with_comment).unwrap().0.into_raw_vec_and_offset().0, vec![false, true]);
        assert!(SegMask::from_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(SegMask::from_pgm(b"P5\n2 2\n255\n\x00").is_err());
    }
}
