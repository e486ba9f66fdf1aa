//! Self-checks of the encoder, shared by the test suite and the CLI.

use ndarray::{Array1, Array2, Array3};
use rand::Rng;

use super::*;
use crate::nn::{check_gradient, GradCheckReport};

pub const INVARIANCE_TOL: f64 = 1e-12;
pub const CONTRAST_MIN: f64 = 1e-6;
pub const POSITION_MIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: impl Into<String>, passed: bool, detail: String) -> Self {
        Self { name: name.into(), passed, detail }
    }
}

fn max_abs_diff(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Replaces every background pixel with a fresh value in `[-5, 5)`.
pub fn perturb_background<R: Rng + ?Sized>(image: &Array3<f64>, background: &Array2<bool>, rng: &mut R) -> Array3<f64> {
    let mut out = image.clone();
    for ((y, x, _), v) in out.indexed_iter_mut() {
        if background[[y, x]] {
            *v = rng.random::<f64>() * 10.0 - 5.0;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvarianceResult {
    /// Largest Det-mode deviation over all perturbations.
    pub det_max_diff: f64,
    /// Largest Mean-mode deviation over the same perturbations.
    pub mean_max_diff: f64,
}

/// Det and Mean outputs under `trials` background perturbations of one
/// random image with a fixed mask (random unless given).
pub fn background_invariance(state: &EncoderState, seed: u64, trials: usize, mask: Option<&SegMask>) -> Result<InvarianceResult> {
    let mut rng = stream(seed);
    let cfg = &state.config;
    let image = random_image(cfg, &mut rng);
    let mask = match mask {
        Some(m) => m.clone(),
        None => random_rect_mask(cfg, &mut rng),
    };
    let flags = mask_to_flags(&mask, cfg)?;
    if flags.count() == 0 {
        return Err(DetPoolError::EmptyObject);
    }
    let background = background_pixels(&flags, cfg);
    let det0 = encode(&image, state, PoolingMode::Det, Some(&flags))?;
    let mean0 = encode(&image, state, PoolingMode::Mean, None)?;
    let mut res = InvarianceResult { det_max_diff: 0.0, mean_max_diff: 0.0 };
    for _ in 0..trials {
        let img = perturb_background(&image, &background, &mut rng);
        let det = encode(&img, state, PoolingMode::Det, Some(&flags))?;
        let mean = encode(&img, state, PoolingMode::Mean, None)?;
        res.det_max_diff = res.det_max_diff.max(max_abs_diff(&det, &det0));
        res.mean_max_diff = res.mean_max_diff.max(max_abs_diff(&mean, &mean0));
    }
    Ok(res)
}

/// Largest deviation between Det pooling with one flagged patch and the stack
/// run on that patch token alone, over `trials` random patches.
pub fn single_token_deviation(state: &EncoderState, seed: u64, trials: usize) -> Result<f64> {
    let mut rng = stream(seed);
    let cfg = &state.config;
    let n = cfg.num_patches();
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let image = random_image(cfg, &mut rng);
        let p = rng.random_range(0..n);
        let mut flags = PatchFlags(vec![false; n]);
        flags.0[p] = true;
        let det = encode(&image, state, PoolingMode::Det, Some(&flags))?;
        let tokens = embed_patches(&image, state)?;
        let single = tokens.slice(ndarray::s![p..p + 1, ..]).to_owned();
        let oracle = run_tokens(&single, state, None).row(0).to_owned();
        worst = worst.max(max_abs_diff(&det, &oracle));
    }
    Ok(worst)
}

/// Counts trials in which shifting object content and flags one patch to
/// the right changes the Det output by more than [`POSITION_MIN`].
pub fn position_sensitivity(state: &EncoderState, seed: u64, trials: usize) -> Result<usize> {
    let mut rng = stream(seed);
    let cfg = &state.config;
    let (rows, cols) = cfg.grid();
    let p = cfg.patch_size;
    let mut changed = 0;
    for _ in 0..trials {
        let r0 = rng.random_range(0..rows);
        let c0 = rng.random_range(0..cols - 1);
        let h = rng.random_range(1..=rows - r0);
        let w = rng.random_range(1..=(cols - 1 - c0));
        let object = random_image(cfg, &mut rng);
        let place = |shift: usize| {
            let mut img = Array3::zeros(object.raw_dim());
            let mut flags = PatchFlags(vec![false; rows * cols]);
            for r in r0..r0 + h {
                for c in c0..c0 + w {
                    flags.0[r * cols + c + shift] = true;
                    for dy in 0..p {
                        for dx in 0..p {
                            for ch in 0..cfg.channels {
                                img[[r * p + dy, (c + shift) * p + dx, ch]] = object[[r * p + dy, c * p + dx, ch]];
                            }
                        }
                    }
                }
            }
            (img, flags)
        };
        let (a, fa) = place(0);
        let (b, fb) = place(1);
        let ea = encode(&a, state, PoolingMode::Det, Some(&fa))?;
        let eb = encode(&b, state, PoolingMode::Det, Some(&fb))?;
        if max_abs_diff(&ea, &eb) > POSITION_MIN {
            changed += 1;
        }
    }
    Ok(changed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGradCheck {
    pub params: GradCheckReport,
    pub image: GradCheckReport,
    /// Largest |gradient| over background pixels (Det mode only).
    pub background_max: Option<f64>,
}

/// Finite-difference check of every parameter and pixel for one mode.
pub fn gradient_check(state: &EncoderState, mode: PoolingMode, seed: u64) -> Result<EncoderGradCheck> {
    let mut rng = stream(seed);
    let cfg = &state.config;
    let image = random_image(cfg, &mut rng);
    let flags = mask_to_flags(&random_rect_mask(cfg, &mut rng), cfg)?;
    let flags = (mode == PoolingMode::Det).then_some(flags);
    let upstream: Array1<f64> = (0..cfg.embed_dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let (_, grad) = encode_grad(&image, state, mode, flags.as_ref(), &upstream)?;
    let loss = |s: &EncoderState, img: &Array3<f64>| {
        encode(img, s, mode, flags.as_ref()).map(|e| e.dot(&upstream)).unwrap_or(f64::NAN)
    };
    let params = check_gradient(
        |x| {
            let mut s = state.clone();
            s.params.assign_flat(x);
            loss(&s, &image)
        },
        &state.params.flatten(),
        &grad.params.flatten(),
    );
    let shape = image.raw_dim();
    let image_report = check_gradient(
        |x| loss(state, &Array3::from_shape_vec(shape, x.to_vec()).expect("shape")),
        image.as_slice().expect("contiguous"),
        grad.image.as_slice().expect("contiguous"),
    );
    let background_max = flags.as_ref().map(|f| {
        let bg = background_pixels(f, cfg);
        grad.image.indexed_iter().filter(|((y, x, _), _)| bg[[*y, *x]]).map(|(_, v)| v.abs()).fold(0.0, f64::max)
    });
    Ok(EncoderGradCheck { params, image: image_report, background_max })
}

/// Full suite: invariance with Mean contrast, single-token oracle, position
/// sensitivity, Det/Mean agreement with all flags, and gradient checks for
/// every pooling mode on `grad_config`.
pub fn run_all(config: &EncoderConfig, grad_config: &EncoderConfig, seed: u64, mask: Option<&SegMask>) -> Result<Vec<CheckOutcome>> {
    let state = EncoderState::init(config.clone(), seed)?;
    let mut out = Vec::new();

    let inv = background_invariance(&state, hash_seed(seed, 1), 100, mask)?;
    out.push(CheckOutcome::new(
        "background_invariance",
        inv.det_max_diff <= INVARIANCE_TOL,
        format!("det max diff {:.3e} over 100 perturbations", inv.det_max_diff),
    ));
    out.push(CheckOutcome::new(
        "mean_pooling_contrast",
        inv.mean_max_diff > CONTRAST_MIN,
        format!("mean max diff {:.3e}", inv.mean_max_diff),
    ));

    let dev = single_token_deviation(&state, hash_seed(seed, 2), 20)?;
    out.push(CheckOutcome::new("single_token_oracle", dev <= INVARIANCE_TOL, format!("max diff {dev:.3e}")));

    let moved = position_sensitivity(&state, hash_seed(seed, 3), 100)?;
    out.push(CheckOutcome::new("position_sensitivity", moved >= 95, format!("{moved}/100 shifted outputs differ")));

    let plain = EncoderState::init(EncoderConfig { include_cls: false, ..config.clone() }, seed)?;
    let img = random_image(&plain.config, &mut stream(hash_seed(seed, 4)));
    let all = PatchFlags(vec![true; plain.config.num_patches()]);
    let same = encode(&img, &plain, PoolingMode::Det, Some(&all))? == encode(&img, &plain, PoolingMode::Mean, None)?;
    out.push(CheckOutcome::new("det_all_flags_equals_mean", same, format!("bitwise equal: {same}")));

    let gstate = EncoderState::init(grad_config.clone(), seed)?;
    for mode in PoolingMode::ALL {
        if mode == PoolingMode::Cls && !grad_config.include_cls {
            continue;
        }
        let g = gradient_check(&gstate, mode, hash_seed(seed, 5))?;
        let ok = g.params.passed() && g.image.passed();
        out.push(CheckOutcome::new(
            format!("gradient_{mode}"),
            ok,
            format!(
                "{} params, {} pixels, {} failures, max abs err {:.3e}",
                g.params.checked,
                g.image.checked,
                g.params.failures + g.image.failures,
                g.params.max_abs_err.max(g.image.max_abs_err)
            ),
        ));
        if let Some(bg) = g.background_max {
            out.push(CheckOutcome::new("det_background_gradient_zero", bg == 0.0, format!("max |grad| {bg:.3e}")));
        }
    }
    Ok(out)
}

fn hash_seed(seed: u64, k: u64) -> u64 {
    crate::rng::hash64(seed, k)
}
