use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::numeric::{grad_check, GradCheckConfig};
use crate::patch_grid::{reference_set, GridShape, ReferenceMode};

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(0.0..1.0))
}

fn refs_for(cfg: &DenoiserConfig, n: usize, grid: GridShape, center: PatchIndex, mode: ReferenceMode, rng: &mut ChaCha8Rng) -> ReferencePatchSet {
    let h = cfg.patch_size;
    let hist: Vec<Tensor> = (0..grid.len()).map(|_| random_tensor(&[h, h, n], rng)).collect();
    reference_set(center, grid, &hist, mode).unwrap()
}

fn randomize(den: &mut Denoiser, seed: u64, std: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in den.params_mut().tensors_mut() {
        for v in t.data_mut() {
            *v += rng.gen_range(-std..std);
        }
    }
}

fn small(variant: SpenVariant) -> DenoiserConfig {
    DenoiserConfig { d: 32, blocks: 2, heads: 2, variant, ..Default::default() }
}

#[test]
fn target_token_count() {
    let den = Denoiser::new(DenoiserConfig::default()).unwrap();
    assert_eq!(den.target_token_count(), 80);
    let x = Tensor::zeros(&[16, 16, 5]);
    let tm = den.target_tokens(&x, 5, GridShape { rows: 4, cols: 4 }.index(0, 0)).unwrap();
    assert_eq!(tm.tokens.shape(), &[80, 64]);
    assert_eq!(tm.time_index[0], 5);
    assert_eq!(tm.time_index[79], 9);
}

#[test]
fn space_to_depth_is_invertible() {
    let den = Denoiser::new(DenoiserConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random_tensor(&[16, 16, 5], &mut rng);
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let t = den.space_to_depth(&mut g, xv).unwrap();
    assert_eq!(g.value(t).shape(), &[80, 16]);
    // first token holds the top-left 4x4 block of step 0
    assert_eq!(g.value(t).get(&[0, 5]), x.get(&[1, 1, 0]));
    let back = den.depth_to_space(&mut g, t).unwrap();
    assert_eq!(g.value(back), &x);
}

#[test]
fn whole_patch_tokens() {
    let cfg = DenoiserConfig { token_size: 16, ..Default::default() };
    let den = Denoiser::new(cfg).unwrap();
    assert_eq!(den.target_token_count(), 5);
}

#[test]
fn reference_token_counts() {
    let cfg = DenoiserConfig::default();
    let den = Denoiser::new(cfg.clone()).unwrap();
    let grid = GridShape { rows: 4, cols: 4 };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let refs = refs_for(&cfg, 5, grid, grid.index(1, 2), ReferenceMode::Neighborhood, &mut rng);
    let toks = den.reference_tokens(&refs).unwrap();
    assert_eq!(toks.len(), 9);
    assert!(toks.iter().all(|t| t.tokens.shape() == [80, 64]));
    assert_eq!(toks.iter().map(|t| t.tokens.shape()[0]).sum::<usize>(), 720);
    assert_eq!(toks[0].pos_index[0], 6);
    assert_eq!(toks[1].pos_index[0], 2);
    assert_eq!(toks[0].time_index[16], 1);
}

#[test]
fn zero_patch_zero_tokens() {
    let cfg = DenoiserConfig::default();
    let den = Denoiser::new(cfg).unwrap();
    let grid = GridShape { rows: 1, cols: 1 };
    let refs = reference_set(grid.index(0, 0), grid, &[Tensor::zeros(&[16, 16, 5])], ReferenceMode::Neighborhood).unwrap();
    for t in den.reference_tokens(&refs).unwrap() {
        assert!(t.tokens.data().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn single_token_attention_returns_projected_value() {
    let cfg = DenoiserConfig { heads: 1, ..small(SpenVariant::Full) };
    let mut den = Denoiser::new(cfg).unwrap();
    randomize(&mut den, 3, 0.2);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let q = TokenMatrix { tokens: random_tensor(&[1, 32], &mut rng), pos_index: vec![3], time_index: vec![6], origin: TokenOrigin::Target };
    let kv = TokenMatrix { tokens: random_tensor(&[1, 32], &mut rng), pos_index: vec![7], time_index: vec![2], origin: TokenOrigin::Reference };
    let out = den.attend(0, AttentionKind::CrossAttention, &q, &[kv.clone()]).unwrap();
    let p = den.params();
    let v = kernels::matmul(&kv.tokens, p.get("blocks.0.cross.v").unwrap()).unwrap();
    let expect = kernels::matmul(&v, p.get("blocks.0.cross.o").unwrap()).unwrap();
    assert!(out.max_abs_diff(&expect) < 1e-12);
}

/// Swaps the histories of two reference slots while the slots keep their positions.
fn swap_contents(refs: &ReferencePatchSet, a: usize, b: usize) -> ReferencePatchSet {
    let mut order: Vec<usize> = (0..refs.len()).collect();
    order.swap(a, b);
    let moved = refs.permuted(&order);
    ReferencePatchSet { patches: moved.patches, indices: refs.indices.clone() }
}

#[test]
fn cross_attention_permutation_signature() {
    let grid = GridShape { rows: 4, cols: 4 };
    let center = grid.index(1, 1);
    for (variant, invariant) in [(SpenVariant::NoEmbd, true), (SpenVariant::Full, false)] {
        let cfg = small(variant);
        let mut den = Denoiser::new(cfg.clone()).unwrap();
        randomize(&mut den, 5, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let refs = refs_for(&cfg, 3, grid, center, ReferenceMode::Neighborhood, &mut rng);
        let x = random_tensor(&[16, 16, 5], &mut rng);
        let q = den.target_tokens(&x, 3, center).unwrap();
        let base = den.attend(0, AttentionKind::CrossAttention, &q, &den.reference_tokens(&refs).unwrap()).unwrap();
        let swapped = swap_contents(&refs, 2, 6);
        let other = den.attend(0, AttentionKind::CrossAttention, &q, &den.reference_tokens(&swapped).unwrap()).unwrap();
        let diff = base.max_abs_diff(&other);
        if invariant {
            assert!(diff <= 1e-9, "{variant:?}: {diff}");
        } else {
            assert!(diff > 1e-6, "{variant:?}: {diff}");
        }
    }
}

#[test]
fn predict_noise_shape_closure() {
    for &n in &[1, 3, 5] {
        for &m in &[1, 3, 5] {
            for mode in [ReferenceMode::Neighborhood, ReferenceMode::FullGrid] {
                let grid = if mode == ReferenceMode::FullGrid { GridShape { rows: 1, cols: 1 } } else { GridShape { rows: 2, cols: 2 } };
                let cfg = DenoiserConfig { m, ..small(SpenVariant::Full) };
                let den = Denoiser::new(cfg.clone()).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64((n * 10 + m) as u64);
                let refs = refs_for(&cfg, n, grid, grid.index(0, 0), mode, &mut rng);
                let x = random_tensor(&[16, 16, m], &mut rng);
                let eps = den.predict_noise(&x, 3, &refs, grid.index(0, 0)).unwrap();
                assert_eq!(eps.shape(), &[16, 16, m]);
            }
        }
    }
}

#[test]
fn zero_output_projection_predicts_zero() {
    let cfg = small(SpenVariant::Full);
    let mut den = Denoiser::new(cfg.clone()).unwrap();
    randomize(&mut den, 7, 0.1);
    den.params_mut().get_mut("out.w").unwrap().data_mut().fill(0.0);
    den.params_mut().get_mut("out.b").unwrap().data_mut().fill(0.0);
    let grid = GridShape { rows: 2, cols: 2 };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let refs = refs_for(&cfg, 5, grid, grid.index(1, 0), ReferenceMode::Neighborhood, &mut rng);
    let eps = den.predict_noise(&random_tensor(&[16, 16, 5], &mut rng), 10, &refs, grid.index(1, 0)).unwrap();
    assert!(eps.data().iter().all(|&v| v == 0.0));
}

#[test]
fn residual_identity_at_initialization() {
    let cfg = small(SpenVariant::Full);
    let den = Denoiser::new(cfg.clone()).unwrap();
    let grid = GridShape { rows: 2, cols: 2 };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let refs = refs_for(&cfg, 5, grid, grid.index(0, 1), ReferenceMode::Neighborhood, &mut rng);
    let mut g = Graph::new();
    let f = den.forward(&mut g, &random_tensor(&[16, 16, 5], &mut rng), 4, &refs, grid.index(0, 1)).unwrap();
    assert_eq!(g.value(f.stream_in), g.value(f.stream_out));
}

#[test]
fn reference_order_invariance_without_codes() {
    let grid = GridShape { rows: 3, cols: 3 };
    let center = grid.index(1, 1);
    for (variant, invariant) in [(SpenVariant::NoEmbd, true), (SpenVariant::Full, false)] {
        let cfg = small(variant);
        let mut den = Denoiser::new(cfg.clone()).unwrap();
        randomize(&mut den, 10, 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let refs = refs_for(&cfg, 2, grid, center, ReferenceMode::Neighborhood, &mut rng);
        let x = random_tensor(&[16, 16, 5], &mut rng);
        let a = den.predict_noise(&x, 5, &refs, center).unwrap();
        let b = den.predict_noise(&x, 5, &swap_contents(&refs, 1, 5), center).unwrap();
        let diff = a.max_abs_diff(&b);
        assert_eq!(diff <= 1e-9, invariant, "{variant:?}: {diff}");
        if !invariant {
            assert!(diff > 1e-6);
        }
    }
}

#[test]
fn forward_is_deterministic() {
    let cfg = small(SpenVariant::TimeEmbd);
    let den = Denoiser::new(cfg.clone()).unwrap();
    let grid = GridShape { rows: 2, cols: 2 };
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let refs = refs_for(&cfg, 5, grid, grid.index(1, 1), ReferenceMode::Neighborhood, &mut rng);
    let x = random_tensor(&[16, 16, 5], &mut rng);
    let a = den.predict_noise(&x, 50, &refs, grid.index(1, 1)).unwrap();
    let b = den.predict_noise(&x, 50, &refs, grid.index(1, 1)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn config_errors() {
    assert!(Denoiser::new(DenoiserConfig { d: 24, ..Default::default() }).is_err());
    assert!(Denoiser::new(DenoiserConfig { token_size: 3, ..Default::default() }).is_err());
    assert!(Denoiser::new(DenoiserConfig { heads: 3, ..Default::default() }).is_err());
    let den = Denoiser::new(DenoiserConfig::default()).unwrap();
    let mut params = den.params().clone();
    params.insert("stray", Tensor::zeros(&[1]));
    assert!(Denoiser::from_params(DenoiserConfig::default(), params).is_err());
}

/// Two target tokens, one reference token, d = 16, two blocks.
pub(crate) fn toy_config() -> DenoiserConfig {
    DenoiserConfig { patch_size: 4, token_size: 4, d: 16, blocks: 2, heads: 1, m: 2, variant: SpenVariant::Full, ..Default::default() }
}

#[test]
fn toy_denoiser_gradients() {
    let cfg = toy_config();
    let mut den = Denoiser::new(cfg.clone()).unwrap();
    randomize(&mut den, 13, 0.3);
    let grid = GridShape { rows: 2, cols: 2 };
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let hist: Vec<Tensor> = (0..4).map(|_| random_tensor(&[4, 4, 1], &mut rng)).collect();
    let refs = reference_set(grid.index(1, 1), grid, &hist, ReferenceMode::FullGrid).unwrap();
    let x = random_tensor(&[4, 4, 2], &mut rng);
    assert_eq!(den.target_token_count(), 2);
    let report = grad_check(
        den.params(),
        |g, p| {
            let d = Denoiser::from_params(cfg.clone(), p.clone())?;
            let f = d.forward(g, &x, 7, &refs, grid.index(1, 1))?;
            let zero = g.constant(Tensor::zeros(g.value(f.noise).shape()));
            g.mse(f.noise, zero)
        },
        &GradCheckConfig::default(),
    )
    .unwrap();
    assert_eq!(report.params.len(), den.params().len());
}
