use rand_distr::{Distribution, Normal};

use super::DenoiserConfig;
use crate::numeric::{ParamStore, Tensor};
use crate::rng::{self, domain};

#[derive(Clone, Copy)]
enum Init {
    Zeros,
    Ones,
    /// Normal with standard deviation `1 / sqrt(fan_in)`.
    FanIn(usize),
}

fn specs(cfg: &DenoiserConfig) -> Vec<(String, Vec<usize>, Init)> {
    let d = cfg.d;
    let p2 = cfg.token_size * cfg.token_size;
    let c1 = cfg.enc_hidden();
    let mut s: Vec<(String, Vec<usize>, Init)> = Vec::new();
    let mut push = |name: &str, shape: &[usize], init: Init| s.push((name.to_string(), shape.to_vec(), init));
    push("target_in.w", &[p2, d], Init::FanIn(p2));
    push("target_in.b", &[d], Init::Zeros);
    push("enc.conv1.w", &[c1, 1, 3, 3], Init::FanIn(9));
    push("enc.conv1.b", &[c1], Init::Zeros);
    push("enc.conv2.w", &[d, c1, 3, 3], Init::FanIn(9 * c1));
    push("enc.conv2.b", &[d], Init::Zeros);
    push("ref_norm.g", &[d], Init::Ones);
    push("ref_norm.b", &[d], Init::Zeros);
    push("time_embed.w", &[d, d], Init::FanIn(d));
    push("time_embed.b", &[d], Init::Zeros);
    for l in 0..cfg.blocks {
        for ln in ["ln1", "ln2", "ln3"] {
            push(&format!("blocks.{l}.{ln}.g"), &[d], Init::Ones);
            push(&format!("blocks.{l}.{ln}.b"), &[d], Init::Zeros);
        }
        for kind in ["self", "cross"] {
            for proj in ["q", "k", "v"] {
                push(&format!("blocks.{l}.{kind}.{proj}"), &[d, d], Init::FanIn(d));
            }
            push(&format!("blocks.{l}.{kind}.o"), &[d, d], Init::Zeros);
        }
        push(&format!("blocks.{l}.ff.w1"), &[d, 4 * d], Init::FanIn(d));
        push(&format!("blocks.{l}.ff.b1"), &[4 * d], Init::Zeros);
        push(&format!("blocks.{l}.ff.w2"), &[4 * d, d], Init::Zeros);
        push(&format!("blocks.{l}.ff.b2"), &[d], Init::Zeros);
    }
    push("final_norm.g", &[d], Init::Ones);
    push("final_norm.b", &[d], Init::Zeros);
    push("out.w", &[d, p2], Init::FanIn(d));
    push("out.b", &[p2], Init::Zeros);
    s
}

pub(super) fn param_shapes(cfg: &DenoiserConfig) -> Vec<(String, Vec<usize>)> {
    specs(cfg).into_iter().map(|(n, s, _)| (n, s)).collect()
}

pub(super) fn initial_params(cfg: &DenoiserConfig) -> ParamStore {
    let mut store = ParamStore::new();
    for (i, (name, shape, init)) in specs(cfg).into_iter().enumerate() {
        let t = match init {
            Init::Zeros => Tensor::zeros(&shape),
            Init::Ones => Tensor::full(&shape, 1.0),
            Init::FanIn(fan_in) => {
                let normal = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).unwrap();
                let mut rng = rng::stream(cfg.init_seed, domain::INIT, i as u64, 0);
                Tensor::from_fn(&shape, |_| normal.sample(&mut rng))
            }
        };
        store.insert(name, t);
    }
    store
}
