use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, ParamStore, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    pub rel_tol: f64,
    pub step: f64,
    /// Coordinates sampled per parameter; smaller parameters are checked exhaustively.
    pub coords_per_param: usize,
    /// Denominator floor for the relative error, so vanishing gradients compare absolutely.
    pub abs_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-3, step: 1e-4, coords_per_param: 32, abs_floor: 1e-6, seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub coords_checked: usize,
    pub worst_coord: usize,
    pub worst_rel_err: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.worst_rel_err.total_cmp(&b.worst_rel_err))
    }
}

/// Compares reverse-mode gradients of a scalar loss against central differences.
///
/// `loss_fn` rebuilds the forward pass from scratch for every evaluation.
pub fn grad_check<F>(store: &ParamStore, loss_fn: F, cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut g = Graph::new();
    let loss = loss_fn(&mut g, store)?;
    g.backward(loss)?;
    let analytic = g.param_grads(store);

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let l = loss_fn(&mut g, s)?;
        Ok(g.value(l).data()[0])
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut work = store.clone();
    let mut report = GradCheckReport { params: Vec::new() };
    let mut first_failure = None;

    for (pi, name) in store.names().iter().enumerate() {
        let n = store.tensors()[pi].len();
        let coords: Vec<usize> = if n <= cfg.coords_per_param {
            (0..n).collect()
        } else {
            let mut c = sample(&mut rng, n, cfg.coords_per_param).into_vec();
            c.sort_unstable();
            c
        };
        let mut check = ParamCheck { name: name.clone(), coords_checked: coords.len(), worst_coord: 0, worst_rel_err: 0.0 };
        for &c in &coords {
            let orig = store.tensors()[pi].data()[c];
            work.tensors_mut()[pi].data_mut()[c] = orig + cfg.step;
            let plus = eval(&work)?;
            work.tensors_mut()[pi].data_mut()[c] = orig - cfg.step;
            let minus = eval(&work)?;
            work.tensors_mut()[pi].data_mut()[c] = orig;

            let numeric = (plus - minus) / (2.0 * cfg.step);
            let a = analytic[pi].data()[c];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(cfg.abs_floor);
            if rel > check.worst_rel_err {
                check.worst_rel_err = rel;
                check.worst_coord = c;
            }
            if rel > cfg.rel_tol && first_failure.is_none() {
                first_failure = Some(Error::GradCheck {
                    param: name.clone(),
                    coord: c,
                    analytic: a,
                    numeric,
                    rel_err: rel,
                });
            }
        }
        report.params.push(check);
    }
    match first_failure {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Tensor;

    #[test]
    fn catches_a_wrong_gradient() {
        // sum(p) evaluated honestly, but the graph is asked about a different
        // loss than the one perturbed: emulate by scaling inside only on the
        // analytic pass via a stateful closure.
        let mut store = ParamStore::new();
        store.insert("p", Tensor::full(&[3], 1.0));
        let calls = std::cell::Cell::new(0);
        let res = grad_check(
            &store,
            |g, s| {
                calls.set(calls.get() + 1);
                let p = g.param(s, "p");
                let sum = g.sum(p)?;
                if calls.get() == 1 {
                    g.scale(sum, 2.0)
                } else {
                    Ok(sum)
                }
            },
            &GradCheckConfig::default(),
        );
        assert!(matches!(res, Err(Error::GradCheck { ref param, .. }) if param == "p"));
    }

    #[test]
    fn sum_loss_passes() {
        let mut store = ParamStore::new();
        store.insert("p", Tensor::from_fn(&[40], |i| i as f64 * 0.1));
        let r = grad_check(
            &store,
            |g, s| {
                let p = g.param(s, "p");
                g.sum(p)
            },
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert_eq!(r.params[0].coords_checked, 32);
        assert!(r.worst().unwrap().worst_rel_err < 1e-9);
    }
}
