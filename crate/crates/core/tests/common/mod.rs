#![allow(dead_code)]

use std::collections::BTreeMap;

use speclen::dist::Dist;
use speclen::engine::exact::PathDist;
use speclen::rng::{splitmix64, Rng};
use speclen::tensor::Params;
use speclen::TokenId;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Relative error between an analytic gradient and central differences,
/// `‖a − n‖ / max(‖a‖ + ‖n‖, 1e-12)`, worst over the model's tensors.
pub fn gradient_error<M, L>(model: &M, zero: &M, loss_grad: L) -> f64
where
    M: Params<f64> + Clone,
    L: Fn(&M, &mut M) -> f64,
{
    let mut analytic = zero.clone();
    loss_grad(model, &mut analytic);
    let loss = |m: &M| {
        let mut scratch = zero.clone();
        loss_grad(m, &mut scratch)
    };

    let h = 1e-5;
    let n_tensors = model.tensors().len();
    let mut worst: f64 = 0.0;
    for ti in 0..n_tensors {
        let len = model.tensors()[ti].1.len();
        let (mut diff, mut norm_a, mut norm_n) = (0.0, 0.0, 0.0);
        for i in 0..len {
            let mut plus = model.clone();
            plus.tensors_mut()[ti].1[i] += h;
            let mut minus = model.clone();
            minus.tensors_mut()[ti].1[i] -= h;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let a = analytic.tensors()[ti].1[i];
            diff += (a - numeric) * (a - numeric);
            norm_a += a * a;
            norm_n += numeric * numeric;
        }
        let denom = (norm_a.sqrt() + norm_n.sqrt()).max(1e-12);
        worst = worst.max(diff.sqrt() / denom);
    }
    worst
}

pub fn random_dist(rng: &mut Rng, v: usize) -> Dist {
    let raw: Vec<f64> = (0..v).map(|_| rng.next_f64() + 1e-3).collect();
    Dist::normalize(&raw).unwrap()
}

/// A distribution that depends on the whole context through a hash. Some
/// entries are zeroed so disjoint supports are exercised too.
pub fn hashed_model(seed: u64, v: usize, sparse: bool) -> impl Fn(&[TokenId]) -> Dist {
    move |ctx: &[TokenId]| {
        let mut h = seed;
        for &t in ctx {
            h = splitmix64(h ^ (t as u64 + 1));
        }
        let mut rng = Rng::new(h);
        let mut raw: Vec<f64> = (0..v).map(|_| rng.next_f64() + 1e-3).collect();
        if sparse && v > 2 {
            let keep = rng.below(v);
            for (i, r) in raw.iter_mut().enumerate() {
                if i != keep && rng.next_f64() < 0.4 {
                    *r = 0.0;
                }
            }
        }
        Dist::normalize(&raw).unwrap()
    }
}

pub fn sample_corpus() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/sample_corpus.txt")
}

/// Pearson statistic and p-value of `counts` against `expected` probabilities,
/// pooling cells whose expected count is below 5.
pub fn chi_square(counts: &BTreeMap<Vec<u32>, usize>, expected: &PathDist, n: usize) -> (f64, f64) {
    let mut stat = 0.0;
    let mut cells = 0;
    let (mut pooled_obs, mut pooled_exp) = (0.0, 0.0);
    for (path, &p) in expected {
        let e = p * n as f64;
        let o = counts.get(path).copied().unwrap_or(0) as f64;
        if e < 5.0 {
            pooled_obs += o;
            pooled_exp += e;
        } else {
            stat += (o - e) * (o - e) / e;
            cells += 1;
        }
    }
    let unexpected: usize = counts
        .iter()
        .filter(|(path, _)| !expected.contains_key(*path))
        .map(|(_, &c)| c)
        .sum();
    if unexpected > 0 {
        return (f64::INFINITY, 0.0);
    }
    if pooled_exp > 0.0 {
        stat += (pooled_obs - pooled_exp) * (pooled_obs - pooled_exp) / pooled_exp.max(1e-300);
        cells += 1;
    }
    let dof = (cells - 1) as f64;
    (stat, ChiSquared::new(dof).unwrap().sf(stat))
}
