mod common;

use common::gradient_error;
use speclen::ldlp::HeadKind;
use speclen::rng::Rng;
use speclen::{DraftHead, LdlpModel, LmDims, TargetLm, TokenId};

const TOLERANCE: f64 = 1e-4;

fn dims() -> LmDims {
    LmDims {
        window: 3,
        embed: 4,
        feature: 6,
        vocab: 7,
    }
}

fn tokens(rng: &mut Rng, n: usize, vocab: usize) -> Vec<TokenId> {
    (0..n).map(|_| rng.below(vocab) as TokenId).collect()
}

#[test]
fn target_lm_gradient() {
    let d = dims();
    let mut rng = Rng::new(11);
    let lm = TargetLm::<f64>::init(d, &mut rng);
    let seq = tokens(&mut rng, 12, d.vocab);
    // Ten positions, the first ones reaching into the pad region.
    let err = gradient_error(&lm, &TargetLm::zeros(d), |m, g| {
        (0..10).map(|pos| m.loss_grad(&seq, pos, g)).sum()
    });
    assert!(err <= TOLERANCE, "relative error {err:e}");
}

#[test]
fn draft_head_gradient() {
    let d = dims();
    let mut rng = Rng::new(12);
    let lm = TargetLm::<f64>::init(d, &mut rng);
    let dh = DraftHead::<f64>::init(d, &mut rng);
    let seq = tokens(&mut rng, 12, d.vocab);
    let samples: Vec<_> = (0..10)
        .map(|j| {
            let f = lm.feature_at(&seq, j as isize - 1);
            let next = lm.feature_at(&seq, j as isize);
            let target = lm.head_dist(&next);
            (seq[j], f, next, target)
        })
        .collect();
    for alpha in [0.0, 1.0, 2.5] {
        let err = gradient_error(&dh, &DraftHead::zeros(d), |m, g| {
            samples
                .iter()
                .map(|(t, f, next, target)| m.loss_grad(&lm, *t, f, next, target, alpha, g))
                .sum()
        });
        assert!(err <= TOLERANCE, "alpha {alpha}: relative error {err:e}");
    }
}

fn ldlp_batch(rng: &mut Rng, d: LmDims) -> Vec<(Vec<f64>, Vec<f64>, usize)> {
    (0..10)
        .map(|i| {
            let e = (0..d.embed).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let f = (0..d.feature).map(|_| rng.uniform(-1.0, 1.0)).collect();
            (e, f, 1 + i % 5)
        })
        .collect()
}

#[test]
fn ldlp_regression_gradient() {
    let d = dims();
    let mut rng = Rng::new(13);
    let model = LdlpModel::<f64>::init(d, HeadKind::Regression, 1, &mut rng);
    let batch = ldlp_batch(&mut rng, d);
    for (e, f, label) in &batch {
        let raw = model.raw(e, f).unwrap();
        assert!(
            (raw - *label as f64).abs() > 1e-3,
            "sample sits on the loss kink"
        );
    }
    for lambda in [1.0, 2.0] {
        let err = gradient_error(
            &model,
            &LdlpModel::zeros(d, HeadKind::Regression, 1),
            |m, g| {
                batch
                    .iter()
                    .map(|(e, f, l)| m.loss_grad(e, f, *l, lambda, g))
                    .sum()
            },
        );
        assert!(err <= TOLERANCE, "lambda {lambda}: relative error {err:e}");
    }
}

#[test]
fn ldlp_classification_gradient() {
    let d = dims();
    let mut rng = Rng::new(14);
    let n_out = 9;
    let model = LdlpModel::<f64>::init(d, HeadKind::Classification, n_out, &mut rng);
    let batch = ldlp_batch(&mut rng, d);
    let err = gradient_error(
        &model,
        &LdlpModel::zeros(d, HeadKind::Classification, n_out),
        |m, g| {
            batch
                .iter()
                .map(|(e, f, l)| m.loss_grad(e, f, *l, 2.0, g))
                .sum()
        },
    );
    assert!(err <= TOLERANCE, "relative error {err:e}");
}
