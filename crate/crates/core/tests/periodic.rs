//! End-to-end behaviour on perfectly periodic text, where the correct next
//! token is known exactly and a trained draft head can mirror the target.

use std::collections::HashMap;

use speclen::engine::{decode, DecodeConfig, LengthPolicy};
use speclen::ldlp::collect_dataset;
use speclen::lm::{train_draft, train_lm, DraftTrainConfig, Schedule, TrainConfig};
use speclen::oracle::opt_k;
use speclen::rng::Rng;
use speclen::{
    build_char_vocab, verify_greedy, DraftHead, LmDims, Sampling, TargetLm, TokenId, TokenSeq,
};

fn train_cfg(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.2,
        epochs,
        batch_size: 16,
        seed,
        schedule: Schedule::Cosine,
    }
}

fn dims(window: usize, vocab: usize) -> LmDims {
    LmDims {
        window,
        embed: 8,
        feature: 16,
        vocab,
    }
}

fn periodic(pattern: &str, repeats: usize) -> (speclen::Vocab, TokenSeq) {
    let text = pattern.repeat(repeats);
    let vocab = build_char_vocab(&text).unwrap();
    let tokens = vocab.encode(&text).unwrap();
    (vocab, tokens)
}

/// Most frequent successor of every `window`-token context, counted directly.
fn successor_modes(tokens: &[TokenId], window: usize) -> HashMap<Vec<TokenId>, TokenId> {
    let mut counts: HashMap<Vec<TokenId>, HashMap<TokenId, usize>> = HashMap::new();
    for i in window..tokens.len() {
        *counts
            .entry(tokens[i - window..i].to_vec())
            .or_default()
            .entry(tokens[i])
            .or_default() += 1;
    }
    counts
        .into_iter()
        .map(|(ctx, next)| {
            let mode = next
                .into_iter()
                .max_by_key(|&(t, c)| (c, std::cmp::Reverse(t)))
                .unwrap()
                .0;
            (ctx, mode)
        })
        .collect()
}

fn argmax_after(lm: &TargetLm<f64>, prefix: &[TokenId]) -> TokenId {
    lm.forward(prefix).unwrap().dist.argmax()
}

#[test]
fn alternating_corpus_predicts_b_after_a() {
    let (vocab, tokens) = periodic("ab", 400);
    let (lm, _) = train_lm::<f64>(&tokens, dims(4, vocab.len()), &train_cfg(6, 1)).unwrap();
    let modes = successor_modes(&tokens, 1);
    let a = vocab.id('a').unwrap();
    assert_eq!(modes[&vec![a]], vocab.id('b').unwrap());
    assert_eq!(argmax_after(&lm, &[a]), modes[&vec![a]]);
}

#[test]
fn window_two_predicts_a_after_ab() {
    let (vocab, tokens) = periodic("abababab", 100);
    let (lm, _) = train_lm::<f64>(&tokens, dims(2, vocab.len()), &train_cfg(6, 1)).unwrap();
    let ab = vocab.encode("ab").unwrap();
    let modes = successor_modes(&tokens, 2);
    assert_eq!(modes[&ab], vocab.id('a').unwrap());
    assert_eq!(argmax_after(&lm, &ab), modes[&ab]);
    // Every context of the corpus is reproduced, not just the one above.
    for (ctx, &mode) in &modes {
        assert_eq!(argmax_after(&lm, ctx), mode, "context {ctx:?}");
    }
}

struct Pair {
    vocab: speclen::Vocab,
    tokens: TokenSeq,
    lm: TargetLm<f64>,
    dh: DraftHead<f64>,
}

fn trained_pair(pattern: &str, window: usize) -> Pair {
    let (vocab, tokens) = periodic(pattern, 300);
    let (lm, _) = train_lm::<f64>(&tokens, dims(window, vocab.len()), &train_cfg(8, 1)).unwrap();
    let dcfg = DraftTrainConfig {
        train: train_cfg(8, 2),
        alpha: 1.0,
    };
    let (dh, _) = train_draft(&tokens, &lm, &dcfg).unwrap();
    Pair {
        vocab,
        tokens,
        lm,
        dh,
    }
}

#[test]
fn draft_head_continues_the_pattern() {
    let p = trained_pair("ab", 4);
    let a = p.vocab.id('a').unwrap();
    // Seed with an 'a' whose preceding position is a 'b'.
    let j = 10;
    assert_eq!(p.tokens[j], a);
    let f = p.lm.feature_at(&p.tokens, j as isize - 1);
    let draft =
        p.dh.draft_autoregress(&p.lm, a, &f, 3, Sampling::Greedy, &mut Rng::new(0))
            .unwrap();
    assert_eq!(p.vocab.decode(&draft.tokens).unwrap(), "bab");
}

/// Fraction of positions where one draft step from the true feature matches
/// the target's greedy next token.
fn single_step_agreement(p: &Pair, positions: std::ops::Range<usize>) -> f64 {
    let n = positions.len();
    let hits = positions
        .filter(|&j| {
            let f = p.lm.feature_at(&p.tokens, j as isize - 1);
            let (_, dist) = p.dh.step(&p.lm, p.tokens[j], &f);
            let truth =
                p.lm.head_dist(&p.lm.feature_at(&p.tokens, j as isize))
                    .argmax();
            dist.argmax() == truth
        })
        .count();
    hits as f64 / n as f64
}

#[test]
fn draft_agrees_with_target_on_heldout_positions() {
    let p = trained_pair("abcde", 3);
    // Positions from a fresh copy of the pattern, not the training text.
    let fresh = p.vocab.encode(&"cdeab".repeat(40)).unwrap();
    let q = Pair { tokens: fresh, ..p };
    let rate = single_step_agreement(&q, 5..q.tokens.len() - 1);
    assert!(rate > 0.9, "agreement {rate}");
}

const K_MAX: usize = 8;

/// The pair mirrors the target exactly if `K_MAX` greedy draft tokens from
/// every state match the target's greedy continuation.
fn assert_mirrors(p: &Pair) {
    for j in 1..60 {
        let prefix = &p.tokens[..=j];
        let formal = p.lm.greedy_continuation(prefix, K_MAX, None).unwrap();
        let f = p.lm.feature_at(prefix, j as isize - 1);
        let draft =
            p.dh.draft_autoregress(
                &p.lm,
                p.tokens[j],
                &f,
                K_MAX,
                Sampling::Greedy,
                &mut Rng::new(0),
            )
            .unwrap();
        assert_eq!(draft.tokens, formal, "state {j}");
    }
}

#[test]
fn mirroring_draft_is_always_fully_accepted() {
    let p = trained_pair("abcde", 3);
    assert_mirrors(&p);
    let prompt = p.tokens[..12].to_vec();
    for k in 1..=6 {
        let iters = 12;
        let max_tokens = iters * (k + 1);
        let cfg = DecodeConfig::greedy(max_tokens, None);
        let r = decode(
            &p.lm,
            &p.dh,
            &LengthPolicy::Fixed(k),
            &prompt,
            &cfg,
            &mut Rng::new(0),
        )
        .unwrap();
        assert_eq!(r.traces.len(), iters);
        for t in &r.traces {
            assert_eq!((t.drafted, t.accepted), (k, k));
            assert!(t.bonus_emitted);
        }
        let tau = r.output.len() as f64 / r.traces.len() as f64;
        assert_eq!(tau, (k + 1) as f64);

        let expected = p.lm.greedy_continuation(&prompt, max_tokens, None).unwrap();
        assert_eq!(r.output, expected);
    }
}

#[test]
fn mirroring_draft_gives_full_labels_and_maximal_opt_k() {
    let p = trained_pair("abcde", 3);
    assert_mirrors(&p);
    let prompts: Vec<TokenSeq> = (0..5).map(|i| p.tokens[i..i + 9].to_vec()).collect();
    let n_out = 20;
    let k_max_data = 10;
    let samples = collect_dataset(&p.lm, &p.dh, &prompts, n_out, k_max_data, None).unwrap();
    assert_eq!(samples.len(), prompts.len() * n_out);
    // Without a terminator at least `k_max_data` formal tokens remain.
    assert!(samples.iter().all(|s| s.label as usize == k_max_data));

    for j in 1..40 {
        assert_eq!(opt_k(&p.lm, &p.dh, &p.tokens[..=j], K_MAX).unwrap(), K_MAX);
    }
}

#[test]
fn mirrored_labels_stop_at_the_terminator() {
    // With a terminator the remaining continuation caps the label.
    let p = trained_pair("abcde", 3);
    assert_mirrors(&p);
    let stop = p.vocab.id('e').unwrap();
    let prompt = p.tokens[..6].to_vec(); // "abcdea", next 'e' is four tokens away
    let samples = collect_dataset(
        &p.lm,
        &p.dh,
        std::slice::from_ref(&prompt),
        10,
        10,
        Some(stop),
    )
    .unwrap();
    let formal = p.lm.greedy_continuation(&prompt, 21, Some(stop)).unwrap();
    assert_eq!(*formal.last().unwrap(), stop);
    // One cut per generated token before the terminator.
    assert_eq!(samples.len(), formal.len() - 1);
    for (j, s) in samples.iter().enumerate() {
        let remaining = formal.len() - (j + 1);
        assert_eq!(s.label as usize, remaining.min(10), "cut {j}");
    }
}

#[test]
fn zero_draft_head_labels_are_mostly_zero() {
    let p = trained_pair("abcde", 3);
    let zero = DraftHead::<f64>::zeros(p.lm.dims());
    let prompts: Vec<TokenSeq> = (0..5).map(|i| p.tokens[i..i + 9].to_vec()).collect();
    let samples = collect_dataset(&p.lm, &zero, &prompts, 20, 10, None).unwrap();
    let zeros = samples.iter().filter(|s| s.label == 0).count();
    assert!(
        zeros as f64 >= 0.7 * samples.len() as f64,
        "{zeros} of {}",
        samples.len()
    );
}

#[test]
fn greedy_verification_of_mirrored_drafts_accepts_everything() {
    let p = trained_pair("abcde", 3);
    let prefix = &p.tokens[..7];
    let f = p.lm.feature_at(prefix, prefix.len() as isize - 2);
    let draft =
        p.dh.draft_autoregress(
            &p.lm,
            *prefix.last().unwrap(),
            &f,
            5,
            Sampling::Greedy,
            &mut Rng::new(0),
        )
        .unwrap();
    let (accepted, bonus) = verify_greedy(&p.lm, prefix, &draft.tokens).unwrap();
    assert_eq!(accepted, 5);
    let mut all = prefix.to_vec();
    all.extend_from_slice(&draft.tokens);
    assert_eq!(bonus, argmax_after(&p.lm, &all));
}
