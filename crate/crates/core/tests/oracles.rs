//! The model's building blocks recomputed with plain loops over its
//! parameter tensors.

use protolens::autodiff::Tensor;
use protolens::corpus::{EncodedExample, Language, SpecialToken};
use protolens::model::{ModelConfig, ModelParams, ParamId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn config() -> ModelConfig {
    ModelConfig {
        embed_dim: 5,
        hidden_dim: 6,
        mlp_hidden: 7,
        lang_embed_dim: 3,
        max_decode_len: 6,
        seed: 17,
    }
}

/// x·M for a row vector x.
fn vecmat(x: &[f64], m: &Tensor<f64>) -> Vec<f64> {
    (0..m.cols())
        .map(|c| x.iter().enumerate().map(|(r, v)| v * m.get(r, c)).sum())
        .collect()
}

fn plus(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn embed(p: &ModelParams<f64>, id: usize, lang: Language) -> Vec<f64> {
    let e = p.get(ParamId::Embed).row_slice(id).to_vec();
    let l = p.get(ParamId::LangEmbed).row_slice(lang.index()).to_vec();
    plus(&vecmat(&e, p.get(ParamId::ProjSymbol)), &vecmat(&l, p.get(ParamId::ProjLang)))
}

fn gru(x: &[f64], h: &[f64], w_ih: &Tensor<f64>, w_hh: &Tensor<f64>, b_ih: &Tensor<f64>, b_hh: &Tensor<f64>) -> Vec<f64> {
    let n = h.len();
    let gi = plus(&vecmat(x, w_ih), b_ih.data());
    let gh = plus(&vecmat(h, w_hh), b_hh.data());
    (0..n)
        .map(|i| {
            let r = sigmoid(gi[i] + gh[i]);
            let z = sigmoid(gi[n + i] + gh[n + i]);
            let cand = (gi[2 * n + i] + r * gh[2 * n + i]).tanh();
            (1.0 - z) * cand + z * h[i]
        })
        .collect()
}

fn attend(s: &[f64], states: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let scores: Vec<f64> = states.iter().map(|h| h.iter().zip(s).map(|(a, b)| a * b).sum()).collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let w: Vec<f64> = exps.iter().map(|e| e / total).collect();
    let mut ctx = vec![0.0; s.len()];
    for (wi, h) in w.iter().zip(states) {
        for (c, v) in ctx.iter_mut().zip(h) {
            *c += wi * v;
        }
    }
    (ctx, w)
}

fn close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() < tol, "{a:?} vs {b:?}");
    }
}

#[test]
fn single_position_encoder_is_one_cell() {
    let p = ModelParams::<f64>::init(config(), 10).unwrap();
    let ex = EncodedExample {
        input_ids: vec![7],
        input_langs: vec![Language::Spanish],
        target_ids: vec![2],
    };
    let states = p.encode(&ex).unwrap();
    let expected = gru(
        &embed(&p, 7, Language::Spanish),
        &[0.0; 6],
        p.get(ParamId::EncWih),
        p.get(ParamId::EncWhh),
        p.get(ParamId::EncBih),
        p.get(ParamId::EncBhh),
    );
    close(states.data(), &expected, 1e-12);
}

#[test]
fn attention_context_is_weighted_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let states: Vec<Vec<f64>> = (0..4).map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let s: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
    let enc = Tensor::new(vec![4, 6], states.concat()).unwrap();
    let (ctx, w) = ModelParams::<f64>::attend(&Tensor::row(s.clone()), &enc).unwrap();
    let (ref_ctx, ref_w) = attend(&s, &states);
    close(ctx.data(), &ref_ctx, 1e-12);
    close(w.data(), &ref_w, 1e-12);
}

#[test]
fn decode_step_matches_recomputation() {
    let p = ModelParams::<f64>::init(config(), 10).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let states: Vec<Vec<f64>> = (0..5).map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let s: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
    let enc = Tensor::new(vec![5, 6], states.concat()).unwrap();
    let prev = 8;
    let (logits, new_state, weights) = p.decode_step(prev, &Tensor::row(s.clone()), &enc).unwrap();
    assert_eq!(logits.shape(), &[1, 10]);

    let x = embed(&p, prev, Language::Latin);
    let h = gru(&x, &s, p.get(ParamId::DecWih), p.get(ParamId::DecWhh), p.get(ParamId::DecBih), p.get(ParamId::DecBhh));
    let (ctx, w) = attend(&h, &states);
    let joined = [ctx, h.clone()].concat();
    let hidden: Vec<f64> = plus(&vecmat(&joined, p.get(ParamId::MlpW1)), p.get(ParamId::MlpB1).data())
        .into_iter()
        .map(f64::tanh)
        .collect();
    let out = plus(&vecmat(&hidden, p.get(ParamId::MlpW2)), p.get(ParamId::MlpB2).data());
    close(new_state.data(), &h, 1e-12);
    close(weights.data(), &w, 1e-12);
    close(logits.data(), &out, 1e-12);

    let again = p.decode_step(prev, &Tensor::row(s), &enc).unwrap();
    assert_eq!(again.0, logits);
}

#[test]
fn greedy_decode_follows_stepwise_argmax() {
    let p = ModelParams::<f64>::init(config(), 10).unwrap();
    let ex = EncodedExample {
        input_ids: vec![6, 7, 3, 8, 9],
        input_langs: vec![Language::Romanian, Language::Romanian, Language::Romanian, Language::French, Language::French],
        target_ids: vec![2],
    };
    let decoded = p.greedy_decode(&ex).unwrap();
    let enc = p.encode(&ex).unwrap();
    let mut state = Tensor::row(enc.row_slice(enc.rows() - 1).to_vec());
    let mut prev = SpecialToken::Bos.id();
    let mut ids = Vec::new();
    for step in &decoded.trace.steps {
        let (logits, next, weights) = p.decode_step(prev, &state, &enc).unwrap();
        let emit = (0..10)
            .filter(|&i| i == 2 || i >= 6)
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if logits.data()[b] >= logits.data()[i] => Some(b),
                _ => Some(i),
            })
            .unwrap();
        assert_eq!(emit, step.emitted);
        close(weights.data(), &step.weights, 1e-12);
        if emit == 2 {
            break;
        }
        ids.push(emit);
        prev = emit;
        state = next;
    }
    assert_eq!(ids, decoded.ids);
}

#[test]
fn parameter_count_formula() {
    let c = config();
    for vocab in [7, 10, 43] {
        let p = ModelParams::<f32>::init(c, vocab).unwrap();
        let (e, l, d, h, m) = (5, 3, 5, 6, 7);
        let formula = vocab * e + 6 * l + e * d + l * d + 2 * (d * 3 * h + h * 3 * h + 6 * h) + 2 * h * m + m + m * vocab + vocab;
        assert_eq!(p.count(), formula);
        assert_eq!(c.param_count(vocab), formula);
    }
}
