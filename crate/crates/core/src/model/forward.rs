use serde::{Deserialize, Serialize};

use super::{ModelError, ModelParams, ParamId};
use crate::autodiff::{Scalar, Tape, Tensor, Var};
use crate::corpus::{EncodedExample, Language, SpecialToken};

/// Tape handles for every parameter tensor.
#[derive(Clone, Copy, Debug)]
pub struct ParamVars([Var; 16]);

impl ParamVars {
    pub fn bind<'p, T: Scalar>(tape: &mut Tape<'p, T>, params: &'p ModelParams<T>) -> ParamVars {
        let mut vars = [None; 16];
        for (slot, t) in vars.iter_mut().zip(params.tensors()) {
            *slot = Some(tape.param(t));
        }
        ParamVars(vars.map(|v| v.expect("16 tensors")))
    }

    pub fn get(&self, id: ParamId) -> Var {
        self.0[id as usize]
    }

    pub fn all(&self) -> &[Var; 16] {
        &self.0
    }
}

pub struct EncoderOutput {
    /// `n × hidden`, one row per input position.
    pub states: Var,
    /// `hidden × n`, kept for the attention scores.
    pub states_t: Var,
    /// `1 × hidden`, the state after the last position.
    pub last: Var,
}

pub struct StepOutput {
    pub logits: Var,
    pub state: Var,
    pub weights: Var,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionStep {
    /// Id produced at this step (`<eos>` on the final step of a finished word).
    pub emitted: usize,
    /// Attention over input positions; non-negative and summing to one.
    pub weights: Vec<f64>,
}

/// Attention weights of one greedy decoding, with the input it attended over.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionTrace {
    pub input_ids: Vec<usize>,
    pub input_langs: Vec<Language>,
    pub steps: Vec<AttentionStep>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decoded {
    /// Emitted ids without the closing `<eos>`.
    pub ids: Vec<usize>,
    /// Set when `max_decode_len` steps passed without `<eos>`.
    pub truncated: bool,
    pub trace: AttentionTrace,
}

fn can_emit(id: usize) -> bool {
    id == SpecialToken::Eos.id() || id >= SpecialToken::ALL.len()
}

impl<T: Scalar> ModelParams<T> {
    fn check_symbol(&self, id: usize) -> Result<(), ModelError> {
        if id < self.vocab_size {
            Ok(())
        } else {
            Err(ModelError::IdOutOfRange {
                what: "symbol",
                id,
                bound: self.vocab_size,
            })
        }
    }

    /// `W·E[c] + U·E_lang[ℓ]` for each (symbol, language) pair, as rows.
    pub fn embed_on(
        &self,
        tape: &mut Tape<'_, T>,
        pv: &ParamVars,
        ids: &[usize],
        langs: &[Language],
    ) -> Result<Var, ModelError> {
        if ids.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        for &id in ids {
            self.check_symbol(id)?;
        }
        let lang_ids: Vec<usize> = langs.iter().map(|l| l.index()).collect();
        let e = tape.gather(pv.get(ParamId::Embed), ids)?;
        let l = tape.gather(pv.get(ParamId::LangEmbed), &lang_ids)?;
        let we = tape.matmul(e, pv.get(ParamId::ProjSymbol))?;
        let ul = tape.matmul(l, pv.get(ParamId::ProjLang))?;
        Ok(tape.add(we, ul)?)
    }

    /// One GRU update given the precomputed input-side gates `gi = x·W_ih + b_ih`.
    pub fn gru_step_on(
        &self,
        tape: &mut Tape<'_, T>,
        gi: Var,
        h: Var,
        w_hh: Var,
        b_hh: Var,
    ) -> Result<Var, ModelError> {
        let n = self.config.hidden_dim;
        let hw = tape.matmul(h, w_hh)?;
        let gh = tape.add_row(hw, b_hh)?;
        let gi_r = tape.slice(gi, 1, 0, n)?;
        let gh_r = tape.slice(gh, 1, 0, n)?;
        let pre_r = tape.add(gi_r, gh_r)?;
        let r = tape.sigmoid(pre_r);
        let gi_z = tape.slice(gi, 1, n, n)?;
        let gh_z = tape.slice(gh, 1, n, n)?;
        let pre_z = tape.add(gi_z, gh_z)?;
        let z = tape.sigmoid(pre_z);
        let gi_n = tape.slice(gi, 1, 2 * n, n)?;
        let gh_n = tape.slice(gh, 1, 2 * n, n)?;
        let reset = tape.mul(r, gh_n)?;
        let pre_n = tape.add(gi_n, reset)?;
        let cand = tape.tanh(pre_n);
        // h' = (1 - z)·n + z·h = n + z·(h - n)
        let diff = tape.sub(h, cand)?;
        let keep = tape.mul(z, diff)?;
        Ok(tape.add(cand, keep)?)
    }

    pub fn encode_on(
        &self,
        tape: &mut Tape<'_, T>,
        pv: &ParamVars,
        ex: &EncodedExample,
    ) -> Result<EncoderOutput, ModelError> {
        self.encode_inputs_on(tape, pv, &ex.input_ids, &ex.input_langs)
    }

    pub fn encode_inputs_on(
        &self,
        tape: &mut Tape<'_, T>,
        pv: &ParamVars,
        ids: &[usize],
        langs: &[Language],
    ) -> Result<EncoderOutput, ModelError> {
        if ids.len() != langs.len() {
            return Err(ModelError::Config(format!(
                "{} input ids but {} language tags",
                ids.len(),
                langs.len()
            )));
        }
        let x = self.embed_on(tape, pv, ids, langs)?;
        let xw = tape.matmul(x, pv.get(ParamId::EncWih))?;
        let gates = tape.add_row(xw, pv.get(ParamId::EncBih))?;
        let mut h = tape.leaf(Tensor::zeros(&[1, self.config.hidden_dim]));
        let mut rows = Vec::with_capacity(ids.len());
        for t in 0..ids.len() {
            let gi = tape.slice(gates, 0, t, 1)?;
            h = self.gru_step_on(tape, gi, h, pv.get(ParamId::EncWhh), pv.get(ParamId::EncBhh))?;
            rows.push(h);
        }
        let states = tape.concat(&rows, 0)?;
        let states_t = tape.transpose(states)?;
        Ok(EncoderOutput {
            states,
            states_t,
            last: h,
        })
    }

    /// Dot-product attention of each row of `query` over the encoder states.
    /// Returns `(context, weights)`.
    pub fn attend_on(
        tape: &mut Tape<'_, T>,
        query: Var,
        enc: &EncoderOutput,
    ) -> Result<(Var, Var), ModelError> {
        let scores = tape.matmul(query, enc.states_t)?;
        let weights = tape.softmax(scores, 1)?;
        let context = tape.matmul(weights, enc.states)?;
        Ok((context, weights))
    }

    /// Attention plus output MLP for decoder states `s` (one per row).
    fn head_on(
        &self,
        tape: &mut Tape<'_, T>,
        pv: &ParamVars,
        s: Var,
        enc: &EncoderOutput,
    ) -> Result<(Var, Var), ModelError> {
        let (context, weights) = Self::attend_on(tape, s, enc)?;
        let joined = tape.concat(&[context, s], 1)?;
        let pre = tape.matmul(joined, pv.get(ParamId::MlpW1))?;
        let pre = tape.add_row(pre, pv.get(ParamId::MlpB1))?;
        let hidden = tape.tanh(pre);
        let out = tape.matmul(hidden, pv.get(ParamId::MlpW2))?;
        let logits = tape.add_row(out, pv.get(ParamId::MlpB2))?;
        Ok((logits, weights))
    }

    pub fn decode_step_on(
        &self,
        tape: &mut Tape<'_, T>,
        pv: &ParamVars,
        prev: usize,
        state: Var,
        enc: &EncoderOutput,
    ) -> Result<StepOutput, ModelError> {
        let x = self.embed_on(tape, pv, &[prev], &[Language::Latin])?;
        let xw = tape.matmul(x, pv.get(ParamId::DecWih))?;
        let gi = tape.add_row(xw, pv.get(ParamId::DecBih))?;
        let state = self.gru_step_on(tape, gi, state, pv.get(ParamId::DecWhh), pv.get(ParamId::DecBhh))?;
        let (logits, weights) = self.head_on(tape, pv, state, enc)?;
        Ok(StepOutput {
            logits,
            state,
            weights,
        })
    }

    /// Teacher-forced decoder pass; returns the `T × vocab` logits for the
    /// target ids (which end in `<eos>`).
    pub fn teacher_forced_logits_on(
        &self,
        tape: &mut Tape<'_, T>,
        pv: &ParamVars,
        ex: &EncodedExample,
    ) -> Result<Var, ModelError> {
        if ex.target_ids.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        let enc = self.encode_on(tape, pv, ex)?;
        let mut prev = Vec::with_capacity(ex.target_ids.len());
        prev.push(SpecialToken::Bos.id());
        prev.extend_from_slice(&ex.target_ids[..ex.target_ids.len() - 1]);
        let langs = vec![Language::Latin; prev.len()];
        let x = self.embed_on(tape, pv, &prev, &langs)?;
        let xw = tape.matmul(x, pv.get(ParamId::DecWih))?;
        let gates = tape.add_row(xw, pv.get(ParamId::DecBih))?;
        let mut s = enc.last;
        let mut rows = Vec::with_capacity(prev.len());
        for t in 0..prev.len() {
            let gi = tape.slice(gates, 0, t, 1)?;
            s = self.gru_step_on(tape, gi, s, pv.get(ParamId::DecWhh), pv.get(ParamId::DecBhh))?;
            rows.push(s);
        }
        let states = tape.concat(&rows, 0)?;
        let (logits, _) = self.head_on(tape, pv, states, &enc)?;
        Ok(logits)
    }

    /// Summed cross entropy of the target word under teacher forcing.
    pub fn loss_on(&self, tape: &mut Tape<'_, T>, pv: &ParamVars, ex: &EncodedExample) -> Result<Var, ModelError> {
        let logits = self.teacher_forced_logits_on(tape, pv, ex)?;
        Ok(tape.cross_entropy(logits, &ex.target_ids)?)
    }

    /// Summed loss of one example and its gradient for every parameter.
    pub fn loss_and_grads(&self, ex: &EncodedExample) -> Result<(T, Vec<Tensor<T>>), ModelError> {
        let mut tape = Tape::new();
        let pv = ParamVars::bind(&mut tape, self);
        let loss = self.loss_on(&mut tape, &pv, ex)?;
        let mut grads = tape.backward(loss)?;
        let g = pv
            .all()
            .iter()
            .zip(self.tensors())
            .map(|(&v, t)| grads.take_or_zeros(v, t))
            .collect();
        Ok((tape.value(loss).item(), g))
    }

    /// Projected representation of one symbol in one language.
    pub fn embed_input(&self, symbol: usize, lang: Language) -> Result<Tensor<T>, ModelError> {
        let mut tape = Tape::new();
        let pv = ParamVars::bind(&mut tape, self);
        let v = self.embed_on(&mut tape, &pv, &[symbol], &[lang])?;
        Ok(tape.value(v).clone())
    }

    /// Encoder states, one row per input position.
    pub fn encode(&self, ex: &EncodedExample) -> Result<Tensor<T>, ModelError> {
        let mut tape = Tape::new();
        let pv = ParamVars::bind(&mut tape, self);
        let enc = self.encode_on(&mut tape, &pv, ex)?;
        Ok(tape.value(enc.states).clone())
    }

    /// Dot-product attention of one decoder state over encoder states.
    /// Returns `(context, weights)`.
    pub fn attend(state: &Tensor<T>, encoder_states: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>), ModelError> {
        let mut tape = Tape::new();
        let s = tape.leaf(state.clone());
        let states = tape.leaf(encoder_states.clone());
        let states_t = tape.transpose(states)?;
        let enc = EncoderOutput {
            states,
            states_t,
            last: s,
        };
        let (c, w) = Self::attend_on(&mut tape, s, &enc)?;
        Ok((tape.value(c).clone(), tape.value(w).clone()))
    }

    /// One decoder step from outside a tape. Returns `(logits, new_state, weights)`.
    pub fn decode_step(
        &self,
        prev: usize,
        state: &Tensor<T>,
        encoder_states: &Tensor<T>,
    ) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>), ModelError> {
        let mut tape = Tape::new();
        let pv = ParamVars::bind(&mut tape, self);
        let s = tape.leaf(state.clone());
        let states = tape.leaf(encoder_states.clone());
        let states_t = tape.transpose(states)?;
        let enc = EncoderOutput {
            states,
            states_t,
            last: s,
        };
        let out = self.decode_step_on(&mut tape, &pv, prev, s, &enc)?;
        Ok((
            tape.value(out.logits).clone(),
            tape.value(out.state).clone(),
            tape.value(out.weights).clone(),
        ))
    }

    /// Greedy decoding from `<bos>`: the highest-scoring id (lowest id on
    /// ties) is emitted until `<eos>` or `max_decode_len` steps. Only content
    /// symbols and `<eos>` can be emitted.
    pub fn greedy_decode(&self, ex: &EncodedExample) -> Result<Decoded, ModelError> {
        self.greedy_with(ex, |x| x)
    }

    pub(crate) fn greedy_with(&self, ex: &EncodedExample, map: impl Fn(T) -> T) -> Result<Decoded, ModelError> {
        let mut tape = Tape::new();
        let pv = ParamVars::bind(&mut tape, self);
        let enc = self.encode_on(&mut tape, &pv, ex)?;
        let mut state = enc.last;
        let mut prev = SpecialToken::Bos.id();
        let mut ids = Vec::new();
        let mut steps = Vec::new();
        let mut finished = false;
        for _ in 0..self.config.max_decode_len {
            let out = self.decode_step_on(&mut tape, &pv, prev, state, &enc)?;
            let logits = tape.value(out.logits).data();
            let mut best: Option<(usize, T)> = None;
            for (id, &x) in logits.iter().enumerate() {
                let x = map(x);
                if can_emit(id) && best.is_none_or(|(_, b)| x > b) {
                    best = Some((id, x));
                }
            }
            let (id, _) = best.ok_or(ModelError::Config("vocabulary has no emittable ids".into()))?;
            steps.push(AttentionStep {
                emitted: id,
                weights: tape
                    .value(out.weights)
                    .data()
                    .iter()
                    .map(|w| w.to_f64().unwrap_or(f64::NAN))
                    .collect(),
            });
            if id == SpecialToken::Eos.id() {
                finished = true;
                break;
            }
            ids.push(id);
            prev = id;
            state = out.state;
        }
        Ok(Decoded {
            ids,
            truncated: !finished,
            trace: AttentionTrace {
                input_ids: ex.input_ids.clone(),
                input_langs: ex.input_langs.clone(),
                steps,
            },
        })
    }
}
