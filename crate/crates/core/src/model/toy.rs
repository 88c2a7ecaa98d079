//! Tiny randomly initialised seq2seq model.
//!
//! Next-token logits for target vocabulary entry `v` are
//!
//! ```text
//! bias[v] + trans[prev][v] + mean_{s in source} ctx[s][v]
//!         + copy * [v occurs in source] + repeat * count_so_far(v)
//! ```
//!
//! Every term is linear in the parameters, so softmax cross-entropy
//! gradients are exact and cheap. The model is only meant to exercise the
//! training and generation plumbing on desk-scale data.

use std::collections::{BTreeSet, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::optim::AdamW;
use super::tokenizer;
use crate::num::Scalar;
use crate::rng;

pub const EOS: usize = 0;
pub const BOS: usize = 1;
pub const UNK: usize = 2;
const SPECIALS: [&str; 3] = ["</s>", "<s>", "<unk>"];
const INIT_SCALE: f64 = 0.01;
const FORMAT: &str = "radsum-toy-seq2seq-v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub source: String,
    pub target: String,
}

/// Example mapped onto the model's vocabularies.
#[derive(Debug, Clone)]
pub struct Encoded {
    source: Vec<usize>,
    copyable: Vec<usize>,
    target: Vec<usize>,
}

impl Encoded {
    pub fn target_len(&self) -> usize {
        self.target.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToySeq2Seq<F> {
    seed: u64,
    src_vocab: Vec<String>,
    src_index: HashMap<String, usize>,
    tgt_vocab: Vec<String>,
    tgt_index: HashMap<String, usize>,
    bias: Vec<F>,
    trans: Vec<F>,
    ctx: Vec<F>,
    /// `[copy, repeat]`
    gates: Vec<F>,
}

#[derive(Serialize, Deserialize)]
struct StoredModel {
    format: String,
    seed: u64,
    src_vocab: Vec<String>,
    tgt_vocab: Vec<String>,
    bias: Vec<f64>,
    trans: Vec<f64>,
    ctx: Vec<f64>,
    gates: Vec<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum ModelFormatError {
    #[error("not a toy checkpoint (format `{0}`)")]
    Format(String),
    #[error("parameter shapes do not match the vocabularies")]
    Shape,
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn index_of(vocab: &[String]) -> HashMap<String, usize> {
    vocab.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect()
}

fn init_value(rng: &mut rng::SeededRng) -> f64 {
    rng.random_range(-INIT_SCALE..INIT_SCALE)
}

impl<F: Scalar> ToySeq2Seq<F> {
    /// Fresh model with only the special target tokens.
    pub fn new(seed: u64) -> Self {
        let tgt_vocab: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let vt = tgt_vocab.len();
        let mut init = rng::derived(seed, "toy/init");
        let mut model = ToySeq2Seq {
            seed,
            src_vocab: Vec::new(),
            src_index: HashMap::new(),
            tgt_index: index_of(&tgt_vocab),
            tgt_vocab,
            bias: (0..vt).map(|_| F::of(init_value(&mut init))).collect(),
            trans: (0..vt * vt).map(|_| F::of(init_value(&mut init))).collect(),
            ctx: Vec::new(),
            gates: vec![F::zero(), F::zero()],
        };
        model.bias[BOS] = F::zero();
        model.bias[UNK] = F::zero();
        model
    }

    pub fn source_vocab_len(&self) -> usize {
        self.src_vocab.len()
    }

    pub fn target_vocab_len(&self) -> usize {
        self.tgt_vocab.len()
    }

    pub fn parameter_count(&self) -> usize {
        self.bias.len() + self.trans.len() + self.ctx.len() + self.gates.len()
    }

    /// Adds unseen source and target tokens from `examples`. Existing
    /// weights are kept; new entries get small seeded random values.
    pub fn extend_vocab(&mut self, examples: &[Example]) {
        let mut new_src = BTreeSet::new();
        let mut new_tgt = BTreeSet::new();
        for ex in examples {
            for t in tokenizer::encode(&ex.source) {
                if !self.src_index.contains_key(&t) {
                    new_src.insert(t);
                }
            }
            for t in tokenizer::encode(&ex.target) {
                if !self.tgt_index.contains_key(&t) {
                    new_tgt.insert(t);
                }
            }
        }
        if new_src.is_empty() && new_tgt.is_empty() {
            return;
        }
        let (vs0, vt0) = (self.src_vocab.len(), self.tgt_vocab.len());
        self.src_vocab.extend(new_src);
        self.tgt_vocab.extend(new_tgt);
        let (vs1, vt1) = (self.src_vocab.len(), self.tgt_vocab.len());
        let mut init = rng::derived(self.seed, &format!("toy/grow/{vs1}/{vt1}"));

        let mut bias = self.bias.clone();
        bias.extend((vt0..vt1).map(|_| F::of(init_value(&mut init))));

        let mut trans = vec![F::zero(); vt1 * vt1];
        for i in 0..vt1 {
            for j in 0..vt1 {
                trans[i * vt1 + j] = if i < vt0 && j < vt0 {
                    self.trans[i * vt0 + j]
                } else {
                    F::of(init_value(&mut init))
                };
            }
        }

        let mut ctx = vec![F::zero(); vs1 * vt1];
        for i in 0..vs1 {
            for j in 0..vt1 {
                ctx[i * vt1 + j] = if i < vs0 && j < vt0 {
                    self.ctx[i * vt0 + j]
                } else {
                    F::of(init_value(&mut init))
                };
            }
        }

        self.bias = bias;
        self.trans = trans;
        self.ctx = ctx;
        self.src_index = index_of(&self.src_vocab);
        self.tgt_index = index_of(&self.tgt_vocab);
    }

    fn encode_source(&self, source: &str) -> (Vec<usize>, Vec<usize>) {
        let tokens = tokenizer::encode(source);
        let src: BTreeSet<usize> = tokens.iter().filter_map(|t| self.src_index.get(t).copied()).collect();
        let copy: BTreeSet<usize> = tokens
            .iter()
            .filter_map(|t| self.tgt_index.get(t).copied())
            .filter(|&id| id > UNK)
            .collect();
        (src.into_iter().collect(), copy.into_iter().collect())
    }

    pub fn encode(&self, example: &Example) -> Encoded {
        let (source, copyable) = self.encode_source(&example.source);
        let mut target: Vec<usize> = tokenizer::encode(&example.target)
            .iter()
            .map(|t| self.tgt_index.get(t).copied().unwrap_or(UNK))
            .collect();
        target.push(EOS);
        Encoded { source, copyable, target }
    }

    fn logits(&self, prev: usize, source: &[usize], copyable: &[usize], counts: &HashMap<usize, usize>) -> Vec<F> {
        let vt = self.tgt_vocab.len();
        let mut l = self.bias.clone();
        let row = &self.trans[prev * vt..(prev + 1) * vt];
        for (li, &w) in l.iter_mut().zip(row) {
            *li = *li + w;
        }
        if !source.is_empty() {
            let inv = F::one() / F::of_usize(source.len());
            for &s in source {
                let row = &self.ctx[s * vt..(s + 1) * vt];
                for (li, &w) in l.iter_mut().zip(row) {
                    *li = *li + w * inv;
                }
            }
        }
        for &c in copyable {
            l[c] = l[c] + self.gates[0];
        }
        for (&v, &n) in counts {
            l[v] = l[v] + self.gates[1] * F::of_usize(n);
        }
        l[BOS] = F::neg_infinity();
        l[UNK] = F::neg_infinity();
        l
    }

    fn softmax(logits: &[F]) -> Vec<F> {
        let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
        let exps: Vec<F> = logits.iter().map(|&x| (x - max).exp()).collect();
        let z: F = exps.iter().copied().sum();
        exps.into_iter().map(|e| e / z).collect()
    }

    /// Summed token cross-entropy and token count.
    pub fn loss(&self, batch: &[Encoded]) -> (f64, usize) {
        let mut total = 0.0;
        let mut tokens = 0;
        for ex in batch {
            let mut counts = HashMap::new();
            let mut prev = BOS;
            for &y in &ex.target {
                let p = Self::softmax(&self.logits(prev, &ex.source, &ex.copyable, &counts));
                total -= p[y].to_f64_lossy().max(1e-300).ln();
                tokens += 1;
                *counts.entry(y).or_insert(0) += 1;
                prev = y;
            }
        }
        (total, tokens)
    }

    /// Mean token loss and its gradient with respect to
    /// `[bias, trans, ctx, gates]`.
    pub fn gradients(&self, batch: &[&Encoded]) -> (f64, [Vec<F>; 4]) {
        let vt = self.tgt_vocab.len();
        let mut g_bias = vec![F::zero(); self.bias.len()];
        let mut g_trans = vec![F::zero(); self.trans.len()];
        let mut g_ctx = vec![F::zero(); self.ctx.len()];
        let mut g_gates = vec![F::zero(); 2];
        let mut loss = 0.0;
        let mut tokens = 0usize;

        for ex in batch {
            let mut counts: HashMap<usize, usize> = HashMap::new();
            let mut prev = BOS;
            let inv = if ex.source.is_empty() { F::zero() } else { F::one() / F::of_usize(ex.source.len()) };
            for &y in &ex.target {
                let mut g = Self::softmax(&self.logits(prev, &ex.source, &ex.copyable, &counts));
                loss -= g[y].to_f64_lossy().max(1e-300).ln();
                tokens += 1;
                g[y] = g[y] - F::one();
                for v in 0..vt {
                    g_bias[v] = g_bias[v] + g[v];
                    g_trans[prev * vt + v] = g_trans[prev * vt + v] + g[v];
                }
                for &s in &ex.source {
                    for v in 0..vt {
                        g_ctx[s * vt + v] = g_ctx[s * vt + v] + g[v] * inv;
                    }
                }
                for &c in &ex.copyable {
                    g_gates[0] = g_gates[0] + g[c];
                }
                for (&v, &n) in &counts {
                    g_gates[1] = g_gates[1] + g[v] * F::of_usize(n);
                }
                *counts.entry(y).or_insert(0) += 1;
                prev = y;
            }
        }
        let mut grads = [g_bias, g_trans, g_ctx, g_gates];
        if tokens == 0 {
            return (0.0, grads);
        }
        let scale = F::one() / F::of_usize(tokens);
        for g in grads.iter_mut() {
            for x in g.iter_mut() {
                *x = *x * scale;
            }
        }
        (loss / tokens as f64, grads)
    }

    /// One optimizer step on a batch; returns the batch's mean token loss.
    pub fn train_step(&mut self, batch: &[&Encoded], optimizer: &mut AdamW, lr: f64) -> f64 {
        let (loss, [g_bias, g_trans, g_ctx, g_gates]) = self.gradients(batch);
        optimizer.update(
            &mut [&mut self.bias[..], &mut self.trans[..], &mut self.ctx[..], &mut self.gates[..]],
            &[&g_bias[..], &g_trans[..], &g_ctx[..], &g_gates[..]],
            lr,
        );
        loss
    }

    /// Greedy decoding of at most `max_new_tokens` tokens. The first step
    /// never emits end-of-sequence, so non-empty caps give non-empty output.
    pub fn generate(&self, source: &str, max_new_tokens: usize) -> Vec<String> {
        let (src, copy) = self.encode_source(source);
        let mut counts = HashMap::new();
        let mut prev = BOS;
        let mut out = Vec::new();
        while out.len() < max_new_tokens {
            let mut l = self.logits(prev, &src, &copy, &counts);
            if out.is_empty() {
                l[EOS] = F::neg_infinity();
            }
            let mut best = EOS;
            for v in 0..l.len() {
                if l[v] > l[best] {
                    best = v;
                }
            }
            if best == EOS || l[best] == F::neg_infinity() {
                break;
            }
            out.push(self.tgt_vocab[best].clone());
            *counts.entry(best).or_insert(0) += 1;
            prev = best;
        }
        out
    }

    pub fn to_json(&self) -> String {
        let to64 = |v: &[F]| v.iter().map(|x| x.to_f64_lossy()).collect::<Vec<f64>>();
        let stored = StoredModel {
            format: FORMAT.into(),
            seed: self.seed,
            src_vocab: self.src_vocab.clone(),
            tgt_vocab: self.tgt_vocab.clone(),
            bias: to64(&self.bias),
            trans: to64(&self.trans),
            ctx: to64(&self.ctx),
            gates: to64(&self.gates),
        };
        serde_json::to_string(&stored).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelFormatError> {
        let s: StoredModel = serde_json::from_str(text)?;
        if s.format != FORMAT {
            return Err(ModelFormatError::Format(s.format));
        }
        let (vs, vt) = (s.src_vocab.len(), s.tgt_vocab.len());
        if vt < SPECIALS.len()
            || s.bias.len() != vt
            || s.trans.len() != vt * vt
            || s.ctx.len() != vs * vt
            || s.gates.len() != 2
        {
            return Err(ModelFormatError::Shape);
        }
        let of = |v: Vec<f64>| v.into_iter().map(F::of).collect::<Vec<F>>();
        Ok(ToySeq2Seq {
            seed: s.seed,
            src_index: index_of(&s.src_vocab),
            tgt_index: index_of(&s.tgt_vocab),
            src_vocab: s.src_vocab,
            tgt_vocab: s.tgt_vocab,
            bias: of(s.bias),
            trans: of(s.trans),
            ctx: of(s.ctx),
            gates: of(s.gates),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn examples() -> Vec<Example> {
        let pairs = [
            ("Lungs are clear . No effusion .", "No acute process ."),
            ("Subtle opacity in the upper lungs may represent pneumonia . Heart normal .", "Possible early pneumonia ."),
            ("Heart size normal . Lungs clear . No pneumothorax .", "No acute process ."),
            ("Opacity in the right lower lobe concerning for pneumonia .", "Right lower lobe pneumonia ."),
        ];
        pairs.iter().map(|(s, t)| Example { source: s.to_string(), target: t.to_string() }).collect()
    }

    fn trained(epochs: usize) -> ToySeq2Seq<f64> {
        let exs = examples();
        let mut m = ToySeq2Seq::new(3);
        m.extend_vocab(&exs);
        let enc: Vec<Encoded> = exs.iter().map(|e| m.encode(e)).collect();
        let mut opt = AdamW::default();
        for _ in 0..epochs {
            for e in &enc {
                m.train_step(&[e], &mut opt, 0.05);
            }
        }
        m
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let exs = examples();
        let mut m: ToySeq2Seq<f64> = ToySeq2Seq::new(1);
        m.extend_vocab(&exs);
        m.gates = vec![0.3, -0.2];
        let enc = [m.encode(&exs[1]), m.encode(&exs[2])];
        let batch: Vec<&Encoded> = enc.iter().collect();
        let (_, grads) = m.gradients(&batch);
        let mean_loss = |model: &ToySeq2Seq<f64>| {
            let (l, n) = model.loss(&enc);
            l / n as f64
        };
        let eps = 1e-6;
        let vt = m.target_vocab_len();
        let probes: [(usize, usize); 7] = [(0, 0), (0, 5), (1, BOS * vt + 4), (1, 7 * vt + 3), (2, 2 * vt + 6), (3, 0), (3, 1)];
        for (tensor, idx) in probes {
            let nudge = |delta: f64| {
                let mut c = m.clone();
                let slot = match tensor {
                    0 => &mut c.bias[idx],
                    1 => &mut c.trans[idx],
                    2 => &mut c.ctx[idx],
                    _ => &mut c.gates[idx],
                };
                *slot += delta;
                mean_loss(&c)
            };
            let numeric = (nudge(eps) - nudge(-eps)) / (2.0 * eps);
            let analytic = grads[tensor][idx];
            assert!((numeric - analytic).abs() < 1e-6, "tensor {tensor} idx {idx}: {numeric} vs {analytic}");
        }
    }

    #[test]
    fn training_reduces_loss() {
        let exs = examples();
        let fresh = {
            let mut m: ToySeq2Seq<f64> = ToySeq2Seq::new(3);
            m.extend_vocab(&exs);
            m
        };
        let enc: Vec<Encoded> = exs.iter().map(|e| fresh.encode(e)).collect();
        let before = fresh.loss(&enc).0;
        let after = trained(30).loss(&enc).0;
        assert!(after < before * 0.5, "{after} vs {before}");
    }

    #[test]
    fn learns_training_targets() {
        let m = trained(60);
        let out = m.generate("Lungs are clear . No effusion .", 50);
        assert_eq!(tokenizer::decode(&out), "No acute process.");
    }

    #[test]
    fn cap_and_determinism() {
        let m = trained(5);
        for cap in [1, 2, 50] {
            let a = m.generate("Heart size normal .", cap);
            assert!(!a.is_empty() && a.len() <= cap);
            assert_eq!(a, m.generate("Heart size normal .", cap));
        }
        assert!(m.generate("anything", 0).is_empty());
    }

    #[test]
    fn vocab_growth_keeps_weights() {
        let mut m = trained(3);
        let before = m.generate("Lungs are clear .", 10);
        let old_vt = m.target_vocab_len();
        let old_bias = m.bias.clone();
        m.extend_vocab(&[Example { source: "Kein Erguss .".into(), target: "Unauffällig .".into() }]);
        assert!(m.target_vocab_len() > old_vt);
        assert_eq!(&m.bias[..old_vt], &old_bias[..]);
        assert!(!before.is_empty());
        assert!(!m.generate("Lungs are clear .", 10).is_empty());
    }

    #[test]
    fn json_round_trip_and_f32() {
        let m = trained(3);
        let back: ToySeq2Seq<f64> = ToySeq2Seq::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        let single: ToySeq2Seq<f32> = ToySeq2Seq::from_json(&m.to_json()).unwrap();
        assert_eq!(single.target_vocab_len(), m.target_vocab_len());
        assert!(matches!(
            ToySeq2Seq::<f64>::from_json(r#"{"format":"x","seed":0,"src_vocab":[],"tgt_vocab":[],"bias":[],"trans":[],"ctx":[],"gates":[]}"#),
            Err(ModelFormatError::Format(_))
        ));
    }
}
