//! Layers shared by the extractor and the scorer.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, ParamId, ParamStore, Var};
use crate::tensor::Tensor;

/// Token vocabulary; id 0 is the unknown token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(words: Vec<String>) -> Self {
        Self::from_words(words)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.words
    }
}

pub const UNK: &str = "<unk>";

impl Vocab {
    pub fn build<'a>(sentences: impl IntoIterator<Item = &'a [String]>) -> Self {
        let mut words = vec![UNK.to_string()];
        let mut index = HashMap::from([(UNK.to_string(), 0)]);
        for sent in sentences {
            for w in sent {
                if !index.contains_key(w) {
                    index.insert(w.clone(), words.len());
                    words.push(w.clone());
                }
            }
        }
        Self { words, index }
    }

    pub fn from_words(words: Vec<String>) -> Self {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Self { words, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id(&self, w: &str) -> usize {
        self.index.get(w).copied().unwrap_or(0)
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            w: store.add(format!("{name}.w"), Tensor::glorot(d_in, d_out, rng)),
            b: store.add(format!("{name}.b"), Tensor::zeros(1, d_out)),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.w);
        let b = g.param(self.b);
        let y = g.matmul(x, w);
        g.add_row(y, b)
    }
}

/// Single-head self-attention followed by a tanh feed-forward layer, each
/// with a residual connection and layer normalisation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttentionBlock {
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    wo: ParamId,
    ff1: Linear,
    ff2: Linear,
    d: usize,
}

impl AttentionBlock {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, d: usize, rng: &mut R) -> Self {
        let mut sq = |n: &str, rng: &mut R| store.add(format!("{name}.{n}"), Tensor::glorot(d, d, rng));
        let wq = sq("wq", rng);
        let wk = sq("wk", rng);
        let wv = sq("wv", rng);
        let wo = sq("wo", rng);
        Self {
            wq,
            wk,
            wv,
            wo,
            ff1: Linear::new(store, &format!("{name}.ff1"), d, 2 * d, rng),
            ff2: Linear::new(store, &format!("{name}.ff2"), 2 * d, d, rng),
            d,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let (wq, wk, wv, wo) = (g.param(self.wq), g.param(self.wk), g.param(self.wv), g.param(self.wo));
        let q = g.matmul(x, wq);
        let k = g.matmul(x, wk);
        let v = g.matmul(x, wv);
        let s = g.matmul_t(q, k);
        let s = g.scale(s, 1.0 / (self.d as f64).sqrt());
        let a = g.softmax_rows(s);
        let h = g.matmul(a, v);
        let h = g.matmul(h, wo);
        let x1 = g.add(x, h);
        let x1 = g.layer_norm(x1);
        let f = self.ff1.forward(g, x1);
        let f = g.tanh(f);
        let f = self.ff2.forward(g, f);
        let x2 = g.add(x1, f);
        g.layer_norm(x2)
    }
}

/// Token embeddings plus learned positions, then a stack of attention blocks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Encoder {
    tok: ParamId,
    pos: ParamId,
    blocks: Vec<AttentionBlock>,
    pub d: usize,
    pub max_len: usize,
}

impl Encoder {
    /// Parameters are registered under `{name}.*`.
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        vocab_size: usize,
        d: usize,
        layers: usize,
        max_len: usize,
        rng: &mut R,
    ) -> Self {
        let tok = store.add(format!("{name}.tok"), Tensor::uniform(vocab_size, d, 0.5, rng));
        let pos = store.add(format!("{name}.pos"), Tensor::uniform(max_len, d, 0.5, rng));
        let blocks = (0..layers)
            .map(|l| AttentionBlock::new(store, &format!("{name}.layer{l}"), d, rng))
            .collect();
        Self {
            tok,
            pos,
            blocks,
            d,
            max_len,
        }
    }

    /// `N x d` contextual representations for `N` token ids.
    pub fn forward(&self, g: &mut Graph, ids: &[usize]) -> Var {
        let positions: Vec<usize> = (0..ids.len()).map(|i| i.min(self.max_len - 1)).collect();
        let t = g.gather(self.tok, ids);
        let p = g.gather(self.pos, &positions);
        let mut x = g.add(t, p);
        for b in &self.blocks {
            x = b.forward(g, x);
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unknown_words_map_to_zero() {
        let s = vec!["a".to_string(), "b".to_string()];
        let v = Vocab::build([s.as_slice()]);
        assert_eq!(v.len(), 3);
        assert_eq!(v.id("b"), 2);
        assert_eq!(v.id("zzz"), 0);
        let w = Vocab::from_words(v.words().to_vec());
        assert_eq!(w, v);
    }

    #[test]
    fn encoder_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let enc = Encoder::new(&mut store, "enc", 10, 8, 2, 4, &mut rng);
        let mut g = Graph::new(&store);
        // longer than max_len reuses the last position
        let out = enc.forward(&mut g, &[1, 2, 3, 4, 5, 6]);
        assert_eq!(g.value(out).shape(), (6, 8));
    }
}
