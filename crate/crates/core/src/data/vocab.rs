use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const BOS: usize = 0;
pub const EOS: usize = 1;
pub const BOS_TOKEN: &str = "<bos>";
pub const EOS_TOKEN: &str = "<eos>";

/// A set of interchangeable words sharing one embedding neighbourhood.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordGroup {
    pub name: String,
    pub words: Vec<String>,
}

/// Token/id bijection. Ids 0 and 1 are always BOS and EOS.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    /// Synonym group of each token; `None` for BOS/EOS.
    group_of: Vec<Option<usize>>,
}

impl Vocabulary {
    pub fn from_groups(groups: &[WordGroup]) -> Result<Self> {
        let mut vocab = Self { tokens: Vec::new(), index: HashMap::new(), group_of: Vec::new() };
        vocab.push(BOS_TOKEN, None)?;
        vocab.push(EOS_TOKEN, None)?;
        for (g, group) in groups.iter().enumerate() {
            for w in &group.words {
                vocab.push(w, Some(g))?;
            }
        }
        Ok(vocab)
    }

    /// Rebuilds a vocabulary from its token list and group assignment.
    pub fn from_tokens(tokens: Vec<String>, group_of: Vec<Option<usize>>) -> Result<Self> {
        if tokens.len() < 2 || tokens[BOS] != BOS_TOKEN || tokens[EOS] != EOS_TOKEN {
            return Err(Error::Corrupt("vocabulary must begin with <bos>, <eos>".into()));
        }
        if tokens.len() != group_of.len() {
            return Err(Error::Corrupt("group table does not match vocabulary".into()));
        }
        let mut vocab = Self { tokens: Vec::new(), index: HashMap::new(), group_of: Vec::new() };
        for (t, g) in tokens.iter().zip(group_of) {
            vocab.push(t, g).map_err(|e| Error::Corrupt(e.to_string()))?;
        }
        Ok(vocab)
    }

    fn push(&mut self, token: &str, group: Option<usize>) -> Result<()> {
        if token.is_empty() || token.contains(char::is_whitespace) {
            return Err(Error::Config(format!("invalid token `{token}`")));
        }
        if self.index.contains_key(token) {
            return Err(Error::Config(format!("token `{token}` appears twice")));
        }
        self.index.insert(token.to_string(), self.tokens.len());
        self.tokens.push(token.to_string());
        self.group_of.push(group);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn group_of(&self, id: usize) -> Option<usize> {
        self.group_of[id]
    }

    pub fn num_groups(&self) -> usize {
        self.group_of.iter().flatten().max().map_or(0, |g| g + 1)
    }

    /// Maps words to ids; unknown words are reported by name.
    pub fn encode<S: AsRef<str>>(&self, words: &[S]) -> Result<Vec<usize>> {
        words
            .iter()
            .map(|w| {
                let w = w.as_ref();
                self.id(w).ok_or_else(|| Error::Vocabulary(format!("unknown word `{w}`")))
            })
            .collect()
    }

    /// Space-joined words, BOS/EOS omitted.
    pub fn render(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&t| t != BOS && t != EOS)
            .map(|&t| self.tokens[t].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Frozen `W x E` word-vector table.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub table: Tensor,
}

impl EmbeddingTable {
    pub fn new(table: Tensor) -> Result<Self> {
        table.dims2()?;
        Ok(Self { table })
    }

    pub fn dim(&self) -> usize {
        self.table.shape()[1]
    }

    pub fn rows(&self) -> usize {
        self.table.shape()[0]
    }

    pub fn row(&self, id: usize) -> &[f64] {
        let e = self.dim();
        &self.table.values()[id * e..(id + 1) * e]
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (norm(a) * norm(b))
}

fn random_direction(rng: &mut impl Rng, e: usize, lo: usize) -> Vec<f64> {
    loop {
        let mut v = vec![0.0; e];
        for x in &mut v[lo..] {
            *x = rng.sample(StandardNormal);
        }
        let n = norm(&v);
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Clustered synthetic embeddings: each synonym group gets a base vector
/// (pairwise cosine below 0.5) and each word adds noise of norm at most
/// 0.2 times the base norm. BOS and EOS are the unit vectors e0 and e1;
/// word vectors live in the remaining coordinates when `E >= 4`.
pub fn build_embeddings(vocab: &Vocabulary, dim: usize, seed: u64) -> Result<EmbeddingTable> {
    if dim < 2 {
        return Err(Error::Config(format!("embedding dimension {dim} < 2")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo = if dim >= 4 { 2 } else { 0 };
    let mut bases: Vec<Vec<f64>> = Vec::new();
    for _ in 0..vocab.num_groups() {
        let mut attempts = 0;
        let dir = loop {
            let d = random_direction(&mut rng, dim, lo);
            attempts += 1;
            if bases.iter().all(|b| cosine(b, &d) < 0.5) || attempts > 10_000 {
                break d;
            }
        };
        let scale = rng.random_range(0.8..1.4);
        bases.push(dir.into_iter().map(|x| x * scale).collect());
    }
    let mut values = Vec::with_capacity(vocab.len() * dim);
    for id in 0..vocab.len() {
        match vocab.group_of(id) {
            None => {
                let mut row = vec![0.0; dim];
                row[if id == BOS { 0 } else { 1 }] = 1.0;
                values.extend(row);
            }
            Some(g) => {
                let base = &bases[g];
                let noise_norm = rng.random_range(0.0..0.2) * norm(base);
                let noise = random_direction(&mut rng, dim, lo);
                values.extend(base.iter().zip(&noise).map(|(b, n)| b + n * noise_norm));
            }
        }
    }
    EmbeddingTable::new(Tensor::new(vec![vocab.len(), dim], values)?)
}
