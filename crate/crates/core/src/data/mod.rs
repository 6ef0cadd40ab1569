//! Synthetic motion/caption corpus, preprocessing and on-disk layout.

mod generate;
mod io;
mod preprocess;
mod vocab;

pub use generate::{generate_corpus, nearest_centroid_accuracy, GenConfig, CLASS_LIBRARY};
pub use io::{read_corpus, read_motion_csv, write_corpus, write_motion_csv};
pub use preprocess::{denormalize, downsample, normalize, split, NormStats, SplitRatios};
pub use vocab::{build_embeddings, EmbeddingTable, Vocabulary, WordGroup, BOS, BOS_TOKEN, EOS, EOS_TOKEN};

use crate::error::{Error, Result};

/// `T x D` frame matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    dim: usize,
    values: Vec<f64>,
}

impl MotionSequence {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || !values.len().is_multiple_of(dim) {
            return Err(Error::Shape(format!("{} values do not form frames of width {dim}", values.len())));
        }
        Ok(Self { dim, values })
    }

    pub fn from_frames(frames: &[Vec<f64>]) -> Result<Self> {
        let dim = frames.first().map_or(0, Vec::len);
        if frames.iter().any(|f| f.len() != dim) {
            return Err(Error::Shape("frames have differing widths".into()));
        }
        Self::new(dim, frames.concat())
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Token ids framed by [`BOS`] and [`EOS`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DescriptionSequence {
    tokens: Vec<usize>,
}

impl DescriptionSequence {
    pub fn new(tokens: Vec<usize>, vocab_size: usize) -> Result<Self> {
        if tokens.len() < 2 || tokens[0] != BOS || *tokens.last().unwrap() != EOS {
            return Err(Error::Input("a description must start with BOS and end with EOS".into()));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t >= vocab_size) {
            return Err(Error::Vocabulary(format!("token id {bad} outside vocabulary of {vocab_size}")));
        }
        Ok(Self { tokens })
    }

    /// Wraps body ids with BOS/EOS.
    pub fn from_body(body: &[usize], vocab_size: usize) -> Result<Self> {
        let mut tokens = Vec::with_capacity(body.len() + 2);
        tokens.push(BOS);
        tokens.extend_from_slice(body);
        tokens.push(EOS);
        Self::new(tokens, vocab_size)
    }

    pub fn tokens(&self) -> &[usize] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tokens without the BOS/EOS frame.
    pub fn body(&self) -> &[usize] {
        &self.tokens[1..self.tokens.len() - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Partition {
    Train,
    Validation,
    Test,
}

impl Partition {
    pub fn name(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Validation => "validation",
            Partition::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Partition::Train),
            "validation" => Some(Partition::Validation),
            "test" => Some(Partition::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Motion {
    pub id: usize,
    /// Generator class index; never shown to the model.
    pub class: usize,
    pub raw_len: usize,
    pub partition: Partition,
    pub sequence: MotionSequence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Caption {
    pub id: usize,
    pub motion_id: usize,
    pub tokens: DescriptionSequence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub config: GenConfig,
    pub seed: u64,
    pub class_names: Vec<String>,
    pub motions: Vec<Motion>,
    pub captions: Vec<Caption>,
    pub vocab: Vocabulary,
    pub embeddings: EmbeddingTable,
    pub norm: NormStats,
}

impl Corpus {
    pub fn motion(&self, id: usize) -> &Motion {
        &self.motions[id]
    }

    /// `(motion id, caption id)` for every caption.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.captions.iter().map(|c| (c.motion_id, c.id)).collect()
    }

    pub fn motions_in(&self, part: Partition) -> Vec<&Motion> {
        self.motions.iter().filter(|m| m.partition == part).collect()
    }

    pub fn captions_in(&self, part: Partition) -> Vec<&Caption> {
        self.captions.iter().filter(|c| self.motions[c.motion_id].partition == part).collect()
    }

    pub fn captions_of(&self, motion_id: usize) -> Vec<&Caption> {
        self.captions.iter().filter(|c| c.motion_id == motion_id).collect()
    }

    pub fn action_dim(&self) -> usize {
        self.motions.first().map_or(0, |m| m.sequence.dim())
    }

    /// Mean first frame over the training partition (seed for closed-loop
    /// description-to-action decoding).
    pub fn mean_initial_frame(&self) -> Vec<f64> {
        let train = self.motions_in(Partition::Train);
        let mut mean = vec![0.0; self.action_dim()];
        for m in &train {
            for (acc, v) in mean.iter_mut().zip(m.sequence.frame(0)) {
                *acc += v;
            }
        }
        for v in &mut mean {
            *v /= train.len().max(1) as f64;
        }
        mean
    }

    /// Rounded mean training-motion length.
    pub fn mean_train_length(&self) -> usize {
        let train = self.motions_in(Partition::Train);
        let total: usize = train.iter().map(|m| m.sequence.len()).sum();
        ((total as f64 / train.len().max(1) as f64).round() as usize).max(2)
    }

    pub fn caption_text(&self, tokens: &[usize]) -> String {
        self.vocab.render(tokens)
    }
}
