//! Action RAE, description RAE and retrofit layer.
//!
//! Both encoders end in an activation-free linear map to the latent space.
//! Every decoder layer has its initial `(h, c)` produced by linear maps from
//! `z`, which keeps the decoder input free for autoregressive feeding.
//! Training paths are teacher-forced; inference is closed loop and greedy.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{DescriptionSequence, EmbeddingTable, MotionSequence, BOS, EOS};
use crate::error::{Error, Result};
use crate::nn::{relative_error, softmax, Checkpoint, Graph, Group, Header, Linear, LstmWeights, ParamId, ParamStore, Tensor, Var};

/// Default cap on generated caption length, BOS included.
pub const DEFAULT_MAX_CAPTION: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub action_dim: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub embedding_dim: usize,
    pub retrofit_hidden: usize,
    pub vocab_size: usize,
    pub action_decoder_layers: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            action_dim: 6,
            hidden_dim: 32,
            latent_dim: 16,
            embedding_dim: 16,
            retrofit_hidden: 24,
            vocab_size: 35,
            action_decoder_layers: 3,
        }
    }
}

const CONFIG_KEYS: [&str; 7] =
    ["action_dim", "hidden_dim", "latent_dim", "embedding_dim", "retrofit_hidden", "vocab_size", "action_decoder_layers"];

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in CONFIG_KEYS.iter().zip(self.values()) {
            if v == 0 {
                return Err(Error::Config(format!("model {key} must be positive")));
            }
        }
        if self.vocab_size < 3 {
            return Err(Error::Config("vocabulary needs BOS, EOS and at least one word".into()));
        }
        Ok(())
    }

    fn values(&self) -> [usize; 7] {
        [
            self.action_dim,
            self.hidden_dim,
            self.latent_dim,
            self.embedding_dim,
            self.retrofit_hidden,
            self.vocab_size,
            self.action_decoder_layers,
        ]
    }

    /// Applies one setting; returns false for keys this struct does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let slot = match key {
            "action_dim" => &mut self.action_dim,
            "hidden_dim" => &mut self.hidden_dim,
            "latent_dim" => &mut self.latent_dim,
            "embedding_dim" => &mut self.embedding_dim,
            "retrofit_hidden" => &mut self.retrofit_hidden,
            "vocab_size" => &mut self.vocab_size,
            "action_decoder_layers" => &mut self.action_decoder_layers,
            _ => return Ok(false),
        };
        *slot = value.trim().parse().map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))?;
        Ok(true)
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        CONFIG_KEYS.iter().zip(self.values()).map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }
}

/// Intermediate representation shared by both modalities.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector(Vec<f64>);

impl LatentVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Translation input, tagged by modality.
#[derive(Debug, Clone, Copy)]
pub enum Source<'a> {
    Action(&'a MotionSequence),
    Description(&'a DescriptionSequence),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Action(MotionSequence),
    Description(DescriptionSequence),
}

#[derive(Debug, Clone, PartialEq)]
struct Handles {
    embedding: ParamId,
    retrofit: Vec<Linear>,
    act_enc: LstmWeights,
    act_proj: Linear,
    act_dec: Vec<LstmWeights>,
    act_init_h: Vec<Linear>,
    act_init_c: Vec<Linear>,
    act_out: Linear,
    dsc_fwd: LstmWeights,
    dsc_bwd: LstmWeights,
    dsc_proj: Linear,
    dsc_dec: LstmWeights,
    dsc_init_h: Linear,
    dsc_init_c: Linear,
    dsc_out: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    /// Seed frame for description-to-action decoding (training-set mean).
    pub first_frame: Vec<f64>,
    /// Frame count for description-to-action decoding when none is given.
    pub default_len: usize,
    h: Handles,
}

impl Model {
    /// Fresh model with uniformly initialized weights. The embedding table
    /// is copied in as a frozen parameter.
    pub fn new(
        config: ModelConfig,
        embeddings: &EmbeddingTable,
        first_frame: Vec<f64>,
        default_len: usize,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if embeddings.rows() != config.vocab_size || embeddings.dim() != config.embedding_dim {
            return Err(Error::Config(format!(
                "embedding table is {}x{}, model expects {}x{}",
                embeddings.rows(),
                embeddings.dim(),
                config.vocab_size,
                config.embedding_dim
            )));
        }
        if first_frame.len() != config.action_dim {
            return Err(Error::Config(format!(
                "first frame has {} channels, model expects {}",
                first_frame.len(),
                config.action_dim
            )));
        }
        if default_len < 2 {
            return Err(Error::Config("default action length must be at least 2".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new();
        let ModelConfig {
            action_dim: da,
            hidden_dim: hd,
            latent_dim: z,
            embedding_dim: e,
            retrofit_hidden: r,
            vocab_size: w,
            action_decoder_layers: layers,
        } = config;
        let rng = &mut rng;

        let embedding = s.register("embedding", Group::Frozen, embeddings.table.clone())?;
        let dims = [e, r, r, r, e];
        let retrofit = (0..4)
            .map(|k| Linear::register(&mut s, &format!("retrofit.fc{k}"), Group::Retrofit, dims[k], dims[k + 1], rng))
            .collect::<Result<Vec<_>>>()?;

        let act_enc = LstmWeights::register(&mut s, "act.enc", da, hd, rng)?;
        let act_proj = Linear::register(&mut s, "act.enc.to_z", Group::Rae, hd, z, rng)?;
        let mut act_dec = Vec::new();
        let mut act_init_h = Vec::new();
        let mut act_init_c = Vec::new();
        for l in 0..layers {
            act_dec.push(LstmWeights::register(&mut s, &format!("act.dec{l}"), if l == 0 { da } else { hd }, hd, rng)?);
            act_init_h.push(Linear::register(&mut s, &format!("act.dec{l}.init_h"), Group::Rae, z, hd, rng)?);
            act_init_c.push(Linear::register(&mut s, &format!("act.dec{l}.init_c"), Group::Rae, z, hd, rng)?);
        }
        let act_out = Linear::register(&mut s, "act.dec.out", Group::Rae, hd, da, rng)?;

        let dsc_fwd = LstmWeights::register(&mut s, "dsc.enc.fwd", e, hd, rng)?;
        let dsc_bwd = LstmWeights::register(&mut s, "dsc.enc.bwd", e, hd, rng)?;
        let dsc_proj = Linear::register(&mut s, "dsc.enc.to_z", Group::Rae, 2 * hd, z, rng)?;
        let dsc_dec = LstmWeights::register(&mut s, "dsc.dec", e, hd, rng)?;
        let dsc_init_h = Linear::register(&mut s, "dsc.dec.init_h", Group::Rae, z, hd, rng)?;
        let dsc_init_c = Linear::register(&mut s, "dsc.dec.init_c", Group::Rae, z, hd, rng)?;
        let dsc_out = Linear::register(&mut s, "dsc.dec.out", Group::Rae, hd, w, rng)?;

        let h = Handles {
            embedding,
            retrofit,
            act_enc,
            act_proj,
            act_dec,
            act_init_h,
            act_init_c,
            act_out,
            dsc_fwd,
            dsc_bwd,
            dsc_proj,
            dsc_dec,
            dsc_init_h,
            dsc_init_c,
            dsc_out,
        };
        Ok(Self { config, store: s, first_frame, default_len, h })
    }

    pub fn embedding_param(&self) -> ParamId {
        self.h.embedding
    }

    /// Model settings, seed frame and default length as header entries.
    pub fn header(&self) -> Header {
        let mut header = Header::new();
        for (k, v) in self.config.to_pairs() {
            header.insert(format!("model.{k}"), v);
        }
        header.insert(
            "model.first_frame".into(),
            self.first_frame.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
        );
        header.insert("model.default_len".into(), self.default_len.to_string());
        header
    }

    /// Checkpoint with this model's parameters; `extra` entries are merged
    /// into the header.
    pub fn to_checkpoint(&self, extra: Header, state: Vec<u8>) -> Checkpoint {
        let mut header = self.header();
        header.extend(extra);
        Checkpoint { header, params: self.store.clone(), state }
    }

    /// Rebuilds a model from a checkpoint; any missing, extra or reshaped
    /// parameter is reported as corruption.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let get = |key: &str| {
            ckpt.header.get(key).ok_or_else(|| Error::Corrupt(format!("checkpoint header lacks `{key}`")))
        };
        let mut config = ModelConfig::default();
        for key in CONFIG_KEYS {
            config.set(key, get(&format!("model.{key}"))?).map_err(|e| Error::Corrupt(e.to_string()))?;
        }
        let first_frame = get("model.first_frame")?
            .split(',')
            .map(|v| v.parse::<f64>().map_err(|_| Error::Corrupt(format!("bad first frame value `{v}`"))))
            .collect::<Result<Vec<_>>>()?;
        let default_len: usize =
            get("model.default_len")?.parse().map_err(|_| Error::Corrupt("bad model.default_len".into()))?;
        let placeholder = EmbeddingTable::new(Tensor::zeros(vec![config.vocab_size, config.embedding_dim]))?;
        let mut model = Self::new(config, &placeholder, first_frame, default_len, 0)
            .map_err(|e| Error::Corrupt(format!("checkpoint model block: {e}")))?;
        if ckpt.params.len() != model.store.len() {
            return Err(Error::Corrupt(format!(
                "checkpoint has {} parameters, model needs {}",
                ckpt.params.len(),
                model.store.len()
            )));
        }
        let ids: Vec<(ParamId, String, Group)> =
            model.store.iter().map(|(pid, p)| (pid, p.id().to_string(), p.group())).collect();
        for (pid, name, group) in ids {
            let src = ckpt
                .params
                .lookup(&name)
                .map(|q| ckpt.params.get(q))
                .ok_or_else(|| Error::Corrupt(format!("checkpoint lacks parameter `{name}`")))?;
            if src.group() != group || src.tensor.shape() != model.store.tensor(pid).shape() {
                return Err(Error::Corrupt(format!("parameter `{name}` has the wrong group or shape")));
            }
            *model.store.tensor_mut(pid) = src.tensor.clone();
        }
        Ok(model)
    }

    fn check_motion(&self, motion: &MotionSequence) -> Result<()> {
        if motion.dim() != self.config.action_dim {
            return Err(Error::Shape(format!(
                "motion frames have {} channels, model expects {}",
                motion.dim(),
                self.config.action_dim
            )));
        }
        if motion.len() < 2 {
            return Err(Error::Input(format!("motion needs at least 2 frames, got {}", motion.len())));
        }
        if motion.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("motion contains non-finite values".into()));
        }
        Ok(())
    }

    fn check_description(&self, desc: &DescriptionSequence) -> Result<()> {
        if let Some(&bad) = desc.tokens().iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(Error::Vocabulary(format!(
                "token id {bad} outside vocabulary of {}",
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    fn check_latent(&self, z: &LatentVector) -> Result<()> {
        if z.len() != self.config.latent_dim {
            return Err(Error::Shape(format!("latent has {} dims, model uses {}", z.len(), self.config.latent_dim)));
        }
        Ok(())
    }

    pub fn encode_action(&self, motion: &MotionSequence) -> Result<LatentVector> {
        let mut f = Forward::new(self);
        let z = f.encode_action(motion)?;
        Ok(LatentVector(f.g.value(z).to_vec()))
    }

    pub fn encode_description(&self, desc: &DescriptionSequence) -> Result<LatentVector> {
        let mut f = Forward::new(self);
        let z = f.encode_description(desc)?;
        Ok(LatentVector(f.g.value(z).to_vec()))
    }

    /// Decodes `len` frames. With a teacher, step `t` reads teacher frame
    /// `t`; otherwise it reads the previous prediction, starting from
    /// `first_frame`. The result is `first_frame` followed by the
    /// `len - 1` predictions.
    pub fn decode_action(
        &self,
        z: &LatentVector,
        first_frame: &[f64],
        len: usize,
        teacher: Option<&MotionSequence>,
    ) -> Result<MotionSequence> {
        self.check_latent(z)?;
        if len < 2 {
            return Err(Error::Input(format!("cannot decode {len} frame(s); need at least 2")));
        }
        if first_frame.len() != self.config.action_dim {
            return Err(Error::Shape("first frame width does not match the model".into()));
        }
        let mut f = Forward::new(self);
        let zv = f.g.constant(z.values().to_vec());
        let preds = match teacher {
            Some(t) => {
                self.check_motion(t)?;
                if t.len() != len {
                    return Err(Error::Input(format!("teacher has {} frames, asked for {len}", t.len())));
                }
                f.decode_action_teacher(zv, t)
            }
            None => f.decode_action_free(zv, first_frame, len),
        };
        let mut values = first_frame.to_vec();
        for p in preds {
            values.extend_from_slice(f.g.value(p));
        }
        MotionSequence::new(self.config.action_dim, values)
    }

    /// Greedy caption decoding from `z`. Generates at most `max_len - 1`
    /// tokens after BOS and stops at the first EOS; a caption cut off by
    /// `max_len` is closed with EOS. With a teacher, the inputs are the
    /// teacher tokens and the emitted tokens are the per-step argmaxes.
    pub fn decode_description(
        &self,
        z: &LatentVector,
        max_len: usize,
        teacher: Option<&DescriptionSequence>,
    ) -> Result<(DescriptionSequence, Vec<Vec<f64>>)> {
        self.check_latent(z)?;
        if max_len < 2 {
            return Err(Error::Input(format!("max_len {max_len} < 2")));
        }
        let mut f = Forward::new(self);
        let zv = f.g.constant(z.values().to_vec());
        let mut tokens = vec![BOS];
        let mut dists = Vec::new();
        match teacher {
            Some(t) => {
                self.check_description(t)?;
                for logits in f.decode_description_teacher(zv, t) {
                    let p = softmax(f.g.value(logits));
                    tokens.push(argmax(&p));
                    dists.push(p);
                }
            }
            None => {
                let w = &self.h.dsc_dec;
                let (mut h, mut c) = f.init_state(zv, self.h.dsc_init_h, self.h.dsc_init_c);
                let mut prev = BOS;
                while tokens.len() < max_len {
                    let x = f.retrofit(prev);
                    (h, c) = w.step(&mut f.g, x, h, c);
                    let logits = self.h.dsc_out.forward(&mut f.g, h);
                    let p = softmax(f.g.value(logits));
                    prev = argmax(&p);
                    tokens.push(prev);
                    dists.push(p);
                    if prev == EOS {
                        break;
                    }
                }
            }
        }
        if *tokens.last().unwrap() != EOS {
            tokens.push(EOS);
        }
        Ok((DescriptionSequence::new(tokens, self.config.vocab_size)?, dists))
    }

    /// Action to description, greedy.
    pub fn a2d(&self, motion: &MotionSequence, max_len: usize) -> Result<DescriptionSequence> {
        let z = self.encode_action(motion)?;
        Ok(self.decode_description(&z, max_len, None)?.0)
    }

    /// Description to action, closed loop from the stored seed frame.
    /// `len` defaults to the stored mean training length.
    pub fn d2a(&self, desc: &DescriptionSequence, len: Option<usize>) -> Result<MotionSequence> {
        let z = self.encode_description(desc)?;
        self.decode_action(&z, &self.first_frame, len.unwrap_or(self.default_len), None)
    }

    pub fn translate(&self, source: Source) -> Result<Target> {
        Ok(match source {
            Source::Action(m) => Target::Description(self.a2d(m, DEFAULT_MAX_CAPTION)?),
            Source::Description(d) => Target::Action(self.d2a(d, None)?),
        })
    }
}

/// Most probable emittable token: BOS is never generated, ties go to the
/// smallest id.
fn argmax(p: &[f64]) -> usize {
    let mut best = EOS;
    for (i, &v) in p.iter().enumerate().skip(EOS) {
        if v > p[best] {
            best = i;
        }
    }
    best
}

impl Model {
    /// Worst relative error between `backward()` and central differences of
    /// `loss` over every value of the given parameter groups. Parameters are
    /// restored exactly.
    pub fn gradient_check<F>(&mut self, groups: &[Group], eps: f64, loss: F) -> Result<f64>
    where
        F: Fn(&mut Forward) -> Result<Var>,
    {
        let analytic = {
            let mut f = Forward::new(self);
            let l = loss(&mut f)?;
            f.g.backward(l)?
        };
        let eval = |m: &Model| -> Result<f64> {
            let mut f = Forward::new(m);
            let l = loss(&mut f)?;
            Ok(f.g.scalar(l))
        };
        let mut worst = 0.0f64;
        for &group in groups {
            for pid in self.store.ids_in(group) {
                for j in 0..self.store.tensor(pid).len() {
                    let original = self.store.tensor(pid).values()[j];
                    self.store.tensor_mut(pid).values_mut()[j] = original + eps;
                    let up = eval(self);
                    self.store.tensor_mut(pid).values_mut()[j] = original - eps;
                    let down = eval(self);
                    self.store.tensor_mut(pid).values_mut()[j] = original;
                    let numeric = (up? - down?) / (2.0 * eps);
                    worst = worst.max(relative_error(analytic.get(pid).values()[j], numeric));
                }
            }
        }
        Ok(worst)
    }
}

/// One forward pass over a model, recorded on a graph. Retrofitted
/// embeddings are memoized per token so repeated words share one subgraph.
pub struct Forward<'m> {
    pub g: Graph<'m>,
    model: &'m Model,
    retro: HashMap<usize, Var>,
}

impl<'m> Forward<'m> {
    pub fn new(model: &'m Model) -> Self {
        Self { g: Graph::new(&model.store), model, retro: HashMap::new() }
    }

    pub fn model(&self) -> &'m Model {
        self.model
    }

    fn retrofit(&mut self, token: usize) -> Var {
        if let Some(&v) = self.retro.get(&token) {
            return v;
        }
        let table = self.g.param(self.model.h.embedding);
        let mut x = self.g.row(table, token);
        for layer in &self.model.h.retrofit {
            let y = layer.forward(&mut self.g, x);
            x = self.g.tanh(y);
        }
        self.retro.insert(token, x);
        x
    }

    fn init_state(&mut self, z: Var, to_h: Linear, to_c: Linear) -> (Var, Var) {
        (to_h.forward(&mut self.g, z), to_c.forward(&mut self.g, z))
    }

    fn zeros(&mut self) -> Var {
        self.g.constant(vec![0.0; self.model.config.hidden_dim])
    }

    pub fn encode_action(&mut self, motion: &MotionSequence) -> Result<Var> {
        self.model.check_motion(motion)?;
        let w = self.model.h.act_enc;
        let (mut h, mut c) = (self.zeros(), self.zeros());
        for frame in motion.frames() {
            let x = self.g.constant(frame.to_vec());
            (h, c) = w.step(&mut self.g, x, h, c);
        }
        Ok(self.model.h.act_proj.forward(&mut self.g, h))
    }

    pub fn encode_description(&mut self, desc: &DescriptionSequence) -> Result<Var> {
        self.model.check_description(desc)?;
        let xs: Vec<Var> = desc.tokens().iter().map(|&t| self.retrofit(t)).collect();
        let (fw, bw) = (self.model.h.dsc_fwd, self.model.h.dsc_bwd);
        let (mut hf, mut cf) = (self.zeros(), self.zeros());
        for &x in &xs {
            (hf, cf) = fw.step(&mut self.g, x, hf, cf);
        }
        let (mut hb, mut cb) = (self.zeros(), self.zeros());
        for &x in xs.iter().rev() {
            (hb, cb) = bw.step(&mut self.g, x, hb, cb);
        }
        let both = self.g.concat(&[hf, hb]);
        Ok(self.model.h.dsc_proj.forward(&mut self.g, both))
    }

    fn action_step(&mut self, x: Var, state: &mut [(Var, Var)]) -> Var {
        let mut input = x;
        for (layer, s) in self.model.h.act_dec.iter().zip(state.iter_mut()) {
            *s = layer.step(&mut self.g, input, s.0, s.1);
            input = s.0;
        }
        let y = self.model.h.act_out.forward(&mut self.g, input);
        self.g.tanh(y)
    }

    fn action_init(&mut self, z: Var) -> Vec<(Var, Var)> {
        let h = &self.model.h;
        (0..h.act_dec.len()).map(|l| self.init_state(z, h.act_init_h[l], h.act_init_c[l])).collect()
    }

    /// Predictions for frames `2..T` of `teacher`, each read from the true
    /// previous frame.
    pub fn decode_action_teacher(&mut self, z: Var, teacher: &MotionSequence) -> Vec<Var> {
        let mut state = self.action_init(z);
        (0..teacher.len() - 1)
            .map(|t| {
                let x = self.g.constant(teacher.frame(t).to_vec());
                self.action_step(x, &mut state)
            })
            .collect()
    }

    fn decode_action_free(&mut self, z: Var, first_frame: &[f64], len: usize) -> Vec<Var> {
        let mut state = self.action_init(z);
        let mut x = self.g.constant(first_frame.to_vec());
        let mut out = Vec::with_capacity(len - 1);
        for _ in 1..len {
            x = self.action_step(x, &mut state);
            out.push(x);
        }
        out
    }

    /// Logits for tokens `2..T` of `teacher`, each read from the true
    /// previous token.
    pub fn decode_description_teacher(&mut self, z: Var, teacher: &DescriptionSequence) -> Vec<Var> {
        let w = self.model.h.dsc_dec;
        let (mut h, mut c) = self.init_state(z, self.model.h.dsc_init_h, self.model.h.dsc_init_c);
        let tokens = teacher.tokens();
        (0..tokens.len() - 1)
            .map(|t| {
                let x = self.retrofit(tokens[t]);
                (h, c) = w.step(&mut self.g, x, h, c);
                self.model.h.dsc_out.forward(&mut self.g, h)
            })
            .collect()
    }

    /// Unnormalized reconstruction error of one motion from `z`.
    pub fn action_loss(&mut self, z: Var, truth: &MotionSequence) -> Var {
        let preds = self.decode_action_teacher(z, truth);
        let terms: Vec<Var> = preds
            .into_iter()
            .enumerate()
            .map(|(t, p)| {
                let target = self.g.constant(truth.frame(t + 1).to_vec());
                self.g.squared_error(p, target)
            })
            .collect();
        self.g.add_n(&terms)
    }

    /// Unnormalized cross-entropy of one caption from `z`.
    pub fn description_loss(&mut self, z: Var, truth: &DescriptionSequence) -> Var {
        let logits = self.decode_description_teacher(z, truth);
        let terms: Vec<Var> = logits
            .into_iter()
            .zip(&truth.tokens()[1..])
            .map(|(l, &target)| self.g.softmax_xent(l, target))
            .collect();
        self.g.add_n(&terms)
    }
}
