//! Two-stage training with chain-thaw alternation.
//!
//! Stage 1 reconstructs independently sampled captions and motions; stage 2
//! adds the binding loss on a small paired subset. In both stages exactly one
//! of the RAE and RETROFIT groups is updated per iteration, switching every
//! `n_ch` iterations, and the switching phase carries over the stage boundary.

use log::{info, warn};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{DescriptionSequence, MotionSequence};
use crate::error::{Error, Result};
use crate::losses::{stage1_graph, stage2_graph, LossBreakdown, DEFAULT_DELTA};
use crate::model::{Forward, Model};
use crate::nn::checkpoint::Reader;
use crate::nn::{AdamConfig, AdamState, Checkpoint, Group, Header};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    One,
    Two,
}

impl Stage {
    pub fn number(self) -> u8 {
        match self {
            Stage::One => 1,
            Stage::Two => 2,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Stage::One),
            2 => Some(Stage::Two),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub delta: f64,
    pub lr: f64,
    pub n1: usize,
    pub n2: usize,
    pub n_ch: usize,
    pub paired_count: usize,
    pub seed: u64,
    /// Periodic checkpoint interval in iterations; 0 disables.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            delta: DEFAULT_DELTA,
            lr: 1e-3,
            n1: 10_000,
            n2: 3_200,
            n_ch: 20,
            paired_count: 64,
            seed: 0,
            checkpoint_every: 1_000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.n_ch == 0 {
            return Err(Error::Config("n_ch must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Config(format!("margin must be positive, got {}", self.delta)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        Ok(())
    }

    /// Applies one setting; returns false for keys this struct does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value.trim().parse().map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
        }
        match key {
            "batch_size" => self.batch_size = parse(key, value)?,
            "delta" => self.delta = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "n1" => self.n1 = parse(key, value)?,
            "n2" => self.n2 = parse(key, value)?,
            "n_ch" => self.n_ch = parse(key, value)?,
            "paired_count" => self.paired_count = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        vec![
            ("batch_size".into(), self.batch_size.to_string()),
            ("delta".into(), self.delta.to_string()),
            ("lr".into(), self.lr.to_string()),
            ("n1".into(), self.n1.to_string()),
            ("n2".into(), self.n2.to_string()),
            ("n_ch".into(), self.n_ch.to_string()),
            ("paired_count".into(), self.paired_count.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("checkpoint_every".into(), self.checkpoint_every.to_string()),
        ]
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, ..AdamConfig::default() }
    }
}

/// Iterations covering `epochs` passes over `pool` items at batch size `b`.
pub fn iterations_for_epochs(epochs: usize, pool: usize, b: usize) -> usize {
    epochs * pool.div_ceil(b.max(1))
}

/// Group updated at 1-based iteration `i`. In stage 2 the phase is offset
/// by `n1`, the number of stage-1 iterations actually run.
pub fn phase_for(i: usize, stage: Stage, n_ch: usize, n1: usize) -> Group {
    let k = match stage {
        Stage::One => i,
        Stage::Two => i + n1,
    };
    if (k / n_ch) % 2 == 1 {
        Group::Rae
    } else {
        Group::Retrofit
    }
}

/// Uniform sample of `k` items without replacement, in sampled order.
pub fn make_paired_subset<T: Clone>(pool: &[T], k: usize, seed: u64) -> Result<Vec<T>> {
    if k > pool.len() {
        return Err(Error::Input(format!("cannot draw {k} pairs from a pool of {}", pool.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9a1e_d5b5);
    Ok(index::sample(&mut rng, pool.len(), k).into_iter().map(|i| pool[i].clone()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub iter: usize,
    pub stage: Stage,
    pub group: Group,
    pub loss: LossBreakdown,
}

pub const LOG_HEADER: &str = "iter,stage,active_group,l_act,l_dsc,l_bnd,total";

impl LogRecord {
    pub fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.iter,
            self.stage.number(),
            self.group.name(),
            self.loss.l_act,
            self.loss.l_dsc,
            self.loss.l_bnd,
            self.loss.total
        )
    }
}

/// Full loss log text, header line included.
pub fn render_log(records: &[LogRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(LOG_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.to_line());
        out.push('\n');
    }
    out
}

/// Batch indices into a pool of `n`: distinct when the pool is large enough,
/// otherwise drawn with replacement.
fn draw(rng: &mut ChaCha8Rng, n: usize, b: usize) -> Vec<usize> {
    if b <= n {
        index::sample(rng, n, b).into_vec()
    } else {
        (0..b).map(|_| rng.random_range(0..n)).collect()
    }
}

fn sampler_seed(seed: u64, stage: Stage) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (stage.number() as u64) << 56
}

/// Mutable training run: model, optimizer states, sampler and log.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: Model,
    pub config: TrainConfig,
    pub stage: Stage,
    /// Completed iterations of the current stage.
    pub iter: usize,
    /// Stage-1 iterations executed before stage 2 (phase offset).
    pub n1_done: usize,
    pub log: Vec<LogRecord>,
    adam_rae: AdamState,
    adam_ret: AdamState,
    rng: ChaCha8Rng,
}

/// Called after every iteration; returning `false` stops the run early.
pub type StepHook<'a> = &'a mut dyn FnMut(&Trainer) -> Result<bool>;

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam_rae = AdamState::for_group(&model.store, Group::Rae, config.adam())?;
        let adam_ret = AdamState::for_group(&model.store, Group::Retrofit, config.adam())?;
        Ok(Self {
            model,
            config,
            stage: Stage::One,
            iter: 0,
            n1_done: 0,
            log: Vec::new(),
            adam_rae,
            adam_ret,
            rng: ChaCha8Rng::seed_from_u64(sampler_seed(config.seed, Stage::One)),
        })
    }

    /// Switches to stage 2 with fresh optimizer moments. Stage-1 iterations
    /// completed so far become the phase offset.
    pub fn begin_stage2(&mut self) -> Result<()> {
        if self.stage == Stage::Two {
            return Ok(());
        }
        self.n1_done = self.iter;
        self.stage = Stage::Two;
        self.iter = 0;
        self.adam_rae = AdamState::for_group(&self.model.store, Group::Rae, self.config.adam())?;
        self.adam_ret = AdamState::for_group(&self.model.store, Group::Retrofit, self.config.adam())?;
        self.rng = ChaCha8Rng::seed_from_u64(sampler_seed(self.config.seed, Stage::Two));
        Ok(())
    }

    fn apply(&mut self, group: Group, grads: &crate::nn::Gradients) -> Result<()> {
        match group {
            Group::Rae => self.adam_rae.update(&mut self.model.store, grads),
            Group::Retrofit => self.adam_ret.update(&mut self.model.store, grads),
            Group::Frozen => Err(Error::Internal("frozen group scheduled for update".into())),
        }
    }

    fn record(&mut self, group: Group, loss: LossBreakdown) -> Result<()> {
        if !loss.total.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite loss at stage {} iteration {}",
                self.stage.number(),
                self.iter
            )));
        }
        self.log.push(LogRecord { iter: self.iter, stage: self.stage, group, loss });
        Ok(())
    }

    /// Runs stage-1 iterations until `config.n1` are complete. Description
    /// and action batches are drawn independently; items are distinct within
    /// a batch and batches are drawn independently of each other.
    pub fn run_stage1(
        &mut self,
        dsc: &[&DescriptionSequence],
        act: &[&MotionSequence],
        hook: StepHook,
    ) -> Result<()> {
        if self.stage != Stage::One {
            return Err(Error::Usage("stage 1 cannot run after stage 2 has begun".into()));
        }
        if dsc.is_empty() || act.is_empty() {
            return Err(Error::Config("stage 1 needs non-empty caption and motion pools".into()));
        }
        let b = self.config.batch_size;
        while self.iter < self.config.n1 {
            let i = self.iter + 1;
            let group = phase_for(i, Stage::One, self.config.n_ch, 0);
            let di = draw(&mut self.rng, dsc.len(), b);
            let ai = draw(&mut self.rng, act.len(), b);
            let bd: Vec<&DescriptionSequence> = di.iter().map(|&k| dsc[k]).collect();
            let ba: Vec<&MotionSequence> = ai.iter().map(|&k| act[k]).collect();
            let (loss, grads) = {
                let mut f = Forward::new(&self.model);
                let nodes = stage1_graph(&mut f, &bd, &ba)?;
                (nodes.breakdown(&f), f.g.backward(nodes.total)?)
            };
            self.apply(group, &grads)?;
            self.iter = i;
            self.record(group, loss)?;
            if !hook(self)? {
                return Ok(());
            }
        }
        Ok(())
    }

    /// Runs stage-2 iterations until `config.n2` are complete. A batch holds
    /// distinct pairs unless the batch is larger than the paired set, in
    /// which case pairs repeat (a repeated pair makes its hinge constant).
    pub fn run_stage2(&mut self, pairs: &[(&DescriptionSequence, &MotionSequence)], hook: StepHook) -> Result<()> {
        self.begin_stage2()?;
        if pairs.is_empty() {
            return Err(Error::Config("stage 2 needs at least one paired example".into()));
        }
        let b = self.config.batch_size;
        if b < 2 {
            return Err(Error::Config("stage 2 needs batch_size >= 2 for binding negatives".into()));
        }
        if b > pairs.len() && self.iter < self.config.n2 {
            warn!("batch size {b} exceeds {} pairs; sampling with replacement", pairs.len());
        }
        while self.iter < self.config.n2 {
            let i = self.iter + 1;
            let group = phase_for(i, Stage::Two, self.config.n_ch, self.n1_done);
            let batch: Vec<(&DescriptionSequence, &MotionSequence)> =
                draw(&mut self.rng, pairs.len(), b).into_iter().map(|k| pairs[k]).collect();
            let (loss, grads) = {
                let mut f = Forward::new(&self.model);
                let nodes = stage2_graph(&mut f, &batch, self.config.delta)?;
                (nodes.breakdown(&f), f.g.backward(nodes.total)?)
            };
            self.apply(group, &grads)?;
            self.iter = i;
            self.record(group, loss)?;
            if !hook(self)? {
                return Ok(());
            }
        }
        info!("stage 2 reached iteration {}", self.iter);
        Ok(())
    }

    /// Whether the current stage has reached its iteration target.
    pub fn stage_complete(&self) -> bool {
        match self.stage {
            Stage::One => self.iter >= self.config.n1,
            Stage::Two => self.iter >= self.config.n2,
        }
    }

    pub fn to_checkpoint(&self, extra: Header) -> Checkpoint {
        let mut header = extra;
        for (k, v) in self.config.to_pairs() {
            header.insert(format!("train.{k}"), v);
        }
        header.insert("train.stage".into(), self.stage.number().to_string());
        header.insert("train.iter".into(), self.iter.to_string());
        header.insert("train.n1_done".into(), self.n1_done.to_string());
        self.model.to_checkpoint(header, self.state_bytes())
    }

    fn state_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.push(self.stage.number());
        out.extend_from_slice(&(self.iter as u64).to_le_bytes());
        out.extend_from_slice(&(self.n1_done as u64).to_le_bytes());
        out.extend_from_slice(&self.rng.get_seed());
        out.extend_from_slice(&self.rng.get_stream().to_le_bytes());
        out.extend_from_slice(&self.rng.get_word_pos().to_le_bytes());
        for adam in [&self.adam_rae, &self.adam_ret] {
            out.extend_from_slice(&adam.step.to_le_bytes());
            let (m, v) = adam.moments();
            out.extend_from_slice(&(m.len() as u32).to_le_bytes());
            for (mb, vb) in m.iter().zip(v) {
                out.extend_from_slice(&(mb.len() as u32).to_le_bytes());
                for x in mb.iter().chain(vb) {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        out.extend_from_slice(&(self.log.len() as u64).to_le_bytes());
        for r in &self.log {
            out.extend_from_slice(&(r.iter as u64).to_le_bytes());
            out.push(r.stage.number());
            out.push(r.group.tag());
            for x in [r.loss.l_act, r.loss.l_dsc, r.loss.l_bnd, r.loss.total] {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    /// Restores a run. Without a training-state blob (a bare model
    /// checkpoint) the model starts a fresh run under `config`.
    pub fn from_checkpoint(ckpt: &Checkpoint, config: TrainConfig) -> Result<Self> {
        let model = Model::from_checkpoint(ckpt)?;
        let mut t = Self::new(model, config)?;
        if ckpt.state.is_empty() {
            return Ok(t);
        }
        let mut r = Reader::new(&ckpt.state);
        t.stage = Stage::from_number(r.u8()?).ok_or_else(|| Error::Corrupt("bad stage tag".into()))?;
        t.iter = r.u64()? as usize;
        t.n1_done = r.u64()? as usize;
        let seed: [u8; 32] = r.take(32)?.try_into().unwrap();
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.take(16)?.try_into().unwrap());
        t.rng = ChaCha8Rng::from_seed(seed);
        t.rng.set_stream(stream);
        t.rng.set_word_pos(word_pos);
        for adam in [&mut t.adam_rae, &mut t.adam_ret] {
            adam.step = r.u64()?;
            let n = r.u32()? as usize;
            let mut m = Vec::with_capacity(n);
            let mut v = Vec::with_capacity(n);
            for _ in 0..n {
                let len = r.u32()? as usize;
                m.push((0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?);
                v.push((0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?);
            }
            adam.set_moments(m, v)?;
        }
        let n = r.u64()? as usize;
        for _ in 0..n {
            let iter = r.u64()? as usize;
            let stage = Stage::from_number(r.u8()?).ok_or_else(|| Error::Corrupt("bad stage tag in log".into()))?;
            let group = Group::from_tag(r.u8()?).ok_or_else(|| Error::Corrupt("bad group tag in log".into()))?;
            let loss = LossBreakdown { l_act: r.f64()?, l_dsc: r.f64()?, l_bnd: r.f64()?, total: r.f64()? };
            t.log.push(LogRecord { iter, stage, group, loss });
        }
        if !r.is_done() {
            return Err(Error::Corrupt("trailing bytes in training state".into()));
        }
        Ok(t)
    }
}

/// Stage 1 on a model; returns the trained model and its log.
pub fn run_stage1(
    model: Model,
    config: TrainConfig,
    dsc: &[&DescriptionSequence],
    act: &[&MotionSequence],
) -> Result<(Model, Vec<LogRecord>)> {
    let mut t = Trainer::new(model, config)?;
    t.run_stage1(dsc, act, &mut |_| Ok(true))?;
    Ok((t.model, t.log))
}

/// Stage 2 on a model with phase offset `n1_done`.
pub fn run_stage2(
    model: Model,
    config: TrainConfig,
    n1_done: usize,
    pairs: &[(&DescriptionSequence, &MotionSequence)],
) -> Result<(Model, Vec<LogRecord>)> {
    let mut t = Trainer::new(model, config)?;
    t.iter = n1_done;
    t.run_stage2(pairs, &mut |_| Ok(true))?;
    Ok((t.model, t.log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_corpus, Corpus, GenConfig};
    use crate::model::ModelConfig;

    fn setup(hidden: usize) -> (Corpus, Model) {
        let corpus = generate_corpus(&GenConfig { per_class: 3, ..GenConfig::default() }, 0).unwrap();
        let cfg = ModelConfig {
            vocab_size: corpus.vocab.len(),
            hidden_dim: hidden,
            latent_dim: 6,
            retrofit_hidden: 8,
            ..ModelConfig::default()
        };
        let model = Model::new(cfg, &corpus.embeddings, corpus.mean_initial_frame(), 10, 1).unwrap();
        (corpus, model)
    }

    fn pools(c: &Corpus) -> (Vec<&DescriptionSequence>, Vec<&MotionSequence>) {
        (c.captions.iter().map(|c| &c.tokens).collect(), c.motions.iter().map(|m| &m.sequence).collect())
    }

    #[test]
    fn phase_table() {
        for i in 1..100 {
            assert_eq!(phase_for(i, Stage::One, 100, 0), Group::Retrofit);
        }
        for i in 100..200 {
            assert_eq!(phase_for(i, Stage::One, 100, 0), Group::Rae);
        }
        assert_eq!(phase_for(1, Stage::Two, 100, 11000), Group::Retrofit);
        assert_eq!(phase_for(100, Stage::Two, 100, 11000), Group::Rae);
        let alternating: Vec<Group> = (1..5).map(|i| phase_for(i, Stage::One, 1, 0)).collect();
        assert_eq!(alternating, vec![Group::Rae, Group::Retrofit, Group::Rae, Group::Retrofit]);
    }

    #[test]
    fn paired_subsets() {
        let pool: Vec<usize> = (0..20).collect();
        let all = make_paired_subset(&pool, 20, 3).unwrap();
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(sorted, pool);
        assert_eq!(all, make_paired_subset(&pool, 20, 3).unwrap());
        assert!(make_paired_subset(&pool, 0, 3).unwrap().is_empty());
        assert_ne!(make_paired_subset(&pool, 10, 0).unwrap(), make_paired_subset(&pool, 10, 1).unwrap());
        assert!(matches!(make_paired_subset(&pool, 21, 0), Err(Error::Input(_))));
    }

    #[test]
    fn zero_iterations_leave_the_model_alone() {
        let (corpus, model) = setup(4);
        let (dsc, act) = pools(&corpus);
        let cfg = TrainConfig { n1: 0, n2: 0, ..TrainConfig::default() };
        let (m1, log) = run_stage1(model.clone(), cfg, &dsc, &act).unwrap();
        assert_eq!(m1, model);
        assert!(log.is_empty());
        let pairs: Vec<_> = dsc.iter().zip(&act).map(|(d, a)| (*d, *a)).take(4).collect();
        let (m2, log) = run_stage2(model.clone(), cfg, 0, &pairs).unwrap();
        assert_eq!(m2, model);
        assert!(log.is_empty());
    }

    #[test]
    fn empty_pools_are_rejected() {
        let (corpus, model) = setup(4);
        let (dsc, _) = pools(&corpus);
        let cfg = TrainConfig { n1: 3, n2: 3, batch_size: 2, ..TrainConfig::default() };
        assert!(matches!(run_stage1(model.clone(), cfg, &dsc, &[]), Err(Error::Config(_))));
        assert!(matches!(run_stage2(model, cfg, 0, &[]), Err(Error::Config(_))));
    }

    #[test]
    fn only_the_scheduled_group_changes() {
        let (corpus, model) = setup(4);
        let (dsc, act) = pools(&corpus);
        let cfg = TrainConfig { n1: 6, n_ch: 2, batch_size: 2, ..TrainConfig::default() };
        let mut t = Trainer::new(model, cfg).unwrap();
        let mut prev = (t.model.store.group_bytes(Group::Rae), t.model.store.group_bytes(Group::Retrofit));
        let frozen = t.model.store.group_bytes(Group::Frozen);
        t.run_stage1(&dsc, &act, &mut |t| {
            let now = (t.model.store.group_bytes(Group::Rae), t.model.store.group_bytes(Group::Retrofit));
            let group = t.log.last().unwrap().group;
            match group {
                Group::Rae => assert!(now.0 != prev.0 && now.1 == prev.1),
                _ => assert!(now.1 != prev.1 && now.0 == prev.0),
            }
            assert_eq!(t.model.store.group_bytes(Group::Frozen), frozen);
            prev = now;
            Ok(true)
        })
        .unwrap();
        let groups: Vec<Group> = t.log.iter().map(|r| r.group).collect();
        use Group::*;
        assert_eq!(groups, vec![Retrofit, Rae, Rae, Retrofit, Retrofit, Rae]);
    }

    #[test]
    fn same_seed_same_log() {
        let (corpus, model) = setup(4);
        let (dsc, act) = pools(&corpus);
        let cfg = TrainConfig { n1: 5, batch_size: 3, ..TrainConfig::default() };
        let (ma, la) = run_stage1(model.clone(), cfg, &dsc, &act).unwrap();
        let (mb, lb) = run_stage1(model.clone(), cfg, &dsc, &act).unwrap();
        assert_eq!(render_log(&la), render_log(&lb));
        assert_eq!(ma, mb);
    }

    #[test]
    fn resume_is_bit_exact() {
        let (corpus, model) = setup(4);
        let (dsc, act) = pools(&corpus);
        let pairs: Vec<_> = corpus.captions.iter().map(|c| (&c.tokens, &corpus.motion(c.motion_id).sequence)).take(6).collect();
        let cfg = TrainConfig { n1: 7, n2: 5, n_ch: 3, batch_size: 3, ..TrainConfig::default() };

        let mut full = Trainer::new(model.clone(), cfg).unwrap();
        full.run_stage1(&dsc, &act, &mut |_| Ok(true)).unwrap();
        full.run_stage2(&pairs, &mut |_| Ok(true)).unwrap();

        for stop in [(Stage::One, 4), (Stage::Two, 2)] {
            let mut part = Trainer::new(model.clone(), cfg).unwrap();
            let mut stop_hook = |t: &Trainer| Ok(!(t.stage == stop.0 && t.iter == stop.1));
            part.run_stage1(&dsc, &act, &mut stop_hook).unwrap();
            if part.stage_complete() {
                part.run_stage2(&pairs, &mut stop_hook).unwrap();
            }
            let bytes = part.to_checkpoint(Header::new()).to_bytes().unwrap();
            let mut resumed = Trainer::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap(), cfg).unwrap();
            if resumed.stage == Stage::One {
                resumed.run_stage1(&dsc, &act, &mut |_| Ok(true)).unwrap();
            }
            resumed.run_stage2(&pairs, &mut |_| Ok(true)).unwrap();
            assert_eq!(render_log(&resumed.log), render_log(&full.log));
            assert_eq!(resumed.model, full.model);
            assert_eq!(
                resumed.to_checkpoint(Header::new()).to_bytes().unwrap(),
                full.to_checkpoint(Header::new()).to_bytes().unwrap()
            );
        }
        assert_eq!(full.log.iter().filter(|r| r.stage == Stage::One).count(), 7);
        assert_eq!(full.log.iter().filter(|r| r.stage == Stage::Two).count(), 5);
        // stage-2 phase continues from i + 7 with n_ch = 3: 8/3=2 even, 9/3=3 odd
        assert_eq!(full.log[7].group, Group::Retrofit);
        assert_eq!(full.log[8].group, Group::Rae);
    }

    #[test]
    fn log_line_format() {
        let r = LogRecord {
            iter: 3,
            stage: Stage::Two,
            group: Group::Rae,
            loss: LossBreakdown { l_act: 0.5, l_dsc: 1.25, l_bnd: 0.0, total: 1.75 },
        };
        assert_eq!(r.to_line(), "3,2,RAE,0.5,1.25,0,1.75");
        assert!(render_log(&[r]).starts_with(LOG_HEADER));
    }
}
