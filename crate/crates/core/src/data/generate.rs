//! Synthetic stand-in for a motion-language corpus.
//!
//! Each class is a parameterized trajectory family over six channels
//! (two pseudo-leg, two pseudo-arm, root translation, root rotation).
//! Motions are performed slowly or quickly; captions are drawn from
//! class templates with synonym substitution and always name the speed,
//! so a caption pins down a (class, speed) cell rather than one motion.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::preprocess::{downsample, normalize, split, NormStats, SplitRatios};
use crate::data::vocab::{build_embeddings, Vocabulary, WordGroup};
use crate::data::{Caption, Corpus, DescriptionSequence, Motion, MotionSequence, Partition};
use crate::error::{Error, Result};

pub const ACTION_DIM: usize = 6;
const RAW_HZ: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub classes: usize,
    pub per_class: usize,
    pub captions_per_motion: usize,
    /// Raw (pre-downsampling) length range, inclusive.
    pub min_len: usize,
    pub max_len: usize,
    pub downsample: usize,
    /// Standard deviation of additive frame noise.
    pub noise: f64,
    pub embedding_dim: usize,
    pub ratios: SplitRatios,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            classes: 8,
            per_class: 64,
            captions_per_motion: 2,
            min_len: 100,
            max_len: 250,
            downsample: 10,
            noise: 0.02,
            embedding_dim: 16,
            ratios: SplitRatios::default(),
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config(format!("need ≥ 2 classes, got {}", self.classes)));
        }
        if self.classes > CLASS_LIBRARY.len() {
            return Err(Error::Config(format!("at most {} classes are available", CLASS_LIBRARY.len())));
        }
        if self.per_class == 0 {
            return Err(Error::Config("per_class must be positive".into()));
        }
        if !(1..=3).contains(&self.captions_per_motion) {
            return Err(Error::Config("captions_per_motion must be 1, 2 or 3".into()));
        }
        if self.downsample == 0 || self.min_len > self.max_len || self.min_len < 2 * self.downsample {
            return Err(Error::Config(format!(
                "length range {}..={} incompatible with downsample factor {}",
                self.min_len, self.max_len, self.downsample
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config("noise must be a finite non-negative number".into()));
        }
        self.ratios.validate()
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        vec![
            ("classes".into(), self.classes.to_string()),
            ("per_class".into(), self.per_class.to_string()),
            ("captions_per_motion".into(), self.captions_per_motion.to_string()),
            ("min_len".into(), self.min_len.to_string()),
            ("max_len".into(), self.max_len.to_string()),
            ("downsample".into(), self.downsample.to_string()),
            ("noise".into(), self.noise.to_string()),
            ("embedding_dim".into(), self.embedding_dim.to_string()),
            ("ratio_train".into(), self.ratios.train.to_string()),
            ("ratio_validation".into(), self.ratios.validation.to_string()),
            ("ratio_test".into(), self.ratios.test.to_string()),
        ]
    }

    /// Applies one `key=value` setting; returns false for unknown keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value.trim().parse().map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
        }
        match key {
            "classes" => self.classes = parse(key, value)?,
            "per_class" => self.per_class = parse(key, value)?,
            "captions_per_motion" => self.captions_per_motion = parse(key, value)?,
            "min_len" => self.min_len = parse(key, value)?,
            "max_len" => self.max_len = parse(key, value)?,
            "downsample" => self.downsample = parse(key, value)?,
            "noise" => self.noise = parse(key, value)?,
            "embedding_dim" => self.embedding_dim = parse(key, value)?,
            "ratio_train" => self.ratios.train = parse(key, value)?,
            "ratio_validation" => self.ratios.validation = parse(key, value)?,
            "ratio_test" => self.ratios.test = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// `offset + amp * sin(2π freq s t + phase) + ramp s t` for speed factor `s`.
#[derive(Debug, Clone, Copy)]
struct Channel {
    offset: f64,
    amp: f64,
    freq: f64,
    phase: f64,
    ramp: f64,
}

const fn ch(offset: f64, amp: f64, freq: f64, phase: f64, ramp: f64) -> Channel {
    Channel { offset, amp, freq, phase, ramp }
}

const STILL: Channel = ch(0.0, 0.0, 0.0, 0.0, 0.0);

/// Placeholder in a template for the speed adverb group.
const SPEED: &str = "@speed";

pub struct ClassFamily {
    pub name: &'static str,
    channels: [Channel; ACTION_DIM],
    templates: &'static [&'static [&'static str]],
}

pub const CLASS_LIBRARY: [ClassFamily; 8] = [
    ClassFamily {
        name: "walk_forward",
        channels: [ch(0.0, 0.8, 1.0, 0.0, 0.0), ch(0.0, 0.8, 1.0, PI, 0.0), ch(0.4, 0.3, 1.0, PI, 0.0), ch(0.0, 0.3, 1.0, 0.0, 0.0), ch(0.0, 0.0, 0.0, 0.0, 1.0), STILL],
        templates: &[&["det", "subj", "walk", "forward", SPEED], &["det", "subj", SPEED, "walk", "forward"]],
    },
    ClassFamily {
        name: "walk_backward",
        channels: [ch(0.0, 0.6, 0.8, PI / 2.0, 0.0), ch(0.0, 0.6, 0.8, 1.5 * PI, 0.0), ch(0.0, 0.2, 0.8, 0.0, 0.0), ch(0.0, 0.2, 0.8, PI, 0.0), ch(0.0, 0.0, 0.0, 0.0, -0.8), STILL],
        templates: &[&["det", "subj", "walk", "backward", SPEED], &["det", "subj", SPEED, "walk", "backward"]],
    },
    ClassFamily {
        name: "wave",
        channels: [STILL, STILL, ch(-0.3, 0.0, 0.0, 0.0, 0.0), ch(0.9, 0.6, 2.0, 0.0, 0.0), STILL, STILL],
        templates: &[&["det", "subj", "wave", "his", "hand", SPEED], &["det", "subj", SPEED, "wave", "his", "hand"]],
    },
    ClassFamily {
        name: "jump",
        channels: [ch(0.2, 0.7, 1.2, 0.0, 0.0), ch(0.2, 0.7, 1.2, 0.0, 0.0), ch(0.5, 0.5, 1.2, 0.0, 0.0), ch(0.5, 0.5, 1.2, 0.0, 0.0), ch(0.0, 0.3, 1.2, PI / 2.0, 0.0), STILL],
        templates: &[&["det", "subj", "jump", "up", SPEED], &["det", "subj", SPEED, "jump"]],
    },
    ClassFamily {
        name: "turn_left",
        channels: [ch(0.0, 0.3, 0.8, 0.0, 0.0), ch(0.0, 0.3, 0.8, PI, 0.0), STILL, STILL, STILL, ch(0.0, 0.0, 0.0, 0.0, 1.2)],
        templates: &[&["det", "subj", "turn", "left", SPEED], &["det", "subj", SPEED, "turn", "left"]],
    },
    ClassFamily {
        name: "turn_right",
        channels: [ch(0.0, 0.3, 0.8, 0.0, 0.0), ch(0.0, 0.3, 0.8, PI, 0.0), STILL, STILL, STILL, ch(0.0, 0.0, 0.0, 0.0, -1.2)],
        templates: &[&["det", "subj", "turn", "right", SPEED], &["det", "subj", SPEED, "turn", "right"]],
    },
    ClassFamily {
        name: "kick",
        channels: [ch(-0.1, 0.1, 0.7, 0.0, 0.0), ch(0.3, 1.0, 0.7, 0.0, 0.0), ch(0.2, 0.2, 0.7, PI, 0.0), ch(0.2, 0.2, 0.7, 0.0, 0.0), STILL, STILL],
        templates: &[&["det", "subj", "kick", SPEED], &["det", "subj", SPEED, "kick", "his", "leg"]],
    },
    ClassFamily {
        name: "squat",
        channels: [ch(-0.6, 0.5, 0.6, PI / 2.0, 0.0), ch(-0.6, 0.5, 0.6, PI / 2.0, 0.0), ch(0.6, 0.2, 0.6, 0.0, 0.0), ch(0.6, 0.2, 0.6, 0.0, 0.0), ch(-0.4, 0.3, 0.6, PI / 2.0, 0.0), STILL],
        templates: &[&["det", "subj", "squat", "down", SPEED], &["det", "subj", SPEED, "squat"]],
    },
];

const SPEEDS: [(&str, f64); 2] = [("slow", 0.6), ("fast", 1.5)];

pub(crate) fn word_groups() -> Vec<WordGroup> {
    let table: &[(&str, &[&str])] = &[
        ("det", &["a", "the"]),
        ("subj", &["person", "human", "man"]),
        ("walk", &["walks", "strides"]),
        ("forward", &["forward", "ahead"]),
        ("backward", &["backward", "backwards"]),
        ("wave", &["waves", "swings"]),
        ("his", &["his"]),
        ("hand", &["hand", "arm"]),
        ("jump", &["jumps", "hops"]),
        ("up", &["up"]),
        ("turn", &["turns", "rotates"]),
        ("left", &["left"]),
        ("right", &["right"]),
        ("kick", &["kicks"]),
        ("leg", &["leg", "foot"]),
        ("squat", &["squats", "crouches"]),
        ("down", &["down"]),
        ("slow", &["slowly", "gently"]),
        ("fast", &["quickly", "rapidly"]),
    ];
    table
        .iter()
        .map(|(name, words)| WordGroup { name: name.to_string(), words: words.iter().map(|w| w.to_string()).collect() })
        .collect()
}

fn raw_motion(family: &ClassFamily, speed: f64, len: usize, noise: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let speed = speed * rng.random_range(0.9..1.1);
    let jitter: Vec<(f64, f64)> =
        (0..ACTION_DIM).map(|_| (rng.random_range(0.85..1.15), rng.random_range(-0.3..0.3))).collect();
    let normal = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).expect("finite noise");
    (0..len)
        .map(|f| {
            let t = f as f64 / RAW_HZ;
            family
                .channels
                .iter()
                .zip(&jitter)
                .map(|(c, &(amp_j, phase_j))| {
                    let wave = c.amp * amp_j * (2.0 * PI * c.freq * speed * t + c.phase + phase_j).sin();
                    let v = c.offset + wave + c.ramp * speed * t;
                    if noise > 0.0 {
                        v + normal.sample(rng)
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect()
}

fn sample_caption(
    family: &ClassFamily,
    speed_group: &str,
    groups: &[WordGroup],
    vocab: &Vocabulary,
    rng: &mut ChaCha8Rng,
) -> Result<DescriptionSequence> {
    let template = family.templates[rng.random_range(0..family.templates.len())];
    let mut body = Vec::with_capacity(template.len());
    for &slot in template {
        let name = if slot == SPEED { speed_group } else { slot };
        let group = groups
            .iter()
            .find(|g| g.name == name)
            .ok_or_else(|| Error::Internal(format!("template slot `{name}` has no word group")))?;
        let word = &group.words[rng.random_range(0..group.words.len())];
        body.push(vocab.id(word).expect("group words are in the vocabulary"));
    }
    DescriptionSequence::from_body(&body, vocab.len())
}

/// Builds the full corpus: raw motions, downsampling, an 80/10/10 style
/// split by motion, train-only normalization, captions and embeddings.
pub fn generate_corpus(config: &GenConfig, seed: u64) -> Result<Corpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = word_groups();
    let vocab = Vocabulary::from_groups(&groups)?;

    let mut raw = Vec::new();
    for (class, family) in CLASS_LIBRARY.iter().take(config.classes).enumerate() {
        for m in 0..config.per_class {
            let (speed_group, speed) = SPEEDS[m % 2];
            let len = rng.random_range(config.min_len..=config.max_len);
            let frames = raw_motion(family, speed, len, config.noise, &mut rng);
            let seq = downsample(&MotionSequence::from_frames(&frames)?, config.downsample)?;
            raw.push((class, speed_group, len, seq));
        }
    }

    let partitions = split(raw.len(), &config.ratios, seed)?;
    let train: Vec<&MotionSequence> =
        raw.iter().zip(&partitions).filter(|(_, p)| **p == Partition::Train).map(|(r, _)| &r.3).collect();
    let norm = NormStats::from_motions(&train)?;

    let mut motions = Vec::with_capacity(raw.len());
    let mut captions = Vec::new();
    for (id, ((class, speed_group, raw_len, seq), partition)) in raw.into_iter().zip(partitions).enumerate() {
        let family = &CLASS_LIBRARY[class];
        let mut drawn: Vec<DescriptionSequence> = Vec::new();
        for _ in 0..config.captions_per_motion {
            let mut cap = sample_caption(family, speed_group, &groups, &vocab, &mut rng)?;
            for _ in 0..20 {
                if !drawn.contains(&cap) {
                    break;
                }
                cap = sample_caption(family, speed_group, &groups, &vocab, &mut rng)?;
            }
            drawn.push(cap);
        }
        for tokens in drawn {
            captions.push(Caption { id: captions.len(), motion_id: id, tokens });
        }
        motions.push(Motion { id, class, raw_len, partition, sequence: normalize(&seq, &norm)? });
    }

    let embeddings = build_embeddings(&vocab, config.embedding_dim, seed ^ 0x5eed_e3b)?;
    Ok(Corpus {
        config: config.clone(),
        seed,
        class_names: CLASS_LIBRARY.iter().take(config.classes).map(|f| f.name.to_string()).collect(),
        motions,
        captions,
        vocab,
        embeddings,
        norm,
    })
}

fn resample(seq: &MotionSequence, points: usize) -> Vec<f64> {
    let t_max = (seq.len() - 1) as f64;
    let mut out = Vec::with_capacity(points * seq.dim());
    for p in 0..points {
        let pos = t_max * p as f64 / (points - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(seq.len() - 1);
        let w = pos - lo as f64;
        for d in 0..seq.dim() {
            out.push(seq.frame(lo)[d] * (1.0 - w) + seq.frame(hi)[d] * w);
        }
    }
    out
}

/// Fraction of motions whose nearest class centroid (motions linearly
/// resampled to 16 time points, flattened) is their own class.
pub fn nearest_centroid_accuracy(corpus: &Corpus) -> f64 {
    let k = corpus.class_names.len();
    let feats: Vec<(usize, Vec<f64>)> = corpus.motions.iter().map(|m| (m.class, resample(&m.sequence, 16))).collect();
    let dim = feats[0].1.len();
    let mut centroids = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (c, f) in &feats {
        counts[*c] += 1;
        for (a, v) in centroids[*c].iter_mut().zip(f) {
            *a += v;
        }
    }
    for (c, n) in centroids.iter_mut().zip(&counts) {
        for v in c.iter_mut() {
            *v /= (*n).max(1) as f64;
        }
    }
    let correct = feats
        .iter()
        .filter(|(c, f)| {
            let best = (0..k)
                .min_by(|&a, &b| {
                    let da: f64 = centroids[a].iter().zip(f).map(|(x, y)| (x - y) * (x - y)).sum();
                    let db: f64 = centroids[b].iter().zip(f).map(|(x, y)| (x - y) * (x - y)).sum();
                    da.total_cmp(&db)
                })
                .unwrap();
            best == *c
        })
        .count();
    correct as f64 / feats.len() as f64
}
