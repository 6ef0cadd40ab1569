//! Evaluation: direct translation scores, back-translation with relative
//! performance, latent-space diagnostics and 2-D projection.

mod bleu;
mod pca;

pub use bleu::{bleu, corpus_bleu, BleuStats, SMOOTHING_EPS};
pub use pca::project_latents;

use std::fmt::Write as _;

use crate::data::{Corpus, DescriptionSequence, EmbeddingTable, MotionSequence, Partition};
use crate::error::{Error, Result};
use crate::losses::psi;
use crate::model::{LatentVector, Model, DEFAULT_MAX_CAPTION};

pub const BLEU_ORDER: usize = 4;

/// What the evaluation protocol needs from a model. Test doubles implement
/// it to check the harness against known answers.
pub trait Translator {
    fn a2d(&self, motion: &MotionSequence) -> Result<DescriptionSequence>;
    fn d2a(&self, desc: &DescriptionSequence) -> Result<MotionSequence>;
    fn encode_action(&self, motion: &MotionSequence) -> Result<LatentVector>;
    fn encode_description(&self, desc: &DescriptionSequence) -> Result<LatentVector>;
}

impl Translator for Model {
    fn a2d(&self, motion: &MotionSequence) -> Result<DescriptionSequence> {
        Model::a2d(self, motion, DEFAULT_MAX_CAPTION)
    }

    fn d2a(&self, desc: &DescriptionSequence) -> Result<MotionSequence> {
        Model::d2a(self, desc, None)
    }

    fn encode_action(&self, motion: &MotionSequence) -> Result<LatentVector> {
        Model::encode_action(self, motion)
    }

    fn encode_description(&self, desc: &DescriptionSequence) -> Result<LatentVector> {
        Model::encode_description(self, desc)
    }
}

/// Cosine of mean-pooled word vectors, BOS/EOS excluded. Word order is
/// ignored by construction.
pub fn sentence_cosine(candidate: &[usize], reference: &[usize], emb: &EmbeddingTable) -> Result<f64> {
    let pool = |tokens: &[usize]| -> Result<Vec<f64>> {
        let body: Vec<usize> =
            tokens.iter().copied().filter(|&t| t != crate::data::BOS && t != crate::data::EOS).collect();
        if body.is_empty() {
            return Err(Error::Input("cannot pool an empty sentence".into()));
        }
        let mut v = vec![0.0; emb.dim()];
        for &t in &body {
            if t >= emb.rows() {
                return Err(Error::Vocabulary(format!("token id {t} outside embedding table")));
            }
            v.iter_mut().zip(emb.row(t)).for_each(|(a, b)| *a += b);
        }
        v.iter_mut().for_each(|a| *a /= body.len() as f64);
        Ok(v)
    };
    let (a, b) = (pool(candidate)?, pool(reference)?);
    let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let norms = a.iter().map(|x| x * x).sum::<f64>().sqrt() * b.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(if norms == 0.0 { 0.0 } else { (dot / norms).clamp(-1.0, 1.0) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemScore {
    pub id: usize,
    pub bleu: f64,
    pub cosine: f64,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    /// Mean sentence BLEU over items.
    pub bleu: f64,
    /// Corpus BLEU over the same items.
    pub corpus_bleu: f64,
    pub cosine: f64,
    pub items: Vec<ItemScore>,
}

impl ScoreReport {
    pub fn count(&self) -> usize {
        self.items.len()
    }

    pub fn to_kv(&self, prefix: &str) -> String {
        format!(
            "{prefix}.bleu={}\n{prefix}.corpus_bleu={}\n{prefix}.cosine={}\n{prefix}.count={}\n",
            self.bleu,
            self.corpus_bleu,
            self.cosine,
            self.count()
        )
    }

    /// `item_id,metric,value` rows.
    pub fn items_csv(&self) -> String {
        let mut out = String::from("item_id,metric,value\n");
        for it in &self.items {
            let _ = writeln!(out, "{},bleu,{}", it.id, it.bleu);
            let _ = writeln!(out, "{},cosine,{}", it.id, it.cosine);
        }
        out
    }
}

fn score_items(corpus: &Corpus, scored: Vec<(usize, DescriptionSequence, usize)>) -> Result<ScoreReport> {
    if scored.is_empty() {
        return Err(Error::Input("no evaluation items".into()));
    }
    let mut items = Vec::with_capacity(scored.len());
    let mut corpus_items = Vec::with_capacity(scored.len());
    for (id, out, motion_id) in scored {
        let refs: Vec<Vec<usize>> = corpus.captions_of(motion_id).iter().map(|c| c.tokens.body().to_vec()).collect();
        let cand = out.body().to_vec();
        let b = bleu(&cand, &refs, BLEU_ORDER)?;
        let cosine = if cand.is_empty() {
            0.0
        } else {
            refs.iter()
                .map(|r| sentence_cosine(&cand, r, &corpus.embeddings))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max)
        };
        items.push(ItemScore { id, bleu: b, cosine, output: corpus.caption_text(out.tokens()) });
        corpus_items.push((cand, refs));
    }
    let n = items.len() as f64;
    Ok(ScoreReport {
        bleu: items.iter().map(|i| i.bleu).sum::<f64>() / n,
        corpus_bleu: corpus_bleu(&corpus_items, BLEU_ORDER)?,
        cosine: items.iter().map(|i| i.cosine).sum::<f64>() / n,
        items,
    })
}

/// Direct action-to-description translation of every motion in `part`,
/// scored against all captions of that motion.
pub fn experiment1(model: &dyn Translator, corpus: &Corpus, part: Partition) -> Result<ScoreReport> {
    let scored = corpus
        .motions_in(part)
        .into_iter()
        .map(|m| Ok((m.id, model.a2d(&m.sequence)?, m.id)))
        .collect::<Result<Vec<_>>>()?;
    score_items(corpus, scored)
}

/// Back-translation ratios against a reference direct score, in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeReport {
    pub bleu: f64,
    pub cosine: f64,
}

impl RelativeReport {
    pub fn to_kv(&self, prefix: &str) -> String {
        format!("{prefix}.bleu={}\n{prefix}.cosine={}\n", self.bleu, self.cosine)
    }
}

/// `back / direct * 100`.
pub fn relative_performance(back: f64, direct: f64) -> Result<f64> {
    if !(direct > 0.0) {
        return Err(Error::Numerical(format!("relative performance undefined for direct score {direct}")));
    }
    Ok(back / direct * 100.0)
}

/// Description → action by `model`, action → description by
/// `back_translator`, for every caption in `part`. Scores are relative to
/// `reference_direct`, the reference model's experiment-1 report.
pub fn experiment2(
    model: &dyn Translator,
    back_translator: &dyn Translator,
    reference_direct: &ScoreReport,
    corpus: &Corpus,
    part: Partition,
) -> Result<(ScoreReport, RelativeReport)> {
    let scored = corpus
        .captions_in(part)
        .into_iter()
        .map(|c| {
            let action = model.d2a(&c.tokens)?;
            Ok((c.id, back_translator.a2d(&action)?, c.motion_id))
        })
        .collect::<Result<Vec<_>>>()?;
    let report = score_items(corpus, scored)?;
    let rel = RelativeReport {
        bleu: relative_performance(report.bleu, reference_direct.bleu)?,
        cosine: relative_performance(report.cosine, reference_direct.cosine)?,
    };
    Ok((report, rel))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentReport {
    /// Mean distance between each caption latent and its own motion's latent.
    pub intra: f64,
    /// Mean distance between caption latents and other motions' latents.
    pub inter: f64,
    /// Fraction of captions whose nearest motion latent is their own motion.
    pub retrieval: f64,
    pub chance: f64,
    pub captions: usize,
    pub motions: usize,
}

impl LatentReport {
    pub fn to_kv(&self, prefix: &str) -> String {
        format!(
            "{prefix}.intra={}\n{prefix}.inter={}\n{prefix}.retrieval={}\n{prefix}.chance={}\n{prefix}.captions={}\n{prefix}.motions={}\n",
            self.intra, self.inter, self.retrieval, self.chance, self.captions, self.motions
        )
    }
}

pub fn latent_diagnostics(model: &dyn Translator, corpus: &Corpus, part: Partition) -> Result<LatentReport> {
    let motions = corpus.motions_in(part);
    let captions = corpus.captions_in(part);
    if motions.len() < 2 || captions.is_empty() {
        return Err(Error::Input("latent diagnostics need at least 2 motions and 1 caption".into()));
    }
    let za: Vec<(usize, LatentVector)> =
        motions.iter().map(|m| Ok((m.id, model.encode_action(&m.sequence)?))).collect::<Result<_>>()?;
    let (mut intra, mut n_intra, mut inter, mut n_inter, mut hits) = (0.0, 0usize, 0.0, 0usize, 0usize);
    for c in &captions {
        let zd = model.encode_description(&c.tokens)?;
        let mut best = (f64::INFINITY, usize::MAX);
        for (mid, z) in &za {
            let d = psi(zd.values(), z.values())?;
            if *mid == c.motion_id {
                intra += d;
                n_intra += 1;
            } else {
                inter += d;
                n_inter += 1;
            }
            if d < best.0 {
                best = (d, *mid);
            }
        }
        hits += usize::from(best.1 == c.motion_id);
    }
    Ok(LatentReport {
        intra: intra / n_intra.max(1) as f64,
        inter: inter / n_inter.max(1) as f64,
        retrieval: hits as f64 / captions.len() as f64,
        chance: 1.0 / motions.len() as f64,
        captions: captions.len(),
        motions: motions.len(),
    })
}

/// `id,label,x,y` rows.
pub fn projection_csv(ids: &[usize], labels: &[String], coords: &[(f64, f64)]) -> String {
    let mut out = String::from("id,label,x,y\n");
    for ((id, label), (x, y)) in ids.iter().zip(labels).zip(coords) {
        let _ = writeln!(out, "{id},{label},{x},{y}");
    }
    out
}

/// Sample mean and standard deviation (n - 1 denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_corpus, GenConfig};
    use std::collections::HashMap;

    fn corpus() -> Corpus {
        generate_corpus(&GenConfig { per_class: 6, ..GenConfig::default() }, 2).unwrap()
    }

    /// Recognizes corpus motions by their first frame and answers with
    /// stored captions; latents are one-hot motion indicators.
    struct Oracle<'c> {
        corpus: &'c Corpus,
        by_frame: HashMap<Vec<u64>, usize>,
    }

    impl<'c> Oracle<'c> {
        fn new(corpus: &'c Corpus) -> Self {
            let by_frame = corpus
                .motions
                .iter()
                .map(|m| (m.sequence.frame(0).iter().map(|v| v.to_bits()).collect(), m.id))
                .collect();
            Self { corpus, by_frame }
        }

        fn motion_of(&self, m: &MotionSequence) -> usize {
            self.by_frame[&m.frame(0).iter().map(|v| v.to_bits()).collect::<Vec<_>>()]
        }

        fn owner(&self, d: &DescriptionSequence) -> usize {
            self.corpus.captions.iter().find(|c| &c.tokens == d).unwrap().motion_id
        }
    }

    impl Translator for Oracle<'_> {
        fn a2d(&self, m: &MotionSequence) -> Result<DescriptionSequence> {
            Ok(self.corpus.captions_of(self.motion_of(m))[0].tokens.clone())
        }
        fn d2a(&self, d: &DescriptionSequence) -> Result<MotionSequence> {
            Ok(self.corpus.motion(self.owner(d)).sequence.clone())
        }
        fn encode_action(&self, m: &MotionSequence) -> Result<LatentVector> {
            let mut v = vec![0.0; self.corpus.motions.len()];
            v[self.motion_of(m)] = 1.0;
            Ok(LatentVector::new(v))
        }
        fn encode_description(&self, d: &DescriptionSequence) -> Result<LatentVector> {
            let mut v = vec![0.0; self.corpus.motions.len()];
            v[self.owner(d)] = 1.0;
            Ok(LatentVector::new(v))
        }
    }

    #[test]
    fn echo_model_scores_perfectly() {
        let c = corpus();
        let oracle = Oracle::new(&c);
        let r1 = experiment1(&oracle, &c, Partition::Test).unwrap();
        assert_eq!(r1.bleu, 1.0);
        assert_eq!(r1.corpus_bleu, 1.0);
        assert!((r1.cosine - 1.0).abs() < 1e-12);
        assert_eq!(r1.count(), c.motions_in(Partition::Test).len());
        let (r2, rel) = experiment2(&oracle, &oracle, &r1, &c, Partition::Test).unwrap();
        assert_eq!(r2.bleu, 1.0);
        assert_eq!(r2.count(), c.captions_in(Partition::Test).len());
        assert_eq!(rel.bleu, 100.0);
        let lat = latent_diagnostics(&oracle, &c, Partition::Test).unwrap();
        assert_eq!(lat.intra, 0.0);
        assert_eq!(lat.retrieval, 1.0);
        assert!(lat.inter > 0.0 && lat.inter.is_finite());
    }

    #[test]
    fn relative_performance_matches_published_roundings() {
        let self_ratio = relative_performance(0.259, 0.269).unwrap();
        assert!((self_ratio - 96.3).abs() < 0.2 && (self_ratio - 96.4).abs() < 0.2);
        let proposed = relative_performance(0.242, 0.269).unwrap();
        assert!((proposed - 90.0).abs() < 0.3 && (proposed - 90.2).abs() < 0.3);
        assert!(relative_performance(0.1, 0.0).is_err());
    }

    #[test]
    fn cosine_properties() {
        let c = corpus();
        let s = c.vocab.encode(&["a", "person", "walks", "forward"]).unwrap();
        let mut p = s.clone();
        p.reverse();
        assert!((sentence_cosine(&s, &s, &c.embeddings).unwrap() - 1.0).abs() < 1e-12);
        assert!((sentence_cosine(&s, &p, &c.embeddings).unwrap() - 1.0).abs() < 1e-12);
        // markers alone pool to nothing
        assert!(sentence_cosine(&[crate::data::BOS], &s, &c.embeddings).is_err());
        assert!(sentence_cosine(&[], &s, &c.embeddings).is_err());
    }

    #[test]
    fn orthogonal_pooled_vectors_score_zero() {
        use crate::nn::Tensor;
        let emb = EmbeddingTable::new(
            Tensor::new(vec![4, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 2.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(sentence_cosine(&[2], &[3], &emb).unwrap(), 0.0);
    }

    #[test]
    fn untrained_models_retrieve_near_chance() {
        let c = generate_corpus(&GenConfig::default(), 0).unwrap();
        let cfg = crate::model::ModelConfig { vocab_size: c.vocab.len(), ..Default::default() };
        for seed in 0..5 {
            let m = Model::new(cfg, &c.embeddings, c.mean_initial_frame(), c.mean_train_length(), seed).unwrap();
            let lat = latent_diagnostics(&m, &c, Partition::Test).unwrap();
            assert!(lat.retrieval < 3.0 * lat.chance, "seed {seed}: {} vs chance {}", lat.retrieval, lat.chance);
            assert!(lat.intra >= 0.0 && lat.inter >= 0.0);
        }
    }

    #[test]
    fn mean_and_spread() {
        assert_eq!(mean_std(&[2.0, 4.0, 6.0]), (4.0, 2.0));
        assert_eq!(mean_std(&[1.5]), (1.5, 0.0));
    }
}
