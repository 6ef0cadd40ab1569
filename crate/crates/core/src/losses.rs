//! Reconstruction, cross-entropy and binding losses.
//!
//! Every batch loss is a sum over items multiplied by `1/B`, accumulated
//! left to right, both in the plain-number versions and on the graph, so the
//! two agree to the last bit wherever the per-item terms do.

use crate::data::{DescriptionSequence, MotionSequence};
use crate::error::{Error, Result};
use crate::model::{Forward, Model};
use crate::nn::Var;

/// Default binding margin.
pub const DEFAULT_DELTA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub l_act: f64,
    pub l_dsc: f64,
    pub l_bnd: f64,
    pub total: f64,
}

fn batch_mean(terms: impl IntoIterator<Item = f64>, b: usize) -> f64 {
    terms.into_iter().fold(0.0, |acc, x| acc + x) * (1.0 / b as f64)
}

/// Squared error over predicted steps `2..T`; frame 1 of `pred` is the seed
/// and is not scored.
pub fn loss_act(pred: &MotionSequence, truth: &MotionSequence) -> Result<f64> {
    if pred.len() != truth.len() || pred.dim() != truth.dim() {
        return Err(Error::Input(format!(
            "prediction is {}x{}, truth is {}x{}",
            pred.len(),
            pred.dim(),
            truth.len(),
            truth.dim()
        )));
    }
    if truth.len() < 2 {
        return Err(Error::Input("loss_act needs at least 2 frames".into()));
    }
    Ok((1..truth.len())
        .map(|t| pred.frame(t).iter().zip(truth.frame(t)).map(|(p, q)| (p - q) * (p - q)).fold(0.0, |a, x| a + x))
        .fold(0.0, |a, x| a + x))
}

/// Cross-entropy of one-hot targets: `dists[t]` predicts token `t + 1`.
pub fn loss_dsc(dists: &[Vec<f64>], target: &DescriptionSequence) -> Result<f64> {
    let tokens = target.tokens();
    if dists.len() != tokens.len() - 1 {
        return Err(Error::Input(format!("{} distributions for {} target steps", dists.len(), tokens.len() - 1)));
    }
    let mut total = 0.0;
    for (t, d) in dists.iter().enumerate() {
        let w = tokens[t + 1];
        let p = *d
            .get(w)
            .ok_or_else(|| Error::Vocabulary(format!("target {w} outside distribution of {}", d.len())))?;
        if !(p > 0.0) {
            return Err(Error::Numerical(format!("probability {p} at target {w}, step {t}")));
        }
        total -= p.ln();
    }
    Ok(total)
}

/// Unsquared Euclidean distance.
pub fn psi(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Input(format!("latents of length {} and {}", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).fold(0.0, |s, v| s + v).sqrt())
}

fn check_bnd(b_act: usize, b_dsc: usize, delta: f64) -> Result<()> {
    if b_act != b_dsc {
        return Err(Error::Input(format!("{b_act} action latents vs {b_dsc} description latents")));
    }
    if b_act < 2 {
        return Err(Error::Input("binding loss needs a batch of at least 2 for negatives".into()));
    }
    if !(delta > 0.0) {
        return Err(Error::Config(format!("margin must be positive, got {delta}")));
    }
    Ok(())
}

/// Pull matched latents together and push each action latent at least
/// `delta` further from every other caption latent than from its own.
pub fn loss_bnd(z_act: &[Vec<f64>], z_dsc: &[Vec<f64>], delta: f64) -> Result<f64> {
    check_bnd(z_act.len(), z_dsc.len(), delta)?;
    let b = z_act.len();
    let mut terms = Vec::with_capacity(b);
    for i in 0..b {
        let pos = psi(&z_act[i], &z_dsc[i])?;
        let mut item = pos;
        for j in (0..b).filter(|&j| j != i) {
            item += (delta + (pos - psi(&z_act[i], &z_dsc[j])?)).max(0.0);
        }
        terms.push(item);
    }
    Ok(batch_mean(terms, b))
}

/// Batch-mean action reconstruction loss.
pub fn loss_act_batch(preds: &[MotionSequence], truths: &[MotionSequence]) -> Result<f64> {
    if preds.len() != truths.len() || preds.is_empty() {
        return Err(Error::Input("empty or mismatched action batch".into()));
    }
    let terms = preds.iter().zip(truths).map(|(p, t)| loss_act(p, t)).collect::<Result<Vec<_>>>()?;
    Ok(batch_mean(terms, preds.len()))
}

/// Batch-mean description loss.
pub fn loss_dsc_batch(dists: &[Vec<Vec<f64>>], targets: &[DescriptionSequence]) -> Result<f64> {
    if dists.len() != targets.len() || dists.is_empty() {
        return Err(Error::Input("empty or mismatched description batch".into()));
    }
    let terms = dists.iter().zip(targets).map(|(d, t)| loss_dsc(d, t)).collect::<Result<Vec<_>>>()?;
    Ok(batch_mean(terms, dists.len()))
}

/// Graph nodes of one loss evaluation.
#[derive(Debug, Clone, Copy)]
pub struct LossNodes {
    pub l_act: Var,
    pub l_dsc: Var,
    pub l_bnd: Option<Var>,
    pub total: Var,
}

impl LossNodes {
    pub fn breakdown(&self, f: &Forward) -> LossBreakdown {
        LossBreakdown {
            l_act: f.g.scalar(self.l_act),
            l_dsc: f.g.scalar(self.l_dsc),
            l_bnd: self.l_bnd.map_or(0.0, |v| f.g.scalar(v)),
            total: f.g.scalar(self.total),
        }
    }
}

fn mean_node(f: &mut Forward, terms: &[Var]) -> Var {
    let s = f.g.add_n(terms);
    f.g.scale(s, 1.0 / terms.len() as f64)
}

/// Binding loss on graph latents.
pub fn bnd_graph(f: &mut Forward, z_act: &[Var], z_dsc: &[Var], delta: f64) -> Result<Var> {
    check_bnd(z_act.len(), z_dsc.len(), delta)?;
    let b = z_act.len();
    let margin = f.g.constant(vec![delta]);
    let mut terms = Vec::with_capacity(b);
    for i in 0..b {
        let pos = f.g.distance(z_act[i], z_dsc[i]);
        let mut parts = vec![pos];
        for j in (0..b).filter(|&j| j != i) {
            let neg = f.g.distance(z_act[i], z_dsc[j]);
            let gap = f.g.sub(pos, neg);
            let shifted = f.g.add(margin, gap);
            parts.push(f.g.relu(shifted));
        }
        terms.push(f.g.add_n(&parts));
    }
    Ok(mean_node(f, &terms))
}

fn reconstruction(f: &mut Forward, dsc: &[&DescriptionSequence], act: &[&MotionSequence]) -> Result<(Var, Var, Vec<Var>, Vec<Var>)> {
    if dsc.is_empty() || act.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let mut za = Vec::with_capacity(act.len());
    let mut la = Vec::with_capacity(act.len());
    for m in act {
        let z = f.encode_action(m)?;
        la.push(f.action_loss(z, m));
        za.push(z);
    }
    let mut zd = Vec::with_capacity(dsc.len());
    let mut ld = Vec::with_capacity(dsc.len());
    for d in dsc {
        let z = f.encode_description(d)?;
        ld.push(f.description_loss(z, d));
        zd.push(z);
    }
    let l_act = mean_node(f, &la);
    let l_dsc = mean_node(f, &ld);
    Ok((l_act, l_dsc, za, zd))
}

/// Stage-1 objective on independent description and action batches.
pub fn stage1_graph(f: &mut Forward, dsc: &[&DescriptionSequence], act: &[&MotionSequence]) -> Result<LossNodes> {
    let (l_act, l_dsc, _, _) = reconstruction(f, dsc, act)?;
    let total = f.g.add(l_dsc, l_act);
    Ok(LossNodes { l_act, l_dsc, l_bnd: None, total })
}

/// Stage-2 objective on corresponding `(description, action)` pairs.
pub fn stage2_graph(f: &mut Forward, pairs: &[(&DescriptionSequence, &MotionSequence)], delta: f64) -> Result<LossNodes> {
    let dsc: Vec<&DescriptionSequence> = pairs.iter().map(|p| p.0).collect();
    let act: Vec<&MotionSequence> = pairs.iter().map(|p| p.1).collect();
    let (l_act, l_dsc, za, zd) = reconstruction(f, &dsc, &act)?;
    let l_bnd = bnd_graph(f, &za, &zd, delta)?;
    let recon = f.g.add(l_dsc, l_act);
    let total = f.g.add(recon, l_bnd);
    Ok(LossNodes { l_act, l_dsc, l_bnd: Some(l_bnd), total })
}

pub fn loss_stage1(model: &Model, dsc: &[&DescriptionSequence], act: &[&MotionSequence]) -> Result<LossBreakdown> {
    let mut f = Forward::new(model);
    let nodes = stage1_graph(&mut f, dsc, act)?;
    Ok(nodes.breakdown(&f))
}

pub fn loss_stage2(model: &Model, pairs: &[(&DescriptionSequence, &MotionSequence)], delta: f64) -> Result<LossBreakdown> {
    let mut f = Forward::new(model);
    let nodes = stage2_graph(&mut f, pairs, delta)?;
    Ok(nodes.breakdown(&f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_corpus, GenConfig};
    use crate::model::ModelConfig;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seq1(v: &[f64]) -> MotionSequence {
        MotionSequence::new(1, v.to_vec()).unwrap()
    }

    #[test]
    fn loss_act_hand_values() {
        let truth = seq1(&[0.1, 0.2, 0.3]);
        assert_eq!(loss_act(&truth, &truth).unwrap(), 0.0);
        let pred = seq1(&[0.1, 0.25, 0.35]);
        assert!((loss_act(&pred, &truth).unwrap() - 0.005).abs() < 1e-15);
        let doubled = seq1(&[0.1, 0.3, 0.4]);
        let ratio = loss_act(&doubled, &truth).unwrap() / loss_act(&pred, &truth).unwrap();
        assert!((ratio - 4.0).abs() < 1e-9);
        assert!(matches!(loss_act(&seq1(&[0.0, 0.0]), &truth), Err(Error::Input(_))));
    }

    #[test]
    fn loss_dsc_hand_values() {
        let target = DescriptionSequence::new(vec![0, 3, 1], 4).unwrap();
        let one_hot = vec![vec![0.0, 0.0, 0.0, 1.0], vec![0.0, 1.0, 0.0, 0.0]];
        assert_eq!(loss_dsc(&one_hot, &target).unwrap(), 0.0);
        let uniform = vec![vec![0.25; 4]; 2];
        assert!((loss_dsc(&uniform, &target).unwrap() - 2.0 * 4f64.ln()).abs() < 1e-12);
        assert!((loss_dsc(&uniform, &target).unwrap() - 2.7726).abs() < 1e-4);
        let skewed = vec![vec![0.5, 0.2, 0.05, 0.25], vec![0.1, 0.25, 0.6, 0.05]];
        assert_eq!(loss_dsc(&skewed, &target).unwrap(), loss_dsc(&uniform, &target).unwrap());
        let zero = vec![vec![0.5, 0.5, 0.0, 0.0], vec![0.25; 4]];
        assert!(matches!(loss_dsc(&zero, &target), Err(Error::Numerical(_))));
    }

    #[test]
    fn psi_values() {
        assert_eq!(psi(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(psi(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!(psi(&[1.0], &[1.0, 2.0]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let a: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
            assert_eq!(psi(&a, &b).unwrap(), psi(&b, &a).unwrap());
        }
    }

    #[test]
    fn loss_bnd_hand_values() {
        let same = vec![vec![0.5, 0.5]; 2];
        // before the 1/B factor: 2 * delta
        assert_eq!(loss_bnd(&same, &same, 1.0).unwrap() * 2.0, 2.0);
        let near = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
        assert_eq!(loss_bnd(&near, &near, 1.0).unwrap(), 0.0);
        let far = vec![vec![0.0, 0.0], vec![2.0, 0.0]];
        assert_eq!(loss_bnd(&far, &far, 1.0).unwrap(), 0.0);
        assert_eq!(loss_bnd(&far, &far, 3.0).unwrap() * 2.0, 2.0);
        assert!(matches!(loss_bnd(&far[..1], &far[..1], 1.0), Err(Error::Input(_))));
    }

    #[test]
    fn loss_bnd_is_anchored_on_actions_only() {
        // caption 1 sits close to action 0, action 1 is far from caption 0:
        // only the action-anchored hinge (i=0, j=1) fires
        let za = vec![vec![0.0, 0.0], vec![5.0, 0.0]];
        let zd = vec![vec![0.0, 0.5], vec![0.0, 1.0]];
        let pos0 = 0.5;
        let pos1 = psi(&za[1], &zd[1]).unwrap();
        let hinge01 = (1.0 + pos0 - 1.0f64).max(0.0);
        let hinge10 = (1.0 + pos1 - psi(&za[1], &zd[0]).unwrap()).max(0.0);
        let expected = (pos0 + hinge01 + pos1 + hinge10) / 2.0;
        assert!((loss_bnd(&za, &zd, 1.0).unwrap() - expected).abs() < 1e-12);
    }

    fn latents() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        (2usize..6).prop_flat_map(|b| {
            let v = prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), b);
            (v.clone(), v)
        })
    }

    proptest! {
        #[test]
        fn loss_bnd_is_permutation_equivariant((za, zd) in latents(), rot in 0usize..6) {
            let b = za.len();
            let perm = |v: &Vec<Vec<f64>>| (0..b).map(|i| v[(i + rot) % b].clone()).collect::<Vec<_>>();
            let a = loss_bnd(&za, &zd, 1.0).unwrap();
            let p = loss_bnd(&perm(&za), &perm(&zd), 1.0).unwrap();
            prop_assert!((a - p).abs() < 1e-12);
            prop_assert!(a >= 0.0 && a.is_finite());
        }

        #[test]
        fn pulling_a_pair_closer_lowers_the_loss(shift in 0.05f64..0.9) {
            // cross distances far above delta + matched distance
            let za = vec![vec![0.0, 0.0], vec![10.0, 0.0], vec![0.0, 10.0]];
            let zd = vec![vec![1.0, 0.0], vec![10.0, 0.5], vec![0.0, 10.5]];
            let mut closer = zd.clone();
            closer[0][0] -= shift;
            prop_assert!(loss_bnd(&za, &closer, 1.0).unwrap() < loss_bnd(&za, &zd, 1.0).unwrap());
        }
    }

    #[test]
    fn graph_binding_matches_plain_numbers() {
        let corpus = generate_corpus(&GenConfig { per_class: 2, ..GenConfig::default() }, 0).unwrap();
        let cfg = ModelConfig { vocab_size: corpus.vocab.len(), ..ModelConfig::default() };
        let model = Model::new(cfg, &corpus.embeddings, corpus.mean_initial_frame(), 10, 0).unwrap();
        let za = vec![vec![0.0, 0.0], vec![0.3, -0.2], vec![1.5, 1.0]];
        let zd = vec![vec![0.1, 0.4], vec![0.2, -0.1], vec![-0.5, 0.7]];
        let mut f = Forward::new(&model);
        let va: Vec<Var> = za.iter().map(|z| f.g.constant(z.clone())).collect();
        let vd: Vec<Var> = zd.iter().map(|z| f.g.constant(z.clone())).collect();
        let l = bnd_graph(&mut f, &va, &vd, 0.7).unwrap();
        assert_eq!(f.g.scalar(l).to_bits(), loss_bnd(&za, &zd, 0.7).unwrap().to_bits());
    }

    #[test]
    fn stage_losses_compose_from_their_parts() {
        let corpus = generate_corpus(&GenConfig { per_class: 2, ..GenConfig::default() }, 0).unwrap();
        let cfg = ModelConfig { vocab_size: corpus.vocab.len(), ..ModelConfig::default() };
        let model = Model::new(cfg, &corpus.embeddings, corpus.mean_initial_frame(), 10, 3).unwrap();
        let pairs: Vec<(&DescriptionSequence, &MotionSequence)> = corpus.captions[..4]
            .iter()
            .map(|c| (&c.tokens, &corpus.motion(c.motion_id).sequence))
            .collect();
        let dsc: Vec<&DescriptionSequence> = pairs.iter().map(|p| p.0).collect();
        let act: Vec<&MotionSequence> = pairs.iter().map(|p| p.1).collect();

        let s1 = loss_stage1(&model, &dsc, &act).unwrap();
        assert_eq!(s1.l_bnd, 0.0);
        assert_eq!(s1.total.to_bits(), (s1.l_dsc + s1.l_act).to_bits());
        assert!(s1.l_act >= 0.0 && s1.l_dsc >= 0.0);

        let s2 = loss_stage2(&model, &pairs, 1.0).unwrap();
        assert_eq!(s2.total.to_bits(), (s2.l_dsc + s2.l_act + s2.l_bnd).to_bits());
        assert_eq!((s2.l_act, s2.l_dsc), (s1.l_act, s1.l_dsc));

        // components against the plain-number losses on decoded outputs
        let mut preds = Vec::new();
        let mut dists = Vec::new();
        let mut za = Vec::new();
        let mut zd = Vec::new();
        for (d, m) in &pairs {
            let z = model.encode_action(m).unwrap();
            preds.push(model.decode_action(&z, m.frame(0), m.len(), Some(m)).unwrap());
            za.push(z.values().to_vec());
            let z = model.encode_description(d).unwrap();
            dists.push(model.decode_description(&z, 32, Some(d)).unwrap().1);
            zd.push(z.values().to_vec());
        }
        let truths: Vec<MotionSequence> = act.iter().map(|m| (*m).clone()).collect();
        let targets: Vec<DescriptionSequence> = dsc.iter().map(|d| (*d).clone()).collect();
        assert_eq!(loss_act_batch(&preds, &truths).unwrap().to_bits(), s1.l_act.to_bits());
        assert!((loss_dsc_batch(&dists, &targets).unwrap() - s1.l_dsc).abs() < 1e-12);
        assert_eq!(loss_bnd(&za, &zd, 1.0).unwrap().to_bits(), s2.l_bnd.to_bits());
    }
}
