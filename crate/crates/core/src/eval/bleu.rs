use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{Error, Result};

/// Floor substituted for zero n-gram precisions.
pub const SMOOTHING_EPS: f64 = 1e-9;

/// Clipped n-gram counts of one candidate against its references.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BleuStats {
    /// Per order `n = 1..=max_n`: (clipped matches, candidate n-grams).
    pub orders: Vec<(usize, usize)>,
    pub candidate_len: usize,
    /// Length of the reference closest to the candidate (shorter on ties).
    pub reference_len: usize,
}

fn ngrams<T: Eq + Hash + Clone>(tokens: &[T], n: usize) -> HashMap<Vec<T>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.to_vec()).or_insert(0) += 1;
        }
    }
    counts
}

impl BleuStats {
    pub fn collect<T: Eq + Hash + Clone, R: AsRef<[T]>>(candidate: &[T], references: &[R], max_n: usize) -> Result<Self> {
        if references.is_empty() {
            return Err(Error::Input("BLEU needs at least one reference".into()));
        }
        if max_n == 0 {
            return Err(Error::Input("BLEU order must be at least 1".into()));
        }
        let c = candidate.len();
        let reference_len = references
            .iter()
            .map(|r| r.as_ref().len())
            .min_by_key(|&r| (r.abs_diff(c), r))
            .unwrap();
        let orders = (1..=max_n)
            .map(|n| {
                let cand = ngrams(candidate, n);
                let refs: Vec<HashMap<Vec<T>, usize>> = references.iter().map(|r| ngrams(r.as_ref(), n)).collect();
                let matched = cand
                    .iter()
                    .map(|(g, &k)| k.min(refs.iter().map(|r| r.get(g).copied().unwrap_or(0)).max().unwrap_or(0)))
                    .sum();
                (matched, c.saturating_sub(n - 1))
            })
            .collect();
        Ok(Self { orders, candidate_len: c, reference_len })
    }

    pub fn add(&mut self, other: &BleuStats) {
        if self.orders.is_empty() {
            self.orders = vec![(0, 0); other.orders.len()];
        }
        for (a, b) in self.orders.iter_mut().zip(&other.orders) {
            a.0 += b.0;
            a.1 += b.1;
        }
        self.candidate_len += other.candidate_len;
        self.reference_len += other.reference_len;
    }

    /// Geometric mean of (smoothed) precisions times the brevity penalty.
    pub fn score(&self) -> f64 {
        if self.candidate_len == 0 {
            return 0.0;
        }
        let n = self.orders.len() as f64;
        let log_p: f64 = self
            .orders
            .iter()
            .map(|&(m, t)| if m == 0 || t == 0 { SMOOTHING_EPS.ln() } else { (m as f64 / t as f64).ln() })
            .sum::<f64>()
            / n;
        let bp = (1.0 - self.reference_len as f64 / self.candidate_len as f64).min(0.0).exp();
        bp * log_p.exp()
    }
}

/// Sentence BLEU with up to `max_n`-grams against several references.
pub fn bleu<T: Eq + Hash + Clone, R: AsRef<[T]>>(candidate: &[T], references: &[R], max_n: usize) -> Result<f64> {
    if references.is_empty() {
        return Err(Error::Input("BLEU needs at least one reference".into()));
    }
    if candidate.is_empty() {
        return Ok(0.0);
    }
    Ok(BleuStats::collect(candidate, references, max_n)?.score())
}

/// Corpus BLEU: counts and lengths are summed over all items before the
/// precisions and brevity penalty are formed.
pub fn corpus_bleu<T: Eq + Hash + Clone, R: AsRef<[T]>>(items: &[(Vec<T>, Vec<R>)], max_n: usize) -> Result<f64> {
    let mut total = BleuStats::default();
    for (cand, refs) in items {
        total.add(&BleuStats::collect(cand, refs, max_n)?);
    }
    Ok(total.score())
}
