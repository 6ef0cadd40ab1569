//! Run configuration: every tunable in one place, read from `key = value`
//! files and command-line overrides, echoed verbatim into run directories.

use std::fs;
use std::path::Path;

use rprae::data::GenConfig;
use rprae::model::ModelConfig;
use rprae::training::TrainConfig;
use rprae::{Error, Result};

/// Model keys a user may set; the rest follow from the corpus.
const MODEL_KEYS: [&str; 4] = ["hidden_dim", "latent_dim", "retrofit_hidden", "action_decoder_layers"];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Seeds corpus generation and training.
    pub seed: u64,
    pub gen: GenConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Stage lengths in epochs, used unless `train.n1` / `train.n2` are set.
    pub epochs1: usize,
    pub epochs2: usize,
    pub n1_explicit: bool,
    pub n2_explicit: bool,
    /// Back-translate with the model under test instead of the reference.
    pub self_back_translate: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            gen: GenConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            epochs1: 200,
            epochs2: 400,
            n1_explicit: false,
            n2_explicit: false,
            self_back_translate: false,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

impl RunConfig {
    /// Applies one setting. Unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        let known = match key.split_once('.') {
            None if key == "seed" => {
                self.seed = parse(key, value)?;
                true
            }
            Some(("gen", k)) => self.gen.set(k, value)?,
            Some(("model", k)) => MODEL_KEYS.contains(&k) && self.model.set(k, value)?,
            Some(("train", "epochs1")) => {
                self.epochs1 = parse(key, value)?;
                true
            }
            Some(("train", "epochs2")) => {
                self.epochs2 = parse(key, value)?;
                true
            }
            Some(("train", k)) if k != "seed" => {
                let known = self.train.set(k, value)?;
                self.n1_explicit |= k == "n1";
                self.n2_explicit |= k == "n2";
                known
            }
            Some(("eval", "self_back_translate")) => {
                self.self_back_translate = parse(key, value)?;
                true
            }
            _ => false,
        };
        if known {
            Ok(())
        } else {
            Err(Error::Config(format!("unknown config key `{key}`")))
        }
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{origin}:{}: expected `key = value`", n + 1)))?;
            self.set(k, v).map_err(|e| Error::Config(format!("{origin}:{}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    /// The training settings with the run seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.train }
    }

    /// Fully resolved settings, one `key = value` per line, re-readable by
    /// [`RunConfig::apply_text`].
    pub fn render(&self) -> String {
        let mut out = format!("seed = {}\n", self.seed);
        for (k, v) in self.gen.to_pairs() {
            out.push_str(&format!("gen.{k} = {v}\n"));
        }
        for (k, v) in self.model.to_pairs() {
            if MODEL_KEYS.contains(&k.as_str()) {
                out.push_str(&format!("model.{k} = {v}\n"));
            }
        }
        out.push_str(&format!("train.epochs1 = {}\ntrain.epochs2 = {}\n", self.epochs1, self.epochs2));
        for (k, v) in self.train.to_pairs() {
            if k != "seed" {
                out.push_str(&format!("train.{k} = {v}\n"));
            }
        }
        out.push_str(&format!("eval.self_back_translate = {}\n", self.self_back_translate));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("seed = 7\ngen.classes = 4 # fewer\n\ntrain.lr=0.01\nmodel.hidden_dim = 8\n", "t").unwrap();
        let mut back = RunConfig::default();
        back.apply_text(&cfg.render(), "r").unwrap();
        assert_eq!(back.seed, 7);
        assert_eq!(back.gen.classes, 4);
        assert_eq!(back.train.lr, 0.01);
        assert_eq!(back.model.hidden_dim, 8);
        assert_eq!(back.render(), cfg.render());
    }

    #[test]
    fn unknown_and_derived_keys_are_rejected() {
        let mut cfg = RunConfig::default();
        for key in ["colour", "gen.colour", "model.vocab_size", "train.seed", "eval.x"] {
            let err = cfg.set(key, "1").unwrap_err().to_string();
            assert!(err.contains("unknown config key"), "{key}: {err}");
        }
        let err = cfg.apply_text("train.lr 3", "f").unwrap_err().to_string();
        assert!(err.contains("f:1"), "{err}");
    }
}
