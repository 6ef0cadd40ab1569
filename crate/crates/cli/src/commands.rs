use std::cell::Cell;
use std::fs::{self, OpenOptions};
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use log::{info, warn};

use rprae::data::{
    generate_corpus, read_corpus, read_motion_csv, write_corpus, write_motion_csv, Corpus, DescriptionSequence,
    Partition, Vocabulary,
};
use rprae::eval::{
    experiment1, experiment2, latent_diagnostics, mean_std, project_latents, projection_csv, Translator,
};
use rprae::model::{Model, ModelConfig, DEFAULT_MAX_CAPTION};
use rprae::nn::{Checkpoint, Header};
use rprae::training::{iterations_for_epochs, make_paired_subset, render_log, Stage, Trainer};
use rprae::{Error, Result};

use crate::config::RunConfig;

pub const CONFIG_FILE: &str = "config.txt";
pub const LOG_FILE: &str = "loss_log.csv";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
const LOCK_FILE: &str = ".lock";

/// Exclusive claim on a run directory, released on drop.
pub struct DirLock(PathBuf);

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self(path)),
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(Error::Usage(format!(
                "{} is in use by another command (remove {} if stale)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn load_corpus(dir: &Path) -> Result<Corpus> {
    if !dir.is_dir() {
        return Err(Error::Input(format!("corpus directory {} does not exist", dir.display())));
    }
    read_corpus(dir)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
    Checkpoint::from_bytes(&bytes).map_err(|e| match e {
        Error::Corrupt(m) => Error::Corrupt(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    // write-then-rename so an interrupted save never leaves a torn file
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, ckpt.to_bytes()?)?;
    fs::rename(tmp, path)?;
    Ok(())
}

pub fn gen_data(cfg: &RunConfig, out: &Path) -> Result<()> {
    if out.exists() && fs::read_dir(out)?.next().is_some() {
        return Err(Error::Usage(format!("output directory {} is not empty", out.display())));
    }
    cfg.gen.validate()?;
    let corpus = generate_corpus(&cfg.gen, cfg.seed)?;
    let _lock = DirLock::acquire(out)?;
    write_corpus(&corpus, out)?;
    for part in [Partition::Train, Partition::Validation, Partition::Test] {
        println!(
            "{}: {} motions, {} captions",
            part.name(),
            corpus.motions_in(part).len(),
            corpus.captions_in(part).len()
        );
    }
    println!("{} motions, {} captions, vocabulary {}", corpus.motions.len(), corpus.captions.len(), corpus.vocab.len());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageSel {
    One,
    Two,
    Both,
}

pub struct TrainArgs<'a> {
    pub corpus: &'a Path,
    pub stage: StageSel,
    pub resume: Option<&'a Path>,
    /// Stop after this many iterations in this invocation (for tests and
    /// time-boxed runs); progress is saved to `last.ckpt`.
    pub max_steps: Option<usize>,
}

fn model_config(cfg: &RunConfig, corpus: &Corpus) -> ModelConfig {
    ModelConfig {
        action_dim: corpus.action_dim(),
        vocab_size: corpus.vocab.len(),
        embedding_dim: corpus.embeddings.dim(),
        ..cfg.model
    }
}

/// Resolves epoch-based stage lengths against the corpus.
pub fn resolve(cfg: &RunConfig, corpus: &Corpus) -> RunConfig {
    let mut cfg = cfg.clone();
    if !cfg.n1_explicit {
        cfg.train.n1 = iterations_for_epochs(cfg.epochs1, corpus.motions_in(Partition::Train).len(), cfg.train.batch_size);
    }
    if !cfg.n2_explicit {
        cfg.train.n2 = iterations_for_epochs(cfg.epochs2, cfg.train.paired_count, cfg.train.batch_size);
    }
    cfg
}

fn data_header(corpus: &Corpus) -> Header {
    let mut h = Header::new();
    h.insert("data.vocab".into(), corpus.vocab.tokens().join(" "));
    h.insert("data.class_names".into(), corpus.class_names.join(","));
    h
}

pub fn train(cfg: &RunConfig, out: &Path, args: &TrainArgs) -> Result<()> {
    let corpus = load_corpus(args.corpus)?;
    let cfg = resolve(cfg, &corpus);
    let tcfg = cfg.train_config();
    tcfg.validate()?;
    let _lock = DirLock::acquire(out)?;
    fs::write(out.join(CONFIG_FILE), cfg.render())?;

    let mut t = match args.resume {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            let t = Trainer::from_checkpoint(&ckpt, tcfg)?;
            check_dims(&t.model, &corpus)?;
            info!("resumed {} at stage {} iteration {}", path.display(), t.stage.number(), t.iter);
            t
        }
        None => {
            let model = Model::new(
                model_config(&cfg, &corpus),
                &corpus.embeddings,
                corpus.mean_initial_frame(),
                corpus.mean_train_length(),
                cfg.seed,
            )?;
            Trainer::new(model, tcfg)?
        }
    };

    let train_motions = corpus.motions_in(Partition::Train);
    let train_captions = corpus.captions_in(Partition::Train);
    let pool: Vec<(&DescriptionSequence, &rprae::data::MotionSequence)> =
        train_captions.iter().map(|c| (&c.tokens, &corpus.motion(c.motion_id).sequence)).collect();
    if tcfg.paired_count > pool.len() {
        return Err(Error::Config(format!(
            "paired_count {} exceeds the {} training pairs",
            tcfg.paired_count,
            pool.len()
        )));
    }

    let extra = data_header(&corpus);
    let every = tcfg.checkpoint_every;
    let steps = Cell::new(0usize);
    let budget_left = || args.max_steps.is_none_or(|m| steps.get() < m);
    let mut failure: Option<Error> = None;
    let mut hook = |t: &Trainer| -> Result<bool> {
        steps.set(steps.get() + 1);
        if every > 0 && t.iter.is_multiple_of(every) {
            let name = format!("stage{}-{:06}.ckpt", t.stage.number(), t.iter);
            save_checkpoint(&out.join(name), &t.to_checkpoint(extra.clone()))?;
            fs::write(out.join(LOG_FILE), render_log(&t.log))?;
        }
        Ok(budget_left())
    };

    let mut stopped = false;
    if matches!(args.stage, StageSel::One | StageSel::Both) && t.stage == Stage::One {
        let dsc: Vec<_> = train_captions.iter().map(|c| &c.tokens).collect();
        let act: Vec<_> = train_motions.iter().map(|m| &m.sequence).collect();
        if let Err(e) = t.run_stage1(&dsc, &act, &mut hook) {
            failure = Some(e);
        }
        stopped = !t.stage_complete() || (!budget_left() && args.stage == StageSel::Both);
    } else if args.stage == StageSel::One {
        return Err(Error::Usage("checkpoint is already in stage 2; cannot run stage 1".into()));
    }
    if failure.is_none() && !stopped && matches!(args.stage, StageSel::Two | StageSel::Both) {
        let pairs = make_paired_subset(&pool, tcfg.paired_count, tcfg.seed)?;
        if let Err(e) = t.run_stage2(&pairs, &mut hook) {
            failure = Some(e);
        }
        stopped = !t.stage_complete();
    }

    fs::write(out.join(LOG_FILE), render_log(&t.log))?;
    let ckpt = t.to_checkpoint(extra.clone());
    save_checkpoint(&out.join(LAST_CHECKPOINT), &ckpt)?;
    if let Some(e) = failure {
        return Err(e);
    }
    if stopped {
        println!("stopped at stage {} iteration {}; resume from {}", t.stage.number(), t.iter, LAST_CHECKPOINT);
    } else {
        save_checkpoint(&out.join(FINAL_CHECKPOINT), &ckpt)?;
        let last = t.log.last().map(|r| r.loss.total).unwrap_or(f64::NAN);
        println!(
            "seed {}: stage {} complete at iteration {} (n1 {}, n2 {}), final total loss {last}",
            cfg.seed,
            t.stage.number(),
            t.iter,
            tcfg.n1,
            tcfg.n2
        );
    }
    Ok(())
}

fn check_dims(model: &Model, corpus: &Corpus) -> Result<()> {
    let c = model.config;
    if c.action_dim != corpus.action_dim()
        || c.vocab_size != corpus.vocab.len()
        || c.embedding_dim != corpus.embeddings.dim()
    {
        return Err(Error::Corrupt(format!(
            "checkpoint dimensions (action {}, vocabulary {}, embedding {}) do not match corpus ({}, {}, {})",
            c.action_dim,
            c.vocab_size,
            c.embedding_dim,
            corpus.action_dim(),
            corpus.vocab.len(),
            corpus.embeddings.dim()
        )));
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<(Model, Checkpoint)> {
    let ckpt = load_checkpoint(path)?;
    Ok((Model::from_checkpoint(&ckpt)?, ckpt))
}

pub struct EvalArgs<'a> {
    pub models: &'a [PathBuf],
    pub reference: Option<&'a Path>,
    pub corpus: &'a Path,
}

pub fn eval(cfg: &RunConfig, out: &Path, args: &EvalArgs) -> Result<()> {
    let corpus = load_corpus(args.corpus)?;
    let reference = match args.reference {
        Some(p) => {
            let (m, _) = load_model(p)?;
            check_dims(&m, &corpus)?;
            Some(m)
        }
        None => {
            warn!("no reference model given; back-translation (experiment 2) skipped");
            None
        }
    };
    let models = args
        .models
        .iter()
        .map(|p| {
            let (m, _) = load_model(p)?;
            check_dims(&m, &corpus)?;
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    let _lock = DirLock::acquire(out)?;
    fs::write(out.join(CONFIG_FILE), cfg.render())?;

    let reference_direct = reference.as_ref().map(|r| experiment1(r, &corpus, Partition::Test)).transpose()?;
    if let Some(rd) = &reference_direct {
        fs::write(out.join("reference.txt"), rd.to_kv("exp1"))?;
    }
    let mut summary: Vec<(String, Vec<f64>)> = Vec::new();
    let mut push = |key: &str, v: f64| match summary.iter_mut().find(|(k, _)| k == key) {
        Some((_, vs)) => vs.push(v),
        None => summary.push((key.to_string(), vec![v])),
    };
    for (i, (model, path)) in models.iter().zip(args.models).enumerate() {
        let mut report = format!("model={}\n", path.display());
        let direct = experiment1(model, &corpus, Partition::Test)?;
        report.push_str(&direct.to_kv("exp1"));
        fs::write(out.join(format!("model{i}_exp1_items.csv")), direct.items_csv())?;
        push("exp1.bleu", direct.bleu);
        push("exp1.corpus_bleu", direct.corpus_bleu);
        push("exp1.cosine", direct.cosine);
        if let (Some(reference), Some(rd)) = (&reference, &reference_direct) {
            let back: &dyn Translator = if cfg.self_back_translate { model } else { reference };
            let (bt, rel) = experiment2(model, back, rd, &corpus, Partition::Test)?;
            report.push_str(&bt.to_kv("exp2"));
            report.push_str(&rel.to_kv("relative"));
            fs::write(out.join(format!("model{i}_exp2_items.csv")), bt.items_csv())?;
            push("exp2.bleu", bt.bleu);
            push("exp2.cosine", bt.cosine);
            push("relative.bleu", rel.bleu);
            push("relative.cosine", rel.cosine);
        }
        let lat = latent_diagnostics(model, &corpus, Partition::Test)?;
        report.push_str(&lat.to_kv("latent"));
        push("latent.intra", lat.intra);
        push("latent.inter", lat.inter);
        push("latent.retrieval", lat.retrieval);
        fs::write(out.join(format!("model{i}_report.txt")), &report)?;
        print!("{report}");
    }
    let mut text = format!("models={}\n", models.len());
    for (k, vs) in &summary {
        let (m, s) = mean_std(vs);
        text.push_str(&format!("{k}.mean={m}\n{k}.std={s}\n"));
    }
    fs::write(out.join("summary.txt"), &text)?;
    if models.len() > 1 {
        for (k, vs) in &summary {
            let (m, s) = mean_std(vs);
            println!("{k}: {m:.4} ± {s:.4}");
        }
    }
    Ok(())
}

fn checkpoint_vocab(ckpt: &Checkpoint) -> Result<Vocabulary> {
    let tokens = ckpt
        .header
        .get("data.vocab")
        .ok_or_else(|| Error::Corrupt("checkpoint carries no vocabulary".into()))?;
    let tokens: Vec<String> = tokens.split(' ').map(str::to_string).collect();
    let n = tokens.len();
    Vocabulary::from_tokens(tokens, vec![None; n]).map_err(|e| Error::Corrupt(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    A2d,
    D2a,
}

/// a2d: normalized motion CSV in, caption line out. d2a: caption line in,
/// normalized motion CSV out.
pub fn translate(model_path: &Path, direction: Direction, input: &Path, output: &Path) -> Result<()> {
    let (model, ckpt) = load_model(model_path)?;
    let vocab = checkpoint_vocab(&ckpt)?;
    match direction {
        Direction::A2d => {
            let motion = read_motion_csv(input).map_err(|e| match e {
                Error::Corrupt(m) => Error::Input(m),
                other => other,
            })?;
            let desc = model.a2d(&motion, DEFAULT_MAX_CAPTION)?;
            let text = vocab.render(desc.body());
            fs::write(output, format!("{text}\n"))?;
            println!("{text}");
        }
        Direction::D2a => {
            let line = fs::read_to_string(input)?;
            let words: Vec<&str> = line.split_whitespace().collect();
            let unknown: Vec<&str> = words.iter().copied().filter(|w| vocab.id(w).is_none()).collect();
            if !unknown.is_empty() {
                return Err(Error::Vocabulary(format!("unknown token(s): {}", unknown.join(", "))));
            }
            let ids = vocab.encode(&words)?;
            let desc = DescriptionSequence::from_body(&ids, vocab.len())?;
            let motion = model.d2a(&desc, None)?;
            write_motion_csv(output, &motion)?;
            println!("{} frames written to {}", motion.len(), output.display());
        }
    }
    Ok(())
}

pub fn project(model_path: &Path, corpus_dir: &Path, out: &Path) -> Result<()> {
    let corpus = load_corpus(corpus_dir)?;
    let (model, _) = load_model(model_path)?;
    check_dims(&model, &corpus)?;
    let _lock = DirLock::acquire(out)?;
    let motions = corpus.motions_in(Partition::Test);
    let captions = corpus.captions_in(Partition::Test);
    let za = motions.iter().map(|m| Ok(model.encode_action(&m.sequence)?.values().to_vec())).collect::<Result<Vec<_>>>()?;
    let zd = captions.iter().map(|c| Ok(model.encode_description(&c.tokens)?.values().to_vec())).collect::<Result<Vec<_>>>()?;
    let label = |motion_id: usize| corpus.class_names[corpus.motion(motion_id).class].clone();
    let ids: Vec<usize> = motions.iter().map(|m| m.id).collect();
    let labels: Vec<String> = motions.iter().map(|m| label(m.id)).collect();
    fs::write(out.join("actions.csv"), projection_csv(&ids, &labels, &project_latents(&za)?))?;
    let ids: Vec<usize> = captions.iter().map(|c| c.id).collect();
    let labels: Vec<String> = captions.iter().map(|c| label(c.motion_id)).collect();
    fs::write(out.join("captions.csv"), projection_csv(&ids, &labels, &project_latents(&zd)?))?;
    println!("projected {} actions and {} captions", motions.len(), captions.len());
    Ok(())
}
