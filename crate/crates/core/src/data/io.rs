//! Corpus directory layout:
//!
//! ```text
//! meta            key=value: generator settings, seed, class names, norm stats
//! vocab.txt       token<TAB>group index ("-" for BOS/EOS), one per id
//! embeddings.csv  one row per token id
//! split.tsv       motion_id, partition, class, raw_len
//! captions.tsv    caption_id, motion_id, space-separated tokens incl. <bos>/<eos>
//! pairs.tsv       motion_id, caption_id
//! motions/<id>.csv  normalized frames, one row per frame
//! ```
//!
//! Floats are written with shortest round-trip formatting, so a write/read
//! cycle is lossless.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::data::{
    Caption, Corpus, DescriptionSequence, EmbeddingTable, GenConfig, Motion, MotionSequence, NormStats, Partition,
    Vocabulary,
};
use crate::error::{Error, Result};
use crate::nn::Tensor;

fn corrupt(file: &str, line: usize, what: impl std::fmt::Display) -> Error {
    Error::Corrupt(format!("{file}:{line}: {what}"))
}

fn parse_field<T: FromStr>(file: &str, line: usize, field: &str) -> Result<T> {
    field.trim().parse().map_err(|_| corrupt(file, line, format!("cannot parse `{field}`")))
}

fn join_floats(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_floats(file: &str, line: usize, s: &str) -> Result<Vec<f64>> {
    s.split(',').map(|f| parse_field(file, line, f)).collect()
}

pub fn write_motion_csv(path: &Path, seq: &MotionSequence) -> Result<()> {
    let mut out = String::new();
    for frame in seq.frames() {
        out.push_str(&join_floats(frame));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_motion_csv(path: &Path) -> Result<MotionSequence> {
    let name = path.display().to_string();
    let text = fs::read_to_string(path)?;
    let frames = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_floats(&name, i + 1, l))
        .collect::<Result<Vec<_>>>()?;
    if frames.is_empty() {
        return Err(Error::Corrupt(format!("{name}: no frames")));
    }
    MotionSequence::from_frames(&frames).map_err(|e| Error::Corrupt(format!("{name}: {e}")))
}

pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join("motions"))?;

    let mut meta = String::new();
    for (k, v) in corpus.config.to_pairs() {
        meta.push_str(&format!("{k}={v}\n"));
    }
    meta.push_str(&format!("seed={}\n", corpus.seed));
    meta.push_str(&format!("class_names={}\n", corpus.class_names.join(",")));
    meta.push_str(&format!("norm_min={}\n", join_floats(&corpus.norm.min)));
    meta.push_str(&format!("norm_max={}\n", join_floats(&corpus.norm.max)));
    fs::write(dir.join("meta"), meta)?;

    let mut vocab = String::new();
    for (id, tok) in corpus.vocab.tokens().iter().enumerate() {
        let g = corpus.vocab.group_of(id).map_or("-".to_string(), |g| g.to_string());
        vocab.push_str(&format!("{tok}\t{g}\n"));
    }
    fs::write(dir.join("vocab.txt"), vocab)?;

    let mut emb = String::new();
    for id in 0..corpus.embeddings.rows() {
        emb.push_str(&join_floats(corpus.embeddings.row(id)));
        emb.push('\n');
    }
    fs::write(dir.join("embeddings.csv"), emb)?;

    let mut split = String::new();
    for m in &corpus.motions {
        split.push_str(&format!("{}\t{}\t{}\t{}\n", m.id, m.partition.name(), m.class, m.raw_len));
        write_motion_csv(&dir.join("motions").join(format!("{}.csv", m.id)), &m.sequence)?;
    }
    fs::write(dir.join("split.tsv"), split)?;

    let mut caps = String::new();
    let mut pairs = String::new();
    for c in &corpus.captions {
        let words: Vec<&str> = c.tokens.tokens().iter().map(|&t| corpus.vocab.token(t)).collect();
        caps.push_str(&format!("{}\t{}\t{}\n", c.id, c.motion_id, words.join(" ")));
        pairs.push_str(&format!("{}\t{}\n", c.motion_id, c.id));
    }
    fs::write(dir.join("captions.tsv"), caps)?;
    fs::write(dir.join("pairs.tsv"), pairs)?;
    Ok(())
}

fn read_table(dir: &Path, file: &str, columns: usize) -> Result<Vec<(usize, Vec<String>)>> {
    let text = fs::read_to_string(dir.join(file))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let fields: Vec<String> = l.split('\t').map(str::to_string).collect();
            if fields.len() != columns {
                return Err(corrupt(file, i + 1, format!("expected {columns} fields, found {}", fields.len())));
            }
            Ok((i + 1, fields))
        })
        .collect()
}

pub fn read_corpus(dir: &Path) -> Result<Corpus> {
    let meta_text = fs::read_to_string(dir.join("meta"))?;
    let mut meta = BTreeMap::new();
    for (i, line) in meta_text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let (k, v) = line.split_once('=').ok_or_else(|| corrupt("meta", i + 1, "expected key=value"))?;
        meta.insert(k.trim().to_string(), (i + 1, v.trim().to_string()));
    }
    let take = |meta: &mut BTreeMap<String, (usize, String)>, key: &str| {
        meta.remove(key).ok_or_else(|| Error::Corrupt(format!("meta: missing `{key}`")))
    };
    let (l, seed) = take(&mut meta, "seed")?;
    let seed: u64 = parse_field("meta", l, &seed)?;
    let (_, names) = take(&mut meta, "class_names")?;
    let class_names: Vec<String> = names.split(',').map(str::to_string).collect();
    let (l, nmin) = take(&mut meta, "norm_min")?;
    let (l2, nmax) = take(&mut meta, "norm_max")?;
    let norm = NormStats { min: parse_floats("meta", l, &nmin)?, max: parse_floats("meta", l2, &nmax)? };
    let mut config = GenConfig::default();
    for (k, (l, v)) in &meta {
        let known = config.set(k, v).map_err(|e| corrupt("meta", *l, e))?;
        if !known {
            return Err(corrupt("meta", *l, format!("unknown key `{k}`")));
        }
    }

    let mut tokens = Vec::new();
    let mut group_of = Vec::new();
    for (l, f) in read_table(dir, "vocab.txt", 2)? {
        tokens.push(f[0].clone());
        group_of.push(if f[1] == "-" { None } else { Some(parse_field("vocab.txt", l, &f[1])?) });
    }
    let vocab = Vocabulary::from_tokens(tokens, group_of)?;

    let emb_text = fs::read_to_string(dir.join("embeddings.csv"))?;
    let rows = emb_text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_floats("embeddings.csv", i + 1, l))
        .collect::<Result<Vec<_>>>()?;
    let e = rows.first().map_or(0, Vec::len);
    if rows.len() != vocab.len() || rows.iter().any(|r| r.len() != e) {
        return Err(Error::Corrupt(format!(
            "embeddings.csv: expected {} rows of equal width, found {}",
            vocab.len(),
            rows.len()
        )));
    }
    let embeddings = EmbeddingTable::new(Tensor::new(vec![rows.len(), e], rows.concat())?)?;

    let mut motions = Vec::new();
    for (l, f) in read_table(dir, "split.tsv", 4)? {
        let id: usize = parse_field("split.tsv", l, &f[0])?;
        if id != motions.len() {
            return Err(corrupt("split.tsv", l, format!("motion id {id} out of order")));
        }
        let partition =
            Partition::parse(&f[1]).ok_or_else(|| corrupt("split.tsv", l, format!("unknown partition `{}`", f[1])))?;
        let sequence = read_motion_csv(&dir.join("motions").join(format!("{id}.csv")))?;
        if sequence.dim() != norm.min.len() {
            return Err(Error::Corrupt(format!("motion {id} has {} channels, expected {}", sequence.dim(), norm.min.len())));
        }
        motions.push(Motion {
            id,
            class: parse_field("split.tsv", l, &f[2])?,
            raw_len: parse_field("split.tsv", l, &f[3])?,
            partition,
            sequence,
        });
    }

    let mut captions = Vec::new();
    for (l, f) in read_table(dir, "captions.tsv", 3)? {
        let id: usize = parse_field("captions.tsv", l, &f[0])?;
        let motion_id: usize = parse_field("captions.tsv", l, &f[1])?;
        if id != captions.len() || motion_id >= motions.len() {
            return Err(corrupt("captions.tsv", l, "caption id out of order or unknown motion"));
        }
        let words: Vec<&str> = f[2].split(' ').collect();
        let ids = vocab.encode(&words).map_err(|e| corrupt("captions.tsv", l, e))?;
        let tokens = DescriptionSequence::new(ids, vocab.len()).map_err(|e| corrupt("captions.tsv", l, e))?;
        captions.push(Caption { id, motion_id, tokens });
    }

    let pairs = read_table(dir, "pairs.tsv", 2)?;
    if pairs.len() != captions.len() {
        return Err(Error::Corrupt("pairs.tsv does not match captions.tsv".into()));
    }
    for ((l, f), c) in pairs.iter().zip(&captions) {
        let m: usize = parse_field("pairs.tsv", *l, &f[0])?;
        let cid: usize = parse_field("pairs.tsv", *l, &f[1])?;
        if (m, cid) != (c.motion_id, c.id) {
            return Err(corrupt("pairs.tsv", *l, "pair disagrees with captions.tsv"));
        }
    }

    Ok(Corpus { config, seed, class_names, motions, captions, vocab, embeddings, norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_corpus;

    fn small() -> Corpus {
        generate_corpus(&GenConfig { per_class: 6, ..GenConfig::default() }, 11).unwrap()
    }

    #[test]
    fn round_trip_is_lossless() {
        let corpus = small();
        let dir = tempfile::tempdir().unwrap();
        write_corpus(&corpus, dir.path()).unwrap();
        assert_eq!(read_corpus(dir.path()).unwrap(), corpus);
    }

    #[test]
    fn damaged_caption_is_reported_with_location() {
        let corpus = small();
        let dir = tempfile::tempdir().unwrap();
        write_corpus(&corpus, dir.path()).unwrap();
        let path = dir.path().join("captions.tsv");
        let text = fs::read_to_string(&path).unwrap().replacen("<eos>", "zebra", 1);
        fs::write(&path, text).unwrap();
        let err = read_corpus(dir.path()).unwrap_err();
        assert!(matches!(&err, Error::Corrupt(m) if m.contains("captions.tsv:1") && m.contains("zebra")), "{err}");
    }

    #[test]
    fn missing_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_corpus(dir.path()), Err(Error::Io(_))));
    }
}
