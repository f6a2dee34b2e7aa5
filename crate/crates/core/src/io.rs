//! On-disk formats: the binary corpus container with its JSON-lines mirror,
//! JSON / JSON-lines artifacts and small text files.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Corpus, Utterance};
use crate::decoder::{BigramLm, Lexicon};
use crate::hmm::HmmModel;
use crate::error::{Error, Result};

const CORPUS_MAGIC: &[u8; 4] = b"HMPC";
const CORPUS_VERSION: u16 = 1;

pub type Checksum = [u8; 32];

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

/// Serialized corpus bytes, checksum trailer included. Each record holds
/// id, speaker and space-joined transcript as length-prefixed strings, the
/// frame count, the frames, then a flag and the simulated state ids if any.
pub fn encode_corpus(corpus: &Corpus) -> Result<Vec<u8>> {
    let d = u16::try_from(corpus.dim()).map_err(|_| Error::format("corpus", "dimension exceeds u16"))?;
    let mut buf = Vec::with_capacity(16 + corpus.total_frames() * corpus.dim() * 8);
    buf.extend_from_slice(CORPUS_MAGIC);
    buf.extend_from_slice(&CORPUS_VERSION.to_le_bytes());
    buf.extend_from_slice(&d.to_le_bytes());
    buf.extend_from_slice(&(corpus.len() as u32).to_le_bytes());
    for u in corpus.utterances() {
        put_str(&mut buf, &u.id);
        put_str(&mut buf, &u.speaker);
        put_str(&mut buf, &u.transcript.join(" "));
        buf.extend_from_slice(&(u.len() as u32).to_le_bytes());
        for x in u.data() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        match &u.states {
            Some(s) => {
                buf.push(1);
                for x in s {
                    buf.extend_from_slice(&x.to_le_bytes());
                }
            }
            None => buf.push(0),
        }
    }
    let sum: Checksum = Sha256::digest(&buf).into();
    buf.extend_from_slice(&sum);
    Ok(buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::format("corpus", format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::format("corpus", e.to_string()))
    }
}

/// Parse corpus bytes, verifying the trailer. Returns the checksum too.
pub fn decode_corpus(bytes: &[u8]) -> Result<(Corpus, Checksum)> {
    if bytes.len() < 44 {
        return Err(Error::format("corpus", "file too short"));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 32);
    let sum: Checksum = Sha256::digest(body).into();
    if sum.as_slice() != trailer {
        return Err(Error::format("corpus", "checksum mismatch"));
    }
    let mut c = Cursor { bytes: body, pos: 0 };
    if c.take(4)? != CORPUS_MAGIC {
        return Err(Error::format("corpus", "bad magic"));
    }
    let version = c.u16()?;
    if version != CORPUS_VERSION {
        return Err(Error::format("corpus", format!("unsupported version {version}")));
    }
    let d = c.u16()? as usize;
    let n = c.u32()? as usize;
    let mut utts = Vec::with_capacity(n);
    for _ in 0..n {
        let id = c.string()?;
        let speaker = c.string()?;
        let transcript: Vec<String> = c.string()?.split_whitespace().map(str::to_string).collect();
        let t = c.u32()? as usize;
        let raw = c.take(t * d * 8)?;
        let frames = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        let mut u = Utterance::new(id, speaker, transcript, d, frames)?;
        match c.take(1)?[0] {
            0 => {}
            1 => {
                let raw = c.take(t * 4)?;
                let s = raw.chunks_exact(4).map(|b| u32::from_le_bytes(b.try_into().unwrap())).collect();
                u = u.with_states(s)?;
            }
            f => return Err(Error::format("corpus", format!("bad state flag {f}"))),
        }
        utts.push(u);
    }
    if c.pos != body.len() {
        return Err(Error::format("corpus", "trailing bytes after last record"));
    }
    Ok((Corpus::new(d, utts)?, sum))
}

pub fn corpus_checksum(corpus: &Corpus) -> Result<Checksum> {
    let bytes = encode_corpus(corpus)?;
    Ok(bytes[bytes.len() - 32..].try_into().unwrap())
}

/// Write the binary corpus and return its checksum.
pub fn write_corpus(path: &Path, corpus: &Corpus) -> Result<Checksum> {
    let bytes = encode_corpus(corpus)?;
    write_bytes(path, &bytes)?;
    Ok(bytes[bytes.len() - 32..].try_into().unwrap())
}

pub fn read_corpus(path: &Path) -> Result<(Corpus, Checksum)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_corpus(&bytes).map_err(|e| match e {
        Error::Format { reason, .. } => Error::format(path.display().to_string(), reason),
        other => other,
    })
}

#[derive(Serialize, Deserialize)]
struct UtteranceLine {
    id: String,
    speaker: String,
    transcript: Vec<String>,
    frames: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    states: Option<Vec<u32>>,
}

/// Debug mirror: one JSON object per utterance, frames as rows.
pub fn write_corpus_jsonl(path: &Path, corpus: &Corpus) -> Result<()> {
    let lines: Vec<UtteranceLine> = corpus
        .utterances()
        .iter()
        .map(|u| UtteranceLine {
            id: u.id.clone(),
            speaker: u.speaker.clone(),
            transcript: u.transcript.clone(),
            frames: u.frames().map(<[f64]>::to_vec).collect(),
            states: u.states.clone(),
        })
        .collect();
    write_jsonl(path, &lines)
}

pub fn read_corpus_jsonl(path: &Path, dim: usize) -> Result<Corpus> {
    let lines: Vec<UtteranceLine> = read_jsonl(path)?;
    let utts = lines
        .into_iter()
        .map(|l| {
            if let Some(r) = l.frames.iter().find(|r| r.len() != dim) {
                return Err(Error::DimensionMismatch { expected: dim, got: r.len() });
            }
            let u = Utterance::new(l.id, l.speaker, l.transcript, dim, l.frames.concat())?;
            match l.states {
                Some(s) => u.with_states(s),
                None => Ok(u),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(dim, utts)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_bytes(path, text.as_bytes())
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_text(path, &s)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::format(path.display().to_string(), e.to_string()))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::format(format!("{}:{}", path.display(), i + 1), e.to_string()))?,
        );
    }
    Ok(out)
}

/// Comma-separated table with a header row. Cells must not contain commas.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        debug_assert_eq!(r.len(), header.len());
        s.push_str(&r.join(","));
        s.push('\n');
    }
    write_text(path, &s)
}

/// One transcript per line, `id word word ...`.
pub fn read_transcripts(path: &Path) -> Result<Vec<(String, Vec<String>)>> {
    parse_transcripts(&read_text(path)?)
}

pub fn parse_transcripts(text: &str) -> Result<Vec<(String, Vec<String>)>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let mut it = l.split_whitespace();
            let id = it.next().unwrap().to_string();
            Ok((id, it.map(str::to_string).collect()))
        })
        .collect()
}

pub fn format_transcripts<'a>(items: impl IntoIterator<Item = (&'a str, &'a [String])>) -> String {
    let mut s = String::new();
    for (id, words) in items {
        s.push_str(id);
        for w in words {
            s.push(' ');
            s.push_str(w);
        }
        s.push('\n');
    }
    s
}

/// Header and rows of a table written by [`write_csv`].
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = read_text(path)?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::format(path.display().to_string(), "empty table"))?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, l) in lines.enumerate() {
        let row: Vec<String> = l.split(',').map(str::to_string).collect();
        if row.len() != header.len() {
            return Err(Error::format(
                format!("{}:{}", path.display(), i + 2),
                format!("{} cells under a {}-column header", row.len(), header.len()),
            ));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// A model together with the lexicon and language model it decodes with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub model: HmmModel,
    pub lexicon: Lexicon,
    pub lm: BigramLm,
}

impl ModelBundle {
    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let b: ModelBundle = read_json(path)?;
        b.lexicon.validate(&b.model)?;
        for w in b.lexicon.words() {
            if b.lm.word_index(w).is_none() {
                return Err(Error::format(path.display().to_string(), format!("word {w} missing from the language model")));
            }
        }
        Ok(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Corpus {
        let a = Utterance::new("a", "s1", vec!["x".into(), "y".into()], 2, vec![1.0, -2.5, 3.0, 1e-300])
            .unwrap()
            .with_states(vec![4, 5])
            .unwrap();
        let b = Utterance::new("b", "s2", vec![], 2, vec![0.5, 0.25]).unwrap();
        Corpus::new(2, vec![a, b]).unwrap()
    }

    #[test]
    fn binary_round_trip() {
        let c = sample();
        let bytes = encode_corpus(&c).unwrap();
        assert_eq!(&bytes[..4], b"HMPC");
        let (back, sum) = decode_corpus(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(sum, corpus_checksum(&c).unwrap());
    }

    #[test]
    fn corruption_detected() {
        let mut bytes = encode_corpus(&sample()).unwrap();
        bytes[20] ^= 1;
        assert!(decode_corpus(&bytes).is_err());
        assert!(decode_corpus(&bytes[..30]).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        write_corpus_jsonl(&p, &sample()).unwrap();
        assert_eq!(read_corpus_jsonl(&p, 2).unwrap(), sample());
    }

    #[test]
    fn transcripts_parse() {
        let t = parse_transcripts("u1 a b\n\n# note\nu2\n").unwrap();
        assert_eq!(t, vec![("u1".into(), vec!["a".into(), "b".into()]), ("u2".into(), vec![])]);
        let text = format_transcripts(t.iter().map(|(i, w)| (i.as_str(), w.as_slice())));
        assert_eq!(text, "u1 a b\nu2\n");
    }
}
