//! Utterances and corpora: row-major frame storage plus metadata.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One utterance of `d`-dimensional frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub speaker: String,
    pub transcript: Vec<String>,
    dim: usize,
    frames: Vec<f64>,
    /// Tied-state id per frame when the utterance was simulated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<u32>>,
}

impl Utterance {
    pub fn new(
        id: impl Into<String>,
        speaker: impl Into<String>,
        transcript: Vec<String>,
        dim: usize,
        frames: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("frame dimension must be positive".into()));
        }
        if frames.len() % dim != 0 {
            return Err(Error::Validation(format!(
                "payload of {} values is not a multiple of d = {dim}",
                frames.len()
            )));
        }
        Ok(Utterance {
            id: id.into(),
            speaker: speaker.into(),
            transcript,
            dim,
            frames,
            states: None,
        })
    }

    pub fn from_rows(
        id: impl Into<String>,
        speaker: impl Into<String>,
        transcript: Vec<String>,
        rows: &[Vec<f64>],
    ) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Validation("ragged frame rows".into()));
        }
        Self::new(id, speaker, transcript, dim.max(1), rows.concat())
    }

    pub fn renamed(&self, id: impl Into<String>) -> Utterance {
        Utterance {
            id: id.into(),
            ..self.clone()
        }
    }

    pub fn with_states(mut self, states: Vec<u32>) -> Result<Self> {
        if states.len() != self.len() {
            return Err(Error::Validation(format!(
                "{} state ids for {} frames",
                states.len(),
                self.len()
            )));
        }
        self.states = Some(states);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.frames.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    #[inline]
    pub fn frame(&self, t: usize) -> &[f64] {
        &self.frames[t * self.dim..(t + 1) * self.dim]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        self.frames.chunks_exact(self.dim)
    }

    /// Row-major payload.
    pub fn data(&self) -> &[f64] {
        &self.frames
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.frames
    }

    /// Same metadata, new frames of possibly different dimension.
    pub fn with_frames(&self, dim: usize, frames: Vec<f64>) -> Result<Utterance> {
        let mut u = Utterance::new(
            self.id.clone(),
            self.speaker.clone(),
            self.transcript.clone(),
            dim,
            frames,
        )?;
        if u.len() != self.len() {
            return Err(Error::Validation("frame count changed".into()));
        }
        u.states = self.states.clone();
        Ok(u)
    }
}

/// An ordered list of utterances sharing one frame dimension.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    dim: usize,
    utterances: Vec<Utterance>,
    offsets: Vec<usize>,
}

impl Corpus {
    pub fn new(dim: usize, utterances: Vec<Utterance>) -> Result<Self> {
        let mut offsets = Vec::with_capacity(utterances.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for u in &utterances {
            if u.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: u.dim(),
                });
            }
            acc += u.len();
            offsets.push(acc);
        }
        Ok(Corpus {
            dim,
            utterances,
            offsets,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn into_utterances(self) -> Vec<Utterance> {
        self.utterances
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn total_frames(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    /// Global index of frame `t` of utterance `u`.
    pub fn global_index(&self, u: usize, t: usize) -> usize {
        self.offsets[u] + t
    }

    /// `(utterance, frame)` position of a global frame index.
    pub fn locate(&self, g: usize) -> (usize, usize) {
        let u = self.offsets.partition_point(|&o| o <= g) - 1;
        (u, g - self.offsets[u])
    }

    pub fn frame_global(&self, g: usize) -> &[f64] {
        let (u, t) = self.locate(g);
        self.utterances[u].frame(t)
    }

    pub fn find(&self, id: &str) -> Option<&Utterance> {
        self.utterances.iter().find(|u| u.id == id)
    }

    /// Sorted distinct speaker labels.
    pub fn speakers(&self) -> Vec<String> {
        let mut s: Vec<String> = self.utterances.iter().map(|u| u.speaker.clone()).collect();
        s.sort();
        s.dedup();
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn global_indexing_round_trips() {
        let a = Utterance::new("a", "s", vec![], 2, vec![0.0; 6]).unwrap();
        let b = Utterance::new("b", "s", vec![], 2, vec![1.0; 4]).unwrap();
        let c = Corpus::new(2, vec![a, b]).unwrap();
        assert_eq!(c.total_frames(), 5);
        for g in 0..5 {
            let (u, t) = c.locate(g);
            assert_eq!(c.global_index(u, t), g);
        }
        assert_eq!(c.locate(3), (1, 0));
        assert_eq!(c.frame_global(4), &[1.0, 1.0]);
    }

    #[test]
    fn ragged_payload_rejected() {
        assert!(Utterance::new("a", "s", vec![], 3, vec![0.0; 4]).is_err());
    }
}
