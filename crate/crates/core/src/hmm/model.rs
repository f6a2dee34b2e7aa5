use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::dists::OutputDist;
use crate::error::{Error, Result};

const ROW_TOL: f64 = 1e-12;

/// A linear left-to-right unit: `entry, s_1 .. s_n, exit`.
///
/// Emitting states only carry a self-loop and an arc to the next state
/// (the last one to `exit`). The entry row may split between `s_1` and a
/// tee arc straight to `exit`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "UnitRepr", try_from = "UnitRepr")]
pub struct HmmUnit {
    label: String,
    n: usize,
    trans: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct UnitRepr {
    label: String,
    transitions: Vec<Vec<f64>>,
}

impl From<HmmUnit> for UnitRepr {
    fn from(u: HmmUnit) -> Self {
        let k = u.n + 2;
        UnitRepr {
            transitions: u.trans.chunks(k).map(|r| r.to_vec()).collect(),
            label: u.label,
        }
    }
}

impl TryFrom<UnitRepr> for HmmUnit {
    type Error = Error;

    fn try_from(r: UnitRepr) -> Result<Self> {
        let k = r.transitions.len();
        if r.transitions.iter().any(|row| row.len() != k) {
            return Err(Error::Validation(format!(
                "unit {}: transition matrix is not square",
                r.label
            )));
        }
        HmmUnit::from_matrix(r.label, r.transitions.concat())
    }
}

impl HmmUnit {
    /// Unit with the given self-loop probabilities and optional tee arc.
    pub fn linear(label: impl Into<String>, self_loops: &[f64], tee: Option<f64>) -> Result<Self> {
        let n = self_loops.len();
        let k = n + 2;
        let mut trans = vec![0.0; k * k];
        let t = tee.unwrap_or(0.0);
        trans[1] = 1.0 - t;
        trans[k - 1] += t;
        for (i, &q) in self_loops.iter().enumerate() {
            let row = i + 1;
            trans[row * k + row] = q;
            trans[row * k + row + 1] = 1.0 - q;
        }
        Self::from_matrix(label.into(), trans)
    }

    /// Validate a row-major `(n+2) × (n+2)` matrix.
    pub fn from_matrix(label: String, trans: Vec<f64>) -> Result<Self> {
        let k = (trans.len() as f64).sqrt() as usize;
        if k * k != trans.len() || k < 3 {
            return Err(Error::Validation(format!(
                "unit {label}: need an (n+2)×(n+2) matrix with n ≥ 1"
            )));
        }
        let bad = |msg: String| Err(Error::Validation(format!("unit {label}: {msg}")));
        for (idx, &p) in trans.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("entry {idx} = {p} is not a probability"));
            }
        }
        for row in 0..k {
            for col in 0..k {
                let p = trans[row * k + col];
                let allowed = match row {
                    0 => col == 1 || col == k - 1,
                    r if r == k - 1 => false,
                    r => col == r || col == r + 1,
                };
                if p > 0.0 && !allowed {
                    return bad(format!("arc {row}→{col} breaks the linear topology"));
                }
            }
            if row < k - 1 {
                let sum: f64 = trans[row * k..(row + 1) * k].iter().sum();
                if (sum - 1.0).abs() > ROW_TOL {
                    return bad(format!("row {row} sums to {sum}"));
                }
            }
        }
        if trans[1] == 0.0 {
            return bad("entry never reaches the first emitting state".into());
        }
        for i in 1..k - 1 {
            if trans[i * k + i + 1] == 0.0 {
                return bad(format!("state {i} can never be left"));
            }
        }
        Ok(HmmUnit {
            label,
            n: k - 2,
            trans,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Number of emitting states.
    pub fn n_states(&self) -> usize {
        self.n
    }

    /// Row-major `(n+2)²` matrix over `entry, s_1..s_n, exit`.
    pub fn matrix(&self) -> &[f64] {
        &self.trans
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.trans[r * (self.n + 2) + c]
    }

    /// Self-loop probability of emitting state `i` (0-based).
    pub fn self_loop(&self, i: usize) -> f64 {
        self.at(i + 1, i + 1)
    }

    /// Probability of leaving emitting state `i` towards the next state or exit.
    pub fn advance(&self, i: usize) -> f64 {
        self.at(i + 1, i + 2)
    }

    pub fn entry(&self) -> f64 {
        self.at(0, 1)
    }

    /// Probability of the entry→exit tee arc.
    pub fn tee(&self) -> f64 {
        self.at(0, self.n + 1)
    }

    pub fn has_tee(&self) -> bool {
        self.tee() > 0.0
    }

    /// Copy with new self-loop probabilities, entry and tee untouched.
    pub fn with_self_loops(&self, loops: &[f64]) -> Result<HmmUnit> {
        if loops.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: loops.len(),
            });
        }
        let tee = self.has_tee().then(|| self.tee());
        let mut u = HmmUnit::linear(self.label.clone(), loops, tee)?;
        // keep the entry row bit-exact
        let k = self.n + 2;
        u.trans[..k].copy_from_slice(&self.trans[..k]);
        Ok(u)
    }
}

/// Units, the tying map and the tied output distributions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "ModelRepr", try_from = "ModelRepr")]
pub struct HmmModel {
    dim: usize,
    units: Vec<HmmUnit>,
    index: HashMap<String, usize>,
    tying: Vec<Vec<u32>>,
    outputs: Vec<OutputDist>,
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    d: usize,
    units: Vec<HmmUnit>,
    tying: BTreeMap<String, Vec<u32>>,
    outputs: Vec<OutputDist>,
}

impl From<HmmModel> for ModelRepr {
    fn from(m: HmmModel) -> Self {
        let tying = m
            .units
            .iter()
            .zip(&m.tying)
            .map(|(u, t)| (u.label.clone(), t.clone()))
            .collect();
        ModelRepr {
            d: m.dim,
            units: m.units,
            tying,
            outputs: m.outputs,
        }
    }
}

impl TryFrom<ModelRepr> for HmmModel {
    type Error = Error;

    fn try_from(mut r: ModelRepr) -> Result<Self> {
        let mut tying = Vec::with_capacity(r.units.len());
        for u in &r.units {
            let t = r.tying.remove(u.label()).ok_or_else(|| {
                Error::Validation(format!("unit {} has no tying entry", u.label()))
            })?;
            tying.push(t);
        }
        if let Some(extra) = r.tying.keys().next() {
            return Err(Error::UnknownUnit(extra.clone()));
        }
        HmmModel::new(r.d, r.units, tying, r.outputs)
    }
}

impl HmmModel {
    pub fn new(
        dim: usize,
        units: Vec<HmmUnit>,
        tying: Vec<Vec<u32>>,
        outputs: Vec<OutputDist>,
    ) -> Result<Self> {
        if units.len() != tying.len() {
            return Err(Error::Validation("one tying row per unit required".into()));
        }
        for o in &outputs {
            if o.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: o.dim(),
                });
            }
        }
        let mut index = HashMap::with_capacity(units.len());
        for (i, (u, t)) in units.iter().zip(&tying).enumerate() {
            if index.insert(u.label.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate unit {}", u.label)));
            }
            if t.len() != u.n_states() {
                return Err(Error::Validation(format!(
                    "unit {} has {} states but {} tied ids",
                    u.label,
                    u.n_states(),
                    t.len()
                )));
            }
            if let Some(&j) = t.iter().find(|&&j| j as usize >= outputs.len()) {
                return Err(Error::Validation(format!(
                    "unit {} ties to missing output {j}",
                    u.label
                )));
            }
        }
        Ok(HmmModel {
            dim,
            units,
            index,
            tying,
            outputs,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn units(&self) -> &[HmmUnit] {
        &self.units
    }

    pub fn unit(&self, u: usize) -> &HmmUnit {
        &self.units[u]
    }

    pub fn unit_index(&self, label: &str) -> Result<usize> {
        self.index
            .get(label)
            .copied()
            .ok_or_else(|| Error::UnknownUnit(label.to_string()))
    }

    pub fn has_unit(&self, label: &str) -> bool {
        self.index.contains_key(label)
    }

    /// Tied output id of emitting state `state` of unit `unit`.
    pub fn tied(&self, unit: usize, state: usize) -> u32 {
        self.tying[unit][state]
    }

    pub fn tying(&self) -> &[Vec<u32>] {
        &self.tying
    }

    pub fn outputs(&self) -> &[OutputDist] {
        &self.outputs
    }

    pub fn output(&self, j: u32) -> &OutputDist {
        &self.outputs[j as usize]
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    /// Tied output ids used by `unit`, in state order.
    pub fn unit_outputs(&self, unit: usize) -> &[u32] {
        &self.tying[unit]
    }

    /// Same structure with new outputs.
    pub fn with_outputs(&self, outputs: Vec<OutputDist>) -> Result<HmmModel> {
        if outputs.len() != self.outputs.len() {
            return Err(Error::Validation(format!(
                "expected {} outputs, got {}",
                self.outputs.len(),
                outputs.len()
            )));
        }
        let dim = outputs.first().map(|o| o.dim()).unwrap_or(self.dim);
        HmmModel::new(dim, self.units.clone(), self.tying.clone(), outputs)
    }

    /// Same outputs with new units (labels and sizes must match).
    pub fn with_units(&self, units: Vec<HmmUnit>) -> Result<HmmModel> {
        for (a, b) in self.units.iter().zip(&units) {
            if a.label != b.label || a.n != b.n {
                return Err(Error::Validation(format!("unit {} changed shape", a.label)));
            }
        }
        HmmModel::new(self.dim, units, self.tying.clone(), self.outputs.clone())
    }

    /// Map every output through `f`.
    pub fn map_outputs(&self, f: impl Fn(&OutputDist) -> Result<OutputDist>) -> Result<HmmModel> {
        let outputs = self.outputs.iter().map(f).collect::<Result<Vec<_>>>()?;
        self.with_outputs(outputs)
    }

    /// Label of the unit owning each tied output (first owner wins).
    pub fn output_owners(&self) -> Vec<Option<usize>> {
        let mut owner = vec![None; self.outputs.len()];
        for (u, t) in self.tying.iter().enumerate() {
            for &j in t {
                owner[j as usize].get_or_insert(u);
            }
        }
        owner
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::DiagonalGaussian;

    fn gauss(m: f64) -> OutputDist {
        OutputDist::Diagonal(DiagonalGaussian::new(vec![m], vec![1.0]).unwrap())
    }

    #[test]
    fn linear_unit_rows_are_stochastic() {
        let u = HmmUnit::linear("a", &[0.6, 0.5, 0.7], None).unwrap();
        assert_eq!(u.n_states(), 3);
        assert_eq!(u.self_loop(1), 0.5);
        assert!((u.advance(2) - 0.3).abs() < 1e-15);
        assert!(!u.has_tee());
        let t = HmmUnit::linear("sp", &[0.4], Some(0.3)).unwrap();
        assert!((t.entry() - 0.7).abs() < 1e-15);
        assert_eq!(t.tee(), 0.3);
    }

    #[test]
    fn skip_arcs_rejected() {
        let mut m = HmmUnit::linear("a", &[0.5, 0.5], None).unwrap().matrix().to_vec();
        // s_1 → s_3 would be a skip
        m[4 + 1] = 0.25;
        m[4 + 3] = 0.25;
        m[4 + 2] = 0.5;
        assert!(HmmUnit::from_matrix("a".into(), m).is_err());
        assert!(HmmUnit::linear("a", &[1.0], None).is_err());
    }

    #[test]
    fn model_json_round_trip() {
        let units = vec![
            HmmUnit::linear("a", &[0.5, 0.6], None).unwrap(),
            HmmUnit::linear("sil", &[0.9], Some(0.2)).unwrap(),
        ];
        let m = HmmModel::new(1, units, vec![vec![0, 1], vec![1]], vec![gauss(0.0), gauss(3.0)])
            .unwrap();
        let s = serde_json::to_string(&m).unwrap();
        let back: HmmModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.tied(1, 0), 1);
    }

    #[test]
    fn tying_to_missing_output_rejected() {
        let units = vec![HmmUnit::linear("a", &[0.5], None).unwrap()];
        assert!(HmmModel::new(1, units, vec![vec![3]], vec![gauss(0.0)]).is_err());
    }
}
