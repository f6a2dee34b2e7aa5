//! Experiment configuration: a `key = value` text file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::decoder::ContextMode;
use crate::error::{Error, Result};
use crate::mmi::{EbwConfig, PhoneScaleMap};
use crate::regions::RegionCode;
use crate::resample::{CountMode, UrnMode};
use crate::synth::{DependenceConfig, EmissionKind, GroundTruthSpec};

/// Corpus whose aligned frames fill the urns for a parallel resampled test set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UrnSource {
    Train,
    Test,
}

impl UrnSource {
    pub fn as_str(self) -> &'static str {
        match self {
            UrnSource::Train => "train",
            UrnSource::Test => "test",
        }
    }
}

impl std::str::FromStr for UrnSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(UrnSource::Train),
            "test" => Ok(UrnSource::Test),
            other => Err(Error::Config(format!("unknown urn source {other}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub train_corpus: Option<PathBuf>,
    pub test_corpus: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub ground_truth: GroundTruthSpec,
    pub n_train: usize,
    pub n_test: usize,
    /// Baum-Welch passes for ML training.
    pub train_passes: usize,
    pub kappa: f64,
    pub urn_mode: UrnMode,
    pub count_mode: CountMode,
    pub backoff: bool,
    pub urn_source: UrnSource,
    /// Copies of the training transcripts used as templates for resampled
    /// corpora with simulated state sequences.
    pub resample_copies: usize,
    pub region_codes: Vec<RegionCode>,
    pub dependence: DependenceConfig,
    pub ebw: EbwConfig,
    pub mmi_nbest: usize,
    /// Named acoustic scale maps, each run as its own MMI experiment.
    pub mmi_scales: BTreeMap<String, PhoneScaleMap>,
    /// Time smoothing applied to injected frames before differences are
    /// appended in the cepstral variant.
    pub smooth: Vec<f64>,
    pub null_draws: usize,
    pub level: f64,
    pub min_occupancy: f64,
    pub bins: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut mmi_scales = BTreeMap::new();
        mmi_scales.insert("unscaled".to_string(), PhoneScaleMap::default());
        ExperimentConfig {
            seed: 1,
            out: None,
            train_corpus: None,
            test_corpus: None,
            model: None,
            ground_truth: GroundTruthSpec::default(),
            n_train: 200,
            n_test: 50,
            train_passes: 10,
            kappa: 1.0,
            urn_mode: UrnMode::SpeakerIndependent,
            count_mode: CountMode::Hard,
            backoff: false,
            urn_source: UrnSource::Train,
            resample_copies: 1,
            region_codes: RegionCode::ALL.to_vec(),
            dependence: DependenceConfig {
                rho_within: 0.9,
                rho_between: 0.0,
                speaker_offset: 0.0,
            },
            ebw: EbwConfig::default(),
            mmi_nbest: 10,
            mmi_scales,
            smooth: vec![1.0, 2.0, 1.0],
            null_draws: 2000,
            level: 0.99,
            min_occupancy: 50.0,
            bins: 40,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_range<T: std::str::FromStr>(key: &str, v: &str) -> Result<(T, T)> {
    let (a, b) = v
        .split_once(',')
        .ok_or_else(|| Error::Config(format!("{key}: expected two comma-separated values")))?;
    Ok((parse_num(key, a.trim())?, parse_num(key, b.trim())?))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {v:?}"))),
    }
}

/// Inline scale map: `default:0.0625, sil:1`.
fn parse_scales(key: &str, v: &str) -> Result<PhoneScaleMap> {
    let text: String = v
        .split(',')
        .map(|kv| kv.replacen(':', "=", 1) + "\n")
        .collect();
    PhoneScaleMap::parse(&text).map_err(|e| Error::Config(format!("{key}: {e}")))
}

fn inline_scales(m: &PhoneScaleMap) -> String {
    let mut parts = vec![format!("default:{}", m.default_scale())];
    parts.extend(m.entries().map(|(k, v)| format!("{k}:{v}")));
    parts.join(", ")
}

impl ExperimentConfig {
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut scales_seen = false;
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k.starts_with("mmi.scales.") && !scales_seen {
                cfg.mmi_scales.clear();
                scales_seen = true;
            }
            cfg.set(k, v, base)
                .map_err(|e| Error::Config(format!("line {}: {e}", no + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent())
    }

    /// Set one key. Relative paths are resolved against `base`.
    pub fn set(&mut self, key: &str, v: &str, base: Option<&Path>) -> Result<()> {
        let path = |v: &str| -> PathBuf {
            let p = PathBuf::from(v);
            match base {
                Some(b) if p.is_relative() => b.join(p),
                _ => p,
            }
        };
        let gt = &mut self.ground_truth;
        match key {
            "seed" => self.seed = parse_num(key, v)?,
            "out" => self.out = Some(path(v)),
            "corpus.train" => self.train_corpus = Some(path(v)),
            "corpus.test" => self.test_corpus = Some(path(v)),
            "model" => self.model = Some(path(v)),
            "corpus.n_train" => self.n_train = parse_num(key, v)?,
            "corpus.n_test" => self.n_test = parse_num(key, v)?,
            "gt.vowels" => gt.vowels = parse_num(key, v)?,
            "gt.consonants" => gt.consonants = parse_num(key, v)?,
            "gt.vocab" => gt.vocab = parse_num(key, v)?,
            "gt.syllables" => gt.syllables = parse_range(key, v)?,
            "gt.alt_pron" => gt.alt_pron = parse_num(key, v)?,
            "gt.dim" => gt.dim = parse_num(key, v)?,
            "gt.states_per_phone" => gt.states_per_phone = parse_num(key, v)?,
            "gt.separation" => gt.separation = parse_num(key, v)?,
            "gt.variance" => gt.variance = parse_num(key, v)?,
            "gt.variance_jitter" => gt.variance_jitter = parse_num(key, v)?,
            "gt.self_loop" => gt.self_loop = parse_range(key, v)?,
            "gt.speakers" => gt.speakers = parse_num(key, v)?,
            "gt.speaker_offset" => gt.speaker_offset = parse_num(key, v)?,
            "gt.lm_concentration" => gt.lm_concentration = parse_num(key, v)?,
            "gt.end_prob" => gt.end_prob = parse_num(key, v)?,
            "gt.max_words" => gt.max_words = parse_num(key, v)?,
            "gt.context" => gt.context = v.parse()?,
            "gt.emission" => gt.emission = v.parse::<EmissionKind>()?,
            "train.passes" => self.train_passes = parse_num(key, v)?,
            "decode.kappa" => self.kappa = parse_num(key, v)?,
            "resample.mode" => self.urn_mode = v.parse()?,
            "resample.count" => self.count_mode = v.parse()?,
            "resample.backoff" => self.backoff = parse_bool(key, v)?,
            "resample.source" => self.urn_source = v.parse()?,
            "resample.copies" => self.resample_copies = parse_num(key, v)?,
            "regions.codes" => {
                self.region_codes = v
                    .split(',')
                    .map(|c| c.trim().parse())
                    .collect::<Result<_>>()?
            }
            "dependence.rho_within" => self.dependence.rho_within = parse_num(key, v)?,
            "dependence.rho_between" => self.dependence.rho_between = parse_num(key, v)?,
            "dependence.speaker_offset" => self.dependence.speaker_offset = parse_num(key, v)?,
            "mmi.e" => self.ebw.e = parse_num(key, v)?,
            "mmi.passes" => self.ebw.passes = parse_num(key, v)?,
            "mmi.variance_floor" => self.ebw.variance_floor = parse_num(key, v)?,
            "mmi.nbest" => self.mmi_nbest = parse_num(key, v)?,
            "features.smooth" => {
                self.smooth = v
                    .split(',')
                    .map(|w| parse_num(key, w.trim()))
                    .collect::<Result<_>>()?
            }
            "diagnose.null_draws" => self.null_draws = parse_num(key, v)?,
            "diagnose.level" => self.level = parse_num(key, v)?,
            "diagnose.min_occupancy" => self.min_occupancy = parse_num(key, v)?,
            "diagnose.bins" => self.bins = parse_num(key, v)?,
            k => match k.strip_prefix("mmi.scales.") {
                Some(name) if !name.is_empty() => {
                    self.mmi_scales.insert(name.to_string(), parse_scales(key, v)?);
                }
                _ => return Err(Error::Config(format!("unknown key {k:?}"))),
            },
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.ground_truth.validate()?;
        self.dependence.validate()?;
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::Config(format!("decode.kappa = {} must be positive", self.kappa)));
        }
        if !(0.0 < self.level && self.level < 1.0) {
            return Err(Error::Config(format!("diagnose.level = {} must be in (0, 1)", self.level)));
        }
        if self.bins == 0 || self.null_draws < 10 || self.mmi_nbest == 0 {
            return Err(Error::Config("bins, nbest and null draws must be positive".into()));
        }
        if self.region_codes.is_empty() {
            return Err(Error::Config("regions.codes is empty".into()));
        }
        let total: f64 = self.smooth.iter().sum();
        if self.smooth.len() % 2 == 0 || self.smooth.iter().any(|w| !(*w >= 0.0)) || !(total > 0.0) {
            return Err(Error::Config(
                "features.smooth needs an odd number of non-negative weights with a positive sum".into(),
            ));
        }
        Ok(())
    }

    /// Every key in canonical order; parsing this text gives back `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        let gt = &self.ground_truth;
        kv("seed", self.seed.to_string());
        for (k, p) in [
            ("out", &self.out),
            ("corpus.train", &self.train_corpus),
            ("corpus.test", &self.test_corpus),
            ("model", &self.model),
        ] {
            if let Some(p) = p {
                kv(k, p.display().to_string());
            }
        }
        kv("corpus.n_train", self.n_train.to_string());
        kv("corpus.n_test", self.n_test.to_string());
        kv("gt.vowels", gt.vowels.to_string());
        kv("gt.consonants", gt.consonants.to_string());
        kv("gt.vocab", gt.vocab.to_string());
        kv("gt.syllables", format!("{}, {}", gt.syllables.0, gt.syllables.1));
        kv("gt.alt_pron", gt.alt_pron.to_string());
        kv("gt.dim", gt.dim.to_string());
        kv("gt.states_per_phone", gt.states_per_phone.to_string());
        kv("gt.separation", gt.separation.to_string());
        kv("gt.variance", gt.variance.to_string());
        kv("gt.variance_jitter", gt.variance_jitter.to_string());
        kv("gt.self_loop", format!("{}, {}", gt.self_loop.0, gt.self_loop.1));
        kv("gt.speakers", gt.speakers.to_string());
        kv("gt.speaker_offset", gt.speaker_offset.to_string());
        kv("gt.lm_concentration", gt.lm_concentration.to_string());
        kv("gt.end_prob", gt.end_prob.to_string());
        kv("gt.max_words", gt.max_words.to_string());
        kv(
            "gt.context",
            match gt.context {
                ContextMode::Monophone => "monophone",
                ContextMode::WordInternalTriphone => "word-internal-triphone",
            }
            .to_string(),
        );
        kv("gt.emission", gt.emission.as_str().to_string());
        kv("train.passes", self.train_passes.to_string());
        kv("decode.kappa", self.kappa.to_string());
        kv(
            "resample.mode",
            match self.urn_mode {
                UrnMode::SpeakerIndependent => "si",
                UrnMode::SpeakerDependent => "sd",
            }
            .to_string(),
        );
        kv(
            "resample.count",
            match self.count_mode {
                CountMode::Hard => "hard",
                CountMode::Fractional => "fractional",
            }
            .to_string(),
        );
        kv("resample.backoff", self.backoff.to_string());
        kv("resample.source", self.urn_source.as_str().to_string());
        kv("resample.copies", self.resample_copies.to_string());
        kv(
            "regions.codes",
            self.region_codes.iter().map(|c| c.as_str()).collect::<Vec<_>>().join(", "),
        );
        kv("dependence.rho_within", self.dependence.rho_within.to_string());
        kv("dependence.rho_between", self.dependence.rho_between.to_string());
        kv("dependence.speaker_offset", self.dependence.speaker_offset.to_string());
        kv("mmi.e", self.ebw.e.to_string());
        kv("mmi.passes", self.ebw.passes.to_string());
        kv("mmi.variance_floor", self.ebw.variance_floor.to_string());
        kv("mmi.nbest", self.mmi_nbest.to_string());
        for (name, m) in &self.mmi_scales {
            kv(&format!("mmi.scales.{name}"), inline_scales(m));
        }
        kv(
            "features.smooth",
            self.smooth.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(", "),
        );
        kv("diagnose.null_draws", self.null_draws.to_string());
        kv("diagnose.level", self.level.to_string());
        kv("diagnose.min_occupancy", self.min_occupancy.to_string());
        kv("diagnose.bins", self.bins.to_string());
        s
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        crate::io::hex(&Sha256::digest(self.to_text().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_text_round_trips() {
        let text = "seed = 9\ngt.dim = 39 # comment\nregions.codes = r1r2r3, s1s1s1\n\
                    mmi.scales.tiny = default:0.0625, sil:1\nresample.mode = sd\n";
        let cfg = ExperimentConfig::parse(text, None).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.ground_truth.dim, 39);
        assert_eq!(cfg.mmi_scales.len(), 1);
        assert_eq!(cfg.mmi_scales["tiny"].scale("sil"), 1.0);
        assert_eq!(cfg.mmi_scales["tiny"].scale("aa"), 0.0625);
        let back = ExperimentConfig::parse(&cfg.to_text(), None).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn unknown_keys_rejected() {
        let e = ExperimentConfig::parse("seed = 1\nbogus = 2\n", None).unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
        assert!(ExperimentConfig::parse("seed 1\n", None).is_err());
        assert!(ExperimentConfig::parse("decode.kappa = -1\n", None).is_err());
    }

    #[test]
    fn relative_paths_resolve_against_base() {
        let cfg = ExperimentConfig::parse("out = runs/a\nmodel = /abs/m.json\n", Some(Path::new("/cfg"))).unwrap();
        assert_eq!(cfg.out.unwrap(), PathBuf::from("/cfg/runs/a"));
        assert_eq!(cfg.model.unwrap(), PathBuf::from("/abs/m.json"));
    }
}
