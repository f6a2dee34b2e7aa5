//! End-to-end experiments. Each is a pure function of the configuration
//! and seed, writes its artifacts under an output directory and returns
//! a summary.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, UrnSource};
use crate::corpus::{Corpus, Utterance};
use crate::decoder::{BigramLm, DecodeOptions, Lexicon};
use crate::diagnostics::{
    correlation_report, expected_score, histogram, lag1_correlation, score_stats, variance_test,
    CorrelationReport, ReferenceMean, ScoreStats, VarianceTest,
};
use crate::dists::RandomSource;
use crate::error::{Error, Result};
use crate::hmm::{Alignment, HmmModel};
use crate::io::{write_csv, write_json, write_text};
use crate::mmi::{run_mmi, MmiPass, PhoneScaleMap};
use crate::pipeline::{
    align_fractional, align_hard, decode_and_score, estimate_outputs, gaussianize, generate_lattices,
    recorded_alignments, resample_simulated, simulate_like, train_ml,
};
use crate::regions::{apply_region_code, partition_regions};
use crate::resample::{build_urns, resample_parallel, CountMode, UrnSet};
use crate::synth::{
    append_deltas_corpus, generate_corpus, inject_dependence, project_corpus, project_model, smooth_corpus, EmissionKind,
    GroundTruth,
};

/// The experiments `repro` can run.
pub const EXPERIMENTS: [&str; 5] = ["mmi-scales", "table2", "variance-test", "correlations", "cepstral-variant"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub artifacts: Vec<String>,
}

pub const RUN_RECORD: &str = "run.json";

/// Write `run.json` and the canonical configuration next to the artifacts.
pub fn write_run_record(out: &Path, command: &str, cfg: &ExperimentConfig, artifacts: &[&str]) -> Result<()> {
    write_text(&out.join("config.cfg"), &cfg.to_text())?;
    write_json(
        &out.join(RUN_RECORD),
        &RunRecord {
            command: command.to_string(),
            seed: cfg.seed,
            config_hash: cfg.hash(),
            artifacts: artifacts.iter().map(|s| s.to_string()).collect(),
        },
    )
}

fn f(x: f64) -> String {
    format!("{x}")
}

fn root(cfg: &ExperimentConfig, command: &str) -> RandomSource {
    RandomSource::new(cfg.seed, command)
}

fn ground_truth(cfg: &ExperimentConfig, rng: &RandomSource) -> Result<GroundTruth> {
    generate_corpus(&cfg.ground_truth, cfg.n_train, cfg.n_test, &rng.derive("gen-corpus"))
}

fn inject(gt: &GroundTruth, corpus: &Corpus, cfg: &ExperimentConfig, rng: &RandomSource) -> Result<Corpus> {
    inject_dependence(corpus, &recorded_alignments(corpus)?, &gt.model, &cfg.dependence, rng)
}

fn urns_for(cfg: &ExperimentConfig, model: &HmmModel, gt: &GroundTruth, corpus: &Corpus) -> Result<UrnSet> {
    let al = match cfg.count_mode {
        CountMode::Hard => align_hard(model, &gt.lexicon, corpus)?,
        CountMode::Fractional => align_fractional(model, &gt.lexicon, corpus)?,
    };
    let urns = build_urns(corpus, &al, cfg.urn_mode, cfg.count_mode)?;
    if cfg.backoff {
        urns.with_backoff(corpus, &al)
    } else {
        Ok(urns)
    }
}

// ---------------------------------------------------------------- variance

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceDataset {
    pub name: String,
    pub dim: usize,
    /// Largest relative gap between each state's mean score and d/2 + ½Σ log σ².
    pub identity_max_rel_error: f64,
    pub test: VarianceTest,
    pub stats: ScoreStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub datasets: Vec<VarianceDataset>,
}

impl VarianceReport {
    pub fn get(&self, name: &str) -> Option<&VarianceDataset> {
        self.datasets.iter().find(|d| d.name == name)
    }
}

/// Score statistics under fractional `alignments` plus the variance test.
pub fn variance_dataset(
    name: &str,
    model: &HmmModel,
    corpus: &Corpus,
    alignments: &[Alignment],
    cfg: &ExperimentConfig,
    rng: &RandomSource,
) -> Result<VarianceDataset> {
    let stats = score_stats(model, corpus, alignments)?;
    let mut worst = 0.0f64;
    for (&j, s) in &stats.states {
        let e = expected_score(model, j)?;
        worst = worst.max((s.mean - e).abs() / e.abs());
    }
    let test = variance_test(&stats, model.dim(), cfg.null_draws, cfg.level, cfg.min_occupancy, &rng.derive(name))?;
    Ok(VarianceDataset {
        name: name.to_string(),
        dim: model.dim(),
        identity_max_rel_error: worst,
        test,
        stats,
    })
}

/// `state_scores.csv` and `hist_score_variance.csv`; histogram counts cover
/// exactly the states that entered the variance test.
pub fn write_variance_artifacts(out: &Path, datasets: &[VarianceDataset], bins: usize) -> Result<()> {
    let mut rows = Vec::new();
    let mut hist = Vec::new();
    for ds in datasets {
        for v in &ds.test.verdicts {
            let s = &ds.stats.states[&v.state];
            rows.push(vec![
                ds.name.clone(),
                v.state.to_string(),
                f(v.occupancy),
                f(s.mean),
                f(v.variance),
                f(v.lower),
                f(v.upper),
                v.inside.to_string(),
            ]);
        }
        let vars: Vec<f64> = ds.test.verdicts.iter().map(|v| v.variance).collect();
        for (left, count) in histogram(&vars, bins) {
            hist.push(vec![ds.name.clone(), f(left), count.to_string()]);
        }
    }
    write_csv(
        &out.join("state_scores.csv"),
        &["dataset", "state", "occupancy", "mean_score", "score_variance", "lower", "upper", "inside"],
        &rows,
    )?;
    write_csv(&out.join("hist_score_variance.csv"), &["dataset", "bin_left", "count"], &hist)
}

/// Datasets for one emission family; Laplace also yields a resampled copy
/// of its training data scored against the same model.
fn variance_on(name: &str, cfg: &ExperimentConfig, rng: &RandomSource) -> Result<Vec<VarianceDataset>> {
    let mut c = cfg.clone();
    if name == "laplace" {
        c.ground_truth.emission = EmissionKind::Laplace;
    }
    let gt = generate_corpus(&c.ground_truth, c.n_train, 0, &rng.derive(&format!("gen-corpus-{name}")))?;
    let train = if name == "ar1" {
        inject(&gt, &gt.train, &c, &rng.derive("inject"))?
    } else {
        gt.train.clone()
    };
    let (model, _) = train_ml(&gaussianize(&gt.model)?, &gt.lexicon, &train, c.train_passes)?;
    let al = align_fractional(&model, &gt.lexicon, &train)?;
    let mut out = vec![variance_dataset(name, &model, &train, &al, &c, rng)?];
    if name == "laplace" {
        let urns = urns_for(&c, &model, &gt, &train)?;
        let resampled = resample_simulated(&urns, &train, &model, &gt.lexicon, &train, &rng.derive("resample"))?;
        let ral = align_fractional(&model, &gt.lexicon, &resampled)?;
        out.push(variance_dataset("laplace-resampled", &model, &resampled, &ral, &c, rng)?);
    }
    Ok(out)
}

/// Score-variance test on Gaussian, Laplace and AR(1)-injected training
/// corpora, each against a model trained to convergence on it, plus a
/// resampled copy of the Laplace corpus.
pub fn repro_variance_test(cfg: &ExperimentConfig, out: &Path) -> Result<VarianceReport> {
    let rng = root(cfg, "repro-variance-test");
    let mut datasets = Vec::new();
    for n in ["gaussian", "laplace", "ar1"] {
        datasets.extend(variance_on(n, cfg, &rng)?);
    }
    let report = VarianceReport { datasets };
    write_variance_artifacts(out, &report.datasets, cfg.bins)?;
    write_json(&out.join("variance_test.json"), &report)?;
    write_run_record(
        out,
        "repro variance-test",
        cfg,
        &["variance_test.json", "state_scores.csv", "hist_score_variance.csv"],
    )?;
    Ok(report)
}

// ------------------------------------------------------------ correlations

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationDataset {
    pub name: String,
    pub median_within: Option<f64>,
    pub max_abs_between: f64,
    pub report: CorrelationReport,
}

impl CorrelationDataset {
    pub fn new(name: &str, report: CorrelationReport) -> Self {
        CorrelationDataset {
            name: name.to_string(),
            median_within: report.median_within(),
            max_abs_between: report.between.iter().map(|b| b.rho.abs()).fold(0.0, f64::max),
            report,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationsReport {
    /// Lag-1 correlation of (−1, −1, −1, 1, 1, 1) about its own mean.
    pub worked_example: f64,
    pub datasets: Vec<CorrelationDataset>,
}

impl CorrelationsReport {
    pub fn get(&self, name: &str) -> Option<&CorrelationDataset> {
        self.datasets.iter().find(|d| d.name == name)
    }
}

pub fn write_correlation_artifacts(out: &Path, datasets: &[CorrelationDataset]) -> Result<()> {
    let mut within = Vec::new();
    let mut between = Vec::new();
    for ds in datasets {
        for w in &ds.report.within {
            within.push(vec![ds.name.clone(), w.state.to_string(), w.examples.to_string(), f(w.rho)]);
        }
        for b in &ds.report.between {
            between.push(vec![ds.name.clone(), b.speaker.clone(), b.regions.to_string(), f(b.rho), f(b.shuffled)]);
        }
    }
    write_csv(&out.join("corr_within.csv"), &["dataset", "state", "examples", "rho"], &within)?;
    write_csv(
        &out.join("corr_between.csv"),
        &["dataset", "speaker", "regions", "rho", "shuffled"],
        &between,
    )
}

/// Template with `copies` renamed repetitions of every utterance.
fn repeated(template: &Corpus, copies: usize) -> Result<Corpus> {
    let utts = (0..copies.max(1))
        .flat_map(|c| {
            template.utterances().iter().map(move |u| u.renamed(format!("{}.r{c}", u.id)))
        })
        .collect();
    Corpus::new(template.dim(), utts)
}

/// Within- and between-region score correlations on dependence-injected
/// data and on resampled data with simulated state sequences.
pub fn repro_correlations(cfg: &ExperimentConfig, out: &Path) -> Result<CorrelationsReport> {
    let rng = root(cfg, "repro-correlations");
    let gt = ground_truth(cfg, &rng)?;
    let real = inject(&gt, &gt.train, cfg, &rng.derive("inject"))?;
    let (model, _) = train_ml(&gaussianize(&gt.model)?, &gt.lexicon, &real, cfg.train_passes)?;
    let al = align_hard(&model, &gt.lexicon, &real)?;
    let injected = correlation_report(&model, &real, &al, &rng.derive("shuffle-injected"))?;

    let urns = urns_for(cfg, &model, &gt, &real)?;
    let template = repeated(&real, cfg.resample_copies)?;
    let resampled = resample_simulated(&urns, &real, &model, &gt.lexicon, &template, &rng.derive("resample"))?;
    let res_al = recorded_alignments(&resampled)?;
    let res = correlation_report(&model, &resampled, &res_al, &rng.derive("shuffle-resampled"))?;

    let report = CorrelationsReport {
        worked_example: lag1_correlation(&[-1.0, -1.0, -1.0, 1.0, 1.0, 1.0], ReferenceMean::ListMean)?,
        datasets: vec![CorrelationDataset::new("injected", injected), CorrelationDataset::new("resampled", res)],
    };
    write_correlation_artifacts(out, &report.datasets)?;
    write_json(&out.join("correlations.json"), &report)?;
    write_run_record(
        out,
        "repro correlations",
        cfg,
        &["correlations.json", "corr_within.csv", "corr_between.csv"],
    )?;
    Ok(report)
}

// ------------------------------------------------------------------ table2

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WerRow {
    pub condition: String,
    pub errors: usize,
    pub words: usize,
    pub wer: f64,
}

impl WerRow {
    fn new(condition: &str, e: &crate::decoder::EditCounts) -> Self {
        WerRow {
            condition: condition.to_string(),
            errors: e.errors(),
            words: e.ref_len,
            wer: e.rate().unwrap_or(0.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table2Report {
    pub rows: Vec<WerRow>,
}

impl Table2Report {
    pub fn wer(&self, condition: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.condition == condition).map(|r| r.wer)
    }
}

fn with_states(u: &Utterance, al: &Alignment) -> Result<Utterance> {
    let s = al
        .hard_states()
        .ok_or_else(|| Error::Validation(format!("alignment for {} is not hard", u.id)))?;
    u.clone().with_states(s.to_vec())
}

/// Region-code rearrangements of a dependence-injected test set and its
/// parallel resampled version, decoded with a model trained on dependence-injected training
/// data, plus a test set simulated from that model.
pub fn repro_table2(cfg: &ExperimentConfig, out: &Path) -> Result<Table2Report> {
    let rng = root(cfg, "repro-table2");
    let gt = ground_truth(cfg, &rng)?;
    let train = inject(&gt, &gt.train, cfg, &rng.derive("inject-train"))?;
    let test = inject(&gt, &gt.test, cfg, &rng.derive("inject-test"))?;
    let (model, _) = train_ml(&gaussianize(&gt.model)?, &gt.lexicon, &train, cfg.train_passes)?;
    let test_al = align_hard(&model, &gt.lexicon, &test)?;
    let source = match cfg.urn_source {
        UrnSource::Train => &train,
        UrnSource::Test => &test,
    };
    let urns = urns_for(cfg, &model, &gt, source)?;
    let resampled = resample_parallel(&urns, source, &test, &test_al, &rng.derive("resample"))?;
    let opts = DecodeOptions::with_kappa(cfg.kappa);

    let mut rows = Vec::new();
    for &code in &cfg.region_codes {
        let utts = test
            .utterances()
            .iter()
            .zip(resampled.utterances())
            .zip(&test_al)
            .map(|((r, s), al)| apply_region_code(&with_states(r, al)?, s, &partition_regions(al)?, code))
            .collect::<Result<Vec<_>>>()?;
        let corpus = Corpus::new(test.dim(), utts)?;
        let e = decode_and_score(&model, &gt.lexicon, &gt.lm, &corpus, &opts)?;
        log::info!("table2 {code}: {} errors / {} words", e.errors(), e.ref_len);
        rows.push(WerRow::new(code.as_str(), &e));
    }
    let sim = simulate_like(&model, &gt.lexicon, &test, &rng.derive("simulate"))?;
    let e = decode_and_score(&model, &gt.lexicon, &gt.lm, &sim, &opts)?;
    rows.push(WerRow::new("simulation", &e));

    let report = Table2Report { rows };
    write_csv(
        &out.join("table2.csv"),
        &["condition", "errors", "words", "wer"],
        &report
            .rows
            .iter()
            .map(|r| vec![r.condition.clone(), r.errors.to_string(), r.words.to_string(), f(r.wer)])
            .collect::<Vec<_>>(),
    )?;
    write_json(&out.join("table2.json"), &report)?;
    write_run_record(out, "repro table2", cfg, &["table2.json", "table2.csv"])?;
    Ok(report)
}

// -------------------------------------------------------------- mmi-scales

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmiScaleRun {
    pub name: String,
    pub passes: Vec<MmiPass>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmiReport {
    pub runs: Vec<MmiScaleRun>,
}

impl MmiReport {
    pub fn get(&self, name: &str) -> Option<&MmiScaleRun> {
        self.runs.iter().find(|r| r.name == name)
    }
}

/// Extended Baum-Welch from `model` on lattices of `corpus`, once per
/// configured acoustic scale map. Returns the report and the final model of
/// each run.
pub fn mmi_scales(
    model: &HmmModel,
    lexicon: &Lexicon,
    lm: &BigramLm,
    corpus: &Corpus,
    cfg: &ExperimentConfig,
) -> Result<(MmiReport, Vec<HmmModel>)> {
    let track_al = align_hard(model, lexicon, corpus)?;
    let mut runs = Vec::new();
    let mut finals = Vec::new();
    for (name, scales) in &cfg.mmi_scales {
        let opts = DecodeOptions {
            kappa: cfg.kappa,
            nbest: cfg.mmi_nbest,
            scales: scales.clone(),
        };
        let lattices = generate_lattices(model, lexicon, lm, corpus, &opts)?;
        let mut run = run_mmi(model, corpus.utterances(), &lattices, cfg.kappa, scales, &cfg.ebw, &track_al)?;
        finals.push(run.models.pop().unwrap_or_else(|| model.clone()));
        runs.push(MmiScaleRun {
            name: name.clone(),
            passes: run.passes,
        });
    }
    Ok((MmiReport { runs }, finals))
}

/// `mmi_wer.csv` and `score_tracks.csv`.
pub fn write_mmi_artifacts(out: &Path, report: &MmiReport) -> Result<()> {
    let mut wer_rows = Vec::new();
    let mut track_rows = Vec::new();
    for r in &report.runs {
        for p in &r.passes {
            wer_rows.push(vec![
                r.name.clone(),
                p.pass.to_string(),
                p.errors.to_string(),
                p.ref_words.to_string(),
                f(p.wer),
                f(p.max_change),
            ]);
            for (phone, score) in &p.tracks {
                track_rows.push(vec![r.name.clone(), p.pass.to_string(), phone.clone(), f(*score)]);
            }
        }
    }
    write_csv(
        &out.join("mmi_wer.csv"),
        &["scales", "pass", "errors", "words", "wer", "max_change"],
        &wer_rows,
    )?;
    write_csv(&out.join("score_tracks.csv"), &["scales", "pass", "phone", "mean_score"], &track_rows)
}

/// Extended Baum-Welch on lattices of matched simulated training data,
/// starting from the converged ML model.
pub fn repro_mmi_scales(cfg: &ExperimentConfig, out: &Path) -> Result<MmiReport> {
    let rng = root(cfg, "repro-mmi-scales");
    let gt = ground_truth(cfg, &rng)?;
    let (model, _) = train_ml(&gaussianize(&gt.model)?, &gt.lexicon, &gt.train, cfg.train_passes)?;
    let (report, _) = mmi_scales(&model, &gt.lexicon, &gt.lm, &gt.train, cfg)?;
    write_mmi_artifacts(out, &report)?;
    write_json(&out.join("mmi.json"), &report)?;
    write_run_record(out, "repro mmi-scales", cfg, &["mmi.json", "mmi_wer.csv", "score_tracks.csv"])?;
    Ok(report)
}

/// Silence and vowels unscaled, the consonants alternately at `a` and `b`.
pub fn three_scale_map(phones: &[String], a: f64, b: f64) -> Result<PhoneScaleMap> {
    let mut m = PhoneScaleMap::default();
    let mut k = 0;
    for p in phones {
        if p == crate::synth::SILENCE || crate::synth::is_vowel(p) {
            continue;
        }
        m.set(p.clone(), if k % 2 == 0 { a } else { b })?;
        k += 1;
    }
    Ok(m)
}

// -------------------------------------------------------- cepstral-variant

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CepstralRow {
    pub features: String,
    pub dim: usize,
    pub test_set: String,
    pub errors: usize,
    pub words: usize,
    pub wer: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CepstralReport {
    pub rows: Vec<CepstralRow>,
}

impl CepstralReport {
    pub fn errors(&self, features: &str, test_set: &str) -> Option<usize> {
        self.rows
            .iter()
            .find(|r| r.features == features && r.test_set == test_set)
            .map(|r| r.errors)
    }
}

/// Static features with appended differences against the static subspace
/// alone. Injected frames are smoothed in time first, so that differences
/// carry trajectory information. The static model and test sets are the projections of the full
/// ones, so both feature sets are scored on the same simulated, resampled
/// and real utterances.
pub fn repro_cepstral_variant(cfg: &ExperimentConfig, out: &Path) -> Result<CepstralReport> {
    let rng = root(cfg, "repro-cepstral-variant");
    let gt = ground_truth(cfg, &rng)?;
    let d = cfg.ground_truth.dim;
    let front_end = |c: &Corpus, label: &str| -> Result<Corpus> {
        append_deltas_corpus(&smooth_corpus(&inject(&gt, c, cfg, &rng.derive(label))?, &cfg.smooth)?)
    };
    let train = front_end(&gt.train, "inject-train")?;
    let test = front_end(&gt.test, "inject-test")?;
    let init = estimate_outputs(&gt.model, &train, &recorded_alignments(&train)?)?;
    let (full, _) = train_ml(&init, &gt.lexicon, &train, cfg.train_passes)?;
    let sim = simulate_like(&full, &gt.lexicon, &test, &rng.derive("simulate"))?;
    let urns = urns_for(cfg, &full, &gt, &train)?;
    let test_al = align_hard(&full, &gt.lexicon, &test)?;
    let res = resample_parallel(&urns, &train, &test, &test_al, &rng.derive("resample"))?;
    let opts = DecodeOptions::with_kappa(cfg.kappa);

    let stat = project_model(&full, d)?;
    let mut rows = Vec::new();
    for (set, corpus) in [("simulated", &sim), ("resampled", &res), ("real", &test)] {
        for (name, model, c) in [("static+deltas", &full, corpus.clone()), ("static", &stat, project_corpus(corpus, d)?)] {
            let e = decode_and_score(model, &gt.lexicon, &gt.lm, &c, &opts)?;
            log::info!("cepstral {name} {set}: {} errors / {} words", e.errors(), e.ref_len);
            rows.push(CepstralRow {
                features: name.to_string(),
                dim: model.dim(),
                test_set: set.to_string(),
                errors: e.errors(),
                words: e.ref_len,
                wer: e.rate().unwrap_or(0.0),
            });
        }
    }
    let report = CepstralReport { rows };
    write_csv(
        &out.join("cepstral.csv"),
        &["features", "dim", "test_set", "errors", "words", "wer"],
        &report
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.features.clone(),
                    r.dim.to_string(),
                    r.test_set.clone(),
                    r.errors.to_string(),
                    r.words.to_string(),
                    f(r.wer),
                ]
            })
            .collect::<Vec<_>>(),
    )?;
    write_json(&out.join("cepstral.json"), &report)?;
    write_run_record(out, "repro cepstral-variant", cfg, &["cepstral.json", "cepstral.csv"])?;
    Ok(report)
}

/// Run one named experiment; the summary comes back as JSON.
pub fn run_experiment(name: &str, cfg: &ExperimentConfig, out: &Path) -> Result<serde_json::Value> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    Ok(match name {
        "mmi-scales" => serde_json::to_value(repro_mmi_scales(cfg, out)?)?,
        "table2" => serde_json::to_value(repro_table2(cfg, out)?)?,
        "variance-test" => serde_json::to_value(repro_variance_test(cfg, out)?)?,
        "correlations" => serde_json::to_value(repro_correlations(cfg, out)?)?,
        "cepstral-variant" => serde_json::to_value(repro_cepstral_variant(cfg, out)?)?,
        other => {
            return Err(Error::Config(format!(
                "unknown experiment {other:?}; expected one of {}",
                EXPERIMENTS.join(", ")
            )))
        }
    })
}
