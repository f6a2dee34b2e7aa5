use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use hmmprobe_core::corpus::Corpus;
use hmmprobe_core::decoder::{align_counts, DecodeOptions, EditCounts};
use hmmprobe_core::dists::RandomSource;
use hmmprobe_core::diagnostics::correlation_report;
use hmmprobe_core::io::{
    format_transcripts, read_corpus, read_transcripts, write_corpus, write_corpus_jsonl, write_csv, write_json,
    write_jsonl, write_text, Checksum, ModelBundle,
};
use hmmprobe_core::pipeline::{
    align_fractional, align_hard, decode_corpus, gaussianize, score_hypotheses, simulate_like,
};
use hmmprobe_core::regions::{apply_region_code, partition_regions, partition_states};
use hmmprobe_core::repro::{
    mmi_scales, run_experiment, variance_dataset, write_correlation_artifacts, write_mmi_artifacts,
    write_run_record, write_variance_artifacts, CorrelationDataset,
};
use hmmprobe_core::resample::{build_urns, resample_parallel, CountMode};
use hmmprobe_core::synth::generate_corpus;
use hmmprobe_core::Error;

use crate::{AlignMode, Failure, Inputs, Run};

type Outcome = Result<(), Failure>;

#[derive(Clone, Copy)]
enum Default {
    Train,
    Test,
}

impl Run {
    fn rng(&self) -> RandomSource {
        RandomSource::new(self.cfg.seed, self.command)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn record(&self, artifacts: &[String]) -> Outcome {
        let names: Vec<&str> = artifacts.iter().map(String::as_str).collect();
        Ok(write_run_record(&self.out, self.command, &self.cfg, &names)?)
    }

    fn bundle(&self, explicit: Option<&Path>) -> Result<ModelBundle, Failure> {
        let p = explicit
            .map(Path::to_path_buf)
            .or_else(|| self.cfg.model.clone())
            .ok_or_else(|| Failure::Usage(format!("{}: pass --model or set `model` in the config", self.command)))?;
        Ok(ModelBundle::read(&p)?)
    }

    fn corpus(&self, explicit: Option<&Path>, default: Default) -> Result<(Corpus, Checksum), Failure> {
        let (fallback, key) = match default {
            Default::Train => (&self.cfg.train_corpus, "corpus.train"),
            Default::Test => (&self.cfg.test_corpus, "corpus.test"),
        };
        let p = explicit
            .map(Path::to_path_buf)
            .or_else(|| fallback.clone())
            .ok_or_else(|| Failure::Usage(format!("{}: pass --corpus or set `{key}` in the config", self.command)))?;
        Ok(read_corpus(&p)?)
    }
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn save_corpus(run: &Run, stem: &str, corpus: &Corpus) -> Result<Vec<String>, Failure> {
    let (bin, jsonl) = (format!("{stem}.hmpc"), format!("{stem}.jsonl"));
    write_corpus(&run.path(&bin), corpus)?;
    write_corpus_jsonl(&run.path(&jsonl), corpus)?;
    Ok(vec![bin, jsonl])
}

fn transcripts(corpus: &Corpus) -> String {
    format_transcripts(corpus.utterances().iter().map(|u| (u.id.as_str(), u.transcript.as_slice())))
}

#[derive(Serialize)]
struct WerSummary {
    errors: usize,
    substitutions: usize,
    deletions: usize,
    insertions: usize,
    words: usize,
    wer: f64,
}

impl WerSummary {
    fn new(e: &EditCounts) -> Result<Self, Failure> {
        Ok(WerSummary {
            errors: e.errors(),
            substitutions: e.substitutions,
            deletions: e.deletions,
            insertions: e.insertions,
            words: e.ref_len,
            wer: e.rate()?,
        })
    }

    fn print(&self) {
        println!("WER {:.2}%", 100.0 * self.wer);
    }
}

pub fn gen_corpus(run: &Run) -> Outcome {
    let cfg = &run.cfg;
    let gt = generate_corpus(&cfg.ground_truth, cfg.n_train, cfg.n_test, &run.rng())?;
    let mut artifacts = save_corpus(run, "train", &gt.train)?;
    artifacts.extend(save_corpus(run, "test", &gt.test)?);
    ModelBundle {
        model: gt.model,
        lexicon: gt.lexicon,
        lm: gt.lm,
    }
    .write(&run.path("model.json"))?;
    write_text(&run.path("train.txt"), &transcripts(&gt.train))?;
    write_text(&run.path("test.txt"), &transcripts(&gt.test))?;
    artifacts.extend(names(&["model.json", "train.txt", "test.txt"]));
    run.record(&artifacts)
}

pub fn train_ml(run: &Run, inputs: &Inputs) -> Outcome {
    let b = run.bundle(inputs.model.as_deref())?;
    let (corpus, _) = run.corpus(inputs.corpus.as_deref(), Default::Train)?;
    let init = gaussianize(&b.model)?;
    let (model, history) = hmmprobe_core::pipeline::train_ml(&init, &b.lexicon, &corpus, run.cfg.train_passes)?;
    ModelBundle { model, ..b }.write(&run.path("model.json"))?;
    let rows: Vec<Vec<String>> = history
        .iter()
        .enumerate()
        .map(|(i, ll)| vec![i.to_string(), ll.to_string()])
        .collect();
    write_csv(&run.path("train_log.csv"), &["pass", "loglik"], &rows)?;
    run.record(&names(&["model.json", "train_log.csv"]))
}

pub fn align(run: &Run, inputs: &Inputs, mode: AlignMode) -> Outcome {
    let b = run.bundle(inputs.model.as_deref())?;
    let (corpus, _) = run.corpus(inputs.corpus.as_deref(), Default::Train)?;
    let al = match mode {
        AlignMode::Hard => align_hard(&b.model, &b.lexicon, &corpus)?,
        AlignMode::Fractional => align_fractional(&b.model, &b.lexicon, &corpus)?,
    };
    write_jsonl(&run.path("alignments.jsonl"), &al)?;
    run.record(&names(&["alignments.jsonl"]))
}

pub fn decode(run: &Run, inputs: &Inputs) -> Outcome {
    let b = run.bundle(inputs.model.as_deref())?;
    let (corpus, _) = run.corpus(inputs.corpus.as_deref(), Default::Test)?;
    let hyps = decode_corpus(&b.model, &b.lexicon, &b.lm, &corpus, &DecodeOptions::with_kappa(run.cfg.kappa))?;
    let text = format_transcripts(corpus.utterances().iter().zip(&hyps).map(|(u, h)| (u.id.as_str(), h.as_slice())));
    write_text(&run.path("hyp.txt"), &text)?;
    let summary = WerSummary::new(&score_hypotheses(&corpus, &hyps))?;
    write_json(&run.path("wer.json"), &summary)?;
    summary.print();
    run.record(&names(&["hyp.txt", "wer.json"]))
}

pub fn wer(run: &Run, reference: &Path, hyp: &Path, write: bool) -> Outcome {
    let refs = read_transcripts(reference)?;
    let hyps = read_transcripts(hyp)?;
    let mut lookup = std::collections::BTreeMap::new();
    for (id, words) in &hyps {
        if lookup.insert(id.as_str(), words).is_some() {
            return Err(Error::Validation(format!("hypothesis {id} appears twice")).into());
        }
    }
    let mut total = EditCounts::default();
    for (id, words) in &refs {
        let h = lookup
            .remove(id.as_str())
            .ok_or_else(|| Error::Validation(format!("no hypothesis for {id}")))?;
        total.add(&align_counts(words, h));
    }
    if let Some(id) = lookup.keys().next() {
        return Err(Error::Validation(format!("hypothesis {id} has no reference")).into());
    }
    let summary = WerSummary::new(&total)?;
    summary.print();
    if write {
        write_json(&run.path("wer.json"), &summary)?;
        run.record(&names(&["wer.json"]))?;
    }
    Ok(())
}

pub fn simulate(run: &Run, inputs: &Inputs) -> Outcome {
    let b = run.bundle(inputs.model.as_deref())?;
    let (template, _) = run.corpus(inputs.corpus.as_deref(), Default::Test)?;
    let sim = simulate_like(&b.model, &b.lexicon, &template, &run.rng())?;
    let artifacts = save_corpus(run, "simulated", &sim)?;
    run.record(&artifacts)
}

pub fn resample(run: &Run, inputs: &Inputs, template: Option<&Path>) -> Outcome {
    let cfg = &run.cfg;
    let b = run.bundle(inputs.model.as_deref())?;
    let (source, checksum) = run.corpus(inputs.corpus.as_deref(), Default::Train)?;
    let al = match cfg.count_mode {
        CountMode::Hard => align_hard(&b.model, &b.lexicon, &source)?,
        CountMode::Fractional => align_fractional(&b.model, &b.lexicon, &source)?,
    };
    let mut urns = build_urns(&source, &al, cfg.urn_mode, cfg.count_mode)?;
    if cfg.backoff {
        urns = urns.with_backoff(&source, &al)?;
    }
    let template = match template {
        Some(p) => read_corpus(p)?.0,
        None => source.clone(),
    };
    let template_al = align_hard(&b.model, &b.lexicon, &template)?;
    let res = resample_parallel(&urns, &source, &template, &template_al, &run.rng())?;
    let mut artifacts = save_corpus(run, "resampled", &res)?;
    let sidecar = run.path("urns.hmpu");
    let f = File::create(&sidecar).map_err(|e| Error::Io { path: sidecar.clone(), source: e })?;
    urns.write_sidecar(BufWriter::new(f), &checksum)
        .map_err(|e| Error::Io { path: sidecar, source: e })?;
    artifacts.push("urns.hmpu".into());
    run.record(&artifacts)
}

pub fn regions(run: &Run, model: Option<&Path>, real: &Path, resampled: &Path) -> Outcome {
    let b = run.bundle(model)?;
    let (real, _) = read_corpus(real)?;
    let (res, _) = read_corpus(resampled)?;
    if real.len() != res.len() {
        return Err(Error::Validation(format!("{} real and {} resampled utterances", real.len(), res.len())).into());
    }
    let al = align_hard(&b.model, &b.lexicon, &real)?;
    let mut stats = Vec::new();
    let mut per_utt = Vec::new();
    for ((r, s), a) in real.utterances().iter().zip(res.utterances()).zip(&al) {
        if r.id != s.id {
            return Err(Error::Validation(format!("utterance {} is paired with {}", r.id, s.id)).into());
        }
        let states = a.hard_states().ok_or_else(|| Error::MissingAlignment(r.id.clone()))?.to_vec();
        let regions = partition_regions(a)?;
        stats.push(vec![
            r.id.clone(),
            r.len().to_string(),
            regions.len().to_string(),
            (r.len() as f64 / regions.len().max(1) as f64).to_string(),
        ]);
        debug_assert_eq!(regions, partition_states(&states));
        per_utt.push((r.clone().with_states(states)?, regions));
    }
    let mut artifacts = Vec::new();
    for &code in &run.cfg.region_codes {
        let utts = per_utt
            .iter()
            .zip(res.utterances())
            .map(|((r, regions), s)| apply_region_code(r, s, regions, code))
            .collect::<Result<Vec<_>, Error>>()?;
        let name = format!("regions_{}.hmpc", code.as_str());
        write_corpus(&run.path(&name), &Corpus::new(real.dim(), utts)?)?;
        artifacts.push(name);
    }
    write_csv(&run.path("region_stats.csv"), &["utt", "frames", "regions", "mean_length"], &stats)?;
    artifacts.push("region_stats.csv".into());
    run.record(&artifacts)
}

#[derive(Serialize)]
struct Diagnosis<'a> {
    variance: &'a hmmprobe_core::repro::VarianceDataset,
    correlations: &'a CorrelationDataset,
}

pub fn diagnose(run: &Run, inputs: &Inputs) -> Outcome {
    let b = run.bundle(inputs.model.as_deref())?;
    let (corpus, _) = run.corpus(inputs.corpus.as_deref(), Default::Train)?;
    let rng = run.rng();
    let frac = align_fractional(&b.model, &b.lexicon, &corpus)?;
    let variance = variance_dataset("corpus", &b.model, &corpus, &frac, &run.cfg, &rng)?;
    let hard = align_hard(&b.model, &b.lexicon, &corpus)?;
    let correlations = CorrelationDataset::new(
        "corpus",
        correlation_report(&b.model, &corpus, &hard, &rng.derive("shuffle"))?,
    );
    write_variance_artifacts(&run.out, std::slice::from_ref(&variance), run.cfg.bins)?;
    write_correlation_artifacts(&run.out, std::slice::from_ref(&correlations))?;
    write_json(
        &run.path("diagnose.json"),
        &Diagnosis {
            variance: &variance,
            correlations: &correlations,
        },
    )?;
    run.record(&names(&[
        "diagnose.json",
        "state_scores.csv",
        "hist_score_variance.csv",
        "corr_within.csv",
        "corr_between.csv",
    ]))
}

pub fn train_mmi(run: &Run, inputs: &Inputs) -> Outcome {
    let b = run.bundle(inputs.model.as_deref())?;
    let (corpus, _) = run.corpus(inputs.corpus.as_deref(), Default::Train)?;
    let (report, finals) = mmi_scales(&b.model, &b.lexicon, &b.lm, &corpus, &run.cfg)?;
    write_mmi_artifacts(&run.out, &report)?;
    write_json(&run.path("mmi.json"), &report)?;
    let mut artifacts = names(&["mmi.json", "mmi_wer.csv", "score_tracks.csv"]);
    for (r, model) in report.runs.iter().zip(finals) {
        let name = format!("model_{}.json", r.name);
        ModelBundle {
            model,
            lexicon: b.lexicon.clone(),
            lm: b.lm.clone(),
        }
        .write(&run.path(&name))?;
        artifacts.push(name);
    }
    run.record(&artifacts)
}

pub fn report(dir: &Path) -> Outcome {
    let index = hmmprobe_core::report::emit_report(dir)?;
    println!(
        "{}: {} tables, {} other artifacts",
        dir.join(hmmprobe_core::report::REPORT_INDEX).display(),
        index.tables.len(),
        index.other.len()
    );
    Ok(())
}

pub fn repro(run: &Run, experiment: &str) -> Outcome {
    run_experiment(experiment, &run.cfg, &run.out)?;
    println!("{experiment}: artifacts in {}", run.out.display());
    Ok(())
}
