use hmmprobe_core::decoder::{
    build_graph, nbest_lattice, recognize, BigramLm, DecodeOptions, Decoder, Lattice,
};
use hmmprobe_core::dists::RandomSource;
use hmmprobe_core::hmm::viterbi_align;
use hmmprobe_core::mmi::PhoneScaleMap;
use hmmprobe_core::synth::{generate_corpus, GroundTruth, GroundTruthSpec};

fn small_world(seed: u64, separation: f64) -> GroundTruth {
    let spec = GroundTruthSpec {
        vowels: 3,
        consonants: 3,
        vocab: 5,
        syllables: (1, 1),
        alt_pron: 0.5,
        dim: 3,
        states_per_phone: 2,
        separation,
        max_words: 3,
        end_prob: 0.45,
        ..GroundTruthSpec::default()
    };
    generate_corpus(&spec, 0, 50, &RandomSource::new(seed, "decoder-oracle")).unwrap()
}

/// Every word string of length 1..=max over the vocabulary.
fn all_strings(vocab: &[String], max: usize) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = Vec::new();
    let mut layer: Vec<Vec<String>> = vec![vec![]];
    for _ in 0..max {
        let mut next = Vec::new();
        for s in &layer {
            for w in vocab {
                let mut t = s.clone();
                t.push(w.clone());
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

fn exhaustive(gt: &GroundTruth, lm: &BigramLm, kappa: f64, utt_idx: usize) -> Vec<(f64, Vec<String>)> {
    let utt = &gt.test.utterances()[utt_idx];
    let mut scored: Vec<(f64, Vec<String>)> = all_strings(lm.vocab(), 4)
        .into_iter()
        .filter_map(|ws| {
            let g = build_graph(&ws, &gt.lexicon, &gt.model).ok()?;
            let (ac, _) = viterbi_align(&gt.model, &g, utt).ok()?;
            let lp = lm.sentence_log_prob(&ws).unwrap();
            let s = if kappa == 0.0 { ac } else { ac + kappa * lp };
            s.is_finite().then_some((s, ws))
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    scored
}

#[test]
fn decoder_matches_exhaustive_search() {
    let gt = small_world(11, 1.5);
    let dec = Decoder::new(&gt.model, &gt.lexicon, &gt.lm).unwrap();
    let opts = DecodeOptions {
        kappa: 1.0,
        nbest: 5,
        scales: PhoneScaleMap::default(),
    };
    let mut nontrivial = 0;
    for i in 0..gt.test.len() {
        let utt = &gt.test.utterances()[i];
        let hyps = dec.nbest(utt, &opts).unwrap();
        let oracle = exhaustive(&gt, &gt.lm, 1.0, i);
        assert!(hyps[0].words.len() <= 4);
        assert_eq!(hyps[0].words, oracle[0].1, "utterance {}", utt.id);
        assert!((hyps[0].score - oracle[0].0).abs() < 1e-8);
        // every decoded hypothesis within length 4 has the oracle's score and rank
        let mut k = 0;
        for h in &hyps {
            if h.words.len() > 4 {
                continue;
            }
            let pos = oracle.iter().position(|o| o.1 == h.words).unwrap();
            assert!((oracle[pos].0 - h.score).abs() < 1e-8);
            assert!((oracle[k].0 - h.score).abs() < 1e-8, "rank {k} of {}", utt.id);
            k += 1;
        }
        if hyps[0].words != utt.transcript {
            nontrivial += 1;
        }
    }
    // the instance should contain some recognition errors to be informative
    assert!(nontrivial > 0);
}

#[test]
fn kappa_zero_ignores_the_language_model() {
    let gt = small_world(5, 1.5);
    let flat = BigramLm::uniform(gt.lm.vocab().to_vec()).unwrap();
    for utt in gt.test.utterances().iter().take(20) {
        let a = recognize(&gt.model, &gt.lexicon, &gt.lm, 0.0, utt).unwrap();
        let b = recognize(&gt.model, &gt.lexicon, &flat, 0.0, utt).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn joint_rescaling_keeps_the_argmax() {
    let gt = small_world(6, 1.5);
    let dec = Decoder::new(&gt.model, &gt.lexicon, &gt.lm).unwrap();
    for utt in gt.test.utterances().iter().take(20) {
        let base = DecodeOptions { kappa: 2.0, nbest: 1, scales: PhoneScaleMap::default() };
        let half = DecodeOptions { kappa: 1.0, nbest: 1, scales: PhoneScaleMap::uniform(0.5).unwrap() };
        let a = dec.nbest(utt, &base).unwrap();
        let b = dec.nbest(utt, &half).unwrap();
        assert_eq!(a[0].words, b[0].words);
    }
}

#[test]
fn nbest_lists_are_distinct_and_sorted() {
    let gt = small_world(7, 1.0);
    let dec = Decoder::new(&gt.model, &gt.lexicon, &gt.lm).unwrap();
    let opts = DecodeOptions { kappa: 1.0, nbest: 8, scales: PhoneScaleMap::default() };
    for utt in gt.test.utterances().iter().take(20) {
        let hyps = dec.nbest(utt, &opts).unwrap();
        assert_eq!(hyps.len(), 8);
        for w in hyps.windows(2) {
            assert!(w[0].score >= w[1].score);
            assert_ne!(w[0].words, w[1].words);
        }
        // rescoring each hypothesis by forced alignment reproduces its score
        for h in &hyps {
            let g = build_graph(&h.words, &gt.lexicon, &gt.model).unwrap();
            let (ac, _) = viterbi_align(&gt.model, &g, utt).unwrap();
            assert!((ac + h.lm - h.score).abs() < 1e-8);
        }
        let one = dec.nbest(utt, &DecodeOptions { nbest: 1, ..opts.clone() }).unwrap();
        assert_eq!(one[0].words, hyps[0].words);
    }
}

#[test]
fn lattice_paths_reproduce_decoder_scores() {
    let gt = small_world(8, 1.0);
    let dec = Decoder::new(&gt.model, &gt.lexicon, &gt.lm).unwrap();
    let mut mixed = PhoneScaleMap::uniform(0.6).unwrap();
    mixed.set("sil", 1.0).unwrap();
    mixed.set("aa", 0.8).unwrap();
    for (kappa, scales) in [(1.0, PhoneScaleMap::default()), (4.0, PhoneScaleMap::default()), (1.0, mixed)] {
        let opts = DecodeOptions { kappa, nbest: 6, scales: scales.clone() };
        for utt in gt.test.utterances().iter().take(15) {
            let hyps = dec.nbest(utt, &opts).unwrap();
            let lat = nbest_lattice(&dec, &gt.lexicon, utt, &opts).unwrap();
            assert_eq!(lat.paths.len(), hyps.len());
            for (p, h) in lat.paths.iter().zip(&hyps) {
                assert_eq!(p.words, h.words);
                assert!((p.score - h.score).abs() < 1e-8, "{} vs {}", p.score, h.score);
            }
            let w: Vec<f64> = lat
                .score_arcs(&gt.model, utt, kappa, &scales)
                .unwrap()
                .iter()
                .map(|a| a.weight)
                .collect();
            let (best, _, words) = lat.best_path(&w).unwrap();
            assert!(best >= hyps[0].score - 1e-8);
            // recombined paths can only beat the top hypothesis by re-aligning the same words
            if (best - hyps[0].score).abs() < 1e-8 {
                assert_eq!(words, hyps[0].words);
            }
            let one = nbest_lattice(&dec, &gt.lexicon, utt, &DecodeOptions { nbest: 1, ..opts.clone() }).unwrap();
            assert_eq!(one.paths.len(), 1);
            assert_eq!(one.paths[0].words, hyps[0].words);
        }
    }
}

#[test]
fn lattice_posteriors_cover_every_frame_once() {
    let gt = small_world(9, 1.0);
    let dec = Decoder::new(&gt.model, &gt.lexicon, &gt.lm).unwrap();
    let opts = DecodeOptions { kappa: 1.0, nbest: 6, scales: PhoneScaleMap::uniform(0.2).unwrap() };
    for utt in gt.test.utterances().iter().take(10) {
        let lat = nbest_lattice(&dec, &gt.lexicon, utt, &opts).unwrap();
        let num = Lattice::numerator(utt, &gt.model, &gt.lexicon, &gt.lm, &opts).unwrap();
        let merged = lat.merge(&num).unwrap();
        let w: Vec<f64> = merged
            .score_arcs(&gt.model, utt, 1.0, &opts.scales)
            .unwrap()
            .iter()
            .map(|a| a.weight)
            .collect();
        let (_, post) = merged.arc_posteriors(&w).unwrap();
        let mut cover = vec![0.0; utt.len()];
        for (arc, p) in merged.arcs.iter().zip(&post) {
            for ph in &arc.phones {
                for t in ph.start..ph.end {
                    cover[t as usize] += p;
                }
            }
        }
        for c in cover {
            assert!((c - 1.0).abs() < 1e-9, "{c}");
        }
    }
}
