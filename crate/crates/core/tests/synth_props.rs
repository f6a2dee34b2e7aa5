//! Ground-truth generation, dependence injection and feature transforms.

use hmmprobe_core::corpus::Utterance;
use hmmprobe_core::decoder::DecodeOptions;
use hmmprobe_core::dists::RandomSource;
use hmmprobe_core::io::corpus_checksum;
use hmmprobe_core::pipeline::{decode_and_score, recorded_alignments};
use hmmprobe_core::synth::{
    append_deltas, generate_corpus, inject_dependence, project_corpus, project_model, smooth_frames, DependenceConfig,
    GroundTruth, GroundTruthSpec,
};
use proptest::prelude::*;

fn truth(seed: u64, n_train: usize, n_test: usize) -> GroundTruth {
    generate_corpus(&GroundTruthSpec::default(), n_train, n_test, &RandomSource::new(seed, "synth-tests")).unwrap()
}

#[test]
fn generation_is_a_function_of_the_seed() {
    let a = truth(1, 20, 5);
    let b = truth(1, 20, 5);
    let c = truth(2, 20, 5);
    assert_eq!(a.train, b.train);
    assert_eq!(a.test, b.test);
    assert_eq!(corpus_checksum(&a.train).unwrap(), corpus_checksum(&b.train).unwrap());
    assert_ne!(corpus_checksum(&a.train).unwrap(), corpus_checksum(&c.train).unwrap());
    for u in a.train.utterances() {
        assert_eq!(u.states.as_ref().map(Vec::len), Some(u.len()));
        assert!(!u.transcript.is_empty());
    }
}

#[test]
fn well_separated_truth_recognizes_its_own_simulations() {
    let gt = truth(3, 0, 30);
    let e = decode_and_score(&gt.model, &gt.lexicon, &gt.lm, &gt.test, &DecodeOptions::default()).unwrap();
    assert!(e.rate().unwrap() < 0.02, "{e:?}");
}

/// Lag-1 correlation of standardized residuals over adjacent frames that
/// share a state, pooled over dimensions.
fn within_state_lag1(gt: &GroundTruth, corpus: &hmmprobe_core::corpus::Corpus) -> (f64, f64) {
    let (mut sxy, mut sxx, mut n) = (0.0, 0.0, 0usize);
    let (mut sq, mut m) = (0.0, 0usize);
    for u in corpus.utterances() {
        let states = u.states.as_ref().unwrap();
        let z = |t: usize| -> Vec<f64> {
            let g = gt.model.output(states[t]).as_diagonal().unwrap();
            u.frame(t)
                .iter()
                .zip(g.mean())
                .zip(g.variance())
                .map(|((x, mu), v)| (x - mu) / v.sqrt())
                .collect()
        };
        for t in 0..u.len() {
            let zt = z(t);
            sq += zt.iter().map(|a| a * a).sum::<f64>();
            m += zt.len();
            if t > 0 && states[t - 1] == states[t] {
                let zp = z(t - 1);
                sxy += zp.iter().zip(&zt).map(|(a, b)| a * b).sum::<f64>();
                sxx += zp.iter().map(|a| a * a).sum::<f64>();
                n += zt.len();
            }
        }
    }
    assert!(n > 1000);
    (sxy / sxx, sq / m as f64)
}

#[test]
fn injected_within_region_correlation_is_recovered() {
    let gt = truth(4, 120, 0);
    let al = recorded_alignments(&gt.train).unwrap();
    let cfg = DependenceConfig {
        rho_within: 0.9,
        rho_between: 0.0,
        speaker_offset: 0.0,
    };
    let dep = inject_dependence(&gt.train, &al, &gt.model, &cfg, &RandomSource::new(4, "inject")).unwrap();
    let (rho, var) = within_state_lag1(&gt, &dep);
    assert!((0.85..=0.95).contains(&rho), "{rho}");
    assert!((var - 1.0).abs() < 0.1, "{var}");

    let (rho0, var0) = within_state_lag1(&gt, &gt.train);
    assert!(rho0.abs() < 0.03, "{rho0}");
    assert!((var0 - 1.0).abs() < 0.05, "{var0}");
}

#[test]
fn zero_dependence_leaves_the_corpus_unchanged() {
    let gt = truth(5, 10, 0);
    let al = recorded_alignments(&gt.train).unwrap();
    let cfg = DependenceConfig {
        rho_within: 0.0,
        rho_between: 0.0,
        speaker_offset: 0.0,
    };
    let out = inject_dependence(&gt.train, &al, &gt.model, &cfg, &RandomSource::new(5, "none")).unwrap();
    for (a, b) in out.utterances().iter().zip(gt.train.utterances()) {
        assert_eq!(a.id, b.id);
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
    let bad = DependenceConfig { rho_within: 1.0, ..cfg };
    assert!(inject_dependence(&gt.train, &al, &gt.model, &bad, &RandomSource::new(5, "none")).is_err());
}

#[test]
fn projection_onto_leading_coordinates() {
    let gt = truth(6, 4, 0);
    let d = gt.train.dim();
    assert_eq!(project_corpus(&gt.train, d).unwrap(), gt.train);
    assert!(project_corpus(&gt.train, 0).is_err());
    assert!(project_corpus(&gt.train, d + 1).is_err());

    let k = 4;
    let pc = project_corpus(&gt.train, k).unwrap();
    let pm = project_model(&gt.model, k).unwrap();
    let u = &gt.train.utterances()[0];
    let states = u.states.as_ref().unwrap();
    for t in 0..u.len() {
        let g = gt.model.output(states[t]).as_diagonal().unwrap();
        let x = u.frame(t);
        let direct: f64 = (0..k)
            .map(|i| {
                let v = g.variance()[i];
                -0.5 * ((2.0 * std::f64::consts::PI * v).ln() + (x[i] - g.mean()[i]).powi(2) / v)
            })
            .sum();
        let got = pm.output(states[t]).log_density(pc.utterances()[0].frame(t)).unwrap();
        assert!((got - direct).abs() < 1e-10, "{got} vs {direct}");
    }
}

#[test]
fn deltas_of_a_ramp() {
    let frames: Vec<f64> = (0..6).flat_map(|t| [t as f64, 2.0 * t as f64]).collect();
    let u = Utterance::new("r", "s", vec![], 2, frames).unwrap();
    let out = append_deltas(&u).unwrap();
    assert_eq!(out.dim(), 6);
    for t in 1..5 {
        assert_eq!(&out.frame(t)[2..], &[1.0, 2.0, 0.0, 0.0]);
    }
    assert_eq!(&out.frame(0)[2..4], &[0.5, 1.0]);
    assert_eq!(&out.frame(5)[4..], &[-1.0, -2.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn smoothing_preserves_constants_and_length(
        c in -5.0f64..5.0,
        n in 1usize..20,
        w in prop::collection::vec(0.01f64..3.0, 1..4),
    ) {
        // mirror to an odd-length kernel
        let mut k = w.clone();
        k.extend(w.iter().rev().skip(1));
        let u = Utterance::new("c", "s", vec![], 3, vec![c; 3 * n]).unwrap();
        let out = smooth_frames(&u, &k).unwrap();
        prop_assert_eq!(out.len(), n);
        prop_assert!(out.data().iter().all(|x| (x - c).abs() < 1e-12));
        prop_assert_eq!(smooth_frames(&u, &[1.0]).unwrap(), u);
    }
}
