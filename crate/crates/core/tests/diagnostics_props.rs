//! Frame scores, the score-variance test and lag-1 correlations.

use hmmprobe_core::corpus::{Corpus, Utterance};
use hmmprobe_core::diagnostics::{
    correlation_report, expected_score, frame_score, histogram, lag1_correlation, pooled_lag1, score_stats,
    variance_test, ReferenceMean,
};
use hmmprobe_core::dists::{DiagonalGaussian, OutputDist, RandomSource};
use hmmprobe_core::hmm::{Alignment, HmmModel, HmmUnit};
use hmmprobe_core::pipeline::recorded_alignments;
use hmmprobe_core::synth::{generate_corpus, simulate_frames, GroundTruthSpec};
use proptest::prelude::*;

/// One single-state unit per Gaussian.
fn model_of(gaussians: Vec<DiagonalGaussian>) -> HmmModel {
    let d = gaussians[0].dim();
    let n = gaussians.len();
    let units = (0..n).map(|i| HmmUnit::linear(format!("u{i}"), &[0.5], None).unwrap()).collect();
    let tying = (0..n as u32).map(|j| vec![j]).collect();
    HmmModel::new(d, units, tying, gaussians.into_iter().map(OutputDist::Diagonal).collect()).unwrap()
}

fn random_gaussian(d: usize, rng: &mut RandomSource) -> DiagonalGaussian {
    DiagonalGaussian::new(
        (0..d).map(|_| 4.0 * rng.uniform() - 2.0).collect(),
        (0..d).map(|_| 0.2 + 2.0 * rng.uniform()).collect(),
    )
    .unwrap()
}

/// `frames` draws from each state of `model`, as one utterance per state.
fn iid_corpus(model: &HmmModel, frames: usize, rng: &mut RandomSource) -> (Corpus, Vec<Alignment>) {
    let mut utts = Vec::new();
    let mut als = Vec::new();
    for j in 0..model.n_outputs() as u32 {
        let states = vec![j; frames];
        let x = simulate_frames(model, &states, rng);
        let id = format!("s{j}");
        utts.push(Utterance::new(&id, "spk", vec![], model.dim(), x).unwrap());
        als.push(Alignment::from_states(id, states));
    }
    (Corpus::new(model.dim(), utts).unwrap(), als)
}

#[test]
fn score_at_the_mean_is_half_the_log_determinant() {
    let mut rng = RandomSource::new(1, "score-at-mean");
    let g = random_gaussian(5, &mut rng);
    let half_log: f64 = 0.5 * g.variance().iter().map(|v| v.ln()).sum::<f64>();
    let m = model_of(vec![g.clone()]);
    assert!((frame_score(&m, 0, g.mean()).unwrap() - half_log).abs() < 1e-12);
    assert!((expected_score(&m, 0).unwrap() - (2.5 + half_log)).abs() < 1e-12);

    let unit = model_of(vec![DiagonalGaussian::new(vec![0.0], vec![1.0]).unwrap()]);
    assert!((frame_score(&unit, 0, &[2.0]).unwrap() - 2.0).abs() < 1e-15);
    assert!(frame_score(&unit, 0, &[1.0, 2.0]).is_err());
}

#[test]
fn scores_of_model_draws_have_half_chi_square_moments() {
    let d = 13;
    let mut rng = RandomSource::new(2, "chi-moments");
    let g = random_gaussian(d, &mut rng);
    let m = model_of(vec![g]);
    let n = 100_000;
    let (c, al) = iid_corpus(&m, n, &mut rng);
    let st = score_stats(&m, &c, &al).unwrap();
    let s = st.states[&0];
    assert_eq!(s.occupancy, n as f64);
    let half_log = expected_score(&m, 0).unwrap() - 0.5 * d as f64;
    let k = 0.5 * d as f64;
    // ½χ²_d has mean and variance d/2, central fourth moment ¾·d·(d+4)
    let mean_se = (k / n as f64).sqrt();
    let var_se = ((0.75 * (d * (d + 4)) as f64 - k * k) / n as f64).sqrt();
    assert!((s.mean - half_log - k).abs() < 3.0 * mean_se, "mean {}", s.mean - half_log);
    assert!((s.variance - k).abs() < 3.0 * var_se, "variance {}", s.variance);
}

#[test]
fn variance_test_null_and_coverage_on_model_draws() {
    let d = 13;
    let mut rng = RandomSource::new(3, "coverage");
    let m = model_of((0..40).map(|_| random_gaussian(d, &mut rng)).collect());
    let (c, al) = iid_corpus(&m, 2000, &mut rng);
    let st = score_stats(&m, &c, &al).unwrap();
    let vt = variance_test(&st, d, 2000, 0.99, 0.0, &RandomSource::new(3, "null")).unwrap();
    assert_eq!(vt.null_variance, 6.5);
    assert_eq!(vt.verdicts.len(), 40);
    assert!(vt.fraction_inside >= 0.95, "{}", vt.fraction_inside);
    assert!((vt.median - 6.5).abs() < 0.5, "{}", vt.median);
    assert!(vt.verdicts.iter().all(|v| v.lower < 6.5 && 6.5 < v.upper));

    assert!(variance_test(&st, d, 2000, 0.99, 1e6, &RandomSource::new(3, "null")).is_err());
}

#[test]
fn iid_series_has_negligible_lag_one_correlation() {
    let mut rng = RandomSource::new(4, "iid");
    let xs: Vec<f64> = (0..100_000).map(|_| rng.uniform()).collect();
    let r = lag1_correlation(&xs, ReferenceMean::ListMean).unwrap();
    assert!(r.abs() < 0.02, "{r}");
}

#[test]
fn pooling_lists_with_different_levels_about_a_shared_mean_is_positive() {
    let mut rng = RandomSource::new(5, "levels");
    let lists: Vec<Vec<f64>> = (0..200)
        .map(|i| {
            let level = if i % 2 == 0 { 2.0 } else { -2.0 };
            (0..6).map(|_| level + rng.uniform() - 0.5).collect()
        })
        .collect();
    let pooled = pooled_lag1(&lists, ReferenceMean::ListMean).unwrap();
    assert!(pooled > 0.5, "{pooled}");
    let centred: Vec<Vec<f64>> = lists
        .iter()
        .map(|l| {
            let m = l.iter().sum::<f64>() / l.len() as f64;
            l.iter().map(|x| x - m).collect()
        })
        .collect();
    assert!(pooled_lag1(&centred, ReferenceMean::Global(0.0)).unwrap() < 0.0);
}

#[test]
fn simulated_speech_has_no_score_correlation() {
    let spec = GroundTruthSpec::default();
    let gt = generate_corpus(&spec, 300, 0, &RandomSource::new(6, "sim-corr")).unwrap();
    let al = recorded_alignments(&gt.train).unwrap();
    let rep = correlation_report(&gt.model, &gt.train, &al, &RandomSource::new(6, "shuffle")).unwrap();
    let within = rep.median_within().unwrap();
    assert!(within.abs() < 0.03, "within {within}");
    assert!(!rep.between.is_empty());
    for b in &rep.between {
        assert!(b.rho.abs() < 0.1 && b.shuffled.abs() < 0.1, "{b:?}");
    }
}

#[test]
fn histogram_counts_every_value() {
    let mut rng = RandomSource::new(7, "hist");
    let xs: Vec<f64> = (0..1000).map(|_| rng.uniform()).collect();
    for bins in [1, 7, 40] {
        let h = histogram(&xs, bins);
        assert_eq!(h.len(), bins);
        assert_eq!(h.iter().map(|b| b.1).sum::<usize>(), 1000);
        assert!(h.windows(2).all(|w| w[0].0 < w[1].0));
    }
    assert_eq!(histogram(&[3.0, 3.0], 4).iter().map(|b| b.1).sum::<usize>(), 2);
    assert!(histogram(&[], 4).is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lag_one_is_invariant_under_positive_affine_maps(
        xs in prop::collection::vec(-10.0f64..10.0, 3..50),
        a in 0.01f64..100.0,
        b in -50.0f64..50.0,
    ) {
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        prop_assume!(xs.iter().any(|x| (x - mean).abs() > 1e-6));
        let r = lag1_correlation(&xs, ReferenceMean::ListMean).unwrap();
        let ys: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
        let s = lag1_correlation(&ys, ReferenceMean::ListMean).unwrap();
        prop_assert!((r - s).abs() < 1e-9, "{} vs {}", r, s);
        prop_assert!((-1.0..=1.0).contains(&r));
    }
}
