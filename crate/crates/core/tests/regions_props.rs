use hmmprobe_core::corpus::Utterance;
use hmmprobe_core::regions::{altered_positions, apply_region_code, partition_states, summarize, RegionCode};
use proptest::prelude::*;

fn states_strategy() -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(0u32..4, 1..60)
}

/// Real frames `t` and resampled frames `1000 + t`, so every frame's origin is visible.
fn pair(states: &[u32]) -> (Utterance, Utterance) {
    let n = states.len();
    let real = Utterance::new("u", "s", vec![], 1, (0..n).map(|t| t as f64).collect())
        .unwrap()
        .with_states(states.to_vec())
        .unwrap();
    let res = Utterance::new("u", "s", vec![], 1, (0..n).map(|t| 1000.0 + t as f64).collect())
        .unwrap()
        .with_states(states.to_vec())
        .unwrap();
    (real, res)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn regions_tile_the_utterance(states in states_strategy()) {
        let rs = partition_states(&states);
        prop_assert_eq!(rs[0].start, 0);
        prop_assert_eq!(rs.last().unwrap().end as usize, states.len());
        for w in rs.windows(2) {
            prop_assert_eq!(w[0].end, w[1].start);
            prop_assert_ne!(w[0].state, w[1].state);
        }
        for r in &rs {
            prop_assert!(!r.is_empty());
            prop_assert!(states[r.start as usize..r.end as usize].iter().all(|&s| s == r.state));
        }
        let sum = summarize([rs.as_slice()]);
        prop_assert_eq!(sum.frames, states.len());
        prop_assert_eq!(sum.regions, rs.len());
    }

    #[test]
    fn codes_keep_length_and_states(states in states_strategy()) {
        let (real, res) = pair(&states);
        let rs = partition_states(&states);
        for code in RegionCode::ALL {
            let out = apply_region_code(&real, &res, &rs, code).unwrap();
            prop_assert_eq!(out.len(), real.len());
            prop_assert_eq!(out.states.as_ref(), real.states.as_ref());
            let changed = out.data().iter().zip(real.data()).filter(|(a, b)| a != b).count();
            prop_assert_eq!(changed, altered_positions(&rs, code), "{}", code);
        }
        let same = apply_region_code(&real, &res, &rs, RegionCode::R1R2R3).unwrap();
        prop_assert_eq!(same.data(), real.data());
        let all = apply_region_code(&real, &res, &rs, RegionCode::S1S2S3).unwrap();
        prop_assert_eq!(all.data(), res.data());
        prop_assert_eq!(altered_positions(&rs, RegionCode::R1S2S3), states.len() - rs.len());
        prop_assert_eq!(altered_positions(&rs, RegionCode::R1R2R3), 0);
        prop_assert_eq!(altered_positions(&rs, RegionCode::S1S2S3), states.len());
    }

    #[test]
    fn lead_frame_codes_repeat_one_frame_per_region(states in states_strategy()) {
        let (real, res) = pair(&states);
        let rs = partition_states(&states);
        let r1 = apply_region_code(&real, &res, &rs, RegionCode::R1R1R1).unwrap();
        let s1 = apply_region_code(&real, &res, &rs, RegionCode::S1S1S1).unwrap();
        for r in &rs {
            let (a, b) = (r.start as usize, r.end as usize);
            prop_assert!(r1.data()[a..b].iter().all(|&x| x == a as f64));
            prop_assert!(s1.data()[a..b].iter().all(|&x| x == 1000.0 + a as f64));
        }
    }
}

#[test]
fn mismatched_shapes_and_partial_cover_are_rejected() {
    let (real, res) = pair(&[0, 0, 1]);
    let rs = partition_states(&[0, 0, 1]);
    assert!(apply_region_code(&real, &res, &rs[..1], RegionCode::R1R1R1).is_err());
    let (short, _) = pair(&[0, 0]);
    assert!(apply_region_code(&real, &short, &rs, RegionCode::R1R1R1).is_err());
    let (_, other) = pair(&[0, 1, 1]);
    assert!(apply_region_code(&real, &other, &rs, RegionCode::R1R1R1).is_err());
}
