//! Model structure, forward-backward, Viterbi alignment and Baum-Welch.

mod align;
mod graph;
mod model;
mod train;

pub use align::{
    backward_loglik, forward_backward, segment_spans, viterbi_align, Alignment, AlignmentKind,
    Occupancy, OCCUPANCY_EPS,
};
pub(crate) use align::viterbi_path;
pub(crate) use train::CHUNK;
pub use graph::{Arc, CompositeGraph, GraphBuilder, Link, NodeId, NodeKind, Segment};
pub use model::{HmmModel, HmmUnit};
pub use train::{
    accumulate, baum_welch_pass, max_parameter_change, reestimate, train, Accumulator,
    CovarianceKind, OutputStats, TrainOptions, TRANSITION_FLOOR,
};

/// Graph of a fixed unit sequence, entered at the first unit and left after
/// the last.
pub fn chain_graph(model: &HmmModel, units: &[usize]) -> crate::Result<CompositeGraph> {
    let mut b = GraphBuilder::new();
    let start = b.junction();
    let mut prev = start;
    for &u in units {
        let (entry, exit) = b.unit(model, u, None);
        b.arc(prev, entry, 0.0);
        prev = exit;
    }
    b.build(start, prev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Utterance;
    use crate::dists::{DiagonalGaussian, OutputDist};

    fn gauss(m: &[f64], v: &[f64]) -> OutputDist {
        OutputDist::Diagonal(DiagonalGaussian::new(m.to_vec(), v.to_vec()).unwrap())
    }

    fn utt(rows: &[f64]) -> Utterance {
        Utterance::new("u", "s", vec![], 1, rows.to_vec()).unwrap()
    }

    #[test]
    fn single_state_closed_form() {
        let q = 0.7;
        let model = HmmModel::new(
            1,
            vec![HmmUnit::linear("a", &[q], None).unwrap()],
            vec![vec![0]],
            vec![gauss(&[0.5], &[2.0])],
        )
        .unwrap();
        let g = chain_graph(&model, &[0]).unwrap();
        let xs = [0.1, -1.0, 2.5, 0.3];
        let u = utt(&xs);
        let (ll, al) = forward_backward(&model, &g, &u).unwrap();
        let expect: f64 = xs
            .iter()
            .map(|&x| model.output(0).log_density(&[x]).unwrap())
            .sum::<f64>()
            + 3.0 * q.ln()
            + (1.0 - q).ln();
        assert!((ll - expect).abs() < 1e-12);
        for t in 0..4 {
            let s: f64 = al.state_weights(t).iter().map(|w| w.1).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
        let (v, _) = viterbi_align(&model, &g, &u).unwrap();
        assert!((v - expect).abs() < 1e-12);
    }

    #[test]
    fn too_short_for_graph_fails() {
        let model = HmmModel::new(
            1,
            vec![HmmUnit::linear("a", &[0.5, 0.5, 0.5], None).unwrap()],
            vec![vec![0, 0, 0]],
            vec![gauss(&[0.0], &[1.0])],
        )
        .unwrap();
        let g = chain_graph(&model, &[0]).unwrap();
        let err = forward_backward(&model, &g, &utt(&[0.0, 1.0])).unwrap_err();
        assert!(matches!(err, crate::Error::AlignmentFailure { .. }));
        assert!(viterbi_align(&model, &g, &utt(&[0.0, 1.0])).is_err());
    }

    #[test]
    fn hard_weighted_moments_two_states() {
        // two frames, forced one per state: each state's moments are its frame
        let model = HmmModel::new(
            2,
            vec![HmmUnit::linear("a", &[0.0, 0.0], None).unwrap()],
            vec![vec![0, 1]],
            vec![gauss(&[0.0, 0.0], &[1.0, 1.0]), gauss(&[1.0, 1.0], &[1.0, 1.0])],
        )
        .unwrap();
        let g = chain_graph(&model, &[0]).unwrap();
        let u = Utterance::new("u", "s", vec![], 2, vec![0.25, -1.5, 3.0, 2.0]).unwrap();
        let opts = TrainOptions {
            update_transitions: false,
            ..TrainOptions::default()
        };
        let (m, _) = baum_welch_pass(&model, &[(&u, &g)], &opts).unwrap();
        assert_eq!(m.output(0).mean(), &[0.25, -1.5]);
        assert_eq!(m.output(1).mean(), &[3.0, 2.0]);
        // a single frame has zero variance, floored
        let v = m.output(0).as_diagonal().unwrap().variance().to_vec();
        assert_eq!(v, vec![crate::dists::VARIANCE_FLOOR; 2]);
    }
}
