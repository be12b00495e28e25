mod oracle;

use latticeprop::cp::{cp_run, cp_step, dense_transition_matrix, init_one_hot, init_one_hot_with};
use latticeprop::lattice::{normalize_field, Lattice};
use proptest::prelude::*;

fn field_strategy() -> impl Strategy<Value = (usize, usize, Vec<[f64; 5]>)> {
    (1usize..=8, 1usize..=8).prop_flat_map(|(r, c)| {
        (Just(r), Just(c), prop::collection::vec(prop::array::uniform5(-4.0f64..4.0), r * c))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unpruned_cp_matches_matrix_powers((rows, cols, logits) in field_strategy(), steps in 1usize..12) {
        let lat = Lattice::grid(rows, cols, 4).unwrap();
        let field = normalize_field(&lat, logits).unwrap();
        let dense = oracle::dense_cp(rows, cols, field.weights(), steps);
        let mut state = init_one_hot_with(&lat, 0.0);
        for t in 1..=steps {
            state = cp_step(&lat, &field, &state).unwrap();
            for i in 0..lat.node_count() {
                for j in 0..lat.node_count() {
                    prop_assert!((state.get(i, j) - dense[t][(i, j)]).abs() < 1e-12);
                }
            }
            prop_assert!((state.total_mass() - lat.node_count() as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn pruning_only_loses_mass((rows, cols, logits) in field_strategy(), steps in 1usize..10) {
        let lat = Lattice::grid(rows, cols, 4).unwrap();
        let field = normalize_field(&lat, logits).unwrap();
        let run = cp_run(&lat, &field, &init_one_hot_with(&lat, 1e-3), steps, 0.0).unwrap();
        let n = lat.node_count() as f64;
        prop_assert!(run.state.total_mass() <= n + 1e-9);
        for i in 0..lat.node_count() {
            prop_assert!(run.state.entries(i).iter().all(|&(_, v)| v > 1e-3));
            prop_assert!(run.state.entries(i).windows(2).all(|w| w[0].0 < w[1].0));
        }
    }

    #[test]
    fn transition_matrix_is_the_mixing_matrix((rows, cols, logits) in field_strategy()) {
        let lat = Lattice::grid(rows, cols, 4).unwrap();
        let field = normalize_field(&lat, logits).unwrap();
        let a = dense_transition_matrix(&lat, &field);
        let b = oracle::mixing_matrix(rows, cols, field.weights());
        prop_assert!((a - b).abs().max() < 1e-15);
    }
}

#[test]
fn run_stops_on_tolerance() {
    let lat = Lattice::grid(3, 3, 4).unwrap();
    let field = latticeprop::lattice::CorrelationField::identity(&lat);
    let run = cp_run(&lat, &field, &init_one_hot(&lat), 50, 1e-9).unwrap();
    assert_eq!(run.steps_used, 1);
    assert_eq!(run.update_count, 9);
}
