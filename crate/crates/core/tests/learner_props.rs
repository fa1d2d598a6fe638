use hfair_core::oftrl::{entropic_closed_form, quad_closed_form};
use hfair_core::{EntropicOftrl, Matrix, QuadOftrl, Sense};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-10.0f64..10.0, rows * cols)
        .prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

proptest! {
    #[test]
    fn entropic_steps_stay_on_the_simplex(
        (rows, cols, grads, preds) in (1usize..5, 1usize..6).prop_flat_map(|(r, c)| {
            (Just(r), Just(c), prop::collection::vec(matrix(r, c), 1..20), prop::collection::vec(matrix(r, c), 1..20))
        })
    ) {
        let mut l = EntropicOftrl::new(rows, cols).unwrap();
        for (g, p) in grads.iter().zip(preds.iter().cycle()) {
            let x = l.step(g, p).unwrap();
            for i in 0..rows {
                let s: f64 = x.matrix().row(i).iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
                prop_assert!(x.matrix().row(i).iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }
    }

    #[test]
    fn quad_steps_stay_in_the_box(
        bounds in prop::collection::vec((-5.0f64..5.0, 0.0f64..5.0), 1..6),
        seq in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 6), 1..30),
        maximize in any::<bool>(),
    ) {
        let lower: Vec<f64> = bounds.iter().map(|b| b.0).collect();
        let upper: Vec<f64> = bounds.iter().map(|b| b.0 + b.1).collect();
        let sense = if maximize { Sense::Maximize } else { Sense::Minimize };
        let mut l = QuadOftrl::new(lower, upper, sense).unwrap();
        let d = l.dim();
        for w in seq.windows(2) {
            let p = l.step(&w[0][..d], &w[1][..d]).unwrap();
            prop_assert!(l.contains(&p));
        }
    }

    #[test]
    fn perfect_predictions_never_accumulate_error(seq in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 2..30)) {
        let mut l = QuadOftrl::new(vec![-1.0; 3], vec![1.0; 3], Sense::Minimize).unwrap();
        l.set_prediction(&seq[0]).unwrap();
        for w in seq.windows(2) {
            l.step(&w[0], &w[1]).unwrap();
        }
        l.observe(seq.last().unwrap()).unwrap();
        prop_assert_eq!(l.sq_err_sum(), 0.0);
    }

    #[test]
    fn entropic_is_invariant_to_row_offsets(omega in matrix(3, 4), shift in -50.0f64..50.0, eta in 0.1f64..10.0) {
        let mut shifted = omega.clone();
        for v in shifted.row_mut(1) {
            *v += shift;
        }
        let (a, b) = (entropic_closed_form(&omega, eta), entropic_closed_form(&shifted, eta));
        prop_assert!(a.matrix().sub(b.matrix()).unwrap().max_abs() < 1e-9);
    }

    #[test]
    fn quad_closed_form_is_projected_ratio(w in -10.0f64..10.0, d in 0.01f64..10.0) {
        let x = quad_closed_form(&[-1.0], &[2.0], &[w], d, Sense::Minimize)[0];
        prop_assert_eq!(x, (-w / d).clamp(-1.0, 2.0));
        let y = quad_closed_form(&[-1.0], &[2.0], &[w], d, Sense::Maximize)[0];
        prop_assert_eq!(y, (w / d).clamp(-1.0, 2.0));
    }
}

#[test]
fn degenerate_entropic_is_argmax_or_uniform() {
    let omega = Matrix::from_rows(&[vec![1.0, 3.0, 3.0], vec![0.0, 0.0, 0.0]]).unwrap();
    let x = entropic_closed_form(&omega, 0.0);
    // Lowest index wins ties, including the all-zero row of a nonzero matrix.
    assert_eq!(x.matrix().row(0), &[0.0, 1.0, 0.0]);
    assert_eq!(x.matrix().row(1), &[1.0, 0.0, 0.0]);
    let u = entropic_closed_form(&Matrix::zeros(2, 3), 0.0);
    assert!(u
        .matrix()
        .as_slice()
        .iter()
        .all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
}

#[test]
fn dimension_mismatch_is_an_error() {
    let mut l = QuadOftrl::new(vec![0.0; 2], vec![1.0; 2], Sense::Minimize).unwrap();
    assert!(l.observe(&[1.0]).is_err());
    let mut e = EntropicOftrl::new(2, 2).unwrap();
    assert!(e.observe(&Matrix::zeros(3, 2)).is_err());
}
