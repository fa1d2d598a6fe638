use hfair_core::models::{
    assignment_utility_raw, empty_buffer_kernel, energy_saving_raw, fit_linear_profiles,
    mintb_eval, AssignmentEnv, BetaTable, EnvScaling, Measurement, MinTbEnv,
};
use hfair_core::Matrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn env(load: Matrix, capacity: Vec<f64>) -> AssignmentEnv {
    let (i, j) = load.shape();
    AssignmentEnv::with_coefficients(
        vec![1.0; i],
        vec![1.0; i],
        vec![20.0; i],
        (0..j).map(|k| 1.0 + k as f64).collect(),
        capacity,
        load.clone(),
        load,
        EnvScaling::default(),
    )
    .unwrap()
}

fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.001f64..1.0, n).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(x, y)| (1.0 - t) * x + t * y)
        .collect()
}

proptest! {
    #[test]
    fn single_vbs_utility_is_concave(
        a in simplex(3),
        b in simplex(3),
        load in prop::collection::vec(0.1f64..3.0, 3),
        cap in prop::collection::vec(0.05f64..2.0, 3),
    ) {
        let e = env(Matrix::from_vec(1, 3, load).unwrap(), cap);
        let u = |x: &[f64]| assignment_utility_raw(&Matrix::from_vec(1, 3, x.to_vec()).unwrap(), &e)[0];
        let mid = u(&lerp(&a, &b, 0.5));
        prop_assert!(mid >= 0.5 * (u(&a) + u(&b)) - 1e-12);
    }

    #[test]
    fn saving_is_affine(
        a in simplex(2), b in simplex(2), c in simplex(2), d in simplex(2), t in 0.0f64..1.0,
        load in prop::collection::vec(0.1f64..3.0, 4),
    ) {
        let e = env(Matrix::from_vec(2, 2, load).unwrap(), vec![1.0, 1.0]);
        let x = Matrix::from_vec(2, 2, [a, c].concat()).unwrap();
        let y = Matrix::from_vec(2, 2, [b, d].concat()).unwrap();
        let z = Matrix::from_vec(2, 2, lerp(x.as_slice(), y.as_slice(), t)).unwrap();
        let (hx, hy, hz) = (energy_saving_raw(&x, &e), energy_saving_raw(&y, &e), energy_saving_raw(&z, &e));
        for j in 0..2 {
            let lin = (1.0 - t) * hx[j] + t * hy[j];
            prop_assert!((hz[j] - lin).abs() <= 1e-12 * (1.0 + lin.abs()));
        }
    }

    #[test]
    fn kernel_is_decreasing_convex_and_bounded(y in 0.0f64..1e6, dy in 1.0f64..1e4, rho in 1e3f64..1e6) {
        let (u0, d0) = empty_buffer_kernel(y, rho);
        let (u1, _) = empty_buffer_kernel(y + dy, rho);
        let (u2, _) = empty_buffer_kernel(y + 2.0 * dy, rho);
        prop_assert!(u0 > 0.0 && u0 <= 1.0);
        prop_assert!(d0 < 0.0);
        prop_assert!(u1 < u0);
        prop_assert!(u1 <= 0.5 * (u0 + u2) + 1e-15);
    }

    #[test]
    fn energy_is_weighted_utility(y in prop::collection::vec(0.0f64..1e5, 3), phi in 0.0f64..100.0) {
        let beta = BetaTable::new(vec![(0.0, 2.0), (30.0, 1.0)]).unwrap();
        let e = MinTbEnv::new(vec![10.0, 20.0, 30.0], vec![5e4, 7e4, 9e4], vec![5.0, 15.0, 25.0], beta, phi).unwrap();
        let ev = mintb_eval(&y, &e).unwrap();
        let w = e.cost_weights().unwrap();
        let expect: f64 = w.iter().zip(&ev.u).map(|(w, u)| w * u).sum();
        prop_assert!((ev.energy - expect).abs() <= 1e-12 * (1.0 + expect));
        prop_assert!((ev.cost - phi * ev.energy).abs() <= 1e-9 * (1.0 + ev.cost));
    }
}

#[test]
fn two_vbs_utility_is_not_concave_under_overload() {
    // Server 0 is overloaded; vBS 1 loads it three times harder than vBS 0.
    let e = env(
        Matrix::from_rows(&[vec![1.0, 1.0], vec![3.0, 1.0]]).unwrap(),
        vec![1.0, 100.0],
    );
    let at = |x00: f64, x10: f64| {
        assignment_utility_raw(
            &Matrix::from_rows(&[vec![x00, 1.0 - x00], vec![x10, 1.0 - x10]]).unwrap(),
            &e,
        )[0]
    };
    // Trading vBS 1's share for vBS 0's: u_0 is convex along this line.
    let (lo, mid, hi) = (at(0.4, 0.6), at(0.5, 0.5), at(0.6, 0.4));
    assert!((lo - 0.52).abs() < 1e-12 && (mid - 0.5).abs() < 1e-12 && (hi - 0.52).abs() < 1e-12);
    assert!(mid < 0.5 * (lo + hi));
}

#[test]
fn kernel_limits() {
    let (u, d) = empty_buffer_kernel(0.0, 2.0);
    assert_eq!(u, 1.0);
    assert!((d + 0.25).abs() < 1e-15);
    // Both sides of the series switch agree.
    let (a, da) = empty_buffer_kernel(0.999e-3, 1.0);
    let (b, db) = empty_buffer_kernel(1.001e-3, 1.0);
    assert!((a - b).abs() < 1e-6 && (da - db).abs() < 1e-6);
}

#[test]
fn noisy_fit_recovers_coefficients() {
    let (zeta, o, delta, gamma) = (3e-9, 2e-4, 5e-9, 1e-3);
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        for k in 0..200 {
            let bits = 1e4 + 1e3 * k as f64;
            let mut noisy = |v: f64| v * (1.0 + 0.01 * rng.sample::<f64, _>(StandardNormal));
            rows.push(Measurement {
                pu_id: "gpu0".into(),
                snr_db: 20.0,
                tb_size_bits: bits,
                proc_time_s: noisy(zeta * bits + o),
                energy_j: noisy(delta * bits + gamma),
            });
        }
        let p = &fit_linear_profiles(&rows).unwrap()[0].points[0];
        for (got, want) in [(p.zeta, zeta), (p.o, o), (p.delta, delta), (p.gamma, gamma)] {
            assert!(
                (got / want - 1.0).abs() < 0.05,
                "seed {seed}: {got} vs {want}"
            );
        }
    }
}
