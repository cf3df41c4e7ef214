use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::*;

fn normal_sample(n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, 1), |_| StandardNormal.sample(&mut rng))
}

#[test]
fn frequencies_are_deterministic() {
    let a = sample_frequencies(3, 32, 1.0, 7).unwrap();
    let b = sample_frequencies(3, 32, 1.0, 7).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 32);
    assert!(a.points.iter().all(|t| t.len() == 3));
    assert!(sample_frequencies(3, 0, 1.0, 7).is_err());
    assert!(sample_frequencies(3, 4, 0.0, 7).is_err());
}

#[test]
fn frequency_variance_matches_scale() {
    let eta = 1.7;
    let batch = sample_frequencies(2, 100_000, eta, 3).unwrap();
    for j in 0..2 {
        let col: Vec<f64> = batch.points.iter().map(|t| t[j]).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / col.len() as f64;
        assert!((var / (eta * eta) - 1.0).abs() < 0.02, "variance {var}");
    }
}

#[test]
fn small_scale_drives_distance_to_zero() {
    let p = normal_sample(500, 1);
    let q = p.mapv(|x| 3.0 * x + 2.0);
    let batch = sample_frequencies(1, 64, 1e-9, 2).unwrap();
    let a = ecf_batch(p.view(), &batch.points).unwrap();
    let b = ecf_batch(q.view(), &batch.points).unwrap();
    assert!(cfd_squared(&a, &b).unwrap() < 1e-15);
}

#[test]
fn ecf_examples() {
    let zero = Array2::<f64>::zeros((1, 2));
    assert_eq!(ecf(zero.view(), &[0.3, -4.0]).unwrap(), Complex::new(1.0, 0.0));
    let pair = array![[1.0], [-1.0]];
    let z = ecf(pair.view(), &[std::f64::consts::FRAC_PI_2]).unwrap();
    assert!(z.norm() < 1e-16);
    let empty = Array2::<f64>::zeros((0, 2));
    assert!(ecf(empty.view(), &[1.0, 1.0]).is_err());
}

#[test]
fn ecf_of_normal_sample_matches_analytic_cf() {
    let x = normal_sample(100_000, 5);
    let z = ecf(x.view(), &[1.0]).unwrap();
    assert!((z - Complex::new((-0.5f64).exp(), 0.0)).norm() < 0.02);
}

#[test]
fn distance_examples() {
    let a = vec![Complex::new(0.3, -0.2), Complex::new(-0.1, 0.9)];
    assert_eq!(cfd_squared(&a, &a).unwrap(), 0.0);
    let ones = vec![Complex::new(1.0, 0.0); 5];
    let zeros = vec![Complex::new(0.0, 0.0); 5];
    assert_eq!(cfd_squared(&ones, &zeros).unwrap(), 1.0);
    assert!(cfd_squared(&ones, &zeros[..4]).is_err());
}

#[test]
fn two_halves_of_one_source_are_close() {
    let x = normal_sample(100_000, 9);
    let batch = sample_frequencies(1, 64, 1.0, 4).unwrap();
    let a = ecf_batch(x.slice(ndarray::s![..50_000, ..]), &batch.points).unwrap();
    let b = ecf_batch(x.slice(ndarray::s![50_000.., ..]), &batch.points).unwrap();
    assert!(cfd_squared(&a, &b).unwrap() < 1e-3);
}

#[test]
fn taped_distance_matches_plain() {
    let model = vec![Complex::new(0.4, 0.1), Complex::new(-0.3, 0.5), Complex::new(0.0, -0.7)];
    let target = vec![Complex::new(0.2, 0.2), Complex::new(-0.1, 0.4), Complex::new(0.3, -0.6)];
    let mut tape = Tape::new();
    let re = tape.param(model.iter().map(|z| z.re).collect());
    let im = tape.param(model.iter().map(|z| z.im).collect());
    let loss = record_cfd(&mut tape, ComplexVar { re, im }, &target).unwrap();
    let plain = cfd_squared(&model, &target).unwrap();
    assert!((tape.scalar_value(loss) - plain).abs() < 1e-16);
    let g = tape.backward(loss).unwrap();
    // d/d re_j = 2 (re_j - target_j) / k
    for (j, gj) in g.wrt(re).iter().enumerate() {
        assert!((gj - 2.0 * (model[j].re - target[j].re) / 3.0).abs() < 1e-15);
    }
}

#[test]
fn dump_has_one_row_per_frequency() {
    let freqs = vec![vec![0.5, 1.0], vec![-1.0, 2.0]];
    let z = vec![Complex::new(1.0, 0.0); 2];
    let text = String::from_utf8(dump_csv(&freqs, &z, &z).unwrap()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t0,t1,model_re,model_im,ecf_re,ecf_im");
    assert_eq!(lines.len(), 3);
}

fn complex_vec(k: usize) -> impl Strategy<Value = Vec<Complex>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), k).prop_map(|v| v.into_iter().map(|(a, b)| Complex::new(a, b)).collect())
}

proptest! {
    #[test]
    fn distance_is_symmetric_and_nonnegative(a in complex_vec(16), b in complex_vec(16)) {
        let ab = cfd_squared(&a, &b).unwrap();
        prop_assert_eq!(ab, cfd_squared(&b, &a).unwrap());
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab == 0.0, a == b);
    }

    #[test]
    fn distance_decomposes_over_sub_batches(a in complex_vec(20), b in complex_vec(20), cut in 1usize..20) {
        let whole = cfd_squared(&a, &b).unwrap();
        let left = cfd_squared(&a[..cut], &b[..cut]).unwrap();
        let right = cfd_squared(&a[cut..], &b[cut..]).unwrap();
        let weighted = (cut as f64 * left + (20 - cut) as f64 * right) / 20.0;
        prop_assert!((whole - weighted).abs() < 1e-14);
    }

    #[test]
    fn ecf_modulus_is_bounded(
        rows in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 3), 1..40),
        t in prop::collection::vec(-10.0f64..10.0, 3),
    ) {
        let data = Array2::from_shape_fn((rows.len(), 3), |(i, j)| rows[i][j]);
        prop_assert!(ecf(data.view(), &t).unwrap().norm() <= 1.0 + 1e-12);
    }
}
