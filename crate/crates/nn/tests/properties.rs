use mdfeat_core::rng::rng_from_seed;
use mdfeat_nn::attention::{column_sum_error, SelfAttention};
use mdfeat_nn::checkpoint;
use mdfeat_nn::layers::softmax_xent;
use mdfeat_nn::model::{decode, Head};
use mdfeat_nn::{Fcl, Model, Parameters};
use ndarray::Array2;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize, v: &[f64]) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |(i, j)| v[(i * cols + j) % v.len()])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn attention_columns_are_distributions(seed in 0u64..1000, len in 1usize..20, v in prop::collection::vec(-4.0f64..4.0, 1..64)) {
        let att = SelfAttention::<f64>::new(&mut rng_from_seed(seed));
        let x = matrix(32, len, &v);
        let (_, cache) = att.forward_cached(x.view()).unwrap();
        prop_assert!(cache.map().iter().all(|&a| (0.0..=1.0).contains(&a)));
        prop_assert!(column_sum_error(cache.map()) < 1e-12);
    }

    #[test]
    fn cross_entropy_gradient_rows_sum_to_zero(v in prop::collection::vec(-30.0f64..30.0, 1..40), classes in 2usize..7, rows in 1usize..6) {
        let logits = matrix(rows, classes, &v);
        let labels: Vec<usize> = (0..rows).map(|i| (i * 5 + 1) % classes).collect();
        let (loss, grad) = softmax_xent(logits.view(), &labels).unwrap();
        prop_assert!(loss >= 0.0 && loss.is_finite());
        for r in grad.rows() {
            prop_assert!(r.sum().abs() < 1e-12);
        }
    }

    #[test]
    fn decoded_zone_has_the_largest_probability(v in prop::collection::vec(-5.0f64..5.0, 1..30), classes in 2usize..9) {
        let out = matrix(3, classes, &v);
        for p in decode(Head::Classification { zones: classes }, out.view()) {
            let mdfeat_nn::Prediction::Zone { zone, probs } = p else { unreachable!() };
            prop_assert!(probs.iter().all(|&q| q <= probs[zone]));
            prop_assert!(probs[..zone].iter().all(|&q| q < probs[zone]));
        }
    }
}

#[test]
fn checkpoint_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fcl.mdfm");
    let mut net = Fcl::<f32>::new(7, Head::Classification { zones: 3 }, 4);
    checkpoint::save(std::fs::File::create(&path).unwrap(), "fcl", &7usize, 4, &mut net).unwrap();
    let mut r = std::io::BufReader::new(std::fs::File::open(&path).unwrap());
    let header: checkpoint::Header<usize> = checkpoint::read_header(&mut r).unwrap();
    let mut fresh = Fcl::<f32>::new(header.config, Head::Classification { zones: 3 }, 99);
    checkpoint::load_params(&mut r, &header, &mut fresh).unwrap();
    assert_eq!(fresh, net);
    let x = ndarray::Array1::from(vec![0.5f32; 7]);
    assert_eq!(fresh.outputs(&[&x]).unwrap(), net.outputs(&[&x]).unwrap());
    assert_eq!(fresh.num_params(), 7 * 50 + 50 + 2 * (50 * 50 + 50) + 50 * 3 + 3);
}
