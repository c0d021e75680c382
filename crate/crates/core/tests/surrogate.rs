use hybrid_mcmc::fem::{MeshLevel, ObservationLayout};
use hybrid_mcmc::model::{numerical_forward, CostClass, ForwardModel};
use hybrid_mcmc::prior::{FieldBuilder, ParameterVector, PriorSpec};
use hybrid_mcmc::surrogate::*;
use hybrid_mcmc::Error;
use ndarray::{Array1, Array2};
use proptest::prelude::*;

fn uniform() -> PriorSpec {
    PriorSpec::uniform(vec![[0.0, 1.0]])
}

fn elliptic(level: u32) -> hybrid_mcmc::NumericalForward {
    numerical_forward(
        MeshLevel::new(level).unwrap(),
        FieldBuilder::Uniform,
        ObservationLayout::default_experiment(),
    )
}

struct Constant;

impl ForwardModel for Constant {
    fn evaluate(&self, _: &ParameterVector) -> hybrid_mcmc::Result<Vec<f64>> {
        Ok(vec![0.75, -2.0])
    }
    fn cost_class(&self) -> CostClass {
        CostClass::Numerical
    }
    fn output_dim(&self) -> usize {
        2
    }
}

fn cfg(hidden: Vec<usize>, epochs: usize, lr: f64) -> TrainConfig {
    TrainConfig {
        hidden,
        epochs,
        adam: AdamParams {
            learning_rate: lr,
            ..AdamParams::default()
        },
        seed: 17,
    }
}

#[test]
fn split_counts_and_disjointness() {
    let f = SplitFractions::default();
    assert_eq!(f.counts(8000), (4000, 2000, 2000));
    let s = Split::shuffled(8000, &f, 3);
    assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (4000, 2000, 2000));
    let mut all: Vec<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..8000).collect::<Vec<_>>());
    let bad = SplitFractions {
        train: 0.5,
        validation: 0.5,
        test: 0.5,
    };
    assert!(bad.validate().is_err());
}

#[test]
fn datasets_are_seeded_and_finite() {
    let m = elliptic(3);
    let a = generate_dataset(&m, TargetSpace::Observations, &uniform(), 10, SplitFractions::default(), 5).unwrap();
    let b = generate_dataset(&m, TargetSpace::Observations, &uniform(), 10, SplitFractions::default(), 5).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 10);
    assert_eq!(a.n_targets(), 36);
    assert!(a.targets.iter().flatten().all(|t| t.is_finite()));
    assert!(generate_dataset(&m, TargetSpace::Observations, &uniform(), 9, SplitFractions::default(), 5).is_err());

    let field = FieldForward(elliptic(2));
    let f = generate_dataset(&field, TargetSpace::Field, &uniform(), 12, SplitFractions::default(), 1).unwrap();
    assert_eq!(f.n_targets(), 25);
}

#[test]
fn dataset_files_round_trip() {
    let d = generate_dataset(&elliptic(3), TargetSpace::Observations, &uniform(), 20, SplitFractions::default(), 9)
        .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (csv, meta) = (dir.path().join("d.csv"), dir.path().join("d.json"));
    d.write_files(&csv, &meta).unwrap();
    assert_eq!(Dataset::read_files(&csv, &meta).unwrap(), d);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("z_1,t_1,"));
    std::fs::write(&csv, &text[..text.len() / 2]).unwrap();
    assert!(Dataset::read_files(&csv, &meta).is_err());
}

#[test]
fn elliptic_surrogate_fits_held_out_data() {
    let d = generate_dataset(&elliptic(4), TargetSpace::Observations, &uniform(), 400, SplitFractions::default(), 2)
        .unwrap();
    let (model, report) = train_mlp(&d, &cfg(vec![32, 32], 3000, 3e-3)).unwrap();
    let test = report.test.clone().unwrap();
    assert!(test.r2 > 0.99, "R2 = {}", test.r2);
    assert_eq!(report.loss_history.len(), 3000);
    assert!(report.final_train_loss < report.loss_history[0]);

    let k = report.loss_history.len() / 10;
    let median = |xs: &[f64]| {
        let mut v = xs.to_vec();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    assert!(median(&report.loss_history[report.loss_history.len() - k..]) < median(&report.loss_history[..k]));

    // mean L2 gap recomputed directly over the test split
    let gap = d
        .split
        .test
        .iter()
        .map(|&i| {
            let p = model.predict(&d.inputs[i]).unwrap();
            p.iter().zip(&d.targets[i]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        })
        .sum::<f64>()
        / d.split.test.len() as f64;
    assert!((gap - test.mean_l2_gap).abs() <= 1e-12 * gap.max(1.0));

    let sur = SurrogateForward::new(model, SurrogateTarget::Observations).unwrap();
    assert_eq!(sur.cost_class(), CostClass::Surrogate);
    let z = uniform().parameter(vec![0.3]).unwrap();
    assert_eq!(sur.evaluate(&z).unwrap(), sur.evaluate(&z).unwrap());
}

#[test]
fn training_is_deterministic_and_single_epoch_guard() {
    let d = generate_dataset(&elliptic(3), TargetSpace::Observations, &uniform(), 40, SplitFractions::default(), 4)
        .unwrap();
    let a = train_mlp(&d, &cfg(vec![8], 50, 1e-3)).unwrap();
    let b = train_mlp(&d, &cfg(vec![8], 50, 1e-3)).unwrap();
    assert_eq!(a, b);
    let (_, one) = train_mlp(&d, &cfg(vec![8], 1, 1e-3)).unwrap();
    assert_eq!(one.loss_history.len(), 1);
    assert!(train_mlp(&d, &cfg(vec![8], 0, 1e-3)).is_err());
}

#[test]
fn constant_targets_are_learned() {
    let d = generate_dataset(&Constant, TargetSpace::Observations, &uniform(), 100, SplitFractions::default(), 1)
        .unwrap();
    let (_, report) = train_mlp(&d, &cfg(vec![16, 16], 500, 1e-2)).unwrap();
    let mse = report.test.unwrap().mse;
    assert!(mse < 1e-6, "{mse} {:?}", &report.loss_history[report.loss_history.len() - 5..]);
}

#[test]
fn nan_loss_aborts_with_epoch() {
    let mut d = generate_dataset(&Constant, TargetSpace::Observations, &uniform(), 10, SplitFractions::default(), 1)
        .unwrap();
    d.targets[d.split.train[0]][0] = f64::NAN;
    assert!(matches!(train_mlp(&d, &cfg(vec![4], 10, 1e-3)), Err(Error::NonFiniteLoss { epoch: 0 })));
}

#[test]
fn zero_weights_output_the_bias() {
    let mut m = MlpModel::new(&[2, 5, 3], 0).unwrap();
    for l in &mut m.layers {
        l.weights.fill(0.0);
    }
    m.layers[1].biases = Array1::from(vec![0.5, -1.0, 2.0]);
    assert_eq!(m.predict(&[0.3, 0.9]).unwrap(), vec![0.5, -1.0, 2.0]);
    assert!(matches!(m.predict(&[0.3]), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn model_file_round_trip_and_corruption() {
    let mut m = MlpModel::new(&[1, 7, 4, 36], 11).unwrap();
    m.input.offset = vec![0.5];
    m.input.scale = vec![2.0];
    m.output.offset = (0..36).map(|k| k as f64 * 0.01).collect();
    m.output.scale = vec![3.0; 36];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bin");
    m.save(&path).unwrap();
    assert_eq!(MlpModel::load(&path).unwrap(), m);

    let bytes = m.to_bytes();
    assert_eq!(&bytes[..4], b"HMLP");
    let mut wrong = bytes.clone();
    wrong[4] = 2;
    assert!(matches!(MlpModel::from_bytes(&wrong), Err(Error::Format(_))));
    assert!(MlpModel::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    assert!(MlpModel::from_bytes(&bytes[..10]).is_err());
    let mut magic = bytes;
    magic[0] = b'X';
    assert!(MlpModel::from_bytes(&magic).is_err());
}

#[test]
fn field_surrogate_checks_output_size() {
    let m = MlpModel::new(&[1, 4, 25], 0).unwrap();
    let layout = ObservationLayout::default_experiment();
    let level = MeshLevel::new(2).unwrap();
    let s = SurrogateForward::new(m, SurrogateTarget::Field { level, layout: layout.clone() }).unwrap();
    assert_eq!(s.output_dim(), 36);
    assert_eq!(s.evaluate(&uniform().parameter(vec![0.5]).unwrap()).unwrap().len(), 36);
    let m = MlpModel::new(&[1, 4, 24], 0).unwrap();
    assert!(SurrogateForward::new(m, SurrogateTarget::Field { level, layout }).is_err());
}

#[test]
fn measured_errors_feed_epsilon() {
    let d = generate_dataset(&elliptic(3), TargetSpace::Observations, &uniform(), 60, SplitFractions::default(), 8)
        .unwrap();
    let (model, _) = train_mlp(&d, &cfg(vec![16], 300, 3e-3)).unwrap();
    let sur = SurrogateForward::new(model, SurrogateTarget::Observations).unwrap();
    let m = ErrorMeasurement {
        reference_level: 5,
        draws: 8,
        seed: 1,
    };
    let e = measure_errors(&sur, &elliptic(3), &uniform(), &m).unwrap();
    assert!(e.err_ml > 0.0 && e.err_num > 0.0);
    assert_eq!(e.epsilon, (e.err_ml / e.err_num).log2());
    let bad = ErrorMeasurement {
        reference_level: 3,
        ..m
    };
    assert!(measure_errors(&sur, &elliptic(3), &uniform(), &bad).is_err());
}

fn naive_predict(m: &MlpModel, z: &[f64]) -> Vec<f64> {
    let mut a: Vec<f64> = z
        .iter()
        .enumerate()
        .map(|(j, x)| (x - m.input.offset[j]) * m.input.scale[j])
        .collect();
    for (k, l) in m.layers.iter().enumerate() {
        let (rows, cols) = l.weights.dim();
        let mut next = vec![0.0; rows];
        for (i, out) in next.iter_mut().enumerate() {
            let mut s = l.biases[i];
            for j in 0..cols {
                s += l.weights[[i, j]] * a[j];
            }
            *out = if k + 1 < m.layers.len() { s.max(0.0) } else { s };
        }
        a = next;
    }
    a.iter()
        .enumerate()
        .map(|(j, y)| y / m.output.scale[j] + m.output.offset[j])
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn predict_matches_naive_reference(
        sizes in prop::collection::vec(1usize..9, 2..5),
        seed in any::<u64>(),
        z in prop::collection::vec(-2.0f64..2.0, 8),
        bias in -1.0f64..1.0,
    ) {
        let mut m = MlpModel::new(&sizes, seed).unwrap();
        for l in &mut m.layers {
            l.biases.fill(bias);
        }
        for (k, l) in m.layers.iter_mut().enumerate() {
            let w = l.weights.clone();
            l.weights = Array2::from_shape_fn(w.dim(), |(i, j)| {
                w[[i, j]] + 0.1 * (i as f64 - j as f64 + k as f64).sin()
            });
        }
        let z = &z[..sizes[0]];
        let fast = m.predict(z).unwrap();
        let slow = naive_predict(&m, z);
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
        }
    }
}
