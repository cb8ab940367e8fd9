mod common;

use common::*;
use proptest::prelude::*;
use richrep::experiments::{select_hyperparams, vrex_objective, RunRecord, Split, TuneMode};
use richrep::nn::{
    kl_distill_loss, sgd_step, softmax_temperature, train, CosineHead, LossKind, MomentumState,
    Parameterized, Schedule, TrainConfig,
};
use richrep::probing::{fit_probe, ProbeConfig};
use richrep::richrep::{
    block_offsets, cat_features, mean_softmax, DistillMode,
    DistillSpec, Provenance, RepresentationBank, Student,
};
use richrep::richrep::distill::{distill_loss_grad, teacher_targets};
use richrep::tasks::{gen_shift, split_classes, ShiftSpec};
use richrep::{Matrix, Rng};

fn finite_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-30.0f64..30.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_sums_to_one_and_ignores_shifts(v in finite_vec(7), shift in -50.0f64..50.0, tau in 0.1f64..20.0) {
        let p = softmax_temperature(&v, tau).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
        let q = softmax_temperature(&shifted, tau).unwrap();
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn kl_is_nonnegative(t in finite_vec(12), s in finite_vec(12), tau in 0.5f64..20.0) {
        let t = Matrix::from_vec(3, 4, t).unwrap();
        let s = Matrix::from_vec(3, 4, s).unwrap();
        prop_assert!(kl_distill_loss(&t, &s, tau).unwrap().0 >= 0.0);
    }

    #[test]
    fn kl_vanishes_on_shifted_rows(t in finite_vec(8), c in -10.0f64..10.0) {
        // Adding a constant per row leaves the softened distribution alone.
        let t = Matrix::from_vec(2, 4, t).unwrap();
        let s = t.map(|v| v + c);
        prop_assert!(kl_distill_loss(&t, &s, 3.0).unwrap().0.abs() < 1e-10);
    }

    #[test]
    fn cosine_head_ignores_power_of_two_scale(z in finite_vec(6), e in -30i32..30, seed in 0u64..1000) {
        prop_assume!(z.iter().any(|v| *v != 0.0));
        let head = CosineHead::glorot(6, 3, &mut Rng::new(seed));
        let c = 2f64.powi(e);
        let scaled: Vec<f64> = z.iter().map(|v| v * c).collect();
        prop_assert_eq!(head.forward(&z).unwrap(), head.forward(&scaled).unwrap());
    }

    #[test]
    fn cosine_head_nearly_ignores_any_scale(z in finite_vec(6), c in 1e-3f64..1e3, seed in 0u64..1000) {
        prop_assume!(z.iter().any(|v| v.abs() > 1e-3));
        let head = CosineHead::glorot(6, 3, &mut Rng::new(seed));
        let scaled: Vec<f64> = z.iter().map(|v| v * c).collect();
        let a = head.forward(&z).unwrap();
        let b = head.forward(&scaled).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn vrex_is_monotone_in_beta(r in prop::collection::vec(0.0f64..5.0, 1..6), b1 in 0.0f64..100.0, b2 in 0.0f64..100.0) {
        let (lo, hi) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
        prop_assert!(vrex_objective(&r, lo) <= vrex_objective(&r, hi));
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        prop_assert_eq!(vrex_objective(&r, 0.0), mean);
    }

    #[test]
    fn ensemble_rows_sum_to_one(a in finite_vec(12), b in finite_vec(12)) {
        let m = mean_softmax(&[
            Matrix::from_vec(4, 3, a).unwrap(),
            Matrix::from_vec(4, 3, b).unwrap(),
        ]).unwrap();
        for row in m.iter_rows() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }
}

#[test]
fn backprop_matches_finite_differences_across_seeds() {
    for seed in 0..3 {
        let mut rng = Rng::new(100 + seed);
        for kind in gradient_losses() {
            let dims = [5, 8, 6, 3];
            let p = GradProblem::new(10, dims, &mut rng);
            let net = live_net(dims, &p.x, &mut rng);
            let e = worst_relative_error(&net, &p, kind, 100, &mut rng);
            assert!(e < FD_TOL, "{} seed {seed}: {e:.2e}", kind.name());
        }
    }
}

fn small_train(seed: u64) -> TrainConfig {
    TrainConfig {
        lr: 0.05,
        momentum: 0.9,
        weight_decay: 1e-3,
        epochs: 3,
        batch_size: 16,
        schedule: Schedule::Constant,
        seed,
    }
}

#[test]
fn training_is_reproducible() {
    let data = gen_shift(&ShiftSpec { n_per_env: 60, ..ShiftSpec::default() }, 4).unwrap().pooled_train();
    let run = || {
        let mut net = random_net([data.n_features(), 8, 6, data.n_classes], &mut Rng::new(1));
        let h = train(&mut net, &data.x, &data.y, LossKind::CrossEntropy, &small_train(9)).unwrap();
        (h, net.param_bytes())
    };
    assert_eq!(run(), run());
}

#[test]
fn weight_decay_spares_biases() {
    let mut net = random_net([4, 5, 5, 3], &mut Rng::new(2));
    let before = net.clone();
    let zeros: Vec<_> = net
        .param_shapes()
        .into_iter()
        .map(|(o, i)| richrep::nn::LayerGrad::zeros(o, i))
        .collect();
    let mut state = MomentumState::zeros_for(&net);
    let cfg = TrainConfig { weight_decay: 0.1, momentum: 0.0, ..small_train(0) };
    sgd_step(&mut net, &zeros, &mut state, &cfg, 0.5).unwrap();
    for (a, b) in before.layers().iter().zip(net.layers()) {
        assert_eq!(a.bias, b.bias);
        for (w0, w1) in a.weights.as_slice().iter().zip(b.weights.as_slice()) {
            if *w0 != 0.0 {
                assert!(w1.abs() < w0.abs());
            }
        }
    }
}

fn overlapping(n: usize, seed: u64) -> (Matrix, Vec<usize>) {
    let mut rng = Rng::new(seed);
    let y: Vec<usize> = (0..n).map(|_| rng.below(3)).collect();
    let mut x = Matrix::zeros(n, 4);
    for (i, &c) in y.iter().enumerate() {
        for j in 0..4 {
            let shift = if j == c { 0.6 } else { 0.0 };
            // Columns on different scales so standardization matters.
            x[(i, j)] = (shift + 2.0 * rng.normal()) * (1.0 + j as f64) + 3.0;
        }
    }
    (x, y)
}

#[test]
fn standardization_keeps_the_unregularized_optimum() {
    let (x, y) = overlapping(300, 5);
    let base = ProbeConfig { l2: 0.0, max_iters: 20_000, grad_tol: 1e-7, standardize: false };
    let raw = fit_probe(&x, &y, &base, &mut Rng::new(1)).unwrap();
    let std = fit_probe(&x, &y, &ProbeConfig { standardize: true, ..base }, &mut Rng::new(1)).unwrap();
    assert!(raw.converged && std.converged);
    assert!((raw.cost - std.cost).abs() <= 1e-3, "{} vs {}", raw.cost, std.cost);
}

#[test]
fn restarts_reach_the_same_cost() {
    let (x, y) = overlapping(200, 6);
    let cfg = ProbeConfig { l2: 1e-2, ..ProbeConfig::default() };
    let std = ProbeConfig { standardize: true, ..cfg };
    let costs: Vec<f64> = (0..10).map(|s| fit_probe(&x, &y, &std, &mut Rng::new(s)).unwrap().cost).collect();
    let spread = costs.iter().cloned().fold(f64::MIN, f64::max) - costs.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread <= 1e-4, "spread {spread:e}");
}

fn bank(n: usize) -> (RepresentationBank, Matrix) {
    let mut rng = Rng::new(30);
    let nets = (0..n).map(|i| random_net([6, 9, 4 + i, 3], &mut rng)).collect();
    let b = RepresentationBank::new(nets, (0..n as u64).collect(), Provenance::IndependentEpisodes).unwrap();
    (b, random_matrix(20, 6, &mut rng))
}

#[test]
fn concatenated_blocks_are_member_features() {
    let (b, x) = bank(3);
    let cat = cat_features(&b, &x).unwrap();
    for (i, off) in block_offsets(&b).into_iter().enumerate() {
        let f = b.member(i).features(&x).unwrap();
        assert_eq!(cat.col_block(off, f.cols()), f);
    }
}

#[test]
fn removing_a_member_leaves_the_others_alone() {
    let (b, _) = bank(3);
    let smaller = b.without(1).unwrap();
    assert_eq!(smaller.member(0), b.member(0));
    assert_eq!(smaller.member(1), b.member(2));
}

#[test]
fn teacher_copy_has_zero_distillation_loss() {
    let (b, x) = bank(1);
    let spec = DistillSpec { mode: DistillMode::Kl, tau: 4.0, alpha: 0.7, student_hidden: vec![9, 4] };
    let student = Student::from_network(b.member(0), 1).unwrap();
    let targets = teacher_targets(&b, DistillMode::Kl, &x).unwrap();
    let labels = vec![0; x.rows()];
    let rows: Vec<usize> = (0..x.rows()).collect();
    let (loss, grads) = distill_loss_grad(&student, &targets, &spec, &x, &labels, &rows).unwrap();
    assert!(loss < 1e-10, "{loss:e}");
    let norm = grads
        .iter()
        .flat_map(|g| g.weights.as_slice().iter().chain(&g.bias))
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    assert!(norm < 1e-8, "{norm:e}");
}

#[test]
fn shift_generation_is_deterministic() {
    let spec = ShiftSpec { n_per_env: 80, ..ShiftSpec::default() };
    assert_eq!(gen_shift(&spec, 3).unwrap(), gen_shift(&spec, 3).unwrap());
    assert_ne!(gen_shift(&spec, 3).unwrap(), gen_shift(&spec, 4).unwrap());
}

#[test]
fn spurious_block_is_useless_at_uniform_correlation() {
    let k = 5;
    let spec = ShiftSpec {
        n_classes: k,
        ood_correlation: 1.0 / k as f64,
        n_per_env: 1000,
        ..ShiftSpec::default()
    };
    let data = gen_shift(&spec, 8).unwrap();
    let cols: Vec<usize> = spec.spur_cols().collect();
    let train = data.pooled_train();
    let cfg = ProbeConfig { l2: 1e-2, max_iters: 500, grad_tol: 1e-5, standardize: true };
    let probe = fit_probe(&train.x.select_cols(&cols), &train.y, &cfg, &mut Rng::new(0)).unwrap();
    let n = data.ood_test.len() as f64;
    let acc = probe.accuracy(&data.ood_test.x.select_cols(&cols), &data.ood_test.y).unwrap();
    let p = 1.0 / k as f64;
    let sigma = (p * (1.0 - p) / n).sqrt();
    assert!((acc - p).abs() <= 3.0 * sigma, "acc {acc} vs chance {p} ± {}", 3.0 * sigma);
}

#[test]
fn class_split_keeps_rows_and_separates_classes() {
    let data = gen_shift(&ShiftSpec { n_classes: 6, d_core: 6, d_spur: 6, n_per_env: 90, ..ShiftSpec::default() }, 1)
        .unwrap()
        .pooled_train();
    let (base, novel) = split_classes(&data, &[0, 2, 4], &[1, 3, 5]).unwrap();
    assert_eq!(base.len() + novel.len(), data.len());
    let base_rows: Vec<usize> = (0..data.len()).filter(|&i| data.y[i] % 2 == 0).collect();
    assert_eq!(base.x, data.x.select_rows(&base_rows));
    assert!(base.y.iter().all(|&y| y < 3) && novel.y.iter().all(|&y| y < 3));
}

fn tune_record(split: Split, point: usize, value: f64) -> RunRecord {
    RunRecord::new("ood-g0", 0, "erm", "t", split, &format!("accuracy_p{point}"), value)
        .with("point", point)
        .with("beta", "0")
        .with("lr", "0.01")
        .with("wd", "0")
}

#[test]
fn selection_never_reads_test_records() {
    let records = vec![
        tune_record(Split::OodTune, 0, 0.6),
        tune_record(Split::OodTune, 1, 0.5),
        tune_record(Split::IdTrain, 0, 0.1),
        tune_record(Split::IdTrain, 1, 0.9),
        tune_record(Split::IdTest, 0, 0.99),
        tune_record(Split::OodTest, 0, 0.99),
    ];
    assert_eq!(select_hyperparams(&records, TuneMode::Ood).unwrap(), 0);
    assert_eq!(select_hyperparams(&records, TuneMode::Iid).unwrap(), 1);
    // With only test-split records there is nothing to select from.
    let only_test = vec![tune_record(Split::OodTest, 0, 0.7)];
    assert!(select_hyperparams(&only_test, TuneMode::Ood).is_err());
}
