use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use surprise_core::bonus::{
    apply_bonus, learning_progress_bonus, normalize_eta, pred_error_bonus, random_surprisal_bonus,
    surprisal_bonus, BonusScheme,
};
use surprise_core::dist::{LogStdBounds, HALF_LN_2PI};
use surprise_core::dynamics::{
    model_nll, model_update, DynamicsModel, DynamicsUpdateConfig, ModelSnapshot, Normalizer,
    ReplayMemory, SnapshotRing, TransitionBatch, TransitionTuple,
};
use surprise_core::numkit::ParamVector;

fn linear_gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<TransitionTuple> {
    let noise = Normal::new(0.0, 0.1).unwrap();
    (0..n)
        .map(|_| {
            let s: f64 = rng.random_range(-1.0..1.0);
            let a: f64 = rng.random_range(-1.0..1.0);
            TransitionTuple {
                s: vec![s],
                a: vec![a],
                s_next: vec![0.9 * s + 0.1 * a + noise.sample(rng)],
                r_ext: 0.0,
                done: false,
            }
        })
        .collect()
}

/// Model whose whitened output is exactly `(mean_w, log_std_w)` for any input.
fn constant_model(mean_w: f64, log_std_w: f64) -> DynamicsModel {
    let m = DynamicsModel::new(1, 1, vec![], 0, LogStdBounds::default()).unwrap();
    let layout = m.params().layout().clone();
    // single linear layer [2 x 2] weight then bias
    let data = vec![0.0, 0.0, 0.0, 0.0, mean_w, log_std_w];
    let params = ParamVector::new(layout, data).unwrap();
    let mut m = m;
    m.set_params(params).unwrap();
    m
}

fn one(s: f64, a: f64, s2: f64) -> TransitionBatch {
    let mut b = TransitionBatch::new(1, 1);
    b.push(&[s], &[a], &[s2]);
    b
}

#[test]
fn nll_of_exact_standard_normal_prediction() {
    let m = constant_model(0.3, 0.0);
    let nll = model_nll(&m, &one(1.0, 0.0, 0.3)).unwrap();
    assert!((nll - HALF_LN_2PI).abs() < 1e-12);
    let floor = model_nll(&constant_model(0.0, -40.0), &one(0.0, 0.0, 0.0)).unwrap();
    assert!((floor - (-5.0 + HALF_LN_2PI)).abs() < 1e-12, "clamp floor {floor}");
}

#[test]
fn surprisal_examples_and_identity() {
    let m = constant_model(0.0, 0.0);
    let at_mean = surprisal_bonus(&m, &one(0.0, 0.0, 0.0)).unwrap()[0];
    assert!((at_mean - HALF_LN_2PI).abs() < 1e-12);
    let one_sigma = surprisal_bonus(&m, &one(0.0, 0.0, 1.0)).unwrap()[0];
    assert!((one_sigma - at_mean - 0.5).abs() < 1e-12);

    // identity on a random model, batch and normalizer
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut model = DynamicsModel::new(3, 2, vec![8], 9, LogStdBounds::default()).unwrap();
    let mut batch = TransitionBatch::new(3, 2);
    let mut tuples = Vec::new();
    for _ in 0..50 {
        let s: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let a: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s2: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
        batch.push(&s, &a, &s2);
        tuples.push(TransitionTuple { s, a, s_next: s2, r_ext: 0.0, done: false });
    }
    model.set_normalizer(Normalizer::fit(3, 2, tuples.iter())).unwrap();
    let raw = surprisal_bonus(&model, &batch).unwrap();
    let pred = model.predict(&batch).unwrap();
    for (r, row) in raw.iter().enumerate() {
        let mut quad = 0.0;
        for i in 0..3 {
            let mu = pred.mean().get(r, i);
            let ls = pred.log_std().get(r, i);
            let d = batch.next_state(r)[i] - mu;
            quad += d * d / (2.0 * (2.0 * ls).exp()) + ls;
        }
        assert!((row - quad - 3.0 * HALF_LN_2PI).abs() < 1e-10);
    }
}

#[test]
fn learning_progress_examples() {
    let batch = one(0.0, 0.0, 1.0);
    let past = constant_model(0.0, 0.0);
    let now = constant_model(1.0, 0.0);
    assert!((learning_progress_bonus(&now, &past, &batch).unwrap()[0] - 0.5).abs() < 1e-12);
    assert!((learning_progress_bonus(&past, &now, &batch).unwrap()[0] + 0.5).abs() < 1e-12);
    assert_eq!(learning_progress_bonus(&now, &now, &batch).unwrap(), vec![0.0]);
}

#[test]
fn pred_error_examples() {
    let m = DynamicsModel::new(2, 1, vec![], 0, LogStdBounds::default()).unwrap();
    let layout = m.params().layout().clone();
    // weight [4 x 3] zero, bias: mean (1, 2), log_std (0.7, -1)
    let mut data = vec![0.0; 12];
    data.extend_from_slice(&[1.0, 2.0, 0.7, -1.0]);
    let mut m = m;
    m.set_params(ParamVector::new(layout.clone(), data.clone()).unwrap()).unwrap();
    let mut batch = TransitionBatch::new(2, 1);
    batch.push(&[0.0, 0.0], &[0.0], &[4.0, 6.0]);
    batch.push(&[0.0, 0.0], &[0.0], &[1.0, 2.0]);
    assert_eq!(pred_error_bonus(&m, &batch).unwrap(), vec![5.0, 0.0]);
    data[14] = -3.0;
    m.set_params(ParamVector::new(layout, data).unwrap()).unwrap();
    assert_eq!(pred_error_bonus(&m, &batch).unwrap(), vec![5.0, 0.0]);
}

#[test]
fn eta_and_shift_examples() {
    assert!((normalize_eta(&[4.0, 4.0], 0.001).unwrap() - 0.00025).abs() < 1e-18);
    assert!((normalize_eta(&[-4.0], 0.001).unwrap() - 0.00025).abs() < 1e-18);
    assert_eq!(normalize_eta(&[0.5, -0.2], 0.001).unwrap(), 0.001);
    let (r, shift) = apply_bonus(&[0.0, 1.0], &[-2.0, 0.0], 1.0, true).unwrap();
    assert_eq!(shift, 1.0);
    assert_eq!(r, vec![-1.0, 2.0]);
    let (r, shift) = apply_bonus(&[0.0, 1.0], &[3.0, 1.0], 0.5, true).unwrap();
    assert_eq!(shift, 0.0);
    assert_eq!(r, vec![1.5, 1.5]);
    let (r, _) = apply_bonus(&[0.2, 0.3], &[9.0, -9.0], 0.0, false).unwrap();
    assert_eq!(r, vec![0.2, 0.3]);
    assert!(normalize_eta(&[], 1.0).is_err());
}

#[test]
fn scheme_parsing() {
    assert_eq!(BonusScheme::parse("learning_progress:10").unwrap(), BonusScheme::LearningProgress { k: 10 });
    assert_eq!(BonusScheme::parse("surprisal").unwrap(), BonusScheme::Surprisal);
    assert!(BonusScheme::parse("learning_progress:0").and_then(|s| s.validate()).is_err());
    assert!(BonusScheme::parse("vime").is_err());
}

#[test]
fn replay_sampling_is_a_permutation_at_full_size() {
    let mut mem = ReplayMemory::new(10);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    mem.insert(linear_gaussian(&mut rng, 6));
    let mut idx = mem.sample_indices(6, 3).unwrap();
    assert_eq!(idx, mem.sample_indices(6, 3).unwrap());
    idx.sort_unstable();
    assert_eq!(idx, (0..6).collect::<Vec<_>>());
    assert!(ReplayMemory::new(3).sample_indices(1, 0).is_err());
}

fn fitted_world(alpha: f64) -> (DynamicsModel, TransitionBatch, SnapshotRing) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut mem = ReplayMemory::new(100_000);
    mem.insert(linear_gaussian(&mut rng, 20_000));
    let held = linear_gaussian(&mut rng, 2000);
    let held = TransitionBatch::from_tuples(1, 1, held.iter());
    let mut model = DynamicsModel::new(1, 1, vec![32], 1, LogStdBounds::default()).unwrap();
    let mut ring = SnapshotRing::new(1);
    let cfg = DynamicsUpdateConfig { alpha, ..Default::default() };
    for u in 0..200 {
        let r = model_update(&mut model, &mem, &mut ring, u, &cfg, u).unwrap();
        if let Some(step) = r.step {
            if step.accepted {
                assert!(r.kl_step <= cfg.kappa + 1e-10);
            }
        }
    }
    (model, held, ring)
}

#[test]
fn linear_gaussian_world_converges_to_noise_scale() {
    let (model, held, ring) = fitted_world(0.0);
    let entropy = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * 0.01).ln();
    let nll = model_nll(&model, &held).unwrap();
    assert!((nll - entropy).abs() < 0.05, "nll {nll} vs {entropy}");
    let pred = model.predict(&held).unwrap();
    for l in pred.log_std().data() {
        assert!((l.exp() - 0.1).abs() < 0.02);
    }
    let past = model.with_snapshot(ring.get(1).unwrap()).unwrap();
    let lp = learning_progress_bonus(&model, &past, &held).unwrap();
    assert!((lp.iter().sum::<f64>() / lp.len() as f64).abs() < 0.01);

    let frozen = DynamicsModel::new(1, 1, vec![32], 1, LogStdBounds::default()).unwrap();
    let random: f64 = random_surprisal_bonus(&frozen, &held).unwrap().iter().sum();
    let trained: f64 = surprisal_bonus(&model, &held).unwrap().iter().sum();
    assert!(random > trained);
}

#[test]
fn zero_kappa_leaves_the_model_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mem = ReplayMemory::new(1000);
    mem.insert(linear_gaussian(&mut rng, 500));
    let mut model = DynamicsModel::new(1, 1, vec![4], 2, LogStdBounds::default()).unwrap();
    let before = model.params().clone();
    let mut ring = SnapshotRing::new(2);
    let cfg = DynamicsUpdateConfig { batch_size: 200, kappa: 0.0, ..Default::default() };
    let r = model_update(&mut model, &mem, &mut ring, 0, &cfg, 0).unwrap();
    assert_eq!(model.params(), &before);
    assert_eq!(r.kl_step, 0.0);
    assert_eq!(ring.get(1).unwrap().params, before);
}

#[test]
fn memory_smaller_than_batch_skips() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mem = ReplayMemory::new(1000);
    mem.insert(linear_gaussian(&mut rng, 10));
    let mut model = DynamicsModel::new(1, 1, vec![4], 2, LogStdBounds::default()).unwrap();
    let mut ring = SnapshotRing::new(2);
    let r = model_update(&mut model, &mem, &mut ring, 0, &DynamicsUpdateConfig::default(), 0).unwrap();
    assert!(r.skipped);
    assert!(ring.is_empty());
}

#[test]
fn strong_regularization_shrinks_weights_on_flat_data() {
    // constant targets: NLL can be matched by biases alone, the penalty dominates
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let tuples: Vec<TransitionTuple> = (0..400)
        .map(|_| TransitionTuple {
            s: vec![rng.random_range(-1.0..1.0)],
            a: vec![rng.random_range(-1.0..1.0)],
            s_next: vec![0.5],
            r_ext: 0.0,
            done: false,
        })
        .collect();
    let mut mem = ReplayMemory::new(1000);
    mem.insert(tuples);
    let mut model = DynamicsModel::new(1, 1, vec![4], 5, LogStdBounds::default()).unwrap();
    let mut ring = SnapshotRing::new(1);
    let cfg = DynamicsUpdateConfig { batch_size: 400, alpha: 1e3, kappa: 0.01, ..Default::default() };
    let mut accepted = 0;
    for u in 0..10 {
        let w0 = model.weight_norm_sq(model.params().data());
        let r = model_update(&mut model, &mem, &mut ring, u, &cfg, u).unwrap();
        let step = r.step.unwrap();
        if step.accepted {
            accepted += 1;
            assert!(step.objective_after >= step.objective_before);
            assert!(model.weight_norm_sq(model.params().data()) < w0);
        }
    }
    assert!(accepted > 0);
}

#[test]
fn snapshot_ring_returns_exact_history() {
    let model = DynamicsModel::new(1, 1, vec![3], 0, LogStdBounds::default()).unwrap();
    let mut ring = SnapshotRing::new(3);
    let snaps: Vec<ModelSnapshot> = (0..5)
        .map(|i| {
            let mut s = model.snapshot();
            s.params.data_mut()[0] = i as f64;
            s
        })
        .collect();
    for (i, s) in snaps.iter().enumerate() {
        ring.push(i as u64, s.clone()).unwrap();
    }
    // after 5 pushes, k=1 is the latest pre-update state, k=3 the oldest kept
    assert_eq!(ring.get(1).unwrap(), &snaps[4]);
    assert_eq!(ring.get(3).unwrap(), &snaps[2]);
    assert_eq!(ring.get(10).unwrap(), &snaps[2]);
    assert!(ring.push(2, snaps[0].clone()).is_err());
}
