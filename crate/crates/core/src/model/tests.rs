use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::dataio::{DatasetMeta, Sample};
use crate::numerics::{finite_diff_check, NumericsError, Real, Tape, Tensor, Var};

fn tiny_hp() -> HyperParams {
    HyperParams {
        d: 4,
        heads: 2,
        k: 2,
        ff_dim: 6,
        n_blocks: 1,
        dropout: 0.1,
        time_vocab: 7 * 4,
        n_regions: 3,
        ..HyperParams::default()
    }
}

fn tiny_meta() -> DatasetMeta {
    DatasetMeta::new(3, 4, 2).unwrap()
}

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
        .unwrap()
}

/// Parameters with nonzero biases so every bias gradient is exercised.
fn random_params(hp: &HyperParams, seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = init_params(hp, seed).unwrap();
    for t in p.entries_mut() {
        for v in t.data_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    p
}

fn sample(hp: &HyperParams, seed: u64, time_index: usize) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Sample {
        history_in: random(&mut rng, hp.n_regions, hp.k),
        history_out: random(&mut rng, hp.n_regions, hp.k),
        time_index,
        target_in: vec![0.0; hp.n_regions],
        target_out: vec![0.0; hp.n_regions],
    }
}

fn as_numerics(e: ModelError) -> NumericsError {
    match e {
        ModelError::Numerics(n) => n,
        other => NumericsError::InvalidArgument {
            op: "model",
            reason: other.to_string(),
        },
    }
}

/// `Σ y ⊙ C` with a fixed random `C`.
fn weighted_sum(tape: &mut Tape, y: Var, seed: u64) -> Result<Var, NumericsError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (r, c) = tape.value(y).dims2()?;
    let w = tape.constant(random(&mut rng, r, c));
    let prod = tape.mul(y, w)?;
    tape.sum(prod)
}

fn embedding_vars(tape: &mut Tape, p: &ModelParams) -> EmbeddingParams<Var> {
    p.map(|_, t| tape.param(t.clone())).embedding
}

#[test]
fn flow_embedding_of_zero_history_is_zero() {
    let hp = tiny_hp();
    let mut p = init_params(&hp, 1).unwrap();
    p.embedding.b1.data_mut().fill(0.0);
    let mut tape = Tape::new();
    let e = embedding_vars(&mut tape, &p);
    let z = tape.constant(Tensor::zeros(&[3, 2]).unwrap());
    let out = embed_flows(&mut tape, z, z, &e).unwrap();
    assert_eq!(tape.shape(out), &[3, 4]);
    assert!(tape.value(out).data().iter().all(|&v| v == 0.0));
}

#[test]
fn flow_embedding_hand_case() {
    let d = 3;
    let mut tape = Tape::new();
    let ones = Tensor::full(&[1, d], 1.0).unwrap();
    let mut stack = vec![0.0; 2 * d * d];
    for i in 0..d {
        stack[i * d + i] = 1.0;
        stack[(d + i) * d + i] = 1.0;
    }
    let zero = || Tensor::zeros(&[d]).unwrap();
    let e = EmbeddingParams {
        w1: tape.param(ones.clone()),
        b1: tape.param(zero()),
        w2: tape.param(ones),
        b2: tape.param(zero()),
        w3: tape.param(Tensor::matrix(2 * d, d, stack).unwrap()),
        b3: tape.param(zero()),
        w4: tape.param(Tensor::zeros(&[1, d]).unwrap()),
        b4: tape.param(zero()),
        w5: tape.param(Tensor::zeros(&[1, d]).unwrap()),
        b5: tape.param(zero()),
        w6: tape.param(Tensor::identity(d).unwrap()),
        b6: tape.param(zero()),
    };
    let hin = tape.constant(Tensor::matrix(1, 1, vec![2.0]).unwrap());
    let hout = tape.constant(Tensor::matrix(1, 1, vec![3.0]).unwrap());
    let out = embed_flows(&mut tape, hin, hout, &e).unwrap();
    assert_eq!(tape.value(out).data(), &[5.0, 5.0, 5.0]);

    let wrong = tape.constant(Tensor::zeros(&[1, 2]).unwrap());
    assert!(matches!(
        embed_flows(&mut tape, wrong, wrong, &e),
        Err(ModelError::Shape(_))
    ));
}

#[test]
fn flow_embedding_gradients() {
    let hp = tiny_hp();
    let p = random_params(&hp, 3);
    let s = sample(&hp, 4, 0);
    let e = &p.embedding;
    let params = [
        e.w1.clone(),
        e.b1.clone(),
        e.w2.clone(),
        e.b2.clone(),
        e.w3.clone(),
        e.b3.clone(),
    ];
    let report = finite_diff_check(
        |tape, v| {
            let hin = tape.constant(s.history_in.clone());
            let hout = tape.constant(s.history_out.clone());
            let fi = tape.matmul(hin, v[0])?;
            let fi = tape.add(fi, v[1])?;
            let fo = tape.matmul(hout, v[2])?;
            let fo = tape.add(fo, v[3])?;
            let both = tape.concat(&[fi, fo])?;
            let direct = tape.matmul(both, v[4])?;
            let direct = tape.add(direct, v[5])?;
            // The layer function must agree with the inline composition.
            let mut ev = embedding_vars(tape, &p);
            (ev.w1, ev.b1, ev.w2, ev.b2, ev.w3, ev.b3) = (v[0], v[1], v[2], v[3], v[4], v[5]);
            let out = embed_flows(tape, hin, hout, &ev).map_err(as_numerics)?;
            assert!(tape.value(out).bitwise_eq(tape.value(direct)));
            let total = tape.sum(out)?;
            Ok(total)
        },
        &params,
        1e-6,
        200,
        5,
    )
    .unwrap();
    assert!(report.max_rel_error <= 1e-5, "{report:?}");
}

#[test]
fn spatial_embedding_selects_a_row() {
    let hp = tiny_hp();
    let p = init_params(&hp, 2).unwrap();
    let mut tape = Tape::new();
    let e = embedding_vars(&mut tape, &p);
    let s1 = embed_spatial(&mut tape, 1, &e).unwrap();
    assert_eq!(tape.value(s1).data(), p.embedding.w4.row(1));
    let s2 = embed_spatial(&mut tape, 2, &e).unwrap();
    assert_ne!(tape.value(s1).data(), tape.value(s2).data());
    assert!(matches!(
        embed_spatial(&mut tape, 3, &e),
        Err(ModelError::RegionOutOfRange { index: 3, regions: 3 })
    ));
    let all = embed_spatial_all(&mut tape, &e).unwrap();
    assert_eq!(tape.value(all).row(1), tape.value(s1).data());

    let loss = tape.sum(s1).unwrap();
    tape.backward(loss).unwrap();
    let g = tape.grad(e.w4).unwrap();
    for r in 0..3 {
        let expect = if r == 1 { 1.0 } else { 0.0 };
        assert!(g[r * 4..(r + 1) * 4].iter().all(|&v| v == expect), "row {r}");
    }
}

#[test]
fn spatial_gradient_matches_finite_differences_only_on_selected_row() {
    let hp = tiny_hp();
    let p = random_params(&hp, 8);
    let report = finite_diff_check(
        |tape, v| {
            let mut e = embedding_vars(tape, &p);
            e.w4 = v[0];
            let s = embed_spatial(tape, 2, &e).map_err(as_numerics)?;
            weighted_sum(tape, s, 1)
        },
        &[p.embedding.w4.clone()],
        1e-6,
        100,
        3,
    )
    .unwrap();
    assert!(report.max_rel_error <= 1e-6, "{report:?}");
}

#[test]
fn temporal_embedding_repeats_weekly() {
    let hp = tiny_hp();
    let meta = tiny_meta();
    let p = init_params(&hp, 2).unwrap();
    let mut tape = Tape::new();
    let e = embedding_vars(&mut tape, &p);
    let a = embed_temporal(&mut tape, 5, &meta, &e).unwrap();
    let b = embed_temporal(&mut tape, 5 + 28, &meta, &e).unwrap();
    let c = embed_temporal(&mut tape, 6, &meta, &e).unwrap();
    assert!(tape.value(a).bitwise_eq(tape.value(b)));
    assert!(!tape.value(a).bitwise_eq(tape.value(c)));
    assert_eq!(time_of_week_index(5, &meta, 28), 7);
    assert_eq!(tape.value(a).data(), p.embedding.w5.row(7));
    assert_eq!(time_of_week_index(30, &meta, 10), 0);

    let half_hour = DatasetMeta::new(1, 48, 0).unwrap();
    assert_eq!(half_hour.slots_per_week(), 336);
    assert_eq!(HyperParams::default().time_vocab, 336);
}

#[test]
fn fusion_cases() {
    let hp = tiny_hp();
    let mut p = init_params(&hp, 2).unwrap();
    p.embedding.w6 = Tensor::identity(4).unwrap();
    let mut tape = Tape::new();
    let e = embedding_vars(&mut tape, &p);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let f = random(&mut rng, 3, 4);
    let fv = tape.constant(f.clone());
    let zs = tape.constant(Tensor::zeros(&[3, 4]).unwrap());
    let zt = tape.constant(Tensor::zeros(&[1, 4]).unwrap());
    let out = fuse_region(&mut tape, fv, zs, zt, &e).unwrap();
    assert!(tape.value(out).bitwise_eq(&f));
    let zf = tape.constant(Tensor::zeros(&[3, 4]).unwrap());
    let out = fuse_region(&mut tape, zf, zs, zt, &e).unwrap();
    assert!(tape.value(out).data().iter().all(|&v| v == 0.0));
    let narrow = tape.constant(Tensor::zeros(&[3, 2]).unwrap());
    assert!(fuse_region(&mut tape, narrow, zs, zt, &e).is_err());
}

fn permute_rows(t: &Tensor, perm: &[usize]) -> Tensor {
    let rows: Vec<Vec<Real>> = perm.iter().map(|&i| t.row(i).to_vec()).collect();
    Tensor::from_rows(&rows).unwrap()
}

#[test]
fn fusion_commutes_with_region_permutation() {
    let hp = tiny_hp();
    let p = random_params(&hp, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (f, s) = (random(&mut rng, 3, 4), random(&mut rng, 3, 4));
    let t = random(&mut rng, 1, 4);
    let perm = [2, 0, 1];
    let run = |f: &Tensor, s: &Tensor| {
        let mut tape = Tape::new();
        let e = embedding_vars(&mut tape, &p);
        let (fv, sv, tv) = (
            tape.constant(f.clone()),
            tape.constant(s.clone()),
            tape.constant(t.clone()),
        );
        let out = fuse_region(&mut tape, fv, sv, tv, &e).unwrap();
        tape.value(out).clone()
    };
    let base = run(&f, &s);
    let permuted = run(&permute_rows(&f, &perm), &permute_rows(&s, &perm));
    assert!(permuted.max_abs_diff(&permute_rows(&base, &perm)) <= 1e-12);
}

fn head(tape: &mut Tape, q: Tensor, k: Tensor) -> HeadParams<Var> {
    HeadParams {
        w_q: tape.param(q),
        w_k: tape.param(k),
    }
}

#[test]
fn score_cases() {
    let mut tape = Tape::new();
    let h = head(
        &mut tape,
        Tensor::matrix(1, 1, vec![1.0]).unwrap(),
        Tensor::matrix(1, 1, vec![1.0]).unwrap(),
    );
    let x = tape.constant(Tensor::matrix(2, 1, vec![2.0, 3.0]).unwrap());
    let a = attention_scores(&mut tape, x, &h, 1.0).unwrap();
    assert_eq!(tape.value(a).data(), &[4.0, 6.0, 6.0, 9.0]);

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let h = head(&mut tape, random(&mut rng, 4, 4), random(&mut rng, 4, 4));
    let z = tape.constant(Tensor::zeros(&[3, 4]).unwrap());
    let a = attention_scores(&mut tape, z, &h, 2.0).unwrap();
    assert!(tape.value(a).data().iter().all(|&v| v == 0.0));

    let xs = random(&mut rng, 3, 4);
    let x = tape.constant(xs.clone());
    let x3 = tape.constant(xs.map(|v| 3.0 * v));
    let a = attention_scores(&mut tape, x, &h, 2.0).unwrap();
    let a3 = attention_scores(&mut tape, x3, &h, 2.0).unwrap();
    assert!(tape.value(a3).max_abs_diff(&tape.value(a).map(|v| 9.0 * v)) <= 1e-12);
}

#[test]
fn aggregation_cases() {
    let mut tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let xs = random(&mut rng, 4, 3);
    let x = tape.constant(xs.clone());
    let flat = tape.constant(Tensor::full(&[4, 4], 0.7).unwrap());
    let (_, out) = attention_aggregate(
        &mut tape,
        flat,
        x,
        AttentionNormalization::Softmax,
        0.1,
        &mut Mode::Eval,
    )
    .unwrap();
    let mean: Vec<Real> = (0..3)
        .map(|j| (0..4).map(|i| xs.at2(i, j)).sum::<Real>() / 4.0)
        .collect();
    for i in 0..4 {
        for j in 0..3 {
            assert!((tape.value(out).at2(i, j) - mean[j]).abs() <= 1e-12);
        }
    }

    let one = tape.constant(Tensor::matrix(1, 3, vec![1.0, -2.0, 0.5]).unwrap());
    let s = tape.constant(Tensor::matrix(1, 1, vec![3.3]).unwrap());
    let (_, out) =
        attention_aggregate(&mut tape, s, one, AttentionNormalization::Softmax, 0.0, &mut Mode::Eval)
            .unwrap();
    assert_eq!(tape.value(out).data(), &[1.0, -2.0, 0.5]);
}

#[test]
fn attention_weights_are_row_stochastic() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for trial in 0..20 {
        let n = 1 + trial % 7;
        let mut tape = Tape::new();
        let scores = random(&mut rng, n, n).map(|v| 20.0 * v);
        let s = tape.constant(scores);
        let x = tape.constant(random(&mut rng, n, 4));
        let (w, _) =
            attention_aggregate(&mut tape, s, x, AttentionNormalization::Softmax, 0.0, &mut Mode::Eval)
                .unwrap();
        for i in 0..n {
            let row = tape.value(w).row(i);
            assert!(row.iter().all(|&v| v >= 0.0));
            assert!((row.iter().sum::<Real>() - 1.0).abs() <= 1e-9);
        }
    }
}

#[test]
fn raw_numerator_variant_divides_scores_by_partition_sum() {
    let mut tape = Tape::new();
    let s = tape.constant(Tensor::matrix(1, 2, vec![0.0, 1.0]).unwrap());
    let x = tape.constant(Tensor::identity(2).unwrap());
    let (w, _) = attention_aggregate(
        &mut tape,
        s,
        x,
        AttentionNormalization::RawNumerator,
        0.0,
        &mut Mode::Eval,
    )
    .unwrap();
    let z = 1.0 + (1.0 as Real).exp();
    assert!((tape.value(w).data()[1] - 1.0 / z).abs() <= 1e-15);
    assert_eq!(tape.value(w).data()[0], 0.0);
}

#[test]
fn head_combination_cases() {
    let mut tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let hs = random(&mut rng, 3, 4);
    let h = tape.constant(hs.clone());
    let eye = tape.param(Tensor::identity(4).unwrap());
    let out = multi_head_combine(&mut tape, &[h], eye).unwrap();
    assert!(tape.value(out).bitwise_eq(&hs));

    let w7 = tape.param(random(&mut rng, 8, 4));
    let z = tape.constant(Tensor::zeros(&[3, 4]).unwrap());
    let out = multi_head_combine(&mut tape, &[z, z], w7).unwrap();
    assert!(tape.value(out).data().iter().all(|&v| v == 0.0));

    let narrow = tape.constant(Tensor::zeros(&[3, 2]).unwrap());
    assert!(matches!(
        multi_head_combine(&mut tape, &[z, narrow], w7),
        Err(ModelError::Shape(_))
    ));
    assert!(multi_head_combine(&mut tape, &[], w7).is_err());

    let (a, b) = (random(&mut rng, 3, 4), random(&mut rng, 3, 4));
    let report = finite_diff_check(
        |tape, v| {
            let (a, b) = (tape.constant(a.clone()), tape.constant(b.clone()));
            let y = multi_head_combine(tape, &[a, b], v[0]).map_err(as_numerics)?;
            weighted_sum(tape, y, 2)
        },
        &[random(&mut rng, 8, 4)],
        1e-6,
        100,
        1,
    )
    .unwrap();
    assert!(report.max_rel_error <= 1e-6, "{report:?}");
}

fn run_block(hp: &HyperParams, p: &ModelParams, x: &Tensor) -> Tensor {
    let mut tape = Tape::new();
    let vars = p.map(|_, t| tape.constant(t.clone()));
    let xv = tape.constant(x.clone());
    let y = encoder_block(&mut tape, xv, &vars.blocks[0], hp, &mut Mode::Eval).unwrap();
    tape.value(y).clone()
}

#[test]
fn encoder_block_is_permutation_equivariant() {
    let hp = HyperParams {
        n_regions: 6,
        ..tiny_hp()
    };
    let p = random_params(&hp, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x = random(&mut rng, 6, 4);
    let perm = [3, 5, 0, 1, 4, 2];
    let base = run_block(&hp, &p, &x);
    let moved = run_block(&hp, &p, &permute_rows(&x, &perm));
    assert!(moved.max_abs_diff(&permute_rows(&base, &perm)) <= 1e-9);
}

#[test]
fn encoder_block_shape_and_eval_determinism() {
    let hp = tiny_hp();
    let p = random_params(&hp, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [1, 2, 9] {
        let x = random(&mut rng, n, 4);
        let a = run_block(&hp, &p, &x);
        assert_eq!(a.shape(), &[n, 4]);
        assert!(a.bitwise_eq(&run_block(&hp, &p, &x)));
    }
}

#[test]
fn training_mode_dropout_changes_output() {
    let hp = HyperParams {
        dropout: 0.5,
        ..tiny_hp()
    };
    let p = random_params(&hp, 12);
    let x = random(&mut ChaCha8Rng::seed_from_u64(1), 3, 4);
    let mut tape = Tape::new();
    let vars = p.map(|_, t| tape.constant(t.clone()));
    let xv = tape.constant(x.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let y = encoder_block(&mut tape, xv, &vars.blocks[0], &hp, &mut Mode::Train(&mut rng)).unwrap();
    assert!(!tape.value(y).bitwise_eq(&run_block(&hp, &p, &x)));
}

#[test]
fn forecast_cases() {
    let hp = tiny_hp();
    let mut p = random_params(&hp, 4);
    p.forecast.w_p1.data_mut().fill(0.0);
    p.forecast.b_p1.data_mut().fill(0.0);
    let mut tape = Tape::new();
    let vars = p.map(|_, t| tape.param(t.clone()));
    let x = tape.constant(random(&mut ChaCha8Rng::seed_from_u64(1), 5, 4));
    let y = forecast(&mut tape, x, &vars.forecast).unwrap();
    assert_eq!(tape.shape(y), &[5, 2]);
    for i in 0..5 {
        assert_eq!(tape.value(y).row(i), p.forecast.b_p2.data());
    }

    let p = random_params(&hp, 4);
    let xs = random(&mut ChaCha8Rng::seed_from_u64(2), 5, 4);
    let f = &p.forecast;
    let report = finite_diff_check(
        |tape, v| {
            let x = tape.constant(xs.clone());
            let fp = ForecastParams {
                w_p1: v[0],
                b_p1: v[1],
                w_p2: v[2],
                b_p2: v[3],
            };
            let y = forecast(tape, x, &fp).map_err(as_numerics)?;
            weighted_sum(tape, y, 4)
        },
        &[f.w_p1.clone(), f.b_p1.clone(), f.w_p2.clone(), f.b_p2.clone()],
        1e-6,
        100,
        2,
    )
    .unwrap();
    assert!(report.max_rel_error <= 1e-6, "{report:?}");
}

#[test]
fn batch_of_one_matches_single_prediction() {
    let hp = tiny_hp();
    let model = Model::new(hp.clone(), tiny_meta(), random_params(&hp, 21)).unwrap();
    let s = sample(&hp, 3, 9);
    let single = model.predict(&s).unwrap();
    let batch = RegionBatch::from_samples(&[&s]).unwrap();
    let out = model.forward(&batch, &mut Mode::Eval).unwrap();
    assert_eq!(out.shape(), &[1, 3, 2]);
    assert_eq!(out.data(), single.data());
    let again = model.forward(&batch, &mut Mode::Eval).unwrap();
    assert!(out.bitwise_eq(&again));

    let s2 = sample(&hp, 4, 10);
    let two = model
        .forward(&RegionBatch::from_samples(&[&s, &s2]).unwrap(), &mut Mode::Eval)
        .unwrap();
    assert_eq!(&two.data()[6..], model.predict(&s2).unwrap().data());
}

#[test]
fn model_rejects_inconsistent_inputs() {
    let hp = tiny_hp();
    let meta = DatasetMeta::new(4, 4, 0).unwrap();
    assert!(Model::init(hp.clone(), meta, 1).is_err());
    let mut bad = init_params(&hp, 1).unwrap();
    bad.forecast.w_p2 = Tensor::zeros(&[4, 3]).unwrap();
    assert!(Model::new(hp.clone(), tiny_meta(), bad).is_err());
    let model = Model::init(hp.clone(), tiny_meta(), 1).unwrap();
    let mut s = sample(&hp, 1, 0);
    s.history_in = Tensor::zeros(&[3, 5]).unwrap();
    assert!(model.predict(&s).is_err());
}

/// Whole network including every parameter tensor, for several depths.
fn full_gradient_check(n_blocks: usize, normalization: AttentionNormalization) -> Real {
    let hp = HyperParams {
        n_blocks,
        attention_normalization: normalization,
        ..tiny_hp()
    };
    let meta = tiny_meta();
    let p = random_params(&hp, 30 + n_blocks as u64);
    let model = Model::new(hp.clone(), meta, p.clone()).unwrap();
    let s = sample(&hp, 31, 6);
    let flat: Vec<Tensor> = p.entries().into_iter().cloned().collect();
    let report = finite_diff_check(
        |tape, v| {
            let vars = p.rebuild(v);
            let y = model
                .forward_on_tape(tape, &vars, &s.history_in, &s.history_out, s.time_index, &mut Mode::Eval)
                .map_err(as_numerics)?;
            weighted_sum(tape, y, 9)
        },
        &flat,
        1e-6,
        100,
        17,
    )
    .unwrap();
    assert_eq!(report.checked.len(), flat.len());
    report.max_rel_error
}

#[test]
fn full_network_gradients_match_finite_differences() {
    for blocks in 1..=3 {
        let err = full_gradient_check(blocks, AttentionNormalization::Softmax);
        assert!(err <= 1e-4, "{blocks} blocks: {err}");
    }
    let err = full_gradient_check(1, AttentionNormalization::RawNumerator);
    assert!(err <= 1e-4, "raw numerator: {err}");
}

#[test]
fn split_heads_use_narrow_projections() {
    let hp = HyperParams {
        head_layout: HeadLayout::Split,
        ..tiny_hp()
    };
    let p = init_params(&hp, 1).unwrap();
    assert_eq!(p.blocks[0].heads[0].w_q.shape(), &[4, 2]);
    let model = Model::new(hp.clone(), tiny_meta(), p).unwrap();
    assert_eq!(model.predict(&sample(&hp, 1, 0)).unwrap().shape(), &[3, 2]);
}
