use super::forward::Mode;
use super::params::{BlockParams, EmbeddingParams, ForecastParams, HeadParams};
use super::{AttentionNormalization, HyperParams, ModelError, LAYER_NORM_EPS};
use crate::dataio::DatasetMeta;
use crate::numerics::{Real, Tape, Var};

fn expect_width(tape: &Tape, v: Var, width: usize, what: &str) -> Result<(), ModelError> {
    let shape = tape.shape(v);
    if shape.len() != 2 || shape[1] != width {
        return Err(ModelError::Shape(format!(
            "{what}: expected [_ × {width}], got {shape:?}"
        )));
    }
    Ok(())
}

/// Projects both `[n×k]` histories to width `d` and fuses them: `[n×d]`.
pub fn embed_flows(
    tape: &mut Tape,
    history_in: Var,
    history_out: Var,
    p: &EmbeddingParams<Var>,
) -> Result<Var, ModelError> {
    let k = tape.shape(p.w1)[0];
    expect_width(tape, history_in, k, "inflow history")?;
    expect_width(tape, history_out, k, "outflow history")?;
    if tape.shape(history_in) != tape.shape(history_out) {
        return Err(ModelError::Shape("inflow and outflow histories differ".into()));
    }
    let f_in = tape.matmul(history_in, p.w1)?;
    let f_in = tape.add(f_in, p.b1)?;
    let f_out = tape.matmul(history_out, p.w2)?;
    let f_out = tape.add(f_out, p.b2)?;
    let both = tape.concat(&[f_in, f_out])?;
    let fused = tape.matmul(both, p.w3)?;
    Ok(tape.add(fused, p.b3)?)
}

/// Region vector for one region: row `i` of the region table plus its bias, `[1×d]`.
pub fn embed_spatial(tape: &mut Tape, i: usize, p: &EmbeddingParams<Var>) -> Result<Var, ModelError> {
    let regions = tape.shape(p.w4)[0];
    if i >= regions {
        return Err(ModelError::RegionOutOfRange { index: i, regions });
    }
    let row = tape.gather_rows(p.w4, &[i])?;
    Ok(tape.add(row, p.b4)?)
}

/// Region vectors for every region in index order, `[n×d]`.
pub fn embed_spatial_all(tape: &mut Tape, p: &EmbeddingParams<Var>) -> Result<Var, ModelError> {
    Ok(tape.add(p.w4, p.b4)?)
}

/// One-hot position for slot `t`. With a week-sized vocabulary this is the
/// slot of the week; otherwise `t mod time_vocab`.
pub fn time_of_week_index(t: usize, meta: &DatasetMeta, time_vocab: usize) -> usize {
    if time_vocab == meta.slots_per_week() {
        meta.slot_of_week(t)
    } else {
        t % time_vocab
    }
}

/// Time vector for slot `t`, `[1×d]`.
pub fn embed_temporal(
    tape: &mut Tape,
    t: usize,
    meta: &DatasetMeta,
    p: &EmbeddingParams<Var>,
) -> Result<Var, ModelError> {
    let vocab = tape.shape(p.w5)[0];
    let row = tape.gather_rows(p.w5, &[time_of_week_index(t, meta, vocab)])?;
    Ok(tape.add(row, p.b5)?)
}

/// `(flows + regions + time)·W6 + b6`, the time row broadcast over regions.
pub fn fuse_region(
    tape: &mut Tape,
    flows: Var,
    spatial: Var,
    temporal: Var,
    p: &EmbeddingParams<Var>,
) -> Result<Var, ModelError> {
    let d = tape.shape(p.w6)[0];
    expect_width(tape, flows, d, "flow embedding")?;
    expect_width(tape, spatial, d, "spatial embedding")?;
    expect_width(tape, temporal, d, "temporal embedding")?;
    let sum = tape.add(flows, spatial)?;
    let sum = tape.add(sum, temporal)?;
    let out = tape.matmul(sum, p.w6)?;
    Ok(tape.add(out, p.b6)?)
}

/// Scaled query·key products between every pair of regions, `[n×n]`.
pub fn attention_scores(
    tape: &mut Tape,
    x: Var,
    head: &HeadParams<Var>,
    scale: Real,
) -> Result<Var, ModelError> {
    let q = tape.matmul(x, head.w_q)?;
    let k = tape.matmul(x, head.w_k)?;
    let raw = tape.matmul_bt(q, k)?;
    Ok(tape.scale(raw, 1.0 / scale)?)
}

/// Normalizes scores row-wise and mixes the unprojected region embeddings.
/// Returns `(weights, output)`; `weights` is taken before dropout.
pub fn attention_aggregate(
    tape: &mut Tape,
    scores: Var,
    x: Var,
    normalization: AttentionNormalization,
    dropout: Real,
    mode: &mut Mode<'_>,
) -> Result<(Var, Var), ModelError> {
    let weights = match normalization {
        AttentionNormalization::Softmax => tape.softmax_rows(scores)?,
        AttentionNormalization::RawNumerator => tape.exp_normalize_rows(scores)?,
    };
    let dropped = mode.dropout(tape, weights, dropout)?;
    let out = tape.matmul(dropped, x)?;
    Ok((weights, out))
}

/// Concatenates head outputs along features and applies `W7`.
pub fn multi_head_combine(tape: &mut Tape, heads: &[Var], w7: Var) -> Result<Var, ModelError> {
    let Some(first) = heads.first() else {
        return Err(ModelError::Shape("no head outputs".into()));
    };
    let shape = tape.shape(*first).to_vec();
    if heads.iter().any(|h| tape.shape(*h) != shape.as_slice()) {
        return Err(ModelError::Shape("head outputs differ in shape".into()));
    }
    let cat = tape.concat(heads)?;
    Ok(tape.matmul(cat, w7)?)
}

/// Attention then feed-forward, each as `layer_norm(x + dropout(sublayer(x)))`.
pub fn encoder_block(
    tape: &mut Tape,
    x: Var,
    p: &BlockParams<Var>,
    hp: &HyperParams,
    mode: &mut Mode<'_>,
) -> Result<Var, ModelError> {
    let scale = hp.score_scale();
    let mut heads = Vec::with_capacity(p.heads.len());
    for head in &p.heads {
        let scores = attention_scores(tape, x, head, scale)?;
        let (_, out) =
            attention_aggregate(tape, scores, x, hp.attention_normalization, hp.dropout, mode)?;
        heads.push(out);
    }
    let att = multi_head_combine(tape, &heads, p.w7)?;
    let att = mode.dropout(tape, att, hp.dropout)?;
    let res = tape.add(x, att)?;
    let x1 = tape.layer_norm(res, p.ln1_gamma, p.ln1_beta, LAYER_NORM_EPS)?;

    let h = tape.matmul(x1, p.ff_w1)?;
    let h = tape.add(h, p.ff_b1)?;
    let h = tape.relu(h)?;
    let ff = tape.matmul(h, p.ff_w2)?;
    let ff = tape.add(ff, p.ff_b2)?;
    let ff = mode.dropout(tape, ff, hp.dropout)?;
    let res = tape.add(x1, ff)?;
    Ok(tape.layer_norm(res, p.ln2_gamma, p.ln2_beta, LAYER_NORM_EPS)?)
}

/// Two-layer head; column 0 is next-slot inflow, column 1 outflow. `[n×2]`.
pub fn forecast(tape: &mut Tape, x: Var, p: &ForecastParams<Var>) -> Result<Var, ModelError> {
    let h = tape.matmul(x, p.w_p1)?;
    let h = tape.add(h, p.b_p1)?;
    let h = tape.relu(h)?;
    let out = tape.matmul(h, p.w_p2)?;
    Ok(tape.add(out, p.b_p2)?)
}
