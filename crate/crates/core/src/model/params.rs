use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{HyperParams, ModelError};
use crate::numerics::{Real, Tensor};

/// Region embedding weights. Matrices are stored `[fan_in × fan_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingParams<T> {
    /// Inflow history `[k × d]`.
    pub w1: T,
    pub b1: T,
    /// Outflow history `[k × d]`.
    pub w2: T,
    pub b2: T,
    /// Flow correlation `[2d × d]`.
    pub w3: T,
    pub b3: T,
    /// Region table `[n × d]`.
    pub w4: T,
    pub b4: T,
    /// Time table `[time_vocab × d]`.
    pub w5: T,
    pub b5: T,
    /// Fusion `[d × d]`.
    pub w6: T,
    pub b6: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams<T> {
    pub w_q: T,
    pub w_k: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams<T> {
    pub heads: Vec<HeadParams<T>>,
    /// Head fusion `[heads·d × d]`, no bias.
    pub w7: T,
    pub ff_w1: T,
    pub ff_b1: T,
    pub ff_w2: T,
    pub ff_b2: T,
    pub ln1_gamma: T,
    pub ln1_beta: T,
    pub ln2_gamma: T,
    pub ln2_beta: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastParams<T> {
    pub w_p1: T,
    pub b_p1: T,
    /// `[d × 2]`: column 0 inflow, column 1 outflow.
    pub w_p2: T,
    pub b_p2: T,
}

/// Every learnable array of the network. `T` is `Tensor` for stored weights,
/// `Var` once registered on a tape, `Vec<Real>` for gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T = Tensor> {
    pub embedding: EmbeddingParams<T>,
    pub blocks: Vec<BlockParams<T>>,
    pub forecast: ForecastParams<T>,
}

impl<T> ModelParams<T> {
    /// Structure-preserving map; `f` receives each entry's dotted name.
    pub fn map<U>(&self, mut f: impl FnMut(&str, &T) -> U) -> ModelParams<U> {
        let e = &self.embedding;
        let embedding = EmbeddingParams {
            w1: f("embedding.w1", &e.w1),
            b1: f("embedding.b1", &e.b1),
            w2: f("embedding.w2", &e.w2),
            b2: f("embedding.b2", &e.b2),
            w3: f("embedding.w3", &e.w3),
            b3: f("embedding.b3", &e.b3),
            w4: f("embedding.w4", &e.w4),
            b4: f("embedding.b4", &e.b4),
            w5: f("embedding.w5", &e.w5),
            b5: f("embedding.b5", &e.b5),
            w6: f("embedding.w6", &e.w6),
            b6: f("embedding.b6", &e.b6),
        };
        let blocks = self
            .blocks
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let mut g = |name: &str, t: &T| f(&format!("blocks.{i}.{name}"), t);
                BlockParams {
                    heads: b
                        .heads
                        .iter()
                        .enumerate()
                        .map(|(m, h)| HeadParams {
                            w_q: g(&format!("heads.{m}.w_q"), &h.w_q),
                            w_k: g(&format!("heads.{m}.w_k"), &h.w_k),
                        })
                        .collect(),
                    w7: g("w7", &b.w7),
                    ff_w1: g("ff_w1", &b.ff_w1),
                    ff_b1: g("ff_b1", &b.ff_b1),
                    ff_w2: g("ff_w2", &b.ff_w2),
                    ff_b2: g("ff_b2", &b.ff_b2),
                    ln1_gamma: g("ln1_gamma", &b.ln1_gamma),
                    ln1_beta: g("ln1_beta", &b.ln1_beta),
                    ln2_gamma: g("ln2_gamma", &b.ln2_gamma),
                    ln2_beta: g("ln2_beta", &b.ln2_beta),
                }
            })
            .collect();
        let p = &self.forecast;
        let forecast = ForecastParams {
            w_p1: f("forecast.w_p1", &p.w_p1),
            b_p1: f("forecast.b_p1", &p.b_p1),
            w_p2: f("forecast.w_p2", &p.w_p2),
            b_p2: f("forecast.b_p2", &p.b_p2),
        };
        ModelParams {
            embedding,
            blocks,
            forecast,
        }
    }

    /// Dotted names in traversal order.
    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.map(|name, _| out.push(name.to_string()));
        out
    }

    /// Entries in traversal order (the same order as [`ModelParams::map`]).
    pub fn entries(&self) -> Vec<&T> {
        let e = &self.embedding;
        let mut out = vec![
            &e.w1, &e.b1, &e.w2, &e.b2, &e.w3, &e.b3, &e.w4, &e.b4, &e.w5, &e.b5, &e.w6, &e.b6,
        ];
        for b in &self.blocks {
            for h in &b.heads {
                out.push(&h.w_q);
                out.push(&h.w_k);
            }
            out.extend([
                &b.w7,
                &b.ff_w1,
                &b.ff_b1,
                &b.ff_w2,
                &b.ff_b2,
                &b.ln1_gamma,
                &b.ln1_beta,
                &b.ln2_gamma,
                &b.ln2_beta,
            ]);
        }
        let p = &self.forecast;
        out.extend([&p.w_p1, &p.b_p1, &p.w_p2, &p.b_p2]);
        out
    }

    /// Same structure as `self`, filled from `values` in traversal order.
    pub fn rebuild<U: Clone>(&self, values: &[U]) -> ModelParams<U> {
        let mut it = values.iter();
        self.map(|name, _| it.next().unwrap_or_else(|| panic!("no value for {name}")).clone())
    }

    pub fn entries_mut(&mut self) -> Vec<&mut T> {
        let e = &mut self.embedding;
        let mut out = vec![
            &mut e.w1, &mut e.b1, &mut e.w2, &mut e.b2, &mut e.w3, &mut e.b3, &mut e.w4,
            &mut e.b4, &mut e.w5, &mut e.b5, &mut e.w6, &mut e.b6,
        ];
        for b in &mut self.blocks {
            for h in &mut b.heads {
                out.push(&mut h.w_q);
                out.push(&mut h.w_k);
            }
            out.extend([
                &mut b.w7,
                &mut b.ff_w1,
                &mut b.ff_b1,
                &mut b.ff_w2,
                &mut b.ff_b2,
                &mut b.ln1_gamma,
                &mut b.ln1_beta,
                &mut b.ln2_gamma,
                &mut b.ln2_beta,
            ]);
        }
        let p = &mut self.forecast;
        out.extend([&mut p.w_p1, &mut p.b_p1, &mut p.w_p2, &mut p.b_p2]);
        out
    }
}

impl ModelParams<Tensor> {
    pub fn zeros_like(&self) -> ModelParams<Vec<Real>> {
        self.map(|_, t| vec![0.0; t.len()])
    }

    pub fn count(&self) -> usize {
        self.entries().iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.entries().iter().all(|t| t.all_finite())
    }

    pub fn bitwise_eq(&self, other: &Self) -> bool {
        let (a, b) = (self.entries(), other.entries());
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.bitwise_eq(y))
    }

    /// Checks every array against the shapes `hp` declares.
    pub fn check_shapes(&self, hp: &HyperParams) -> Result<(), ModelError> {
        let expected = param_shapes(hp);
        if expected.blocks.len() != self.blocks.len()
            || expected
                .blocks
                .iter()
                .zip(&self.blocks)
                .any(|(e, b)| e.heads.len() != b.heads.len())
        {
            return Err(ModelError::Shape("block or head count differs".into()));
        }
        let names = self.names();
        for ((name, have), want) in names.iter().zip(self.entries()).zip(expected.entries()) {
            if have.shape() != want.as_slice() {
                return Err(ModelError::Shape(format!(
                    "{name}: expected {want:?}, got {:?}",
                    have.shape()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum Init {
    Weight,
    Zero,
    One,
}

/// Declared shape of every array for `hp`, without allocating any weights.
pub fn param_shapes(hp: &HyperParams) -> ModelParams<Vec<usize>> {
    let (d, k, n, v, ff, hd) = (hp.d, hp.k, hp.n_regions, hp.time_vocab, hp.ff_dim, hp.head_dim());
    ModelParams {
        embedding: EmbeddingParams {
            w1: vec![k, d],
            b1: vec![d],
            w2: vec![k, d],
            b2: vec![d],
            w3: vec![2 * d, d],
            b3: vec![d],
            w4: vec![n, d],
            b4: vec![d],
            w5: vec![v, d],
            b5: vec![d],
            w6: vec![d, d],
            b6: vec![d],
        },
        blocks: (0..hp.n_blocks)
            .map(|_| BlockParams {
                heads: (0..hp.heads)
                    .map(|_| HeadParams {
                        w_q: vec![d, hd],
                        w_k: vec![d, hd],
                    })
                    .collect(),
                w7: vec![hp.heads * d, d],
                ff_w1: vec![d, ff],
                ff_b1: vec![ff],
                ff_w2: vec![ff, d],
                ff_b2: vec![d],
                ln1_gamma: vec![d],
                ln1_beta: vec![d],
                ln2_gamma: vec![d],
                ln2_beta: vec![d],
            })
            .collect(),
        forecast: ForecastParams {
            w_p1: vec![d, d],
            b_p1: vec![d],
            w_p2: vec![d, 2],
            b_p2: vec![2],
        },
    }
}

fn init_kind(name: &str) -> Init {
    let leaf = name.rsplit('.').next().unwrap_or(name);
    if leaf.ends_with("gamma") {
        Init::One
    } else if leaf.starts_with('w') || leaf.starts_with("ff_w") {
        Init::Weight
    } else {
        Init::Zero
    }
}

/// Glorot-uniform weights in `±sqrt(6/(fan_in+fan_out))`, zero biases, unit
/// layer-norm gains. Weights are drawn in traversal order from one seeded stream.
pub fn init_params(hp: &HyperParams, seed: u64) -> Result<ModelParams, ModelError> {
    hp.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let template = param_shapes(hp);
    Ok(template.map(|name, shape| {
        let len: usize = shape.iter().product();
        let data = match init_kind(name) {
            Init::Zero => vec![0.0; len],
            Init::One => vec![1.0; len],
            Init::Weight => {
                let limit = (6.0 / (shape[0] + shape[1]) as Real).sqrt();
                (0..len).map(|_| rng.random_range(-limit..limit)).collect()
            }
        };
        Tensor::new(shape.clone(), data).expect("template shapes are positive")
    }))
}
