//! Finite-difference verification of every op and of the full parser loss.

use dsembed_core::conllu::ModelInput;
use dsembed_core::encoder::EncoderConfig;
use dsembed_core::model::gradcheck_point;
use dsembed_core::tensor::gradient_check;
use dsembed_core::{InjectionMode, ModelConfig, ParserModel, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub seed: u64,
    pub max_relative_error: f64,
    pub coordinates: usize,
}

impl CheckLine {
    pub fn passed(&self) -> bool {
        self.max_relative_error <= TOLERANCE
    }
}

fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn param(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::parameter(shape, random(rng, shape.iter().product())).expect("shape matches data")
}

/// Entries at least 0.1 away from the ReLU kink.
fn param_off_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let data = (0..shape.iter().product())
        .map(|_| {
            let v: f64 = rng.random_range(0.1..1.0);
            if rng.random_bool(0.5) { v } else { -v }
        })
        .collect();
    Tensor::parameter(shape, data).expect("shape matches data")
}

fn weighted_sum(t: &Tensor, weights: &[f64]) -> dsembed_core::Result<Tensor> {
    Ok(t.mul_const(weights.to_vec())?.sum())
}

fn line<F>(out: &mut Vec<CheckLine>, name: &str, seed: u64, f: F, params: &[Tensor]) -> Result<()>
where
    F: FnMut() -> dsembed_core::Result<Tensor>,
{
    let r = gradient_check(f, params)?;
    out.push(CheckLine {
        name: name.to_string(),
        seed,
        max_relative_error: r.max_relative_error,
        coordinates: r.coordinates,
    });
    Ok(())
}

/// Every differentiable op, each reduced to a scalar by a random weighting.
pub fn check_ops(seed: u64) -> Result<Vec<CheckLine>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let a = param(&mut rng, &[3, 4]);
    let b = param(&mut rng, &[4, 2]);
    let w6 = random(&mut rng, 6);
    line(&mut out, "matmul", seed, || weighted_sum(&a.matmul(&b)?, &w6), &[a.clone(), b.clone()])?;
    let w12 = random(&mut rng, 12);
    let v = param(&mut rng, &[4]);
    line(&mut out, "add_broadcast", seed, || weighted_sum(&a.add_broadcast(&v)?, &w12), &[a.clone(), v.clone()])?;
    let a2 = param(&mut rng, &[3, 4]);
    line(&mut out, "mul", seed, || weighted_sum(&a.mul(&a2)?, &w12), &[a.clone(), a2.clone()])?;
    line(&mut out, "transpose", seed, || weighted_sum(&a.transpose()?, &w12), std::slice::from_ref(&a))?;
    line(&mut out, "reshape", seed, || weighted_sum(&a.reshape(&[2, 6])?, &w12), std::slice::from_ref(&a))?;
    line(&mut out, "scale", seed, || weighted_sum(&a.scale(-2.5), &w12), std::slice::from_ref(&a))?;
    line(&mut out, "mean", seed, || Ok(a.mul(&a)?.mean()), std::slice::from_ref(&a))?;
    let r = param_off_zero(&mut rng, &[3, 4]);
    line(&mut out, "relu", seed, || weighted_sum(&r.relu(), &w12), std::slice::from_ref(&r))?;
    line(&mut out, "gelu", seed, || weighted_sum(&a.gelu(), &w12), std::slice::from_ref(&a))?;
    let mask: Vec<f64> = (0..12).map(|i| if i % 3 == 0 { 0.0 } else { 1.25 }).collect();
    line(&mut out, "dropout", seed, || weighted_sum(&a.mul_const(mask.clone())?, &w12), std::slice::from_ref(&a))?;
    let c = param(&mut rng, &[3, 2]);
    let w18 = random(&mut rng, 18);
    line(&mut out, "concat_last", seed, || weighted_sum(&a.concat_last(&c)?, &w18), &[a.clone(), c.clone()])?;
    let d = param(&mut rng, &[2, 4]);
    let w20 = random(&mut rng, 20);
    line(
        &mut out,
        "concat_rows",
        seed,
        || weighted_sum(&Tensor::concat_rows(&[a.clone(), d.clone()])?, &w20),
        &[a.clone(), d.clone()],
    )?;
    let w3x2 = random(&mut rng, 6);
    line(&mut out, "slice_last", seed, || weighted_sum(&a.slice_last(1, 2)?, &w3x2), std::slice::from_ref(&a))?;
    line(&mut out, "softmax_rows", seed, || weighted_sum(&a.scale(3.0).softmax_rows(None)?, &w12), std::slice::from_ref(&a))?;
    let valid: Vec<bool> = (0..12).map(|i| i % 4 != 1).collect();
    line(
        &mut out,
        "masked softmax_rows",
        seed,
        || weighted_sum(&a.softmax_rows(Some(&valid))?, &w12),
        std::slice::from_ref(&a),
    )?;
    let g = param(&mut rng, &[4]);
    let bias = param(&mut rng, &[4]);
    line(
        &mut out,
        "layer_norm",
        seed,
        || weighted_sum(&a.layer_norm(&g, &bias, 1e-12)?, &w12),
        &[a.clone(), g.clone(), bias.clone()],
    )?;
    let table = param(&mut rng, &[5, 3]);
    let w12b = random(&mut rng, 12);
    line(
        &mut out,
        "embedding_lookup",
        seed,
        || weighted_sum(&table.embedding_lookup(&[4, 0, 4, 2])?, &w12b),
        std::slice::from_ref(&table),
    )?;
    line(&mut out, "cross_entropy", seed, || a.scale(2.0).cross_entropy(&[3, 0, 1]), std::slice::from_ref(&a))?;
    let left = param(&mut rng, &[3, 2]);
    let weight = param(&mut rng, &[4, 2, 3]);
    let right = param(&mut rng, &[3, 3]);
    line(
        &mut out,
        "bilinear_pairs",
        seed,
        || weighted_sum(&Tensor::bilinear_pairs(&left, &weight, &right)?, &w12),
        &[left.clone(), weight.clone(), right.clone()],
    )?;
    Ok(out)
}

/// The small parser used for the full-loss check.
pub fn check_model(mode: InjectionMode, seed: u64) -> Result<ParserModel> {
    let encoder = EncoderConfig {
        d_model: 8,
        n_layers: 2,
        n_heads: 2,
        d_ff: 12,
        max_len: 12,
        dropout: 0.1,
    };
    let mut config = ModelConfig::new(encoder, mode, 9, 3, 2);
    config.d_arc = 5;
    config.d_label = 4;
    Ok(ParserModel::new(config, seed)?)
}

/// A labeled three-word sentence from the second dataset.
pub fn three_token_input() -> ModelInput {
    ModelInput {
        word_ids: vec![2, 4, 5, 6],
        positions: vec![0, 1, 2, 3],
        segments: vec![0; 4],
        dataset_id: 1,
        heads: vec![2, 0, 2],
        labels: vec![1, 0, 2],
    }
}

/// Full parser loss (embeddings through both cross-entropies, dropout off)
/// with respect to every parameter, at a well-conditioned random point.
pub fn check_full_loss(mode: InjectionMode, seed: u64) -> Result<CheckLine> {
    let model = check_model(mode, seed)?;
    let input = three_token_input();
    let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
    gradcheck_point(&model, &input, &mut rng, 0.3, 10_000)?;
    let params = model.trainable_parameters();
    let r = gradient_check(|| model.loss(&input, None), &params)?;
    Ok(CheckLine {
        name: format!("parser loss ({mode})"),
        seed,
        max_relative_error: r.max_relative_error,
        coordinates: r.coordinates,
    })
}

/// Ops and the full loss in every injection mode, for each seed.
pub fn run_suite(seeds: &[u64]) -> Result<Vec<CheckLine>> {
    let mut out = Vec::new();
    for &seed in seeds {
        out.extend(check_ops(seed)?);
        for mode in InjectionMode::ALL {
            out.push(check_full_loss(mode, seed)?);
        }
    }
    Ok(out)
}
