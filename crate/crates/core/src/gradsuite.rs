//! Finite-difference verification of every differentiable operation and of
//! each model variant at the tiny profile, over several seeds.

use std::fmt;
use std::time::Instant;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{Experiment, Model, ModelProfile};
use crate::numerics::{grad_check, lstm, Graph, GradCheckReport, LstmParams, Tensor, Var};

pub const OP_TOLERANCE: f64 = 1e-5;
pub const MODEL_TOLERANCE: f64 = 1e-4;

/// Worst relative error of one check over all seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteRow {
    pub name: String,
    pub seeds: usize,
    pub worst: f64,
    pub tolerance: f64,
    pub seconds: f64,
}

impl SuiteRow {
    pub fn passed(&self) -> bool {
        self.worst <= self.tolerance
    }
}

impl fmt::Display for SuiteRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<16} seeds={:<3} max_rel_error={:.3e} tolerance={:.0e} time={:.1}s {}",
            self.name,
            self.seeds,
            self.worst,
            self.tolerance,
            self.seconds,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Values in `[-1, -0.05] ∪ [0.05, 1]`, clear of the LeakyReLU kink.
fn off_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let m = rng.random_range(0.05..1.0);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

/// `sum(out * w)` for a fixed random `w`, so every output element gets a distinct weight.
fn project(g: &mut Graph, out: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let w = g.constant(random(g.shape(out), &mut rng));
    let y = g.mul(out, w)?;
    Ok(g.sum(y))
}

type Case = Box<dyn Fn(u64) -> Result<GradCheckReport>>;

fn op_cases() -> Vec<(&'static str, Case)> {
    let mut cases: Vec<(&'static str, Case)> = Vec::new();
    cases.push((
        "conv2d",
        Box::new(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inputs = [random(&[1, 2, 6, 6], &mut rng), random(&[3, 2, 3, 3], &mut rng), random(&[3], &mut rng)];
            grad_check(|g, v| { let y = g.conv2d(v[0], v[1], v[2], (1, 1))?; project(g, y, seed) }, &inputs, OP_TOLERANCE)
        }),
    ));
    cases.push((
        "conv2d_strided",
        Box::new(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inputs = [random(&[2, 1, 7, 5], &mut rng), random(&[2, 1, 3, 2], &mut rng), random(&[2], &mut rng)];
            grad_check(|g, v| { let y = g.conv2d(v[0], v[1], v[2], (2, 1))?; project(g, y, seed) }, &inputs, OP_TOLERANCE)
        }),
    ));
    cases.push((
        "maxpool2d",
        Box::new(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inputs = [random(&[2, 2, 6, 5], &mut rng)];
            grad_check(|g, v| { let y = g.maxpool2d(v[0], (2, 1), (2, 1))?; project(g, y, seed) }, &inputs, OP_TOLERANCE)
        }),
    ));
    cases.push((
        "linear",
        Box::new(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inputs = [random(&[3, 4], &mut rng), random(&[2, 4], &mut rng), random(&[2], &mut rng)];
            grad_check(|g, v| { let y = g.linear(v[0], v[1], Some(v[2]))?; project(g, y, seed) }, &inputs, OP_TOLERANCE)
        }),
    ));
    cases.push((
        "leaky_relu",
        Box::new(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inputs = [off_zero(&[4, 5], &mut rng)];
            grad_check(|g, v| { let y = g.leaky_relu(v[0], 0.01); project(g, y, seed) }, &inputs, OP_TOLERANCE)
        }),
    ));
    cases.push((
        "sigmoid_tanh",
        Box::new(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inputs = [random(&[3, 3], &mut rng), random(&[3, 3], &mut rng)];
            grad_check(
                |g, v| {
                    let a = g.sigmoid(v[0]);
                    let b = g.tanh(v[1]);
                    let y = g.mul(a, b)?;
                    let y = g.add(y, a)?;
                    project(g, y, seed)
                },
                &inputs,
                OP_TOLERANCE,
            )
        }),
    ));
    cases.push((
        "lstm",
        Box::new(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inputs = [
                random(&[1, 2, 3], &mut rng),
                random(&[8, 3], &mut rng),
                random(&[8, 2], &mut rng),
                random(&[8], &mut rng),
                random(&[8], &mut rng),
            ];
            grad_check(
                |g, v| {
                    let p = LstmParams { w_ih: v[1], w_hh: v[2], b_ih: v[3], b_hh: v[4] };
                    let out = lstm(g, v[0], &p, None, None)?;
                    Ok(g.sum(out.last_hidden))
                },
                &inputs,
                OP_TOLERANCE,
            )
        }),
    ));
    cases.push((
        "log_softmax",
        Box::new(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inputs = [random(&[3, 4], &mut rng)];
            grad_check(|g, v| { let y = g.log_softmax(v[0])?; project(g, y, seed) }, &inputs, OP_TOLERANCE)
        }),
    ));
    cases.push((
        "nll_loss",
        Box::new(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inputs = [random(&[4, 3], &mut rng)];
            let targets: Vec<usize> = (0..4).map(|_| rng.random_range(0..3)).collect();
            grad_check(
                move |g, v| {
                    let lp = g.log_softmax(v[0])?;
                    g.nll_loss(lp, &targets)
                },
                &inputs,
                OP_TOLERANCE,
            )
        }),
    ));
    cases.push((
        "concat",
        Box::new(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inputs = [random(&[2, 3], &mut rng), random(&[2, 2], &mut rng)];
            grad_check(|g, v| { let y = g.concat(&[v[0], v[1]], 1)?; project(g, y, seed) }, &inputs, OP_TOLERANCE)
        }),
    ));
    cases.push((
        "repeat",
        Box::new(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inputs = [random(&[2, 3], &mut rng)];
            grad_check(|g, v| { let y = g.repeat(v[0], 4, 1)?; project(g, y, seed) }, &inputs, OP_TOLERANCE)
        }),
    ));
    cases.push((
        "slice_reshape",
        Box::new(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inputs = [random(&[2, 3, 4], &mut rng)];
            grad_check(
                |g, v| {
                    let y = g.slice(v[0], 2, 1, 2)?;
                    let y = g.reshape(y, &[3, 4])?;
                    project(g, y, seed)
                },
                &inputs,
                OP_TOLERANCE,
            )
        }),
    ));
    cases
}

/// Whole-model check: gradient of the batch loss with respect to every parameter.
pub fn check_model(experiment: Experiment, seed: u64) -> Result<GradCheckReport> {
    let profile = ModelProfile::tiny();
    let model = Model::new(experiment, &profile, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let r = profile.face_resolution;
    let sequences = 1;
    let faces = Tensor::from_fn(&[sequences * 10, 3, r, r], |_| rng.random());
    let poses = Tensor::from_fn(&[sequences * 10, 1, 18, 3], |_| rng.random_range(-1.0..1.0));
    let labels: Vec<usize> = (0..sequences).map(|_| rng.random_range(0..model.class_count())).collect();
    grad_check(
        |g, params| {
            let f = g.constant(faces.clone());
            let q = g.constant(poses.clone());
            let out = model.forward(g, params, f, q)?;
            g.nll_loss(out, &labels)
        },
        &model.params.values(),
        MODEL_TOLERANCE,
    )
}

fn row(name: &str, tolerance: f64, seeds: usize, case: impl Fn(u64) -> Result<GradCheckReport>) -> Result<SuiteRow> {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..seeds as u64 {
        worst = worst.max(case(seed)?.worst());
    }
    Ok(SuiteRow { name: name.to_string(), seeds, worst, tolerance, seconds: start.elapsed().as_secs_f64() })
}

/// Every operation, then (with `models`) every experiment's model, each over `seeds` seeds.
pub fn gradient_suite(seeds: usize, models: bool) -> Result<Vec<SuiteRow>> {
    let mut rows = Vec::new();
    for (name, case) in op_cases() {
        rows.push(row(name, OP_TOLERANCE, seeds, case)?);
    }
    if models {
        for e in Experiment::ALL {
            rows.push(row(&format!("model_{e}"), MODEL_TOLERANCE, seeds, |s| check_model(e, s))?);
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn operations_pass() {
        for r in gradient_suite(2, false).unwrap() {
            assert!(r.passed(), "{r}");
        }
    }
}
