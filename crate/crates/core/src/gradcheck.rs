//! Finite-difference gradient verification.
//!
//! Every differentiable op gets a family of randomized check cases: build a
//! scalar loss from leaf inputs, backprop, then compare each analytic partial
//! against a central finite difference computed in `f64`. Ops whose backward
//! rule intentionally disagrees with the forward function (`stop_gradient`,
//! `grad_reverse`) are checked against hand-derived expected gradients
//! instead, since finite differences can only see the forward value.
//!
//! Relative error uses an absolute floor: `|a−n| / max(|a|,|n|,0.01)`, so
//! near-zero gradients (dead relu units, padding) are compared absolutely at
//! `tol × 0.01` precision instead of dividing noise by noise.

use crate::error::Result;
use crate::rng::{stream_rng, Stream};
use crate::tensor::{Graph, Padding, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Central-difference step (in 64-bit).
pub const FD_STEP: f64 = 1e-3;
/// Pass threshold on the relative error.
pub const REL_TOL: f64 = 1e-4;
/// Absolute floor in the relative-error denominator.
const ERR_FLOOR: f64 = 1e-2;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ERR_FLOOR)
}

type Build = Box<dyn Fn(&mut Graph<f64>, &[Tensor]) -> Result<Tensor>>;
type OracleGrads = Box<dyn Fn(&[(Vec<usize>, Vec<f64>)]) -> Vec<Vec<f64>>>;

/// One randomized check: differentiable leaf inputs plus a loss builder.
struct Case {
    inputs: Vec<(Vec<usize>, Vec<f64>)>,
    build: Build,
    /// When set, analytic gradients are compared against these hand-derived
    /// values rather than finite differences.
    oracle: Option<OracleGrads>,
}

/// Outcome for one op kind across all its cases.
#[derive(Debug, Clone)]
pub struct OpReport {
    pub op: String,
    pub cases: usize,
    pub max_rel_err: f64,
    pub pass: bool,
}

/// All op kinds covered by the suite, in run order.
pub const SUITE_OPS: &[&str] = &[
    "add",
    "sub",
    "mul",
    "scalar_mul",
    "add_bias",
    "matmul",
    "conv2d_valid",
    "conv2d_same",
    "max_pool2",
    "relu",
    "tanh",
    "exp",
    "reshape",
    "sum",
    "mean",
    "log_softmax",
    "concat",
    "nll_loss",
    "kl_consistency",
    "entropy_min",
    "stop_gradient",
    "grad_reverse",
    "affine_grid",
    "bilinear_sample",
    "stn_composite",
    "network_composite",
];

fn eval(case: &Case, datas: &[Vec<f64>]) -> Result<f64> {
    let mut g = Graph::<f64>::new();
    let mut leaves = Vec::with_capacity(case.inputs.len());
    for ((shape, _), data) in case.inputs.iter().zip(datas) {
        leaves.push(g.leaf(data.clone(), shape, false)?);
    }
    let loss = (case.build)(&mut g, &leaves)?;
    Ok(g.value(loss))
}

/// Run one case; returns its max relative error. `perturb` simulates a broken
/// backward rule (fault-injection fixture for the harness's own sensitivity).
fn check_case(case: &Case, perturb: bool) -> Result<f64> {
    let mut analytic: Vec<Vec<f64>> = {
        let mut g = Graph::<f64>::new();
        let mut leaves = Vec::with_capacity(case.inputs.len());
        for (shape, data) in &case.inputs {
            leaves.push(g.leaf(data.clone(), shape, true)?);
        }
        let loss = (case.build)(&mut g, &leaves)?;
        g.backward(loss)?;
        leaves.iter().map(|&t| g.grad(t).unwrap().to_vec()).collect()
    };
    if perturb {
        analytic[0][0] = analytic[0][0] * 1.5 + 0.05;
    }
    let mut max_err = 0.0f64;
    if let Some(oracle) = &case.oracle {
        let expected = oracle(&case.inputs);
        for (a_buf, e_buf) in analytic.iter().zip(&expected) {
            for (&a, &e) in a_buf.iter().zip(e_buf) {
                max_err = max_err.max(rel_err(a, e));
            }
        }
        return Ok(max_err);
    }
    let mut datas: Vec<Vec<f64>> = case.inputs.iter().map(|(_, d)| d.clone()).collect();
    for i in 0..case.inputs.len() {
        for e in 0..datas[i].len() {
            let orig = datas[i][e];
            datas[i][e] = orig + FD_STEP;
            let lp = eval(case, &datas)?;
            datas[i][e] = orig - FD_STEP;
            let lm = eval(case, &datas)?;
            datas[i][e] = orig;
            let numeric = (lp - lm) / (2.0 * FD_STEP);
            max_err = max_err.max(rel_err(analytic[i][e], numeric));
        }
    }
    Ok(max_err)
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen::<f64>() * (hi - lo) + lo).collect()
}

/// Values pairwise separated by ≥ 0.03 (≫ 2·FD_STEP) so max-style kinks are
/// never crossed by the probe.
fn separated(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut levels: Vec<f64> = (0..n)
        .map(|i| i as f64 * 0.05 + rng.gen::<f64>() * 0.02 - 0.01)
        .collect();
    // Fisher–Yates
    for i in (1..levels.len()).rev() {
        let j = rng.gen_range(0..=i);
        levels.swap(i, j);
    }
    levels
}

/// Values bounded away from zero so the relu kink is never crossed.
fn off_zero(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let mag = 0.05 + rng.gen::<f64>() * 0.95;
            if rng.gen::<bool>() {
                mag
            } else {
                -mag
            }
        })
        .collect()
}

fn dims2(rng: &mut ChaCha8Rng) -> Vec<usize> {
    vec![rng.gen_range(1..=4), rng.gen_range(1..=4)]
}

fn make_case(op: &str, rng: &mut ChaCha8Rng) -> Case {
    match op {
        "add" | "sub" | "mul" => {
            let shape = dims2(rng);
            let n = shape.iter().product();
            let a = uniform(rng, n, -1.0, 1.0);
            let b = uniform(rng, n, -1.0, 1.0);
            let c = uniform(rng, n, -1.0, 1.0);
            let shape2 = shape.clone();
            let kind = op.to_string();
            Case {
                inputs: vec![(shape.clone(), a), (shape, b)],
                build: Box::new(move |g, t| {
                    let y = match kind.as_str() {
                        "add" => g.add(t[0], t[1])?,
                        "sub" => g.sub(t[0], t[1])?,
                        _ => g.mul(t[0], t[1])?,
                    };
                    let cc = g.constant(c.clone(), &shape2)?;
                    let p = g.mul(y, cc)?;
                    g.sum(p)
                }),
                oracle: None,
            }
        }
        "scalar_mul" => {
            let shape = dims2(rng);
            let n = shape.iter().product();
            let a = uniform(rng, n, -1.0, 1.0);
            let c = uniform(rng, n, -1.0, 1.0);
            let k = rng.gen::<f64>() * 3.0 - 1.5;
            let shape2 = shape.clone();
            Case {
                inputs: vec![(shape, a)],
                build: Box::new(move |g, t| {
                    let y = g.scalar_mul(t[0], k)?;
                    let cc = g.constant(c.clone(), &shape2)?;
                    let p = g.mul(y, cc)?;
                    g.sum(p)
                }),
                oracle: None,
            }
        }
        "add_bias" => {
            // alternate matrix and NCHW layouts
            let shape = if rng.gen::<bool>() {
                vec![rng.gen_range(1..=3), rng.gen_range(1..=4)]
            } else {
                vec![rng.gen_range(1..=2), rng.gen_range(1..=3), 2, rng.gen_range(1..=3)]
            };
            let n: usize = shape.iter().product();
            let x = uniform(rng, n, -1.0, 1.0);
            let b = uniform(rng, shape[1], -1.0, 1.0);
            let c = uniform(rng, n, -1.0, 1.0);
            let (bshape, shape2) = (vec![shape[1]], shape.clone());
            Case {
                inputs: vec![(shape, x), (bshape, b)],
                build: Box::new(move |g, t| {
                    let y = g.add_bias(t[0], t[1])?;
                    let cc = g.constant(c.clone(), &shape2)?;
                    let p = g.mul(y, cc)?;
                    g.sum(p)
                }),
                oracle: None,
            }
        }
        "matmul" => {
            let (m, k, n) = (rng.gen_range(1..=4), rng.gen_range(1..=4), rng.gen_range(1..=4));
            let a = uniform(rng, m * k, -1.0, 1.0);
            let b = uniform(rng, k * n, -1.0, 1.0);
            let c = uniform(rng, m * n, -1.0, 1.0);
            Case {
                inputs: vec![(vec![m, k], a), (vec![k, n], b)],
                build: Box::new(move |g, t| {
                    let y = g.matmul(t[0], t[1])?;
                    let cc = g.constant(c.clone(), &[m, n])?;
                    let p = g.mul(y, cc)?;
                    g.sum(p)
                }),
                oracle: None,
            }
        }
        "conv2d_valid" | "conv2d_same" => {
            let pad = if op == "conv2d_valid" { Padding::Valid } else { Padding::Same };
            let (n, cin, cout) = (rng.gen_range(1..=2), rng.gen_range(1..=2), rng.gen_range(1..=3));
            let (h, w) = (rng.gen_range(3..=4), rng.gen_range(3..=4));
            let (kh, kw) = match pad {
                Padding::Same => (3, 3),
                Padding::Valid => (rng.gen_range(1..=3), rng.gen_range(1..=3)),
            };
            let x = uniform(rng, n * cin * h * w, -1.0, 1.0);
            let wt = uniform(rng, cout * cin * kh * kw, -1.0, 1.0);
            Case {
                inputs: vec![(vec![n, cin, h, w], x), (vec![cout, cin, kh, kw], wt)],
                build: Box::new(move |g, t| {
                    let y = g.conv2d(t[0], t[1], pad)?;
                    let nel = g.data(y).len();
                    let c: Vec<f64> = (0..nel).map(|i| ((i * 7 + 3) % 11) as f64 / 11.0 - 0.5).collect();
                    let shape = g.shape(y).to_vec();
                    let cc = g.constant(c, &shape)?;
                    let p = g.mul(y, cc)?;
                    g.sum(p)
                }),
                oracle: None,
            }
        }
        "max_pool2" => {
            let (n, c) = (rng.gen_range(1..=2), rng.gen_range(1..=2));
            let (h, w) = (2 * rng.gen_range(1..=2), 2 * rng.gen_range(1..=2));
            let x = separated(rng, n * c * h * w);
            Case {
                inputs: vec![(vec![n, c, h, w], x)],
                build: Box::new(move |g, t| {
                    let y = g.max_pool2(t[0])?;
                    let nel = g.data(y).len();
                    let cv: Vec<f64> = (0..nel).map(|i| ((i * 5 + 1) % 7) as f64 / 7.0 + 0.1).collect();
                    let shape = g.shape(y).to_vec();
                    let cc = g.constant(cv, &shape)?;
                    let p = g.mul(y, cc)?;
                    g.sum(p)
                }),
                oracle: None,
            }
        }
        "relu" => {
            let shape = dims2(rng);
            let n = shape.iter().product();
            let x = off_zero(rng, n);
            let c = uniform(rng, n, -1.0, 1.0);
            let shape2 = shape.clone();
            Case {
                inputs: vec![(shape, x)],
                build: Box::new(move |g, t| {
                    let y = g.relu(t[0])?;
                    let cc = g.constant(c.clone(), &shape2)?;
                    let p = g.mul(y, cc)?;
                    g.sum(p)
                }),
                oracle: None,
            }
        }
        "tanh" | "exp" => {
            let shape = dims2(rng);
            let n = shape.iter().product();
            let x = uniform(rng, n, -2.0, 2.0);
            let c = uniform(rng, n, -1.0, 1.0);
            let shape2 = shape.clone();
            let kind = op.to_string();
            Case {
                inputs: vec![(shape, x)],
                build: Box::new(move |g, t| {
                    let y = if kind == "tanh" { g.tanh(t[0])? } else { g.exp(t[0])? };
                    let cc = g.constant(c.clone(), &shape2)?;
                    let p = g.mul(y, cc)?;
                    g.sum(p)
                }),
                oracle: None,
            }
        }
        "reshape" => {
            let (a, b) = (rng.gen_range(1..=3), 2 * rng.gen_range(1..=2));
            let n = a * b;
            let x = uniform(rng, n, -1.0, 1.0);
            let c = uniform(rng, n, -1.0, 1.0);
            Case {
                inputs: vec![(vec![a, b], x)],
                build: Box::new(move |g, t| {
                    let y = g.reshape(t[0], &[b / 2, a * 2])?;
                    let cc = g.constant(c.clone(), &[b / 2, a * 2])?;
                    let p = g.mul(y, cc)?;
                    g.sum(p)
                }),
                oracle: None,
            }
        }
        "sum" | "mean" => {
            let shape = dims2(rng);
            let n = shape.iter().product();
            let x = uniform(rng, n, -1.0, 1.0);
            let kind = op.to_string();
            Case {
                inputs: vec![(shape, x)],
                build: Box::new(move |g, t| if kind == "sum" { g.sum(t[0]) } else { g.mean(t[0]) }),
                oracle: None,
            }
        }
        "log_softmax" => {
            let (n, k) = (rng.gen_range(1..=3), rng.gen_range(2..=5));
            let x = uniform(rng, n * k, -2.0, 2.0);
            let c = uniform(rng, n * k, -1.0, 1.0);
            Case {
                inputs: vec![(vec![n, k], x)],
                build: Box::new(move |g, t| {
                    let y = g.log_softmax(t[0])?;
                    let cc = g.constant(c.clone(), &[n, k])?;
                    let p = g.mul(y, cc)?;
                    g.sum(p)
                }),
                oracle: None,
            }
        }
        "concat" => {
            let cols = rng.gen_range(1..=3);
            let (r1, r2) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
            let a = uniform(rng, r1 * cols, -1.0, 1.0);
            let b = uniform(rng, r2 * cols, -1.0, 1.0);
            let c = uniform(rng, (r1 + r2) * cols, -1.0, 1.0);
            Case {
                inputs: vec![(vec![r1, cols], a), (vec![r2, cols], b)],
                build: Box::new(move |g, t| {
                    let y = g.concat(&[t[0], t[1]])?;
                    let cc = g.constant(c.clone(), &[r1 + r2, cols])?;
                    let p = g.mul(y, cc)?;
                    g.sum(p)
                }),
                oracle: None,
            }
        }
        "nll_loss" => {
            let (n, k) = (rng.gen_range(1..=4), rng.gen_range(2..=5));
            let x = uniform(rng, n * k, -2.0, 0.0);
            let targets: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
            Case {
                inputs: vec![(vec![n, k], x)],
                build: Box::new(move |g, t| g.nll_loss(t[0], &targets)),
                oracle: None,
            }
        }
        "kl_consistency" => {
            // raw scores on both sides, each through log_softmax; gradients
            // flow to both (the training loop's stop_gradient is external)
            let (n, k) = (rng.gen_range(1..=3), rng.gen_range(2..=5));
            let zc = uniform(rng, n * k, -2.0, 2.0);
            let za = uniform(rng, n * k, -2.0, 2.0);
            Case {
                inputs: vec![(vec![n, k], zc), (vec![n, k], za)],
                build: Box::new(move |g, t| {
                    let lc = g.log_softmax(t[0])?;
                    let la = g.log_softmax(t[1])?;
                    crate::losses::kl_consistency(g, lc, la)
                }),
                oracle: None,
            }
        }
        "entropy_min" => {
            let (n, k) = (rng.gen_range(1..=3), rng.gen_range(2..=5));
            let z = uniform(rng, n * k, -2.0, 2.0);
            Case {
                inputs: vec![(vec![n, k], z)],
                build: Box::new(move |g, t| {
                    let lp = g.log_softmax(t[0])?;
                    crate::losses::entropy_min(g, lp)
                }),
                oracle: None,
            }
        }
        "stop_gradient" => {
            // loss = Σ stop(x)∘x: the stopped branch contributes value but no
            // gradient, so dL/dx = x (not 2x). Finite differences see 2x by
            // construction, hence the hand oracle.
            let shape = dims2(rng);
            let n = shape.iter().product();
            let x = uniform(rng, n, -1.0, 1.0);
            Case {
                inputs: vec![(shape, x)],
                build: Box::new(move |g, t| {
                    let s = g.stop_gradient(t[0])?;
                    let p = g.mul(s, t[0])?;
                    g.sum(p)
                }),
                oracle: Some(Box::new(|inputs| vec![inputs[0].1.clone()])),
            }
        }
        "grad_reverse" => {
            // loss = Σ reverse(x)∘c → dL/dx = −c exactly.
            let shape = dims2(rng);
            let n = shape.iter().product();
            let x = uniform(rng, n, -1.0, 1.0);
            let c = uniform(rng, n, -1.0, 1.0);
            let c2 = c.clone();
            let shape2 = shape.clone();
            Case {
                inputs: vec![(shape, x)],
                build: Box::new(move |g, t| {
                    let r = g.grad_reverse(t[0])?;
                    let cc = g.constant(c.clone(), &shape2)?;
                    let p = g.mul(r, cc)?;
                    g.sum(p)
                }),
                oracle: Some(Box::new(move |_| vec![c2.iter().map(|v| -v).collect()])),
            }
        }
        "affine_grid" => {
            let n = rng.gen_range(1..=2);
            let theta = uniform(rng, n * 6, -1.0, 1.0);
            let (h, w) = (rng.gen_range(2..=4), rng.gen_range(2..=4));
            let c = uniform(rng, n * h * w * 2, -1.0, 1.0);
            Case {
                inputs: vec![(vec![n, 6], theta)],
                build: Box::new(move |g, t| {
                    let grid = g.affine_grid(t[0], h, w)?;
                    let cc = g.constant(c.clone(), &[n, h, w, 2])?;
                    let p = g.mul(grid, cc)?;
                    g.sum(p)
                }),
                oracle: None,
            }
        }
        "bilinear_sample" => {
            // grid values stay in (−0.25, 0.25): for a 4-wide image that maps
            // to pixel coordinates in (1.125, 1.875), strictly inside one cell,
            // so the probe interval never crosses an interpolation kink.
            let (n, c, h, w) = (1, rng.gen_range(1..=2), 4, 4);
            let (gh, gw) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
            let x = uniform(rng, n * c * h * w, -1.0, 1.0);
            let grid = uniform(rng, n * gh * gw * 2, -0.25, 0.25);
            let cv = uniform(rng, n * c * gh * gw, -1.0, 1.0);
            Case {
                inputs: vec![(vec![n, c, h, w], x), (vec![n, gh, gw, 2], grid)],
                build: Box::new(move |g, t| {
                    let y = g.bilinear_sample(t[0], t[1])?;
                    let cc = g.constant(cv.clone(), &[n, c, gh, gw])?;
                    let p = g.mul(y, cc)?;
                    g.sum(p)
                }),
                oracle: None,
            }
        }
        "stn_composite" => {
            // theta → affine_grid → bilinear_sample → loss, checking the
            // full differentiable path used by the spatial transformer. theta
            // is jittered until every sampling coordinate is ≥ 0.02 pixels
            // from an integer so finite differences stay on smooth ground.
            let (n, c, h, w) = (1usize, 2usize, 4usize, 4usize);
            let x = uniform(rng, n * c * h * w, 0.0, 1.0);
            let base = [0.8, 0.12, 0.31, -0.07, 0.85, -0.22];
            let theta = loop {
                let jit: Vec<f64> = base.iter().map(|b| b + rng.gen::<f64>() * 0.04 - 0.02).collect();
                let safe = (0..h).all(|i| {
                    (0..w).all(|j| {
                        let vn = 2.0 * i as f64 / (h as f64 - 1.0) - 1.0;
                        let un = 2.0 * j as f64 / (w as f64 - 1.0) - 1.0;
                        let u = jit[0] * un + jit[1] * vn + jit[2];
                        let v = jit[3] * un + jit[4] * vn + jit[5];
                        let upx = (u + 1.0) * (w as f64 - 1.0) / 2.0;
                        let vpx = (v + 1.0) * (h as f64 - 1.0) / 2.0;
                        (upx - upx.round()).abs() > 0.02 && (vpx - vpx.round()).abs() > 0.02
                    })
                });
                if safe {
                    break jit;
                }
            };
            let cv = uniform(rng, n * c * h * w, -1.0, 1.0);
            Case {
                inputs: vec![(vec![n, 6], theta), (vec![n, c, h, w], x)],
                build: Box::new(move |g, t| {
                    let grid = g.affine_grid(t[0], h, w)?;
                    let y = g.bilinear_sample(t[1], grid)?;
                    let cc = g.constant(cv.clone(), &[n, c, h, w])?;
                    let p = g.mul(y, cc)?;
                    g.sum(p)
                }),
                oracle: None,
            }
        }
        "network_composite" => {
            // conv → pool → relu → flatten → dense → log_softmax → nll,
            // i.e. the whole classifier shape in miniature.
            let (n, cin, h, w) = (2usize, 1usize, 4usize, 4usize);
            let cout = 2usize;
            let x = uniform(rng, n * cin * h * w, -1.0, 1.0);
            let wc = uniform(rng, cout * cin * 9, -0.7, 0.7);
            let feat = cout * (h / 2) * (w / 2);
            let k = 3usize;
            let wd = uniform(rng, feat * k, -0.7, 0.7);
            let bd = uniform(rng, k, -0.3, 0.3);
            let targets: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
            Case {
                inputs: vec![
                    (vec![n, cin, h, w], x),
                    (vec![cout, cin, 3, 3], wc),
                    (vec![feat, k], wd),
                    (vec![k], bd),
                ],
                build: Box::new(move |g, t| {
                    let c1 = g.conv2d(t[0], t[1], Padding::Same)?;
                    let p1 = g.max_pool2(c1)?;
                    let r1 = g.relu(p1)?;
                    let flat = g.reshape(r1, &[n, feat])?;
                    let z = g.matmul(flat, t[2])?;
                    let zb = g.add_bias(z, t[3])?;
                    let lp = g.log_softmax(zb)?;
                    g.nll_loss(lp, &targets)
                }),
                oracle: None,
            }
        }
        other => panic!("unknown gradcheck op {other}"),
    }
}

/// Run the verification suite.
///
/// `filter` restricts to ops whose name contains the pattern; `perturb`
/// deliberately corrupts the analytic gradient of the named op so the suite
/// demonstrably fails (harness sensitivity fixture).
pub fn run_suite(
    seed: u64,
    cases_per_op: usize,
    filter: Option<&str>,
    perturb: Option<&str>,
) -> Result<Vec<OpReport>> {
    let mut reports = Vec::new();
    for (oi, &op) in SUITE_OPS.iter().enumerate() {
        if let Some(f) = filter {
            if !op.contains(f) {
                continue;
            }
        }
        let corrupt = perturb == Some(op);
        let mut max_err = 0.0f64;
        for ci in 0..cases_per_op {
            let mut rng = stream_rng(seed, Stream::Gradcheck, (oi * 100_000 + ci) as u64);
            let case = make_case(op, &mut rng);
            max_err = max_err.max(check_case(&case, corrupt)?);
        }
        reports.push(OpReport {
            op: op.to_string(),
            cases: cases_per_op,
            max_rel_err: max_err,
            pass: max_err < REL_TOL,
        });
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rel_err_uses_absolute_floor_near_zero() {
        assert!(rel_err(0.0, 1e-7) < REL_TOL);
        assert!(rel_err(1.0, 1.1) > REL_TOL);
    }

    #[test]
    fn a_few_cases_per_op_pass_quickly() {
        let reports = run_suite(11, 3, None, None).unwrap();
        assert_eq!(reports.len(), SUITE_OPS.len());
        for r in &reports {
            assert!(r.pass, "{} failed with max rel err {}", r.op, r.max_rel_err);
        }
    }

    #[test]
    fn perturbed_backward_is_detected() {
        let reports = run_suite(11, 3, Some("matmul"), Some("matmul")).unwrap();
        assert_eq!(reports.len(), 1);
        assert!(!reports[0].pass, "corrupted matmul gradient must fail the check");
    }

    #[test]
    fn filter_selects_single_op() {
        let reports = run_suite(11, 2, Some("bilinear"), None).unwrap();
        assert_eq!(reports.len(), 1);
        assert_eq!(reports[0].op, "bilinear_sample");
    }
}
