//! Adversarial spatial transformer: a localization network regresses a capped
//! affine transform φ per sample, a normalized grid is generated from φ, and the
//! input is resampled bilinearly. Wrapping the result in `grad_reverse` turns a
//! descent step on the consistency loss into an ascent step for the localization
//! parameters θ_t — the min–max in one backward pass.
//!
//! φ is parameterized as φ_id + C ⊙ tanh(raw) so the regressed transform can
//! never fold or collapse the image: each entry stays within φ_id ± C by
//! construction. The output layer starts at zero, so training begins at the
//! exact identity transform.

use rand::Rng;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::{batch_input, tensor_images, ParamSet};
use crate::rng::{stream_rng, Stream};
use crate::tensor::{Graph, Padding, Tensor};

/// Row-major 2×3 identity affine parameters.
pub const THETA_IDENTITY: [f32; 6] = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0];

/// Per-entry caps on |φ − φ_id|: 0.3 on the linear part, 0.5 on translation
/// (normalized units), sized to match the random geometric augmentation ranges.
pub const THETA_CAPS: [f32; 6] = [0.3, 0.3, 0.5, 0.3, 0.3, 0.5];

/// The localization network θ_t:
/// conv(8) → pool → relu → conv(16) → pool → relu → dense(32) → relu → dense(6).
/// The final dense layer is zero-initialized (weights and bias).
#[derive(Debug, Clone)]
pub struct LocalizationNet {
    pub channels: usize,
    pub size: usize,
    pub params: ParamSet,
}

/// Fan-in scaled uniform init, same scheme as the classifier.
fn kaiming_uniform(rng: &mut impl Rng, fan_in: usize, n: usize) -> Vec<f32> {
    let limit = (6.0 / fan_in as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-limit..=limit) as f32).collect()
}

impl LocalizationNet {
    pub fn flat_features(size: usize) -> usize {
        16 * (size / 4) * (size / 4)
    }

    /// Init-stream indices start at 0x100 so a shared seed cannot alias the
    /// classifier's layer streams.
    pub fn init(seed: u64, channels: usize, size: usize) -> Result<Self> {
        if size < 8 || size % 4 != 0 {
            return Err(Error::InvalidArg(format!(
                "input size must be a multiple of 4 and at least 8, got {size}"
            )));
        }
        let flat = Self::flat_features(size);
        let mut params = ParamSet::new();
        let mut rng = stream_rng(seed, Stream::Init, 0x100);
        params.push("conv1.w", &[8, channels, 3, 3], kaiming_uniform(&mut rng, channels * 9, 8 * channels * 9));
        params.push("conv1.b", &[8], vec![0.0; 8]);
        let mut rng = stream_rng(seed, Stream::Init, 0x101);
        params.push("conv2.w", &[16, 8, 3, 3], kaiming_uniform(&mut rng, 8 * 9, 16 * 8 * 9));
        params.push("conv2.b", &[16], vec![0.0; 16]);
        let mut rng = stream_rng(seed, Stream::Init, 0x102);
        params.push("fc1.w", &[flat, 32], kaiming_uniform(&mut rng, flat, flat * 32));
        params.push("fc1.b", &[32], vec![0.0; 32]);
        params.push("fc2.w", &[32, 6], vec![0.0; 32 * 6]);
        params.push("fc2.b", &[6], vec![0.0; 6]);
        Ok(Self { channels, size, params })
    }

    pub fn bind(&self, g: &mut Graph<f32>) -> Vec<Tensor> {
        self.params.bind(g)
    }

    pub fn bind_frozen(&self, g: &mut Graph<f32>) -> Vec<Tensor> {
        self.params.bind_frozen(g)
    }

    /// Regress capped affine parameters φ = φ_id + C ⊙ tanh(raw), shape [N, 6].
    pub fn localize(&self, g: &mut Graph<f32>, h: &[Tensor], x: Tensor) -> Result<Tensor> {
        let n = g.shape(x)[0];
        let c1 = g.conv2d(x, h[0], Padding::Same)?;
        let c1 = g.add_bias(c1, h[1])?;
        let c1 = g.max_pool2(c1)?;
        let c1 = g.relu(c1)?;
        let c2 = g.conv2d(c1, h[2], Padding::Same)?;
        let c2 = g.add_bias(c2, h[3])?;
        let c2 = g.max_pool2(c2)?;
        let c2 = g.relu(c2)?;
        let flat = g.reshape(c2, &[n, Self::flat_features(self.size)])?;
        let f1 = g.matmul(flat, h[4])?;
        let f1 = g.add_bias(f1, h[5])?;
        let f1 = g.relu(f1)?;
        let raw = g.matmul(f1, h[6])?;
        let raw = g.add_bias(raw, h[7])?;
        let squashed = g.tanh(raw)?;
        let caps = tiled_const(g, &THETA_CAPS, n)?;
        let phi_id = tiled_const(g, &THETA_IDENTITY, n)?;
        let delta = g.mul(caps, squashed)?;
        g.add(phi_id, delta)
    }

    /// Preview helper: T(x) on plain images, no gradient machinery.
    pub fn transform_images(&self, images: &[Image]) -> Result<Vec<Image>> {
        let mut g = Graph::new();
        let batch = crate::data::ImageBatch {
            labels: vec![None; images.len()],
            domains: vec![crate::data::DomainTag::Target; images.len()],
            images: images.to_vec(),
        };
        let x = batch_input(&mut g, &batch)?;
        let h = self.bind_frozen(&mut g);
        let theta = self.localize(&mut g, &h, x)?;
        let out = spatial_transform(&mut g, x, theta)?;
        let mut imgs = tensor_images(&g, out)?;
        for img in &mut imgs {
            img.clamp01();
        }
        Ok(imgs)
    }
}

fn tiled_const(g: &mut Graph<f32>, row: &[f32; 6], n: usize) -> Result<Tensor> {
    let data: Vec<f32> = row.iter().copied().cycle().take(6 * n).collect();
    g.constant(data, &[n, 6])
}

/// Normalized sampling grid for φ, shape [N, H, W, 2].
pub fn generate_grid(g: &mut Graph<f32>, theta: Tensor, h: usize, w: usize) -> Result<Tensor> {
    g.affine_grid(theta, h, w)
}

/// T(x): resample x under the per-sample affine parameters (same output size).
pub fn spatial_transform(g: &mut Graph<f32>, x: Tensor, theta: Tensor) -> Result<Tensor> {
    let shape = g.shape(x).to_vec();
    if shape.len() != 4 {
        return Err(Error::ShapeMismatch {
            op: "spatial_transform",
            details: format!("expected [N,C,H,W] input, got {shape:?}"),
        });
    }
    let grid = generate_grid(g, theta, shape[2], shape[3])?;
    g.bilinear_sample(x, grid)
}

/// grad_reverse(T(x)): forward equals T(x); during backward, gradients reaching
/// θ_t are negated, so one optimizer step moves θ_t toward the worst-case
/// transform while θ_m still descends.
pub fn adversarial_transform(
    g: &mut Graph<f32>,
    net: &LocalizationNet,
    h: &[Tensor],
    x: Tensor,
) -> Result<Tensor> {
    let theta = net.localize(g, h, x)?;
    let t = spatial_transform(g, x, theta)?;
    g.grad_reverse(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DomainTag, ImageBatch};

    fn toy_batch(n: usize, c: usize, s: usize, seed: u64) -> ImageBatch {
        let mut rng = stream_rng(seed, Stream::Stn, 7000);
        let images = (0..n)
            .map(|_| Image::from_fn(c, s, s, |_, _, _| rng.gen_range(0.0f32..1.0)))
            .collect();
        ImageBatch {
            images,
            labels: vec![None; n],
            domains: vec![DomainTag::Target; n],
        }
    }

    #[test]
    fn zero_init_regresses_exact_identity_parameters() {
        let net = LocalizationNet::init(5, 3, 32).unwrap();
        let batch = toy_batch(3, 3, 32, 0);
        let mut g = Graph::new();
        let x = batch_input(&mut g, &batch).unwrap();
        let h = net.bind_frozen(&mut g);
        let theta = net.localize(&mut g, &h, x).unwrap();
        for row in g.data(theta).chunks(6) {
            assert_eq!(row, &THETA_IDENTITY);
        }
    }

    #[test]
    fn zero_init_transform_is_exact_identity() {
        let net = LocalizationNet::init(9, 1, 16).unwrap();
        let batch = toy_batch(2, 1, 16, 1);
        let mut g = Graph::new();
        let x = batch_input(&mut g, &batch).unwrap();
        let h = net.bind_frozen(&mut g);
        let theta = net.localize(&mut g, &h, x).unwrap();
        let out = spatial_transform(&mut g, x, theta).unwrap();
        let max_diff = g
            .data(out)
            .iter()
            .zip(g.data(x))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert_eq!(max_diff, 0.0);
    }

    #[test]
    fn saturated_head_stays_within_caps() {
        let mut net = LocalizationNet::init(2, 1, 16).unwrap();
        for name in ["fc2.w", "fc2.b"] {
            let e = net.params.entries.iter_mut().find(|e| e.name == name).unwrap();
            e.values.iter_mut().enumerate().for_each(|(i, v)| {
                *v = if i % 2 == 0 { 40.0 } else { -35.0 };
            });
        }
        let batch = toy_batch(4, 1, 16, 2);
        let mut g = Graph::new();
        let x = batch_input(&mut g, &batch).unwrap();
        let h = net.bind_frozen(&mut g);
        let theta = net.localize(&mut g, &h, x).unwrap();
        for row in g.data(theta).chunks(6) {
            for (k, &v) in row.iter().enumerate() {
                let dist = (v - THETA_IDENTITY[k]).abs();
                assert!(dist <= THETA_CAPS[k], "entry {k}: |{v} - id| = {dist}");
            }
        }
    }

    /// The gradient-reversal wrapper must negate θ_t gradients exactly,
    /// changing nothing else.
    #[test]
    fn adversarial_gradient_is_exact_negation() {
        let mut net = LocalizationNet::init(7, 1, 16).unwrap();
        // Nudge the whole head off zero so gradients reach every layer.
        let mut head_rng = stream_rng(6, Stream::Stn, 0);
        let e = net.params.entries.iter_mut().find(|e| e.name == "fc2.w").unwrap();
        for v in &mut e.values {
            *v = head_rng.gen_range(-0.05f32..0.05);
        }
        let e = net.params.entries.iter_mut().find(|e| e.name == "fc2.b").unwrap();
        e.values = vec![0.11, -0.04, 0.07, -0.06, 0.13, 0.05];
        let batch = toy_batch(2, 1, 16, 3);
        let weights: Vec<f32> = {
            let mut rng = stream_rng(4, Stream::Stn, 1);
            (0..2 * 16 * 16).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
        };

        let run = |adversarial: bool| -> (Vec<f32>, Vec<Vec<f32>>) {
            let mut g = Graph::new();
            let x = batch_input(&mut g, &batch).unwrap();
            let h = net.bind(&mut g);
            let out = if adversarial {
                adversarial_transform(&mut g, &net, &h, x).unwrap()
            } else {
                let theta = net.localize(&mut g, &h, x).unwrap();
                spatial_transform(&mut g, x, theta).unwrap()
            };
            let c = g.constant(weights.clone(), &[2, 1, 16, 16]).unwrap();
            let prod = g.mul(out, c).unwrap();
            let loss = g.sum(prod).unwrap();
            g.backward(loss).unwrap();
            let forward = g.data(out).to_vec();
            let grads = h.iter().map(|&t| g.grad(t).unwrap().to_vec()).collect();
            (forward, grads)
        };

        let (fwd_plain, grads_plain) = run(false);
        let (fwd_adv, grads_adv) = run(true);
        assert_eq!(fwd_plain, fwd_adv, "forward value must be unchanged");
        for (ga, gp) in grads_adv.iter().zip(&grads_plain) {
            assert!(gp.iter().any(|&v| v != 0.0), "plain gradient must be nonzero");
            for (&a, &p) in ga.iter().zip(gp) {
                assert_eq!(a, -p);
            }
        }
    }

    /// f32 finite-difference smoke test on the head bias (θ_t → φ → grid →
    /// sampler chain); the 64-bit per-op suite lives in the gradcheck module.
    #[test]
    fn head_bias_gradient_matches_finite_differences() {
        let mut net = LocalizationNet::init(8, 1, 16).unwrap();
        let e = net.params.entries.iter_mut().find(|e| e.name == "fc2.b").unwrap();
        e.values = vec![0.11, -0.04, 0.07, -0.06, 0.13, 0.05];
        let batch = toy_batch(1, 1, 16, 4);
        let weights: Vec<f32> = {
            let mut rng = stream_rng(5, Stream::Stn, 2);
            (0..16 * 16).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
        };

        let loss_at = |net: &LocalizationNet| -> (f32, Vec<f32>) {
            let mut g = Graph::new();
            let x = batch_input(&mut g, &batch).unwrap();
            let h = net.bind(&mut g);
            let theta = net.localize(&mut g, &h, x).unwrap();
            let out = spatial_transform(&mut g, x, theta).unwrap();
            let c = g.constant(weights.clone(), &[1, 1, 16, 16]).unwrap();
            let prod = g.mul(out, c).unwrap();
            let loss = g.sum(prod).unwrap();
            g.backward(loss).unwrap();
            (g.value(loss), g.grad(h[7]).unwrap().to_vec())
        };

        let (_, analytic) = loss_at(&net);
        for k in 0..6 {
            let h_step = 1e-3f32;
            let mut plus = net.clone();
            plus.params.entries.iter_mut().find(|e| e.name == "fc2.b").unwrap().values[k] += h_step;
            let mut minus = net.clone();
            minus.params.entries.iter_mut().find(|e| e.name == "fc2.b").unwrap().values[k] -= h_step;
            let numeric = (loss_at(&plus).0 - loss_at(&minus).0) / (2.0 * h_step);
            let denom = analytic[k].abs().max(numeric.abs()).max(0.05);
            let rel = (analytic[k] - numeric).abs() / denom;
            assert!(rel < 5e-2, "coord {k}: analytic {} vs fd {numeric}", analytic[k]);
        }
    }
}
