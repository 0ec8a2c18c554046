//! Training objectives: supervised cross-entropy L_m, KL consistency L_c,
//! target entropy minimization L_e, and the combined adaptation /
//! generalization losses.
//!
//! All builders are generic over the graph scalar so the identity tests can
//! run in 64-bit while training runs in 32-bit.
//!
//! Contract notes:
//! - `kl_consistency` expects the clean side to be wrapped in `stop_gradient`
//!   by the caller — the clean branch acts as a fixed anchor and must receive
//!   no gradient.
//! - The adversarial term is the same KL consistency applied to a
//!   `grad_reverse`-wrapped transform (see [`crate::stn`]); `total_loss` just
//!   weights whatever terms the trainer assembled.

use serde::{Deserialize, Serialize};

use crate::data::DomainTag;
use crate::error::{Error, Result};
use crate::tensor::{Graph, Scalar, Tensor};

/// Adaptation (unlabeled target data participates) vs. generalization
/// (source domains only; the target is never touched before evaluation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Da,
    Dg,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Da => "da",
            Mode::Dg => "dg",
        }
    }

    pub fn parse(s: &str) -> Result<Mode> {
        match s {
            "da" => Ok(Mode::Da),
            "dg" => Ok(Mode::Dg),
            _ => Err(Error::Config(format!("unknown mode {s:?} (expected da or dg)"))),
        }
    }
}

/// Weights of the auxiliary terms; the supervised term always has weight 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_c: f64,
    pub lambda_e: f64,
    pub lambda_t: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda_c: 1.0, lambda_e: 0.1, lambda_t: 0.1 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_c", self.lambda_c),
            ("lambda_e", self.lambda_e),
            ("lambda_t", self.lambda_t),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a nonnegative number, got {v}")));
            }
        }
        Ok(())
    }
}

/// Mean over the batch of −logprob[label].
pub fn cross_entropy<T: Scalar>(
    g: &mut Graph<T>,
    logprobs: Tensor,
    labels: &[usize],
) -> Result<Tensor> {
    g.nll_loss(logprobs, labels)
}

/// Mean over the batch of Σ_k p̂_k (log p̂_k − log p_k), where p̂ comes from the
/// clean branch (stop-gradient wrapped by the caller) and p from the perturbed
/// branch.
pub fn kl_consistency<T: Scalar>(
    g: &mut Graph<T>,
    logprobs_clean: Tensor,
    logprobs_aug: Tensor,
) -> Result<Tensor> {
    let cs = g.shape(logprobs_clean).to_vec();
    let as_ = g.shape(logprobs_aug).to_vec();
    if cs.len() != 2 || cs != as_ {
        return Err(Error::ShapeMismatch {
            op: "kl_consistency",
            details: format!("clean {cs:?} vs augmented {as_:?} (want matching [B,K])"),
        });
    }
    let p = g.exp(logprobs_clean)?;
    let diff = g.sub(logprobs_clean, logprobs_aug)?;
    let contrib = g.mul(p, diff)?;
    let total = g.sum(contrib)?;
    g.scalar_mul(total, T::from_f64(1.0 / cs[0] as f64))
}

/// Mean over the batch of the Shannon entropy −Σ_k p_k log p_k.
pub fn entropy_min<T: Scalar>(g: &mut Graph<T>, logprobs: Tensor) -> Result<Tensor> {
    let s = g.shape(logprobs).to_vec();
    if s.len() != 2 {
        return Err(Error::ShapeMismatch {
            op: "entropy_min",
            details: format!("want [B,K] log-probabilities, got {s:?}"),
        });
    }
    let p = g.exp(logprobs)?;
    let plogp = g.mul(p, logprobs)?;
    let total = g.sum(plogp)?;
    g.scalar_mul(total, T::from_f64(-1.0 / s[0] as f64))
}

/// The scalar terms assembled by one training step. Absent terms are simply
/// not part of the objective (e.g. the baseline strategy has only `l_m`).
#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub l_m: Tensor,
    pub l_c: Option<Tensor>,
    pub l_e: Option<Tensor>,
    pub l_adv: Option<Tensor>,
}

/// L_m + λ_c·L_c + λ_e·L_e + λ_t·L_adv (DA) or L_m + λ_c·L_c + λ_t·L_adv (DG).
///
/// `tags` lists the domain of every sample feeding the auxiliary terms; DG
/// mode rejects target-tagged samples outright, and DA mode insists on seeing
/// target samples whenever auxiliary terms are present.
pub fn total_loss<T: Scalar>(
    g: &mut Graph<T>,
    mode: Mode,
    parts: &LossParts,
    w: &LossWeights,
    tags: &[DomainTag],
) -> Result<Tensor> {
    w.validate()?;
    let has_target = tags.contains(&DomainTag::Target);
    let has_aux = parts.l_c.is_some() || parts.l_e.is_some() || parts.l_adv.is_some();
    match mode {
        Mode::Dg => {
            if has_target {
                return Err(Error::TargetInDgLoss);
            }
            if parts.l_e.is_some() {
                return Err(Error::InvalidArg(
                    "entropy term is not part of the generalization objective".into(),
                ));
            }
        }
        Mode::Da => {
            if has_aux && !has_target {
                return Err(Error::InvalidArg(
                    "adaptation loss needs target-domain samples in its consistency inputs".into(),
                ));
            }
        }
    }
    let mut total = parts.l_m;
    for (term, lambda) in [
        (parts.l_c, w.lambda_c),
        (parts.l_e, w.lambda_e),
        (parts.l_adv, w.lambda_t),
    ] {
        if let Some(t) = term {
            let scaled = g.scalar_mul(t, T::from_f64(lambda))?;
            total = g.add(total, scaled)?;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// log-softmax'd leaf for a hand-written probability row set.
    fn logprob_const(g: &mut Graph<f64>, rows: &[Vec<f64>]) -> Tensor {
        let k = rows[0].len();
        let data: Vec<f64> = rows.iter().flatten().map(|&p: &f64| p.ln()).collect();
        g.constant(data, &[rows.len(), k]).unwrap()
    }

    #[test]
    fn cross_entropy_perfect_prediction_is_zero() {
        let mut g = Graph::new();
        let lp = g.constant(vec![0.0, -40.0], &[1, 2]).unwrap();
        let loss = cross_entropy(&mut g, lp, &[0]).unwrap();
        assert_eq!(g.value(loss), 0.0);
    }

    #[test]
    fn cross_entropy_uniform_is_ln_k() {
        let mut g = Graph::new();
        let k = 5usize;
        let lp = g
            .constant(vec![-(k as f64).ln(); 2 * k], &[2, k])
            .unwrap();
        let loss = cross_entropy(&mut g, lp, &[3, 0]).unwrap();
        assert!((g.value(loss) - (k as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_hand_batch() {
        let mut g = Graph::new();
        let lp = logprob_const(&mut g, &[vec![0.9, 0.1], vec![0.4, 0.6]]);
        let loss = cross_entropy(&mut g, lp, &[0, 1]).unwrap();
        let want = -(0.9f64.ln() + 0.6f64.ln()) / 2.0;
        assert!((g.value(loss) - want).abs() < 1e-12);
    }

    #[test]
    fn kl_of_identical_distributions_is_zero() {
        let mut g = Graph::new();
        let lp = logprob_const(&mut g, &[vec![0.2, 0.5, 0.3], vec![0.6, 0.15, 0.25]]);
        let lp2 = logprob_const(&mut g, &[vec![0.2, 0.5, 0.3], vec![0.6, 0.15, 0.25]]);
        let loss = kl_consistency(&mut g, lp, lp2).unwrap();
        assert!(g.value(loss).abs() < 1e-9);
    }

    #[test]
    fn kl_one_hot_vs_uniform_is_ln_two() {
        let mut g = Graph::new();
        // A numerically one-hot clean distribution: exp(−60) ≈ 9e−27 leaves
        // the closed-form value untouched at 1e−9 resolution.
        let clean = g.constant(vec![0.0, -60.0], &[1, 2]).unwrap();
        let aug = logprob_const(&mut g, &[vec![0.5, 0.5]]);
        let loss = kl_consistency(&mut g, clean, aug).unwrap();
        assert!((g.value(loss) - 2.0f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn kl_is_nonnegative_on_random_pairs() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(0, crate::rng::Stream::Gradcheck, 77);
        for _ in 0..50 {
            let rand_dist = |rng: &mut rand_chacha::ChaCha8Rng| {
                let raw: Vec<f64> = (0..4).map(|_| rng.gen_range(0.05..1.0)).collect();
                let z: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / z).collect::<Vec<f64>>()
            };
            let mut g = Graph::new();
            let a = rand_dist(&mut rng);
            let b = rand_dist(&mut rng);
            let lpa = logprob_const(&mut g, &[a]);
            let lpb = logprob_const(&mut g, &[b]);
            let loss = kl_consistency(&mut g, lpa, lpb).unwrap();
            assert!(g.value(loss) >= 0.0, "KL came out negative: {}", g.value(loss));
        }
    }

    #[test]
    fn kl_rejects_mismatched_shapes() {
        let mut g = Graph::new();
        let a = g.constant(vec![0.0; 6], &[2, 3]).unwrap();
        let b = g.constant(vec![0.0; 6], &[3, 2]).unwrap();
        let err = kl_consistency(&mut g, a, b).unwrap_err();
        assert!(err.to_string().contains("kl_consistency"), "{err}");
    }

    #[test]
    fn entropy_of_one_hot_is_zero() {
        let mut g = Graph::new();
        let lp = g.constant(vec![0.0, -60.0, -60.0], &[1, 3]).unwrap();
        let loss = entropy_min(&mut g, lp).unwrap();
        assert!(g.value(loss).abs() < 1e-9);
    }

    #[test]
    fn entropy_of_uniform_is_ln_k() {
        let mut g = Graph::new();
        let k = 7usize;
        let lp = g.constant(vec![-(k as f64).ln(); k], &[1, k]).unwrap();
        let loss = entropy_min(&mut g, lp).unwrap();
        assert!((g.value(loss) - (k as f64).ln()).abs() < 1e-9);
    }

    #[test]
    fn entropy_hand_value() {
        let mut g = Graph::new();
        let lp = logprob_const(&mut g, &[vec![0.75, 0.25]]);
        let loss = entropy_min(&mut g, lp).unwrap();
        let want = -(0.75f64 * 0.75f64.ln() + 0.25 * 0.25f64.ln());
        assert!((g.value(loss) - want).abs() < 1e-12);
    }

    #[test]
    fn entropy_stays_within_zero_and_ln_k() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(1, crate::rng::Stream::Gradcheck, 78);
        for _ in 0..50 {
            let raw: Vec<f64> = (0..5).map(|_| rng.gen_range(0.01..1.0)).collect();
            let z: f64 = raw.iter().sum();
            let dist: Vec<f64> = raw.into_iter().map(|v| v / z).collect();
            let mut g = Graph::new();
            let lp = logprob_const(&mut g, &[dist]);
            let loss = entropy_min(&mut g, lp).unwrap();
            let h = g.value(loss);
            assert!(h >= 0.0 && h <= 5.0f64.ln() + 1e-12, "entropy {h}");
        }
    }

    #[test]
    fn no_gradient_reaches_the_clean_branch() {
        // Shared parameter feeds both branches; the stop-gradient wrapper must
        // make the total gradient identical to an aug-branch-only graph.
        let run = |stop_clean_leaf: bool| -> Vec<f64> {
            let mut g = Graph::new();
            let w = g.leaf(vec![0.3, -0.8, 0.5, 0.1, -0.2, 0.9], &[2, 3], true).unwrap();
            let shift = g.constant(vec![0.4, -0.1, 0.05, -0.3, 0.2, 0.6], &[2, 3]).unwrap();
            let clean_logits = if stop_clean_leaf {
                w
            } else {
                // same values, but detached from w
                g.constant(vec![0.3, -0.8, 0.5, 0.1, -0.2, 0.9], &[2, 3]).unwrap()
            };
            let aug_logits = g.add(w, shift).unwrap();
            let lp_clean = g.log_softmax(clean_logits).unwrap();
            let lp_clean = g.stop_gradient(lp_clean).unwrap();
            let lp_aug = g.log_softmax(aug_logits).unwrap();
            let loss = kl_consistency(&mut g, lp_clean, lp_aug).unwrap();
            g.backward(loss).unwrap();
            g.grad(w).unwrap().to_vec()
        };
        let with_shared = run(true);
        let detached = run(false);
        assert_eq!(with_shared, detached);
        assert!(with_shared.iter().any(|&v| v != 0.0));
    }

    fn scalar_part(g: &mut Graph<f64>, v: f64) -> Tensor {
        let t = g.leaf(vec![v], &[1], true).unwrap();
        g.sum(t).unwrap()
    }

    #[test]
    fn total_weighted_sum_matches_hand_arithmetic() {
        let mut g = Graph::new();
        let parts = LossParts {
            l_m: scalar_part(&mut g, 1.0),
            l_c: Some(scalar_part(&mut g, 1.0)),
            l_e: Some(scalar_part(&mut g, 1.0)),
            l_adv: Some(scalar_part(&mut g, 1.0)),
        };
        let w = LossWeights { lambda_c: 0.5, lambda_e: 0.1, lambda_t: 0.2 };
        let tags = [DomainTag::Source(0), DomainTag::Target];
        let total = total_loss(&mut g, Mode::Da, &parts, &w, &tags).unwrap();
        assert!((g.value(total) - 1.8).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_reduce_to_supervised_loss() {
        let mut g = Graph::new();
        let parts = LossParts {
            l_m: scalar_part(&mut g, 0.7321),
            l_c: Some(scalar_part(&mut g, 3.0)),
            l_e: Some(scalar_part(&mut g, 2.0)),
            l_adv: Some(scalar_part(&mut g, 5.0)),
        };
        let w = LossWeights { lambda_c: 0.0, lambda_e: 0.0, lambda_t: 0.0 };
        let tags = [DomainTag::Target];
        let total = total_loss(&mut g, Mode::Da, &parts, &w, &tags).unwrap();
        assert_eq!(g.value(total), 0.7321);
    }

    #[test]
    fn dg_rejects_target_tagged_samples() {
        let mut g = Graph::new();
        let parts = LossParts {
            l_m: scalar_part(&mut g, 1.0),
            l_c: Some(scalar_part(&mut g, 1.0)),
            l_e: None,
            l_adv: None,
        };
        let tags = [DomainTag::Source(0), DomainTag::Target];
        let err = total_loss(&mut g, Mode::Dg, &parts, &LossWeights::default(), &tags).unwrap_err();
        assert!(matches!(err, Error::TargetInDgLoss));
    }

    #[test]
    fn dg_rejects_entropy_term() {
        let mut g = Graph::new();
        let parts = LossParts {
            l_m: scalar_part(&mut g, 1.0),
            l_c: None,
            l_e: Some(scalar_part(&mut g, 1.0)),
            l_adv: None,
        };
        let err =
            total_loss(&mut g, Mode::Dg, &parts, &LossWeights::default(), &[DomainTag::Source(0)])
                .unwrap_err();
        assert!(err.to_string().contains("entropy"), "{err}");
    }

    #[test]
    fn da_with_aux_terms_requires_target_samples() {
        let mut g = Graph::new();
        let parts = LossParts {
            l_m: scalar_part(&mut g, 1.0),
            l_c: Some(scalar_part(&mut g, 1.0)),
            l_e: None,
            l_adv: None,
        };
        let tags = [DomainTag::Source(0), DomainTag::Source(1)];
        let err = total_loss(&mut g, Mode::Da, &parts, &LossWeights::default(), &tags).unwrap_err();
        assert!(err.to_string().contains("target"), "{err}");

        // ... but the supervised-only baseline is fine without them.
        let parts = LossParts { l_m: parts.l_m, l_c: None, l_e: None, l_adv: None };
        total_loss(&mut g, Mode::Da, &parts, &LossWeights::default(), &tags).unwrap();
    }

    #[test]
    fn adversarial_gradient_scales_with_negated_lambda() {
        let mut g = Graph::new();
        let x = g.leaf(vec![0.5, -0.25, 0.75], &[3], true).unwrap();
        let rev = g.grad_reverse(x).unwrap();
        let c = g.constant(vec![2.0, -1.0, 4.0], &[3]).unwrap();
        let prod = g.mul(rev, c).unwrap();
        let l_adv = g.sum(prod).unwrap();
        let l_m = scalar_part(&mut g, 1.0);
        let parts = LossParts { l_m, l_c: None, l_e: None, l_adv: Some(l_adv) };
        let w = LossWeights { lambda_c: 0.0, lambda_e: 0.0, lambda_t: 0.3 };
        let total = total_loss(&mut g, Mode::Da, &parts, &w, &[DomainTag::Target]).unwrap();
        g.backward(total).unwrap();
        // d(total)/dx = −λ_t · d(sum(x∘c))/dx = −0.3 · c
        let got = g.grad(x).unwrap();
        for (&gv, &cv) in got.iter().zip([2.0, -1.0, 4.0].iter()) {
            assert!((gv - (-0.3 * cv)).abs() < 1e-12, "{gv} vs {}", -0.3 * cv);
        }
    }
}
