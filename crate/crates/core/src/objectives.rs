//! Loss terms for BanditMatch and the baselines, built on the autodiff tape.
//!
//! Probabilities enter as `B x C` graph nodes produced by
//! [`Mlp::forward_graph`]; masks, targets and propensities are constants.

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng as _;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::dialogworld::ActionSet;
use crate::error::{Error, Result};
use crate::nncore::{Graph, Matrix, Mlp, NodeId, PROB_FLOOR};
use crate::rng::Rng;

pub const DEFAULT_IPS_CLIP: f64 = 100.0;
pub const DEFAULT_TRANSLATION: f64 = 0.9;
pub const DEFAULT_FIXMATCH_TAU: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub alpha_weak: f64,
    pub alpha_strong: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            alpha_weak: 0.2,
            alpha_strong: 2.0,
        }
    }
}

/// `λ = max(b, 1 - b)` with `b ~ Beta(α, α)`.
pub fn sample_lambda(alpha: f64, rng: &mut Rng) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Usage(format!("mix-up alpha must be positive, got {alpha}")));
    }
    let beta = Beta::new(alpha, alpha).map_err(|e| Error::Usage(e.to_string()))?;
    let b: f64 = beta.sample(rng);
    Ok(b.max(1.0 - b))
}

/// `λ·a + (1-λ)·b`.
pub fn mixup(a: &[f64], b: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            context: "mix-up partner",
            expected: a.len(),
            got: b.len(),
        });
    }
    if lambda == 1.0 {
        return Ok(a.to_vec());
    }
    Ok(a.iter().zip(b).map(|(x, y)| lambda * x + (1.0 - lambda) * y).collect())
}

pub fn mixup_sampled(a: &[f64], b: &[f64], alpha: f64, rng: &mut Rng) -> Result<(Vec<f64>, f64)> {
    let lambda = sample_lambda(alpha, rng)?;
    Ok((mixup(a, b, lambda)?, lambda))
}

/// Mix every row with a uniformly drawn other row of the batch. A batch of
/// one row is returned unchanged.
pub fn mix_batch(states: ArrayView2<'_, f64>, alpha: f64, rng: &mut Rng) -> Result<Matrix> {
    let n = states.nrows();
    let mut out = states.to_owned();
    if n < 2 {
        return Ok(out);
    }
    for i in 0..n {
        let lambda = sample_lambda(alpha, rng)?;
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        if lambda < 1.0 {
            let partner = states.row(j);
            out.row_mut(i).zip_mut_with(&partner, |x, &y| *x = lambda * *x + (1.0 - lambda) * y);
        }
    }
    Ok(out)
}

/// Multi-hot targets for a list of action sets.
pub fn indicator_matrix(sets: &[&ActionSet], num_classes: usize) -> Matrix {
    let mut m = Array2::zeros((sets.len(), num_classes));
    for (i, s) in sets.iter().enumerate() {
        for c in s.iter() {
            m[[i, c]] = 1.0;
        }
    }
    m
}

fn check_shape(context: &'static str, m: &Matrix, shape: (usize, usize)) -> Result<()> {
    if m.dim() != shape {
        let (expected, got) = if m.nrows() != shape.0 { (shape.0, m.nrows()) } else { (shape.1, m.ncols()) };
        return Err(Error::Dimension { context, expected, got });
    }
    Ok(())
}

/// `Σ w·H(y, p)` with `H` the binary cross-entropy.
fn weighted_bce_sum(g: &mut Graph, probs: NodeId, targets: &Matrix, weights: &Matrix) -> NodeId {
    let pos = g.constant(weights * targets);
    let neg = g.constant(weights * &targets.mapv(|y| 1.0 - y));
    let ln_p = g.ln(probs);
    let q = g.one_minus(probs);
    let ln_q = g.ln(q);
    let a = g.mul(pos, ln_p);
    let b = g.mul(neg, ln_q);
    let s = g.add(a, b);
    let total = g.sum(s);
    g.scale(total, -1.0)
}

/// Mean over rows of the per-class BCE summed over classes. `probs` holds the
/// weakly augmented positives only; zero rows give a constant 0.
pub fn loss_labeled(g: &mut Graph, probs: NodeId, targets: &Matrix) -> Result<NodeId> {
    let shape = g.value(probs).dim();
    check_shape("labeled targets", targets, shape)?;
    if shape.0 == 0 {
        return Ok(g.scalar_constant(0.0));
    }
    let ones = Array2::ones(shape);
    let s = weighted_bce_sum(g, probs, targets, &ones);
    Ok(g.scale(s, 1.0 / shape.0 as f64))
}

/// `q̂ = 1(π > 0.5)`.
pub fn pseudo_labels(weak_probs: ArrayView2<'_, f64>) -> Matrix {
    weak_probs.mapv(|p| f64::from(u8::from(p > 0.5)))
}

/// Confidence-masked BCE against pseudo labels on the strong augmentation.
pub fn loss_pseudo(g: &mut Graph, strong_probs: NodeId, conf: &Matrix, qhat: &Matrix) -> Result<NodeId> {
    let shape = g.value(strong_probs).dim();
    check_shape("confidence mask", conf, shape)?;
    check_shape("pseudo labels", qhat, shape)?;
    let denom = conf.sum();
    if denom == 0.0 {
        return Ok(g.scalar_constant(0.0));
    }
    let s = weighted_bce_sum(g, strong_probs, qhat, conf);
    Ok(g.scale(s, 1.0 / denom))
}

/// Logged classes of positive rows plus logged, unconfident classes of
/// negative rows.
pub fn unconf_plus_mask(delta: &[u8], conf: &Matrix, logged: &[&ActionSet]) -> Matrix {
    let mut m = Array2::zeros(conf.dim());
    for (i, set) in logged.iter().enumerate() {
        for c in set.iter() {
            if delta[i] == 1 || conf[[i, c]] == 0.0 {
                m[[i, c]] = 1.0;
            }
        }
    }
    m
}

pub fn clamp_propensity(rho: f64) -> f64 {
    rho.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// Pseudoinverse-estimator loss
/// `-Σ_i δ_i (1 + Σ_c U_ic (π_ic/ρ_ic - 1)) / Σ U` on unaugmented states.
pub fn loss_bandit(g: &mut Graph, probs: NodeId, rho: &Matrix, delta: &[u8], unconf: &Matrix) -> Result<NodeId> {
    let shape = g.value(probs).dim();
    check_shape("propensities", rho, shape)?;
    check_shape("unconfident mask", unconf, shape)?;
    let denom = unconf.sum();
    if denom == 0.0 {
        return Ok(g.scalar_constant(0.0));
    }
    let mut w = Array2::zeros(shape);
    let mut constant = 0.0;
    for i in 0..shape.0 {
        if delta[i] != 1 {
            continue;
        }
        constant += 1.0;
        for c in 0..shape.1 {
            if unconf[[i, c]] != 0.0 {
                w[[i, c]] = 1.0 / clamp_propensity(rho[[i, c]]);
                constant -= 1.0;
            }
        }
    }
    let wn = g.constant(w);
    let weighted = g.mul(wn, probs);
    let s = g.sum(weighted);
    let num = g.offset(s, constant);
    Ok(g.scale(num, -1.0 / denom))
}

/// Value implied by the pseudoinverse estimator: the weighted mean of
/// `δ_i (1 + Σ_c U_ic (π_ic/ρ_ic - 1))`.
pub fn pi_value_estimate(probs: ArrayView2<'_, f64>, rho: ArrayView2<'_, f64>, delta: &[u8], unconf: ArrayView2<'_, f64>, weights: &[f64]) -> f64 {
    let mut num = 0.0;
    for i in 0..probs.nrows() {
        if delta[i] != 1 {
            continue;
        }
        let mut v = 1.0;
        for c in 0..probs.ncols() {
            if unconf[[i, c]] != 0.0 {
                v += probs[[i, c]] / clamp_propensity(rho[[i, c]]) - 1.0;
            }
        }
        num += weights[i] * v;
    }
    num / weights.iter().sum::<f64>()
}

/// Per-class Bernoulli KL from the frozen policy, averaged over rows.
pub fn loss_kl(g: &mut Graph, probs: NodeId, probs0: &Matrix) -> Result<NodeId> {
    let shape = g.value(probs).dim();
    check_shape("frozen-policy probabilities", probs0, shape)?;
    if shape.0 == 0 {
        return Ok(g.scalar_constant(0.0));
    }
    let ln_p0 = probs0.mapv(f64::ln);
    let ln_q0 = probs0.mapv(|p| (1.0 - p).ln());
    let diff = g.constant(&ln_p0 - &ln_q0);
    let ln_p = g.ln(probs);
    let q = g.one_minus(probs);
    let ln_q = g.ln(q);
    let a = g.mul(probs, ln_p);
    let b = g.mul(q, ln_q);
    let c = g.mul(probs, diff);
    let ab = g.add(a, b);
    let t = g.sub(ab, c);
    let s = g.sum(t);
    let s = g.offset(s, -ln_q0.sum());
    Ok(g.scale(s, 1.0 / shape.0 as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda_p: f64,
    pub lambda_b: f64,
    pub lambda_k: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_p: 1.0,
            lambda_b: 1.0,
            lambda_k: 1.0,
        }
    }
}

/// `L_L + λ_p L_P + λ_b L_B + λ_k L_K`.
pub fn total_loss(g: &mut Graph, ll: NodeId, lp: NodeId, lb: NodeId, lk: NodeId, w: &LossWeights) -> NodeId {
    let mut total = ll;
    for (term, weight) in [(lp, w.lambda_p), (lb, w.lambda_b), (lk, w.lambda_k)] {
        if weight != 0.0 {
            let scaled = g.scale(term, weight);
            total = g.add(total, scaled);
        }
    }
    total
}

/// `-mean_i coeff_i · min(M, w_i)` where `w_i` is the ratio of the current
/// and logging Bernoulli probabilities of the realized set decision.
fn clipped_ratio_loss(g: &mut Graph, probs: NodeId, rho: &Matrix, logged: &Matrix, coeff: &[f64], clip: f64) -> Result<NodeId> {
    let shape = g.value(probs).dim();
    check_shape("propensities", rho, shape)?;
    check_shape("logged actions", logged, shape)?;
    if clip <= 0.0 {
        return Err(Error::Usage(format!("importance-weight clip must be positive, got {clip}")));
    }
    if shape.0 == 0 || coeff.iter().all(|&c| c == 0.0) {
        return Ok(g.scalar_constant(0.0));
    }
    let rho = rho.mapv(clamp_propensity);
    let ln_rho_row = (logged * &rho.mapv(f64::ln) + &logged.mapv(|l| 1.0 - l) * &rho.mapv(|r| (1.0 - r).ln()))
        .sum_axis(Axis(1))
        .insert_axis(Axis(1));
    let sel = g.constant(logged.clone());
    let unsel = g.constant(logged.mapv(|l| 1.0 - l));
    let ln_p = g.ln(probs);
    let q = g.one_minus(probs);
    let ln_q = g.ln(q);
    let a = g.mul(sel, ln_p);
    let b = g.mul(unsel, ln_q);
    let lw = g.add(a, b);
    let lw = g.row_sum(lw);
    let base = g.constant(ln_rho_row);
    let lw = g.sub(lw, base);
    let lw = g.cap(lw, clip.ln());
    let w = g.exp(lw);
    let k = g.constant(Array2::from_shape_vec((shape.0, 1), coeff.to_vec()).map_err(|e| Error::Usage(e.to_string()))?);
    let kw = g.mul(k, w);
    let s = g.sum(kw);
    Ok(g.scale(s, -1.0 / shape.0 as f64))
}

/// Clipped inverse propensity scoring.
pub fn loss_ips(g: &mut Graph, probs: NodeId, rho: &Matrix, logged: &Matrix, delta: &[u8], clip: f64) -> Result<NodeId> {
    let coeff: Vec<f64> = delta.iter().map(|&d| f64::from(d)).collect();
    clipped_ratio_loss(g, probs, rho, logged, &coeff, clip)
}

/// IPS with the feedback translated by `λ_tr`.
pub fn loss_banditnet(g: &mut Graph, probs: NodeId, rho: &Matrix, logged: &Matrix, delta: &[u8], translation: f64, clip: f64) -> Result<NodeId> {
    let coeff: Vec<f64> = delta.iter().map(|&d| f64::from(d) - translation).collect();
    clipped_ratio_loss(g, probs, rho, logged, &coeff, clip)
}

/// Fixed-threshold confidence: `δ_i = 0` and `π > τ` or `π < 1 - τ`.
pub fn fixmatch_mask(weak_probs: ArrayView2<'_, f64>, delta: &[u8], tau: f64) -> Matrix {
    Array2::from_shape_fn(weak_probs.dim(), |(i, c)| {
        let p = weak_probs[[i, c]];
        f64::from(u8::from(delta[i] == 0 && (p > tau || p < 1.0 - tau)))
    })
}

/// Everything one BanditMatch step needs besides the network.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeBatch {
    /// Weakly augmented positive rows and their logged action sets.
    pub weak_positive_states: Matrix,
    pub positive_targets: Matrix,
    /// Strongly augmented states, all rows.
    pub strong_states: Matrix,
    pub conf: Matrix,
    pub qhat: Matrix,
    /// Unaugmented states, all rows.
    pub states: Matrix,
    pub rho: Matrix,
    pub delta: Vec<u8>,
    pub unconf_plus: Matrix,
    /// Frozen-policy probabilities on `states`.
    pub probs0: Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossTerms {
    pub labeled: NodeId,
    pub pseudo: NodeId,
    pub bandit: NodeId,
    pub kl: NodeId,
    pub total: NodeId,
}

/// Record the full BanditMatch objective for `net` on `batch`.
pub fn composite_loss(g: &mut Graph, net: &Mlp, batch: &CompositeBatch, weights: &LossWeights) -> Result<LossTerms> {
    let labeled = if batch.weak_positive_states.nrows() == 0 {
        g.scalar_constant(0.0)
    } else {
        let x = g.constant(batch.weak_positive_states.clone());
        let p = net.forward_graph(g, x)?;
        loss_labeled(g, p, &batch.positive_targets)?
    };
    let pseudo = if weights.lambda_p == 0.0 || batch.conf.sum() == 0.0 {
        g.scalar_constant(0.0)
    } else {
        let x = g.constant(batch.strong_states.clone());
        let p = net.forward_graph(g, x)?;
        loss_pseudo(g, p, &batch.conf, &batch.qhat)?
    };
    let (bandit, kl) = if weights.lambda_b == 0.0 && weights.lambda_k == 0.0 {
        (g.scalar_constant(0.0), g.scalar_constant(0.0))
    } else {
        let x = g.constant(batch.states.clone());
        let p = net.forward_graph(g, x)?;
        let b = if weights.lambda_b == 0.0 {
            g.scalar_constant(0.0)
        } else {
            loss_bandit(g, p, &batch.rho, &batch.delta, &batch.unconf_plus)?
        };
        let k = if weights.lambda_k == 0.0 {
            g.scalar_constant(0.0)
        } else {
            loss_kl(g, p, &batch.probs0)?
        };
        (b, k)
    };
    let total = total_loss(g, labeled, pseudo, bandit, kl, weights);
    Ok(LossTerms {
        labeled,
        pseudo,
        bandit,
        kl,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::{grad_check, Activation, MlpSpec, ParamSet};
    use crate::rng;
    use ndarray::array;

    fn prob_node(g: &mut Graph, m: Matrix) -> NodeId {
        g.constant(m)
    }

    #[test]
    fn mixup_examples() {
        assert_eq!(mixup(&[1.0, 0.0], &[0.0, 1.0], 1.0).unwrap(), vec![1.0, 0.0]);
        let m = mixup(&[1.0, 0.0], &[0.0, 1.0], 0.7).unwrap();
        assert!((m[0] - 0.7).abs() < 1e-12 && (m[1] - 0.3).abs() < 1e-12);
        assert!(mixup(&[1.0], &[0.0, 1.0], 0.7).is_err());
        let mut r = rng::stream(0, "mix");
        assert!(sample_lambda(0.0, &mut r).is_err());
        assert!(sample_lambda(-1.0, &mut r).is_err());
        for alpha in [0.2, 2.0] {
            for _ in 0..10_000 {
                assert!(sample_lambda(alpha, &mut r).unwrap() >= 0.5);
            }
        }
    }

    #[test]
    fn mix_batch_single_row_is_identity() {
        let mut r = rng::stream(0, "mix");
        let x = array![[1.0, 0.0, 1.0]];
        assert_eq!(mix_batch(x.view(), 2.0, &mut r).unwrap(), x);
        let x = array![[1.0, 0.0], [0.0, 1.0]];
        let m = mix_batch(x.view(), 2.0, &mut r).unwrap();
        assert!(m[[0, 0]] >= 0.5 && m[[1, 1]] >= 0.5);
        assert!((m.row(0).sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn labeled_loss_examples() {
        let mut g = Graph::new();
        let p = prob_node(&mut g, array![[0.5, 0.5]]);
        let l = loss_labeled(&mut g, p, &array![[1.0, 0.0]]).unwrap();
        assert!((g.scalar(l) - 2.0 * 2f64.ln()).abs() < 1e-12);

        let lo = crate::nncore::sigmoid(-15.0);
        let p = prob_node(&mut g, array![[1.0 - lo, lo]]);
        let l = loss_labeled(&mut g, p, &array![[1.0, 0.0]]).unwrap();
        assert!(g.scalar(l) < 1e-5);

        let p = prob_node(&mut g, Array2::zeros((0, 2)));
        let l = loss_labeled(&mut g, p, &Array2::zeros((0, 2))).unwrap();
        assert_eq!(g.scalar(l), 0.0);
    }

    #[test]
    fn pseudo_examples() {
        assert_eq!(pseudo_labels(array![[0.6, 0.4], [0.5, 0.5]].view()), array![[1.0, 0.0], [0.0, 0.0]]);
        let mut g = Graph::new();
        let p = prob_node(&mut g, array![[0.5, 0.9]]);
        let l = loss_pseudo(&mut g, p, &array![[0.0, 0.0]], &array![[1.0, 1.0]]).unwrap();
        assert_eq!(g.scalar(l), 0.0);
        let l = loss_pseudo(&mut g, p, &array![[1.0, 0.0]], &array![[1.0, 1.0]]).unwrap();
        assert!((g.scalar(l) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn unconf_plus_examples() {
        let conf = array![[0.0, 0.0, 0.0], [1.0, 1.0, 1.0], [1.0, 0.0, 0.0]];
        let a1 = ActionSet::from([1]);
        let all = ActionSet::from([0, 1, 2]);
        let m = unconf_plus_mask(&[1, 0, 0], &conf, &[&a1, &all, &all]);
        assert_eq!(m, array![[0.0, 1.0, 0.0], [0.0, 0.0, 0.0], [0.0, 1.0, 1.0]]);
        for i in 1..3 {
            for c in 0..3 {
                assert_eq!(m[[i, c]] * conf[[i, c]], 0.0);
            }
        }
    }

    #[test]
    fn bandit_loss_examples() {
        let mut g = Graph::new();
        let probs = prob_node(&mut g, array![[0.75, 0.3, 0.3, 0.3], [0.4, 0.4, 0.4, 0.4]]);
        let rho = array![[0.5, 0.3, 0.3, 0.3], [0.6, 0.6, 0.6, 0.2]];
        let unconf = array![[1.0, 0.0, 0.0, 0.0], [1.0, 1.0, 1.0, 0.0]];
        let l = loss_bandit(&mut g, probs, &rho, &[1, 0], &unconf).unwrap();
        assert!((g.scalar(l) + 0.375).abs() < 1e-12);
        let l = loss_bandit(&mut g, probs, &rho, &[0, 0], &unconf).unwrap();
        assert_eq!(g.scalar(l), 0.0);

        let probs = prob_node(&mut g, rho.clone());
        let l = loss_bandit(&mut g, probs, &rho, &[1, 1], &unconf).unwrap();
        assert!((g.scalar(l) + 2.0 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn kl_examples() {
        let mut g = Graph::new();
        let p = prob_node(&mut g, array![[0.8]]);
        let l = loss_kl(&mut g, p, &array![[0.5]]).unwrap();
        let want = 0.8 * 1.6f64.ln() + 0.2 * 0.4f64.ln();
        assert!((g.scalar(l) - want).abs() < 1e-12);
        assert!((want - 0.1927).abs() < 1e-4);
        let p0 = array![[0.3, 0.9], [0.5, 0.01]];
        let p = prob_node(&mut g, p0.clone());
        let l = loss_kl(&mut g, p, &p0).unwrap();
        assert!(g.scalar(l).abs() < 1e-12);
    }

    #[test]
    fn total_loss_weights() {
        let mut g = Graph::new();
        let t: Vec<NodeId> = [1.0, 2.0, 3.0, 4.0].iter().map(|&v| g.scalar_constant(v)).collect();
        let zero = LossWeights { lambda_p: 0.0, lambda_b: 0.0, lambda_k: 0.0 };
        let l = total_loss(&mut g, t[0], t[1], t[2], t[3], &zero);
        assert_eq!(g.scalar(l), 1.0);
        let l = total_loss(&mut g, t[0], t[1], t[2], t[3], &LossWeights::default());
        assert_eq!(g.scalar(l), 10.0);
    }

    #[test]
    fn ips_and_banditnet_examples() {
        let mut g = Graph::new();
        let rho = array![[0.8, 0.3], [0.2, 0.6], [0.7, 0.7]];
        let logged = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let p = prob_node(&mut g, rho.clone());
        let l = loss_ips(&mut g, p, &rho, &logged, &[1, 0, 1], 100.0).unwrap();
        assert!((g.scalar(l) + 2.0 / 3.0).abs() < 1e-12);
        let l = loss_ips(&mut g, p, &rho, &logged, &[0, 0, 0], 100.0).unwrap();
        assert_eq!(g.scalar(l), 0.0);
        let l0 = loss_banditnet(&mut g, p, &rho, &logged, &[1, 0, 1], 0.0, 100.0).unwrap();
        assert_eq!(g.scalar(l0), -2.0 / 3.0);
        let l = loss_banditnet(&mut g, p, &rho, &logged, &[1, 1, 1], 1.0, 100.0).unwrap();
        assert_eq!(g.scalar(l), 0.0);

        // Ratio 0.9/0.001 on one class exceeds the clip.
        let rho = array![[0.001]];
        let p = prob_node(&mut g, array![[0.9]]);
        let l = loss_ips(&mut g, p, &rho, &array![[1.0]], &[1], 100.0).unwrap();
        assert!((g.scalar(l) + 100.0).abs() < 1e-9);
    }

    #[test]
    fn fixmatch_mask_examples() {
        let m = fixmatch_mask(array![[0.96, 0.5, 0.01], [0.96, 0.5, 0.01]].view(), &[0, 1], 0.95);
        assert_eq!(m, array![[1.0, 0.0, 1.0], [0.0, 0.0, 0.0]]);
    }

    fn toy_net(r: &mut Rng, d: usize, c: usize) -> Mlp {
        let spec = MlpSpec {
            input_dim: d,
            hidden_dims: vec![5],
            output_dim: c,
            hidden_activation: Activation::Tanh,
        };
        let mut net = Mlp::init(spec, r).unwrap();
        for t in net.params_mut().iter_mut().filter(|t| t.name.ends_with("bias")) {
            t.values.mapv_inplace(|_| r.random_range(-0.5..0.5));
        }
        net
    }

    fn check(net: &Mlp, f: impl Fn(&mut Graph, NodeId) -> Result<NodeId>, x: &Matrix) -> f64 {
        let spec = net.spec().clone();
        grad_check(net.params(), 1e-5, |p: &ParamSet| {
            let net = Mlp::from_params(spec.clone(), p.clone())?;
            let mut g = Graph::new();
            let xs = g.constant(x.clone());
            let probs = net.forward_graph(&mut g, xs)?;
            let l = f(&mut g, probs)?;
            Ok((g, l))
        })
        .unwrap()
        .max_rel_error
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let mut r = rng::stream(21, "objectives");
        let (b, d, c) = (6, 8, 4);
        let net = toy_net(&mut r, d, c);
        let x = Array2::from_shape_fn((b, d), |_| r.random_range(0.0..1.0));
        let targets = Array2::from_shape_fn((b, c), |_| f64::from(r.random_bool(0.5)));
        let conf = Array2::from_shape_fn((b, c), |_| f64::from(r.random_bool(0.5)));
        let rho = Array2::from_shape_fn((b, c), |_| r.random_range(0.1..0.9));
        let delta: Vec<u8> = (0..b).map(|i| (i % 2) as u8).collect();
        let p0 = Array2::from_shape_fn((b, c), |_| r.random_range(0.05..0.95));
        let logged = rho.mapv(|v| f64::from(u8::from(v > 0.5)));
        assert!(check(&net, |g, p| loss_labeled(g, p, &targets), &x) < 1e-4);
        assert!(check(&net, |g, p| loss_pseudo(g, p, &conf, &targets), &x) < 1e-4);
        assert!(check(&net, |g, p| loss_bandit(g, p, &rho, &delta, &conf), &x) < 1e-4);
        assert!(check(&net, |g, p| loss_kl(g, p, &p0), &x) < 1e-4);
        assert!(check(&net, |g, p| loss_ips(g, p, &rho, &logged, &delta, 1e6), &x) < 1e-4);
        assert!(check(&net, |g, p| loss_banditnet(g, p, &rho, &logged, &delta, 0.9, 1e6), &x) < 1e-4);
    }
}
