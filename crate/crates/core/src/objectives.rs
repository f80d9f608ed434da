//! Loss terms: Gaussian KL, structure and attribute reconstruction, the
//! independence penalty, and the two alternating training objectives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, Graph};
use crate::model::{
    decode_adjacency, decode_sensitive, encode, gnn_forward, reparameterize, BoundGcn, BoundHead,
    GaussianPosterior, LatentSample, PvgaeModel, VgaeModel,
};
use crate::numerics::{RandomSource, Tape, Tensor, Var};

/// Floor on the per-dimension batch variance inside the penalty's logarithm.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Scalar loss terms in nats.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub kl_x: f64,
    pub recon_x: f64,
    pub kl_s: f64,
    pub recon_s: f64,
    pub penalty: f64,
    pub total_graph: f64,
    pub total_sensitive: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [
            self.kl_x,
            self.recon_x,
            self.kl_s,
            self.recon_s,
            self.penalty,
            self.total_graph,
            self.total_sensitive,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Per-dimension moments of the auxiliary variable `a = (Z_x + Z_s)/√2`
/// across nodes, plus the empirical correlation of `Z_x` and `Z_s`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PenaltyStats {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub correlation: Vec<f64>,
}

/// `KL[N(m, v) ‖ N(0, 1)]` in closed form.
pub fn kl_to_standard_normal(mean: f64, variance: f64) -> f64 {
    0.5 * (variance + mean * mean - 1.0 - variance.ln())
}

/// `(1/N) Σ ½(μ² + σ² − 1 − log σ²)` against a standard-normal prior.
pub fn gaussian_kl(tape: &mut Tape, post: GaussianPosterior) -> Result<Var> {
    let n = tape.value(post.mean).rows() as f64;
    let mu2 = tape.square(post.mean)?;
    let var = tape.exp(post.logvar)?;
    let s = tape.add(mu2, var)?;
    let s = tape.sub(s, post.logvar)?;
    let s = tape.add_scalar(s, -1.0)?;
    let total = tape.sum(s)?;
    tape.scale(total, 0.5 / n)
}

/// KL term as weighted inside both training objectives: the per-node KL
/// divided by N once more, the usual per-node VGAE scaling.
/// With the per-node KL alone the prior dominates and both posteriors
/// collapse onto it.
pub fn elbo_kl(tape: &mut Tape, post: GaussianPosterior) -> Result<Var> {
    let n = tape.value(post.mean).rows() as f64;
    let kl = gaussian_kl(tape, post)?;
    tape.scale(kl, 1.0 / n)
}

/// `norm · mean(−[w·t·ln p + (1 − t)·ln(1 − p)])`.
pub fn weighted_bce(
    tape: &mut Tape,
    p: Var,
    target: &Tensor,
    pos_weight: f64,
    norm: f64,
) -> Result<Var> {
    let pv = tape.value(p);
    pv.expect_same_shape(target, "weighted_bce")?;
    if let Some(bad) = pv.data().iter().find(|&&x| !(x > 0.0 && x < 1.0)) {
        return Err(Error::contract(format!(
            "edge probability {bad} outside (0, 1)"
        )));
    }
    let pos = tape.constant(target.map(|t| pos_weight * t));
    let neg = tape.constant(target.map(|t| 1.0 - t));
    let ln_p = tape.ln(p)?;
    let q = tape.one_minus(p)?;
    let ln_q = tape.ln(q)?;
    let a = tape.mul(pos, ln_p)?;
    let b = tape.mul(neg, ln_q)?;
    let ll = tape.add(a, b)?;
    let mean = tape.mean(ll)?;
    tape.scale(mean, -norm)
}

/// Class-balance constants of the structure loss for an adjacency target:
/// `w_pos = (N² − S)/S` and `norm = N² / (2 (N² − S))` with `S = Σ A`.
pub fn recon_weights(adj: &Tensor) -> Result<(f64, f64)> {
    let n2 = adj.len() as f64;
    let s = adj.sum();
    if s <= 0.0 || s >= n2 {
        return Err(Error::contract(format!(
            "adjacency with {s} positive entries out of {n2} has no class balance"
        )));
    }
    Ok(((n2 - s) / s, n2 / (2.0 * (n2 - s))))
}

/// Weighted binary cross-entropy between edge probabilities and the adjacency.
pub fn adjacency_recon_loss(tape: &mut Tape, p: Var, adj: &Tensor) -> Result<Var> {
    let (pos_weight, norm) = recon_weights(adj)?;
    weighted_bce(tape, p, adj, pos_weight, norm)
}

/// Mean cross-entropy over observed nodes only.
pub fn sensitive_recon_loss(
    tape: &mut Tape,
    logits: Var,
    sensitive: &[usize],
    observed: &[bool],
) -> Result<Var> {
    let (n, classes) = (tape.value(logits).rows(), tape.value(logits).cols());
    if sensitive.len() != n || observed.len() != n {
        return Err(Error::Dimension {
            op: "sensitive_recon_loss",
            left: vec![n, classes],
            right: vec![sensitive.len(), observed.len()],
        });
    }
    let count = observed.iter().filter(|&&b| b).count();
    if count == 0 {
        return Err(Error::contract("no observed sensitive attributes"));
    }
    let mut select = Tensor::zeros(&[n, classes]);
    for (i, (&s, &obs)) in sensitive.iter().zip(observed).enumerate() {
        if s >= classes {
            return Err(Error::contract(format!(
                "sensitive class {s} outside 0..{classes}"
            )));
        }
        if obs {
            select.set(i, s, -1.0 / count as f64);
        }
    }
    let lsm = tape.log_softmax_rows(logits)?;
    let sel = tape.constant(select);
    let picked = tape.mul(lsm, sel)?;
    tape.sum(picked)
}

/// KL between the batch distribution of `(Z_x + Z_s)/√2` and `N(0, I)`,
/// estimated per latent dimension from its empirical moments across nodes
/// and averaged over dimensions.
pub fn independence_penalty(tape: &mut Tape, zx: Var, zs: Var) -> Result<(Var, PenaltyStats)> {
    let (xv, sv) = (tape.value(zx), tape.value(zs));
    xv.expect_same_shape(sv, "independence_penalty")?;
    xv.expect_matrix("independence_penalty")?;
    let (n, d) = (xv.rows(), xv.cols());
    if n < 2 {
        return Err(Error::contract(format!(
            "independence penalty needs at least 2 nodes, got {n}"
        )));
    }
    let correlation = column_correlations(xv, sv);

    let sum = tape.add(zx, zs)?;
    let a = tape.scale(sum, std::f64::consts::FRAC_1_SQRT_2)?;
    let mean = tape.mean_rows(a)?;
    let mean_b = tape.broadcast_rows(mean, n)?;
    let centered = tape.sub(a, mean_b)?;
    let sq = tape.square(centered)?;
    let var = tape.mean_rows(sq)?;
    let mean2 = tape.square(mean)?;
    let ln_var = tape.ln_floor(var, VARIANCE_FLOOR)?;
    let t = tape.add(var, mean2)?;
    let t = tape.sub(t, ln_var)?;
    let t = tape.add_scalar(t, -1.0)?;
    let total = tape.sum(t)?;
    let penalty = tape.scale(total, 0.5 / d as f64)?;

    let stats = PenaltyStats {
        mean: tape.value(mean).data().to_vec(),
        variance: tape.value(var).data().to_vec(),
        correlation,
    };
    Ok((penalty, stats))
}

fn column_correlations(x: &Tensor, y: &Tensor) -> Vec<f64> {
    let (n, d) = (x.rows() as f64, x.cols());
    (0..d)
        .map(|j| {
            let col = |t: &Tensor| -> Vec<f64> { (0..t.rows()).map(|i| t.get(i, j)).collect() };
            let (a, b) = (col(x), col(y));
            let ma = a.iter().sum::<f64>() / n;
            let mb = b.iter().sum::<f64>() / n;
            let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
            for (p, q) in a.iter().zip(&b) {
                sab += (p - ma) * (q - mb);
                saa += (p - ma).powi(2);
                sbb += (q - mb).powi(2);
            }
            if saa > 0.0 && sbb > 0.0 {
                sab / (saa * sbb).sqrt()
            } else {
                0.0
            }
        })
        .collect()
}

/// Mutual information of a bivariate Gaussian with correlation `rho`.
pub fn mutual_info_gaussian(rho: f64) -> Result<f64> {
    if !(rho.abs() < 1.0) {
        return Err(Error::Domain(format!(
            "correlation must satisfy |ρ| < 1, got {rho}"
        )));
    }
    Ok(-0.5 * (1.0 - rho * rho).ln())
}

/// Dense tensors a training step needs from a graph.
#[derive(Clone, Debug)]
pub struct GraphInputs {
    pub adj_norm: Tensor,
    pub features: Tensor,
    /// Reconstruction target: raw adjacency of the training graph.
    pub adj_label: Tensor,
}

impl GraphInputs {
    pub fn from_graph(g: &Graph) -> Self {
        Self {
            adj_norm: normalize_adjacency(g),
            features: g.encoder_features(),
            adj_label: g.adjacency(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.adj_norm.rows()
    }
}

/// One recorded objective evaluation, ready for a backward pass.
#[derive(Debug)]
pub struct ObjectiveEval {
    pub tape: Tape,
    pub loss: Var,
    /// Trainable leaves in optimizer order.
    pub params: Vec<Var>,
    pub breakdown: LossBreakdown,
    pub penalty_stats: Option<PenaltyStats>,
}

impl ObjectiveEval {
    pub fn gradients(&self) -> Result<Vec<Tensor>> {
        Ok(self.tape.backward(self.loss)?.wrt_all(&self.params))
    }
}

struct GraphTerms {
    h: Var,
    zx: LatentSample,
    kl: Var,
    recon: Var,
    total: Var,
}

/// Shared by the split model and the plain baseline so both follow the
/// exact same sequence of operations and random draws.
fn graph_terms(
    tape: &mut Tape,
    inputs: &GraphInputs,
    gnn: &BoundGcn,
    head: &BoundHead,
    rng: &mut RandomSource,
) -> Result<GraphTerms> {
    let adj = tape.constant(inputs.adj_norm.clone());
    let x = tape.constant(inputs.features.clone());
    let h = gnn_forward(tape, adj, x, gnn)?;
    let post = encode(tape, h, head)?;
    let zx = reparameterize(tape, post, rng)?;
    let p = decode_adjacency(tape, zx.z)?;
    let recon = adjacency_recon_loss(tape, p, &inputs.adj_label)?;
    let kl = elbo_kl(tape, post)?;
    let total = tape.add(kl, recon)?;
    Ok(GraphTerms {
        h,
        zx,
        kl,
        recon,
        total,
    })
}

/// Sensitive-branch objective `KL_s + CE_s`. Only `θ_s` and `φ_s` are
/// trainable; the shared GCN enters as a constant.
pub fn loss_sensitive(
    model: &PvgaeModel,
    inputs: &GraphInputs,
    sensitive: &[usize],
    observed: &[bool],
    rng: &mut RandomSource,
) -> Result<ObjectiveEval> {
    let mut tape = Tape::new();
    let adj = tape.constant(inputs.adj_norm.clone());
    let x = tape.constant(inputs.features.clone());
    let gnn = model.gnn.bind(&mut tape, false);
    let branch = crate::model::BoundSensitiveBranch {
        head: model.sensitive.bind(&mut tape, true),
        decoder: model.sensitive_decoder.bind(&mut tape, true),
    };
    let h = gnn_forward(&mut tape, adj, x, &gnn)?;
    let post = encode(&mut tape, h, &branch.head)?;
    let zs = reparameterize(&mut tape, post, rng)?;
    let logits = decode_sensitive(&mut tape, zs.z, &branch.decoder)?;
    let recon = sensitive_recon_loss(&mut tape, logits, sensitive, observed)?;
    let kl = elbo_kl(&mut tape, post)?;
    let loss = tape.add(kl, recon)?;

    let breakdown = LossBreakdown {
        kl_s: tape.scalar(kl)?,
        recon_s: tape.scalar(recon)?,
        total_sensitive: tape.scalar(loss)?,
        ..LossBreakdown::default()
    };
    Ok(ObjectiveEval {
        params: branch.vars(),
        tape,
        loss,
        breakdown,
        penalty_stats: None,
    })
}

/// Graph-branch objective `KL_x + Recon_x + β · penalty`. `θ_g` and `θ_x`
/// are trainable; `θ_s` is frozen, so `Z_s` depends on training only
/// through the shared representation.
///
/// `rng_x` drives the draw of `Z_x`, `rng_s` the draw of `Z_s`.
pub fn loss_graph(
    model: &PvgaeModel,
    inputs: &GraphInputs,
    beta: f64,
    rng_x: &mut RandomSource,
    rng_s: &mut RandomSource,
) -> Result<ObjectiveEval> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::config(format!("beta must be finite and >= 0, got {beta}")));
    }
    let mut tape = Tape::new();
    let branch = crate::model::BoundGraphBranch {
        gnn: model.gnn.bind(&mut tape, true),
        head: model.nonsensitive.bind(&mut tape, true),
    };
    let terms = graph_terms(&mut tape, inputs, &branch.gnn, &branch.head, rng_x)?;
    let head_s = model.sensitive.bind(&mut tape, false);
    let post_s = encode(&mut tape, terms.h, &head_s)?;
    let zs = reparameterize(&mut tape, post_s, rng_s)?;
    let (penalty, stats) = independence_penalty(&mut tape, terms.zx.z, zs.z)?;
    let weighted = tape.scale(penalty, beta)?;
    let loss = tape.add(terms.total, weighted)?;

    let breakdown = LossBreakdown {
        kl_x: tape.scalar(terms.kl)?,
        recon_x: tape.scalar(terms.recon)?,
        penalty: tape.scalar(penalty)?,
        total_graph: tape.scalar(loss)?,
        ..LossBreakdown::default()
    };
    Ok(ObjectiveEval {
        params: branch.vars(),
        tape,
        loss,
        breakdown,
        penalty_stats: Some(stats),
    })
}

/// Negative evidence lower bound of the plain baseline.
pub fn loss_vgae(
    model: &VgaeModel,
    inputs: &GraphInputs,
    rng: &mut RandomSource,
) -> Result<ObjectiveEval> {
    let mut tape = Tape::new();
    let branch = model.bind(&mut tape);
    let terms = graph_terms(&mut tape, inputs, &branch.gnn, &branch.head, rng)?;
    let breakdown = LossBreakdown {
        kl_x: tape.scalar(terms.kl)?,
        recon_x: tape.scalar(terms.recon)?,
        total_graph: tape.scalar(terms.total)?,
        ..LossBreakdown::default()
    };
    Ok(ObjectiveEval {
        params: branch.vars(),
        loss: terms.total,
        tape,
        breakdown,
        penalty_stats: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::sample_standard_normal;

    fn posterior(tape: &mut Tape, mean: Tensor, logvar: Tensor) -> GaussianPosterior {
        GaussianPosterior {
            mean: tape.constant(mean),
            logvar: tape.constant(logvar),
        }
    }

    #[test]
    fn kl_of_prior_is_zero() {
        let mut tape = Tape::new();
        let p = posterior(&mut tape, Tensor::zeros(&[4, 3]), Tensor::zeros(&[4, 3]));
        let kl = gaussian_kl(&mut tape, p).unwrap();
        assert_eq!(tape.scalar(kl).unwrap(), 0.0);
    }

    #[test]
    fn kl_unit_mean_shift() {
        let mut tape = Tape::new();
        let p = posterior(&mut tape, Tensor::ones(&[1, 1]), Tensor::zeros(&[1, 1]));
        let kl = gaussian_kl(&mut tape, p).unwrap();
        assert!((tape.scalar(kl).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kl_variance_two() {
        let mut tape = Tape::new();
        let p = posterior(&mut tape, Tensor::zeros(&[1, 1]), Tensor::full(&[1, 1], 2f64.ln()));
        let kl = gaussian_kl(&mut tape, p).unwrap();
        let expected = 0.5 * (2.0 - 1.0 - 2f64.ln());
        assert!((tape.scalar(kl).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.15343).abs() < 1e-5);
    }

    #[test]
    fn perfect_reconstruction_is_near_zero() {
        let adj = Tensor::from_rows(&[
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.0, 1.0],
            vec![0.0, 1.0, 0.0],
        ])
        .unwrap();
        let (w_pos, _) = recon_weights(&adj).unwrap();
        let mut tape = Tape::new();
        let p = tape.constant(adj.clone());
        let p = tape.clamp(p, 1e-7, 1.0 - 1e-7).unwrap();
        let l = adjacency_recon_loss(&mut tape, p, &adj).unwrap();
        assert!(tape.scalar(l).unwrap() < 1e-6 * w_pos);
    }

    #[test]
    fn max_entropy_prediction_unweighted() {
        let adj = Tensor::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::full(&[2, 2], 0.5));
        let l = weighted_bce(&mut tape, p, &adj, 1.0, 1.0).unwrap();
        assert!((tape.scalar(l).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn two_node_weighted_bce_by_hand() {
        // A = [[0,1],[1,0]]: S = 2, N² = 4, w_pos = 1, norm = 1.
        let adj = Tensor::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let p_mat = Tensor::from_rows(&[vec![0.3, 0.9], vec![0.9, 0.2]]).unwrap();
        let mut tape = Tape::new();
        let p = tape.constant(p_mat);
        let l = adjacency_recon_loss(&mut tape, p, &adj).unwrap();
        let hand = -(0.7f64.ln() + 0.9f64.ln() + 0.9f64.ln() + 0.8f64.ln()) / 4.0;
        assert!((tape.scalar(l).unwrap() - hand).abs() < 1e-10);
    }

    #[test]
    fn probabilities_outside_unit_interval_rejected() {
        let adj = Tensor::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let mut tape = Tape::new();
        let p = tape.constant(adj.clone());
        assert!(matches!(
            adjacency_recon_loss(&mut tape, p, &adj),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn confident_correct_logits() {
        let s = vec![0, 1, 1, 0];
        let mut logits = Tensor::zeros(&[4, 2]);
        for (i, &c) in s.iter().enumerate() {
            logits.set(i, c, 100.0);
        }
        let mut tape = Tape::new();
        let l = tape.constant(logits);
        let loss = sensitive_recon_loss(&mut tape, l, &s, &[true; 4]).unwrap();
        assert!(tape.scalar(loss).unwrap() < 1e-6);
    }

    #[test]
    fn uniform_logits_give_log_classes() {
        let mut tape = Tape::new();
        let l = tape.constant(Tensor::zeros(&[5, 3]));
        let loss = sensitive_recon_loss(&mut tape, l, &[0, 1, 2, 0, 1], &[true; 5]).unwrap();
        assert!((tape.scalar(loss).unwrap() - 3f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn masked_nodes_get_exactly_zero_gradient() {
        let mut rng = RandomSource::new(1);
        let mut tape = Tape::new();
        let l = tape.param(sample_standard_normal(&[4, 2], &mut rng));
        let mask = [true, false, true, false];
        let loss = sensitive_recon_loss(&mut tape, l, &[0, 1, 1, 0], &mask).unwrap();
        let g = tape.backward(loss).unwrap().wrt(l);
        for (i, &m) in mask.iter().enumerate() {
            if !m {
                assert_eq!(g.row(i), &[0.0, 0.0]);
            } else {
                assert!(g.row(i).iter().any(|&v| v != 0.0));
            }
        }
    }

    #[test]
    fn empty_mask_is_a_contract_error() {
        let mut tape = Tape::new();
        let l = tape.constant(Tensor::zeros(&[2, 2]));
        assert!(matches!(
            sensitive_recon_loss(&mut tape, l, &[0, 1], &[false, false]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn penalty_independent_standard_normals_is_small() {
        let mut rng = RandomSource::new(3);
        let mut tape = Tape::new();
        let zx = tape.constant(sample_standard_normal(&[100_000, 2], &mut rng));
        let zs = tape.constant(sample_standard_normal(&[100_000, 2], &mut rng));
        let (p, stats) = independence_penalty(&mut tape, zx, zs).unwrap();
        assert!(tape.scalar(p).unwrap() < 5e-4);
        assert!(stats.correlation.iter().all(|r| r.abs() < 0.02));
    }

    #[test]
    fn penalty_perfect_correlation() {
        let mut rng = RandomSource::new(4);
        let z = sample_standard_normal(&[200_000, 1], &mut rng);
        let mut tape = Tape::new();
        let zx = tape.constant(z.clone());
        let zs = tape.constant(z);
        let (p, stats) = independence_penalty(&mut tape, zx, zs).unwrap();
        assert!((tape.scalar(p).unwrap() - 0.5 * (1.0 - 2f64.ln())).abs() < 5e-3);
        assert!((stats.correlation[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn penalty_anticorrelation_hits_variance_floor() {
        let mut rng = RandomSource::new(5);
        let z = sample_standard_normal(&[10_000, 1], &mut rng);
        let mut tape = Tape::new();
        let zx = tape.constant(z.clone());
        let zs = tape.constant(z.map(|v| -v));
        let (p, _) = independence_penalty(&mut tape, zx, zs).unwrap();
        let expected = 0.5 * (1e6f64.ln() - 1.0);
        assert!((tape.scalar(p).unwrap() - expected).abs() < 1e-6);
        assert!((expected - 6.41).abs() < 0.01);
    }

    #[test]
    fn penalty_is_the_closed_form_of_batch_moments() {
        // Column values chosen so that a = (x + s)/√2 has mean 0.3 and variance 1.7.
        let n = 8;
        let (m, v) = (0.3f64, 1.7f64);
        let base: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let a: Vec<f64> = base.iter().map(|b| m + v.sqrt() * b).collect();
        let x: Vec<f64> = a.iter().map(|ai| ai * std::f64::consts::SQRT_2 * 0.25).collect();
        let s: Vec<f64> = a.iter().map(|ai| ai * std::f64::consts::SQRT_2 * 0.75).collect();
        let mut tape = Tape::new();
        let zx = tape.constant(Tensor::new(vec![n, 1], x).unwrap());
        let zs = tape.constant(Tensor::new(vec![n, 1], s).unwrap());
        let (p, stats) = independence_penalty(&mut tape, zx, zs).unwrap();
        assert!((stats.mean[0] - m).abs() < 1e-12);
        assert!((stats.variance[0] - v).abs() < 1e-12);
        assert!((tape.scalar(p).unwrap() - kl_to_standard_normal(m, v)).abs() < 1e-10);
    }

    #[test]
    fn penalty_needs_two_nodes() {
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::zeros(&[1, 3]));
        assert!(matches!(
            independence_penalty(&mut tape, z, z),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn mutual_information_values() {
        assert_eq!(mutual_info_gaussian(0.0).unwrap(), 0.0);
        assert!((mutual_info_gaussian(0.8).unwrap() - 0.51083).abs() < 1e-5);
        assert_eq!(
            mutual_info_gaussian(0.37).unwrap(),
            mutual_info_gaussian(-0.37).unwrap()
        );
        assert!(mutual_info_gaussian(1.0).is_err());
        assert!(mutual_info_gaussian(-1.2).is_err());
        assert!(mutual_info_gaussian(0.999_999).unwrap() > 6.0);
    }
}
