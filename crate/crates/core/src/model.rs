//! Shared GCN encoder, variational heads, and the two decoders.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{glorot_uniform, sample_standard_normal, RandomSource, Tape, Tensor, Var, PROB_EPS};

/// Bounds applied to every predicted log-variance.
pub const LOGVAR_MIN: f64 = -10.0;
pub const LOGVAR_MAX: f64 = 10.0;

/// RNG stream ids used for parameter initialization.
const INIT_GRAPH_STREAM: u64 = 0x1001;
const INIT_SENSITIVE_STREAM: u64 = 0x1002;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub sensitive_classes: usize,
}

/// Dense affine map `x W + b`, `W: [in, out]`, `b: [1, out]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Copy, Debug)]
pub struct BoundLinear {
    pub weight: Var,
    pub bias: Var,
}

impl Linear {
    pub fn glorot(fan_in: usize, fan_out: usize, rng: &mut RandomSource) -> Self {
        Self {
            weight: glorot_uniform(fan_in, fan_out, rng),
            bias: Tensor::zeros(&[1, fan_out]),
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[fan_in, fan_out]),
            bias: Tensor::zeros(&[1, fan_out]),
        }
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundLinear {
        BoundLinear {
            weight: tape.leaf(self.weight.clone(), trainable),
            bias: tape.leaf(self.bias.clone(), trainable),
        }
    }

    pub(crate) fn params_mut(&mut self) -> [&mut Tensor; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

impl BoundLinear {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let xw = tape.matmul(x, self.weight)?;
        tape.add_row(xw, self.bias)
    }

    pub(crate) fn vars(&self) -> [Var; 2] {
        [self.weight, self.bias]
    }
}

/// Two-layer graph convolution producing the preliminary representation `H`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcnEncoder {
    pub w1: Tensor,
    pub w2: Tensor,
}

#[derive(Clone, Copy, Debug)]
pub struct BoundGcn {
    pub w1: Var,
    pub w2: Var,
}

impl GcnEncoder {
    pub fn glorot(feature_dim: usize, hidden_dim: usize, rng: &mut RandomSource) -> Self {
        Self {
            w1: glorot_uniform(feature_dim, hidden_dim, rng),
            w2: glorot_uniform(hidden_dim, hidden_dim, rng),
        }
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundGcn {
        BoundGcn {
            w1: tape.leaf(self.w1.clone(), trainable),
            w2: tape.leaf(self.w2.clone(), trainable),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.w2.cols()
    }
}

impl BoundGcn {
    pub(crate) fn vars(&self) -> [Var; 2] {
        [self.w1, self.w2]
    }
}

/// Variational head producing a diagonal Gaussian over node latents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianHead {
    pub mean: Linear,
    pub logvar: Linear,
}

#[derive(Clone, Copy, Debug)]
pub struct BoundHead {
    pub mean: BoundLinear,
    pub logvar: BoundLinear,
}

impl GaussianHead {
    pub fn glorot(hidden_dim: usize, latent_dim: usize, rng: &mut RandomSource) -> Self {
        Self {
            mean: Linear::glorot(hidden_dim, latent_dim, rng),
            logvar: Linear::glorot(hidden_dim, latent_dim, rng),
        }
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundHead {
        BoundHead {
            mean: self.mean.bind(tape, trainable),
            logvar: self.logvar.bind(tape, trainable),
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.mean.weight.cols()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let [a, b] = self.mean.params_mut();
        let [c, d] = self.logvar.params_mut();
        vec![a, b, c, d]
    }
}

impl BoundHead {
    fn vars(&self) -> Vec<Var> {
        [self.mean.vars(), self.logvar.vars()].concat()
    }
}

/// Diagonal Gaussian posterior `q(Z | H)` recorded on a tape.
#[derive(Clone, Copy, Debug)]
pub struct GaussianPosterior {
    pub mean: Var,
    pub logvar: Var,
}

/// Reparameterized draw `Z = μ + σ ⊙ ε`.
#[derive(Clone, Debug)]
pub struct LatentSample {
    pub z: Var,
    pub eps: Tensor,
    pub posterior: GaussianPosterior,
}

/// `H = ReLU(Â · ReLU(Â X W₁) W₂)`.
pub fn gnn_forward(tape: &mut Tape, adj_norm: Var, features: Var, gnn: &BoundGcn) -> Result<Var> {
    let (n, n2) = (tape.value(adj_norm).rows(), tape.value(adj_norm).cols());
    if n != n2 || tape.value(features).rows() != n {
        return Err(Error::Dimension {
            op: "gnn_forward",
            left: tape.value(adj_norm).shape().to_vec(),
            right: tape.value(features).shape().to_vec(),
        });
    }
    let ax = tape.matmul(adj_norm, features)?;
    let z1 = tape.matmul(ax, gnn.w1)?;
    let h1 = tape.relu(z1)?;
    let hw = tape.matmul(h1, gnn.w2)?;
    let z2 = tape.matmul(adj_norm, hw)?;
    tape.relu(z2)
}

/// `μ = H W_μ + b_μ`, `log σ² = clamp(H W_σ + b_σ)`.
pub fn encode(tape: &mut Tape, h: Var, head: &BoundHead) -> Result<GaussianPosterior> {
    let mean = head.mean.forward(tape, h)?;
    let raw = head.logvar.forward(tape, h)?;
    let logvar = tape.clamp(raw, LOGVAR_MIN, LOGVAR_MAX)?;
    Ok(GaussianPosterior { mean, logvar })
}

/// Draws `Z = μ + exp(½ log σ²) ⊙ ε`; `ε` is a constant on the tape.
pub fn reparameterize(
    tape: &mut Tape,
    post: GaussianPosterior,
    rng: &mut RandomSource,
) -> Result<LatentSample> {
    let eps = sample_standard_normal(tape.value(post.mean).shape(), rng);
    let half = tape.scale(post.logvar, 0.5)?;
    let std = tape.exp(half)?;
    let eps_var = tape.constant(eps.clone());
    let noise = tape.mul(std, eps_var)?;
    let z = tape.add(post.mean, noise)?;
    Ok(LatentSample {
        z,
        eps,
        posterior: post,
    })
}

/// Inner-product decoder `P = sigmoid(Z Zᵀ)`, clamped into `[ε, 1 − ε]`.
pub fn decode_adjacency(tape: &mut Tape, z: Var) -> Result<Var> {
    let logits = tape.matmul_nt(z, z)?;
    let p = tape.sigmoid(logits)?;
    tape.clamp(p, PROB_EPS, 1.0 - PROB_EPS)
}

/// Sensitive-attribute logits `Z_s W + b`.
pub fn decode_sensitive(tape: &mut Tape, z: Var, decoder: &BoundLinear) -> Result<Var> {
    let (zc, wr) = (tape.value(z).cols(), tape.value(decoder.weight).rows());
    if zc != wr {
        return Err(Error::Dimension {
            op: "decode_sensitive",
            left: tape.value(z).shape().to_vec(),
            right: tape.value(decoder.weight).shape().to_vec(),
        });
    }
    decoder.forward(tape, z)
}

/// Anything exposing a GCN encoder and the head whose means are published.
pub trait GraphEncoder {
    fn gnn(&self) -> &GcnEncoder;
    fn graph_head(&self) -> &GaussianHead;
}

/// Plain variational graph autoencoder: one encoder head, inner-product decoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VgaeModel {
    pub gnn: GcnEncoder,
    pub head: GaussianHead,
}

impl VgaeModel {
    /// Initialization is identical to the graph branch of
    /// [`PvgaeModel::init`] for the same dims and seed.
    pub fn init(dims: &ModelDims, rng: &RandomSource) -> Self {
        let (gnn, head) = init_graph_branch(dims, rng);
        Self { gnn, head }
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundGraphBranch {
        BoundGraphBranch {
            gnn: self.gnn.bind(tape, true),
            head: self.head.bind(tape, true),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = vec![&mut self.gnn.w1, &mut self.gnn.w2];
        out.extend(self.head.params_mut());
        out
    }
}

impl GraphEncoder for VgaeModel {
    fn gnn(&self) -> &GcnEncoder {
        &self.gnn
    }
    fn graph_head(&self) -> &GaussianHead {
        &self.head
    }
}

/// Trainable handles for `θ_g` and `θ_x`, in optimizer order.
#[derive(Clone, Copy, Debug)]
pub struct BoundGraphBranch {
    pub gnn: BoundGcn,
    pub head: BoundHead,
}

impl BoundGraphBranch {
    pub fn vars(&self) -> Vec<Var> {
        let mut v = self.gnn.vars().to_vec();
        v.extend(self.head.vars());
        v
    }
}

/// Trainable handles for `θ_s` and `φ_s`, in optimizer order.
#[derive(Clone, Copy, Debug)]
pub struct BoundSensitiveBranch {
    pub head: BoundHead,
    pub decoder: BoundLinear,
}

impl BoundSensitiveBranch {
    pub fn vars(&self) -> Vec<Var> {
        let mut v = self.head.vars();
        v.extend(self.decoder.vars());
        v
    }
}

/// The split model: shared GCN (`θ_g`), non-sensitive head (`θ_x`),
/// sensitive head (`θ_s`), and sensitive decoder (`φ_s`). The structure
/// decoder is parameter-free.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PvgaeModel {
    pub gnn: GcnEncoder,
    pub nonsensitive: GaussianHead,
    pub sensitive: GaussianHead,
    pub sensitive_decoder: Linear,
}

fn init_graph_branch(dims: &ModelDims, rng: &RandomSource) -> (GcnEncoder, GaussianHead) {
    let mut r = rng.derive(INIT_GRAPH_STREAM);
    let gnn = GcnEncoder::glorot(dims.feature_dim, dims.hidden_dim, &mut r);
    let head = GaussianHead::glorot(dims.hidden_dim, dims.latent_dim, &mut r);
    (gnn, head)
}

impl PvgaeModel {
    pub fn init(dims: &ModelDims, rng: &RandomSource) -> Self {
        let (gnn, nonsensitive) = init_graph_branch(dims, rng);
        let mut r = rng.derive(INIT_SENSITIVE_STREAM);
        let sensitive = GaussianHead::glorot(dims.hidden_dim, dims.latent_dim, &mut r);
        let sensitive_decoder = Linear::glorot(dims.latent_dim, dims.sensitive_classes, &mut r);
        Self {
            gnn,
            nonsensitive,
            sensitive,
            sensitive_decoder,
        }
    }

    /// All-zero parameters.
    pub fn zeros(dims: &ModelDims) -> Self {
        let head = || GaussianHead {
            mean: Linear::zeros(dims.hidden_dim, dims.latent_dim),
            logvar: Linear::zeros(dims.hidden_dim, dims.latent_dim),
        };
        Self {
            gnn: GcnEncoder {
                w1: Tensor::zeros(&[dims.feature_dim, dims.hidden_dim]),
                w2: Tensor::zeros(&[dims.hidden_dim, dims.hidden_dim]),
            },
            nonsensitive: head(),
            sensitive: head(),
            sensitive_decoder: Linear::zeros(dims.latent_dim, dims.sensitive_classes),
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.nonsensitive.latent_dim()
    }

    pub fn sensitive_classes(&self) -> usize {
        self.sensitive_decoder.weight.cols()
    }

    /// `θ_g` and `θ_x`, matching [`BoundGraphBranch::vars`].
    pub fn graph_params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = vec![&mut self.gnn.w1, &mut self.gnn.w2];
        out.extend(self.nonsensitive.params_mut());
        out
    }

    /// `θ_s` and `φ_s`, matching [`BoundSensitiveBranch::vars`].
    pub fn sensitive_params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.sensitive.params_mut();
        out.extend(self.sensitive_decoder.params_mut());
        out
    }

    pub fn graph_branch(&self) -> VgaeModel {
        VgaeModel {
            gnn: self.gnn.clone(),
            head: self.nonsensitive.clone(),
        }
    }
}

impl GraphEncoder for PvgaeModel {
    fn gnn(&self) -> &GcnEncoder {
        &self.gnn
    }
    fn graph_head(&self) -> &GaussianHead {
        &self.nonsensitive
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::sigmoid;

    fn dims() -> ModelDims {
        ModelDims {
            feature_dim: 3,
            hidden_dim: 5,
            latent_dim: 4,
            sensitive_classes: 2,
        }
    }

    fn random_tensor(shape: &[usize], rng: &mut RandomSource) -> Tensor {
        let mut t = Tensor::zeros(shape);
        t.data_mut().iter_mut().for_each(|x| *x = rng.uniform(-1.0, 1.0));
        t
    }

    #[test]
    fn single_node_forward_is_two_relu_layers() {
        let gnn = GcnEncoder {
            w1: Tensor::from_rows(&[vec![1.0, -1.0], vec![0.5, 2.0]]).unwrap(),
            w2: Tensor::from_rows(&[vec![1.0, 0.0], vec![-0.5, 1.0]]).unwrap(),
        };
        let x = Tensor::from_rows(&[vec![2.0, 1.0]]).unwrap();
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::from_rows(&[vec![1.0]]).unwrap());
        let xv = tape.constant(x.clone());
        let g = gnn.bind(&mut tape, false);
        let h = gnn_forward(&mut tape, a, xv, &g).unwrap();
        let h1 = x.matmul(&gnn.w1).unwrap().map(|v| v.max(0.0));
        let expected = h1.matmul(&gnn.w2).unwrap().map(|v| v.max(0.0));
        assert_eq!(tape.value(h), &expected);
    }

    #[test]
    fn zero_features_give_zero_representation() {
        let model = PvgaeModel::init(&dims(), &RandomSource::new(0));
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::identity(4));
        let x = tape.constant(Tensor::zeros(&[4, 3]));
        let g = model.gnn.bind(&mut tape, false);
        let h = gnn_forward(&mut tape, a, x, &g).unwrap();
        assert_eq!(tape.value(h), &Tensor::zeros(&[4, 5]));
    }

    #[test]
    fn gnn_dimension_mismatch() {
        let model = PvgaeModel::init(&dims(), &RandomSource::new(0));
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::identity(4));
        let x = tape.constant(Tensor::zeros(&[5, 3]));
        let g = model.gnn.bind(&mut tape, false);
        assert!(gnn_forward(&mut tape, a, x, &g).is_err());
    }

    #[test]
    fn zero_representation_encodes_to_prior() {
        let model = PvgaeModel::init(&dims(), &RandomSource::new(0));
        let mut tape = Tape::new();
        let h = tape.constant(Tensor::zeros(&[3, 5]));
        let head = model.nonsensitive.bind(&mut tape, false);
        let post = encode(&mut tape, h, &head).unwrap();
        assert_eq!(tape.value(post.mean), &Tensor::zeros(&[3, 4]));
        assert_eq!(tape.value(post.logvar), &Tensor::zeros(&[3, 4]));
    }

    #[test]
    fn extreme_logvar_is_clamped() {
        let mut head = GaussianHead::glorot(1, 2, &mut RandomSource::new(0));
        head.logvar.weight = Tensor::full(&[1, 2], 50.0);
        let mut tape = Tape::new();
        let h = tape.constant(Tensor::ones(&[1, 1]));
        let b = head.bind(&mut tape, false);
        let post = encode(&mut tape, h, &b).unwrap();
        assert_eq!(tape.value(post.logvar).data(), &[10.0, 10.0]);
    }

    #[test]
    fn encode_mean_gradient_matches_finite_differences() {
        let mut rng = RandomSource::new(4);
        let h = random_tensor(&[6, 5], &mut rng).map(f64::abs);
        let head = GaussianHead::glorot(5, 4, &mut rng);
        let weights = random_tensor(&[6, 4], &mut rng);
        let f = |w: &Tensor| -> (f64, Tensor) {
            let mut hd = head.clone();
            hd.mean.weight = w.clone();
            let mut tape = Tape::new();
            let hv = tape.constant(h.clone());
            let b = hd.bind(&mut tape, true);
            let post = encode(&mut tape, hv, &b).unwrap();
            let wv = tape.constant(weights.clone());
            let prod = tape.mul(post.mean, wv).unwrap();
            let sq = tape.square(post.logvar).unwrap();
            let s1 = tape.sum(prod).unwrap();
            let s2 = tape.sum(sq).unwrap();
            let l = tape.add(s1, s2).unwrap();
            let g = tape.backward(l).unwrap().wrt(b.mean.weight);
            (tape.scalar(l).unwrap(), g)
        };
        let w0 = head.mean.weight.clone();
        let (_, analytic) = f(&w0);
        for k in 0..w0.len() {
            let mut p = w0.clone();
            p.data_mut()[k] += 1e-5;
            let mut m = w0.clone();
            m.data_mut()[k] -= 1e-5;
            let fd = (f(&p).0 - f(&m).0) / 2e-5;
            let a = analytic.data()[k];
            assert!((a - fd).abs() / a.abs().max(fd.abs()).max(1e-6) < 1e-4);
        }
    }

    #[test]
    fn reparameterization_with_tiny_sigma_returns_mean() {
        let mut tape = Tape::new();
        let mean = tape.constant(Tensor::full(&[5, 3], 0.7));
        let logvar = tape.constant(Tensor::full(&[5, 3], LOGVAR_MIN));
        let post = GaussianPosterior { mean, logvar };
        let s = reparameterize(&mut tape, post, &mut RandomSource::new(1)).unwrap();
        for (z, e) in tape.value(s.z).data().iter().zip(s.eps.data()) {
            assert!((z - 0.7).abs() < 0.02 * e.abs() + 1e-15);
        }
    }

    #[test]
    fn reparameterization_unit_variance() {
        let mut tape = Tape::new();
        let mean = tape.constant(Tensor::zeros(&[100_000, 2]));
        let logvar = tape.constant(Tensor::zeros(&[100_000, 2]));
        let post = GaussianPosterior { mean, logvar };
        let s = reparameterize(&mut tape, post, &mut RandomSource::new(2)).unwrap();
        let z = tape.value(s.z);
        for d in 0..2 {
            let col: Vec<f64> = (0..z.rows()).map(|i| z.get(i, d)).collect();
            let m = col.iter().sum::<f64>() / col.len() as f64;
            let v = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / col.len() as f64;
            assert!((v - 1.0).abs() < 0.05, "{v}");
        }
    }

    #[test]
    fn reparameterization_gradient_flows_to_mean_and_logvar() {
        let mut tape = Tape::new();
        let mean = tape.param(Tensor::zeros(&[2, 2]));
        let logvar = tape.param(Tensor::zeros(&[2, 2]));
        let post = GaussianPosterior { mean, logvar };
        let s = reparameterize(&mut tape, post, &mut RandomSource::new(3)).unwrap();
        let l = tape.sum(s.z).unwrap();
        let g = tape.backward(l).unwrap();
        assert_eq!(g.wrt(mean), Tensor::ones(&[2, 2]));
        let expected = s.eps.map(|e| 0.5 * e);
        assert_eq!(g.wrt(logvar), expected);
    }

    #[test]
    fn reparameterization_is_deterministic() {
        let draw = || {
            let mut tape = Tape::new();
            let mean = tape.constant(Tensor::zeros(&[3, 3]));
            let logvar = tape.constant(Tensor::zeros(&[3, 3]));
            let s = reparameterize(&mut tape, GaussianPosterior { mean, logvar }, &mut RandomSource::new(5))
                .unwrap();
            tape.value(s.z).clone()
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn adjacency_decoder_cases() {
        let mut tape = Tape::new();
        let z0 = tape.constant(Tensor::zeros(&[3, 2]));
        let p0 = decode_adjacency(&mut tape, z0).unwrap();
        assert!(tape.value(p0).data().iter().all(|&p| p == 0.5));

        let row = vec![1.0, 3.0];
        let z = tape.constant(Tensor::from_rows(&[row.clone(), row]).unwrap());
        let p = decode_adjacency(&mut tape, z).unwrap();
        assert!((tape.value(p).get(0, 1) - sigmoid(10.0)).abs() < 1e-15);
        assert!((tape.value(p).get(0, 1) - 0.99995).abs() < 1e-5);
    }

    #[test]
    fn sensitive_decoder_shapes_and_uniformity() {
        let dec = Linear::zeros(4, 2);
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::zeros(&[7, 4]));
        let b = dec.bind(&mut tape, false);
        let logits = decode_sensitive(&mut tape, z, &b).unwrap();
        assert_eq!(tape.value(logits).shape(), &[7, 2]);
        let lsm = tape.log_softmax_rows(logits).unwrap();
        assert!(tape
            .value(lsm)
            .data()
            .iter()
            .all(|&v| (v - 0.5f64.ln()).abs() < 1e-15));
        let bad = tape.constant(Tensor::zeros(&[7, 3]));
        assert!(decode_sensitive(&mut tape, bad, &b).is_err());
    }

    #[test]
    fn vgae_matches_pvgae_graph_branch_init() {
        let rng = RandomSource::new(77);
        let p = PvgaeModel::init(&dims(), &rng);
        let v = VgaeModel::init(&dims(), &rng);
        assert_eq!(p.graph_branch(), v);
    }
}
