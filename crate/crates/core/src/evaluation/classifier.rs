//! Small supervised heads trained on frozen embeddings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Linear;
use crate::numerics::{AdamState, RandomSource, Tape, Tensor, Var};

/// Per-column standardization fitted on training rows.
#[derive(Clone, Debug)]
struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit(x: &Tensor) -> Self {
        let (n, d) = (x.rows() as f64, x.cols());
        let mut mean = vec![0.0; d];
        let mut var = vec![0.0; d];
        for i in 0..x.rows() {
            for (j, v) in x.row(i).iter().enumerate() {
                mean[j] += v / n;
            }
        }
        for i in 0..x.rows() {
            for (j, v) in x.row(i).iter().enumerate() {
                var[j] += (v - mean[j]).powi(2) / n;
            }
        }
        let scale = var
            .into_iter()
            .map(|v| if v > 1e-12 { 1.0 / v.sqrt() } else { 1.0 })
            .collect();
        Self { mean, scale }
    }

    fn apply(&self, x: &Tensor) -> Tensor {
        let d = x.cols();
        let mut out = x.clone();
        for (k, v) in out.data_mut().iter_mut().enumerate() {
            let j = k % d;
            *v = (*v - self.mean[j]) * self.scale[j];
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    /// Softmax cross-entropy.
    CrossEntropy,
    /// One-vs-rest hinge.
    Hinge,
}

/// Optimization settings for [`Classifier::fit`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub loss: Loss,
    /// Hidden width; `None` for a linear head.
    pub hidden: Option<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
}

#[derive(Clone, Debug)]
enum Head {
    Linear(Linear),
    Mlp(Linear, Linear),
}

/// Fitted classifier over standardized inputs.
#[derive(Clone, Debug)]
pub struct Classifier {
    standardizer: Standardizer,
    head: Head,
}

fn forward(tape: &mut Tape, head: &Head, x: Var) -> Result<(Var, Vec<Var>, Vec<Var>)> {
    match head {
        Head::Linear(l) => {
            let b = l.bind(tape, true);
            let out = b.forward(tape, x)?;
            Ok((out, b.vars().to_vec(), vec![b.weight]))
        }
        Head::Mlp(l1, l2) => {
            let b1 = l1.bind(tape, true);
            let b2 = l2.bind(tape, true);
            let h = b1.forward(tape, x)?;
            let h = tape.relu(h)?;
            let out = b2.forward(tape, h)?;
            let mut vars = b1.vars().to_vec();
            vars.extend(b2.vars());
            Ok((out, vars, vec![b1.weight, b2.weight]))
        }
    }
}

fn head_params_mut(head: &mut Head) -> Vec<&mut Tensor> {
    match head {
        Head::Linear(l) => l.params_mut().into_iter().collect(),
        Head::Mlp(l1, l2) => l1.params_mut().into_iter().chain(l2.params_mut()).collect(),
    }
}

fn target_matrix(y: &[usize], classes: usize, loss: Loss) -> Tensor {
    let off = match loss {
        Loss::CrossEntropy => 0.0,
        Loss::Hinge => -1.0,
    };
    let mut t = Tensor::full(&[y.len(), classes], off);
    for (i, &c) in y.iter().enumerate() {
        t.set(i, c, 1.0);
    }
    t
}

impl Classifier {
    /// Full-batch Adam training on rows `x` with targets `y < classes`.
    ///
    /// Linear heads start at zero, so their fit is deterministic; hidden
    /// layers are Glorot-initialized from `rng`.
    pub fn fit(
        x: &Tensor,
        y: &[usize],
        classes: usize,
        opts: &FitOptions,
        rng: &mut RandomSource,
    ) -> Result<Self> {
        let n = x.rows();
        if n == 0 || n != y.len() {
            return Err(Error::contract(format!(
                "classifier needs matching non-empty inputs, got {n} rows and {} targets",
                y.len()
            )));
        }
        if let Some(&c) = y.iter().find(|&&c| c >= classes) {
            return Err(Error::contract(format!("target {c} out of range for {classes} classes")));
        }
        let standardizer = Standardizer::fit(x);
        let xs = standardizer.apply(x);
        let d = x.cols();
        let mut head = match opts.hidden {
            None => Head::Linear(Linear::zeros(d, classes)),
            Some(h) => Head::Mlp(Linear::glorot(d, h, rng), Linear::glorot(h, classes, rng)),
        };
        let targets = target_matrix(y, classes, opts.loss);
        let mut adam = AdamState::default();
        for _ in 0..opts.epochs {
            let mut tape = Tape::new();
            let xv = tape.constant(xs.clone());
            let t = tape.constant(targets.clone());
            let (logits, vars, weights) = forward(&mut tape, &head, xv)?;
            let data = match opts.loss {
                Loss::CrossEntropy => {
                    let lp = tape.log_softmax_rows(logits)?;
                    let picked = tape.mul(lp, t)?;
                    let s = tape.sum(picked)?;
                    tape.scale(s, -1.0 / n as f64)?
                }
                Loss::Hinge => {
                    let m = tape.mul(logits, t)?;
                    let slack = tape.one_minus(m)?;
                    let h = tape.relu(slack)?;
                    let s = tape.sum(h)?;
                    tape.scale(s, 1.0 / n as f64)?
                }
            };
            let mut loss = data;
            if opts.l2 > 0.0 {
                for w in weights {
                    let sq = tape.square(w)?;
                    let s = tape.sum(sq)?;
                    let r = tape.scale(s, opts.l2)?;
                    loss = tape.add(loss, r)?;
                }
            }
            let grads = tape.backward(loss)?.wrt_all(&vars);
            adam.step(&mut head_params_mut(&mut head), &grads, opts.lr)?;
        }
        Ok(Self { standardizer, head })
    }

    pub fn scores(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let xv = tape.constant(self.standardizer.apply(x));
        let (out, _, _) = forward(&mut tape, &self.head, xv)?;
        Ok(tape.value(out).clone())
    }

    /// Arg-max class per row; ties resolve to the lowest index.
    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        let s = self.scores(x)?;
        Ok((0..s.rows())
            .map(|i| {
                let row = s.row(i);
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect())
    }
}

pub(crate) fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len() as f64
}
