//! Two-layer ReLU perceptron with an analytic gradient of the regression loss.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::features::TextEmbedding;

/// Weights of `out = W2 · relu(W1 · s + b1) + b2`.
///
/// `w1` is `hidden_dim × in_dim` and `w2` is `out_dim × hidden_dim`, both
/// row-major. The same struct doubles as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct MapperParams {
    pub in_dim: usize,
    pub hidden_dim: usize,
    pub out_dim: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// One regression example: a (standardized) text embedding and its target.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub input: TextEmbedding,
    pub target: Vec<f64>,
}

impl Pair {
    pub fn new(input: TextEmbedding, target: Vec<f64>) -> Self {
        Self { input, target }
    }
}

/// Loss configuration: data-term form plus weight-decay coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub weight_decay: f64,
    /// Use `‖r‖²` instead of `‖r‖` per example.
    pub squared_data_term: bool,
}

impl Objective {
    pub fn norm(weight_decay: f64) -> Self {
        Self {
            weight_decay,
            squared_data_term: false,
        }
    }

    fn data_term(&self, residual_sq: f64) -> f64 {
        if self.squared_data_term {
            residual_sq
        } else {
            residual_sq.sqrt()
        }
    }
}

impl MapperParams {
    pub fn zeros(in_dim: usize, hidden_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            hidden_dim,
            out_dim,
            w1: vec![0.0; hidden_dim * in_dim],
            b1: vec![0.0; hidden_dim],
            w2: vec![0.0; out_dim * hidden_dim],
            b2: vec![0.0; out_dim],
        }
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for every weight and bias.
    pub fn init_uniform<R: Rng>(
        in_dim: usize,
        hidden_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(in_dim, hidden_dim, out_dim);
        let a1 = 1.0 / (in_dim as f64).sqrt();
        let a2 = 1.0 / (hidden_dim as f64).sqrt();
        for v in p.w1.iter_mut().chain(p.b1.iter_mut()) {
            *v = rng.gen_range(-a1..=a1);
        }
        for v in p.w2.iter_mut().chain(p.b2.iter_mut()) {
            *v = rng.gen_range(-a2..=a2);
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let expect = [
            (self.w1.len(), self.hidden_dim * self.in_dim),
            (self.b1.len(), self.hidden_dim),
            (self.w2.len(), self.out_dim * self.hidden_dim),
            (self.b2.len(), self.out_dim),
        ];
        for (found, expected) in expect {
            check_dim(expected, found)?;
        }
        if self.in_dim == 0 || self.hidden_dim == 0 || self.out_dim == 0 {
            return Err(Error::InvalidArgument("mapper dimensions must be >= 1".into()));
        }
        if self.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite mapper parameter".into()));
        }
        Ok(())
    }

    /// All parameters in storage order `w1, b1, w2, b2`.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
    }

    pub fn len(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Squared L2 norm of the weight matrices (biases excluded).
    pub fn weight_norm_sq(&self) -> f64 {
        self.w1.iter().chain(&self.w2).map(|w| w * w).sum()
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.in_dim, self.hidden_dim, self.out_dim)
    }

    /// Forward pass, also returning the hidden pre-activations.
    fn forward_with_hidden(&self, s: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut pre = self.b1.clone();
        for (h, p) in pre.iter_mut().enumerate() {
            let w = &self.w1[h * self.in_dim..(h + 1) * self.in_dim];
            *p += dot(w, s);
        }
        let mut out = self.b2.clone();
        for (o, y) in out.iter_mut().enumerate() {
            let w = &self.w2[o * self.hidden_dim..(o + 1) * self.hidden_dim];
            *y += w
                .iter()
                .zip(&pre)
                .map(|(w, &p)| if p > 0.0 { w * p } else { 0.0 })
                .sum::<f64>();
        }
        (pre, out)
    }

    pub fn forward_slice(&self, s: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.in_dim, s.len())?;
        Ok(self.forward_with_hidden(s).1)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `W2 · relu(W1 · s + b1) + b2`.
pub fn mapper_forward(params: &MapperParams, s: &TextEmbedding) -> Result<Vec<f64>> {
    params.forward_slice(s.as_slice())
}

fn check_batch<'a>(params: &MapperParams, batch: impl Iterator<Item = &'a Pair>) -> Result<usize> {
    let mut n = 0;
    for pair in batch {
        check_dim(params.in_dim, pair.input.dim())?;
        check_dim(params.out_dim, pair.target.len())?;
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    Ok(n)
}

/// Mean per-example `‖g(s) − t‖₂` plus `weight_decay · ‖W‖²`.
pub fn mapper_loss(params: &MapperParams, batch: &[Pair], weight_decay: f64) -> Result<f64> {
    mapper_loss_with(params, batch, &Objective::norm(weight_decay))
}

pub fn mapper_loss_with(params: &MapperParams, batch: &[Pair], objective: &Objective) -> Result<f64> {
    loss_over(params, batch.iter(), objective)
}

pub(crate) fn loss_over<'a, I>(params: &MapperParams, batch: I, objective: &Objective) -> Result<f64>
where
    I: Iterator<Item = &'a Pair> + Clone,
{
    let n = check_batch(params, batch.clone())?;
    let mut total = 0.0;
    for pair in batch {
        let (_, out) = params.forward_with_hidden(pair.input.as_slice());
        let r2: f64 = out
            .iter()
            .zip(&pair.target)
            .map(|(y, t)| (y - t) * (y - t))
            .sum();
        total += objective.data_term(r2);
    }
    Ok(total / n as f64 + objective.weight_decay * params.weight_norm_sq())
}

/// Exact gradient of [`mapper_loss`] with respect to every parameter.
///
/// At a zero residual the norm is not differentiable; the subgradient 0 is used.
pub fn mapper_gradient(params: &MapperParams, batch: &[Pair], weight_decay: f64) -> Result<MapperParams> {
    mapper_gradient_with(params, batch, &Objective::norm(weight_decay))
}

pub fn mapper_gradient_with(
    params: &MapperParams,
    batch: &[Pair],
    objective: &Objective,
) -> Result<MapperParams> {
    gradient_over(params, batch.iter(), objective)
}

pub(crate) fn gradient_over<'a, I>(
    params: &MapperParams,
    batch: I,
    objective: &Objective,
) -> Result<MapperParams>
where
    I: Iterator<Item = &'a Pair> + Clone,
{
    let n = check_batch(params, batch.clone())? as f64;
    let (in_dim, hidden_dim) = (params.in_dim, params.hidden_dim);
    let mut grad = params.zeros_like();
    let mut d_hidden = vec![0.0; hidden_dim];

    for pair in batch {
        let s = pair.input.as_slice();
        let (pre, out) = params.forward_with_hidden(s);
        let mut d_out: Vec<f64> = out.iter().zip(&pair.target).map(|(y, t)| y - t).collect();
        let coeff = if objective.squared_data_term {
            2.0 / n
        } else {
            let norm = d_out.iter().map(|r| r * r).sum::<f64>().sqrt();
            if norm > 0.0 {
                1.0 / (n * norm)
            } else {
                0.0
            }
        };
        for r in &mut d_out {
            *r *= coeff;
        }

        d_hidden.iter_mut().for_each(|v| *v = 0.0);
        for (o, &g) in d_out.iter().enumerate() {
            grad.b2[o] += g;
            if g == 0.0 {
                continue;
            }
            let row = o * hidden_dim;
            for h in 0..hidden_dim {
                if pre[h] > 0.0 {
                    grad.w2[row + h] += g * pre[h];
                    d_hidden[h] += g * params.w2[row + h];
                }
            }
        }
        for (h, &g) in d_hidden.iter().enumerate() {
            // d_hidden is already zero where the unit is inactive.
            if g == 0.0 {
                continue;
            }
            grad.b1[h] += g;
            let row = &mut grad.w1[h * in_dim..(h + 1) * in_dim];
            for (w, &x) in row.iter_mut().zip(s) {
                *w += g * x;
            }
        }
    }

    let wd2 = 2.0 * objective.weight_decay;
    if wd2 != 0.0 {
        for (g, w) in grad.w1.iter_mut().zip(&params.w1) {
            *g += wd2 * w;
        }
        for (g, w) in grad.w2.iter_mut().zip(&params.w2) {
            *g += wd2 * w;
        }
    }
    Ok(grad)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)] // the oracles index on purpose
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_params(seed: u64, i: usize, h: usize, o: usize) -> MapperParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MapperParams::init_uniform(i, h, o, &mut rng)
    }

    fn random_batch(seed: u64, n: usize, i: usize, o: usize) -> Vec<Pair> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let s = (0..i).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let t = (0..o).map(|_| rng.gen_range(-2.0..2.0)).collect();
                Pair::new(TextEmbedding::new(s).unwrap(), t)
            })
            .collect()
    }

    /// Straight-line re-implementation of the forward formula.
    fn naive_forward(p: &MapperParams, s: &[f64]) -> Vec<f64> {
        let mut hidden = vec![0.0; p.hidden_dim];
        for h in 0..p.hidden_dim {
            let mut acc = p.b1[h];
            for i in 0..p.in_dim {
                acc += p.w1[h * p.in_dim + i] * s[i];
            }
            hidden[h] = acc.max(0.0);
        }
        let mut out = vec![0.0; p.out_dim];
        for o in 0..p.out_dim {
            let mut acc = p.b2[o];
            for h in 0..p.hidden_dim {
                acc += p.w2[o * p.hidden_dim + h] * hidden[h];
            }
            out[o] = acc;
        }
        out
    }

    #[test]
    fn zero_params_give_zero_output() {
        let p = MapperParams::zeros(3, 4, 2);
        let s = TextEmbedding::new(vec![1.0, -2.0, 3.0]).unwrap();
        assert_eq!(mapper_forward(&p, &s).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_weights_pass_nonnegative_input() {
        let d = 3;
        let mut p = MapperParams::zeros(d, d, d);
        for k in 0..d {
            p.w1[k * d + k] = 1.0;
            p.w2[k * d + k] = 1.0;
        }
        let s = TextEmbedding::new(vec![0.0, 1.5, 7.0]).unwrap();
        assert_eq!(mapper_forward(&p, &s).unwrap(), s.as_slice());
    }

    #[test]
    fn forward_matches_naive() {
        let p = random_params(11, 7, 13, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let s: Vec<f64> = (0..7).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let fast = p.forward_slice(&s).unwrap();
        let slow = naive_forward(&p, &s);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_dimension_mismatch() {
        let p = MapperParams::zeros(3, 4, 2);
        let s = TextEmbedding::new(vec![1.0; 4]).unwrap();
        assert!(matches!(
            mapper_forward(&p, &s),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn loss_zero_on_exact_fit() {
        let p = random_params(1, 3, 5, 2);
        let mut batch = random_batch(2, 4, 3, 2);
        for pair in &mut batch {
            pair.target = p.forward_slice(pair.input.as_slice()).unwrap();
        }
        assert_eq!(mapper_loss(&p, &batch, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn loss_of_zero_params_is_target_norm() {
        let p = MapperParams::zeros(2, 3, 2);
        let batch = vec![Pair::new(
            TextEmbedding::new(vec![1.0, 1.0]).unwrap(),
            vec![3.0, 0.0],
        )];
        assert_eq!(mapper_loss(&p, &batch, 0.0).unwrap(), 3.0);
    }

    #[test]
    fn loss_matches_independent_recomputation() {
        let p = random_params(21, 4, 6, 3);
        let batch = random_batch(22, 9, 4, 3);
        let wd = 0.01;
        let mut expected = 0.0;
        for pair in &batch {
            let out = naive_forward(&p, pair.input.as_slice());
            let mut sq = 0.0;
            for o in 0..3 {
                sq += (out[o] - pair.target[o]).powi(2);
            }
            expected += sq.sqrt();
        }
        expected /= batch.len() as f64;
        let mut reg = 0.0;
        for w in p.w1.iter().chain(&p.w2) {
            reg += w * w;
        }
        expected += wd * reg;
        let got = mapper_loss(&p, &batch, wd).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn empty_batch_is_error() {
        let p = MapperParams::zeros(2, 2, 2);
        assert!(matches!(mapper_loss(&p, &[], 0.0), Err(Error::EmptyBatch)));
        assert!(matches!(mapper_gradient(&p, &[], 0.0), Err(Error::EmptyBatch)));
    }

    #[test]
    fn zero_residual_gives_zero_output_layer_gradient() {
        let p = random_params(3, 3, 4, 2);
        let mut batch = random_batch(4, 5, 3, 2);
        for pair in &mut batch {
            pair.target = p.forward_slice(pair.input.as_slice()).unwrap();
        }
        let g = mapper_gradient(&p, &batch, 0.0).unwrap();
        assert!(g.w2.iter().chain(&g.b2).all(|&v| v == 0.0));
    }

    #[test]
    fn regularizer_only_gradient_is_two_wd_theta() {
        let p = random_params(5, 3, 4, 2);
        let mut batch = random_batch(6, 5, 3, 2);
        for pair in &mut batch {
            pair.target = p.forward_slice(pair.input.as_slice()).unwrap();
        }
        for objective in [
            Objective::norm(0.3),
            Objective {
                weight_decay: 0.3,
                squared_data_term: true,
            },
        ] {
            let g = mapper_gradient_with(&p, &batch, &objective).unwrap();
            for (gw, w) in g.w1.iter().zip(&p.w1).chain(g.w2.iter().zip(&p.w2)) {
                assert!((gw - 0.6 * w).abs() < 1e-15);
            }
            assert!(g.b1.iter().chain(&g.b2).all(|&v| v == 0.0));
        }
    }
}
