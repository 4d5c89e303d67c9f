//! The power-term network: parallel power-term blocks feeding one linear
//! output neuron.
//!
//! Block `i` computes `exp(sum_j w_ij * ln x_j) = prod_j x_j^{w_ij}`; the
//! network output is `bias + sum_i c_i * block_i`. After training, the
//! block weights are read off as the exponent vectors of the recovered
//! equation and the output weights as its coefficients.

mod adam;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{LaurentPolynomial, LaurentTerm};

pub use adam::{adam_step, AdamSettings, OptimizerState};

/// Bound on the pre-exponential sum; keeps `exp` finite with wild weights.
pub const LOG_CLAMP: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PtaBlock {
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    nvars: usize,
    pub blocks: Vec<PtaBlock>,
    pub output_weights: Vec<f64>,
    pub output_bias: f64,
}

/// Natural logarithms of a row-major input matrix.
#[derive(Debug, Clone)]
pub struct LogFeatures {
    ncols: usize,
    data: Vec<f64>,
}

impl LogFeatures {
    /// `inputs` is row-major with `ncols` columns; every entry must be > 0.
    pub fn new(inputs: &[f64], ncols: usize) -> Result<Self> {
        if ncols == 0 || !inputs.len().is_multiple_of(ncols) {
            return Err(Error::DimensionMismatch {
                expected: ncols,
                got: inputs.len(),
            });
        }
        let data = inputs
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                if v > 0.0 && v.is_finite() {
                    Ok(v.ln())
                } else {
                    Err(Error::Domain {
                        index: k % ncols,
                        value: v,
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { ncols, data })
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.ncols
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }
}

#[inline]
fn block_activation(weights: &[f64], log_x: &[f64]) -> (f64, bool) {
    let z: f64 = weights.iter().zip(log_x).map(|(w, l)| w * l).sum();
    if z > LOG_CLAMP {
        (LOG_CLAMP.exp(), false)
    } else if z < -LOG_CLAMP {
        ((-LOG_CLAMP).exp(), false)
    } else {
        (z.exp(), true)
    }
}

impl NetworkParams {
    /// A network with no blocks and zero bias.
    pub fn empty(nvars: usize) -> Self {
        Self {
            nvars,
            blocks: Vec::new(),
            output_weights: Vec::new(),
            output_bias: 0.0,
        }
    }

    pub fn from_parts(
        blocks: Vec<Vec<f64>>,
        output_weights: Vec<f64>,
        output_bias: f64,
        nvars: usize,
    ) -> Result<Self> {
        if blocks.len() != output_weights.len() {
            return Err(Error::DimensionMismatch {
                expected: blocks.len(),
                got: output_weights.len(),
            });
        }
        if let Some(b) = blocks.iter().find(|b| b.len() != nvars) {
            return Err(Error::DimensionMismatch {
                expected: nvars,
                got: b.len(),
            });
        }
        Ok(Self {
            nvars,
            blocks: blocks
                .into_iter()
                .map(|weights| PtaBlock { weights })
                .collect(),
            output_weights,
            output_bias,
        })
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Same shape, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self {
            nvars: self.nvars,
            blocks: self
                .blocks
                .iter()
                .map(|_| PtaBlock {
                    weights: vec![0.0; self.nvars],
                })
                .collect(),
            output_weights: vec![0.0; self.output_weights.len()],
            output_bias: 0.0,
        }
    }

    /// All parameters in a fixed order: block weights, output weights, bias.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.blocks
            .iter()
            .flat_map(|b| b.weights.iter())
            .chain(self.output_weights.iter())
            .chain(std::iter::once(&self.output_bias))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.blocks
            .iter_mut()
            .flat_map(|b| b.weights.iter_mut())
            .chain(self.output_weights.iter_mut())
            .chain(std::iter::once(&mut self.output_bias))
    }

    /// Weights subject to L1/L2 penalties (everything except the bias).
    fn penalized_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.blocks
            .iter_mut()
            .flat_map(|b| b.weights.iter_mut())
            .chain(self.output_weights.iter_mut())
    }

    fn penalized(&self) -> impl Iterator<Item = &f64> {
        self.blocks
            .iter()
            .flat_map(|b| b.weights.iter())
            .chain(self.output_weights.iter())
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    /// Network output and per-block outputs at `x`.
    pub fn forward(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        if x.len() != self.nvars {
            return Err(Error::DimensionMismatch {
                expected: self.nvars,
                got: x.len(),
            });
        }
        let logs = LogFeatures::new(x, self.nvars)?;
        let blocks: Vec<f64> = self
            .blocks
            .iter()
            .map(|b| block_activation(&b.weights, logs.row(0)).0)
            .collect();
        let prediction = self
            .output_weights
            .iter()
            .zip(&blocks)
            .fold(self.output_bias, |acc, (c, y)| acc + c * y);
        Ok((prediction, blocks))
    }

    /// Prediction from precomputed `ln x`.
    #[inline]
    pub fn predict_log(&self, log_x: &[f64]) -> f64 {
        self.blocks
            .iter()
            .zip(&self.output_weights)
            .fold(self.output_bias, |acc, (b, c)| {
                acc + c * block_activation(&b.weights, log_x).0
            })
    }

    /// Mean squared error over the given rows.
    pub fn mse_log(&self, logs: &LogFeatures, targets: &[f64], rows: &[usize]) -> f64 {
        let sse: f64 = rows
            .iter()
            .map(|&i| {
                let r = self.predict_log(logs.row(i)) - targets[i];
                r * r
            })
            .sum();
        sse / rows.len() as f64
    }

    /// Regularized loss and its exact gradient over the given rows.
    ///
    /// Loss is `mean((f(x) - y)^2) + l1 * sum|W| + l2 * sum W^2`, where `W`
    /// spans block and output weights but not the bias. The L1 subgradient at
    /// zero is zero, and clamped blocks pass no gradient to their weights.
    pub fn loss_and_grad_log(
        &self,
        logs: &LogFeatures,
        targets: &[f64],
        rows: &[usize],
        l1: f64,
        l2: f64,
        grads: &mut NetworkParams,
    ) -> f64 {
        grads.values_mut().for_each(|g| *g = 0.0);
        let k = self.blocks.len();
        let n = rows.len() as f64;
        let mut outputs = vec![0.0; k];
        let mut active = vec![true; k];
        let mut sse = 0.0;

        for &i in rows {
            let lx = logs.row(i);
            let mut pred = self.output_bias;
            for (b, block) in self.blocks.iter().enumerate() {
                let (y, unclamped) = block_activation(&block.weights, lx);
                outputs[b] = y;
                active[b] = unclamped;
                pred += self.output_weights[b] * y;
            }
            let r = pred - targets[i];
            sse += r * r;
            let g = 2.0 * r / n;
            grads.output_bias += g;
            for b in 0..k {
                grads.output_weights[b] += g * outputs[b];
                if active[b] {
                    let s = g * self.output_weights[b] * outputs[b];
                    for (gw, l) in grads.blocks[b].weights.iter_mut().zip(lx) {
                        *gw += s * l;
                    }
                }
            }
        }

        let mut penalty = 0.0;
        if l1 != 0.0 || l2 != 0.0 {
            for (w, g) in self.penalized().zip(grads.penalized_mut()) {
                penalty += l1 * w.abs() + l2 * w * w;
                let sign = if *w > 0.0 {
                    1.0
                } else if *w < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                *g += l1 * sign + 2.0 * l2 * w;
            }
        }
        sse / n + penalty
    }

    /// Loss and gradient over a raw row-major batch.
    pub fn backward(
        &self,
        inputs: &[f64],
        targets: &[f64],
        l1: f64,
        l2: f64,
    ) -> Result<(f64, NetworkParams)> {
        let logs = LogFeatures::new(inputs, self.nvars)?;
        if logs.rows() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: logs.rows(),
                got: targets.len(),
            });
        }
        if targets.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let rows: Vec<usize> = (0..targets.len()).collect();
        let mut grads = self.zeros_like();
        let loss = self.loss_and_grad_log(&logs, targets, &rows, l1, l2, &mut grads);
        Ok((loss, grads))
    }

    /// Appends one block with weights and output weight drawn uniformly from
    /// `[-init_scale, init_scale]`. Existing parameters are untouched.
    pub fn grow<R: Rng + ?Sized>(&mut self, init_scale: f64, rng: &mut R) {
        let weights = (0..self.nvars)
            .map(|_| rng.random_range(-init_scale..=init_scale))
            .collect();
        self.blocks.push(PtaBlock { weights });
        self.output_weights
            .push(rng.random_range(-init_scale..=init_scale));
    }

    /// Rounds every parameter to the nearest multiple of `precision`, ties
    /// away from zero.
    pub fn round(&mut self, precision: f64) {
        self.values_mut().for_each(|v| *v = round_to(*v, precision));
    }

    /// Reads the network off as a canonical polynomial. The bias becomes the
    /// constant term.
    pub fn extract_equation(&self) -> LaurentPolynomial {
        let mut terms: Vec<LaurentTerm> = self
            .blocks
            .iter()
            .zip(&self.output_weights)
            .map(|(b, &c)| LaurentTerm::new(c, b.weights.clone()))
            .collect();
        terms.push(LaurentTerm::new(self.output_bias, vec![0.0; self.nvars]));
        LaurentPolynomial::new(self.nvars, terms)
            .map(|p| p.canonicalize())
            .unwrap_or_else(|_| LaurentPolynomial::zero(self.nvars))
    }
}

/// Nearest multiple of `precision`, ties away from zero.
///
/// When `1 / precision` is an integer the division is done by it, so that
/// e.g. `0.159` comes out as the same double as the literal.
pub fn round_to(value: f64, precision: f64) -> f64 {
    let inv = 1.0 / precision;
    let inv_r = inv.round();
    if inv_r >= 1.0 && (inv - inv_r).abs() <= 1e-9 * inv_r {
        (value * inv_r).round() / inv_r + 0.0
    } else {
        (value / precision).round() * precision + 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(blocks: Vec<Vec<f64>>, c: Vec<f64>, bias: f64) -> NetworkParams {
        let nvars = blocks.first().map_or(1, Vec::len);
        NetworkParams::from_parts(blocks, c, bias, nvars).unwrap()
    }

    #[test]
    fn forward_examples() {
        let (y, blocks) = net(vec![vec![1.0, 1.0]], vec![1.0], 0.0)
            .forward(&[2.0, 3.0])
            .unwrap();
        assert!((y - 6.0).abs() < 1e-12);
        assert_eq!(blocks.len(), 1);
        let (y, _) = net(vec![vec![0.0, 0.0]], vec![5.0], 1.0)
            .forward(&[7.0, 9.0])
            .unwrap();
        assert_eq!(y, 6.0);
        let (y, _) = net(vec![vec![0.5, -1.0]], vec![1.0], 0.0)
            .forward(&[4.0, 2.0])
            .unwrap();
        assert!((y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn forward_rejects_bad_input() {
        let n = net(vec![vec![1.0, 1.0]], vec![1.0], 0.0);
        assert!(matches!(
            n.forward(&[1.0, 0.0]),
            Err(Error::Domain { index: 1, .. })
        ));
        assert!(matches!(
            n.forward(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn clamp_keeps_output_finite() {
        let n = net(vec![vec![1000.0]], vec![1.0], 0.0);
        let (y, _) = n.forward(&[10.0]).unwrap();
        assert_eq!(y, LOG_CLAMP.exp());
        let (_, g) = n.backward(&[10.0], &[0.0], 0.0, 0.0).unwrap();
        assert_eq!(g.blocks[0].weights[0], 0.0);
    }

    #[test]
    fn backward_exact_fit() {
        let n = net(vec![vec![1.0]], vec![1.0], 0.0);
        let (loss, g) = n.backward(&[2.0], &[2.0], 0.0, 0.0).unwrap();
        assert!(loss.abs() < 1e-24);
        assert!(g.values().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn backward_hand_derivatives() {
        let e = std::f64::consts::E;
        let n = net(vec![vec![0.0]], vec![1.0], 0.0);
        let (loss, g) = n.backward(&[e], &[0.0], 0.0, 0.0).unwrap();
        assert_eq!(loss, 1.0);
        assert!((g.blocks[0].weights[0] - 2.0).abs() < 1e-12);
        assert_eq!(g.output_weights[0], 2.0);
        assert_eq!(g.output_bias, 2.0);

        let (loss, g) = n.backward(&[e], &[0.0], 1e-4, 1e-4).unwrap();
        assert!((loss - 1.0002).abs() < 1e-15);
        // zero weight gets no L1 push; unit output weight gets 1e-4 + 2e-4
        assert!((g.blocks[0].weights[0] - 2.0).abs() < 1e-12);
        assert!((g.output_weights[0] - 2.0003).abs() < 1e-12);
        assert_eq!(g.output_bias, 2.0);
    }

    #[test]
    fn grow_appends_without_touching() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut n = NetworkParams::empty(2);
        n.grow(0.5, &mut rng);
        assert_eq!(n.num_blocks(), 1);
        let first = n.blocks[0].clone();
        let c0 = n.output_weights[0];
        n.grow(0.5, &mut rng);
        assert_eq!(n.num_blocks(), 2);
        assert_eq!(n.blocks[0], first);
        assert_eq!(n.output_weights[0].to_bits(), c0.to_bits());
        assert!(n.values().all(|v| v.abs() <= 0.5));

        let mut again = NetworkParams::empty(2);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        again.grow(0.5, &mut rng);
        again.grow(0.5, &mut rng);
        assert_eq!(again, n);
    }

    #[test]
    fn rounding_examples() {
        assert_eq!(round_to(1.0004, 0.001), 1.0);
        assert_eq!(round_to(-0.0005, 0.001), -0.001);
        assert_eq!(round_to(0.0005, 0.001), 0.001);
        assert_eq!(round_to(0.15912, 0.001), 0.159);
        assert_eq!(round_to(-0.0001, 0.001).to_bits(), 0.0f64.to_bits());
        assert_eq!(round_to(0.26, 0.25), 0.25);
        let mut n = net(vec![vec![1.9996, -1.00049]], vec![0.12345], 2.5e-4);
        n.round(0.001);
        let once = n.clone();
        n.round(0.001);
        assert_eq!(n, once);
        assert_eq!(n.blocks[0].weights, vec![2.0, -1.0]);
        assert_eq!(n.output_weights[0], 0.123);
        assert_eq!(n.output_bias, 0.0);
    }

    #[test]
    fn rounding_at_tiny_precision_barely_moves() {
        for &v in &[2.56789123, -1.234567891, 0.3, 2.999999] {
            assert!((round_to(v, 1e-12) - v).abs() <= 0.5e-12 + 1e-15);
        }
    }

    #[test]
    fn extract_examples() {
        let p = net(vec![vec![2.0, -1.0]], vec![1.0], 0.0).extract_equation();
        assert_eq!(p.to_string(), "x1^2*x2^-1");
        let c = NetworkParams::from_parts(vec![], vec![], 3.5, 2).unwrap();
        assert_eq!(c.extract_equation().to_string(), "3.5");
        let lin = net(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![3.0, 2.0], 0.0);
        assert_eq!(lin.extract_equation().to_string(), "3*x1 + 2*x2");
    }
}
