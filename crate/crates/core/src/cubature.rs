//! Clenshaw–Curtis quadrature and tensor-product cubature over boxes.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{check_dim, invalid, Result};
use crate::geometry::IntervalBox;

/// Weighted point set approximating integrals over `domain`.
#[derive(Debug, Clone, PartialEq)]
pub struct CubatureRule {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    domain: IntervalBox,
}

impl CubatureRule {
    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn domain(&self) -> &IntervalBox {
        &self.domain
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `Σ w_j f(x_j)`, accumulated in point order.
    pub fn integrate<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .fold(0.0, |acc, (p, w)| acc + w * f(p))
    }
}

/// The `n`-point Clenshaw–Curtis rule on `[-1, 1]`, nodes ascending.
pub fn clenshaw_curtis_1d(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    match n {
        0 => Err(invalid("Clenshaw-Curtis rule needs at least one point")),
        1 => Ok((vec![0.0], vec![2.0])),
        _ => {
            let big_n = n - 1;
            let nf = big_n as f64;
            let theta: Vec<f64> = (0..n).map(|i| PI * i as f64 / nf).collect();
            let mut w = vec![0.0; n];
            let mut v = vec![1.0; n];
            let half = big_n / 2;
            if big_n % 2 == 0 {
                w[0] = 1.0 / (nf * nf - 1.0);
                for k in 1..half {
                    let kf = k as f64;
                    for i in 1..big_n {
                        v[i] -= 2.0 * libm::cos(2.0 * kf * theta[i]) / (4.0 * kf * kf - 1.0);
                    }
                }
                for i in 1..big_n {
                    v[i] -= libm::cos(nf * theta[i]) / (nf * nf - 1.0);
                }
            } else {
                w[0] = 1.0 / (nf * nf);
                for k in 1..=half {
                    let kf = k as f64;
                    for i in 1..big_n {
                        v[i] -= 2.0 * libm::cos(2.0 * kf * theta[i]) / (4.0 * kf * kf - 1.0);
                    }
                }
            }
            w[big_n] = w[0];
            for i in 1..big_n {
                w[i] = 2.0 * v[i] / nf;
            }
            // cos(θ) descends; reverse so nodes ascend and the middle node is exactly 0.
            let mut nodes: Vec<f64> = theta.iter().map(|t| libm::cos(*t)).collect();
            for i in 0..n / 2 {
                let x = nodes[n - 1 - i].abs().max(nodes[i].abs());
                nodes[i] = x;
                nodes[n - 1 - i] = -x;
            }
            if n % 2 == 1 {
                nodes[n / 2] = 0.0;
            }
            nodes.reverse();
            w.reverse();
            Ok((nodes, w))
        }
    }
}

/// Tensor product of Clenshaw–Curtis rules mapped onto `domain`.
/// The last axis varies fastest. Zero-width axes contribute a single
/// midpoint node with weight 1.
pub fn tensor_rule(domain: &IntervalBox, n_per_dim: &[usize]) -> Result<CubatureRule> {
    tensor_from_1d(domain, n_per_dim, clenshaw_curtis_1d)
}

/// Tensor trapezoid rule with `n_per_dim` equispaced nodes per axis including
/// the endpoints. A one-node axis uses the midpoint.
pub fn trapezoid_rule(domain: &IntervalBox, n_per_dim: &[usize]) -> Result<CubatureRule> {
    tensor_from_1d(domain, n_per_dim, |n| match n {
        0 => Err(invalid("trapezoid rule needs at least one point")),
        1 => Ok((vec![0.0], vec![2.0])),
        _ => {
            let h = 2.0 / (n - 1) as f64;
            let nodes = (0..n).map(|i| -1.0 + h * i as f64).collect();
            let mut w = vec![h; n];
            w[0] = 0.5 * h;
            w[n - 1] = 0.5 * h;
            Ok((nodes, w))
        }
    })
}

fn tensor_from_1d<F>(domain: &IntervalBox, n_per_dim: &[usize], rule_1d: F) -> Result<CubatureRule>
where
    F: Fn(usize) -> Result<(Vec<f64>, Vec<f64>)>,
{
    check_dim("cubature points per axis", domain.dim(), n_per_dim.len())?;
    let mut axes: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(domain.dim());
    for (axis, &n) in n_per_dim.iter().enumerate() {
        let (nodes, weights) = rule_1d(n)?;
        let lo = domain.lower()[axis];
        let hi = domain.upper()[axis];
        if hi == lo {
            axes.push((vec![lo], vec![1.0]));
            continue;
        }
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        let mapped = nodes
            .iter()
            .map(|x| (mid + half * x).clamp(lo, hi))
            .collect();
        let scaled = weights.iter().map(|w| w * half).collect();
        axes.push((mapped, scaled));
    }

    let total: usize = axes.iter().map(|(x, _)| x.len()).product();
    let dim = axes.len();
    let mut points = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    let mut idx = vec![0usize; dim];
    for _ in 0..total {
        points.push((0..dim).map(|a| axes[a].0[idx[a]]).collect());
        weights.push((0..dim).map(|a| axes[a].1[idx[a]]).product());
        for a in (0..dim).rev() {
            idx[a] += 1;
            if idx[a] < axes[a].0.len() {
                break;
            }
            idx[a] = 0;
        }
    }
    Ok(CubatureRule {
        points,
        weights,
        domain: domain.clone(),
    })
}
