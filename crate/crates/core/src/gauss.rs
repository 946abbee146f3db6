//! Fixed Gauss rules used by the Povzner quadrature and the angular tables.

use std::num::NonZeroUsize;

use gauss_quad::{GaussJacobi, GaussLegendre};

use crate::error::{Error, Result};

/// Nodes and weights of a one-dimensional rule. Any weight function is
/// already folded into `weights`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    /// Gauss-Legendre on `[a, b]`.
    pub fn legendre(n: usize, a: f64, b: f64) -> Result<Self> {
        let deg = degree(n)?;
        let rule = GaussLegendre::new(deg);
        let (half, mid) = (0.5 * (b - a), 0.5 * (b + a));
        let (nodes, weights) = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (mid + half * x, half * w))
            .unzip();
        Ok(Self { nodes, weights })
    }

    /// Gauss-Jacobi on `[0, 1]` for the weight `(1 - t)^a t^b`.
    ///
    /// Odd degrees are refused: the underlying eigen solver pins the middle
    /// node to the interval centre, which is wrong for `a != b`.
    pub fn jacobi_unit(n: usize, a: f64, b: f64) -> Result<Self> {
        if n % 2 == 1 && a != b {
            return Err(Error::InvalidParam(format!(
                "asymmetric Gauss-Jacobi rule needs an even degree, got {n}"
            )));
        }
        let deg = degree(n)?;
        let fa = a
            .try_into()
            .map_err(|_| Error::InvalidParam(format!("Jacobi exponent {a} must be > -1")))?;
        let fb = b
            .try_into()
            .map_err(|_| Error::InvalidParam(format!("Jacobi exponent {b} must be > -1")))?;
        let rule = GaussJacobi::new(deg, fa, fb);
        // (1-x)^a (1+x)^b on [-1,1] with x = 2t - 1 picks up 2^(a+b+1).
        let jac = 2f64.powf(-(a + b + 1.0));
        let mut pairs: Vec<(f64, f64)> = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (0.5 * (x + 1.0), jac * w))
            .collect();
        pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
        let (nodes, weights) = pairs.into_iter().unzip();
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

fn degree(n: usize) -> Result<NonZeroUsize> {
    NonZeroUsize::new(n).ok_or_else(|| Error::InvalidParam("quadrature degree must be > 0".into()))
}
