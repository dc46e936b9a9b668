//! Closed-form connection probabilities and limit quantities of the model.

use nalgebra::DMatrix;

use crate::error::{KpaError, Result};
use crate::model::{GroupLabel, ModelParams};

/// Probability that an initiator in `g_w` attaches to a specific node `u`
/// (degree `d_u`, group `g_u`) given the degree profile `group_totals`.
pub fn vertex_connect_prob(
    group_totals: &[u64],
    total_degree: u64,
    d_u: u64,
    g_w: GroupLabel,
    g_u: GroupLabel,
    theta: f64,
) -> Result<f64> {
    check_theta(theta)?;
    check_profile(group_totals, total_degree)?;
    let own = group_totals[g_u.index()];
    if d_u == 0 || d_u > own {
        return Err(KpaError::Domain(format!(
            "node degree {d_u} outside 1..={own} for group {g_u}"
        )));
    }
    let total = total_degree as f64;
    let pick = d_u as f64 / total;
    if g_w == g_u {
        let share = own as f64 / total;
        Ok(pick + (1.0 - theta) * (1.0 - share) * (d_u as f64 / own as f64))
    } else {
        Ok(theta * pick)
    }
}

/// Probability of the ordered edge-step pair `(w, u)`: the degree-proportional
/// pick of `w` times the attachment kernel for `u`.
#[allow(clippy::too_many_arguments)]
pub fn edge_connect_prob(
    group_totals: &[u64],
    total_degree: u64,
    d_w: u64,
    d_u: u64,
    g_w: GroupLabel,
    g_u: GroupLabel,
    theta: f64,
) -> Result<f64> {
    check_profile(group_totals, total_degree)?;
    let own = group_totals[g_w.index()];
    if d_w == 0 || d_w > own {
        return Err(KpaError::Domain(format!(
            "initiator degree {d_w} outside 1..={own} for group {g_w}"
        )));
    }
    let kernel = vertex_connect_prob(group_totals, total_degree, d_u, g_w, g_u, theta)?;
    Ok(d_w as f64 / total_degree as f64 * kernel)
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta <= 1.0 {
        Ok(())
    } else {
        Err(KpaError::Domain(format!("theta = {theta} outside (0,1]")))
    }
}

fn check_profile(group_totals: &[u64], total_degree: u64) -> Result<()> {
    if total_degree == 0 {
        return Err(KpaError::Domain("total degree is zero".into()));
    }
    let sum: u64 = group_totals.iter().sum();
    if sum != total_degree {
        return Err(KpaError::Domain(format!(
            "group totals sum to {sum}, total degree is {total_degree}"
        )));
    }
    Ok(())
}

/// Limit of `S_t / t`: `1 + theta (sum_k p_k^2 - 1)`.
pub fn expected_same_group_rate(params: &ModelParams) -> f64 {
    let sq: f64 = params.p.iter().map(|p| p * p).sum();
    1.0 + params.theta * (sq - 1.0)
}

/// Limiting number of degree-`d` nodes of a group per unit time, `M_d^k`.
///
/// Evaluated through the ratio `M_d / M_{d-1} = (d-1)(2-q) / (2 + d(2-q))`
/// so large `d` neither overflows nor underflows prematurely.
pub fn expected_degree_fraction(d: u64, group: GroupLabel, params: &ModelParams) -> f64 {
    assert!(d >= 1, "degree must be at least 1");
    let q = params.q;
    let pk = params.p[group.index()];
    let mut m = 2.0 * q * pk / (4.0 - q);
    for j in 2..=d {
        m *= degree_fraction_ratio(j, q);
    }
    m
}

/// `M_d / M_{d-1}` for `d >= 2`.
pub fn degree_fraction_ratio(d: u64, q: f64) -> f64 {
    let j = d as f64;
    (j - 1.0) * (2.0 - q) / (2.0 + j * (2.0 - q))
}

/// Degree-distribution exponent `1 + 2 / (2 - q)`, shared by every group.
pub fn power_law_exponent(q: f64) -> Result<f64> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(KpaError::Domain(format!("q = {q} outside (0,1]")));
    }
    Ok(1.0 + 2.0 / (2.0 - q))
}

/// Block-diagonal information matrix of `(theta, p_1..p_{K-1}, q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix {
    matrix: DMatrix<f64>,
    /// Set when evaluated at `theta = 1` or another edge of the parameter space.
    pub boundary: bool,
}

impl FisherMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn theta_entry(&self) -> f64 {
        self.matrix[(0, 0)]
    }

    pub fn q_entry(&self) -> f64 {
        let n = self.dim();
        self.matrix[(n - 1, n - 1)]
    }

    /// The `(K-1) x (K-1)` block for `p_1..p_{K-1}`.
    pub fn p_block(&self) -> DMatrix<f64> {
        let n = self.dim();
        self.matrix.view((1, 1), (n - 2, n - 2)).into_owned()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    /// Asymptotic covariance of the estimates: `Sigma^{-1} / T`.
    pub fn covariance(&self, sample_size: f64) -> Result<DMatrix<f64>> {
        let inv = self
            .matrix
            .clone()
            .cholesky()
            .ok_or_else(|| KpaError::Singular("matrix is not positive definite".into()))?
            .inverse();
        Ok(inv / sample_size)
    }
}

/// Information matrix at the true parameters.
pub fn fisher_information(params: &ModelParams) -> Result<FisherMatrix> {
    let ModelParams { theta, ref p, q, .. } = *params;
    if !(q > 0.0 && q < 1.0) {
        return Err(KpaError::Singular(format!("1/(q(1-q)) is undefined at q = {q}")));
    }
    check_theta(theta)?;
    let k = p.len();
    if k < 2 {
        return Err(KpaError::Singular("theta is not identified with a single group".into()));
    }
    if p.iter().any(|&pk| pk <= 0.0) {
        return Err(KpaError::Singular("every p_k must be positive".into()));
    }

    let dim = k + 1;
    let mut m = DMatrix::<f64>::zeros(dim, dim);
    m[(0, 0)] = p
        .iter()
        .map(|&pk| {
            let c = 1.0 - pk;
            pk * c / theta + pk * c * c / (pk + c * (1.0 - theta))
        })
        .sum();

    let head: f64 = p[..k - 1].iter().sum();
    let last = 1.0 - head;
    for i in 0..k - 1 {
        for j in 0..k - 1 {
            m[(1 + i, 1 + j)] = if i == j {
                let others = head - p[i];
                q * (1.0 - others) / (p[i] * last)
            } else {
                q / last
            };
        }
    }
    m[(dim - 1, dim - 1)] = 1.0 / (q * (1.0 - q));

    if m.iter().any(|v| !v.is_finite()) {
        return Err(KpaError::Singular("non-finite information entry".into()));
    }
    Ok(FisherMatrix { matrix: m, boundary: theta >= 1.0 })
}

/// Plug-in information matrix evaluated at estimates.
pub fn plugin_fisher(estimates: &ModelParams) -> Result<FisherMatrix> {
    fisher_information(estimates)
}
