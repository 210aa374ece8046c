//! Integral probability metrics on a finite agent-state space.

use minilp::{ComparisonOp, OptimizationDirection, Problem};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum IpmSpec {
    /// F = {f : Span(f) ≤ 1}; d_F is the total variation distance ½‖ν₁ − ν₂‖₁.
    TotalVariation,
    /// F = {f : Lip(f) ≤ 1} with respect to a metric on Z.
    Wasserstein { n: usize, metric: Vec<f64> },
}

impl IpmSpec {
    /// Validates a row-major n×n metric.
    pub fn wasserstein(n: usize, metric: Vec<f64>) -> Result<Self> {
        if metric.len() != n * n {
            return Err(Error::validation("metric table has the wrong size"));
        }
        let d = |i: usize, j: usize| metric[i * n + j];
        for i in 0..n {
            if d(i, i) != 0.0 {
                return Err(Error::validation(format!("metric d({i},{i}) is not zero")));
            }
            for j in 0..n {
                if !d(i, j).is_finite() || d(i, j) < 0.0 {
                    return Err(Error::validation(format!("metric d({i},{j}) is negative")));
                }
                if i != j && d(i, j) == 0.0 {
                    return Err(Error::validation(format!("metric d({i},{j}) is zero off the diagonal")));
                }
                if (d(i, j) - d(j, i)).abs() > 1e-12 {
                    return Err(Error::validation(format!("metric is not symmetric at ({i},{j})")));
                }
                for k in 0..n {
                    if d(i, k) > d(i, j) + d(j, k) + 1e-12 {
                        return Err(Error::validation(format!(
                            "triangle inequality fails for ({i},{j},{k})"
                        )));
                    }
                }
            }
        }
        Ok(IpmSpec::Wasserstein { n, metric })
    }

    /// d(i, j) = 1 for i ≠ j.
    pub fn discrete(n: usize) -> Self {
        let metric = (0..n * n)
            .map(|k| if k / n == k % n { 0.0 } else { 1.0 })
            .collect();
        IpmSpec::Wasserstein { n, metric }
    }

    /// d(i, j) = |i − j|.
    pub fn line(n: usize) -> Self {
        let metric = (0..n * n)
            .map(|k| (k / n).abs_diff(k % n) as f64)
            .collect();
        IpmSpec::Wasserstein { n, metric }
    }

    pub fn name(&self) -> &'static str {
        match self {
            IpmSpec::TotalVariation => "tv",
            IpmSpec::Wasserstein { .. } => "wasserstein",
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if let IpmSpec::Wasserstein { n, .. } = self {
            if *n != len {
                return Err(Error::contract(format!(
                    "metric is defined on {n} points, distribution has {len}"
                )));
            }
        }
        Ok(())
    }
}

/// sup_{f ∈ F} |Σ f (ν₁ − ν₂)|.
pub fn ipm_distance(spec: &IpmSpec, nu1: &[f64], nu2: &[f64]) -> Result<f64> {
    if nu1.len() != nu2.len() {
        return Err(Error::contract("distributions have different lengths"));
    }
    spec.check_len(nu1.len())?;
    match spec {
        IpmSpec::TotalVariation => {
            Ok(0.5 * nu1.iter().zip(nu2).map(|(a, b)| (a - b).abs()).sum::<f64>())
        }
        IpmSpec::Wasserstein { n, metric } => transport_cost(*n, metric, nu1, nu2),
    }
}

/// Optimal transport cost between two distributions on a finite metric
/// space.
///
/// Mass shared by both distributions stays in place at zero cost, so only
/// the excess of ν₁ over ν₂ is moved; the resulting transportation problem
/// is solved by the simplex method.
fn transport_cost(n: usize, metric: &[f64], nu1: &[f64], nu2: &[f64]) -> Result<f64> {
    let supply: Vec<(usize, f64)> = (0..n)
        .map(|i| (i, nu1[i] - nu2[i]))
        .filter(|(_, x)| *x > 0.0)
        .collect();
    let demand: Vec<(usize, f64)> = (0..n)
        .map(|j| (j, nu2[j] - nu1[j]))
        .filter(|(_, x)| *x > 0.0)
        .collect();
    if supply.is_empty() || demand.is_empty() {
        return Ok(0.0);
    }
    if supply.len() == 1 || demand.len() == 1 {
        // a single source or sink leaves no choice
        let cost = supply
            .iter()
            .flat_map(|(i, a)| demand.iter().map(move |(j, b)| (i, j, a, b)))
            .map(|(i, j, a, b)| metric[i * n + j] * if supply.len() == 1 { *b } else { *a })
            .sum();
        return Ok(cost);
    }
    let total_supply: f64 = supply.iter().map(|x| x.1).sum();
    let total_demand: f64 = demand.iter().map(|x| x.1).sum();
    // rescale the demand side so both sides carry the same mass
    let fix = total_supply / total_demand;
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let mut vars = Vec::with_capacity(supply.len() * demand.len());
    for (i, _) in &supply {
        for (j, _) in &demand {
            vars.push(lp.add_var(metric[i * n + j], (0.0, f64::INFINITY)));
        }
    }
    let nd = demand.len();
    for (k, (_, a)) in supply.iter().enumerate() {
        let expr: Vec<_> = (0..nd).map(|l| (vars[k * nd + l], 1.0)).collect();
        lp.add_constraint(expr, ComparisonOp::Eq, *a);
    }
    // the last demand constraint is implied by the others
    for (l, (_, b)) in demand.iter().enumerate().take(nd - 1) {
        let expr: Vec<_> = (0..supply.len()).map(|k| (vars[k * nd + l], 1.0)).collect();
        lp.add_constraint(expr, ComparisonOp::Eq, b * fix);
    }
    let sol = lp
        .solve()
        .map_err(|e| Error::validation(format!("transport problem failed: {e}")))?;
    // recompute the objective from the clipped plan
    let cost = vars
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let (i, j) = (supply[k / nd].0, demand[k % nd].0);
            sol.var_value(*v).max(0.0) * metric[i * n + j]
        })
        .sum();
    Ok(cost)
}

/// ρ_F(f): Span(f) for total variation, the Lipschitz constant for
/// Wasserstein.
pub fn minkowski_norm(spec: &IpmSpec, f: &[f64]) -> Result<f64> {
    spec.check_len(f.len())?;
    if f.iter().any(|x| !x.is_finite()) {
        return Err(Error::contract("function values must be finite"));
    }
    match spec {
        IpmSpec::TotalVariation => {
            let max = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = f.iter().copied().fold(f64::INFINITY, f64::min);
            Ok(if f.is_empty() { 0.0 } else { max - min })
        }
        IpmSpec::Wasserstein { n, metric } => {
            let mut lip: f64 = 0.0;
            for i in 0..*n {
                for j in 0..*n {
                    let d = metric[i * n + j];
                    if d > 0.0 {
                        lip = lip.max((f[i] - f[j]).abs() / d);
                    }
                }
            }
            Ok(lip)
        }
    }
}
