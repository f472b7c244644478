//! Zero-sum games where nature picks a row and the aggregator picks a point
//! of the unit box; each row's loss is affine in the aggregator's point.

use microlp::{ComparisonOp, OptimizationDirection, Problem};

use crate::error::{Error, Result};

/// Loss `constant + coeffs·x` of one pure nature strategy.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineRow {
    pub constant: f64,
    pub coeffs: Vec<f64>,
}

impl AffineRow {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.coeffs.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GameSolution {
    /// Aggregator's minimax point in `[0,1]^n`.
    pub x: Vec<f64>,
    /// Nature's maximin mixture over rows.
    pub weights: Vec<f64>,
    /// `max_j row_j(x)`, an upper bound on the game value.
    pub upper: f64,
    /// Nature's guaranteed loss under `weights`, a lower bound.
    pub lower: f64,
}

impl GameSolution {
    pub fn gap(&self) -> f64 {
        self.upper - self.lower
    }
}

fn solver_err(e: microlp::Error) -> Error {
    Error::Solver(e.to_string())
}

/// Solves `min_{x∈[0,1]^n} max_j row_j(x)` and its dual.
pub fn solve(rows: &[AffineRow], n: usize) -> Result<GameSolution> {
    if rows.is_empty() {
        return Err(Error::InvalidConfig("game has no rows".into()));
    }
    if rows.iter().any(|r| r.coeffs.len() != n) {
        return Err(Error::InvalidConfig("row length mismatch".into()));
    }

    // aggregator side
    let mut p = Problem::new(OptimizationDirection::Minimize);
    let xs: Vec<_> = (0..n).map(|_| p.add_var(0.0, (0.0, 1.0))).collect();
    let v = p.add_var(1.0, (f64::NEG_INFINITY, f64::INFINITY));
    for r in rows {
        let mut expr: Vec<_> = xs.iter().zip(&r.coeffs).filter(|(_, c)| **c != 0.0).map(|(x, c)| (*x, *c)).collect();
        expr.push((v, -1.0));
        p.add_constraint(expr.as_slice(), ComparisonOp::Le, -r.constant);
    }
    let sol = p.solve().map_err(solver_err)?.into_solution().map_err(|_| Error::Solver("interrupted".into()))?;
    let x: Vec<f64> = xs.iter().map(|&xi| sol.var_value(xi).clamp(0.0, 1.0)).collect();
    let upper = rows.iter().map(|r| r.eval(&x)).fold(f64::NEG_INFINITY, f64::max);

    // nature side: max Σ w_j c_j − Σ_i z_i with z_i ≥ −Σ_j w_j g_ji
    let mut d = Problem::new(OptimizationDirection::Maximize);
    let ws: Vec<_> = rows.iter().map(|r| d.add_var(r.constant, (0.0, 1.0))).collect();
    let zs: Vec<_> = (0..n).map(|_| d.add_var(-1.0, (0.0, f64::INFINITY))).collect();
    d.add_constraint(ws.iter().map(|&w| (w, 1.0)).collect::<Vec<_>>().as_slice(), ComparisonOp::Eq, 1.0);
    for (i, &z) in zs.iter().enumerate() {
        let mut expr: Vec<_> = ws.iter().zip(rows).filter(|(_, r)| r.coeffs[i] != 0.0).map(|(w, r)| (*w, r.coeffs[i])).collect();
        if expr.is_empty() {
            continue;
        }
        expr.push((z, 1.0));
        d.add_constraint(expr.as_slice(), ComparisonOp::Ge, 0.0);
    }
    let sol = d.solve().map_err(solver_err)?.into_solution().map_err(|_| Error::Solver("interrupted".into()))?;
    let mut weights: Vec<f64> = ws.iter().map(|&w| sol.var_value(w).max(0.0)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let lower = nature_value(rows, &weights, n);

    Ok(GameSolution { x, weights, upper, lower })
}

/// `min_x Σ_j w_j row_j(x)`, attained coordinatewise at a box corner.
pub fn nature_value(rows: &[AffineRow], weights: &[f64], n: usize) -> f64 {
    let constant: f64 = rows.iter().zip(weights).map(|(r, w)| w * r.constant).sum();
    let slack: f64 = (0..n)
        .map(|i| rows.iter().zip(weights).map(|(r, w)| w * r.coeffs[i]).sum::<f64>().min(0.0))
        .sum();
    constant + slack
}
