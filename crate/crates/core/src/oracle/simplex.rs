//! Dense two-phase tableau simplex with Bland's rule.
//!
//! Solves `min cᵀx  s.t.  A_eq x = b_eq,  A_ub x ≤ b_ub,  x ≥ 0`. Meant for the
//! small programs of the offline oracle; every result carries a duality
//! certificate recomputed from the final basis with an LU factorization.

use nalgebra::{DMatrix, DVector};

use crate::error::{structural, Error, Result};

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-11;
const PHASE_ONE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub eq_rows: Vec<Vec<f64>>,
    pub eq_rhs: Vec<f64>,
    pub ub_rows: Vec<Vec<f64>>,
    pub ub_rhs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub value: f64,
    /// Multipliers of the equality rows.
    pub duals_eq: Vec<f64>,
    /// Multipliers of the inequality rows (non-positive at optimality).
    pub duals_ub: Vec<f64>,
    /// `|cᵀx − bᵀy|`.
    pub duality_gap: f64,
    /// Largest negative reduced cost `max(0, −min_j (c − Aᵀy)_j)`.
    pub dual_infeasibility: f64,
    /// Largest violation of any primal row or bound.
    pub primal_residual: f64,
    pub pivots: usize,
}

impl LinearProgram {
    pub fn variables(&self) -> usize {
        self.objective.len()
    }

    fn check(&self) -> Result<()> {
        let n = self.variables();
        if self.eq_rows.len() != self.eq_rhs.len() || self.ub_rows.len() != self.ub_rhs.len() {
            return Err(structural("row and right-hand side counts differ"));
        }
        if self.eq_rows.iter().chain(&self.ub_rows).any(|r| r.len() != n) {
            return Err(structural("constraint row length differs from the variable count"));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.objective)
            || !finite(&self.eq_rhs)
            || !finite(&self.ub_rhs)
            || !self.eq_rows.iter().chain(&self.ub_rows).all(|r| finite(r))
        {
            return Err(structural("linear program has non-finite data"));
        }
        Ok(())
    }

    /// Largest violation of `A_eq x = b_eq`, `A_ub x ≤ b_ub`, `x ≥ 0`.
    pub fn primal_residual(&self, x: &[f64]) -> f64 {
        let dot = |r: &[f64]| r.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let eq = self.eq_rows.iter().zip(&self.eq_rhs).map(|(r, b)| (dot(r) - b).abs());
        let ub = self.ub_rows.iter().zip(&self.ub_rhs).map(|(r, b)| (dot(r) - b).max(0.0));
        let neg = x.iter().map(|v| (-v).max(0.0));
        eq.chain(ub).chain(neg).fold(0.0, f64::max)
    }
}

/// Standard-form data: rows sign-flipped so `b ≥ 0`, slack columns appended.
struct Standard {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Vec<f64>,
    sign: Vec<f64>,
}

impl Standard {
    fn new(lp: &LinearProgram) -> Self {
        let n = lp.variables();
        let m_ub = lp.ub_rows.len();
        let cols = n + m_ub;
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut sign = Vec::new();
        let rows = lp.eq_rows.iter().zip(&lp.eq_rhs).map(|(r, &v)| (r, v, None));
        let ub = lp.ub_rows.iter().zip(&lp.ub_rhs).enumerate().map(|(i, (r, &v))| (r, v, Some(i)));
        for (row, rhs, slack) in rows.chain(ub) {
            let mut full = vec![0.0; cols];
            full[..n].copy_from_slice(row);
            if let Some(i) = slack {
                full[n + i] = 1.0;
            }
            let s = if rhs < 0.0 { -1.0 } else { 1.0 };
            full.iter_mut().for_each(|v| *v *= s);
            a.push(full);
            b.push(s * rhs);
            sign.push(s);
        }
        let mut c = lp.objective.clone();
        c.resize(cols, 0.0);
        Self { a, b, c, sign }
    }
}

struct Tableau {
    /// `rows × (cols + 1)`; the last column is the right-hand side.
    t: Vec<Vec<f64>>,
    /// Reduced-cost row, same width; the last entry is minus the objective.
    cost: Vec<f64>,
    basis: Vec<usize>,
    pivots: usize,
}

impl Tableau {
    fn width(&self) -> usize {
        self.cost.len() - 1
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.t[row][col];
        self.t[row].iter_mut().for_each(|v| *v /= p);
        let pivot_row = self.t[row].clone();
        for (i, r) in self.t.iter_mut().enumerate() {
            if i != row {
                let f = r[col];
                if f != 0.0 {
                    r.iter_mut().zip(&pivot_row).for_each(|(v, p)| *v -= f * p);
                }
            }
        }
        let f = self.cost[col];
        if f != 0.0 {
            self.cost.iter_mut().zip(&pivot_row).for_each(|(v, p)| *v -= f * p);
        }
        self.basis[row] = col;
        self.pivots += 1;
    }

    /// Bland's rule over columns `< allowed`; `Err(Unbounded)` when the
    /// entering column has no positive entry.
    fn optimize(&mut self, allowed: usize) -> Result<()> {
        let rhs = self.width();
        loop {
            let Some(col) = (0..allowed).find(|&j| self.cost[j] < -COST_TOL) else {
                return Ok(());
            };
            let mut best: Option<(f64, usize, usize)> = None;
            for (i, r) in self.t.iter().enumerate() {
                if r[col] > PIVOT_TOL {
                    let ratio = r[rhs] / r[col];
                    let better = match best {
                        None => true,
                        Some((q, _, b)) => ratio < q - 1e-14 || (ratio <= q + 1e-14 && self.basis[i] < b),
                    };
                    if better {
                        best = Some((ratio, i, self.basis[i]));
                    }
                }
            }
            match best {
                Some((_, row, _)) => self.pivot(row, col),
                None => return Err(Error::Unbounded),
            }
        }
    }
}

/// Solves `lp`, returning either an optimal basic solution with its duality
/// certificate, [`Error::Infeasible`] with a Farkas vector `y` (`yᵀA ≤ 0` on
/// the variables, `y_ub ≤ 0`, `yᵀb > 0`), or [`Error::Unbounded`].
pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    lp.check()?;
    let std = Standard::new(lp);
    let m = std.a.len();
    let cols = std.c.len();

    // Phase one: one artificial per row, columns cols..cols+m.
    let width = cols + m;
    let mut t = Vec::with_capacity(m);
    for (i, (row, &b)) in std.a.iter().zip(&std.b).enumerate() {
        let mut r = vec![0.0; width + 1];
        r[..cols].copy_from_slice(row);
        r[cols + i] = 1.0;
        r[width] = b;
        t.push(r);
    }
    let mut cost = vec![0.0; width + 1];
    for r in &t {
        for j in 0..cols {
            cost[j] -= r[j];
        }
        cost[width] -= r[width];
    }
    let mut tab = Tableau { t, cost, basis: (cols..cols + m).collect(), pivots: 0 };
    tab.optimize(width)?;

    let phase_one = -tab.cost[width];
    let scale = 1.0 + std.b.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if phase_one > PHASE_ONE_TOL * scale {
        // Reduced cost of artificial i is 1 − y_i.
        let certificate = (0..m).map(|i| (1.0 - tab.cost[cols + i]) * std.sign[i]).collect();
        return Err(Error::Infeasible {
            reason: format!("phase one stalls at total artificial mass {phase_one:.3e}"),
            certificate,
        });
    }

    // Drive the remaining artificials out; rows where that is impossible are
    // linear combinations of the others.
    let mut redundant = vec![false; m];
    for row in 0..m {
        if tab.basis[row] < cols {
            continue;
        }
        match (0..cols).find(|&j| tab.t[row][j].abs() > 1e-9) {
            Some(col) => tab.pivot(row, col),
            None => redundant[row] = true,
        }
    }

    // Phase two on the original columns.
    let mut cost = vec![0.0; width + 1];
    cost[..cols].copy_from_slice(&std.c);
    for (row, &b) in tab.basis.iter().enumerate() {
        if b < cols && cost[b] != 0.0 {
            let f = cost[b];
            cost.iter_mut().zip(&tab.t[row]).for_each(|(v, p)| *v -= f * p);
        }
    }
    tab.cost = cost;
    for (row, r) in tab.t.iter_mut().enumerate() {
        if redundant[row] {
            r.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    tab.optimize(cols)?;

    certify(lp, &std, &tab.basis, &redundant, tab.pivots)
}

/// Recomputes `x_B = B⁻¹b` and `y = B⁻ᵀc_B` from the final basis.
fn certify(lp: &LinearProgram, std: &Standard, basis: &[usize], redundant: &[bool], pivots: usize) -> Result<LpSolution> {
    let rows: Vec<usize> = (0..std.a.len()).filter(|&i| !redundant[i]).collect();
    let k = rows.len();
    let cols = std.c.len();
    let mut x_full = vec![0.0; cols];
    let mut y = vec![0.0; std.a.len()];
    if k > 0 {
        let b_mat = DMatrix::from_fn(k, k, |i, j| std.a[rows[i]][basis[rows[j]]]);
        let lu = b_mat.clone().lu();
        let rhs = DVector::from_iterator(k, rows.iter().map(|&i| std.b[i]));
        let xb = lu.solve(&rhs).ok_or_else(|| structural("final simplex basis is singular"))?;
        for (j, &i) in rows.iter().enumerate() {
            x_full[basis[i]] = xb[j].max(0.0);
        }
        let cb = DVector::from_iterator(k, rows.iter().map(|&i| std.c[basis[i]]));
        let yb = b_mat
            .transpose()
            .lu()
            .solve(&cb)
            .ok_or_else(|| structural("final simplex basis is singular"))?;
        for (j, &i) in rows.iter().enumerate() {
            y[i] = yb[j];
        }
    }

    let n = lp.variables();
    let x = x_full[..n].to_vec();
    let value: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    let dual_value: f64 = y.iter().zip(&std.b).map(|(y, b)| y * b).sum();
    let mut dual_infeasibility = 0.0f64;
    for j in 0..cols {
        let reduced = std.c[j] - (0..std.a.len()).map(|i| y[i] * std.a[i][j]).sum::<f64>();
        dual_infeasibility = dual_infeasibility.max(-reduced);
    }
    let y_orig: Vec<f64> = y.iter().zip(&std.sign).map(|(y, s)| y * s).collect();
    let m_eq = lp.eq_rows.len();
    Ok(LpSolution {
        primal_residual: lp.primal_residual(&x),
        x,
        value,
        duals_eq: y_orig[..m_eq].to_vec(),
        duals_ub: y_orig[m_eq..].to_vec(),
        duality_gap: (value - dual_value).abs(),
        dual_infeasibility,
        pivots,
    })
}
