//! Dense two-phase simplex for small equality-form linear programs.
//!
//! Solves `min cᵀx  s.t.  A x = b, x ≥ 0` with Bland's anti-cycling rule.
//! The problems solved here (zonotope gauges) have at most a few dozen
//! columns, so a full tableau is the simplest exact method.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LpOutcome {
    Optimal(LpSolution),
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LpSolution {
    pub x: Vec<f64>,
    pub value: f64,
    /// Equality-row multipliers `y` with `cᵀx* = bᵀy*`.
    pub duals: Vec<f64>,
    /// Set when the final basis is primal degenerate or a row was redundant;
    /// the dual vector may then not be unique.
    pub degenerate: bool,
}

struct Tableau {
    rows: usize,
    cols: usize,
    // row-major, `cols + 1` entries per row, rhs last
    data: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * (self.cols + 1) + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.cols + 1;
        let p = self.data[pr * w + pc];
        for c in 0..w {
            self.data[pr * w + c] /= p;
        }
        for r in 0..self.rows {
            if r == pr {
                continue;
            }
            let f = self.data[r * w + pc];
            if f != 0.0 {
                for c in 0..w {
                    self.data[r * w + c] -= f * self.data[pr * w + c];
                }
            }
        }
        self.basis[pr] = pc;
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut red = cost.to_vec();
        for r in 0..self.rows {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                for (c, rc) in red.iter_mut().enumerate() {
                    *rc -= cb * self.at(r, c);
                }
            }
        }
        red
    }

    /// Runs simplex iterations on `cost`, letting only columns `< enter_limit` enter.
    fn optimize(&mut self, cost: &[f64], enter_limit: usize, tol: f64) -> bool {
        let max_iter = 50 * (self.rows + self.cols) + 100;
        for _ in 0..max_iter {
            let red = self.reduced_costs(cost);
            // Bland: lowest-index improving column
            let Some(pc) = (0..enter_limit).find(|&c| red[c] < -tol) else {
                return true;
            };
            let mut best: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > tol {
                    let ratio = self.rhs(r) / a;
                    best = match best {
                        None => Some((r, ratio)),
                        Some((br, bv)) => {
                            if ratio < bv - tol
                                || ((ratio - bv).abs() <= tol && self.basis[r] < self.basis[br])
                            {
                                Some((r, ratio))
                            } else {
                                Some((br, bv))
                            }
                        }
                    };
                }
            }
            match best {
                Some((pr, _)) => self.pivot(pr, pc),
                None => return false,
            }
        }
        // Bland's rule terminates; reaching here means numerical trouble.
        false
    }
}

/// Solves `min cᵀx s.t. A x = b, x ≥ 0` where `a` is row-major `m × n`.
///
/// `basis_hint[r]` may name a column that is the unit vector `e_r` with
/// `b[r] ≥ 0`, letting that row start without an artificial variable.
pub(crate) fn solve_standard(
    a: &[f64],
    b: &[f64],
    c: &[f64],
    basis_hint: &[Option<usize>],
) -> LpOutcome {
    let m = b.len();
    let n = c.len();
    debug_assert_eq!(a.len(), m * n);

    let scale = a
        .iter()
        .chain(b.iter())
        .fold(1.0_f64, |acc, v| acc.max(v.abs()));
    let tol = 1e-11 * scale;

    // Rows needing an artificial: those without a usable hint.
    let mut art_of_row = vec![None; m];
    let mut n_art = 0;
    for r in 0..m {
        let usable = matches!(basis_hint.get(r), Some(Some(_))) && b[r] >= 0.0;
        if !usable {
            art_of_row[r] = Some(n + n_art);
            n_art += 1;
        }
    }
    let cols = n + n_art;
    let w = cols + 1;
    let mut data = vec![0.0; m * w];
    let mut basis = vec![0; m];
    for r in 0..m {
        let sign = if art_of_row[r].is_some() && b[r] < 0.0 {
            -1.0
        } else {
            1.0
        };
        for j in 0..n {
            data[r * w + j] = sign * a[r * n + j];
        }
        data[r * w + cols] = sign * b[r];
        match art_of_row[r] {
            Some(ac) => {
                data[r * w + ac] = 1.0;
                basis[r] = ac;
            }
            None => basis[r] = basis_hint[r].expect("hint checked above"),
        }
    }
    let row_sign: Vec<f64> = (0..m)
        .map(|r| {
            if art_of_row[r].is_some() && b[r] < 0.0 {
                -1.0
            } else {
                1.0
            }
        })
        .collect();
    let mut tab = Tableau {
        rows: m,
        cols,
        data,
        basis,
    };

    // Phase 1.
    let mut redundant = false;
    if n_art > 0 {
        let mut phase1 = vec![0.0; cols];
        for cst in phase1.iter_mut().skip(n) {
            *cst = 1.0;
        }
        if !tab.optimize(&phase1, cols, tol) {
            return LpOutcome::Infeasible;
        }
        let infeas: f64 = (0..m)
            .filter(|&r| tab.basis[r] >= n)
            .map(|r| tab.rhs(r))
            .sum();
        if infeas > 1e-9 * scale {
            return LpOutcome::Infeasible;
        }
        // Drive zero-level artificials out of the basis.
        for r in 0..m {
            if tab.basis[r] >= n {
                match (0..n).find(|&j| tab.at(r, j).abs() > tol) {
                    Some(j) => tab.pivot(r, j),
                    None => redundant = true,
                }
            }
        }
    }

    // Phase 2, artificials barred from entering.
    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(c);
    if !tab.optimize(&cost, n, tol) {
        return LpOutcome::Unbounded;
    }

    let mut x = vec![0.0; n];
    let mut degenerate = redundant;
    for r in 0..m {
        let bv = tab.basis[r];
        let v = tab.rhs(r);
        if v.abs() <= tol {
            degenerate = true;
        }
        if bv < n {
            x[bv] = v;
        }
    }
    let value = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();

    // y_r = c_B B⁻¹ e_r; the identity columns of the starting basis carry B⁻¹.
    let red = tab.reduced_costs(&cost);
    let duals = (0..m)
        .map(|r| {
            let start_col = art_of_row[r].unwrap_or_else(|| basis_hint[r].unwrap_or(0));
            // reduced cost of a unit column with cost c_j is c_j − y_r
            (cost[start_col] - red[start_col]) * row_sign[r]
        })
        .collect();

    LpOutcome::Optimal(LpSolution {
        x,
        value,
        duals,
        degenerate,
    })
}
