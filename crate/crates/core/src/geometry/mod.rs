//! Zonotopes, interval boxes, and the exact containment/intersection tests
//! used for footprints, obstacles, and reachable sets.

mod lp;

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, invalid, Error, Result};
use lp::{solve_standard, LpOutcome};

/// Absolute tolerance when comparing a containment scale against 1.
pub const SCALE_TOLERANCE: f64 = 1e-9;

/// Axis-aligned box `{x : lower ≤ x ≤ upper}`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl IntervalBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim("interval box bounds", lower.len(), upper.len())?;
        if lower.iter().chain(&upper).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("interval box bounds"));
        }
        if let Some(i) = (0..lower.len()).find(|&i| lower[i] > upper[i]) {
            return Err(invalid(alloc::format!(
                "interval box axis {i}: lower {} exceeds upper {}",
                lower[i],
                upper[i]
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    /// Product of the widths of the non-degenerate axes (1 for a point box).
    pub fn volume(&self) -> f64 {
        (0..self.dim())
            .map(|i| self.width(i))
            .filter(|w| *w > 0.0)
            .product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    /// Componentwise clamp into the box.
    pub fn project(&self, x: &mut [f64]) {
        for (v, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*l, *u);
        }
    }

    /// Maps a point of the unit cube `[0, 1]^n` into the box.
    pub fn from_unit(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter()
            .enumerate()
            .map(|(i, u)| self.lower[i] + u * self.width(i))
            .collect()
    }
}

/// `⟨c, G⟩ = {c + G β : ‖β‖∞ ≤ 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Zonotope {
    center: DVector<f64>,
    generators: DMatrix<f64>,
}

/// Result of a containment query: the smallest scale `s` such that the point
/// lies in `⟨c, s·G⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Containment {
    pub contains: bool,
    pub scale: f64,
}

/// Containment scale together with its sensitivity to the queried offset.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeSolution {
    pub scale: f64,
    /// Gradient of the scale with respect to the offset `p − c`.
    /// `None` when the offset is outside the generator span.
    pub gradient: Option<DVector<f64>>,
    /// The LP basis was degenerate, so `gradient` may be one of several subgradients.
    pub degenerate: bool,
}

impl Zonotope {
    pub fn new(center: DVector<f64>, generators: DMatrix<f64>) -> Result<Self> {
        check_dim("zonotope generators", center.len(), generators.nrows())?;
        if center.iter().chain(generators.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("zonotope"));
        }
        Ok(Self { center, generators })
    }

    /// A zonotope with no generators.
    pub fn point(center: DVector<f64>) -> Self {
        let n = center.len();
        Self {
            center,
            generators: DMatrix::zeros(n, 0),
        }
    }

    /// Box `Int(lower, upper)` as a zonotope with one generator per axis.
    pub fn from_box(bx: &IntervalBox) -> Self {
        let center = DVector::from_vec(bx.midpoint());
        let half = DVector::from_iterator(bx.dim(), (0..bx.dim()).map(|i| 0.5 * bx.width(i)));
        Self {
            center,
            generators: DMatrix::from_diagonal(&half),
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn num_generators(&self) -> usize {
        self.generators.ncols()
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn generators(&self) -> &DMatrix<f64> {
        &self.generators
    }

    /// `A·Z = ⟨A c, A G⟩`.
    pub fn linear_map(&self, a: &DMatrix<f64>) -> Result<Self> {
        check_dim("linear map columns", self.dim(), a.ncols())?;
        Ok(Self {
            center: a * &self.center,
            generators: a * &self.generators,
        })
    }

    pub fn translate(&self, offset: &DVector<f64>) -> Result<Self> {
        check_dim("translation", self.dim(), offset.len())?;
        Ok(Self {
            center: &self.center + offset,
            generators: self.generators.clone(),
        })
    }

    /// `Z1 ⊕ Z2 = ⟨c1 + c2, [G1 G2]⟩`.
    pub fn minkowski_sum(&self, other: &Self) -> Result<Self> {
        check_dim("minkowski sum", self.dim(), other.dim())?;
        Ok(Self {
            center: &self.center + &other.center,
            generators: hstack(&self.generators, &other.generators),
        })
    }

    /// Smallest box containing the zonotope.
    pub fn interval_hull(&self) -> IntervalBox {
        let radius: Vec<f64> = self
            .generators
            .row_iter()
            .map(|row| row.iter().map(|g| g.abs()).sum())
            .collect();
        let lower = (0..self.dim()).map(|i| self.center[i] - radius[i]).collect();
        let upper = (0..self.dim()).map(|i| self.center[i] + radius[i]).collect();
        IntervalBox { lower, upper }
    }

    /// Candidate vertices `c + G σ` for every sign pattern σ (2^ℓ points).
    pub fn vertex_candidates(&self) -> Result<Vec<DVector<f64>>> {
        let l = self.num_generators();
        if l > 20 {
            return Err(invalid("too many generators to enumerate vertices"));
        }
        Ok((0..(1usize << l))
            .map(|mask| {
                let mut v = self.center.clone();
                for j in 0..l {
                    let s = if mask & (1 << j) != 0 { 1.0 } else { -1.0 };
                    v.axpy(s, &self.generators.column(j), 1.0);
                }
                v
            })
            .collect())
    }

    /// Solves `min ‖β‖∞ s.t. G β = p − c`.
    pub fn contains_point(&self, p: &DVector<f64>) -> Result<Containment> {
        check_dim("containment point", self.dim(), p.len())?;
        let scale = gauge(&self.generators, &(p - &self.center)).scale;
        Ok(Containment {
            contains: scale <= 1.0 + SCALE_TOLERANCE,
            scale,
        })
    }

    /// Tests `self ∩ other = ∅` via the gauge of `c1 − c2` in `⟨0, [G1 G2]⟩`.
    /// The returned scale is the safety margin: the sets are disjoint iff it exceeds 1.
    pub fn intersection_empty(&self, other: &Self) -> Result<(bool, f64)> {
        let sol = self.intersection_gauge(other)?;
        Ok((sol.scale > 1.0 + SCALE_TOLERANCE, sol.scale))
    }

    /// Like [`Zonotope::intersection_empty`], also returning the gradient of
    /// the margin with respect to this zonotope's center.
    pub fn intersection_gauge(&self, other: &Self) -> Result<GaugeSolution> {
        check_dim("intersection", self.dim(), other.dim())?;
        let g = hstack(&self.generators, &other.generators);
        Ok(gauge(&g, &(&self.center - &other.center)))
    }
}

fn hstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut g = DMatrix::zeros(n, a.ncols() + b.ncols());
    g.columns_mut(0, a.ncols()).copy_from(a);
    g.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    g
}

/// Gauge of `d` with respect to `⟨0, G⟩` as an LP in standard form.
///
/// Variables `[β⁺ (ℓ), β⁻ (ℓ), σ (ℓ), t]`, rows
/// `G β⁺ − G β⁻ = d` and `β⁺_i + β⁻_i + σ_i − t = 0`, objective `t`.
pub(crate) fn gauge(g: &DMatrix<f64>, d: &DVector<f64>) -> GaugeSolution {
    let n = g.nrows();
    let l = g.ncols();
    let zero_offset = d.iter().all(|v| *v == 0.0);
    if l == 0 {
        return if zero_offset {
            GaugeSolution {
                scale: 0.0,
                gradient: Some(DVector::zeros(n)),
                degenerate: true,
            }
        } else {
            GaugeSolution {
                scale: f64::INFINITY,
                gradient: None,
                degenerate: false,
            }
        };
    }

    let nv = 3 * l + 1;
    let m = n + l;
    let mut a = vec![0.0; m * nv];
    let mut b = vec![0.0; m];
    for r in 0..n {
        for j in 0..l {
            a[r * nv + j] = g[(r, j)];
            a[r * nv + l + j] = -g[(r, j)];
        }
        b[r] = d[r];
    }
    let mut hint = vec![None; m];
    for i in 0..l {
        let r = n + i;
        a[r * nv + i] = 1.0;
        a[r * nv + l + i] = 1.0;
        a[r * nv + 2 * l + i] = 1.0;
        a[r * nv + 3 * l] = -1.0;
        hint[r] = Some(2 * l + i);
    }
    let mut c = vec![0.0; nv];
    c[3 * l] = 1.0;

    match solve_standard(&a, &b, &c, &hint) {
        LpOutcome::Optimal(sol) => GaugeSolution {
            scale: sol.value.max(0.0),
            gradient: Some(DVector::from_column_slice(&sol.duals[..n])),
            degenerate: sol.degenerate,
        },
        // The objective is bounded below by 0, so anything else means d ∉ span(G).
        _ => GaugeSolution {
            scale: f64::INFINITY,
            gradient: None,
            degenerate: false,
        },
    }
}
