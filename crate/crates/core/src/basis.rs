//! Dirichlet sine basis, quadrature and piecewise-constant projections on a
//! uniform grid of `[0, 1]`.
//!
//! Fields store interior values only; both endpoint values are implicitly zero.
//! All inner products use the composite trapezoid rule, which on this grid is
//! the plain sum `spacing * sum(a_i * b_i)`. With that rule the sampled
//! eigenfunctions `sqrt(2) sin(k pi x)` are exactly orthonormal for `k <= M`.

use std::f64::consts::{PI, SQRT_2};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest supported number of interior nodes.
pub const MIN_POINTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpecRepr", into = "GridSpecRepr")]
pub struct GridSpec {
    points: usize,
    spacing: f64,
}

#[derive(Serialize, Deserialize)]
struct GridSpecRepr {
    points: usize,
}

impl TryFrom<GridSpecRepr> for GridSpec {
    type Error = Error;
    fn try_from(r: GridSpecRepr) -> Result<Self> {
        GridSpec::new(r.points)
    }
}

impl From<GridSpec> for GridSpecRepr {
    fn from(g: GridSpec) -> Self {
        GridSpecRepr { points: g.points }
    }
}

impl GridSpec {
    pub fn new(points: usize) -> Result<Self> {
        if points < MIN_POINTS {
            return Err(Error::param(
                "grid.points",
                format!("need at least {MIN_POINTS} interior points, got {points}"),
            ));
        }
        Ok(GridSpec {
            points,
            spacing: 1.0 / (points + 1) as f64,
        })
    }

    /// Number of interior nodes `M`.
    pub fn points(&self) -> usize {
        self.points
    }

    /// Node spacing `1 / (M + 1)`.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Position of interior node `i` (zero-based), i.e. `(i + 1) * spacing`.
    pub fn node(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.spacing
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.points).map(move |i| self.node(i))
    }

    /// Largest mode index the grid resolves (`M / 2`).
    pub fn max_mode(&self) -> usize {
        self.points / 2
    }
}

/// A function sampled at the interior nodes of a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl GridField {
    pub fn zeros(grid: GridSpec) -> Self {
        GridField {
            grid,
            values: vec![0.0; grid.points],
        }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(f64) -> f64) -> Self {
        GridField {
            grid,
            values: grid.nodes().map(f).collect(),
        }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.points {
            return Err(Error::GridMismatch {
                left: grid.points,
                right: values.len(),
            });
        }
        Ok(GridField { grid, values })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn check_same_grid(&self, other: &GridField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch {
                left: self.grid.points,
                right: other.grid.points,
            });
        }
        Ok(())
    }

    pub fn l2_norm(&self) -> f64 {
        (self.grid.spacing * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.grid.spacing * self.values.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Trapezoid approximation of `(∫|a|^p dx)^(1/p)`.
    pub fn lp_norm(&self, p: f64) -> f64 {
        (self.grid.spacing * self.values.iter().map(|v| v.abs().powf(p)).sum::<f64>()).powf(1.0 / p)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, c: f64) -> GridField {
        GridField {
            grid: self.grid,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// `self + c * other`.
    pub fn add_scaled(&self, c: f64, other: &GridField) -> Result<GridField> {
        self.check_same_grid(other)?;
        Ok(GridField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + c * b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &GridField) -> Result<GridField> {
        self.add_scaled(-1.0, other)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub index: usize,
    pub eigenvalue: f64,
    pub function: GridField,
}

/// Dirichlet eigenvalue `(k pi)^2` of `-d²/dx²` on `(0, 1)`.
pub fn eigenvalue(k: usize) -> f64 {
    let kp = k as f64 * PI;
    kp * kp
}

fn check_mode(what: &'static str, k: usize, grid: GridSpec) -> Result<()> {
    if k > grid.max_mode() {
        return Err(Error::Resolution {
            what,
            requested: k,
            max: grid.max_mode(),
        });
    }
    Ok(())
}

pub fn eigenpair(k: usize, grid: GridSpec) -> Result<EigenPair> {
    if k == 0 {
        return Err(Error::param("k", "mode index starts at 1"));
    }
    check_mode("mode index", k, grid)?;
    let kp = k as f64 * PI;
    Ok(EigenPair {
        index: k,
        eigenvalue: kp * kp,
        function: GridField::from_fn(grid, |x| SQRT_2 * (kp * x).sin()),
    })
}

pub fn l2_inner(a: &GridField, b: &GridField) -> Result<f64> {
    a.check_same_grid(b)?;
    Ok(a.grid.spacing * dot(&a.values, &b.values))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Derivative samples at all `M + 2` nodes, endpoints included: centered
/// differences inside, one-sided differences at `x = 0` and `x = 1` using the
/// implicit zero boundary values.
pub fn derivative_samples(a: &GridField) -> Vec<f64> {
    let v = &a.values;
    let m = v.len();
    let h = a.grid.spacing;
    let at = |i: isize| -> f64 {
        if i < 0 || i as usize >= m {
            0.0
        } else {
            v[i as usize]
        }
    };
    let mut d = Vec::with_capacity(m + 2);
    d.push(v[0] / h);
    for i in 0..m as isize {
        d.push((at(i + 1) - at(i - 1)) / (2.0 * h));
    }
    d.push(-v[m - 1] / h);
    d
}

/// Trapezoid integral of samples given at all `M + 2` nodes.
pub(crate) fn trapezoid_full(samples: &[f64], h: f64) -> f64 {
    let n = samples.len();
    let inner: f64 = samples[1..n - 1].iter().sum();
    h * (inner + 0.5 * (samples[0] + samples[n - 1]))
}

/// Discrete `‖∂ₓa‖`.
pub fn h1_seminorm(a: &GridField) -> f64 {
    let d = derivative_samples(a);
    let sq: Vec<f64> = d.iter().map(|x| x * x).collect();
    trapezoid_full(&sq, a.grid.spacing).sqrt()
}

/// Second difference `(a_{i+1} - 2a_i + a_{i-1}) / h²` at interior nodes.
pub fn second_difference(a: &GridField) -> GridField {
    let v = &a.values;
    let m = v.len();
    let inv_h2 = 1.0 / (a.grid.spacing * a.grid.spacing);
    let mut out = vec![0.0; m];
    for i in 0..m {
        let left = if i > 0 { v[i - 1] } else { 0.0 };
        let right = if i + 1 < m { v[i + 1] } else { 0.0 };
        out[i] = (right - 2.0 * v[i] + left) * inv_h2;
    }
    GridField {
        grid: a.grid,
        values: out,
    }
}

pub fn modal_coeffs(a: &GridField, n: usize) -> Result<Vec<f64>> {
    ModalBasis::new(a.grid, n)?.coeffs(a)
}

pub fn modal_reconstruct(coeffs: &[f64], grid: GridSpec) -> Result<GridField> {
    ModalBasis::new(grid, coeffs.len())?.reconstruct(coeffs)
}

/// Sampled eigenfunctions `w_1..w_N` cached for repeated projection.
#[derive(Debug, Clone)]
pub struct ModalBasis {
    grid: GridSpec,
    modes: usize,
    // row-major: modes x points
    table: Vec<f64>,
}

impl ModalBasis {
    pub fn new(grid: GridSpec, modes: usize) -> Result<Self> {
        check_mode("mode count", modes, grid)?;
        let mut table = Vec::with_capacity(modes * grid.points);
        for k in 1..=modes {
            let kp = k as f64 * PI;
            table.extend(grid.nodes().map(|x| SQRT_2 * (kp * x).sin()));
        }
        Ok(ModalBasis { grid, modes, table })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    fn row(&self, k: usize) -> &[f64] {
        let m = self.grid.points;
        &self.table[k * m..(k + 1) * m]
    }

    pub fn coeffs(&self, a: &GridField) -> Result<Vec<f64>> {
        if a.grid != self.grid {
            return Err(Error::GridMismatch {
                left: self.grid.points,
                right: a.grid.points,
            });
        }
        let h = self.grid.spacing;
        Ok((0..self.modes)
            .map(|k| h * dot(self.row(k), &a.values))
            .collect())
    }

    pub fn reconstruct(&self, coeffs: &[f64]) -> Result<GridField> {
        if coeffs.len() > self.modes {
            return Err(Error::Resolution {
                what: "coefficient count",
                requested: coeffs.len(),
                max: self.modes,
            });
        }
        let mut out = vec![0.0; self.grid.points];
        for (k, &c) in coeffs.iter().enumerate() {
            for (o, w) in out.iter_mut().zip(self.row(k)) {
                *o += c * w;
            }
        }
        Ok(GridField {
            grid: self.grid,
            values: out,
        })
    }

    /// Orthogonal projection onto `span{w_1..w_N}`.
    pub fn project(&self, a: &GridField) -> Result<GridField> {
        self.reconstruct(&self.coeffs(a)?)
    }
}

/// Equal subintervals `J_k = [(k-1)/N, k/N)` of `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumePartition {
    count: usize,
}

impl VolumePartition {
    pub fn new(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::param(
                "partition.count",
                "need at least one interval",
            ));
        }
        Ok(VolumePartition { count })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn width(&self) -> f64 {
        1.0 / self.count as f64
    }

    pub fn intervals(&self) -> Vec<(f64, f64)> {
        let w = self.width();
        (0..self.count)
            .map(|k| {
                (
                    k as f64 * w,
                    if k + 1 == self.count {
                        1.0
                    } else {
                        (k + 1) as f64 * w
                    },
                )
            })
            .collect()
    }

    /// Zero-based interval containing interior node `i`; boundary nodes go to
    /// the interval they close on the left.
    pub fn interval_of(&self, i: usize, grid: GridSpec) -> usize {
        // x_i * N = (i + 1) N / (M + 1), computed in integers
        (((i + 1) * self.count) / (grid.points + 1)).min(self.count - 1)
    }

    /// Node index ranges of each interval on `grid`.
    pub fn node_ranges(&self, grid: GridSpec) -> Result<Vec<Range<usize>>> {
        let max = grid.points / 4;
        if self.count > max {
            return Err(Error::Resolution {
                what: "volume element count",
                requested: self.count,
                max,
            });
        }
        let mut ranges = Vec::with_capacity(self.count);
        let mut start = 0;
        for k in 0..self.count {
            let mut end = start;
            while end < grid.points && self.interval_of(end, grid) == k {
                end += 1;
            }
            ranges.push(start..end);
            start = end;
        }
        Ok(ranges)
    }
}

/// Per-interval means `(1/|J_k|) ∫_{J_k} a dx`, each computed with the grid
/// quadrature restricted to the nodes of `J_k` and normalized by the quadrature
/// of `1` over the same nodes.
pub fn volume_averages(a: &GridField, part: &VolumePartition) -> Result<Vec<f64>> {
    let ranges = part.node_ranges(a.grid)?;
    Ok(averages_over(&a.values, &ranges))
}

pub(crate) fn averages_over(values: &[f64], ranges: &[Range<usize>]) -> Vec<f64> {
    ranges
        .iter()
        .map(|r| values[r.clone()].iter().sum::<f64>() / r.len() as f64)
        .collect()
}

pub fn piecewise_reconstruct(
    avgs: &[f64],
    part: &VolumePartition,
    grid: GridSpec,
) -> Result<GridField> {
    if avgs.len() != part.count {
        return Err(Error::param(
            "avgs",
            format!("expected {} averages, got {}", part.count, avgs.len()),
        ));
    }
    let values = (0..grid.points)
        .map(|i| avgs[part.interval_of(i, grid)])
        .collect();
    Ok(GridField { grid, values })
}
