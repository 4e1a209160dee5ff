//! Trapezoid-rule integration of densities tabulated on uniform 1-D or 2-D
//! lattices, and the divergences defined directly by those integrals.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::divergence::DivergenceValue;
use crate::error::{Error, Result};
use crate::oracle::validators::ValidationReport;
use crate::rng::{stream, Rng};

/// Allowed gap between a tabulated density's integral and 1.
pub const MASS_TOL: f64 = 1e-6;

/// One uniform lattice axis with `points` nodes spanning `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) || points < 2 {
            return Err(Error::Config(format!(
                "axis needs lo < hi and at least 2 points, got [{lo}, {hi}] with {points}"
            )));
        }
        Ok(Self { lo, hi, points })
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.points - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.lo + self.step() * i as f64
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    fn weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.points {
            0.5 * self.step()
        } else {
            self.step()
        }
    }
}

/// A density tabulated on a 1-D or 2-D lattice (row-major, first axis
/// slowest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDensity {
    axes: Vec<Axis>,
    values: Vec<f64>,
}

impl GridDensity {
    /// Checks shape, nonnegativity and unit mass.
    pub fn new(axes: Vec<Axis>, values: Vec<f64>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::Config(format!("grids are 1-D or 2-D, got {} axes", axes.len())));
        }
        let cells: usize = axes.iter().map(|a| a.points).product();
        if values.len() != cells {
            return Err(Error::Dimension(format!("{} values for {cells} lattice nodes", values.len())));
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidDistribution(format!("density node {i} is {}", values[i])));
        }
        let g = Self { axes, values };
        let mass = g.integral(|i| g.values[i]);
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidDistribution(format!("density integrates to {mass}")));
        }
        Ok(g)
    }

    pub fn from_fn_1d(axis: Axis, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = (0..axis.points).map(|i| f(axis.node(i))).collect();
        Self::new(alloc::vec![axis], values)
    }

    pub fn from_fn_2d(a0: Axis, a1: Axis, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(a0.points * a1.points);
        for i in 0..a0.points {
            for j in 0..a1.points {
                values.push(f(a0.node(i), a1.node(j)));
            }
        }
        Self::new(alloc::vec![a0, a1], values)
    }

    /// `N(mean, var)` on a 1-D axis.
    pub fn normal_1d(axis: Axis, mean: f64, var: f64) -> Result<Self> {
        if !(var > 0.0 && var.is_finite()) {
            return Err(Error::Config(format!("variance must be positive, got {var}")));
        }
        let c = 1.0 / (2.0 * core::f64::consts::PI * var).sqrt();
        Self::from_fn_1d(axis, |x| c * (-(x - mean) * (x - mean) / (2.0 * var)).exp())
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Area of one interior lattice cell.
    pub fn cell_measure(&self) -> f64 {
        self.axes.iter().map(Axis::step).product()
    }

    /// Length (or area) of the integration range.
    pub fn extent(&self) -> f64 {
        self.axes.iter().map(Axis::length).product()
    }

    fn node_weight(&self, i: usize) -> f64 {
        match self.axes.as_slice() {
            [a] => a.weight(i),
            [a, b] => a.weight(i / b.points) * b.weight(i % b.points),
            _ => unreachable!("validated at construction"),
        }
    }

    /// Trapezoid integral of `f(node index)`.
    pub fn integral(&self, f: impl Fn(usize) -> f64) -> f64 {
        (0..self.values.len()).map(|i| self.node_weight(i) * f(i)).sum()
    }

    fn check_match(&self, other: &Self) -> Result<()> {
        if self.axes != other.axes {
            return Err(Error::Dimension("densities live on different grids".into()));
        }
        Ok(())
    }
}

struct Moments {
    pq: f64,
    pp: f64,
    qq: f64,
}

fn moments(p: &GridDensity, q: &GridDensity) -> Result<Moments> {
    p.check_match(q)?;
    let (a, b) = (&p.values, &q.values);
    Ok(Moments {
        pq: p.integral(|i| a[i] * b[i]),
        pp: p.integral(|i| a[i] * a[i]),
        qq: p.integral(|i| b[i] * b[i]),
    })
}

/// `-log((∫pq)² / (∫p² ∫q²))` by quadrature.
pub fn integrate_cs(p: &GridDensity, q: &GridDensity) -> Result<DivergenceValue> {
    let m = moments(p, q)?;
    if m.pq == 0.0 {
        return Ok(DivergenceValue::Infinite);
    }
    Ok(DivergenceValue::Finite(-(2.0 * m.pq.ln() - m.pp.ln() - m.qq.ln())))
}

/// `∫ p ln(p/q)` by quadrature; infinite where `p > 0 = q`.
pub fn integrate_kl(p: &GridDensity, q: &GridDensity) -> Result<DivergenceValue> {
    p.check_match(q)?;
    let (a, b) = (&p.values, &q.values);
    if a.iter().zip(b).any(|(&u, &v)| u > 0.0 && v == 0.0) {
        return Ok(DivergenceValue::Infinite);
    }
    Ok(DivergenceValue::Finite(p.integral(|i| {
        if a[i] == 0.0 {
            0.0
        } else {
            a[i] * (a[i] / b[i]).ln()
        }
    })))
}

/// `-log(∫pq / ((∫pᵃ)^(1/a) (∫q^b)^(1/b)))` with `1/a + 1/b = 1`.
pub fn integrate_holder(p: &GridDensity, q: &GridDensity, a: f64) -> Result<DivergenceValue> {
    if !(a > 1.0 && a.is_finite()) {
        return Err(Error::Config(format!("Hölder exponent must exceed 1, got {a}")));
    }
    p.check_match(q)?;
    let b = a / (a - 1.0);
    let (u, v) = (&p.values, &q.values);
    let pq = p.integral(|i| u[i] * v[i]);
    if pq == 0.0 {
        return Ok(DivergenceValue::Infinite);
    }
    let pa = p.integral(|i| u[i].powf(a));
    let qb = p.integral(|i| v[i].powf(b));
    Ok(DivergenceValue::Finite(-(pq.ln() - pa.ln() / a - qb.ln() / b)))
}

/// Both sides of the bound `C₁[D − log|K| + 2 log C₂] ≤ KL(p; q)`, where `D`
/// is the halved CS divergence on the grid range `K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prop5Report {
    pub lhs: f64,
    pub rhs: DivergenceValue,
    pub c1: f64,
    pub c2: f64,
    pub holds: bool,
}

pub fn validate_prop5(p: &GridDensity, q: &GridDensity) -> Result<Prop5Report> {
    let m = moments(p, q)?;
    let c1 = p.integral(|i| p.values[i]);
    let c2 = c1 / (m.pp * m.qq).powf(0.25);
    let lhs = if m.pq == 0.0 {
        f64::INFINITY
    } else {
        let halved = 0.5 * (m.pp.ln() + m.qq.ln()) - m.pq.ln();
        c1 * (halved - p.extent().ln() + 2.0 * c2.ln())
    };
    let rhs = integrate_kl(p, q)?;
    let holds = lhs <= rhs.nats();
    Ok(Prop5Report { lhs, rhs, c1, c2, holds })
}

/// Grid used by [`validate_prop5_gaussians`].
pub const PROP5_AXIS: (f64, f64, usize) = (-12.0, 12.0, 4001);

/// Counts random 1-D Gaussian pairs on a bounded grid where the bound
/// fails. Means are `U(−2, 2)`, variances `U(0.25, 2)`.
pub fn validate_prop5_gaussians(trials: usize, seed: u64) -> Result<ValidationReport> {
    if trials == 0 {
        return Err(Error::Config("at least one trial is required".into()));
    }
    let (lo, hi, points) = PROP5_AXIS;
    let ax = Axis::new(lo, hi, points)?;
    let mut rng = Rng::new(seed, stream::ORACLE);
    let mut report = ValidationReport {
        trials,
        violations: 0,
        max_gap: f64::NEG_INFINITY,
    };
    for _ in 0..trials {
        let mut draw = || GridDensity::normal_1d(ax, rng.uniform_range(-2.0, 2.0), rng.uniform_range(0.25, 2.0));
        let (p, q) = (draw()?, draw()?);
        let r = validate_prop5(&p, &q)?;
        if !r.holds {
            report.violations += 1;
        }
        report.max_gap = report.max_gap.max(r.lhs - r.rhs.nats());
    }
    Ok(report)
}
