//! Shared problem-description types: parameter spaces, domains, residual
//! definitions, and the dual scalar residuals are written in.

use ndarray::Array2;
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Named independent uniform random parameters with bounds.
///
/// Every entry is a uniform distribution on `[lower, upper]`; the product of
/// the entries is the reference law the pushforward measures are built on.
#[derive(Debug, Clone)]
pub struct ParameterSpace {
    entries: Vec<ParameterEntry>,
}

#[derive(Debug, Clone)]
pub struct ParameterEntry {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

impl ParameterSpace {
    pub fn new(entries: Vec<(&str, f64, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidParameterSpace(
                "at least one parameter is required".into(),
            ));
        }
        let entries = entries
            .into_iter()
            .map(|(name, lower, upper)| {
                if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
                    return Err(Error::InvalidParameterSpace(format!(
                        "parameter \"{name}\": need finite lower < upper, got [{lower}, {upper}]"
                    )));
                }
                Ok(ParameterEntry {
                    name: name.to_string(),
                    lower,
                    upper,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { entries })
    }

    pub fn dimension(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[ParameterEntry] {
        &self.entries
    }

    /// `n` i.i.d. uniform samples, one per row; deterministic for a fixed seed.
    pub fn sample(&self, n: usize, seed: u64) -> Array2<f64> {
        assert!(n >= 1, "need at least one sample");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dists: Vec<Uniform<f64>> = self
            .entries
            .iter()
            .map(|e| Uniform::new_inclusive(e.lower, e.upper))
            .collect();
        let mut out = Array2::zeros((n, self.dimension()));
        for i in 0..n {
            for (j, dist) in dists.iter().enumerate() {
                out[[i, j]] = dist.sample(&mut rng);
            }
        }
        out
    }

    /// Affine map of an in-bounds sample onto `[-1, 1]^dim`.
    pub fn standardize(&self, xi: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(xi)?;
        xi.iter()
            .zip(&self.entries)
            .enumerate()
            .map(|(index, (&value, e))| {
                if value < e.lower || value > e.upper {
                    return Err(Error::ParameterOutOfBounds {
                        index,
                        value,
                        lower: e.lower,
                        upper: e.upper,
                    });
                }
                Ok(2.0 * (value - e.lower) / (e.upper - e.lower) - 1.0)
            })
            .collect()
    }

    /// Inverse of [`standardize`](Self::standardize).
    pub fn unstandardize(&self, xi_hat: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(xi_hat)?;
        Ok(xi_hat
            .iter()
            .zip(&self.entries)
            .map(|(&z, e)| e.lower + (z + 1.0) * (e.upper - e.lower) / 2.0)
            .collect())
    }

    pub fn contains(&self, xi: &[f64]) -> bool {
        xi.len() == self.dimension()
            && xi
                .iter()
                .zip(&self.entries)
                .all(|(&v, e)| v >= e.lower && v <= e.upper)
    }

    fn check_dim(&self, xi: &[f64]) -> Result<()> {
        if xi.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                got: xi.len(),
                context: "parameter vector".into(),
            });
        }
        Ok(())
    }
}

/// Standardize every row of a sample matrix. Rows must be in bounds.
pub fn standardize_rows(space: &ParameterSpace, xi: &Array2<f64>) -> Result<Array2<f64>> {
    let mut out = Array2::zeros(xi.raw_dim());
    for (i, row) in xi.rows().into_iter().enumerate() {
        let std = space.standardize(row.as_slice().expect("contiguous row"))?;
        for (j, v) in std.into_iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    Ok(out)
}

/// Which problem class a domain describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    Ode,
    Pde1d,
}

/// Space-time geometry: a time interval, and for PDEs a 1-D space interval.
#[derive(Debug, Clone, Copy)]
pub struct DomainSpec {
    pub time_interval: (f64, f64),
    pub space_interval: Option<(f64, f64)>,
    pub kind: DomainKind,
}

impl DomainSpec {
    pub fn ode(t0: f64, t1: f64) -> Result<Self> {
        if !(t0 < t1) {
            return Err(Error::InvalidDomain(format!(
                "time interval needs t0 < t1, got [{t0}, {t1}]"
            )));
        }
        Ok(Self {
            time_interval: (t0, t1),
            space_interval: None,
            kind: DomainKind::Ode,
        })
    }

    pub fn pde_1d(x0: f64, x1: f64, t0: f64, t1: f64) -> Result<Self> {
        if !(t0 < t1) {
            return Err(Error::InvalidDomain(format!(
                "time interval needs t0 < t1, got [{t0}, {t1}]"
            )));
        }
        if !(x0 < x1) {
            return Err(Error::InvalidDomain(format!(
                "space interval needs x0 < x1, got [{x0}, {x1}]"
            )));
        }
        Ok(Self {
            time_interval: (t0, t1),
            space_interval: Some((x0, x1)),
            kind: DomainKind::Pde1d,
        })
    }

    pub fn contains(&self, p: Point) -> bool {
        let (t0, t1) = self.time_interval;
        if p.t < t0 || p.t > t1 {
            return false;
        }
        match self.space_interval {
            Some((x0, x1)) => p.x >= x0 && p.x <= x1,
            None => true,
        }
    }

    /// Coordinate of a named boundary; PDE domains only.
    pub fn boundary_coordinate(&self, loc: BoundaryLocation) -> Result<f64> {
        let (x0, x1) = self.space_interval.ok_or_else(|| {
            Error::InvalidDomain("ODE domains have no spatial boundary".into())
        })?;
        Ok(match loc {
            BoundaryLocation::Left => x0,
            BoundaryLocation::Right => x1,
        })
    }
}

/// A space-time evaluation point. For ODE domains `x` is fixed at 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub t: f64,
}

impl Point {
    pub fn new(x: f64, t: f64) -> Self {
        Self { x, t }
    }

    pub fn at_time(t: f64) -> Self {
        Self { x: 0.0, t }
    }
}

/// Which input derivatives a model evaluation must carry.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DerivativeSet {
    pub dt: bool,
    pub dx: bool,
    pub dxx: bool,
}

impl DerivativeSet {
    pub const NONE: Self = Self {
        dt: false,
        dx: false,
        dxx: false,
    };

    pub fn all_pde() -> Self {
        Self {
            dt: true,
            dx: true,
            dxx: true,
        }
    }

    pub fn ode() -> Self {
        Self {
            dt: true,
            dx: false,
            dxx: false,
        }
    }

    /// Second space derivatives are propagated through the first, so
    /// requesting `dxx` implies carrying `dx`.
    pub fn needs_dx_channel(&self) -> bool {
        self.dx || self.dxx
    }
}

/// A model value together with the input derivatives a residual can consume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelEval {
    pub u: f64,
    pub u_t: f64,
    pub u_x: Option<f64>,
    pub u_xx: Option<f64>,
}

/// Scalar with partial derivatives with respect to the four model-evaluation
/// channels `(u, u_t, u_x, u_xx)`.
///
/// Residuals are written once over `Dual`; the value feeds the loss and the
/// partials seed the reverse pass, so the gradient path and the value path
/// cannot drift apart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub val: f64,
    pub d: [f64; 4],
}

impl Dual {
    pub const fn constant(val: f64) -> Self {
        Self { val, d: [0.0; 4] }
    }

    pub const fn seeded(val: f64, slot: usize) -> Self {
        let mut d = [0.0; 4];
        d[slot] = 1.0;
        Self { val, d }
    }

    pub fn powi(self, n: i32) -> Self {
        let val = self.val.powi(n);
        let scale = n as f64 * self.val.powi(n - 1);
        Self {
            val,
            d: self.d.map(|g| g * scale),
        }
    }
}

impl std::ops::Add for Dual {
    type Output = Dual;
    fn add(self, rhs: Dual) -> Dual {
        Dual {
            val: self.val + rhs.val,
            d: [
                self.d[0] + rhs.d[0],
                self.d[1] + rhs.d[1],
                self.d[2] + rhs.d[2],
                self.d[3] + rhs.d[3],
            ],
        }
    }
}

impl std::ops::Sub for Dual {
    type Output = Dual;
    fn sub(self, rhs: Dual) -> Dual {
        Dual {
            val: self.val - rhs.val,
            d: [
                self.d[0] - rhs.d[0],
                self.d[1] - rhs.d[1],
                self.d[2] - rhs.d[2],
                self.d[3] - rhs.d[3],
            ],
        }
    }
}

impl std::ops::Mul for Dual {
    type Output = Dual;
    fn mul(self, rhs: Dual) -> Dual {
        Dual {
            val: self.val * rhs.val,
            d: [
                self.d[0] * rhs.val + self.val * rhs.d[0],
                self.d[1] * rhs.val + self.val * rhs.d[1],
                self.d[2] * rhs.val + self.val * rhs.d[2],
                self.d[3] * rhs.val + self.val * rhs.d[3],
            ],
        }
    }
}

impl std::ops::Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual {
            val: -self.val,
            d: self.d.map(|g| -g),
        }
    }
}

impl std::ops::Add<f64> for Dual {
    type Output = Dual;
    fn add(self, rhs: f64) -> Dual {
        Dual {
            val: self.val + rhs,
            d: self.d,
        }
    }
}

impl std::ops::Sub<f64> for Dual {
    type Output = Dual;
    fn sub(self, rhs: f64) -> Dual {
        Dual {
            val: self.val - rhs,
            d: self.d,
        }
    }
}

impl std::ops::Mul<f64> for Dual {
    type Output = Dual;
    fn mul(self, rhs: f64) -> Dual {
        Dual {
            val: self.val * rhs,
            d: self.d.map(|g| g * rhs),
        }
    }
}

impl std::ops::Mul<Dual> for f64 {
    type Output = Dual;
    fn mul(self, rhs: Dual) -> Dual {
        rhs * self
    }
}

impl std::ops::Sub<Dual> for f64 {
    type Output = Dual;
    fn sub(self, rhs: Dual) -> Dual {
        Dual::constant(self) - rhs
    }
}

/// Model evaluation with each channel seeded as an independent dual variable.
#[derive(Debug, Clone, Copy)]
pub struct EvalDual {
    pub u: Dual,
    pub u_t: Dual,
    pub u_x: Dual,
    pub u_xx: Dual,
}

impl EvalDual {
    pub fn seeded(u: f64, u_t: f64, u_x: f64, u_xx: f64) -> Self {
        Self {
            u: Dual::seeded(u, 0),
            u_t: Dual::seeded(u_t, 1),
            u_x: Dual::seeded(u_x, 2),
            u_xx: Dual::seeded(u_xx, 3),
        }
    }

    pub fn from_model_eval(ev: &ModelEval) -> Self {
        Self::seeded(ev.u, ev.u_t, ev.u_x.unwrap_or(0.0), ev.u_xx.unwrap_or(0.0))
    }
}

/// Pointwise residual: model evaluation, space-time point, physical `ξ`.
pub type ResidualFn = dyn Fn(&EvalDual, Point, &[f64]) -> Dual + Send + Sync;

/// Exact solution `u(x, t; ξ)` when one is known.
pub type ExactSolutionFn = dyn Fn(f64, f64, &[f64]) -> f64 + Send + Sync;

pub struct BoundaryResidual {
    pub location: BoundaryLocation,
    pub residual: Box<ResidualFn>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryLocation {
    Left,
    Right,
}

/// A random differential equation: geometry, parameter law, and the strong
/// form point residuals that define its interior, boundary and initial
/// conditions.
pub struct RandomProblem {
    pub name: String,
    pub domain: DomainSpec,
    pub params: ParameterSpace,
    /// Derivative channels the residuals consume.
    pub derivatives: DerivativeSet,
    pub interior_residual: Box<ResidualFn>,
    pub boundary_residuals: Vec<BoundaryResidual>,
    pub initial_residual: Box<ResidualFn>,
    pub exact_solution: Option<Box<ExactSolutionFn>>,
}

impl RandomProblem {
    /// Interior residual value of an arbitrary function given its evaluation.
    pub fn interior_residual_value(&self, ev: &ModelEval, p: Point, xi: &[f64]) -> f64 {
        (self.interior_residual)(&EvalDual::from_model_eval(ev), p, xi).val
    }
}
