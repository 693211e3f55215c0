//! The three bundled random problems and their independent reference
//! solvers.
//!
//! Parameter ordering is fixed per problem and documented on each
//! constructor; residuals receive physical (unstandardized) parameters.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::domain::{
    BoundaryLocation, BoundaryResidual, DerivativeSet, DomainSpec, ParameterSpace, Point,
    RandomProblem,
};
use crate::metrics::{EmpiricalEnsemble, EnsembleMeta};
use crate::{Error, Result};

pub const PROBLEM_NAMES: [&str; 3] = ["bistable", "diffusion", "reaction_diffusion"];

/// Looks up a bundled problem by its registered name.
pub fn problem(name: &str) -> Result<RandomProblem> {
    match name {
        "bistable" => Ok(bistable()),
        "diffusion" => Ok(diffusion()),
        "reaction_diffusion" => Ok(reaction_diffusion()),
        other => Err(Error::UnknownProblem(other.to_string())),
    }
}

/// Bistable vector field `r (u-1)(2-u)(u-3)`: stable equilibria at 1 and 3,
/// unstable at 2.
pub fn bistable_rhs(u: f64, r: f64) -> f64 {
    r * (u - 1.0) * (2.0 - u) * (u - 3.0)
}

fn bistable_rhs_deriv(u: f64, r: f64) -> f64 {
    // d/du [(u-1)(2-u)(u-3)] = -3u^2 + 12u - 11
    r * (-3.0 * u * u + 12.0 * u - 11.0)
}

/// Bistable scalar ODE on `t in [0, 8]` with `u0 ~ U(0,4)`, `r ~ U(0.8,1.2)`;
/// parameter order `(u0, r)`.
pub fn bistable() -> RandomProblem {
    let domain = DomainSpec::ode(0.0, 8.0).expect("static domain");
    let params =
        ParameterSpace::new(vec![("u0", 0.0, 4.0), ("r", 0.8, 1.2)]).expect("static bounds");
    RandomProblem {
        name: "bistable".into(),
        domain,
        params,
        derivatives: DerivativeSet::ode(),
        interior_residual: Box::new(|ev, _p, xi| {
            let r = xi[1];
            let u = ev.u;
            ev.u_t - r * ((u - 1.0) * (2.0 - u) * (u - 3.0))
        }),
        boundary_residuals: Vec::new(),
        initial_residual: Box::new(|ev, _p, xi| ev.u - xi[0]),
        exact_solution: None,
    }
}

/// Closed-form diffusion solution `e^{-a t} sin(k x)`; satisfies
/// `u_t - (a/k^2) u_xx = 0` with the bundled initial and boundary data.
pub fn diffusion_exact(a: f64, k: f64, x: f64, t: f64) -> f64 {
    (-a * t).exp() * (k * x).sin()
}

/// Diffusion equation `u_t = (a/k^2) u_xx` on `x in [0, pi]`, `t in [0, 1]`
/// with `a ~ U(1,3)`, `k ~ U(1,3)`; parameter order `(a, k)`.
pub fn diffusion() -> RandomProblem {
    let pi = std::f64::consts::PI;
    let domain = DomainSpec::pde_1d(0.0, pi, 0.0, 1.0).expect("static domain");
    let params =
        ParameterSpace::new(vec![("a", 1.0, 3.0), ("k", 1.0, 3.0)]).expect("static bounds");
    RandomProblem {
        name: "diffusion".into(),
        domain,
        params,
        derivatives: DerivativeSet {
            dt: true,
            dx: false,
            dxx: true,
        },
        interior_residual: Box::new(|ev, _p, xi| {
            let (a, k) = (xi[0], xi[1]);
            ev.u_t - (a / (k * k)) * ev.u_xx
        }),
        boundary_residuals: vec![
            BoundaryResidual {
                location: BoundaryLocation::Left,
                residual: Box::new(|ev, _p, _xi| ev.u - 0.0),
            },
            BoundaryResidual {
                location: BoundaryLocation::Right,
                residual: Box::new(move |ev, p, xi| {
                    let (a, k) = (xi[0], xi[1]);
                    ev.u - (-a * p.t).exp() * (pi * k).sin()
                }),
            },
        ],
        initial_residual: Box::new(|ev, p, xi| ev.u - (xi[1] * p.x).sin()),
        exact_solution: Some(Box::new(|x, t, xi| diffusion_exact(xi[0], xi[1], x, t))),
    }
}

/// Reaction coefficient `g(x) = 0.2 + e^{r1 x} cos^2(r2 x)`.
pub fn reaction_g(x: f64, r1: f64, r2: f64) -> f64 {
    let c = (r2 * x).cos();
    0.2 + (r1 * x).exp() * c * c
}

/// Forcing `f(x) = exp(-(x - 0.25)^2 / (2 k1^2)) sin^2(k2 x)`.
pub fn forcing_f(x: f64, k1: f64, k2: f64) -> f64 {
    let s = (k2 * x).sin();
    (-(x - 0.25) * (x - 0.25) / (2.0 * k1 * k1)).exp() * s * s
}

/// Diffusion coefficient of the reaction-diffusion benchmark.
pub const REACTION_DIFFUSION_D: f64 = 0.01;

/// Reaction-diffusion `u_t - D u_xx + g(x) u^3 = f(x)` on `x in [-1, 1]`,
/// `t in [0, 4]` with Dirichlet boundaries 0.5 and initial data
/// `0.5 cos^2(pi x)`; parameter order `(r1, r2, k1, k2)`.
pub fn reaction_diffusion() -> RandomProblem {
    let domain = DomainSpec::pde_1d(-1.0, 1.0, 0.0, 4.0).expect("static domain");
    let params = ParameterSpace::new(vec![
        ("r1", 0.5, 1.0),
        ("r2", 3.0, 4.0),
        ("k1", 0.2, 0.8),
        ("k2", 1.0, 4.0),
    ])
    .expect("static bounds");
    let pi = std::f64::consts::PI;
    RandomProblem {
        name: "reaction_diffusion".into(),
        domain,
        params,
        derivatives: DerivativeSet {
            dt: true,
            dx: false,
            dxx: true,
        },
        interior_residual: Box::new(|ev, p, xi| {
            let (r1, r2, k1, k2) = (xi[0], xi[1], xi[2], xi[3]);
            let g = reaction_g(p.x, r1, r2);
            let f = forcing_f(p.x, k1, k2);
            let u = ev.u;
            ev.u_t - REACTION_DIFFUSION_D * ev.u_xx + g * (u * u * u) - f
        }),
        boundary_residuals: vec![
            BoundaryResidual {
                location: BoundaryLocation::Left,
                residual: Box::new(|ev, _p, _xi| ev.u - 0.5),
            },
            BoundaryResidual {
                location: BoundaryLocation::Right,
                residual: Box::new(|ev, _p, _xi| ev.u - 0.5),
            },
        ],
        initial_residual: Box::new(move |ev, p, _xi| {
            let c = (pi * p.x).cos();
            ev.u - 0.5 * c * c
        }),
        exact_solution: None,
    }
}

/// Largest internal step of the bistable reference integrator.
const BISTABLE_MAX_STEP: f64 = 1e-3;

fn backward_euler_step(u: f64, r: f64, h: f64) -> Result<f64> {
    let mut v = u;
    for _ in 0..50 {
        let g = v - u - h * bistable_rhs(v, r);
        if g.abs() <= 1e-12 * v.abs().max(1.0) {
            return Ok(v);
        }
        let dg = 1.0 - h * bistable_rhs_deriv(v, r);
        v -= g / dg;
    }
    Err(Error::NewtonDiverged(format!(
        "backward Euler at u={u}, r={r}, h={h}"
    )))
}

/// Backward-Euler trajectory of the bistable ODE on an ascending grid
/// starting at 0, with per-step Newton solves and step size at most 1e-3.
pub fn solve_bistable_reference(u0: f64, r: f64, t_grid: &[f64]) -> Result<Vec<f64>> {
    if t_grid.is_empty() {
        return Err(Error::EmptyInput("bistable time grid".into()));
    }
    if t_grid[0] < 0.0 || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "bistable time grid must ascend from 0".into(),
        ));
    }
    let mut out = Vec::with_capacity(t_grid.len());
    let mut u = u0;
    let mut t_prev = 0.0;
    for &target in t_grid {
        let span = target - t_prev;
        if span > 0.0 {
            let n_steps = (span / BISTABLE_MAX_STEP).ceil() as usize;
            let h = span / n_steps as f64;
            for _ in 0..n_steps {
                u = backward_euler_step(u, r, h)?;
            }
        }
        out.push(u);
        t_prev = target;
    }
    Ok(out)
}

/// Reference ensemble for the bistable problem: independent parameter draws
/// integrated on a shared time grid.
pub fn bistable_reference_ensemble(
    n_samples: usize,
    seed: u64,
    t_grid: &[f64],
) -> Result<EmpiricalEnsemble> {
    let prob = bistable();
    let draws = prob.params.sample(n_samples, seed);
    let mut values = Array2::zeros((n_samples, t_grid.len()));
    for (i, row) in draws.rows().into_iter().enumerate() {
        let traj = solve_bistable_reference(row[0], row[1], t_grid)?;
        for (j, v) in traj.into_iter().enumerate() {
            values[[i, j]] = v;
        }
    }
    let grid: Vec<Point> = t_grid.iter().map(|&t| Point::at_time(t)).collect();
    EmpiricalEnsemble::new(
        values,
        grid,
        Some(EnsembleMeta {
            problem: "bistable".into(),
            seed,
        }),
    )
}

/// Exact-solution ensemble for the diffusion problem.
pub fn diffusion_reference_ensemble(
    n_samples: usize,
    seed: u64,
    grid: &[Point],
) -> Result<EmpiricalEnsemble> {
    let prob = diffusion();
    let draws = prob.params.sample(n_samples, seed);
    let mut values = Array2::zeros((n_samples, grid.len()));
    for (i, row) in draws.rows().into_iter().enumerate() {
        for (j, p) in grid.iter().enumerate() {
            values[[i, j]] = diffusion_exact(row[0], row[1], p.x, p.t);
        }
    }
    EmpiricalEnsemble::new(
        values,
        grid.to_vec(),
        Some(EnsembleMeta {
            problem: "diffusion".into(),
            seed,
        }),
    )
}

/// Space-time field produced by the reaction-diffusion reference solver.
pub struct RdField {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    /// Shape `(nt + 1, nx + 1)`.
    pub values: Array2<f64>,
}

impl RdField {
    /// Bilinear interpolation; points are clamped to the solver grid.
    pub fn interpolate(&self, x: f64, t: f64) -> f64 {
        let locate = |grid: &[f64], v: f64| -> (usize, f64) {
            let lo = grid[0];
            let hi = grid[grid.len() - 1];
            let step = (hi - lo) / (grid.len() - 1) as f64;
            let pos = ((v - lo) / step).clamp(0.0, (grid.len() - 1) as f64);
            let i = (pos.floor() as usize).min(grid.len() - 2);
            (i, pos - i as f64)
        };
        let (i, ft) = locate(&self.t, t);
        let (j, fx) = locate(&self.x, x);
        let v00 = self.values[[i, j]];
        let v01 = self.values[[i, j + 1]];
        let v10 = self.values[[i + 1, j]];
        let v11 = self.values[[i + 1, j + 1]];
        v00 * (1.0 - ft) * (1.0 - fx)
            + v01 * (1.0 - ft) * fx
            + v10 * ft * (1.0 - fx)
            + v11 * ft * fx
    }
}

/// Method-of-lines reference for the reaction-diffusion problem:
/// second-order central differences on `nx + 1` nodes with Dirichlet
/// boundaries at 0.5, Crank-Nicolson in time with a Newton solve of the
/// cubic term per step (tridiagonal Jacobian).
pub fn solve_reaction_diffusion_reference(
    r1: f64,
    r2: f64,
    k1: f64,
    k2: f64,
    nx: usize,
    nt: usize,
) -> Result<RdField> {
    if nx < 16 || nt < 16 {
        return Err(Error::InvalidArgument(
            "reaction-diffusion reference needs nx, nt >= 16".into(),
        ));
    }
    let (x0, x1, t1) = (-1.0, 1.0, 4.0);
    let pi = std::f64::consts::PI;
    let d = REACTION_DIFFUSION_D;
    let h = (x1 - x0) / nx as f64;
    let dt = t1 / nt as f64;

    let x: Vec<f64> = (0..=nx).map(|i| x0 + h * i as f64).collect();
    let t: Vec<f64> = (0..=nt).map(|n| dt * n as f64).collect();
    let g: Vec<f64> = x.iter().map(|&xi| reaction_g(xi, r1, r2)).collect();
    let f: Vec<f64> = x.iter().map(|&xi| forcing_f(xi, k1, k2)).collect();

    let mut values = Array2::zeros((nt + 1, nx + 1));
    for (j, &xj) in x.iter().enumerate() {
        let c = (pi * xj).cos();
        values[[0, j]] = 0.5 * c * c;
    }

    // spatial operator L(v)_j = d (v_{j-1} - 2 v_j + v_{j+1})/h^2 - g v^3 + f
    let lap = d / (h * h);
    let spatial = |v: &[f64], j: usize| -> f64 {
        lap * (v[j - 1] - 2.0 * v[j] + v[j + 1]) - g[j] * v[j] * v[j] * v[j] + f[j]
    };

    let m = nx - 1; // interior unknowns
    let mut u_prev: Vec<f64> = values.row(0).to_vec();
    let mut v: Vec<f64> = u_prev.clone();
    let mut residual = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let (mut c_prime, mut d_prime) = (vec![0.0; m], vec![0.0; m]);

    for n in 1..=nt {
        v.copy_from_slice(&u_prev);
        let mut converged = false;
        for _ in 0..50 {
            let mut max_res: f64 = 0.0;
            for j in 1..nx {
                let r = v[j] - u_prev[j] - 0.5 * dt * (spatial(&v, j) + spatial(&u_prev, j));
                residual[j - 1] = r;
                max_res = max_res.max(r.abs());
                diag[j - 1] = 1.0 + 0.5 * dt * (2.0 * lap + 3.0 * g[j] * v[j] * v[j]);
            }
            if max_res <= 1e-10 {
                converged = true;
                break;
            }
            // Thomas solve of J delta = residual; off-diagonals are constant.
            let off = -0.5 * dt * lap;
            c_prime[0] = off / diag[0];
            d_prime[0] = residual[0] / diag[0];
            for i in 1..m {
                let denom = diag[i] - off * c_prime[i - 1];
                c_prime[i] = off / denom;
                d_prime[i] = (residual[i] - off * d_prime[i - 1]) / denom;
            }
            let mut delta = vec![0.0; m];
            delta[m - 1] = d_prime[m - 1];
            for i in (0..m - 1).rev() {
                delta[i] = d_prime[i] - c_prime[i] * delta[i + 1];
            }
            for j in 1..nx {
                v[j] -= delta[j - 1];
            }
        }
        if !converged {
            return Err(Error::NewtonDiverged(format!(
                "Crank-Nicolson step {n} (dt={dt}); try a smaller time step"
            )));
        }
        v[0] = 0.5;
        v[nx] = 0.5;
        for (j, &vj) in v.iter().enumerate() {
            values[[n, j]] = vj;
        }
        u_prev.copy_from_slice(&v);
    }

    Ok(RdField { x, t, values })
}

/// Default solver grid behind reaction-diffusion reference ensembles.
pub const RD_REFERENCE_NX: usize = 128;
pub const RD_REFERENCE_NT: usize = 256;

/// Reference ensemble for the reaction-diffusion problem; each draw runs the
/// Crank-Nicolson solver and is sampled onto `grid` by bilinear
/// interpolation.
pub fn reaction_diffusion_reference_ensemble(
    n_samples: usize,
    seed: u64,
    grid: &[Point],
) -> Result<EmpiricalEnsemble> {
    let prob = reaction_diffusion();
    let draws = prob.params.sample(n_samples, seed);
    let mut values = Array2::zeros((n_samples, grid.len()));
    for (i, row) in draws.rows().into_iter().enumerate() {
        let field = solve_reaction_diffusion_reference(
            row[0],
            row[1],
            row[2],
            row[3],
            RD_REFERENCE_NX,
            RD_REFERENCE_NT,
        )?;
        for (j, p) in grid.iter().enumerate() {
            values[[i, j]] = field.interpolate(p.x, p.t);
        }
    }
    EmpiricalEnsemble::new(
        values,
        grid.to_vec(),
        Some(EnsembleMeta {
            problem: "reaction_diffusion".into(),
            seed,
        }),
    )
}

/// Reference ensemble dispatcher keyed by problem name. ODE grids ignore the
/// spatial coordinate of the points.
pub fn reference_ensemble(
    problem_name: &str,
    n_samples: usize,
    seed: u64,
    grid: &[Point],
) -> Result<EmpiricalEnsemble> {
    match problem_name {
        "bistable" => {
            let t_grid: Vec<f64> = grid.iter().map(|p| p.t).collect();
            bistable_reference_ensemble(n_samples, seed, &t_grid)
        }
        "diffusion" => diffusion_reference_ensemble(n_samples, seed, grid),
        "reaction_diffusion" => reaction_diffusion_reference_ensemble(n_samples, seed, grid),
        other => Err(Error::UnknownProblem(other.to_string())),
    }
}

/// Uniform random draws inside the problem domain, used by tests and
/// examples to probe residuals.
pub fn random_domain_points(prob: &RandomProblem, n: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (t0, t1) = prob.domain.time_interval;
    (0..n)
        .map(|_| {
            let t = rng.gen_range(t0..=t1);
            let x = match prob.domain.space_interval {
                Some((x0, x1)) => rng.gen_range(x0..=x1),
                None => 0.0,
            };
            Point::new(x, t)
        })
        .collect()
}
