//! The training objective: weighted mean-square interior, boundary and
//! initial residuals over collocation points and a shared parameter batch.
//!
//! The Wasserstein distance between the residual pushforward and the Dirac
//! at zero collapses to the `L2(gamma)` norm of the residual, so the loss is
//! a plain double mean: Monte Carlo over parameter rows, uniform over
//! points. One parameter batch is shared by all three terms. Sums use
//! compensated accumulation so the value is stable under permutation of the
//! collocation points.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::domain::{
    DomainKind, EvalDual, ModelEval, ParameterSpace, Point, RandomProblem, ResidualFn,
};
use crate::measures::{CellValues, NeuralMeasure};
use crate::util::Accumulator;
use crate::{Error, Result};

/// Relative weights of the interior, boundary and initial loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub interior: f64,
    pub boundary: f64,
    pub initial: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            interior: 1.0,
            boundary: 1.0,
            initial: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let ws = [self.interior, self.boundary, self.initial];
        if ws.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument(
                "loss weights must be finite and non-negative".into(),
            ));
        }
        if ws.iter().all(|w| *w == 0.0) {
            return Err(Error::InvalidArgument(
                "at least one loss weight must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// How interior points are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingStrategy {
    /// `n_x * n_t` i.i.d. points in the space-time interior.
    UniformRandom,
    /// Cartesian product of `n_x` i.i.d. spatial draws and `n_t` i.i.d.
    /// temporal draws.
    CartesianProduct,
}

impl SamplingStrategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            SamplingStrategy::UniformRandom => "uniform_random",
            SamplingStrategy::CartesianProduct => "cartesian_product",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uniform_random" => Ok(SamplingStrategy::UniformRandom),
            "cartesian_product" => Ok(SamplingStrategy::CartesianProduct),
            other => Err(Error::InvalidArgument(format!(
                "unknown sampling strategy \"{other}\""
            ))),
        }
    }
}

/// Domain-side collocation points; the parameter batch is attached
/// separately (see [`CollocationBatch`]).
#[derive(Debug, Clone)]
pub struct CollocationPoints {
    pub interior: Vec<Point>,
    /// One point list per boundary component of the problem.
    pub boundary: Vec<Vec<Point>>,
    pub initial: Vec<Point>,
}

/// Draws collocation points for a problem. Interior time coordinates lie in
/// the half-open interval `(t0, t1]`; the initial slice carries `t = t0`.
/// ODE problems use `n_t` interior points and a single initial point.
pub fn sample_collocation(
    problem: &RandomProblem,
    n_x: usize,
    n_t: usize,
    n_boundary: usize,
    n_initial: usize,
    strategy: SamplingStrategy,
    seed: u64,
) -> CollocationPoints {
    assert!(n_x >= 1 && n_t >= 1 && n_boundary >= 1 && n_initial >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (t0, t1) = problem.domain.time_interval;
    // open at t0: u in (0, 1] mapped affinely
    let draw_t = |rng: &mut ChaCha8Rng| t0 + (t1 - t0) * (1.0 - rng.gen::<f64>());

    let interior = match problem.domain.kind {
        DomainKind::Ode => (0..n_t).map(|_| Point::at_time(draw_t(&mut rng))).collect(),
        DomainKind::Pde1d => {
            let (x0, x1) = problem.domain.space_interval.expect("pde domain");
            match strategy {
                SamplingStrategy::CartesianProduct => {
                    let xs: Vec<f64> = (0..n_x).map(|_| rng.gen_range(x0..=x1)).collect();
                    let ts: Vec<f64> = (0..n_t).map(|_| draw_t(&mut rng)).collect();
                    let mut pts = Vec::with_capacity(n_x * n_t);
                    for &x in &xs {
                        for &t in &ts {
                            pts.push(Point::new(x, t));
                        }
                    }
                    pts
                }
                SamplingStrategy::UniformRandom => (0..n_x * n_t)
                    .map(|_| Point::new(rng.gen_range(x0..=x1), draw_t(&mut rng)))
                    .collect(),
            }
        }
    };

    let boundary = problem
        .boundary_residuals
        .iter()
        .map(|br| {
            let x = problem
                .domain
                .boundary_coordinate(br.location)
                .expect("pde boundary");
            (0..n_boundary)
                .map(|_| Point::new(x, rng.gen_range(t0..=t1)))
                .collect()
        })
        .collect();

    let initial = match problem.domain.kind {
        DomainKind::Ode => vec![Point::at_time(t0)],
        DomainKind::Pde1d => {
            let (x0, x1) = problem.domain.space_interval.expect("pde domain");
            (0..n_initial)
                .map(|_| Point::new(rng.gen_range(x0..=x1), t0))
                .collect()
        }
    };

    CollocationPoints {
        interior,
        boundary,
        initial,
    }
}

/// Collocation points plus the shared parameter batch (physical and
/// standardized rows).
#[derive(Debug, Clone)]
pub struct CollocationBatch {
    pub points: CollocationPoints,
    pub xi: Array2<f64>,
    pub xi_std: Array2<f64>,
}

impl CollocationBatch {
    pub fn assemble(
        points: CollocationPoints,
        xi: Array2<f64>,
        params: &ParameterSpace,
    ) -> Result<Self> {
        if xi.nrows() == 0 {
            return Err(Error::EmptyInput("parameter batch".into()));
        }
        let xi_std = crate::domain::standardize_rows(params, &xi)?;
        Ok(Self { points, xi, xi_std })
    }

    pub fn n_xi(&self) -> usize {
        self.xi.nrows()
    }
}

/// Resampling schedule: a component refreshes when its period divides the
/// iteration index; iteration 0 keeps the initial batch.
pub fn resample_due(iteration: usize, domain_period: usize, param_period: usize) -> (bool, bool) {
    assert!(domain_period >= 1 && param_period >= 1);
    (
        iteration > 0 && iteration % domain_period == 0,
        iteration > 0 && iteration % param_period == 0,
    )
}

struct TermOutcome {
    sum_sq: f64,
    count: usize,
}

/// One loss term over a measure: sum of squared residuals over
/// `(xi row, point)` cells, optionally backpropagating `2 w res /
/// count_for_scale` seeds into `grad`. `count_for_scale` is the denominator
/// of the mean this term contributes to (pooled over components for the
/// boundary term).
fn measure_term(
    measure: &NeuralMeasure,
    problem: &RandomProblem,
    batch: &CollocationBatch,
    term: &'static str,
    points: &[Point],
    residual: &ResidualFn,
    weight: f64,
    count_for_scale: usize,
    grad: Option<&mut [f64]>,
) -> Result<TermOutcome> {
    let n_xi = batch.n_xi();
    let count = points.len() * n_xi;
    let dim = batch.xi.ncols();
    let xi_rows: Vec<&[f64]> = batch
        .xi
        .as_slice()
        .expect("standard layout")
        .chunks(dim)
        .collect();

    let wanted = if term == "interior" {
        problem.derivatives
    } else {
        crate::domain::DerivativeSet::NONE
    };
    let scale = 2.0 * weight / count_for_scale as f64;
    let mut acc = Accumulator::new();
    let mut bad_cell: Option<(Point, usize)> = None;
    let mut seeder = |i_xi: usize, i_pt: usize, vals: CellValues| -> CellValues {
        let ev = EvalDual::seeded(vals.u, vals.u_t, vals.u_x, vals.u_xx);
        let res = residual(&ev, points[i_pt], xi_rows[i_xi]);
        if !res.val.is_finite() {
            if bad_cell.is_none() {
                bad_cell = Some((points[i_pt], i_xi));
            }
            return CellValues::default();
        }
        acc.add(res.val * res.val);
        let s = scale * res.val;
        CellValues {
            u: s * res.d[0],
            u_t: s * res.d[1],
            u_x: s * res.d[2],
            u_xx: s * res.d[3],
        }
    };
    measure.sweep_cells(points, &batch.xi_std, wanted, &mut seeder, grad)?;
    if let Some((p, i_xi)) = bad_cell {
        return Err(Error::NonFiniteResidual {
            term,
            x: p.x,
            t: p.t,
            xi: xi_rows[i_xi].to_vec(),
        });
    }
    Ok(TermOutcome {
        sum_sq: acc.total(),
        count,
    })
}

fn combine_terms(
    weights: &LossWeights,
    interior: Option<TermOutcome>,
    boundary: Option<TermOutcome>,
    initial: Option<TermOutcome>,
) -> f64 {
    let mut loss = 0.0;
    if let Some(t) = interior {
        loss += weights.interior * t.sum_sq / t.count as f64;
    }
    if let Some(t) = boundary {
        loss += weights.boundary * t.sum_sq / t.count as f64;
    }
    if let Some(t) = initial {
        loss += weights.initial * t.sum_sq / t.count as f64;
    }
    loss
}

fn loss_impl(
    measure: &NeuralMeasure,
    problem: &RandomProblem,
    batch: &CollocationBatch,
    weights: &LossWeights,
    mut grad: Option<&mut [f64]>,
) -> Result<f64> {
    weights.validate()?;
    if let Some(g) = grad.as_deref_mut() {
        g.fill(0.0);
    }

    let interior = if weights.interior > 0.0 && !batch.points.interior.is_empty() {
        let count = batch.points.interior.len() * batch.n_xi();
        Some(measure_term(
            measure,
            problem,
            batch,
            "interior",
            &batch.points.interior,
            problem.interior_residual.as_ref(),
            weights.interior,
            count,
            grad.as_deref_mut(),
        )?)
    } else {
        None
    };

    let boundary = if weights.boundary > 0.0 && !problem.boundary_residuals.is_empty() {
        // one pooled mean over all boundary components
        let pooled: usize = batch
            .points
            .boundary
            .iter()
            .map(|pts| pts.len() * batch.n_xi())
            .sum();
        let mut sum_sq = 0.0;
        for (br, pts) in problem
            .boundary_residuals
            .iter()
            .zip(&batch.points.boundary)
        {
            if pts.is_empty() {
                continue;
            }
            let outcome = measure_term(
                measure,
                problem,
                batch,
                "boundary",
                pts,
                br.residual.as_ref(),
                weights.boundary,
                pooled,
                grad.as_deref_mut(),
            )?;
            sum_sq += outcome.sum_sq;
        }
        Some(TermOutcome {
            sum_sq,
            count: pooled,
        })
    } else {
        None
    };

    let initial = if weights.initial > 0.0 && !batch.points.initial.is_empty() {
        let count = batch.points.initial.len() * batch.n_xi();
        Some(measure_term(
            measure,
            problem,
            batch,
            "initial",
            &batch.points.initial,
            problem.initial_residual.as_ref(),
            weights.initial,
            count,
            grad.as_deref_mut(),
        )?)
    } else {
        None
    };

    Ok(combine_terms(weights, interior, boundary, initial))
}

/// The training objective `w_int mean|interior|^2 + w_bc mean|boundary|^2 +
/// w_ic mean|initial|^2`.
pub fn residual_loss(
    measure: &NeuralMeasure,
    problem: &RandomProblem,
    batch: &CollocationBatch,
    weights: &LossWeights,
) -> Result<f64> {
    loss_impl(measure, problem, batch, weights, None)
}

/// Loss plus its exact gradient with respect to the measure parameters;
/// `grad` is overwritten.
pub fn residual_loss_and_grad(
    measure: &NeuralMeasure,
    problem: &RandomProblem,
    batch: &CollocationBatch,
    weights: &LossWeights,
    grad: &mut [f64],
) -> Result<f64> {
    loss_impl(measure, problem, batch, weights, Some(grad))
}

/// Same arithmetic as [`residual_loss`] over an arbitrary pointwise
/// evaluator instead of a neural measure. Lets exact solutions be scored
/// directly.
pub fn residual_loss_of_fields<F>(
    problem: &RandomProblem,
    batch: &CollocationBatch,
    weights: &LossWeights,
    eval: F,
) -> Result<f64>
where
    F: Fn(Point, &[f64]) -> ModelEval,
{
    weights.validate()?;
    let dim = batch.xi.ncols();
    let xi_rows: Vec<&[f64]> = batch
        .xi
        .as_slice()
        .expect("standard layout")
        .chunks(dim)
        .collect();

    let term = |term: &'static str,
                points: &[Point],
                residual: &ResidualFn|
     -> Result<TermOutcome> {
        let mut acc = Accumulator::new();
        for xi in &xi_rows {
            for &p in points {
                let ev = eval(p, xi);
                let dual = EvalDual::from_model_eval(&ev);
                let res = residual(&dual, p, xi);
                if !res.val.is_finite() {
                    return Err(Error::NonFiniteResidual {
                        term,
                        x: p.x,
                        t: p.t,
                        xi: xi.to_vec(),
                    });
                }
                acc.add(res.val * res.val);
            }
        }
        Ok(TermOutcome {
            sum_sq: acc.total(),
            count: points.len() * xi_rows.len(),
        })
    };

    let interior = if weights.interior > 0.0 && !batch.points.interior.is_empty() {
        Some(term(
            "interior",
            &batch.points.interior,
            problem.interior_residual.as_ref(),
        )?)
    } else {
        None
    };
    let boundary = if weights.boundary > 0.0 && !problem.boundary_residuals.is_empty() {
        let mut sum_sq = 0.0;
        let mut count = 0;
        for (br, pts) in problem
            .boundary_residuals
            .iter()
            .zip(&batch.points.boundary)
        {
            let o = term("boundary", pts, br.residual.as_ref())?;
            sum_sq += o.sum_sq;
            count += o.count;
        }
        Some(TermOutcome { sum_sq, count })
    } else {
        None
    };
    let initial = if weights.initial > 0.0 && !batch.points.initial.is_empty() {
        Some(term(
            "initial",
            &batch.points.initial,
            problem.initial_residual.as_ref(),
        )?)
    } else {
        None
    };
    Ok(combine_terms(weights, interior, boundary, initial))
}
