//! The three neural-measure families: parameterized maps from the random
//! parameter space into solution functions, whose pushforward of the
//! parameter law is trained against physics residuals.
//!
//! - `FullNnMeasure`: one scalar network over `(x, t, xi_hat)`.
//! - `PceNnMeasure`: a network over `(x, t)` whose output components are
//!   polynomial-chaos coefficients; space-time derivatives hit only the
//!   coefficient fields, the chaos factor enters as a scalar.
//! - `GalerkinNnMeasure`: a network over `xi_hat` whose output components
//!   are coefficients of a fixed Chebyshev space-time basis; space-time
//!   derivatives hit only the basis.
//!
//! All three expose the same cell sweep: evaluate the model on a
//! `(parameter sample, grid point)` grid, hand each cell's channels to a
//! caller-supplied seeder, and backpropagate the returned adjoints into a
//! flat parameter gradient. The training loss, test loss and ensemble
//! sampling all ride on this one code path.

use ndarray::Array2;

use crate::chebyshev::SpaceTimeBasis;
use crate::domain::{DerivativeSet, DomainKind, DomainSpec, ModelEval, ParameterSpace, Point};
use crate::metrics::{EmpiricalEnsemble, EnsembleMeta};
use crate::networks::{
    backward_jets, forward_jets, InputLayout, Jets, MlpArchitecture, ParameterVector,
};
use crate::pce::ChaosBasis;
use crate::{Error, Result};

/// Cells processed per taped forward pass; bounds tape memory.
const SWEEP_CHUNK: usize = 2048;

/// Model evaluation channels of one `(parameter sample, grid point)` cell.
/// Channels that were not requested read as zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct CellValues {
    pub u: f64,
    pub u_t: f64,
    pub u_x: f64,
    pub u_xx: f64,
}

/// Dense evaluation of a measure over a parameter batch and a point grid;
/// arrays have shape `(n_xi, n_points)`.
#[derive(Debug, Clone)]
pub struct GridEval {
    pub u: Array2<f64>,
    pub u_t: Option<Array2<f64>>,
    pub u_x: Option<Array2<f64>>,
    pub u_xx: Option<Array2<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureVariant {
    FullNn,
    PceNn,
    GalerkinNn,
}

impl MeasureVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            MeasureVariant::FullNn => "fullnn",
            MeasureVariant::PceNn => "pce_nn",
            MeasureVariant::GalerkinNn => "galerkin_nn",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fullnn" => Ok(MeasureVariant::FullNn),
            "pce_nn" => Ok(MeasureVariant::PceNn),
            "galerkin_nn" => Ok(MeasureVariant::GalerkinNn),
            other => Err(Error::InvalidArgument(format!(
                "unknown measure variant \"{other}\" (expected fullnn, pce_nn or galerkin_nn)"
            ))),
        }
    }
}

fn spacetime_dims(domain: &DomainSpec) -> usize {
    match domain.kind {
        DomainKind::Ode => 1,
        DomainKind::Pde1d => 2,
    }
}

/// Scalar network over `(x, t, xi_hat)`.
pub struct FullNnMeasure {
    pub domain: DomainSpec,
    pub params: ParameterSpace,
    pub arch: MlpArchitecture,
    theta: Vec<f64>,
}

impl FullNnMeasure {
    pub fn new(
        domain: DomainSpec,
        params: ParameterSpace,
        arch: MlpArchitecture,
        theta: ParameterVector,
    ) -> Result<Self> {
        let expected_in = spacetime_dims(&domain) + params.dimension();
        if arch.input_dim != expected_in {
            return Err(Error::DimensionMismatch {
                expected: expected_in,
                got: arch.input_dim,
                context: "fullnn input dimension (space-time + parameters)".into(),
            });
        }
        if arch.output_dim != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: arch.output_dim,
                context: "fullnn output dimension".into(),
            });
        }
        Ok(Self {
            domain,
            params,
            arch,
            theta: theta.into_vec(),
        })
    }

    fn layout(&self) -> InputLayout {
        match self.domain.kind {
            DomainKind::Ode => InputLayout {
                t_index: Some(0),
                x_index: None,
            },
            DomainKind::Pde1d => InputLayout {
                t_index: Some(1),
                x_index: Some(0),
            },
        }
    }
}

/// Network over `(x, t)` with polynomial-chaos coefficients as outputs.
pub struct PceNnMeasure {
    pub domain: DomainSpec,
    pub params: ParameterSpace,
    pub arch: MlpArchitecture,
    pub basis: ChaosBasis,
    theta: Vec<f64>,
}

impl PceNnMeasure {
    pub fn new(
        domain: DomainSpec,
        params: ParameterSpace,
        arch: MlpArchitecture,
        theta: ParameterVector,
        basis: ChaosBasis,
    ) -> Result<Self> {
        if basis.dim() != params.dimension() {
            return Err(Error::DimensionMismatch {
                expected: params.dimension(),
                got: basis.dim(),
                context: "chaos basis dimension".into(),
            });
        }
        let expected_in = spacetime_dims(&domain);
        if arch.input_dim != expected_in {
            return Err(Error::DimensionMismatch {
                expected: expected_in,
                got: arch.input_dim,
                context: "pce_nn input dimension (space-time)".into(),
            });
        }
        if arch.output_dim != basis.cardinality() {
            return Err(Error::DimensionMismatch {
                expected: basis.cardinality(),
                got: arch.output_dim,
                context: "pce_nn output dimension (chaos cardinality)".into(),
            });
        }
        Ok(Self {
            domain,
            params,
            arch,
            basis,
            theta: theta.into_vec(),
        })
    }

    fn layout(&self) -> InputLayout {
        match self.domain.kind {
            DomainKind::Ode => InputLayout {
                t_index: Some(0),
                x_index: None,
            },
            DomainKind::Pde1d => InputLayout {
                t_index: Some(1),
                x_index: Some(0),
            },
        }
    }

    fn point_inputs(&self, points: &[Point]) -> Array2<f64> {
        let d = spacetime_dims(&self.domain);
        let mut inputs = Array2::zeros((points.len(), d));
        for (i, p) in points.iter().enumerate() {
            match self.domain.kind {
                DomainKind::Ode => inputs[[i, 0]] = p.t,
                DomainKind::Pde1d => {
                    inputs[[i, 0]] = p.x;
                    inputs[[i, 1]] = p.t;
                }
            }
        }
        inputs
    }
}

/// Network over `xi_hat` with space-time basis coefficients as outputs.
pub struct GalerkinNnMeasure {
    pub domain: DomainSpec,
    pub params: ParameterSpace,
    pub arch: MlpArchitecture,
    pub basis: SpaceTimeBasis,
    theta: Vec<f64>,
}

impl GalerkinNnMeasure {
    pub fn new(
        domain: DomainSpec,
        params: ParameterSpace,
        arch: MlpArchitecture,
        theta: ParameterVector,
        basis: SpaceTimeBasis,
    ) -> Result<Self> {
        if arch.input_dim != params.dimension() {
            return Err(Error::DimensionMismatch {
                expected: params.dimension(),
                got: arch.input_dim,
                context: "galerkin_nn input dimension (parameters)".into(),
            });
        }
        if arch.output_dim != basis.cardinality() {
            return Err(Error::DimensionMismatch {
                expected: basis.cardinality(),
                got: arch.output_dim,
                context: "galerkin_nn output dimension (basis cardinality)".into(),
            });
        }
        if basis.domain().kind != domain.kind {
            return Err(Error::InvalidDomain(
                "space-time basis domain kind differs from problem domain".into(),
            ));
        }
        Ok(Self {
            domain,
            params,
            arch,
            basis,
            theta: theta.into_vec(),
        })
    }
}

/// A neural pushforward measure of any of the three families.
pub enum NeuralMeasure {
    FullNn(FullNnMeasure),
    PceNn(PceNnMeasure),
    GalerkinNn(GalerkinNnMeasure),
}

impl NeuralMeasure {
    pub fn variant(&self) -> MeasureVariant {
        match self {
            NeuralMeasure::FullNn(_) => MeasureVariant::FullNn,
            NeuralMeasure::PceNn(_) => MeasureVariant::PceNn,
            NeuralMeasure::GalerkinNn(_) => MeasureVariant::GalerkinNn,
        }
    }

    pub fn domain(&self) -> &DomainSpec {
        match self {
            NeuralMeasure::FullNn(m) => &m.domain,
            NeuralMeasure::PceNn(m) => &m.domain,
            NeuralMeasure::GalerkinNn(m) => &m.domain,
        }
    }

    pub fn params(&self) -> &ParameterSpace {
        match self {
            NeuralMeasure::FullNn(m) => &m.params,
            NeuralMeasure::PceNn(m) => &m.params,
            NeuralMeasure::GalerkinNn(m) => &m.params,
        }
    }

    pub fn arch(&self) -> &MlpArchitecture {
        match self {
            NeuralMeasure::FullNn(m) => &m.arch,
            NeuralMeasure::PceNn(m) => &m.arch,
            NeuralMeasure::GalerkinNn(m) => &m.arch,
        }
    }

    pub fn theta(&self) -> &[f64] {
        match self {
            NeuralMeasure::FullNn(m) => &m.theta,
            NeuralMeasure::PceNn(m) => &m.theta,
            NeuralMeasure::GalerkinNn(m) => &m.theta,
        }
    }

    pub fn parameter_vector(&self) -> ParameterVector {
        ParameterVector::new(self.arch(), self.theta().to_vec()).expect("stored theta is valid")
    }

    pub fn set_theta(&mut self, theta: Vec<f64>) -> Result<()> {
        let validated = ParameterVector::new(self.arch(), theta)?.into_vec();
        match self {
            NeuralMeasure::FullNn(m) => m.theta = validated,
            NeuralMeasure::PceNn(m) => m.theta = validated,
            NeuralMeasure::GalerkinNn(m) => m.theta = validated,
        }
        Ok(())
    }

    /// Evaluates the model over every `(parameter row, point)` cell, feeding
    /// each cell's channels to `seeder`. When `grad` is given, the adjoints
    /// returned by `seeder` are backpropagated into it (accumulated).
    ///
    /// `xi_std` holds standardized parameter rows. The visit order is row
    /// major over `(xi, point)` and deterministic.
    pub(crate) fn sweep_cells<S>(
        &self,
        points: &[Point],
        xi_std: &Array2<f64>,
        wanted: DerivativeSet,
        seeder: &mut S,
        mut grad: Option<&mut [f64]>,
    ) -> Result<()>
    where
        S: FnMut(usize, usize, CellValues) -> CellValues,
    {
        if points.is_empty() || xi_std.nrows() == 0 {
            return Err(Error::EmptyInput("cell sweep needs points and samples".into()));
        }
        match self {
            NeuralMeasure::FullNn(m) => {
                let n_pts = points.len();
                let n_xi = xi_std.nrows();
                let d_ran = m.params.dimension();
                let d_st = spacetime_dims(&m.domain);
                let total = n_pts * n_xi;
                let layout = m.layout();
                let mut start = 0;
                while start < total {
                    let len = SWEEP_CHUNK.min(total - start);
                    let mut inputs = Array2::zeros((len, m.arch.input_dim));
                    for local in 0..len {
                        let cell = start + local;
                        let (i_xi, i_pt) = (cell / n_pts, cell % n_pts);
                        let p = points[i_pt];
                        match m.domain.kind {
                            DomainKind::Ode => inputs[[local, 0]] = p.t,
                            DomainKind::Pde1d => {
                                inputs[[local, 0]] = p.x;
                                inputs[[local, 1]] = p.t;
                            }
                        }
                        for j in 0..d_ran {
                            inputs[[local, d_st + j]] = xi_std[[i_xi, j]];
                        }
                    }
                    let want_tape = grad.is_some();
                    let eval =
                        forward_jets(&m.arch, &m.theta, &inputs, layout, wanted, want_tape)?;
                    let mut adj = want_tape.then(|| Jets::zeros_like_shape(len, 1, wanted));
                    for local in 0..len {
                        let cell = start + local;
                        let (i_xi, i_pt) = (cell / n_pts, cell % n_pts);
                        let vals = CellValues {
                            u: eval.out.val[[local, 0]],
                            u_t: eval.out.dt.as_ref().map_or(0.0, |c| c[[local, 0]]),
                            u_x: eval.out.dx.as_ref().map_or(0.0, |c| c[[local, 0]]),
                            u_xx: eval.out.dxx.as_ref().map_or(0.0, |c| c[[local, 0]]),
                        };
                        let a = seeder(i_xi, i_pt, vals);
                        if let Some(adj) = adj.as_mut() {
                            adj.val[[local, 0]] = a.u;
                            if let Some(c) = adj.dt.as_mut() {
                                c[[local, 0]] = a.u_t;
                            }
                            if let Some(c) = adj.dx.as_mut() {
                                c[[local, 0]] = a.u_x;
                            }
                            if let Some(c) = adj.dxx.as_mut() {
                                c[[local, 0]] = a.u_xx;
                            }
                        }
                    }
                    if let Some(g) = grad.as_deref_mut() {
                        backward_jets(
                            &m.arch,
                            &m.theta,
                            eval.tape.as_ref().expect("taped forward"),
                            adj.as_ref().unwrap(),
                            g,
                        );
                    }
                    start += len;
                }
                Ok(())
            }
            NeuralMeasure::PceNn(m) => {
                let inputs = m.point_inputs(points);
                let want_tape = grad.is_some();
                let eval =
                    forward_jets(&m.arch, &m.theta, &inputs, m.layout(), wanted, want_tape)?;
                let phi = m.basis.eval_matrix(xi_std)?; // (n_xi, K)

                // Channel grids: u_ch = Phi C_ch^T, shape (n_xi, n_pts).
                let grids = GridEval {
                    u: phi.dot(&eval.out.val.t()),
                    u_t: eval.out.dt.as_ref().map(|c| phi.dot(&c.t())),
                    u_x: eval.out.dx.as_ref().map(|c| phi.dot(&c.t())),
                    u_xx: eval.out.dxx.as_ref().map(|c| phi.dot(&c.t())),
                };
                let adj = visit_grid(&grids, seeder, grad.is_some(), wanted);
                if let Some(g) = grad.as_deref_mut() {
                    let adj = adj.unwrap();
                    // Coefficient adjoints: Cbar_ch = Adj_ch^T Phi, (n_pts, K).
                    let adj_jets = Jets {
                        val: adj.u.t().dot(&phi),
                        dt: adj.u_t.as_ref().map(|a| a.t().dot(&phi)),
                        dx: adj.u_x.as_ref().map(|a| a.t().dot(&phi)),
                        dxx: adj.u_xx.as_ref().map(|a| a.t().dot(&phi)),
                    };
                    backward_jets(
                        &m.arch,
                        &m.theta,
                        eval.tape.as_ref().expect("taped forward"),
                        &adj_jets,
                        g,
                    );
                }
                Ok(())
            }
            NeuralMeasure::GalerkinNn(m) => {
                let want_tape = grad.is_some();
                // The network sees only xi; all space-time structure lives in
                // the basis, so no input jets are needed.
                let eval = forward_jets(
                    &m.arch,
                    &m.theta,
                    xi_std,
                    InputLayout::default(),
                    DerivativeSet::NONE,
                    want_tape,
                )?;
                let b = &eval.out.val; // (n_xi, M)
                let (psi, psi_t, psi_x, psi_xx) = m.basis.eval_matrix(points, wanted);
                let grids = GridEval {
                    u: b.dot(&psi.t()),
                    u_t: psi_t.as_ref().map(|mtx| b.dot(&mtx.t())),
                    u_x: psi_x.as_ref().map(|mtx| b.dot(&mtx.t())),
                    u_xx: psi_xx.as_ref().map(|mtx| b.dot(&mtx.t())),
                };
                let adj = visit_grid(&grids, seeder, grad.is_some(), wanted);
                if let Some(g) = grad.as_deref_mut() {
                    let adj = adj.unwrap();
                    // Bbar = sum_ch Adj_ch Psi_ch, (n_xi, M).
                    let mut bbar = adj.u.dot(&psi);
                    if let (Some(a), Some(mtx)) = (&adj.u_t, &psi_t) {
                        bbar += &a.dot(mtx);
                    }
                    if let (Some(a), Some(mtx)) = (&adj.u_x, &psi_x) {
                        bbar += &a.dot(mtx);
                    }
                    if let (Some(a), Some(mtx)) = (&adj.u_xx, &psi_xx) {
                        bbar += &a.dot(mtx);
                    }
                    let adj_jets = Jets {
                        val: bbar,
                        dt: None,
                        dx: None,
                        dxx: None,
                    };
                    backward_jets(
                        &m.arch,
                        &m.theta,
                        eval.tape.as_ref().expect("taped forward"),
                        &adj_jets,
                        g,
                    );
                }
                Ok(())
            }
        }
    }

    /// Dense evaluation over standardized parameter rows and a point grid.
    pub fn eval_grid(
        &self,
        points: &[Point],
        xi_std: &Array2<f64>,
        wanted: DerivativeSet,
    ) -> Result<GridEval> {
        let n_xi = xi_std.nrows();
        let n_pts = points.len();
        let mk = || Array2::zeros((n_xi, n_pts));
        let mut out = GridEval {
            u: mk(),
            u_t: wanted.dt.then(mk),
            u_x: wanted.dx.then(mk),
            u_xx: wanted.dxx.then(mk),
        };
        self.sweep_cells(
            points,
            xi_std,
            wanted,
            &mut |i, j, vals| {
                out.u[[i, j]] = vals.u;
                if let Some(c) = out.u_t.as_mut() {
                    c[[i, j]] = vals.u_t;
                }
                if let Some(c) = out.u_x.as_mut() {
                    c[[i, j]] = vals.u_x;
                }
                if let Some(c) = out.u_xx.as_mut() {
                    c[[i, j]] = vals.u_xx;
                }
                CellValues::default()
            },
            None,
        )?;
        Ok(out)
    }

    /// Single-point evaluation with domain and parameter validation.
    pub fn eval(&self, x: f64, t: f64, xi: &[f64], wanted: DerivativeSet) -> Result<ModelEval> {
        let p = Point::new(x, t);
        if !self.domain().contains(p) {
            return Err(Error::PointOutOfDomain { x, t });
        }
        let xi_std = self.params().standardize(xi)?;
        let xi_mat =
            Array2::from_shape_vec((1, xi_std.len()), xi_std).expect("standardized row");
        let grid = self.eval_grid(&[p], &xi_mat, wanted)?;
        Ok(ModelEval {
            u: grid.u[[0, 0]],
            u_t: grid.u_t.as_ref().map_or(0.0, |c| c[[0, 0]]),
            u_x: wanted.dx.then(|| grid.u_x.as_ref().unwrap()[[0, 0]]),
            u_xx: wanted.dxx.then(|| grid.u_xx.as_ref().unwrap()[[0, 0]]),
        })
    }

    /// Samples the pushforward measure: one ensemble row per parameter draw.
    pub fn sample_pushforward(
        &self,
        xi_batch: &Array2<f64>,
        grid: &[Point],
        meta: Option<EnsembleMeta>,
    ) -> Result<EmpiricalEnsemble> {
        if grid.is_empty() || xi_batch.nrows() == 0 {
            return Err(Error::EmptyInput("pushforward batch and grid".into()));
        }
        for &p in grid {
            if !self.domain().contains(p) {
                return Err(Error::PointOutOfDomain { x: p.x, t: p.t });
            }
        }
        let xi_std = crate::domain::standardize_rows(self.params(), xi_batch)?;
        let values = self.eval_grid(grid, &xi_std, DerivativeSet::NONE)?.u;
        EmpiricalEnsemble::new(values, grid.to_vec(), meta)
    }
}

fn visit_grid<S>(
    grids: &GridEval,
    seeder: &mut S,
    want_adjoints: bool,
    wanted: DerivativeSet,
) -> Option<GridEval>
where
    S: FnMut(usize, usize, CellValues) -> CellValues,
{
    let (n_xi, n_pts) = grids.u.dim();
    let mk = || Array2::zeros((n_xi, n_pts));
    let mut adj = want_adjoints.then(|| GridEval {
        u: mk(),
        u_t: wanted.dt.then(mk),
        u_x: wanted.needs_dx_channel().then(mk),
        u_xx: wanted.dxx.then(mk),
    });
    for i in 0..n_xi {
        for j in 0..n_pts {
            let vals = CellValues {
                u: grids.u[[i, j]],
                u_t: grids.u_t.as_ref().map_or(0.0, |c| c[[i, j]]),
                u_x: grids.u_x.as_ref().map_or(0.0, |c| c[[i, j]]),
                u_xx: grids.u_xx.as_ref().map_or(0.0, |c| c[[i, j]]),
            };
            let a = seeder(i, j, vals);
            if let Some(adj) = adj.as_mut() {
                adj.u[[i, j]] = a.u;
                if let Some(c) = adj.u_t.as_mut() {
                    c[[i, j]] = a.u_t;
                }
                if let Some(c) = adj.u_x.as_mut() {
                    c[[i, j]] = a.u_x;
                }
                if let Some(c) = adj.u_xx.as_mut() {
                    c[[i, j]] = a.u_xx;
                }
            }
        }
    }
    adj
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::{xavier_init, Activation};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pde_domain() -> DomainSpec {
        DomainSpec::pde_1d(0.0, std::f64::consts::PI, 0.0, 1.0).unwrap()
    }

    fn two_params() -> ParameterSpace {
        ParameterSpace::new(vec![("a", 1.0, 3.0), ("k", 1.0, 3.0)]).unwrap()
    }

    fn fullnn(seed: u64) -> NeuralMeasure {
        let arch = MlpArchitecture::new(4, 1, 2, 8, Activation::Snake).unwrap();
        NeuralMeasure::FullNn(
            FullNnMeasure::new(pde_domain(), two_params(), arch, xavier_init(&arch, seed))
                .unwrap(),
        )
    }

    fn pcenn(seed: u64) -> NeuralMeasure {
        let basis = ChaosBasis::new(2, 2).unwrap();
        let arch =
            MlpArchitecture::new(2, basis.cardinality(), 2, 8, Activation::Snake).unwrap();
        NeuralMeasure::PceNn(
            PceNnMeasure::new(
                pde_domain(),
                two_params(),
                arch,
                xavier_init(&arch, seed),
                basis,
            )
            .unwrap(),
        )
    }

    fn galerkinnn(seed: u64) -> NeuralMeasure {
        let basis = SpaceTimeBasis::new(pde_domain(), 3, 2).unwrap();
        let arch =
            MlpArchitecture::new(2, basis.cardinality(), 2, 8, Activation::Snake).unwrap();
        NeuralMeasure::GalerkinNn(
            GalerkinNnMeasure::new(
                pde_domain(),
                two_params(),
                arch,
                xavier_init(&arch, seed),
                basis,
            )
            .unwrap(),
        )
    }

    #[test]
    fn fullnn_zero_theta_evaluates_to_zero() {
        let arch = MlpArchitecture::new(4, 1, 2, 8, Activation::Snake).unwrap();
        let mut values = vec![0.0; arch.parameter_count()];
        let n = values.len();
        values[n - 2] = 1.0;
        values[n - 1] = 1.0;
        let theta = ParameterVector::new(&arch, values).unwrap();
        let m = NeuralMeasure::FullNn(
            FullNnMeasure::new(pde_domain(), two_params(), arch, theta).unwrap(),
        );
        let ev = m
            .eval(1.0, 0.5, &[2.0, 2.0], DerivativeSet::all_pde())
            .unwrap();
        assert_eq!(ev.u, 0.0);
        assert_eq!(ev.u_t, 0.0);
        assert_eq!(ev.u_x, Some(0.0));
        assert_eq!(ev.u_xx, Some(0.0));
    }

    #[test]
    fn pce_constant_chaos_mode() {
        // Net with zero weights and output bias (c, 0, ..., 0) evaluates to
        // c for every xi since phi_0 is the constant 1.
        let basis = ChaosBasis::new(2, 2).unwrap();
        let k = basis.cardinality();
        let arch = MlpArchitecture::new(2, k, 1, 4, Activation::Snake).unwrap();
        let mut values = vec![0.0; arch.parameter_count()];
        let dims = arch.layer_dims();
        let w1 = dims[1] * (dims[0] + 1);
        values[w1 + k * dims[1]] = 2.5; // first output bias
        values[arch.parameter_count() - 1] = 1.0; // frequency
        let theta = ParameterVector::new(&arch, values).unwrap();
        let m = NeuralMeasure::PceNn(
            PceNnMeasure::new(pde_domain(), two_params(), arch, theta, basis).unwrap(),
        );
        for xi in [[1.0, 1.0], [2.3, 1.7], [3.0, 3.0]] {
            let ev = m.eval(0.5, 0.5, &xi, DerivativeSet::NONE).unwrap();
            assert!((ev.u - 2.5).abs() < 1e-14);
        }
    }

    #[test]
    fn pce_coefficients_do_not_depend_on_xi() {
        let m = pcenn(3);
        let NeuralMeasure::PceNn(inner) = &m else {
            unreachable!()
        };
        // The coefficient path sees only (x, t): evaluating the network is
        // xi-free by construction; check the assembled eval respects the
        // factorization u(x,t,xi) = sum_k c_k(x,t) phi_k(xi_hat).
        let p = Point::new(0.7, 0.4);
        let inputs = inner.point_inputs(&[p]);
        let coeffs = forward_jets(
            &inner.arch,
            &inner.theta,
            &inputs,
            inner.layout(),
            DerivativeSet::NONE,
            false,
        )
        .unwrap()
        .out
        .val;
        for xi in [[1.2, 2.8], [2.0, 2.0]] {
            let phi = inner
                .basis
                .eval(&inner.params.standardize(&xi).unwrap())
                .unwrap();
            let manual: f64 = (0..phi.len()).map(|k| coeffs[[0, k]] * phi[k]).sum();
            let ev = m.eval(p.x, p.t, &xi, DerivativeSet::NONE).unwrap();
            assert!((ev.u - manual).abs() < 1e-13);
        }
    }

    #[test]
    fn pce_eval_is_linear_in_coefficients() {
        // Two measures sharing hidden layers but with different output
        // layers; summing the output layers sums the evals.
        let basis = ChaosBasis::new(2, 1).unwrap();
        let k = basis.cardinality();
        let arch = MlpArchitecture::new(2, k, 1, 4, Activation::Snake).unwrap();
        let base = xavier_init(&arch, 11).into_vec();
        let dims = arch.layer_dims();
        let out_block = dims[1] * (dims[0] + 1); // start of output W,b
        let out_len = dims[2] * (dims[1] + 1);

        let mut ta = base.clone();
        let mut tb = base.clone();
        let mut tsum = base.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for i in out_block..out_block + out_len {
            ta[i] = rng.gen_range(-1.0..1.0);
            tb[i] = rng.gen_range(-1.0..1.0);
            tsum[i] = ta[i] + tb[i];
        }
        let mk = |theta: Vec<f64>| {
            NeuralMeasure::PceNn(
                PceNnMeasure::new(
                    pde_domain(),
                    two_params(),
                    arch,
                    ParameterVector::new(&arch, theta).unwrap(),
                    basis.clone(),
                )
                .unwrap(),
            )
        };
        let (ma, mb, ms) = (mk(ta), mk(tb), mk(tsum));
        let wanted = DerivativeSet::all_pde();
        for (x, t, xi) in [(0.5, 0.5, [1.5, 2.5]), (2.0, 0.9, [2.9, 1.1])] {
            let ea = ma.eval(x, t, &xi, wanted).unwrap();
            let eb = mb.eval(x, t, &xi, wanted).unwrap();
            let es = ms.eval(x, t, &xi, wanted).unwrap();
            assert!((es.u - (ea.u + eb.u)).abs() < 1e-12);
            assert!((es.u_xx.unwrap() - (ea.u_xx.unwrap() + eb.u_xx.unwrap())).abs() < 1e-12);
        }
    }

    #[test]
    fn galerkin_unit_coefficient_reproduces_basis_function() {
        let basis = SpaceTimeBasis::new(pde_domain(), 3, 2).unwrap();
        let m_card = basis.cardinality();
        let arch = MlpArchitecture::new(2, m_card, 1, 4, Activation::Snake).unwrap();
        let mut values = vec![0.0; arch.parameter_count()];
        let dims = arch.layer_dims();
        let w1 = dims[1] * (dims[0] + 1);
        values[w1 + m_card * dims[1] + 1] = 1.0; // output bias = e_1
        values[arch.parameter_count() - 1] = 1.0;
        let theta = ParameterVector::new(&arch, values).unwrap();
        let m = NeuralMeasure::GalerkinNn(
            GalerkinNnMeasure::new(pde_domain(), two_params(), arch, theta, basis.clone())
                .unwrap(),
        );
        for (x, t) in [(0.3, 0.2), (2.0, 0.8)] {
            let ev = m
                .eval(x, t, &[2.0, 2.0], DerivativeSet::all_pde())
                .unwrap();
            let b = basis.eval_with_derivatives(Point::new(x, t));
            assert!((ev.u - b.psi[1]).abs() < 1e-13);
            assert!((ev.u_t - b.psi_t[1]).abs() < 1e-13);
            assert!((ev.u_x.unwrap() - b.psi_x[1]).abs() < 1e-13);
            assert!((ev.u_xx.unwrap() - b.psi_xx[1]).abs() < 1e-13);
        }
    }

    #[test]
    fn galerkin_eval_lies_in_basis_span() {
        // Least-squares projection onto the basis reproduces the eval.
        let m = galerkinnn(21);
        let NeuralMeasure::GalerkinNn(inner) = &m else {
            unreachable!()
        };
        let basis = &inner.basis;
        let xi = [1.7, 2.2];
        let card = basis.cardinality();

        // Sample on a dense grid, assemble normal equations by hand.
        let mut pts = Vec::new();
        for i in 0..6 {
            for j in 0..5 {
                pts.push(Point::new(
                    std::f64::consts::PI * i as f64 / 5.0,
                    j as f64 / 4.0,
                ));
            }
        }
        let mut ata = vec![vec![0.0; card]; card];
        let mut atb = vec![0.0; card];
        for &p in &pts {
            let row = basis.eval_with_derivatives(p).psi;
            let u = m.eval(p.x, p.t, &xi, DerivativeSet::NONE).unwrap().u;
            for a in 0..card {
                atb[a] += row[a] * u;
                for b in 0..card {
                    ata[a][b] += row[a] * row[b];
                }
            }
        }
        // Gaussian elimination with partial pivoting.
        let n = card;
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&a, &b| ata[a][col].abs().partial_cmp(&ata[b][col].abs()).unwrap())
                .unwrap();
            ata.swap(col, pivot);
            atb.swap(col, pivot);
            for row in col + 1..n {
                let f = ata[row][col] / ata[col][col];
                for k in col..n {
                    ata[row][k] -= f * ata[col][k];
                }
                atb[row] -= f * atb[col];
            }
        }
        let mut coeffs = vec![0.0; n];
        for row in (0..n).rev() {
            let mut acc = atb[row];
            for k in row + 1..n {
                acc -= ata[row][k] * coeffs[k];
            }
            coeffs[row] = acc / ata[row][row];
        }

        for (x, t) in [(0.4, 0.33), (1.9, 0.71), (3.0, 0.05)] {
            let row = basis.eval_with_derivatives(Point::new(x, t)).psi;
            let projected: f64 = row.iter().zip(&coeffs).map(|(r, c)| r * c).sum();
            let direct = m.eval(x, t, &xi, DerivativeSet::NONE).unwrap().u;
            assert!(
                (projected - direct).abs() < 1e-10,
                "projection {projected} vs {direct}"
            );
        }
    }

    #[test]
    fn pushforward_constant_model_and_single_row() {
        let basis = ChaosBasis::new(2, 1).unwrap();
        let k = basis.cardinality();
        let arch = MlpArchitecture::new(2, k, 1, 4, Activation::Snake).unwrap();
        let mut values = vec![0.0; arch.parameter_count()];
        let dims = arch.layer_dims();
        values[dims[1] * (dims[0] + 1) + k * dims[1]] = -0.75;
        values[arch.parameter_count() - 1] = 1.0;
        let theta = ParameterVector::new(&arch, values).unwrap();
        let m = NeuralMeasure::PceNn(
            PceNnMeasure::new(pde_domain(), two_params(), arch, theta, basis).unwrap(),
        );
        let grid = vec![Point::new(0.5, 0.1), Point::new(1.0, 0.9)];
        let xi = m.params().sample(5, 3);
        let ens = m.sample_pushforward(&xi, &grid, None).unwrap();
        assert_eq!(ens.values.dim(), (5, 2));
        assert!(ens.values.iter().all(|&v| (v + 0.75).abs() < 1e-13));

        let one = m
            .sample_pushforward(&xi.slice(ndarray::s![0..1, ..]).to_owned(), &grid, None)
            .unwrap();
        let xi0 = xi.row(0).to_vec();
        for (j, p) in grid.iter().enumerate() {
            let ev = m.eval(p.x, p.t, &xi0, DerivativeSet::NONE).unwrap();
            assert_eq!(one.values[[0, j]], ev.u);
        }
    }

    #[test]
    fn ensembles_stay_finite_for_random_theta() {
        let grid: Vec<Point> = (0..8)
            .map(|i| Point::new(0.3 * i as f64, 0.1 * i as f64))
            .collect();
        for (name, m) in [
            ("fullnn", fullnn(100)),
            ("pce", pcenn(101)),
            ("galerkin", galerkinnn(102)),
        ] {
            let xi = m.params().sample(10_000, 55);
            let ens = m.sample_pushforward(&xi, &grid, None).unwrap();
            let second_moment: f64 =
                ens.values.iter().map(|v| v * v).sum::<f64>() / ens.values.len() as f64;
            assert!(second_moment.is_finite(), "{name}: {second_moment}");
        }
    }

    #[test]
    fn eval_validates_domain_and_parameters() {
        let m = fullnn(1);
        assert!(matches!(
            m.eval(-0.5, 0.5, &[2.0, 2.0], DerivativeSet::NONE),
            Err(Error::PointOutOfDomain { .. })
        ));
        assert!(matches!(
            m.eval(0.5, 0.5, &[0.5, 2.0], DerivativeSet::NONE),
            Err(Error::ParameterOutOfBounds { .. })
        ));
    }

    /// Finite-difference check of the fused sweep gradient for each variant:
    /// J(theta) = sum over cells of w_ij * q(cell)^2 with
    /// q = u + 2 u_t + 3 u_x + 4 u_xx.
    #[test]
    fn sweep_gradient_matches_finite_differences() {
        let points = vec![Point::new(0.4, 0.2), Point::new(2.0, 0.7), Point::new(1.2, 0.95)];
        let wanted = DerivativeSet::all_pde();
        for (name, mut measure) in [
            ("fullnn", fullnn(201)),
            ("pce", pcenn(202)),
            ("galerkin", galerkinnn(203)),
        ] {
            let xi = measure.params().sample(4, 77);
            let xi_std = crate::domain::standardize_rows(measure.params(), &xi).unwrap();

            let objective = |m: &NeuralMeasure, grad: Option<&mut [f64]>| -> f64 {
                let mut total = 0.0;
                let mut seeder = |i: usize, j: usize, v: CellValues| {
                    let w = 1.0 + 0.1 * (i as f64) + 0.01 * (j as f64);
                    let q = v.u + 2.0 * v.u_t + 3.0 * v.u_x + 4.0 * v.u_xx;
                    total += w * q * q;
                    let s = 2.0 * w * q;
                    CellValues {
                        u: s,
                        u_t: 2.0 * s,
                        u_x: 3.0 * s,
                        u_xx: 4.0 * s,
                    }
                };
                m.sweep_cells(&points, &xi_std, wanted, &mut seeder, grad)
                    .unwrap();
                total
            };

            let mut grad = vec![0.0; measure.arch().parameter_count()];
            objective(&measure, Some(&mut grad));

            let theta0 = measure.theta().to_vec();
            let h = 1e-6;
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            // spot-check a random subset plus the snake frequencies
            let mut indices: Vec<usize> =
                (0..12).map(|_| rng.gen_range(0..theta0.len())).collect();
            indices.push(theta0.len() - 1);
            for &j in &indices {
                let mut tp = theta0.clone();
                tp[j] += h;
                measure.set_theta(tp.clone()).unwrap();
                let fp = objective(&measure, None);
                tp[j] -= 2.0 * h;
                measure.set_theta(tp).unwrap();
                let fm = objective(&measure, None);
                let fd = (fp - fm) / (2.0 * h);
                let rel = (grad[j] - fd).abs() / fd.abs().max(1e-3);
                assert!(
                    rel < 1e-4,
                    "{name} theta[{j}]: exact {} vs fd {fd}",
                    grad[j]
                );
            }
            measure.set_theta(theta0).unwrap();
        }
    }
}
