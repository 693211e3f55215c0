//! Tensor Chebyshev space-time basis with analytic derivatives.
//!
//! The Galerkin measure expands solutions in smooth basis functions of
//! `(x, t)` whose first and second derivatives are available in closed form;
//! strong-form residuals need `u_xx`, which rules out piecewise-linear
//! bases. Coordinates are affinely rescaled to `[-1, 1]` before evaluation.

use ndarray::Array2;

use crate::domain::{DerivativeSet, DomainKind, DomainSpec, Point};
use crate::{Error, Result};

/// `T_n(z)`, `T_n'(z)`, `T_n''(z)` for `n = 0..=degree` by the differentiated
/// three-term recurrence.
fn chebyshev_table(degree: usize, z: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = degree + 1;
    let mut t = vec![0.0; n];
    let mut dt = vec![0.0; n];
    let mut ddt = vec![0.0; n];
    t[0] = 1.0;
    if n > 1 {
        t[1] = z;
        dt[1] = 1.0;
    }
    for k in 2..n {
        t[k] = 2.0 * z * t[k - 1] - t[k - 2];
        dt[k] = 2.0 * t[k - 1] + 2.0 * z * dt[k - 1] - dt[k - 2];
        ddt[k] = 4.0 * dt[k - 1] + 2.0 * z * ddt[k - 1] - ddt[k - 2];
    }
    (t, dt, ddt)
}

/// Basis values and space-time derivatives at one point; each vector has
/// length [`SpaceTimeBasis::cardinality`].
#[derive(Debug, Clone)]
pub struct BasisEval {
    pub psi: Vec<f64>,
    pub psi_t: Vec<f64>,
    pub psi_x: Vec<f64>,
    pub psi_xx: Vec<f64>,
}

/// Products `T_i(x_hat) T_j(t_hat)` on a rescaled domain. For ODE domains
/// the basis reduces to Chebyshev polynomials of time alone.
#[derive(Debug, Clone)]
pub struct SpaceTimeBasis {
    domain: DomainSpec,
    degree_x: usize,
    degree_t: usize,
}

impl SpaceTimeBasis {
    pub fn new(domain: DomainSpec, degree_x: usize, degree_t: usize) -> Result<Self> {
        if domain.kind == DomainKind::Ode && degree_x != 0 {
            return Err(Error::InvalidArgument(
                "ODE domains take degree_x = 0".into(),
            ));
        }
        Ok(Self {
            domain,
            degree_x,
            degree_t,
        })
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn degrees(&self) -> (usize, usize) {
        (self.degree_x, self.degree_t)
    }

    /// `(degree_x + 1) * (degree_t + 1)`; index `n = ix * (degree_t + 1) + it`.
    pub fn cardinality(&self) -> usize {
        (self.degree_x + 1) * (self.degree_t + 1)
    }

    fn scales(&self) -> (f64, f64) {
        let (t0, t1) = self.domain.time_interval;
        let st = 2.0 / (t1 - t0);
        let sx = match self.domain.space_interval {
            Some((x0, x1)) => 2.0 / (x1 - x0),
            None => 0.0,
        };
        (sx, st)
    }

    fn rescale(&self, p: Point) -> (f64, f64) {
        let (t0, t1) = self.domain.time_interval;
        let t_hat = 2.0 * (p.t - t0) / (t1 - t0) - 1.0;
        let x_hat = match self.domain.space_interval {
            Some((x0, x1)) => 2.0 * (p.x - x0) / (x1 - x0) - 1.0,
            None => 0.0,
        };
        (x_hat, t_hat)
    }

    /// All basis values with their analytic space-time derivatives.
    pub fn eval_with_derivatives(&self, p: Point) -> BasisEval {
        let (x_hat, t_hat) = self.rescale(p);
        let (sx, st) = self.scales();
        let m = self.cardinality();
        let (tt, dtt, _) = chebyshev_table(self.degree_t, t_hat);
        let mut out = BasisEval {
            psi: Vec::with_capacity(m),
            psi_t: Vec::with_capacity(m),
            psi_x: Vec::with_capacity(m),
            psi_xx: Vec::with_capacity(m),
        };
        match self.domain.kind {
            DomainKind::Ode => {
                for it in 0..=self.degree_t {
                    out.psi.push(tt[it]);
                    out.psi_t.push(dtt[it] * st);
                    out.psi_x.push(0.0);
                    out.psi_xx.push(0.0);
                }
            }
            DomainKind::Pde1d => {
                let (tx, dtx, ddtx) = chebyshev_table(self.degree_x, x_hat);
                for ix in 0..=self.degree_x {
                    for it in 0..=self.degree_t {
                        out.psi.push(tx[ix] * tt[it]);
                        out.psi_t.push(tx[ix] * dtt[it] * st);
                        out.psi_x.push(dtx[ix] * sx * tt[it]);
                        out.psi_xx.push(ddtx[ix] * sx * sx * tt[it]);
                    }
                }
            }
        }
        out
    }

    /// Channel matrices over a point list, shape `(n_points, M)` each;
    /// inactive channels are `None`.
    pub fn eval_matrix(
        &self,
        points: &[Point],
        wanted: DerivativeSet,
    ) -> (
        Array2<f64>,
        Option<Array2<f64>>,
        Option<Array2<f64>>,
        Option<Array2<f64>>,
    ) {
        let m = self.cardinality();
        let n = points.len();
        let mut psi = Array2::zeros((n, m));
        let mut psi_t = wanted.dt.then(|| Array2::zeros((n, m)));
        let mut psi_x = wanted.dx.then(|| Array2::zeros((n, m)));
        let mut psi_xx = wanted.dxx.then(|| Array2::zeros((n, m)));
        for (i, &p) in points.iter().enumerate() {
            let ev = self.eval_with_derivatives(p);
            for j in 0..m {
                psi[[i, j]] = ev.psi[j];
            }
            if let Some(mat) = psi_t.as_mut() {
                for j in 0..m {
                    mat[[i, j]] = ev.psi_t[j];
                }
            }
            if let Some(mat) = psi_x.as_mut() {
                for j in 0..m {
                    mat[[i, j]] = ev.psi_x[j];
                }
            }
            if let Some(mat) = psi_xx.as_mut() {
                for j in 0..m {
                    mat[[i, j]] = ev.psi_xx[j];
                }
            }
        }
        (psi, psi_t, psi_x, psi_xx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainSpec;

    #[test]
    fn chebyshev_endpoint_and_angle_identities() {
        let (t, _, _) = chebyshev_table(8, 1.0);
        for v in &t {
            assert!((v - 1.0).abs() < 1e-12, "T_n(1) = 1");
        }
        // T_n(cos theta) = cos(n theta)
        let theta = 0.83_f64;
        let (t, _, _) = chebyshev_table(8, theta.cos());
        for (n, v) in t.iter().enumerate() {
            assert!((v - (n as f64 * theta).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn cardinality_and_ordering() {
        let domain = DomainSpec::pde_1d(0.0, 1.0, 0.0, 2.0).unwrap();
        let basis = SpaceTimeBasis::new(domain, 3, 2).unwrap();
        assert_eq!(basis.cardinality(), 12);
        // index 1 is (ix=0, it=1): T_0(x_hat) T_1(t_hat) = t_hat
        let p = Point::new(0.25, 0.5);
        let ev = basis.eval_with_derivatives(p);
        let t_hat = 2.0 * 0.5 / 2.0 - 1.0;
        assert!((ev.psi[1] - t_hat).abs() < 1e-14);
        assert_eq!(ev.psi[0], 1.0);
    }

    /// 5-point central stencils as the independent derivative oracle.
    fn fd5(f: impl Fn(f64) -> f64, z: f64, h: f64) -> (f64, f64) {
        let (f1, f2, f3, f4) = (f(z - 2.0 * h), f(z - h), f(z + h), f(z + 2.0 * h));
        let f0 = f(z);
        let d1 = (f1 - 8.0 * f2 + 8.0 * f3 - f4) / (12.0 * h);
        let d2 = (-f1 + 16.0 * f2 - 30.0 * f0 + 16.0 * f3 - f4) / (12.0 * h * h);
        (d1, d2)
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let domain = DomainSpec::pde_1d(-1.0, 1.0, 0.0, 4.0).unwrap();
        let basis = SpaceTimeBasis::new(domain, 6, 5).unwrap();
        let h = 1e-3;
        for &(x, t) in &[(-0.5, 1.0), (0.0, 2.0), (0.7, 3.3), (0.31, 0.4)] {
            let ev = basis.eval_with_derivatives(Point::new(x, t));
            for n in 0..basis.cardinality() {
                let fx = |xv: f64| basis.eval_with_derivatives(Point::new(xv, t)).psi[n];
                let ft = |tv: f64| basis.eval_with_derivatives(Point::new(x, tv)).psi[n];
                let (dx, dxx) = fd5(fx, x, h);
                let (dt, _) = fd5(ft, t, h);
                assert!(
                    (ev.psi_x[n] - dx).abs() < 1e-8 * dx.abs().max(1.0),
                    "psi_x[{n}] {} vs {dx}",
                    ev.psi_x[n]
                );
                assert!(
                    (ev.psi_xx[n] - dxx).abs() < 1e-8 * dxx.abs().max(100.0),
                    "psi_xx[{n}] {} vs {dxx}",
                    ev.psi_xx[n]
                );
                assert!(
                    (ev.psi_t[n] - dt).abs() < 1e-8 * dt.abs().max(1.0),
                    "psi_t[{n}] {} vs {dt}",
                    ev.psi_t[n]
                );
            }
        }
    }

    #[test]
    fn ode_basis_is_time_only() {
        let domain = DomainSpec::ode(0.0, 8.0).unwrap();
        let basis = SpaceTimeBasis::new(domain, 0, 4).unwrap();
        assert_eq!(basis.cardinality(), 5);
        let ev = basis.eval_with_derivatives(Point::at_time(3.0));
        assert!(ev.psi_x.iter().all(|&v| v == 0.0));
        assert!(ev.psi_xx.iter().all(|&v| v == 0.0));
        assert!(SpaceTimeBasis::new(domain, 2, 4).is_err());
    }
}
