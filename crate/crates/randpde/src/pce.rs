//! Orthonormal polynomial chaos basis for independent uniform parameters:
//! tensorized Legendre polynomials under total-degree truncation.
//!
//! All evaluation happens on standardized coordinates in `[-1, 1]^dim`. The
//! 1-D family is orthonormal with respect to the uniform density `1/2` on
//! `[-1, 1]`, so the multivariate products are orthonormal under the
//! standardized parameter law and coefficient `l2` norms equal `L2` norms.

use ndarray::Array2;

use crate::{Error, Result};

/// Standard Legendre polynomial `P_n(z)` by the three-term recurrence.
fn legendre_p(n: usize, z: f64) -> f64 {
    match n {
        0 => 1.0,
        1 => z,
        _ => {
            let mut p_prev = 1.0;
            let mut p = z;
            for k in 1..n {
                let kf = k as f64;
                let p_next = ((2.0 * kf + 1.0) * z * p - kf * p_prev) / (kf + 1.0);
                p_prev = p;
                p = p_next;
            }
            p
        }
    }
}

/// `P_n(z)` and its derivative, for the quadrature Newton iteration.
fn legendre_p_and_deriv(n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p_prev = 1.0;
    let mut p = z;
    for k in 1..n {
        let kf = k as f64;
        let p_next = ((2.0 * kf + 1.0) * z * p - kf * p_prev) / (kf + 1.0);
        p_prev = p;
        p = p_next;
    }
    // P_n'(z) = n (z P_n - P_{n-1}) / (z^2 - 1)
    let dp = n as f64 * (z * p - p_prev) / (z * z - 1.0);
    (p, dp)
}

/// Orthonormal Legendre value `sqrt(2n+1) P_n(z)` on `[-1, 1]`.
///
/// Orthonormality is with respect to the uniform density `1/2`.
pub fn legendre_orthonormal(n: usize, z: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&z) {
        return Err(Error::InvalidArgument(format!(
            "Legendre evaluation point {z} outside [-1, 1]"
        )));
    }
    Ok(legendre_orthonormal_unchecked(n, z))
}

pub(crate) fn legendre_orthonormal_unchecked(n: usize, z: f64) -> f64 {
    ((2 * n + 1) as f64).sqrt() * legendre_p(n, z)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
///
/// Weights sum to 2; Newton refinement from the Chebyshev initial guess
/// converges to machine precision for the orders used here.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_p_and_deriv(n, z);
            let step = p / dp;
            z -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_p_and_deriv(n, z);
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as usize
}

/// Multivariate orthonormal chaos basis with total-degree truncation.
///
/// Multi-indices are listed in graded lexicographic order, so the first
/// basis function is always the constant 1.
#[derive(Debug, Clone)]
pub struct ChaosBasis {
    dim: usize,
    max_total_degree: usize,
    multi_indices: Vec<Vec<usize>>,
}

impl ChaosBasis {
    pub fn new(dim: usize, max_total_degree: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "chaos basis needs dim >= 1".into(),
            ));
        }
        let mut multi_indices = Vec::with_capacity(binomial(dim + max_total_degree, max_total_degree));
        for degree in 0..=max_total_degree {
            let mut index = vec![0usize; dim];
            push_compositions(&mut multi_indices, &mut index, 0, degree);
        }
        Ok(Self {
            dim,
            max_total_degree,
            multi_indices,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_total_degree(&self) -> usize {
        self.max_total_degree
    }

    /// Number of basis functions, `C(dim + p, p)`.
    pub fn cardinality(&self) -> usize {
        self.multi_indices.len()
    }

    pub fn multi_indices(&self) -> &[Vec<usize>] {
        &self.multi_indices
    }

    /// All basis values at a standardized point.
    pub fn eval(&self, xi_hat: &[f64]) -> Result<Vec<f64>> {
        if xi_hat.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: xi_hat.len(),
                context: "chaos basis input".into(),
            });
        }
        for &z in xi_hat {
            if !(-1.0..=1.0).contains(&z) {
                return Err(Error::InvalidArgument(format!(
                    "chaos basis input {z} outside [-1, 1]"
                )));
            }
        }
        Ok(self.eval_unchecked(xi_hat))
    }

    fn eval_unchecked(&self, xi_hat: &[f64]) -> Vec<f64> {
        // Tabulate each coordinate once; every basis value is then a product.
        let p = self.max_total_degree;
        let mut table = vec![0.0; self.dim * (p + 1)];
        for (j, &z) in xi_hat.iter().enumerate() {
            for n in 0..=p {
                table[j * (p + 1) + n] = legendre_orthonormal_unchecked(n, z);
            }
        }
        self.multi_indices
            .iter()
            .map(|alpha| {
                alpha
                    .iter()
                    .enumerate()
                    .map(|(j, &n)| table[j * (p + 1) + n])
                    .product()
            })
            .collect()
    }

    /// Basis matrix, one standardized sample per row: shape `(n, K)`.
    pub fn eval_matrix(&self, xi_hat_rows: &Array2<f64>) -> Result<Array2<f64>> {
        let n = xi_hat_rows.nrows();
        let mut out = Array2::zeros((n, self.cardinality()));
        for (i, row) in xi_hat_rows.rows().into_iter().enumerate() {
            let vals = self.eval(row.as_slice().expect("contiguous row"))?;
            for (k, v) in vals.into_iter().enumerate() {
                out[[i, k]] = v;
            }
        }
        Ok(out)
    }

    /// Gram matrix under tensorized Gauss-Legendre quadrature with the
    /// uniform density `(1/2)^dim`. Orthonormality means this is the
    /// identity up to quadrature rounding.
    pub fn gram_matrix(&self, quad_points_per_dim: usize) -> Array2<f64> {
        let (nodes, weights) = gauss_legendre(quad_points_per_dim);
        let k = self.cardinality();
        let mut gram = Array2::zeros((k, k));
        let mut idx = vec![0usize; self.dim];
        loop {
            let point: Vec<f64> = idx.iter().map(|&i| nodes[i]).collect();
            let weight: f64 = idx.iter().map(|&i| weights[i] / 2.0).product();
            let phi = self.eval_unchecked(&point);
            for a in 0..k {
                for b in a..k {
                    gram[[a, b]] += weight * phi[a] * phi[b];
                }
            }
            // advance the tensor-product counter
            let mut carry = 0;
            while carry < self.dim {
                idx[carry] += 1;
                if idx[carry] < nodes.len() {
                    break;
                }
                idx[carry] = 0;
                carry += 1;
            }
            if carry == self.dim {
                break;
            }
        }
        for a in 0..k {
            for b in 0..a {
                gram[[a, b]] = gram[[b, a]];
            }
        }
        gram
    }
}

fn push_compositions(
    out: &mut Vec<Vec<usize>>,
    index: &mut Vec<usize>,
    position: usize,
    remaining: usize,
) {
    if position + 1 == index.len() {
        index[position] = remaining;
        out.push(index.clone());
        index[position] = 0;
        return;
    }
    for value in 0..=remaining {
        index[position] = value;
        push_compositions(out, index, position + 1, remaining - value);
    }
    index[position] = 0;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orthonormal_basics() {
        for z in [-1.0, -0.3, 0.0, 0.7, 1.0] {
            assert_eq!(legendre_orthonormal(0, z).unwrap(), 1.0);
        }
        assert_eq!(legendre_orthonormal(1, 0.0).unwrap(), 0.0);
        assert!(legendre_orthonormal(2, 1.5).is_err());
    }

    #[test]
    fn phi1_has_unit_norm_under_quadrature() {
        // Quadrature oracle: integral of phi_1^2 dz / 2 over [-1,1] is 1.
        let (nodes, weights) = gauss_legendre(32);
        let mut integral = 0.0;
        for (&z, &w) in nodes.iter().zip(&weights) {
            let phi1 = legendre_orthonormal(1, z).unwrap();
            integral += w / 2.0 * phi1 * phi1;
        }
        assert!((integral - 1.0).abs() < 1e-14, "integral={integral}");
    }

    #[test]
    fn gauss_legendre_integrates_monomials() {
        let (nodes, weights) = gauss_legendre(8);
        let total: f64 = weights.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
        let x2: f64 = nodes
            .iter()
            .zip(&weights)
            .map(|(&z, &w)| w * z * z)
            .sum();
        assert!((x2 - 2.0 / 3.0).abs() < 1e-14);
        // degree 15 is exact for an 8-point rule
        let x14: f64 = nodes
            .iter()
            .zip(&weights)
            .map(|(&z, &w)| w * z.powi(14))
            .sum();
        assert!((x14 - 2.0 / 15.0).abs() < 1e-13);
    }

    #[test]
    fn cardinality_matches_binomial_count() {
        // Binomial count formula: K = C(dim + p, p).
        assert_eq!(ChaosBasis::new(2, 5).unwrap().cardinality(), 21);
        assert_eq!(ChaosBasis::new(1, 0).unwrap().cardinality(), 1);
        assert_eq!(ChaosBasis::new(4, 5).unwrap().cardinality(), 126);
    }

    #[test]
    fn first_index_is_constant_and_order_is_graded() {
        let basis = ChaosBasis::new(3, 4).unwrap();
        assert!(basis.multi_indices()[0].iter().all(|&a| a == 0));
        let degrees: Vec<usize> = basis
            .multi_indices()
            .iter()
            .map(|a| a.iter().sum())
            .collect();
        assert!(degrees.windows(2).all(|w| w[0] <= w[1]), "{degrees:?}");
    }

    #[test]
    fn eval_at_origin_kills_odd_indices() {
        let basis = ChaosBasis::new(2, 5).unwrap();
        let vals = basis.eval(&[0.0, 0.0]).unwrap();
        assert_eq!(vals[0], 1.0);
        for (alpha, v) in basis.multi_indices().iter().zip(&vals) {
            if alpha.iter().any(|&a| a % 2 == 1) {
                assert_eq!(*v, 0.0, "odd multi-index {alpha:?} must vanish at 0");
            }
        }
    }

    #[test]
    fn eval_at_right_endpoint() {
        // Legendre endpoint identity: P_n(1) = 1, so phi_n(1) = sqrt(2n+1).
        let basis = ChaosBasis::new(1, 5).unwrap();
        let vals = basis.eval(&[1.0]).unwrap();
        for (n, v) in vals.iter().enumerate() {
            assert!((v - ((2 * n + 1) as f64).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn gram_matrix_is_identity() {
        for (dim, p) in [(1, 6), (2, 5), (2, 6)] {
            let basis = ChaosBasis::new(dim, p).unwrap();
            let gram = basis.gram_matrix(32);
            let k = basis.cardinality();
            for a in 0..k {
                for b in 0..k {
                    let expected = if a == b { 1.0 } else { 0.0 };
                    assert!(
                        (gram[[a, b]] - expected).abs() < 1e-10,
                        "dim={dim} p={p} G[{a},{b}]={}",
                        gram[[a, b]]
                    );
                }
            }
        }
    }

    #[test]
    fn monte_carlo_gram_within_three_standard_errors() {
        let basis = ChaosBasis::new(2, 3).unwrap();
        let k = basis.cardinality();
        let n = 100_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut sums = Array2::<f64>::zeros((k, k));
        let mut sq_sums = Array2::<f64>::zeros((k, k));
        for _ in 0..n {
            let z = [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)];
            let phi = basis.eval(&z).unwrap();
            for a in 0..k {
                for b in 0..k {
                    let prod = phi[a] * phi[b];
                    sums[[a, b]] += prod;
                    sq_sums[[a, b]] += prod * prod;
                }
            }
        }
        for a in 0..k {
            for b in 0..k {
                let mean = sums[[a, b]] / n as f64;
                let var = (sq_sums[[a, b]] / n as f64 - mean * mean).max(0.0);
                let se = (var / n as f64).sqrt();
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!(
                    (mean - expected).abs() <= 3.0 * se + 1e-12,
                    "G[{a},{b}] mc estimate {mean} vs {expected}, se={se}"
                );
            }
        }
    }

    #[test]
    fn projection_reproduces_low_degree_polynomial() {
        // A degree-2 polynomial in two variables lies in the span of the
        // degree-2 basis; quadrature projection must recover it exactly.
        let basis = ChaosBasis::new(2, 2).unwrap();
        let f = |z: &[f64]| 0.3 + 1.2 * z[0] - 0.5 * z[0] * z[1] + 0.7 * z[1] * z[1];

        let (nodes, weights) = gauss_legendre(16);
        let k = basis.cardinality();
        let mut coeffs = vec![0.0; k];
        for (i, &zi) in nodes.iter().enumerate() {
            for (j, &zj) in nodes.iter().enumerate() {
                let w = weights[i] / 2.0 * weights[j] / 2.0;
                let phi = basis.eval(&[zi, zj]).unwrap();
                let fv = f(&[zi, zj]);
                for (c, p) in coeffs.iter_mut().zip(&phi) {
                    *c += w * fv * p;
                }
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let z = [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)];
            let phi = basis.eval(&z).unwrap();
            let rec: f64 = coeffs.iter().zip(&phi).map(|(c, p)| c * p).sum();
            assert!(
                (rec - f(&z)).abs() < 1e-9,
                "reconstruction {rec} vs {}",
                f(&z)
            );
        }
    }
}
