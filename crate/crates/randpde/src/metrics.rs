//! Statistical diagnostics over empirical solution ensembles: exact 1-D
//! Wasserstein distances, moment fields, histograms and error heatmaps.
//!
//! In one dimension the optimal transport plan between two empirical
//! measures with equally weighted atoms is the quantile coupling, so the
//! distance reduces to sorting both sample vectors and averaging powered
//! gaps. All comparisons here are per-marginal (per time slice or per grid
//! point); no multi-dimensional transport is involved.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::domain::Point;
use crate::{Error, Result};

/// Provenance carried by ensembles produced in this process.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMeta {
    pub problem: String,
    pub seed: u64,
}

/// Solution values indexed by `(parameter sample, grid point)`.
#[derive(Debug, Clone)]
pub struct EmpiricalEnsemble {
    pub values: Array2<f64>,
    pub grid: Vec<Point>,
    pub meta: Option<EnsembleMeta>,
}

impl EmpiricalEnsemble {
    pub fn new(values: Array2<f64>, grid: Vec<Point>, meta: Option<EnsembleMeta>) -> Result<Self> {
        if values.ncols() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: values.ncols(),
                context: "ensemble columns vs grid".into(),
            });
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "ensemble contains non-finite value {bad}"
            )));
        }
        Ok(Self { values, grid, meta })
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_points(&self) -> usize {
        self.grid.len()
    }

    /// Distinct evaluation times, in first-appearance order.
    pub fn time_slices(&self) -> Vec<f64> {
        let mut times: Vec<f64> = Vec::new();
        for p in &self.grid {
            if !times.iter().any(|&t| same_time(t, p.t)) {
                times.push(p.t);
            }
        }
        times
    }

    /// Every sample value whose grid point sits at time `t` (pooled over
    /// space for PDE grids).
    pub fn samples_at_time(&self, t: f64) -> Vec<f64> {
        let cols: Vec<usize> = self
            .grid
            .iter()
            .enumerate()
            .filter(|(_, p)| same_time(p.t, t))
            .map(|(i, _)| i)
            .collect();
        let mut out = Vec::with_capacity(cols.len() * self.n_samples());
        for row in self.values.rows() {
            for &c in &cols {
                out.push(row[c]);
            }
        }
        out
    }

    /// CSV export: header `xi_index,x,t,u`, one record per (sample, point).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "xi_index,x,t,u")?;
        for (i, row) in self.values.rows().into_iter().enumerate() {
            for (p, v) in self.grid.iter().zip(row.iter()) {
                writeln!(w, "{},{},{},{}", i, p.x, p.t, v)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|_| Error::MissingArtifact(path.into()))?;
        let reader = std::io::BufReader::new(file);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| csv_err(path, "empty file"))??;
        if header.trim() != "xi_index,x,t,u" {
            return Err(csv_err(path, &format!("unexpected header \"{header}\"")));
        }
        let mut grid: Vec<Point> = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut current_index: Option<usize> = None;
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let parse_field = |f: Option<&str>| -> Result<f64> {
                f.and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| csv_err(path, &format!("bad record at line {}", lineno + 2)))
            };
            let idx = parse_field(fields.next())? as usize;
            let x = parse_field(fields.next())?;
            let t = parse_field(fields.next())?;
            let u = parse_field(fields.next())?;
            if current_index != Some(idx) {
                rows.push(Vec::new());
                current_index = Some(idx);
            }
            let n_rows = rows.len();
            let row = rows.last_mut().unwrap();
            if n_rows == 1 {
                grid.push(Point::new(x, t));
            } else {
                let col = row.len();
                let expected = grid.get(col).ok_or_else(|| {
                    csv_err(path, &format!("sample {idx} has too many points"))
                })?;
                if !same_time(expected.t, t) || (expected.x - x).abs() > 1e-9 {
                    return Err(csv_err(
                        path,
                        &format!("sample {idx} grid differs at column {col}"),
                    ));
                }
            }
            row.push(u);
        }
        if rows.is_empty() {
            return Err(csv_err(path, "no records"));
        }
        let n_cols = grid.len();
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(csv_err(path, "ragged sample rows"));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        let values = Array2::from_shape_vec((flat.len() / n_cols, n_cols), flat)
            .map_err(|e| csv_err(path, &e.to_string()))?;
        Self::new(values, grid, None)
    }
}

fn csv_err(path: &Path, message: &str) -> Error {
    Error::CsvFormat {
        path: path.into(),
        message: message.into(),
    }
}

fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Exact 1-D empirical Wasserstein distance of order `p` between two
/// equal-length sample vectors via the quantile coupling.
pub fn empirical_wasserstein_1d(a: &[f64], b: &[f64], p: u32) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("wasserstein sample vector".into()));
    }
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
            context: "wasserstein sample lengths (truncate first)".into(),
        });
    }
    if p != 1 && p != 2 {
        return Err(Error::InvalidArgument(format!(
            "wasserstein order must be 1 or 2, got {p}"
        )));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).expect("no NaN in samples"));
    sb.sort_by(|x, y| x.partial_cmp(y).expect("no NaN in samples"));
    let n = sa.len() as f64;
    let mut acc = crate::util::Accumulator::new();
    for (x, y) in sa.iter().zip(&sb) {
        let gap = (x - y).abs();
        acc.add(if p == 1 { gap } else { gap * gap });
    }
    let mean = acc.total() / n;
    Ok(if p == 1 { mean } else { mean.sqrt() })
}

/// Truncates both sample sets to the smaller count after independent
/// shuffles driven by `seed`.
pub fn truncate_to_common_length(a: &[f64], b: &[f64], seed: u64) -> (Vec<f64>, Vec<f64>) {
    let n = a.len().min(b.len());
    let shuffle = |v: &[f64], stream: u64| -> Vec<f64> {
        if v.len() == n {
            return v.to_vec();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stream);
        let mut copy = v.to_vec();
        copy.shuffle(&mut rng);
        copy.truncate(n);
        copy
    };
    (shuffle(a, 0x5eed), shuffle(b, 0xfeed))
}

/// Per-time-slice Wasserstein distance between two ensembles sharing their
/// evaluation times. PDE slices pool values over space.
pub fn wasserstein_over_time(
    model: &EmpiricalEnsemble,
    reference: &EmpiricalEnsemble,
    t_slices: &[f64],
    p: u32,
    truncation_seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::with_capacity(t_slices.len());
    for &t in t_slices {
        let ma = model.samples_at_time(t);
        let mb = reference.samples_at_time(t);
        if ma.is_empty() || mb.is_empty() {
            return Err(Error::GridMismatch(format!(
                "time slice {t} missing from one of the ensembles"
            )));
        }
        let (ta, tb) = truncate_to_common_length(&ma, &mb, truncation_seed);
        out.push((t, empirical_wasserstein_1d(&ta, &tb, p)?));
    }
    Ok(out)
}

/// Per-grid-point sample mean and unbiased standard deviation.
pub fn ensemble_moments(e: &EmpiricalEnsemble) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = e.n_samples();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "moments need at least 2 samples".into(),
        ));
    }
    let nf = n as f64;
    let mut means = Vec::with_capacity(e.n_points());
    let mut stds = Vec::with_capacity(e.n_points());
    for col in e.values.columns() {
        let mean = col.sum() / nf;
        let ss: f64 = col.iter().map(|&v| (v - mean) * (v - mean)).sum();
        means.push(mean);
        stds.push((ss / (nf - 1.0)).sqrt());
    }
    Ok((means, stds))
}

/// Fixed-width histogram: returns bin edges (`n_bins + 1`) and counts.
///
/// A degenerate range collapses to a single bin holding every sample;
/// out-of-range values are clipped into the edge bins so counts always sum
/// to the sample count.
pub fn histogram(samples: &[f64], n_bins: usize, range: (f64, f64)) -> (Vec<f64>, Vec<usize>) {
    assert!(n_bins >= 1, "need at least one bin");
    let (lo, hi) = range;
    if lo == hi {
        return (vec![lo, hi], vec![samples.len()]);
    }
    let width = (hi - lo) / n_bins as f64;
    let edges: Vec<f64> = (0..=n_bins)
        .map(|i| if i == n_bins { hi } else { lo + width * i as f64 })
        .collect();
    let mut counts = vec![0usize; n_bins];
    for &s in samples {
        let raw = ((s - lo) / width).floor();
        let idx = (raw as i64).clamp(0, n_bins as i64 - 1) as usize;
        counts[idx] += 1;
    }
    (edges, counts)
}

/// Pointwise absolute difference of two fields.
pub fn error_heatmap(mean_a: &[f64], mean_b: &[f64]) -> Result<Vec<f64>> {
    if mean_a.len() != mean_b.len() {
        return Err(Error::DimensionMismatch {
            expected: mean_a.len(),
            got: mean_b.len(),
            context: "error heatmap fields".into(),
        });
    }
    Ok(mean_a
        .iter()
        .zip(mean_b)
        .map(|(a, b)| (a - b).abs())
        .collect())
}

/// Percentile by linear interpolation of the order statistics; `q` in [0,1].
pub fn percentile(samples: &[f64], q: f64) -> f64 {
    assert!(!samples.is_empty());
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

/// Writes a `t,wasserstein_p{p}` series.
pub fn write_wasserstein_csv(path: &Path, series: &[(f64, f64)], p: u32) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "t,wasserstein_p{p}")?;
    for (t, d) in series {
        writeln!(w, "{t},{d}")?;
    }
    w.flush()?;
    Ok(())
}

/// Writes an `x,t,mean,std` field.
pub fn write_moments_csv(path: &Path, grid: &[Point], mean: &[f64], std: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "x,t,mean,std")?;
    for ((p, m), s) in grid.iter().zip(mean).zip(std) {
        writeln!(w, "{},{},{},{}", p.x, p.t, m, s)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes an `x,t,abs_error` field.
pub fn write_heatmap_csv(path: &Path, grid: &[Point], abs_error: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "x,t,abs_error")?;
    for (p, e) in grid.iter().zip(abs_error) {
        writeln!(w, "{},{},{}", p.x, p.t, e)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    /// Every coupling of two n-atom empirical measures is dominated by a
    /// permutation coupling, so brute force over permutations is an exact
    /// oracle for small n.
    fn brute_force_w1(a: &[f64], b: &[f64]) -> f64 {
        fn permutations(n: usize) -> Vec<Vec<usize>> {
            if n == 1 {
                return vec![vec![0]];
            }
            let mut out = Vec::new();
            for rest in permutations(n - 1) {
                for pos in 0..n {
                    let mut perm = rest.clone();
                    perm.insert(pos, n - 1);
                    out.push(perm);
                }
            }
            out
        }
        let n = a.len();
        permutations(n)
            .into_iter()
            .map(|perm| {
                perm.iter()
                    .enumerate()
                    .map(|(i, &j)| (a[i] - b[j]).abs())
                    .sum::<f64>()
                    / n as f64
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn wasserstein_identity_and_atoms() {
        let a = [0.4, -1.0, 3.0];
        assert_eq!(empirical_wasserstein_1d(&a, &a, 1).unwrap(), 0.0);
        assert_eq!(empirical_wasserstein_1d(&[0.0], &[3.0], 1).unwrap(), 3.0);
        // two couplings: costs 1 and 3; min mean cost is 1
        assert_eq!(
            empirical_wasserstein_1d(&[0.0, 1.0], &[1.0, 2.0], 1).unwrap(),
            1.0
        );
        assert!(empirical_wasserstein_1d(&[], &[], 1).is_err());
    }

    #[test]
    fn quantile_coupling_equals_brute_force_min() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for n in 2..=4usize {
            for _ in 0..200 {
                let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
                let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
                let fast = empirical_wasserstein_1d(&a, &b, 1).unwrap();
                let brute = brute_force_w1(&a, &b);
                assert!(
                    (fast - brute).abs() < 1e-12,
                    "n={n}: {fast} vs {brute}"
                );
            }
        }
    }

    proptest! {
        #[test]
        fn wasserstein_metric_axioms(
            a in proptest::collection::vec(-10.0f64..10.0, 5),
            b in proptest::collection::vec(-10.0f64..10.0, 5),
            c in proptest::collection::vec(-10.0f64..10.0, 5),
        ) {
            let dab = empirical_wasserstein_1d(&a, &b, 1).unwrap();
            let dba = empirical_wasserstein_1d(&b, &a, 1).unwrap();
            prop_assert!((dab - dba).abs() < 1e-12);
            let dac = empirical_wasserstein_1d(&a, &c, 1).unwrap();
            let dcb = empirical_wasserstein_1d(&c, &b, 1).unwrap();
            prop_assert!(dab <= dac + dcb + 1e-12);
            prop_assert!(dab >= 0.0);
        }

        #[test]
        fn wasserstein_shift_equivariance(
            a in proptest::collection::vec(-10.0f64..10.0, 8),
            b in proptest::collection::vec(-10.0f64..10.0, 8),
            shift in -5.0f64..5.0,
        ) {
            let base = empirical_wasserstein_1d(&a, &b, 1).unwrap();
            let sa: Vec<f64> = a.iter().map(|v| v + shift).collect();
            let sb: Vec<f64> = b.iter().map(|v| v + shift).collect();
            let shifted = empirical_wasserstein_1d(&sa, &sb, 1).unwrap();
            prop_assert!((base - shifted).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_iff_sorted_equal() {
        let a = [1.0, 0.0, 2.0];
        let b = [2.0, 1.0, 0.0];
        assert_eq!(empirical_wasserstein_1d(&a, &b, 1).unwrap(), 0.0);
        let c = [2.0, 1.0, 0.1];
        assert!(empirical_wasserstein_1d(&a, &c, 1).unwrap() > 0.0);
    }

    #[test]
    fn moments_small_cases() {
        let values = Array2::from_shape_vec((2, 2), vec![0.0, 5.0, 2.0, 5.0]).unwrap();
        let grid = vec![Point::at_time(0.0), Point::at_time(1.0)];
        let e = EmpiricalEnsemble::new(values, grid, None).unwrap();
        let (mean, std) = ensemble_moments(&e).unwrap();
        // two samples {0, 2}: mean 1, unbiased std sqrt(2)
        assert_eq!(mean[0], 1.0);
        assert!((std[0] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(mean[1], 5.0);
        assert_eq!(std[1], 0.0);
    }

    #[test]
    fn histogram_counts_and_degenerate_range() {
        let (edges, counts) = histogram(&[1.0, 1.0, 1.0], 5, (1.0, 1.0));
        assert_eq!(edges.len(), 2);
        assert_eq!(counts, vec![3]);

        let samples: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        let k = 10;
        let (edges, counts) = histogram(&samples, k, (0.0, 1.0));
        assert_eq!(edges.len(), k + 1);
        assert_eq!(counts.iter().sum::<usize>(), samples.len());
        // multinomial oracle: each bin within 3 sqrt(n/k) of n/k
        let expected = samples.len() as f64 / k as f64;
        let tol = 3.0 * (samples.len() as f64 / k as f64).sqrt();
        for &c in &counts {
            assert!((c as f64 - expected).abs() <= tol);
        }
    }

    #[test]
    fn uniform_random_histogram_multinomial_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 20_000;
        let samples: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let k = 50;
        let (_, counts) = histogram(&samples, k, (0.0, 1.0));
        let expected = n as f64 / k as f64;
        let tol = 3.0 * (n as f64 / k as f64).sqrt();
        let outliers = counts
            .iter()
            .filter(|&&c| (c as f64 - expected).abs() > tol)
            .count();
        // 3-sigma misses should be rare; allow a single straggler
        assert!(outliers <= 1, "{outliers} bins outside 3-sigma band");
    }

    #[test]
    fn heatmap_of_identical_fields_is_zero() {
        let a = [0.5, 1.0, -2.0];
        let e = error_heatmap(&a, &a).unwrap();
        assert!(e.iter().all(|&v| v == 0.0));
        assert!(error_heatmap(&a, &[1.0]).is_err());
    }

    #[test]
    fn ensemble_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ens.csv");
        let values =
            Array2::from_shape_vec((3, 2), vec![0.1, 0.2, 1.5, -0.25, 3.0, 4.0]).unwrap();
        let grid = vec![Point::new(0.0, 0.5), Point::new(1.0, 0.5)];
        let e = EmpiricalEnsemble::new(values.clone(), grid.clone(), None).unwrap();
        e.write_csv(&path).unwrap();
        let back = EmpiricalEnsemble::read_csv(&path).unwrap();
        assert_eq!(back.values, values);
        assert_eq!(back.grid, grid);
    }

    #[test]
    fn truncation_is_seeded_and_sized() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let (ta, tb) = truncate_to_common_length(&a, &b, 9);
        let (ta2, _) = truncate_to_common_length(&a, &b, 9);
        assert_eq!(ta.len(), 40);
        assert_eq!(tb.len(), 40);
        assert_eq!(ta, ta2, "same seed, same truncation");
    }

    #[test]
    fn wasserstein_over_time_zero_against_self() {
        let values = Array2::from_shape_vec((4, 2), vec![1.0; 8]).unwrap();
        let grid = vec![Point::new(0.0, 0.0), Point::new(0.0, 1.0)];
        let e = EmpiricalEnsemble::new(values, grid, None).unwrap();
        let series = wasserstein_over_time(&e, &e, &[0.0, 1.0], 1, 1).unwrap();
        assert!(series.iter().all(|&(_, d)| d == 0.0));
        assert!(wasserstein_over_time(&e, &e, &[2.0], 1, 1).is_err());
    }

    #[test]
    fn percentile_interpolates() {
        let v = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(percentile(&v, 0.0), 0.0);
        assert_eq!(percentile(&v, 1.0), 3.0);
        assert_eq!(percentile(&v, 0.5), 1.5);
        assert!((percentile(&v, 0.95) - 2.85).abs() < 1e-12);
    }
}
