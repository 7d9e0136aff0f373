//! Ensemble moments, kernel density estimates and field comparisons.

use std::f64::consts::PI;

use ndarray::ArrayView2;

use crate::error::{Error, Result};

/// Sample mean and unbiased standard deviation.
pub fn ensemble_moments(samples: &[f64]) -> Result<(f64, f64)> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::usage(format!("moments need at least 2 samples, got {n}")));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
    Ok((mean, (ss / (n - 1) as f64).sqrt()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdfEstimate {
    pub abscissae: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl PdfEstimate {
    /// Trapezoid integral of the density over the abscissae.
    pub fn integral(&self) -> f64 {
        self.abscissae
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, f)| 0.5 * (x[1] - x[0]) * (f[0] + f[1]))
            .sum()
    }
}

/// Gaussian kernel density estimate with Silverman's bandwidth `1.06·σ·n^(−1/5)`.
pub fn kde_pdf(samples: &[f64], abscissae: &[f64]) -> Result<PdfEstimate> {
    let n = samples.len();
    if n < 30 {
        return Err(Error::usage(format!(
            "a density estimate needs at least 30 samples, got {n}"
        )));
    }
    let (_, sigma) = ensemble_moments(samples)?;
    if !(sigma > 0.0) {
        return Err(Error::Degenerate("all samples are equal".into()));
    }
    let bandwidth = 1.06 * sigma * (n as f64).powf(-0.2);
    let norm = 1.0 / (n as f64 * bandwidth * (2.0 * PI).sqrt());
    let density = abscissae
        .iter()
        .map(|&x| {
            norm * samples
                .iter()
                .map(|&s| {
                    let z = (x - s) / bandwidth;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
        })
        .collect();
    Ok(PdfEstimate {
        abscissae: abscissae.to_vec(),
        density,
        bandwidth,
    })
}

/// `count` equally spaced points covering `mean ± width·std` of the samples.
pub fn pdf_abscissae(samples: &[f64], width: f64, count: usize) -> Result<Vec<f64>> {
    let (mean, std) = ensemble_moments(samples)?;
    if count < 2 {
        return Err(Error::usage("need at least two abscissae"));
    }
    let (lo, hi) = (mean - width * std, mean + width * std);
    Ok((0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect())
}

/// Two-sample Kolmogorov–Smirnov distance between empirical CDFs.
pub fn ks_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::usage("KS distance needs nonempty samples"));
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(Error::numeric("NaN in sample"));
    }
    let sort = |v: &[f64]| {
        let mut v = v.to_vec();
        v.sort_by(f64::total_cmp);
        v
    };
    let (a, b) = (sort(a), sort(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Per-probe summary of an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldStats {
    pub probes: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub count: usize,
}

/// Moments at every probe of a `samples x probes` ensemble.
pub fn field_stats(probes: &[Vec<f64>], values: ArrayView2<f64>) -> Result<FieldStats> {
    if values.ncols() != probes.len() {
        return Err(Error::usage(format!(
            "{} value columns for {} probes",
            values.ncols(),
            probes.len()
        )));
    }
    let mut mean = Vec::with_capacity(probes.len());
    let mut std = Vec::with_capacity(probes.len());
    for col in values.columns() {
        let (m, s) = ensemble_moments(&col.to_vec())?;
        mean.push(m);
        std.push(s);
    }
    Ok(FieldStats {
        probes: probes.to_vec(),
        mean,
        std,
        count: values.nrows(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldComparison {
    /// `‖a − b‖₂ / ‖b‖₂` over the probe means.
    pub mean_rel_l2: f64,
    /// Same for the standard deviations.
    pub std_rel_l2: f64,
    /// Largest absolute difference of the means.
    pub mean_max_abs: f64,
    pub std_max_abs: f64,
    /// Per-probe KS distance, present when both sides carry samples.
    pub ks: Option<Vec<f64>>,
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if diff == 0.0 {
        0.0
    } else {
        diff / norm
    }
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Compares field `a` against reference `b`. Sample matrices (`samples x probes`), when
/// given for both, add per-probe KS distances.
pub fn compare_fields(
    a: &FieldStats,
    b: &FieldStats,
    samples: Option<(ArrayView2<f64>, ArrayView2<f64>)>,
) -> Result<FieldComparison> {
    if a.probes.len() != b.probes.len()
        || a.probes
            .iter()
            .zip(&b.probes)
            .any(|(p, q)| p.len() != q.len() || max_abs(p, q) > 1e-12)
    {
        return Err(Error::usage("fields are given on different probe sets"));
    }
    let ks = match samples {
        Some((sa, sb)) => {
            if sa.ncols() != a.probes.len() || sb.ncols() != b.probes.len() {
                return Err(Error::usage("sample matrices do not match the probe set"));
            }
            Some(
                sa.columns()
                    .into_iter()
                    .zip(sb.columns())
                    .map(|(x, y)| ks_distance(&x.to_vec(), &y.to_vec()))
                    .collect::<Result<Vec<_>>>()?,
            )
        }
        None => None,
    };
    Ok(FieldComparison {
        mean_rel_l2: rel_l2(&a.mean, &b.mean),
        std_rel_l2: rel_l2(&a.std, &b.std),
        mean_max_abs: max_abs(&a.mean, &b.mean),
        std_max_abs: max_abs(&a.std, &b.std),
        ks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn small_moments() {
        assert_eq!(ensemble_moments(&[1.0, 2.0, 3.0]).unwrap(), (2.0, 1.0));
        assert_eq!(ensemble_moments(&[4.5; 7]).unwrap().1, 0.0);
        assert!(matches!(ensemble_moments(&[1.0]), Err(Error::Usage(_))));
    }

    #[test]
    fn uniform_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let (m, sd) = ensemble_moments(&s).unwrap();
        let se = (1.0f64 / 12.0).sqrt() / 100.0;
        assert!((m - 0.5).abs() < 3.0 * se);
        assert!((sd - 0.288675).abs() < 3e-3);
    }

    #[test]
    fn normal_kde() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
        let xs: Vec<f64> = (0..=1000).map(|i| -5.0 + 0.01 * i as f64).collect();
        let pdf = kde_pdf(&s, &xs).unwrap();
        let at0 = pdf.density[500];
        assert!((at0 / 0.398942 - 1.0).abs() < 0.05, "{at0}");
        assert!(pdf.density.iter().all(|&f| f >= 0.0));
        assert!((pdf.integral() - 1.0).abs() < 0.01);
    }

    #[test]
    fn kde_errors() {
        assert!(matches!(kde_pdf(&[1.0; 10], &[0.0]), Err(Error::Usage(_))));
        assert!(matches!(kde_pdf(&[1.0; 40], &[0.0]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn ks_known_values() {
        assert_eq!(ks_distance(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(ks_distance(&[0.0, 1.0], &[2.0, 3.0]).unwrap(), 1.0);
        // CDFs at x=1: 1/2 vs 1/4
        assert_eq!(ks_distance(&[0.0, 1.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]).unwrap(), 0.25);
    }

    fn stats(mean: Vec<f64>) -> FieldStats {
        let n = mean.len();
        FieldStats {
            probes: (0..n).map(|i| vec![i as f64, 0.0]).collect(),
            std: mean.iter().map(|m| 0.1 * m.abs()).collect(),
            mean,
            count: 10,
        }
    }

    #[test]
    fn identical_fields_compare_to_zero() {
        let a = stats(vec![1.0, -2.0, 0.5]);
        let s = Array2::from_shape_fn((5, 3), |(i, j)| (i * j) as f64);
        let c = compare_fields(&a, &a, Some((s.view(), s.view()))).unwrap();
        assert_eq!((c.mean_rel_l2, c.std_rel_l2, c.mean_max_abs), (0.0, 0.0, 0.0));
        assert_eq!(c.ks, Some(vec![0.0; 3]));
    }

    #[test]
    fn uniform_offset() {
        let a = stats(vec![1.0, -4.0, 2.5]);
        let mut b = a.clone();
        let shift = 0.01 * 4.0;
        b.mean.iter_mut().for_each(|m| *m += shift);
        let c = compare_fields(&a, &b, None).unwrap();
        assert!((c.mean_max_abs - shift).abs() < 1e-15);
        let mut moved = a.clone();
        moved.probes[1][0] = 7.0;
        assert!(matches!(compare_fields(&a, &moved, None), Err(Error::Usage(_))));
    }

    proptest! {
        #[test]
        fn moments_ignore_order(mut v in prop::collection::vec(-1e3f64..1e3, 2..40), seed in any::<u64>()) {
            let (m0, s0) = ensemble_moments(&v).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..v.len()).rev() {
                v.swap(i, rng.random_range(0..=i));
            }
            let (m1, s1) = ensemble_moments(&v).unwrap();
            prop_assert!((m0 - m1).abs() <= 1e-9 * (1.0 + m0.abs()));
            prop_assert!((s0 - s1).abs() <= 1e-9 * (1.0 + s0));
        }

        #[test]
        fn max_abs_is_symmetric(a in prop::collection::vec(-10f64..10.0, 1..10), shift in -1f64..1.0) {
            let fa = stats(a.clone());
            let fb = stats(a.iter().map(|x| x + shift * x.sin()).collect());
            let ab = compare_fields(&fa, &fb, None).unwrap();
            let ba = compare_fields(&fb, &fa, None).unwrap();
            prop_assert_eq!(ab.mean_max_abs, ba.mean_max_abs);
        }

        #[test]
        fn ks_in_unit_interval(a in prop::collection::vec(-5f64..5.0, 1..30), b in prop::collection::vec(-5f64..5.0, 1..30)) {
            let d = ks_distance(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(d, ks_distance(&b, &a).unwrap());
        }
    }
}
