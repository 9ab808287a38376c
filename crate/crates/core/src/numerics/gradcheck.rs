use std::fmt;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::numerics::dense::DenseMatrix;

#[derive(Clone, Debug)]
pub struct FdConfig {
    /// Central-difference step.
    pub step: f64,
    /// Coordinates to probe; `None` probes every entry.
    pub max_coords: Option<usize>,
    pub seed: u64,
    /// Absolute disagreement below this is accepted regardless of magnitude.
    pub abs_floor: f64,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self {
            step: 1e-4,
            max_coords: None,
            seed: 0,
            abs_floor: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CoordStatus {
    Checked,
    /// One-sided slopes disagree: the probe straddles a point where the
    /// function is not differentiable.
    SkippedKink,
}

#[derive(Clone, Debug)]
pub struct CoordReport {
    pub index: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
    pub status: CoordStatus,
}

#[derive(Clone, Debug, Default)]
pub struct FdReport {
    pub coords: Vec<CoordReport>,
    abs_floor: f64,
}

impl FdReport {
    pub fn max_rel_error(&self) -> f64 {
        self.checked().map(|c| c.rel_error).fold(0.0, f64::max)
    }

    pub fn checked(&self) -> impl Iterator<Item = &CoordReport> {
        self.coords.iter().filter(|c| c.status == CoordStatus::Checked)
    }

    pub fn skipped(&self) -> usize {
        self.coords.len() - self.checked().count()
    }

    /// Every checked coordinate is within `tolerance` relative error, or within
    /// the absolute floor.
    pub fn passed(&self, tolerance: f64) -> bool {
        self.checked()
            .all(|c| c.rel_error <= tolerance || (c.analytic - c.numeric).abs() <= self.abs_floor)
    }
}

impl fmt::Display for FdReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} coords checked, {} skipped, max rel error {:.3e}",
            self.checked().count(),
            self.skipped(),
            self.max_rel_error()
        )?;
        let mut worst: Vec<&CoordReport> = self.checked().collect();
        worst.sort_by(|a, b| b.rel_error.total_cmp(&a.rel_error));
        for c in worst.iter().take(3) {
            write!(
                f,
                "\n  {:?}: analytic {:.6e} numeric {:.6e} rel {:.3e}",
                c.index, c.analytic, c.numeric, c.rel_error
            )?;
        }
        Ok(())
    }
}

/// Compares `analytic` with central differences of `loss_fn` around `param`.
pub fn finite_diff_check(
    mut loss_fn: impl FnMut(&DenseMatrix) -> f64,
    param: &DenseMatrix,
    analytic: &DenseMatrix,
    config: &FdConfig,
) -> FdReport {
    assert_eq!(param.shape(), analytic.shape(), "gradient shape must match parameter");
    let n = param.len();
    let coords: Vec<usize> = match config.max_coords {
        Some(k) if k < n => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let mut picked = sample(&mut rng, n, k).into_vec();
            picked.sort_unstable();
            picked
        }
        _ => (0..n).collect(),
    };

    let h = config.step;
    let f0 = loss_fn(param);
    let mut probe = param.clone();
    let mut report = FdReport {
        coords: Vec::with_capacity(coords.len()),
        abs_floor: config.abs_floor,
    };
    for flat in coords {
        let orig = probe.values()[flat];
        probe.values_mut()[flat] = orig + h;
        let fp = loss_fn(&probe);
        probe.values_mut()[flat] = orig - h;
        let fm = loss_fn(&probe);
        probe.values_mut()[flat] = orig;

        let numeric = (fp - fm) / (2.0 * h);
        let a = analytic.values()[flat];
        let right = (fp - f0) / h;
        let left = (f0 - fm) / h;
        // Smooth functions have one-sided slopes that differ by O(h·f''); a
        // jump in the derivative shows up as a gap of order one.
        let kink = (right - left).abs() > 1e-2 * (1.0 + right.abs().max(left.abs()));
        let scale = a.abs().max(numeric.abs());
        let rel_error = if scale > 0.0 { (a - numeric).abs() / scale } else { 0.0 };
        report.coords.push(CoordReport {
            index: (flat / param.cols().max(1), flat % param.cols().max(1)),
            analytic: a,
            numeric,
            rel_error,
            status: if kink { CoordStatus::SkippedKink } else { CoordStatus::Checked },
        });
    }
    report
}
