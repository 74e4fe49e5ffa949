//! Small numerical helpers shared by the classification and fitting code.

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().collect::<CompensatedSum>().value()
}

/// Weighted least-squares line `y = intercept + slope * x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    /// Root mean square of the unweighted residuals.
    pub residual_rms: f64,
    pub points: usize,
}

/// Fits a weighted line. Returns `None` with fewer than two points or when
/// all abscissae coincide.
pub fn weighted_line_fit(x: &[f64], y: &[f64], w: &[f64]) -> Option<LineFit> {
    let m = x.len();
    if m < 2 || y.len() != m || w.len() != m {
        return None;
    }
    let sw = compensated_sum(w.iter().copied());
    if !(sw > 0.0) {
        return None;
    }
    let xm = compensated_sum(x.iter().zip(w).map(|(xi, wi)| xi * wi)) / sw;
    let ym = compensated_sum(y.iter().zip(w).map(|(yi, wi)| yi * wi)) / sw;
    let sxx = compensated_sum(x.iter().zip(w).map(|(xi, wi)| wi * (xi - xm) * (xi - xm)));
    if !(sxx > 0.0) {
        return None;
    }
    let sxy = compensated_sum(
        x.iter()
            .zip(y)
            .zip(w)
            .map(|((xi, yi), wi)| wi * (xi - xm) * (yi - ym)),
    );
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let residuals: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| yi - (intercept + slope * xi))
        .collect();
    let wrss = compensated_sum(residuals.iter().zip(w).map(|(r, wi)| wi * r * r));
    let residual_rms = (compensated_sum(residuals.iter().map(|r| r * r)) / m as f64).sqrt();
    let (slope_se, intercept_se) = if m > 2 {
        let sigma2 = wrss / (m - 2) as f64;
        let slope_var = sigma2 / sxx;
        let intercept_var = sigma2 * (1.0 / sw + xm * xm / sxx);
        (slope_var.sqrt(), intercept_var.sqrt())
    } else {
        (0.0, 0.0)
    };
    Some(LineFit {
        slope,
        intercept,
        slope_se,
        intercept_se,
        residual_rms,
        points: m,
    })
}
