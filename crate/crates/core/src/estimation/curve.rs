//! Acceptance curves and the elicitation metrics read off them.

use serde::{Deserialize, Serialize};

use super::EstimationError;
use crate::games::Domain;
use crate::optim::{minimize, Bounds, MinimizeOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub probe: f64,
    pub n_trials: u32,
    pub n_positive: u32,
}

impl CurvePoint {
    pub fn frequency(&self) -> f64 {
        self.n_positive as f64 / self.n_trials as f64
    }
}

/// Decision frequencies indexed by probe value (offer or sure amount), sorted by probe.
///
/// "Positive" means Accept for responders and choosing the gamble for lotteries.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceCurve {
    points: Vec<CurvePoint>,
}

impl AcceptanceCurve {
    pub fn new() -> Self {
        Self::default()
    }

    /// Curve from `(probe, frequency)` pairs, each counted as one trial per 1/`n` resolution.
    pub fn from_frequencies(pairs: &[(f64, f64)], n: u32) -> Self {
        let mut c = Self::new();
        for &(probe, freq) in pairs {
            let pos = (freq * n as f64).round() as u32;
            c.add_counts(probe, n, pos.min(n));
        }
        c
    }

    pub fn record(&mut self, probe: f64, positive: bool) {
        self.add_counts(probe, 1, positive as u32);
    }

    pub fn add_counts(&mut self, probe: f64, n_trials: u32, n_positive: u32) {
        assert!(n_positive <= n_trials, "more positives than trials");
        match self.points.binary_search_by(|p| p.probe.total_cmp(&probe)) {
            Ok(i) => {
                self.points[i].n_trials += n_trials;
                self.points[i].n_positive += n_positive;
            }
            Err(i) => self.points.insert(i, CurvePoint { probe, n_trials, n_positive }),
        }
    }

    pub fn points(&self) -> &[CurvePoint] {
        &self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points.iter().all(|p| p.n_trials == 0)
    }

    fn observed(&self) -> Vec<(f64, f64)> {
        self.points.iter().filter(|p| p.n_trials > 0).map(|p| (p.probe, p.frequency())).collect()
    }
}

/// Smallest probe accepted in more than half of its trials.
pub fn switching_point(curve: &AcceptanceCurve) -> Result<Option<f64>, EstimationError> {
    if curve.is_empty() {
        return Err(EstimationError::EmptyCurve);
    }
    Ok(curve.observed().into_iter().find(|&(_, f)| f > 0.5).map(|(x, _)| x))
}

/// Linearly interpolated 0.5 crossing of an increasing acceptance curve.
///
/// When the first probe already exceeds one half, that probe is returned.
pub fn interpolated_threshold(curve: &AcceptanceCurve) -> Result<Option<f64>, EstimationError> {
    if curve.is_empty() {
        return Err(EstimationError::EmptyCurve);
    }
    let pts = curve.observed();
    let Some(k) = pts.iter().position(|&(_, f)| f > 0.5) else {
        return Ok(None);
    };
    if k == 0 {
        return Ok(Some(pts[0].0));
    }
    let (x0, f0) = pts[k - 1];
    let (x1, f1) = pts[k];
    Ok(Some(x0 + (0.5 - f0) / (f1 - f0) * (x1 - x0)))
}

/// How an observed certainty equivalent was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CeMethod {
    Logistic,
    Interpolated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedCe {
    pub ce: f64,
    pub method: CeMethod,
}

fn logistic_decreasing(s: f64, center: f64, width: f64) -> f64 {
    1.0 / (1.0 + ((s - center) / width).exp())
}

/// Sure amount at which the gamble is chosen half of the time.
///
/// Fits a decreasing logistic in the sure amount by least squares and reads off its
/// midpoint. Falls back to linear interpolation between the bracketing probes when
/// there are too few points, the fit does not converge, or it degenerates into a step.
/// Amounts are signed in every domain; `domain` only documents the cell.
pub fn observed_ce(curve: &AcceptanceCurve, _domain: Domain) -> Result<ObservedCe, EstimationError> {
    let pts = curve.observed();
    if pts.len() < 2 {
        return Err(EstimationError::TooFewObservations { needed: 2, got: pts.len() });
    }
    let bracket = pts.windows(2).find(|w| w[0].1 >= 0.5 && w[1].1 <= 0.5 && w[0].1 > w[1].1).map(|w| (w[0], w[1]));
    let Some(((x0, f0), (x1, f1))) = bracket else {
        return Err(EstimationError::NoCrossing);
    };
    let interpolated = ObservedCe { ce: x0 + (f0 - 0.5) / (f0 - f1) * (x1 - x0), method: CeMethod::Interpolated };
    if pts.len() < 3 {
        return Ok(interpolated);
    }

    let (lo, hi) = (pts[0].0, pts[pts.len() - 1].0);
    let span = hi - lo;
    let min_width = span * 1e-4;
    let bounds = Bounds::from_pairs(&[(lo, hi), (min_width, span * 10.0)])?;
    let sse =
        |theta: &[f64]| pts.iter().map(|&(s, f)| (logistic_decreasing(s, theta[0], theta[1]) - f).powi(2)).sum::<f64>();
    let opts = MinimizeOptions { starts: 4, tol: 1e-10, max_iter: 2_000, seed: 0 };
    let fit = minimize(sse, &bounds, &opts)?;
    let (center, width) = (fit.x[0], fit.x[1]);
    let edge = 1e-6 * span;
    // whole transition inside one probe gap: the centre is not pinned down by the data
    let saturated =
        logistic_decreasing(x0, center, width) > 1.0 - 1e-3 && logistic_decreasing(x1, center, width) < 1e-3;
    let degenerate = saturated || width < min_width * 1.01 || center - lo < edge || hi - center < edge;
    if !fit.converged || degenerate {
        return Ok(interpolated);
    }
    Ok(ObservedCe { ce: center, method: CeMethod::Logistic })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn switching_point_examples() {
        let c = AcceptanceCurve::from_frequencies(&[(0.0, 0.1), (1.0, 0.4), (2.0, 0.7), (3.0, 0.9)], 10);
        assert_eq!(switching_point(&c).unwrap(), Some(2.0));
        let all = AcceptanceCurve::from_frequencies(&[(1.0, 1.0), (2.0, 1.0)], 4);
        assert_eq!(switching_point(&all).unwrap(), Some(1.0));
        let none = AcceptanceCurve::from_frequencies(&[(0.0, 0.2), (1.0, 0.5)], 10);
        assert_eq!(switching_point(&none).unwrap(), None);
        assert_eq!(switching_point(&AcceptanceCurve::new()), Err(EstimationError::EmptyCurve));
    }

    #[test]
    fn interpolated_threshold_examples() {
        let step = AcceptanceCurve::from_frequencies(&[(0.0, 0.0), (1.0, 0.0), (2.0, 1.0)], 10);
        assert_eq!(interpolated_threshold(&step).unwrap(), Some(1.5));
        let c = AcceptanceCurve::from_frequencies(&[(0.0, 0.1), (1.0, 0.4), (2.0, 0.7)], 10);
        assert!((interpolated_threshold(&c).unwrap().unwrap() - (1.0 + 0.1 / 0.3)).abs() < 1e-12);
        let all = AcceptanceCurve::from_frequencies(&[(0.0, 1.0), (1.0, 1.0)], 10);
        assert_eq!(interpolated_threshold(&all).unwrap(), Some(0.0));
    }

    #[test]
    fn record_merges_probes() {
        let mut c = AcceptanceCurve::new();
        c.record(2.0, true);
        c.record(1.0, false);
        c.record(2.0, false);
        assert_eq!(c.points().len(), 2);
        assert_eq!(c.points()[0].probe, 1.0);
        assert_eq!((c.points()[1].n_trials, c.points()[1].n_positive), (2, 1));
    }

    #[test]
    fn observed_ce_symmetric_midpoint() {
        let c = AcceptanceCurve::from_frequencies(&[(40.0, 0.9), (50.0, 0.5), (60.0, 0.1)], 100);
        let ce = observed_ce(&c, Domain::Gain).unwrap();
        assert!((ce.ce - 50.0).abs() < 1e-5, "{ce:?}");
        assert_eq!(ce.method, CeMethod::Logistic);
    }

    #[test]
    fn observed_ce_two_points_interpolates() {
        let c = AcceptanceCurve::from_frequencies(&[(40.0, 1.0), (60.0, 0.0)], 10);
        let ce = observed_ce(&c, Domain::Gain).unwrap();
        assert_eq!(ce, ObservedCe { ce: 50.0, method: CeMethod::Interpolated });
    }

    #[test]
    fn observed_ce_step_falls_back_to_interpolation() {
        let c = AcceptanceCurve::from_frequencies(
            &[(-40.0, 1.0), (-30.0, 1.0), (-20.0, 1.0), (-10.0, 0.0), (0.0, 0.0)],
            10,
        );
        let ce = observed_ce(&c, Domain::Loss).unwrap();
        assert_eq!(ce, ObservedCe { ce: -15.0, method: CeMethod::Interpolated });
    }

    #[test]
    fn observed_ce_recovers_logistic_midpoint() {
        let pts: Vec<(f64, f64)> =
            (1..=9).map(|k| 10.0 * k as f64).map(|s| (s, logistic_decreasing(s, 37.0, 6.0))).collect();
        let mut c = AcceptanceCurve::new();
        for (s, f) in pts {
            c.add_counts(s, 1_000_000, (f * 1e6).round() as u32);
        }
        let ce = observed_ce(&c, Domain::Gain).unwrap();
        assert!((ce.ce - 37.0).abs() < 1e-3, "{ce:?}");
    }

    #[test]
    fn observed_ce_without_bracket() {
        let c = AcceptanceCurve::from_frequencies(&[(10.0, 1.0), (20.0, 1.0), (30.0, 1.0)], 10);
        assert_eq!(observed_ce(&c, Domain::Gain), Err(EstimationError::NoCrossing));
        let single = AcceptanceCurve::from_frequencies(&[(10.0, 1.0)], 10);
        assert!(matches!(observed_ce(&single, Domain::Gain), Err(EstimationError::TooFewObservations { .. })));
    }
}
