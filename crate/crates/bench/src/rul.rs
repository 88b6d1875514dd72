//! Remaining useful life as the first forecast step over a failure threshold.

use serde::{Deserialize, Serialize};

use agecast_core::ForecastResult;

/// ΔR_DS_ON failure threshold in ohms.
pub const DEFAULT_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RulEstimate {
    /// First forecast step (0-based) at or above the threshold.
    pub crossing_index: Option<usize>,
    pub threshold: f64,
}

/// Scans the median band when the forecast has one, the point forecast otherwise.
pub fn rul_from_threshold(forecast: &ForecastResult, threshold: f64) -> RulEstimate {
    let path = forecast.quantile(0.5).unwrap_or(&forecast.point);
    RulEstimate { crossing_index: path.iter().position(|v| *v >= threshold), threshold }
}

#[cfg(test)]
mod tests {
    use super::*;
    use agecast_core::series::QuantileBand;

    #[test]
    fn first_crossing() {
        let f = ForecastResult::point(0, vec![0.03, 0.045, 0.051, 0.06]);
        assert_eq!(rul_from_threshold(&f, 0.05).crossing_index, Some(2));
        let f = ForecastResult::point(0, vec![0.01, 0.02]);
        assert_eq!(rul_from_threshold(&f, DEFAULT_THRESHOLD).crossing_index, None);
        let f = ForecastResult::point(0, vec![0.05, 0.01]);
        assert_eq!(rul_from_threshold(&f, 0.05).crossing_index, Some(0));
    }

    #[test]
    fn median_band_wins_over_point() {
        let bands = vec![
            QuantileBand { q: 0.5, values: vec![0.01, 0.06] },
            QuantileBand { q: 0.9, values: vec![0.07, 0.08] },
        ];
        let f = ForecastResult::with_quantiles(0, vec![0.06, 0.06], bands).unwrap();
        assert_eq!(rul_from_threshold(&f, 0.05).crossing_index, Some(1));
    }
}
