//! Amplitude fit for sampled correlation curves.

use qss_core::stats::Estimate;

/// Result of fitting `E_i ≈ V · g_i` to sampled correlations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibilityFit {
    pub visibility: Estimate,
    /// χ² of the fit under the model variances.
    pub chi_square: f64,
    pub dof: usize,
}

/// One sweep point: the ideal (V = 1) correlation `g`, the sampled mean of
/// ±1 products and the number of samples behind it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub ideal: f64,
    pub sampled: f64,
    pub samples: u64,
}

/// Weighted least squares through the origin.
///
/// A mean of `n` ±1 samples with expectation `m` has variance
/// `(1 − m²)/n`. The weights use the model value `m = V·g_i`, refined
/// over a few iterations from an unweighted start; a floor of one count
/// (`1/n²`) keeps points near |m| = 1 from dominating. Returns `None`
/// when no point constrains the amplitude.
pub fn fit_visibility(points: &[CurvePoint]) -> Option<VisibilityFit> {
    let usable: Vec<_> = points.iter().filter(|p| p.samples > 0).collect();
    let sxx: f64 = usable.iter().map(|p| p.ideal * p.ideal).sum();
    if sxx <= 0.0 {
        return None;
    }
    let mut v = usable.iter().map(|p| p.ideal * p.sampled).sum::<f64>() / sxx;
    let variance = |p: &CurvePoint, v: f64| {
        let n = p.samples as f64;
        ((1.0 - (v * p.ideal).powi(2)) / n).max(1.0 / (n * n))
    };
    let mut info = 0.0;
    for _ in 0..8 {
        let (mut num, mut den) = (0.0, 0.0);
        for p in &usable {
            let w = 1.0 / variance(p, v);
            num += w * p.ideal * p.sampled;
            den += w * p.ideal * p.ideal;
        }
        v = num / den;
        info = den;
    }
    let chi_square = usable
        .iter()
        .map(|p| (p.sampled - v * p.ideal).powi(2) / variance(p, v))
        .sum();
    Some(VisibilityFit {
        visibility: Estimate::new(v, 1.0 / info.sqrt()),
        chi_square,
        dof: usable.len().saturating_sub(1),
    })
}
