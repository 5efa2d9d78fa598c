//! Small numerical helpers shared by the samplers' statistical checks:
//! trapezoid quadrature, histogram total variation and Kolmogorov-Smirnov
//! distance against a gridded density.

/// Evenly spaced grid of `points` nodes over `[lo, hi]`.
pub fn grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    assert!(points >= 2 && hi > lo);
    let h = (hi - lo) / (points - 1) as f64;
    (0..points).map(|k| lo + k as f64 * h).collect()
}

/// Trapezoid rule over values sampled on an even grid of spacing `h`.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (0.5 * (values[0] + values[n - 1]) + values[1..n - 1].iter().sum::<f64>()),
    }
}

/// Normalizes unnormalized log-density values on an even grid into a
/// density, using a max shift before exponentiating.
pub fn normalize_log_density(log_values: &[f64], h: f64) -> Vec<f64> {
    let mx = log_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut dens: Vec<f64> = log_values.iter().map(|l| (l - mx).exp()).collect();
    let z = trapezoid(&dens, h);
    dens.iter_mut().for_each(|d| *d /= z);
    dens
}

/// Cumulative trapezoid integral of a gridded density, starting at 0.
pub fn cumulative(density: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(density.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in density.windows(2) {
        acc += 0.5 * h * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

/// Linear interpolation of a gridded function at `x`, clamped at the ends.
pub fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    let last = xs.len() - 1;
    if x >= xs[last] {
        return ys[last];
    }
    let h = xs[1] - xs[0];
    let k = (((x - xs[0]) / h) as usize).min(last - 1);
    let t = (x - xs[k]) / h;
    ys[k] * (1.0 - t) + ys[k + 1] * t
}

/// Kolmogorov-Smirnov distance between samples and the CDF given on a grid.
pub fn ks_distance(samples: &[f64], xs: &[f64], cdf: &[f64]) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let total = cdf[cdf.len() - 1];
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = interpolate(xs, cdf, x) / total;
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
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
    d
}

/// Bin probabilities of `bins` equal bins over `[lo, hi]` from a gridded
/// CDF, renormalized to the window.
pub fn binned_probabilities(xs: &[f64], cdf: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|k| interpolate(xs, cdf, lo + k as f64 * width)).collect();
    let mass = edges[bins] - edges[0];
    edges.windows(2).map(|e| (e[1] - e[0]) / mass).collect()
}

/// Histogram frequencies over `bins` equal bins on `[lo, hi]`; samples
/// outside the window are dropped and the rest renormalized.
pub fn histogram(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    let mut inside = 0usize;
    for &x in samples {
        if x >= lo && x < hi {
            counts[(((x - lo) / width) as usize).min(bins - 1)] += 1;
            inside += 1;
        }
    }
    counts.iter().map(|&c| c as f64 / inside.max(1) as f64).collect()
}

/// Total variation distance between two discrete distributions.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Sample mean and unbiased variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = if xs.len() > 1 { xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_integrates_gaussian() {
        let xs = grid(-8.0, 8.0, 4001);
        let h = xs[1] - xs[0];
        let vals: Vec<f64> = xs.iter().map(|x| (-0.5 * x * x).exp()).collect();
        assert!((trapezoid(&vals, h) - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn tv_and_histogram() {
        assert_eq!(total_variation(&[0.5, 0.5], &[1.0, 0.0]), 0.5);
        let h = histogram(&[0.1, 0.6, 0.7, 5.0], 0.0, 1.0, 2);
        assert_eq!(h, vec![1.0 / 3.0, 2.0 / 3.0]);
    }

    #[test]
    fn ks_two_sample_identical_is_zero() {
        let a = [0.3, 0.1, 0.2];
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        assert_eq!(ks_two_sample(&[0.0], &[1.0]), 1.0);
    }
}
