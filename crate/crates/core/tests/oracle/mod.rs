//! Slow, direct reference implementations used as test oracles. Nothing here
//! calls into the library's numerical code.

#![allow(dead_code)]

use fixdens::{FixationTable, Point};

/// erf for z >= 0 from `2/sqrt(pi) e^{-z^2} sum_n 2^n z^{2n+1} / (2n+1)!!`.
/// Every term is positive, so the sum carries no cancellation.
pub fn erf_series(z: f64) -> f64 {
    assert!(z >= 0.0);
    if z > 6.0 {
        return 1.0;
    }
    let mut term = z;
    let mut sum = z;
    let mut n = 0.0;
    while term > sum * 1e-18 {
        n += 1.0;
        term *= 2.0 * z * z / (2.0 * n + 1.0);
        sum += term;
    }
    2.0 / std::f64::consts::PI.sqrt() * (-z * z).exp() * sum
}

/// Mass of N(c, h^2) on [0, extent] for c inside the interval.
fn axis_mass(c: f64, extent: f64, h: f64) -> f64 {
    let s = h * std::f64::consts::SQRT_2;
    0.5 * (erf_series(c / s) + erf_series((extent - c) / s))
}

/// `ln sum exp(v)` by shifting with the maximum.
pub fn lse(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Log of the isotropic Gaussian N(s, h^2 I) truncated to [0, w] x [0, h_img].
pub fn log_truncated_gaussian(q: Point, s: Point, h: f64, w: f64, hgt: f64) -> f64 {
    let mass_x = axis_mass(s.x, w, h);
    let mass_y = axis_mass(s.y, hgt, h);
    let d2 = (q.x - s.x).powi(2) + (q.y - s.y).powi(2);
    -d2 / (2.0 * h * h) - (2.0 * std::f64::consts::PI * h * h).ln() - mass_x.ln() - mass_y.ln()
}

/// Double loop over queries and sources with per-source bandwidths.
pub fn kde_log(sources: &[Point], bw: &[f64], queries: &[Point], w: f64, h: f64) -> Vec<f64> {
    queries
        .iter()
        .map(|&q| {
            let terms: Vec<f64> = sources
                .iter()
                .zip(bw)
                .map(|(&s, &b)| log_truncated_gaussian(q, s, b, w, h))
                .collect();
            lse(&terms) - (sources.len() as f64).ln()
        })
        .collect()
}

/// Abramson bandwidths `alpha / sqrt(pilot)` with the pilot a fixed KDE that
/// includes each source's own kernel.
pub fn abramson(sources: &[Point], h0: f64, alpha: f64, w: f64, h: f64) -> Vec<f64> {
    let pilot = kde_log(sources, &vec![h0; sources.len()], sources, w, h);
    pilot.iter().map(|lp| alpha / (lp.exp()).sqrt()).collect()
}

/// Mean over subjects' fixations of the fixed-KDE log density built from the
/// other subjects, with an optional uniform floor of weight `floor`.
pub fn loso_mean_ll_fixed(table: &FixationTable, h: f64, w: f64, hgt: f64) -> f64 {
    let by = table.points_by_subject();
    let mut total = 0.0;
    let mut n = 0usize;
    for (s, test) in &by {
        let train: Vec<Point> = by.iter().filter(|(t, _)| t != s).flat_map(|(_, p)| p.clone()).collect();
        for v in kde_log(&train, &vec![h; train.len()], test, w, hgt) {
            total += v;
            n += 1;
        }
    }
    total / n as f64
}

/// `n` log-spaced values covering `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| (lo.ln() + (hi.ln() - lo.ln()) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

/// AUC by comparing every fixation with every pixel.
pub fn auc_pairwise(values: &[f64], width: usize, fixations: &[Point]) -> f64 {
    let mut acc = 0.0;
    for f in fixations {
        let v = values[f.y.floor() as usize * width + f.x.floor() as usize];
        for &u in values {
            acc += if v > u {
                1.0
            } else if v == u {
                0.5
            } else {
                0.0
            };
        }
    }
    acc / (fixations.len() * values.len()) as f64
}
