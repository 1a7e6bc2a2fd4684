//! Reference implementations used as test oracles. Written independently of
//! the library code they check.
#![allow(dead_code, clippy::needless_range_loop)]

use beamsplit::bell::PairwiseSpec;

/// Quadratic-time coincidence count: for each trigger, scan every D1/D2 event.
pub fn brute_force_counts(d0: &[f64], d1: &[f64], d2: &[f64], alpha: f64, shift: f64) -> [u64; 4] {
    let hit = |t0: f64, ts: &[f64]| ts.iter().any(|&t| ((t0 + shift) - t).abs() <= alpha);
    let mut counts = [d0.len() as u64, 0, 0, 0];
    for &t0 in d0 {
        let (h1, h2) = (hit(t0, d1), hit(t0, d2));
        counts[1] += h1 as u64;
        counts[2] += h2 as u64;
        counts[3] += (h1 && h2) as u64;
    }
    counts
}

/// Trapezoid-rule integral of `A² exp(−t²/2σ²)` over `±4σ`.
pub fn gaussian_energy_by_quadrature(sigma: f64, amplitude: f64, intervals: usize) -> f64 {
    let (lo, hi) = (-4.0 * sigma, 4.0 * sigma);
    let h = (hi - lo) / intervals as f64;
    let f = |t: f64| amplitude * amplitude * (-0.5 * (t / sigma).powi(2)).exp();
    let inner: f64 = (1..intervals).map(|i| f(lo + i as f64 * h)).sum();
    h * (0.5 * f(lo) + inner + 0.5 * f(hi))
}

/// `[x1, x2, x3]` for outcome index `atom`, `x1` the high bit.
pub fn outcome(atom: usize) -> [u8; 3] {
    [(atom >> 2) as u8 & 1, (atom >> 1) as u8 & 1, atom as u8 & 1]
}

/// Seven linear functionals on the eight outcomes: mass, three marginals,
/// agreements (1,2), (1,3), (2,3).
pub fn constraint_rows() -> [[f64; 8]; 7] {
    let mut rows = [[0.0; 8]; 7];
    for a in 0..8 {
        let x = outcome(a);
        rows[0][a] = 1.0;
        for i in 0..3 {
            rows[1 + i][a] = x[i] as f64;
        }
        rows[4][a] = (x[0] == x[1]) as u8 as f64;
        rows[5][a] = (x[0] == x[2]) as u8 as f64;
        rows[6][a] = (x[1] == x[2]) as u8 as f64;
    }
    rows
}

pub fn spec_targets(spec: &PairwiseSpec) -> [f64; 7] {
    let m = spec.marginals;
    let a = spec.agreements;
    [1.0, m[0], m[1], m[2], a[0], a[1], a[2]]
}

/// Largest constraint residual of `weights` against `spec`.
pub fn residual(weights: &[f64; 8], spec: &PairwiseSpec) -> f64 {
    let rows = constraint_rows();
    let b = spec_targets(spec);
    (0..7)
        .map(|k| ((0..8).map(|a| rows[k][a] * weights[a]).sum::<f64>() - b[k]).abs())
        .fold(0.0, f64::max)
}

/// Solves the square system `m x = rhs` by Gaussian elimination with
/// partial pivoting.
fn solve(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Vec<f64> {
    let n = rhs.len();
    for col in 0..n {
        let p = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, p);
        rhs.swap(col, p);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for c in col..n {
                m[r][c] -= f * m[col][c];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (rhs[r] - s) / m[r][r];
    }
    x
}

/// Grid search for a joint distribution. The seven constraints leave one
/// free direction, so fixing `w(000)` determines the rest; `w(000)` walks a
/// lattice of spacing `2^-bits`.
pub fn lattice_search(spec: &PairwiseSpec, bits: u32) -> Option<[f64; 8]> {
    let rows = constraint_rows();
    let b = spec_targets(spec);
    let m: Vec<Vec<f64>> = rows.iter().map(|r| r[1..].to_vec()).collect();
    let steps = 1u64 << bits;
    for k in 0..=steps {
        let w0 = k as f64 / steps as f64;
        let rhs: Vec<f64> = (0..7).map(|r| b[r] - rows[r][0] * w0).collect();
        let rest = solve(m.clone(), rhs);
        if rest.iter().all(|&w| w >= -1e-9) {
            let mut w = [0.0; 8];
            w[0] = w0;
            w[1..].copy_from_slice(&rest);
            return Some(w);
        }
    }
    None
}
