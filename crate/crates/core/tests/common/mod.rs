#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use timebin::decoy::{poisson_weights, GainEntry, GainsTable, LinearProgram, OutcomeFilter, Sense};
use timebin::states::Basis;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..n {
                        a[r][c] -= f * a[col][c];
                    }
                    b[r] -= f * b[col];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Best objective over all vertices of the feasible polytope, or `None` when
/// no vertex is feasible.
pub fn enumerate_vertices(lp: &LinearProgram) -> Option<f64> {
    let n = lp.objective.len();
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        planes.push((e.clone(), lp.lower[j]));
        planes.push((e, lp.upper[j]));
    }
    for c in &lp.constraints {
        for v in [c.lower, c.upper] {
            if v.is_finite() {
                planes.push((c.coeffs.clone(), v));
            }
        }
    }
    let mut best: Option<f64> = None;
    let mut pick = Vec::with_capacity(n);
    subsets(planes.len(), n, 0, &mut pick, &mut |idx| {
        let a = idx.iter().map(|&i| planes[i].0.clone()).collect();
        let b = idx.iter().map(|&i| planes[i].1).collect();
        let Some(x) = solve_dense(a, b) else { return };
        if lp.max_violation(&x) > 1e-9 {
            return;
        }
        let obj: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        best = Some(match (best, lp.sense) {
            (None, _) => obj,
            (Some(b), Sense::Minimize) => b.min(obj),
            (Some(b), Sense::Maximize) => b.max(obj),
        });
    });
    best
}

fn subsets(total: usize, k: usize, start: usize, pick: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if pick.len() == k {
        f(pick);
        return;
    }
    for i in start..total {
        pick.push(i);
        subsets(total, k, i + 1, pick, f);
        pick.pop();
    }
}

/// Random LP with at most four variables around a known feasible point.
pub fn random_lp(rng: &mut ChaCha8Rng) -> LinearProgram {
    let n = rng.random_range(1..=4);
    let lower: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..0.0)).collect();
    let upper: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    let objective: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let sense = if rng.random_bool(0.5) { Sense::Minimize } else { Sense::Maximize };
    let x0: Vec<f64> = (0..n).map(|j| rng.random_range(lower[j]..upper[j])).collect();
    let mut lp = LinearProgram::new(sense, objective, lower, upper);
    for r in 0..rng.random_range(1..=3) {
        let coeffs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let at: f64 = coeffs.iter().zip(&x0).map(|(a, x)| a * x).sum();
        let (lo, hi) = match rng.random_range(0..4) {
            0 => (at, at),
            1 => (at - rng.random_range(0.0..0.5), f64::INFINITY),
            2 => (f64::NEG_INFINITY, at + rng.random_range(0.0..0.5)),
            _ => (at - rng.random_range(0.0..0.5), at + rng.random_range(0.0..0.5)),
        };
        lp.add_constraint(format!("r{r}"), coeffs, lo, hi);
    }
    lp
}

pub const SYNTH_PHOTONS: usize = 20;
pub const INTENSITIES: [f64; 3] = [0.11, 0.05, 0.0];

/// Exact gains from yield and error-yield matrices indexed `[n][m]`.
pub fn exact_gains(y: &[Vec<f64>], b: &[Vec<f64>], mus: &[f64]) -> GainsTable {
    let size = y.len() - 1;
    let mut entries = Vec::new();
    for &ma in mus {
        for &mb in mus {
            let pa = poisson_weights(ma, size);
            let pb = poisson_weights(mb, size);
            let (mut q, mut eq) = (0.0, 0.0);
            for n in 0..=size {
                for m in 0..=size {
                    q += pa[n] * pb[m] * y[n][m];
                    eq += pa[n] * pb[m] * b[n][m];
                }
            }
            let e = if q > 0.0 { (eq / q).min(1.0) } else { 0.0 };
            entries.push(GainEntry::exact(ma, mb, q.min(1.0), e));
        }
    }
    GainsTable::new(Basis::Z, OutcomeFilter::Combined, entries).unwrap()
}

/// Random yields in `[0, 1]` and error yields `B ≤ Y` up to
/// [`SYNTH_PHOTONS`] photons per source.
pub fn random_yields(rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let style = rng.random_range(0..3);
    let mut y = vec![vec![0.0; SYNTH_PHOTONS + 1]; SYNTH_PHOTONS + 1];
    let mut b = y.clone();
    for n in 0..=SYNTH_PHOTONS {
        for m in 0..=SYNTH_PHOTONS {
            y[n][m] = match style {
                // Unstructured.
                0 => rng.random::<f64>(),
                // Loss-like growth with photon number.
                1 => {
                    let t: f64 = rng.random_range(0.05..0.9);
                    (1.0 - (1.0 - t).powi((n + m) as i32)) * rng.random_range(0.5..1.0)
                }
                // Sparse.
                _ => {
                    if rng.random_bool(0.3) {
                        rng.random::<f64>()
                    } else {
                        0.0
                    }
                }
            };
            b[n][m] = y[n][m] * rng.random::<f64>();
        }
    }
    (y, b)
}
