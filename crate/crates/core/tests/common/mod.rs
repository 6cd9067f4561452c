//! Independent reference implementations shared by the integration tests
//! and the acceptance suite. Nothing here calls the solvers under test.
#![allow(dead_code)]

use mixsep::signal::{SourceStack, Waveform};
use rand::Rng;

/// Negative thresholded SNR written out directly from its definition.
pub fn thresh_snr_loss(y: &[f64], yhat: &[f64], snr_max_db: f64, eps: f64) -> f64 {
    let tau = 10f64.powf(-snr_max_db / 10.0);
    let ref_energy: f64 = y.iter().map(|v| v * v).sum();
    let err_energy: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    10.0 * (err_energy + tau * ref_energy + eps).log10() - 10.0 * (ref_energy + eps).log10()
}

pub fn random_wave<R: Rng>(rng: &mut R, len: usize) -> Waveform {
    Waveform::new((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(), 8000).unwrap()
}

pub fn random_stack<R: Rng>(rng: &mut R, m: usize, len: usize) -> SourceStack {
    SourceStack::new((0..m).map(|_| random_wave(rng, len)).collect()).unwrap()
}

/// Every 0/1 assignment vector of length `m`, lexicographic.
pub fn all_assignments(m: usize) -> Vec<Vec<u8>> {
    fn rec(prefix: &mut Vec<u8>, m: usize, out: &mut Vec<Vec<u8>>) {
        if prefix.len() == m {
            out.push(prefix.clone());
            return;
        }
        for bit in 0..2u8 {
            prefix.push(bit);
            rec(prefix, m, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), m, &mut out);
    out
}

/// Every permutation of `0..c`, lexicographic.
pub fn all_permutations(c: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; c], &mut out);
    out
}

/// Sum of the estimates assigned to `row`, accumulated in source order.
pub fn remix_row(ests: &SourceStack, assignment: &[u8], row: u8) -> Waveform {
    let mut acc = vec![0.0; ests.num_samples()];
    for (j, w) in ests.iter().enumerate() {
        if assignment[j] == row {
            for (a, s) in acc.iter_mut().zip(w.samples()) {
                *a += s;
            }
        }
    }
    Waveform::new(acc, ests.sample_rate()).unwrap()
}

/// Exhaustive two-target remix search with the loss evaluated from scratch.
pub fn brute_force_remix(t1: &Waveform, t2: &Waveform, ests: &SourceStack, snr_max_db: f64) -> (f64, Vec<u8>) {
    let mut best = (f64::INFINITY, Vec::new());
    for a in all_assignments(ests.len()) {
        let l = thresh_snr_loss(t1.samples(), remix_row(ests, &a, 0).samples(), snr_max_db, 1e-12)
            + thresh_snr_loss(t2.samples(), remix_row(ests, &a, 1).samples(), snr_max_db, 1e-12);
        if l < best.0 {
            best = (l, a);
        }
    }
    best
}

/// Exhaustive permutation search with the loss evaluated from scratch.
pub fn brute_force_pit(refs: &SourceStack, ests: &SourceStack, snr_max_db: f64) -> (f64, Vec<usize>) {
    let mut best = (f64::INFINITY, Vec::new());
    for p in all_permutations(refs.len()) {
        let l: f64 = p
            .iter()
            .enumerate()
            .map(|(i, &j)| thresh_snr_loss(refs[i].samples(), ests[j].samples(), snr_max_db, 1e-12))
            .sum();
        if l < best.0 {
            best = (l, p);
        }
    }
    best
}

/// Solves the equality-constrained least-squares problem
/// `min Σ_m (s_m − u_m)²  s.t.  Σ_m s_m = x` for one time step through its
/// KKT system `[2I 1; 1ᵀ 0] [s; λ] = [2u; x]`, by Gaussian elimination.
pub fn constrained_projection_sample(u: &[f64], x: f64) -> Vec<f64> {
    let m = u.len();
    let n = m + 1;
    let mut a = vec![vec![0.0; n + 1]; n];
    for i in 0..m {
        a[i][i] = 2.0;
        a[i][m] = 1.0;
        a[i][n] = 2.0 * u[i];
        a[m][i] = 1.0;
    }
    a[m][n] = x;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        let pivot_row = a[col].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r != col {
                let f = row[col] / pivot_row[col];
                for (v, p) in row.iter_mut().zip(&pivot_row).skip(col) {
                    *v -= f * p;
                }
            }
        }
    }
    (0..m).map(|i| a[i][n] / a[i][i]).collect()
}

pub fn constrained_projection(initial: &SourceStack, mixture: &Waveform) -> Vec<Vec<f64>> {
    let m = initial.len();
    let mut out = vec![Vec::with_capacity(mixture.len()); m];
    for t in 0..mixture.len() {
        let u: Vec<f64> = initial.iter().map(|w| w.samples()[t]).collect();
        for (o, v) in out.iter_mut().zip(constrained_projection_sample(&u, mixture.samples()[t])) {
            o.push(v);
        }
    }
    out
}

/// Minimum-cost perfect matching value through the Hungarian algorithm on
/// costs scaled to integers.
pub fn hungarian_min(cost: &[Vec<f64>], scale: f64) -> f64 {
    let n = cost.len();
    let weights = pathfinding::matrix::Matrix::from_fn(n, n, |(i, j)| -(cost[i][j] * scale).round() as i64);
    let (total, _) = pathfinding::kuhn_munkres::kuhn_munkres(&weights);
    -(total as f64) / scale
}

/// Spectral energy of a Hann-windowed signal in `[lo, hi)`, by direct DFT
/// evaluation on a `step_hz` grid.
pub fn band_energy(samples: &[f64], sample_rate: f64, lo: f64, hi: f64, step_hz: f64) -> f64 {
    let n = samples.len();
    let win: Vec<f64> = (0..n)
        .map(|i| {
            let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos();
            w * samples[i]
        })
        .collect();
    let mut total = 0.0;
    let mut f = lo;
    while f < hi {
        let omega = 2.0 * std::f64::consts::PI * f / sample_rate;
        let (mut re, mut im) = (0.0, 0.0);
        for (i, v) in win.iter().enumerate() {
            re += v * (omega * i as f64).cos();
            im -= v * (omega * i as f64).sin();
        }
        total += re * re + im * im;
        f += step_hz;
    }
    total
}
