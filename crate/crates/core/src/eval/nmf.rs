//! Nonnegative matrix factorization by multiplicative updates, used to
//! derive keyword topics for the entropy heuristic.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::invalid;

const EPS: f64 = 1e-12;

/// Squared Frobenius reconstruction error `|V - W H|_F^2`.
pub fn reconstruction_error(v: &Array2<f64>, w: &Array2<f64>, h: &Array2<f64>) -> f64 {
    let diff = v - &w.dot(h);
    diff.iter().map(|x| x * x).sum()
}

/// Factor a nonnegative matrix into `W (n x k)` and `H (k x m)` with the
/// classic multiplicative updates; the objective is nonincreasing per
/// iteration. Returns the factors and the per-iteration objective values.
pub fn nmf_topics(
    v: &Array2<f64>,
    k: usize,
    iters: usize,
    seed: u64,
) -> Result<(Array2<f64>, Array2<f64>, Vec<f64>)> {
    let (n, m) = v.dim();
    if k == 0 {
        return Err(invalid!("k must be >= 1"));
    }
    if k > n || k > m {
        return Err(invalid!("k = {k} exceeds matrix dimensions {n} x {m}"));
    }
    if v.iter().any(|&x| x < 0.0) {
        return Err(invalid!("matrix has negative entries"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Array2::from_shape_fn((n, k), |_| rng.random_range(0.1..1.0));
    let mut h = Array2::from_shape_fn((k, m), |_| rng.random_range(0.1..1.0));

    let mut objective = Vec::with_capacity(iters + 1);
    objective.push(reconstruction_error(v, &w, &h));
    for _ in 0..iters {
        // H <- H * (W^T V) / (W^T W H)
        let wt = w.t();
        let numer = wt.dot(v);
        let denom = wt.dot(&w).dot(&h);
        ndarray::Zip::from(&mut h).and(&numer).and(&denom).for_each(|hv, &nu, &de| {
            *hv *= nu / (de + EPS);
        });
        // W <- W * (V H^T) / (W H H^T)
        let ht = h.t();
        let numer = v.dot(&ht);
        let denom = w.dot(&h).dot(&ht);
        ndarray::Zip::from(&mut w).and(&numer).and(&denom).for_each(|wv, &nu, &de| {
            *wv *= nu / (de + EPS);
        });
        objective.push(reconstruction_error(v, &w, &h));
    }
    Ok((w, h, objective))
}

/// Dominant topic per row of `W`.
pub fn dominant_topics(w: &Array2<f64>) -> Vec<usize> {
    w.rows()
        .into_iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite"))
                .map(|(i, _)| i)
                .unwrap_or(0)
        })
        .collect()
}
