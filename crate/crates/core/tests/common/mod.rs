//! Random symmetric PSD instances and independent linear-algebra oracles.
#![allow(dead_code)]

use coevolve::linalg::SymMatrix;
use coevolve::sampling::RngStream;
use nalgebra::DMatrix;

/// `Q·diag(eigs)·Qᵀ` with `Q` orthonormalized from `raw` (row-major `d × d`).
pub fn psd_from(eigs: &[f64], raw: &[f64]) -> SymMatrix {
    let d = eigs.len();
    let m = DMatrix::from_row_slice(d, d, raw) + DMatrix::<f64>::identity(d, d) * 1e-3;
    let q = m.qr().q();
    let a = &q * DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(eigs)) * q.transpose();
    let a = (&a + a.transpose()) * 0.5;
    let data: Vec<f64> = (0..d * d).map(|k| a[(k / d, k % d)]).collect();
    SymMatrix::new(d, data).expect("symmetrized by construction")
}

/// Eigenvalues log-uniform in `[1e-8, 1e3]`.
pub fn random_eigs(d: usize, rng: &mut RngStream) -> Vec<f64> {
    (0..d).map(|_| 10f64.powf(-8.0 + 11.0 * rng.next_f64())).collect()
}

pub fn random_psd(d: usize, rng: &mut RngStream) -> SymMatrix {
    let eigs = random_eigs(d, rng);
    let raw: Vec<f64> = (0..d * d).map(|_| rng.standard_normal()).collect();
    psd_from(&eigs, &raw)
}

pub fn to_nalgebra(a: &SymMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.dim(), a.dim(), a.as_slice())
}

/// Sum of singular values computed by nalgebra's SVD.
pub fn nuclear_norm(a: &SymMatrix) -> f64 {
    to_nalgebra(a).singular_values().iter().sum()
}

pub fn frobenius(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Averages the posterior over `draws` samples of the state's own mixture.
///
/// Returns the per-coordinate mean and its Monte Carlo standard error.
pub fn mixture_posterior_average(
    state: &coevolve::model::SystemState,
    draws: usize,
    rng: &mut RngStream,
) -> (Vec<f64>, Vec<f64>) {
    use coevolve::model::PosteriorEvaluator;
    use coevolve::sampling::GaussianSampler;

    let k = state.text.len();
    let d = state.dim();
    let samplers: Vec<GaussianSampler> = state
        .images
        .iter()
        .map(|c| GaussianSampler::new(&c.mean, &c.cov).unwrap())
        .collect();
    let mut eval = PosteriorEvaluator::new(&state.text, &state.images).unwrap();
    let p = state.text.probs();
    let mut sum = vec![0.0; k];
    let mut sum_sq = vec![0.0; k];
    let (mut z, mut y) = (vec![0.0; d], vec![0.0; d]);
    let mut post = vec![0.0; k];
    for _ in 0..draws {
        let u = rng.next_f64();
        let mut acc = 0.0;
        let mut pick = k - 1;
        for (i, &pi) in p.iter().enumerate() {
            acc += pi;
            if u < acc {
                pick = i;
                break;
            }
        }
        samplers[pick].sample_into(rng, &mut z, &mut y);
        post.iter_mut().for_each(|v| *v = 0.0);
        eval.accumulate(&y, &mut post).unwrap();
        for i in 0..k {
            sum[i] += post[i];
            sum_sq[i] += post[i] * post[i];
        }
    }
    let n = draws as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let se = (0..k)
        .map(|i| (((sum_sq[i] - n * mean[i] * mean[i]) / (n - 1.0)).max(0.0) / n).sqrt())
        .collect();
    (mean, se)
}

/// A state with random probabilities, means and covariances.
pub fn random_state(k: usize, d: usize, rng: &mut RngStream) -> coevolve::model::SystemState {
    use coevolve::model::{ImageComponent, SystemState, TextModel};
    let w: Vec<f64> = (0..k).map(|_| 0.05 + rng.next_f64()).collect();
    let total: f64 = w.iter().sum();
    let text = TextModel::new(w.iter().map(|x| x / total).collect()).unwrap();
    let images = (0..k)
        .map(|_| {
            let mean: Vec<f64> = (0..d).map(|_| 2.0 * rng.standard_normal()).collect();
            let eigs: Vec<f64> = (0..d).map(|_| 0.1 + 2.0 * rng.next_f64()).collect();
            let raw: Vec<f64> = (0..d * d).map(|_| rng.standard_normal()).collect();
            ImageComponent::new(mean, psd_from(&eigs, &raw)).unwrap()
        })
        .collect();
    SystemState::new(text, images).unwrap()
}
