//! Seeded random streams and the samplers used by the dynamics.
//!
//! Streams follow the splittable SplitMix64 construction: a stream is a
//! (start state, odd increment) pair derived from `(base_seed, run_index,
//! phase_tag)` by 64-bit avalanche mixing, and output `i` is
//! `mix64(start + i·gamma)`. Everything is integer arithmetic, so the uniform
//! stream is identical on every platform.
//!
//! Standard normals use the Marsaglia polar method with the spare value
//! cached; changing that method changes every CSV byte downstream.

use crate::error::{Error, Result};
use crate::linalg::{cholesky_jitter, sym_sqrt, Cholesky, SymMatrix};

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;
const SEED_SALT: u64 = 0x6a09_e667_f3bc_c908;
const RUN_SALT: u64 = 0xbb67_ae85_84ca_a73b;
const PHASE_SALT: u64 = 0x3c6e_f372_fe94_f82b;

/// Base jitter used when factoring covariances for sampling.
pub const SAMPLER_JITTER: f64 = 1e-12;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

// Variant finalizer used for the increment (Stafford's Mix13 constants differ
// from mix64, so state and gamma do not share structure).
#[inline]
fn mix_gamma(z: u64) -> u64 {
    let mut z = (z ^ (z >> 33)).wrapping_mul(0xff51_afd7_ed55_8ccd);
    z = (z ^ (z >> 33)).wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    z = (z ^ (z >> 33)) | 1;
    // reject gammas with too few bit transitions, as SplittableRandom does
    if (z ^ (z >> 1)).count_ones() < 24 {
        z ^ 0xaaaa_aaaa_aaaa_aaaa
    } else {
        z
    }
}

/// A single-consumer deterministic random stream.
#[derive(Clone, Debug)]
pub struct RngStream {
    state: u64,
    gamma: u64,
    stream_id: u64,
    spare_normal: Option<f64>,
}

/// Builds the stream for `(base_seed, run_index, phase_tag)`.
///
/// The label is `mix64(mix64(mix64(seed ^ S) ^ run·R) ^ phase·P)` with fixed
/// odd salts; the start state and increment are two further mixes of it.
pub fn derive_stream(base_seed: u64, run_index: u64, phase_tag: u64) -> RngStream {
    let mut label = mix64(base_seed ^ SEED_SALT);
    label = mix64(label ^ run_index.wrapping_mul(RUN_SALT));
    label = mix64(label ^ phase_tag.wrapping_mul(PHASE_SALT));
    RngStream {
        state: mix64(label.wrapping_add(GOLDEN_GAMMA)),
        gamma: mix_gamma(label),
        stream_id: label,
        spare_normal: None,
    }
}

impl RngStream {
    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(self.gamma);
        mix64(self.state)
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Bernoulli draw consuming exactly one uniform.
    pub fn bernoulli(&mut self, prob: f64) -> bool {
        self.next_f64() < prob
    }

    /// Standard normal via the Marsaglia polar method.
    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.next_f64() - 1.0;
            let v = 2.0 * self.next_f64() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let factor = (-2.0 * s.ln() / s).sqrt();
                self.spare_normal = Some(v * factor);
                return u * factor;
            }
        }
    }

    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for z in out {
            *z = self.standard_normal();
        }
    }
}

/// Validates a probability vector: finite, non-negative, sums to 1 ± 1e-12.
pub fn check_distribution(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::BadDistribution("empty probability vector".into()));
    }
    if let Some((i, v)) = p.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::BadDistribution(format!("entry {i} is {v}")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::BadDistribution(format!("entries sum to {total}")));
    }
    Ok(())
}

/// Draws `n` categorical samples from `p` and returns per-category counts.
///
/// Zero-probability categories are never selected.
pub fn sample_counts(p: &[f64], n: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
    check_distribution(p)?;
    let mut cdf = Vec::with_capacity(p.len());
    let mut acc = 0.0;
    for &pi in p {
        acc += pi;
        cdf.push(acc);
    }
    let last_positive = p.iter().rposition(|&v| v > 0.0).unwrap_or(0);
    let mut counts = vec![0usize; p.len()];
    for _ in 0..n {
        let u = rng.next_f64();
        let idx = cdf.partition_point(|&c| c <= u).min(last_positive);
        counts[idx] += 1;
    }
    Ok(counts)
}

/// Splits `n` across categories as `N·p_i` using largest-remainder
/// apportionment (ties go to the lower index), so counts sum to `n` exactly.
pub fn apportion_counts(p: &[f64], n: usize) -> Result<Vec<usize>> {
    check_distribution(p)?;
    let total: f64 = p.iter().sum();
    let quotas: Vec<f64> = p.iter().map(|&pi| n as f64 * pi / total).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..p.len()).filter(|&i| p[i] > 0.0).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    Ok(counts)
}

/// A Gaussian with a cached Cholesky factor.
#[derive(Clone, Debug)]
pub struct GaussianSampler {
    mean: Vec<f64>,
    factor: Cholesky,
}

impl GaussianSampler {
    pub fn new(mean: &[f64], cov: &SymMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::DimMismatch {
                expected: cov.dim(),
                found: mean.len(),
            });
        }
        Ok(Self {
            mean: mean.to_vec(),
            factor: cholesky_jitter(cov, SAMPLER_JITTER)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn factor(&self) -> &Cholesky {
        &self.factor
    }

    /// Writes a standard-normal vector into `z` and the draw `mean + L·z` into `out`.
    #[inline]
    pub fn sample_into(&self, rng: &mut RngStream, z: &mut [f64], out: &mut [f64]) {
        rng.fill_standard_normal(z);
        self.factor.mul_vec(z, out);
        for (o, m) in out.iter_mut().zip(&self.mean) {
            *o += m;
        }
    }
}

/// Draws `n` vectors from `N(mean, cov)` as `mean + L·z`.
pub fn sample_gaussian(
    mean: &[f64],
    cov: &SymMatrix,
    n: usize,
    rng: &mut RngStream,
) -> Result<Vec<Vec<f64>>> {
    let sampler = GaussianSampler::new(mean, cov)?;
    let d = sampler.dim();
    let mut z = vec![0.0; d];
    Ok((0..n)
        .map(|_| {
            let mut y = vec![0.0; d];
            sampler.sample_into(rng, &mut z, &mut y);
            y
        })
        .collect())
}

/// Wishart draw by definition: the sum of `dof` outer products of
/// `N(0, scale)` vectors.
///
/// Draws are `scale^{1/2}·z`, so directions outside the support of `scale`
/// stay exactly zero.
pub fn sample_wishart(scale: &SymMatrix, dof: usize, rng: &mut RngStream) -> Result<SymMatrix> {
    let d = scale.dim();
    let root = sym_sqrt(scale, 0.0)?;
    let mut acc = vec![0.0; d * d];
    let mut z = vec![0.0; d];
    let mut x = vec![0.0; d];
    for _ in 0..dof {
        rng.fill_standard_normal(&mut z);
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = (0..d).map(|k| root.get(i, k) * z[k]).sum();
        }
        for i in 0..d {
            for j in 0..d {
                acc[i * d + j] += x[i] * x[j];
            }
        }
    }
    SymMatrix::new(d, acc)
}
