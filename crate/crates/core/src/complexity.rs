//! Closed-form arithmetic cost of the trained estimators.

use serde::{Deserialize, Serialize};

use crate::cgan::{CE_FILTERS, CE_HIDDEN, CE_KERNEL, CE_STRIDE, SE_HIDDEN};
use crate::error::{Error, Result};
use crate::nn::OpCount;

/// Counts for the generator, the discriminator and their sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CganComplexity {
    pub generator: OpCount,
    pub discriminator: OpCount,
    pub total: OpCount,
}

fn ops(additions: usize, multiplications: usize) -> OpCount {
    OpCount {
        additions: additions as u64,
        multiplications: multiplications as u64,
    }
}

/// Dense SE estimator with layer widths `eta = [η1, η2, η3, η4]`, where the
/// discriminator reads `η1` values (equal to `η4` since `P = M`).
pub fn complexity_se_sizes(eta: [usize; 4]) -> CganComplexity {
    let [e1, e2, e3, e4] = eta;
    let generator = ops(
        e1 * e2 + e2 * e3 + e3 * e4 + e2 + e3 + e4,
        e1 * e2 + e2 * e3 + e3 * e4,
    );
    let discriminator = ops(e1 * e2 + e2 * e3 + e2 + e3 + e3 + 1, e1 * e2 + e2 * e3 + e3);
    let k2 = 2 * (e3 + 1);
    let k3 = 3 + e4;
    let total = ops(
        2 * e1 * e2 + k2 * e2 + k3 * e3 + e4 + 1,
        2 * e1 * e2 + 2 * e2 * e3 + e3 * (e4 + 1),
    );
    CganComplexity {
        generator,
        discriminator,
        total,
    }
}

/// SE-CGAN cost for `M` antennas.
pub fn complexity_se(m: usize) -> CganComplexity {
    let [h1, h2] = SE_HIDDEN;
    complexity_se_sizes([2 * m * m, h1, h2, 2 * m * m])
}

/// Convolutional CE estimator parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CeSizes {
    /// Length of the convolved axis (sub-frames `C`).
    pub c: usize,
    pub p: usize,
    pub m: usize,
    pub n: usize,
    pub kernel: usize,
    pub filters: usize,
    pub stride: usize,
    pub hidden: usize,
}

impl CeSizes {
    pub fn for_system(m: usize, n: usize) -> Self {
        Self {
            c: n,
            p: m,
            m,
            n,
            kernel: CE_KERNEL,
            filters: CE_FILTERS,
            stride: CE_STRIDE,
            hidden: CE_HIDDEN,
        }
    }
}

/// Output length of a valid convolution, `floor((C − F_z)/F_s) + 1`.
pub fn conv_positions(c: usize, kernel: usize, stride: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be positive".into()));
    }
    if kernel == 0 || kernel > c {
        return Err(Error::UnsupportedConfiguration(format!(
            "kernel {kernel} does not fit {c} positions"
        )));
    }
    Ok((c - kernel) / stride + 1)
}

pub fn complexity_ce(s: &CeSizes) -> Result<CganComplexity> {
    let eta_f = conv_positions(s.c, s.kernel, s.stride)?;
    let (fz, fn_, e3) = (s.kernel, s.filters, s.hidden);
    let e4 = 2 * s.m * s.n;
    let conv = eta_f * fn_;
    let generator = ops(
        (fz + e3 + 1) * conv + (e4 + 1) * e3 + e4,
        (fz + e3) * conv + e3 * e4,
    );
    let discriminator = ops((fz + e3 + 1) * conv + 2 * e3 + 1, (fz + e3) * conv + e3);
    let total = ops(
        2 * (fz + e3 + 1) * conv + e4 * (e3 + 1) + 3 * e3 + 1,
        2 * (fz + e3) * conv + e3 * (e4 + 1),
    );
    Ok(CganComplexity {
        generator,
        discriminator,
        total,
    })
}

/// Cost of the two-hidden-layer FFN comparison model, by the dense formula.
pub fn ffn_benchmark(inputs: usize, outputs: usize, hidden: usize) -> OpCount {
    let dense = |i: usize, o: usize| ops(o * (i + 1), i * o);
    dense(inputs, hidden) + dense(hidden, hidden) + dense(hidden, outputs)
}

/// Fractional saving of `proposed` relative to `benchmark` per count type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    pub additions: f64,
    pub multiplications: f64,
}

pub fn reduction(benchmark: OpCount, proposed: OpCount) -> Result<Reduction> {
    if benchmark.additions == 0 || benchmark.multiplications == 0 {
        return Err(Error::InvalidArgument(
            "benchmark counts must be positive".into(),
        ));
    }
    let ratio = |b: u64, p: u64| (b as f64 - p as f64) / b as f64;
    Ok(Reduction {
        additions: ratio(benchmark.additions, proposed.additions),
        multiplications: ratio(benchmark.multiplications, proposed.multiplications),
    })
}
