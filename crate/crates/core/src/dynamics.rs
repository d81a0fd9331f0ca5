//! Spin-flip time evolution: the single-site kernel `p_t`, its
//! exponential-field form `(h^t, c_t)`, and seeded forward simulation of
//! configurations. Holes never move; each occupied spin flips independently
//! with probability `(1 - e^{-2t}) / 2`.

use serde::Serialize;

use crate::rng;
use crate::tree::{Spin, SpinConfiguration};
use crate::{Error, Result};

/// Time-`t` marginal kernel of the spin-flip semigroup, with the dynamic
/// field `h^t = artanh(e^{-2t})` used by the two-layer representation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TimeKernel {
    pub t: f64,
    pub ht: f64,
    /// Row-stochastic, rows/columns indexed `(-1, 0, +1)`.
    pub kernel: [[f64; 3]; 3],
}

/// The static (`t = 0`) case: identity kernel. `make_kernel` rejects `t = 0`
/// because `h^t` diverges there; use this constant instead.
pub const IDENTITY: TimeKernel = TimeKernel {
    t: 0.0,
    ht: f64::INFINITY,
    kernel: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
};

/// Builds the kernel for `t > 0`.
pub fn make_kernel(t: f64) -> Result<TimeKernel> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::invalid(format!(
            "time must be positive and finite, got {t} (the identity kernel covers t = 0)"
        )));
    }
    let q = (-2.0 * t).exp();
    // artanh(q) through log1p for full precision at q near 0.
    let ht = 0.5 * (q.ln_1p() - (-q).ln_1p());
    let stay = 0.5 * (1.0 + q);
    let flip = 0.5 * (1.0 - q);
    Ok(TimeKernel {
        t,
        ht,
        kernel: [[stay, 0.0, flip], [0.0, 1.0, 0.0], [flip, 0.0, stay]],
    })
}

impl TimeKernel {
    pub fn flip_probability(&self) -> f64 {
        self.kernel[2][0]
    }

    pub fn entry(&self, from: Spin, to: Spin) -> f64 {
        self.kernel[from.index()][to.index()]
    }
}

/// Applies independent stochastic spin flips to the occupied sites, keeping
/// the holes fixed. The flip decision for vertex `v` is the uniform variate
/// of the substream `(seed, v)`, so the result is independent of traversal
/// or thread order.
pub fn evolve<'t>(
    cfg: &SpinConfiguration<'t>,
    kernel: &TimeKernel,
    seed: u64,
) -> SpinConfiguration<'t> {
    let flip = kernel.flip_probability();
    let spins = cfg
        .tree()
        .vertices()
        .map(|v| {
            let s = cfg.spin(v);
            if s.occupied() && rng::indexed_unit(seed, v as u64) < flip {
                s.flipped()
            } else {
                s
            }
        })
        .collect();
    SpinConfiguration::new(cfg.tree(), spins).expect("evolve preserves configuration size")
}
