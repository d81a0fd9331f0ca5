//! Occupation-measure analysis: the parent-to-child occupation probability
//! `u`, the Galton-Watson lower-bound recursion for occupied `s`-subtrees,
//! the polynomial `g(x) = x^d + d x^{d-1}(1-x)` and its interior fixed
//! points, activity thresholds, and seeded Monte Carlo cluster statistics.
//!
//! The occupation process of the intermediate measure is itself a
//! tree-indexed Markov chain and does not feel the spin-flip dynamics, so
//! everything here is time-independent.

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::TimeKernel;
use crate::model::{self, IntermediateBoundaryLaw, ModelParams, TransitionMatrix};
use crate::rng::{self, SplitMix64};
use crate::tree::{Spin, SpinConfiguration, TreeTruncation};
use crate::{Error, Result};

/// Occupation chain of the intermediate measure:
/// `u = P(child occupied | parent occupied)` and the stationary occupation
/// probability. `u` is pinned between `xi/(1+xi)` and `2xi/(1+2xi)`, hence
/// controlled by the activity alone.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OccupationChain {
    pub d: u32,
    pub beta: f64,
    pub lambda: f64,
    pub u: f64,
    pub rho_occ: f64,
}

pub fn occupation_u(p: &ModelParams, bl: &IntermediateBoundaryLaw) -> Result<OccupationChain> {
    p.require_symmetric()?;
    let e = (-p.beta).exp();
    let xi = bl.xi;
    let a = 1.0 + (1.0 + e) * xi;
    let u = (1.0 + e) * xi / a;
    let rho_occ = 2.0 * xi * a / (2.0 * xi * a + 1.0 + 2.0 * xi);
    let lo = xi / (1.0 + xi);
    let hi = 2.0 * xi / (1.0 + 2.0 * xi);
    let eps = 1e-14;
    if u < lo - eps || u > hi + eps || (e > 0.0 && e < 1.0 && (u <= lo || u >= hi)) {
        return Err(Error::internal(format!(
            "occupation probability {u} escaped the sandwich ({lo}, {hi})"
        )));
    }
    // The activity-only envelope implied by the xi bracket.
    let lam_lo = 2f64.powi(-(p.d as i32)) * p.lambda;
    if u <= lam_lo / (1.0 + lam_lo) - eps || u >= 2.0 * p.lambda / (1.0 + 2.0 * p.lambda) + eps {
        return Err(Error::internal(format!(
            "occupation probability {u} escaped the activity envelope"
        )));
    }
    Ok(OccupationChain { d: p.d, beta: p.beta, lambda: p.lambda, u, rho_occ })
}

/// `g(x) = x^d + d x^{d-1} (1 - x)`.
pub fn g_value(d: u32, x: f64) -> f64 {
    x.powi(d as i32) + d as f64 * x.powi(d as i32 - 1) * (1.0 - x)
}

/// Interior fixed points of `g` on `(0, 1)`, sign-change scan refined by
/// bisection to 1e-12. Empty for `d = 2`, where `g(x) - x = x(1 - x)` has no
/// interior zero (and `g'(0) = 2`, unlike every `d >= 3`).
pub fn g_fixed_points(d: u32) -> Result<Vec<f64>> {
    if d < 2 {
        return Err(Error::invalid(format!("d must be >= 2, got {d}")));
    }
    crate::rootfind::scan_roots(1e-9, 1.0 - 1e-9, 1e-6, 1e-12, move |x| g_value(d, x) - x)
}

/// `sum_{k=s}^{n} C(n,k) q^k (1-q)^{n-k}`.
pub fn binomial_tail(n: u32, s: u32, q: f64) -> f64 {
    let q = q.clamp(0.0, 1.0);
    let mut coeff = 1.0f64; // C(n, k) running value
    let mut total = 0.0;
    for k in 0..=n {
        if k >= s {
            total += coeff * q.powi(k as i32) * (1.0 - q).powi((n - k) as i32);
        }
        if k < n {
            coeff = coeff * (n - k) as f64 / (k + 1) as f64;
        }
    }
    total
}

/// Galton-Watson report for the `s`-subtree lower-bound recursion
/// `p <- sum_{k=s}^d C(d,k) (u p)^k (1 - u p)^{d-k}` started at `p = 1`.
/// The iterates bound the true subtree probability from below when `u` is a
/// lower bound on the occupation probability; with the exact `u` of the
/// occupation chain they are its exact finite-depth subtree probabilities.
#[derive(Debug, Clone, Serialize)]
pub struct GWReport {
    pub d: u32,
    pub s: u32,
    pub u: f64,
    pub iterates: Vec<f64>,
    pub limit_estimate: f64,
    pub interior_fixed_points_of_g: Vec<f64>,
    /// Largest interior fixed point of `g`, absent for `d = 2`.
    pub x_c: Option<f64>,
    /// Fixed point of the `s = d-1` specialized map in `(0, 1)`, when it
    /// exists.
    pub p_lambda: Option<f64>,
}

fn gw_map(d: u32, s: u32, u: f64) -> impl Fn(f64) -> f64 + Copy {
    move |p| binomial_tail(d, s, u * p)
}

fn iterate_to_limit(d: u32, s: u32, u: f64, tol: f64, keep: Option<&mut Vec<f64>>) -> f64 {
    let map = gw_map(d, s, u);
    let mut p = 1.0f64;
    if let Some(keep) = &keep {
        debug_assert!(keep.is_empty());
    }
    let mut store = keep;
    if let Some(v) = store.as_deref_mut() {
        v.push(p);
    }
    for _ in 0..200_000 {
        let next = map(p);
        if let Some(v) = store.as_deref_mut() {
            if v.len() < 10_000 {
                v.push(next);
            }
        }
        if (p - next).abs() < tol {
            return next;
        }
        p = next;
    }
    p
}

/// Runs the recursion until successive iterates differ by less than 1e-12.
pub fn gw_iterate(d: u32, s: u32, u: f64) -> Result<GWReport> {
    if d < 2 || s < 1 || s > d - 1 {
        return Err(Error::invalid(format!(
            "lower-bound recursion needs 1 <= s <= d-1, got d={d}, s={s}"
        )));
    }
    if !(u > 0.0 && u <= 1.0) {
        return Err(Error::invalid(format!("u must lie in (0, 1], got {u}")));
    }
    let mut iterates = Vec::new();
    let limit_estimate = iterate_to_limit(d, s, u, 1e-12, Some(&mut iterates));
    for w in iterates.windows(2) {
        if w[1] > w[0] + 1e-15 {
            return Err(Error::internal(format!(
                "subtree iterates increased: {} -> {}",
                w[0], w[1]
            )));
        }
        if !(0.0..=1.0).contains(&w[1]) {
            return Err(Error::internal(format!("iterate {} left [0, 1]", w[1])));
        }
    }
    let interior = g_fixed_points(d)?;
    let x_c = interior.last().copied();
    let dm1_limit = iterate_to_limit(d, d - 1, u, 1e-13, None);
    let p_lambda = if dm1_limit > 1e-9 && dm1_limit < 1.0 {
        let residual = gw_map(d, d - 1, u)(dm1_limit) - dm1_limit;
        if residual.abs() > 1e-10 {
            return Err(Error::internal(format!(
                "p_lambda iteration did not settle: residual {residual:e}"
            )));
        }
        Some(dm1_limit)
    } else {
        None
    };
    Ok(GWReport {
        d,
        s,
        u,
        iterates,
        limit_estimate,
        interior_fixed_points_of_g: interior,
        x_c,
        p_lambda,
    })
}

/// Finite-depth subtree probabilities for any `1 <= s <= d`: `p[j]` is the
/// probability that an occupied vertex with `d` children roots an occupied
/// `s`-subtree spanning `j` further generations.
pub fn subtree_prob_iterates(d: u32, s: u32, u: f64, depth: u32) -> Vec<f64> {
    let map = gw_map(d, s, u);
    let mut out = Vec::with_capacity(depth as usize + 1);
    out.push(1.0);
    for _ in 0..depth {
        let last = *out.last().unwrap();
        out.push(map(last));
    }
    out
}

/// Probability that the tree root (which has `d + 1` children) is occupied
/// and roots an occupied `s`-subtree spanning annuli up to `depth`.
pub fn gw_root_event(d: u32, s: u32, u: f64, rho_occ: f64, depth: u32) -> f64 {
    if depth == 0 {
        return rho_occ;
    }
    let p = subtree_prob_iterates(d, s, u, depth - 1);
    rho_occ * binomial_tail(d + 1, s, u * p[depth as usize - 1])
}

/// Activity thresholds at fixed `(beta, d)`.
///
/// `lambda_g`: largest activity with `u < 1/d`; below it occupied clusters
/// are subcritical and the time-evolved measure is almost surely Gibbs for
/// every time. `lambda_b_estimate`: smallest activity at which `u` exceeds,
/// uniformly over the reference beta grid, the value `u_star` where the
/// `d-1` lower-bound map acquires a fixed point above `x_c`; an operational
/// witness of positive subtree probability, not a sharp constant. For
/// `d = 2` the polynomial `g` has no interior fixed point and the
/// lower-bound route gives no estimate; a warning is attached.
#[derive(Debug, Clone, Serialize)]
pub struct ActivityThresholds {
    pub d: u32,
    pub beta: f64,
    pub lambda_g: f64,
    pub u_star: Option<f64>,
    pub lambda_b_estimate: Option<f64>,
    pub note: String,
}

pub fn lambda_thresholds(beta: f64, d: u32) -> Result<ActivityThresholds> {
    let probe = |lambda: f64| -> Result<f64> {
        let p = ModelParams::new(d, beta, lambda)?;
        let bl = model::solve_xi(&p)?;
        Ok(occupation_u(&p, &bl)?.u)
    };
    let threshold = 1.0 / d as f64;
    let mut hi = 1.0;
    while probe(hi)? < threshold {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::internal("u never reached 1/d".to_string()));
        }
    }
    let lambda_g = {
        let lo = 1e-12;
        if probe(lo)? >= threshold {
            return Err(Error::internal("u >= 1/d already at lambda = 1e-12".to_string()));
        }
        let pred = |lambda: f64| probe(lambda).map(|u| u >= threshold).unwrap_or(false);
        crate::rootfind::monotone_threshold(lo, hi, 1e-8, pred)?
    };

    let interior = g_fixed_points(d)?;
    let (u_star, lambda_b_estimate, note) = match interior.last() {
        None => (
            None,
            None,
            format!(
                "d = {d}: g has no interior fixed point (g'(0) = 2), so the lower-bound \
                 recursion yields no typicality threshold; badness-typicality is undetermined"
            ),
        ),
        Some(&x_c) => {
            // u_star = min over (x_c, 1) of x / g(x): the smallest u at which
            // u g(x) = x has a solution above x_c.
            let h = |x: f64| x / g_value(d, x);
            let mut best = (x_c, 1.0f64);
            let steps = 200_000;
            for i in 1..steps {
                let x = x_c + (1.0 - x_c) * i as f64 / steps as f64;
                let v = h(x);
                if v < best.1 {
                    best = (x, v);
                }
            }
            let w = (1.0 - x_c) / steps as f64 * 2.0;
            let (_, u_star) =
                crate::rootfind::concave_max(best.0 - w, (best.0 + w).min(1.0), 1e-12, |x| -h(x));
            let u_star = -u_star;
            let pred = |lambda: f64| {
                model::beta_grid().iter().all(|&b| {
                    ModelParams::new(d, b, lambda)
                        .and_then(|p| model::solve_xi(&p).map(|bl| (p, bl)))
                        .and_then(|(p, bl)| occupation_u(&p, &bl))
                        .map(|oc| oc.u > u_star)
                        .unwrap_or(false)
                })
            };
            let mut hi = 1.0;
            while !pred(hi) {
                hi *= 2.0;
                if hi > 1e12 {
                    return Err(Error::internal("u_min never exceeded u_star".to_string()));
                }
            }
            let lam_b = crate::rootfind::monotone_threshold(1e-12, hi, 1e-8, pred)?;
            (
                Some(u_star),
                Some(lam_b),
                "lambda_b_estimate is sufficient activity for positive subtree probability \
                 under the lower-bound recursion, uniformly over the reference beta grid"
                    .to_string(),
            )
        }
    };
    Ok(ActivityThresholds { d, beta, lambda_g, u_star, lambda_b_estimate, note })
}

/// Cluster statistics from root-down sampling of the tree-indexed Markov
/// chain (root from `rho`, each child by the matching row of the transition
/// matrix, spin flips applied afterwards, a no-op for occupation counts).
/// Sample `i` draws from the substream `(seed, i)` in breadth-first vertex
/// order, so a depth-`j` sample is the exact prefix of the depth-`j'`
/// sample for `j < j'` and results are reproducible under any thread count.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Counts {
    root_occupied: u64,
    subtree_hits: u64,
    child_trials: u64,
    child_occupied: u64,
    gp_occ_trials: u64,
    gp_occ_hits: u64,
    gp_empty_trials: u64,
    gp_empty_hits: u64,
}

impl Counts {
    fn merge(mut self, other: Counts) -> Counts {
        self.root_occupied += other.root_occupied;
        self.subtree_hits += other.subtree_hits;
        self.child_trials += other.child_trials;
        self.child_occupied += other.child_occupied;
        self.gp_occ_trials += other.gp_occ_trials;
        self.gp_occ_hits += other.gp_occ_hits;
        self.gp_empty_trials += other.gp_empty_trials;
        self.gp_empty_hits += other.gp_empty_hits;
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterStats {
    pub d: u32,
    pub s: u32,
    pub depth: u32,
    pub samples: u64,
    pub seed: u64,
    pub beta: f64,
    pub lambda: f64,
    pub t: f64,
    pub root_occupied: u64,
    pub subtree_hits: u64,
    pub child_trials: u64,
    pub child_occupied: u64,
    pub gp_occ_trials: u64,
    pub gp_occ_hits: u64,
    pub gp_empty_trials: u64,
    pub gp_empty_hits: u64,
    /// Empirical frequency of {root occupied and roots an s-subtree}.
    pub subtree_frequency: f64,
    pub subtree_stderr: f64,
    pub root_occ_frequency: f64,
    pub u_hat: f64,
    pub u_stderr: f64,
    /// Root-aware prediction `rho_occ * P(Bin(d+1, u p^(depth-1)) >= s)`.
    pub gw_prediction: f64,
    /// Plain `rho_occ * limit` of the d-children recursion, for reference.
    pub gw_naive: f64,
    /// Closed-form stationary values for comparison.
    pub u_exact: f64,
    pub rho_occ_exact: f64,
}

fn draw_spin(probs: &[f64; 3], g: &mut SplitMix64) -> Spin {
    let v = g.next_unit();
    if v < probs[0] {
        Spin::Minus
    } else if v < probs[0] + probs[1] {
        Spin::Zero
    } else {
        Spin::Plus
    }
}

fn sample_counts(
    tree: &TreeTruncation,
    tm: &TransitionMatrix,
    kernel: &TimeKernel,
    s: u32,
    seed: u64,
    index: u64,
    spins: &mut Vec<Spin>,
) -> Counts {
    let n = tree.vertex_count();
    let d = tree.order() as usize;
    spins.clear();
    spins.resize(n, Spin::Zero);
    let sample_key = rng::substream(seed, index);
    let mut g = SplitMix64::new(sample_key);
    spins[0] = draw_spin(&tm.rho, &mut g);
    // Children blocks are laid out sequentially in breadth-first order, so a
    // running cursor visits vertices 1..n exactly once, in index order.
    let leaf_start = tree.annulus(tree.depth()).expect("ring").start;
    let mut next_child = 1usize;
    for v in 0..leaf_start {
        let row = tm.entries[spins[v].index()];
        let degree = if v == 0 { d + 1 } else { d };
        for spin in &mut spins[next_child..next_child + degree] {
            *spin = draw_spin(&row, &mut g);
        }
        next_child += degree;
    }
    // Independent spin flips on the occupied sites (holes fixed), same
    // per-vertex contract as `dynamics::evolve`. Occupation statistics below
    // are blind to this, as they must be.
    let flip = kernel.flip_probability();
    let flip_seed = rng::substream(sample_key, 1);
    for (v, spin) in spins.iter_mut().enumerate() {
        if spin.occupied() && rng::indexed_unit(flip_seed, v as u64) < flip {
            *spin = spin.flipped();
        }
    }

    let rs: Vec<usize> =
        (0..=tree.depth()).map(|k| tree.annulus(k).expect("ring").start).collect();
    let mut counts = Counts { root_occupied: spins[0].occupied() as u64, ..Counts::default() };
    for k in 1..=tree.depth() as usize {
        let ring = tree.annulus(k as u32).expect("ring");
        for v in ring {
            let p = if k == 1 { 0 } else { rs[k - 1] + (v - rs[k]) / d };
            if !spins[p].occupied() {
                continue;
            }
            let occ = spins[v].occupied() as u64;
            counts.child_trials += 1;
            counts.child_occupied += occ;
            if k >= 2 {
                let gp = if k == 2 { 0 } else { rs[k - 2] + (p - rs[k - 1]) / d };
                if spins[gp].occupied() {
                    counts.gp_occ_trials += 1;
                    counts.gp_occ_hits += occ;
                } else {
                    counts.gp_empty_trials += 1;
                    counts.gp_empty_hits += occ;
                }
            }
        }
    }
    if spins[0].occupied() {
        let cfg = SpinConfiguration::new(tree, std::mem::take(spins)).expect("sized");
        let hit = cfg.contains_s_subtree(s, 0).expect("occupied root");
        counts.subtree_hits = hit as u64;
        *spins = cfg.into_spins();
    }
    counts
}

pub fn mc_cluster_stats(
    p: &ModelParams,
    kernel: &TimeKernel,
    depth: u32,
    samples: u64,
    seed: u64,
    s: u32,
) -> Result<ClusterStats> {
    if depth < 1 || samples < 1 {
        return Err(Error::invalid("depth and samples must be >= 1".to_string()));
    }
    if s < 1 || s > p.d {
        return Err(Error::invalid(format!("need 1 <= s <= d, got s={s}, d={}", p.d)));
    }
    let bl = model::solve_xi(p)?;
    let tm = model::transition_matrix(p, &bl)?;
    let chain = occupation_u(p, &bl)?;
    let tree = TreeTruncation::new(p.d, depth)?;

    let counts = (0..samples)
        .into_par_iter()
        .fold(
            || (Counts::default(), Vec::new()),
            |(acc, mut buf), i| {
                let c = sample_counts(&tree, &tm, kernel, s, seed, i, &mut buf);
                (acc.merge(c), buf)
            },
        )
        .map(|(c, _)| c)
        .reduce(Counts::default, Counts::merge);

    let freq = counts.subtree_hits as f64 / samples as f64;
    let stderr = (freq * (1.0 - freq) / samples as f64).sqrt();
    let u_hat = if counts.child_trials > 0 {
        counts.child_occupied as f64 / counts.child_trials as f64
    } else {
        f64::NAN
    };
    let u_stderr = if counts.child_trials > 0 {
        (u_hat * (1.0 - u_hat) / counts.child_trials as f64).sqrt()
    } else {
        f64::NAN
    };
    let naive_limit = iterate_to_limit(p.d, s, chain.u, 1e-12, None);
    Ok(ClusterStats {
        d: p.d,
        s,
        depth,
        samples,
        seed,
        beta: p.beta,
        lambda: p.lambda,
        t: kernel.t,
        root_occupied: counts.root_occupied,
        subtree_hits: counts.subtree_hits,
        child_trials: counts.child_trials,
        child_occupied: counts.child_occupied,
        gp_occ_trials: counts.gp_occ_trials,
        gp_occ_hits: counts.gp_occ_hits,
        gp_empty_trials: counts.gp_empty_trials,
        gp_empty_hits: counts.gp_empty_hits,
        subtree_frequency: freq,
        subtree_stderr: stderr,
        root_occ_frequency: counts.root_occupied as f64 / samples as f64,
        u_hat,
        u_stderr,
        gw_prediction: gw_root_event(p.d, s, chain.u, chain.rho_occ, depth),
        gw_naive: chain.rho_occ * naive_limit,
        u_exact: chain.u,
        rho_occ_exact: chain.rho_occ,
    })
}
