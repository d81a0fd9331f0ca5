//! Exhaustive-enumeration oracles, independent of the production code paths
//! they check.
#![allow(dead_code)] // each test target uses a different subset Everything here works by brute-force summation over
//! configurations of small truncations, weighted per the boundary-law
//! representation of the tree-indexed Markov chain, so it is only usable for
//! `d = 2` and depth <= 2 (3^10 states).

use wrtree::model::{transfer_operator, IntermediateBoundaryLaw, ModelParams};
use wrtree::tree::{Spin, TreeTruncation, Vertex};

/// Product over all edges of `Q(w_i, w_j)` times the boundary-law weight at
/// the outermost annulus. This is the exact finite-volume weight of the
/// chain on the truncation.
pub fn static_weight(
    tree: &TreeTruncation,
    p: &ModelParams,
    bl: &IntermediateBoundaryLaw,
    spins: &[Spin],
) -> f64 {
    let mut w = 1.0;
    for v in 1..tree.vertex_count() {
        let parent = tree.parent(v).unwrap();
        w *= transfer_operator(p, spins[parent], spins[v]);
    }
    for v in tree.annulus(tree.depth()).unwrap() {
        w *= bl.law[spins[v].index()];
    }
    w
}

/// Iterates every spin assignment on the truncation.
pub fn for_each_configuration(tree: &TreeTruncation, mut f: impl FnMut(&[Spin])) {
    let n = tree.vertex_count();
    let total = 3usize.pow(n as u32);
    let mut spins = vec![Spin::Minus; n];
    for code in 0..total {
        let mut c = code;
        for s in spins.iter_mut() {
            *s = Spin::from_index(c % 3);
            c /= 3;
        }
        f(&spins);
    }
}

/// Exact joint distribution of the spins at the endpoints of the edge
/// `(root, first child)` by full enumeration.
pub fn enumerated_edge_marginal(
    tree: &TreeTruncation,
    p: &ModelParams,
    bl: &IntermediateBoundaryLaw,
) -> [[f64; 3]; 3] {
    let mut table = [[0.0; 3]; 3];
    let child = tree.children(0).next().unwrap();
    for_each_configuration(tree, |spins| {
        table[spins[0].index()][spins[child].index()] += static_weight(tree, p, bl, spins);
    });
    let z: f64 = table.iter().flatten().sum();
    for row in &mut table {
        for v in row {
            *v /= z;
        }
    }
    table
}

/// Exact single-site marginal at the root by full enumeration.
pub fn enumerated_root_marginal(
    tree: &TreeTruncation,
    p: &ModelParams,
    bl: &IntermediateBoundaryLaw,
) -> [f64; 3] {
    let mut rho = [0.0; 3];
    for_each_configuration(tree, |spins| {
        rho[spins[0].index()] += static_weight(tree, p, bl, spins);
    });
    let z: f64 = rho.iter().sum();
    rho.map(|v| v / z)
}

/// Enumerates the first-layer configurations compatible with `eta` away from
/// the root (same occupied set, free signs) and sums the two-layer weight
/// `static_weight * exp(h^t sum_i w_i eta_i)`, yielding the conditional
/// distribution of the first-layer root spin.
pub fn enumerated_root_conditional(
    tree: &TreeTruncation,
    p: &ModelParams,
    bl: &IntermediateBoundaryLaw,
    eta: &[Spin],
    ht: f64,
) -> [f64; 3] {
    let occupied: Vec<Vertex> =
        (1..tree.vertex_count()).filter(|&v| eta[v].occupied()).collect();
    let mut out = [0.0; 3];
    let mut spins = vec![Spin::Zero; tree.vertex_count()];
    for root in Spin::ALL {
        spins[0] = root;
        let mut total = 0.0;
        for mask in 0..1u32 << occupied.len() {
            for (b, &v) in occupied.iter().enumerate() {
                spins[v] = if mask >> b & 1 == 1 { Spin::Plus } else { Spin::Minus };
            }
            let mut w = static_weight(tree, p, bl, &spins);
            for &v in &occupied {
                w *= (ht * spins[v].value() * eta[v].value()).exp();
            }
            total += w;
        }
        out[root.index()] = total;
    }
    let z: f64 = out.iter().sum();
    out.map(|v| v / z)
}

/// Boundary field on the edge `v -> parent(v)` by brute force: half the
/// log-ratio of the partition functions of the strict subtree below `v`
/// conditioned on the spin at `v` being plus respectively minus. Only the
/// pair terms and the dynamic field enter; activity factors cancel.
pub fn enumerated_field(
    tree: &TreeTruncation,
    p: &ModelParams,
    eta: &[Spin],
    ht: f64,
    v: Vertex,
) -> f64 {
    fn descendants(tree: &TreeTruncation, v: Vertex, out: &mut Vec<Vertex>) {
        for c in tree.children(v) {
            out.push(c);
            descendants(tree, c, out);
        }
    }
    let mut desc = Vec::new();
    descendants(tree, v, &mut desc);
    let occupied: Vec<Vertex> = desc.into_iter().filter(|&w| eta[w].occupied()).collect();
    let mut spins = vec![Spin::Zero; tree.vertex_count()];
    let mut z = [0.0f64; 2];
    for (zi, sv) in [Spin::Plus, Spin::Minus].into_iter().enumerate() {
        spins[v] = sv;
        let mut total = 0.0;
        for mask in 0..1u32 << occupied.len() {
            for (b, &w) in occupied.iter().enumerate() {
                spins[w] = if mask >> b & 1 == 1 { Spin::Plus } else { Spin::Minus };
            }
            let mut weight = 1.0;
            for &w in &occupied {
                let parent = tree.parent(w).unwrap();
                if spins[w].value() * spins[parent].value() == -1.0 {
                    weight *= (-p.beta).exp();
                }
                weight *= (ht * spins[w].value() * eta[w].value()).exp();
            }
            total += weight;
        }
        z[zi] = total;
    }
    0.5 * (z[0] / z[1]).ln()
}
