//! Finite truncations of the Cayley tree of order `d` with breadth-first
//! indexed vertices, oriented edges, annuli and subtree predicates.
//!
//! Vertices are numbered 0..N-1 in breadth-first order from the root
//! (root = 0). The root has `d + 1` children, every other interior vertex
//! has `d`; the set of vertices at graph distance `k` from the root is the
//! annulus `R_k`. Because the indexing is canonical, parent and children of
//! a vertex are pure arithmetic on ring offsets and no adjacency arrays are
//! stored; truncations are immutable after construction and cheap to share
//! across threads.

use std::io::{BufRead, Write};

use crate::{Error, Result};

pub type Vertex = usize;

/// Hard cap on truncation size so nonsense parameters fail fast instead of
/// exhausting memory.
pub const MAX_VERTICES: u128 = 1 << 34;

/// Rooted ball `D_n` of the Cayley tree of order `d`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeTruncation {
    d: u32,
    depth: u32,
    /// `ring_start[k]` is the index of the first vertex at distance `k`;
    /// one extra entry holds the total vertex count.
    ring_start: Vec<usize>,
}

impl TreeTruncation {
    /// Builds `D_n` for a Cayley tree of order `d` (`d >= 2`).
    pub fn new(d: u32, depth: u32) -> Result<Self> {
        if d < 2 {
            return Err(Error::invalid(format!("tree order d must be >= 2, got {d}")));
        }
        let mut ring_start = Vec::with_capacity(depth as usize + 2);
        ring_start.push(0usize);
        ring_start.push(1);
        let mut ring: u128 = 1;
        let mut total: u128 = 1;
        for k in 1..=depth as u128 {
            ring *= if k == 1 { d as u128 + 1 } else { d as u128 };
            total += ring;
            if total > MAX_VERTICES {
                return Err(Error::invalid(format!(
                    "truncation d={d}, n={depth} exceeds {MAX_VERTICES} vertices"
                )));
            }
            ring_start.push(total as usize);
        }
        Ok(TreeTruncation { d, depth, ring_start })
    }

    pub fn order(&self) -> u32 {
        self.d
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn vertex_count(&self) -> usize {
        *self.ring_start.last().unwrap()
    }

    pub fn vertices(&self) -> std::ops::Range<Vertex> {
        0..self.vertex_count()
    }

    /// Vertices at graph distance `k` from the root.
    pub fn annulus(&self, k: u32) -> Result<std::ops::Range<Vertex>> {
        if k > self.depth {
            return Err(Error::invalid(format!(
                "annulus {k} out of range for depth {}",
                self.depth
            )));
        }
        Ok(self.ring_start[k as usize]..self.ring_start[k as usize + 1])
    }

    /// Distance from the root. `v` must be a valid vertex.
    pub fn depth_of(&self, v: Vertex) -> u32 {
        debug_assert!(v < self.vertex_count());
        (self.ring_start.partition_point(|&s| s <= v) - 1) as u32
    }

    /// Parent along the unique path to the root; `None` at the root.
    pub fn parent(&self, v: Vertex) -> Option<Vertex> {
        if v == 0 {
            return None;
        }
        let k = self.depth_of(v) as usize;
        if k == 1 {
            return Some(0);
        }
        let j = v - self.ring_start[k];
        Some(self.ring_start[k - 1] + j / self.d as usize)
    }

    /// Children of `v` (empty at depth `n`). Contiguous by construction.
    pub fn children(&self, v: Vertex) -> std::ops::Range<Vertex> {
        let k = self.depth_of(v) as usize;
        if k as u32 == self.depth {
            return 0..0;
        }
        if v == 0 {
            return 1..self.d as usize + 2;
        }
        let j = v - self.ring_start[k];
        let start = self.ring_start[k + 1] + j * self.d as usize;
        start..start + self.d as usize
    }
}

/// Single-site state: hole or signed particle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Spin {
    Minus,
    Zero,
    Plus,
}

impl Spin {
    pub fn value(self) -> f64 {
        match self {
            Spin::Minus => -1.0,
            Spin::Zero => 0.0,
            Spin::Plus => 1.0,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Spin::Minus => -1,
            Spin::Zero => 0,
            Spin::Plus => 1,
        }
    }

    pub fn from_i8(v: i8) -> Result<Spin> {
        match v {
            -1 => Ok(Spin::Minus),
            0 => Ok(Spin::Zero),
            1 => Ok(Spin::Plus),
            other => Err(Error::invalid(format!("spin must be -1, 0 or +1, got {other}"))),
        }
    }

    pub fn occupied(self) -> bool {
        !matches!(self, Spin::Zero)
    }

    pub fn flipped(self) -> Spin {
        match self {
            Spin::Minus => Spin::Plus,
            Spin::Zero => Spin::Zero,
            Spin::Plus => Spin::Minus,
        }
    }

    /// Index in the canonical `(-1, 0, +1)` ordering used by all tables.
    pub fn index(self) -> usize {
        match self {
            Spin::Minus => 0,
            Spin::Zero => 1,
            Spin::Plus => 2,
        }
    }

    pub fn from_index(i: usize) -> Spin {
        match i {
            0 => Spin::Minus,
            1 => Spin::Zero,
            2 => Spin::Plus,
            _ => panic!("spin index out of range: {i}"),
        }
    }

    pub const ALL: [Spin; 3] = [Spin::Minus, Spin::Zero, Spin::Plus];
}

/// Spin assignment on a truncation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpinConfiguration<'t> {
    tree: &'t TreeTruncation,
    spins: Vec<Spin>,
}

impl<'t> SpinConfiguration<'t> {
    pub fn new(tree: &'t TreeTruncation, spins: Vec<Spin>) -> Result<Self> {
        if spins.len() != tree.vertex_count() {
            return Err(Error::invalid(format!(
                "configuration has {} spins for {} vertices",
                spins.len(),
                tree.vertex_count()
            )));
        }
        Ok(SpinConfiguration { tree, spins })
    }

    pub fn constant(tree: &'t TreeTruncation, spin: Spin) -> Self {
        SpinConfiguration { tree, spins: vec![spin; tree.vertex_count()] }
    }

    pub fn all_zero(tree: &'t TreeTruncation) -> Self {
        Self::constant(tree, Spin::Zero)
    }

    /// Occupies an outward subtree in which every vertex has exactly `s`
    /// occupied children (lowest-index children chosen), all carrying `sign`;
    /// every other vertex is a hole.
    pub fn s_subtree(tree: &'t TreeTruncation, s: u32, sign: Spin) -> Result<Self> {
        if s < 1 || s > tree.order() {
            return Err(Error::invalid(format!(
                "subtree order s={s} out of range 1..={}",
                tree.order()
            )));
        }
        if !sign.occupied() {
            return Err(Error::invalid("subtree sign must be occupied".to_string()));
        }
        let mut cfg = Self::all_zero(tree);
        cfg.spins[0] = sign;
        for v in tree.vertices() {
            if cfg.spins[v].occupied() {
                for c in tree.children(v).take(s as usize) {
                    cfg.spins[c] = sign;
                }
            }
        }
        Ok(cfg)
    }

    pub fn tree(&self) -> &'t TreeTruncation {
        self.tree
    }

    pub fn spins(&self) -> &[Spin] {
        &self.spins
    }

    pub fn into_spins(self) -> Vec<Spin> {
        self.spins
    }

    pub fn spin(&self, v: Vertex) -> Spin {
        self.spins[v]
    }

    pub fn set_spin(&mut self, v: Vertex, s: Spin) {
        self.spins[v] = s;
    }

    pub fn occupied(&self, v: Vertex) -> bool {
        self.spins[v].occupied()
    }

    /// `O(eta) = { i : |eta_i| = 1 }`.
    pub fn occupied_set(&self) -> Vec<Vertex> {
        self.tree.vertices().filter(|&v| self.occupied(v)).collect()
    }

    /// Maximal connected components of the occupied set under tree
    /// adjacency, each sorted, ordered by smallest contained vertex.
    pub fn occupied_components(&self) -> Vec<Vec<Vertex>> {
        let n = self.tree.vertex_count();
        let mut seen = vec![false; n];
        let mut components = Vec::new();
        let mut queue = Vec::new();
        for start in 0..n {
            if seen[start] || !self.occupied(start) {
                continue;
            }
            let mut members = Vec::new();
            queue.push(start);
            seen[start] = true;
            while let Some(v) = queue.pop() {
                members.push(v);
                if let Some(p) = self.tree.parent(v) {
                    if self.occupied(p) && !seen[p] {
                        seen[p] = true;
                        queue.push(p);
                    }
                }
                for c in self.tree.children(v) {
                    if self.occupied(c) && !seen[c] {
                        seen[c] = true;
                        queue.push(c);
                    }
                }
            }
            members.sort_unstable();
            components.push(members);
        }
        components
    }

    /// Bottom-up markers for the depth-limited subtree predicate: `marks[v]`
    /// is true iff `v` is occupied and roots an outward occupied subtree
    /// reaching annulus `depth` in which every internal vertex has at least
    /// `s` occupied children with the same property.
    pub fn s_subtree_markers(&self, s: u32, depth: u32) -> Result<Vec<bool>> {
        if s < 1 || s > self.tree.order() {
            return Err(Error::invalid(format!(
                "subtree order s={s} out of range 1..={}",
                self.tree.order()
            )));
        }
        if depth > self.tree.depth() {
            return Err(Error::invalid(format!(
                "subtree depth {depth} exceeds truncation depth {}",
                self.tree.depth()
            )));
        }
        let limit = self.tree.annulus(depth)?.end;
        let mut marks = vec![false; limit];
        for v in self.tree.annulus(depth)? {
            marks[v] = self.occupied(v);
        }
        for k in (0..depth).rev() {
            for v in self.tree.annulus(k)? {
                if !self.occupied(v) {
                    continue;
                }
                let good = self.tree.children(v).filter(|&c| marks[c]).count();
                marks[v] = good >= s as usize;
            }
        }
        Ok(marks)
    }

    /// True iff an outward occupied subtree of order `s` rooted at
    /// `root_vertex` spans every annulus up to the truncation depth.
    /// On the finite ball this depth-limited reading stands in for the
    /// infinite subtree; convergence is probed by raising the depth.
    pub fn contains_s_subtree(&self, s: u32, root_vertex: Vertex) -> Result<bool> {
        self.contains_s_subtree_to_depth(s, root_vertex, self.tree.depth())
    }

    /// Depth-limited variant: the subtree must span annuli up to `depth`.
    pub fn contains_s_subtree_to_depth(
        &self,
        s: u32,
        root_vertex: Vertex,
        depth: u32,
    ) -> Result<bool> {
        if root_vertex >= self.tree.vertex_count() {
            return Err(Error::invalid(format!("vertex {root_vertex} out of range")));
        }
        if !self.occupied(root_vertex) {
            return Err(Error::invalid(format!(
                "subtree root {root_vertex} is not occupied"
            )));
        }
        if self.tree.depth_of(root_vertex) > depth {
            return Err(Error::invalid(format!(
                "subtree root {root_vertex} lies beyond depth {depth}"
            )));
        }
        let marks = self.s_subtree_markers(s, depth)?;
        Ok(marks[root_vertex])
    }

    /// Writes the line-oriented text format: header `d n`, then one line per
    /// vertex `index parent spin` (parent `-1` at the root).
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {}", self.tree.order(), self.tree.depth())?;
        for v in self.tree.vertices() {
            let parent = self.tree.parent(v).map(|p| p as i64).unwrap_or(-1);
            writeln!(w, "{} {} {}", v, parent, self.spins[v].as_i8())?;
        }
        Ok(())
    }
}

/// Parses the text format written by [`SpinConfiguration::write_to`].
/// Returns the truncation and spins separately so the caller owns the tree;
/// rebuild the configuration with [`SpinConfiguration::new`]. The parent
/// column must match the canonical breadth-first truncation, which makes the
/// round trip bit-exact.
pub fn read_configuration<R: BufRead>(r: R) -> Result<(TreeTruncation, Vec<Spin>)> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty configuration file".into()))??;
    let mut it = header.split_whitespace();
    let d: u32 = parse_field(it.next(), "d")?;
    let n: u32 = parse_field(it.next(), "n")?;
    if it.next().is_some() {
        return Err(Error::Parse("header must be exactly `d n`".into()));
    }
    let tree = TreeTruncation::new(d, n)?;
    let mut spins = Vec::with_capacity(tree.vertex_count());
    for (v, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let index: usize = parse_field(it.next(), "index")?;
        let parent: i64 = parse_field(it.next(), "parent")?;
        let spin: i8 = parse_field(it.next(), "spin")?;
        if index != v {
            return Err(Error::Parse(format!("expected vertex {v}, found {index}")));
        }
        if v >= tree.vertex_count() {
            return Err(Error::Parse(format!("vertex {v} beyond truncation size")));
        }
        let expect = tree.parent(v).map(|p| p as i64).unwrap_or(-1);
        if parent != expect {
            return Err(Error::Parse(format!(
                "vertex {v}: parent {parent} does not match canonical parent {expect}"
            )));
        }
        spins.push(Spin::from_i8(spin)?);
    }
    if spins.len() != tree.vertex_count() {
        return Err(Error::Parse(format!(
            "expected {} vertex lines, found {}",
            tree.vertex_count(),
            spins.len()
        )));
    }
    Ok((tree, spins))
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, name: &str) -> Result<T> {
    field
        .ok_or_else(|| Error::Parse(format!("missing field `{name}`")))?
        .parse()
        .map_err(|_| Error::Parse(format!("malformed field `{name}`")))
}
