//! Knot vectors on the parameter interval and their adaptive refinement.
//!
//! A [`KnotVector`] is stored through its breakpoints and multiplicities; the
//! full clamped knot array is cached. Both end nodes carry multiplicity
//! `p + 1` for open and closed curves alike; on closed curves continuity
//! across the seam is imposed by the wrapped basis, see [`crate::basis`].
//!
//! Breakpoints are dyadic refinements of the initial ones, so all midpoints
//! are exact in floating point and nodes can be compared with `==`.

use crate::basis;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct KnotVector {
    degree: usize,
    nodes: Vec<f64>,
    mult: Vec<usize>,
    closed: bool,
    weights: Vec<f64>,
    knots: Vec<f64>,
}

impl KnotVector {
    /// Validates and builds a knot vector.
    ///
    /// `weights` holds one positive weight per B-spline, i.e. `N` values with
    /// `N = sum_{j >= 1} m_j`.
    pub fn new(
        nodes: Vec<f64>,
        mult: Vec<usize>,
        degree: usize,
        closed: bool,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if degree == 0 {
            return Err(Error::Invalid("degree must be positive".into()));
        }
        if nodes.len() < 2 {
            return Err(Error::Invalid("at least two breakpoints are required".into()));
        }
        if mult.len() != nodes.len() {
            return Err(Error::Invalid(format!(
                "{} multiplicities for {} breakpoints",
                mult.len(),
                nodes.len()
            )));
        }
        for j in 1..nodes.len() {
            if !(nodes[j] > nodes[j - 1]) {
                return Err(Error::NonMonotone(j));
            }
        }
        let n = nodes.len() - 1;
        for (j, &m) in mult.iter().enumerate() {
            let ok = if j == 0 || j == n { m == degree + 1 } else { (1..=degree).contains(&m) };
            if !ok {
                return Err(Error::Multiplicity { index: j, mult: m });
            }
        }
        let dim: usize = mult[1..].iter().sum();
        if weights.len() != dim {
            return Err(Error::WeightCount { expected: dim, got: weights.len() });
        }
        if let Some(i) = weights.iter().position(|&w| !(w > 0.0)) {
            return Err(Error::NonPositiveWeight(i));
        }
        if closed && weights[0] != weights[dim - 1] {
            return Err(Error::SeamWeights);
        }
        let mut knots = Vec::with_capacity(dim + degree + 1);
        for (z, &m) in nodes.iter().zip(&mult) {
            knots.extend(std::iter::repeat(*z).take(m));
        }
        Ok(Self { degree, nodes, mult, closed, weights, knots })
    }

    /// Knot vector with unit weights.
    pub fn polynomial(nodes: Vec<f64>, mult: Vec<usize>, degree: usize, closed: bool) -> Result<Self> {
        let dim: usize = mult.iter().skip(1).sum();
        Self::new(nodes, mult, degree, closed, vec![1.0; dim])
    }

    /// Uniform mesh of `n` elements on `[0, 1]` with interior multiplicity `m`.
    pub fn uniform(degree: usize, n: usize, m: usize, closed: bool) -> Result<Self> {
        let nodes: Vec<f64> = (0..=n).map(|j| j as f64 / n as f64).collect();
        let mut mult = vec![m; n + 1];
        mult[0] = degree + 1;
        mult[n] = degree + 1;
        Self::polynomial(nodes, mult, degree, closed)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn mult(&self) -> &[usize] {
        &self.mult
    }

    pub fn closed(&self) -> bool {
        self.closed
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Full clamped knot array of length `N + p + 1`.
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number `N` of degree-`p` B-splines.
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.nodes[0], *self.nodes.last().unwrap())
    }

    pub fn n_elements(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn element(&self, j: usize) -> (f64, f64) {
        (self.nodes[j], self.nodes[j + 1])
    }

    pub fn element_lengths(&self) -> Vec<f64> {
        self.nodes.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Index `s` of the knot span of element `j`, i.e. `t_s = z_j < t_{s+1}`.
    pub fn element_span(&self, j: usize) -> usize {
        self.degree + self.mult[1..=j].iter().sum::<usize>()
    }

    /// Spans of all elements.
    pub fn element_spans(&self) -> Vec<usize> {
        let mut s = self.degree;
        let mut out = Vec::with_capacity(self.n_elements());
        for j in 0..self.n_elements() {
            if j > 0 {
                s += self.mult[j];
            }
            out.push(s);
        }
        out
    }

    /// True if all weights equal one.
    pub fn is_polynomial(&self) -> bool {
        self.weights.iter().all(|&w| w == 1.0)
    }

    /// Index of the element containing `t` (right-continuous, `b` maps to the
    /// last element).
    pub fn element_of(&self, t: f64) -> usize {
        let n = self.n_elements();
        match self.nodes.partition_point(|&z| z <= t) {
            0 => 0,
            k if k > n => n - 1,
            k => k - 1,
        }
    }

    /// Copy with the weights replaced, validated.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        Self::new(self.nodes.clone(), self.mult.clone(), self.degree, self.closed, weights)
    }

    /// Knot vector with the same breakpoints and multiplicities but a
    /// different degree: end multiplicities follow the degree, interior
    /// multiplicities are kept.
    pub fn with_degree(&self, degree: usize) -> Result<Self> {
        let n = self.n_elements();
        let mut mult = self.mult.clone();
        mult[0] = degree + 1;
        mult[n] = degree + 1;
        Self::polynomial(self.nodes.clone(), mult, degree, self.closed)
    }

    /// Knot vector on new breakpoints whose weights are obtained by knot
    /// insertion, so the weight function is unchanged.
    pub fn refined_to(&self, nodes: Vec<f64>, mult: Vec<usize>) -> Result<Self> {
        let dim: usize = mult.iter().skip(1).sum();
        let fine = Self::new(nodes, mult, self.degree, self.closed, vec![1.0; dim])?;
        if self.is_polynomial() {
            // Still check nestedness.
            new_knot_nodes(self, &fine)?;
            return Ok(fine);
        }
        let w = basis::propagate_weights(self, &fine)?;
        // Clamp the seam weights to the exact coarse values (end weights are
        // untouched by insertion, this only removes rounding).
        let mut w = w;
        w[0] = self.weights[0];
        let last = w.len() - 1;
        w[last] = self.weights[self.weights.len() - 1];
        fine.with_weights(w)
    }

    /// Bisects the given elements (midpoints inserted with multiplicity one).
    pub fn bisect(&self, elements: &[usize]) -> Result<Self> {
        let mut flag = vec![false; self.n_elements()];
        for &e in elements {
            if e >= flag.len() {
                return Err(Error::IndexOutOfRange { index: e, len: flag.len() });
            }
            flag[e] = true;
        }
        let (nodes, mult) = self.bisected_nodes(&flag, &self.mult);
        self.refined_to(nodes, mult)
    }

    fn bisected_nodes(&self, flag: &[bool], mult: &[usize]) -> (Vec<f64>, Vec<usize>) {
        let mut nodes = Vec::with_capacity(self.nodes.len() + flag.len());
        let mut m = Vec::with_capacity(nodes.capacity());
        for j in 0..self.n_elements() {
            nodes.push(self.nodes[j]);
            m.push(mult[j]);
            if flag[j] {
                nodes.push(0.5 * (self.nodes[j] + self.nodes[j + 1]));
                m.push(1);
            }
        }
        nodes.push(*self.nodes.last().unwrap());
        m.push(*mult.last().unwrap());
        (nodes, m)
    }

    /// Node indices used for marking: `1..=n` on closed curves (`n` is the
    /// seam), `0..=n` on open curves.
    pub fn marking_nodes(&self) -> std::ops::RangeInclusive<usize> {
        let n = self.n_elements();
        if self.closed {
            1..=n
        } else {
            0..=n
        }
    }

    /// Elements containing node `j` (node `0` and node `n` coincide on closed
    /// curves).
    pub fn node_patch(&self, j: usize) -> Vec<usize> {
        let n = self.n_elements();
        if self.closed && (j == 0 || j == n) {
            if n == 1 {
                vec![0]
            } else {
                vec![n - 1, 0]
            }
        } else if j == 0 {
            vec![0]
        } else if j == n {
            vec![n - 1]
        } else {
            vec![j - 1, j]
        }
    }

    /// Adaptive refinement from a set of marked nodes.
    ///
    /// Elements with both end nodes marked are bisected. Every other marked
    /// node has its multiplicity increased when it is not an end point of the
    /// interval and its multiplicity is below `p`; otherwise the elements
    /// containing it are bisected. Further bisections then restore
    /// `mesh_ratio <= 2 kappa0`.
    pub fn refine(&self, marked_nodes: &[usize], kappa0: f64) -> Result<Refinement> {
        if marked_nodes.is_empty() {
            return Err(Error::NoRefinement);
        }
        let n = self.n_elements();
        let mut node_marked = vec![false; n + 1];
        for &j in marked_nodes {
            if j > n {
                return Err(Error::IndexOutOfRange { index: j, len: n + 1 });
            }
            if self.closed && (j == 0 || j == n) {
                node_marked[0] = true;
                node_marked[n] = true;
            } else {
                node_marked[j] = true;
            }
        }
        let mut elem_marked = vec![false; n];
        let mut used = vec![false; n + 1];
        for e in 0..n {
            if node_marked[e] && node_marked[e + 1] {
                elem_marked[e] = true;
                used[e] = true;
                used[e + 1] = true;
            }
        }
        if self.closed {
            let seam = used[0] || used[n];
            used[0] = seam;
            used[n] = seam;
        }
        let mut mult = self.mult.clone();
        for j in 0..=n {
            if !node_marked[j] || used[j] || (self.closed && j == 0) {
                continue;
            }
            let interior = j != 0 && j != n;
            if interior && mult[j] < self.degree {
                mult[j] += 1;
            } else {
                for e in self.node_patch(j) {
                    elem_marked[e] = true;
                }
            }
        }
        let (mut nodes, mut mult) = self.bisected_nodes(&elem_marked, &mult);
        // Closure: bisect the larger element of violating neighbours.
        let bound = 2.0 * kappa0 * (1.0 + 1e-12);
        loop {
            let h: Vec<f64> = nodes.windows(2).map(|w| w[1] - w[0]).collect();
            let ne = h.len();
            let mut flag = vec![false; ne];
            let mut any = false;
            let mut check = |a: usize, b: usize, flag: &mut Vec<bool>| {
                if h[a] > bound * h[b] {
                    flag[a] = true;
                    any = true;
                } else if h[b] > bound * h[a] {
                    flag[b] = true;
                    any = true;
                }
            };
            for e in 0..ne.saturating_sub(1) {
                check(e, e + 1, &mut flag);
            }
            if self.closed && ne > 1 {
                check(ne - 1, 0, &mut flag);
            }
            if !any {
                break;
            }
            let mut nn = Vec::with_capacity(nodes.len() * 2);
            let mut nm = Vec::with_capacity(nodes.len() * 2);
            for e in 0..ne {
                nn.push(nodes[e]);
                nm.push(mult[e]);
                if flag[e] {
                    nn.push(0.5 * (nodes[e] + nodes[e + 1]));
                    nm.push(1);
                }
            }
            nn.push(nodes[ne]);
            nm.push(mult[ne]);
            nodes = nn;
            mult = nm;
        }
        let fine = self.refined_to(nodes, mult)?;
        let new_nodes = new_knot_nodes(self, &fine)?;
        Ok(Refinement { fine, new_nodes })
    }
}

/// Result of one adaptive refinement step.
#[derive(Clone, Debug)]
pub struct Refinement {
    pub fine: KnotVector,
    /// New nodes plus old nodes whose multiplicity increased.
    pub new_nodes: Vec<f64>,
}

/// Maximal ratio of parameter lengths of neighbouring elements (including
/// the pair across the seam of a closed curve).
pub fn mesh_ratio(kv: &KnotVector) -> f64 {
    let h = kv.element_lengths();
    let mut r: f64 = 1.0;
    for w in h.windows(2) {
        r = r.max(w[0] / w[1]).max(w[1] / w[0]);
    }
    if kv.closed() && h.len() > 1 {
        let (a, b) = (h[0], h[h.len() - 1]);
        r = r.max(a / b).max(b / a);
    }
    r
}

/// Nodes of `fine` that are new or have a larger multiplicity than in
/// `coarse`.
pub fn new_knot_nodes(coarse: &KnotVector, fine: &KnotVector) -> Result<Vec<f64>> {
    if coarse.degree() != fine.degree()
        || coarse.closed() != fine.closed()
        || coarse.interval() != fine.interval()
    {
        return Err(Error::NotNested);
    }
    let mut out = Vec::new();
    let (cn, cm) = (coarse.nodes(), coarse.mult());
    let mut i = 0;
    for (&z, &m) in fine.nodes().iter().zip(fine.mult()) {
        if i < cn.len() && cn[i] < z {
            // Coarse node missing from the fine mesh.
            return Err(Error::NotNested);
        }
        if i < cn.len() && cn[i] == z {
            if m < cm[i] {
                return Err(Error::NotNested);
            }
            if m > cm[i] {
                out.push(z);
            }
            i += 1;
        } else {
            out.push(z);
        }
    }
    if i != cn.len() {
        return Err(Error::NotNested);
    }
    Ok(out)
}

/// Sequence of nested knot vectors produced by refinement.
#[derive(Clone, Debug)]
pub struct Hierarchy {
    levels: Vec<KnotVector>,
    new_nodes: Vec<Vec<f64>>,
}

impl Hierarchy {
    pub fn new(initial: KnotVector) -> Self {
        Self { levels: vec![initial], new_nodes: vec![Vec::new()] }
    }

    /// Appends a finer level, checking nestedness.
    pub fn push(&mut self, fine: KnotVector) -> Result<()> {
        let nn = new_knot_nodes(self.finest(), &fine)?;
        self.levels.push(fine);
        self.new_nodes.push(nn);
        Ok(())
    }

    pub fn push_refinement(&mut self, r: Refinement) {
        self.levels.push(r.fine);
        self.new_nodes.push(r.new_nodes);
    }

    pub fn levels(&self) -> &[KnotVector] {
        &self.levels
    }

    pub fn level(&self, l: usize) -> &KnotVector {
        &self.levels[l]
    }

    pub fn finest(&self) -> &KnotVector {
        self.levels.last().unwrap()
    }

    /// `new_nodes(l)` for `l >= 1`; empty for level 0.
    pub fn new_nodes(&self, l: usize) -> &[f64] {
        &self.new_nodes[l]
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}
