//! Incremental construction of the constrained Delaunay triangulation.
//!
//! Phase 1 inserts every site in index order into a growing Delaunay
//! triangulation (no super-structure: points outside the current hull attach
//! to the strictly visible hull edges) and restores the empty-circumcircle
//! property after each insertion with lawful edge flips. Exactly cocircular
//! configurations produce a zero in-circle sign and are left alone, so ties
//! resolve by insertion order.
//!
//! Phase 2 enforces each prepared segment: the triangles crossed by the
//! segment are removed and the two boundary chains of the resulting cavity
//! are retriangulated against the segment, choosing at every step the chain
//! vertex whose circumcircle with the base edge is empty among the remaining
//! chain vertices. This restores the Delaunay property conditioned on the
//! constrained edges.
//!
//! Adjacency is kept in a single directed-edge map (`(a, b)` -> triangle
//! owning that directed edge); a triangle's neighbor across `(a, b)` is the
//! owner of `(b, a)`. The map is the only source of adjacency truth, which
//! keeps the surgery in both phases simple.

use std::collections::{BTreeSet, HashMap, HashSet};

use super::predicates::{in_circle, orient2d};
use super::{Mesh, MeshEdge, MeshVertex, PreparedSites};
use crate::{Error, Result};

struct Tri {
    v: [usize; 3],
    alive: bool,
}

enum Loc {
    Inside(usize),
    OnEdge(usize, usize),
    Outside,
}

enum Class {
    Inside,
    OnEdge(usize),
    Duplicate,
    Step(usize),
}

fn norm(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

pub(super) struct Triangulator {
    pos: Vec<[f64; 2]>,
    tris: Vec<Tri>,
    emap: HashMap<(usize, usize), usize>,
    constrained: HashSet<(usize, usize)>,
    last: usize,
}

impl Triangulator {
    pub(super) fn run(prepared: &PreparedSites) -> Result<Mesh> {
        let n = prepared.sites().len();
        if n < 3 {
            return Err(Error::Degenerate(format!(
                "triangulation needs at least 3 sites, got {n}"
            )));
        }
        let mut tr = Triangulator {
            pos: prepared.sites().iter().map(|s| s.pos).collect(),
            tris: Vec::new(),
            emap: HashMap::new(),
            constrained: HashSet::new(),
            last: 0,
        };
        let seed = tr.bootstrap()?;
        for p in 0..n {
            if p == seed[0] || p == seed[1] || p == seed[2] {
                continue;
            }
            tr.insert(p)?;
        }
        for seg in prepared.segments() {
            tr.enforce_constraint(seg[0], seg[1])?;
        }
        tr.finish(prepared)
    }

    fn o(&self, a: usize, b: usize, c: usize) -> i8 {
        orient2d(self.pos[a], self.pos[b], self.pos[c])
    }

    fn add_tri(&mut self, a: usize, b: usize, c: usize) -> usize {
        debug_assert!(self.o(a, b, c) > 0, "facet ({a},{b},{c}) must be CCW");
        let t = self.tris.len();
        self.tris.push(Tri {
            v: [a, b, c],
            alive: true,
        });
        for (u, w) in [(a, b), (b, c), (c, a)] {
            let prev = self.emap.insert((u, w), t);
            debug_assert!(prev.is_none(), "directed edge ({u},{w}) already present");
        }
        self.last = t;
        t
    }

    fn remove_tri(&mut self, t: usize) {
        let [a, b, c] = self.tris[t].v;
        for (u, w) in [(a, b), (b, c), (c, a)] {
            self.emap.remove(&(u, w));
        }
        self.tris[t].alive = false;
    }

    /// Triangle on the far side of directed edge `(u, w)`.
    fn neighbor_across(&self, u: usize, w: usize) -> Option<usize> {
        self.emap.get(&(w, u)).copied()
    }

    fn third(&self, t: usize, u: usize, w: usize) -> usize {
        let v = self.tris[t].v;
        v.into_iter()
            .find(|&x| x != u && x != w)
            .expect("triangle must have a third vertex")
    }

    /// First triangle from sites 0, 1 and the earliest non-collinear site.
    fn bootstrap(&mut self) -> Result<[usize; 3]> {
        for c in 2..self.pos.len() {
            match self.o(0, 1, c) {
                0 => continue,
                s if s > 0 => {
                    self.add_tri(0, 1, c);
                    return Ok([0, 1, c]);
                }
                _ => {
                    self.add_tri(0, c, 1);
                    return Ok([0, 1, c]);
                }
            }
        }
        Err(Error::Degenerate("all sites are collinear".into()))
    }

    fn classify(&self, t: usize, p: usize) -> Class {
        let [a, b, c] = self.tris[t].v;
        let os = [self.o(a, b, p), self.o(b, c, p), self.o(c, a, p)];
        if let Some(i) = os.iter().position(|&s| s < 0) {
            return Class::Step(i);
        }
        match os.iter().filter(|&&s| s == 0).count() {
            0 => Class::Inside,
            1 => Class::OnEdge(os.iter().position(|&s| s == 0).unwrap()),
            _ => Class::Duplicate,
        }
    }

    fn locate(&self, p: usize) -> Result<Loc> {
        let mut t = if self.tris.get(self.last).is_some_and(|t| t.alive) {
            self.last
        } else {
            self.tris
                .iter()
                .position(|t| t.alive)
                .ok_or_else(|| Error::Contract("locate called with no triangles".into()))?
        };
        // Visibility walk; a step cap guards against cycling, after which an
        // exhaustive scan settles the question.
        let cap = 4 * self.tris.len() + 16;
        for _ in 0..cap {
            match self.classify(t, p) {
                Class::Inside => return Ok(Loc::Inside(t)),
                Class::OnEdge(e) => return Ok(Loc::OnEdge(t, e)),
                Class::Duplicate => {
                    return Err(Error::Contract(format!(
                        "site {p} duplicates an existing vertex"
                    )))
                }
                Class::Step(e) => {
                    let v = self.tris[t].v;
                    let (u, w) = (v[e], v[(e + 1) % 3]);
                    match self.neighbor_across(u, w) {
                        Some(n) => t = n,
                        // Strictly outside a hull edge: outside the hull.
                        None => return Ok(Loc::Outside),
                    }
                }
            }
        }
        for (ti, tri) in self.tris.iter().enumerate() {
            if !tri.alive {
                continue;
            }
            match self.classify(ti, p) {
                Class::Inside => return Ok(Loc::Inside(ti)),
                Class::OnEdge(e) => return Ok(Loc::OnEdge(ti, e)),
                Class::Duplicate => {
                    return Err(Error::Contract(format!(
                        "site {p} duplicates an existing vertex"
                    )))
                }
                Class::Step(_) => {}
            }
        }
        Ok(Loc::Outside)
    }

    fn insert(&mut self, p: usize) -> Result<()> {
        match self.locate(p)? {
            Loc::Inside(t) => {
                let [a, b, c] = self.tris[t].v;
                self.remove_tri(t);
                let t1 = self.add_tri(p, a, b);
                let t2 = self.add_tri(p, b, c);
                let t3 = self.add_tri(p, c, a);
                self.legalize(p, vec![t1, t2, t3]);
            }
            Loc::OnEdge(t, e) => {
                let v = self.tris[t].v;
                let (a, b, c) = (v[e], v[(e + 1) % 3], v[(e + 2) % 3]);
                let nbr = self.neighbor_across(a, b);
                self.remove_tri(t);
                let mut stack = vec![self.add_tri(p, b, c), self.add_tri(p, c, a)];
                if let Some(u) = nbr {
                    let d = self.third(u, a, b);
                    self.remove_tri(u);
                    stack.push(self.add_tri(p, a, d));
                    stack.push(self.add_tri(p, d, b));
                }
                self.legalize(p, stack);
            }
            Loc::Outside => {
                // Attach p to every strictly visible hull edge. Boundary
                // edges are those without a twin in the edge map; interior
                // lies to their left, so p sees an edge when it is strictly
                // to the right.
                let mut visible: Vec<(usize, usize)> = Vec::new();
                for tri in self.tris.iter().filter(|t| t.alive) {
                    let [a, b, c] = tri.v;
                    for (u, w) in [(a, b), (b, c), (c, a)] {
                        if !self.emap.contains_key(&(w, u))
                            && orient2d(self.pos[u], self.pos[w], self.pos[p]) < 0
                        {
                            visible.push((u, w));
                        }
                    }
                }
                if visible.is_empty() {
                    return Err(Error::Contract(format!(
                        "site {p} is outside the hull but sees no hull edge"
                    )));
                }
                let stack: Vec<usize> = visible
                    .into_iter()
                    .map(|(u, w)| self.add_tri(w, u, p))
                    .collect();
                self.legalize(p, stack);
            }
        }
        Ok(())
    }

    /// Lawson legalization: each stacked triangle contains `p`; its edge
    /// opposite `p` is flipped if the far vertex lies strictly inside the
    /// circumcircle, and the two replacement triangles are re-checked.
    fn legalize(&mut self, p: usize, mut stack: Vec<usize>) {
        while let Some(t) = stack.pop() {
            if !self.tris[t].alive {
                continue;
            }
            let v = self.tris[t].v;
            let Some(i) = v.iter().position(|&x| x == p) else {
                continue;
            };
            let a = v[(i + 1) % 3];
            let b = v[(i + 2) % 3];
            let Some(u) = self.neighbor_across(a, b) else {
                continue;
            };
            let d = self.third(u, a, b);
            if in_circle(self.pos[p], self.pos[a], self.pos[b], self.pos[d]) > 0 {
                self.remove_tri(t);
                self.remove_tri(u);
                stack.push(self.add_tri(p, a, d));
                stack.push(self.add_tri(p, d, b));
            }
        }
    }

    fn enforce_constraint(&mut self, a: usize, b: usize) -> Result<()> {
        if self.emap.contains_key(&(a, b)) || self.emap.contains_key(&(b, a)) {
            self.constrained.insert(norm(a, b));
            return Ok(());
        }

        // The segment leaves `a` through the interior of exactly one
        // incident triangle (a, x, y): walking CCW from a the segment must
        // have x strictly on its right and y strictly on its left.
        let mut entry = None;
        for (ti, tri) in self.tris.iter().enumerate() {
            if !tri.alive {
                continue;
            }
            let Some(i) = tri.v.iter().position(|&x| x == a) else {
                continue;
            };
            let x = tri.v[(i + 1) % 3];
            let y = tri.v[(i + 2) % 3];
            if self.o(a, b, x) < 0 && self.o(a, b, y) > 0 {
                entry = Some((ti, y, x));
                break;
            }
        }
        let (t0, mut l, mut r) = entry.ok_or_else(|| {
            Error::Contract(format!("no triangle at site {a} is crossed toward {b}"))
        })?;

        // Invariant: the current crossed edge has left vertex `l` and right
        // vertex `r` relative to the directed line a->b, and the triangle
        // just crossed owns the directed edge (r, l).
        let mut crossed = vec![t0];
        let mut left_chain = vec![l];
        let mut right_chain = vec![r];
        loop {
            let u = self.neighbor_across(r, l).ok_or_else(|| {
                Error::Contract("constraint walk escaped the hull".into())
            })?;
            crossed.push(u);
            let z = self.third(u, l, r);
            if z == b {
                break;
            }
            match self.o(a, b, z) {
                s if s > 0 => {
                    left_chain.push(z);
                    l = z;
                }
                s if s < 0 => {
                    right_chain.push(z);
                    r = z;
                }
                _ => {
                    return Err(Error::Contract(format!(
                        "vertex {z} lies exactly on constraint ({a},{b})"
                    )))
                }
            }
            if self.constrained.contains(&norm(l, r)) {
                return Err(Error::Degenerate(format!(
                    "constraint ({a},{b}) crosses an existing constrained edge"
                )));
            }
        }

        for &t in &crossed {
            self.remove_tri(t);
        }
        self.fill_pseudo(a, b, &left_chain);
        right_chain.reverse();
        self.fill_pseudo(b, a, &right_chain);
        self.constrained.insert(norm(a, b));
        Ok(())
    }

    /// Retriangulates a cavity chain (all vertices strictly left of the
    /// directed base `p -> q`) against that base.
    fn fill_pseudo(&mut self, p: usize, q: usize, w: &[usize]) {
        if w.is_empty() {
            return;
        }
        let mut ci = 0;
        for j in 1..w.len() {
            if in_circle(
                self.pos[p],
                self.pos[q],
                self.pos[w[ci]],
                self.pos[w[j]],
            ) > 0
            {
                ci = j;
            }
        }
        self.fill_pseudo(p, w[ci], &w[..ci]);
        self.fill_pseudo(w[ci], q, &w[ci + 1..]);
        self.add_tri(p, q, w[ci]);
    }

    fn finish(self, prepared: &PreparedSites) -> Result<Mesh> {
        let facets: Vec<[usize; 3]> = self
            .tris
            .iter()
            .filter(|t| t.alive)
            .map(|t| t.v)
            .collect();
        let mut edge_set: BTreeSet<(usize, usize)> = BTreeSet::new();
        for f in &facets {
            for (u, w) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                edge_set.insert(norm(u, w));
            }
        }
        for seg in prepared.segments() {
            if !edge_set.contains(&norm(seg[0], seg[1])) {
                return Err(Error::Contract(format!(
                    "constraint ({}, {}) missing from the final mesh",
                    seg[0], seg[1]
                )));
            }
        }
        let edges = edge_set
            .into_iter()
            .map(|(a, b)| MeshEdge {
                a,
                b,
                constrained: self.constrained.contains(&(a, b)),
            })
            .collect();
        let vertices = prepared
            .sites()
            .iter()
            .map(|s| MeshVertex {
                pos: s.pos,
                depth: s.depth,
            })
            .collect();
        Ok(Mesh {
            vertices,
            edges,
            facets,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::{prepare_sites, triangulate, verify};
    use crate::features::{FeatureSet, LineFeature, PointFeature};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn points(pts: &[(f64, f64)]) -> FeatureSet {
        FeatureSet::new(
            pts.iter()
                .map(|&(u, v)| PointFeature::new(u, v, 1.0 + u * 0.01 + v * 0.001).unwrap())
                .collect(),
            vec![],
        )
    }

    #[test]
    fn triangle_of_three_sites() {
        let p = prepare_sites(&points(&[(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)]), 0.5).unwrap();
        let m = triangulate(&p).unwrap();
        assert_eq!(m.facets().len(), 1);
        assert_eq!(m.edges().len(), 3);
        verify::check_structure(&m).unwrap();
        verify::check_delaunay(&m, 1e-9).unwrap();
    }

    #[test]
    fn unit_square_ties_break_by_insertion_order() {
        // All four corners are cocircular; the diagonal that appears is the
        // one created by inserting the fourth corner, never flipped.
        let p = prepare_sites(
            &points(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]),
            0.25,
        )
        .unwrap();
        let m = triangulate(&p).unwrap();
        assert_eq!(m.facets().len(), 2);
        assert_eq!(m.edges().len(), 5);
        assert!(m.edges().iter().any(|e| (e.a, e.b) == (0, 2)), "diagonal 0-2");
        let m2 = triangulate(&p).unwrap();
        assert_eq!(m, m2);
    }

    #[test]
    fn constrained_diagonal_overrides_delaunay_choice() {
        let fs = FeatureSet::new(
            vec![
                PointFeature::new(0.0, 0.0, 1.0).unwrap(),
                PointFeature::new(1.0, 0.0, 1.0).unwrap(),
                PointFeature::new(1.0, 1.0, 1.0).unwrap(),
                PointFeature::new(0.0, 1.0, 1.0).unwrap(),
            ],
            vec![LineFeature::new([1.0, 0.0], [0.0, 1.0], 2.0, 2.0).unwrap()],
        );
        let p = prepare_sites(&fs, 0.25).unwrap();
        let m = triangulate(&p).unwrap();
        assert_eq!(m.facets().len(), 2);
        let diag = m
            .edges()
            .iter()
            .find(|e| (e.a, e.b) == (1, 3))
            .expect("constrained diagonal present");
        assert!(diag.constrained);
        assert!(!m.edges().iter().any(|e| (e.a, e.b) == (0, 2)));
        verify::check_structure(&m).unwrap();
        verify::check_delaunay(&m, 1e-9).unwrap();
        verify::check_constraints(&m, &p).unwrap();
    }

    #[test]
    fn collinear_sites_rejected() {
        let p = prepare_sites(
            &points(&[(0.0, 0.0), (5.0, 0.0), (10.0, 0.0), (15.0, 0.0)]),
            0.25,
        )
        .unwrap();
        assert!(triangulate(&p).is_err());
    }

    #[test]
    fn integer_grid_hits_on_edge_insertions() {
        // A 4x4 integer grid exercises exactly-on-edge and cocircular cases.
        let mut pts = Vec::new();
        for y in 0..4 {
            for x in 0..4 {
                pts.push((x as f64, y as f64));
            }
        }
        let p = prepare_sites(&points(&pts), 0.25).unwrap();
        let m = triangulate(&p).unwrap();
        verify::check_structure(&m).unwrap();
        verify::check_delaunay(&m, 1e-9).unwrap();
        // 16 vertices, hull is the 12 boundary points: F = 2n - 2 - h = 18.
        assert_eq!(m.facets().len(), 18);
        assert_eq!(m.edges().len(), 33);
    }

    #[test]
    fn random_sites_with_constraints_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for round in 0..25 {
            let n = rng.gen_range(5..60);
            let mut pts = Vec::new();
            for _ in 0..n {
                pts.push((rng.gen_range(0.0..320.0), rng.gen_range(0.0..240.0)));
            }
            let mut lines = Vec::new();
            for _ in 0..rng.gen_range(0..6) {
                let a = [rng.gen_range(0.0..320.0), rng.gen_range(0.0..240.0)];
                let b = [rng.gen_range(0.0..320.0), rng.gen_range(0.0..240.0)];
                if a != b {
                    lines.push(LineFeature::new(a, b, rng.gen_range(0.5..5.0), rng.gen_range(0.5..5.0)).unwrap());
                }
            }
            let fs = FeatureSet::new(
                pts.iter()
                    .map(|&(u, v)| PointFeature::new(u, v, 2.0).unwrap())
                    .collect(),
                lines,
            );
            let p = match prepare_sites(&fs, 0.5) {
                Ok(p) => p,
                Err(_) => continue,
            };
            let m = triangulate(&p).unwrap();
            verify::check_structure(&m)
                .unwrap_or_else(|e| panic!("round {round}: {e}"));
            verify::check_delaunay(&m, 1e-9)
                .unwrap_or_else(|e| panic!("round {round}: {e}"));
            verify::check_constraints(&m, &p)
                .unwrap_or_else(|e| panic!("round {round}: {e}"));
        }
    }
}
