//! Constrained Delaunay triangulation of feature sites in image space.
//!
//! [`prepare_sites`] canonicalizes a [`FeatureSet`] into triangulation sites:
//! nearby sites merge (depths averaged), crossing segments split at their
//! intersection, and sites sitting almost on a segment snap onto it. The
//! result feeds [`triangulate`], an incremental Delaunay construction with
//! lawful edge flips followed by constraint enforcement: for each prepared
//! segment the crossed triangles are removed and the two resulting cavities
//! are retriangulated against the segment. Non-constrained interior edges
//! keep the empty-circumcircle property; constrained edges are exempt.
//!
//! Every geometric decision goes through the robust predicates in
//! [`predicates`], so the construction is deterministic and does not corrupt
//! itself on nearly collinear or nearly cocircular input.

pub mod predicates;
mod prepare;
mod triangulator;
pub mod verify;

pub use prepare::{prepare_sites, DEFAULT_SNAP_TOLERANCE};

use crate::Result;
use predicates::orient2d;

/// A triangulation site: image position plus its depth in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Site {
    pub pos: [f64; 2],
    pub depth: f64,
}

/// Canonicalized triangulation input produced by [`prepare_sites`].
///
/// Guarantees: site positions are pairwise distinct, no segment has zero
/// length, segments meet only at shared endpoint sites, and no site lies in
/// the interior of a segment.
#[derive(Debug, Clone)]
pub struct PreparedSites {
    pub(crate) sites: Vec<Site>,
    pub(crate) segments: Vec<[usize; 2]>,
    pub(crate) chains: Vec<Vec<usize>>,
}

impl PreparedSites {
    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    /// Segments as pairs of site indices; each must appear as a constrained
    /// edge in the triangulation.
    pub fn segments(&self) -> &[[usize; 2]] {
        &self.segments
    }

    /// For each input line feature, the ordered site indices covering it
    /// (start to end, including any split points inserted by preparation).
    /// A line whose endpoints merged into a single site yields a one-element
    /// chain.
    pub fn chains(&self) -> &[Vec<usize>] {
        &self.chains
    }
}

/// Vertex of the triangulation; carries the site depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshVertex {
    pub pos: [f64; 2],
    pub depth: f64,
}

/// Undirected mesh edge between vertex indices `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeshEdge {
    pub a: usize,
    pub b: usize,
    pub constrained: bool,
}

/// A triangulated feature mesh.
///
/// Facets are counter-clockwise vertex triples with pairwise disjoint
/// interiors whose union is the convex hull of the vertices. The edge list
/// is sorted lexicographically; vertex order equals the prepared site order,
/// so meshes built from identical inputs are identical.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub(crate) vertices: Vec<MeshVertex>,
    pub(crate) edges: Vec<MeshEdge>,
    pub(crate) facets: Vec<[usize; 3]>,
}

impl Mesh {
    pub fn vertices(&self) -> &[MeshVertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[MeshEdge] {
        &self.edges
    }

    pub fn facets(&self) -> &[[usize; 3]] {
        &self.facets
    }

    /// True if `p` lies in the closed triangle of facet `f`.
    pub fn facet_contains(&self, f: usize, p: [f64; 2]) -> bool {
        let [a, b, c] = self.facets[f];
        let va = self.vertices[a].pos;
        let vb = self.vertices[b].pos;
        let vc = self.vertices[c].pos;
        orient2d(va, vb, p) >= 0 && orient2d(vb, vc, p) >= 0 && orient2d(vc, va, p) >= 0
    }

    /// Index of the facet containing the pixel, or `None` outside the hull.
    ///
    /// A point on a shared edge or vertex belongs to the lowest-index facet
    /// containing it, which makes lookups on boundaries deterministic.
    pub fn locate(&self, pixel: [f64; 2]) -> Option<usize> {
        (0..self.facets.len()).find(|&f| self.facet_contains(f, pixel))
    }
}

/// Builds the constrained Delaunay triangulation of prepared sites.
///
/// Sites are inserted in index order (ties between cocircular
/// configurations therefore resolve by insertion order), then each prepared
/// segment is enforced as a constrained edge. Fails if fewer than three
/// sites exist or all sites are collinear.
pub fn triangulate(prepared: &PreparedSites) -> Result<Mesh> {
    triangulator::Triangulator::run(prepared)
}
