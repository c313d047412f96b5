//! Mesh validity checkers.
//!
//! These run in tests and debugging sessions rather than on the hot path:
//! structural soundness (orientation, edge bookkeeping, hull coverage, Euler
//! characteristic), the conditional Delaunay property, and constraint
//! coverage. Each returns a descriptive error for the first violation found.

use std::collections::HashMap;

use super::predicates::orient2d;
use super::{Mesh, PreparedSites};
use crate::{Error, Result};

/// Checks orientation, edge/facet bookkeeping, the Euler characteristic
/// `V - E + F = 1`, and that the facets exactly tile the convex hull
/// (by comparing total area, relative tolerance `1e-9`).
pub fn check_structure(mesh: &Mesh) -> Result<()> {
    let pos: Vec<[f64; 2]> = mesh.vertices().iter().map(|v| v.pos).collect();
    let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
    let mut facet_area = 0.0;
    for (fi, f) in mesh.facets().iter().enumerate() {
        if orient2d(pos[f[0]], pos[f[1]], pos[f[2]]) <= 0 {
            return Err(Error::Contract(format!(
                "facet {fi} is not counter-clockwise"
            )));
        }
        facet_area += triangle_area(pos[f[0]], pos[f[1]], pos[f[2]]);
        for (u, w) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            if directed.insert((u, w), fi).is_some() {
                return Err(Error::Contract(format!(
                    "directed edge ({u},{w}) used by two facets"
                )));
            }
        }
    }
    // Edge list must be exactly the undirected facet edges, sorted.
    let mut expected: Vec<(usize, usize)> = directed
        .keys()
        .map(|&(u, w)| if u < w { (u, w) } else { (w, u) })
        .collect();
    expected.sort_unstable();
    expected.dedup();
    let listed: Vec<(usize, usize)> = mesh.edges().iter().map(|e| (e.a, e.b)).collect();
    if expected != listed {
        return Err(Error::Contract(
            "edge list does not match facet edges".into(),
        ));
    }

    let v = mesh.vertices().len() as i64;
    let e = mesh.edges().len() as i64;
    let f = mesh.facets().len() as i64;
    if v - e + f != 1 {
        return Err(Error::Contract(format!(
            "Euler characteristic violated: {v} - {e} + {f} != 1"
        )));
    }

    let hull_area = convex_hull_area(&pos);
    let scale = hull_area.max(1.0);
    if (facet_area - hull_area).abs() > 1e-9 * scale {
        return Err(Error::Contract(format!(
            "facets cover area {facet_area} but the hull has area {hull_area}"
        )));
    }
    Ok(())
}

/// Checks the conditional Delaunay property: for every interior edge that is
/// not constrained, the vertex opposite each adjacent facet must not lie
/// inside that facet's circumcircle by more than `eps`. The in-circle
/// determinant is evaluated in plain `f64` on coordinates normalized to the
/// unit square, so `eps` is resolution independent.
pub fn check_delaunay(mesh: &Mesh, eps: f64) -> Result<()> {
    let pos = normalized_positions(mesh);
    let mut across: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for f in mesh.facets() {
        for (u, w, opp) in [
            (f[0], f[1], f[2]),
            (f[1], f[2], f[0]),
            (f[2], f[0], f[1]),
        ] {
            let key = if u < w { (u, w) } else { (w, u) };
            across.entry(key).or_default().push(opp);
        }
    }
    for e in mesh.edges() {
        if e.constrained {
            continue;
        }
        let opps = &across[&(e.a, e.b)];
        if opps.len() != 2 {
            continue; // hull edge
        }
        let (c, d) = (opps[0], opps[1]);
        for (tri, far) in [((e.a, e.b, c), d), ((e.b, e.a, d), c)] {
            let (i, j, k) = tri;
            let det = if orient2d(pos[i], pos[j], pos[k]) > 0 {
                incircle_det_f64(pos[i], pos[j], pos[k], pos[far])
            } else {
                incircle_det_f64(pos[j], pos[i], pos[k], pos[far])
            };
            if det > eps {
                return Err(Error::Contract(format!(
                    "edge ({}, {}) violates the empty-circumcircle property (det = {det:.3e})",
                    e.a, e.b
                )));
            }
        }
    }
    Ok(())
}

/// Checks that every prepared segment appears as a constrained mesh edge and
/// that every preparation chain is fully covered by constrained edges.
pub fn check_constraints(mesh: &Mesh, prepared: &PreparedSites) -> Result<()> {
    let mut flags: HashMap<(usize, usize), bool> = HashMap::new();
    for e in mesh.edges() {
        flags.insert((e.a, e.b), e.constrained);
    }
    let look = |a: usize, b: usize| {
        let key = if a < b { (a, b) } else { (b, a) };
        flags.get(&key).copied()
    };
    for seg in prepared.segments() {
        match look(seg[0], seg[1]) {
            Some(true) => {}
            Some(false) => {
                return Err(Error::Contract(format!(
                    "segment ({}, {}) present but not constrained",
                    seg[0], seg[1]
                )))
            }
            None => {
                return Err(Error::Contract(format!(
                    "segment ({}, {}) missing from the mesh",
                    seg[0], seg[1]
                )))
            }
        }
    }
    for (li, chain) in prepared.chains().iter().enumerate() {
        for w in chain.windows(2) {
            if look(w[0], w[1]) != Some(true) {
                return Err(Error::Contract(format!(
                    "line {li}: chain edge ({}, {}) is not a constrained mesh edge",
                    w[0], w[1]
                )));
            }
        }
    }
    Ok(())
}

/// Number of convex hull vertices (strict turns; collinear boundary points
/// are not counted). Useful with the facet-count identities
/// `F = 2n - 2 - h`, `E = 3n - 3 - h` for point sets in general position.
pub fn hull_vertex_count(points: &[[f64; 2]]) -> usize {
    convex_hull(points).len()
}

fn triangle_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])).abs()
}

fn normalized_positions(mesh: &Mesh) -> Vec<[f64; 2]> {
    let xs = mesh.vertices().iter().map(|v| v.pos[0]);
    let ys = mesh.vertices().iter().map(|v| v.pos[1]);
    let min_x = xs.clone().fold(f64::INFINITY, f64::min);
    let max_x = xs.fold(f64::NEG_INFINITY, f64::max);
    let min_y = ys.clone().fold(f64::INFINITY, f64::min);
    let max_y = ys.fold(f64::NEG_INFINITY, f64::max);
    let scale = (max_x - min_x).max(max_y - min_y).max(f64::MIN_POSITIVE);
    mesh.vertices()
        .iter()
        .map(|v| [(v.pos[0] - min_x) / scale, (v.pos[1] - min_y) / scale])
        .collect()
}

/// Plain floating-point in-circle determinant; positive when `d` is inside
/// the circumcircle of CCW triangle `(a, b, c)`.
fn incircle_det_f64(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> f64 {
    let adx = a[0] - d[0];
    let ady = a[1] - d[1];
    let bdx = b[0] - d[0];
    let bdy = b[1] - d[1];
    let cdx = c[0] - d[0];
    let cdy = c[1] - d[1];
    (adx * adx + ady * ady) * (bdx * cdy - cdx * bdy)
        + (bdx * bdx + bdy * bdy) * (cdx * ady - adx * cdy)
        + (cdx * cdx + cdy * cdy) * (adx * bdy - bdx * ady)
}

/// Andrew's monotone chain; returns hull vertices in CCW order, excluding
/// collinear boundary points.
fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = points.to_vec();
    pts.sort_by(|p, q| p.partial_cmp(q).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn convex_hull_area(points: &[[f64; 2]]) -> f64 {
    let hull = convex_hull(points);
    if hull.len() < 3 {
        return 0.0;
    }
    let mut area = 0.0;
    for i in 0..hull.len() {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        area += a[0] * b[1] - a[1] * b[0];
    }
    0.5 * area.abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hull_of_square_with_interior_and_collinear_points() {
        let pts = [
            [0.0, 0.0],
            [2.0, 0.0],
            [2.0, 2.0],
            [0.0, 2.0],
            [1.0, 1.0], // interior
            [1.0, 0.0], // collinear on the bottom edge
        ];
        assert_eq!(hull_vertex_count(&pts), 4);
        assert!((convex_hull_area(&pts) - 4.0).abs() < 1e-12);
    }
}
