//! Feature canonicalization ahead of triangulation.
//!
//! Raw features may contain coincident points, crossing segments, and points
//! that sit (within measurement noise) on a segment. All three break the
//! input contract of a constrained triangulation, so they are resolved here,
//! deterministically, before any triangle is built:
//!
//! * sites closer than the snap tolerance merge into one (depth averaged
//!   over everything merged, position of the earliest site kept);
//! * segments that properly cross split at the intersection point; the new
//!   site's depth is the mean of the two segments' linearly interpolated
//!   depths at the crossing;
//! * a site within the snap tolerance of a segment's interior snaps onto
//!   the segment and splits it there.
//!
//! Each resolution step can create work for the others (a snapped site may
//! drift near another site, a split may create a new near-duplicate), so the
//! three passes repeat until a fixed point, with a hard iteration cap. The
//! final state is verified with exact predicates: segments must not cross
//! and no site may lie in a segment's interior; inputs dense enough to defeat
//! the cap are rejected rather than triangulated incorrectly.

use super::predicates::orient2d;
use super::{PreparedSites, Site};
use crate::features::FeatureSet;
use crate::{Error, Result};

/// Default merge/snap radius in pixels.
pub const DEFAULT_SNAP_TOLERANCE: f64 = 0.5;

const MAX_ROUNDS: usize = 16;

struct SiteAcc {
    pos: [f64; 2],
    depth_sum: f64,
    merged: usize,
}

impl SiteAcc {
    fn depth(&self) -> f64 {
        self.depth_sum / self.merged as f64
    }
}

#[derive(Clone)]
struct Segment {
    a: usize,
    b: usize,
    /// Input line features this segment is a piece of.
    origins: Vec<usize>,
}

fn dist(p: [f64; 2], q: [f64; 2]) -> f64 {
    let dx = p[0] - q[0];
    let dy = p[1] - q[1];
    (dx * dx + dy * dy).sqrt()
}

/// Canonicalizes features into triangulation sites and constraint segments.
///
/// `snap_tol` is the merge/snap radius in pixels ([`DEFAULT_SNAP_TOLERANCE`]
/// if unsure). Fails if fewer than three distinct sites remain after
/// merging, or if the geometry cannot be canonicalized (see module docs).
pub fn prepare_sites(features: &FeatureSet, snap_tol: f64) -> Result<PreparedSites> {
    if !(snap_tol.is_finite() && snap_tol >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "snap tolerance must be finite and non-negative, got {snap_tol}"
        )));
    }

    let mut sites: Vec<SiteAcc> = Vec::new();
    let add_site = |sites: &mut Vec<SiteAcc>, pos: [f64; 2], depth: f64| -> usize {
        for (i, s) in sites.iter_mut().enumerate() {
            if dist(s.pos, pos) <= snap_tol {
                s.depth_sum += depth;
                s.merged += 1;
                return i;
            }
        }
        sites.push(SiteAcc {
            pos,
            depth_sum: depth,
            merged: 1,
        });
        sites.len() - 1
    };

    for p in &features.points {
        add_site(&mut sites, [p.u, p.v], p.z);
    }
    let mut line_ends: Vec<(usize, usize)> = Vec::new();
    let mut segments: Vec<Segment> = Vec::new();
    for (li, l) in features.lines.iter().enumerate() {
        let sa = add_site(&mut sites, l.start, l.z_start);
        let sb = add_site(&mut sites, l.end, l.z_end);
        line_ends.push((sa, sb));
        if sa != sb {
            push_segment(&mut segments, sa, sb, &[li]);
        }
    }

    for _ in 0..MAX_ROUNDS {
        let mut changed = false;
        changed |= split_crossings(&mut sites, &mut segments, snap_tol);
        changed |= snap_sites_to_segments(&mut sites, &mut segments, snap_tol);
        changed |= merge_close_sites(&mut sites, &mut segments, &mut line_ends, snap_tol);
        if !changed {
            break;
        }
    }
    check_canonical(&sites, &segments)?;

    if sites.len() < 3 {
        return Err(Error::Degenerate(format!(
            "triangulation needs at least 3 distinct sites, got {} after merging",
            sites.len()
        )));
    }

    let chains = build_chains(&segments, &line_ends, features.lines.len())?;
    let sites = sites
        .iter()
        .map(|s| Site {
            pos: s.pos,
            depth: s.depth(),
        })
        .collect();
    Ok(PreparedSites {
        sites,
        segments: segments.iter().map(|s| [s.a, s.b]).collect(),
        chains,
    })
}

fn push_segment(segments: &mut Vec<Segment>, a: usize, b: usize, origins: &[usize]) {
    debug_assert_ne!(a, b);
    if let Some(existing) = segments
        .iter_mut()
        .find(|s| (s.a, s.b) == (a, b) || (s.a, s.b) == (b, a))
    {
        for &o in origins {
            if !existing.origins.contains(&o) {
                existing.origins.push(o);
            }
        }
        return;
    }
    segments.push(Segment {
        a,
        b,
        origins: origins.to_vec(),
    });
}

/// Splits every properly crossing segment pair at its intersection point.
fn split_crossings(sites: &mut Vec<SiteAcc>, segments: &mut Vec<Segment>, snap_tol: f64) -> bool {
    // (segment index, parameter, new site) collected before any rewrite so
    // all crossings are measured on the same geometry.
    let mut splits: Vec<(usize, f64, usize)> = Vec::new();
    for i in 0..segments.len() {
        for j in (i + 1)..segments.len() {
            let (s1, s2) = (&segments[i], &segments[j]);
            if s1.a == s2.a || s1.a == s2.b || s1.b == s2.a || s1.b == s2.b {
                continue;
            }
            let (a, b) = (sites[s1.a].pos, sites[s1.b].pos);
            let (c, d) = (sites[s2.a].pos, sites[s2.b].pos);
            let o1 = orient2d(a, b, c) as i32;
            let o2 = orient2d(a, b, d) as i32;
            let o3 = orient2d(c, d, a) as i32;
            let o4 = orient2d(c, d, b) as i32;
            if o1 * o2 < 0 && o3 * o4 < 0 {
                let d1 = [b[0] - a[0], b[1] - a[1]];
                let d2 = [d[0] - c[0], d[1] - c[1]];
                let denom = d1[0] * d2[1] - d1[1] * d2[0];
                let t = (((c[0] - a[0]) * d2[1] - (c[1] - a[1]) * d2[0]) / denom).clamp(0.0, 1.0);
                let s = (((c[0] - a[0]) * d1[1] - (c[1] - a[1]) * d1[0]) / denom).clamp(0.0, 1.0);
                let x = [a[0] + t * d1[0], a[1] + t * d1[1]];
                let z1 = sites[s1.a].depth() + t * (sites[s1.b].depth() - sites[s1.a].depth());
                let z2 = sites[s2.a].depth() + s * (sites[s2.b].depth() - sites[s2.a].depth());
                let zx = 0.5 * (z1 + z2);
                let si = add_or_merge(sites, x, zx, snap_tol);
                splits.push((i, t, si));
                splits.push((j, s, si));
            }
        }
    }
    if splits.is_empty() {
        return false;
    }
    apply_splits(segments, &splits);
    true
}

/// Snaps sites lying within tolerance of a segment's interior onto it.
fn snap_sites_to_segments(
    sites: &mut [SiteAcc],
    segments: &mut Vec<Segment>,
    snap_tol: f64,
) -> bool {
    let mut splits: Vec<(usize, f64, usize)> = Vec::new();
    let mut moved = false;
    for si in 0..sites.len() {
        for (gi, seg) in segments.iter().enumerate() {
            if seg.a == si || seg.b == si {
                continue;
            }
            let a = sites[seg.a].pos;
            let b = sites[seg.b].pos;
            let p = sites[si].pos;
            let ab = [b[0] - a[0], b[1] - a[1]];
            let len2 = ab[0] * ab[0] + ab[1] * ab[1];
            let t = ((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2;
            if !(t > 0.0 && t < 1.0) {
                continue;
            }
            let proj = [a[0] + t * ab[0], a[1] + t * ab[1]];
            if dist(p, proj) > snap_tol {
                continue;
            }
            let record = |splits: &mut Vec<(usize, f64, usize)>| {
                if !splits.iter().any(|&(g, _, s)| g == gi && s == si) {
                    splits.push((gi, t, si));
                }
            };
            if p == proj || dist(p, proj) == 0.0 {
                // Exact incidence, common when collinear sub-segments of one
                // line overlap. Nothing moves, so every such segment can be
                // split in the same round.
                record(&mut splits);
            } else {
                sites[si].pos = proj;
                moved = true;
                record(&mut splits);
                // The site moved; re-measure the remaining segments against
                // its new position next round.
                break;
            }
        }
    }
    if splits.is_empty() {
        return moved;
    }
    apply_splits(segments, &splits);
    true
}

/// Re-merges sites that drifted within tolerance of each other, remapping
/// segment endpoints. Returns true if anything merged.
fn merge_close_sites(
    sites: &mut Vec<SiteAcc>,
    segments: &mut Vec<Segment>,
    line_ends: &mut [(usize, usize)],
    snap_tol: f64,
) -> bool {
    let n = sites.len();
    let mut target: Vec<usize> = (0..n).collect();
    let mut any = false;
    for i in 0..n {
        if target[i] != i {
            continue;
        }
        for j in (i + 1)..n {
            if target[j] == j && dist(sites[i].pos, sites[j].pos) <= snap_tol {
                target[j] = i;
                any = true;
            }
        }
    }
    if !any {
        return false;
    }
    // Fold depth sums into merge targets, then compact indices.
    for j in 0..n {
        let t = target[j];
        if t != j {
            sites[t].depth_sum += sites[j].depth_sum;
            sites[t].merged += sites[j].merged;
        }
    }
    let mut remap = vec![usize::MAX; n];
    let mut kept = 0;
    for i in 0..n {
        if target[i] == i {
            remap[i] = kept;
            if kept != i {
                sites.swap(kept, i);
            }
            kept += 1;
        }
    }
    sites.truncate(kept);
    for i in 0..n {
        if target[i] != i {
            remap[i] = remap[target[i]];
        }
    }

    let old: Vec<Segment> = std::mem::take(segments);
    for s in old {
        let a = remap[s.a];
        let b = remap[s.b];
        if a != b {
            push_segment(segments, a, b, &s.origins);
        }
    }
    for ends in line_ends.iter_mut() {
        *ends = (remap[ends.0], remap[ends.1]);
    }
    true
}

fn add_or_merge(sites: &mut Vec<SiteAcc>, pos: [f64; 2], depth: f64, snap_tol: f64) -> usize {
    for (i, s) in sites.iter_mut().enumerate() {
        if dist(s.pos, pos) <= snap_tol {
            s.depth_sum += depth;
            s.merged += 1;
            return i;
        }
    }
    sites.push(SiteAcc {
        pos,
        depth_sum: depth,
        merged: 1,
    });
    sites.len() - 1
}

/// Rewrites segments according to `(segment, parameter, site)` split records.
fn apply_splits(segments: &mut Vec<Segment>, splits: &[(usize, f64, usize)]) {
    let old: Vec<Segment> = std::mem::take(segments);
    for (gi, seg) in old.into_iter().enumerate() {
        let mut cuts: Vec<(f64, usize)> = splits
            .iter()
            .filter(|&&(g, _, _)| g == gi)
            .map(|&(_, t, s)| (t, s))
            .collect();
        if cuts.is_empty() {
            segments.push(seg);
            continue;
        }
        cuts.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        let mut chain = vec![seg.a];
        for (_, s) in cuts {
            if !chain.contains(&s) && s != seg.b {
                chain.push(s);
            }
        }
        chain.push(seg.b);
        for w in chain.windows(2) {
            if w[0] != w[1] {
                push_segment(segments, w[0], w[1], &seg.origins);
            }
        }
    }
}

/// Exact-arithmetic verification of the canonical-form guarantees.
fn check_canonical(sites: &[SiteAcc], segments: &[Segment]) -> Result<()> {
    for i in 0..segments.len() {
        for j in (i + 1)..segments.len() {
            let (s1, s2) = (&segments[i], &segments[j]);
            if s1.a == s2.a || s1.a == s2.b || s1.b == s2.a || s1.b == s2.b {
                continue;
            }
            let (a, b) = (sites[s1.a].pos, sites[s1.b].pos);
            let (c, d) = (sites[s2.a].pos, sites[s2.b].pos);
            let o1 = orient2d(a, b, c) as i32;
            let o2 = orient2d(a, b, d) as i32;
            let o3 = orient2d(c, d, a) as i32;
            let o4 = orient2d(c, d, b) as i32;
            if o1 * o2 < 0 && o3 * o4 < 0 {
                return Err(Error::Degenerate(
                    "crossing segments could not be canonicalized within the iteration budget"
                        .into(),
                ));
            }
        }
    }
    for (si, s) in sites.iter().enumerate() {
        for seg in segments {
            if seg.a == si || seg.b == si {
                continue;
            }
            let a = sites[seg.a].pos;
            let b = sites[seg.b].pos;
            if orient2d(a, b, s.pos) == 0 && within_box(a, b, s.pos) {
                return Err(Error::Degenerate(
                    "a site lies in the interior of a segment after canonicalization".into(),
                ));
            }
        }
    }
    Ok(())
}

/// True if collinear point `p` lies strictly inside the box spanned by `a, b`.
fn within_box(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    let inside = |lo: f64, hi: f64, x: f64| {
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        x > lo && x < hi
    };
    if a[0] != b[0] {
        inside(a[0], b[0], p[0])
    } else {
        inside(a[1], b[1], p[1])
    }
}

/// Reconstructs, per input line feature, the ordered chain of sites covering
/// it by walking the sub-segments that inherited its origin.
fn build_chains(
    segments: &[Segment],
    line_ends: &[(usize, usize)],
    n_lines: usize,
) -> Result<Vec<Vec<usize>>> {
    let mut chains = Vec::with_capacity(n_lines);
    for li in 0..n_lines {
        let (start, end) = line_ends[li];
        if start == end {
            chains.push(vec![start]);
            continue;
        }
        let mine: Vec<&Segment> = segments
            .iter()
            .filter(|s| s.origins.contains(&li))
            .collect();
        let mut chain = vec![start];
        let mut used = vec![false; mine.len()];
        let mut cur = start;
        while cur != end {
            let next = mine.iter().enumerate().find_map(|(k, s)| {
                if used[k] {
                    return None;
                }
                if s.a == cur {
                    Some((k, s.b))
                } else if s.b == cur {
                    Some((k, s.a))
                } else {
                    None
                }
            });
            match next {
                Some((k, v)) => {
                    used[k] = true;
                    chain.push(v);
                    cur = v;
                }
                None => {
                    return Err(Error::Degenerate(format!(
                        "could not reconstruct coverage chain for line feature {li}"
                    )))
                }
            }
        }
        chains.push(chain);
    }
    Ok(chains)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{LineFeature, PointFeature};

    fn fs(points: &[(f64, f64, f64)], lines: &[([f64; 2], [f64; 2], f64, f64)]) -> FeatureSet {
        FeatureSet::new(
            points
                .iter()
                .map(|&(u, v, z)| PointFeature::new(u, v, z).unwrap())
                .collect(),
            lines
                .iter()
                .map(|&(s, e, zs, ze)| LineFeature::new(s, e, zs, ze).unwrap())
                .collect(),
        )
    }

    #[test]
    fn identical_points_merge_with_averaged_depth() {
        let f = fs(
            &[(10.0, 10.0, 1.0), (10.0, 10.0, 3.0), (50.0, 10.0, 2.0), (30.0, 40.0, 2.0)],
            &[],
        );
        let p = prepare_sites(&f, 0.5).unwrap();
        assert_eq!(p.sites().len(), 3);
        assert_eq!(p.sites()[0].depth, 2.0);
        assert_eq!(p.sites()[0].pos, [10.0, 10.0]);
    }

    #[test]
    fn crossing_segments_split_with_mean_interpolated_depth() {
        // Diagonals of a square cross at (1, 1); both interpolate to depth 2
        // there, so the Steiner site's depth is exactly 2.0.
        let f = fs(
            &[],
            &[
                ([0.0, 0.0], [2.0, 2.0], 1.0, 3.0),
                ([0.0, 2.0], [2.0, 0.0], 2.0, 2.0),
            ],
        );
        let p = prepare_sites(&f, 0.25).unwrap();
        assert_eq!(p.sites().len(), 5);
        let steiner = p
            .sites()
            .iter()
            .position(|s| s.pos == [1.0, 1.0])
            .expect("intersection site");
        assert_eq!(p.sites()[steiner].depth, 2.0);
        assert_eq!(p.segments().len(), 4);
        for seg in p.segments() {
            assert!(seg.contains(&steiner));
        }
        // Both coverage chains pass through the Steiner site.
        for chain in p.chains() {
            assert_eq!(chain.len(), 3);
            assert_eq!(chain[1], steiner);
        }
    }

    #[test]
    fn near_segment_point_snaps_onto_it_and_splits() {
        let f = fs(
            &[(5.0, 0.3, 4.0), (100.0, 50.0, 1.0)],
            &[([0.0, 0.0], [10.0, 0.0], 1.0, 2.0)],
        );
        let p = prepare_sites(&f, 0.5).unwrap();
        let snapped = p.sites().iter().find(|s| s.depth == 4.0).unwrap();
        // Projected exactly onto the segment.
        assert_eq!(snapped.pos, [5.0, 0.0]);
        assert_eq!(p.segments().len(), 2);
        assert_eq!(p.chains()[0].len(), 3);
    }

    #[test]
    fn far_point_does_not_snap() {
        let f = fs(
            &[(5.0, 2.0, 4.0), (100.0, 50.0, 1.0)],
            &[([0.0, 0.0], [10.0, 0.0], 1.0, 2.0)],
        );
        let p = prepare_sites(&f, 0.5).unwrap();
        assert_eq!(p.segments().len(), 1);
        assert_eq!(p.sites().len(), 4);
    }

    #[test]
    fn endpoint_touching_segments_share_a_site_without_splitting() {
        let f = fs(
            &[(50.0, 50.0, 1.0)],
            &[
                ([0.0, 0.0], [10.0, 0.0], 1.0, 2.0),
                ([10.0, 0.0], [10.0, 10.0], 2.0, 3.0),
            ],
        );
        let p = prepare_sites(&f, 0.5).unwrap();
        assert_eq!(p.sites().len(), 4);
        assert_eq!(p.segments().len(), 2);
    }

    #[test]
    fn collinear_overlapping_segments_canonicalize_via_endpoint_snaps() {
        let f = fs(
            &[(3.0, 7.0, 1.0)],
            &[
                ([0.0, 0.0], [4.0, 0.0], 1.0, 1.0),
                ([2.0, 0.0], [6.0, 0.0], 1.0, 1.0),
            ],
        );
        let p = prepare_sites(&f, 0.5).unwrap();
        // Shared piece [2,4] must appear exactly once.
        assert_eq!(p.segments().len(), 3);
        check_no_proper_crossings(&p);
    }

    #[test]
    fn too_few_sites_rejected() {
        let f = fs(&[(0.0, 0.0, 1.0), (5.0, 5.0, 1.0)], &[]);
        assert!(matches!(
            prepare_sites(&f, 0.5),
            Err(Error::Degenerate(_))
        ));
        // Three points that merge down to one.
        let f = fs(&[(0.0, 0.0, 1.0), (0.1, 0.1, 1.0), (0.2, 0.0, 1.0)], &[]);
        assert!(prepare_sites(&f, 0.5).is_err());
    }

    #[test]
    fn negative_snap_tolerance_rejected() {
        let f = fs(&[(0.0, 0.0, 1.0)], &[]);
        assert!(prepare_sites(&f, -1.0).is_err());
        assert!(prepare_sites(&f, f64::NAN).is_err());
    }

    #[test]
    fn deterministic_output() {
        let f = fs(
            &[(1.0, 2.0, 1.5), (30.0, 4.0, 2.5), (17.0, 25.0, 3.5)],
            &[([2.0, 2.0], [28.0, 24.0], 1.0, 2.0), ([2.0, 24.0], [28.0, 2.0], 2.0, 1.0)],
        );
        let a = prepare_sites(&f, 0.5).unwrap();
        let b = prepare_sites(&f, 0.5).unwrap();
        assert_eq!(a.sites(), b.sites());
        assert_eq!(a.segments(), b.segments());
        assert_eq!(a.chains(), b.chains());
    }

    fn check_no_proper_crossings(p: &PreparedSites) {
        for i in 0..p.segments().len() {
            for j in (i + 1)..p.segments().len() {
                let [a, b] = p.segments()[i];
                let [c, d] = p.segments()[j];
                if a == c || a == d || b == c || b == d {
                    continue;
                }
                let (pa, pb) = (p.sites()[a].pos, p.sites()[b].pos);
                let (pc, pd) = (p.sites()[c].pos, p.sites()[d].pos);
                let o1 = orient2d(pa, pb, pc) as i32 * orient2d(pa, pb, pd) as i32;
                let o2 = orient2d(pc, pd, pa) as i32 * orient2d(pc, pd, pb) as i32;
                assert!(!(o1 < 0 && o2 < 0), "segments {i} and {j} cross");
            }
        }
    }
}
