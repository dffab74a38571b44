//! Piecewise-monotone correspondence between an original text and its
//! normalized ("clean") version.
//!
//! A map is a list of segments that tile both texts in order. `Copy`
//! segments relate characters one to one and can be cut anywhere; every
//! other segment is atomic: touching any part of its source side selects
//! its whole target side.

use crate::span::TextRange;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SegmentKind {
    Copy,
    Replace,
    /// Material present only in the original text.
    Delete,
    /// Material present only in the clean text.
    Insert,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    pub orig: TextRange,
    pub clean: TextRange,
    pub kind: SegmentKind,
}

/// Which side of the map a range is expressed on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// original → clean
    Forward,
    /// clean → original
    Backward,
}

/// Result of projecting a range through a map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Projection {
    Mapped(TextRange),
    /// Nothing on the target side derives from the source range; `at` is
    /// the target position where the material used to be.
    Dropped {
        at: usize,
    },
}

impl Projection {
    pub fn mapped(self) -> Option<TextRange> {
        match self {
            Projection::Mapped(r) => Some(r),
            Projection::Dropped { .. } => None,
        }
    }

    pub fn is_dropped(&self) -> bool {
        matches!(self, Projection::Dropped { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OffsetMapError {
    #[error("range [{start}, {end}) out of bounds for text of {len} chars")]
    OutOfBounds {
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("cannot compose: first map yields {left} chars, second expects {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("segment {index} breaks the tiling: {reason}")]
    BadSegment { index: usize, reason: &'static str },
}

/// One tiling of both texts by segments.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct Tiling {
    segments: Vec<Segment>,
    orig_len: usize,
    clean_len: usize,
}

impl Tiling {
    fn from_segments(segments: &[Segment]) -> Result<Self, OffsetMapError> {
        let mut b = MapBuilder::new();
        for (index, seg) in segments.iter().enumerate() {
            let bad = |reason| OffsetMapError::BadSegment { index, reason };
            if seg.orig.start != b.orig_pos || seg.clean.start != b.clean_pos {
                return Err(bad("not contiguous with the previous segment"));
            }
            if seg.orig.end < seg.orig.start || seg.clean.end < seg.clean.start {
                return Err(bad("reversed range"));
            }
            let (o, c) = (seg.orig.len(), seg.clean.len());
            match seg.kind {
                SegmentKind::Copy if o != c => return Err(bad("copy lengths differ")),
                SegmentKind::Copy => b.copy(o),
                SegmentKind::Replace if o == 0 || c == 0 => {
                    return Err(bad("replace with an empty side"))
                }
                SegmentKind::Replace => b.replace(o, c),
                SegmentKind::Delete if o == 0 || c != 0 => return Err(bad("malformed delete")),
                SegmentKind::Delete => b.delete(o),
                SegmentKind::Insert if o != 0 || c == 0 => return Err(bad("malformed insert")),
                SegmentKind::Insert => b.insert(c),
            }
        }
        Ok(b.tiling())
    }

    fn is_identity(&self) -> bool {
        self.segments.iter().all(|s| s.kind == SegmentKind::Copy)
    }

    fn inverse(&self) -> Tiling {
        Tiling {
            segments: self
                .segments
                .iter()
                .map(|s| Segment {
                    orig: s.clean,
                    clean: s.orig,
                    kind: match s.kind {
                        SegmentKind::Delete => SegmentKind::Insert,
                        SegmentKind::Insert => SegmentKind::Delete,
                        k => k,
                    },
                })
                .collect(),
            orig_len: self.clean_len,
            clean_len: self.orig_len,
        }
    }

    fn sides(
        &self,
        dir: Direction,
    ) -> (
        impl Fn(&Segment) -> TextRange,
        impl Fn(&Segment) -> TextRange,
        usize,
        usize,
    ) {
        let forward = dir == Direction::Forward;
        let src = move |s: &Segment| if forward { s.orig } else { s.clean };
        let dst = move |s: &Segment| if forward { s.clean } else { s.orig };
        let (src_len, dst_len) = if forward {
            (self.orig_len, self.clean_len)
        } else {
            (self.clean_len, self.orig_len)
        };
        (src, dst, src_len, dst_len)
    }

    fn project(&self, dir: Direction, range: TextRange) -> Result<Projection, OffsetMapError> {
        let (src, dst, src_len, _) = self.sides(dir);
        if range.start > range.end || range.end > src_len {
            return Err(OffsetMapError::OutOfBounds {
                start: range.start,
                end: range.end,
                len: src_len,
            });
        }
        if range.is_empty() {
            return self.project_point(dir, range.start);
        }
        let (s, e) = (range.start, range.end);
        let first = self.segments.partition_point(|seg| src(seg).end <= s);
        let mut lo = usize::MAX;
        let mut hi = 0usize;
        let mut dropped_at = None;
        for seg in &self.segments[first..] {
            let (sr, dr) = (src(seg), dst(seg));
            if sr.start >= e {
                break;
            }
            if dr.is_empty() {
                dropped_at.get_or_insert(dr.start);
                continue;
            }
            let (from, to) = if seg.kind == SegmentKind::Copy {
                let from = dr.start + (s.max(sr.start) - sr.start);
                let to = dr.start + (e.min(sr.end) - sr.start);
                (from, to)
            } else {
                (dr.start, dr.end)
            };
            lo = lo.min(from);
            hi = hi.max(to);
        }
        if lo < hi {
            Ok(Projection::Mapped(TextRange::new(lo, hi)))
        } else {
            Ok(Projection::Dropped {
                at: dropped_at.expect("a non-empty range meets at least one segment"),
            })
        }
    }

    fn project_point(&self, dir: Direction, pos: usize) -> Result<Projection, OffsetMapError> {
        let (src, dst, src_len, dst_len) = self.sides(dir);
        if pos > src_len {
            return Err(OffsetMapError::OutOfBounds {
                start: pos,
                end: pos,
                len: src_len,
            });
        }
        let idx = self.segments.partition_point(|seg| src(seg).end <= pos);
        if let Some(seg) = self.segments.get(idx) {
            let (sr, dr) = (src(seg), dst(seg));
            if sr.start < pos && pos < sr.end {
                return Ok(match seg.kind {
                    SegmentKind::Copy => Projection::Dropped {
                        at: dr.start + (pos - sr.start),
                    },
                    _ if dr.is_empty() => Projection::Dropped { at: dr.start },
                    _ => Projection::Mapped(dr),
                });
            }
        }
        // Start early enough to see inserts sitting exactly at `pos`.
        let from = self.segments.partition_point(|seg| src(seg).end < pos);
        let at = self.segments[from..]
            .iter()
            .find(|seg| src(seg).start >= pos)
            .map(|seg| dst(seg).start)
            .unwrap_or(dst_len);
        Ok(Projection::Dropped { at })
    }
}

/// Original-text ↔ clean-text correspondence.
///
/// Internally a chain of tilings, one per non-trivial rewrite, so that a map
/// built with [`OffsetMap::compose`] projects exactly like its parts applied
/// in turn. [`OffsetMap::segments`] flattens the chain into a single tiling
/// for inspection.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OffsetMap {
    orig_len: usize,
    clean_len: usize,
    /// Never contains an all-copy tiling.
    stages: Vec<Tiling>,
    flat: Tiling,
}

impl Default for OffsetMap {
    fn default() -> Self {
        OffsetMap::identity(0)
    }
}

impl OffsetMap {
    pub fn identity(len: usize) -> Self {
        let mut b = MapBuilder::new();
        b.copy(len);
        b.finish()
    }

    fn from_tiling(tiling: Tiling) -> Self {
        let stages = if tiling.is_identity() {
            Vec::new()
        } else {
            vec![tiling.clone()]
        };
        OffsetMap {
            orig_len: tiling.orig_len,
            clean_len: tiling.clean_len,
            stages,
            flat: tiling,
        }
    }

    /// Build from explicit segments, checking the tiling invariants and
    /// merging adjacent mergeable segments.
    pub fn from_segments(segments: &[Segment]) -> Result<Self, OffsetMapError> {
        Tiling::from_segments(segments).map(Self::from_tiling)
    }

    /// A single tiling summarizing the whole map. For a composed map this is
    /// the finest tiling that contains every projection of the chain; when
    /// atomic rewrites of different stages straddle each other it is
    /// coarser than [`OffsetMap::project`].
    pub fn segments(&self) -> &[Segment] {
        &self.flat.segments
    }

    /// Number of non-trivial rewrites chained in this map.
    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    pub fn orig_len(&self) -> usize {
        self.orig_len
    }

    pub fn clean_len(&self) -> usize {
        self.clean_len
    }

    /// True when the map relates every character to itself.
    pub fn is_identity(&self) -> bool {
        self.stages.is_empty() || self.flat.is_identity()
    }

    /// Swap the two sides.
    pub fn inverse(&self) -> OffsetMap {
        OffsetMap {
            orig_len: self.clean_len,
            clean_len: self.orig_len,
            stages: self.stages.iter().rev().map(Tiling::inverse).collect(),
            flat: self.flat.inverse(),
        }
    }

    fn src_len(&self, dir: Direction) -> usize {
        match dir {
            Direction::Forward => self.orig_len,
            Direction::Backward => self.clean_len,
        }
    }

    fn ordered_stages(&self, dir: Direction) -> Box<dyn Iterator<Item = &Tiling> + '_> {
        match dir {
            Direction::Forward => Box::new(self.stages.iter()),
            Direction::Backward => Box::new(self.stages.iter().rev()),
        }
    }

    /// Project a range from one side to the other.
    ///
    /// Copied characters map one to one; a range touching an atomic segment
    /// expands to that segment's whole target; inserted material strictly
    /// inside the range is included. If nothing maps, the result is
    /// [`Projection::Dropped`]. An empty input range is treated as a point
    /// (see [`OffsetMap::project_point`]).
    pub fn project(&self, dir: Direction, range: TextRange) -> Result<Projection, OffsetMapError> {
        let len = self.src_len(dir);
        if range.start > range.end || range.end > len {
            return Err(OffsetMapError::OutOfBounds {
                start: range.start,
                end: range.end,
                len,
            });
        }
        let mut current = Projection::Mapped(range);
        for stage in self.ordered_stages(dir) {
            current = match current {
                Projection::Mapped(r) => stage.project(dir, r)?,
                Projection::Dropped { at } => stage.project_point(dir, at)?,
            };
        }
        if let Projection::Mapped(r) = current {
            if r.is_empty() {
                return Ok(Projection::Dropped { at: r.start });
            }
        }
        Ok(current)
    }

    /// Project a single position. A position strictly inside an atomic
    /// replacement yields that replacement's whole target; otherwise the
    /// result is the corresponding target position, placed before any
    /// material inserted at that point.
    pub fn project_point(&self, dir: Direction, pos: usize) -> Result<Projection, OffsetMapError> {
        self.project(dir, TextRange::new(pos, pos))
    }

    pub fn to_clean(&self, range: TextRange) -> Result<Projection, OffsetMapError> {
        self.project(Direction::Forward, range)
    }

    pub fn to_original(&self, range: TextRange) -> Result<Projection, OffsetMapError> {
        self.project(Direction::Backward, range)
    }

    /// Chain `self` (orig → mid) with `next` (mid → clean). Projecting
    /// through the result equals projecting through `self` then `next`.
    pub fn compose(&self, next: &OffsetMap) -> Result<OffsetMap, OffsetMapError> {
        if self.clean_len != next.orig_len {
            return Err(OffsetMapError::LengthMismatch {
                left: self.clean_len,
                right: next.orig_len,
            });
        }
        if next.stages.is_empty() {
            return Ok(self.clone());
        }
        if self.stages.is_empty() {
            return Ok(next.clone());
        }
        let flat = compose::flatten(&self.flat, &next.flat);
        let mut stages = self.stages.clone();
        stages.extend(next.stages.iter().cloned());
        Ok(OffsetMap {
            orig_len: self.orig_len,
            clean_len: next.clean_len,
            stages,
            flat,
        })
    }

    /// Check the tiling invariants of every stage and of the flat view.
    pub fn check(&self) -> Result<(), OffsetMapError> {
        let mut expected = self.orig_len;
        for (i, stage) in self
            .stages
            .iter()
            .chain(std::iter::once(&self.flat))
            .enumerate()
        {
            let rebuilt = Tiling::from_segments(&stage.segments)?;
            let is_flat = i == self.stages.len();
            let start = if is_flat { self.orig_len } else { expected };
            if rebuilt != *stage || rebuilt.orig_len != start {
                return Err(OffsetMapError::BadSegment {
                    index: i,
                    reason: "stage is not a canonical tiling of its input",
                });
            }
            if !is_flat {
                expected = stage.clean_len;
            }
        }
        if expected != self.clean_len || self.flat.clean_len != self.clean_len {
            return Err(OffsetMapError::BadSegment {
                index: self.stages.len(),
                reason: "stage lengths do not chain",
            });
        }
        Ok(())
    }
}

/// Incremental construction of a canonical map. Adjacent copies, deletes
/// and inserts are merged; zero-length pushes are ignored.
#[derive(Debug, Default)]
pub struct MapBuilder {
    segments: Vec<Segment>,
    orig_pos: usize,
    clean_pos: usize,
}

impl MapBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, kind: SegmentKind, orig: usize, clean: usize) {
        if orig == 0 && clean == 0 {
            return;
        }
        let kind = match kind {
            SegmentKind::Replace if clean == 0 => SegmentKind::Delete,
            SegmentKind::Replace if orig == 0 => SegmentKind::Insert,
            k => k,
        };
        let mergeable = matches!(
            kind,
            SegmentKind::Copy | SegmentKind::Delete | SegmentKind::Insert
        );
        match self.segments.last_mut() {
            Some(last) if mergeable && last.kind == kind => {
                last.orig.end += orig;
                last.clean.end += clean;
            }
            _ => self.segments.push(Segment {
                orig: TextRange::new(self.orig_pos, self.orig_pos + orig),
                clean: TextRange::new(self.clean_pos, self.clean_pos + clean),
                kind,
            }),
        }
        self.orig_pos += orig;
        self.clean_pos += clean;
    }

    pub fn copy(&mut self, n: usize) {
        self.push(SegmentKind::Copy, n, n);
    }

    pub fn replace(&mut self, orig: usize, clean: usize) {
        self.push(SegmentKind::Replace, orig, clean);
    }

    pub fn delete(&mut self, n: usize) {
        self.push(SegmentKind::Delete, n, 0);
    }

    pub fn insert(&mut self, n: usize) {
        self.push(SegmentKind::Insert, 0, n);
    }

    fn tiling(self) -> Tiling {
        Tiling {
            segments: self.segments,
            orig_len: self.orig_pos,
            clean_len: self.clean_pos,
        }
    }

    pub fn finish(self) -> OffsetMap {
        OffsetMap::from_tiling(self.tiling())
    }
}

mod compose {
    //! Flattening of two chained tilings into one, by grouping atomic units
    //! that share middle-text characters. Copy segments are split into one
    //! unit per character.

    use super::*;

    struct Unit {
        outer: usize,
        mid: TextRange,
        copy: bool,
    }

    fn units(map: &Tiling, mid_is_clean: bool) -> Vec<Unit> {
        let mut out = Vec::new();
        for seg in &map.segments {
            let (mid, outer) = if mid_is_clean {
                (seg.clean, seg.orig)
            } else {
                (seg.orig, seg.clean)
            };
            if seg.kind == SegmentKind::Copy {
                for i in 0..mid.len() {
                    out.push(Unit {
                        outer: 1,
                        mid: TextRange::new(mid.start + i, mid.start + i + 1),
                        copy: true,
                    });
                }
            } else {
                out.push(Unit {
                    outer: outer.len(),
                    mid,
                    copy: false,
                });
            }
        }
        out
    }

    struct UnionFind(Vec<usize>);

    impl UnionFind {
        fn find(&mut self, mut x: usize) -> usize {
            while self.0[x] != x {
                self.0[x] = self.0[self.0[x]];
                x = self.0[x];
            }
            x
        }

        fn union(&mut self, a: usize, b: usize) {
            let (ra, rb) = (self.find(a), self.find(b));
            if ra != rb {
                self.0[ra.max(rb)] = ra.min(rb);
            }
        }
    }

    /// Indices of units with a non-empty middle range, in middle order.
    fn solid(units: &[Unit]) -> Vec<usize> {
        (0..units.len())
            .filter(|&i| !units[i].mid.is_empty())
            .collect()
    }

    /// The solid unit whose middle range strictly contains `p`, if any.
    fn containing(units: &[Unit], solid: &[usize], p: usize) -> Option<usize> {
        let k = solid.partition_point(|&i| units[i].mid.end <= p);
        solid
            .get(k)
            .copied()
            .filter(|&i| units[i].mid.start < p && p < units[i].mid.end)
    }

    pub(super) fn flatten(a: &Tiling, b: &Tiling) -> Tiling {
        let ua = units(a, true);
        let ub = units(b, false);
        let off = ua.len();
        let mut uf = UnionFind((0..ua.len() + ub.len()).collect());
        let sa = solid(&ua);
        let sb = solid(&ub);

        // Overlapping middle ranges.
        let mut k = 0;
        for &j in &sb {
            let r = ub[j].mid;
            while k < sa.len() && ua[sa[k]].mid.end <= r.start {
                k += 1;
            }
            let mut m = k;
            while m < sa.len() && ua[sa[m]].mid.start < r.end {
                uf.union(sa[m], off + j);
                m += 1;
            }
        }
        // Empty middle ranges strictly inside an atomic unit of the other map.
        for (i, u) in ua.iter().enumerate().filter(|(_, u)| u.mid.is_empty()) {
            if let Some(j) = containing(&ub, &sb, u.mid.start) {
                uf.union(i, off + j);
            }
        }
        for (j, u) in ub.iter().enumerate().filter(|(_, u)| u.mid.is_empty()) {
            if let Some(i) = containing(&ua, &sa, u.mid.start) {
                uf.union(i, off + j);
            }
        }

        struct Block {
            key: (usize, u8, usize),
            orig: usize,
            clean: usize,
            a_units: usize,
            b_units: usize,
            all_copy: bool,
        }
        let mut blocks: std::collections::HashMap<usize, Block> = Default::default();
        for idx in 0..ua.len() + ub.len() {
            let root = uf.find(idx);
            let (u, is_a) = if idx < off {
                (&ua[idx], true)
            } else {
                (&ub[idx - off], false)
            };
            let class = match (u.mid.is_empty(), is_a) {
                (true, true) => 0,
                (true, false) => 1,
                (false, _) => 2,
            };
            let block = blocks.entry(root).or_insert(Block {
                key: (u.mid.start, class, idx),
                orig: 0,
                clean: 0,
                a_units: 0,
                b_units: 0,
                all_copy: true,
            });
            block.key = block.key.min((u.mid.start, class, idx));
            if is_a {
                block.orig += u.outer;
                block.a_units += 1;
            } else {
                block.clean += u.outer;
                block.b_units += 1;
            }
            block.all_copy &= u.copy;
        }
        let mut ordered: Vec<Block> = blocks.into_values().collect();
        ordered.sort_by_key(|b| b.key);

        let mut builder = MapBuilder::new();
        for block in ordered {
            if block.all_copy && block.a_units == 1 && block.b_units == 1 {
                builder.copy(1);
            } else {
                builder.replace(block.orig, block.clean);
            }
        }
        let out = builder.tiling();
        debug_assert_eq!(out.orig_len, a.orig_len);
        debug_assert_eq!(out.clean_len, b.clean_len);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(s: usize, e: usize) -> TextRange {
        TextRange::new(s, e)
    }

    /// "Mama  derecha" with the second space deleted.
    fn double_space_map() -> OffsetMap {
        let mut b = MapBuilder::new();
        b.copy(5);
        b.delete(1);
        b.copy(7);
        b.finish()
    }

    #[test]
    fn prefix_and_whole_string() {
        let m = double_space_map();
        assert_eq!(m.to_clean(r(0, 4)).unwrap(), Projection::Mapped(r(0, 4)));
        assert_eq!(m.to_clean(r(0, 13)).unwrap(), Projection::Mapped(r(0, 12)));
        assert_eq!(m.to_clean(r(6, 13)).unwrap(), Projection::Mapped(r(5, 12)));
    }

    #[test]
    fn deleted_material_is_dropped() {
        let m = double_space_map();
        assert_eq!(m.to_clean(r(5, 6)).unwrap(), Projection::Dropped { at: 5 });
    }

    #[test]
    fn replace_expands() {
        let mut b = MapBuilder::new();
        b.copy(2);
        b.replace(2, 1);
        b.copy(2);
        let m = b.finish();
        assert_eq!(m.to_clean(r(2, 3)).unwrap(), Projection::Mapped(r(2, 3)));
        assert_eq!(m.to_clean(r(1, 3)).unwrap(), Projection::Mapped(r(1, 3)));
        assert_eq!(m.to_original(r(2, 3)).unwrap(), Projection::Mapped(r(2, 4)));
    }

    #[test]
    fn out_of_bounds() {
        let m = double_space_map();
        assert!(m.to_clean(r(0, 14)).is_err());
        assert!(m.to_original(r(0, 13)).is_err());
    }

    #[test]
    fn identity_composition() {
        let id = OffsetMap::identity(7);
        assert_eq!(id.compose(&id).unwrap(), id);
        let m = double_space_map();
        assert_eq!(m.compose(&OffsetMap::identity(12)).unwrap(), m);
        assert_eq!(OffsetMap::identity(13).compose(&m).unwrap(), m);
        assert!(m.compose(&OffsetMap::identity(13)).is_err());
    }

    #[test]
    fn from_segments_rejects_gaps() {
        let bad = [Segment {
            orig: r(1, 2),
            clean: r(0, 1),
            kind: SegmentKind::Copy,
        }];
        assert!(OffsetMap::from_segments(&bad).is_err());
        let m = double_space_map();
        assert_eq!(OffsetMap::from_segments(m.segments()).unwrap(), m);
    }

    #[test]
    fn inverse_swaps_kinds() {
        let m = double_space_map().inverse();
        assert_eq!(m.segments()[1].kind, SegmentKind::Insert);
        assert_eq!(m.inverse(), double_space_map());
    }

    #[test]
    fn delete_inside_later_replacement_is_absorbed() {
        // orig "ab-c" -> mid "abc" (delete "-") -> clean "aX" ("bc" -> "X")
        let mut a = MapBuilder::new();
        a.copy(2);
        a.delete(1);
        a.copy(1);
        let a = a.finish();
        let mut b = MapBuilder::new();
        b.copy(1);
        b.replace(2, 1);
        let b = b.finish();
        let c = a.compose(&b).unwrap();
        assert_eq!(c.segments().len(), 2);
        let seq = match a.to_clean(r(2, 3)).unwrap() {
            Projection::Dropped { at } => b.project_point(Direction::Forward, at).unwrap(),
            Projection::Mapped(x) => b.to_clean(x).unwrap(),
        };
        assert_eq!(c.to_clean(r(2, 3)).unwrap(), seq);
        assert_eq!(seq, Projection::Mapped(r(1, 2)));
    }

    #[test]
    fn straddling_rewrites_stay_exact() {
        // "xy" -> "ABCD" (two replaces), then "BC" -> "z"
        let mut a = MapBuilder::new();
        a.replace(1, 2);
        a.replace(1, 2);
        let a = a.finish();
        let mut b = MapBuilder::new();
        b.copy(1);
        b.replace(2, 1);
        b.copy(1);
        let b = b.finish();
        let c = a.compose(&b).unwrap();
        assert_eq!(c.stage_count(), 2);
        assert_eq!(c.to_clean(r(0, 1)).unwrap(), Projection::Mapped(r(0, 2)));
        assert_eq!(c.to_clean(r(1, 2)).unwrap(), Projection::Mapped(r(1, 3)));
        assert_eq!(c.segments().len(), 1);
        c.check().unwrap();
    }
}
