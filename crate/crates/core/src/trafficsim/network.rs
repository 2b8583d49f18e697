//! Synthetic road networks: a corridor chain or a grid of eastbound
//! segments with lane-change links at column boundaries.

use crate::ids::SegmentId;

/// Vertical spacing between grid rows in metres; small enough that the
/// radio range spans neighbouring rows.
const ROW_SPACING: f64 = 8.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Topology {
    Corridor,
    Grid,
}

/// One directed road segment laid out along +x in the plane.
#[derive(Clone, Debug)]
pub struct Segment {
    pub id: SegmentId,
    pub row: u32,
    pub col: u32,
    pub length: f64,
    pub free_flow_speed: f64,
    /// Plane coordinates of the segment entry point.
    pub origin: (f64, f64),
    pub upstream: Vec<SegmentId>,
    pub downstream: Vec<SegmentId>,
}

impl Segment {
    pub fn free_flow_tt(&self) -> f64 {
        self.length / self.free_flow_speed
    }

    /// Plane position of a point `offset` metres into the segment.
    pub fn position(&self, offset: f64) -> (f64, f64) {
        (self.origin.0 + offset, self.origin.1)
    }
}

/// A grid of `rows` x `cols` eastbound segments. A corridor is the
/// one-row special case. Traffic enters at column 0 and leaves after the
/// last column; at each column boundary a vehicle may continue straight
/// or shift one row.
#[derive(Clone, Debug)]
pub struct RoadNetwork {
    rows: u32,
    cols: u32,
    segments: Vec<Segment>,
}

impl RoadNetwork {
    pub fn new(rows: u32, cols: u32, length: f64, free_flow_speed: f64) -> RoadNetwork {
        assert!(rows >= 1 && cols >= 1);
        let mut segments = Vec::with_capacity((rows * cols) as usize);
        for r in 0..rows {
            for c in 0..cols {
                let id = SegmentId(r * cols + c);
                let mut downstream = Vec::new();
                let mut upstream = Vec::new();
                if c + 1 < cols {
                    downstream.push(SegmentId(r * cols + c + 1));
                    if r > 0 {
                        downstream.push(SegmentId((r - 1) * cols + c + 1));
                    }
                    if r + 1 < rows {
                        downstream.push(SegmentId((r + 1) * cols + c + 1));
                    }
                }
                if c > 0 {
                    upstream.push(SegmentId(r * cols + c - 1));
                    if r > 0 {
                        upstream.push(SegmentId((r - 1) * cols + c - 1));
                    }
                    if r + 1 < rows {
                        upstream.push(SegmentId((r + 1) * cols + c - 1));
                    }
                }
                segments.push(Segment {
                    id,
                    row: r,
                    col: c,
                    length,
                    free_flow_speed,
                    origin: (c as f64 * length, r as f64 * ROW_SPACING),
                    upstream,
                    downstream,
                });
            }
        }
        RoadNetwork {
            rows,
            cols,
            segments,
        }
    }

    pub fn rows(&self) -> u32 {
        self.rows
    }

    pub fn cols(&self) -> u32 {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn segment(&self, id: SegmentId) -> &Segment {
        &self.segments[id.0 as usize]
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Segments where traffic enters (column 0), in row order.
    pub fn entry_segments(&self) -> Vec<SegmentId> {
        (0..self.rows).map(|r| SegmentId(r * self.cols)).collect()
    }

    /// Segment ids ordered most-downstream first, for the sequential
    /// car-following update.
    pub fn downstream_first(&self) -> Vec<SegmentId> {
        let mut ids: Vec<SegmentId> = self.segments.iter().map(|s| s.id).collect();
        ids.sort_by_key(|id| {
            let s = self.segment(*id);
            (std::cmp::Reverse(s.col), s.row)
        });
        ids
    }

    /// True if `a` can reach `b` by travelling downstream (or equals it).
    /// Used to attribute queued congestion upstream of an event.
    pub fn is_upstream_of_or_same(&self, a: SegmentId, b: SegmentId) -> bool {
        let (sa, sb) = (self.segment(a), self.segment(b));
        if sa.col > sb.col {
            return false;
        }
        // each column step can shift at most one row
        let col_gap = sb.col - sa.col;
        let row_gap = sa.row.abs_diff(sb.row);
        row_gap <= col_gap
    }

    /// Adjacency is mirror-consistent; used by validation and tests.
    pub fn adjacency_consistent(&self) -> bool {
        self.segments.iter().all(|s| {
            s.downstream
                .iter()
                .all(|d| self.segment(*d).upstream.contains(&s.id))
                && s.upstream
                    .iter()
                    .all(|u| self.segment(*u).downstream.contains(&s.id))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corridor_is_a_single_chain() {
        let net = RoadNetwork::new(1, 10, 250.0, 13.9);
        assert_eq!(net.len(), 10);
        assert!(net.adjacency_consistent());
        assert_eq!(net.entry_segments(), vec![SegmentId(0)]);
        assert_eq!(net.segment(SegmentId(0)).downstream, vec![SegmentId(1)]);
        assert_eq!(net.segment(SegmentId(9)).downstream, Vec::<SegmentId>::new());
        assert_eq!(net.segment(SegmentId(5)).origin, (1250.0, 0.0));
        assert!((net.segment(SegmentId(0)).free_flow_tt() - 250.0 / 13.9).abs() < 1e-12);
    }

    #[test]
    fn grid_has_row_shift_links() {
        let net = RoadNetwork::new(3, 4, 200.0, 14.0);
        assert!(net.adjacency_consistent());
        assert_eq!(net.entry_segments().len(), 3);
        // middle row, middle column: three downstream options
        let mid = net.segment(SegmentId(4 + 1));
        assert_eq!(mid.downstream.len(), 3);
        // corner rows: two options
        let top = net.segment(SegmentId(1));
        assert_eq!(top.downstream.len(), 2);
    }

    #[test]
    fn upstream_reachability_respects_row_shift_budget() {
        let net = RoadNetwork::new(2, 5, 200.0, 14.0);
        let a = SegmentId(0); // row 0 col 0
        let b = SegmentId(5 + 2); // row 1 col 2
        assert!(net.is_upstream_of_or_same(a, b));
        assert!(net.is_upstream_of_or_same(a, a));
        assert!(!net.is_upstream_of_or_same(b, a));
        // one column apart but needs a row shift of one: reachable
        assert!(net.is_upstream_of_or_same(SegmentId(0), SegmentId(5 + 1)));
    }

    #[test]
    fn downstream_first_orders_by_column_desc() {
        let net = RoadNetwork::new(2, 3, 100.0, 10.0);
        let order = net.downstream_first();
        let cols: Vec<u32> = order.iter().map(|id| net.segment(*id).col).collect();
        assert_eq!(cols, vec![2, 2, 1, 1, 0, 0]);
    }
}
