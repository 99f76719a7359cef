use std::collections::HashMap;

use crate::geo::GeoBBox;

/// Cell edge in degrees.
pub const CELL_DEG: f64 = 0.05;

/// Items or queries spanning more cells than this bypass the grid.
const MAX_CELLS: i64 = 40_000;

/// Fixed-grid spatial index over item bounding boxes. Lookups return a
/// superset of candidates in ascending item order; callers run the exact
/// predicate.
#[derive(Debug, Clone, Default)]
pub struct GridIndex {
    cells: HashMap<(i32, i32), Vec<u32>>,
    oversized: Vec<u32>,
    len: usize,
}

fn cell_of(v: f64) -> i32 {
    (v / CELL_DEG).floor() as i32
}

fn cell_span(b: &GeoBBox) -> (i32, i32, i32, i32, i64) {
    let (r0, r1) = (cell_of(b.min_lat), cell_of(b.max_lat));
    let (c0, c1) = (cell_of(b.min_lon), cell_of(b.max_lon));
    let count = (r1 as i64 - r0 as i64 + 1) * (c1 as i64 - c0 as i64 + 1);
    (r0, r1, c0, c1, count)
}

impl GridIndex {
    pub fn build<'a>(boxes: impl IntoIterator<Item = &'a GeoBBox>) -> Self {
        let mut index = GridIndex::default();
        for (i, b) in boxes.into_iter().enumerate() {
            index.insert(i as u32, b);
        }
        index
    }

    fn insert(&mut self, id: u32, b: &GeoBBox) {
        self.len += 1;
        let (r0, r1, c0, c1, count) = cell_span(b);
        if count > MAX_CELLS {
            self.oversized.push(id);
            return;
        }
        for r in r0..=r1 {
            for c in c0..=c1 {
                self.cells.entry((r, c)).or_default().push(id);
            }
        }
    }

    pub fn candidates(&self, query: &GeoBBox) -> Vec<u32> {
        let (r0, r1, c0, c1, count) = cell_span(query);
        if count > MAX_CELLS || count as usize > self.cells.len().max(1) * 4 {
            return (0..self.len as u32).collect();
        }
        let mut out: Vec<u32> = self.oversized.clone();
        for r in r0..=r1 {
            for c in c0..=c1 {
                if let Some(ids) = self.cells.get(&(r, c)) {
                    out.extend_from_slice(ids);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}
