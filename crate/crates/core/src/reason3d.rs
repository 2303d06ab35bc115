//! Spatial reasoning over layout grids.
//!
//! From a pair of per-shelf layouts (top and front view) this module
//! recovers box-stack counts, approximate cuboid dimensions, and free
//! volume per shelf. The pipeline per shelf channel is: binarize the
//! occupied cells, clean speckle with a morphological opening, extract
//! 4-connected components and their bounding rectangles in both views,
//! fuse top and front rectangles by column overlap into cuboids, and
//! subtract their volume from the shelf's capacity.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::gtlayout::{metric_scale, LabelMap};
use crate::metrics::EvalClass;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// A binary mask over a `width * height` grid, row major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryGrid {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<bool>,
}

impl BinaryGrid {
    pub fn new(width: usize, height: usize) -> BinaryGrid {
        BinaryGrid { width, height, cells: vec![false; width * height] }
    }

    pub fn from_labels(labels: &[u8], width: usize, height: usize, class: EvalClass) -> BinaryGrid {
        debug_assert_eq!(labels.len(), width * height);
        BinaryGrid {
            width,
            height,
            cells: labels.iter().map(|&l| class.includes(l)).collect(),
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.width + col]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }
}

/// Erosion by a `(2r+1)` square: a cell survives when its whole
/// neighbourhood is set. Cells outside the grid count as empty, so shapes
/// touching the border erode there too.
fn erode(g: &BinaryGrid, radius: usize) -> BinaryGrid {
    separable_pass(g, radius, true)
}

/// Dilation by a `(2r+1)` square: a cell lights up when any neighbour is set.
fn dilate(g: &BinaryGrid, radius: usize) -> BinaryGrid {
    separable_pass(g, radius, false)
}

/// Square min/max filters factor into a horizontal then a vertical pass.
fn separable_pass(g: &BinaryGrid, radius: usize, all: bool) -> BinaryGrid {
    if radius == 0 {
        return g.clone();
    }
    let r = radius as isize;
    let mut mid = BinaryGrid::new(g.width, g.height);
    for row in 0..g.height {
        for col in 0..g.width {
            let mut acc = all;
            for dc in -r..=r {
                let c = col as isize + dc;
                let v = c >= 0 && (c as usize) < g.width && g.get(row, c as usize);
                acc = if all { acc && v } else { acc || v };
            }
            mid.cells[row * g.width + col] = acc;
        }
    }
    let mut out = BinaryGrid::new(g.width, g.height);
    for row in 0..g.height {
        for col in 0..g.width {
            let mut acc = all;
            for dr in -r..=r {
                let rr = row as isize + dr;
                let v = rr >= 0 && (rr as usize) < g.height && mid.get(rr as usize, col);
                acc = if all { acc && v } else { acc || v };
            }
            out.cells[row * g.width + col] = acc;
        }
    }
    out
}

/// Opening: erosion then dilation. Removes specks smaller than the element
/// without growing what remains.
pub fn morph_open(g: &BinaryGrid, radius: usize) -> BinaryGrid {
    dilate(&erode(g, radius), radius)
}

/// Closing: dilation then erosion. Fills pits smaller than the element
/// without shrinking the rest.
pub fn morph_close(g: &BinaryGrid, radius: usize) -> BinaryGrid {
    erode(&dilate(g, radius), radius)
}

/// 4-connected components by scanline flood fill. Labels are assigned in
/// row-major discovery order starting from 1; 0 is background. Returns the
/// label grid and the component count.
pub fn connected_components(g: &BinaryGrid) -> (Vec<u32>, usize) {
    let mut labels = vec![0u32; g.cells.len()];
    let mut next = 0u32;
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for row in 0..g.height {
        for col in 0..g.width {
            if !g.get(row, col) || labels[row * g.width + col] != 0 {
                continue;
            }
            next += 1;
            stack.push((row, col));
            labels[row * g.width + col] = next;
            while let Some((r, c)) = stack.pop() {
                let mut visit = |rr: usize, cc: usize| {
                    let idx = rr * g.width + cc;
                    if g.cells[idx] && labels[idx] == 0 {
                        labels[idx] = next;
                        stack.push((rr, cc));
                    }
                };
                if r > 0 {
                    visit(r - 1, c);
                }
                if r + 1 < g.height {
                    visit(r + 1, c);
                }
                if c > 0 {
                    visit(r, c - 1);
                }
                if c + 1 < g.width {
                    visit(r, c + 1);
                }
            }
        }
    }
    (labels, next as usize)
}

/// Inclusive pixel-space bounding rectangle of a component.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PixelRect {
    pub min_row: usize,
    pub min_col: usize,
    pub max_row: usize,
    pub max_col: usize,
}

impl PixelRect {
    pub fn cols(&self) -> usize {
        self.max_col - self.min_col + 1
    }

    pub fn rows(&self) -> usize {
        self.max_row - self.min_row + 1
    }

    fn col_overlap(&self, other: &PixelRect) -> usize {
        let lo = self.min_col.max(other.min_col);
        let hi = self.max_col.min(other.max_col);
        if hi >= lo {
            hi - lo + 1
        } else {
            0
        }
    }
}

/// Default speckle-removal radius applied before component extraction.
pub const OPEN_RADIUS: usize = 1;

/// Bounding rectangles of the class's components after an opening of
/// `radius`, in component label order (row-major discovery).
pub fn extract_rects(
    labels: &[u8],
    d: usize,
    class: EvalClass,
    radius: usize,
) -> Vec<PixelRect> {
    let mask = morph_open(&BinaryGrid::from_labels(labels, d, d, class), radius);
    let (comp, count) = connected_components(&mask);
    let mut rects = vec![
        PixelRect { min_row: usize::MAX, min_col: usize::MAX, max_row: 0, max_col: 0 };
        count
    ];
    for row in 0..d {
        for col in 0..d {
            let l = comp[row * d + col];
            if l == 0 {
                continue;
            }
            let r = &mut rects[(l - 1) as usize];
            r.min_row = r.min_row.min(row);
            r.min_col = r.min_col.min(col);
            r.max_row = r.max_row.max(row);
            r.max_col = r.max_col.max(col);
        }
    }
    rects
}

/// Number of box stacks visible in one top-view shelf channel.
pub fn count_stacks(labels: &[u8], d: usize) -> usize {
    extract_rects(labels, d, EvalClass::Box, OPEN_RADIUS).len()
}

/// A box stack reconstructed from one top rectangle and one front
/// rectangle. Offsets are relative to the rack center.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct CuboidEstimate {
    pub width_cm: f64,
    pub depth_cm: f64,
    pub height_cm: f64,
    pub x_offset_cm: f64,
    pub z_offset_cm: f64,
}

impl CuboidEstimate {
    pub fn volume_cm3(&self) -> f64 {
        self.width_cm * self.depth_cm * self.height_cm
    }
}

/// Result of pairing top- and front-view rectangles on one shelf.
#[derive(Clone, Debug, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct FusedShelf {
    pub cuboids: Vec<CuboidEstimate>,
    /// Top rectangles with no overlapping front rectangle.
    pub unmatched_top: usize,
    /// Front rectangles left unpaired.
    pub unmatched_front: usize,
}

/// Greedily pairs rectangles between views by shared columns: each top
/// rectangle takes the unused front rectangle with the largest column
/// overlap (first wins ties). Width and lateral offset come from the top
/// rectangle's columns, depth from its rows, and height from the front
/// rectangle's rows.
pub fn fuse_views(
    top: &[PixelRect],
    front: &[PixelRect],
    d: usize,
    extent_m: f64,
) -> FusedShelf {
    let scale = metric_scale(extent_m, d);
    let half = d as f64 * 0.5;
    let mut used = vec![false; front.len()];
    let mut out = FusedShelf::default();

    for t in top {
        let mut best: Option<(usize, usize)> = None;
        for (j, f) in front.iter().enumerate() {
            if used[j] {
                continue;
            }
            let overlap = t.col_overlap(f);
            if overlap > 0 && best.map(|(_, o)| overlap > o).unwrap_or(true) {
                best = Some((j, overlap));
            }
        }
        match best {
            Some((j, _)) => {
                used[j] = true;
                let f = &front[j];
                out.cuboids.push(CuboidEstimate {
                    width_cm: t.cols() as f64 * scale,
                    depth_cm: t.rows() as f64 * scale,
                    height_cm: f.rows() as f64 * scale,
                    x_offset_cm: ((t.min_col + t.max_col + 1) as f64 * 0.5 - half) * scale,
                    z_offset_cm: ((t.min_row + t.max_row + 1) as f64 * 0.5 - half) * scale,
                });
            }
            None => out.unmatched_top += 1,
        }
    }
    out.unmatched_front = used.iter().filter(|&&u| !u).count();
    out
}

/// Capacity of a shelf slab and the volume left after subtracting the
/// cuboids, both in cubic centimetres. Capacity is footprint times the
/// inter-shelf height; free volume never goes negative.
pub fn shelf_free_volume(
    cuboids: &[CuboidEstimate],
    width_cm: f64,
    depth_cm: f64,
    inter_shelf_height_cm: f64,
) -> (f64, f64) {
    let capacity = width_cm * depth_cm * inter_shelf_height_cm;
    let used: f64 = cuboids.iter().map(|c| c.volume_cm3()).sum();
    (capacity, (capacity - used).max(0.0))
}

/// Physical shelf geometry the reasoning needs, in centimetres.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct RackGeom {
    pub shelf_width_cm: f64,
    pub shelf_depth_cm: f64,
    /// Vertical pitch between consecutive shelf surfaces.
    pub inter_shelf_height_cm: f64,
}

/// Everything recovered for one shelf channel.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ShelfReport {
    pub shelf: usize,
    pub stack_count: usize,
    pub cuboids: Vec<CuboidEstimate>,
    pub unmatched_top: usize,
    pub unmatched_front: usize,
    pub capacity_cm3: f64,
    pub free_cm3: f64,
}

/// Rack-level reasoning summary.
#[derive(Clone, Debug, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct RackReport {
    pub shelves: Vec<ShelfReport>,
}

impl RackReport {
    pub fn shelf_count(&self) -> usize {
        self.shelves.len()
    }

    pub fn stack_total(&self) -> usize {
        self.shelves.iter().map(|s| s.stack_count).sum()
    }

    pub fn free_total_cm3(&self) -> f64 {
        self.shelves.iter().map(|s| s.free_cm3).sum()
    }
}

/// Runs the full reasoning pipeline over paired top and front layouts.
/// Channels that are entirely background in the top view (no shelf
/// detected) are skipped.
pub fn analyze_rack(
    top: &LabelMap,
    front: &LabelMap,
    extent_m: f64,
    geom: &RackGeom,
) -> RackReport {
    debug_assert_eq!(top.channels, front.channels);
    debug_assert_eq!(top.d, front.d);
    let d = top.d;
    let mut report = RackReport::default();
    for ch in 0..top.channels {
        let top_ch = top.channel(ch);
        if top_ch.iter().all(|&c| c == 0) {
            continue;
        }
        let top_rects = extract_rects(top_ch, d, EvalClass::Box, OPEN_RADIUS);
        let front_rects = extract_rects(front.channel(ch), d, EvalClass::Box, OPEN_RADIUS);
        let fused = fuse_views(&top_rects, &front_rects, d, extent_m);
        let (capacity, free) = shelf_free_volume(
            &fused.cuboids,
            geom.shelf_width_cm,
            geom.shelf_depth_cm,
            geom.inter_shelf_height_cm,
        );
        report.shelves.push(ShelfReport {
            shelf: ch,
            stack_count: top_rects.len(),
            cuboids: fused.cuboids,
            unmatched_top: fused.unmatched_top,
            unmatched_front: fused.unmatched_front,
            capacity_cm3: capacity,
            free_cm3: free,
        });
    }
    report
}

/// One-line natural language summary of a rack report.
pub fn report_sentence(report: &RackReport) -> String {
    format!(
        "Rack has {} shelves, {} box stacks, and {} cm\u{b3} of free space available",
        report.shelf_count(),
        report.stack_total(),
        libm::round(report.free_total_cm3()) as i64
    )
}
