//! Ground-truth layout labelling.
//!
//! A layout is a stack of `R` single-shelf grids of side `D`, each cell
//! holding one of three labels: background (0), unoccupied shelf space (1),
//! or occupied space (2). Both views share the rack frame and the same
//! square region of interest of side `extent_m` centred on the rack:
//!
//! * Top view: columns go with `x` ascending, rows with `z` ascending, so
//!   the bottom row is the camera side. A cell is unoccupied when its
//!   center lies on the shelf deck and occupied when some stack footprint
//!   contains it.
//! * Front view: columns as above, rows with `y` descending, anchored so
//!   the shelf surface crosses the vertical center of the grid. A cell is
//!   unoccupied when it lies in the shelf's open slab (from the surface up
//!   to the bottom of the next deck; the topmost shelf gets one full
//!   inter-shelf height) and occupied when its column is supported by a
//!   stack footprint and it lies below that stack's total height.
//!
//! Occupied columns in the front view are derived from the same footprint
//! containment test as the top view, so the set of occupied columns agrees
//! between views by construction.
//!
//! Labels are amodal: camera occlusion never affects them. The camera
//! enters only through shelf visibility, which blanks a whole channel to
//! background when the shelf is out of frame or out of range.

use alloc::vec;
use alloc::vec::Vec;

use crate::geom::vec3;
use crate::render::CameraModel;
use crate::scenegen::SceneDescription;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

pub const LABEL_BACKGROUND: u8 = 0;
pub const LABEL_UNOCCUPIED: u8 = 1;
pub const LABEL_OCCUPIED: u8 = 2;
pub const NUM_CLASSES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum View {
    Top,
    Front,
}

impl View {
    pub fn name(self) -> &'static str {
        match self {
            View::Top => "top",
            View::Front => "front",
        }
    }
}

/// Per-channel label grids, channel major, each channel `d * d` cells.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    pub channels: usize,
    pub d: usize,
    pub cells: Vec<u8>,
}

impl LabelMap {
    pub fn new(channels: usize, d: usize) -> LabelMap {
        LabelMap { channels, d, cells: vec![LABEL_BACKGROUND; channels * d * d] }
    }

    pub fn channel(&self, c: usize) -> &[u8] {
        &self.cells[c * self.d * self.d..(c + 1) * self.d * self.d]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [u8] {
        &mut self.cells[c * self.d * self.d..(c + 1) * self.d * self.d]
    }

    pub fn get(&self, c: usize, row: usize, col: usize) -> u8 {
        self.cells[(c * self.d + row) * self.d + col]
    }
}

/// A ground-truth layout: labels plus the geometry they were built with.
#[derive(Clone, Debug, PartialEq)]
pub struct LayoutTensor {
    pub view: View,
    pub extent_m: f64,
    /// Which channels correspond to shelves visible from the camera.
    pub visible: Vec<bool>,
    pub map: LabelMap,
}

/// What the camera is asked to annotate: shelves within `range_m` of the
/// camera center, labelled over a square of side `extent_m`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct DetectionWindow {
    pub range_m: f64,
    pub extent_m: f64,
}

impl Default for DetectionWindow {
    fn default() -> Self {
        DetectionWindow { range_m: 5.0, extent_m: 8.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LayoutError {
    /// The scene has more shelves than the layout has channels.
    TooManyShelves { shelves: usize, channels: usize },
    ZeroResolution,
}

impl core::fmt::Display for LayoutError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            LayoutError::TooManyShelves { shelves, channels } => write!(
                f,
                "scene has {shelves} shelves but the layout only has {channels} channels"
            ),
            LayoutError::ZeroResolution => write!(f, "layout resolution must be positive"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for LayoutError {}

/// Physical size of one layout cell in centimetres per pixel.
pub fn metric_scale(extent_m: f64, d: usize) -> f64 {
    100.0 * extent_m / d as f64
}

/// Indices of shelves the camera can annotate: the midpoint of the shelf's
/// front edge must project inside the image and lie within the detection
/// range of the camera center.
pub fn visible_shelf_set(
    scene: &SceneDescription,
    cam: &CameraModel,
    win: &DetectionWindow,
) -> Vec<usize> {
    let mut out = Vec::new();
    for (i, shelf) in scene.shelves.iter().enumerate() {
        let local = vec3(0.0, shelf.surface_height_m, scene.config.shelf_depth_m * 0.5);
        let world = scene.rack_pose.to_world(local);
        if (world - cam.position).length() > win.range_m {
            continue;
        }
        if let Some((u, v, _)) = cam.project(world) {
            if cam.in_bounds(u, v) {
                out.push(i);
            }
        }
    }
    out
}

fn visibility_mask(
    scene: &SceneDescription,
    cam: &CameraModel,
    win: &DetectionWindow,
    channels: usize,
) -> Vec<bool> {
    let mut mask = vec![false; channels];
    for i in visible_shelf_set(scene, cam, win) {
        mask[i] = true;
    }
    mask
}

/// Coordinate of cell center `i` along an axis spanning `[-extent/2, extent/2]`.
#[inline]
fn axis_coord(i: usize, extent_m: f64, d: usize) -> f64 {
    -extent_m * 0.5 + (i as f64 + 0.5) * extent_m / d as f64
}

/// Open vertical space above shelf `i`: up to the bottom of the next deck,
/// or one full inter-shelf height for the topmost shelf.
fn slab_height(scene: &SceneDescription, i: usize) -> f64 {
    let cfg = &scene.config;
    if i + 1 < scene.shelves.len() {
        cfg.inter_shelf_height_m - cfg.shelf_thickness_m
    } else {
        cfg.inter_shelf_height_m
    }
}

/// Bird's-eye layout: one channel per shelf, visible shelves labelled by
/// cell-center containment, hidden channels left as background.
pub fn top_layout(
    scene: &SceneDescription,
    cam: &CameraModel,
    win: &DetectionWindow,
    channels: usize,
    d: usize,
) -> Result<LayoutTensor, LayoutError> {
    check_grid(scene, channels, d)?;
    let visible = visibility_mask(scene, cam, win, channels);
    let mut map = LabelMap::new(channels, d);
    let cfg = &scene.config;
    let (half_w, half_d) = (cfg.shelf_width_m * 0.5, cfg.shelf_depth_m * 0.5);

    for (i, shelf) in scene.shelves.iter().enumerate() {
        if !visible[i] {
            continue;
        }
        let rects: Vec<_> = shelf.stacks.iter().map(|s| s.footprint()).collect();
        let ch = map.channel_mut(i);
        for row in 0..d {
            let z = axis_coord(row, win.extent_m, d);
            for col in 0..d {
                let x = axis_coord(col, win.extent_m, d);
                if x.abs() > half_w || z.abs() > half_d {
                    continue;
                }
                let mut label = LABEL_UNOCCUPIED;
                for rect in &rects {
                    if rect.contains(x, z) {
                        label = LABEL_OCCUPIED;
                        break;
                    }
                }
                ch[row * d + col] = label;
            }
        }
    }
    Ok(LayoutTensor { view: View::Top, extent_m: win.extent_m, visible, map })
}

/// Egocentric front-view layout. Rows are anchored so the shelf surface
/// passes through the vertical center of its channel's grid.
pub fn front_layout(
    scene: &SceneDescription,
    cam: &CameraModel,
    win: &DetectionWindow,
    channels: usize,
    d: usize,
) -> Result<LayoutTensor, LayoutError> {
    check_grid(scene, channels, d)?;
    let visible = visibility_mask(scene, cam, win, channels);
    let mut map = LabelMap::new(channels, d);
    let cfg = &scene.config;
    let half_w = cfg.shelf_width_m * 0.5;

    for (i, shelf) in scene.shelves.iter().enumerate() {
        if !visible[i] {
            continue;
        }
        let slab = slab_height(scene, i);
        // Each column is supported by at most one stack (footprints are
        // separated along x), found with the same containment test the top
        // view uses.
        let mut column_height = vec![0.0f64; d];
        for stack in &shelf.stacks {
            let rect = stack.footprint();
            let height = stack.height_m();
            for col in 0..d {
                if column_height[col] > 0.0 {
                    continue;
                }
                let x = axis_coord(col, win.extent_m, d);
                for row in 0..d {
                    let z = axis_coord(row, win.extent_m, d);
                    if rect.contains(x, z) {
                        column_height[col] = height;
                        break;
                    }
                }
            }
        }

        let ch = map.channel_mut(i);
        for row in 0..d {
            // Height above the shelf surface of this row's cell center.
            let rel = win.extent_m * 0.5 - (row as f64 + 0.5) * win.extent_m / d as f64;
            if rel < 0.0 || rel >= slab {
                continue;
            }
            for col in 0..d {
                let x = axis_coord(col, win.extent_m, d);
                if x.abs() > half_w {
                    continue;
                }
                let occupied = column_height[col] > 0.0 && rel < column_height[col];
                ch[row * d + col] = if occupied { LABEL_OCCUPIED } else { LABEL_UNOCCUPIED };
            }
        }
    }
    Ok(LayoutTensor { view: View::Front, extent_m: win.extent_m, visible, map })
}

fn check_grid(scene: &SceneDescription, channels: usize, d: usize) -> Result<(), LayoutError> {
    if d == 0 {
        return Err(LayoutError::ZeroResolution);
    }
    if scene.shelves.len() > channels {
        return Err(LayoutError::TooManyShelves { shelves: scene.shelves.len(), channels });
    }
    Ok(())
}
