//! Color rendering of layout grids and simple 3D overlays.
//!
//! Layout cells use a fixed palette: background pink, unoccupied shelf
//! space dark blue, occupied space green. The mapping is frozen so emitted
//! images are byte-stable across runs and platforms.

use crate::geom::Obb;
use crate::render::{CameraModel, Image};

pub const COLOR_BACKGROUND: [u8; 3] = [255, 160, 200];
pub const COLOR_UNOCCUPIED: [u8; 3] = [25, 25, 112];
pub const COLOR_OCCUPIED: [u8; 3] = [0, 200, 0];

/// Color for one cell label. Unknown label values fall back to background.
pub fn label_color(label: u8) -> [u8; 3] {
    match label {
        1 => COLOR_UNOCCUPIED,
        2 => COLOR_OCCUPIED,
        _ => COLOR_BACKGROUND,
    }
}

/// Renders one `d * d` label channel as an RGB image, row 0 at the top.
pub fn layout_channel_image(cells: &[u8], d: usize) -> Image {
    debug_assert_eq!(cells.len(), d * d);
    let mut img = Image::new(d, d, COLOR_BACKGROUND);
    for row in 0..d {
        for col in 0..d {
            img.set(col, row, label_color(cells[row * d + col]));
        }
    }
    img
}

/// Draws a straight segment between continuous pixel coordinates, clipped
/// to the image bounds.
pub fn draw_line(img: &mut Image, a: (f64, f64), b: (f64, f64), color: [u8; 3]) {
    let dx = b.0 - a.0;
    let dy = b.1 - a.1;
    let steps = libm::ceil(dx.abs().max(dy.abs())) as usize + 1;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let x = a.0 + dx * t;
        let y = a.1 + dy * t;
        let (xi, yi) = (libm::floor(x) as isize, libm::floor(y) as isize);
        if xi >= 0 && yi >= 0 && (xi as usize) < img.width && (yi as usize) < img.height {
            img.set(xi as usize, yi as usize, color);
        }
    }
}

/// Edge list of a box wireframe: pairs of corner indices as produced by
/// [`Obb::corners`].
const BOX_EDGES: [(usize, usize); 12] = [
    (0, 1),
    (2, 3),
    (4, 5),
    (6, 7),
    (0, 2),
    (1, 3),
    (4, 6),
    (5, 7),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

/// Projects and draws a box outline. Edges with an endpoint behind the
/// camera are skipped.
pub fn draw_obb_outline(img: &mut Image, cam: &CameraModel, obb: &Obb, color: [u8; 3]) {
    let corners = obb.corners();
    let projected: [Option<(f64, f64)>; 8] =
        corners.map(|p| cam.project(p).map(|(u, v, _)| (u, v)));
    for (i, j) in BOX_EDGES {
        if let (Some(a), Some(b)) = (projected[i], projected[j]) {
            draw_line(img, a, b, color);
        }
    }
}
