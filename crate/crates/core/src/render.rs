//! Pinhole camera model and software rasterizer.
//!
//! The camera yaws about the vertical axis only, so the image plane is
//! always orthogonal to the ground. Camera space is `x` right, `y` down,
//! `z` forward (into the scene); a point projects to continuous pixel
//! coordinates `u = fx * x / z + cx`, `v = fy * y / z + cy`, and pixel
//! `(i, j)` covers the unit square with center `(i + 0.5, j + 0.5)`.
//!
//! The rasterizer draws opaque triangles with f64 edge functions, a top-left
//! fill rule, an inverse-depth buffer with a strict nearer-wins test (ties
//! keep the earlier triangle), and flat per-face Lambert shading under one
//! fixed directional light. There is no multisampling, no gamma, and no
//! threading, so output bytes depend only on the scene, the camera, and the
//! image size.

use alloc::vec;
use alloc::vec::Vec;

use crate::geom::{sincos_deg, vec3, Obb, RotRect, Vec3};
use crate::scenegen::{SceneDescription, CLUTTER_DECK_COLOR};

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// Geometry in front of the camera is kept only past this depth.
pub const NEAR_PLANE: f64 = 1e-4;

/// A pinhole camera with square pixels and yaw-only orientation.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct CameraModel {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub position: Vec3,
    pub yaw_deg: f64,
}

impl CameraModel {
    /// Whether continuous pixel coordinates fall inside the image.
    pub fn in_bounds(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && u < self.width as f64 && v >= 0.0 && v < self.height as f64
    }

    /// The camera-space basis in world coordinates: `(right, down, forward)`.
    pub fn basis(&self) -> (Vec3, Vec3, Vec3) {
        let (s, c) = sincos_deg(self.yaw_deg);
        (vec3(c, 0.0, -s), vec3(0.0, -1.0, 0.0), vec3(-s, 0.0, -c))
    }

    /// World point to camera space.
    pub fn world_to_camera(&self, p: Vec3) -> Vec3 {
        let (right, down, forward) = self.basis();
        let d = p - self.position;
        vec3(d.dot(right), d.dot(down), d.dot(forward))
    }

    /// Camera-space point to continuous pixel coordinates plus depth.
    pub fn project_camera(&self, q: Vec3) -> Option<(f64, f64, f64)> {
        if q.z < NEAR_PLANE {
            return None;
        }
        Some((
            self.fx * q.x / q.z + self.cx,
            self.fy * q.y / q.z + self.cy,
            q.z,
        ))
    }

    /// World point to pixel coordinates; `None` behind the camera.
    pub fn project(&self, p: Vec3) -> Option<(f64, f64, f64)> {
        self.project_camera(self.world_to_camera(p))
    }

    /// Inverse of [`CameraModel::project`] for a known depth.
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        let (right, down, forward) = self.basis();
        let qx = (u - self.cx) / self.fx * depth;
        let qy = (v - self.cy) / self.fy * depth;
        self.position + right * qx + down * qy + forward * depth
    }
}

/// An 8-bit RGB image, row major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, fill: [u8; 3]) -> Image {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&fill);
        }
        Image { width, height, data }
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

pub const BACKGROUND_COLOR: [u8; 3] = [70, 72, 78];
pub const DECK_COLOR: [u8; 3] = [210, 120, 48];
pub const POST_COLOR: [u8; 3] = [95, 105, 125];
const CLUTTER_DECK_RGB: [u8; 3] = [150, 95, 55];

/// Base colors for catalog boxes, indexed by `BoxSpec::color_id`.
pub const BOX_PALETTE: [[u8; 3]; 8] = [
    [196, 160, 120],
    [176, 142, 104],
    [205, 175, 136],
    [166, 132, 96],
    [186, 152, 118],
    [211, 184, 150],
    [70, 100, 190],
    [180, 70, 60],
];

pub fn box_color(color_id: u8) -> [u8; 3] {
    if color_id == CLUTTER_DECK_COLOR {
        CLUTTER_DECK_RGB
    } else {
        BOX_PALETTE[color_id as usize % BOX_PALETTE.len()]
    }
}

/// One opaque box to draw. `id` is the object's index in draw order and is
/// reported in the id buffer for every pixel the object wins.
#[derive(Clone, Copy, Debug)]
pub struct RenderObject {
    pub obb: Obb,
    pub color: [u8; 3],
}

/// Flattens a scene into world-frame boxes in a fixed draw order: per shelf
/// bottom to top first the deck then its stacks left to right, then the four
/// corner posts, then background clutter.
pub fn scene_objects(scene: &SceneDescription) -> Vec<RenderObject> {
    let cfg = &scene.config;
    let pose = scene.rack_pose;
    let mut out = Vec::new();
    for shelf in &scene.shelves {
        let deck = Obb::from_footprint(
            RotRect {
                cx: 0.0,
                cz: 0.0,
                half_w: cfg.shelf_width_m * 0.5,
                half_d: cfg.shelf_depth_m * 0.5,
                yaw_deg: 0.0,
            },
            shelf.surface_height_m - cfg.shelf_thickness_m,
            cfg.shelf_thickness_m,
        );
        out.push(RenderObject { obb: deck.transformed(pose), color: DECK_COLOR });
        for stack in &shelf.stacks {
            let obb =
                Obb::from_footprint(stack.footprint(), shelf.surface_height_m, stack.height_m());
            out.push(RenderObject {
                obb: obb.transformed(pose),
                color: box_color(stack.spec.color_id),
            });
        }
    }
    // Corner posts clear the deck slabs by a small margin so no two objects
    // share a face plane.
    if let Some(top_shelf) = scene.shelves.last() {
        let post_half = 0.04;
        let post_gap = 0.05;
        let top = top_shelf.surface_height_m + 0.25;
        for sx in [-1.0, 1.0] {
            for sz in [-1.0, 1.0] {
                let rect = RotRect {
                    cx: sx * (cfg.shelf_width_m * 0.5 + post_gap + post_half),
                    cz: sz * (cfg.shelf_depth_m * 0.5 + post_gap + post_half),
                    half_w: post_half,
                    half_d: post_half,
                    yaw_deg: 0.0,
                };
                let post = Obb::from_footprint(rect, 0.0, top);
                out.push(RenderObject { obb: post.transformed(pose), color: POST_COLOR });
            }
        }
    }
    for c in &scene.clutter {
        out.push(RenderObject { obb: c.obb, color: box_color(c.color_id) });
    }
    out
}

/// Renders the scene at the camera's resolution. Convenience wrapper over
/// [`rasterize_with_ids`].
pub fn rasterize(scene: &SceneDescription, cam: &CameraModel) -> Image {
    rasterize_with_ids(scene, cam).0
}

/// Renders the scene and also reports, per pixel, the draw-order index of
/// the object that won the depth test (-1 for background).
pub fn rasterize_with_ids(scene: &SceneDescription, cam: &CameraModel) -> (Image, Vec<i32>) {
    let objects = scene_objects(scene);
    let (width, height) = (cam.width, cam.height);
    let mut img = Image::new(width, height, BACKGROUND_COLOR);
    let mut ids = vec![-1i32; width * height];
    let mut inv_z = vec![0.0f64; width * height];

    for (id, obj) in objects.iter().enumerate() {
        draw_box(&mut img, &mut ids, &mut inv_z, cam, obj, id as i32);
    }
    (img, ids)
}

/// Direction the light travels; roughly from above, behind the camera side.
const LIGHT_DIR: Vec3 = vec3(-0.30, -0.80, -0.52);

fn shade(base: [u8; 3], normal: Vec3) -> [u8; 3] {
    let l = LIGHT_DIR.normalized();
    let lambert = (-l.dot(normal)).max(0.0);
    let brightness = 0.35 + 0.65 * lambert;
    base.map(|c| {
        let v = libm::round(c as f64 * brightness);
        v.clamp(0.0, 255.0) as u8
    })
}

/// Quad corner indices per face; corner index bit `k` holds the sign of
/// local axis `k` (bit 0 = x, bit 1 = y, bit 2 = z), matching
/// [`Obb::corners`].
const FACES: [([usize; 4], usize, f64); 6] = [
    ([1, 3, 7, 5], 0, 1.0),
    ([0, 4, 6, 2], 0, -1.0),
    ([2, 6, 7, 3], 1, 1.0),
    ([0, 1, 5, 4], 1, -1.0),
    ([4, 5, 7, 6], 2, 1.0),
    ([0, 2, 3, 1], 2, -1.0),
];

fn draw_box(
    img: &mut Image,
    ids: &mut [i32],
    inv_z: &mut [f64],
    cam: &CameraModel,
    obj: &RenderObject,
    id: i32,
) {
    let corners = obj.obb.corners();
    let axes = obj.obb.axes();
    let cam_pts = corners.map(|p| cam.world_to_camera(p));

    for (quad, axis, sign) in FACES {
        let normal = axes[axis] * sign;
        let color = shade(obj.color, normal);
        let tris = [
            [cam_pts[quad[0]], cam_pts[quad[1]], cam_pts[quad[2]]],
            [cam_pts[quad[0]], cam_pts[quad[2]], cam_pts[quad[3]]],
        ];
        for tri in tris {
            for clipped in clip_near(tri) {
                draw_triangle(img, ids, inv_z, cam, clipped, color, id);
            }
        }
    }
}

/// Clips a camera-space triangle against the near plane. Yields zero, one,
/// or two triangles.
fn clip_near(tri: [Vec3; 3]) -> Vec<[Vec3; 3]> {
    let mut poly: Vec<Vec3> = Vec::with_capacity(4);
    for i in 0..3 {
        let a = tri[i];
        let b = tri[(i + 1) % 3];
        let a_in = a.z >= NEAR_PLANE;
        let b_in = b.z >= NEAR_PLANE;
        if a_in {
            poly.push(a);
        }
        if a_in != b_in {
            let t = (NEAR_PLANE - a.z) / (b.z - a.z);
            poly.push(a + (b - a) * t);
        }
    }
    let mut out = Vec::with_capacity(2);
    for i in 1..poly.len().saturating_sub(1) {
        out.push([poly[0], poly[i], poly[i + 1]]);
    }
    out
}

#[inline]
fn edge(ax: f64, ay: f64, bx: f64, by: f64, px: f64, py: f64) -> f64 {
    (bx - ax) * (py - ay) - (by - ay) * (px - ax)
}

/// A pixel exactly on an edge belongs to the triangle for which that edge is
/// a top or left edge, so triangles sharing an edge never double-draw it.
#[inline]
fn owns_boundary(ax: f64, ay: f64, bx: f64, by: f64) -> bool {
    (ay == by && bx > ax) || ay > by
}

fn draw_triangle(
    img: &mut Image,
    ids: &mut [i32],
    inv_z: &mut [f64],
    cam: &CameraModel,
    tri: [Vec3; 3],
    color: [u8; 3],
    id: i32,
) {
    let mut v = [(0.0f64, 0.0f64, 0.0f64); 3];
    for (slot, p) in v.iter_mut().zip(tri) {
        match cam.project_camera(p) {
            Some((u, vv, z)) => *slot = (u, vv, 1.0 / z),
            // Vertices reach here already clipped to the near plane.
            None => return,
        }
    }

    let mut area2 = edge(v[0].0, v[0].1, v[1].0, v[1].1, v[2].0, v[2].1);
    if area2 == 0.0 {
        return;
    }
    if area2 < 0.0 {
        v.swap(1, 2);
        area2 = -area2;
    }

    let min_x = v.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let max_x = v.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let min_y = v.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let max_y = v.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);

    // Pixel centers sit at integer + 0.5.
    let x0 = libm::ceil(min_x - 0.5).max(0.0) as usize;
    let x1 = (libm::floor(max_x - 0.5).min(img.width as f64 - 1.0)) as isize;
    let y0 = libm::ceil(min_y - 0.5).max(0.0) as usize;
    let y1 = (libm::floor(max_y - 0.5).min(img.height as f64 - 1.0)) as isize;
    if x1 < x0 as isize || y1 < y0 as isize || min_x >= img.width as f64 || min_y >= img.height as f64 {
        return;
    }

    let owns = [
        owns_boundary(v[1].0, v[1].1, v[2].0, v[2].1),
        owns_boundary(v[2].0, v[2].1, v[0].0, v[0].1),
        owns_boundary(v[0].0, v[0].1, v[1].0, v[1].1),
    ];

    for py in y0..=y1 as usize {
        for px in x0..=x1 as usize {
            let cxp = px as f64 + 0.5;
            let cyp = py as f64 + 0.5;
            let w0 = edge(v[1].0, v[1].1, v[2].0, v[2].1, cxp, cyp);
            let w1 = edge(v[2].0, v[2].1, v[0].0, v[0].1, cxp, cyp);
            let w2 = edge(v[0].0, v[0].1, v[1].0, v[1].1, cxp, cyp);
            let inside = (w0 > 0.0 || (w0 == 0.0 && owns[0]))
                && (w1 > 0.0 || (w1 == 0.0 && owns[1]))
                && (w2 > 0.0 || (w2 == 0.0 && owns[2]));
            if !inside {
                continue;
            }
            let iz = (w0 * v[0].2 + w1 * v[1].2 + w2 * v[2].2) / area2;
            let idx = py * img.width + px;
            if iz > inv_z[idx] {
                inv_z[idx] = iz;
                ids[idx] = id;
                img.set(px, py, color);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegen::{generate_scene, SceneConfig};

    #[test]
    fn project_matches_pinhole_formula() {
        let cam = CameraModel {
            width: 128,
            height: 128,
            fx: 100.0,
            fy: 100.0,
            cx: 64.0,
            cy: 64.0,
            position: vec3(0.0, 0.0, 0.0),
            yaw_deg: 0.0,
        };
        // Camera-space (1, 0, 2): one unit right, two deep.
        let (u, v, z) = cam.project_camera(vec3(1.0, 0.0, 2.0)).unwrap();
        assert_eq!((u, v, z), (114.0, 64.0, 2.0));
        // The same point expressed in world coordinates (forward is -z).
        let (u, v, _) = cam.project(vec3(1.0, 0.0, -2.0)).unwrap();
        assert_eq!((u, v), (114.0, 64.0));
        // Points on the optical axis land on the principal point.
        let (u, v, _) = cam.project(vec3(0.0, 0.0, -3.0)).unwrap();
        assert_eq!((u, v), (64.0, 64.0));
    }

    #[test]
    fn project_rejects_points_behind_camera() {
        let cam = CameraModel {
            width: 128,
            height: 128,
            fx: 100.0,
            fy: 100.0,
            cx: 64.0,
            cy: 64.0,
            position: vec3(0.0, 1.0, 4.0),
            yaw_deg: 0.0,
        };
        assert!(cam.project(vec3(0.0, 1.0, 9.0)).is_none());
    }

    #[test]
    fn unproject_round_trips() {
        let cam = CameraModel {
            width: 128,
            height: 128,
            fx: 80.0,
            fy: 80.0,
            cx: 64.0,
            cy: 64.0,
            position: vec3(0.3, 1.7, 3.5),
            yaw_deg: 12.0,
        };
        let mut rng = crate::rng::SplitMix64::new(5);
        for _ in 0..100 {
            let p = vec3(
                rng.range_f64(-3.0, 3.0),
                rng.range_f64(0.0, 4.0),
                rng.range_f64(-3.0, 3.0),
            );
            if let Some((u, v, z)) = cam.project(p) {
                let q = cam.unproject(u, v, z);
                assert!((q - p).length() < 1e-9, "{p:?} vs {q:?}");
            }
        }
    }

    #[test]
    fn camera_pitch_and_roll_are_zero() {
        let cam = CameraModel {
            width: 128,
            height: 128,
            fx: 80.0,
            fy: 80.0,
            cx: 64.0,
            cy: 64.0,
            position: vec3(0.0, 2.0, 3.0),
            yaw_deg: 37.0,
        };
        let (right, down, forward) = cam.basis();
        assert_eq!(right.y, 0.0);
        assert_eq!(forward.y, 0.0);
        assert_eq!((down.x, down.y, down.z), (0.0, -1.0, 0.0));
    }

    fn test_camera() -> CameraModel {
        CameraModel {
            width: 128,
            height: 128,
            fx: 80.0,
            fy: 80.0,
            cx: 64.0,
            cy: 64.0,
            position: vec3(0.0, 1.7, 4.0),
            yaw_deg: 0.0,
        }
    }

    #[test]
    fn empty_scene_renders_background_only() {
        let cfg = SceneConfig { density: 0.0, background_clutter: false, num_shelves: 1, ..SceneConfig::default() };
        let mut scene = generate_scene(&cfg, 1).unwrap();
        scene.shelves.clear();
        let mut cam = test_camera();
        cam.width = 64;
        cam.height = 64;
        let img = rasterize(&scene, &cam);
        assert!(img.data.chunks(3).all(|c| c == BACKGROUND_COLOR));
    }

    #[test]
    fn shared_triangle_edge_has_no_gaps_or_double_draws() {
        // Two triangles forming a quad, drawn with distinct ids; every pixel
        // the quad covers must be claimed exactly once.
        let cam = test_camera();
        let mut img = Image::new(64, 64, BACKGROUND_COLOR);
        let mut ids = vec![-1i32; 64 * 64];
        let mut depth_a = vec![0.0f64; 64 * 64];
        // Camera-space quad corners, straddling the optical axis.
        let a = vec3(-1.0, -0.8, 3.0);
        let b = vec3(1.1, -0.9, 3.0);
        let c = vec3(1.0, 0.95, 3.0);
        let d = vec3(-1.05, 0.9, 3.0);
        draw_triangle(&mut img, &mut ids, &mut depth_a, &cam, [a, b, c], [10, 0, 0], 0);
        draw_triangle(&mut img, &mut ids, &mut depth_a, &cam, [a, c, d], [20, 0, 0], 1);

        // Redraw in the opposite order into a second buffer. If any pixel
        // were claimed by both triangles, the winner would differ between
        // the two orders (the depth test keeps the first claimant).
        let mut img2 = Image::new(64, 64, BACKGROUND_COLOR);
        let mut ids2 = vec![-1i32; 64 * 64];
        let mut depth_b = vec![0.0f64; 64 * 64];
        draw_triangle(&mut img2, &mut ids2, &mut depth_b, &cam, [a, c, d], [20, 0, 0], 1);
        draw_triangle(&mut img2, &mut ids2, &mut depth_b, &cam, [a, b, c], [10, 0, 0], 0);
        assert_eq!(ids, ids2);

        // No gaps: pixels strictly inside the quad are all claimed. Probe
        // along the shared diagonal's neighbourhood.
        let covered = ids.iter().filter(|&&i| i >= 0).count();
        assert!(covered > 500, "quad should cover a large area, got {covered}");
    }

    #[test]
    fn nearer_object_wins_depth_test() {
        let cfg = SceneConfig { background_clutter: false, ..SceneConfig::default() };
        let mut scene = generate_scene(&cfg, 3).unwrap();
        for shelf in &mut scene.shelves {
            shelf.stacks.clear();
        }
        // Two identical stacks dead ahead, one closer to the camera.
        let spec = cfg.box_catalog[0];
        scene.shelves[1].stacks.push(crate::scenegen::Stack {
            spec,
            center_x_m: 0.0,
            center_z_m: 0.3,
            yaw_deg: 0.0,
            layers: 1,
        });
        scene.shelves[1].stacks.push(crate::scenegen::Stack {
            spec,
            center_x_m: 0.0,
            center_z_m: -0.3,
            yaw_deg: 0.0,
            layers: 1,
        });
        let cam = CameraModel { position: vec3(0.0, 1.3, 3.0), ..test_camera() };
        let (_, ids) = rasterize_with_ids(&scene, &cam);
        // Draw order: shelf 0 deck (0), shelf 1 deck (1), then the two
        // stacks on shelf 1 in insertion order (2 near, 3 far).
        let near_pixels = ids.iter().filter(|&&i| i == 2).count();
        let far_pixels = ids.iter().filter(|&&i| i == 3).count();
        assert!(near_pixels > 0);
        // The near stack fully occludes the far one from this pose.
        assert_eq!(far_pixels, 0);
    }

    #[test]
    fn rendering_is_deterministic() {
        let cfg = SceneConfig::default();
        let scene = generate_scene(&cfg, 77).unwrap();
        let mut rng = crate::rng::SplitMix64::new(8);
        let cam = crate::scenegen::sample_camera(&crate::scenegen::CameraConfig::default(), &mut rng);
        let a = rasterize(&scene, &cam);
        let b = rasterize(&scene, &cam);
        assert_eq!(a.data, b.data);
    }

    #[test]
    fn removing_an_object_never_changes_other_objects_pixels() {
        let cfg = SceneConfig { background_clutter: false, ..SceneConfig::default() };
        let scene = generate_scene(&cfg, 21).unwrap();
        assert!(scene.stack_count() > 2);
        let (_, ids_full) = rasterize_with_ids(&scene, &test_camera());

        // Drop the last shelf's stacks; remaining objects keep their ids
        // because they precede the removed ones in draw order.
        let mut reduced = scene.clone();
        let removed_shelf = reduced.shelves.len() - 1;
        let kept: usize = (0..removed_shelf)
            .map(|i| 1 + reduced.shelves[i].stacks.len())
            .sum::<usize>()
            + 1;
        reduced.shelves[removed_shelf].stacks.clear();
        let (_, ids_less) = rasterize_with_ids(&reduced, &test_camera());
        // Objects drawn before the removed stacks keep their draw-order ids,
        // and a pixel they won can only have had the removed stacks behind
        // it, so it must be exactly unchanged.
        for (a, b) in ids_full.iter().zip(ids_less.iter()) {
            if *a >= 0 && (*a as usize) < kept {
                assert_eq!(*a, *b);
            }
        }
    }
}
