//! Procedural warehouse rack synthesis.
//!
//! A scene is one rack: a stack of horizontal shelf decks, each carrying a
//! row of box stacks, plus an optional distractor rack far behind it. All
//! sampling is driven by per-shelf substreams of a single scene seed, so a
//! scene is a pure function of `(config, seed)` and shelves do not perturb
//! each other's draws.
//!
//! Stacks are placed by a greedy left-to-right sweep: candidate boxes are
//! drawn from the catalog until either the shelf runs out of width or the
//! sampled target coverage is reached, then the leftover width is split into
//! random slack segments between the boxes. Each shelf records the coverage
//! fraction it was asked to fill; at fraction 1 the sweep degenerates to
//! dense packing and yields the maximum number of boxes that physically fit.

use alloc::string::String;
use alloc::vec::Vec;

use crate::geom::{sincos_deg, vec3, Obb, Pose2, RotRect, DEG_TO_RAD};
use crate::render::CameraModel;
use crate::rng::SplitMix64;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// One catalog entry: a rigid box that can be stacked in layers.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct BoxSpec {
    pub width_m: f64,
    pub depth_m: f64,
    pub height_m: f64,
    /// Index into the render palette.
    pub color_id: u8,
}

/// Rack geometry and sampling knobs for scene synthesis.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SceneConfig {
    pub num_shelves: usize,
    pub shelf_width_m: f64,
    pub shelf_depth_m: f64,
    /// Vertical spacing between consecutive shelf surfaces.
    pub inter_shelf_height_m: f64,
    /// Thickness of each shelf deck slab.
    pub shelf_thickness_m: f64,
    /// Scales the per-shelf coverage target; 0 empties every shelf.
    pub density: f64,
    pub max_stack_layers: u32,
    /// Minimum horizontal clearance between neighbouring stacks.
    pub min_gap_m: f64,
    /// Each stack's yaw is uniform in `[-rot, +rot]` degrees.
    pub rot_amplitude_deg: f64,
    pub box_catalog: Vec<BoxSpec>,
    /// When true, half of the scenes (decided per seed) get a distractor
    /// rack placed far behind the primary one.
    pub background_clutter: bool,
}

/// A stack of identical boxes resting on a shelf surface.
///
/// `center_x_m` / `center_z_m` are in the rack frame, relative to the shelf
/// center; `layers` boxes of `spec.height_m` sit directly on each other.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Stack {
    pub spec: BoxSpec,
    pub center_x_m: f64,
    pub center_z_m: f64,
    pub yaw_deg: f64,
    pub layers: u32,
}

impl Stack {
    pub fn height_m(&self) -> f64 {
        self.spec.height_m * self.layers as f64
    }

    pub fn footprint(&self) -> RotRect {
        RotRect {
            cx: self.center_x_m,
            cz: self.center_z_m,
            half_w: self.spec.width_m * 0.5,
            half_d: self.spec.depth_m * 0.5,
            yaw_deg: self.yaw_deg,
        }
    }
}

/// One shelf: a deck surface plus the stacks standing on it.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Shelf {
    /// Height of the load-bearing surface above the ground.
    pub surface_height_m: f64,
    /// The sampled target fraction of shelf width covered by stacks.
    pub fill_fraction: f64,
    pub stacks: Vec<Stack>,
}

/// A world-frame box belonging to the background, drawn but never labelled.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ClutterBox {
    pub obb: Obb,
    pub color_id: u8,
}

/// A full synthetic scene, reproducible from `(config, seed)`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SceneDescription {
    pub config: SceneConfig,
    /// Pose of the rack frame in the world frame.
    pub rack_pose: Pose2,
    pub shelves: Vec<Shelf>,
    pub clutter: Vec<ClutterBox>,
}

impl SceneDescription {
    /// Total number of stacks across all shelves.
    pub fn stack_count(&self) -> usize {
        self.shelves.iter().map(|s| s.stacks.len()).sum()
    }
}

/// Camera sampling ranges. The camera always sits in front of the rack
/// (positive `z` in the rack frame) and is aimed at the rack's center
/// column, with the image plane orthogonal to the ground.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct CameraConfig {
    pub image_width: usize,
    pub image_height: usize,
    /// Focal length in pixels, shared by both axes.
    pub focal_px: f64,
    /// Horizontal standoff from the rack center, metres.
    pub distance_range: [f64; 2],
    /// Camera height above the ground, metres.
    pub height_range: [f64; 2],
    /// Sideways offset from the rack center line, metres.
    pub lateral_range: [f64; 2],
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig {
            image_width: 128,
            image_height: 128,
            focal_px: 80.0,
            distance_range: [2.0, 4.0],
            height_range: [0.4, 4.6],
            lateral_range: [-0.35, 0.35],
        }
    }
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            num_shelves: 4,
            shelf_width_m: 3.6,
            shelf_depth_m: 0.9,
            inter_shelf_height_m: 1.0,
            shelf_thickness_m: 0.04,
            density: 1.0,
            max_stack_layers: 2,
            min_gap_m: 0.25,
            rot_amplitude_deg: 10.0,
            box_catalog: default_catalog(),
            background_clutter: true,
        }
    }
}

/// Six cardboard box sizes plus two wider crate sizes. Heights are kept at
/// multiples of 0.125 m so front-view bands land exactly on grid rows at the
/// default 8 m extent.
pub fn default_catalog() -> Vec<BoxSpec> {
    [
        (0.50, 0.50, 0.375),
        (0.60, 0.50, 0.500),
        (0.55, 0.55, 0.500),
        (0.70, 0.50, 0.375),
        (0.65, 0.60, 0.500),
        (0.50, 0.55, 0.375),
        (0.80, 0.60, 0.500),
        (0.60, 0.50, 0.375),
    ]
    .iter()
    .enumerate()
    .map(|(i, &(w, d, h))| BoxSpec {
        width_m: w,
        depth_m: d,
        height_m: h,
        color_id: i as u8,
    })
    .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub enum SceneError {
    InvalidConfig(String),
    /// A catalog box cannot fit on the shelf at every allowed yaw.
    BoxTooLarge { index: usize },
}

impl core::fmt::Display for SceneError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SceneError::InvalidConfig(msg) => write!(f, "invalid scene config: {msg}"),
            SceneError::BoxTooLarge { index } => {
                write!(f, "catalog box {index} cannot fit on the shelf")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for SceneError {}

/// Widest axis-aligned `x` span the box can occupy at any yaw in
/// `[-amp, amp]` degrees, and the matching `z` span.
fn max_extents(spec: &BoxSpec, amp_deg: f64) -> (f64, f64) {
    let amp = amp_deg * DEG_TO_RAD;
    let wide = |a: f64, b: f64| {
        // a*cos + b*sin on [0, amp] peaks at atan(b/a) or the endpoint.
        let peak = libm::atan2(b, a);
        let t = if peak < amp { peak } else { amp };
        a * libm::cos(t) + b * libm::sin(t)
    };
    (
        wide(spec.width_m, spec.depth_m),
        wide(spec.depth_m, spec.width_m),
    )
}

impl SceneConfig {
    /// Vertical clearance above a shelf surface, below the next deck slab.
    pub fn shelf_clearance_m(&self) -> f64 {
        self.inter_shelf_height_m - self.shelf_thickness_m
    }

    /// Height of shelf surface `i` above the ground. The lowest deck rests
    /// on the ground, so surface 0 sits at one slab thickness.
    pub fn surface_height_m(&self, shelf: usize) -> f64 {
        self.shelf_thickness_m + shelf as f64 * self.inter_shelf_height_m
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |msg: &str| Err(SceneError::InvalidConfig(String::from(msg)));
        if self.num_shelves == 0 {
            return bad("num_shelves must be at least 1");
        }
        if !(self.shelf_width_m > 0.0 && self.shelf_depth_m > 0.0) {
            return bad("shelf dimensions must be positive");
        }
        if !(self.shelf_thickness_m >= 0.0
            && self.inter_shelf_height_m > self.shelf_thickness_m)
        {
            return bad("inter-shelf height must exceed shelf thickness");
        }
        if !(0.0..=1.0).contains(&self.density) {
            return bad("density must lie in [0, 1]");
        }
        if self.max_stack_layers == 0 {
            return bad("max_stack_layers must be at least 1");
        }
        if self.min_gap_m < 0.0 {
            return bad("min_gap_m must be non-negative");
        }
        if !(0.0..=45.0).contains(&self.rot_amplitude_deg) {
            return bad("rot_amplitude_deg must lie in [0, 45]");
        }
        if self.box_catalog.is_empty() {
            return bad("box catalog must not be empty");
        }
        for (index, spec) in self.box_catalog.iter().enumerate() {
            if !(spec.width_m > 0.0 && spec.depth_m > 0.0 && spec.height_m > 0.0) {
                return bad("box dimensions must be positive");
            }
            let (ex, ez) = max_extents(spec, self.rot_amplitude_deg);
            if ex >= self.shelf_width_m
                || ez >= self.shelf_depth_m
                || spec.height_m > self.shelf_clearance_m()
            {
                return Err(SceneError::BoxTooLarge { index });
            }
        }
        Ok(())
    }
}

/// Places stacks on one shelf, aiming to cover `fraction` of its width.
///
/// The sweep keeps accepting random catalog boxes while the accumulated
/// footprint width stays under `fraction * shelf_width`. The box that would
/// cross the target is accepted with probability equal to the remaining
/// deficit over its width, which keeps the expected covered width equal to
/// the target. Leftover width is then distributed as random slack around the
/// minimum gaps, and each stack gets a uniform layer count capped so it
/// never pokes into the deck above.
pub fn place_stacks_with_fraction(
    cfg: &SceneConfig,
    fraction: f64,
    rng: &mut SplitMix64,
) -> Vec<Stack> {
    let width = cfg.shelf_width_m;
    let gap = cfg.min_gap_m;
    let target = fraction.clamp(0.0, 1.0) * width;

    // Accept boxes left to right until the shelf or the target is exhausted.
    let mut picks: Vec<(BoxSpec, f64, f64, f64)> = Vec::new(); // (spec, yaw, ex, ez)
    let mut covered = 0.0;
    loop {
        let spec = cfg.box_catalog[rng.below(cfg.box_catalog.len() as u64) as usize];
        let yaw = rng.range_f64(-cfg.rot_amplitude_deg, cfg.rot_amplitude_deg);
        let (s, c) = sincos_deg(yaw);
        let ex = spec.width_m * c.abs() + spec.depth_m * s.abs();
        let ez = spec.depth_m * c.abs() + spec.width_m * s.abs();
        if covered + ex + picks.len() as f64 * gap > width {
            break;
        }
        if covered + ex > target {
            let accept = (target - covered) / ex;
            if rng.next_f64() >= accept {
                break;
            }
        }
        picks.push((spec, yaw, ex, ez));
        covered += ex;
    }

    let n = picks.len();
    if n == 0 {
        return Vec::new();
    }

    let mut layer_counts = Vec::with_capacity(n);
    for (spec, ..) in &picks {
        let fit = libm::floor(cfg.shelf_clearance_m() / spec.height_m) as u32;
        let cap = cfg.max_stack_layers.min(fit.max(1));
        layer_counts.push(rng.range_u32(1, cap));
    }

    // Split the leftover width into n+1 slack segments (margins and
    // inter-stack padding on top of the minimum gap).
    let slack_total = width - (covered + (n as f64 - 1.0) * gap);
    let mut weights = Vec::with_capacity(n + 1);
    for _ in 0..=n {
        weights.push(rng.next_f64());
    }
    let weight_sum: f64 = weights.iter().sum();
    let scale = if weight_sum > 0.0 { slack_total / weight_sum } else { 0.0 };

    let mut stacks = Vec::with_capacity(n);
    let mut cursor = -width * 0.5;
    for (i, (spec, yaw, ex, ez)) in picks.iter().enumerate() {
        cursor += weights[i] * scale;
        if i > 0 {
            cursor += gap;
        }
        let free_z = cfg.shelf_depth_m - ez;
        let center_z = rng.range_f64(-free_z * 0.5, free_z * 0.5);
        stacks.push(Stack {
            spec: *spec,
            center_x_m: cursor + ex * 0.5,
            center_z_m: center_z,
            yaw_deg: *yaw,
            layers: layer_counts[i],
        });
        cursor += ex;
    }
    stacks
}

/// Samples the shelf's coverage target and places stacks accordingly.
/// Returns the sampled fraction alongside the stacks.
pub fn place_stacks(cfg: &SceneConfig, rng: &mut SplitMix64) -> (f64, Vec<Stack>) {
    let fraction = rng.next_f64() * cfg.density;
    let stacks = place_stacks_with_fraction(cfg, fraction, rng);
    (fraction, stacks)
}

const SALT_SHELF_BASE: u64 = 0x7368_656c_6600;
const SALT_CLUTTER: u64 = 0x636c_7574_7465;

/// Builds the full scene for `(cfg, seed)`.
///
/// Each shelf draws from its own seed substream, so editing one shelf's
/// outcome (for example by changing the catalog) never shifts the randomness
/// of the others.
pub fn generate_scene(cfg: &SceneConfig, seed: u64) -> Result<SceneDescription, SceneError> {
    cfg.validate()?;
    let mut shelves = Vec::with_capacity(cfg.num_shelves);
    for i in 0..cfg.num_shelves {
        let mut rng = SplitMix64::substream(seed, SALT_SHELF_BASE + i as u64);
        let (fill_fraction, stacks) = place_stacks(cfg, &mut rng);
        shelves.push(Shelf {
            surface_height_m: cfg.surface_height_m(i),
            fill_fraction,
            stacks,
        });
    }

    let mut clutter = Vec::new();
    if cfg.background_clutter {
        let mut rng = SplitMix64::substream(seed, SALT_CLUTTER);
        if rng.next_f64() < 0.5 {
            clutter = distractor_rack(cfg, &mut rng);
        }
    }

    Ok(SceneDescription {
        config: cfg.clone(),
        rack_pose: Pose2::IDENTITY,
        shelves,
        clutter,
    })
}

/// Distance from the rack center to the distractor rack behind it. Chosen
/// well past the detection range so clutter never enters the labelled
/// region, while staying inside the camera frustum.
pub const CLUTTER_SETBACK_M: f64 = 7.5;

/// A second, sparser rack far behind the primary one. It reuses the shelf
/// packing logic and is emitted as plain world-frame boxes.
fn distractor_rack(cfg: &SceneConfig, rng: &mut SplitMix64) -> Vec<ClutterBox> {
    let pose = Pose2 {
        x: rng.range_f64(-1.5, 1.5),
        z: -CLUTTER_SETBACK_M - rng.range_f64(0.0, 1.0),
        yaw_deg: rng.range_f64(-20.0, 20.0),
    };
    let mut out = Vec::new();
    for i in 0..cfg.num_shelves {
        let surface = cfg.surface_height_m(i);
        let deck = Obb::from_footprint(
            RotRect {
                cx: 0.0,
                cz: 0.0,
                half_w: cfg.shelf_width_m * 0.5,
                half_d: cfg.shelf_depth_m * 0.5,
                yaw_deg: 0.0,
            },
            surface - cfg.shelf_thickness_m,
            cfg.shelf_thickness_m,
        );
        out.push(ClutterBox { obb: deck.transformed(pose), color_id: CLUTTER_DECK_COLOR });
        let fraction = rng.next_f64() * 0.8;
        for stack in place_stacks_with_fraction(cfg, fraction, rng) {
            let obb = Obb::from_footprint(stack.footprint(), surface, stack.height_m());
            out.push(ClutterBox {
                obb: obb.transformed(pose),
                color_id: stack.spec.color_id,
            });
        }
    }
    out
}

/// Palette id used for distractor rack decks.
pub const CLUTTER_DECK_COLOR: u8 = u8::MAX;

/// Samples a camera pose: standoff, height, and lateral offset drawn in that
/// order, yaw chosen so the optical axis passes through the rack's vertical
/// center line.
pub fn sample_camera(cam: &CameraConfig, rng: &mut SplitMix64) -> CameraModel {
    let distance = rng.range_f64(cam.distance_range[0], cam.distance_range[1]);
    let height = rng.range_f64(cam.height_range[0], cam.height_range[1]);
    let lateral = rng.range_f64(cam.lateral_range[0], cam.lateral_range[1]);
    // Forward is (-sin a, 0, -cos a); aiming at the origin from
    // (lateral, height, distance) needs forward parallel to (-lateral, 0, -distance).
    let yaw_deg = libm::atan2(lateral, distance) / DEG_TO_RAD;
    CameraModel {
        width: cam.image_width,
        height: cam.image_height,
        fx: cam.focal_px,
        fy: cam.focal_px,
        cx: cam.image_width as f64 * 0.5,
        cy: cam.image_height as f64 * 0.5,
        position: vec3(lateral, height, distance),
        yaw_deg,
    }
}
