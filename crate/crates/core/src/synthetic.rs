//! Toy tabletop world: rigid boxes, a box-shaped gripper, a ray-casting
//! ground-truth renderer and scripted expert demonstrations.
//!
//! Nothing here touches the Gaussian rasterizer; the images it produces are
//! the independent reference the splatting pipeline is trained against.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::{DiscreteAction, Workspace};
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::persistence::{self, DatasetManifest, SampleRecord, ViewRecord, DATASET_VERSION};

pub const TABLE_ID: u32 = 0;
pub const GRIPPER_ID: u32 = 1;
pub const FIRST_BOX_ID: u32 = 2;

/// Half extents of the gripper box.
pub const GRIPPER_HALF: [f64; 3] = [0.04, 0.04, 0.06];

pub const BACKGROUND_RGB: [f64; 3] = [0.08, 0.09, 0.12];
const TABLE_RGB: [f64; 3] = [0.62, 0.5, 0.36];
const GRIPPER_RGB: [f64; 3] = [0.88, 0.88, 0.92];
const MARKER_RGB: [f64; 3] = [0.2, 0.78, 0.32];
const BOX_PALETTE: [[f64; 3]; 4] = [
    [0.86, 0.2, 0.15],
    [0.16, 0.3, 0.86],
    [0.92, 0.78, 0.12],
    [0.6, 0.22, 0.7],
];
const AMBIENT: f64 = 0.45;

fn light_dir() -> Vector3<f64> {
    Vector3::new(0.35, -0.55, 1.0).normalize()
}

/// The 12 directions `(±1, ±1, 0)/√2` and permutations; distinct codes have
/// cosine similarity at most 0.5.
pub fn semantic_code(object_id: u32) -> [f64; 3] {
    const S: f64 = std::f64::consts::FRAC_1_SQRT_2;
    const CODES: [[f64; 3]; 12] = [
        [S, S, 0.0],
        [-S, 0.0, S],
        [0.0, S, -S],
        [S, -S, 0.0],
        [0.0, -S, -S],
        [-S, 0.0, -S],
        [0.0, S, S],
        [S, 0.0, S],
        [-S, S, 0.0],
        [S, 0.0, -S],
        [0.0, -S, S],
        [-S, -S, 0.0],
    ];
    CODES[object_id as usize % CODES.len()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxObject {
    pub center: [f64; 3],
    pub half_extents: [f64; 3],
    /// Rotation about world z, radians.
    pub yaw: f64,
    pub color: [f64; 3],
    pub object_id: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gripper {
    pub position: [f64; 3],
    pub yaw: f64,
    pub openness: u8,
}

impl Gripper {
    fn as_box(&self) -> BoxObject {
        BoxObject {
            center: self.position,
            half_extents: GRIPPER_HALF,
            yaw: self.yaw,
            color: GRIPPER_RGB,
            object_id: GRIPPER_ID,
        }
    }
}

/// Finite table top, a horizontal rectangle centered on the z axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub height: f64,
    pub half_size: [f64; 2],
    pub color: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub boxes: Vec<BoxObject>,
    pub gripper: Option<Gripper>,
    pub table: Option<Table>,
}

impl WorldState {
    pub fn empty() -> Self {
        Self {
            boxes: Vec::new(),
            gripper: None,
            table: None,
        }
    }

    pub fn table_height(&self) -> f64 {
        self.table.as_ref().map_or(0.0, |t| t.height)
    }

    pub fn find(&self, object_id: u32) -> Option<&BoxObject> {
        self.boxes.iter().find(|b| b.object_id == object_id)
    }

    fn find_mut(&mut self, object_id: u32) -> Option<&mut BoxObject> {
        self.boxes.iter_mut().find(|b| b.object_id == object_id)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids: Vec<u32> = self.boxes.iter().map(|b| b.object_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("duplicate object ids".into()));
        }
        let floor = self.table_height();
        for b in &self.boxes {
            if b.half_extents.iter().any(|h| !(*h > 0.0)) {
                return Err(Error::InvalidParameter(format!("box {} has non-positive extent", b.object_id)));
            }
            if b.center[2] - b.half_extents[2] < floor - 1e-9 {
                return Err(Error::InvalidParameter(format!("box {} sinks below the table", b.object_id)));
            }
        }
        Ok(())
    }
}

/// Ground-truth images from the ray caster.
#[derive(Debug, Clone, PartialEq)]
pub struct RaycastImages {
    pub rgb: Image,
    /// Camera-space z of the hit, 0 where the ray escapes.
    pub depth: Image,
    pub semantic: Image,
    /// Object id per pixel, -1 for background.
    pub object_id: Vec<i32>,
}

impl RaycastImages {
    /// Mean pixel coordinate of an object's visible pixels.
    pub fn centroid(&self, object_id: u32) -> Option<[f64; 2]> {
        let w = self.rgb.width;
        let mut acc = [0.0, 0.0];
        let mut n = 0usize;
        for (i, &id) in self.object_id.iter().enumerate() {
            if id == object_id as i32 {
                acc[0] += (i % w) as f64;
                acc[1] += (i / w) as f64;
                n += 1;
            }
        }
        (n > 0).then(|| [acc[0] / n as f64, acc[1] / n as f64])
    }
}

struct Hit {
    t: f64,
    normal: Vector3<f64>,
    color: [f64; 3],
    id: u32,
}

fn intersect_box(b: &BoxObject, origin: &Vector3<f64>, dir: &Vector3<f64>, near: f64) -> Option<(f64, Vector3<f64>)> {
    let to_local = Rotation3::from_axis_angle(&Vector3::z_axis(), -b.yaw);
    let o = to_local * (origin - Vector3::from(b.center));
    let d = to_local * dir;
    let mut t_enter = f64::NEG_INFINITY;
    let mut t_exit = f64::INFINITY;
    let mut axis = 0;
    for k in 0..3 {
        let h = b.half_extents[k];
        if d[k].abs() < 1e-15 {
            if o[k].abs() > h {
                return None;
            }
            continue;
        }
        let t1 = (-h - o[k]) / d[k];
        let t2 = (h - o[k]) / d[k];
        let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        if lo > t_enter {
            t_enter = lo;
            axis = k;
        }
        t_exit = t_exit.min(hi);
    }
    if t_enter > t_exit || t_enter <= near {
        return None;
    }
    let mut n = Vector3::zeros();
    n[axis] = -d[axis].signum();
    Some((t_enter, to_local.inverse() * n))
}

fn intersect_table(table: &Table, origin: &Vector3<f64>, dir: &Vector3<f64>, near: f64) -> Option<(f64, Vector3<f64>)> {
    if dir.z.abs() < 1e-15 {
        return None;
    }
    let t = (table.height - origin.z) / dir.z;
    if t <= near {
        return None;
    }
    let p = origin + dir * t;
    if p.x.abs() > table.half_size[0] || p.y.abs() > table.half_size[1] {
        return None;
    }
    let up = if origin.z >= table.height { 1.0 } else { -1.0 };
    Some((t, Vector3::new(0.0, 0.0, up)))
}

/// Renders the world with a nearest-hit ray caster and Lambertian shading.
///
/// Rays use a camera-z-normalized direction, so the hit parameter is the
/// depth along the optical axis.
pub fn raycast_render(state: &WorldState, cam: &Camera) -> RaycastImages {
    let (w, h) = (cam.width, cam.height);
    let mut rgb = Image::new(w, h, 3);
    let mut depth = Image::new(w, h, 1);
    let mut semantic = Image::new(w, h, 3);
    let mut ids = vec![-1; w * h];
    let origin = cam.center();
    let light = light_dir();
    let gripper = state.gripper.as_ref().map(Gripper::as_box);
    let solids: Vec<&BoxObject> = state.boxes.iter().chain(gripper.as_ref()).collect();
    for y in 0..h {
        for x in 0..w {
            let dir = cam.ray_direction(x as f64, y as f64);
            let mut best: Option<Hit> = None;
            let mut consider = |t: f64, normal: Vector3<f64>, color: [f64; 3], id: u32| {
                if t < cam.far && best.as_ref().map_or(true, |b| t < b.t) {
                    best = Some(Hit { t, normal, color, id });
                }
            };
            for b in &solids {
                if let Some((t, n)) = intersect_box(b, &origin, &dir, cam.near) {
                    consider(t, n, b.color, b.object_id);
                }
            }
            if let Some(table) = &state.table {
                if let Some((t, n)) = intersect_table(table, &origin, &dir, cam.near) {
                    consider(t, n, table.color, TABLE_ID);
                }
            }
            let px = rgb.pixel_mut(x, y);
            match best {
                Some(hit) => {
                    let shade = AMBIENT + (1.0 - AMBIENT) * hit.normal.dot(&light).max(0.0);
                    for k in 0..3 {
                        px[k] = hit.color[k] * shade;
                    }
                    depth.pixel_mut(x, y)[0] = hit.t;
                    semantic.pixel_mut(x, y).copy_from_slice(&semantic_code(hit.id));
                    ids[y * w + x] = hit.id as i32;
                }
                None => px.copy_from_slice(&BACKGROUND_RGB),
            }
        }
    }
    RaycastImages {
        rgb,
        depth,
        semantic,
        object_id: ids,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    PushToTarget,
    StackBlocks,
    PickPlace,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::PushToTarget, Task::StackBlocks, Task::PickPlace];

    pub fn tag(&self) -> &'static str {
        match self {
            Task::PushToTarget => "push_to_target",
            Task::StackBlocks => "stack_blocks",
            Task::PickPlace => "pick_place",
        }
    }

    pub fn index(&self) -> usize {
        Task::ALL.iter().position(|t| t == self).unwrap()
    }

    pub fn one_hot(&self) -> [f64; 3] {
        let mut v = [0.0; 3];
        v[self.index()] = 1.0;
        v
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.tag() == s)
            .ok_or_else(|| Error::UnknownTask(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub state: WorldState,
    /// Binned pose the expert moves to next.
    pub action: DiscreteAction,
    /// End-effector x, y, z and openness.
    pub proprioception: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub task: Task,
    pub seed: u64,
    pub keyframes: Vec<Keyframe>,
}

/// Grid the expert plans on; every scripted gripper pose is a voxel center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptSettings {
    pub workspace: Workspace,
    pub resolution: usize,
}

impl Default for ScriptSettings {
    fn default() -> Self {
        Self {
            workspace: Workspace::default(),
            resolution: 20,
        }
    }
}

/// One gripper pose of an expert plan.
struct Waypoint {
    position: Vector3<f64>,
    yaw: f64,
    open: bool,
    collision: bool,
    /// Box carried or pushed along while moving to this pose.
    carry: Option<u32>,
}

const MAX_SCRIPT_PITCH: f64 = 0.04;

struct Planner {
    settings: ScriptSettings,
    pitch: f64,
}

impl Planner {
    fn new(settings: ScriptSettings) -> Result<Self> {
        settings.workspace.validate()?;
        if settings.resolution == 0 {
            return Err(Error::InvalidParameter("script resolution must be positive".into()));
        }
        let pitch = settings.workspace.pitch(settings.resolution).x;
        // layouts are laid out in cells; coarser grids push poses off the table
        if pitch > MAX_SCRIPT_PITCH + 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "scripted episodes need a voxel pitch of at most {MAX_SCRIPT_PITCH} m, got {pitch:.4} m; raise the resolution"
            )));
        }
        Ok(Self { settings, pitch })
    }

    fn snap(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.settings.workspace.snap(&p, self.settings.resolution)
    }

    /// Voxel-center x or y coordinate `k` cells from the workspace center.
    fn cell(&self, axis: usize, k: i64) -> f64 {
        let ws = &self.settings.workspace;
        let mid = 0.5 * (ws.min[axis] + ws.max[axis]);
        let idx = ((mid - ws.min[axis]) / self.pitch).floor();
        ws.min[axis] + (idx + 0.5 + k as f64) * self.pitch
    }

    fn home(&self) -> Vector3<f64> {
        self.snap(Vector3::new(0.0, 0.04, 0.36))
    }

    /// Quantized yaw angle at a rotation bin center.
    fn yaw(&self, rng: &mut ChaCha8Rng) -> f64 {
        let bin: i64 = rng.gen_range(-6..6);
        ((bin as f64 + 0.5) * 5.0).to_radians()
    }

    fn execute(&self, task: Task, seed: u64, mut state: WorldState, plan: Vec<Waypoint>) -> Result<Episode> {
        let ws = &self.settings.workspace;
        let v = self.settings.resolution;
        let mut keyframes = Vec::with_capacity(plan.len());
        for next in plan {
            let g = state.gripper.clone().expect("scripted worlds carry a gripper");
            let current = Vector3::from(g.position);
            let euler = [std::f64::consts::PI, 0.0, next.yaw.rem_euclid(std::f64::consts::TAU)];
            let action = DiscreteAction::from_pose(&next.position, euler, next.open, next.collision, ws, v)?;
            keyframes.push(Keyframe {
                state: state.clone(),
                action,
                proprioception: [current.x, current.y, current.z, g.openness as f64],
            });
            let shift = next.position - current;
            if let Some(id) = next.carry {
                let b = state.find_mut(id).expect("carried box exists");
                for k in 0..3 {
                    b.center[k] += shift[k];
                }
            }
            state.gripper = Some(Gripper {
                position: next.position.into(),
                yaw: next.yaw,
                openness: next.open as u8,
            });
        }
        // final keyframe holds position
        let g = state.gripper.clone().unwrap();
        let p = Vector3::from(g.position);
        let euler = [std::f64::consts::PI, 0.0, g.yaw.rem_euclid(std::f64::consts::TAU)];
        keyframes.push(Keyframe {
            action: DiscreteAction::from_pose(&p, euler, g.openness == 1, false, ws, v)?,
            proprioception: [p.x, p.y, p.z, g.openness as f64],
            state,
        });
        for k in &keyframes {
            k.state.validate()?;
        }
        Ok(Episode { task, seed, keyframes })
    }
}

fn table_for(ws: &Workspace) -> Table {
    Table {
        height: 0.0,
        half_size: [0.5 * (ws.max[0] - ws.min[0]), 0.5 * (ws.max[1] - ws.min[1])],
        color: TABLE_RGB,
    }
}

fn overlaps(a: &BoxObject, b: &BoxObject, margin: f64) -> bool {
    // conservative circle test in the table plane
    let ra = a.half_extents[0].hypot(a.half_extents[1]);
    let rb = b.half_extents[0].hypot(b.half_extents[1]);
    let d = (a.center[0] - b.center[0]).hypot(a.center[1] - b.center[1]);
    d < ra + rb + margin
}

fn place_distractors(
    planner: &Planner,
    rng: &mut ChaCha8Rng,
    state: &mut WorldState,
    keep_clear: &[BoxObject],
    count: usize,
    next_id: &mut u32,
) {
    let half = 0.04;
    let mut placed = 0;
    for _ in 0..200 {
        if placed == count {
            break;
        }
        let candidate = BoxObject {
            center: [planner.cell(0, rng.gen_range(-8..8)), planner.cell(1, rng.gen_range(-8..8)), half],
            half_extents: [half, half, half],
            yaw: planner.yaw(rng),
            color: BOX_PALETTE[(*next_id as usize) % BOX_PALETTE.len()],
            object_id: *next_id,
        };
        let clear = keep_clear
            .iter()
            .chain(state.boxes.iter())
            .all(|b| !overlaps(b, &candidate, 0.04));
        if clear {
            state.boxes.push(candidate);
            *next_id += 1;
            placed += 1;
        }
    }
}

fn script_push(planner: &Planner, seed: u64, rng: &mut ChaCha8Rng) -> Result<Episode> {
    let p = planner.pitch;
    // contact and slide poses stay on voxel centers: half depth plus the
    // gripper half width is a whole number of cells
    let half = [p, 1.5 * p, p];
    let slide = 4.0 * p;
    let start = Vector3::new(planner.cell(0, rng.gen_range(-6..-1)), planner.cell(1, rng.gen_range(-3..4)), half[2]);
    let target = start + Vector3::new(slide, 0.0, 0.0);
    let block = BoxObject {
        center: start.into(),
        half_extents: half,
        yaw: 0.0,
        color: BOX_PALETTE[0],
        object_id: FIRST_BOX_ID,
    };
    let marker = BoxObject {
        center: [target.x, target.y, 0.002],
        half_extents: [half[0], half[1], 0.002],
        yaw: 0.0,
        color: MARKER_RGB,
        object_id: FIRST_BOX_ID + 1,
    };
    let mut state = WorldState {
        boxes: vec![block.clone(), marker.clone()],
        gripper: Some(Gripper {
            position: planner.home().into(),
            yaw: 0.0,
            openness: 0,
        }),
        table: Some(table_for(&planner.settings.workspace)),
    };
    // keep the whole sweep of block and gripper free of distractors
    let sweep = BoxObject {
        center: [start.x + 0.5 * slide - p, start.y, half[2]],
        half_extents: [half[0] + 0.5 * slide + 3.0 * p, half[1] + p, half[2]],
        ..block.clone()
    };
    let mut next_id = FIRST_BOX_ID + 2;
    let extra = rng.gen_range(0..=2);
    place_distractors(planner, rng, &mut state, &[sweep], extra, &mut next_id);

    let contact_x = start.x - half[0] - GRIPPER_HALF[0];
    let z = planner.snap(Vector3::new(0.0, 0.0, GRIPPER_HALF[2] + 0.5 * p)).z;
    let contact = planner.snap(Vector3::new(contact_x, start.y, z));
    let pre = contact - Vector3::new(2.0 * p, 0.0, 0.0);
    let end = contact + Vector3::new(slide, 0.0, 0.0);
    let retreat = end + Vector3::new(-2.0 * p, 0.0, 4.0 * p);
    let wp = |position, collision, carry| Waypoint {
        position,
        yaw: 0.0,
        open: false,
        collision,
        carry,
    };
    let plan = vec![
        wp(pre, false, None),
        wp(contact, true, None),
        wp(end, true, Some(FIRST_BOX_ID)),
        wp(retreat, false, None),
    ];
    planner.execute(Task::PushToTarget, seed, state, plan)
}

/// Grasp a block and set it down at `place_center` (block center).
fn grasp_and_place(
    planner: &Planner,
    task: Task,
    seed: u64,
    state: WorldState,
    block: &BoxObject,
    place_center: Vector3<f64>,
) -> Result<Episode> {
    let p = planner.pitch;
    // fingers close around the upper half of the block
    let grasp = planner.snap(Vector3::from(block.center) + Vector3::new(0.0, 0.0, p));
    let offset = Vector3::from(block.center) - grasp;
    let lift = 4.0 * p;
    let above = |q: Vector3<f64>| q + Vector3::new(0.0, 0.0, lift);
    let place = planner.snap(place_center - offset);
    let yaw = block.yaw;
    let wp = |position, open, collision, carry| Waypoint {
        position,
        yaw,
        open,
        collision,
        carry,
    };
    let plan = vec![
        wp(above(grasp), true, false, None),
        wp(grasp, false, true, None),
        wp(above(grasp), false, false, Some(block.object_id)),
        wp(above(place), false, false, Some(block.object_id)),
        wp(place, true, true, Some(block.object_id)),
        wp(above(place), true, false, None),
    ];
    planner.execute(task, seed, state, plan)
}

fn script_stack(planner: &Planner, seed: u64, rng: &mut ChaCha8Rng) -> Result<Episode> {
    let p = planner.pitch;
    let half = [p, p, p];
    let a = BoxObject {
        center: [planner.cell(0, rng.gen_range(-6..-2)), planner.cell(1, rng.gen_range(-5..5)), half[2]],
        half_extents: half,
        yaw: planner.yaw(rng),
        color: BOX_PALETTE[0],
        object_id: FIRST_BOX_ID,
    };
    let b = BoxObject {
        center: [planner.cell(0, rng.gen_range(2..6)), planner.cell(1, rng.gen_range(-5..5)), half[2]],
        half_extents: half,
        yaw: planner.yaw(rng),
        color: BOX_PALETTE[1],
        object_id: FIRST_BOX_ID + 1,
    };
    let mut state = WorldState {
        boxes: vec![a.clone(), b.clone()],
        gripper: Some(Gripper {
            position: planner.home().into(),
            yaw: 0.0,
            openness: 1,
        }),
        table: Some(table_for(&planner.settings.workspace)),
    };
    let mut next_id = FIRST_BOX_ID + 2;
    let extra = rng.gen_range(0..=2);
    place_distractors(planner, rng, &mut state, &[a.clone(), b.clone()], extra, &mut next_id);
    let on_top = Vector3::from(b.center) + Vector3::new(0.0, 0.0, b.half_extents[2] + a.half_extents[2]);
    grasp_and_place(planner, Task::StackBlocks, seed, state, &a, on_top)
}

fn script_pick_place(planner: &Planner, seed: u64, rng: &mut ChaCha8Rng) -> Result<Episode> {
    let p = planner.pitch;
    let half = [p, p, p];
    let a = BoxObject {
        center: [planner.cell(0, rng.gen_range(-6..-2)), planner.cell(1, rng.gen_range(-5..5)), half[2]],
        half_extents: half,
        yaw: planner.yaw(rng),
        color: BOX_PALETTE[2],
        object_id: FIRST_BOX_ID,
    };
    let goal = Vector3::new(planner.cell(0, rng.gen_range(2..6)), planner.cell(1, rng.gen_range(-5..5)), half[2]);
    let marker = BoxObject {
        center: [goal.x, goal.y, 0.002],
        half_extents: [1.5 * p, 1.5 * p, 0.002],
        yaw: 0.0,
        color: MARKER_RGB,
        object_id: FIRST_BOX_ID + 1,
    };
    let mut state = WorldState {
        boxes: vec![a.clone(), marker.clone()],
        gripper: Some(Gripper {
            position: planner.home().into(),
            yaw: 0.0,
            openness: 1,
        }),
        table: Some(table_for(&planner.settings.workspace)),
    };
    let mut next_id = FIRST_BOX_ID + 2;
    let extra = rng.gen_range(0..=2);
    place_distractors(planner, rng, &mut state, &[a.clone(), marker], extra, &mut next_id);
    grasp_and_place(planner, Task::PickPlace, seed, state, &a, goal)
}

pub fn script_episode(task: Task, seed: u64) -> Result<Episode> {
    script_episode_with(task, seed, &ScriptSettings::default())
}

/// Deterministic expert demonstration for `(task, seed)`.
pub fn script_episode_with(task: Task, seed: u64, settings: &ScriptSettings) -> Result<Episode> {
    let planner = Planner::new(*settings)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((task.index() as u64 + 1) << 48));
    match task {
        Task::PushToTarget => script_push(&planner, seed, &mut rng),
        Task::StackBlocks => script_stack(&planner, seed, &mut rng),
        Task::PickPlace => script_pick_place(&planner, seed, &mut rng),
    }
}

/// The default static scene: three boxes on the table, gripper parked above.
pub fn default_scene() -> WorldState {
    let ws = Workspace::default();
    WorldState {
        boxes: vec![
            BoxObject {
                center: [-0.14, -0.06, 0.06],
                half_extents: [0.06, 0.06, 0.06],
                yaw: 0.3,
                color: BOX_PALETTE[0],
                object_id: FIRST_BOX_ID,
            },
            BoxObject {
                center: [0.14, 0.02, 0.04],
                half_extents: [0.08, 0.04, 0.04],
                yaw: -0.5,
                color: BOX_PALETTE[1],
                object_id: FIRST_BOX_ID + 1,
            },
            BoxObject {
                center: [0.02, 0.18, 0.08],
                half_extents: [0.04, 0.04, 0.08],
                yaw: 0.0,
                color: BOX_PALETTE[2],
                object_id: FIRST_BOX_ID + 2,
            },
        ],
        gripper: None,
        table: Some(table_for(&ws)),
    }
}

/// Front observation camera and a ring of supervision cameras.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub front: Camera,
    pub supervision: Vec<Camera>,
}

impl CameraRig {
    pub fn new(width: usize, height: usize, supervision: usize) -> Result<Self> {
        let target = Vector3::new(0.0, 0.04, 0.12);
        let up = Vector3::z();
        let fov = 50f64.to_radians();
        let front = Camera::look_at(Vector3::new(0.0, -0.72, 0.68), target, up, fov, width, height)?;
        let cams = (0..supervision)
            .map(|k| {
                let az = std::f64::consts::TAU * k as f64 / supervision as f64 + 0.3;
                let (radius, z) = if k % 2 == 0 { (1.15, 0.6) } else { (0.95, 0.95) };
                let eye = Vector3::new(radius * az.cos(), radius * az.sin(), z);
                Camera::look_at(eye, target, up, fov, width, height)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            front,
            supervision: cams,
        })
    }

    /// Front camera first, then the supervision ring.
    pub fn all(&self) -> impl Iterator<Item = &Camera> {
        std::iter::once(&self.front).chain(self.supervision.iter())
    }

    pub fn len(&self) -> usize {
        1 + self.supervision.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Settings for writing a dataset to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub tasks: Vec<Task>,
    pub episodes_per_task: usize,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub supervision_cameras: usize,
    pub script: ScriptSettings,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            tasks: Task::ALL.to_vec(),
            episodes_per_task: 20,
            seed: 0,
            width: 128,
            height: 128,
            supervision_cameras: 20,
            script: ScriptSettings::default(),
        }
    }
}

impl DataConfig {
    pub fn episode_seed(&self, episode: usize) -> u64 {
        self.seed.wrapping_mul(1_000_003).wrapping_add(episode as u64)
    }

    /// Episodes in dataset order, tasks outermost.
    pub fn episodes(&self) -> Result<Vec<Episode>> {
        let jobs: Vec<(usize, Task)> = self
            .tasks
            .iter()
            .flat_map(|t| std::iter::repeat(*t).take(self.episodes_per_task))
            .enumerate()
            .collect();
        jobs.into_par_iter()
            .map(|(i, task)| script_episode_with(task, self.episode_seed(i), &self.script))
            .collect()
    }
}

/// Ray-cast images of every keyframe from every rig camera (front first).
pub fn render_episode(episode: &Episode, rig: &CameraRig) -> Vec<Vec<RaycastImages>> {
    episode
        .keyframes
        .par_iter()
        .map(|k| rig.all().map(|cam| raycast_render(&k.state, cam)).collect())
        .collect()
}

/// Scripts, renders and writes every episode under `out`.
pub fn gen_dataset(config: &DataConfig, out: &Path) -> Result<DatasetManifest> {
    if config.width == 0 || config.height == 0 {
        return Err(Error::Config("image size must be positive".into()));
    }
    let rig = CameraRig::new(config.width, config.height, config.supervision_cameras)?;
    let camera_file = "cameras.toml".to_string();
    let rig_text = toml::to_string(&rig).map_err(|e| Error::Config(e.to_string()))?;
    persistence::write_file(&out.join(&camera_file), rig_text.as_bytes())?;
    let episodes = config.episodes()?;
    let per_episode: Vec<Vec<SampleRecord>> = episodes
        .par_iter()
        .enumerate()
        .map(|(e, ep)| -> Result<Vec<SampleRecord>> {
            let renders = render_episode(ep, &rig);
            let mut records = Vec::with_capacity(ep.keyframes.len());
            for (k, (kf, views)) in ep.keyframes.iter().zip(&renders).enumerate() {
                let dir = format!("ep{e:04}/kf{k:02}");
                let state_file = format!("{dir}/state.toml");
                let state = toml::to_string(&kf.state).map_err(|e| Error::Config(e.to_string()))?;
                persistence::write_file(&out.join(&state_file), state.as_bytes())?;
                let mut view_records = Vec::with_capacity(views.len());
                for (c, img) in views.iter().enumerate() {
                    let rec = ViewRecord {
                        camera: c,
                        rgb: format!("{dir}/cam{c:02}_rgb.pfm"),
                        depth: format!("{dir}/cam{c:02}_depth.pfm"),
                        semantic: format!("{dir}/cam{c:02}_sem.pfm"),
                    };
                    persistence::write_pfm(&out.join(&rec.rgb), &img.rgb)?;
                    persistence::write_pfm(&out.join(&rec.depth), &img.depth)?;
                    persistence::write_pfm(&out.join(&rec.semantic), &img.semantic)?;
                    view_records.push(rec);
                }
                let front = &views[0].rgb;
                persistence::write_png(&out.join(format!("{dir}/front.png")), front.width, front.height, &front.to_rgb8())?;
                records.push(SampleRecord {
                    episode: e,
                    task: ep.task,
                    seed: ep.seed,
                    keyframe: k,
                    camera_file: camera_file.clone(),
                    state_file,
                    action: kf.action,
                    proprioception: kf.proprioception,
                    views: view_records,
                });
            }
            Ok(records)
        })
        .collect::<Result<_>>()?;
    let manifest = DatasetManifest {
        format_version: DATASET_VERSION,
        tasks: config.tasks.clone(),
        seed: config.seed,
        width: config.width,
        height: config.height,
        voxel_resolution: config.script.resolution,
        workspace: config.script.workspace,
        config: toml::to_string(config).map_err(|e| Error::Config(e.to_string()))?,
        samples: per_episode.into_iter().flatten().collect(),
    };
    persistence::save_manifest(&manifest, out)?;
    Ok(manifest)
}

/// Reads the camera rig stored next to a dataset manifest.
pub fn load_rig(path: &Path) -> Result<CameraRig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rig: CameraRig = toml::from_str(&text).map_err(|e| Error::Malformed {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    for cam in rig.all() {
        cam.validate()?;
    }
    Ok(rig)
}

/// Reads a keyframe world state written by [`gen_dataset`].
pub fn load_state(path: &Path) -> Result<WorldState> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Malformed {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}
