//! Parametric motions on a 15-joint humanoid.
//!
//! Joint layout (y up, body facing +z, the figure's left on +x):
//!
//! | index | joint          | index | joint          |
//! |-------|----------------|-------|----------------|
//! | 0     | pelvis (root)  | 8     | right hand     |
//! | 1     | neck           | 9     | left hip       |
//! | 2     | head           | 10    | left knee      |
//! | 3     | left shoulder  | 11    | left foot      |
//! | 4     | left elbow     | 12    | right hip      |
//! | 5     | left hand      | 13    | right knee     |
//! | 6     | right shoulder | 14    | right foot     |
//! | 7     | right elbow    |       |                |
//!
//! Classes `0..8` perform one repetition of each [`MotionKind`]; classes
//! `8..16` perform two repetitions of the same motion in the same time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Joint, SkeletonSequence, Topology};
use crate::error::{AfeError, Result};

pub const MAX_SYNTH_CLASSES: usize = 16;
const JOINTS: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionKind {
    ArmRaise,
    Wave,
    Squat,
    Kick,
    Lean,
    Turn,
    Reach,
    Clap,
}

impl MotionKind {
    pub const ALL: [MotionKind; 8] = [
        Self::ArmRaise,
        Self::Wave,
        Self::Squat,
        Self::Kick,
        Self::Lean,
        Self::Turn,
        Self::Reach,
        Self::Clap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::ArmRaise => "arm-raise",
            Self::Wave => "wave",
            Self::Squat => "squat",
            Self::Kick => "kick",
            Self::Lean => "lean",
            Self::Turn => "turn",
            Self::Reach => "reach",
            Self::Clap => "clap",
        }
    }

    /// Motion and repetition count of a class index.
    pub fn of_class(class: usize) -> (Self, u32) {
        (Self::ALL[class % 8], 1 + (class / 8) as u32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub class_count: usize,
    pub sequences_per_class: usize,
    /// Gaussian joint noise, meters.
    pub noise_std: f64,
    /// Yaw drawn uniformly from `[-view_yaw_range, view_yaw_range]` degrees.
    pub view_yaw_range: f64,
    /// Uniform body scale bounds.
    pub body_scale_range: (f64, f64),
    pub seed: u64,
    /// Frames per sequence.
    pub frames: usize,
    /// Motion amplitude drawn from `1 ± amplitude_jitter`.
    pub amplitude_jitter: f64,
    /// Start of the motion shifted by up to this fraction of the sequence.
    pub phase_jitter: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            class_count: 8,
            sequences_per_class: 125,
            noise_std: 0.01,
            view_yaw_range: 30.0,
            body_scale_range: (0.9, 1.1),
            seed: 0,
            frames: 64,
            amplitude_jitter: 0.0,
            phase_jitter: 0.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AfeError::Usage(m));
        if self.class_count == 0 || self.class_count > MAX_SYNTH_CLASSES {
            return bad(format!(
                "class_count must be in 1..={MAX_SYNTH_CLASSES}, got {}",
                self.class_count
            ));
        }
        if !(self.noise_std >= 0.0) {
            return bad(format!("noise_std must be >= 0, got {}", self.noise_std));
        }
        if !(self.view_yaw_range >= 0.0) {
            return bad(format!("view_yaw_range must be >= 0, got {}", self.view_yaw_range));
        }
        let (lo, hi) = self.body_scale_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return bad(format!("body_scale_range must satisfy 0 < lo <= hi, got ({lo}, {hi})"));
        }
        if self.frames < 2 {
            return bad(format!("frames must be >= 2, got {}", self.frames));
        }
        if !(0.0..1.0).contains(&self.amplitude_jitter) || !(0.0..=0.5).contains(&self.phase_jitter) {
            return bad("amplitude_jitter must be in [0,1) and phase_jitter in [0,0.5]".into());
        }
        Ok(())
    }
}

/// Rest offsets of each joint from its parent, meters.
const OFFSETS: [[f64; 3]; JOINTS] = [
    [0.0, 0.0, 0.0],
    [0.0, 0.5, 0.0],
    [0.0, 0.2, 0.0],
    [0.2, 0.0, 0.0],
    [0.0, -0.3, 0.0],
    [0.0, -0.28, 0.0],
    [-0.2, 0.0, 0.0],
    [0.0, -0.3, 0.0],
    [0.0, -0.28, 0.0],
    [0.1, -0.05, 0.0],
    [0.0, -0.45, 0.0],
    [0.0, -0.45, 0.0],
    [-0.1, -0.05, 0.0],
    [0.0, -0.45, 0.0],
    [0.0, -0.45, 0.0],
];
const PARENTS: [usize; JOINTS] = [0, 0, 1, 1, 3, 4, 1, 6, 7, 0, 9, 10, 0, 12, 13];
const PELVIS_HEIGHT: f64 = 1.0;

type Mat3 = [[f64; 3]; 3];

fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

fn mat_vec(a: &Mat3, v: &[f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|i| a[i][0] * v[0] + a[i][1] * v[1] + a[i][2] * v[2])
}

fn rot_x(t: f64) -> Mat3 {
    let (s, c) = t.sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

fn rot_y(t: f64) -> Mat3 {
    let (s, c) = t.sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

fn rot_z(t: f64) -> Mat3 {
    let (s, c) = t.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

/// Per-joint rotation of the bone entering the joint, as (pitch x, yaw y,
/// roll z) radians, plus the pelvis height offset.
struct Pose {
    euler: [[f64; 3]; JOINTS],
    drop: f64,
}

fn pose(kind: MotionKind, reps: u32, s: f64, amp: f64) -> Pose {
    let d = f64::to_radians;
    let u = (s * reps as f64).fract();
    let u = if s >= 1.0 { 1.0 } else { u };
    // one smooth rise and fall per repetition
    let a = amp * (std::f64::consts::PI * u).sin().powi(2);
    let osc = (2.0 * std::f64::consts::PI * 3.0 * u).sin();
    let mut e = [[0.0; 3]; JOINTS];
    let mut drop = 0.0;
    match kind {
        MotionKind::ArmRaise => {
            e[4][2] = d(165.0) * a;
        }
        MotionKind::Wave => {
            e[7][2] = -d(120.0) * a;
            e[8][2] = -d(40.0) * a * (1.0 + osc);
        }
        MotionKind::Squat => {
            drop = 0.35 * a;
            e[10][0] = -d(85.0) * a;
            e[11][0] = d(110.0) * a;
            e[13][0] = -d(85.0) * a;
            e[14][0] = d(110.0) * a;
            e[1][0] = d(25.0) * a;
        }
        MotionKind::Kick => {
            e[13][0] = -d(80.0) * a;
            e[14][0] = d(30.0) * a * (1.0 - u);
        }
        MotionKind::Lean => {
            e[1][2] = d(35.0) * a;
            e[2][2] = d(15.0) * a;
        }
        MotionKind::Turn => {
            e[1][1] = d(70.0) * a;
            e[2][1] = d(20.0) * a;
        }
        MotionKind::Reach => {
            e[1][0] = d(30.0) * a;
            e[4][0] = -d(100.0) * a;
            e[7][0] = -d(100.0) * a;
        }
        MotionKind::Clap => {
            let open = 0.5 * (1.0 + osc);
            e[4][0] = -d(85.0) * a;
            e[7][0] = -d(85.0) * a;
            e[4][1] = -d(20.0) * a * (1.0 - open);
            e[7][1] = d(20.0) * a * (1.0 - open);
            e[5][0] = -d(20.0) * a;
            e[8][0] = -d(20.0) * a;
        }
    }
    Pose { euler: e, drop }
}

fn forward_kinematics(p: &Pose, scale: f64, yaw: f64) -> Vec<[f64; 3]> {
    let world = rot_y(yaw);
    let mut global = [[[0.0; 3]; 3]; JOINTS];
    let mut pos = [[0.0; 3]; JOINTS];
    global[0] = world;
    pos[0] = [0.0, (PELVIS_HEIGHT - p.drop) * scale, 0.0];
    for j in 1..JOINTS {
        let [x, y, z] = p.euler[j];
        let local = mat_mul(&rot_y(y), &mat_mul(&rot_x(x), &rot_z(z)));
        let parent = PARENTS[j];
        global[j] = mat_mul(&global[parent], &local);
        let off = OFFSETS[j].map(|v| v * scale);
        let step = mat_vec(&global[j], &off);
        pos[j] = [0, 1, 2].map(|k| pos[parent][k] + step[k]);
    }
    pos.to_vec()
}

/// Generates `class_count * sequences_per_class` sequences, class-major.
///
/// Sequence `i` of a class gets subject `i % 5 + 1`, camera `(i / 5) % 3 + 1`
/// and setup `(i / 15) % 4 + 1`, so the standard cross-subject id list keeps
/// four of every five sequences for training.
pub fn synth_generate(config: &SynthConfig) -> Result<Vec<SkeletonSequence>> {
    config.validate()?;
    debug_assert_eq!(Topology::humanoid15().joint_count(), JOINTS);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = (config.noise_std > 0.0).then(|| Normal::new(0.0, config.noise_std).unwrap());
    let (lo, hi) = config.body_scale_range;
    let t_len = config.frames;
    let mut out = Vec::with_capacity(config.class_count * config.sequences_per_class);
    for class in 0..config.class_count {
        let (kind, reps) = MotionKind::of_class(class);
        for i in 0..config.sequences_per_class {
            let yaw = if config.view_yaw_range > 0.0 {
                rng.gen_range(-config.view_yaw_range..=config.view_yaw_range).to_radians()
            } else {
                0.0
            };
            let scale = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
            let amp = if config.amplitude_jitter > 0.0 {
                1.0 + rng.gen_range(-config.amplitude_jitter..=config.amplitude_jitter)
            } else {
                1.0
            };
            let shift = if config.phase_jitter > 0.0 {
                rng.gen_range(-config.phase_jitter..=config.phase_jitter)
            } else {
                0.0
            };
            let mut frames = Vec::with_capacity(t_len);
            for t in 0..t_len {
                let s = (t as f64 / (t_len - 1) as f64 + shift).clamp(0.0, 1.0);
                let joints = forward_kinematics(&pose(kind, reps, s, amp), scale, yaw);
                let frame: Vec<Joint> = joints
                    .iter()
                    .map(|p| {
                        p.map(|v| {
                            let n = noise.as_ref().map_or(0.0, |d| d.sample(&mut rng));
                            (v + n) as f32
                        })
                    })
                    .collect();
                frames.push(frame);
            }
            let seq = SkeletonSequence::new(frames, class)?
                .with_meta((i % 5) as u32 + 1, ((i / 5) % 3) as u32 + 1, ((i / 15) % 4) as u32 + 1)
                .with_source(format!("synth:{}x{reps}:{i}", kind.name()));
            out.push(seq);
        }
    }
    Ok(out)
}
