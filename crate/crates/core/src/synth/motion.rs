use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{CohortSpec, SynthError};
use crate::rng::child_rng;
use crate::telemetry::{Frame, Pose, Recording};

/// Allowed head heights, meters.
pub const HEAD_HEIGHT_RANGE: (f64, f64) = (1.0, 2.2);

/// Physical parameters that shape one user's motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionProfile {
    /// Meters above the floor.
    pub head_height: f64,
    /// Meters; sets how far in front of the body the hands work.
    pub arm_length: f64,
    /// Hand oscillation frequency, Hz.
    pub frequency: f64,
    /// Hand oscillation amplitude, meters.
    pub amplitude: f64,
    /// Positional noise scale, meters.
    pub jitter: f64,
}

impl MotionProfile {
    pub fn new(head_height: f64, arm_length: f64, frequency: f64, amplitude: f64, jitter: f64) -> Result<Self, SynthError> {
        let (lo, hi) = HEAD_HEIGHT_RANGE;
        let checks = [
            (head_height >= lo && head_height <= hi, "head_height outside 1.0..=2.2 m"),
            (arm_length >= 0.3 && arm_length <= 1.2, "arm_length outside 0.3..=1.2 m"),
            (frequency > 0.0 && frequency <= 10.0, "frequency outside (0, 10] Hz"),
            ((0.0..=1.0).contains(&amplitude), "amplitude outside 0..=1 m"),
            ((0.0..=1.0).contains(&jitter), "jitter outside 0..=1 m"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(SynthError::InvalidProfile(msg.into()));
            }
        }
        Ok(Self {
            head_height,
            arm_length,
            frequency,
            amplitude,
            jitter,
        })
    }
}

/// Unit quaternion (x, y, z, w) for yaw about +y then pitch about +x.
fn yaw_pitch(yaw: f64, pitch: f64) -> [f32; 4] {
    let (sy, cy) = (yaw / 2.0).sin_cos();
    let (sp, cp) = (pitch / 2.0).sin_cos();
    [(cy * sp) as f32, (sy * cp) as f32, (-sy * sp) as f32, (cy * cp) as f32]
}

/// Orientation pointing +z along `v`.
fn facing(v: [f64; 3]) -> [f32; 4] {
    let horiz = v[0].hypot(v[2]);
    if horiz == 0.0 && v[1] == 0.0 {
        return [0.0, 0.0, 0.0, 1.0];
    }
    yaw_pitch(v[0].atan2(v[2]), (-v[1]).atan2(horiz))
}

fn pos32(p: [f64; 3]) -> [f32; 3] {
    [p[0] as f32, p[1] as f32, p[2] as f32]
}

/// Recording `index` of a user; depends only on the profile, `user_seed`
/// and `index`.
pub fn generate_recording(
    profile: &MotionProfile,
    user_id: &str,
    recording_id: &str,
    user_seed: u64,
    index: usize,
    spec: &CohortSpec,
) -> Result<Recording, SynthError> {
    let mut rng = child_rng(user_seed, &format!("rec-{index}"));
    let z = Normal::new(0.0, 1.0).expect("unit normal");
    let n = rng.gen_range(spec.frames_min..=spec.frames_max);
    let dt = 1.0 / spec.frame_rate;
    let fps = spec.frame_rate.round() as i32;
    let phase = rng.gen_range(0.0..TAU);
    let freq = profile.frequency * (1.0 + 0.02 * z.sample(&mut rng));
    let j = profile.jitter;

    let shoulder = profile.head_height - 0.25;
    let reach = 0.6 * profile.arm_length;
    let mut walk = [0.0f64; 3];
    let mut rec = Recording::new(recording_id, user_id);
    rec.metadata.insert("source".into(), "synth".into());
    rec.frames.reserve(n);
    for i in 0..n {
        let t = i as f64 * dt;
        for w in &mut walk {
            *w = 0.98 * *w + 0.2 * j * z.sample(&mut rng);
        }
        let head = [walk[0], profile.head_height + walk[1], walk[2]];
        let head_q = yaw_pitch(0.15 * (0.3 * t).sin() + 2.0 * walk[0], 0.1 * (0.2 * t).cos());

        let mut hand = |side: f64, offset: f64| {
            let w = TAU * freq;
            let a = w * t + phase + offset;
            let p = [
                side * 0.2 + profile.amplitude * a.sin() + j * z.sample(&mut rng),
                shoulder + 0.5 * profile.amplitude * (2.0 * a).sin() + j * z.sample(&mut rng),
                reach + 0.3 * profile.amplitude * a.cos() + j * z.sample(&mut rng),
            ];
            let v = [
                profile.amplitude * w * a.cos(),
                profile.amplitude * w * (2.0 * a).cos(),
                -0.3 * profile.amplitude * w * a.sin(),
            ];
            Pose::new(pos32(p), facing(v))
        };
        let left = hand(-1.0, 0.0);
        let right = hand(1.0, PI);
        rec.frames.push(Frame {
            time: t as f32,
            fps,
            head: Pose::new(pos32(head), head_q),
            left_hand: left,
            right_hand: right,
        });
    }
    Ok(rec)
}

/// All of a user's recordings, oldest first.
pub fn generate_user(
    profile: &MotionProfile,
    user_id: &str,
    user_seed: u64,
    spec: &CohortSpec,
) -> Result<Vec<Recording>, SynthError> {
    (0..spec.recordings_per_user)
        .map(|r| generate_recording(profile, user_id, &format!("{user_id}-r{r:03}"), user_seed, r, spec))
        .collect()
}
