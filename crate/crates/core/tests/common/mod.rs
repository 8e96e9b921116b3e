//! Helpers shared by the integration test targets.
#![allow(dead_code)]

pub mod oracles;

use std::path::{Path, PathBuf};

use motionleak::classifier::{parameter_layout, Model, ModelConfig};
use motionleak::experiment::{ExperimentConfig, ResolvedExperiment};
use motionleak::nn::{Graph, Tensor, Var};
use motionleak::rng::rng_from_seed;
use motionleak::telemetry::{Frame, Pose, Recording};
use rand::Rng;

pub fn random_pose(rng: &mut impl Rng) -> Pose {
    let mut q = [0f32; 4];
    for v in &mut q {
        *v = rng.gen_range(-1.0..1.0);
    }
    let n = q.iter().map(|v| v * v).sum::<f32>().sqrt().max(1e-3);
    Pose::new(
        [rng.gen_range(-2.0..2.0), rng.gen_range(0.0..2.5), rng.gen_range(-2.0..2.0)],
        q.map(|v| v / n),
    )
}

/// Identifier-ish text that exercises escaping: spaces, `=`, `%`, `~`,
/// non-ASCII and the empty string.
pub fn random_text(rng: &mut impl Rng) -> String {
    const PIECES: [&str; 10] = ["a", "Z", "7", " ", "=", "%", "~", "é", "_", "-"];
    let len = rng.gen_range(0..8);
    (0..len).map(|_| PIECES[rng.gen_range(0..PIECES.len())]).collect()
}

pub fn random_recording(rng: &mut impl Rng, frames: usize) -> Recording {
    let mut rec = Recording::new(random_text(rng), random_text(rng));
    for _ in 0..rng.gen_range(0..3) {
        rec.metadata.insert(format!("k{}", random_text(rng)), random_text(rng));
    }
    let mut t = 0.0f32;
    for _ in 0..frames {
        t += rng.gen_range(0.005..0.02);
        rec.frames.push(Frame {
            time: t,
            fps: rng.gen_range(60..=144),
            head: random_pose(rng),
            left_hand: random_pose(rng),
            right_hand: random_pose(rng),
        });
    }
    rec
}

/// Field-exact equality, comparing floats by bit pattern.
pub fn bit_identical(a: &Recording, b: &Recording) -> bool {
    let bits = |f: &Frame| -> Vec<u32> {
        std::iter::once(f.time.to_bits())
            .chain(f.coords().iter().map(|v| v.to_bits()))
            .collect()
    };
    a.recording_id == b.recording_id
        && a.user_id == b.user_id
        && a.metadata == b.metadata
        && a.frames.len() == b.frames.len()
        && a.frames.iter().zip(&b.frames).all(|(x, y)| x.fps == y.fps && bits(x) == bits(y))
}

pub fn rand_tensor(rng: &mut impl Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-scale..scale))
}

/// `‖a − n‖₂ / max(‖a‖₂, ‖n‖₂)` over every parameter element, with `n` from
/// central differences with step `h`.
pub fn gradient_check(params: &[Tensor<f64>], h: f64, build: impl Fn(&mut Graph<f64>, &[Var]) -> Var) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
    let loss = build(&mut g, &vars);
    let grads = g.backward(loss);
    let analytic: Vec<f64> = vars
        .iter()
        .zip(params)
        .flat_map(|(v, p)| grads.of(*v).map(|s| s.to_vec()).unwrap_or_else(|| vec![0.0; p.len()]))
        .collect();

    let eval = |ps: &[Tensor<f64>]| {
        let mut g = Graph::new();
        let vars: Vec<Var> = ps.iter().map(|p| g.param(p.clone())).collect();
        let l = build(&mut g, &vars);
        g.scalar(l)
    };
    let mut numeric = Vec::with_capacity(analytic.len());
    let mut work = params.to_vec();
    for pi in 0..params.len() {
        for j in 0..params[pi].len() {
            let orig = work[pi].data()[j];
            work[pi].data_mut()[j] = orig + h;
            let up = eval(&work);
            work[pi].data_mut()[j] = orig - h;
            let down = eval(&work);
            work[pi].data_mut()[j] = orig;
            numeric.push((up - down) / (2.0 * h));
        }
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| a - n).collect();
    let denom = norm(&analytic).max(norm(&numeric)).max(1e-12);
    norm(&diff) / denom
}

/// Writes `cohort.toml` and `experiment.toml` into `dir` and resolves the
/// experiment. `extra` is appended to the experiment file verbatim.
pub fn cohort_experiment(dir: &Path, cohort_toml: &str, experiment_toml: &str) -> (PathBuf, ResolvedExperiment) {
    std::fs::create_dir_all(dir).unwrap();
    std::fs::write(dir.join("cohort.toml"), cohort_toml).unwrap();
    let path = dir.join("experiment.toml");
    std::fs::write(&path, experiment_toml).unwrap();
    let exp = ExperimentConfig::from_path(&path).unwrap().resolve(dir).unwrap();
    (path, exp)
}

/// Relative gradient error of the full classifier (f64) against central
/// differences, with every parameter randomized.
pub fn model_gradient_error(cfg: &ModelConfig, valid: usize) -> f64 {
    let mut rng = rng_from_seed(3003);
    let params: Vec<Tensor<f64>> = parameter_layout(cfg)
        .iter()
        .map(|(name, shape)| {
            let t = rand_tensor(&mut rng, shape, 0.5);
            if name.ends_with("gain") {
                Tensor::from_fn(shape, |i| 1.0 + t.data()[i] * 0.4)
            } else {
                t
            }
        })
        .collect();
    let input = rand_tensor(&mut rng, &[cfg.seq_len, cfg.input_dim], 1.0);
    let target = [1.0];
    let loss_of = |ps: &[Tensor<f64>], g: &mut Graph<f64>| {
        let m = Model::from_parameters(cfg.clone(), ps.to_vec()).unwrap();
        let (p, vars) = m.forward(g, input.clone(), valid, true).unwrap();
        (g.bce(p, &target).unwrap(), vars)
    };
    let mut g = Graph::new();
    let (loss, vars) = loss_of(&params, &mut g);
    let grads = g.backward(loss);
    let analytic: Vec<f64> = vars
        .iter()
        .zip(&params)
        .flat_map(|(v, p)| grads.of(*v).map(|s| s.to_vec()).unwrap_or_else(|| vec![0.0; p.len()]))
        .collect();
    let h = 1e-5;
    let mut numeric = Vec::new();
    let mut work = params.clone();
    for pi in 0..work.len() {
        for j in 0..work[pi].len() {
            let orig = work[pi].data()[j];
            work[pi].data_mut()[j] = orig + h;
            let mut g = Graph::new();
            let (l, _) = loss_of(&work, &mut g);
            let up = g.scalar(l);
            work[pi].data_mut()[j] = orig - h;
            let mut g = Graph::new();
            let (l, _) = loss_of(&work, &mut g);
            let down = g.scalar(l);
            work[pi].data_mut()[j] = orig;
            numeric.push((up - down) / (2.0 * h));
        }
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| a - n).collect();
    norm(&diff) / norm(&analytic).max(norm(&numeric)).max(1e-12)
}
