//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Run alone with `cargo test --test acceptance`; pass criterion names as
//! arguments to run a subset. The process fails when any criterion fails,
//! except throughput scaling on hosts with fewer cores than processes, which
//! is reported but cannot be met there.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Child, Command as Proc, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use parkour::curriculum::{curriculum_update, CurriculumConfig, CurriculumState};
use parkour::dynamics::joints::pd_torque_unclamped;
use parkour::dynamics::{
    clip_action_for_safety, pd_torque, DomainRandomization, EpisodeStats, JointConfig, RobotState, Surrogate, ARM_JOINTS,
    LEG_JOINTS, NUM_JOINTS,
};
use parkour::env::{EnvConfig, EnvMode, ParkourEnv, VecEnv};
use parkour::geom::{Pose, Vec3};
use parkour::learning::toy::{BanditEnv, BanditPolicy};
use parkour::learning::{
    compute_gae, dagger_label, distill_loss, distill_update, DistillBatch, DistillConfig, LabeledStep, PpoConfig, PpoLearner,
    StudentStep, DEPTH_LEN,
};
use parkour::neural::policy::{OraclePolicy, PolicyDims, PolicyHidden, StudentPolicy};
use parkour::neural::{Adam, Cnn, Graph, Gru, Linear, Mlp, ParamStore, Tensor, Var};
use parkour::orchestration::exchange::SnapshotExchange;
use parkour::orchestration::trajectory::parse_file_name;
use parkour::orchestration::{arm_override, evaluate, evaluation_layout, RunConfig, TeleportAgent};
use parkour::perception::{
    preprocess_real_depth, render_depth, sample_scandots, simulate_depth_noise, CameraExtrinsics, DepthImage, DepthNoiseConfig,
    PreprocessConfig, RenderConfig, ScandotLayout,
};
use parkour::rewards::{total_reward, MeshPoint, RewardInputs, RewardWeights, NUM_TERMS, TERM_NAMES};
use parkour::terrain::{
    assemble_track_grid, build_obstacle, BoxFace, CriticalParam, DifficultySpacing, FractalNoise, HeightField, ObstacleKind,
    ObstacleSpec, SteppingTargets, SubtrackGeometry, TrackLayout, VirtualObstacle,
};

enum Verdict {
    Pass(String),
    Fail(String),
    /// Failed, and the host cannot meet the bound.
    HostLimited(String),
}

type Criterion = (&'static str, fn() -> Verdict);

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn within(t0: Instant, limit_s: f64, mut v: Verdict) -> Verdict {
    let s = t0.elapsed().as_secs_f64();
    if s > limit_s {
        return Verdict::Fail(format!("took {s:.1} s, limit {limit_s} s"));
    }
    match &mut v {
        Verdict::Pass(d) | Verdict::Fail(d) | Verdict::HostLimited(d) => d.push_str(&format!("; {s:.2} s")),
    }
    v
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

// ---------------------------------------------------------------- rewards

fn random_state(rng: &mut ChaCha8Rng, base: &RobotState) -> RobotState {
    let mut s = base.clone();
    let v3 = |r: &mut ChaCha8Rng, a: f64| Vec3::new(r.random_range(-a..a), r.random_range(-a..a), r.random_range(-a..a));
    s.base_pos = v3(rng, 3.0);
    s.base_rpy = v3(rng, 1.3);
    s.base_linvel = v3(rng, 2.5);
    s.base_angvel = v3(rng, 2.5);
    for j in 0..NUM_JOINTS {
        s.q[j] = rng.random_range(-1.5..1.5);
        s.qd[j] = rng.random_range(-12.0..12.0);
        s.tau[j] = rng.random_range(-300.0..300.0);
    }
    s.foot_pos = [v3(rng, 0.6), v3(rng, 0.6)];
    s.contact_force = [rng.random_range(0.0..900.0), rng.random_range(0.0..900.0)];
    s
}

fn random_box(rng: &mut ChaCha8Rng) -> VirtualObstacle {
    let lo = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..0.5));
    let size = Vec3::new(rng.random_range(0.05..1.0), rng.random_range(0.05..1.0), rng.random_range(0.05..1.0));
    let faces = [BoxFace::MinX, BoxFace::MaxX, BoxFace::MinY, BoxFace::MaxY, BoxFace::MinZ, BoxFace::MaxZ];
    VirtualObstacle {
        min: lo,
        max: lo + size,
        surface: faces[rng.random_range(0..6)],
    }
}

/// Term values written out directly from their definitions.
#[allow(clippy::too_many_arguments)]
fn reference_terms(
    s: &RobotState,
    prev: &RobotState,
    a: &[f64; NUM_JOINTS],
    pa: &[f64; NUM_JOINTS],
    cmd: [f64; 3],
    joints: &JointConfig,
    bodies: &[f64],
    points: &[MeshPoint],
    boxes: &[VirtualObstacle],
    touchdowns: &[(f64, Option<&SteppingTargets>)],
) -> [f64; NUM_TERMS] {
    let (roll, pitch, yaw) = (s.base_rpy.x, s.base_rpy.y, s.base_rpy.z);
    // Body-frame gravity direction = -(last row of the body-to-world rotation).
    let gx = -pitch.sin();
    let gy = pitch.cos() * roll.sin();
    let vx = yaw.cos() * s.base_linvel.x + yaw.sin() * s.base_linvel.y;
    let vy = -yaw.sin() * s.base_linvel.x + yaw.cos() * s.base_linvel.y;
    let mut t = [0.0; NUM_TERMS];
    t[0] = (-((vx - cmd[0]).powi(2) + (vy - cmd[1]).powi(2)).sqrt() / 0.25).exp();
    t[1] = (-(s.base_angvel.z - cmd[2]).abs() / 0.25).exp();
    t[2] = gx * gx + gy * gy;
    for j in 0..NUM_JOINTS {
        t[3] += (s.tau[j] * s.qd[j]).powi(2);
        t[4] += s.qd[j].powi(2);
        t[5] += ((s.qd[j] - prev.qd[j]) / 0.02).powi(2);
        t[6] += (s.tau[j] / joints.joints[j].kp).powi(2);
        t[9] += (pa[j] - a[j]).powi(2);
    }
    t[7] = s.contact_force.iter().map(|f| (f.abs() - 400.0).max(0.0)).sum();
    t[8] = bodies.iter().filter(|f| f.abs() > 0.1).count() as f64;
    t[10] = (11..19).map(|j| s.q[j] * s.q[j]).sum();
    t[11] = s.q[10] * s.q[10];
    t[12] = s.q[0] * s.q[0] + s.q[5] * s.q[5];
    let d = s.foot_pos[0] - s.foot_pos[1];
    t[13] = (d.x * d.x + d.y * d.y + d.z * d.z).sqrt().min(0.4);
    for p in points {
        let mut deepest: f64 = 0.0;
        for b in boxes {
            let inside = (b.min.x..=b.max.x).contains(&p.pos.x)
                && (b.min.y..=b.max.y).contains(&p.pos.y)
                && (b.min.z..=b.max.z).contains(&p.pos.z);
            if inside {
                let depth = match b.surface {
                    BoxFace::MinX => p.pos.x - b.min.x,
                    BoxFace::MaxX => b.max.x - p.pos.x,
                    BoxFace::MinY => p.pos.y - b.min.y,
                    BoxFace::MaxY => b.max.y - p.pos.y,
                    BoxFace::MinZ => p.pos.z - b.min.z,
                    BoxFace::MaxZ => b.max.z - p.pos.z,
                };
                deepest = deepest.max(depth);
            }
        }
        t[14] += deepest * (p.vel.x * p.vel.x + p.vel.y * p.vel.y + p.vel.z * p.vel.z).sqrt();
    }
    for (x, targets) in touchdowns {
        if let Some(ts) = targets {
            let mut best = f64::INFINITY;
            for tx in &ts.xs {
                best = best.min((x - tx).abs());
            }
            if best.is_finite() {
                t[15] += -best.max((-10.0f64).exp()).ln();
            }
        }
    }
    t
}

fn reward_oracles() -> Verdict {
    let t0 = Instant::now();
    let field = HeightField::flat((-3.0, -3.0), 0.05, 120, 120, 0.0).unwrap();
    let standing = Surrogate::new(DomainRandomization::default()).initial_state(&field, 0.0, 0.0, 0.0);
    let joints = JointConfig::default();
    let weights = RewardWeights::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let mut worst_term = "";
    let mut penetrating = 0;
    let mut stepping = 0;
    for _ in 0..1000 {
        let s = random_state(&mut rng, &standing);
        let prev = random_state(&mut rng, &standing);
        let mut a = [0.0; NUM_JOINTS];
        let mut pa = [0.0; NUM_JOINTS];
        a.iter_mut().chain(pa.iter_mut()).for_each(|v| *v = rng.random_range(-2.0..2.0));
        let cmd = [rng.random_range(-1.0..2.0), rng.random_range(-0.8..0.8), rng.random_range(-1.0..1.0)];
        let bodies: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..0.3)).collect();
        let boxes: Vec<VirtualObstacle> = (0..rng.random_range(0..4)).map(|_| random_box(&mut rng)).collect();
        let points: Vec<MeshPoint> = (0..20)
            .map(|k| MeshPoint {
                link: k % 5,
                pos: Vec3::new(rng.random_range(-1.0..2.0), rng.random_range(-1.0..2.0), rng.random_range(-1.0..1.5)),
                vel: Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)),
            })
            .collect();
        let targets = SteppingTargets {
            xs: (0..rng.random_range(0..5)).map(|_| rng.random_range(-1.0..3.0)).collect(),
        };
        let tds: Vec<(Vec3, Option<&SteppingTargets>)> = (0..rng.random_range(0..3))
            .map(|_| {
                let x = rng.random_range(-1.0..3.0);
                (Vec3::new(x, 0.0, 0.0), rng.random_bool(0.7).then_some(&targets))
            })
            .collect();
        let inp = RewardInputs {
            state: &s,
            prev_state: &prev,
            action: &a,
            prev_action: &pa,
            command: cmd,
            joints: &joints,
            dt: 0.02,
            mesh_points: &points,
            body_contact_forces: &bodies,
            obstacles: &boxes,
            touchdowns: &tds,
        };
        let got = total_reward(&inp, &weights);
        let td_x: Vec<(f64, Option<&SteppingTargets>)> = tds.iter().map(|(p, t)| (p.x, *t)).collect();
        let want = reference_terms(&s, &prev, &a, &pa, cmd, &joints, &bodies, &points, &boxes, &td_x);
        penetrating += (want[14] > 0.0) as usize;
        stepping += (want[15] != 0.0) as usize;
        for i in 0..NUM_TERMS {
            let e = rel_err(got.terms[i], want[i]);
            if e > worst {
                worst = e;
                worst_term = TERM_NAMES[i];
            }
        }
        let w = weights.as_array();
        let total: f64 = (0..NUM_TERMS).map(|i| w[i] * want[i]).sum();
        let e = rel_err(got.total, total);
        if e > worst {
            worst = e;
            worst_term = "total";
        }
    }

    // Anchors.
    let mut s = standing.clone();
    s.base_linvel = Vec3::new(0.25, 0.0, 0.0);
    let (lin, _) = parkour::rewards::tracking_rewards(&s, &[0.0, 0.0, 0.0]);
    let hurdle = VirtualObstacle {
        min: Vec3::new(0.0, 0.0, 0.0),
        max: Vec3::new(0.1, 1.0, 0.5),
        surface: BoxFace::MaxZ,
    };
    let p = MeshPoint {
        link: 0,
        pos: Vec3::new(0.05, 0.5, 0.4),
        vel: Vec3::new(0.0, 2.0, 0.0),
    };
    let pen = parkour::rewards::penetration_penalty(&[p], &[hurdle], -5e-3);
    let step = parkour::rewards::footstep_reward(2.0 + (-1.0f64).exp(), Some(&SteppingTargets { xs: vec![2.0] }), 6.0);
    let anchors = [(lin, (-1.0f64).exp()), (pen, -1e-3), (step, 6.0)];
    let anchor_err = anchors.iter().map(|&(g, w)| rel_err(g, w)).fold(0.0, f64::max);
    within(
        t0,
        10.0,
        check(
            worst <= 1e-12 && anchor_err <= 1e-12 && penetrating > 50 && stepping > 50,
            format!(
                "1000 states, worst rel err {worst:.1e} ({worst_term}), {penetrating} penetrating, {stepping} with footholds; anchors e^-1 {lin:.15}, penetration {pen:e}, footstep {step:.12}"
            ),
        ),
    )
}

// ---------------------------------------------------------------- torque

fn torque_safety() -> Verdict {
    let t0 = Instant::now();
    let joints = JointConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut clamped = 0;
    let mut unclamped = 0;
    for _ in 0..100_000 {
        let j = &joints.joints[rng.random_range(0..NUM_JOINTS)];
        let q = rng.random_range(-3.0..3.0);
        let qd = rng.random_range(-40.0..40.0);
        let target = rng.random_range(-10.0..10.0);
        let safe = clip_action_for_safety(target, q, qd, j);
        clamped += (pd_torque(safe, q, qd, j, 1.0).abs() > j.torque_limit) as usize;
        unclamped += (pd_torque_unclamped(safe, q, qd, j).abs() > j.torque_limit) as usize;
    }
    within(
        t0,
        5.0,
        check(
            clamped == 0,
            format!("1e5 draws: {clamped} violations after the PD law; {unclamped} raw PD values past the limit by rounding alone"),
        ),
    )
}

// ---------------------------------------------------------------- terrain

/// Heights along the sub-track center line.
fn centerline(f: &HeightField) -> Vec<f64> {
    (0..f.length).map(|ix| f.get(ix, f.width / 2)).collect()
}

/// Critical dimensions read back from a generated heightfield alone.
fn measure(kind: ObstacleKind, f: &HeightField) -> Vec<(CriticalParam, f64)> {
    let cs = f.cell_size;
    let line = centerline(f);
    let max = f.heights.iter().copied().fold(f64::MIN, f64::max);
    let min = f.heights.iter().copied().fold(f64::MAX, f64::min);
    let grad_x = line.windows(2).map(|w| ((w[1] - w[0]) / cs).abs()).fold(0.0, f64::max);
    match kind {
        ObstacleKind::JumpUp => vec![(CriticalParam::JumpHeight, max - line[0])],
        ObstacleKind::JumpDown => vec![(CriticalParam::DownHeight, line[0] - min)],
        ObstacleKind::Leap => {
            let gap = line.iter().filter(|h| **h < -1.0).count();
            vec![(CriticalParam::LeapLength, gap as f64 * cs)]
        }
        ObstacleKind::Slope => vec![(CriticalParam::SlopeAngle, grad_x.atan())],
        ObstacleKind::StairsUp | ObstacleKind::StairsDown => {
            let edges: Vec<usize> = (1..line.len()).filter(|&i| (line[i] - line[i - 1]).abs() > 1e-9).collect();
            let rise = (line[edges[0]] - line[edges[0] - 1]).abs();
            let tread = if edges.len() > 1 {
                (edges[1] - edges[0]) as f64 * cs
            } else {
                f64::NAN
            };
            vec![(CriticalParam::StairsHeight, rise), (CriticalParam::StairsLength, tread)]
        }
        ObstacleKind::Hurdle => vec![(CriticalParam::HurdleHeight, max)],
        ObstacleKind::TiltedRamp => {
            let ix = f.length - 1;
            let grad_y = (1..f.width)
                .map(|iy| ((f.get(ix, iy) - f.get(ix, iy - 1)) / cs).abs())
                .fold(0.0, f64::max);
            vec![(CriticalParam::RampAngle, grad_y.atan())]
        }
        ObstacleKind::Discrete => vec![(CriticalParam::BlockHeight, max)],
        ObstacleKind::Wave => vec![(CriticalParam::WaveAmplitude, (max - min) / 2.0)],
    }
}

/// Distance on the ground a parameter error corresponds to: angles are
/// compared through the rise they produce over one cell.
fn ground_error(p: CriticalParam, got: f64, want: f64, cs: f64) -> f64 {
    match p {
        CriticalParam::SlopeAngle | CriticalParam::RampAngle => (got.tan() - want.tan()).abs() * cs,
        _ => (got - want).abs(),
    }
}

fn terrain_fidelity() -> Verdict {
    let t0 = Instant::now();
    let cs = SubtrackGeometry::default().cell_size;
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst: (f64, String) = (0.0, String::new());
    let mut endpoint_misses = Vec::new();
    let mut cases = 0;
    for kind in ObstacleKind::ALL {
        let mut ds: Vec<f64> = (0..100).map(|_| rng.random_range(0.0..=1.0)).collect();
        ds.extend([0.0, 1.0]);
        for d in ds {
            let spec = ObstacleSpec::at_difficulty(kind, d).unwrap().with_seed(rng.random());
            let cell = build_obstacle(&spec, cs).unwrap();
            cases += 1;
            for (p, got) in measure(kind, &cell.field) {
                let (easy, hard) = p.training_range();
                let want = (1.0 - d) * easy + d * hard;
                let e = ground_error(p, got, want, cs);
                if e > worst.0 {
                    worst = (e, format!("{kind} {} at d={d:.3}: {got:.4} vs {want:.4}", p.name()));
                }
                if d == 0.0 || d == 1.0 {
                    let end = if d == 0.0 { easy } else { hard };
                    if spec.param(p) != Some(end) {
                        endpoint_misses.push(format!("{kind} {} d={d}", p.name()));
                    }
                }
            }
        }
    }
    within(
        t0,
        30.0,
        check(
            worst.0 <= cs && endpoint_misses.is_empty(),
            format!(
                "{cases} sub-tracks, worst error {:.4} m ({}); endpoint mismatches {:?}",
                worst.0, worst.1, endpoint_misses
            ),
        ),
    )
}

// ---------------------------------------------------------------- perception

type M3 = [[f64; 3]; 3];

fn mat_mul(a: &M3, b: &M3) -> M3 {
    let mut o = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            o[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    o
}

fn apply(m: &M3, v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// Body-to-world rotation: yaw about z, then pitch about y, then roll about x.
fn rotation(roll: f64, pitch: f64, yaw: f64) -> M3 {
    let rz = [[yaw.cos(), -yaw.sin(), 0.0], [yaw.sin(), yaw.cos(), 0.0], [0.0, 0.0, 1.0]];
    let ry = [[pitch.cos(), 0.0, pitch.sin()], [0.0, 1.0, 0.0], [-pitch.sin(), 0.0, pitch.cos()]];
    let rx = [[1.0, 0.0, 0.0], [0.0, roll.cos(), -roll.sin()], [0.0, roll.sin(), roll.cos()]];
    mat_mul(&rz, &mat_mul(&ry, &rx))
}

/// Forward depth of each pixel against the plane `z = h`, pinhole model.
fn plane_depth(h: f64, base: &Pose, cam: &CameraExtrinsics, cfg: &RenderConfig) -> Vec<f64> {
    let rb = rotation(base.rpy.x, base.rpy.y, base.rpy.z);
    let rot = mat_mul(&rb, &rotation(cam.rpy.x, cam.rpy.y, cam.rpy.z));
    let off = apply(&rb, [cam.position.x, cam.position.y, cam.position.z]);
    let oz = base.position.z + off[2];
    let f = (cfg.cols as f64 / 2.0) / (cam.fov_deg.to_radians() / 2.0).tan();
    let mut out = Vec::with_capacity(cfg.rows * cfg.cols);
    for r in 0..cfg.rows {
        for c in 0..cfg.cols {
            let u = (c as f64 + 0.5 - cfg.cols as f64 / 2.0) / f;
            let v = (r as f64 + 0.5 - cfg.rows as f64 / 2.0) / f;
            let dz = apply(&rot, [1.0, -u, -v])[2];
            let t = if dz < 0.0 { (h - oz) / dz } else { f64::INFINITY };
            out.push(t.min(cfg.far_clip));
        }
    }
    out
}

fn random_image(rng: &mut ChaCha8Rng, holes: bool) -> DepthImage {
    let mut img = DepthImage::filled(48, 64, 0.0, 0.2, 3.0);
    for p in &mut img.pixels {
        *p = match rng.random_range(0..10) {
            0 if holes => 0.0,
            1 if holes => f64::NAN,
            2 => rng.random_range(-1.0..0.2),
            3 => rng.random_range(3.0..8.0),
            _ => rng.random_range(0.2..3.0),
        };
    }
    // Keep at least one valid pixel so hole filling has a source.
    img.pixels[0] = 1.0;
    img
}

fn perception_oracles() -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let h = 0.3;
    let field = HeightField::flat((-10.0, -10.0), 0.05, 400, 400, h).unwrap();
    let cfg = RenderConfig::default();
    let mut depth_err: f64 = 0.0;
    let mut hits = 0usize;
    for _ in 0..6 {
        let base = Pose::new(
            Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), h + rng.random_range(0.3..0.9)),
            Vec3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(-PI..PI)),
        );
        let cam = CameraExtrinsics {
            position: Vec3::new(rng.random_range(0.1..0.12), rng.random_range(-0.02..-0.015), rng.random_range(0.0..0.3)),
            rpy: Vec3::new(rng.random_range(-0.1..0.1), rng.random_range(0.3..0.99), rng.random_range(-0.1..0.1)),
            fov_deg: rng.random_range(86.0..90.0),
        };
        let img = render_depth(&field, &cam, &base, &cfg);
        let want = plane_depth(h, &base, &cam, &cfg);
        for (g, w) in img.pixels.iter().zip(&want) {
            depth_err = depth_err.max((g - w).abs());
            hits += (*w < cfg.far_clip) as usize;
        }
    }

    let layout = TrackLayout::evaluation(&ObstacleKind::ALL).unwrap();
    let track = assemble_track_grid(&layout, 3).unwrap();
    let dots = ScandotLayout::default();
    let mut dot_mismatch = 0;
    for _ in 0..200 {
        let pose = Pose::from_xyz_yaw(
            rng.random_range(0.0..14.4),
            rng.random_range(0.0..16.0),
            rng.random_range(-1.0..1.5),
            rng.random_range(-PI..PI),
        );
        let got = sample_scandots(&track.field, &pose, &dots);
        let (s, c) = pose.rpy.z.sin_cos();
        for (&(fx, fy), g) in dots.offsets().iter().zip(&got.values) {
            let x = pose.position.x + c * fx - s * fy;
            let y = pose.position.y + s * fx + c * fy;
            dot_mismatch += (track.field.height_at(x, y) - pose.position.z != *g) as usize;
        }
    }

    let mut out_of_range = 0;
    let noise = DepthNoiseConfig::default();
    let pre = PreprocessConfig::default();
    let mut prev: Option<DepthImage> = None;
    for k in 0..1000 {
        let sim = simulate_depth_noise(&random_image(&mut rng, false), &noise, k);
        out_of_range += !sim.in_range() as usize;
        let real = preprocess_real_depth(&random_image(&mut rng, true), prev.as_ref(), &pre).unwrap();
        out_of_range += !real.in_range() as usize;
        prev = Some(real);
    }
    within(
        t0,
        60.0,
        check(
            depth_err < 1e-3 && hits > 100_000 && dot_mismatch == 0 && out_of_range == 0,
            format!(
                "plane depth max err {depth_err:.2e} m over {hits} ground pixels; {dot_mismatch} scandot mismatches; {out_of_range} noisy images out of range"
            ),
        ),
    )
}

// ---------------------------------------------------------------- gradients

fn fd_worst(store: &ParamStore, build: &dyn Fn(&mut Graph) -> Var, samples: usize, seed: u64) -> f64 {
    let analytic = {
        let mut g = Graph::new(store);
        let l = build(&mut g);
        g.backward(l).unwrap()
    };
    let eval = |s: &ParamStore| {
        let mut g = Graph::new(s);
        let l = build(&mut g);
        g.value(l).item()
    };
    let eps = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let pi = rng.random_range(0..store.len());
        let k = rng.random_range(0..store.params()[pi].value.len());
        let mut plus = store.clone();
        plus.params_mut()[pi].value[k] += eps;
        let mut minus = store.clone();
        minus.params_mut()[pi].value[k] -= eps;
        let num = (eval(&plus) - eval(&minus)) / (2.0 * eps);
        let ana = analytic.grads[pi][k];
        worst = worst.max((ana - num).abs() / ana.abs().max(num.abs()).max(1e-6));
    }
    worst
}

fn jitter(store: &mut ParamStore, rng: &mut ChaCha8Rng, a: f64) {
    for p in store.params_mut() {
        p.value.iter_mut().for_each(|v| *v += rng.random_range(-a..a));
    }
}

fn random_tensor(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn gradient_checks() -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);

    let mut s = ParamStore::new();
    let mlp = Mlp::new(&mut s, "m", 7, &[11, 8, 5], false, 1.0, &mut rng);
    jitter(&mut s, &mut rng, 0.3);
    let x = random_tensor(4, 7, &mut rng);
    let mlp_err = fd_worst(
        &s,
        &move |g: &mut Graph| {
            let xi = g.input(x.clone());
            let y = mlp.forward(g, xi);
            let y2 = g.square(y);
            g.sum(y2)
        },
        300,
        1,
    );

    let mut s2 = ParamStore::new();
    let gru = Gru::new(&mut s2, "g", 5, 7, &mut rng);
    let head = Linear::new(&mut s2, "h", 7, 3, 1.0, &mut rng);
    jitter(&mut s2, &mut rng, 0.2);
    let xs: Vec<Tensor> = (0..5).map(|_| random_tensor(3, 5, &mut rng)).collect();
    let gru_err = fd_worst(
        &s2,
        &move |g: &mut Graph| {
            let mut h = g.input(Tensor::zeros(3, 7));
            let mut total = None;
            for x in &xs {
                let xi = g.input(x.clone());
                h = gru.forward(g, xi, h);
                let y = head.forward(g, h);
                let t = g.tanh(y);
                let s = g.sum(t);
                total = Some(match total {
                    None => s,
                    Some(a) => g.add(a, s),
                });
            }
            total.unwrap()
        },
        300,
        2,
    );

    let mut s3 = ParamStore::new();
    let cnn = Cnn::new(&mut s3, "d", 48, 64, 32, &mut rng).unwrap();
    let img = Tensor::from_vec(2, 48 * 64, (0..2 * 48 * 64).map(|_| rng.random_range(0.2..3.0)).collect()).unwrap();
    let cnn_err = fd_worst(
        &s3,
        &move |g: &mut Graph| {
            let x = g.input(img.clone());
            let y = cnn.forward(g, x);
            let t = g.tanh(y);
            g.sum(t)
        },
        80,
        3,
    );
    within(
        t0,
        60.0,
        check(
            mlp_err < 1e-4 && gru_err < 1e-3 && cnn_err < 1e-3,
            format!("max rel err MLP {mlp_err:.1e}, GRU(5 steps) {gru_err:.1e}, CNN {cnn_err:.1e}"),
        ),
    )
}

// ---------------------------------------------------------------- GAE

/// Lambda-return from the definition: a geometric mix of n-step returns.
fn lambda_return(r: &[f64], v: &[f64], done: &[bool], last: f64, t: usize, gamma: f64, lambda: f64) -> f64 {
    let n_max = r.len() - t;
    let n_step = |n: usize| {
        let mut g = 0.0;
        for k in 0..n {
            g += gamma.powi(k as i32) * r[t + k];
            if done[t + k] {
                return g;
            }
        }
        let boot = if t + n < r.len() { v[t + n] } else { last };
        g + gamma.powi(n as i32) * boot
    };
    let mut mix = 0.0;
    for n in 1..n_max {
        mix += (1.0 - lambda) * lambda.powi(n as i32 - 1) * n_step(n);
    }
    mix + lambda.powi(n_max as i32 - 1) * n_step(n_max)
}

fn gae_equivalence() -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let r: Vec<f64> = (0..10).map(|_| rng.random_range(-2.0..2.0)).collect();
        let v: Vec<f64> = (0..10).map(|_| rng.random_range(-2.0..2.0)).collect();
        let d: Vec<bool> = (0..10).map(|_| rng.random_bool(0.15)).collect();
        let last = rng.random_range(-2.0..2.0);
        let gamma = rng.random_range(0.8..1.0);
        let lambda = rng.random_range(0.0..1.0);
        let (adv, _) = compute_gae(&r, &v, &d, last, gamma, lambda);
        for t in 0..10 {
            worst = worst.max((adv[t] - (lambda_return(&r, &v, &d, last, t, gamma, lambda) - v[t])).abs());
        }
    }
    let (a, _) = compute_gae(&[1.0, 1.0], &[0.0, 0.0], &[false, false], 0.0, 0.99, 0.95);
    let a2 = 1.0 + 0.99 * 0.0 - 0.0;
    let a1 = 1.0 + 0.99 * 0.0 - 0.0 + 0.99 * 0.95 * a2;
    within(
        t0,
        5.0,
        check(
            worst < 1e-10 && a[0] == a1 && a[1] == a2 && (a[0] - 1.9405).abs() < 1e-12,
            format!("100 random sequences, max |GAE - lambda-return| {worst:.1e}; A1 = {}", a[0]),
        ),
    )
}

// ---------------------------------------------------------------- PPO

fn bandit(seed: u64) -> (BanditPolicy, Vec<f64>) {
    let cfg = PpoConfig {
        lr: 3e-4,
        ..PpoConfig::default()
    };
    let mut env = BanditEnv {
        num_envs: 16,
        optimum: 0.5,
    };
    let mut learner = PpoLearner::new(BanditPolicy::new(0.0), cfg, env.num_envs).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means = Vec::new();
    for _ in 0..200 {
        learner.iterate(&mut env, &mut rng).unwrap();
        means.push(learner.policy.mean_action());
    }
    (learner.policy, means)
}

fn ppo_bandit() -> Verdict {
    let t0 = Instant::now();
    let (p, means) = bandit(7);
    let (q, _) = bandit(7);
    let first = means.iter().position(|m| (m - 0.5).abs() <= 0.05);
    let reached = (p.mean_action() - 0.5).abs() <= 0.05;
    let same = p.store.params() == q.store.params();
    within(
        t0,
        120.0,
        check(
            reached && same,
            format!(
                "mean action {:.4} after 200 updates (first within 0.05 at {:?}), std {:.3}, rerun identical: {same}",
                p.mean_action(),
                first.map(|i| i + 1),
                p.std()
            ),
        ),
    )
}

// ---------------------------------------------------------------- distillation

fn rollout_steps(track: Arc<parkour::terrain::Track>, n: usize, steps: usize, seed: u64) -> Vec<Vec<StudentStep>> {
    let mut v = VecEnv::new(&EnvConfig::default(), EnvMode::Train, track, n, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trajs: Vec<Vec<StudentStep>> = vec![Vec::new(); n];
    for t in 0..steps {
        let mut actions = Vec::with_capacity(n * NUM_JOINTS);
        for (i, e) in v.envs.iter_mut().enumerate() {
            let img = e.depth_image();
            trajs[i].push(StudentStep {
                base: e.base_observation(),
                depth: img.pixels.iter().map(|&p| p as f32).collect(),
                true_vel: e.true_velocity(),
                student_action: [0.0; NUM_JOINTS],
                privileged: Some(e.privileged_observation()),
                done: false,
                episode: e.episode,
                step: t as u64,
            });
            actions.extend((0..NUM_JOINTS).map(|_| rng.random_range(-0.5..0.5)));
        }
        for (i, o) in v.step(&actions).iter().enumerate() {
            trajs[i].last_mut().unwrap().done = o.done;
        }
    }
    trajs
}

fn label(teacher: &OraclePolicy, trajs: &[Vec<StudentStep>]) -> Vec<Vec<LabeledStep>> {
    trajs
        .iter()
        .enumerate()
        .map(|(i, t)| dagger_label(teacher, i as u32, t).unwrap().steps)
        .collect()
}

fn distill_track() -> Arc<parkour::terrain::Track> {
    let layout = TrackLayout::grid(
        3,
        10,
        &ObstacleKind::ALL,
        DifficultySpacing::Curriculum,
        SubtrackGeometry::default(),
        FractalNoise::default(),
    )
    .unwrap();
    Arc::new(assemble_track_grid(&layout, 1).unwrap())
}

fn distillation() -> Verdict {
    let t0 = Instant::now();
    let track = distill_track();
    let cfg = DistillConfig::default();

    // Fixed point: labels equal to the student's own outputs.
    let tiny_teacher = OraclePolicy::new(PolicyDims::tiny(), 1);
    let mut student = StudentPolicy::from_teacher(&tiny_teacher, 2).unwrap();
    let mut seqs = label(&tiny_teacher, &rollout_steps(track.clone(), 2, 8, 10));
    for seq in &mut seqs {
        let mut hidden = PolicyHidden::zeros(1, &student.dims);
        for s in seq.iter_mut() {
            let depth = Tensor::from_vec(1, DEPTH_LEN, s.depth.iter().map(|&v| v as f64).collect()).unwrap();
            let mut g = Graph::new(&student.store);
            let b = g.input(Tensor::row_vector(&s.base));
            let d = g.input(depth);
            let ha = g.input(hidden.actor.clone());
            let he = g.input(hidden.estimator.clone());
            let emb = student.encode_depth(&mut g, d);
            let out = student.step(&mut g, b, emb, (ha, he));
            s.teacher_action.copy_from_slice(&g.value(out.mean).data);
            s.true_vel.copy_from_slice(&g.value(out.v_hat).data);
            hidden = if s.done {
                PolicyHidden::zeros(1, &student.dims)
            } else {
                PolicyHidden {
                    actor: g.value(out.actor_hidden).clone(),
                    estimator: g.value(out.estimator_hidden).clone(),
                }
            };
        }
    }
    let before = student.store.clone();
    let mut opt = Adam::new(&student.store, cfg.adam());
    let batch = DistillBatch {
        collector: 0,
        policy_version: 0,
        sequences: seqs,
    };
    let fixed = distill_update(&mut student, &mut opt, &batch, &cfg).unwrap();
    let moved = student.store.distance(&before, "");

    // Progress: a teacher with trained-scale action outputs, a frozen set of
    // visited states, and a held-out set from other seeds.
    let mut teacher = OraclePolicy::new(PolicyDims::default(), 1);
    let head = teacher
        .store
        .params()
        .iter()
        .rposition(|p| p.name.starts_with("actor.mlp.") && p.name.ends_with(".w"))
        .unwrap();
    teacher.store.params_mut()[head].value.iter_mut().for_each(|v| *v *= 30.0);
    teacher.store.quantize_all();
    let train = label(&teacher, &rollout_steps(track.clone(), 96, 24, 5));
    let held = DistillBatch {
        collector: 0,
        policy_version: 0,
        sequences: label(&teacher, &rollout_steps(track, 8, 24, 99)),
    };
    let mut student = StudentPolicy::from_teacher(&teacher, 3).unwrap();
    let mut opt = Adam::new(&student.store, cfg.adam());
    let initial = distill_loss(&student, &held, &cfg).unwrap().l1;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let b = DistillBatch {
            collector: 0,
            policy_version: 0,
            sequences: (0..4).map(|_| train[rng.random_range(0..train.len())].clone()).collect(),
        };
        distill_update(&mut student, &mut opt, &b, &cfg).unwrap();
    }
    let last = distill_loss(&student, &held, &cfg).unwrap().l1;
    let ratio = last / initial;
    within(
        t0,
        600.0,
        check(
            moved < 1e-12 && fixed.l1 == 0.0 && ratio < 0.25,
            format!(
                "fixed point moved {moved:.1e}; held-out L1 {initial:.4} -> {last:.4} after 1000 updates, ratio {ratio:.3}"
            ),
        ),
    )
}

// ---------------------------------------------------------------- orchestration

struct RunSummary {
    transitions: u64,
    elapsed_s: f64,
    files: u64,
    rejected: u64,
}

fn parse_trainer(stdout: &str) -> Option<RunSummary> {
    let line = stdout.lines().find(|l| l.starts_with("updates "))?;
    let f: Vec<&str> = line.split_whitespace().collect();
    let num = |key: &str| -> Option<f64> { f.iter().position(|w| *w == key).and_then(|i| f.get(i + 1)?.parse().ok()) };
    Some(RunSummary {
        transitions: num("transitions")? as u64,
        elapsed_s: num("elapsed")?,
        files: num("files")? as u64,
        rejected: num("rejected")? as u64,
    })
}

fn spawn(cfg: &Path, args: &[&str], log: &Path) -> Child {
    Proc::new(env!("CARGO_BIN_EXE_parkour"))
        .arg("-c")
        .arg(cfg)
        .args(args)
        .env("RUST_LOG", "info")
        .env_remove("PARKOUR_EXCHANGE_DIR")
        .env_remove("PARKOUR_SEED")
        .stdout(Stdio::piped())
        .stderr(std::fs::File::create(log).unwrap())
        .spawn()
        .unwrap()
}

fn trainer_output(child: Child) -> RunSummary {
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success(), "trainer exited with {:?}", out.status);
    parse_trainer(&String::from_utf8_lossy(&out.stdout)).expect("trainer summary line")
}

fn setup_run(dir: &Path) -> (PathBuf, RunConfig) {
    let mut cfg = RunConfig::default();
    cfg.exchange_dir = dir.join("exchange");
    cfg.output_dir = dir.join("runs");
    cfg.terrain.rows = 3;
    cfg.terrain.cols = 10;
    let ex = SnapshotExchange::open(&cfg.exchange_dir).unwrap();
    OraclePolicy::new(cfg.policy.clone(), cfg.seed).store.save(&ex.teacher_path()).unwrap();
    let path = dir.join("run.toml");
    std::fs::write(&path, cfg.to_toml_string()).unwrap();
    (path, cfg)
}

/// Trainer plus `collectors` processes for `secs`; collectors listed in
/// `kills` are SIGKILLed at the given offset and restarted at once.
fn pipeline_run(dir: &Path, collectors: u32, secs: u64, kills: &[(u32, u64)]) -> (RunSummary, RunConfig) {
    let (cfg_path, cfg) = setup_run(dir);
    let start = Instant::now();
    let d = secs.to_string();
    let trainer = spawn(&cfg_path, &["distill", "trainer", "--duration", &d], &dir.join("trainer.log"));
    let mut procs: BTreeMap<u32, Child> = (1..=collectors)
        .map(|id| {
            let log = dir.join(format!("collector{id}-0.log"));
            (id, spawn(&cfg_path, &["distill", "collector", "--id", &id.to_string(), "--duration", &d], &log))
        })
        .collect();
    for (k, &(id, at)) in kills.iter().enumerate() {
        std::thread::sleep(Duration::from_secs(at).saturating_sub(start.elapsed()));
        let mut victim = procs.remove(&id).unwrap();
        victim.kill().unwrap();
        victim.wait().unwrap();
        let left = (secs as f64 - start.elapsed().as_secs_f64()).max(1.0).to_string();
        let log = dir.join(format!("collector{id}-{}.log", k + 1));
        procs.insert(id, spawn(&cfg_path, &["distill", "collector", "--id", &id.to_string(), "--duration", &left], &log));
    }
    // A writer killed mid-write leaves exactly this behind.
    let ex = SnapshotExchange::open(&cfg.exchange_dir).unwrap();
    let torn = ex.trajectories_dir().join(".c09-000000.pktraj.99999.0.tmp");
    std::fs::write(&torn, b"PKTRAJ1\0half").unwrap();
    for (_, c) in procs {
        let out = c.wait_with_output().unwrap();
        assert!(out.status.success(), "collector exited with {:?}", out.status);
    }
    (trainer_output(trainer), cfg)
}

fn orchestration() -> Verdict {
    let t0 = Instant::now();
    let root = tempfile::tempdir().unwrap();
    let three = root.path().join("three");
    std::fs::create_dir_all(&three).unwrap();
    let (main, cfg) = pipeline_run(&three, 3, 60, &[(1, 15), (2, 30), (3, 45)]);

    // Drain what the collectors produced after the trainer's deadline.
    let ex = SnapshotExchange::open(&cfg.exchange_dir).unwrap();
    let cfg_path = three.join("run.toml");
    let mut drained = Vec::new();
    for k in 0..10 {
        if ex.pending().unwrap().is_empty() {
            break;
        }
        let t = spawn(&cfg_path, &["distill", "trainer", "--duration", "10"], &three.join(format!("drain{k}.log")));
        drained.push(trainer_output(t));
    }
    let ledger = ex.ledger().unwrap();
    let trained: u64 = main.transitions + drained.iter().map(|r| r.transitions).sum::<u64>();
    let files: u64 = main.files + drained.iter().map(|r| r.files).sum::<u64>();
    let rejected: u64 = main.rejected + drained.iter().map(|r| r.rejected).sum::<u64>();
    let mut seqs: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
    for p in ex.consumed().unwrap() {
        let (c, s) = parse_file_name(&p.file_name().unwrap().to_string_lossy()).unwrap();
        seqs.entry(c).or_default().push(s);
    }
    let contiguous = seqs.len() == 3 && seqs.values().all(|s| s.iter().enumerate().all(|(i, &v)| v == i as u64));
    let stale: usize = (1..=3)
        .flat_map(|id| (0..4).map(move |k| (id, k)))
        .filter_map(|(id, k)| std::fs::read_to_string(three.join(format!("collector{id}-{k}.log"))).ok())
        .filter(|log| log.contains("stale temp files"))
        .count();
    let exactly_once = ledger.pending == 0
        && ledger.rejected == 0
        && rejected == 0
        && ledger.consumed as u64 == files
        && ledger.consumed_transitions == trained
        && contiguous;

    let one = root.path().join("one");
    std::fs::create_dir_all(&one).unwrap();
    let (single, _) = pipeline_run(&one, 1, 60, &[]);
    let tp3 = main.transitions as f64 / main.elapsed_s;
    let tp1 = single.transitions as f64 / single.elapsed_s;
    let ratio = tp3 / tp1;
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let detail = format!(
        "{} files ({} transitions) consumed once, {} rejected, per-collector sequences contiguous: {contiguous}, {} kills, {stale} restarts found torn temps; throughput 3 collectors {tp3:.0}/s vs 1 collector {tp1:.0}/s = {ratio:.2}x (need 2x, host has {cores} core(s))",
        ledger.consumed, ledger.consumed_transitions, ledger.rejected, 3,
    );
    let v = if !exactly_once {
        Verdict::Fail(detail)
    } else if ratio >= 2.0 {
        Verdict::Pass(detail)
    } else if cores < 4 {
        Verdict::HostLimited(detail)
    } else {
        Verdict::Fail(detail)
    };
    within(t0, 400.0, v)
}

// ---------------------------------------------------------------- curriculum

fn curriculum_thresholds() -> Verdict {
    let t0 = Instant::now();
    let cfg = CurriculumConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    // Thresholds are fractions of the sub-track length; 0.75 * 4.8 lands
    // one ulp below 3.6.
    let (up, down) = (0.75 * 4.8, 0.5 * 4.8);
    let below = |x: f64| f64::from_bits(x.to_bits() - 1);
    let above = |x: f64| f64::from_bits(x.to_bits() + 1);
    let ds = [0.0, 1.0, below(down), down, above(down), 3.0, below(up), up, above(up), 3.6, 4.8];
    let mut cases = 0;
    let mut wrong = Vec::new();
    for rows in [1usize, 2, 3, 10] {
        for row in 0..rows {
            for &d in &ds {
                for (success, fall) in [(false, false), (true, false), (false, true), (true, true)] {
                    for vx in [-0.5, 0.0, 1e-9, 0.8] {
                        let stats = EpisodeStats {
                            distance_along_track: d,
                            success,
                            fall,
                            steps: 10,
                        };
                        let state = CurriculumState { row, col: 2 };
                        let got = curriculum_update(state, &stats, vx, 4.8, rows, &cfg, &mut rng);
                        let want = if vx <= 0.0 {
                            row
                        } else if success && d >= up {
                            (row + 1).min(rows - 1)
                        } else if fall && d < down {
                            row.saturating_sub(1)
                        } else {
                            row
                        };
                        cases += 1;
                        if got.row != want || got.col != 2 {
                            wrong.push(format!("rows={rows} row={row} d={d} s={success} f={fall} vx={vx}: {}", got.row));
                        }
                    }
                }
            }
        }
    }
    within(
        t0,
        1.0,
        check(wrong.is_empty(), format!("{cases} cases, {} wrong {:?}", wrong.len(), wrong.iter().take(3).collect::<Vec<_>>())),
    )
}

// ---------------------------------------------------------------- metrics

fn metric_plumbing() -> Verdict {
    let t0 = Instant::now();
    let layout = evaluation_layout(&[]).unwrap();
    let table = evaluate(&mut TeleportAgent { speed: 1.0 }, &layout, &EnvConfig::default(), 2, 11).unwrap();
    let ok = table.rows.len() == 10
        && table.rows.iter().all(|r| r.success_rate == 100.0 && (r.average_distance - 14.4).abs() < 1e-9);
    let csv = table.to_csv();
    let schema = csv.lines().skip(1).all(|l| l.ends_with(",100.0,14.40"));
    within(
        t0,
        60.0,
        check(
            ok && schema,
            format!(
                "{} tracks: {}",
                table.rows.len(),
                table.rows.iter().map(|r| format!("{} {:.1}%/{:.2}m", r.terrain, r.success_rate, r.average_distance)).collect::<Vec<_>>().join(", ")
            ),
        ),
    )
}

// ---------------------------------------------------------------- arm override

fn leg_stream(arm: Option<[f64; 8]>, seed: u64) -> Vec<[f64; NUM_JOINTS]> {
    let track = Arc::new(assemble_track_grid(&TrackLayout::evaluation(&ObstacleKind::ALL).unwrap(), seed).unwrap());
    let env_cfg = EnvConfig {
        safety_clip: true,
        ..EnvConfig::default()
    };
    let mut env = ParkourEnv::new(env_cfg, EnvMode::Train, track, CurriculumState { row: 2, col: 6 }, 0.1, seed).unwrap();
    let joints = env.sim.joints.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..1000)
        .map(|_| {
            let mut a = [0.0; NUM_JOINTS];
            a.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
            let t = env.sim.targets_from_action(&a);
            let t = arm.map_or(t, |arm| arm_override(&t, &arm, &joints));
            env.step_targets(&a, t).targets
        })
        .collect()
}

fn arm_override_isolation() -> Verdict {
    let t0 = Instant::now();
    let arm = [0.5, -0.3, 0.2, 1.2, -0.5, 0.3, -0.2, 1.2];
    let mut diffs = 0;
    let mut arm_changed = 0;
    for seed in [1, 2, 3] {
        let free = leg_stream(None, seed);
        let held = leg_stream(Some(arm), seed);
        for (a, b) in free.iter().zip(&held) {
            diffs += LEG_JOINTS.iter().filter(|&&j| a[j].to_bits() != b[j].to_bits()).count();
            arm_changed += ARM_JOINTS.iter().any(|&j| a[j] != b[j]) as usize;
        }
    }
    within(
        t0,
        60.0,
        check(
            diffs == 0 && arm_changed > 0,
            format!("3 seeds x 1000 ticks: {diffs} differing leg targets; arm targets differed on {arm_changed} ticks"),
        ),
    )
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("reward_oracles", reward_oracles),
        ("torque_safety", torque_safety),
        ("terrain_fidelity", terrain_fidelity),
        ("perception_oracles", perception_oracles),
        ("gradient_correctness", gradient_checks),
        ("gae_equivalence", gae_equivalence),
        ("ppo_bandit", ppo_bandit),
        ("distillation", distillation),
        ("orchestration", orchestration),
        ("curriculum", curriculum_thresholds),
        ("metric_plumbing", metric_plumbing),
        ("arm_override_isolation", arm_override_isolation),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.contains(o.as_str())) {
            continue;
        }
        match run() {
            Verdict::Pass(d) => println!("PASS {name}: {d}"),
            Verdict::Fail(d) => {
                failed += 1;
                println!("FAIL {name}: {d}");
            }
            Verdict::HostLimited(d) => println!("FAIL {name}: {d} [not attainable on this host]"),
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
