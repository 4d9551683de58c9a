//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. `ACCEPTANCE_ONLY=3,7` runs a subset.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use cliff_geom::body_model::{rodrigues, BodyParams, BodyTemplate, Frame, JointSet};
use cliff_geom::camera::{
    crop_rotation, crop_to_full_translation, full_depth_via_crop, gamma_angles, project_point, BBox,
    PerspectiveCamera, WeakPerspective,
};
use cliff_geom::estimator::annotate::{annotate_dataset, annotator_config, PriorProvider};
use cliff_geom::estimator::experiments::{
    ablate, ablation_scene_config, ambiguity_study, focal_sweep, focal_sweep_config, focal_sweep_scene_config,
    AblationConfig, DEFAULT_FOCAL_FACTORS, GAMMA_RANGE_DEG,
};
use cliff_geom::estimator::fit::{fd_steps, pack, unpack, Objective, NUM_FREE};
use cliff_geom::estimator::lifter::{batch_gradient, batch_loss, samples_from_scenes, LifterModel};
use cliff_geom::estimator::optim::{central_gradient, central_jacobian};
use cliff_geom::estimator::FitConfig;
use cliff_geom::losses::{loss_smpl, total_loss, LossMode, LossWeights, Prediction};
use cliff_geom::metrics::{mpjpe, pa_mpjpe, procrustes_align};
use cliff_geom::smoothing::{smooth_sequence, OneEuroConfig};
use cliff_geom::synthetic::{add_noise, gen_dataset, gen_motion, jitter_joints, SceneConfig, Supervision};
use cliff_geom::{Mat3, Vec3};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

// 1. Crop-to-full translation.
fn translation_exactness() -> Outcome {
    const DRAWS: usize = 100_000;
    const DEPTH_TOL: f64 = 1e-12;
    const PROJ_TOL: f64 = 1e-9;
    const BUDGET: Duration = Duration::from_secs(5);
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_depth, mut worst_proj) = (0.0f64, 0.0f64);
    for _ in 0..DRAWS {
        let weak = WeakPerspective { s: rng.random_range(0.2..3.0), tx: rng.random_range(-0.5..0.5), ty: rng.random_range(-0.5..0.5) };
        let bbox = BBox { cx: rng.random_range(-1000.0..1000.0), cy: rng.random_range(-600.0..600.0), b: rng.random_range(40.0..1200.0) };
        let f = rng.random_range(300.0..6000.0);
        let expected_z = 2.0 * f / (bbox.b * weak.s);
        let t = crop_to_full_translation(&weak, &bbox, f).unwrap().t;
        let via_crop = full_depth_via_crop(&weak, &bbox, f).unwrap();
        worst_depth = worst_depth.max(rel(t.z, expected_z)).max(rel(via_crop, expected_z));
        let cam = PerspectiveCamera { focal: f, principal: cliff_geom::Vec2::zeros(), width: 2000.0, height: 1200.0 };
        let p = project_point(&t, &cam).unwrap();
        let half = bbox.b * weak.s / 2.0;
        let (ex, ey) = (half * weak.tx + bbox.cx, half * weak.ty + bbox.cy);
        let scale = ex.hypot(ey).max(1.0);
        worst_proj = worst_proj.max((p.x - ex).hypot(p.y - ey) / scale);
    }
    let elapsed = start.elapsed();
    outcome(
        worst_depth <= DEPTH_TOL && worst_proj <= PROJ_TOL && elapsed < BUDGET,
        format!(
            "{DRAWS} draws, depth rel err {worst_depth:.2e} (tol {DEPTH_TOL:.0e}), projection rel err {worst_proj:.2e} (tol {PROJ_TOL:.0e}), {:.2}s (budget {}s)",
            elapsed.as_secs_f64(),
            BUDGET.as_secs()
        ),
    )
}

// 2. Crop rotation against the bbox ray.
fn gamma_consistency() -> Outcome {
    const DRAWS: usize = 10_000;
    const TOL_PX: f64 = 1e-9;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..DRAWS {
        let f = rng.random_range(300.0..6000.0);
        let max_cy = f * 30f64.to_radians().tan();
        let bbox = BBox {
            cx: rng.random_range(-3.0 * f..3.0 * f),
            cy: rng.random_range(-max_cy..max_cy),
            b: rng.random_range(40.0..1200.0),
        };
        let (gx, gy) = gamma_angles(&bbox, f);
        let axis = crop_rotation(gx, gy) * Vec3::z();
        let cam = PerspectiveCamera { focal: f, principal: cliff_geom::Vec2::zeros(), width: 1.0, height: 1.0 };
        let p = project_point(&axis, &cam).unwrap();
        worst = worst.max((p.x - bbox.cx).hypot(p.y - bbox.cy));
    }
    outcome(worst <= TOL_PX, format!("{DRAWS} bboxes, worst ray error {worst:.2e} px (tol {TOL_PX:.0e})"))
}

// 3. Crop ambiguity.
fn crop_ambiguity(t: &BodyTemplate) -> Outcome {
    const PAIRS: usize = 50;
    const CROP_FRACTION: f64 = 0.8;
    const FULL_MAX_DEG: f64 = 2.0;
    const BUDGET: Duration = Duration::from_secs(600);
    let start = Instant::now();
    let s = ambiguity_study(2024, PAIRS, GAMMA_RANGE_DEG, &FitConfig::default(), t).unwrap();
    let elapsed = start.elapsed();
    let pass = s.all_crop_identical
        && s.crop_yaw_mean >= CROP_FRACTION * s.gamma_mean_deg
        && s.full_yaw_mean <= FULL_MAX_DEG
        && elapsed < BUDGET;
    outcome(
        pass,
        format!(
            "{PAIRS} pairs, crop fits identical: {}, crop yaw {:.3}° vs {CROP_FRACTION}·mean γ = {:.3}°, full yaw {:.4}° (max {FULL_MAX_DEG}°), {:.0}s (budget {}s)",
            s.all_crop_identical,
            s.crop_yaw_mean,
            CROP_FRACTION * s.gamma_mean_deg,
            s.full_yaw_mean,
            elapsed.as_secs_f64(),
            BUDGET.as_secs()
        ),
    )
}

// 4. Lifter input/supervision ablation.
fn ablation_ordering(t: &BodyTemplate) -> Outcome {
    const TRAIN_SCENES: usize = 200;
    const TEST_SCENES: usize = 100;
    const SEEDS: [u64; 3] = [1, 2, 3];
    const BUDGET: Duration = Duration::from_secs(1800);
    let start = Instant::now();
    let train = gen_dataset(1000, TRAIN_SCENES, &ablation_scene_config(), t).unwrap();
    let test = gen_dataset(2000, TEST_SCENES, &ablation_scene_config(), t).unwrap();
    let config = AblationConfig { pairs_per_seed: 0, ..AblationConfig::default() };
    let table = ablate(&train, &test, &SEEDS, &config, t).unwrap();
    let elapsed = start.elapsed();
    let row = |name: &str| table.lifter.iter().find(|r| r.config == name).unwrap();
    let (n, cs, both) = (row("neither"), row("cs-only"), row("ci+cs"));
    let mpjpe_gap = n.mpjpe.mean - both.mpjpe.mean;
    let pa_gap = n.pa_mpjpe.mean - both.pa_mpjpe.mean;
    let pass = n.mpjpe.mean >= cs.mpjpe.mean && cs.mpjpe.mean >= both.mpjpe.mean && mpjpe_gap > pa_gap && elapsed < BUDGET;
    outcome(
        pass,
        format!(
            "seed-mean MPJPE neither {:.2} / cs-only {:.2} / ci+cs {:.2} mm, MPJPE gap {mpjpe_gap:.2} vs PA gap {pa_gap:.2} mm, {:.0}s (budget {}s)",
            n.mpjpe.mean,
            cs.mpjpe.mean,
            both.mpjpe.mean,
            elapsed.as_secs_f64(),
            BUDGET.as_secs()
        ),
    )
}

fn euler_zyx(a: f64, b: f64) -> Mat3 {
    let (sa, ca) = a.sin_cos();
    let (sb, cb) = b.sin_cos();
    let rz = Mat3::new(ca, -sa, 0.0, sa, ca, 0.0, 0.0, 0.0, 1.0);
    let ry = Mat3::new(cb, 0.0, sb, 0.0, 1.0, 0.0, -sb, 0.0, cb);
    rz * ry
}

/// Smallest similarity residual `Σ|s R p + t − g|²` over a 2° Euler grid,
/// with the optimal non-negative scale and translation for each rotation.
fn grid_residual(pred: &[Vec3], gt: &[Vec3]) -> f64 {
    let n = pred.len() as f64;
    let (mp, mg) = (pred.iter().sum::<Vec3>() / n, gt.iter().sum::<Vec3>() / n);
    let mut m = Mat3::zeros();
    let (mut p2, mut q2) = (0.0, 0.0);
    for (p, g) in pred.iter().zip(gt) {
        let (dp, dg) = (p - mp, g - mg);
        m += dg * dp.transpose();
        p2 += dp.norm_squared();
        q2 += dg.norm_squared();
    }
    let step = 2f64.to_radians();
    let mut best = q2;
    for ia in 0..180 {
        for ib in 0..=90 {
            let a = -std::f64::consts::PI + ia as f64 * step;
            let b = -std::f64::consts::FRAC_PI_2 + ib as f64 * step;
            // R = A·Rx(c); Σ R∘M = N00 + cos c (N11 + N22) + sin c (N21 − N12), N = AᵀM.
            let nm = euler_zyx(a, b).transpose() * m;
            for ic in 0..180 {
                let (sc, cc) = (-std::f64::consts::PI + ic as f64 * step).sin_cos();
                let tr = nm[(0, 0)] + cc * (nm[(1, 1)] + nm[(2, 2)]) + sc * (nm[(2, 1)] - nm[(1, 2)]);
                if tr > 0.0 {
                    best = best.min(q2 - tr * tr / p2);
                }
            }
        }
    }
    best
}

// 5. Closed-form Procrustes against brute force.
fn procrustes_oracle() -> Outcome {
    const INSTANCES: usize = 100;
    const FLOAT_TOL: f64 = 1e-9;
    const COPY_TOL_MM: f64 = 1e-9;
    // Every rotation lies within 3° of a grid point, which bounds the grid
    // residual by the optimum plus 2(1 − cos 3°)·Σ|g − ḡ|².
    let grid_factor = 2.0 * (1.0 - 3f64.to_radians().cos());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut below, mut within_grid, mut worst_copy) = (true, true, 0.0f64);
    let mut worst_gap = 0.0f64;
    for i in 0..INSTANCES {
        let k = rng.random_range(4..=24);
        let gt: Vec<Vec3> = (0..k)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let axis = Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let (r, s) = (rodrigues(&axis), rng.random_range(0.3..3.0));
        let shift = Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let noise = if i % 2 == 0 { 0.05 } else { 0.5 };
        let pred: Vec<Vec3> = gt
            .iter()
            .map(|g| {
                let e = Vec3::new(rng.random_range(-noise..noise), rng.random_range(-noise..noise), rng.random_range(-noise..noise));
                s * (r * g) + shift + e
            })
            .collect();
        let (_, aligned) = procrustes_align(&pred, &gt).unwrap();
        let closed: f64 = aligned.iter().zip(&gt).map(|(a, g)| (a - g).norm_squared()).sum();
        let grid = grid_residual(&pred, &gt);
        let mg = gt.iter().sum::<Vec3>() / k as f64;
        let q2: f64 = gt.iter().map(|g| (g - mg).norm_squared()).sum();
        below &= closed <= grid + FLOAT_TOL * q2;
        within_grid &= grid <= closed + grid_factor * q2 + FLOAT_TOL * q2;
        worst_gap = worst_gap.max((grid - closed) / q2);

        let copy = JointSet::new(gt.iter().map(|g| s * (r * g) + shift).collect(), Frame::FullCamera);
        let reference = JointSet::new(gt.clone(), Frame::FullCamera);
        worst_copy = worst_copy.max(pa_mpjpe(&copy, &reference).unwrap());
    }
    outcome(
        below && within_grid && worst_copy < COPY_TOL_MM,
        format!(
            "{INSTANCES} instances, closed form <= grid: {below}, grid within its 3° bound: {within_grid} (max normalized gap {worst_gap:.2e}), similarity copies PA-MPJPE max {worst_copy:.2e} mm (tol {COPY_TOL_MM:.0e})"
        ),
    )
}

/// Five-point stencil derivative.
fn five_point(f: &impl Fn(&[f64]) -> f64, x: &[f64], steps: &[f64]) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = steps[i];
            let mut at = |d: f64| {
                probe[i] = x[i] + d;
                let v = f(&probe);
                probe[i] = x[i];
                v
            };
            (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h)
        })
        .collect()
}

fn norm_rel(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / scale.max(f64::MIN_POSITIVE)
}

// 6. Gradient fidelity.
fn gradient_fidelity(t: &BodyTemplate) -> Outcome {
    const TOL: f64 = 1e-4;
    const BATCHES: usize = 20;
    const BATCH: usize = 4;
    const COORDS: usize = 40;
    const NET_STEP: f64 = 1e-5;
    let scenes = gen_dataset(61, 40, &SceneConfig::default(), t).unwrap();
    let samples = samples_from_scenes(&scenes, true).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_net = 0.0f64;
    for b in 0..BATCHES {
        let mut bias = vec![0.0; NUM_FREE];
        bias[NUM_FREE - 3] = scenes[0].persons[0].weak.s.ln();
        let mut model = LifterModel::init(true, &bias, 100 + b as u64);
        let config = FitConfig {
            loss_frame: if b % 2 == 0 { LossMode::Crop } else { LossMode::Full },
            use_bbox_input: true,
            ..FitConfig::default()
        };
        let batch = sample(&mut rng, samples.len(), BATCH).into_vec();
        let grad = batch_gradient(&model, &config, &samples, &batch, t).unwrap();
        let coords = sample(&mut rng, model.num_params(), COORDS).into_vec();
        let mut fd = Vec::with_capacity(COORDS);
        for &k in &coords {
            let orig = *model.params_mut().nth(k).unwrap();
            *model.params_mut().nth(k).unwrap() = orig + NET_STEP;
            let up = batch_loss(&model, &config, &samples, &batch, t).unwrap();
            *model.params_mut().nth(k).unwrap() = orig - NET_STEP;
            let down = batch_loss(&model, &config, &samples, &batch, t).unwrap();
            *model.params_mut().nth(k).unwrap() = orig;
            fd.push((up - down) / (2.0 * NET_STEP));
        }
        let analytic: Vec<f64> = coords.iter().map(|&k| grad[k]).collect();
        worst_net = worst_net.max(norm_rel(&analytic, &fd));
    }

    // Loss gradients with respect to the 85 free values.
    const POINTS: usize = 10;
    let oracle_steps: Vec<f64> = fd_steps().iter().map(|h| h * 100.0).collect();
    let data = gen_dataset(62, POINTS, &SceneConfig::default(), t).unwrap();
    let mut worst_loss = 0.0f64;
    let term_weights = [
        LossWeights { smpl: 1.0, j3d: 0.0, kp2d: 0.0 },
        LossWeights { smpl: 0.0, j3d: 1.0, kp2d: 0.0 },
        LossWeights { smpl: 0.0, j3d: 0.0, kp2d: 1.0 },
        LossWeights::default(),
    ];
    for scene in &data {
        let obs = scene.observation(0, Supervision::FULL).unwrap();
        let gt = scene.persons[0].params().unwrap();
        let mut x = pack(&Prediction { params: gt.clone(), weak: scene.persons[0].weak });
        for v in x.iter_mut().take(NUM_FREE - 3) {
            *v += rng.random_range(-0.2..0.2);
        }
        for mode in [LossMode::Crop, LossMode::Full] {
            for weights in &term_weights {
                let f = |x: &[f64]| total_loss(mode, weights, &unpack(x), &obs, t).unwrap().total;
                let g = central_gradient(&f, &x, &fd_steps());
                worst_loss = worst_loss.max(norm_rel(&g, &five_point(&f, &x, &oracle_steps)));
            }
            // The fitter's gradient 2Jᵀr, prior term included.
            let config = FitConfig { loss_frame: mode, prior_weight: 0.1, ..FitConfig::default() };
            let objective = Objective::new(&config, &obs, Some(&gt), t);
            let mut r = Vec::new();
            assert!(objective.residuals(&x, &mut r));
            let jac = central_jacobian(&|x: &[f64], out: &mut Vec<f64>| objective.residuals(x, out), &x, r.len(), &fd_steps());
            let g: Vec<f64> = (jac.transpose() * nalgebra::DVector::from_vec(r)).iter().map(|v| 2.0 * v).collect();
            let value = |x: &[f64]| {
                let mut r = Vec::new();
                objective.residuals(x, &mut r);
                r.iter().map(|v| v * v).sum::<f64>()
            };
            worst_loss = worst_loss.max(norm_rel(&g, &five_point(&value, &x, &oracle_steps)));
        }
    }
    outcome(
        worst_net <= TOL && worst_loss <= TOL,
        format!(
            "{BATCHES} minibatches backprop vs FD rel err {worst_net:.2e}, {POINTS} points × 2 frames × 5 objectives vs 5-point stencil rel err {worst_loss:.2e} (tol {TOL:.0e})"
        ),
    )
}

// 7. Annotator benefit.
fn annotator_benefit(t: &BodyTemplate) -> Outcome {
    const SCENES: usize = 100;
    const SIGMA_PX: f64 = 2.0;
    const PRIOR_DEG: f64 = 10.0;
    const MARGIN: f64 = 0.10;
    const LIMIT_SCENES: usize = 10;
    const LIMIT_TOL: f64 = 1e-6;
    const BUDGET: Duration = Duration::from_secs(900);
    let start = Instant::now();
    let clean = gen_dataset(700, SCENES, &SceneConfig::default(), t).unwrap();
    let scenes: Vec<_> = clean.iter().enumerate().map(|(i, s)| add_noise(s, SIGMA_PX, 0.0, 7000 + i as u64).unwrap()).collect();
    let provider = PriorProvider::PerturbedGt { angle: PRIOR_DEG.to_radians(), seed: 71 };
    let mean_err = |scenes: &[cliff_geom::synthetic::Scene], pick: &dyn Fn(usize) -> BodyParams| {
        scenes
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let pred = cliff_geom::body_model::forward_joints(&pick(i), t);
                mpjpe(&pred, &s.gt_joints(0)).unwrap()
            })
            .sum::<f64>()
            / scenes.len() as f64
    };
    let with_prior = annotate_dataset(&scenes, &provider, &annotator_config(), t).unwrap();
    let no_prior = annotate_dataset(&scenes, &provider, &FitConfig { prior_weight: 0.0, ..annotator_config() }, t).unwrap();
    let pseudo = |a: &cliff_geom::estimator::annotate::Annotation, i: usize| {
        let pg = a.scenes[i].pseudo_gt.as_ref().unwrap()[0].as_ref().unwrap();
        BodyParams::from_slices(&pg.pose, &pg.shape).unwrap()
    };
    let prior_err = mean_err(&scenes, &|i| with_prior.priors[i][0].clone());
    let pseudo_err = mean_err(&scenes, &|i| pseudo(&with_prior, i));
    let free_err = mean_err(&scenes, &|i| pseudo(&no_prior, i));

    let limit = annotate_dataset(
        &scenes[..LIMIT_SCENES],
        &provider,
        &FitConfig { prior_weight: 1e6, ..annotator_config() },
        t,
    )
    .unwrap();
    let worst_limit = (0..LIMIT_SCENES)
        .map(|i| loss_smpl(&pseudo(&limit, i), &limit.priors[i][0]))
        .fold(0.0f64, f64::max);
    let elapsed = start.elapsed();
    let pass = pseudo_err <= (1.0 - MARGIN) * prior_err
        && pseudo_err <= (1.0 - MARGIN) * free_err
        && worst_limit < LIMIT_TOL
        && elapsed < BUDGET
        && with_prior.provenance.failures.is_empty();
    outcome(
        pass,
        format!(
            "{SCENES} scenes, MPJPE pseudo-GT {pseudo_err:.2} vs prior {prior_err:.2} ({:+.1}%) and no-prior fit {free_err:.2} ({:+.1}%) mm (need <= -{:.0}%), λ=1e6 distance to prior {worst_limit:.2e} (tol {LIMIT_TOL:.0e}), {:.0}s (budget {}s)",
            100.0 * (pseudo_err / prior_err - 1.0),
            100.0 * (pseudo_err / free_err - 1.0),
            100.0 * MARGIN,
            elapsed.as_secs_f64(),
            BUDGET.as_secs()
        ),
    )
}

// 8. Focal-length sweep.
fn focal_sensitivity(t: &BodyTemplate) -> Outcome {
    const SCENES: usize = 40;
    const SIGMA_PX: f64 = 2.0;
    const MAX_INCREASE: f64 = 0.25;
    let clean = gen_dataset(800, SCENES, &focal_sweep_scene_config(), t).unwrap();
    let scenes: Vec<_> = clean.iter().enumerate().map(|(i, s)| add_noise(s, SIGMA_PX, 0.0, 8000 + i as u64).unwrap()).collect();
    let provider = PriorProvider::PerturbedGt { angle: 10f64.to_radians(), seed: 81 };
    let sweep = focal_sweep(&scenes, &DEFAULT_FOCAL_FACTORS, &provider, &focal_sweep_config(), t).unwrap();
    let low = sweep.relative_increase(0.4).unwrap();
    let high = sweep.relative_increase(3.0).unwrap();
    let argmin = (0..sweep.mpjpe.len()).min_by(|&a, &b| sweep.mpjpe[a].total_cmp(&sweep.mpjpe[b])).unwrap();
    let unit = sweep.factors.iter().position(|f| *f == 1.0).unwrap();
    let unimodal = sweep.mpjpe[..=argmin].windows(2).all(|w| w[1] <= w[0]) && sweep.mpjpe[argmin..].windows(2).all(|w| w[1] >= w[0]);
    let failures: usize = sweep.failures.iter().sum();
    let pass = low < MAX_INCREASE && high < MAX_INCREASE && unimodal && argmin.abs_diff(unit) <= 1 && failures == 0;
    let curve: Vec<String> = sweep.factors.iter().zip(&sweep.mpjpe).map(|(f, m)| format!("{f}:{m:.1}")).collect();
    outcome(
        pass,
        format!(
            "increase at 0.4 {:+.1}%, at 3.0 {:+.1}% (max {:.0}%), unimodal {unimodal}, minimum at factor {} [{}] mm",
            100.0 * low,
            100.0 * high,
            100.0 * MAX_INCREASE,
            sweep.factors[argmin],
            curve.join(" ")
        ),
    )
}

// 9. Temporal smoothing.
fn smoothing_tradeoff(t: &BodyTemplate) -> Outcome {
    const SEQUENCES: u64 = 5;
    const FRAMES: usize = 150;
    const JITTER_M: f64 = 0.02;
    const MIN_ACCEL_REDUCTION: f64 = 0.40;
    const MAX_MPJPE_INCREASE: f64 = 0.10;
    let config = OneEuroConfig::default();
    let (mut worst_accel, mut worst_mpjpe) = (0.0f64, f64::MIN);
    for seed in 0..SEQUENCES {
        let clean = gen_motion(900 + seed, FRAMES, config.fps, t).unwrap();
        let noisy = jitter_joints(&clean, JITTER_M, 950 + seed).unwrap();
        let r = smooth_sequence(&noisy.joint_sets(), &clean.joint_sets(), &config).unwrap();
        worst_accel = worst_accel.max(r.accel_after.unwrap() / r.accel_before.unwrap());
        worst_mpjpe = worst_mpjpe.max(r.mpjpe_after / r.mpjpe_before - 1.0);
    }
    outcome(
        worst_accel <= 1.0 - MIN_ACCEL_REDUCTION && worst_mpjpe < MAX_MPJPE_INCREASE,
        format!(
            "{SEQUENCES} sequences, worst accel ratio {worst_accel:.3} (max {:.2}), worst MPJPE change {:+.1}% (max +{:.0}%)",
            1.0 - MIN_ACCEL_REDUCTION,
            100.0 * worst_mpjpe,
            100.0 * MAX_MPJPE_INCREASE
        ),
    )
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

// 10. CLI determinism.
fn cli_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_cliff-geom");
    let work = tempfile::tempdir().unwrap();
    let w = work.path();
    let run = |args: &str, threads: &str| {
        let status = Command::new(bin)
            .current_dir(w)
            .env("CLIFF_GEOM_THREADS", threads)
            .args(args.split_whitespace())
            .output()
            .unwrap();
        status.status.success()
    };
    // Inputs shared by both runs.
    assert!(run("gen --seed 11 --n 60 --focal 1000 --out data", "1"));
    assert!(run("gen-ambiguity --seed 12 --n 2 --out pairs", "1"));
    assert!(run("train-lifter --dataset data --seed 3 --epochs 1 --ci --cs --out model", "1"));
    let commands = [
        "gen --seed 7 --n 10 --noise-px 2 --out {}",
        "gen-ambiguity --seed 8 --n 2 --out {}",
        "fit --dataset pairs --mode full --out {}",
        "train-lifter --dataset data --seed 4 --epochs 2 --out {}",
        "annotate --dataset pairs --seed 5 --out {}",
        "annotate --dataset pairs --seed 5 --prior lifter --model model/model.json --out {}",
        "eval --pred pairs --gt pairs --out {}",
        "ablate --dataset data --seeds 1,2 --holdout 0.15 --epochs 1 --pairs 1 --out {}",
        "focal-sweep --dataset pairs --seed 6 --factors 0.5,1,2 --out {}",
        "smooth --seed 9 --out {}",
    ];
    let mut failed = Vec::new();
    for (i, cmd) in commands.iter().enumerate() {
        let (a, b) = (format!("run{i}a"), format!("run{i}b"));
        let ok = run(&cmd.replace("{}", &a), "1") && run(&cmd.replace("{}", &b), "2");
        let same = ok && snapshot(&w.join(&a)) == snapshot(&w.join(&b));
        let rerun_same = same && run(&cmd.replace("{}", &a), "2") && snapshot(&w.join(&a)) == snapshot(&w.join(&b));
        if !rerun_same {
            failed.push(cmd.split_whitespace().next().unwrap().to_string());
        }
    }
    outcome(
        failed.is_empty(),
        format!("{} commands rerun with 1 and 2 threads, differing outputs: {:?}", commands.len(), failed),
    )
}

fn main() {
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    // Skip everything when the harness only lists tests.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let t = BodyTemplate::shipped();
    let criteria: Vec<(usize, &str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        (1, "crop-to-full translation exactness", Box::new(translation_exactness)),
        (2, "crop rotation consistency", Box::new(gamma_consistency)),
        (3, "crop ambiguity", Box::new(|| crop_ambiguity(&t))),
        (4, "ablation ordering", Box::new(|| ablation_ordering(&t))),
        (5, "Procrustes oracle", Box::new(procrustes_oracle)),
        (6, "gradient fidelity", Box::new(|| gradient_fidelity(&t))),
        (7, "annotator benefit", Box::new(|| annotator_benefit(&t))),
        (8, "focal sweep", Box::new(|| focal_sensitivity(&t))),
        (9, "temporal smoothing", Box::new(|| smoothing_tradeoff(&t))),
        (10, "CLI determinism", Box::new(cli_determinism)),
    ];
    let mut failures = 0;
    for (id, name, run) in &criteria {
        if only.as_ref().is_some_and(|o| !o.contains(id)) {
            continue;
        }
        let o = run();
        println!("criterion {id:>2} {name}: {} - {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failures += usize::from(!o.pass);
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
