//! End-to-end acceptance run: one PASS/FAIL line per criterion, with the
//! measured numbers. Exits nonzero when any criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rotdist::distribution::{
    build_image_aligned_cloud, connected_components, find_modes, mode_focused_sample, precompute_gt_distribution, score_rotations,
    tabulate_distribution, CellDistribution, ImageAlignedCloud, ScoredDistribution,
};
use rotdist::divergence::{divergence, gkl, DivergenceKind};
use rotdist::encoding::{wigner_blocks, EncodingSpec};
use rotdist::grid::{generate_grid, grid_size, mean_nn_spacing, So3Grid};
use rotdist::metrics::{ar_at_threshold, log_likelihood, log_likelihood_masses, spread, threshold_accuracy_curve, GtSet};
use rotdist::render::{iou, occlude, pose_confidence, rasterize, CameraIntrinsics};
use rotdist::rotation::sample_haar;
use rotdist::shape::ShapeModel;
use rotdist::surrogate::{encode_batch, loss, loss_and_grad, predict_distribution, train_with_pool, LrSchedule, Mlp, Optimizer, TrainConfig};
use rotdist::{Rotation, Vec3};

const DEG: f64 = PI / 180.0;

struct Outcome {
    pass: bool,
    detail: String,
    notes: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self {
            pass: true,
            detail: String::new(),
            notes: Vec::new(),
        }
    }

    /// Records one measured check.
    fn check(&mut self, ok: bool, what: String) {
        self.pass &= ok;
        if !self.detail.is_empty() {
            self.detail.push_str("; ");
        }
        self.detail.push_str(&what);
        if !ok {
            self.detail.push_str(" [fail]");
        }
    }

    fn note(&mut self, what: String) {
        self.notes.push(what);
    }
}

fn generic_pose() -> Rotation {
    Rotation::from_axis_angle(Vec3::new(0.3, -0.5, 0.8), 0.9)
}

fn cloud_for(model: &ShapeModel, r_gt: &Rotation) -> ImageAlignedCloud {
    let cam = CameraIntrinsics::default_for(model);
    build_image_aligned_cloud(model, r_gt, &cam, 100, 7).unwrap()
}

fn symmetric_gts(model: &ShapeModel, r_gt: &Rotation) -> Vec<Rotation> {
    model.symmetry().elements().unwrap().iter().map(|g| r_gt.compose(g)).collect()
}

/// Probability within `radius` of each target rotation.
fn mass_near(dist: &ScoredDistribution, targets: &[Rotation], radius: f64) -> Vec<f64> {
    targets
        .iter()
        .map(|t| {
            dist.rotations()
                .iter()
                .zip(dist.probs())
                .filter(|(r, _)| r.angle_to(t) < radius)
                .map(|(_, p)| p)
                .sum()
        })
        .collect()
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Number of targets with a mode within `radius`.
fn recovered(modes: &[rotdist::distribution::Mode], targets: &[Rotation], radius: f64) -> usize {
    targets
        .iter()
        .filter(|t| modes.iter().any(|m| m.rotation.angle_to(t) < radius))
        .count()
}

fn c1_grid() -> Outcome {
    let mut out = Outcome::new();
    let counts: Vec<usize> = (0..4).map(|l| generate_grid(l).unwrap().len()).collect();
    let expected: Vec<usize> = (0..4).map(|l| 72 * 8usize.pow(l)).collect();
    out.check(counts == expected, format!("counts l0..3 {counts:?}"));

    let t = Instant::now();
    let g5 = generate_grid(5).unwrap();
    let secs = t.elapsed().as_secs_f64();
    out.check(g5.len() == 2_359_296, format!("l5 count {}", g5.len()));
    out.check(secs < 30.0, format!("l5 generation {secs:.2}s"));

    // Angle from identity has density (1 − cos θ)/π, CDF (θ − sin θ)/π.
    let cdf = |t: f64| (t - t.sin()) / PI;
    let edges: Vec<f64> = (0..=10)
        .map(|k| {
            let target = k as f64 / 10.0;
            let (mut lo, mut hi) = (0.0, PI);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if cdf(mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect();
    let histogram_dev = |g: &So3Grid| {
        let mut bins = [0usize; 10];
        for r in g.rotations() {
            let a = r.angle();
            let k = edges[1..10].iter().take_while(|&&e| a >= e).count();
            bins[k] += 1;
        }
        bins.iter().map(|&b| (b as f64 / (g.len() as f64 / 10.0) - 1.0).abs()).fold(0.0, f64::max)
    };
    for l in 2..=4 {
        let dev = histogram_dev(&generate_grid(l).unwrap());
        out.check(dev < 0.05, format!("l{l} decile dev {:.2}%", 100.0 * dev));
    }
    let dev = histogram_dev(&g5);
    out.check(dev < 0.05, format!("l5 decile dev {:.2}%", 100.0 * dev));
    out
}

fn c2_cube_oracle() -> Outcome {
    let mut out = Outcome::new();
    let t = Instant::now();
    let model = ShapeModel::preset("cube").unwrap();
    let r_gt = generic_pose();
    let cloud = cloud_for(&model, &r_gt);
    let gts = symmetric_gts(&model, &r_gt);

    let g4 = generate_grid(4).unwrap();
    let flat = tabulate_distribution(&model, &cloud, g4.rotations(), 50.0, 50.0).unwrap();
    let per_mode = mass_near(&flat, &gts, 5.0 * DEG);
    let total: f64 = per_mode.iter().sum();
    out.check(total >= 0.99, format!("mass within 5° {total:.4}"));
    let (lo, hi) = min_max(&per_mode);
    out.check(
        per_mode.iter().all(|m| (m - 1.0 / 24.0).abs() <= 0.01),
        format!("flat l4 per-mode mass [{lo:.4}, {hi:.4}]"),
    );

    let refined: CellDistribution = precompute_gt_distribution(&model, &cloud, 4, 4, 20_000, 50.0, 50.0).unwrap();
    let (rlo, rhi) = min_max(&mass_near(&refined.dist, &gts, 5.0 * DEG));
    out.note(format!("refined oracle (l4 + 4 rounds) per-mode mass [{rlo:.4}, {rhi:.4}]"));

    let target = (grid_size(5) as f64 / (24.0 * PI * PI)).ln();
    let g5 = generate_grid(5).unwrap();
    let d5 = tabulate_distribution(&model, &cloud, g5.rotations(), 50.0, 50.0).unwrap();
    let ll5 = log_likelihood(&d5, &gts).unwrap();
    out.check((ll5 - target).abs() <= 0.5, format!("l5 LL {ll5:.3} (target {target:.2} ± 0.5)"));
    let cell_ll = log_likelihood_masses(&g5, &refined.masses_at_level(5).unwrap(), &gts).unwrap();
    out.note(format!("refined oracle integrated over l5 cells: LL {cell_ll:.3}"));

    let secs = t.elapsed().as_secs_f64();
    out.check(secs < 300.0, format!("runtime {secs:.1}s"));
    out
}

/// Components of the top-0.99 mass set and the largest in-component extent.
fn structure(dist: &ScoredDistribution, spacing: f64) -> (usize, f64) {
    let top: Vec<Rotation> = dist.top_mass_indices(0.99).iter().map(|&i| dist.rotations()[i]).collect();
    let labels = connected_components(&top, 2.0 * spacing);
    let n = labels.iter().copied().max().map_or(0, |l| l + 1);
    let mut anchor: Vec<Option<Rotation>> = vec![None; n];
    let mut extent: f64 = 0.0;
    for (r, &l) in top.iter().zip(&labels) {
        let a = *anchor[l].get_or_insert(*r);
        extent = extent.max(a.angle_to(r));
    }
    (n, extent)
}

fn c3_continuous() -> Outcome {
    let mut out = Outcome::new();
    let g4 = generate_grid(4).unwrap();
    let spacing = mean_nn_spacing(&g4, 256, 0);
    for (name, want_components) in [("cone", 1usize), ("cylinder", 2)] {
        let model = ShapeModel::preset(name).unwrap();
        let r_gt = generic_pose();
        let cloud = cloud_for(&model, &r_gt);
        let refined = precompute_gt_distribution(&model, &cloud, 4, 4, 20_000, 50.0, 50.0).unwrap();
        let (n, extent) = structure(&refined.dist, spacing);
        out.check(
            n == want_components && extent > 90.0 * DEG,
            format!("{name}: {n} component(s), extent {:.0}°", extent.to_degrees()),
        );
        let flat = tabulate_distribution(&model, &cloud, g4.rotations(), 50.0, 50.0).unwrap();
        let s = spread(&flat, &GtSet::from_symmetry(&r_gt, model.symmetry()));
        out.check(
            s <= spacing.to_degrees(),
            format!("{name} spread {s:.3}° ≤ {:.3}°", spacing.to_degrees()),
        );
    }
    out
}

fn c4_conditional() -> Outcome {
    let mut out = Outcome::new();
    let model = ShapeModel::preset("tetX").unwrap();
    // Marked face turned toward the camera.
    let r_gt = Rotation::from_wxyz(0.8880738, 0.325058, -0.325058, 0.0).unwrap();
    let cloud = cloud_for(&model, &r_gt);
    let marker = model.marker().unwrap();
    let marked = cloud.points().iter().filter(|x| marker.contains(&r_gt.inverse_rotate(x))).count();
    out.check(marked > 0, format!("{marked} marker points in cloud"));

    let fs = precompute_gt_distribution(&model, &cloud, 4, 4, 20_000, 50.0, 50.0).unwrap();
    let modes = find_modes(&fs.dist, 0.5, 5.0 * DEG, 5.0 * DEG);
    let mass = modes.first().map_or(0.0, |m| m.mass);
    out.check(modes.len() == 1 && mass >= 0.9, format!("F+S: {} mode(s), mass {mass:.4}", modes.len()));

    let s = precompute_gt_distribution(&model, &cloud, 4, 4, 20_000, 50.0, 0.0).unwrap();
    let modes = find_modes(&s.dist, 0.5, 5.0 * DEG, 5.0 * DEG);
    out.check(modes.len() == 12, format!("S only: {} modes", modes.len()));
    out
}

fn c5_divergences() -> Outcome {
    let mut out = Outcome::new();
    let v = gkl(&[1.0], &[2.0]).unwrap();
    let err = (v - (1.0 - 2f64.ln())).abs();
    out.check(err <= 1e-12, format!("gkl([1],[2]) error {err:.1e}"));

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_nonneg: f64 = 0.0;
    let mut min_positive = f64::INFINITY;
    let mut self_max: f64 = 0.0;
    let mut balanced: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(1..20);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..5.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..5.0)).collect();
        let d = gkl(&a, &b).unwrap();
        worst_nonneg = worst_nonneg.min(d);
        min_positive = min_positive.min(d);
        self_max = self_max.max(gkl(&a, &a).unwrap().abs());
        let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
        let pa: Vec<f64> = a.iter().map(|x| x / sa).collect();
        let pb: Vec<f64> = b.iter().map(|x| x / sb).collect();
        let diff = (gkl(&pa, &pb).unwrap() - divergence(DivergenceKind::Kl, &pa, &pb).unwrap()).abs();
        balanced = balanced.max(diff);
    }
    out.check(worst_nonneg >= 0.0 && min_positive > 0.0, format!("1000 pairs: min gkl {min_positive:.3e}"));
    out.check(self_max == 0.0, format!("gkl(a,a) max {self_max:.1e}"));
    out.check(balanced <= 1e-10, format!("balanced |gkl − kl| {balanced:.1e}"));
    out
}

fn gradient_check() -> f64 {
    let spec = EncodingSpec::cube_pe(3);
    let model = ShapeModel::preset("cube").unwrap();
    let cloud = cloud_for(&model, &generic_pose());
    let rots = sample_haar(32, 11);
    let (m, o) = score_rotations(&model, &cloud, &rots).unwrap();
    let x = encode_batch(&spec, &rots);
    let mut mlp = Mlp::standard(spec.dim(), 3).unwrap();
    let (l0, g) = loss_and_grad(&mlp, x.view(), &m, &o, 5.0, 5.0).unwrap();
    let g = g.flatten();
    let p0 = mlp.params();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let k = rng.random_range(0..p0.len());
        let mut p = p0.clone();
        p[k] = p0[k] + h;
        mlp.set_params(&p).unwrap();
        let up = loss(&mlp, x.view(), &m, &o, 5.0, 5.0).unwrap();
        p[k] = p0[k] - h;
        mlp.set_params(&p).unwrap();
        let down = loss(&mlp, x.view(), &m, &o, 5.0, 5.0).unwrap();
        let fd = (up - down) / (2.0 * h);
        // Rounding noise of the central difference is ~ε·|L|/h; the floor
        // keeps it from dominating near-zero gradients.
        let floor = 1e5 * f64::EPSILON * l0.abs().max(1.0) / h;
        worst = worst.max((fd - g[k]).abs() / fd.abs().max(g[k].abs()).max(floor));
    }
    worst
}

fn c6_surrogate() -> Outcome {
    let mut out = Outcome::new();
    let worst = gradient_check();
    out.check(worst < 1e-4, format!("gradient rel. error {worst:.1e}"));

    let model = ShapeModel::preset("cube").unwrap();
    let r_gt = generic_pose();
    let cloud = cloud_for(&model, &r_gt);
    let gts = symmetric_gts(&model, &r_gt);
    let cfg = TrainConfig {
        steps: 2000,
        learning_rate: 3e-4,
        optimizer: Optimizer::adam(),
        schedule: LrSchedule::Cosine,
        encoding: EncodingSpec::cube_pe(6),
        beta_s: 20.0,
        beta_f: 20.0,
        pool_level: 4,
        pool_refine_rounds: 4,
        seed: 0,
        ..TrainConfig::default()
    };
    let t = Instant::now();
    let pool = precompute_gt_distribution(&model, &cloud, cfg.pool_level, cfg.pool_refine_rounds, cfg.pool_refine_top_k, cfg.beta_s, cfg.beta_f).unwrap();
    let trained = train_with_pool(&model, &cloud, &pool.dist, &cfg).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let g4 = generate_grid(4).unwrap();
    let d = predict_distribution(&trained.mlp, &cfg.encoding, g4.rotations(), cfg.beta_s, cfg.beta_f).unwrap();
    let modes = find_modes(&d, 0.5, 5.0 * DEG, 5.0 * DEG);
    let rec = recovered(&modes, &gts, 10.0 * DEG);
    out.check(rec >= 20, format!("{rec}/24 modes within 10° ({} peaks)", modes.len()));
    let ll = log_likelihood(&d, &gts).unwrap();
    out.check(ll > 6.0, format!("surrogate LL {ll:.3}"));
    out.check(secs < 600.0, format!("training {secs:.0}s"));
    let loose = find_modes(&d, 0.01, 5.0 * DEG, 5.0 * DEG);
    out.note(format!(
        "peaks above 1% of max: {} covering {}/24 modes; loss {:.3} -> {:.3}",
        loose.len(),
        recovered(&loose, &gts, 10.0 * DEG),
        trained.losses[0],
        trained.losses[trained.losses.len() - 1]
    ));
    out
}

fn c7_sampler() -> Outcome {
    let mut out = Outcome::new();
    let model = ShapeModel::preset("cube").unwrap();
    let r_gt = generic_pose();
    let cloud = cloud_for(&model, &r_gt);
    let gts = symmetric_gts(&model, &r_gt);
    let pool = precompute_gt_distribution(&model, &cloud, 4, 4, 20_000, 50.0, 50.0).unwrap();
    let a = mode_focused_sample(&pool.dist, &r_gt, 20_000, 3000, 1095, 9).unwrap();
    let b = mode_focused_sample(&pool.dist, &r_gt, 20_000, 3000, 1095, 9).unwrap();
    out.check(a.len() == 4096 && a[4095] == r_gt, format!("batch {} = 3000 + 1095 + 1", a.len()));
    let near = a[..3000].iter().filter(|r| gts.iter().any(|g| r.angle_to(g) < 10.0 * DEG)).count();
    let frac = near as f64 / 3000.0;
    out.check(frac >= 0.95, format!("mode draws within 10°: {:.2}%", 100.0 * frac));
    out.check(a == b, "same seed → same batch".to_string());
    out
}

fn c8_metrics() -> Outcome {
    let mut out = Outcome::new();
    let g = generate_grid(3).unwrap();
    let n = g.len();
    let uniform = ScoredDistribution::equivolumetric(g.rotations().to_vec(), vec![0.0; n], vec![0.0; n], 1.0, 1.0).unwrap();
    let ll = log_likelihood(&uniform, &sample_haar(20, 8)).unwrap();
    let target = -(PI * PI).ln();
    out.check((ll - target).abs() <= 1e-3, format!("uniform LL {ll:.4} (−ln π² = {target:.4})"));
    out.note("the stated constant −2.1972 is −ln 9; −ln π² = −2.2895 is the value implied by the density definition".to_string());

    let ests = sample_haar(10, 3);
    let ok_equal = ar_at_threshold(&ests, &ests, 30.0, None).unwrap() == 1.0;
    let r31 = Rotation::rz(31.0 * DEG);
    let ok_edge = ar_at_threshold(&[r31], &[Rotation::identity()], 30.0, None).unwrap() == 0.0;
    let cube = ShapeModel::preset("cube").unwrap();
    let group = cube.symmetry().elements().unwrap();
    let gt = generic_pose();
    let wrong: Vec<Rotation> = group.iter().map(|g| gt.compose(g)).collect();
    let ok_sym = ar_at_threshold(&wrong, &vec![gt; wrong.len()], 30.0, Some(group)).unwrap() == 1.0;
    let ok_mismatch = ar_at_threshold(&ests, &ests[..3], 30.0, None).is_err();
    out.check(
        ok_equal && ok_edge && ok_sym && ok_mismatch,
        format!("recall edge cases equal={ok_equal} 31°={ok_edge} symmetric={ok_sym} mismatch={ok_mismatch}"),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let errors: Vec<f64> = (0..500).map(|_| rng.random_range(0.0..180.0)).collect();
    let conf: Vec<f64> = errors.iter().map(|e| 1.0 - e / 180.0).collect();
    let levels: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
    let curve = threshold_accuracy_curve(&conf, &errors, 30.0, &levels).unwrap();
    let acc: Vec<f64> = curve.iter().filter_map(|p| p.accuracy).collect();
    let monotone = acc.windows(2).all(|w| w[1] >= w[0]);
    out.check(monotone, format!("curve monotone over {} defined levels", acc.len()));
    out
}

fn c9_confidence() -> Outcome {
    let mut out = Outcome::new();
    for name in ["cube", "tetX", "cylinder"] {
        let model = ShapeModel::preset(name).unwrap();
        let cam = CameraIntrinsics::default_for(&model);
        let r = generic_pose();
        let (mask, _) = rasterize(&model, &r, &cam).unwrap();
        let c = pose_confidence(&model, &r, &mask, &cam).unwrap();
        out.check(c == 1.0, format!("{name} self IoU {c}"));
        let sweep: Vec<f64> = [0.1, 0.2, 0.4]
            .iter()
            .map(|&f| pose_confidence(&model, &r, &occlude(&mask, f, 2).unwrap(), &cam).unwrap())
            .collect();
        out.check(
            sweep.windows(2).all(|w| w[1] < w[0]) && sweep[0] < 1.0,
            format!("{name} occlusion {:.3}/{:.3}/{:.3}", sweep[0], sweep[1], sweep[2]),
        );
    }
    let mut worst: f64 = 0.0;
    let rots = sample_haar(6, 17);
    for name in ["cube", "cone", "tet"] {
        let model = ShapeModel::preset(name).unwrap();
        let cam = CameraIntrinsics::default_for(&model);
        let hi = cam.supersampled(10);
        for pair in rots.chunks(2) {
            let lo_iou = iou(&rasterize(&model, &pair[0], &cam).unwrap().0, &rasterize(&model, &pair[1], &cam).unwrap().0).unwrap();
            let hi_iou = iou(&rasterize(&model, &pair[0], &hi).unwrap().0, &rasterize(&model, &pair[1], &hi).unwrap().0).unwrap();
            worst = worst.max((lo_iou - hi_iou).abs());
        }
    }
    out.check(worst <= 0.01, format!("IoU vs 10× supersampled max diff {worst:.4}"));
    out
}

fn c10_performance() -> Outcome {
    let mut out = Outcome::new();
    let g5 = generate_grid(5).unwrap();
    let n = g5.len();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let m: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let o: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let rots = g5.into_rotations();
    let time = |rots: Vec<Rotation>, m: Vec<f64>, o: Vec<f64>| {
        let t = Instant::now();
        let d = ScoredDistribution::equivolumetric(rots, m, o, 50.0, 50.0).unwrap();
        let secs = t.elapsed().as_secs_f64();
        assert_eq!(d.len(), n);
        secs
    };
    let par = time(rots.clone(), m.clone(), o.clone());
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| time(rots, m, o));
    out.check(par < 2.0, format!("l5 weights, default pool {par:.3}s"));
    out.check(single < 10.0, format!("single thread {single:.3}s"));
    out.note(format!("{} worker thread(s) available", rayon::current_num_threads()));
    out
}

fn c11_encodings() -> Outcome {
    let mut out = Outcome::new();
    let pe = EncodingSpec::cube_pe(3);
    let len = pe.encode(&generic_pose()).len();
    out.check(pe.dim() == 144 && len == 144, format!("cube_pe(3) length {len}"));
    let w = EncodingSpec::wigner(5);
    let len = w.encode(&generic_pose()).len();
    out.check(w.dim() == 286 && len == 286, format!("wigner(5) length {len}"));
    let rots = sample_haar(40, 21);
    let mut defect: f64 = 0.0;
    for pair in rots.chunks(2) {
        let ab = wigner_blocks(&pair[0].compose(&pair[1]), 5);
        let a = wigner_blocks(&pair[0], 5);
        let b = wigner_blocks(&pair[1], 5);
        for (l, blk) in ab.iter().enumerate() {
            let prod = a[l].matmul(&b[l]);
            let lm = l as i64;
            for i in -lm..=lm {
                for j in -lm..=lm {
                    defect = defect.max((blk.get(i, j) - prod.get(i, j)).abs());
                }
            }
        }
    }
    out.check(defect < 1e-8, format!("homomorphism defect {defect:.1e}"));
    out
}

fn main() {
    // `cargo test` passes harness flags such as `--nocapture`; a name filter
    // that matches nothing here skips the run.
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    if filter.as_deref().is_some_and(|f| !"acceptance".contains(f)) {
        return;
    }
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 11] = [
        ("grid construction", c1_grid),
        ("cube oracle distribution", c2_cube_oracle),
        ("continuous symmetry", c3_continuous),
        ("conditional symmetry", c4_conditional),
        ("divergences", c5_divergences),
        ("surrogate", c6_surrogate),
        ("mode-focused sampler", c7_sampler),
        ("metrics", c8_metrics),
        ("pose confidence", c9_confidence),
        ("performance", c10_performance),
        ("encodings", c11_encodings),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = run();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {verdict} {name} ({:.1}s): {}", k + 1, t.elapsed().as_secs_f64(), o.detail);
        for n in &o.notes {
            println!("              info: {n}");
        }
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {}/11 passed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
