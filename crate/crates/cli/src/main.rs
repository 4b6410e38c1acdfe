mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use rotdist::distribution::{build_image_aligned_cloud, connected_components, find_modes, precompute_gt_distribution, tabulate_distribution, ScoredDistribution};
use rotdist::grid::{generate_grid, mean_nn_spacing};
use rotdist::io::grid_to_csv;
use rotdist::metrics::{curve_to_csv, evaluate, threshold_accuracy_curve, EvalReport, GtSet};
use rotdist::render::{occlude, pose_confidence, rasterize, SilhouetteMask};
use rotdist::rotation::sample_haar;
use rotdist::surrogate::{loss_trace_csv, predict_distribution, train, Mlp};
use rotdist::Rotation;

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "rotdist", version, about = "Rotation distributions from CAD-informed scores")]
struct Cli {
    /// JSON run configuration (defaults are used for missing fields).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for data-parallel loops (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Prints the resolved configuration as JSON and exits.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Writes the equivolumetric grid at a level to `grid_l<level>.csv`.
    Grid {
        #[arg(long)]
        level: u32,
    },
    /// Scores the configured object and pose: `distribution.csv`, `summary.json`.
    Score,
    /// Trains the surrogate: `checkpoint.bin`, `loss.csv`.
    Train,
    /// Evaluates a distribution against the ground-truth set: `eval.json`, `eval_samples.csv`.
    Eval {
        #[arg(long, value_enum, default_value = "oracle")]
        source: Source,
        /// Checkpoint for `--source surrogate`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Distribution CSV for `--source file`.
        #[arg(long)]
        distribution: Option<PathBuf>,
        /// Grid level (default: the config's eval_level).
        #[arg(long)]
        level: Option<u32>,
        /// Number of ground-truth views (view 0 is the config pose, the rest are random).
        #[arg(long, default_value_t = 1)]
        views: usize,
    },
    /// Renders the object at a pose: `mask.pgm`, `depth.pgm`.
    Render {
        /// `qw,qx,qy,qz` (default: the config pose).
        #[arg(long, value_parser = parse_quat, allow_hyphen_values = true)]
        pose: Option<Rotation>,
        /// Also writes `mask_occluded.pgm` with this fraction of pixels erased.
        #[arg(long)]
        occlude: Option<f64>,
    },
    /// Scores pose estimates against predicted masks: `confidence.csv`, `curve.csv`.
    Confidence {
        /// CSV `mask,qw,qx,qy,qz[,gt_qw,gt_qx,gt_qy,gt_qz]`; mask paths are relative to this file.
        #[arg(long)]
        samples: PathBuf,
        /// An estimate is correct when its error is below this angle (degrees).
        #[arg(long, default_value_t = 30.0)]
        theta: f64,
        /// Number of evenly spaced confidence thresholds in [0, 1].
        #[arg(long, default_value_t = 21)]
        levels: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Source {
    Oracle,
    Surrogate,
    Uniform,
    File,
}

fn parse_quat(s: &str) -> std::result::Result<Rotation, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|f| f.trim().parse::<f64>().map_err(|e| format!("{f:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    if v.len() != 4 {
        return Err(format!("expected qw,qx,qy,qz, got {} values", v.len()));
    }
    Rotation::from_wxyz(v[0], v[1], v[2], v[3]).map_err(|e| e.to_string())
}

/// Files written by the current command, removed again if it fails.
struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.dir.join(name);
        self.written.push(path.clone());
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    fn write_json(&mut self, name: &str, value: &serde_json::Value) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    fn remove_all(&self) {
        for p in &self.written {
            let _ = std::fs::remove_file(p);
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut outputs = None;
    match run(&cli, &mut outputs) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(o) = &outputs {
                o.remove_all();
            }
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli, outputs: &mut Option<Outputs>) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(());
    }
    let Some(command) = &cli.command else {
        bail!("no command given (see --help)");
    };
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    cfg.validate()?;
    let out = outputs.insert(Outputs::new(&cli.out_dir)?);
    match command {
        Command::Grid { level } => cmd_grid(*level, out),
        Command::Score => cmd_score(&cfg, out),
        Command::Train => cmd_train(&cfg, out),
        Command::Eval {
            source,
            checkpoint,
            distribution,
            level,
            views,
        } => cmd_eval(&cfg, *source, checkpoint.as_deref(), distribution.as_deref(), level.unwrap_or(cfg.grid.eval_level), *views, out),
        Command::Render { pose, occlude } => cmd_render(&cfg, pose.as_ref(), *occlude, out),
        Command::Confidence { samples, theta, levels } => cmd_confidence(&cfg, samples, *theta, *levels, out),
    }
}

fn cmd_grid(level: u32, out: &mut Outputs) -> Result<()> {
    let grid = generate_grid(level)?;
    let path = out.write(&format!("grid_l{level}.csv"), grid_to_csv(&grid))?;
    println!("{} rotations -> {}", grid.len(), path.display());
    Ok(())
}

fn cmd_score(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let model = cfg.build_model()?;
    let cam = cfg.camera(&model);
    let r_gt = cfg.pose()?;
    let cloud = build_image_aligned_cloud(&model, &r_gt, &cam, cfg.n_points, cfg.seed)?;
    let (beta_s, beta_f) = cfg.betas();
    let cd = precompute_gt_distribution(&model, &cloud, cfg.grid.level, cfg.grid.refine_rounds, cfg.grid.refine_top_k, beta_s, beta_f)?;
    let dist = &cd.dist;
    out.write("distribution.csv", dist.to_csv())?;

    let m = &cfg.modes;
    let modes = find_modes(dist, m.rel_threshold, m.merge_deg.to_radians(), m.mass_deg.to_radians());
    // Structure of the set carrying 99% of the mass: a continuous symmetry
    // shows up as a component stretched far beyond the grid spacing.
    let spacing = mean_nn_spacing(&generate_grid(cfg.grid.level)?, 256, cfg.seed);
    let top = dist.top_mass_indices(0.99);
    let top_rot: Vec<Rotation> = top.iter().map(|&i| dist.rotations()[i]).collect();
    let labels = connected_components(&top_rot, 2.0 * spacing);
    let n_components = labels.iter().copied().max().map_or(0, |l| l + 1);
    let mut extent = vec![0.0f64; n_components];
    let mut anchor: Vec<Option<Rotation>> = vec![None; n_components];
    for (r, &l) in top_rot.iter().zip(&labels) {
        let a = *anchor[l].get_or_insert(*r);
        extent[l] = extent[l].max(a.angle_to(r));
    }
    let max_extent = extent.iter().copied().fold(0.0, f64::max).to_degrees();
    let continuous = max_extent > 90.0;

    let summary = json!({
        "n": dist.len(),
        "entropy": dist.entropy(),
        "beta_s": beta_s,
        "beta_f": beta_f,
        "n_modes": modes.len(),
        "modes": modes.iter().map(|md| json!({
            "q": md.rotation.wxyz(),
            "density": md.density,
            "mass": md.mass,
        })).collect::<Vec<_>>(),
        "top_mass_size": top.len(),
        "components": n_components,
        "max_component_extent_deg": max_extent,
        "continuous": continuous,
    });
    out.write_json("summary.json", &summary)?;
    println!("{} rotations, {} modes, continuous = {continuous}", dist.len(), modes.len());
    Ok(())
}

fn cmd_train(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let model = cfg.build_model()?;
    let cam = cfg.camera(&model);
    let cloud = build_image_aligned_cloud(&model, &cfg.pose()?, &cam, cfg.n_points, cfg.seed)?;
    let trained = train(&model, &cloud, &cfg.train_config())?;
    out.write("checkpoint.bin", trained.mlp.to_bytes())?;
    out.write("loss.csv", loss_trace_csv(&trained.losses))?;
    println!(
        "{} steps, loss {:.4e} -> {:.4e}",
        trained.losses.len(),
        trained.losses[0],
        trained.losses[trained.losses.len() - 1]
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    cfg: &RunConfig,
    source: Source,
    checkpoint: Option<&Path>,
    distribution: Option<&Path>,
    level: u32,
    views: usize,
    out: &mut Outputs,
) -> Result<()> {
    if views == 0 {
        bail!("--views must be at least 1");
    }
    if views > 1 && matches!(source, Source::Surrogate | Source::File) {
        bail!("--views > 1 needs a per-view distribution (oracle or uniform)");
    }
    let model = cfg.build_model()?;
    let cam = cfg.camera(&model);
    let (beta_s, beta_f) = cfg.betas();
    let mut poses = vec![cfg.pose()?];
    poses.extend(sample_haar(views - 1, cfg.seed));

    let needs_grid = source != Source::File;
    let grid = if needs_grid { Some(generate_grid(level)?) } else { None };
    let fixed: Option<ScoredDistribution> = match source {
        Source::Surrogate => {
            let path = checkpoint.context("--source surrogate needs --checkpoint")?;
            if !path.exists() {
                bail!("checkpoint file {} not found", path.display());
            }
            let mlp = Mlp::read_checkpoint(path)?;
            let rots = grid.as_ref().expect("grid").rotations();
            Some(predict_distribution(&mlp, &cfg.encoding, rots, beta_s, beta_f)?)
        }
        Source::File => {
            let path = distribution.context("--source file needs --distribution")?;
            if !path.exists() {
                bail!("distribution file {} not found", path.display());
            }
            Some(ScoredDistribution::read_csv(path)?)
        }
        Source::Uniform => {
            let g = grid.as_ref().expect("grid");
            Some(ScoredDistribution::equivolumetric(g.rotations().to_vec(), vec![0.0; g.len()], vec![0.0; g.len()], beta_s, beta_f)?)
        }
        Source::Oracle => None,
    };

    let mut samples = Vec::with_capacity(views);
    for (v, r_gt) in poses.iter().enumerate() {
        let dist = match &fixed {
            Some(d) => d.clone(),
            None => {
                let cloud = build_image_aligned_cloud(&model, r_gt, &cam, cfg.n_points, cfg.seed.wrapping_add(v as u64))?;
                tabulate_distribution(&model, &cloud, grid.as_ref().expect("grid").rotations(), beta_s, beta_f)?
            }
        };
        samples.push(evaluate(&dist, r_gt, model.symmetry(), 360, v)?);
    }
    let report = EvalReport::from_samples(samples)?;
    out.write_json(
        "eval.json",
        &json!({
            "source": format!("{source:?}").to_lowercase(),
            "level": if needs_grid { Some(level) } else { None },
            "views": views,
            "ll_nats": report.ll_nats,
            "spread_deg": report.spread_deg,
            "ar30": report.ar30,
        }),
    )?;
    out.write("eval_samples.csv", report.samples_csv())?;
    println!("ll_nats = {:.4}, spread_deg = {:.4}, ar30 = {:.4}", report.ll_nats, report.spread_deg, report.ar30);
    Ok(())
}

fn cmd_render(cfg: &RunConfig, pose: Option<&Rotation>, fraction: Option<f64>, out: &mut Outputs) -> Result<()> {
    let model = cfg.build_model()?;
    let cam = cfg.camera(&model);
    let r = match pose {
        Some(r) => *r,
        None => cfg.pose()?,
    };
    let (mask, depth) = rasterize(&model, &r, &cam)?;
    out.write("mask.pgm", mask.to_pgm())?;
    out.write("depth.pgm", depth.to_pgm())?;
    if let Some(f) = fraction {
        out.write("mask_occluded.pgm", occlude(&mask, f, cfg.seed)?.to_pgm())?;
    }
    println!("{} foreground pixels", mask.count());
    Ok(())
}

struct ConfidenceSample {
    mask: String,
    estimate: Rotation,
    gt: Option<Rotation>,
}

fn read_confidence_samples(path: &Path) -> Result<Vec<ConfidenceSample>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("samples file {} not found or unreadable", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("mask,qw") {
            continue;
        }
        let (mask, rest) = line.split_once(',').with_context(|| format!("{}:{}: expected mask,qw,qx,qy,qz", path.display(), i + 1))?;
        let ctx = || format!("{}:{}", path.display(), i + 1);
        let fields = rest
            .split(',')
            .map(|f| f.trim().parse::<f64>().with_context(|| format!("{}: bad number {f:?}", ctx())))
            .collect::<Result<Vec<f64>>>()?;
        if fields.len() != 4 && fields.len() != 8 {
            bail!("{}: expected 4 or 8 quaternion fields, found {}", ctx(), fields.len());
        }
        let quats = fields
            .chunks(4)
            .map(|q| Rotation::from_wxyz(q[0], q[1], q[2], q[3]).with_context(ctx))
            .collect::<Result<Vec<Rotation>>>()?;
        let (estimate, gt) = match quats.as_slice() {
            [e] => (*e, None),
            [e, g] => (*e, Some(*g)),
            _ => unreachable!("checked field count"),
        };
        out.push(ConfidenceSample {
            mask: mask.trim().to_string(),
            estimate,
            gt,
        });
    }
    if out.is_empty() {
        bail!("samples file {} has no rows", path.display());
    }
    Ok(out)
}

fn cmd_confidence(cfg: &RunConfig, samples_path: &Path, theta: f64, levels: usize, out: &mut Outputs) -> Result<()> {
    if levels < 2 {
        bail!("--levels must be at least 2");
    }
    let model = cfg.build_model()?;
    let cam = cfg.camera(&model);
    let samples = read_confidence_samples(samples_path)?;
    let base = samples_path.parent().unwrap_or(Path::new("."));
    let mut conf = Vec::with_capacity(samples.len());
    let mut errors = Vec::with_capacity(samples.len());
    let mut csv = String::from("index,mask,confidence,error_deg\n");
    for (i, s) in samples.iter().enumerate() {
        let mask_path = base.join(&s.mask);
        if !mask_path.exists() {
            bail!("mask file {} not found", mask_path.display());
        }
        let mask = SilhouetteMask::read_pgm(&mask_path)?;
        let c = pose_confidence(&model, &s.estimate, &mask, &cam).with_context(|| format!("sample {i} ({})", s.mask))?;
        let err = s.gt.map(|g| GtSet::from_symmetry(&g, model.symmetry()).distance(&s.estimate).to_degrees());
        csv.push_str(&format!("{i},{},{c},{}\n", s.mask, err.map_or_else(|| "undefined".to_string(), |e| e.to_string())));
        conf.push(c);
        errors.push(err);
    }
    out.write("confidence.csv", csv)?;
    if errors.iter().all(Option::is_some) {
        let errors: Vec<f64> = errors.into_iter().flatten().collect();
        let thresholds: Vec<f64> = (0..levels).map(|k| k as f64 / (levels - 1) as f64).collect();
        let curve = threshold_accuracy_curve(&conf, &errors, theta, &thresholds)?;
        out.write("curve.csv", curve_to_csv(&curve))?;
    } else {
        eprintln!("note: some samples lack a ground-truth pose; curve.csv not written");
    }
    println!("{} samples, mean confidence {:.4}", conf.len(), conf.iter().sum::<f64>() / conf.len() as f64);
    Ok(())
}
