//! Batch command line. One subcommand per pipeline stage; every stage reads
//! and writes volume files so intermediates can be inspected.
//!
//! Exit codes: 0 success, 1 processing error (including missing files),
//! 2 usage error (bad flags, malformed config, out-of-range parameters).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::grid::{extract_patch, LabelGrid, Mask, ScalarGrid};
use crate::io::{read_volume, save, Datatype};
use crate::loss::{loss_report, LossConfig};
use crate::maskgen::{bowel_wall, build_ooi, OrganConfig};
use crate::metrics::{cohort_report_jsonl, seg_metrics, CaseMetrics, DEFAULT_HD_PENALTY_MM, DEFAULT_NSD_TOL_MM};
use crate::morphology::StructElem;
use crate::phantom::{gen_phantom, PhantomSpec};
use crate::sampling::{
    combine_psm, draw_centers, gain_map, psm_from_gain, PatchSpec, SamplingMap, DEFAULT_LAMBDA, DEFAULT_MU,
};
use crate::ssl::{mask_bowel_wall, NoiseSpec};

/// Every tunable of the pipeline. Loaded with `--config`; flags win.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub organ: OrganConfig,
    pub patch: PatchSpec,
    pub lambda: f64,
    pub mu: f64,
    pub noise: NoiseSpec,
    pub loss: LossConfig,
    pub nsd_tol_mm: f64,
    pub hd_penalty_mm: f64,
    pub seed: Option<u64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            organ: OrganConfig::default(),
            patch: PatchSpec::default(),
            lambda: DEFAULT_LAMBDA,
            mu: DEFAULT_MU,
            noise: NoiseSpec::default(),
            loss: LossConfig::default(),
            nsd_tol_mm: DEFAULT_NSD_TOL_MM,
            hd_penalty_mm: DEFAULT_HD_PENALTY_MM,
            seed: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> crate::Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> crate::Result<()> {
        self.organ.validate()?;
        self.patch.validate()?;
        self.noise.validate()?;
        self.loss.validate()?;
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(Error::invalid(format!("mu must be positive, got {}", self.mu)));
        }
        if !(self.nsd_tol_mm.is_finite() && self.nsd_tol_mm >= 0.0) {
            return Err(Error::invalid(format!(
                "nsd_tol_mm must be >= 0, got {}",
                self.nsd_tol_mm
            )));
        }
        if !(self.hd_penalty_mm.is_finite() && self.hd_penalty_mm >= 0.0) {
            return Err(Error::invalid(format!(
                "hd_penalty_mm must be >= 0, got {}",
                self.hd_penalty_mm
            )));
        }
        Ok(())
    }
}

#[derive(Parser, Debug)]
#[command(name = "anatomy-guide", version, about = "Anatomy-guided volume pipeline stages")]
struct Cli {
    /// Pipeline config JSON (see configs/README.md).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the effective config as JSON and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Organ-of-interest mask from two label volumes.
    Ooi(OoiArgs),
    /// Bowel-wall band from an undilated OOI mask.
    Wall(WallArgs),
    /// Combined patch sampling map from OOI and tumour masks.
    Psm(PsmArgs),
    /// Draw patch centres from a sampling map.
    Sample(SampleArgs),
    /// Replace bowel-wall voxels of an image with Gaussian noise.
    SslMask(SslArgs),
    /// Dice, cross-entropy and OOI-focalized losses as JSON.
    Loss(LossArgs),
    /// Segmentation metrics for one case or a cohort.
    Metrics(MetricsArgs),
    /// Write a synthetic phantom (ct, labels, tumor).
    Phantom(PhantomArgs),
}

#[derive(Args, Debug)]
struct OoiArgs {
    #[arg(long)]
    ts: Option<PathBuf>,
    #[arg(long)]
    word: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dilation steps; 0 gives the undilated union used by `wall`.
    #[arg(long)]
    dilate_times: Option<usize>,
    #[arg(long)]
    elem: Option<StructElem>,
}

#[derive(Args, Debug)]
struct WallArgs {
    #[arg(long)]
    ooi: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    r_out: Option<usize>,
    #[arg(long)]
    r_in: Option<usize>,
    #[arg(long)]
    elem: Option<StructElem>,
}

#[derive(Args, Debug)]
struct PatchArgs {
    /// Patch size dz,dy,dx in voxels.
    #[arg(long, value_parser = parse_patch)]
    patch: Option<[usize; 3]>,
    /// Treat 0.1*d as a standard deviation instead of a variance.
    #[arg(long)]
    sigma_is_stddev: bool,
}

fn parse_patch(s: &str) -> std::result::Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    let [z, y, x] = parts.as_slice() else {
        return Err(format!("expected dz,dy,dx, got {s:?}"));
    };
    let num = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok([num(z)?, num(y)?, num(x)?])
}

#[derive(Args, Debug)]
struct PsmArgs {
    #[arg(long)]
    ooi: Option<PathBuf>,
    #[arg(long)]
    tumor: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[command(flatten)]
    patch: PatchArgs,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long)]
    psm: Option<PathBuf>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Centres JSON (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Image to cut patches from; requires --patch-dir.
    #[arg(long, requires = "patch_dir")]
    image: Option<PathBuf>,
    #[arg(long, requires = "image")]
    patch_dir: Option<PathBuf>,
    #[command(flatten)]
    patch: PatchArgs,
}

#[derive(Args, Debug)]
struct SslArgs {
    #[arg(long)]
    ct: Option<PathBuf>,
    #[arg(long)]
    wall: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    mean: Option<f64>,
    #[arg(long)]
    stddev: Option<f64>,
}

#[derive(Args, Debug)]
struct LossArgs {
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long)]
    pred: Option<PathBuf>,
    #[arg(long)]
    ooi: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    #[arg(long, conflicts_with = "cases")]
    gt: Option<PathBuf>,
    #[arg(long, conflicts_with = "cases")]
    pred: Option<PathBuf>,
    /// JSON list of {"case_id", "gt", "pred"}; paths relative to the list.
    #[arg(long)]
    cases: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    nsd_tol_mm: Option<f64>,
    #[arg(long)]
    hd_penalty_mm: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PhantomArgs {
    /// Phantom spec JSON; defaults are used for missing keys.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseEntry {
    case_id: String,
    gt: PathBuf,
    pred: PathBuf,
}

enum Failure {
    Usage(String),
    Processing(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Processing(e)
    }
}

type Outcome = std::result::Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn need<'a, T>(v: &'a Option<T>, flag: &str) -> std::result::Result<&'a T, Failure> {
    v.as_ref().ok_or_else(|| usage(format!("missing required flag {flag}")))
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Processing(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load_config(path: Option<&Path>) -> std::result::Result<PipelineConfig, Failure> {
    let Some(path) = path else {
        return Ok(PipelineConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    PipelineConfig::from_json(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
}

fn dispatch(cli: Cli) -> Outcome {
    let mut cfg = load_config(cli.config.as_deref())?;
    apply_overrides(&mut cfg, &cli.command)?;
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    if cli.print_config {
        let text = serde_json::to_string_pretty(&cfg).map_err(Error::from)?;
        println!("{text}");
        return Ok(());
    }
    match &cli.command {
        Command::Ooi(a) => cmd_ooi(a, &cfg),
        Command::Wall(a) => cmd_wall(a, &cfg),
        Command::Psm(a) => cmd_psm(a, &cfg),
        Command::Sample(a) => cmd_sample(a, &cfg),
        Command::SslMask(a) => cmd_ssl(a, &cfg),
        Command::Loss(a) => cmd_loss(a, &cfg),
        Command::Metrics(a) => cmd_metrics(a, &cfg),
        Command::Phantom(a) => cmd_phantom(a, &cfg),
    }
}

fn apply_patch(cfg: &mut PipelineConfig, p: &PatchArgs) {
    if let Some(size) = p.patch {
        cfg.patch.size = size;
    }
    if p.sigma_is_stddev {
        cfg.patch.sigma_is_stddev = true;
    }
}

fn apply_overrides(cfg: &mut PipelineConfig, cmd: &Command) -> Outcome {
    match cmd {
        Command::Ooi(a) => {
            if let Some(t) = a.dilate_times {
                cfg.organ.dilate_times = t;
            }
            if let Some(e) = a.elem {
                cfg.organ.elem = e;
            }
        }
        Command::Wall(a) => {
            if let Some(r) = a.r_out {
                cfg.organ.wall_r_out = r;
            }
            if let Some(r) = a.r_in {
                cfg.organ.wall_r_in = r;
            }
            if let Some(e) = a.elem {
                cfg.organ.elem = e;
            }
        }
        Command::Psm(a) => {
            if let Some(l) = a.lambda {
                cfg.lambda = l;
            }
            if let Some(m) = a.mu {
                cfg.mu = m;
            }
            apply_patch(cfg, &a.patch);
        }
        Command::Sample(a) => {
            if a.count == Some(0) {
                return Err(usage("--count must be at least 1"));
            }
            if a.seed.is_some() {
                cfg.seed = a.seed;
            }
            apply_patch(cfg, &a.patch);
        }
        Command::SslMask(a) => {
            if a.seed.is_some() {
                cfg.seed = a.seed;
            }
            if let Some(m) = a.mean {
                cfg.noise.mean = m;
            }
            if let Some(s) = a.stddev {
                cfg.noise.stddev = s;
            }
        }
        Command::Loss(_) => {}
        Command::Metrics(a) => {
            if let Some(t) = a.nsd_tol_mm {
                cfg.nsd_tol_mm = t;
            }
            if let Some(p) = a.hd_penalty_mm {
                cfg.hd_penalty_mm = p;
            }
            if a.jobs == 0 {
                return Err(usage("--jobs must be at least 1"));
            }
        }
        Command::Phantom(a) => {
            if a.seed.is_some() {
                cfg.seed = a.seed;
            }
        }
    }
    Ok(())
}

fn require_seed(cfg: &PipelineConfig) -> std::result::Result<u64, Failure> {
    cfg.seed
        .ok_or_else(|| usage("this subcommand needs --seed (or \"seed\" in --config)"))
}

fn read_scalar(path: &Path) -> std::result::Result<ScalarGrid, Failure> {
    Ok(read_volume(path)?.0)
}

fn read_mask(path: &Path) -> std::result::Result<Mask, Failure> {
    Ok(read_scalar(path)?.to_mask())
}

fn read_labels(path: &Path) -> std::result::Result<LabelGrid, Failure> {
    read_scalar(path)?
        .to_labels()
        .map_err(|e| Failure::Processing(Error::Format(format!("{}: {e}", path.display()))))
}

fn emit(text: &str, out: Option<&Path>) -> Outcome {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::io(path, e).into()),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Error::io("<stdout>", e).into())
        }
    }
}

/// Rounds to float32 so the grid can be written as a float32 volume.
fn as_f32(grid: &ScalarGrid) -> std::result::Result<ScalarGrid, Failure> {
    Ok(grid.map(|v| f64::from(v as f32))?)
}

fn cmd_ooi(a: &OoiArgs, cfg: &PipelineConfig) -> Outcome {
    let (ts, word, out) = (need(&a.ts, "--ts")?, need(&a.word, "--word")?, need(&a.out, "--out")?);
    let ooi = build_ooi(&read_labels(ts)?, &read_labels(word)?, &cfg.organ)?;
    Ok(save(&ooi, Datatype::Uint8, out)?)
}

fn cmd_wall(a: &WallArgs, cfg: &PipelineConfig) -> Outcome {
    let (ooi, out) = (need(&a.ooi, "--ooi")?, need(&a.out, "--out")?);
    let wall = bowel_wall(
        &read_mask(ooi)?,
        cfg.organ.elem,
        cfg.organ.wall_r_out,
        cfg.organ.wall_r_in,
    );
    Ok(save(&wall, Datatype::Uint8, out)?)
}

fn cmd_psm(a: &PsmArgs, cfg: &PipelineConfig) -> Outcome {
    let (ooi, tumor, out) = (
        need(&a.ooi, "--ooi")?,
        need(&a.tumor, "--tumor")?,
        need(&a.out, "--out")?,
    );
    let (ooi, tumor) = (read_mask(ooi)?, read_mask(tumor)?);
    let s_organ = psm_from_gain(&gain_map(&ooi, &cfg.patch)?, cfg.mu)?;
    let s_tumor = psm_from_gain(&gain_map(&tumor, &cfg.patch)?, cfg.mu)?;
    let combined = combine_psm(&s_organ, &s_tumor, cfg.lambda)?;
    Ok(save(&as_f32(combined.grid())?, Datatype::Float32, out)?)
}

fn cmd_sample(a: &SampleArgs, cfg: &PipelineConfig) -> Outcome {
    let psm = need(&a.psm, "--psm")?;
    let count = *need(&a.count, "--count")?;
    let seed = require_seed(cfg)?;
    let map = SamplingMap::normalized(read_scalar(psm)?)?;
    let centers = draw_centers(&map, count, seed)?;
    if let (Some(image), Some(dir)) = (&a.image, &a.patch_dir) {
        let image = read_scalar(image)?;
        if image.dims() != map.grid().dims() {
            return Err(Error::invalid("--image and --psm differ in dimensions").into());
        }
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (k, c) in centers.iter().enumerate() {
            let patch = extract_patch(&image, *c, cfg.patch.size, 0.0)?;
            save(&patch, Datatype::Float32, dir.join(format!("patch_{k:04}.nii")))?;
        }
    }
    let mut text = serde_json::to_string(&centers).map_err(Error::from)?;
    text.push('\n');
    emit(&text, a.out.as_deref())
}

fn cmd_ssl(a: &SslArgs, cfg: &PipelineConfig) -> Outcome {
    let (ct, wall, out) = (need(&a.ct, "--ct")?, need(&a.wall, "--wall")?, need(&a.out, "--out")?);
    let noise = NoiseSpec {
        seed: require_seed(cfg)?,
        ..cfg.noise
    };
    let masked = mask_bowel_wall(&read_scalar(ct)?, &read_mask(wall)?, &noise)?;
    Ok(save(&as_f32(&masked)?, Datatype::Float32, out)?)
}

fn cmd_loss(a: &LossArgs, cfg: &PipelineConfig) -> Outcome {
    let (gt, pred, ooi) = (need(&a.gt, "--gt")?, need(&a.pred, "--pred")?, need(&a.ooi, "--ooi")?);
    let report = loss_report(&read_mask(gt)?, &read_scalar(pred)?, &read_mask(ooi)?, &cfg.loss)?;
    let mut text = serde_json::to_string(&report).map_err(Error::from)?;
    text.push('\n');
    emit(&text, a.out.as_deref())
}

fn case_metrics(id: &str, gt: &Path, pred: &Path, cfg: &PipelineConfig) -> crate::Result<CaseMetrics> {
    let gt = read_volume(gt)?.0.to_mask();
    let pred = read_volume(pred)?.0.to_mask();
    let report = seg_metrics(&gt, &pred, cfg.nsd_tol_mm, cfg.hd_penalty_mm)?;
    Ok(CaseMetrics {
        case_id: id.to_string(),
        report,
    })
}

fn cmd_metrics(a: &MetricsArgs, cfg: &PipelineConfig) -> Outcome {
    let Some(list) = &a.cases else {
        let (gt, pred) = (need(&a.gt, "--gt")?, need(&a.pred, "--pred")?);
        let case = case_metrics("", gt, pred, cfg)?;
        let mut text = serde_json::to_string(&case.report).map_err(Error::from)?;
        text.push('\n');
        return emit(&text, a.out.as_deref());
    };
    let text = fs::read_to_string(list).map_err(|e| Error::io(list, e))?;
    let entries: Vec<CaseEntry> = serde_json::from_str(&text)
        .map_err(|e| Failure::Processing(Error::Format(format!("{}: {e}", list.display()))))?;
    let base = list.parent().unwrap_or(Path::new("."));
    let jobs = a.jobs.min(entries.len()).max(1);
    let chunk = entries.len().div_ceil(jobs).max(1);
    let results: Vec<crate::Result<CaseMetrics>> = std::thread::scope(|s| {
        let handles: Vec<_> = entries
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|c| case_metrics(&c.case_id, &base.join(&c.gt), &base.join(&c.pred), cfg))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("metrics worker panicked"))
            .collect()
    });
    let cases = results.into_iter().collect::<crate::Result<Vec<_>>>()?;
    emit(&cohort_report_jsonl(&cases)?, a.out.as_deref())
}

fn cmd_phantom(a: &PhantomArgs, cfg: &PipelineConfig) -> Outcome {
    let dir = need(&a.out_dir, "--out-dir")?;
    let seed = require_seed(cfg)?;
    let mut spec = match &a.spec {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            PhantomSpec::from_json(&text).map_err(|e| usage(format!("spec {}: {e}", path.display())))?
        }
        None => PhantomSpec::default(),
    };
    spec.seed = seed;
    let p = gen_phantom(&spec)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save(&p.ct, Datatype::Float32, dir.join("ct.nii"))?;
    save(&p.labels, Datatype::Int16, dir.join("labels.nii"))?;
    save(&p.tumor, Datatype::Uint8, dir.join("tumor.nii"))?;
    Ok(())
}
