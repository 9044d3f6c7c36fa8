//! Experiment orchestration behind the `fracflow` binary.

pub mod config;
pub mod report;

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fracflow::deform::{self, Deformation};
use fracflow::flow::{self, FlowConfig, Snapshot};
use fracflow::grid::{centered_origin, GridSet};
use fracflow::kernel::{face_curvature, KernelModel, KernelParams};
use fracflow::special::ball_perimeter;
use rand_xoshiro::rand_core::SeedableRng;
use rand_xoshiro::SplitMix64;
use thiserror::Error;

pub use config::{parse_config, parse_config_for, GridSpec, Mode, RunConfig, Shape};
pub use report::Report;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("assert failed: {0}")]
    Assert(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Assert(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn setup(e: fracflow::Error) -> CliError {
    CliError::Config(e.to_string())
}

fn numerical(e: fracflow::Error) -> CliError {
    match e {
        fracflow::Error::Assert(m) => CliError::Assert(m),
        fracflow::Error::Io(e) => CliError::Io(e.to_string()),
        other => CliError::Numerical(other.to_string()),
    }
}

/// Result of [`execute`]: the report and the files written.
#[derive(Debug)]
pub struct Outcome {
    pub report: Report,
    pub files: Vec<PathBuf>,
    /// `None` when every runtime assert passed.
    pub failure: Option<CliError>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        self.failure.as_ref().map_or(0, CliError::exit_code)
    }
}

struct Ctx {
    out: PathBuf,
    report: Report,
    files: Vec<PathBuf>,
}

impl Ctx {
    fn write(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let p = self.out.join(name);
        fs::write(&p, text)?;
        self.files.push(p);
        Ok(())
    }

    fn time(&mut self, phase: &str, t: Instant) {
        self.report
            .set(format!("timing.{phase}_s"), format!("{:.3}", t.elapsed().as_secs_f64()));
    }
}

/// Runs the configured experiment, writing every output under `out`. The
/// report is always written; a failed assert or step is recorded in it and
/// returned in [`Outcome::failure`].
pub fn execute(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    fs::create_dir_all(out)?;
    let mut ctx = Ctx {
        out: out.to_path_buf(),
        report: Report::new(),
        files: Vec::new(),
    };
    ctx.report.set("run.mode", cfg.mode);
    for (k, v) in &cfg.entries {
        ctx.report.set(format!("config.{k}"), v);
    }
    ctx.report.set("config.seed", cfg.seed);
    ctx.report.set("versions.fracflow", fracflow_version());
    ctx.report.set("versions.fracflow_cli", env!("CARGO_PKG_VERSION"));
    let t = Instant::now();
    let result = match cfg.mode {
        Mode::Flow => run_flow(cfg, &mut ctx),
        Mode::Perim => run_perim(cfg, &mut ctx),
        Mode::Curvature => run_curvature(cfg, &mut ctx),
        Mode::Alexandrov => run_alexandrov(cfg, &mut ctx),
        Mode::Limits => run_limits(cfg, &mut ctx),
        Mode::Holder => run_holder(cfg, &mut ctx),
    };
    ctx.time("total", t);
    let failure = match result {
        Ok(()) => None,
        Err(CliError::Io(m)) => return Err(CliError::Io(m)),
        Err(e) => Some(e),
    };
    ctx.report.set(
        "status.result",
        match &failure {
            None => "ok".to_string(),
            Some(e) => e.to_string(),
        },
    );
    ctx.report.set("status.exit_code", failure.as_ref().map_or(0, CliError::exit_code));
    let report_path = out.join("report.txt");
    ctx.report.write(&report_path)?;
    ctx.files.push(report_path);
    Ok(Outcome {
        report: ctx.report,
        files: ctx.files,
        failure,
    })
}

fn fracflow_version() -> &'static str {
    "0.1.0"
}

fn load_deformation(cfg: &RunConfig) -> Result<Option<Deformation>, CliError> {
    let Some(path) = &cfg.deformation else {
        return Ok(None);
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("deformation file {}: {e}", path.display())))?;
    let f = Deformation::parse(&text, cfg.delta).map_err(setup)?;
    Ok(Some(f.project_constraints().map_err(setup)?))
}

fn initial_set(cfg: &RunConfig) -> Result<GridSet, CliError> {
    let shape = cfg.shape.as_ref().ok_or_else(|| CliError::Config("missing shape".into()))?;
    if let Shape::Mask(path) = shape {
        let g = GridSet::read_pbm(path).map_err(setup)?;
        if let Some(spec) = cfg.grid {
            if (spec.nx, spec.ny, spec.a) != (g.nx(), g.ny(), g.a()) {
                return Err(CliError::Config(format!(
                    "mask {} is {}x{} with a = {}, config grid differs",
                    path.display(),
                    g.nx(),
                    g.ny(),
                    g.a()
                )));
            }
        }
        return Ok(g);
    }
    let GridSpec { nx, ny, a } = cfg.grid.ok_or_else(|| CliError::Config("missing grid".into()))?;
    let g = match shape {
        Shape::Ball { r } => GridSet::disk(nx, ny, a, [0.0, 0.0], *r),
        Shape::Ellipse { rx, ry } => GridSet::ellipse(nx, ny, a, [0.0, 0.0], *rx, *ry),
        Shape::TwoBalls { r, d } => {
            let (r, h) = (*r, 0.5 * d);
            GridSet::from_fn(nx, ny, a, centered_origin(nx, ny, a), |x, y| {
                (x - h).hypot(y) <= r || (x + h).hypot(y) <= r
            })
        }
        Shape::Deformation => {
            let f = load_deformation(cfg)?.expect("checked by config");
            f.rasterize(nx, ny, a)
        }
        Shape::Mask(_) => unreachable!(),
    }
    .map_err(setup)?;
    if g.count() == 0 {
        return Err(CliError::Config("initial shape covers no cell".into()));
    }
    Ok(g)
}

fn kernel_params(cfg: &RunConfig, s: f64, g: &GridSet) -> KernelParams {
    let mut p = KernelParams::for_window(s, g.a(), g.nx(), g.ny());
    let k = &cfg.kernel;
    if let Some(v) = k.nearfield_radius {
        p.nearfield_radius = v;
    }
    if let Some(v) = k.subdivision_depth {
        p.subdivision_depth = v;
    }
    if let Some(v) = k.r_cut {
        p.r_cut = v;
    }
    p.tail_tolerance = k.tail_tolerance;
    p.far_field = k.far_field;
    p
}

fn build_kernel(cfg: &RunConfig, ctx: &mut Ctx, s: f64, g: &GridSet) -> Result<KernelModel, CliError> {
    let t = Instant::now();
    let k = KernelModel::new(kernel_params(cfg, s, g)).map_err(setup)?;
    if cfg.dump_weights {
        let p = ctx.out.join("weights.bin");
        k.table().write(&p).map_err(numerical)?;
        ctx.files.push(p.clone());
        ctx.files.push(fracflow::grid::sidecar_path(&p));
    }
    ctx.time("kernel", t);
    Ok(k)
}

/// Name of the snapshot file for `step`.
pub fn snapshot_name(step: usize) -> String {
    format!("step_{step:06}.pbm")
}

fn run_flow(cfg: &RunConfig, ctx: &mut Ctx) -> Result<(), CliError> {
    let s = cfg.s.expect("checked by config");
    let e0 = initial_set(cfg)?;
    let m = cfg.m.unwrap_or_else(|| e0.volume());
    let params = kernel_params(cfg, s, &e0);
    if cfg.dump_weights {
        build_kernel(cfg, ctx, s, &e0)?;
    }
    let fc = FlowConfig {
        h: cfg.h.expect("checked by config"),
        m,
        n_steps: cfg.n_steps.expect("checked by config"),
        gamma: cfg.gamma,
        snapshot_stride: cfg.snapshot_stride,
        tol_ball: cfg.tol_ball,
        stop_on_ball: cfg.stop_on_ball,
        rel_tol: 1e-10,
    };
    ctx.report.set("flow.m", m);
    ctx.report.set("flow.initial_volume_defect", e0.volume() - m);
    let t = Instant::now();
    let (trace, error) = match flow::run(&e0, &params, &fc) {
        Ok(tr) => (tr, None),
        Err(fail) => {
            let fail = *fail;
            (fail.trace, Some(fail.error))
        }
    };
    ctx.time("flow", t);

    let t = Instant::now();
    ctx.write("trace.csv", &trace.csv())?;
    let snap_dir = ctx.out.join("snapshots");
    fs::create_dir_all(&snap_dir)?;
    for sn in &trace.snapshots {
        let p = snap_dir.join(snapshot_name(sn.step));
        sn.set.write_pbm(&p).map_err(numerical)?;
        ctx.files.push(p);
    }
    ctx.time("write", t);

    let r = &mut ctx.report;
    r.set("flow.kappa", trace.kappa);
    r.set("flow.steps_run", trace.rows.len().saturating_sub(1));
    r.set("flow.stop_reason", &trace.stop_reason);
    r.set("flow.window_enlargements", trace.enlargements);
    r.set(
        "flow.fixed_point_step",
        trace.fixed_point.map_or("none".to_string(), |n| n.to_string()),
    );
    r.set("flow.snapshots", trace.snapshots.len());
    if let Some(last) = trace.rows.last() {
        r.set("flow.final.perimeter", last.perimeter);
        r.set("flow.final.volume", last.volume);
        r.set("flow.final.asphericity", last.asphericity);
        r.set("flow.final.components", last.components);
        if let Ok(k) = flow::limit_component_count(last.perimeter, m, s, 2) {
            r.set("flow.final.limit_component_count", k);
        }
    }
    r.set(
        "flow.lock_step",
        trace.lock_step().map_or("none".to_string(), |n| n.to_string()),
    );
    let t = Instant::now();
    if trace.snapshots.len() >= 3 {
        match flow::check_holder(&trace.snapshots, s) {
            Ok(c) => ctx.report.set("flow.holder_constant", c),
            Err(e) => ctx.report.set("flow.holder_constant", format!("unavailable: {e}")),
        }
    }
    match flow::exp_decay_fit(&trace, e0.a()) {
        Ok(fit) => {
            let r = &mut ctx.report;
            r.set("flow.decay.start", fit.start);
            r.set("flow.decay.end", fit.end);
            r.set("flow.decay.dissipation_slope", fit.dissipation.slope);
            r.set("flow.decay.dissipation_r2", fit.dissipation.r2);
            r.set("flow.decay.dissipation_at_floor", fit.dissipation.at_floor);
            r.set("flow.decay.asphericity_slope", fit.asphericity.slope);
            r.set("flow.decay.asphericity_r2", fit.asphericity.r2);
        }
        Err(e) => ctx.report.set("flow.decay", format!("unavailable: {e}")),
    }
    ctx.time("diagnostics", t);
    ctx.report.set("flow.violations", trace.violations.len());
    for (i, v) in trace.violations.iter().enumerate() {
        ctx.report.set(format!("flow.violation.{i}"), v);
    }
    if let Some(e) = error {
        return Err(numerical(e));
    }
    if let Some(v) = trace.violations.first() {
        return Err(CliError::Assert(v.clone()));
    }
    Ok(())
}

fn run_perim(cfg: &RunConfig, ctx: &mut Ctx) -> Result<(), CliError> {
    let s = cfg.s.expect("checked by config");
    let g = initial_set(cfg)?;
    let k = build_kernel(cfg, ctx, s, &g)?;
    let t = Instant::now();
    let parts = k.perimeter_parts(&g).map_err(numerical)?;
    ctx.time("perimeter", t);
    let r = &mut ctx.report;
    r.set("perimeter.value", parts.total());
    r.set("perimeter.interaction", parts.interaction);
    r.set("perimeter.outside", parts.outside);
    r.set("perimeter.tail_bound", k.tail_bound(k.r_cut()));
    r.set("perimeter.volume", g.volume());
    let continuum = match &cfg.shape {
        Some(Shape::Ball { r }) => Some(r.powf(2.0 - s) * ball_perimeter(s).map_err(numerical)?),
        Some(Shape::Deformation) => {
            let f = load_deformation(cfg)?.expect("checked by config");
            Some(deform::perimeter_representation(&f, s).map_err(numerical)?)
        }
        _ => None,
    };
    if let Some(c) = continuum {
        r.set("perimeter.continuum", c);
        r.set("perimeter.relative_difference", parts.total() / c - 1.0);
    }
    Ok(())
}

fn run_curvature(cfg: &RunConfig, ctx: &mut Ctx) -> Result<(), CliError> {
    let s = cfg.s.expect("checked by config");
    let g = initial_set(cfg)?;
    let k = build_kernel(cfg, ctx, s, &g)?;
    let t = Instant::now();
    let sigma = k.cell_curvature(&g).map_err(numerical)?;
    let mut csv = String::from("i,j,x,y,curvature\n");
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            if g.get(i, j) && g.is_boundary_cell(i, j) {
                let v = face_curvature(&g, &sigma, (i, j)).map_err(numerical)?;
                let c = g.center(i, j);
                csv.push_str(&format!("{i},{j},{},{},{v}\n", c[0], c[1]));
            }
        }
    }
    let mean = k.boundary_mean_curvature(&g).map_err(numerical)?;
    ctx.time("curvature", t);
    ctx.write("curvature.csv", &csv)?;
    ctx.report.set("curvature.boundary_mean", mean);
    if let Some(Shape::Ball { r }) = &cfg.shape {
        let c = (2.0 - s) * ball_perimeter(s).map_err(numerical)? / (2.0 * PI) * r.powf(-s);
        ctx.report.set("curvature.continuum", c);
        ctx.report.set("curvature.relative_difference", mean / c - 1.0);
    }
    Ok(())
}

fn deformations(cfg: &RunConfig) -> Result<Vec<Deformation>, CliError> {
    let mut out = Vec::new();
    if let Some(f) = load_deformation(cfg)? {
        out.push(f);
    }
    let mut rng = SplitMix64::seed_from_u64(cfg.seed);
    for _ in 0..cfg.samples {
        out.push(Deformation::random(&mut rng, cfg.k_max, cfg.delta).map_err(numerical)?);
    }
    Ok(out)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn run_alexandrov(cfg: &RunConfig, ctx: &mut Ctx) -> Result<(), CliError> {
    let fs_ = deformations(cfg)?;
    let t = Instant::now();
    let mut csv = String::from(
        "sample,s,seminorm_sq,l2_sq,hs_norm_sq,mean_curvature,curvature_dev_sq,ratio,scaled_ratio\n",
    );
    for s in cfg.s_values() {
        let mut ratios = Vec::with_capacity(fs_.len());
        for (i, f) in fs_.iter().enumerate() {
            let a = deform::alexandrov_ratio(f, s).map_err(numerical)?;
            csv.push_str(&format!(
                "{i},{s},{},{},{},{},{},{},{}\n",
                a.seminorm_sq,
                a.l2_sq,
                a.hs_norm_sq,
                a.mean_curvature,
                a.curvature_dev_sq,
                a.ratio,
                a.scaled_ratio
            ));
            if fs_.len() == 1 {
                ctx.report.set(format!("alexandrov.s{s}.ratio"), a.ratio);
                ctx.report.set(format!("alexandrov.s{s}.scaled_ratio"), a.scaled_ratio);
            }
            ratios.push(a.ratio);
        }
        if ratios.len() > 1 {
            let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
            let med = median(&mut ratios);
            ctx.report.set(format!("alexandrov.s{s}.max_ratio"), max);
            ctx.report.set(format!("alexandrov.s{s}.median_ratio"), med);
        }
    }
    ctx.time("alexandrov", t);
    ctx.write("alexandrov.csv", &csv)?;
    ctx.report.set("alexandrov.samples", fs_.len());
    Ok(())
}

fn run_limits(cfg: &RunConfig, ctx: &mut Ctx) -> Result<(), CliError> {
    let f = load_deformation(cfg)?.unwrap_or_else(Deformation::zero);
    let t = Instant::now();
    let rows = deform::classical_limits(&f, &cfg.s_list).map_err(numerical)?;
    ctx.time("limits", t);
    let mut csv = String::from(
        "s,perimeter,perimeter_target,perimeter_error,curvature_error,seminorm,seminorm_target,seminorm_error,lambda1,lambda1_error\n",
    );
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.s,
            r.perimeter,
            r.perimeter_target,
            r.perimeter_error,
            r.curvature_error,
            r.seminorm,
            r.seminorm_target,
            r.seminorm_error,
            r.lambda1,
            r.lambda1_error
        ));
    }
    ctx.write("limits.csv", &csv)?;
    let decreasing = |get: fn(&deform::LimitRow) -> f64| rows.windows(2).all(|w| get(&w[1]) < get(&w[0]));
    ctx.report.set("limits.perimeter_error_decreasing", decreasing(|r| r.perimeter_error));
    ctx.report.set("limits.curvature_error_decreasing", decreasing(|r| r.curvature_error));
    ctx.report.set("limits.lambda1_error_decreasing", decreasing(|r| r.lambda1_error));
    Ok(())
}

/// Snapshots `step_NNNNNN.pbm` in `dir`, ordered by step, with `t = step·h`.
pub fn read_snapshots(dir: &Path, h: f64) -> Result<Vec<Snapshot>, CliError> {
    let mut out = Vec::new();
    let entries = fs::read_dir(dir)
        .map_err(|e| CliError::Config(format!("snapshot directory {}: {e}", dir.display())))?;
    for entry in entries {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        let Some(step) = name
            .strip_prefix("step_")
            .and_then(|n| n.strip_suffix(".pbm"))
            .and_then(|n| n.parse::<usize>().ok())
        else {
            continue;
        };
        let set = GridSet::read_pbm(&path).map_err(setup)?;
        out.push(Snapshot {
            step,
            t: step as f64 * h,
            set,
        });
    }
    out.sort_by_key(|s| s.step);
    Ok(out)
}

fn run_holder(cfg: &RunConfig, ctx: &mut Ctx) -> Result<(), CliError> {
    let s = cfg.s.expect("checked by config");
    let dir = cfg.snapshots.as_ref().expect("checked by config");
    let snaps = read_snapshots(dir, cfg.h.expect("checked by config"))?;
    ctx.report.set("holder.snapshots", snaps.len());
    let c = flow::check_holder(&snaps, s).map_err(setup)?;
    println!("C_emp = {c}");
    ctx.report.set("holder.c_emp", c);
    Ok(())
}
