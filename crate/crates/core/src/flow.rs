//! The discrete flow `E_n` obtained by iterating steps, its per-step
//! diagnostics, and the post-run fits.

use std::collections::HashSet;
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::grid::{asphericity, connected_components, GridSet};
use crate::kernel::{KernelModel, KernelParams};
use crate::special::ball_perimeter;
use crate::step::{StepCase, StepProblem, DEFAULT_GAMMA};

#[derive(Clone, Debug)]
pub struct FlowConfig {
    pub h: f64,
    pub m: f64,
    pub n_steps: usize,
    pub gamma: f64,
    /// `0` picks `max(1, n_steps / 50)`.
    pub snapshot_stride: usize,
    pub tol_ball: f64,
    /// Stop after 10 consecutive steps with volume `m` and asphericity below `tol_ball`.
    pub stop_on_ball: bool,
    /// Relative slack for the per-step energy inequalities.
    pub rel_tol: f64,
}

impl FlowConfig {
    pub fn new(h: f64, m: f64, n_steps: usize) -> Self {
        Self {
            h,
            m,
            n_steps,
            gamma: DEFAULT_GAMMA,
            snapshot_stride: 0,
            tol_ball: 0.02,
            stop_on_ball: true,
            rel_tol: 1e-10,
        }
    }

    pub fn stride(&self) -> usize {
        if self.snapshot_stride == 0 {
            (self.n_steps / 50).max(1)
        } else {
            self.snapshot_stride
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub t: f64,
    pub perimeter: f64,
    pub volume: f64,
    pub penalty: f64,
    pub dissipation: f64,
    pub asphericity: f64,
    pub components: usize,
    pub el_residual: f64,
    pub barycenter: [f64; 2],
    pub gap: f64,
    pub lambda: f64,
    pub case: Option<StepCase>,
    pub cut_count: usize,
    pub free_cells: usize,
    pub changed_cells: usize,
}

pub const TRACE_HEADER: &str = "step,t,perimeter,volume,penalty,dissipation,asphericity,components,el_residual,bar_x,bar_y,gap,lambda,case,cut_count,free_cells,changed_cells";

fn case_name(c: Option<StepCase>) -> &'static str {
    match c {
        None => "initial",
        Some(StepCase::UpperMultiplier) => "upper",
        Some(StepCase::LowerMultiplier) => "lower",
        Some(StepCase::ExactVolume) => "exact",
        Some(StepCase::Breakpoint) => "breakpoint",
    }
}

fn parse_case(s: &str) -> Result<Option<StepCase>> {
    Ok(match s {
        "initial" => None,
        "upper" => Some(StepCase::UpperMultiplier),
        "lower" => Some(StepCase::LowerMultiplier),
        "exact" => Some(StepCase::ExactVolume),
        "breakpoint" => Some(StepCase::Breakpoint),
        other => return Err(Error::Parse(format!("step case `{other}`"))),
    })
}

impl TraceRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.step,
            self.t,
            self.perimeter,
            self.volume,
            self.penalty,
            self.dissipation,
            self.asphericity,
            self.components,
            self.el_residual,
            self.barycenter[0],
            self.barycenter[1],
            self.gap,
            self.lambda,
            case_name(self.case),
            self.cut_count,
            self.free_cells,
            self.changed_cells
        )
    }

    pub fn from_csv(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 17 {
            return Err(Error::Parse(format!("trace row has {} fields", f.len())));
        }
        let num = |k: usize| -> Result<f64> {
            f[k].parse()
                .map_err(|_| Error::Parse(format!("trace field {k}: `{}`", f[k])))
        };
        let int = |k: usize| -> Result<usize> {
            f[k].parse()
                .map_err(|_| Error::Parse(format!("trace field {k}: `{}`", f[k])))
        };
        Ok(Self {
            step: int(0)?,
            t: num(1)?,
            perimeter: num(2)?,
            volume: num(3)?,
            penalty: num(4)?,
            dissipation: num(5)?,
            asphericity: num(6)?,
            components: int(7)?,
            el_residual: num(8)?,
            barycenter: [num(9)?, num(10)?],
            gap: num(11)?,
            lambda: num(12)?,
            case: parse_case(f[13])?,
            cut_count: int(14)?,
            free_cells: int(15)?,
            changed_cells: int(16)?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub set: GridSet,
}

#[derive(Clone, Debug)]
pub struct FlowTrace {
    pub s: f64,
    pub h: f64,
    pub m: f64,
    pub kappa: f64,
    /// Row 0 describes `E_0`.
    pub rows: Vec<TraceRow>,
    pub snapshots: Vec<Snapshot>,
    pub violations: Vec<String>,
    pub stop_reason: String,
    pub enlargements: usize,
    /// First step that left the set unchanged; later rows repeat it.
    pub fixed_point: Option<usize>,
}

impl FlowTrace {
    pub fn p0(&self) -> f64 {
        self.rows[0].perimeter
    }

    pub fn pen0(&self) -> f64 {
        self.rows[0].penalty
    }

    pub fn steps(&self) -> &[TraceRow] {
        &self.rows[1..]
    }

    pub fn last_set(&self) -> Option<&GridSet> {
        self.snapshots.last().map(|s| &s.set)
    }

    /// First step `n >= 1` with volume exactly `m`.
    pub fn lock_step(&self) -> Option<usize> {
        self.rows
            .iter()
            .find(|r| r.step >= 1 && r.volume == self.m)
            .map(|r| r.step)
    }

    pub fn csv(&self) -> String {
        let mut out = String::from(TRACE_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.to_csv());
            out.push('\n');
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Vec<TraceRow>> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(TRACE_HEADER) {
            return Err(Error::Parse("trace header".into()));
        }
        lines
            .filter(|l| !l.trim().is_empty())
            .map(TraceRow::from_csv)
            .collect()
    }
}

/// A failed run together with everything recorded before the failure.
#[derive(Debug)]
pub struct FlowFailure {
    pub trace: FlowTrace,
    pub error: Error,
}

fn describe(set: &GridSet) -> Result<(f64, usize, [f64; 2])> {
    Ok((
        asphericity(set)?,
        connected_components(set).len(),
        set.barycenter()?,
    ))
}

/// Cells needed between the set and the window edge before a step.
fn needed_clearance(band: f64, a: f64) -> usize {
    (2.0 * band / a).ceil() as usize + 2
}

pub fn run(
    e0: &GridSet,
    kernel: &KernelParams,
    cfg: &FlowConfig,
) -> std::result::Result<FlowTrace, Box<FlowFailure>> {
    let kernel = KernelModel::new(kernel.clone()).map_err(|error| {
        Box::new(FlowFailure {
            trace: empty_trace(cfg, kernel.s),
            error,
        })
    })?;
    let mut trace = empty_trace(cfg, kernel.s());
    match run_inner(e0, &kernel, cfg, &mut trace) {
        Ok(()) => Ok(trace),
        Err(error) => {
            trace.stop_reason = format!("aborted: {error}");
            Err(Box::new(FlowFailure { trace, error }))
        }
    }
}

fn empty_trace(cfg: &FlowConfig, s: f64) -> FlowTrace {
    FlowTrace {
        s,
        h: cfg.h,
        m: cfg.m,
        kappa: cfg.h.powf(-s / (1.0 + s)),
        rows: Vec::new(),
        snapshots: Vec::new(),
        violations: Vec::new(),
        stop_reason: String::new(),
        enlargements: 0,
        fixed_point: None,
    }
}

fn run_inner(
    e0: &GridSet,
    kernel: &KernelModel,
    cfg: &FlowConfig,
    trace: &mut FlowTrace,
) -> Result<()> {
    if cfg.n_steps == 0 {
        return Err(invalid("n_steps must be >= 1"));
    }
    let mut e = e0.clone();
    let probe = StepProblem::new(e.clone(), kernel.clone(), cfg.h, cfg.m, cfg.gamma)?;
    let e_energy = probe.energy(&e)?;
    let (asph, comps, bar) = describe(&e)?;
    trace.rows.push(TraceRow {
        step: 0,
        t: 0.0,
        perimeter: e_energy.perimeter,
        volume: e.volume(),
        penalty: e_energy.penalty,
        dissipation: 0.0,
        asphericity: asph,
        components: comps,
        el_residual: f64::NAN,
        barycenter: bar,
        gap: 0.0,
        lambda: f64::NAN,
        case: None,
        cut_count: 0,
        free_cells: 0,
        changed_cells: 0,
    });
    trace.snapshots.push(Snapshot { step: 0, t: 0.0, set: e.clone() });
    let p0 = e_energy.perimeter;
    let pen0 = e_energy.penalty;
    let stride = cfg.stride();
    let mut locked = false;
    let mut calm = 0usize;
    let (mut sum_d, mut sum_hd) = (0.0, 0.0);
    let mut fixed: Option<TraceRow> = None;

    for n in 1..=cfg.n_steps {
        if let Some(row) = &fixed {
            // a step is a pure function of the previous set
            trace.rows.push(TraceRow { step: n, t: n as f64 * cfg.h, ..row.clone() });
            if n % stride == 0 || n == cfg.n_steps {
                trace.snapshots.push(Snapshot { step: n, t: n as f64 * cfg.h, set: e.clone() });
            }
            if row.volume == cfg.m && row.asphericity < cfg.tol_ball {
                calm += 1;
            }
            if cfg.stop_on_ball && calm >= 10 {
                trace.stop_reason = format!("converged to ball at step {n}");
                if trace.snapshots.last().map(|s| s.step) != Some(n) {
                    trace.snapshots.push(Snapshot { step: n, t: n as f64 * cfg.h, set: e.clone() });
                }
                break;
            }
            continue;
        }
        let enlargements_before = trace.enlargements;
        if e.clearance() < needed_clearance(probe.band_halfwidth, e.a()) {
            e = e.embed_with_margin(0.25);
            trace.enlargements += 1;
        }
        let problem = StepProblem::new(e.clone(), kernel.clone(), cfg.h, cfg.m, cfg.gamma)?;
        let before = problem.energy(&e)?;
        let r = problem.step()?;
        if r.f_next.is_empty() {
            return Err(Error::DegenerateSet("flow set vanished"));
        }
        let after = r.energy;
        let tol = cfg.rel_tol * before.total().abs().max(1.0);
        let prev = trace.rows.last().expect("initial row").clone();

        if after.total() > before.total() + tol {
            trace.violations.push(format!(
                "step {n}: energy {} exceeds previous {}",
                after.total(),
                before.total()
            ));
        }
        if after.perimeter + after.penalty > prev.perimeter + prev.penalty + tol {
            trace.violations.push(format!("step {n}: perimeter + penalty increased"));
        }
        if after.perimeter > p0 + pen0 + tol {
            trace.violations.push(format!("step {n}: perimeter above initial energy"));
        }
        if after.penalty > p0 + pen0 + tol {
            trace.violations.push(format!("step {n}: penalty above initial energy"));
        }
        let vol = r.f_next.volume();
        if locked && vol != cfg.m && r.gap == 0.0 {
            trace.violations.push(format!("step {n}: volume left m after locking (gap 0)"));
        }
        if locked && after.perimeter > prev.perimeter + tol {
            trace.violations.push(format!("step {n}: perimeter increased after volume lock"));
        }
        locked |= vol == cfg.m;

        let (asph, comps, bar) = describe(&r.f_next)?;
        let drift = (bar[0] - prev.barycenter[0]).hypot(bar[1] - prev.barycenter[1]);
        if drift > r.band_halfwidth {
            trace.violations.push(format!("step {n}: barycenter drift {drift} beyond band"));
        }
        sum_d += after.dissipation;
        sum_hd += cfg.h * after.dissipation;
        let changed = e
            .mask()
            .iter()
            .zip(r.f_next.mask())
            .filter(|(x, y)| x != y)
            .count();
        trace.rows.push(TraceRow {
            step: n,
            t: n as f64 * cfg.h,
            perimeter: after.perimeter,
            volume: vol,
            penalty: after.penalty,
            dissipation: after.dissipation,
            asphericity: asph,
            components: comps,
            el_residual: problem.lagrange_residual(&r)?,
            barycenter: bar,
            gap: r.gap,
            lambda: r.lambda_star,
            case: Some(r.case),
            cut_count: r.cut_count,
            free_cells: r.free_cells,
            changed_cells: changed,
        });
        if changed == 0 && trace.enlargements == enlargements_before {
            fixed = trace.rows.last().cloned();
            trace.fixed_point = Some(n);
        }
        e = r.f_next;
        if n % stride == 0 || n == cfg.n_steps {
            trace.snapshots.push(Snapshot { step: n, t: n as f64 * cfg.h, set: e.clone() });
        }
        if vol == cfg.m && asph < cfg.tol_ball {
            calm += 1;
        } else {
            calm = 0;
        }
        if cfg.stop_on_ball && calm >= 10 {
            trace.stop_reason = format!("converged to ball at step {n}");
            if trace.snapshots.last().map(|s| s.step) != Some(n) {
                trace.snapshots.push(Snapshot { step: n, t: n as f64 * cfg.h, set: e.clone() });
            }
            break;
        }
    }
    if sum_hd > p0 + tol_of(cfg, p0) {
        trace.violations.push(format!("sum h*D_n = {sum_hd} exceeds P(E_0) = {p0}"));
    }
    if sum_d > p0 + pen0 + tol_of(cfg, p0 + pen0) {
        trace.violations.push(format!("sum D_n = {sum_d} exceeds initial energy {}", p0 + pen0));
    }
    if trace.stop_reason.is_empty() {
        trace.stop_reason = "step budget exhausted".into();
    }
    Ok(())
}

fn tol_of(cfg: &FlowConfig, x: f64) -> f64 {
    cfg.rel_tol * x.abs().max(1.0) * cfg.n_steps as f64
}

/// Symmetric-difference volume between sets that may live in different
/// windows of the same cell size (cells aligned).
pub fn aligned_sym_diff(g1: &GridSet, g2: &GridSet) -> Result<f64> {
    if g1.a() != g2.a() {
        return Err(Error::GeometryMismatch);
    }
    let a = g1.a();
    let cells = |g: &GridSet| -> HashSet<(i64, i64)> {
        let ox = (g.origin()[0] / a).round() as i64;
        let oy = (g.origin()[1] / a).round() as i64;
        (0..g.ny())
            .flat_map(|j| (0..g.nx()).map(move |i| (i, j)))
            .filter(|&(i, j)| g.get(i, j))
            .map(|(i, j)| (ox + i as i64, oy + j as i64))
            .collect()
    };
    let (c1, c2) = (cells(g1), cells(g2));
    Ok(c1.symmetric_difference(&c2).count() as f64 * a * a)
}

/// `max |E_{t₁} △ E_{t₂}| / |t₁ − t₂|^{s/(s+1)}` over snapshot pairs.
pub fn check_holder(snapshots: &[Snapshot], s: f64) -> Result<f64> {
    if snapshots.len() < 3 {
        return Err(invalid("need at least 3 snapshots"));
    }
    let alpha = s / (s + 1.0);
    let mut best = 0.0f64;
    for (k, a) in snapshots.iter().enumerate() {
        for b in &snapshots[k + 1..] {
            let dt = (a.t - b.t).abs();
            if dt == 0.0 {
                continue;
            }
            best = best.max(aligned_sym_diff(&a.set, &b.set)? / dt.powf(alpha));
        }
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Every sample sat at the floor.
    pub at_floor: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayFit {
    pub start: usize,
    pub end: usize,
    pub dissipation: LineFit,
    pub asphericity: LineFit,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> LineFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    LineFit {
        slope,
        intercept: my - slope * mx,
        r2,
        at_floor: false,
    }
}

/// Log-linear fits of dissipation and asphericity from the volume lock up to
/// the last step that changed the set (to the end of the trace when nothing
/// moved after the lock).
pub fn exp_decay_fit(trace: &FlowTrace, a: f64) -> Result<DecayFit> {
    let start = trace
        .lock_step()
        .ok_or_else(|| invalid("volume never locked to m"))?
        .max(1);
    exp_decay_fit_from(trace, a, start)
}

/// As [`exp_decay_fit`] with an explicit first step.
pub fn exp_decay_fit_from(trace: &FlowTrace, a: f64, start: usize) -> Result<DecayFit> {
    let floor = a * a * 1e-6;
    let end = trace
        .rows
        .iter()
        .rev()
        .find(|r| r.changed_cells > 0 && r.step > start)
        .map_or(usize::MAX, |r| r.step);
    let rows: Vec<&TraceRow> = trace
        .rows
        .iter()
        .filter(|r| r.step >= start && r.step <= end)
        .collect();
    if rows.len() < 20 {
        return Err(invalid(format!(
            "only {} moving steps after step {start}; need 20",
            rows.len()
        )));
    }
    let end = rows[rows.len() - 1].step;
    let xs: Vec<f64> = rows.iter().map(|r| r.step as f64).collect();
    let series = |get: &dyn Fn(&TraceRow) -> f64| {
        let ys: Vec<f64> = rows.iter().map(|r| (get(r) + floor).ln()).collect();
        let mut f = fit_line(&xs, &ys);
        f.at_floor = rows.iter().all(|r| get(r) == 0.0);
        f
    };
    Ok(DecayFit {
        start,
        end,
        dissipation: series(&|r| r.dissipation),
        asphericity: series(&|r| r.asphericity),
    })
}

/// `K = (P_∞ / P^s(B₁))^{N/s} (|B₁| / m)^{N/s − 1}`, planar case.
pub fn limit_component_count(p_inf: f64, m: f64, s: f64, n: usize) -> Result<f64> {
    if n != 2 {
        return Err(invalid("only N = 2 is supported"));
    }
    if !(p_inf > 0.0 && m > 0.0 && s > 0.0 && s < 1.0) {
        return Err(invalid("limit_component_count needs positive inputs"));
    }
    let e = n as f64 / s;
    Ok((p_inf / ball_perimeter(s)?).powf(e) * (PI / m).powf(e - 1.0))
}
