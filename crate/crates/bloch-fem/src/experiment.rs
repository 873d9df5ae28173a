//! The numerical examples end to end: data, solve, trace errors, sweeps.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use log::{info, warn};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::assembly::{build_block_system, AssemblyCounts, BlockSystem, DirichletData, SourceTerms, VolumeData};
use crate::config::{ReferenceConfig, RunConfig};
use crate::error::{Error, Result, StageExt};
use crate::greens::{
    bloch_lattice_grid, green_half_space, incident_boundary_data, lattice_twiddle, GreenBlochSampler,
    HalfSpaceSource, SourceKind,
};
use crate::medium::{IndexGroup, MediumModel};
use crate::mesh::{build_cell_mesh, PeriodicCellMesh};
use crate::solver::{reconstruct_on_trace, relative_trace_error, solve, trapezoid_weights, BlochField, SolveReport};
use crate::spectral::AlphaGrid;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// What distinguishes the eight examples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExampleSpec {
    pub id: u8,
    pub group: IndexGroup,
    pub k: f64,
    pub kind: SourceKind,
}

pub fn example_spec(id: u8) -> Result<ExampleSpec> {
    if !(1..=8).contains(&id) {
        return Err(Error::Config(format!("example id must be 1..8, got {id}")));
    }
    let base = (id - 1) % 4;
    Ok(ExampleSpec {
        id,
        group: if base < 2 { IndexGroup::Group1 } else { IndexGroup::Group2 },
        k: if base.is_multiple_of(2) { 1.0 } else { 6.0 },
        kind: if id <= 4 { SourceKind::Volume } else { SourceKind::Incident },
    })
}

/// Configuration of example `id` at `(N, h)` on top of `base`.
pub fn example_config(id: u8, copies: usize, h: f64, base: &RunConfig) -> Result<RunConfig> {
    let spec = example_spec(id)?;
    let mut cfg = base.clone();
    cfg.k = spec.k;
    cfg.copies = copies;
    cfg.h = h;
    cfg.index_group = spec.group.name().into();
    cfg.source.kind = spec.kind;
    cfg.source.point = match spec.kind {
        SourceKind::Volume => [0.5, 0.4],
        SourceKind::Incident => [std::f64::consts::PI, 4.0],
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Geometry, medium and source of one run.
#[derive(Debug, Clone)]
pub struct Problem {
    pub config: RunConfig,
    pub mesh: PeriodicCellMesh,
    pub medium: MediumModel,
    pub grid: AlphaGrid,
    pub source: HalfSpaceSource,
}

impl Problem {
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let mesh = build_cell_mesh(config.period, config.h0, config.height, config.h).stage("mesh")?;
        let (lower, upper) = config.group()?.layers();
        let medium = MediumModel::new(
            lower,
            upper,
            config.k,
            config.copies,
            config.period,
            config.h1,
            config.decomposition(),
        )
        .stage("medium")?;
        let grid = AlphaGrid::new(config.copies, config.period).stage("spectral")?;
        let source = match config.source.kind {
            SourceKind::Volume => HalfSpaceSource::volume(config.source.point, config.k, config.h0),
            SourceKind::Incident => HalfSpaceSource::incident(config.source.point, config.k, config.height),
        }
        .stage("greens")?;
        Ok(Problem {
            config: config.clone(),
            mesh,
            medium,
            grid,
            source,
        })
    }

    /// Bloch data of the source terms plus diagnostics.
    pub fn source_terms(&self) -> Result<(SourceTerms, Vec<String>)> {
        let mut warnings = Vec::new();
        match self.source.kind {
            SourceKind::Volume => {
                let volume = self.volume_data(&mut warnings);
                let dirichlet = self.dirichlet_data();
                Ok((
                    SourceTerms {
                        volume: Some(volume),
                        boundary: None,
                        dirichlet: Some(dirichlet),
                    },
                    warnings,
                ))
            }
            SourceKind::Incident => {
                let modes = incident_boundary_data(&self.source, &self.grid, self.config.height).stage("greens")?;
                Ok((
                    SourceTerms {
                        volume: None,
                        boundary: Some(modes),
                        dirichlet: None,
                    },
                    warnings,
                ))
            }
        }
    }

    /// `J(k² n G)` at the quadrature points: the periodic upper layer factors
    /// out of the transform, the lower one needs the lattice sum.
    fn volume_data(&self, warnings: &mut Vec<String>) -> VolumeData {
        let n = self.grid.copies;
        let k2 = self.config.k * self.config.k;
        let (lower, upper) = (&self.medium.layer1, &self.medium.layer2);
        let src = self.source;
        let mut sampler = GreenBlochSampler::new(src, &self.grid);
        let twiddle = lattice_twiddle(n);
        let mut buf = vec![ZERO; n];
        let (mut worst_tail, mut scale) = (0.0f64, 0.0f64);
        let data = VolumeData::sample(&self.mesh, n, |x, out| {
            let n2 = upper.eval(x[0], x[1]);
            let in_lower = !lower.is_zero() && x[1] > lower.support.0 && x[1] < lower.support.1;
            if n2 == 0.0 && !in_lower {
                return false;
            }
            if n2 != 0.0 {
                sampler.sample(x, &mut buf);
                for (o, g) in out.iter_mut().zip(&buf) {
                    *o += k2 * n2 * g;
                }
            }
            if in_lower {
                let f = |x1: f64, x2: f64| {
                    let v = lower.eval(x1, x2);
                    if v == 0.0 {
                        ZERO
                    } else {
                        k2 * v * green_half_space([x1, x2], &src).unwrap_or(ZERO)
                    }
                };
                let tail = bloch_lattice_grid(f, &self.grid, x, self.config.jmax, &twiddle, &mut buf);
                worst_tail = worst_tail.max(tail);
                for (o, g) in out.iter_mut().zip(&buf) {
                    *o += g;
                }
            }
            scale = out.iter().fold(scale, |m, v| m.max(v.norm()));
            true
        });
        if worst_tail > 1e-4 * scale {
            let msg = format!(
                "lattice sum truncated at Jmax={}: tail bound {worst_tail:.2e} against source scale {scale:.2e}",
                self.config.jmax
            );
            warn!("{msg}");
            warnings.push(msg);
        }
        data
    }

    /// `JG(α_j, ·)` on the bottom row.
    fn dirichlet_data(&self) -> DirichletData {
        let n = self.grid.copies;
        let mut sampler = GreenBlochSampler::new(self.source, &self.grid);
        let mut values = vec![vec![ZERO; self.mesh.nx + 1]; n];
        let mut buf = vec![ZERO; n];
        for &node in &self.mesh.bottom_nodes {
            sampler.sample(self.mesh.nodes[node], &mut buf);
            for (j, v) in buf.iter().enumerate() {
                values[j][node] = *v;
            }
        }
        DirichletData { values }
    }

    pub fn build_system(&self) -> Result<(BlockSystem, Vec<String>)> {
        let (terms, warnings) = self.source_terms().stage("sources")?;
        let system = build_block_system(
            &self.mesh,
            &self.medium,
            &self.grid,
            self.config.basis,
            self.config.dtn_truncation.resolve(),
            &terms,
        )
        .stage("assembly")?;
        Ok((system, warnings))
    }
}

/// Everything one solve produces.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub problem: Problem,
    pub field: BlochField,
    pub report: SolveReport,
    pub counts: AssemblyCounts,
    pub warnings: Vec<String>,
    pub wall_time: f64,
}

/// Builds and solves the problem of a configuration; writes debug dumps if asked.
pub fn solve_config(config: &RunConfig) -> Result<RunOutcome> {
    let started = Instant::now();
    let problem = Problem::new(config)?;
    if let Some(path) = &config.output.mesh_dump {
        let mut f = std::fs::File::create(path)?;
        problem.mesh.dump(&mut f)?;
    }
    let (system, mut warnings) = problem.build_system()?;
    if let Some(path) = &config.output.system_dump {
        let mut f = std::fs::File::create(path)?;
        system.dump(&mut f).stage("dump")?;
    }
    let (field, report) = solve(&system, &config.solver).stage("solver")?;
    warnings.extend(report.warnings.iter().cloned());
    info!(
        "N={} h={} solved: {} dofs, {} iterations, residual {:.2e}",
        config.copies,
        config.h,
        system.total_dofs(),
        report.iterations,
        report.residual
    );
    Ok(RunOutcome {
        counts: system.counts,
        problem,
        field,
        report,
        warnings,
        wall_time: started.elapsed().as_secs_f64(),
    })
}

/// Numerical trace on the top-row nodes of the cell and its x₁.
pub fn numerical_trace(outcome: &RunOutcome) -> (Vec<f64>, Vec<Complex64>) {
    let (x, _) = outcome.field.top_row();
    let u = reconstruct_on_trace(&outcome.field, &x);
    (x, u)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTableRow {
    pub example: u8,
    #[serde(rename = "N")]
    pub copies: usize,
    pub h: f64,
    pub relative_error: f64,
    pub wall_time: f64,
    pub iterations: usize,
    /// Semicolon-separated.
    pub warnings: String,
}

/// A reference trace for the incident-field examples.
#[derive(Debug, Clone)]
pub struct ReferenceTrace {
    pub config: ReferenceConfig,
    pub x1: Vec<f64>,
    pub values: Vec<Complex64>,
}

pub fn reference_trace(id: u8, reference: ReferenceConfig, base: &RunConfig) -> Result<ReferenceTrace> {
    let cfg = example_config(id, reference.copies, reference.h, base)?;
    let outcome = solve_config(&cfg).stage("reference")?;
    let (x1, values) = numerical_trace(&outcome);
    Ok(ReferenceTrace {
        config: reference,
        x1,
        values,
    })
}

/// Error of one run against the exact Green's function trace or a reference trace.
pub fn trace_error(outcome: &RunOutcome, reference: Option<&ReferenceTrace>) -> Result<f64> {
    match outcome.problem.source.kind {
        SourceKind::Volume => {
            let (x, u) = numerical_trace(outcome);
            let height = outcome.problem.config.height;
            let exact = x
                .iter()
                .map(|&x1| green_half_space([x1, height], &outcome.problem.source))
                .collect::<Result<Vec<_>>>()?;
            relative_trace_error(&u, &exact, &trapezoid_weights(&x))
        }
        SourceKind::Incident => {
            let r = reference.ok_or_else(|| Error::Config("incident examples need a reference solve".into()))?;
            let u = reconstruct_on_trace(&outcome.field, &r.x1);
            relative_trace_error(&u, &r.values, &trapezoid_weights(&r.x1))
        }
    }
}

fn join_warnings(w: &[String]) -> String {
    let mut seen = std::collections::BTreeSet::new();
    w.iter()
        .filter(|s| seen.insert(s.as_str()))
        .cloned()
        .collect::<Vec<_>>()
        .join("; ")
}

/// Runs example `id` at `(N, h)`.
///
/// Incident-field examples use `reference` if given, else `base.reference`,
/// else a solve at `(2N, h/2)`.
pub fn run_example(
    id: u8,
    copies: usize,
    h: f64,
    base: &RunConfig,
    reference: Option<&ReferenceTrace>,
) -> Result<ErrorTableRow> {
    let cfg = example_config(id, copies, h, base)?;
    let owned;
    let reference = match (cfg.source.kind, reference) {
        (SourceKind::Incident, None) => {
            let rc = base.reference.unwrap_or(ReferenceConfig {
                copies: 2 * copies,
                h: h / 2.0,
            });
            owned = reference_trace(id, rc, base)?;
            Some(&owned)
        }
        (_, r) => r,
    };
    let outcome = solve_config(&cfg)?;
    let error = trace_error(&outcome, reference).stage("error")?;
    Ok(ErrorTableRow {
        example: id,
        copies,
        h,
        relative_error: error,
        wall_time: outcome.wall_time,
        iterations: outcome.report.iterations,
        warnings: join_warnings(&outcome.warnings),
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape("slope fit needs paired samples".into()));
    }
    if x.len() < 2 {
        return Err(Error::InsufficientPoints { needed: 2, got: x.len() });
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidArgument("log-log fit needs positive data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientPoints { needed: 2, got: 1 });
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub example: u8,
    pub rows: Vec<ErrorTableRow>,
    /// Slope in N at the smallest h, when at least two N were run.
    pub rate_n: Option<f64>,
    /// Slope in h at the largest N, when at least two h were run.
    pub rate_h: Option<f64>,
    pub reference: Option<(usize, f64)>,
}

/// Full tensor sweep over `copies × h`, rows keyed by (N, h).
pub fn run_convergence(id: u8, copies: &[usize], hs: &[f64], base: &RunConfig) -> Result<ConvergenceTable> {
    let mut ns: Vec<usize> = copies.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let mut hl: Vec<f64> = hs.to_vec();
    hl.sort_by(|a, b| b.total_cmp(a));
    hl.dedup();
    if ns.len() < 3 && hl.len() < 3 {
        return Err(Error::InsufficientPoints {
            needed: 3,
            got: ns.len().max(hl.len()),
        });
    }
    let spec = example_spec(id)?;
    let reference = if spec.kind == SourceKind::Incident {
        let rc = base.reference.unwrap_or(ReferenceConfig {
            copies: 2 * ns[ns.len() - 1],
            h: hl[hl.len() - 1] / 2.0,
        });
        Some(reference_trace(id, rc, base)?)
    } else {
        None
    };
    let points: Vec<(usize, f64)> = ns.iter().flat_map(|&n| hl.iter().map(move |&h| (n, h))).collect();
    let rows = run_pool(&points, |(n, h)| run_example(id, n, h, base, reference.as_ref()))?;
    let pick = |pred: &dyn Fn(&ErrorTableRow) -> bool| -> Vec<&ErrorTableRow> { rows.iter().filter(|r| pred(r)).collect() };
    let h_min = hl[hl.len() - 1];
    let n_max = ns[ns.len() - 1];
    let rate_n = (ns.len() >= 2)
        .then(|| {
            let sel = pick(&|r| r.h == h_min);
            let x: Vec<f64> = sel.iter().map(|r| r.copies as f64).collect();
            let y: Vec<f64> = sel.iter().map(|r| r.relative_error).collect();
            fit_slope(&x, &y)
        })
        .transpose()?;
    let rate_h = (hl.len() >= 2)
        .then(|| {
            let sel = pick(&|r| r.copies == n_max);
            let x: Vec<f64> = sel.iter().map(|r| r.h).collect();
            let y: Vec<f64> = sel.iter().map(|r| r.relative_error).collect();
            fit_slope(&x, &y)
        })
        .transpose()?;
    Ok(ConvergenceTable {
        example: id,
        rows,
        rate_n,
        rate_h,
        reference: reference.map(|r| (r.config.copies, r.config.h)),
    })
}

/// Runs every point on a small thread pool; results come back in input order.
fn run_pool<T, F>(points: &[(usize, f64)], job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn((usize, f64)) -> Result<T> + Sync,
{
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(points.len())
        .max(1);
    let next = AtomicUsize::new(0);
    let done: Mutex<BTreeMap<usize, Result<T>>> = Mutex::new(BTreeMap::new());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= points.len() {
                    break;
                }
                let r = job(points[i]);
                let failed = r.is_err();
                done.lock().expect("pool poisoned").insert(i, r);
                if failed {
                    next.store(points.len(), Ordering::Relaxed);
                }
            });
        }
    });
    done.into_inner().expect("pool poisoned").into_values().collect()
}
