//! Execution of a validated configuration: independent points in parallel,
//! outputs written serially in point order, then the manifest.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use log::{debug, info};
use rayon::prelude::*;
use serde::Serialize;

use qwz_ness::baths::{build_self_energies, BathSpec};
use qwz_ness::lattice::{build_hamiltonian, Hamiltonian, LatticeSpec};
use qwz_ness::negf::{effective_hamiltonian, steady_correlation, CorrelationMatrix, SolveDiagnostics};
use qwz_ness::observables::{
    bond_currents, edge_bulk_diagnostics, landauer_total, mode_occupations, CurrentDiagnostics, CurrentField,
    Direction, LandauerCurrent,
};
use qwz_ness::semiclassical::{
    bulk_cancellation_check, chern_number, semiclassical_current_field, symmetric_occupation, Band, KGrid,
};
use qwz_ness::symmetry::{symmetric_spectrum, symmetry_report, SymmetryReport};
use qwz_ness::weakcoupling::{mode_couplings, weak_coupling_occupations};
use qwz_ness::NessError;

use crate::config::{validate, Experiment, Point, RunConfig};
use crate::error::CliError;
use crate::output::{write_file, Cell, FileEntry, Table};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Replaces `output.directory` from the config.
    pub output: Option<PathBuf>,
    /// Worker threads; `0` lets rayon decide.
    pub workers: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepValue {
    pub parameter: &'static str,
    pub value: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Conservation {
    /// Largest deviation of a column sum from the Landauer total.
    pub column_spread: f64,
    pub max_interior_divergence: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DistributionSummary {
    /// Symmetry whose eigenbasis was used, if any survived.
    pub adapted_basis: Option<String>,
    pub max_coupling_asymmetry: f64,
    pub min_gap: f64,
    pub degenerate: bool,
    pub imaginary_residue: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SemiclassicalSummary {
    pub prefactor: f64,
    /// `+1` clockwise, `-1` anticlockwise, absent if the field is too weak
    /// or the sign is mixed.
    pub circulation: Option<f64>,
    pub bulk_residual: f64,
    /// Lower-band Chern number; absent at a gap closing.
    pub chern_lower: Option<i32>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PointRecord {
    pub point: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepValue>,
    pub lattice: LatticeSpec,
    pub bath: BathSpec,
    pub symmetry: SymmetryReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solve: Option<SolveDiagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub currents: Option<CurrentDiagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub landauer: Option<LandauerCurrent>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conservation: Option<Conservation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distribution: Option<DistributionSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub semiclassical: Option<SemiclassicalSummary>,
    pub seconds: f64,
}

/// How the reported current averages are formed.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Conventions {
    pub j_edge: &'static str,
    pub j_bulk: &'static str,
    pub bond_direction: &'static str,
}

pub const CONVENTIONS: Conventions = Conventions {
    j_edge: "sum over the L_X - 1 horizontal bonds of J(x, L_Y) - J(x, 1), divided by 2 L_X",
    j_bulk: "mean over y of the horizontal bond current leaving column x_mid = max(L_X / 2, 1)",
    bond_direction: "X rows carry J from (x, y) to (x + 1, y); Y rows from (x, y) to (x, y + 1)",
};

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub program: &'static str,
    pub version: &'static str,
    pub experiment: Experiment,
    pub conventions: Conventions,
    pub config: RunConfig,
    pub output_directory: PathBuf,
    pub workers: usize,
    pub points: Vec<PointRecord>,
    /// Every file written besides the manifest itself.
    pub files: Vec<FileEntry>,
    pub total_seconds: f64,
}

struct PointOutcome {
    record: PointRecord,
    table: Option<Table>,
}

fn record(point: &Point, h: &Hamiltonian, config: &RunConfig) -> PointRecord {
    PointRecord {
        point: point.describe(),
        variant: point.variant.clone(),
        sweep: point.sweep.map(|(p, v)| SweepValue { parameter: p.name(), value: v }),
        lattice: point.lattice.clone(),
        bath: point.bath.clone(),
        symmetry: symmetry_report(h, &config.impurities),
        solve: None,
        currents: None,
        landauer: None,
        conservation: None,
        distribution: None,
        semiclassical: None,
        seconds: 0.0,
    }
}

fn solve(
    h: &Hamiltonian,
    point: &Point,
    config: &RunConfig,
) -> Result<(CorrelationMatrix, LandauerCurrent), NessError> {
    let se = build_self_energies(&point.lattice, &point.bath)?;
    let eff = effective_hamiltonian(h, &se)?;
    let c = steady_correlation(&eff, &se, &point.bath, &config.quadrature)?;
    let lan = landauer_total(&eff, &se, &point.bath, &config.quadrature)?;
    Ok((c, lan))
}

fn field_table(field: &CurrentField) -> Table {
    let mut t = Table::new(&["x", "y", "direction", "value"]);
    for (x, y, d, v) in field.bonds() {
        let d = match d {
            Direction::X => "X",
            Direction::Y => "Y",
        };
        t.push(vec![Cell::Int(x), Cell::Int(y), Cell::Text(d.into()), Cell::Num(v)]);
    }
    t
}

fn current_point(
    h: &Hamiltonian,
    point: &Point,
    config: &RunConfig,
    rec: &mut PointRecord,
) -> Result<Table, NessError> {
    let (c, lan) = solve(h, point, config)?;
    let field = bond_currents(&c, &point.lattice)?;
    let column_spread = field.column_sums().iter().fold(0.0f64, |m, s| m.max((s - lan.j_tot).abs()));
    rec.conservation = Some(Conservation { column_spread, max_interior_divergence: field.max_interior_divergence() });
    rec.currents = Some(edge_bulk_diagnostics(&field, &point.lattice));
    rec.landauer = Some(lan);
    rec.solve = Some(c.diagnostics);
    Ok(field_table(&field))
}

fn distribution_point(
    h: &Hamiltonian,
    point: &Point,
    config: &RunConfig,
    rec: &mut PointRecord,
) -> Result<Table, NessError> {
    let (c, lan) = solve(h, point, config)?;
    let (spectrum, adapted_basis) = symmetric_spectrum(h)?;
    let occ = mode_occupations(&c, &spectrum)?;
    let k = mode_couplings(&spectrum, &point.lattice)?;
    let weak = weak_coupling_occupations(&spectrum, &k, &point.bath)?;
    let mut t = Table::new(&["omega", "n", "s", "r", "n_weak"]);
    for a in 0..spectrum.len() {
        t.push(vec![
            Cell::Num(occ.omega[a]),
            Cell::Num(occ.n[a]),
            Cell::Num(k.s[a]),
            Cell::Num(k.r[a]),
            Cell::Num(weak[a]),
        ]);
    }
    rec.distribution = Some(DistributionSummary {
        adapted_basis,
        max_coupling_asymmetry: k.max_asymmetry(),
        min_gap: k.min_gap,
        degenerate: k.degenerate,
        imaginary_residue: occ.imaginary_residue,
    });
    rec.landauer = Some(lan);
    rec.solve = Some(c.diagnostics);
    Ok(t)
}

fn semiclassical_point(point: &Point, config: &RunConfig, rec: &mut PointRecord) -> Result<Table, NessError> {
    let spec = &point.lattice;
    let grid = KGrid::symmetric(config.semiclassical.grid_n);
    let occ = symmetric_occupation(&point.bath);
    let field = semiclassical_current_field(spec, &occ, &config.semiclassical.potential, grid)?;
    let mut t = Table::new(&["x", "y", "ix", "iy"]);
    for (i, &x) in field.xs.iter().enumerate() {
        for (j, &y) in field.ys.iter().enumerate() {
            t.push(vec![Cell::Num(x), Cell::Num(y), Cell::Num(field.ix[[i, j]]), Cell::Num(field.iy[[i, j]])]);
        }
    }
    rec.semiclassical = Some(SemiclassicalSummary {
        prefactor: field.prefactor,
        circulation: field.circulation_sign(),
        bulk_residual: bulk_cancellation_check(spec, &occ, grid)?,
        chern_lower: chern_number(spec, Band::Minus, config.semiclassical.grid_n).ok().map(|c| c.value),
    });
    Ok(t)
}

fn run_point(point: &Point, config: &RunConfig) -> Result<PointOutcome, CliError> {
    let start = Instant::now();
    let wrap = |source| CliError::Numerical { point: point.describe(), source };
    debug!("starting {}", point.describe());
    let h = build_hamiltonian(&point.lattice, &config.impurities).map_err(wrap)?;
    let mut rec = record(point, &h, config);
    let table = match config.experiment {
        Experiment::SymmetryReport => None,
        Experiment::CurrentField | Experiment::ImpurityStudy | Experiment::GammaSweep => {
            Some(current_point(&h, point, config, &mut rec).map_err(wrap)?)
        }
        Experiment::Distribution => Some(distribution_point(&h, point, config, &mut rec).map_err(wrap)?),
        Experiment::Semiclassical => Some(semiclassical_point(point, config, &mut rec).map_err(wrap)?),
    };
    rec.seconds = start.elapsed().as_secs_f64();
    info!("finished {} in {:.2} s", rec.point, rec.seconds);
    Ok(PointOutcome { record: rec, table })
}

fn stem(experiment: Experiment) -> &'static str {
    match experiment {
        Experiment::CurrentField | Experiment::ImpurityStudy => "current_field",
        Experiment::GammaSweep => "gamma_sweep",
        Experiment::Distribution => "distribution",
        Experiment::Semiclassical => "semiclassical",
        Experiment::SymmetryReport => "symmetry",
    }
}

/// Files to write, in a fixed order that depends only on the config.
fn collect_outputs(config: &RunConfig, points: &[Point], outcomes: &[PointOutcome]) -> Vec<(String, Table)> {
    let ext = config.output.format.extension();
    let stem = stem(config.experiment);
    match config.experiment {
        Experiment::SymmetryReport => Vec::new(),
        Experiment::GammaSweep => {
            let mut files: Vec<(String, Table)> = Vec::new();
            for (point, outcome) in points.iter().zip(outcomes) {
                let name = format!("{stem}{}.{ext}", point.suffix(false));
                if files.last().map(|(n, _)| n != &name).unwrap_or(true) {
                    files.push((name, Table::new(&["gamma", "j_edge", "j_bulk", "j_tot", "j_landauer"])));
                }
                let cur = outcome.record.currents.expect("currents computed");
                let lan = outcome.record.landauer.expect("Landauer computed");
                let table = &mut files.last_mut().expect("pushed above").1;
                table.push(vec![
                    Cell::Num(point.bath.gamma),
                    Cell::Num(cur.j_edge),
                    Cell::Num(cur.j_bulk),
                    Cell::Num(cur.j_tot),
                    Cell::Num(lan.j_tot),
                ]);
            }
            files
        }
        _ => points
            .iter()
            .zip(outcomes)
            .filter_map(|(p, o)| o.table.clone().map(|t| (format!("{stem}{}.{ext}", p.suffix(true)), t)))
            .collect(),
    }
}

pub fn load(path: &std::path::Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    RunConfig::from_toml(&text).map_err(|e| CliError::Config(e.to_string()))
}

pub fn run(config: &RunConfig, options: &RunOptions) -> Result<RunManifest, CliError> {
    let diagnostics = validate(config);
    if !diagnostics.is_empty() {
        return Err(CliError::Invalid(diagnostics));
    }
    let start = Instant::now();
    let directory = options.output.clone().unwrap_or_else(|| config.output.directory.clone());
    fs::create_dir_all(&directory).map_err(|e| CliError::io(&directory, e))?;

    let points = config.points();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers)
        .build()
        .map_err(|e| CliError::Output(format!("cannot start worker pool: {e}")))?;
    let workers = pool.current_num_threads();
    info!("{} point(s) on {workers} worker(s)", points.len());
    let results: Vec<Result<PointOutcome, CliError>> =
        pool.install(|| points.par_iter().map(|p| run_point(p, config)).collect());
    let outcomes = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut files = Vec::new();
    for (name, table) in collect_outputs(config, &points, &outcomes) {
        let bytes = table.render(config.output.format)?;
        files.push(write_file(&directory, &name, &bytes)?);
    }

    let manifest = RunManifest {
        program: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        experiment: config.experiment,
        conventions: CONVENTIONS,
        config: config.clone(),
        output_directory: directory.clone(),
        workers,
        points: outcomes.into_iter().map(|o| o.record).collect(),
        files,
        total_seconds: start.elapsed().as_secs_f64(),
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Output(e.to_string()))?;
    bytes.push(b'\n');
    let path = directory.join(MANIFEST_NAME);
    fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
    Ok(manifest)
}
