//! Run configuration, its resolution into independent points, and
//! validation.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use qwz_ness::baths::{BathSpec, Statistics};
use qwz_ness::lattice::{build_hamiltonian, single_particle_spectrum, ImpuritySet, LatticeSpec};
use qwz_ness::negf::QuadratureSpec;
use qwz_ness::semiclassical::PotentialSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    CurrentField,
    GammaSweep,
    ImpurityStudy,
    Distribution,
    Semiclassical,
    SymmetryReport,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParameter {
    #[serde(rename = "gamma")]
    Gamma,
    #[serde(rename = "m")]
    M,
    #[serde(rename = "T_h", alias = "t_h")]
    THot,
    #[serde(rename = "T_c", alias = "t_c")]
    TCold,
    #[serde(rename = "mu")]
    Mu,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Gamma => "gamma",
            SweepParameter::M => "m",
            SweepParameter::THot => "T_h",
            SweepParameter::TCold => "T_c",
            SweepParameter::Mu => "mu",
        }
    }

    fn must_be_positive(self) -> bool {
        matches!(self, SweepParameter::Gamma | SweepParameter::THot | SweepParameter::TCold)
    }

    fn apply(self, value: f64, lattice: &mut LatticeSpec, bath: &mut BathSpec) {
        match self {
            SweepParameter::Gamma => bath.gamma = value,
            SweepParameter::M => lattice.m = value,
            SweepParameter::THot => bath.t_h = value,
            SweepParameter::TCold => bath.t_c = value,
            SweepParameter::Mu => bath.mu = value,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: SweepParameter,
    #[serde(default)]
    pub values: Vec<f64>,
}

/// Overrides applied on top of the base lattice and bath, so one config can
/// hold e.g. a boson and a fermion run side by side.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub label: String,
    pub statistics: Option<Statistics>,
    pub m: Option<f64>,
    pub mu: Option<f64>,
    pub gamma: Option<f64>,
    pub t_h: Option<f64>,
    pub t_c: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub directory: PathBuf,
    #[serde(default)]
    pub format: Format,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemiclassicalSpec {
    #[serde(default = "default_grid")]
    pub grid_n: usize,
    #[serde(default)]
    pub potential: PotentialSpec,
}

fn default_grid() -> usize {
    200
}

impl Default for SemiclassicalSpec {
    fn default() -> Self {
        SemiclassicalSpec { grid_n: default_grid(), potential: PotentialSpec::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub lattice: LatticeSpec,
    pub bath: BathSpec,
    #[serde(default)]
    pub impurities: ImpuritySet,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub semiclassical: SemiclassicalSpec,
    pub output: OutputSpec,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}

/// One fully specified lattice/bath combination.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Point {
    pub variant: Option<String>,
    /// `(parameter, value)` when the point comes from a sweep.
    pub sweep: Option<(SweepParameter, f64)>,
    pub lattice: LatticeSpec,
    pub bath: BathSpec,
}

impl Point {
    /// Human-readable identity, used in error context and logs.
    pub fn describe(&self) -> String {
        let mut parts = Vec::new();
        if let Some(v) = &self.variant {
            parts.push(format!("variant {v}"));
        }
        if let Some((p, v)) = self.sweep {
            parts.push(format!("{} = {v}", p.name()));
        }
        if parts.is_empty() {
            "base point".into()
        } else {
            parts.join(", ")
        }
    }

    /// File-name suffix: `_<variant>_<parameter>=<value>`.
    pub fn suffix(&self, with_sweep: bool) -> String {
        let mut s = String::new();
        if let Some(v) = &self.variant {
            s.push('_');
            s.extend(v.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }));
        }
        if with_sweep {
            if let Some((p, v)) = self.sweep {
                s.push_str(&format!("_{}={v}", p.name()));
            }
        }
        s
    }
}

impl RunConfig {
    /// Variants (or the base configuration) crossed with the sweep values,
    /// variant-major.
    pub fn points(&self) -> Vec<Point> {
        let bases: Vec<(Option<String>, LatticeSpec, BathSpec)> = if self.variants.is_empty() {
            vec![(None, self.lattice.clone(), self.bath.clone())]
        } else {
            self.variants
                .iter()
                .map(|v| {
                    let mut lattice = self.lattice.clone();
                    let mut bath = self.bath.clone();
                    if let Some(s) = v.statistics {
                        bath.statistics = s;
                    }
                    if let Some(m) = v.m {
                        lattice.m = m;
                    }
                    if let Some(mu) = v.mu {
                        bath.mu = mu;
                    }
                    if let Some(g) = v.gamma {
                        bath.gamma = g;
                    }
                    if let Some(t) = v.t_h {
                        bath.t_h = t;
                    }
                    if let Some(t) = v.t_c {
                        bath.t_c = t;
                    }
                    (Some(v.label.clone()), lattice, bath)
                })
                .collect()
        };
        let mut out = Vec::new();
        for (variant, lattice, bath) in bases {
            match &self.sweep {
                Some(sw) if !sw.values.is_empty() => {
                    for &v in &sw.values {
                        let (mut l, mut b) = (lattice.clone(), bath.clone());
                        sw.parameter.apply(v, &mut l, &mut b);
                        out.push(Point {
                            variant: variant.clone(),
                            sweep: Some((sw.parameter, v)),
                            lattice: l,
                            bath: b,
                        });
                    }
                }
                _ => out.push(Point { variant: variant.clone(), sweep: None, lattice, bath }),
            }
        }
        out
    }
}

/// One validation finding, addressed to a config field.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl Diagnostic {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic { field: field.into(), message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Every problem with the configuration, without running anything beyond a
/// diagonalization per point for the bosonic stability check.
pub fn validate(config: &RunConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    if let Some(sw) = &config.sweep {
        for (i, v) in sw.values.iter().enumerate() {
            let field = format!("sweep.values[{i}]");
            if !v.is_finite() {
                out.push(Diagnostic::new(field, "sweep values must be finite"));
            } else if sw.parameter.must_be_positive() && *v <= 0.0 {
                out.push(Diagnostic::new(field, format!("{} must be positive, got {v}", sw.parameter.name())));
            }
        }
    }
    match (config.experiment, &config.sweep) {
        (Experiment::GammaSweep, Some(sw)) if sw.parameter != SweepParameter::Gamma => {
            out.push(Diagnostic::new("sweep.parameter", "a gamma sweep must sweep gamma"))
        }
        (Experiment::GammaSweep, Some(sw)) if sw.values.is_empty() => {
            out.push(Diagnostic::new("sweep.values", "a gamma sweep needs at least one value"))
        }
        (Experiment::GammaSweep, None) => out.push(Diagnostic::new("sweep", "a gamma sweep needs a sweep section")),
        _ => {}
    }
    let mut labels = std::collections::HashSet::new();
    for (i, v) in config.variants.iter().enumerate() {
        if v.label.is_empty() {
            out.push(Diagnostic::new(format!("variants[{i}].label"), "variant labels must not be empty"));
        } else if !labels.insert(v.label.as_str()) {
            out.push(Diagnostic::new(format!("variants[{i}].label"), format!("duplicate variant label {:?}", v.label)));
        }
    }
    if let Err(e) = config.quadrature.validate() {
        out.push(Diagnostic::new("quadrature", e.to_string()));
    }
    if config.experiment == Experiment::Semiclassical {
        if config.semiclassical.grid_n < 2 {
            out.push(Diagnostic::new("semiclassical.grid_n", "the momentum grid needs at least 2 points per axis"));
        }
        if let Err(e) = config.semiclassical.potential.validate() {
            out.push(Diagnostic::new("semiclassical.potential", e.to_string()));
        }
    }

    for point in config.points() {
        let prefix = match &point.variant {
            Some(_) => "variants",
            None => "",
        };
        let field = |name: &str| {
            let base = if prefix.is_empty() { name.to_string() } else { format!("{prefix}.{name}") };
            match &point.variant {
                Some(v) => format!("{base} ({v})"),
                None => base,
            }
        };
        let lattice = &point.lattice;
        if lattice.lx < 2 {
            out.push(Diagnostic::new(
                field("lattice.lx"),
                format!("L_X must be at least 2 so the reservoirs attach to distinct columns, got {}", lattice.lx),
            ));
        }
        let lattice_ok = match lattice.validate() {
            Ok(()) => true,
            Err(e) => {
                out.push(Diagnostic::new(field("lattice"), e.to_string()));
                false
            }
        };
        let bath = &point.bath;
        if bath.statistics == Statistics::Boson && bath.mu != 0.0 {
            out.push(Diagnostic::new(field("bath.mu"), "bosonic chemical potential must be zero"));
        } else if let Err(e) = bath.validate() {
            out.push(Diagnostic::new(field("bath"), e.to_string()));
        }
        let impurities_ok = match config.impurities.validate(lattice) {
            Ok(()) => true,
            Err(e) => {
                out.push(Diagnostic::new("impurities", e.to_string()));
                false
            }
        };
        if bath.statistics == Statistics::Boson && lattice_ok && impurities_ok {
            let lowest = build_hamiltonian(lattice, &config.impurities)
                .and_then(|h| single_particle_spectrum(&h))
                .map(|sp| sp.energies[0]);
            match lowest {
                Ok(w) if w <= bath.mu => out.push(Diagnostic::new(
                    field("lattice"),
                    format!("bosonic spectrum must lie above mu = {}, lowest mode at {w}", bath.mu),
                )),
                Ok(_) => {}
                Err(e) => out.push(Diagnostic::new(field("lattice"), e.to_string())),
            }
        }
    }

    let mut seen = std::collections::HashSet::new();
    out.retain(|d| seen.insert(d.clone()));
    out
}
