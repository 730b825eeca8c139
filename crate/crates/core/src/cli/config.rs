//! Flat `section.key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Relative paths resolve against
//! the directory holding the config file.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::convex_core::PowerDensity;
use crate::discretization::{read_rows, Field, SpaceGrid};
use crate::error::{Error, Result};
use crate::models::{Condition, Evolution, Flux, ModelSpec, Reaction, SamplerConfig, ScalarFlux};
use crate::solver::{LineSearch, SolveOptions};

const KNOWN_KEYS: &[&str] = &[
    "model.name",
    "model.q",
    "model.a",
    "model.epsilon",
    "model.lambda",
    "model.reaction",
    "model.reaction_rate",
    "model.reaction_source",
    "model.flux",
    "model.flux_coeff",
    "model.scalar_flux",
    "model.u_max",
    "model.kappa",
    "model.radius",
    "constants.growth_c0",
    "constants.deriv_g",
    "constants.monotone_g_hat",
    "constants.positivity_c_tilde",
    "constants.positivity_mu_bar",
    "constants.convexity_c0",
    "grid.dimension",
    "grid.N",
    "grid.components",
    "time.T",
    "time.M",
    "initial.profile",
    "initial.path",
    "initial.amplitude",
    "solve.max_iters",
    "solve.grad_tol",
    "solve.energy_tol",
    "solve.c1",
    "solve.backtrack",
    "solve.max_trials",
    "solve.use_lbfgs",
    "solve.memory",
    "solve.seed",
    "solve.init_noise",
    "solve.certificate_tol",
    "solve.compare_baseline",
    "verify.samples",
    "verify.seed",
    "verify.conditions",
    "outputs.dir",
    "outputs.profile_nodes",
];

#[derive(Debug, Clone, PartialEq)]
pub enum InitialProfile {
    /// `Π sin(πx_r)`.
    Sine,
    /// `Π max(0, 1 − 16(x_r − ½)²)²`, supported on `[¼, ¾]^d`.
    Bump,
    /// First row of a trajectory CSV.
    Custom(PathBuf),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub grid: SpaceGrid,
    pub components: usize,
    pub horizon: f64,
    pub intervals: usize,
    pub initial: InitialProfile,
    pub amplitude: f64,
    pub solve: SolveOptions,
    pub certificate_tol: f64,
    pub compare_baseline: bool,
    pub sampler: SamplerConfig,
    pub conditions: Vec<Condition>,
    pub outputs: PathBuf,
    pub profile_nodes: Vec<usize>,
}

struct Entries {
    map: BTreeMap<String, String>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::config(
                    format!("line {}", lineno + 1),
                    format!("expected `section.key = value`, got `{line}`"),
                ));
            };
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::config(key, "unknown key"));
            }
            if map.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Error::config(key, "given more than once"));
            }
        }
        Ok(Self { map })
    }

    fn str(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.str(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::config(key, format!("cannot parse `{v}`"))),
        }
    }

    fn or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn positive(&self, key: &str, default: f64) -> Result<f64> {
        let v = self.or(key, default)?;
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(Error::config(key, format!("must be positive, got {v}")))
        }
    }

    fn bool(&self, key: &str, default: bool) -> Result<bool> {
        match self.str(key) {
            None => Ok(default),
            Some("true" | "yes" | "1") => Ok(true),
            Some("false" | "no" | "0") => Ok(false),
            Some(v) => Err(Error::config(key, format!("expected a boolean, got `{v}`"))),
        }
    }

    fn overrides(&self, key: &str) -> Result<Option<f64>> {
        match self.get::<f64>(key)? {
            Some(v) if !(v > 0.0 && v.is_finite()) => Err(Error::config(key, "must be positive")),
            other => Ok(other),
        }
    }
}

fn model_from(e: &Entries) -> Result<ModelSpec> {
    let name = e.str("model.name").unwrap_or("heat");
    let u_max = e.positive("model.u_max", crate::models::DEFAULT_U_MAX)?;
    let mut m = match name {
        "heat" => ModelSpec::heat(),
        "trivial" => ModelSpec::trivial(),
        "burgers" => ModelSpec::burgers(u_max)?,
        "divergence" => ModelSpec::divergence_form(PowerDensity::quadratic(), Reaction::None, Flux::None)?,
        "adversarial" => ModelSpec::adversarial(e.or("model.kappa", 100.0)?)
            .map_err(|err| Error::config("model.kappa", err.to_string()))?,
        other => return Err(Error::config("model.name", format!("unknown model `{other}`"))),
    };

    if ["model.q", "model.a", "model.epsilon"].iter().any(|k| e.str(k).is_some()) {
        let q = e.or("model.q", m.density.exponent)?;
        let a = e.or("model.a", m.density.coefficient)?;
        let eps = e.or("model.epsilon", m.density.regularizer)?;
        m.density = PowerDensity::new(a, q, eps).map_err(|err| {
            let key = if !(q >= 2.0) { "model.q" } else if !(a > 0.0) { "model.a" } else { "model.epsilon" };
            Error::config(key, err.to_string())
        })?;
        if q > 2.0 && eps == 0.0 {
            return Err(Error::config("model.epsilon", "must be positive when q > 2"));
        }
    }
    if let Some(l) = e.get::<u8>("model.lambda")? {
        m = m.with_lambda(l).map_err(|err| Error::config("model.lambda", err.to_string()))?;
    }
    let rate = e.or("model.reaction_rate", 0.0)?;
    let source = e.or("model.reaction_source", 0.0)?;
    match e.str("model.reaction") {
        None => {}
        Some("none") => m.reaction = Reaction::None,
        Some("linear") => m.reaction = Reaction::Linear { rate, source },
        Some(v) => return Err(Error::config("model.reaction", format!("expected none or linear, got `{v}`"))),
    }
    match e.str("model.flux") {
        None => {}
        Some("none") => m.flux = Flux::None,
        Some("sine") => {
            m.flux = Flux::Sine {
                coeff: e.or("model.flux_coeff", 1.0)?,
            }
        }
        Some(v) => return Err(Error::config("model.flux", format!("expected none or sine, got `{v}`"))),
    }
    match e.str("model.scalar_flux") {
        None => {}
        Some("none") => m.scalar_flux = ScalarFlux::None,
        Some("burgers") => m.scalar_flux = ScalarFlux::TruncatedBurgers { u_max },
        Some(v) => {
            return Err(Error::config(
                "model.scalar_flux",
                format!("expected none or burgers, got `{v}`"),
            ))
        }
    }
    if e.str("model.u_max").is_some() {
        if let ScalarFlux::TruncatedBurgers { .. } = m.scalar_flux {
            m.scalar_flux = ScalarFlux::TruncatedBurgers { u_max };
        }
    }
    m.radius = e.positive("model.radius", m.radius)?;
    let o = &mut m.overrides;
    o.growth_c0 = e.overrides("constants.growth_c0")?.or(o.growth_c0);
    o.deriv_g = e.overrides("constants.deriv_g")?.or(o.deriv_g);
    o.monotone_g_hat = e.overrides("constants.monotone_g_hat")?.or(o.monotone_g_hat);
    o.positivity_c_tilde = e.overrides("constants.positivity_c_tilde")?.or(o.positivity_c_tilde);
    o.positivity_mu_bar = e.overrides("constants.positivity_mu_bar")?.or(o.positivity_mu_bar);
    o.convexity_c0 = e.overrides("constants.convexity_c0")?.or(o.convexity_c0);
    m.validate().map_err(|err| Error::config("model", err.to_string()))?;
    Ok(m)
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let path = PathBuf::from(p);
    if path.is_absolute() {
        path
    } else {
        base.join(path)
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let e = Entries::parse(text)?;
        let model = model_from(&e)?;

        let dimension = e.or("grid.dimension", 1usize)?;
        if !(1..=2).contains(&dimension) {
            return Err(Error::config("grid.dimension", "must be 1 or 2"));
        }
        let n = e.or("grid.N", 33usize)?;
        if n == 0 {
            return Err(Error::config("grid.N", "must be at least 1"));
        }
        let grid = SpaceGrid::new(dimension, n).map_err(|err| Error::config("grid.N", err.to_string()))?;
        let components = e.or("grid.components", 1usize)?;
        if components == 0 {
            return Err(Error::config("grid.components", "must be at least 1"));
        }

        let horizon = e.positive("time.T", 0.1)?;
        let intervals = e.or("time.M", 64usize)?;
        if intervals == 0 {
            return Err(Error::config("time.M", "must be at least 1"));
        }

        let initial = match e.str("initial.profile").unwrap_or("sin") {
            "sin" => InitialProfile::Sine,
            "bump" => InitialProfile::Bump,
            "custom" => {
                let p = e
                    .str("initial.path")
                    .ok_or_else(|| Error::config("initial.path", "required for a custom profile"))?;
                let path = resolve(base, p);
                if !path.is_file() {
                    return Err(Error::config("initial.path", format!("{} does not exist", path.display())));
                }
                InitialProfile::Custom(path)
            }
            other => {
                return Err(Error::config(
                    "initial.profile",
                    format!("expected sin, bump or custom, got `{other}`"),
                ))
            }
        };
        let amplitude: f64 = e.or("initial.amplitude", 1.0)?;
        if !amplitude.is_finite() {
            return Err(Error::config("initial.amplitude", "must be finite"));
        }

        let defaults = SolveOptions::default();
        let solve = SolveOptions {
            max_iters: e.or("solve.max_iters", defaults.max_iters)?,
            grad_tol: e.positive("solve.grad_tol", defaults.grad_tol)?,
            energy_tol: e.positive("solve.energy_tol", defaults.energy_tol)?,
            line_search: LineSearch {
                c1: e.positive("solve.c1", defaults.line_search.c1)?,
                backtrack: e.positive("solve.backtrack", defaults.line_search.backtrack)?,
                max_trials: e.or("solve.max_trials", defaults.line_search.max_trials)?,
            },
            use_lbfgs: e.bool("solve.use_lbfgs", defaults.use_lbfgs)?,
            memory: e.or("solve.memory", defaults.memory)?,
            seed: e.or("solve.seed", defaults.seed)?,
            init_noise: e.or("solve.init_noise", defaults.init_noise)?,
        };
        if solve.memory == 0 {
            return Err(Error::config("solve.memory", "must be at least 1"));
        }
        if !(solve.line_search.c1 < 1.0) {
            return Err(Error::config("solve.c1", "must be below 1"));
        }
        if !(solve.line_search.backtrack < 1.0) {
            return Err(Error::config("solve.backtrack", "must be below 1"));
        }
        if solve.line_search.max_trials == 0 {
            return Err(Error::config("solve.max_trials", "must be at least 1"));
        }
        if !(solve.init_noise >= 0.0 && solve.init_noise.is_finite()) {
            return Err(Error::config("solve.init_noise", "must be nonnegative"));
        }
        let certificate_tol = e.positive("solve.certificate_tol", 1e-6)?;
        let compare_baseline = e.bool("solve.compare_baseline", true)?;

        let sampler = SamplerConfig {
            samples: e.or("verify.samples", 10_000usize)?,
            seed: e.or("verify.seed", 0u64)?,
            horizon,
        };
        let conditions = match e.str("verify.conditions") {
            None | Some("all") => Condition::ALL.to_vec(),
            Some(list) => list
                .split(',')
                .map(|s| s.trim().parse().map_err(|err: Error| Error::config("verify.conditions", err.to_string())))
                .collect::<Result<_>>()?,
        };

        let outputs = resolve(base, e.str("outputs.dir").unwrap_or("outputs"));
        let node_count = grid.node_count();
        let profile_nodes = match e.str("outputs.profile_nodes") {
            None => {
                let picks = 5.min(node_count);
                (0..picks).map(|i| (2 * i + 1) * node_count / (2 * picks)).collect()
            }
            Some(list) => list
                .split(',')
                .map(|s| {
                    let v: usize = s
                        .trim()
                        .parse()
                        .map_err(|_| Error::config("outputs.profile_nodes", format!("cannot parse `{s}`")))?;
                    if v >= node_count {
                        return Err(Error::config(
                            "outputs.profile_nodes",
                            format!("node {v} out of range (grid has {node_count})"),
                        ));
                    }
                    Ok(v)
                })
                .collect::<Result<_>>()?,
        };

        Ok(Self {
            model,
            grid,
            components,
            horizon,
            intervals,
            initial,
            amplitude,
            solve,
            certificate_tol,
            compare_baseline,
            sampler,
            conditions,
            outputs,
            profile_nodes,
        })
    }

    pub fn evolution(&self) -> Result<Evolution> {
        Evolution::new(self.model.clone(), self.grid, self.components)
            .map_err(|err| Error::config("model", err.to_string()))
    }

    pub fn initial_field(&self) -> Result<Field> {
        let a = self.amplitude;
        let d = self.grid.dimension();
        match &self.initial {
            InitialProfile::Sine => Ok(Field::from_fn(self.grid, self.components, |x, _| {
                a * (0..d).map(|r| (PI * x[r]).sin()).product::<f64>()
            })),
            InitialProfile::Bump => Ok(Field::from_fn(self.grid, self.components, |x, _| {
                a * (0..d)
                    .map(|r| (1.0 - 16.0 * (x[r] - 0.5).powi(2)).max(0.0).powi(2))
                    .product::<f64>()
            })),
            InitialProfile::Custom(path) => {
                let file = fs::File::open(path)?;
                let rows = read_rows(BufReader::new(file), self.grid, self.components)
                    .map_err(|err| Error::config("initial.path", err.to_string()))?;
                let (_, field) = rows
                    .into_iter()
                    .next()
                    .ok_or_else(|| Error::config("initial.path", "file has no data rows"))?;
                Ok(field.scaled(a))
            }
        }
    }
}
