//! Flat `key = value` experiment files.
//!
//! ```text
//! # classical diffusion, supercritical mass
//! alpha = 2
//! gamma = 0
//! grid.n = 256
//! grid.box_length = 20pi
//! t_end = 1
//! initial.kind = gaussian
//! initial.mass = 16pi
//! initial.width = 0.5
//! initial.center = 0, 0
//! probe.center = 0, 0
//! probe.radius = 2
//! probe.epsilon = 0.3
//! sweep.gamma = 0, 1, 100
//! ```
//!
//! Numbers accept a `pi` suffix (`16pi`, `0.5pi`, `pi`). Each `probe.*` key
//! fills the current probe block; repeating a key that the block already has
//! starts a new block. `sweep.<key>` lines list comma-separated values for a
//! documented key and define the axes of a cross-product sweep.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::dynamics::SimConfig;
use crate::error::{Error, Result};
use crate::field::{make_gaussian, GridSpec, Point, ScalarField, Snapshot};
use crate::moments::BumpProbe;

/// Scalar keys accepted at the top level (and as sweep axes).
pub const KEYS: &[&str] = &[
    "alpha",
    "gamma",
    "grid.n",
    "grid.box_length",
    "t_end",
    "dt_initial",
    "dt_min",
    "cfl_safety",
    "blowup_linf_factor",
    "dealias",
    "diagnostic_stride",
    "nonlinearity",
    "tail_radius_fraction",
    "tail_tolerance",
    "resolution_tolerance",
    "max_steps",
    "initial.kind",
    "initial.mass",
    "initial.width",
    "initial.center",
    "initial.count",
    "initial.spread",
    "initial.seed",
    "initial.path",
];

const PROBE_KEYS: &[&str] = &["center", "radius", "epsilon"];

/// Sweep control keys (`sweep.workers` etc.), not axes.
const SWEEP_CONTROL: &[&str] = &["workers", "seed", "max_cells", "output"];

/// Parsed but not yet interpreted configuration document.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigDoc {
    pub values: BTreeMap<String, String>,
    pub probes: Vec<BTreeMap<String, String>>,
    /// Sweep axes in file order.
    pub axes: Vec<(String, Vec<String>)>,
    pub sweep_control: BTreeMap<String, String>,
}

fn config_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("line {line}: {msg}"))
}

impl ConfigDoc {
    pub fn parse(text: &str) -> Result<Self> {
        let mut doc = ConfigDoc::default();
        let mut current: Option<BTreeMap<String, String>> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                config_err(line_no, format!("expected `key = value`, got `{line}`"))
            })?;
            let key = key.trim();
            let value = value.trim().to_string();
            if value.is_empty() {
                return Err(config_err(line_no, format!("empty value for `{key}`")));
            }
            if let Some(field) = key.strip_prefix("probe.") {
                if !PROBE_KEYS.contains(&field) {
                    return Err(config_err(line_no, format!("unknown probe key `{key}`")));
                }
                let block = current.get_or_insert_with(BTreeMap::new);
                if block.contains_key(field) {
                    doc.probes.push(std::mem::take(block));
                }
                block.insert(field.to_string(), value);
            } else if let Some(axis) = key.strip_prefix("sweep.") {
                if SWEEP_CONTROL.contains(&axis) {
                    doc.sweep_control.insert(axis.to_string(), value);
                    continue;
                }
                if !KEYS.contains(&axis) {
                    return Err(config_err(
                        line_no,
                        format!("sweep over unknown key `{axis}`"),
                    ));
                }
                if doc.axes.iter().any(|(k, _)| k == axis) {
                    return Err(config_err(
                        line_no,
                        format!("duplicate sweep axis `{axis}`"),
                    ));
                }
                let vals = split_list(&value, axis);
                if vals.is_empty() {
                    return Err(config_err(
                        line_no,
                        format!("sweep axis `{axis}` has no values"),
                    ));
                }
                doc.axes.push((axis.to_string(), vals));
            } else {
                if !KEYS.contains(&key) {
                    return Err(config_err(line_no, format!("unknown key `{key}`")));
                }
                if doc.values.insert(key.to_string(), value).is_some() {
                    return Err(config_err(line_no, format!("duplicate key `{key}`")));
                }
            }
        }
        if let Some(block) = current {
            if !block.is_empty() {
                doc.probes.push(block);
            }
        }
        Ok(doc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Copy with `key` overridden (used for sweep cells).
    pub fn with_value(&self, key: &str, value: &str) -> Self {
        let mut doc = self.clone();
        doc.values.insert(key.to_string(), value.to_string());
        doc
    }

    /// Canonical text of the run-defining content: sorted scalar keys, then
    /// probe blocks in order. Sweep axes and control keys are excluded.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            out.push_str(&format!("{k} = {}\n", canonical_value(v)));
        }
        for p in &self.probes {
            for (k, v) in p {
                out.push_str(&format!("probe.{k} = {}\n", canonical_value(v)));
            }
        }
        out
    }

    /// SHA-256 of [`ConfigDoc::canonical`], hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn number(&self, key: &str) -> Result<Option<f64>> {
        self.get(key).map(|v| parse_number(v, key)).transpose()
    }

    fn required(&self, key: &str) -> Result<f64> {
        self.number(key)?
            .ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
    }

    /// Interprets the document as a single experiment.
    pub fn experiment(&self) -> Result<Experiment> {
        let n = self.required("grid.n")?;
        if n.fract() != 0.0 || n < 0.0 {
            return Err(Error::Config(format!("grid.n must be an integer, got {n}")));
        }
        let grid = GridSpec::new(n as usize, self.required("grid.box_length")?)?;
        let mut sim = SimConfig::new(
            self.required("alpha")?,
            self.number("gamma")?.unwrap_or(0.0),
            grid,
        );
        let float_keys: [(&str, &mut f64); 8] = [
            ("t_end", &mut sim.t_end),
            ("dt_initial", &mut sim.dt_initial),
            ("dt_min", &mut sim.dt_min),
            ("cfl_safety", &mut sim.cfl_safety),
            ("blowup_linf_factor", &mut sim.blowup_linf_factor),
            ("tail_radius_fraction", &mut sim.tail_radius_fraction),
            ("tail_tolerance", &mut sim.tail_tolerance),
            ("resolution_tolerance", &mut sim.resolution_tolerance),
        ];
        for (key, slot) in float_keys {
            if let Some(v) = self.number(key)? {
                *slot = v;
            }
        }
        if let Some(v) = self.get("dealias") {
            sim.dealias = parse_bool(v, "dealias")?;
        }
        if let Some(v) = self.get("nonlinearity") {
            sim.nonlinearity = parse_bool(v, "nonlinearity")?;
        }
        if let Some(v) = self.get("diagnostic_stride") {
            sim.diagnostic_stride = parse_count(v, "diagnostic_stride")?;
        }
        if let Some(v) = self.get("max_steps") {
            sim.max_steps = parse_count(v, "max_steps")?;
        }
        for block in &self.probes {
            let get = |k: &str| {
                block
                    .get(k)
                    .ok_or_else(|| Error::Config(format!("probe block missing `probe.{k}`")))
            };
            let center = parse_point(get("center")?, "probe.center")?;
            let radius = parse_number(get("radius")?, "probe.radius")?;
            let epsilon = parse_number(get("epsilon")?, "probe.epsilon")?;
            sim.moment_probes.push(
                BumpProbe::new(center, radius, epsilon)
                    .map_err(|e| Error::Config(e.to_string()))?,
            );
        }
        sim.validate().map_err(|e| Error::Config(e.to_string()))?;
        let initial = self.initial()?;
        Ok(Experiment { sim, initial })
    }

    fn initial(&self) -> Result<InitialData> {
        let kind = self.get("initial.kind").unwrap_or("gaussian");
        let center = match self.get("initial.center") {
            Some(v) => parse_point(v, "initial.center")?,
            None => [0.0, 0.0],
        };
        Ok(match kind {
            "zero" => InitialData::Zero,
            "gaussian" => InitialData::Gaussian {
                mass: self.required("initial.mass")?,
                width: self.required("initial.width")?,
                center,
            },
            "bumps" => InitialData::Bumps {
                mass: self.required("initial.mass")?,
                width: self.required("initial.width")?,
                count: parse_count(self.get("initial.count").unwrap_or("4"), "initial.count")?,
                spread: self.number("initial.spread")?.unwrap_or(1.0),
                seed: parse_count(self.get("initial.seed").unwrap_or("0"), "initial.seed")? as u64,
                center,
            },
            "snapshot" => InitialData::Snapshot {
                path: PathBuf::from(self.get("initial.path").ok_or_else(|| {
                    Error::Config("initial.kind = snapshot needs initial.path".into())
                })?),
            },
            other => return Err(Error::Config(format!("unknown initial.kind `{other}`"))),
        })
    }
}

fn canonical_value(v: &str) -> String {
    v.split(',').map(str::trim).collect::<Vec<_>>().join(",")
}

fn split_list(value: &str, _key: &str) -> Vec<String> {
    // Points inside a list are written `x;y` or `(x, y)`.
    let mut out = Vec::new();
    let mut depth = 0;
    let mut cur = String::new();
    for ch in value.chars() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(cur.trim().to_string());
                cur.clear();
                continue;
            }
            _ => {}
        }
        cur.push(ch);
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    out.into_iter()
        .map(|v| {
            v.trim_start_matches('(')
                .trim_end_matches(')')
                .replace(';', ",")
        })
        .filter(|v| !v.is_empty())
        .collect()
}

/// Parses a real number with an optional `pi` factor: `3`, `1e-3`, `16pi`,
/// `pi`, `-0.5pi`.
pub fn parse_number(text: &str, key: &str) -> Result<f64> {
    let t = text.trim();
    let bad = || Error::Config(format!("`{key}`: cannot parse `{text}` as a number"));
    let value = if let Some(coef) = t.strip_suffix("pi") {
        let coef = coef.trim().trim_end_matches('*').trim();
        let c = match coef {
            "" => 1.0,
            "-" => -1.0,
            c => c.parse::<f64>().map_err(|_| bad())?,
        };
        c * PI
    } else {
        t.parse::<f64>().map_err(|_| bad())?
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(bad())
    }
}

fn parse_bool(text: &str, key: &str) -> Result<bool> {
    match text.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(Error::Config(format!(
            "`{key}`: expected a boolean, got `{other}`"
        ))),
    }
}

fn parse_count(text: &str, key: &str) -> Result<usize> {
    let v = parse_number(text, key)?;
    if v >= 0.0 && v.fract() == 0.0 && v < 1e15 {
        Ok(v as usize)
    } else {
        Err(Error::Config(format!(
            "`{key}`: expected a non-negative integer, got `{text}`"
        )))
    }
}

fn parse_point(text: &str, key: &str) -> Result<Point> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 2 {
        return Err(Error::Config(format!(
            "`{key}`: expected `x, y`, got `{text}`"
        )));
    }
    Ok([parse_number(parts[0], key)?, parse_number(parts[1], key)?])
}

/// Initial density.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    Zero,
    Gaussian {
        mass: f64,
        width: f64,
        center: Point,
    },
    /// `count` equal Gaussians with centers drawn uniformly from the disc of
    /// radius `spread` around `center`.
    Bumps {
        mass: f64,
        width: f64,
        count: usize,
        spread: f64,
        seed: u64,
        center: Point,
    },
    Snapshot {
        path: PathBuf,
    },
}

impl InitialData {
    pub fn build(&self, grid: GridSpec) -> Result<ScalarField> {
        match self {
            InitialData::Zero => Ok(ScalarField::zeros(grid)),
            InitialData::Gaussian {
                mass,
                width,
                center,
            } => make_gaussian(grid, *mass, *center, *width),
            InitialData::Bumps {
                mass,
                width,
                count,
                spread,
                seed,
                center,
            } => {
                if *count == 0 {
                    return Err(Error::Config("initial.count must be positive".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut total = ScalarField::zeros(grid);
                for _ in 0..*count {
                    let r = spread * rng.gen::<f64>().sqrt();
                    let phi = 2.0 * PI * rng.gen::<f64>();
                    let c = [center[0] + r * phi.cos(), center[1] + r * phi.sin()];
                    let bump = make_gaussian(grid, mass / *count as f64, c, *width)?;
                    total = total.add(&bump)?;
                }
                Ok(total)
            }
            InitialData::Snapshot { path } => {
                let snap =
                    Snapshot::read_from(std::io::BufReader::new(std::fs::File::open(path)?))?;
                if snap.field.grid() != &grid {
                    return Err(Error::GridMismatch);
                }
                Ok(snap.field)
            }
        }
    }
}

/// A single interpreted experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub sim: SimConfig,
    pub initial: InitialData,
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "\
# comment line
alpha = 2
gamma = 0.01   # trailing comment
grid.n = 64
grid.box_length = 8pi
t_end = 0.5
initial.kind = gaussian
initial.mass = 16pi
initial.width = 1.0
initial.center = 0, 0
probe.center = 0, 0
probe.radius = 2
probe.epsilon = 0.3
probe.center = 1, 0
probe.radius = 1
probe.epsilon = 0.1
sweep.gamma = 0.01, 1, 10
sweep.initial.mass = 4pi, 16pi
sweep.workers = 2
";

    #[test]
    fn parses_numbers_with_pi() {
        assert_eq!(parse_number("pi", "x").unwrap(), PI);
        assert_eq!(parse_number("16pi", "x").unwrap(), 16.0 * PI);
        assert_eq!(parse_number("0.5 pi", "x").unwrap(), 0.5 * PI);
        assert_eq!(parse_number("-pi", "x").unwrap(), -PI);
        assert_eq!(parse_number("1e-3", "x").unwrap(), 1e-3);
        assert!(parse_number("abc", "x").is_err());
        assert!(parse_number("inf", "x").is_err());
    }

    #[test]
    fn parses_full_document() {
        let doc = ConfigDoc::parse(BASE).unwrap();
        assert_eq!(doc.probes.len(), 2);
        assert_eq!(doc.axes.len(), 2);
        assert_eq!(doc.axes[0].1, vec!["0.01", "1", "10"]);
        assert_eq!(doc.sweep_control["workers"], "2");
        let exp = doc.experiment().unwrap();
        assert_eq!(exp.sim.grid.n(), 64);
        assert!((exp.sim.grid.box_length() - 8.0 * PI).abs() < 1e-15);
        assert_eq!(exp.sim.moment_probes.len(), 2);
        assert_eq!(exp.sim.moment_probes[1].center, [1.0, 0.0]);
        assert!(matches!(exp.initial, InitialData::Gaussian { .. }));
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        assert!(ConfigDoc::parse("alpah = 2").is_err());
        assert!(ConfigDoc::parse("alpha = 2\nalpha = 1").is_err());
        assert!(ConfigDoc::parse("sweep.bogus = 1, 2").is_err());
        assert!(ConfigDoc::parse("alpha 2").is_err());
        let doc = ConfigDoc::parse("alpha = 2\ngrid.n = 64").unwrap();
        assert!(matches!(doc.experiment(), Err(Error::Config(_))));
    }

    #[test]
    fn hash_ignores_key_order_and_sweep_lines() {
        let a = ConfigDoc::parse("alpha = 2\ngamma = 1\ngrid.n = 64").unwrap();
        let b = ConfigDoc::parse("grid.n = 64\ngamma = 1\n\nalpha = 2\nsweep.workers = 3").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let c = a.with_value("gamma", "2");
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn bumps_are_seeded() {
        let grid = GridSpec::new(64, 20.0).unwrap();
        let spec = |seed| InitialData::Bumps {
            mass: 3.0,
            width: 0.8,
            count: 3,
            spread: 2.0,
            seed,
            center: [0.0, 0.0],
        };
        let a = spec(5).build(grid).unwrap();
        let b = spec(5).build(grid).unwrap();
        let c = spec(6).build(grid).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!((a.total_mass() - 3.0).abs() < 1e-10);
    }
}
