//! Experiment config parser.
//!
//! A config is a list of `[section]` headers, each followed by `key = value`
//! lines. `#` starts a comment. Every key is known in advance; anything else
//! is reported with its line number.
//!
//! ```text
//! [instance]
//! preset = table1            # five servers, three job classes
//! class.2.arrival_rate = 3.2 # per-class overrides
//!
//! [policy]
//! kind = dpp_ratio           # or stationary
//! solver = enumerate         # enumerate | bisection | hull
//!
//! [run]
//! v = 1, 10, 100
//! slots = 1e6
//! seeds = 1 2 3
//! diagnostics = check drift
//! trajectory = true
//! output = results
//! ```
//!
//! Instead of a preset, systems can be written out by hand. `[external]`
//! lists one component of `d[t]` per constraint and each `[system]` section
//! declares one action per `action` line:
//!
//! ```text
//! [external]
//! arrival.1 = poisson 2 cap 20 negate
//!
//! [system]
//! count = 2
//! residual_bound = 40
//! action = geometric 3 ; fixed 1 end_metric 1 uniform 1 5 scale -1 ; spread penalty 4
//! action = fixed 2 penalty 1
//! ```
//!
//! A clause starting with a length (`fixed N`, `uniform LO HI`, `geometric
//! MEAN`) is a phase and accepts `penalty X`, `metric L X`, `end_penalty A`
//! and `end_metric L A`, where `A` is a number or `uniform LO HI [scale S]`.
//! A `spread` clause spreads `penalty X` and `metric L X` totals evenly over
//! the whole frame. Metric indices start at 1.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::PathBuf;

use renewal_dpp::{
    build_instance, ActionSpec, AmountDist, ArrivalDist, ArrivalSpec, ExternalProcess, FrameSpec, LengthDist,
    PhaseSpec, RenewalSystemModel, SchedulingInstance, SlotBounds, SolverKind, StationaryLp,
    DEFAULT_BISECTION_TOL,
};

pub const DEFAULT_V_SWEEP: [f64; 8] = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0];
pub const DEFAULT_SLOTS: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// 1-based; 0 when the problem is not tied to a line.
    pub line: usize,
    pub key: Option<String>,
    pub reason: String,
}

impl ConfigError {
    fn at(line: usize, key: &str, reason: impl Into<String>) -> Self {
        Self { line, key: Some(key.to_string()), reason: reason.into() }
    }

    fn line(line: usize, reason: impl Into<String>) -> Self {
        Self { line, key: None, reason: reason.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: ", self.line)?;
        }
        if let Some(key) = &self.key {
            write!(f, "{key}: ")?;
        }
        f.write_str(&self.reason)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyKind {
    DppRatio { solver: SolverKind },
    /// Explicit per-system frame probabilities, or the LP optimum's when `None`.
    Stationary { weights: Option<Vec<Vec<f64>>> },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Diagnostics {
    /// Key-feature and sample-path assertions; violations fail the run.
    pub check: bool,
    /// Per-frame drift excess against the LP reference point.
    pub drift: bool,
}

/// A distinct system definition, before replication.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemGroup {
    pub name: String,
    pub count: usize,
    pub model: RenewalSystemModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    /// `Some` for preset instances, with overrides applied.
    pub preset: Option<SchedulingInstance>,
    pub groups: Vec<SystemGroup>,
    pub models: Vec<RenewalSystemModel>,
    pub external: ExternalProcess,
    pub lp: StationaryLp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub instance: Instance,
    pub policy: PolicyKind,
    pub v: Vec<f64>,
    pub slots: u64,
    pub seeds: Vec<u64>,
    pub diagnostics: Diagnostics,
    pub trajectory: bool,
    pub output: Option<PathBuf>,
}

#[derive(Debug)]
struct Entry {
    line: usize,
    key: String,
    value: String,
}

#[derive(Debug)]
struct Section {
    name: String,
    line: usize,
    entries: Vec<Entry>,
}

fn split_sections(text: &str, errors: &mut Vec<ConfigError>) -> Vec<Section> {
    let mut sections: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            match rest.strip_suffix(']') {
                Some(name) if !name.trim().is_empty() => {
                    sections.push(Section { name: name.trim().to_string(), line, entries: Vec::new() })
                }
                _ => errors.push(ConfigError::line(line, format!("malformed section header `{content}`"))),
            }
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            errors.push(ConfigError::line(line, format!("expected `key = value`, found `{content}`")));
            continue;
        };
        let key = key.trim();
        if key.is_empty() {
            errors.push(ConfigError::line(line, "missing key before `=`"));
            continue;
        }
        match sections.last_mut() {
            Some(s) => s.entries.push(Entry { line, key: key.to_string(), value: value.trim().to_string() }),
            None => errors.push(ConfigError::at(line, key, "key outside of any section")),
        }
    }
    sections
}

fn parse_f64(e: &Entry) -> Result<f64, ConfigError> {
    parse_number(&e.value).ok_or_else(|| ConfigError::at(e.line, &e.key, format!("`{}` is not a number", e.value)))
}

fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim().replace('_', "");
    if let Some((base, exp)) = s.split_once('^') {
        let base: f64 = base.trim().parse().ok()?;
        let exp: i32 = exp.trim().parse().ok()?;
        return Some(base.powi(exp));
    }
    s.parse::<f64>().ok().filter(|x| x.is_finite())
}

fn parse_count(s: &str) -> Option<u64> {
    let x = parse_number(s)?;
    (x >= 0.0 && x.fract() == 0.0 && x <= u64::MAX as f64).then_some(x as u64)
}

fn list_items(s: &str) -> Vec<&str> {
    let s = s.trim();
    let s = s.strip_prefix('[').and_then(|r| r.strip_suffix(']')).unwrap_or(s);
    s.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()).collect()
}

fn parse_bool(e: &Entry) -> Result<bool, ConfigError> {
    match e.value.as_str() {
        "true" | "yes" | "on" => Ok(true),
        "false" | "no" | "off" => Ok(false),
        other => Err(ConfigError::at(e.line, &e.key, format!("expected true or false, found `{other}`"))),
    }
}

/// Rejects repeated keys, except those listed in `repeatable`.
fn check_duplicates(section: &Section, repeatable: &[&str], errors: &mut Vec<ConfigError>) {
    let mut seen = HashSet::new();
    for e in &section.entries {
        if !repeatable.contains(&e.key.as_str()) && !seen.insert(e.key.as_str()) {
            errors.push(ConfigError::at(e.line, &e.key, "duplicate key"));
        }
    }
}

fn unknown(e: &Entry, section: &str) -> ConfigError {
    ConfigError::at(e.line, &e.key, format!("unknown key in [{section}]"))
}

struct InstanceSection {
    line: usize,
    preset: Option<(usize, String)>,
    entries: Vec<Entry>,
}

fn apply_preset_overrides(inst: &mut SchedulingInstance, entries: &[Entry], errors: &mut Vec<ConfigError>) {
    for e in entries {
        let result = (|| -> Result<(), ConfigError> {
            match e.key.as_str() {
                "servers" => {
                    inst.n_servers = parse_count(&e.value)
                        .filter(|n| *n >= 1)
                        .ok_or_else(|| ConfigError::at(e.line, &e.key, "expected a positive integer"))?
                        as usize
                }
                "idle_power" => inst.idle_power = parse_f64(e)?,
                "cap_sigmas" => inst.cap_sigmas = parse_f64(e)?,
                "residual_bound" => inst.residual_bound = parse_f64(e)?,
                key => {
                    let parts: Vec<&str> = key.split('.').collect();
                    let [_, index, field] = parts[..] else { return Err(unknown(e, "instance")) };
                    if parts[0] != "class" {
                        return Err(unknown(e, "instance"));
                    }
                    let classes = inst.classes.len();
                    let class = index
                        .parse::<usize>()
                        .ok()
                        .filter(|k| (1..=classes).contains(k))
                        .ok_or_else(|| ConfigError::at(e.line, key, format!("class index must be in 1..={classes}")))?;
                    let c = &mut inst.classes[class - 1];
                    let int = || {
                        parse_number(&e.value)
                            .filter(|x| x.fract() == 0.0)
                            .map(|x| x as i64)
                            .ok_or_else(|| ConfigError::at(e.line, key, "expected an integer"))
                    };
                    match field {
                        "arrival_rate" => c.arrival_rate = parse_f64(e)?,
                        "service_mean" => c.service_mean = parse_f64(e)?,
                        "service_lo" => c.service_count.0 = int()?,
                        "service_hi" => c.service_count.1 = int()?,
                        "energy" => c.energy = parse_f64(e)?,
                        "idle_mean" => c.idle_mean = parse_f64(e)?,
                        _ => return Err(unknown(e, "instance")),
                    }
                }
            }
            Ok(())
        })();
        if let Err(err) = result {
            errors.push(err);
        }
    }
}

fn parse_arrival(e: &Entry) -> Result<ArrivalSpec, ConfigError> {
    let err = |reason: String| ConfigError::at(e.line, &e.key, reason);
    let tokens: Vec<&str> = e.value.split_whitespace().collect();
    let num = |i: usize| -> Result<f64, ConfigError> {
        tokens
            .get(i)
            .and_then(|t| parse_number(t))
            .ok_or_else(|| err(format!("expected a number after `{}`", tokens[i - 1])))
    };
    let (mut dist, mut next) = match tokens.first().copied() {
        Some("fixed") => (ArrivalDist::Deterministic(num(1)?), 2),
        Some("uniform") => {
            let (lo, hi) = (num(1)?, num(2)?);
            if lo.fract() != 0.0 || hi.fract() != 0.0 || lo > hi {
                return Err(err("uniform bounds must be integers with lo <= hi".into()));
            }
            (ArrivalDist::UniformInt { lo: lo as i64, hi: hi as i64 }, 3)
        }
        Some("poisson") => {
            let mean = num(1)?;
            if !(mean > 0.0) {
                return Err(err("poisson mean must be positive".into()));
            }
            (ArrivalDist::poisson(mean), 2)
        }
        Some(other) => return Err(err(format!("unknown arrival distribution `{other}`"))),
        None => return Err(err("missing arrival distribution".into())),
    };
    let mut negate = false;
    while next < tokens.len() {
        match tokens[next] {
            "negate" => {
                negate = true;
                next += 1;
            }
            "cap" => {
                let cap = num(next + 1)?;
                match &mut dist {
                    ArrivalDist::Poisson { cap: c, .. } => *c = cap,
                    _ => return Err(err("`cap` applies only to poisson".into())),
                }
                next += 2;
            }
            other => return Err(err(format!("unexpected `{other}`"))),
        }
    }
    Ok(if negate { ArrivalSpec::negated(dist) } else { ArrivalSpec::new(dist) })
}

/// Token cursor over one clause of an action definition.
struct Clause<'a> {
    tokens: Vec<&'a str>,
    pos: usize,
}

impl<'a> Clause<'a> {
    fn next(&mut self) -> Option<&'a str> {
        let t = self.tokens.get(self.pos).copied();
        self.pos += 1;
        t
    }

    fn peek(&self) -> Option<&'a str> {
        self.tokens.get(self.pos).copied()
    }

    fn number(&mut self, what: &str) -> Result<f64, String> {
        let t = self.next().ok_or_else(|| format!("missing {what}"))?;
        parse_number(t).ok_or_else(|| format!("{what} `{t}` is not a number"))
    }

    fn integer(&mut self, what: &str) -> Result<i64, String> {
        let x = self.number(what)?;
        if x.fract() == 0.0 {
            Ok(x as i64)
        } else {
            Err(format!("{what} must be an integer"))
        }
    }

    fn metric(&mut self, dim: usize) -> Result<usize, String> {
        let l = self.integer("metric index")?;
        if l >= 1 && l as usize <= dim {
            Ok(l as usize - 1)
        } else {
            Err(format!("metric index {l} outside 1..={dim}"))
        }
    }

    fn amount(&mut self) -> Result<AmountDist, String> {
        if self.peek() == Some("uniform") {
            self.pos += 1;
            let lo = self.integer("uniform lower bound")?;
            let hi = self.integer("uniform upper bound")?;
            let scale = if self.peek() == Some("scale") {
                self.pos += 1;
                self.number("scale")?
            } else {
                1.0
            };
            Ok(AmountDist::UniformInt { lo, hi, scale })
        } else {
            Ok(AmountDist::Constant(self.number("amount")?))
        }
    }
}

fn parse_action(text: &str, dim: usize) -> Result<FrameSpec, String> {
    let mut phases = Vec::new();
    let mut spread_penalty = 0.0;
    let mut spread_metrics = vec![0.0; dim];
    for raw in text.split(';') {
        let mut c = Clause { tokens: raw.split_whitespace().collect(), pos: 0 };
        let head = c.next().ok_or("empty clause")?;
        if head == "spread" {
            while let Some(attr) = c.next() {
                match attr {
                    "penalty" => spread_penalty = c.number("penalty")?,
                    "metric" => {
                        let l = c.metric(dim)?;
                        spread_metrics[l] = c.number("metric total")?;
                    }
                    other => return Err(format!("unknown spread attribute `{other}`")),
                }
            }
            continue;
        }
        let length = match head {
            "fixed" => {
                let k = c.integer("length")?;
                LengthDist::Deterministic(u64::try_from(k).map_err(|_| "length must be positive")?)
            }
            "uniform" => {
                let lo = c.integer("lower length")?;
                let hi = c.integer("upper length")?;
                let lo = u64::try_from(lo).map_err(|_| "length must be positive")?;
                let hi = u64::try_from(hi).map_err(|_| "length must be positive")?;
                LengthDist::UniformInt { lo, hi }
            }
            "geometric" => LengthDist::Geometric { mean: c.number("mean length")? },
            other => return Err(format!("clause must start with a length or `spread`, found `{other}`")),
        };
        let mut phase = PhaseSpec::new(length, dim);
        while let Some(attr) = c.next() {
            match attr {
                "penalty" => phase.slot_penalty = c.number("penalty")?,
                "metric" => {
                    let l = c.metric(dim)?;
                    phase.slot_metrics[l] = c.number("metric")?;
                }
                "end_penalty" => phase.end_penalty = c.amount()?,
                "end_metric" => {
                    let l = c.metric(dim)?;
                    phase.end_metrics[l] = c.amount()?;
                }
                other => return Err(format!("unknown phase attribute `{other}`")),
            }
        }
        phases.push(phase);
    }
    if phases.is_empty() {
        return Err("an action needs at least one phase".into());
    }
    let frame = FrameSpec::new(phases, dim).with_spread_penalty(spread_penalty).with_spread_metrics(spread_metrics);
    frame.validate().map_err(|e| e.to_string())?;
    Ok(frame)
}

fn parse_system(section: &Section, index: usize, dim: usize, errors: &mut Vec<ConfigError>) -> Option<SystemGroup> {
    check_duplicates(section, &["action"], errors);
    let before = errors.len();
    let mut name = format!("system{}", index + 1);
    let mut count = 1usize;
    let mut residual_bound = None;
    let mut y_max = None;
    let mut z_max = None;
    let mut actions = Vec::new();
    for e in &section.entries {
        let result = (|| -> Result<(), ConfigError> {
            match e.key.as_str() {
                "name" => name = e.value.clone(),
                "count" => {
                    count = parse_count(&e.value)
                        .filter(|n| *n >= 1)
                        .ok_or_else(|| ConfigError::at(e.line, &e.key, "expected a positive integer"))?
                        as usize
                }
                "residual_bound" => residual_bound = Some(parse_f64(e)?),
                "y_max" => y_max = Some(parse_f64(e)?),
                "z_max" => z_max = Some(parse_f64(e)?),
                "action" => {
                    let frame = parse_action(&e.value, dim).map_err(|r| ConfigError::at(e.line, &e.key, r))?;
                    actions.push(ActionSpec::from_frame(frame));
                }
                _ => return Err(unknown(e, "system")),
            }
            Ok(())
        })();
        if let Err(err) = result {
            errors.push(err);
        }
    }
    if !section.entries.iter().any(|e| e.key == "action") {
        errors.push(ConfigError::line(section.line, "[system] declares no action"));
    }
    let Some(residual_bound) = residual_bound else {
        errors.push(ConfigError::at(section.line, "residual_bound", "missing in [system]"));
        return None;
    };
    if errors.len() > before {
        return None;
    }
    let derived = actions
        .iter()
        .map(|a| a.frame.slot_bounds())
        .fold(SlotBounds { y_max: 0.0, z_max: 0.0 }, SlotBounds::join);
    let bounds = SlotBounds { y_max: y_max.unwrap_or(derived.y_max), z_max: z_max.unwrap_or(derived.z_max) };
    match RenewalSystemModel::new(actions, bounds, residual_bound) {
        Ok(model) => Some(SystemGroup { name, count, model }),
        Err(e) => {
            errors.push(ConfigError::line(section.line, e.to_string()));
            None
        }
    }
}

fn parse_policy(section: &Section, errors: &mut Vec<ConfigError>) -> (PolicyKind, Option<(usize, BTreeMap<usize, Vec<f64>>)>) {
    check_duplicates(section, &[], errors);
    let mut kind = "dpp_ratio".to_string();
    let mut solver = None;
    let mut tol = None;
    let mut weights = BTreeMap::new();
    for e in &section.entries {
        match e.key.as_str() {
            "kind" => match e.value.as_str() {
                "dpp_ratio" | "stationary" => kind = e.value.clone(),
                other => errors.push(ConfigError::at(e.line, &e.key, format!("unknown policy `{other}`"))),
            },
            "solver" => match e.value.as_str() {
                "enumerate" | "bisection" | "hull" => solver = Some((e.line, e.value.clone())),
                other => errors.push(ConfigError::at(e.line, &e.key, format!("unknown solver `{other}`"))),
            },
            "tol" => match parse_f64(e) {
                Ok(t) if t > 0.0 => tol = Some((e.line, t)),
                Ok(_) => errors.push(ConfigError::at(e.line, &e.key, "tolerance must be positive")),
                Err(err) => errors.push(err),
            },
            key if key.starts_with("weights.") => {
                let index = key["weights.".len()..].parse::<usize>().ok().filter(|n| *n >= 1);
                let values: Option<Vec<f64>> = list_items(&e.value).into_iter().map(parse_number).collect();
                match (index, values) {
                    (Some(n), Some(w)) => {
                        weights.insert(n - 1, w);
                    }
                    (None, _) => errors.push(ConfigError::at(e.line, key, "system index must be a positive integer")),
                    (_, None) => errors.push(ConfigError::at(e.line, key, "expected a list of numbers")),
                }
            }
            _ => errors.push(unknown(e, "policy")),
        }
    }
    if kind == "stationary" {
        if let Some((line, _)) = solver {
            errors.push(ConfigError::at(line, "solver", "only used by the dpp_ratio policy"));
        }
        let explicit = (!weights.is_empty()).then_some((section.line, weights));
        (PolicyKind::Stationary { weights: None }, explicit)
    } else {
        if let Some(e) = section.entries.iter().find(|e| e.key.starts_with("weights.")) {
            errors.push(ConfigError::at(e.line, &e.key, "only used by the stationary policy"));
        }
        let solver = match solver.as_ref().map(|(_, s)| s.as_str()) {
            Some("bisection") => SolverKind::Bisection { tol: tol.map_or(DEFAULT_BISECTION_TOL, |(_, t)| t) },
            Some("hull") => SolverKind::HullVertices,
            _ => SolverKind::Enumerate,
        };
        if let (Some((line, _)), false) = (tol, matches!(solver, SolverKind::Bisection { .. })) {
            errors.push(ConfigError::at(line, "tol", "only used by the bisection solver"));
        }
        (PolicyKind::DppRatio { solver }, None)
    }
}

struct RunSection {
    v: Vec<f64>,
    slots: u64,
    seeds: Vec<u64>,
    diagnostics: Diagnostics,
    trajectory: bool,
    output: Option<PathBuf>,
}

fn parse_run(section: Option<&Section>, errors: &mut Vec<ConfigError>) -> RunSection {
    let mut run = RunSection {
        v: DEFAULT_V_SWEEP.to_vec(),
        slots: DEFAULT_SLOTS,
        seeds: vec![1],
        diagnostics: Diagnostics::default(),
        trajectory: false,
        output: None,
    };
    let Some(section) = section else { return run };
    check_duplicates(section, &[], errors);
    for e in &section.entries {
        match e.key.as_str() {
            "v" => {
                let items = list_items(&e.value);
                if items.is_empty() {
                    errors.push(ConfigError::at(e.line, &e.key, "empty V list"));
                }
                run.v.clear();
                for item in items {
                    match parse_number(item) {
                        Some(v) if v > 0.0 => run.v.push(v),
                        Some(_) => errors.push(ConfigError::at(e.line, &e.key, "V must be positive")),
                        None => errors.push(ConfigError::at(e.line, &e.key, format!("`{item}` is not a number"))),
                    }
                }
            }
            "slots" => match parse_count(&e.value) {
                Some(n) if n >= 1 => run.slots = n,
                _ => errors.push(ConfigError::at(e.line, &e.key, "slots must be a positive integer")),
            },
            "seeds" | "seed" => {
                let items = list_items(&e.value);
                if items.is_empty() {
                    errors.push(ConfigError::at(e.line, &e.key, "at least one seed is required"));
                }
                run.seeds.clear();
                for item in items {
                    match item.parse::<u64>() {
                        Ok(s) => run.seeds.push(s),
                        Err(_) => errors.push(ConfigError::at(e.line, &e.key, format!("`{item}` is not a seed"))),
                    }
                }
            }
            "diagnostics" => {
                for item in list_items(&e.value) {
                    match item {
                        "check" => run.diagnostics.check = true,
                        "drift" => run.diagnostics.drift = true,
                        "none" => {}
                        other => errors.push(ConfigError::at(e.line, &e.key, format!("unknown diagnostic `{other}`"))),
                    }
                }
            }
            "trajectory" => match parse_bool(e) {
                Ok(b) => run.trajectory = b,
                Err(err) => errors.push(err),
            },
            "output" => run.output = Some(PathBuf::from(&e.value)),
            _ => errors.push(unknown(e, "run")),
        }
    }
    run
}

fn build_preset(inst_section: &InstanceSection, errors: &mut Vec<ConfigError>) -> Option<Instance> {
    let (line, name) = inst_section.preset.as_ref()?;
    let mut inst = match name.as_str() {
        "table1" => SchedulingInstance::table1(),
        other => {
            errors.push(ConfigError::at(*line, "preset", format!("unknown preset `{other}`")));
            return None;
        }
    };
    apply_preset_overrides(&mut inst, &inst_section.entries, errors);
    match build_instance(&inst) {
        Ok(built) => Some(Instance {
            groups: vec![SystemGroup { name: "server".into(), count: inst.n_servers, model: built.models[0].clone() }],
            preset: Some(inst),
            models: built.models,
            external: built.external,
            lp: built.lp,
        }),
        Err(e) => {
            errors.push(ConfigError::line(inst_section.line, e.to_string()));
            None
        }
    }
}

fn parse_external(section: &Section, errors: &mut Vec<ConfigError>) -> Option<ExternalProcess> {
    check_duplicates(section, &[], errors);
    let mut components = BTreeMap::new();
    for e in &section.entries {
        let index = e.key.strip_prefix("arrival.").and_then(|i| i.parse::<usize>().ok()).filter(|n| *n >= 1);
        match index {
            Some(n) => match parse_arrival(e) {
                Ok(spec) => {
                    components.insert(n, spec);
                }
                Err(err) => errors.push(err),
            },
            None => errors.push(unknown(e, "external")),
        }
    }
    if components.is_empty() {
        errors.push(ConfigError::line(section.line, "[external] needs at least one `arrival.N`"));
        return None;
    }
    if components.keys().copied().ne(1..=components.len()) {
        errors.push(ConfigError::line(section.line, "arrival indices must be 1, 2, ... without gaps"));
        return None;
    }
    ExternalProcess::new(components.into_values().collect())
        .map_err(|e| errors.push(ConfigError::line(section.line, e.to_string())))
        .ok()
}

/// Parses and validates a config, collecting every error found.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    let mut errors = Vec::new();
    let sections = split_sections(text, &mut errors);

    let mut instance_section = None;
    let mut external_section = None;
    let mut policy_section = None;
    let mut run_section = None;
    let mut systems = Vec::new();
    for s in &sections {
        let slot = match s.name.as_str() {
            "instance" => &mut instance_section,
            "external" => &mut external_section,
            "policy" => &mut policy_section,
            "run" => &mut run_section,
            "system" => {
                systems.push(s);
                continue;
            }
            other => {
                errors.push(ConfigError::line(s.line, format!("unknown section [{other}]")));
                continue;
            }
        };
        if slot.is_some() {
            errors.push(ConfigError::line(s.line, format!("section [{}] appears twice", s.name)));
        } else {
            *slot = Some(s);
        }
    }

    let instance = match instance_section {
        Some(s) => {
            check_duplicates(s, &[], &mut errors);
            let preset = s.entries.iter().find(|e| e.key == "preset").map(|e| (e.line, e.value.clone()));
            let entries =
                s.entries.iter().filter(|e| e.key != "preset").map(|e| Entry { line: e.line, key: e.key.clone(), value: e.value.clone() });
            Some(InstanceSection { line: s.line, preset, entries: entries.collect() })
        }
        None => None,
    };

    let built = match (instance.as_ref().and_then(|i| i.preset.as_ref()), systems.is_empty()) {
        (Some((line, _)), false) => {
            errors.push(ConfigError::at(*line, "preset", "a preset cannot be combined with [system] sections"));
            None
        }
        (Some(_), true) => {
            if let Some(s) = external_section {
                errors.push(ConfigError::line(s.line, "[external] is only used with [system] sections"));
            }
            build_preset(instance.as_ref().expect("checked"), &mut errors)
        }
        (None, true) => {
            errors.push(ConfigError::line(0, "no instance: set `preset` in [instance] or add [system] sections"));
            None
        }
        (None, false) => {
            if let Some(i) = &instance {
                for e in &i.entries {
                    errors.push(ConfigError::at(e.line, &e.key, "only valid together with a preset"));
                }
            }
            let external = match external_section {
                Some(s) => parse_external(s, &mut errors),
                None => {
                    errors.push(ConfigError::line(0, "[system] sections need an [external] section"));
                    None
                }
            };
            external.and_then(|external| {
                let dim = external.dim();
                let groups: Vec<_> =
                    systems.iter().enumerate().filter_map(|(i, s)| parse_system(s, i, dim, &mut errors)).collect();
                if groups.len() != systems.len() {
                    return None;
                }
                let models: Vec<RenewalSystemModel> =
                    groups.iter().flat_map(|g| std::iter::repeat_n(g.model.clone(), g.count)).collect();
                match StationaryLp::from_models(&models, external.means()) {
                    Ok(lp) => Some(Instance { preset: None, groups, models, external, lp }),
                    Err(e) => {
                        errors.push(ConfigError::line(0, e.to_string()));
                        None
                    }
                }
            })
        }
    };

    let (mut policy, weights) = match policy_section {
        Some(s) => parse_policy(s, &mut errors),
        None => (PolicyKind::DppRatio { solver: SolverKind::Enumerate }, None),
    };
    if let (Some((line, weights)), Some(inst)) = (weights, &built) {
        let n_sys = inst.models.len();
        if weights.len() != n_sys || weights.keys().copied().ne(0..n_sys) {
            errors.push(ConfigError::line(line, format!("weights must be given for systems 1..={n_sys}")));
        } else {
            let list: Vec<Vec<f64>> = weights.into_values().collect();
            for (n, w) in list.iter().enumerate() {
                let ok = w.len() == inst.models[n].len() && w.iter().all(|p| *p >= 0.0) && w.iter().sum::<f64>() > 0.0;
                if !ok {
                    errors.push(ConfigError::at(
                        line,
                        &format!("weights.{}", n + 1),
                        format!("expected {} nonnegative weights with a positive sum", inst.models[n].len()),
                    ));
                }
            }
            policy = PolicyKind::Stationary { weights: Some(list) };
        }
    }
    let run = parse_run(run_section, &mut errors);

    match built {
        Some(instance) if errors.is_empty() => Ok(ExperimentConfig {
            instance,
            policy,
            v: run.v,
            slots: run.slots,
            seeds: run.seeds,
            diagnostics: run.diagnostics,
            trajectory: run.trajectory,
            output: run.output,
        }),
        _ => {
            errors.sort_by_key(|e| e.line);
            Err(ConfigErrors(errors))
        }
    }
}
