//! Evaluation trial schedules, outcome aggregation and report tables.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::f64::consts::TAU;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{hash64, stream};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("object list is empty")]
    EmptyObjectList,
    #[error("no outcomes recorded{}", .0.as_ref().map(|o| format!(" for object {o}")).unwrap_or_default())]
    EmptyOutcomes(Option<String>),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: success must be 0 or 1, found {value:?}")]
    NonBinary { line: usize, value: String },
    #[error("line {line}: duplicate trial {index} for object {object}")]
    Duplicate { line: usize, object: String, index: u32 },
    #[error("unknown protocol {0:?}; expected sim_maniskill, franka_real or h12_humanoid")]
    UnknownProtocol(String),
    #[error("failed to write {path}: {message}")]
    IoFailure { path: String, message: String },
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    #[serde(rename = "sim_maniskill")]
    SimManiSkill,
    FrankaReal,
    H12Humanoid,
}

const SIM_COORDS: [f64; 4] = [-0.075, -0.025, 0.025, 0.075];
const FRANKA_X: [f64; 4] = [-0.1875, -0.0625, 0.0625, 0.1875];
const FRANKA_Y: [f64; 4] = [-0.105, -0.035, 0.035, 0.105];
const H12_X: [f64; 3] = [-0.4 / 3.0, 0.0, 0.4 / 3.0];
const H12_Y: [f64; 2] = [-0.09, 0.09];

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::SimManiSkill, Protocol::FrankaReal, Protocol::H12Humanoid];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::SimManiSkill => "sim_maniskill",
            Protocol::FrankaReal => "franka_real",
            Protocol::H12Humanoid => "h12_humanoid",
        }
    }

    /// Workspace `(x extent, y extent)` in meters, centered on the origin.
    pub fn workspace(self) -> (f64, f64) {
        match self {
            Protocol::SimManiSkill => (0.15, 0.15),
            Protocol::FrankaReal => (0.5, 0.28),
            Protocol::H12Humanoid => (0.40, 0.36),
        }
    }

    /// Lift height counted as success, in meters. H1-2 trials have no
    /// height threshold.
    pub fn lift_threshold(self) -> Option<f64> {
        match self {
            Protocol::SimManiSkill => Some(0.3),
            Protocol::FrankaReal => Some(0.2),
            Protocol::H12Humanoid => None,
        }
    }

    pub fn trials_per_object(self) -> usize {
        match self {
            Protocol::SimManiSkill | Protocol::FrankaReal => 16,
            Protocol::H12Humanoid => 5,
        }
    }

    /// Side of each H1-2 placement square (3 in).
    pub fn square_side(self) -> Option<f64> {
        (self == Protocol::H12Humanoid).then_some(0.0762)
    }

    /// Legal placements, x-major.
    pub fn placements(self) -> Vec<(f64, f64)> {
        let grid = |xs: &[f64], ys: &[f64]| xs.iter().flat_map(|&x| ys.iter().map(move |&y| (x, y))).collect();
        match self {
            Protocol::SimManiSkill => grid(&SIM_COORDS, &SIM_COORDS),
            Protocol::FrankaReal => grid(&FRANKA_X, &FRANKA_Y),
            Protocol::H12Humanoid => grid(&H12_X, &H12_Y),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self> {
        Protocol::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| EvalError::UnknownProtocol(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trial {
    pub object: String,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub index: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialSchedule {
    pub protocol: Protocol,
    pub seed: u64,
    pub lift_threshold: Option<f64>,
    pub trials: Vec<Trial>,
}

impl TrialSchedule {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("schedule serializes");
        s.push('\n');
        s
    }
}

/// Deterministic schedule. Object `k` draws from its own stream derived from
/// `(seed, k)`, so adding objects never changes earlier ones.
pub fn make_schedule(protocol: Protocol, objects: &[String], seed: u64) -> Result<TrialSchedule> {
    if objects.is_empty() {
        return Err(EvalError::EmptyObjectList);
    }
    let legal = protocol.placements();
    let per_object = protocol.trials_per_object();
    let mut trials = Vec::with_capacity(objects.len() * per_object);
    for (k, object) in objects.iter().enumerate() {
        let mut rng = stream(hash64(seed, k as u64));
        let cells: Vec<usize> = if per_object == legal.len() {
            (0..legal.len()).collect()
        } else {
            sample(&mut rng, legal.len(), per_object).into_vec()
        };
        for (index, &c) in cells.iter().enumerate() {
            let (x, y) = legal[c];
            let theta = rng.random_range(0.0..TAU);
            trials.push(Trial { object: object.clone(), x, y, theta, index: index as u32 });
        }
    }
    Ok(TrialSchedule { protocol, seed, lift_threshold: protocol.lift_threshold(), trials })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutcomeRow {
    pub object: String,
    pub trial_index: u32,
    pub success: bool,
}

/// Parses `object,trial_index,success` CSV with a header line.
pub fn parse_outcomes(text: &str) -> Result<Vec<OutcomeRow>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| EvalError::Parse { line: 1, message: e.to_string() })?.clone();
    if header.iter().collect::<Vec<_>>() != ["object", "trial_index", "success"] {
        return Err(EvalError::Parse { line: 1, message: "header must be object,trial_index,success".into() });
    }
    let mut rows = Vec::new();
    let mut seen = BTreeSet::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            EvalError::Parse { line, message: e.to_string() }
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let object = rec[0].to_string();
        if object.is_empty() {
            return Err(EvalError::Parse { line, message: "empty object id".into() });
        }
        let trial_index = rec[1]
            .parse::<u32>()
            .map_err(|_| EvalError::Parse { line, message: format!("bad trial_index {:?}", &rec[1]) })?;
        let success = match &rec[2] {
            "0" => false,
            "1" => true,
            v => return Err(EvalError::NonBinary { line, value: v.to_string() }),
        };
        if !seen.insert((object.clone(), trial_index)) {
            return Err(EvalError::Duplicate { line, object, index: trial_index });
        }
        rows.push(OutcomeRow { object, trial_index, success });
    }
    Ok(rows)
}

/// Groups rows by object in order of first appearance, trials by index.
pub fn group_outcomes(rows: &[OutcomeRow]) -> Vec<(String, Vec<bool>)> {
    let mut order = Vec::new();
    let mut map: HashMap<&str, BTreeMap<u32, bool>> = HashMap::new();
    for r in rows {
        map.entry(&r.object).or_insert_with(|| {
            order.push(r.object.clone());
            BTreeMap::new()
        });
        map.get_mut(r.object.as_str()).expect("inserted").insert(r.trial_index, r.success);
    }
    order.into_iter().map(|o| (o.clone(), map[o.as_str()].values().copied().collect())).collect()
}

/// Exact non-negative rational used for display rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Ratio {
    num: u128,
    den: u128,
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Ratio {
    fn new(num: u128, den: u128) -> Self {
        let g = gcd(num, den).max(1);
        Self { num: num / g, den: den / g }
    }

    fn checked_add(self, o: Ratio) -> Option<Ratio> {
        let g = gcd(self.den, o.den);
        let den = (self.den / g).checked_mul(o.den)?;
        let num = self.num.checked_mul(o.den / g)?.checked_add(o.num.checked_mul(self.den / g)?)?;
        Some(Ratio::new(num, den))
    }

    /// Value in hundredths, rounded half-up.
    fn hundredths_half_up(self) -> Option<u128> {
        let scaled = self.num.checked_mul(200)?;
        Some((scaled + self.den) / (2 * self.den))
    }
}

fn format_hundredths(h: u128) -> String {
    format!("{}.{:02}", h / 100, h % 100)
}

/// Formats a percentage with two decimals, rounding half-up.
pub fn display_percent(value: f64) -> String {
    let h = (value * 100.0 + 0.5).floor();
    format_hundredths(h.max(0.0) as u128)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectRate {
    pub object: String,
    pub trials: usize,
    pub successes: usize,
    /// Exact percentage.
    pub rate: f64,
    /// Two-decimal display string, half-up.
    pub display: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuccessTable {
    pub objects: Vec<ObjectRate>,
    /// Unweighted mean of the exact per-object rates.
    pub overall: f64,
    pub overall_display: String,
}

pub fn aggregate(outcomes: &[(String, Vec<bool>)]) -> Result<SuccessTable> {
    if outcomes.is_empty() {
        return Err(EvalError::EmptyOutcomes(None));
    }
    let mut objects = Vec::with_capacity(outcomes.len());
    let mut sum = Some(Ratio::new(0, 1));
    for (object, trials) in outcomes {
        if trials.is_empty() {
            return Err(EvalError::EmptyOutcomes(Some(object.clone())));
        }
        let successes = trials.iter().filter(|&&s| s).count();
        let exact = Ratio::new(100 * successes as u128, trials.len() as u128);
        sum = sum.and_then(|s| s.checked_add(exact));
        let rate = 100.0 * successes as f64 / trials.len() as f64;
        let display = exact.hundredths_half_up().map_or_else(|| display_percent(rate), format_hundredths);
        objects.push(ObjectRate { object: object.clone(), trials: trials.len(), successes, rate, display });
    }
    let overall = objects.iter().map(|o| o.rate).sum::<f64>() / objects.len() as f64;
    let overall_display = sum
        .map(|s| Ratio::new(s.num, s.den * objects.len() as u128))
        .and_then(Ratio::hundredths_half_up)
        .map_or_else(|| display_percent(overall), format_hundredths);
    Ok(SuccessTable { objects, overall, overall_display })
}

/// Aggregates per-object rates already expressed as percentages, treating
/// each as one trial set with the rate's exact value.
pub fn overall_from_rates(rates: &[f64]) -> Result<(f64, String)> {
    if rates.is_empty() {
        return Err(EvalError::EmptyOutcomes(None));
    }
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    Ok((mean, display_percent(mean)))
}

impl SuccessTable {
    /// `object,trials,successes,rate` with an `overall` row last.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["object", "trials", "successes", "rate"]).expect("in-memory write");
        for o in &self.objects {
            w.write_record([o.object.as_str(), &o.trials.to_string(), &o.successes.to_string(), &o.display])
                .expect("in-memory write");
        }
        let trials: usize = self.objects.iter().map(|o| o.trials).sum();
        let successes: usize = self.objects.iter().map(|o| o.successes).sum();
        w.write_record(["overall", &trials.to_string(), &successes.to_string(), &self.overall_display])
            .expect("in-memory write");
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn to_grid(&self) -> String {
        let rows: Vec<[String; 2]> = self
            .objects
            .iter()
            .map(|o| [o.object.clone(), o.display.clone()])
            .chain(std::iter::once(["overall".to_string(), self.overall_display.clone()]))
            .collect();
        let w0 = rows.iter().map(|r| r[0].len()).max().unwrap_or(0).max("object".len());
        let w1 = rows.iter().map(|r| r[1].len()).max().unwrap_or(0).max("rate".len());
        let mut out = format!("{:<w0$}  {:>w1$}\n", "object", "rate");
        for r in rows {
            out.push_str(&format!("{:<w0$}  {:>w1$}\n", r[0], r[1]));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub label: String,
    pub demos: u64,
    pub success: f64,
}

fn sorted(rows: &[ScalingRow]) -> Vec<ScalingRow> {
    let mut v = rows.to_vec();
    v.sort_by(|a, b| a.label.cmp(&b.label).then(a.demos.cmp(&b.demos)).then(a.success.total_cmp(&b.success)));
    v
}

/// `label,demos,success` sorted by `(label, demos)`.
pub fn scaling_csv(rows: &[ScalingRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["label", "demos", "success"]).expect("in-memory write");
    for r in sorted(rows) {
        w.write_record([r.label.as_str(), &r.demos.to_string(), &display_percent(r.success)]).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

/// One row per label, one column per demo count; missing cells are `-`.
pub fn scaling_grid(rows: &[ScalingRow]) -> String {
    let rows = sorted(rows);
    let demos: BTreeSet<u64> = rows.iter().map(|r| r.demos).collect();
    let mut cells: BTreeMap<&str, BTreeMap<u64, String>> = BTreeMap::new();
    for r in &rows {
        cells.entry(&r.label).or_default().insert(r.demos, display_percent(r.success));
    }
    let header: Vec<String> = demos.iter().map(u64::to_string).collect();
    let lw = cells.keys().map(|l| l.len()).max().unwrap_or(0).max("label".len());
    let cw = cells
        .values()
        .flat_map(|m| m.values().map(String::len))
        .chain(header.iter().map(String::len))
        .max()
        .unwrap_or(1);
    let mut out = format!("{:<lw$}", "label");
    for h in &header {
        out.push_str(&format!("  {h:>cw$}"));
    }
    out.push('\n');
    for (label, m) in &cells {
        out.push_str(&format!("{label:<lw$}"));
        for d in &demos {
            out.push_str(&format!("  {:>cw$}", m.get(d).map_or("-", String::as_str)));
        }
        out.push('\n');
    }
    out
}

/// Writes the CSV to `path` and the grid next to it with a `.txt` extension.
pub fn scaling_report(rows: &[ScalingRow], path: &Path) -> Result<()> {
    let io = |p: &Path, e: std::io::Error| EvalError::IoFailure { path: p.display().to_string(), message: e.to_string() };
    std::fs::write(path, scaling_csv(rows)).map_err(|e| io(path, e))?;
    let grid = path.with_extension("txt");
    std::fs::write(&grid, scaling_grid(rows)).map_err(|e| io(&grid, e))?;
    Ok(())
}
