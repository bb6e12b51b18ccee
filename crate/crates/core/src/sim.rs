//! Simulation scenarios and the replication driver for rejection-rate tables.

use crate::copula::{sample_one, tau_to_theta, TAU_BAND};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model_select::{compare_full_reduced, Criterion};
use crate::rng::{derive_seed, substream};
use crate::sa_tests::{prepare_check, SaConfig};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Mutex;

pub use crate::special::normal_quantile;

const GRID: usize = 101;
const PADDING: usize = 3;
/// Largest tolerated share of failed replicates in any cell.
pub const MAX_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioId {
    Sc1,
    Sc2,
    Sc3,
}

impl ScenarioId {
    fn key(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioId::Sc1 => "sc1",
            ScenarioId::Sc2 => "sc2",
            ScenarioId::Sc3 => "sc3",
        })
    }
}

impl FromStr for ScenarioId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sc1" => Ok(ScenarioId::Sc1),
            "sc2" => Ok(ScenarioId::Sc2),
            "sc3" => Ok(ScenarioId::Sc3),
            other => Err(Error::Config(format!("unknown scenario '{other}'"))),
        }
    }
}

/// Index direction of Sc2, `(1, 3)/√10`.
pub const SC2_DIRECTION: [f64; 2] = [0.316_227_766_016_837_94, 0.948_683_298_050_513_8];

/// A data-generating scenario on `[0,1]^q` with Gaussian margins and a
/// Clayton copula whose Kendall's tau varies with the first two covariates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: ScenarioId,
    /// Size of the departure from a constant tau (unused by Sc1).
    pub beta: f64,
    pub sigma: [f64; 2],
    /// Append three irrelevant uniform covariates.
    pub pad: bool,
    /// Tau is clipped into the valid band instead of rejected.
    pub clip: bool,
}

impl Scenario {
    /// Validated scenario; errors if tau leaves the valid band anywhere on
    /// a grid over the unit square.
    pub fn new(id: ScenarioId, beta: f64) -> Result<Self> {
        let s = Scenario {
            id,
            beta,
            sigma: [0.2, 0.2],
            pad: false,
            clip: false,
        };
        s.validate()?;
        Ok(s)
    }

    /// Like [`Scenario::new`] but clips tau into the band when needed.
    pub fn clipped(id: ScenarioId, beta: f64) -> Result<Self> {
        let mut s = Scenario {
            id,
            beta,
            sigma: [0.2, 0.2],
            pad: false,
            clip: false,
        };
        if s.validate().is_err() {
            s.clip = true;
        }
        if !beta.is_finite() {
            return Err(Error::Parameter(format!("beta must be finite, got {beta}")));
        }
        Ok(s)
    }

    pub fn padded(mut self, pad: bool) -> Self {
        self.pad = pad;
        self
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = TAU_BAND;
        for a in 0..GRID {
            for b in 0..GRID {
                let x = [a as f64 / (GRID - 1) as f64, b as f64 / (GRID - 1) as f64];
                let t = self.raw_tau(&x);
                if !(t > lo && t < hi) {
                    return Err(Error::Parameter(format!(
                        "{} with beta {} gives tau {t} at x = {x:?}, outside ({lo}, {hi})",
                        self.id, self.beta
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn q(&self) -> usize {
        if self.pad {
            2 + PADDING
        } else {
            2
        }
    }

    fn raw_tau(&self, x: &[f64]) -> f64 {
        match self.id {
            ScenarioId::Sc1 => 0.5,
            ScenarioId::Sc2 => {
                let z = x[0] * SC2_DIRECTION[0] + x[1] * SC2_DIRECTION[1];
                0.5 + self.beta * (10.0 * z).sin()
            }
            ScenarioId::Sc3 => 0.5 + self.beta * 2.0 * (x[0] + (6.0 * x[1]).cos() - 0.45) / 3.0,
        }
    }

    /// Kendall's tau at covariate `x`.
    pub fn tau(&self, x: &[f64]) -> f64 {
        let t = self.raw_tau(x);
        if self.clip {
            t.clamp(TAU_BAND.0 + 1e-9, TAU_BAND.1 - 1e-9)
        } else {
            t
        }
    }

    /// Calibration `η(x) = log θ(x)`.
    pub fn eta(&self, x: &[f64]) -> f64 {
        let t = self.tau(x);
        (2.0 * t / (1.0 - t)).ln()
    }

    pub fn f1(x: &[f64]) -> f64 {
        0.6 * (5.0 * x[0]).sin() - 0.9 * (2.0 * x[1]).sin()
    }

    pub fn f2(x: &[f64]) -> f64 {
        0.6 * (3.0 * x[0] + 5.0 * x[1]).sin()
    }
}

/// Draws `n` rows from the scenario.
pub fn gen_scenario<R: Rng + ?Sized>(s: &Scenario, n: usize, rng: &mut R) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Config("n must be positive".into()));
    }
    let q = s.q();
    let mut x = Vec::with_capacity(n * q);
    let mut y1 = Vec::with_capacity(n);
    let mut y2 = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..q).map(|_| rng.random::<f64>()).collect();
        let theta = tau_to_theta(s.tau(&row))?.theta;
        let u = sample_one(theta, rng);
        y1.push(Scenario::f1(&row) + s.sigma[0] * normal_quantile(u.u1)?);
        y2.push(Scenario::f2(&row) + s.sigma[1] * normal_quantile(u.u2)?);
        x.extend(row);
    }
    Dataset::new(x, q, y1, y2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchMethod {
    Permutation,
    Chisq,
    Cvml,
    Ccvml,
    Waic,
}

impl BenchMethod {
    pub fn uses_bins(self) -> bool {
        matches!(self, BenchMethod::Permutation | BenchMethod::Chisq)
    }

    fn criterion(self) -> Option<Criterion> {
        match self {
            BenchMethod::Cvml => Some(Criterion::Cvml),
            BenchMethod::Ccvml => Some(Criterion::Ccvml),
            BenchMethod::Waic => Some(Criterion::Waic),
            _ => None,
        }
    }
}

impl fmt::Display for BenchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchMethod::Permutation => "permutation",
            BenchMethod::Chisq => "chisq",
            BenchMethod::Cvml => "cvml",
            BenchMethod::Ccvml => "ccvml",
            BenchMethod::Waic => "waic",
        })
    }
}

impl FromStr for BenchMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "permutation" | "method1" => Ok(BenchMethod::Permutation),
            "chisq" | "method2" => Ok(BenchMethod::Chisq),
            "cvml" => Ok(BenchMethod::Cvml),
            "ccvml" => Ok(BenchMethod::Ccvml),
            "waic" => Ok(BenchMethod::Waic),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }
}

/// A benchmark grid. Every (scenario, n) pair is replicated `replicates`
/// times; each replicate feeds every method and `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchSpec {
    pub scenarios: Vec<ScenarioId>,
    pub beta: f64,
    pub pad: bool,
    pub sizes: Vec<usize>,
    pub methods: Vec<BenchMethod>,
    #[serde(rename = "K")]
    pub ks: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    /// Split, `J`, `α`, calibration and margin settings; its `K` is unused.
    pub sa: SaConfig,
    pub bootstrap_draws: usize,
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec {
            scenarios: vec![ScenarioId::Sc1, ScenarioId::Sc2, ScenarioId::Sc3],
            beta: 0.25,
            pad: false,
            sizes: vec![500, 1000],
            methods: vec![BenchMethod::Permutation, BenchMethod::Chisq],
            ks: vec![2, 3],
            replicates: 100,
            seed: 1,
            sa: SaConfig::default(),
            bootstrap_draws: 50,
        }
    }
}

impl BenchSpec {
    fn validate(&self) -> Result<()> {
        if self.replicates < 10 {
            return Err(Error::Config(format!("need at least 10 replicates, got {}", self.replicates)));
        }
        if self.scenarios.is_empty() || self.sizes.is_empty() || self.methods.is_empty() {
            return Err(Error::Config("empty benchmark grid".into()));
        }
        if self.methods.iter().any(|m| m.uses_bins()) && self.ks.is_empty() {
            return Err(Error::Config("binned methods need at least one K".into()));
        }
        for &id in &self.scenarios {
            Scenario::new(id, self.beta)?;
        }
        Ok(())
    }

    /// Table cells in output order.
    fn cells(&self) -> Vec<CellKey> {
        let mut out = Vec::new();
        for &scenario in &self.scenarios {
            for &n in &self.sizes {
                for &method in &self.methods {
                    if method.uses_bins() {
                        for &k in &self.ks {
                            out.push(CellKey { scenario, n, method, k: Some(k) });
                        }
                    } else {
                        out.push(CellKey { scenario, n, method, k: None });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
struct CellKey {
    scenario: ScenarioId,
    n: usize,
    method: BenchMethod,
    k: Option<usize>,
}

/// Outcome of one method on one replicate: `Ok(reject)` or the error text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CellOutcome {
    method: BenchMethod,
    k: Option<usize>,
    reject: std::result::Result<bool, String>,
}

/// One checkpoint line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ReplicateRecord {
    scenario: ScenarioId,
    n: usize,
    replicate: usize,
    cells: Vec<CellOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointHeader {
    spec: BenchSpec,
}

/// One table cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub scenario: ScenarioId,
    pub n: usize,
    pub method: BenchMethod,
    #[serde(rename = "K")]
    pub k: Option<usize>,
    /// Successful replicates.
    pub replicates: usize,
    pub rejections: usize,
    pub failures: usize,
    pub reject_rate: f64,
    /// Binomial standard error `sqrt(p (1 - p) / R)`.
    pub se: f64,
}

fn run_replicate(spec: &BenchSpec, scenario: ScenarioId, n: usize, replicate: usize) -> ReplicateRecord {
    let keys = [scenario.key(), n as u64, replicate as u64];
    let mut cells = Vec::new();
    let data = Scenario::new(scenario, spec.beta)
        .map(|s| s.padded(spec.pad))
        .and_then(|s| gen_scenario(&s, n, &mut substream(spec.seed, "data", &keys)));
    let data = match data {
        Ok(d) => d,
        Err(e) => {
            for key in spec.cells().into_iter().filter(|c| c.scenario == scenario && c.n == n) {
                cells.push(CellOutcome {
                    method: key.method,
                    k: key.k,
                    reject: Err(e.to_string()),
                });
            }
            return ReplicateRecord { scenario, n, replicate, cells };
        }
    };

    let binned: Vec<BenchMethod> = spec.methods.iter().copied().filter(|m| m.uses_bins()).collect();
    if !binned.is_empty() {
        let check_seed = derive_seed(spec.seed, "check", &keys);
        let prepared = prepare_check(&data, &spec.sa, check_seed);
        for &k in &spec.ks {
            let report = prepared
                .as_ref()
                .map_err(|e| e.clone())
                .and_then(|p| p.run(k, spec.sa.permutations, spec.sa.alpha, check_seed));
            for &m in &binned {
                let reject = match &report {
                    Ok(r) if m == BenchMethod::Permutation => Ok(r.method1.reject),
                    Ok(r) => Ok(r.method2.reject),
                    Err(e) => Err(e.to_string()),
                };
                cells.push(CellOutcome { method: m, k: Some(k), reject });
            }
        }
    }

    let criteria: Vec<(BenchMethod, Criterion)> =
        spec.methods.iter().filter_map(|&m| m.criterion().map(|c| (m, c))).collect();
    if !criteria.is_empty() {
        let cmp = compare_full_reduced(
            &data,
            &spec.sa.calibration,
            spec.bootstrap_draws,
            derive_seed(spec.seed, "criteria", &keys),
        );
        for (m, c) in criteria {
            let idx = Criterion::ALL.iter().position(|&a| a == c).expect("known criterion");
            let reject = match &cmp {
                Ok(r) => Ok(r.prefers_full[idx]),
                Err(e) => Err(e.to_string()),
            };
            cells.push(CellOutcome { method: m, k: None, reject });
        }
    }
    ReplicateRecord { scenario, n, replicate, cells }
}

fn read_checkpoint(path: &Path, spec: &BenchSpec) -> Result<Vec<ReplicateRecord>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut lines = BufReader::new(file).lines();
    let Some(first) = lines.next() else {
        return Ok(Vec::new());
    };
    let header: CheckpointHeader = serde_json::from_str(&first?).map_err(|e| Error::Parse {
        line: 1,
        message: format!("checkpoint header: {e}"),
    })?;
    if header.spec != *spec {
        return Err(Error::Config("checkpoint was written for a different benchmark configuration".into()));
    }
    let mut out = Vec::new();
    for line in lines {
        // a torn final line from an interrupted run is skipped
        match serde_json::from_str::<ReplicateRecord>(&line?) {
            Ok(r) => out.push(r),
            Err(_) => continue,
        }
    }
    Ok(out)
}

/// Runs the benchmark grid. With a checkpoint path, finished replicates are
/// appended as JSON lines and reused on the next call with the same spec.
/// The result does not depend on the thread count or on completion order.
pub fn run_bench(spec: &BenchSpec, checkpoint: Option<&Path>) -> Result<Vec<BenchResult>> {
    spec.validate()?;
    let mut done = match checkpoint {
        Some(p) => read_checkpoint(p, spec)?,
        None => Vec::new(),
    };
    let finished: HashSet<(ScenarioId, usize, usize)> = done.iter().map(|r| (r.scenario, r.n, r.replicate)).collect();
    let mut pending = Vec::new();
    for &s in &spec.scenarios {
        for &n in &spec.sizes {
            for r in 0..spec.replicates {
                if !finished.contains(&(s, n, r)) {
                    pending.push((s, n, r));
                }
            }
        }
    }

    let writer = match checkpoint {
        Some(p) => {
            let fresh = !p.exists() || std::fs::metadata(p)?.len() == 0;
            let mut f = OpenOptions::new().create(true).append(true).open(p)?;
            if fresh {
                let header = serde_json::to_string(&CheckpointHeader { spec: spec.clone() }).expect("serializable");
                f.write_all(format!("{header}\n").as_bytes())?;
                f.flush()?;
            }
            Some(Mutex::new(f))
        }
        None => None,
    };

    let fresh: Vec<ReplicateRecord> = pending
        .par_iter()
        .map(|&(s, n, r)| {
            let rec = run_replicate(spec, s, n, r);
            if let Some(w) = &writer {
                let line = serde_json::to_string(&rec).expect("serializable") + "\n";
                let mut f = w.lock().expect("checkpoint lock");
                f.write_all(line.as_bytes())?;
                f.flush()?;
            }
            Ok(rec)
        })
        .collect::<Result<_>>()?;
    done.extend(fresh);
    aggregate(spec, &done)
}

fn aggregate(spec: &BenchSpec, records: &[ReplicateRecord]) -> Result<Vec<BenchResult>> {
    let mut tally: BTreeMap<CellKey, (usize, usize, usize)> = BTreeMap::new();
    let wanted: HashSet<(ScenarioId, usize, usize)> = spec
        .scenarios
        .iter()
        .flat_map(|&s| spec.sizes.iter().flat_map(move |&n| (0..spec.replicates).map(move |r| (s, n, r))))
        .collect();
    let mut seen = HashSet::new();
    for rec in records {
        let id = (rec.scenario, rec.n, rec.replicate);
        if !wanted.contains(&id) || !seen.insert(id) {
            continue;
        }
        for c in &rec.cells {
            let key = CellKey { scenario: rec.scenario, n: rec.n, method: c.method, k: c.k };
            let e = tally.entry(key).or_default();
            match c.reject {
                Ok(true) => {
                    e.0 += 1;
                    e.1 += 1;
                }
                Ok(false) => e.0 += 1,
                Err(_) => e.2 += 1,
            }
        }
    }
    let mut out = Vec::new();
    for key in spec.cells() {
        let (ok, rej, failed) = tally.get(&key).copied().unwrap_or((0, 0, 0));
        let total = ok + failed;
        if total > 0 && failed as f64 > MAX_FAILURE_RATE * total as f64 {
            let example = records
                .iter()
                .filter(|r| r.scenario == key.scenario && r.n == key.n)
                .flat_map(|r| r.cells.iter())
                .find_map(|c| (c.method == key.method && c.k == key.k).then(|| c.reject.clone().err()).flatten())
                .unwrap_or_default();
            return Err(Error::InsufficientData(format!(
                "{failed} of {total} replicates failed for {} n={} {}: {example}",
                key.scenario, key.n, key.method
            )));
        }
        let p = if ok > 0 { rej as f64 / ok as f64 } else { 0.0 };
        out.push(BenchResult {
            scenario: key.scenario,
            n: key.n,
            method: key.method,
            k: key.k,
            replicates: ok,
            rejections: rej,
            failures: failed,
            reject_rate: p,
            se: if ok > 0 { (p * (1.0 - p) / ok as f64).sqrt() } else { 0.0 },
        });
    }
    Ok(out)
}

/// CSV table with columns `scenario,n,method,K,replicates,reject_rate,se`.
pub fn write_bench_csv<W: Write>(results: &[BenchResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(["scenario", "n", "method", "K", "replicates", "reject_rate", "se"]).map_err(io)?;
    for r in results {
        w.write_record([
            r.scenario.to_string(),
            r.n.to_string(),
            r.method.to_string(),
            r.k.map(|k| k.to_string()).unwrap_or_default(),
            r.replicates.to_string(),
            r.reject_rate.to_string(),
            r.se.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::CalibrationSpec;
    use crate::stats::{kendall_tau, ks_distance};
    use crate::special::gaussian_cdf;

    #[test]
    fn scenario_tau_values() {
        let s2 = Scenario::new(ScenarioId::Sc2, 0.25).unwrap();
        assert_eq!(s2.tau(&[0.0, 0.0]), 0.5);
        let s3 = Scenario::new(ScenarioId::Sc3, 0.25).unwrap();
        // x1 + cos(6 x2) = 0.45 at x1 = 0.45 - cos(6 x2)
        let x2 = 0.3f64;
        let x1 = 0.45 - (6.0 * x2).cos();
        assert!((s3.tau(&[x1, x2]) - 0.5).abs() < 1e-15);
        let s1 = Scenario::new(ScenarioId::Sc1, 0.25).unwrap();
        for k in 0..20 {
            let x = [k as f64 / 19.0, 1.0 - k as f64 / 19.0];
            assert_eq!(s1.tau(&x), 0.5);
        }
    }

    #[test]
    fn tau_band_is_validated() {
        assert!(Scenario::new(ScenarioId::Sc2, 0.6).is_err());
        let c = Scenario::clipped(ScenarioId::Sc2, 0.6).unwrap();
        assert!(c.clip);
        assert!((0..=100).all(|k| {
            let t = c.tau(&[k as f64 / 100.0, 0.5]);
            t > TAU_BAND.0 && t < TAU_BAND.1
        }));
        assert!(!Scenario::clipped(ScenarioId::Sc2, 0.25).unwrap().clip);
    }

    #[test]
    fn sc1_kendall_tau_and_margins() {
        let s = Scenario::new(ScenarioId::Sc1, 0.25).unwrap();
        let n = 20_000;
        let d = gen_scenario(&s, n, &mut substream(1, "gen", &[])).unwrap();
        let r1: Vec<f64> = (0..n).map(|i| (d.y1[i] - Scenario::f1(d.row(i))) / 0.2).collect();
        let r2: Vec<f64> = (0..n).map(|i| (d.y2[i] - Scenario::f2(d.row(i))) / 0.2).collect();
        let u1: Vec<f64> = r1.iter().map(|&z| gaussian_cdf(z)).collect();
        let u2: Vec<f64> = r2.iter().map(|&z| gaussian_cdf(z)).collect();
        let tau = kendall_tau(&u1, &u2);
        assert!((tau - 0.5).abs() < 0.01, "tau {tau}");
        // KS critical value at level 0.01 is about 1.628 / sqrt(n)
        let crit = 1.628 / (n as f64).sqrt();
        assert!(ks_distance(&r1, gaussian_cdf) < crit);
        assert!(ks_distance(&r2, gaussian_cdf) < crit);
    }

    #[test]
    fn padding_adds_covariates() {
        let s = Scenario::new(ScenarioId::Sc3, 0.25).unwrap().padded(true);
        let d = gen_scenario(&s, 10, &mut substream(2, "gen", &[])).unwrap();
        assert_eq!(d.q(), 5);
        let again = gen_scenario(&s, 10, &mut substream(2, "gen", &[])).unwrap();
        assert_eq!(d, again);
    }

    #[test]
    fn parse_ids() {
        assert_eq!("SC2".parse::<ScenarioId>().unwrap(), ScenarioId::Sc2);
        assert!("sc4".parse::<ScenarioId>().is_err());
        assert_eq!("chisq".parse::<BenchMethod>().unwrap(), BenchMethod::Chisq);
    }

    fn quick_spec() -> BenchSpec {
        BenchSpec {
            scenarios: vec![ScenarioId::Sc1],
            sizes: vec![200],
            methods: vec![BenchMethod::Chisq],
            ks: vec![2],
            replicates: 10,
            seed: 3,
            sa: SaConfig {
                calibration: CalibrationSpec::Constant,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn bench_is_resumable_and_deterministic() {
        let spec = quick_spec();
        let plain = run_bench(&spec, None).unwrap();
        assert_eq!(plain.len(), 1);
        assert_eq!(plain[0].replicates, 10);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.jsonl");
        let first = run_bench(&spec, Some(&path)).unwrap();
        assert_eq!(first, plain);
        // drop the last record and tear the one before it
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let mut partial = lines[..lines.len() - 2].join("\n");
        partial.push('\n');
        partial.push_str(&lines[lines.len() - 2][..10]);
        std::fs::write(&path, partial).unwrap();
        let resumed = run_bench(&spec, Some(&path)).unwrap();
        assert_eq!(resumed, plain);
        let other = BenchSpec { seed: 4, ..spec };
        assert!(run_bench(&other, Some(&path)).is_err());
    }

    #[test]
    fn bench_csv_schema() {
        let r = vec![BenchResult {
            scenario: ScenarioId::Sc1,
            n: 500,
            method: BenchMethod::Cvml,
            k: None,
            replicates: 10,
            rejections: 3,
            failures: 0,
            reject_rate: 0.3,
            se: 0.1449137674618944,
        }];
        let mut buf = Vec::new();
        write_bench_csv(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "scenario,n,method,K,replicates,reject_rate,se\nsc1,500,cvml,,10,0.3,0.1449137674618944\n");
    }

    #[test]
    fn binomial_standard_error_bracket() {
        // with true rate alpha, observed rates fall within 3 standard errors
        // in nearly every meta-run
        let (alpha, r, meta) = (0.05, 100usize, 400);
        let mut rng = substream(5, "binom", &[]);
        let band = 3.0 * (alpha * (1.0 - alpha) / r as f64).sqrt();
        let inside = (0..meta)
            .filter(|_| {
                let hits = (0..r).filter(|_| rng.random::<f64>() < alpha).count();
                (hits as f64 / r as f64 - alpha).abs() <= band
            })
            .count();
        assert!(inside as f64 >= 0.99 * meta as f64, "{inside}/{meta}");
    }
}
