//! Corpus loading, fixed-window segmentation, train/val/test splitting and a
//! synthetic scenario generator used by tests and the `synth` command.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, Rng};
use crate::trajectory::{to_displacements, DisplacementSeries, Point, Trajectory};

pub const DEFAULT_T_OBS: usize = 8;
pub const DEFAULT_T_PRED: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub files: Vec<String>,
    /// Positions per window (`t_obs + t_pred + 1`).
    pub window: usize,
    pub overlap: bool,
}

/// A set of equally shaped full displacement samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub name: String,
    pub t_obs: usize,
    pub t_pred: usize,
    pub samples: Vec<DisplacementSeries>,
    /// Stable sample identifiers, parallel to `samples`.
    pub ids: Vec<String>,
    /// Ground-truth regime labels (synthetic corpora only), parallel to `samples`.
    pub labels: Option<Vec<usize>>,
    pub provenance: Provenance,
}

impl Corpus {
    pub fn empty(name: impl Into<String>, t_obs: usize, t_pred: usize) -> Self {
        Self {
            name: name.into(),
            t_obs,
            t_pred,
            samples: Vec::new(),
            ids: Vec::new(),
            labels: None,
            provenance: Provenance {
                files: Vec::new(),
                window: t_obs + t_pred + 1,
                overlap: false,
            },
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.ids.len() != self.samples.len() {
            return Err(Error::LengthMismatch {
                what: "corpus ids",
                expected: self.samples.len(),
                actual: self.ids.len(),
            });
        }
        if let Some(l) = &self.labels {
            if l.len() != self.samples.len() {
                return Err(Error::LengthMismatch {
                    what: "corpus labels",
                    expected: self.samples.len(),
                    actual: l.len(),
                });
            }
        }
        for s in &self.samples {
            if s.t_obs != self.t_obs || s.t_pred != self.t_pred {
                return Err(Error::invalid(format!(
                    "corpus `{}` mixes sample shapes ({}, {}) and ({}, {})",
                    self.name, self.t_obs, self.t_pred, s.t_obs, s.t_pred
                )));
            }
        }
        Ok(())
    }

    /// Sub-corpus with the samples at `idx`, in that order.
    pub fn select(&self, name: impl Into<String>, idx: &[usize]) -> Self {
        Self {
            name: name.into(),
            t_obs: self.t_obs,
            t_pred: self.t_pred,
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i]).collect()),
            provenance: self.provenance.clone(),
        }
    }

    fn merge(name: &str, parts: &[&Corpus]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("no corpora to merge"))?;
        let mut out = Corpus::empty(name, first.t_obs, first.t_pred);
        let all_labeled = parts.iter().all(|c| c.labels.is_some());
        let mut labels = Vec::new();
        for c in parts {
            if c.t_obs != first.t_obs || c.t_pred != first.t_pred {
                return Err(Error::invalid("corpora with different window shapes"));
            }
            out.samples.extend(c.samples.iter().cloned());
            out.ids.extend(c.ids.iter().cloned());
            if let Some(l) = &c.labels {
                labels.extend_from_slice(l);
            }
            out.provenance.files.extend(c.provenance.files.iter().cloned());
        }
        out.provenance.window = first.provenance.window;
        out.provenance.overlap = first.provenance.overlap;
        out.labels = all_labeled.then_some(labels);
        Ok(out)
    }
}

struct Record {
    frame: i64,
    agent: String,
    point: Point,
    line: usize,
}

fn parse_number(tok: &str, path: &Path, line: usize, field: &str) -> Result<f64> {
    let v: f64 = tok.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("field `{field}` is not numeric: `{tok}`"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("field `{field}` is not finite"),
        });
    }
    Ok(v)
}

/// Parses TrajNet text (`frame_id agent_id x y` per line).
///
/// Each agent's records must appear with strictly increasing frame ids. The
/// frame step is the smallest positive frame difference seen in the file;
/// a larger jump starts a new trajectory. Pieces with fewer than two points
/// are dropped.
pub fn parse_trajnet(text: &str, path: &Path, dataset: &str, dt: f64) -> Result<Vec<Trajectory>> {
    let mut records = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        if toks.len() != 4 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("expected 4 fields, found {}", toks.len()),
            });
        }
        let frame = parse_number(toks[0], path, line, "frame_id")?;
        if frame.fract() != 0.0 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("frame_id `{}` is not an integer", toks[0]),
            });
        }
        let agent_num = parse_number(toks[1], path, line, "agent_id")?;
        let x = parse_number(toks[2], path, line, "x")?;
        let y = parse_number(toks[3], path, line, "y")?;
        records.push(Record {
            frame: frame as i64,
            agent: format!("{agent_num}"),
            point: [x, y],
            line,
        });
    }

    let mut by_agent: BTreeMap<String, Vec<&Record>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for r in &records {
        let entry = by_agent.entry(r.agent.clone()).or_insert_with(|| {
            order.push(r.agent.clone());
            Vec::new()
        });
        if let Some(prev) = entry.last() {
            if r.frame <= prev.frame {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: r.line,
                    msg: format!(
                        "agent {} frames not increasing ({} after {})",
                        r.agent, r.frame, prev.frame
                    ),
                });
            }
        }
        entry.push(r);
    }

    let step = by_agent
        .values()
        .flat_map(|rs| rs.windows(2).map(|w| w[1].frame - w[0].frame))
        .min();

    let mut out = Vec::new();
    for agent in order {
        let rs = &by_agent[&agent];
        let mut piece: Vec<Point> = Vec::new();
        let mut piece_idx = 0usize;
        let flush = |piece: &mut Vec<Point>, out: &mut Vec<Trajectory>, idx: &mut usize| -> Result<()> {
            if piece.len() >= 2 {
                let id = if *idx == 0 {
                    agent.clone()
                } else {
                    format!("{agent}#{idx}")
                };
                out.push(Trajectory::new(id, std::mem::take(piece), dt, dataset)?);
                *idx += 1;
            } else {
                piece.clear();
            }
            Ok(())
        };
        for (j, r) in rs.iter().enumerate() {
            if j > 0 && Some(r.frame - rs[j - 1].frame) != step {
                flush(&mut piece, &mut out, &mut piece_idx)?;
            }
            piece.push(r.point);
        }
        flush(&mut piece, &mut out, &mut piece_idx)?;
    }
    Ok(out)
}

/// Loads one TrajNet file. The dataset label is the file stem.
pub fn load_trajnet(path: impl AsRef<Path>, dt: f64) -> Result<Vec<Trajectory>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let dataset = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_trajnet(&text, path, &dataset, dt)
}

/// Serializes trajectories to TrajNet text. Frames advance by `frame_step`,
/// agents are numbered in input order.
pub fn to_trajnet_text(trajs: &[Trajectory], frame_step: i64) -> String {
    let mut rows: Vec<(i64, usize, Point)> = Vec::new();
    let mut frame0 = 0i64;
    for (a, t) in trajs.iter().enumerate() {
        for (j, p) in t.points.iter().enumerate() {
            rows.push((frame0 + j as i64 * frame_step, a, *p));
        }
        // keep agents apart in time so re-reading never merges them
        frame0 += (t.points.len() as i64 + 1) * frame_step;
    }
    rows.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.cmp(&y.1)));
    let mut s = String::new();
    for (f, a, p) in rows {
        let _ = writeln!(s, "{f} {a} {} {}", p[0], p[1]);
    }
    s
}

/// Cuts trajectories into `t_obs + t_pred + 1`-point windows.
///
/// Without overlap windows advance by the full window length; with overlap
/// they advance by one step. Short remainders are discarded.
pub fn segment(trajs: &[Trajectory], t_obs: usize, t_pred: usize, overlap: bool) -> Result<Corpus> {
    if t_obs < 1 || t_pred < 1 {
        return Err(Error::invalid("t_obs and t_pred must both be at least 1"));
    }
    let window = t_obs + t_pred + 1;
    let stride = if overlap { 1 } else { window };
    let name = trajs
        .first()
        .map(|t| t.source_dataset.clone())
        .unwrap_or_default();
    let mut corpus = Corpus::empty(name, t_obs, t_pred);
    corpus.provenance.overlap = overlap;
    for t in trajs {
        let mut start = 0;
        while start + window <= t.points.len() {
            let piece = Trajectory {
                points: t.points[start..start + window].to_vec(),
                ..t.clone()
            };
            corpus.samples.push(to_displacements(&piece, t_obs, t_pred)?);
            corpus
                .ids
                .push(format!("{}/{}/{}", t.source_dataset, t.agent_id, start));
            start += stride;
        }
    }
    Ok(corpus)
}

/// Loads and segments a set of TrajNet files into one corpus per file.
pub fn load_corpora(paths: &[PathBuf], dt: f64, t_obs: usize, t_pred: usize, overlap: bool) -> Result<Vec<Corpus>> {
    paths
        .iter()
        .map(|p| {
            let trajs = load_trajnet(p, dt)?;
            let mut c = segment(&trajs, t_obs, t_pred, overlap)?;
            c.name = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            c.provenance.files = vec![p.display().to_string()];
            Ok(c)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum SplitMode {
    TrainTestSplit {
        /// train / val / test proportions
        fractions: [f64; 3],
    },
    LeaveOneDatasetOut {
        held_out: String,
        #[serde(default = "default_val_fraction")]
        val_fraction: f64,
    },
}

fn default_val_fraction() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    #[serde(flatten)]
    pub mode: SplitMode,
    pub seed: u64,
}

impl SplitPlan {
    pub fn validate(&self) -> Result<()> {
        match &self.mode {
            SplitMode::TrainTestSplit { fractions } => {
                if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
                    return Err(Error::invalid("split fractions must lie in [0, 1]"));
                }
                let sum: f64 = fractions.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(Error::invalid(format!("split fractions sum to {sum}, not 1")));
                }
            }
            SplitMode::LeaveOneDatasetOut { val_fraction, .. } => {
                if !(0.0..1.0).contains(val_fraction) {
                    return Err(Error::invalid("val_fraction must lie in [0, 1)"));
                }
            }
        }
        Ok(())
    }
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed));
    idx
}

/// Partitions corpora into (train, val, test).
pub fn make_splits(corpora: &[Corpus], plan: &SplitPlan) -> Result<(Corpus, Corpus, Corpus)> {
    plan.validate()?;
    match &plan.mode {
        SplitMode::LeaveOneDatasetOut {
            held_out,
            val_fraction,
        } => {
            let test = corpora
                .iter()
                .find(|c| &c.name == held_out)
                .ok_or_else(|| Error::UnknownDataset(held_out.clone()))?
                .clone();
            let rest: Vec<&Corpus> = corpora.iter().filter(|c| &c.name != held_out).collect();
            if rest.is_empty() {
                return Err(Error::invalid("leave-one-dataset-out needs at least two corpora"));
            }
            let pool = Corpus::merge("train+val", &rest)?;
            let idx = shuffled(pool.len(), plan.seed);
            let n_val = (pool.len() as f64 * val_fraction).round() as usize;
            let (val_idx, train_idx) = idx.split_at(n_val);
            Ok((
                pool.select("train", train_idx),
                pool.select("val", val_idx),
                test,
            ))
        }
        SplitMode::TrainTestSplit { fractions } => {
            let refs: Vec<&Corpus> = corpora.iter().collect();
            let pool = Corpus::merge("all", &refs)?;
            let n = pool.len();
            let idx = shuffled(n, plan.seed);
            let n_val = (n as f64 * fractions[1]).round() as usize;
            let n_test = ((n as f64 * fractions[2]).round() as usize).min(n - n_val);
            let n_train = n - n_val - n_test;
            Ok((
                pool.select("train", &idx[..n_train]),
                pool.select("val", &idx[n_train..n_train + n_val]),
                pool.select("test", &idx[n_train + n_val..]),
            ))
        }
    }
}

/// Motion regime of a synthetic agent. Angles in radians, speeds in meters per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Regime {
    Straight { heading: f64, speed: f64 },
    Arc { heading: f64, speed: f64, turn_rate: f64 },
    /// Speed oscillates between 0 and `speed` with the given period (steps).
    StopAndGo { heading: f64, speed: f64, period: f64 },
    Static,
}

impl Regime {
    fn step(&self, t: usize, speed_scale: f64, heading_offset: f64) -> Point {
        let t = t as f64;
        let (heading, speed) = match *self {
            Regime::Straight { heading, speed } => (heading, speed),
            Regime::Arc {
                heading,
                speed,
                turn_rate,
            } => (heading + turn_rate * t, speed),
            Regime::StopAndGo {
                heading,
                speed,
                period,
            } => (
                heading,
                speed * 0.5 * (1.0 + (2.0 * std::f64::consts::PI * t / period).cos()),
            ),
            Regime::Static => return [0.0, 0.0],
        };
        let h = heading + heading_offset;
        let s = speed * speed_scale;
        [s * h.cos(), s * h.sin()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub regimes: Vec<Regime>,
    /// Mixing weights, one per regime (normalized internally).
    pub weights: Vec<f64>,
    pub t_obs: usize,
    pub t_pred: usize,
    /// Per-sample multiplicative speed jitter, uniform in `1 ± speed_jitter`.
    pub speed_jitter: f64,
    /// Per-sample heading jitter, uniform in `± heading_jitter` radians.
    pub heading_jitter: f64,
    /// Std of i.i.d. Gaussian noise added to every position.
    pub position_noise: f64,
}

impl ScenarioSpec {
    fn base(regimes: Vec<Regime>) -> Self {
        let n = regimes.len();
        Self {
            regimes,
            weights: vec![1.0; n],
            t_obs: DEFAULT_T_OBS,
            t_pred: DEFAULT_T_PRED,
            speed_jitter: 0.1,
            heading_jitter: 0.05,
            position_noise: 0.01,
        }
    }

    /// Straight east vs straight north.
    pub fn two_regime() -> Self {
        Self::base(vec![
            Regime::Straight {
                heading: 0.0,
                speed: 0.5,
            },
            Regime::Straight {
                heading: std::f64::consts::FRAC_PI_2,
                speed: 0.5,
            },
        ])
    }

    /// Straight walk, left-hand arc and stop-and-go, all starting eastwards.
    pub fn three_regime() -> Self {
        Self::base(vec![
            Regime::Straight {
                heading: 0.0,
                speed: 0.5,
            },
            Regime::Arc {
                heading: 0.0,
                speed: 0.5,
                turn_rate: 0.15,
            },
            Regime::StopAndGo {
                heading: 0.0,
                speed: 0.5,
                period: 16.0,
            },
        ])
    }

    /// Noise-free constant velocity agents in random directions.
    pub fn constant_velocity() -> Self {
        let mut s = Self::base(vec![Regime::Straight {
            heading: 0.0,
            speed: 0.5,
        }]);
        s.heading_jitter = std::f64::consts::PI;
        s.speed_jitter = 0.5;
        s.position_noise = 0.0;
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.regimes.is_empty() || self.regimes.len() != self.weights.len() {
            return Err(Error::invalid("scenario needs one weight per regime"));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) || self.weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::invalid("scenario weights must be non-negative and not all zero"));
        }
        if self.t_obs < 1 || self.t_pred < 1 {
            return Err(Error::invalid("t_obs and t_pred must both be at least 1"));
        }
        Ok(())
    }
}

fn draw_regime(weights: &[f64], rng: &mut Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Generates `n` labeled synthetic trajectories of `t_obs + t_pred + 1` points.
pub fn synth_trajectories(spec: &ScenarioSpec, n: usize, seed: u64) -> Result<(Vec<Trajectory>, Vec<usize>)> {
    spec.validate()?;
    let mut rng = seed::rng(seed);
    let steps = spec.t_obs + spec.t_pred;
    let mut trajs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let r = draw_regime(&spec.weights, &mut rng);
        let speed_scale = 1.0 + spec.speed_jitter * (2.0 * rng.random::<f64>() - 1.0);
        let heading_offset = spec.heading_jitter * (2.0 * rng.random::<f64>() - 1.0);
        let start = [
            10.0 * (2.0 * rng.random::<f64>() - 1.0),
            10.0 * (2.0 * rng.random::<f64>() - 1.0),
        ];
        let mut p = start;
        let mut points = Vec::with_capacity(steps + 1);
        points.push(p);
        for t in 0..steps {
            let d = spec.regimes[r].step(t, speed_scale, heading_offset);
            p = [p[0] + d[0], p[1] + d[1]];
            points.push(p);
        }
        if spec.position_noise > 0.0 {
            for q in points.iter_mut() {
                q[0] += spec.position_noise * seed::normal(&mut rng);
                q[1] += spec.position_noise * seed::normal(&mut rng);
            }
        }
        trajs.push(Trajectory::new(format!("{i}"), points, crate::trajectory::DEFAULT_DT, "synth")?);
        labels.push(r);
    }
    Ok((trajs, labels))
}

/// Synthetic corpus with ground-truth regime labels.
pub fn synth_corpus(spec: &ScenarioSpec, n: usize, seed: u64) -> Result<Corpus> {
    let (trajs, labels) = synth_trajectories(spec, n, seed)?;
    let mut corpus = segment(&trajs, spec.t_obs, spec.t_pred, false)?;
    corpus.name = "synth".into();
    corpus.labels = Some(labels);
    Ok(corpus)
}
