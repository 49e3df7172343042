use serde::{Deserialize, Serialize};

use super::config::{ClustererKind, ExperimentConfig};
use crate::cluster::{dbi, select_k, select_k_with, ClusterMethod, ClusterSpace, DbiTable};
use crate::error::{Error, Result};
use crate::forecasters::{
    cf_generative_train, cf_sample, cvm_predict, ours_propose, ours_train, red_predict, red_train, Forecaster,
    ForecasterKind, Proposal, ProposalSet,
};
use crate::fp_scgan::{train_fp_scgan, FpScGanModel};
use crate::ingest::{load_corpora, make_splits, synth_corpus, Corpus, SplitMode};
use crate::metrics::{displacement_errors, topk_by_likelihood, topk_by_sampling, EvalReport, EvalRow, RunMetrics};
use crate::ranking::{
    anet_train, pseudo_label, rank, ranking_accuracy, Anet, ForecasterSampler, NeighborBank, RankMethod,
    RankResources,
};
use crate::seed::derive_seed;
use crate::trajectory::{flatten_steps, Point};

pub const ARTIFACT_VERSION: u32 = 1;

pub struct Splits {
    pub train: Corpus,
    pub val: Corpus,
    pub test: Corpus,
    /// Names of the input corpora, joined with `+`.
    pub source: String,
}

/// Loads the configured data and applies the split plan.
pub fn load_splits(cfg: &ExperimentConfig) -> Result<Splits> {
    let d = &cfg.data;
    let corpora = if d.paths.is_empty() {
        let s = d.synth.as_ref().ok_or_else(|| Error::Config("no data source".into()))?;
        vec![synth_corpus(&s.scenario, s.n, s.seed)?]
    } else {
        load_corpora(&d.paths, d.dt, d.t_obs, d.t_pred, d.overlap)?
    };
    let source = corpora.iter().map(|c| c.name.as_str()).collect::<Vec<_>>().join("+");
    let (train, val, test) = make_splits(&corpora, &d.split)?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::Config("split leaves the train or test set empty".into()));
    }
    Ok(Splits {
        train,
        val,
        test,
        source,
    })
}

/// Seed of evaluation run `run`.
pub fn run_seed(cfg: &ExperimentConfig, run: usize) -> u64 {
    derive_seed(cfg.seed, "run", run as u64)
}

/// Number of evaluation runs: deterministic baselines need only one.
pub fn effective_runs(cfg: &ExperimentConfig) -> usize {
    if cfg.forecaster.kind == ForecasterKind::Cvm {
        1
    } else {
        cfg.runs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterArtifact {
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub method: String,
    pub k: usize,
    pub dbi: DbiTable,
    pub space: ClusterSpace,
    /// FP SC-GAN model when the space lives in its feature space.
    pub encoder: Option<FpScGanModel>,
}

impl ClusterArtifact {
    pub fn check(&self, cfg: &ExperimentConfig) -> Result<()> {
        let want = cfg.cluster_hash();
        if self.config_hash != want {
            return Err(Error::Lineage {
                expected: want,
                found: self.config_hash.clone(),
            });
        }
        Ok(())
    }
}

/// Clusters the training corpus, choosing K by DBI unless it is fixed.
pub fn run_cluster(cfg: &ExperimentConfig, train: &Corpus) -> Result<ClusterArtifact> {
    let c = &cfg.clustering;
    let seed = derive_seed(cfg.seed, "cluster", 0);
    let grid: Vec<usize> = match c.k {
        Some(k) => vec![k],
        None => c.k_grid.clone(),
    };
    let (space, encoder, k, table) = match c.method {
        ClustererKind::Kmeans | ClustererKind::TsKmeans => {
            let method = match c.method {
                ClustererKind::Kmeans => ClusterMethod::Kmeans {
                    max_iter: c.kmeans_max_iter,
                    tol: c.kmeans_tol,
                },
                _ => ClusterMethod::TsKmeans(c.ts_kmeans),
            };
            let (k, table) = select_k(&train.samples, &method, &grid, c.runs, seed)?;
            (method.run(&train.samples, k, seed)?, None, k, table)
        }
        ClustererKind::FpScgan => {
            let (k, table) = select_k_with(&grid, c.runs, seed, |k, s| {
                let (m, space) = train_fp_scgan(train, k, &c.fp_scgan, s)?;
                let refs: Vec<&[Point]> = train.samples.iter().map(|x| x.deltas.as_slice()).collect();
                let reps = match space.metric {
                    crate::cluster::Metric::FeatureL2 => m.embed_steps(&refs)?,
                    _ => refs.iter().map(|r| flatten_steps(r)).collect(),
                };
                dbi(&space, &reps)
            })?;
            let (m, space) = train_fp_scgan(train, k, &c.fp_scgan, seed)?;
            (space, Some(m), k, table)
        }
    };
    Ok(ClusterArtifact {
        format_version: ARTIFACT_VERSION,
        config_hash: cfg.cluster_hash(),
        seed,
        method: c.method.name().into(),
        k,
        dbi: table,
        space,
        encoder,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub config_hash: String,
    pub cluster_hash: Option<String>,
    pub run: usize,
    pub seed: u64,
    pub space_id: Option<String>,
    pub forecaster: Forecaster,
    pub anet: Option<Anet>,
}

impl ModelArtifact {
    pub fn check(&self, cfg: &ExperimentConfig, cluster: Option<&ClusterArtifact>) -> Result<()> {
        let want = cfg.model_hash();
        if self.config_hash != want {
            return Err(Error::Lineage {
                expected: want,
                found: self.config_hash.clone(),
            });
        }
        if let (Some(id), Some(c)) = (&self.space_id, cluster) {
            if *id != c.space.id {
                return Err(Error::Lineage {
                    expected: c.space.id.clone(),
                    found: id.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Trains the configured forecaster (and the ranking classifier if needed) for one run.
pub fn run_train(cfg: &ExperimentConfig, train: &Corpus, cluster: Option<&ClusterArtifact>, run: usize) -> Result<ModelArtifact> {
    let seed = run_seed(cfg, run);
    let mut fc = cfg.forecaster.clone();
    fc.seed = seed;
    let kind = fc.kind;
    let need_cluster = || cluster.ok_or_else(|| Error::Config(format!("{} needs a cluster artifact", kind.name())));
    let forecaster = match kind {
        ForecasterKind::Cvm => Forecaster::Cvm {
            sigma: fc.cvm_sigma,
            t_pred: fc.t_pred,
        },
        ForecasterKind::Red => Forecaster::Red(Box::new(red_train(train, &fc)?)),
        ForecasterKind::CfGan | ForecasterKind::CfVae => Forecaster::Generative(Box::new(cf_generative_train(train, &fc)?)),
        ForecasterKind::GanOurs | ForecasterKind::VaeOurs => {
            let c = need_cluster()?;
            c.check(cfg)?;
            Forecaster::Generative(Box::new(ours_train(train, &c.space, &fc)?))
        }
    };
    let anet = match (&forecaster, cfg.ranking.method) {
        (Forecaster::Generative(m), RankMethod::Anet) if kind.is_conditioned() => {
            let c = need_cluster()?;
            let sampler = ForecasterSampler {
                model: m,
                observations: &train.samples,
            };
            Some(anet_train(&sampler, &c.space, &cfg.ranking.anet, derive_seed(seed, "anet", 0))?)
        }
        _ => None,
    };
    Ok(ModelArtifact {
        format_version: ARTIFACT_VERSION,
        config_hash: cfg.model_hash(),
        cluster_hash: cluster.map(|c| c.config_hash.clone()),
        run,
        seed,
        space_id: forecaster.space_id().map(str::to_string),
        forecaster,
        anet,
    })
}

/// Proposals for one test sample, with the data needed to score them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleProposals {
    pub id: String,
    pub truth: Vec<Point>,
    pub set: ProposalSet,
}

/// Generates proposal sets for every test sample.
pub fn run_propose(
    cfg: &ExperimentConfig,
    model: &ModelArtifact,
    cluster: Option<&ClusterArtifact>,
    test: &Corpus,
) -> Result<Vec<SampleProposals>> {
    test.samples
        .iter()
        .zip(&test.ids)
        .enumerate()
        .map(|(i, (s, id))| {
            let seed = derive_seed(model.seed, "propose", i as u64);
            let set = match &model.forecaster {
                Forecaster::Cvm { sigma, t_pred } => {
                    let p = cvm_predict(s, *t_pred, *sigma)?;
                    ProposalSet::from_samples("cvm", s, vec![p.deltas])
                }
                Forecaster::Red(m) => ProposalSet::from_samples("red", s, vec![red_predict(m, s)?.deltas]),
                Forecaster::Generative(m) if m.kind.is_conditioned() => {
                    let c = cluster.ok_or_else(|| Error::Config("conditioned proposals need a cluster artifact".into()))?;
                    ours_propose(m, s, &c.space, cfg.metrics.n_z, seed)?
                }
                Forecaster::Generative(m) => {
                    let samples = cf_sample(m, s, cfg.metrics.samples, seed)?;
                    ProposalSet::from_samples(m.kind.name(), s, samples.into_iter().map(|x| x.deltas).collect())
                }
            };
            Ok(SampleProposals {
                id: id.clone(),
                truth: s.future_deltas().to_vec(),
                set,
            })
        })
        .collect()
}

/// A scored proposal set: one JSON line per test sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSample {
    pub id: String,
    pub origin: Point,
    pub observed: Vec<Point>,
    pub truth: Vec<Point>,
    pub proposals: Vec<Proposal>,
    pub probabilities: Option<Vec<f64>>,
    pub ade: Vec<f64>,
    pub fde: Vec<f64>,
    pub pseudo_label: Option<usize>,
}

impl RankedSample {
    pub fn set(&self) -> ProposalSet {
        let mut s = ProposalSet::new("ranked", self.proposals.clone(), Some(self.observed.clone()), self.origin);
        s.probabilities = self.probabilities.clone();
        s
    }
}

/// Ranks conditioned proposal sets and scores every proposal.
pub fn run_rank(
    cfg: &ExperimentConfig,
    model: &ModelArtifact,
    cluster: Option<&ClusterArtifact>,
    train: &Corpus,
    test: &Corpus,
    proposals: &[SampleProposals],
) -> Result<Vec<RankedSample>> {
    let conditioned = model.forecaster.kind().is_conditioned();
    let bank = match (conditioned, cfg.ranking.method, cluster) {
        (true, RankMethod::NeighDs, Some(c)) => Some(NeighborBank::displacement(train, &c.space, cfg.ranking.operand)?),
        (true, RankMethod::NeighFs, Some(c)) => {
            let enc = c
                .encoder
                .as_ref()
                .ok_or_else(|| Error::Config("neigh-fs ranking needs fp-scgan clustering".into()))?;
            Some(NeighborBank::features(train, &c.space, enc)?)
        }
        _ => None,
    };
    proposals
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (set, label) = if conditioned {
                let c = cluster.ok_or_else(|| Error::Config("ranking needs a cluster artifact".into()))?;
                let res = RankResources {
                    space: &c.space,
                    encoder: c.encoder.as_ref(),
                    bank: bank.as_ref(),
                    anet: model.anet.as_ref(),
                };
                let label = pseudo_label(&c.space, &test.samples[i], c.encoder.as_ref())?;
                (rank(&p.set, &cfg.ranking, res)?, Some(label))
            } else {
                (p.set.clone(), None)
            };
            let errs = set
                .proposals
                .iter()
                .map(|q| displacement_errors(set.origin, &q.deltas, &p.truth))
                .collect::<Result<Vec<_>>>()?;
            Ok(RankedSample {
                id: p.id.clone(),
                origin: set.origin,
                observed: set.observed.clone().unwrap_or_default(),
                truth: p.truth.clone(),
                proposals: set.proposals.clone(),
                probabilities: set.probabilities.clone(),
                ade: errs.iter().map(|e| e.0).collect(),
                fde: errs.iter().map(|e| e.1).collect(),
                pseudo_label: label,
            })
        })
        .collect()
}

/// Test-set means of the Top-1 / Top-k protocols for one run.
pub fn score_run(cfg: &ExperimentConfig, seed: u64, ranked: &[RankedSample]) -> Result<RunMetrics> {
    if ranked.is_empty() {
        return Err(Error::invalid("no ranked samples to score"));
    }
    let (mut a1, mut f1, mut ak, mut fk) = (0.0, 0.0, 0.0, 0.0);
    let mut labeled = Vec::new();
    for r in ranked {
        let set = r.set();
        let k = cfg.metrics.top_k.min(set.len());
        let (t1, tk) = if set.probabilities.is_some() {
            (topk_by_likelihood(&set, &r.truth, 1)?, topk_by_likelihood(&set, &r.truth, k)?)
        } else {
            (topk_by_sampling(&set, &r.truth, 1)?, topk_by_sampling(&set, &r.truth, k)?)
        };
        a1 += t1.0;
        f1 += t1.1;
        ak += tk.0;
        fk += tk.1;
        if let Some(l) = r.pseudo_label {
            labeled.push((set, l));
        }
    }
    let n = ranked.len() as f64;
    Ok(RunMetrics {
        seed,
        top1_ade: a1 / n,
        top1_fde: f1 / n,
        top3_ade: ak / n,
        top3_fde: fk / n,
        ranking_accuracy: if labeled.is_empty() {
            None
        } else {
            Some(ranking_accuracy(&labeled)?)
        },
    })
}

/// Everything one evaluation produces, kept in memory for persistence.
pub struct Evaluation {
    pub cluster: Option<ClusterArtifact>,
    pub models: Vec<ModelArtifact>,
    pub ranked: Vec<Vec<RankedSample>>,
    pub report: EvalReport,
}

/// Runs ingest, cluster, train, propose, rank and score for every run.
pub fn evaluate(cfg: &ExperimentConfig) -> Result<Evaluation> {
    cfg.validate()?;
    let splits = load_splits(cfg)?;
    let cluster = if cfg.forecaster.kind.is_conditioned() {
        Some(run_cluster(cfg, &splits.train)?)
    } else {
        None
    };
    let mut models = Vec::new();
    let mut ranked = Vec::new();
    for run in 0..effective_runs(cfg) {
        let model = run_train(cfg, &splits.train, cluster.as_ref(), run)?;
        let props = run_propose(cfg, &model, cluster.as_ref(), &splits.test)?;
        ranked.push(run_rank(cfg, &model, cluster.as_ref(), &splits.train, &splits.test, &props)?);
        models.push(model);
    }
    let report = build_report(cfg, cluster.as_ref(), &splits.source, &ranked)?;
    Ok(Evaluation {
        cluster,
        models,
        ranked,
        report,
    })
}

/// Aggregates the scored runs (run `r` at index `r`) into the report.
pub fn build_report(
    cfg: &ExperimentConfig,
    cluster: Option<&ClusterArtifact>,
    source: &str,
    ranked: &[Vec<RankedSample>],
) -> Result<EvalReport> {
    let kind = cfg.forecaster.kind;
    let runs = ranked
        .iter()
        .enumerate()
        .map(|(r, rs)| score_run(cfg, run_seed(cfg, r), rs))
        .collect::<Result<Vec<_>>>()?;
    let ranking = if kind.is_conditioned() {
        cfg.ranking.method.name()
    } else if kind.is_generative() {
        "sampling"
    } else {
        "none"
    };
    let (clustering, k) = match cluster {
        Some(c) => (c.method.clone(), c.k),
        None => ("none".to_string(), 0),
    };
    let dataset = match &cfg.data.split.mode {
        SplitMode::LeaveOneDatasetOut { held_out, .. } => held_out.clone(),
        _ => source.to_string(),
    };
    let row = EvalRow::from_runs(dataset, kind.name(), ranking, clustering, k, runs)?;
    Ok(EvalReport {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        lambda: cfg.forecaster.lambda,
        beta: cfg.forecaster.beta,
        tau: cfg.ranking.tau,
        rows: vec![row],
    })
}
