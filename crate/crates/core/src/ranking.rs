//! Post-hoc probabilities for conditioned proposal sets: inverse-distance
//! softmax over centroid or nearest-neighbor distances, or an auxiliary
//! classifier trained on generated samples.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::cluster::{assign, l2, ClusterSpace, Metric, Sample};
use crate::error::{Error, Result};
use crate::forecasters::{minibatches, ProposalSet, Seq2Seq};
use crate::fp_scgan::{draw_classes, embed, embed_parts, sample_displacements, FpScGanModel};
use crate::ingest::Corpus;
use crate::nn::{losses, softmax, Adam, AdamConfig, Graph, Mlp, ParamStore, Tensor};
use crate::seed::{self, Rng};
use crate::trajectory::{flatten_steps, DisplacementSeries, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RankMethod {
    #[default]
    Cent,
    NeighDs,
    NeighFs,
    Anet,
}

impl RankMethod {
    pub fn name(self) -> &'static str {
        match self {
            RankMethod::Cent => "cent",
            RankMethod::NeighDs => "neigh-ds",
            RankMethod::NeighFs => "neigh-fs",
            RankMethod::Anet => "anet",
        }
    }
}

/// What part of a series the distance rankers compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Operand {
    /// Predicted future only, against the future segment of centroids / members.
    #[default]
    Future,
    /// Observation followed by the prediction, against full series.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnetSpec {
    pub hidden: Vec<usize>,
    /// Generated training samples per cluster.
    pub per_class: usize,
    pub epochs: usize,
    pub batch: usize,
    pub adam: AdamConfig,
}

impl Default for AnetSpec {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            per_class: 50,
            epochs: 30,
            batch: 64,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankerConfig {
    pub method: RankMethod,
    pub tau: f64,
    pub n_neig: usize,
    pub operand: Operand,
    pub anet: AnetSpec,
}

impl Default for RankerConfig {
    fn default() -> Self {
        Self {
            method: RankMethod::Cent,
            tau: 1.0,
            n_neig: 20,
            operand: Operand::Future,
            anet: AnetSpec::default(),
        }
    }
}

impl RankerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if self.n_neig == 0 {
            return Err(Error::Config("n_neig must be at least 1".into()));
        }
        if self.anet.per_class == 0 || self.anet.batch == 0 || self.anet.hidden.contains(&0) {
            return Err(Error::Config("anet sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Soft-argmax over inverse distances at temperature `tau`.
///
/// A zero distance is the limit of an infinite logit: every proposal at
/// distance zero shares the mass uniformly and the rest get nothing.
pub fn inverse_distance_softmax(m: &[f64], tau: f64) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let inv: Vec<f64> = m.iter().map(|&d| 1.0 / d).collect();
    let hits = inv.iter().filter(|v| v.is_infinite()).count();
    if hits > 0 {
        let share = 1.0 / hits as f64;
        return inv.iter().map(|v| if v.is_infinite() { share } else { 0.0 }).collect();
    }
    let top = inv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = inv.iter().map(|&v| ((v - top) / tau).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn cluster_of(set: &ProposalSet, i: usize) -> Result<usize> {
    set.proposals[i]
        .cluster
        .ok_or_else(|| Error::invalid("ranking needs cluster-conditioned proposals"))
}

fn observed(set: &ProposalSet) -> Result<&[Point]> {
    set.observed
        .as_deref()
        .ok_or_else(|| Error::invalid("full-series operand needs the observation in the proposal set"))
}

fn operand_vec(set: &ProposalSet, i: usize, operand: Operand) -> Result<Vec<f64>> {
    let fut = &set.proposals[i].deltas;
    Ok(match operand {
        Operand::Future => flatten_steps(fut),
        Operand::Full => {
            let mut v = flatten_steps(observed(set)?);
            v.extend(flatten_steps(fut));
            v
        }
    })
}

fn with_probabilities(set: &ProposalSet, p: Vec<f64>) -> ProposalSet {
    let mut out = set.clone();
    out.probabilities = Some(p);
    out
}

fn check_space(set: &ProposalSet, space: &ClusterSpace) -> Result<()> {
    set.validate()?;
    if set.len() != space.k {
        return Err(Error::LengthMismatch {
            what: "proposals",
            expected: space.k,
            actual: set.len(),
        });
    }
    Ok(())
}

/// Per-proposal distance to its conditioning cluster's centroid.
pub fn centroid_distances(set: &ProposalSet, space: &ClusterSpace, operand: Operand) -> Result<Vec<f64>> {
    check_space(set, space)?;
    (0..set.len())
        .map(|i| {
            let c = cluster_of(set, i)?;
            let x = operand_vec(set, i, operand)?;
            let cen = match operand {
                Operand::Future => space.future_centroid(c)?,
                Operand::Full => {
                    if matches!(space.metric, Metric::FeatureL2) {
                        return Err(Error::RepresentationMismatch(space.metric.name()));
                    }
                    &space.centroids[c][..]
                }
            };
            if cen.len() != x.len() {
                return Err(Error::LengthMismatch {
                    what: "centroid operand",
                    expected: cen.len(),
                    actual: x.len(),
                });
            }
            Ok(l2(&x, cen))
        })
        .collect()
}

/// Centroid ranking in a displacement-space cluster space.
pub fn rank_centroids(set: &ProposalSet, space: &ClusterSpace, tau: f64, operand: Operand) -> Result<ProposalSet> {
    let m = centroid_distances(set, space, operand)?;
    Ok(with_probabilities(set, inverse_distance_softmax(&m, tau)))
}

/// Centroid ranking in an FP SC-GAN feature space: each proposal is embedded
/// as observation followed by prediction.
pub fn rank_centroids_features(set: &ProposalSet, model: &FpScGanModel, space: &ClusterSpace, tau: f64) -> Result<ProposalSet> {
    check_space(set, space)?;
    if !matches!(space.metric, Metric::FeatureL2) {
        return Err(Error::RepresentationMismatch(space.metric.name()));
    }
    let obs = observed(set)?;
    let m = (0..set.len())
        .map(|i| {
            let f = embed_parts(model, obs, &set.proposals[i].deltas)?;
            Ok(l2(&f, &space.centroids[cluster_of(set, i)?]))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(with_probabilities(set, inverse_distance_softmax(&m, tau)))
}

/// Per-cluster reference vectors for neighbor ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborBank {
    pub space_id: String,
    /// `Some` for displacement banks; feature banks embed with the FP SC-GAN encoder.
    pub operand: Option<Operand>,
    pub members: Vec<Vec<Vec<f64>>>,
}

impl NeighborBank {
    /// Training series of each cluster in displacement space.
    pub fn displacement(corpus: &Corpus, space: &ClusterSpace, operand: Operand) -> Result<Self> {
        if corpus.len() != space.n() {
            return Err(Error::LengthMismatch {
                what: "bank corpus",
                expected: space.n(),
                actual: corpus.len(),
            });
        }
        let members = space
            .member_index
            .iter()
            .map(|idx| {
                idx.iter()
                    .map(|&i| {
                        let s = &corpus.samples[i];
                        match operand {
                            Operand::Future => flatten_steps(s.future_deltas()),
                            Operand::Full => flatten_steps(&s.deltas),
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            space_id: space.id.clone(),
            operand: Some(operand),
            members,
        })
    }

    /// Encoder features of each cluster's training series.
    pub fn features(corpus: &Corpus, space: &ClusterSpace, model: &FpScGanModel) -> Result<Self> {
        if corpus.len() != space.n() {
            return Err(Error::LengthMismatch {
                what: "bank corpus",
                expected: space.n(),
                actual: corpus.len(),
            });
        }
        let refs: Vec<&[Point]> = corpus.samples.iter().map(|s| s.deltas.as_slice()).collect();
        let feats = model.embed_steps(&refs)?;
        let members = space
            .member_index
            .iter()
            .map(|idx| idx.iter().map(|&i| feats[i].clone()).collect())
            .collect();
        Ok(Self {
            space_id: space.id.clone(),
            operand: None,
            members,
        })
    }

    pub fn k(&self) -> usize {
        self.members.len()
    }
}

/// Mean of the `n_neig` smallest distances from `x` to `members`, summed in
/// ascending order. `n_neig` is capped at the member count.
pub fn mean_nearest(x: &[f64], members: &[Vec<f64>], n_neig: usize) -> Option<f64> {
    if members.is_empty() {
        return None;
    }
    let mut d: Vec<f64> = members.iter().map(|m| l2(x, m)).collect();
    let n = n_neig.min(d.len()).max(1);
    if n < d.len() {
        d.select_nth_unstable_by(n - 1, f64::total_cmp);
    }
    let head = &mut d[..n];
    head.sort_unstable_by(f64::total_cmp);
    Some(head.iter().sum::<f64>() / n as f64)
}

/// Per-proposal mean distance to the nearest members of its cluster.
pub fn neighbor_distances(set: &ProposalSet, bank: &NeighborBank, n_neig: usize, model: Option<&FpScGanModel>) -> Result<Vec<f64>> {
    set.validate()?;
    if set.len() != bank.k() {
        return Err(Error::LengthMismatch {
            what: "proposals",
            expected: bank.k(),
            actual: set.len(),
        });
    }
    if n_neig == 0 {
        return Err(Error::invalid("n_neig must be at least 1"));
    }
    (0..set.len())
        .map(|i| {
            let c = cluster_of(set, i)?;
            let x = match (bank.operand, model) {
                (Some(op), _) => operand_vec(set, i, op)?,
                (None, Some(m)) => embed_parts(m, observed(set)?, &set.proposals[i].deltas)?,
                (None, None) => return Err(Error::invalid("feature bank needs the FP SC-GAN encoder")),
            };
            if let Some(first) = bank.members[c].first() {
                if first.len() != x.len() {
                    return Err(Error::LengthMismatch {
                        what: "neighbor operand",
                        expected: first.len(),
                        actual: x.len(),
                    });
                }
            }
            mean_nearest(&x, &bank.members[c], n_neig).ok_or(Error::EmptyCluster(c))
        })
        .collect()
}

pub fn rank_neighbors(
    set: &ProposalSet,
    bank: &NeighborBank,
    tau: f64,
    n_neig: usize,
    model: Option<&FpScGanModel>,
) -> Result<ProposalSet> {
    let m = neighbor_distances(set, bank, n_neig, model)?;
    Ok(with_probabilities(set, inverse_distance_softmax(&m, tau)))
}

/// A generator that can synthesize future displacements for given classes.
pub trait ConditionalSampler {
    fn classes(&self) -> usize;
    fn t_pred(&self) -> usize;
    fn sample_futures(&self, classes: &[usize], rng: &mut Rng) -> Result<Vec<Vec<Point>>>;
}

impl ConditionalSampler for FpScGanModel {
    fn classes(&self) -> usize {
        self.k
    }

    fn t_pred(&self) -> usize {
        self.t_pred
    }

    fn sample_futures(&self, classes: &[usize], rng: &mut Rng) -> Result<Vec<Vec<Point>>> {
        classes
            .iter()
            .map(|&c| {
                let s = sample_displacements(self, c, 1, rng.random())?;
                Ok(s[0].future_deltas().to_vec())
            })
            .collect()
    }
}

/// A conditioned forecaster paired with observations to continue; each draw
/// picks an observation uniformly.
pub struct ForecasterSampler<'a> {
    pub model: &'a Seq2Seq,
    pub observations: &'a [DisplacementSeries],
}

impl ConditionalSampler for ForecasterSampler<'_> {
    fn classes(&self) -> usize {
        self.model.k
    }

    fn t_pred(&self) -> usize {
        self.model.t_pred
    }

    fn sample_futures(&self, classes: &[usize], rng: &mut Rng) -> Result<Vec<Vec<Point>>> {
        if self.observations.is_empty() {
            return Err(Error::invalid("sampler needs at least one observation"));
        }
        let obs: Vec<&DisplacementSeries> = classes
            .iter()
            .map(|_| &self.observations[rng.random_range(0..self.observations.len())])
            .collect();
        let z = self.model.noise(classes.len(), rng);
        self.model.generate(&obs, Some(classes), &z)
    }
}

/// Auxiliary classifier over flattened future displacements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anet {
    pub k: usize,
    pub t_pred: usize,
    pub space_id: String,
    pub store: ParamStore,
    pub mlp: Mlp,
    pub trained: bool,
    /// Mean cross-entropy per epoch.
    pub log: Vec<f64>,
}

impl Anet {
    /// Class probabilities for each flattened future.
    pub fn predict(&self, futures: &[&[Point]]) -> Result<Vec<Vec<f64>>> {
        if !self.trained {
            return Err(Error::Untrained("anet"));
        }
        if futures.is_empty() {
            return Ok(Vec::new());
        }
        let rows: Vec<Vec<f64>> = futures.iter().map(|f| flatten_steps(f)).collect();
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_rows(&rows));
        let logits = self.mlp.forward(&mut g, &self.store, x)?;
        let v = g.value(logits);
        Ok((0..rows.len()).map(|r| softmax(v.row(r))).collect())
    }
}

/// Trains the classifier on samples drawn per the space's cluster weights.
pub fn anet_train(sampler: &dyn ConditionalSampler, space: &ClusterSpace, spec: &AnetSpec, seed: u64) -> Result<Anet> {
    let k = space.k;
    if sampler.classes() != k {
        return Err(Error::LengthMismatch {
            what: "sampler classes",
            expected: k,
            actual: sampler.classes(),
        });
    }
    let t_pred = sampler.t_pred();
    let mut rng = seed::child_rng(seed, "anet/data", 0);
    let labels = draw_classes(&space.empirical_weights, spec.per_class * k, &mut rng)?;
    let data: Vec<Vec<f64>> = sampler
        .sample_futures(&labels, &mut rng)?
        .iter()
        .map(|f| flatten_steps(f))
        .collect();
    let mut init = seed::child_rng(seed, "anet/init", 0);
    let mut store = ParamStore::new();
    let mut dims = vec![2 * t_pred];
    dims.extend(&spec.hidden);
    dims.push(k);
    let mlp = Mlp::new(&mut store, "anet", &dims, &mut init);
    let mut model = Anet {
        k,
        t_pred,
        space_id: space.id.clone(),
        store,
        mlp,
        trained: false,
        log: Vec::new(),
    };
    let mut opt = Adam::new(spec.adam);
    let mut batch_rng = seed::child_rng(seed, "anet/batches", 0);
    for epoch in 0..spec.epochs {
        let mut total = 0.0;
        let batches = minibatches(data.len(), spec.batch, &mut batch_rng);
        let count = batches.len();
        for (step, idx) in batches.into_iter().enumerate() {
            let mut g = Graph::new();
            let x = g.constant(Tensor::from_rows(&idx.iter().map(|&i| data[i].clone()).collect::<Vec<_>>()));
            let logits = model.mlp.forward(&mut g, &model.store, x)?;
            let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let loss = losses::xent(&mut g, logits, &y);
            let lv = g.value(loss).item();
            crate::forecasters::check_loss(lv, "anet loss", epoch, step)?;
            g.backward(loss);
            g.accumulate(&mut model.store);
            opt.step(&mut model.store)?;
            total += lv;
        }
        model.log.push(total / count.max(1) as f64);
    }
    model.trained = true;
    Ok(model)
}

/// Probability of each proposal under its own class, renormalized over the set.
pub fn anet_rank(anet: &Anet, set: &ProposalSet) -> Result<ProposalSet> {
    if !anet.trained {
        return Err(Error::Untrained("anet"));
    }
    set.validate()?;
    if set.len() != anet.k {
        return Err(Error::LengthMismatch {
            what: "proposals",
            expected: anet.k,
            actual: set.len(),
        });
    }
    if set.len() == 1 {
        return Ok(with_probabilities(set, vec![1.0]));
    }
    let futures: Vec<&[Point]> = set.proposals.iter().map(|p| p.deltas.as_slice()).collect();
    let probs = anet.predict(&futures)?;
    let raw = (0..set.len())
        .map(|i| Ok(probs[i][cluster_of(set, i)?]))
        .collect::<Result<Vec<f64>>>()?;
    let s: f64 = raw.iter().sum();
    let p = if s > 0.0 {
        raw.iter().map(|v| v / s).collect()
    } else {
        vec![1.0 / set.len() as f64; set.len()]
    };
    Ok(with_probabilities(set, p))
}

/// Ground-truth pseudo-label: the cluster the full series is assigned to.
pub fn pseudo_label(space: &ClusterSpace, truth: &DisplacementSeries, model: Option<&FpScGanModel>) -> Result<usize> {
    match space.metric {
        Metric::FeatureL2 => {
            let m = model.ok_or_else(|| Error::invalid("feature space pseudo-labels need the FP SC-GAN encoder"))?;
            assign(space, Sample::Feature(&embed(m, truth)?))
        }
        _ => assign(space, Sample::Series(truth)),
    }
}

/// Cluster id of the most probable proposal, ties to the smallest id.
pub fn top_cluster(set: &ProposalSet) -> Result<usize> {
    let p = set
        .probabilities
        .as_ref()
        .ok_or_else(|| Error::invalid("proposal set has no probabilities"))?;
    let mut best: Option<(f64, usize)> = None;
    for (i, &pi) in p.iter().enumerate() {
        let c = set.proposals[i].cluster.unwrap_or(i);
        best = match best {
            Some((bp, bc)) if pi < bp || (pi == bp && c > bc) => Some((bp, bc)),
            _ => Some((pi, c)),
        };
    }
    best.map(|(_, c)| c).ok_or_else(|| Error::invalid("empty proposal set"))
}

/// Percentage of samples whose most probable cluster equals the pseudo-label.
pub fn ranking_accuracy(ranked: &[(ProposalSet, usize)]) -> Result<f64> {
    if ranked.is_empty() {
        return Err(Error::invalid("ranking accuracy over no samples"));
    }
    let mut hits = 0usize;
    for (set, label) in ranked {
        if top_cluster(set)? == *label {
            hits += 1;
        }
    }
    Ok(100.0 * hits as f64 / ranked.len() as f64)
}

/// Everything a configured ranker may need.
#[derive(Clone, Copy)]
pub struct RankResources<'a> {
    pub space: &'a ClusterSpace,
    pub encoder: Option<&'a FpScGanModel>,
    pub bank: Option<&'a NeighborBank>,
    pub anet: Option<&'a Anet>,
}

/// Ranks with the configured method.
pub fn rank(set: &ProposalSet, cfg: &RankerConfig, res: RankResources<'_>) -> Result<ProposalSet> {
    let missing = |what: &str| Error::Config(format!("{} ranking needs {what}", cfg.method.name()));
    match cfg.method {
        RankMethod::Cent => match (res.space.metric, res.encoder) {
            (Metric::FeatureL2, Some(m)) => rank_centroids_features(set, m, res.space, cfg.tau),
            (Metric::FeatureL2, None) => Err(missing("the FP SC-GAN encoder")),
            _ => rank_centroids(set, res.space, cfg.tau, cfg.operand),
        },
        RankMethod::NeighDs | RankMethod::NeighFs => {
            let bank = res.bank.ok_or_else(|| missing("a neighbor bank"))?;
            if bank.space_id != res.space.id {
                return Err(Error::Lineage {
                    expected: res.space.id.clone(),
                    found: bank.space_id.clone(),
                });
            }
            rank_neighbors(set, bank, cfg.tau, cfg.n_neig, res.encoder)
        }
        RankMethod::Anet => {
            let a = res.anet.ok_or_else(|| missing("a trained classifier"))?;
            if a.space_id != res.space.id {
                return Err(Error::Lineage {
                    expected: res.space.id.clone(),
                    found: a.space_id.clone(),
                });
            }
            anet_rank(a, set)
        }
    }
}
