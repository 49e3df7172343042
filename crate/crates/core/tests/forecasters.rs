use trajrank::cluster::{ClusterSpace, Metric};
use trajrank::forecasters::*;
use trajrank::ingest::{synth_corpus, Corpus, ScenarioSpec};
use trajrank::trajectory::{DisplacementSeries, Point};
use trajrank::Error;

fn small(kind: ForecasterKind, epochs: usize) -> ForecasterConfig {
    ForecasterConfig {
        kind,
        embed_dim: 8,
        lstm_dim: 16,
        decode_dim: 16,
        red_hidden: vec![16],
        disc_hidden: 8,
        z_dim: 4,
        epochs,
        batch: 16,
        adam: trajrank::nn::AdamConfig {
            lr: 5e-3,
            clip_norm: Some(10.0),
            ..Default::default()
        },
        ..ForecasterConfig::default()
    }
}

fn positions(origin: Point, deltas: &[Point]) -> Vec<Point> {
    let mut p = origin;
    deltas
        .iter()
        .map(|d| {
            p = [p[0] + d[0], p[1] + d[1]];
            p
        })
        .collect()
}

fn ade(a: &[Point], b: &[Point]) -> f64 {
    a.iter().zip(b).map(|(p, q)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()).sum::<f64>() / a.len() as f64
}

fn truth(s: &DisplacementSeries) -> Vec<Point> {
    positions(s.last_observed_position(), s.future_deltas())
}

fn corpus(n: usize) -> Corpus {
    synth_corpus(&ScenarioSpec::two_regime(), n, 7).unwrap()
}

fn label_space(c: &Corpus) -> ClusterSpace {
    let labels = c.labels.clone().unwrap();
    let flat: Vec<Vec<f64>> = c.samples.iter().map(|s| trajrank::trajectory::flatten_steps(&s.deltas)).collect();
    let mut centroids = vec![vec![0.0; flat[0].len()]; 2];
    let mut counts = [0.0f64; 2];
    for (f, &l) in flat.iter().zip(&labels) {
        counts[l] += 1.0;
        for (a, v) in centroids[l].iter_mut().zip(f) {
            *a += v;
        }
    }
    for (cen, n) in centroids.iter_mut().zip(counts) {
        cen.iter_mut().for_each(|v| *v /= n.max(1.0));
    }
    ClusterSpace::from_assignments("labels", Metric::EuclideanFlat, centroids, labels, c.t_obs, c.t_pred).unwrap()
}

#[test]
fn red_fits_a_small_corpus() {
    let c = corpus(32);
    let model = red_train(&c, &small(ForecasterKind::Red, 400)).unwrap();
    let first = model.log.first().unwrap().loss;
    let last = model.log.last().unwrap().loss;
    assert!(last < first * 0.1, "loss {first} -> {last}");
    let mean_ade: f64 = c
        .samples
        .iter()
        .map(|s| {
            let p = red_predict(&model, s).unwrap();
            ade(&positions(p.origin, &p.deltas), &truth(s))
        })
        .sum::<f64>()
        / c.len() as f64;
    assert!(mean_ade < 0.1, "train ADE {mean_ade}");
}

#[test]
fn red_is_deterministic_and_guards_untrained_use() {
    let c = corpus(16);
    let cfg = small(ForecasterKind::Red, 2);
    let a = red_train(&c, &cfg).unwrap();
    let b = red_train(&c, &cfg).unwrap();
    assert_eq!(a, b);
    let fresh = Red::new(&cfg).unwrap();
    assert!(matches!(red_predict(&fresh, &c.samples[0]), Err(Error::Untrained(_))));
}

#[test]
fn cf_samples_are_seeded() {
    let c = corpus(16);
    for kind in [ForecasterKind::CfGan, ForecasterKind::CfVae] {
        let m = cf_generative_train(&c, &small(kind, 2)).unwrap();
        let a = cf_sample(&m, &c.samples[0], 5, 3).unwrap();
        let b = cf_sample(&m, &c.samples[0], 5, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
        assert!(a.iter().all(|s| s.deltas.len() == 12 && s.t_obs == 0));
        assert_ne!(a[0], a[1], "{kind:?} ignores the noise");
    }
}

#[test]
fn ours_proposes_one_future_per_cluster() {
    let c = corpus(24);
    let space = label_space(&c);
    for kind in [ForecasterKind::GanOurs, ForecasterKind::VaeOurs] {
        let m = ours_train(&c, &space, &small(kind, 2)).unwrap();
        let set = ours_propose(&m, &c.samples[0], &space, 1, 0).unwrap();
        assert_eq!(set.len(), 2);
        set.validate().unwrap();
        assert_eq!(set.origin, c.samples[0].last_observed_position());
        let avg = ours_propose(&m, &c.samples[0], &space, 4, 0).unwrap();
        avg.validate().unwrap();
    }
}

#[test]
fn conditioning_steers_the_generator() {
    // Both regimes share the same observed history, so only the class can
    // tell the generator where to go.
    let mut spec = ScenarioSpec::two_regime();
    spec.regimes = vec![
        trajrank::ingest::Regime::Straight { heading: 0.0, speed: 0.5 },
        trajrank::ingest::Regime::Straight { heading: 0.0, speed: 0.5 },
    ];
    let mut c = synth_corpus(&spec, 48, 11).unwrap();
    let labels = c.labels.clone().unwrap();
    for (s, &l) in c.samples.iter_mut().zip(&labels) {
        if l == 1 {
            let t0 = s.t_obs;
            for d in &mut s.deltas[t0..] {
                *d = [0.0, 0.5];
            }
        }
    }
    let space = label_space(&c);
    let m = ours_train(&c, &space, &small(ForecasterKind::GanOurs, 60)).unwrap();
    let set = ours_propose(&m, &c.samples[0], &space, 1, 0).unwrap();
    let end = |d: &[Point]| positions([0.0, 0.0], d).last().copied().unwrap();
    let e0 = end(&set.proposals[0].deltas);
    let e1 = end(&set.proposals[1].deltas);
    assert!(e0[0] > e1[0] + 1.0 && e1[1] > e0[1] + 1.0, "{e0:?} {e1:?}");
}

#[test]
fn conditioned_training_rejects_mismatched_spaces() {
    let c = corpus(12);
    let space = label_space(&c);
    let m = ours_train(&c, &space, &small(ForecasterKind::GanOurs, 1)).unwrap();
    let other = label_space(&corpus(10));
    assert!(matches!(
        ours_propose(&m, &c.samples[0], &other, 1, 0),
        Err(Error::Lineage { .. })
    ));
    let short = c.select("short", &[0, 1, 2]);
    assert!(matches!(ours_train(&short, &space, &small(ForecasterKind::GanOurs, 1)), Err(Error::LengthMismatch { .. })));
}
