use lap_core::flowtoy::{
    interpolate, train_toy, FlowBatch, ParamGroup, ToyConfig, ToyDims, ToyModel, ToyTask,
};
use lap_core::geometry::Frame;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Straight-line re-evaluation of the documented network from raw parameters.
struct Oracle {
    w1: DMatrix<f64>,
    b1: DVector<f64>,
    emb: DMatrix<f64>,
    wo: DMatrix<f64>,
    bo: DVector<f64>,
    w2: DMatrix<f64>,
    b2: DVector<f64>,
    w4: DMatrix<f64>,
    b4: DVector<f64>,
    w3: DMatrix<f64>,
    b3: DVector<f64>,
}

impl Oracle {
    fn new(model: &ToyModel) -> Self {
        let d = *model.dims();
        let p = model.params();
        let mut at = 0;
        let mut mat = |rows: usize, cols: usize| {
            let m = DMatrix::from_row_slice(rows, cols, &p[at..at + rows * cols]);
            at += rows * cols;
            m
        };
        let fin = d.hidden + d.action + 1;
        let w1 = mat(d.hidden, d.cond);
        let b1 = mat(d.hidden, 1);
        let emb = mat(d.vocab, d.hidden);
        let wo = mat(d.vocab, d.hidden);
        let bo = mat(d.vocab, 1);
        let w2 = mat(d.flow_hidden, fin);
        let b2 = mat(d.flow_hidden, 1);
        let w4 = mat(d.flow_hidden, d.flow_hidden);
        let b4 = mat(d.flow_hidden, 1);
        let w3 = mat(d.action, d.flow_hidden);
        let b3 = mat(d.action, 1);
        assert_eq!(at, p.len());
        let col = |m: DMatrix<f64>| m.column(0).into_owned();
        Self {
            w1,
            b1: col(b1),
            emb,
            wo,
            bo: col(bo),
            w2,
            b2: col(b2),
            w4,
            b4: col(b4),
            w3,
            b3: col(b3),
        }
    }

    fn h(&self, cond: &[f64]) -> DVector<f64> {
        (&self.w1 * DVector::from_row_slice(cond) + &self.b1).map(f64::tanh)
    }

    fn fm(&self, b: &FlowBatch) -> f64 {
        let mut total = 0.0;
        for i in 0..b.len() {
            let h = self.h(&b.cond[i]);
            let tau = b.tau[i];
            let mut inp: Vec<f64> = h.iter().copied().collect();
            for (z, a) in b.noise[i].iter().zip(&b.actions[i]) {
                inp.push((1.0 - tau) * z + tau * a);
            }
            inp.push(tau);
            let q1 = (&self.w2 * DVector::from_vec(inp) + &self.b2).map(f64::tanh);
            let q2 = (&self.w4 * q1 + &self.b4).map(f64::tanh);
            let v = &self.w3 * q2 + &self.b3;
            let u = DVector::from_row_slice(&b.actions[i]) - DVector::from_row_slice(&b.noise[i]);
            total += (v - u).norm_squared();
        }
        total / b.len() as f64
    }

    fn ce(&self, b: &FlowBatch) -> f64 {
        let mut nll = 0.0;
        let mut n = 0;
        for i in 0..b.len() {
            let h = self.h(&b.cond[i]);
            let mut prev = 0;
            for &y in &b.lang_targets[i] {
                let g = (&h + self.emb.row(prev).transpose()).map(f64::tanh);
                let logits = &self.wo * g + &self.bo;
                let z: f64 = logits.iter().map(|l| l.exp()).sum();
                nll -= (logits[y].exp() / z).ln();
                n += 1;
                prev = y;
            }
        }
        nll / n as f64
    }
}

fn small_dims() -> ToyDims {
    ToyDims {
        cond: 2,
        hidden: 5,
        vocab: 11,
        action: 4,
        flow_hidden: 6,
    }
}

fn random_batch(seed: u64, d: &ToyDims, n: usize) -> FlowBatch {
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal =
        |k: usize| -> Vec<f64> { (0..k).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let cond = (0..n).map(|_| normal(d.cond)).collect();
    let actions = (0..n).map(|_| normal(d.action)).collect();
    let noise = (0..n).map(|_| normal(d.action)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let tau = (0..n).map(|_| rng.random::<f64>()).collect();
    let lang_targets = (0..n)
        .map(|_| {
            (0..rng.random_range(1..5))
                .map(|_| rng.random_range(1..d.vocab))
                .collect()
        })
        .collect();
    FlowBatch {
        cond,
        actions,
        noise,
        tau,
        lang_targets,
    }
}

#[test]
fn losses_match_independent_evaluation() {
    let d = small_dims();
    for seed in 0..20 {
        let model = ToyModel::new(d, &mut ChaCha8Rng::seed_from_u64(seed));
        let batch = random_batch(seed + 100, &d, 6);
        assert!(batch.is_consistent(&d));
        let oracle = Oracle::new(&model);
        assert!((model.fm_loss(&batch) - oracle.fm(&batch)).abs() < 1e-12);
        assert!((model.ce_loss(&batch) - oracle.ce(&batch)).abs() < 1e-12);
    }
}

#[test]
fn losses_are_non_negative() {
    let d = small_dims();
    for seed in 0..50 {
        let model = ToyModel::new(d, &mut ChaCha8Rng::seed_from_u64(seed));
        let batch = random_batch(seed, &d, 3);
        assert!(model.fm_loss(&batch) >= 0.0);
        assert!(model.ce_loss(&batch) >= 0.0);
    }
}

#[test]
fn confident_logits_give_vanishing_ce() {
    let d = small_dims();
    let mut model = ToyModel::zeros(d);
    let r = model.group_range(ParamGroup::LanguageHead);
    model.params_mut()[r.end - d.vocab + 3] = 50.0;
    let mut batch = random_batch(1, &d, 2);
    batch.lang_targets = vec![vec![3], vec![3, 3]];
    assert!(model.ce_loss(&batch) < 1e-20);
}

#[test]
fn sampler_hits_target_under_constant_field() {
    let d = small_dims();
    let z = [0.3, -1.2, 2.0, 0.0];
    let a = [1.0, 0.5, -0.25, 3.0];
    let mut model = ToyModel::zeros(d);
    let u: Vec<f64> = a.iter().zip(&z).map(|(a, z)| a - z).collect();
    model.flow_bias_mut().copy_from_slice(&u);
    for k in [1, 2, 3, 4, 16] {
        let x = model.euler_sample(&z, &[0.1, 0.0], k);
        for (x, a) in x.iter().zip(&a) {
            assert!((x - a).abs() < 1e-12);
        }
    }
    assert_eq!(interpolate(&z, &a, 1.0), a.to_vec());
}

fn short_config(lambda: f64) -> ToyConfig {
    ToyConfig {
        lambda,
        steps: 40,
        batch_size: 8,
        log_every: 10,
        eval_noise: 2,
        eval_batch: 16,
        ..ToyConfig::default()
    }
}

#[test]
fn training_is_deterministic() {
    let a = train_toy(&short_config(0.8), |_| ()).unwrap();
    let b = train_toy(&short_config(0.8), |_| ()).unwrap();
    assert_eq!(a.metrics.len(), b.metrics.len());
    for (x, y) in a.metrics.iter().zip(&b.metrics) {
        assert_eq!(
            serde_json::to_string(x).unwrap(),
            serde_json::to_string(y).unwrap()
        );
    }
    assert_eq!(a.model.params(), b.model.params());
    let c = train_toy(
        &ToyConfig {
            seed: 1,
            ..short_config(0.8)
        },
        |_| (),
    )
    .unwrap();
    assert_ne!(a.model.params(), c.model.params());
}

#[test]
fn zero_lambda_freezes_trunk_and_language_head() {
    let config = short_config(0.0);
    let out = train_toy(&config, |_| ()).unwrap();
    let init = ToyModel::new(
        config.dims(),
        &mut lap_core::rng::keyed_rng(config.seed, "toy-init", 0, lap_core::rng::Purpose::Toy),
    );
    for group in [ParamGroup::Trunk, ParamGroup::LanguageHead] {
        let r = init.group_range(group);
        assert_eq!(&out.model.params()[r.clone()], &init.params()[r]);
    }
    let r = init.group_range(ParamGroup::FlowHead);
    assert_ne!(&out.model.params()[r.clone()], &init.params()[r]);
    assert!(out
        .metrics
        .iter()
        .all(|m| m.ce_loss > 0.0 && m.combined == m.fm_loss));
}

#[test]
fn metrics_are_logged_at_the_configured_interval() {
    let mut seen = Vec::new();
    let out = train_toy(&short_config(0.8), |m| seen.push(m.step)).unwrap();
    assert_eq!(seen, vec![0, 10, 20, 30, 40]);
    assert_eq!(out.metrics.len(), 5);
}

#[test]
fn task_conditioning_encodes_sign_and_frame() {
    assert_eq!(ToyTask::cond(-1.0, Frame::Base), vec![-1.0, 1.0]);
    assert_eq!(ToyTask::cond(1.0, Frame::EndEffector), vec![1.0, 0.0]);
}

#[test]
fn invalid_config_is_rejected() {
    let config = ToyConfig {
        learning_rate: -1.0,
        ..ToyConfig::default()
    };
    assert!(train_toy(&config, |_| ()).is_err());
}
