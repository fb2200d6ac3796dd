#![allow(dead_code)]

use bcdm_core::model::{ModelSize, ScoreBatch, ScoreModel, ScoreModelConfig, Strategy};
use bcdm_core::rng::{seeded, standard_normal};
use bcdm_nn::{Graph, Tensor};
use rand::Rng;

/// Toy configuration at a reduced spatial size for finite-difference work.
pub fn small_toy(strategy: Strategy, side: usize) -> ScoreModelConfig {
    let mut cfg = ScoreModelConfig::preset(strategy, ModelSize::Toy);
    cfg.input_height = side;
    cfg.input_width = side;
    cfg
}

pub fn random_tensor(rng: &mut impl Rng, dims: [usize; 4], scale: f64) -> Tensor<f64> {
    let n = dims.iter().product();
    Tensor::from_vec(dims, (0..n).map(|_| scale * standard_normal(rng)).collect()).unwrap()
}

pub fn random_batch(cfg: &ScoreModelConfig, n: usize, seed: u64) -> ScoreBatch<f64> {
    let mut rng = seeded(seed);
    let dims = [n, 2, cfg.input_height, cfg.input_width];
    ScoreBatch {
        x_t: random_tensor(&mut rng, dims, 0.5),
        y: random_tensor(&mut rng, dims, 0.5),
        y_c: random_tensor(&mut rng, dims, 0.5),
        t: (0..n).map(|_| rng.random_range(cfg.sde.t_eps..1.0)).collect(),
    }
}

/// Adds Gaussian noise to every parameter so no layer sits at its
/// near-zero initialization.
pub fn randomize(model: &mut ScoreModel<f64>, std: f64, seed: u64) {
    let mut rng = seeded(seed);
    for v in model.params_mut().values_mut() {
        for x in v.iter_mut() {
            *x += std * standard_normal(&mut rng);
        }
    }
}

pub struct GradCheck {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst: String,
    /// Parameters whose analytic and numeric gradients were both below 1e-9.
    pub negligible: usize,
}

/// Compares analytic parameter gradients of the probe loss `Σ out ⊙ R`
/// with central differences, one random element per parameter array.
pub fn gradient_check(model: &ScoreModel<f64>, batch: &ScoreBatch<f64>, seed: u64) -> GradCheck {
    let mut rng = seeded(seed);
    let probe = {
        let out = model.forward_batch(batch).unwrap();
        random_tensor(&mut rng, out.dims(), 1.0)
    };
    let loss = |m: &ScoreModel<f64>| -> f64 {
        let out = m.forward_batch(batch).unwrap();
        out.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum()
    };
    let mut g = Graph::new(model.params());
    let rec = model.record(&mut g, batch).unwrap();
    let grads = g.backward(rec.output, probe.clone()).unwrap();

    let mut work = model.clone();
    let mut report = GradCheck { checked: 0, max_rel_err: 0.0, worst: String::new(), negligible: 0 };
    let ids: Vec<_> = model.params().ids().collect();
    for id in ids {
        let numel = model.params().spec(id).numel();
        let k = rng.random_range(0..numel);
        let orig = model.params().get(id)[k];
        let h = 1e-5 * orig.abs().max(1.0);
        work.params_mut().get_mut(id)[k] = orig + h;
        let up = loss(&work);
        work.params_mut().get_mut(id)[k] = orig - h;
        let down = loss(&work);
        work.params_mut().get_mut(id)[k] = orig;
        let numeric = (up - down) / (2.0 * h);
        let analytic = grads.param(id)[k];
        report.checked += 1;
        let scale = analytic.abs().max(numeric.abs());
        if scale < 1e-9 {
            report.negligible += 1;
            continue;
        }
        let rel = (analytic - numeric).abs() / scale;
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst = format!(
                "{}[{k}]: analytic {analytic:e} numeric {numeric:e}",
                model.params().spec(id).name
            );
        }
    }
    report
}
