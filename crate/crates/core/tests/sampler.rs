use bcdm_core::rng::{complex_normal, seeded};
use bcdm_core::sampler::{ode_sample, pc_sample, GaussianOracle, SamplerConfig, SamplerMode};
use bcdm_core::sde::SdeParams;
use bcdm_core::ComplexSpectrogram;

const SEEDS: u64 = 100;

/// A small clean target and a mixture that differs from it substantially.
fn problem(seed: u64) -> (ComplexSpectrogram, ComplexSpectrogram) {
    let mut rng = seeded(seed);
    let x0 = ComplexSpectrogram::from_fn(4, 4, |_, _| complex_normal(&mut rng));
    let y = x0.map(|v| v * 0.5).add(&ComplexSpectrogram::from_fn(4, 4, |_, _| complex_normal(&mut rng))).unwrap();
    (x0, y)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

fn recovery(n_steps: usize, mode: SamplerMode) -> f64 {
    let sde = SdeParams::default();
    let errs = (0..SEEDS)
        .map(|seed| {
            let (x0, y) = problem(seed);
            let oracle = GaussianOracle { x0: vec![x0.clone()], sde };
            let cfg = SamplerConfig { n_steps, mode, seed: 1000 + seed, ..Default::default() };
            let out = match mode {
                SamplerMode::Pc => pc_sample(&oracle, &[y.clone()], &[y], &cfg, &sde),
                SamplerMode::Ode => ode_sample(&oracle, &[y.clone()], &[y], &cfg, &sde),
            }
            .unwrap();
            out.estimates[0].sub(&x0).unwrap().norm() / x0.norm()
        })
        .collect();
    median(errs)
}

#[test]
fn pc_oracle_recovers_the_clean_target() {
    let e60 = recovery(60, SamplerMode::Pc);
    let e5 = recovery(5, SamplerMode::Pc);
    println!("pc median relative error: N=60 {e60:.4}, N=5 {e5:.4}");
    assert!(e60 < 0.1);
    assert!(e60 < e5);
}

#[test]
fn ode_oracle_recovers_the_clean_target() {
    let e60 = recovery(60, SamplerMode::Ode);
    println!("ode median relative error: N=60 {e60:.4}");
    assert!(e60 < 0.1);
}

#[test]
fn pc_makes_two_score_calls_per_step() {
    let sde = SdeParams::default();
    let (x0, y) = problem(1);
    let oracle = GaussianOracle { x0: vec![x0], sde };
    for n in [1, 5, 60] {
        let cfg = SamplerConfig { n_steps: n, ..Default::default() };
        let out = pc_sample(&oracle, &[y.clone()], &[y.clone()], &cfg, &sde).unwrap();
        assert_eq!(out.score_calls, 2 * n);
        assert_eq!(out.score_calls, cfg.score_calls());
    }
    let cfg = SamplerConfig { n_steps: 10, final_mean: true, ..Default::default() };
    assert_eq!(pc_sample(&oracle, &[y.clone()], &[y], &cfg, &sde).unwrap().score_calls, 21);
}

#[test]
fn samplers_are_reproducible() {
    let sde = SdeParams::default();
    let (x0, y) = problem(2);
    let oracle = GaussianOracle { x0: vec![x0], sde };
    let cfg = SamplerConfig { n_steps: 20, seed: 4, ..Default::default() };
    let a = pc_sample(&oracle, &[y.clone()], &[y.clone()], &cfg, &sde).unwrap();
    let b = pc_sample(&oracle, &[y.clone()], &[y.clone()], &cfg, &sde).unwrap();
    assert_eq!(a.estimates, b.estimates);
    let other = SamplerConfig { seed: 5, ..cfg.clone() };
    assert_ne!(pc_sample(&oracle, &[y.clone()], &[y.clone()], &other, &sde).unwrap().estimates, a.estimates);

    let ode = SamplerConfig { mode: SamplerMode::Ode, ..cfg.clone() };
    let a = ode_sample(&oracle, &[y.clone()], &[y.clone()], &ode, &sde).unwrap();
    let b = ode_sample(&oracle, &[y.clone()], &[y.clone()], &ode, &sde).unwrap();
    assert_eq!(a.estimates, b.estimates);

    let det = |seed| SamplerConfig { deterministic_prior: true, seed, ..ode.clone() };
    let a = ode_sample(&oracle, &[y.clone()], &[y.clone()], &det(1), &sde).unwrap();
    let b = ode_sample(&oracle, &[y.clone()], &[y.clone()], &det(99), &sde).unwrap();
    assert_eq!(a.estimates, b.estimates);
}

#[test]
fn batch_items_do_not_interact() {
    let sde = SdeParams::default();
    let (x0a, ya) = problem(3);
    let (x0b, yb) = problem(4);
    let cfg = SamplerConfig { n_steps: 10, seed: 8, ..Default::default() };
    let both = GaussianOracle { x0: vec![x0a.clone(), x0b], sde };
    let joint = pc_sample(&both, &[ya.clone(), yb.clone()], &[ya.clone(), yb], &cfg, &sde).unwrap();
    let alone = GaussianOracle { x0: vec![x0a], sde };
    let single = pc_sample(&alone, &[ya.clone()], &[ya], &cfg, &sde).unwrap();
    assert_eq!(joint.estimates[0], single.estimates[0]);
}

#[test]
fn output_shape_finiteness_and_trajectory() {
    let sde = SdeParams::default();
    let (x0, y) = problem(5);
    let oracle = GaussianOracle { x0: vec![x0], sde };
    let cfg = SamplerConfig { n_steps: 7, record_trajectory: true, ..Default::default() };
    let out = pc_sample(&oracle, &[y.clone()], &[y.clone()], &cfg, &sde).unwrap();
    assert_eq!(out.estimates[0].shape(), y.shape());
    assert!(out.estimates[0].is_finite());
    assert_eq!(out.trajectory.len(), 8);
    assert_eq!(out.trajectory[0].1, 1.0);
    assert!((out.trajectory[7].1 - sde.t_eps).abs() < 1e-12);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traj.csv");
    out.write_trajectory_csv(&path).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(text.lines().count(), 9);
    assert!(text.starts_with("step,t,item,norm"));
}
