// temporary probe (deleted before finishing)
use std::time::Instant;
use randpde::loss::*;
use randpde::measures::MeasureVariant;
use randpde::networks::Activation;
use randpde::train::*;
use randpde::lbfgs::{self, LbfgsOptions};
use randpde::problems;

fn main() {
    // one loss+grad eval on the bistable setup
    let config = TrainConfig {
        problem: "bistable".into(), variant: MeasureVariant::FullNn,
        hidden_layers: 5, hidden_width: 32, activation: Activation::Snake,
        pce_degree: 5, galerkin_degree_x: 10, galerkin_degree_t: 8,
        optimizer: LbfgsOptions::default(),
        outer_iterations: 1, domain_resample_period: 50, param_resample_period: 50,
        n_x: 1, n_t: 100, n_xi: 100, n_boundary: 100, n_initial: 100,
        strategy: SamplingStrategy::CartesianProduct,
        seed_init: 1, seed_domain: 2, seed_params: 3, seed_test: 4,
        weights: LossWeights::default(),
    };
    let problem = problems::problem("bistable").unwrap();
    let mut measure = build_measure(&config).unwrap();
    let points = sample_collocation(&problem, 1, 100, 100, 100, SamplingStrategy::CartesianProduct, 2);
    let xi = problem.params.sample(100, 3);
    let batch = CollocationBatch::assemble(points, xi, &problem.params).unwrap();
    let w = LossWeights::default();
    let n = measure.arch().parameter_count();
    let mut grad = vec![0.0; n];

    // warmup
    for _ in 0..3 { residual_loss_and_grad(&measure, &problem, &batch, &w, &mut grad).unwrap(); }
    let reps = 30;
    let t0 = Instant::now();
    for _ in 0..reps { residual_loss_and_grad(&measure, &problem, &batch, &w, &mut grad).unwrap(); }
    println!("bistable loss+grad: {:.1} ms", t0.elapsed().as_secs_f64() / reps as f64 * 1e3);

    let t0 = Instant::now();
    for _ in 0..reps { residual_loss(&measure, &problem, &batch, &w).unwrap(); }
    println!("bistable loss only: {:.1} ms", t0.elapsed().as_secs_f64() / reps as f64 * 1e3);

    // count evals in one L-BFGS call from fresh init
    let theta0 = measure.theta().to_vec();
    let out = lbfgs::minimize(&LbfgsOptions::default(), theta0, |theta, g| {
        measure.set_theta(theta.to_vec())?;
        residual_loss_and_grad(&measure, &problem, &batch, &w, g)
    }).unwrap();
    println!("cold lbfgs: iterations={} f_evals={} loss={:.3e}", out.iterations, out.function_evals, out.loss);
}
