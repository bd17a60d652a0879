use lresnet_core::transport::sinkhorn_cost;
use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for n in [500usize, 2000] {
        let x = Array2::from_shape_fn((n, 1), |_| rng.sample::<f64, _>(StandardNormal));
        let y = Array2::from_shape_fn((n, 1), |_| 2.0 + rng.sample::<f64, _>(StandardNormal));
        for tol in [1e-5, 1e-7, 1e-9] {
            let t0 = std::time::Instant::now();
            let r = sinkhorn_cost(x.view(), y.view(), 1e-2, 10_000, tol).unwrap();
            println!(
                "n={n} tol={tol:.0e}: cost={:.5} iters={} conv={} err={:.2e} time={:.2?}",
                r.cost, r.iterations, r.converged, r.marginal_error, t0.elapsed()
            );
        }
    }
}
