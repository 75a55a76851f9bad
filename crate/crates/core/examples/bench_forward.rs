//! Quick wall-clock split of forward vs backward at the toy training size.

use dagf_core::graph::Graph;
use dagf_core::loss::{total_loss, LossWeights};
use dagf_core::network::{forward, init_params, DagfConfig};
use dagf_core::rng::{streams, SeedRng};
use dagf_core::tensor::{Dims, TensorData};
use std::time::Instant;

fn main() {
    let cfg = DagfConfig { m: 2, k: 3, channels: 8, ..DagfConfig::default() };
    let params = init_params::<f32>(&cfg, 1).unwrap();
    let mut rng = SeedRng::new(2, streams::TEST);
    let t = TensorData::<f32>::random_uniform(Dims::new(2, 1, 64, 64), 0.0, 1.0, &mut rng);
    let gu = TensorData::<f32>::random_uniform(Dims::new(2, 3, 64, 64), 0.0, 1.0, &mut rng);
    let gt = TensorData::<f32>::random_uniform(Dims::new(2, 1, 64, 64), 0.0, 1.0, &mut rng);

    let iters = 10;
    let mut fwd = 0.0;
    let mut bwd = 0.0;
    for _ in 0..iters {
        let t0 = Instant::now();
        let mut g = Graph::new();
        let bound = params.bind(&mut g);
        let tv = g.constant(t.clone());
        let gv = g.constant(gu.clone());
        let pass = forward(&mut g, &bound, &cfg, tv, gv).unwrap();
        let gtv = g.constant(gt.clone());
        let (loss, _) = total_loss(&mut g, &pass.outputs, gtv, &LossWeights::default(), 0).unwrap();
        let t1 = Instant::now();
        let grads = g.backward(loss).unwrap();
        let t2 = Instant::now();
        std::hint::black_box(&grads);
        fwd += (t1 - t0).as_secs_f64();
        bwd += (t2 - t1).as_secs_f64();
    }
    println!("forward+build: {:.1} ms/iter", 1e3 * fwd / iters as f64);
    println!("backward:      {:.1} ms/iter", 1e3 * bwd / iters as f64);
}
