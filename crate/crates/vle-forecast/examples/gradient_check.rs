//! Verify the hand-written backpropagation against central differences.
//!
//! Every gradient in this crate is derived and coded by hand, so the only
//! trustworthy referee is the loss function itself: nudge one parameter by
//! ±h, re-run the forward pass, and compare the slope to what backward()
//! computed. This example runs that check on a handful of parameters from
//! every layer type of the convolutional model.
//!
//! Run with: `cargo run --example gradient_check`

use std::error::Error;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vle_forecast::nn::{build_network, relative_error, Arch, ModelConfig};
use vle_forecast::pipeline::ClassWeights;
use vle_forecast::tensor::Tensor;
use vle_forecast::train::weighted_sce_loss;

fn main() -> Result<(), Box<dyn Error>> {
    let cfg = ModelConfig::new(Arch::PaperCnn, 99);
    let mut net = build_network(&cfg)?;
    // Dropout is stochastic; freeze its mask so the loss is a fixed
    // function of the parameters.
    net.freeze_dropout();

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let batch = 4;
    let x = Tensor::from_vec(
        &[batch, cfg.n_features, 1],
        (0..batch * cfg.n_features).map(|_| rng.gen_range(-1.5..1.5)).collect(),
    )?;
    let labels: Vec<u8> = (0..batch).map(|_| rng.gen_range(0..4) as u8).collect();
    let weights = ClassWeights::default();

    let loss_of = |net: &mut vle_forecast::nn::Network| -> f64 {
        let probs = net.forward_train(&x).unwrap();
        weighted_sce_loss(&probs, &labels, &weights).unwrap().0
    };

    // Analytic pass: forward, then backprop from the loss gradient.
    let probs = net.forward_train(&x)?;
    let (loss, dlogits) = weighted_sce_loss(&probs, &labels, &weights)?;
    net.zero_grads();
    net.backward_from_logits(&dlogits)?;
    println!("loss at start: {loss:.6}");
    println!("{:<26} {:>12} {:>12} {:>10}", "parameter", "analytic", "numeric", "rel err");

    let h = 1e-5;
    let names = net.param_names();
    let mut worst: f64 = 0.0;
    for (t, name) in names.iter().enumerate() {
        // Spot-check three elements per tensor, spread across it.
        let len = net.param(t).value.len();
        for k in 0..3 {
            let elem = (k * len.max(1)) / 3 % len.max(1);
            let analytic = net.param(t).grad.data()[elem];

            let original = net.param(t).value.data()[elem];
            net.param_mut(t).value.data_mut()[elem] = original + h;
            let up = loss_of(&mut net);
            net.param_mut(t).value.data_mut()[elem] = original - h;
            let down = loss_of(&mut net);
            net.param_mut(t).value.data_mut()[elem] = original;
            let numeric = (up - down) / (2.0 * h);

            let err = relative_error(analytic, numeric);
            worst = worst.max(err);
            if k == 0 {
                println!("{name:<26} {analytic:>12.3e} {numeric:>12.3e} {err:>10.2e}");
            }
            assert!(err < 1e-4, "{name} elem {elem}: {analytic} vs {numeric}");
        }
    }
    println!("\nworst relative error across all checks: {worst:.2e}");
    Ok(())
}
