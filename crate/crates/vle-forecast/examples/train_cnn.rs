//! Train the 1-D convolutional model on synthetic data and watch it learn.
//!
//! Inputs are the standardized 15-column feature rows, treated as a length-15
//! sequence with one channel. The loss is class-weighted cross-entropy
//! (failing and distinguishing students count 1.5x), optimized with Adam.
//! Everything is seeded, so the run reproduces exactly.
//!
//! Run with: `cargo run --release --example train_cnn`

use std::error::Error;

use vle_forecast::nn::{build_network, Arch, ModelConfig};
use vle_forecast::pipeline::{build_features, PipelineConfig};
use vle_forecast::synth::{generate_bundle_in_memory, SynthConfig};
use vle_forecast::train::{train, TrainConfig};

fn main() -> Result<(), Box<dyn Error>> {
    let (bundle, _) = generate_bundle_in_memory(&SynthConfig {
        n_students: 600,
        seed: 21,
        ..SynthConfig::default()
    })?;
    let frame = build_features(
        &bundle,
        &PipelineConfig {
            per_student: true,
            seed: 21,
            ..PipelineConfig::default()
        },
    )?;
    println!("{} rows, class counts {:?}", frame.n_rows(), frame.class_counts());

    let model_cfg = ModelConfig::new(Arch::PaperCnn, 21);
    let mut net = build_network(&model_cfg)?;
    println!(
        "{} with {} parameter tensors, {} scalars",
        model_cfg.arch.as_str(),
        net.n_params(),
        net.n_scalars()
    );

    let cfg = TrainConfig {
        epochs: 40,
        batch_size: 128,
        shuffle_seed: 21,
        ..TrainConfig::default()
    };
    let report = train(&mut net, &frame, &cfg)?;

    println!("\nepoch  train_loss  train_acc  val_loss  val_acc");
    for e in report.history.epochs.iter().step_by(8) {
        println!(
            "{:>5}  {:>10.4}  {:>9.4}  {:>8.4}  {:>7.4}",
            e.epoch, e.train_loss, e.train_accuracy, e.val_loss, e.val_accuracy
        );
    }
    let last = report.history.epochs.last().unwrap();
    println!(
        "\nafter {} optimizer steps: train acc {:.4}, val acc {:.4}",
        report.optimizer_steps, last.train_accuracy, last.val_accuracy
    );
    Ok(())
}
