//! Train briefly, checkpoint to JSON, reload, and score the held-out split.
//!
//! Checkpoints carry the architecture, every parameter tensor, the batch
//! norm running statistics, and the feature-transform sidecar, so a reloaded
//! model is bit-identical to the one that was saved and refuses to score
//! features built with different settings.
//!
//! Run with: `cargo run --release --example evaluate_checkpoint`

use std::error::Error;

use vle_forecast::eval::{
    auc_summary, class_name, metrics_report, predict_classes, ConfusionMatrix,
};
use vle_forecast::nn::{build_network, Arch, ModelConfig};
use vle_forecast::pipeline::{build_features, split_indices, PipelineConfig};
use vle_forecast::synth::{generate_bundle_in_memory, SynthConfig};
use vle_forecast::train::{batch_tensor, load_checkpoint, save_checkpoint, train, TrainConfig};

fn main() -> Result<(), Box<dyn Error>> {
    let (bundle, _) = generate_bundle_in_memory(&SynthConfig {
        n_students: 600,
        seed: 13,
        ..SynthConfig::default()
    })?;
    let frame = build_features(
        &bundle,
        &PipelineConfig {
            per_student: true,
            seed: 13,
            ..PipelineConfig::default()
        },
    )?;

    // Train on the training split only; the test rows stay untouched.
    let (train_idx, test_idx) =
        split_indices(&frame.labels, frame.sidecar.train_frac, frame.sidecar.seed)?;
    let train_frame = frame.subset(&train_idx);
    let mut net = build_network(&ModelConfig::new(Arch::PaperCnn, 13))?;
    train(
        &mut net,
        &train_frame,
        &TrainConfig {
            epochs: 20,
            batch_size: 128,
            shuffle_seed: 13,
            ..TrainConfig::default()
        },
    )?;

    let path = std::env::temp_dir().join("vle-forecast-example-checkpoint.json");
    save_checkpoint(&net, &frame.sidecar, &path)?;
    let (reloaded, sidecar) = load_checkpoint(&path)?;
    assert_eq!(sidecar, frame.sidecar);
    println!("checkpoint round-tripped through {}", path.display());

    // Score the held-out rows with the reloaded model.
    let labels: Vec<u8> = test_idx.iter().map(|&i| frame.labels[i]).collect();
    let probs = reloaded.infer(&batch_tensor(&frame, &test_idx))?;
    let pred = predict_classes(&probs)?;
    let report = metrics_report(&ConfusionMatrix::from_labels(&labels, &pred)?);
    let aucs = auc_summary(&probs, &labels)?;

    println!("\ntest accuracy: {:.4} ({} rows)", report.accuracy, labels.len());
    println!("{:<12} {:>9} {:>7} {:>7} {:>8} {:>7}", "class", "precision", "recall", "f1", "support", "auc");
    for c in 0..4 {
        let m = &report.per_class[c];
        let auc = aucs.per_class[c].map_or("-".to_string(), |a| format!("{a:.4}"));
        println!(
            "{:<12} {:>9.4} {:>7.4} {:>7.4} {:>8} {:>7}",
            class_name(c as u8),
            m.precision,
            m.recall,
            m.f1,
            m.support,
            auc
        );
    }
    println!(
        "macro f1 {:.4}, weighted f1 {:.4}, micro auc {:.4}",
        report.macro_f1, report.weighted_f1, aucs.micro
    );

    println!("\nconfusion matrix (rows = true class):");
    let confusion = ConfusionMatrix::from_labels(&labels, &pred)?;
    print!("{:<12}", "");
    for c in 0..4 {
        print!("{:>12}", class_name(c));
    }
    println!();
    for t in 0..4u8 {
        print!("{:<12}", class_name(t));
        for p in 0..4 {
            print!("{:>12}", confusion.counts[t as usize][p]);
        }
        println!();
    }
    Ok(())
}
