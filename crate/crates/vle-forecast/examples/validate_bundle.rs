//! Load a seven-table dataset and run the schema and referential checks.
//!
//! Validation reports per-table row counts, missing-value counts by column,
//! and cross-table violations (students who click or sit assessments without
//! appearing in the roster, assessments pointing at unknown courses, and so
//! on). The example then corrupts one table in memory to show what a
//! violation looks like.
//!
//! Run with: `cargo run --example validate_bundle`

use std::error::Error;

use vle_forecast::ingest::{load_bundle, validate_bundle, StudentVleRow};
use vle_forecast::synth::{generate_bundle, SynthConfig};

fn main() -> Result<(), Box<dyn Error>> {
    let dir = std::env::temp_dir().join("vle-forecast-example-validate");
    generate_bundle(
        &SynthConfig {
            n_students: 200,
            seed: 11,
            ..SynthConfig::default()
        },
        &dir,
    )?;

    let mut bundle = load_bundle(&dir)?;
    let report = validate_bundle(&bundle);
    println!("{:<24} {:>7} {:>8} {:>8}", "table", "rows", "columns", "missing");
    for t in &report.tables {
        println!("{:<24} {:>7} {:>8} {:>8}", t.name, t.rows, t.columns, t.missing_cells);
        for (column, count) in &t.missing_by_column {
            println!("    {column}: {count} missing");
        }
    }
    println!("clean bundle ok: {}", report.ok);
    assert!(report.ok);

    // Plant a clickstream row for a student who is not on the roster; the
    // referential pass must flag it.
    bundle.student_vle.push(StudentVleRow {
        code_module: "AAA".into(),
        code_presentation: "2013J".into(),
        id_student: 999_999,
        id_site: 1,
        date: 5,
        sum_click: 3,
    });
    let broken = validate_bundle(&bundle);
    println!("after corruption ok: {}", broken.ok);
    for v in &broken.violations {
        println!("  violation: {v}");
    }
    assert!(!broken.ok);
    Ok(())
}
