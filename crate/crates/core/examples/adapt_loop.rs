//! The desk adaptation benchmark: source-only, entropy, random and a 2x roi
//! area variant on seeded phantoms with an intensity shift.
//!
//! cargo run --release --example adapt_loop -- 7

use langseg::adapt::{desk_datasets, run_ada, AcquisitionKind, LoopConfig};

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let (source, target) = desk_datasets(20, 20, 10, seed);
    let base = LoopConfig {
        seed,
        ..LoopConfig::default()
    };
    let mut wide = base;
    wide.plan.roi_w = 30;
    wide.plan.roi_h = 30;
    let runs = [
        ("entropy", base),
        (
            "random",
            LoopConfig {
                acquisition: AcquisitionKind::Random,
                ..base
            },
        ),
        ("entropy 2x", wide),
    ];
    for (name, cfg) in runs {
        let report = run_ada(&source, &target, &cfg).expect("loop runs");
        println!(
            "{name:<11} source-only {:.4}  adapted {:.4}  ({:+.1} points, {} words, {} polygon vertices)",
            report.source_only.mean_foreground,
            report.final_test.mean_foreground,
            report.improvement_points(),
            report.total_words,
            report.total_vertices
        );
        for round in &report.rounds {
            println!("  round {}: {} rois, test Dice {:.4}", round.round, round.rois.len(), round.test.mean_foreground);
        }
    }
}
