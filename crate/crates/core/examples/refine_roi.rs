//! Runs EXPAND or SHRINK on a seeded ellipse with a directional defect and
//! prints the η trace the refiner minimizes.
//!
//! cargo run --example refine_roi -- 12

use langseg::command::parse_command;
use langseg::exec::{execute, ExecConfig, ExecEnv};
use langseg::metrics::dice_in;
use langseg::synth::{lobe_fixture, LobeKind};

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(12);
    let fx = lobe_fixture(seed);
    let verb = match fx.kind {
        LobeKind::Erode => "Expand",
        LobeKind::Dilate => "Shrink",
    };
    let command = format!("{verb} the boundary at the {}.", fx.direction.phrase());
    println!("fixture {seed}: roi {}, command {command:?}", fx.roi);

    let program = parse_command(&command).expect("fixture command parses");
    let mut env = ExecEnv::new(fx.image.clone(), fx.pred.clone(), fx.roi, ExecConfig::default()).expect("valid roi");
    let (refined, log) = execute(&program, &mut env).expect("executes");
    for step in &log.steps {
        if let (Some(trace), Some(best)) = (&step.eta_trace, step.best_iter) {
            print!("{}", trace.to_csv());
            println!("best iteration: {best}");
        }
    }
    let before = dice_in(&fx.pred, &fx.gt, &fx.roi).unwrap();
    let after = dice_in(&refined, &fx.gt, &fx.roi).unwrap();
    println!("roi Dice {before:.4} -> {after:.4}");
    println!("pixels changed outside the roi: {}", refined.diff_outside(&fx.pred, &fx.roi));
}
