//! Plays the expert: compares a corrupted prediction with ground truth in a
//! roi, phrases the corrections, and executes them.

use langseg::command::parse_command;
use langseg::exec::{execute, ExecConfig, ExecEnv};
use langseg::expert::{analyze_roi, render_feedback, review_feedback, FeedbackConfig};
use langseg::metrics::dice_in;
use langseg::synth::{generate_phantoms, perturb_mask, Lobe, LobeKind, PerturbSpec, PhantomSpec};
use langseg::Roi;

fn main() {
    let item = generate_phantoms(&PhantomSpec {
        count: 1,
        width: 64,
        height: 64,
        seed: 3,
        ..PhantomSpec::default()
    })
    .expect("valid spec")
    .items
    .remove(0);
    let gt = item.labels.class_mask(1);
    let pred = perturb_mask(
        &gt,
        &PerturbSpec {
            lobes: vec![Lobe {
                kind: LobeKind::Erode,
                angle_deg: 0.0,
                half_width_deg: 40.0,
                depth: 4.0,
            }],
            hole_count: 2,
            hole_radius: 1.5,
            fragment_count: 2,
            fragment_radius: 1.5,
            seed: 3,
            ..PerturbSpec::default()
        },
    );
    let roi = Roi::new(8, 8, 48, 48);

    for vary_phrasing in [false, true] {
        let cfg = FeedbackConfig {
            vary_phrasing,
            seed: 11,
            ..FeedbackConfig::default()
        };
        let items = analyze_roi(&pred, &gt, &roi, &cfg);
        let (kept, withheld) = review_feedback(items, &item.image, &pred, &gt, &roi, ExecConfig::default()).unwrap();
        for w in &withheld {
            println!("withheld {} {}: Dice {:.4} -> {:.4}", w.item.op, w.item.direction.label(), w.dice_before, w.dice_after);
        }
        let Ok(text) = render_feedback(&kept, &cfg) else {
            println!("nothing to say");
            continue;
        };
        println!("expert: {text}");
        let program = parse_command(&text).expect("rendered feedback always parses");
        let mut env = ExecEnv::new(item.image.clone(), pred.clone(), roi, ExecConfig::default()).unwrap();
        let (out, _) = execute(&program, &mut env).unwrap();
        println!(
            "roi Dice {:.4} -> {:.4}\n",
            dice_in(&pred, &gt, &roi).unwrap(),
            dice_in(&out, &gt, &roi).unwrap()
        );
    }
}
