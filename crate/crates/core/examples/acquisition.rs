//! Trains a source model, predicts on a shifted image and picks rois by
//! window entropy, next to a seeded random pick.

use langseg::acquisition::{entropy_map, random_rois, select_rois, BudgetPlan};
use langseg::adapt::{desk_datasets, train_source};
use langseg::classifier::TrainParams;

fn main() {
    let (source, target) = desk_datasets(8, 1, 0, 7);
    let model = train_source(&source, &TrainParams::default()).expect("source trains");
    let item = &target.items[0];
    let probs = model.predict(&item.image);
    let scores = entropy_map(&probs);
    let plan = BudgetPlan {
        budget_percent: 10.0,
        rounds: 1,
        ..BudgetPlan::default()
    };
    let (w, h) = (item.image.width(), item.image.height());
    println!("{} rois per round at {}% budget", plan.rois_per_round(w, h), plan.budget_percent);
    for pick in select_rois(&scores, &plan, &[]) {
        println!("entropy  roi {}  mean entropy {:.4}", pick.roi, pick.score);
    }
    for pick in random_rois(w, h, &plan, &[], 7) {
        println!("random   roi {}  mean entropy {:.4}", pick.roi, scores.window_mean(&pick.roi));
    }
}
