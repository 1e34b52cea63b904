//! Polygon versus spoken-feedback annotation time for the published counts,
//! plus a vertex count measured from a simplified phantom contour.

use langseg::effort::{estimate, simplify_contour, EffortModel, EffortTable};
use langseg::region::trace_contours;
use langseg::synth::{generate_phantoms, PhantomSpec};
use langseg::Roi;

fn main() {
    let model = EffortModel::default();
    let rows: Vec<(String, _)> = [
        ("case 1", 8943, 17880),
        ("case 2", 27826, 67186),
        ("case 3", 12318, 18211),
        ("case 4", 42550, 67988),
    ]
    .into_iter()
    .map(|(label, v, w)| (label.to_string(), estimate(v, w, &model).expect("positive counts")))
    .collect();
    print!("{}", EffortTable(&rows));

    let item = generate_phantoms(&PhantomSpec {
        count: 1,
        ..PhantomSpec::default()
    })
    .unwrap()
    .items
    .remove(0);
    let mask = item.labels.class_mask(1);
    for eps in [0.5, 1.5, 3.0] {
        let vertices: usize = trace_contours(&mask, &Roi::full(mask.width(), mask.height()))
            .iter()
            .map(|ring| simplify_contour(ring, eps).len())
            .sum();
        println!("phantom outline at epsilon {eps}: {vertices} vertices");
    }
}
