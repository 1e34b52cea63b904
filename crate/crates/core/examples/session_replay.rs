//! An interactive session without the network: stage a command, accept it,
//! and rebuild the mask from the transcript.

use langseg::exec::ExecConfig;
use langseg::session::{Session, Transcript};
use langseg::synth::{lobe_fixture, LobeKind};
use langseg::LabelMask;

fn main() {
    let fx = lobe_fixture(4);
    let to_labels = |m: &langseg::BinaryMask| {
        LabelMask::new(m.width(), m.height(), 2, m.bits().iter().map(|&b| b as u8).collect()).unwrap()
    };
    let mut session = Session::new("demo".into(), fx.image.clone(), to_labels(&fx.pred), Some(to_labels(&fx.gt)), vec![(fx.roi, 1.0)], 0);
    let verb = if fx.kind == LobeKind::Erode { "Expand" } else { "Shrink" };
    let staged = session
        .stage(0, &format!("{verb} to the {}", fx.direction.phrase()))
        .expect("command parses");
    println!("staged program:\n{}", langseg::command::render_program(&staged.program));
    if let Some((before, after)) = staged.roi_dice {
        println!("roi Dice {before:.4} -> {after:.4}");
    }
    println!("accepted, {} pixels changed", session.accept(0).unwrap());

    let text = session.transcript().render();
    println!("transcript:\n{text}");
    let rebuilt = Transcript::parse(&text)
        .unwrap()
        .replay(&session.image, &session.initial, ExecConfig::default())
        .unwrap();
    println!("replay matches live mask: {}", rebuilt == session.current);
}
