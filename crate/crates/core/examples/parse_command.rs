//! Compiles spoken-style commands into programs and shows how a bad clause is reported.
//!
//! cargo run --example parse_command -- "Shrink at top-left and fill up the holes."

use langseg::command::{parse_command, parse_program, render_program};

fn main() {
    let mut commands: Vec<String> = std::env::args().skip(1).collect();
    if commands.is_empty() {
        commands = [
            "Expand the boundary at the top-right corner, remove the fragments at the bottom, and smooth the overall boundary.",
            "Fill up the holes.",
            "shrink to the left",
            "Mark this region as background.",
            "Expand the boundary and wiggle it.",
        ]
        .map(String::from)
        .to_vec();
    }
    for text in &commands {
        println!("> {text}");
        match parse_command(text) {
            Ok(program) => {
                let rendered = render_program(&program);
                print!("{rendered}");
                assert_eq!(parse_program(&rendered).as_ref(), Ok(&program));
            }
            Err(e) => println!("error: {e} (clause: {:?})", e.clause()),
        }
        println!();
    }
}
