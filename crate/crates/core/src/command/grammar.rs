//! Keyword grammar for expert correction commands.
//!
//! A command is split into clauses at commas, semicolons, sentence stops and
//! the conjunctions "and" / "then". Each clause contributes one step: the
//! first verb found picks the operation, and compass words pick the
//! direction. Matching is case-insensitive; everything else is noise.

use super::{Op, Program, ProgramError};
use crate::direction::Direction;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CommandError {
    #[error("empty command")]
    EmptyCommand,
    #[error("no recognized operation in clause `{clause}`")]
    UnrecognizedVerb { clause: String },
    #[error("conflicting directions {first} and {second} in clause `{clause}`")]
    AmbiguousDirection {
        clause: String,
        first: Direction,
        second: Direction,
    },
    #[error(transparent)]
    Program(#[from] ProgramError),
}

impl CommandError {
    /// The clause that failed to parse, when there is one.
    pub fn clause(&self) -> Option<&str> {
        match self {
            CommandError::UnrecognizedVerb { clause } | CommandError::AmbiguousDirection { clause, .. } => {
                Some(clause)
            }
            _ => None,
        }
    }
}

fn verb(word: &str) -> Option<Op> {
    Some(match word {
        "expand" | "expands" | "expanding" | "grow" | "grows" | "growing" | "enlarge" | "enlarges"
        | "enlarging" | "extend" | "extends" => Op::Expand,
        "shrink" | "shrinks" | "shrinking" | "contract" | "contracts" | "reduce" | "reduces" => Op::Shrink,
        "remove" | "removes" | "removing" | "delete" | "deletes" | "erase" | "erases" => Op::Remove,
        "fill" | "fills" | "filling" => Op::Fill,
        "smooth" | "smooths" | "smoothen" | "smoothens" | "smoothing" => Op::Smooth,
        _ => return None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Axis {
    Vertical,
    Horizontal,
    None,
}

fn direction_word(word: &str) -> Option<(Direction, Axis)> {
    use Direction::*;
    Some(match word {
        "top" | "up" | "upper" | "upward" | "upwards" | "above" => (Top, Axis::Vertical),
        "bottom" | "down" | "lower" | "downward" | "downwards" | "below" | "beneath" => (Bottom, Axis::Vertical),
        "left" | "leftward" | "leftwards" => (Left, Axis::Horizontal),
        "right" | "rightward" | "rightwards" => (Right, Axis::Horizontal),
        "topleft" | "upperleft" => (TopLeft, Axis::None),
        "topright" | "upperright" => (TopRight, Axis::None),
        "bottomleft" | "lowerleft" => (BottomLeft, Axis::None),
        "bottomright" | "lowerright" => (BottomRight, Axis::None),
        "overall" | "entire" | "whole" | "everywhere" => (Overall, Axis::None),
        _ => return None,
    })
}

fn combine(vertical: Direction, horizontal: Direction) -> Direction {
    match (vertical, horizontal) {
        (Direction::Top, Direction::Left) => Direction::TopLeft,
        (Direction::Top, Direction::Right) => Direction::TopRight,
        (Direction::Bottom, Direction::Left) => Direction::BottomLeft,
        _ => Direction::BottomRight,
    }
}

#[derive(Debug)]
enum Token {
    Word(String),
    Break,
}

fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    let flush = |word: &mut String, tokens: &mut Vec<Token>| {
        if !word.is_empty() {
            let w = std::mem::take(word);
            tokens.push(if w == "and" || w == "then" { Token::Break } else { Token::Word(w) });
        }
    };
    for ch in text.chars().flat_map(char::to_lowercase) {
        match ch {
            c if c.is_alphanumeric() => word.push(c),
            '\'' | '\u{2019}' => {}
            ',' | ';' | '.' | '!' | '?' | ':' | '\n' => {
                flush(&mut word, &mut tokens);
                tokens.push(Token::Break);
            }
            _ => flush(&mut word, &mut tokens),
        }
    }
    flush(&mut word, &mut tokens);
    tokens
}

fn clause_op(words: &[String]) -> Option<Op> {
    words.iter().find_map(|w| verb(w)).or_else(|| {
        words.iter().find_map(|w| match w.as_str() {
            "foreground" => Some(Op::Foreground),
            "background" => Some(Op::Background),
            _ => None,
        })
    })
}

fn clause_direction(words: &[String], clause: &str) -> Result<Direction, CommandError> {
    let mut found: Option<Direction> = None;
    let mut i = 0;
    while i < words.len() {
        // "fill up" is a phrasal verb, not a direction.
        if words[i] == "up" && i > 0 && verb(&words[i - 1]) == Some(Op::Fill) {
            i += 1;
            continue;
        }
        let Some((d, axis)) = direction_word(&words[i]) else {
            i += 1;
            continue;
        };
        let next = words.get(i + 1).and_then(|w| direction_word(w));
        let mention = match (axis, next) {
            (Axis::Vertical, Some((h, Axis::Horizontal))) => {
                i += 1;
                combine(d, h)
            }
            (Axis::Horizontal, Some((v, Axis::Vertical))) => {
                i += 1;
                combine(v, d)
            }
            _ => d,
        };
        match found {
            Some(prev) if prev != mention => {
                return Err(CommandError::AmbiguousDirection {
                    clause: clause.to_string(),
                    first: prev,
                    second: mention,
                })
            }
            _ => found = Some(mention),
        }
        i += 1;
    }
    Ok(found.unwrap_or(Direction::Overall))
}

/// Compiles a natural-language command into a program, one step per clause.
pub fn parse_command(text: &str) -> Result<Program, CommandError> {
    let mut clauses: Vec<Vec<String>> = vec![Vec::new()];
    for tok in tokenize(text) {
        match tok {
            Token::Word(w) => clauses.last_mut().expect("nonempty").push(w),
            Token::Break => clauses.push(Vec::new()),
        }
    }
    clauses.retain(|c| !c.is_empty());
    if clauses.is_empty() {
        return Err(CommandError::EmptyCommand);
    }
    let mut ops = Vec::with_capacity(clauses.len());
    for words in &clauses {
        let clause = words.join(" ");
        let op = clause_op(words).ok_or_else(|| CommandError::UnrecognizedVerb { clause: clause.clone() })?;
        let direction = clause_direction(words, &clause)?;
        ops.push((op, direction));
    }
    Ok(Program::from_ops(&ops)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Direction::*;

    fn ops(text: &str) -> Vec<(Op, Direction)> {
        parse_command(text).unwrap().ops()
    }

    #[test]
    fn compound_example_command() {
        assert_eq!(
            ops("Expand the boundary at the top-right corner, remove the fragments at the bottom, and smooth the overall boundary."),
            vec![(Op::Expand, TopRight), (Op::Remove, Bottom), (Op::Smooth, Overall)]
        );
    }

    #[test]
    fn fill_up_is_not_a_direction() {
        assert_eq!(ops("fill up the holes"), vec![(Op::Fill, Overall)]);
        assert_eq!(ops("Fill up the holes at the top"), vec![(Op::Fill, Top)]);
    }

    #[test]
    fn short_phrases() {
        assert_eq!(ops("remove the small fragments"), vec![(Op::Remove, Overall)]);
        assert_eq!(ops("expand the boundary of the left"), vec![(Op::Expand, Left)]);
        assert_eq!(ops("shrink to the left"), vec![(Op::Shrink, Left)]);
        assert_eq!(ops("Expand to Bottom-Right"), vec![(Op::Expand, BottomRight)]);
        assert_eq!(ops("smooth the right border"), vec![(Op::Smooth, Right)]);
        assert_eq!(ops("Shrink at top-left"), vec![(Op::Shrink, TopLeft)]);
        assert_eq!(ops("shrink from the right"), vec![(Op::Shrink, Right)]);
        assert_eq!(ops("expand at bottom"), vec![(Op::Expand, Bottom)]);
        assert_eq!(ops("grow the mask in the bottom left corner"), vec![(Op::Expand, BottomLeft)]);
        assert_eq!(ops("Mark the whole region as foreground."), vec![(Op::Foreground, Overall)]);
        assert_eq!(ops("this region is background"), vec![(Op::Background, Overall)]);
    }

    #[test]
    fn conjunctions_split_clauses() {
        assert_eq!(
            ops("fill the holes and then smoothen the upper right side"),
            vec![(Op::Fill, Overall), (Op::Smooth, TopRight)]
        );
    }

    #[test]
    fn unknown_verb_is_reported_with_clause() {
        let err = parse_command("polish the mask").unwrap_err();
        assert_eq!(err, CommandError::UnrecognizedVerb { clause: "polish the mask".into() });
        assert_eq!(err.clause(), Some("polish the mask"));
    }

    #[test]
    fn conflicting_directions_are_ambiguous() {
        assert!(matches!(
            parse_command("expand the left boundary to the right"),
            Err(CommandError::AmbiguousDirection { first: Left, second: Right, .. })
        ));
        // Repeating the same direction is fine.
        assert_eq!(ops("expand right toward the right side"), vec![(Op::Expand, Right)]);
    }

    #[test]
    fn empty_commands() {
        assert_eq!(parse_command(""), Err(CommandError::EmptyCommand));
        assert_eq!(parse_command(" , and ."), Err(CommandError::EmptyCommand));
    }

    #[test]
    fn parsing_is_deterministic() {
        let t = "Grow the boundary at the top, erase the fragments on the left";
        assert_eq!(parse_command(t).unwrap(), parse_command(t).unwrap());
    }
}
