//! Refinement programs and the command language that produces them.
//!
//! A [`Program`] is a straight-line chain of [`Step`]s: the first consumes the
//! prediction (`MASK`), each later step consumes the previous step's output and
//! the chain ends in a `RESULT` step. Programs have a canonical one-line-per-step
//! text form (see [`render_program`] / [`parse_program`]):
//!
//! ```text
//! OBJ0=EXPAND(direction='TOP-RIGHT', in=MASK)
//! OBJ1=REMOVE(direction='BOTTOM', in=OBJ0)
//! OBJ2=SMOOTH(direction='OVERALL', in=OBJ1)
//! FINAL=RESULT(var=OBJ2)
//! ```

mod grammar;
mod text;

pub use grammar::{parse_command, CommandError};
pub use text::{parse_program, render_program};

use crate::direction::Direction;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Name bound to the incoming prediction.
pub const INPUT_VAR: &str = "MASK";
/// Name bound by the terminal `RESULT` step.
pub const FINAL_VAR: &str = "FINAL";

/// Parameter names a step may override, with the executor setting each maps to.
pub const OVERRIDE_KEYS: [&str; 9] = [
    "frag_area",
    "granularity",
    "iters",
    "max_region",
    "offset",
    "radius",
    "samples",
    "sigma",
    "thresh",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Op {
    Expand,
    Shrink,
    Remove,
    Fill,
    Smooth,
    Foreground,
    Background,
    Result,
}

impl Op {
    pub const ALL: [Op; 8] = [
        Op::Expand,
        Op::Shrink,
        Op::Remove,
        Op::Fill,
        Op::Smooth,
        Op::Foreground,
        Op::Background,
        Op::Result,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Op::Expand => "EXPAND",
            Op::Shrink => "SHRINK",
            Op::Remove => "REMOVE",
            Op::Fill => "FILL",
            Op::Smooth => "SMOOTH",
            Op::Foreground => "FOREGROUND",
            Op::Background => "BACKGROUND",
            Op::Result => "RESULT",
        }
    }

    pub fn from_name(s: &str) -> Option<Op> {
        Self::ALL.into_iter().find(|op| op.name() == s)
    }
}

impl std::fmt::Display for Op {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub op: Op,
    pub direction: Direction,
    /// Variable consumed by the step.
    pub input: String,
    /// Variable bound by the step.
    pub output: String,
    /// Numeric parameter overrides keyed by [`OVERRIDE_KEYS`].
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProgramError {
    #[error("line {line}: syntax error: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown operation `{name}`")]
    UnknownOp { line: usize, name: String },
    #[error("line {line}: variable `{name}` is not bound")]
    UnboundVariable { line: usize, name: String },
    #[error("invalid program: {0}")]
    Invalid(String),
}

/// A validated straight-line refinement program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Step>", into = "Vec<Step>")]
pub struct Program {
    steps: Vec<Step>,
}

impl TryFrom<Vec<Step>> for Program {
    type Error = ProgramError;

    fn try_from(steps: Vec<Step>) -> Result<Self, Self::Error> {
        Program::new(steps)
    }
}

impl From<Program> for Vec<Step> {
    fn from(p: Program) -> Self {
        p.steps
    }
}

impl Program {
    pub fn new(steps: Vec<Step>) -> Result<Self, ProgramError> {
        let invalid = |m: String| Err(ProgramError::Invalid(m));
        let Some(last) = steps.last() else {
            return invalid("a program needs at least one step".into());
        };
        if last.op != Op::Result || last.output != FINAL_VAR {
            return invalid(format!("the last step must be `{FINAL_VAR}=RESULT(...)`"));
        }
        let mut expected = INPUT_VAR;
        let mut seen = std::collections::HashSet::new();
        for (i, s) in steps.iter().enumerate() {
            if s.op == Op::Result && i + 1 != steps.len() {
                return invalid(format!("RESULT may only appear last (step {i})"));
            }
            if s.input != expected {
                return invalid(format!(
                    "step {i} consumes `{}` but the previous output is `{expected}`",
                    s.input
                ));
            }
            if !is_identifier(&s.output) || s.output == INPUT_VAR || !seen.insert(s.output.as_str()) {
                return invalid(format!("step {i} has an invalid or duplicate output `{}`", s.output));
            }
            if s.op == Op::Result && (!s.overrides.is_empty() || s.direction != Direction::Overall) {
                return invalid("RESULT takes no arguments besides `var`".into());
            }
            if let Some(k) = s.overrides.keys().find(|k| !OVERRIDE_KEYS.contains(&k.as_str())) {
                return invalid(format!("step {i} overrides unknown parameter `{k}`"));
            }
            if let Some((k, v)) = s.overrides.iter().find(|(_, v)| !v.is_finite()) {
                return invalid(format!("step {i} override `{k}` is not finite ({v})"));
            }
            expected = &s.output;
        }
        Ok(Self { steps })
    }

    /// Chains `(op, direction)` pairs as `OBJ0..OBJk` and appends `RESULT`.
    pub fn from_ops(ops: &[(Op, Direction)]) -> Result<Self, ProgramError> {
        let mut steps = Vec::with_capacity(ops.len() + 1);
        let mut prev = INPUT_VAR.to_string();
        for (k, &(op, direction)) in ops.iter().enumerate() {
            let output = format!("OBJ{k}");
            steps.push(Step {
                op,
                direction,
                input: std::mem::replace(&mut prev, output.clone()),
                output,
                overrides: BTreeMap::new(),
            });
        }
        steps.push(Step {
            op: Op::Result,
            direction: Direction::Overall,
            input: prev,
            output: FINAL_VAR.into(),
            overrides: BTreeMap::new(),
        });
        Program::new(steps)
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    /// `(op, direction)` of every step except the terminal `RESULT`.
    pub fn ops(&self) -> Vec<(Op, Direction)> {
        self.steps
            .iter()
            .filter(|s| s.op != Op::Result)
            .map(|s| (s.op, s.direction))
            .collect()
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Turns a command into a program. The grammar parser is the default; other
/// generators (for example a hosted language model) plug in here.
pub trait ProgramGenerator {
    fn generate(&self, command: &str) -> Result<Program, CommandError>;
}

/// Deterministic keyword grammar over the command vocabulary.
#[derive(Debug, Clone, Copy, Default)]
pub struct GrammarGenerator;

impl ProgramGenerator for GrammarGenerator {
    fn generate(&self, command: &str) -> Result<Program, CommandError> {
        parse_command(command)
    }
}
