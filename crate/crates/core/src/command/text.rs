use super::{is_identifier, Op, Program, ProgramError, Step, FINAL_VAR, INPUT_VAR, OVERRIDE_KEYS};
use crate::direction::Direction;
use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

/// Canonical program text: one LF-terminated line per step.
pub fn render_program(program: &Program) -> String {
    let mut out = String::new();
    for s in program.steps() {
        if s.op == Op::Result {
            let _ = writeln!(out, "{}=RESULT(var={})", s.output, s.input);
            continue;
        }
        let _ = write!(out, "{}={}(direction='{}'", s.output, s.op, s.direction.label());
        for (k, v) in &s.overrides {
            let _ = write!(out, ", {k}={v}");
        }
        let _ = writeln!(out, ", in={})", s.input);
    }
    out
}

/// Parses program text produced by [`render_program`].
///
/// Blank lines are ignored. Variable references must name `MASK` or an
/// output bound on an earlier line.
pub fn parse_program(text: &str) -> Result<Program, ProgramError> {
    let mut bound: HashSet<String> = HashSet::from([INPUT_VAR.to_string()]);
    let mut steps = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let step = parse_line(raw, line)?;
        if !bound.contains(&step.input) {
            return Err(ProgramError::UnboundVariable {
                line,
                name: step.input,
            });
        }
        bound.insert(step.output.clone());
        steps.push(step);
    }
    Program::new(steps)
}

fn parse_line(raw: &str, line: usize) -> Result<Step, ProgramError> {
    let syntax = |message: String| ProgramError::Syntax { line, message };
    let (output, rest) = raw
        .split_once('=')
        .ok_or_else(|| syntax("expected `NAME=OP(...)`".into()))?;
    let output = output.trim();
    if !is_identifier(output) {
        return Err(syntax(format!("`{output}` is not a valid variable name")));
    }
    let rest = rest.trim();
    let open = rest.find('(').ok_or_else(|| syntax("missing `(`".into()))?;
    if !rest.ends_with(')') {
        return Err(syntax("missing closing `)`".into()));
    }
    let op_name = rest[..open].trim();
    let op = Op::from_name(op_name).ok_or_else(|| ProgramError::UnknownOp {
        line,
        name: op_name.to_string(),
    })?;
    let body = &rest[open + 1..rest.len() - 1];

    let mut direction = None;
    let mut input = None;
    let mut overrides = BTreeMap::new();
    for arg in body.split(',').map(str::trim).filter(|a| !a.is_empty()) {
        let (key, value) = arg
            .split_once('=')
            .ok_or_else(|| syntax(format!("argument `{arg}` is not `key=value`")))?;
        let (key, value) = (key.trim(), value.trim());
        let var_key = if op == Op::Result { "var" } else { "in" };
        if key == var_key {
            if !is_identifier(value) {
                return Err(syntax(format!("`{value}` is not a valid variable name")));
            }
            if input.replace(value.to_string()).is_some() {
                return Err(syntax(format!("duplicate `{key}` argument")));
            }
            continue;
        }
        match key {
            "direction" if op != Op::Result => {
                let label = value
                    .strip_prefix('\'')
                    .and_then(|v| v.strip_suffix('\''))
                    .ok_or_else(|| syntax(format!("direction `{value}` must be quoted")))?;
                let d = Direction::from_label(label)
                    .ok_or_else(|| syntax(format!("unknown direction `{label}`")))?;
                if direction.replace(d).is_some() {
                    return Err(syntax("duplicate `direction` argument".into()));
                }
            }
            k if op != Op::Result && OVERRIDE_KEYS.contains(&k) => {
                let v: f64 = value
                    .parse()
                    .map_err(|_| syntax(format!("`{k}` expects a number, got `{value}`")))?;
                if overrides.insert(k.to_string(), v).is_some() {
                    return Err(syntax(format!("duplicate `{k}` argument")));
                }
            }
            _ => return Err(syntax(format!("unexpected argument `{key}` for {op}"))),
        }
    }
    let input = input.ok_or_else(|| {
        syntax(format!(
            "missing `{}` argument",
            if op == Op::Result { "var" } else { "in" }
        ))
    })?;
    if op == Op::Result && output != FINAL_VAR {
        return Err(syntax(format!("RESULT must bind `{FINAL_VAR}`")));
    }
    Ok(Step {
        op,
        direction: if op == Op::Result {
            Direction::Overall
        } else {
            direction.ok_or_else(|| syntax("missing `direction` argument".into()))?
        },
        input,
        output: output.to_string(),
        overrides,
    })
}
