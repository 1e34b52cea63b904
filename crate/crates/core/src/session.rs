//! Interactive refinement sessions: per-roi command staging, explicit
//! accept/reject, and a replayable transcript of everything accepted.

use crate::command::{parse_command, parse_program, render_program, CommandError, Program, ProgramError};
use crate::exec::{apply_patch, execute, ExecConfig, ExecEnv, ExecError, StepRecord};
use crate::grid::{BinaryMask, GridImage, LabelMask, Roi};
use crate::metrics::dice_in;
use crate::refine::EtaTrace;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("roi {0} does not exist")]
    UnknownRoi(usize),
    #[error("roi {0} has no staged result")]
    NothingStaged(usize),
    #[error(transparent)]
    Command(#[from] CommandError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error("transcript line {line}: {message}")]
    Transcript { line: usize, message: String },
    #[error(transparent)]
    Program(#[from] ProgramError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoiStatus {
    Pending,
    Refined,
    Accepted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Staged {
    pub command: String,
    pub program: Program,
    /// Full-size binary mask after execution; only its roi is ever applied.
    pub refined: BinaryMask,
    pub steps: Vec<StepRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiState {
    pub roi: Roi,
    pub score: f64,
    pub status: RoiStatus,
    #[serde(skip)]
    pub staged: Option<Staged>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Staged,
    Accepted,
    Rejected,
}

/// Append-only log entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub kind: EventKind,
    pub roi_index: usize,
    pub command: String,
    pub program: String,
    pub eta_traces: Vec<EtaTrace>,
}

/// Result of staging a command.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub program: Program,
    pub patch: BinaryMask,
    pub steps: Vec<StepRecord>,
    /// Roi Dice before and after, when ground truth is known.
    pub roi_dice: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    pub image: GridImage,
    pub gt: Option<LabelMask>,
    pub initial: LabelMask,
    pub current: LabelMask,
    pub class_id: u8,
    pub rois: Vec<RoiState>,
    pub history: Vec<HistoryEntry>,
    pub config: ExecConfig,
    pub seed: u64,
}

impl Session {
    pub fn new(id: String, image: GridImage, initial: LabelMask, gt: Option<LabelMask>, rois: Vec<(Roi, f64)>, seed: u64) -> Self {
        Self {
            id,
            image,
            gt,
            current: initial.clone(),
            initial,
            class_id: 1,
            rois: rois
                .into_iter()
                .map(|(roi, score)| RoiState {
                    roi,
                    score,
                    status: RoiStatus::Pending,
                    staged: None,
                })
                .collect(),
            history: Vec::new(),
            config: ExecConfig::default(),
            seed,
        }
    }

    fn roi_state(&mut self, k: usize) -> Result<&mut RoiState, SessionError> {
        self.rois.get_mut(k).ok_or(SessionError::UnknownRoi(k))
    }

    /// Parses and executes `text` on roi `k`, replacing any earlier staged result.
    pub fn stage(&mut self, k: usize, text: &str) -> Result<StageOutcome, SessionError> {
        let roi = self.rois.get(k).ok_or(SessionError::UnknownRoi(k))?.roi;
        let program = parse_command(text)?;
        let mask = self.current.class_mask(self.class_id);
        let mut env = ExecEnv::new(self.image.clone(), mask.clone(), roi, self.config)?;
        let (refined, log) = execute(&program, &mut env)?;
        let roi_dice = self.gt.as_ref().map(|gt| {
            let g = gt.class_mask(self.class_id);
            (dice_in(&mask, &g, &roi).expect("dims"), dice_in(&refined, &g, &roi).expect("dims"))
        });
        self.history.push(HistoryEntry {
            kind: EventKind::Staged,
            roi_index: k,
            command: text.to_string(),
            program: render_program(&program),
            eta_traces: log.eta_traces().cloned().collect(),
        });
        let outcome = StageOutcome {
            program: program.clone(),
            patch: refined.crop(&roi),
            steps: log.steps.clone(),
            roi_dice,
        };
        let state = self.roi_state(k)?;
        state.status = RoiStatus::Refined;
        state.staged = Some(Staged {
            command: text.to_string(),
            program,
            refined,
            steps: log.steps,
        });
        Ok(outcome)
    }

    /// Writes the staged result into the current label map, inside the roi only.
    pub fn accept(&mut self, k: usize) -> Result<usize, SessionError> {
        let class_id = self.class_id;
        let state = self.roi_state(k)?;
        let staged = state.staged.take().ok_or(SessionError::NothingStaged(k))?;
        let roi = state.roi;
        state.status = RoiStatus::Accepted;
        let next = apply_patch(&self.current, &roi, &staged.refined, class_id)?;
        let changed = next.labels().iter().zip(self.current.labels()).filter(|(a, b)| a != b).count();
        self.current = next;
        self.history.push(HistoryEntry {
            kind: EventKind::Accepted,
            roi_index: k,
            command: staged.command,
            program: render_program(&staged.program),
            eta_traces: staged.steps.iter().filter_map(|s| s.eta_trace.clone()).collect(),
        });
        Ok(changed)
    }

    pub fn reject(&mut self, k: usize) -> Result<(), SessionError> {
        let was_accepted = self.history.iter().any(|h| h.kind == EventKind::Accepted && h.roi_index == k);
        let state = self.roi_state(k)?;
        let staged = state.staged.take().ok_or(SessionError::NothingStaged(k))?;
        state.status = if was_accepted { RoiStatus::Accepted } else { RoiStatus::Pending };
        self.history.push(HistoryEntry {
            kind: EventKind::Rejected,
            roi_index: k,
            command: staged.command,
            program: render_program(&staged.program),
            eta_traces: Vec::new(),
        });
        Ok(())
    }

    /// Accepted programs in order, enough to rebuild `current` from `initial`.
    pub fn transcript(&self) -> Transcript {
        Transcript {
            class_id: self.class_id,
            entries: self
                .history
                .iter()
                .filter(|h| h.kind == EventKind::Accepted)
                .map(|h| (self.rois[h.roi_index].roi, parse_program(&h.program).expect("rendered by us")))
                .collect(),
        }
    }
}

/// Canonical replay text:
///
/// ```text
/// CLASS 1
/// ROI 10,20,21,21
/// OBJ0=FILL(direction='OVERALL', in=MASK)
/// FINAL=RESULT(var=OBJ0)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub class_id: u8,
    pub entries: Vec<(Roi, Program)>,
}

impl Transcript {
    pub fn render(&self) -> String {
        let mut out = format!("CLASS {}\n", self.class_id);
        for (roi, program) in &self.entries {
            out.push_str(&format!("ROI {roi}\n"));
            out.push_str(&render_program(program));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, SessionError> {
        let err = |line: usize, message: String| SessionError::Transcript { line, message };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).peekable();
        let (_, head) = lines.next().ok_or_else(|| err(1, "empty transcript".into()))?;
        let class_id: u8 = head
            .strip_prefix("CLASS ")
            .and_then(|c| c.trim().parse().ok())
            .ok_or_else(|| err(1, format!("expected `CLASS <id>`, got `{head}`")))?;
        let mut entries = Vec::new();
        while let Some((i, line)) = lines.next() {
            let roi: Roi = line
                .strip_prefix("ROI ")
                .ok_or_else(|| err(i + 1, format!("expected `ROI x,y,w,h`, got `{line}`")))?
                .parse()
                .map_err(|e| err(i + 1, e))?;
            let mut body = String::new();
            while let Some((_, l)) = lines.next_if(|(_, l)| !l.starts_with("ROI ")) {
                body.push_str(l);
                body.push('\n');
            }
            entries.push((roi, parse_program(&body)?));
        }
        Ok(Self { class_id, entries })
    }

    /// Re-executes every entry against `initial`.
    pub fn replay(&self, image: &GridImage, initial: &LabelMask, config: ExecConfig) -> Result<LabelMask, SessionError> {
        let mut current = initial.clone();
        for (roi, program) in &self.entries {
            let mut env = ExecEnv::new(image.clone(), current.class_mask(self.class_id), *roi, config)?;
            let (refined, _) = execute(program, &mut env)?;
            current = apply_patch(&current, roi, &refined, self.class_id)?;
        }
        Ok(current)
    }
}
