//! Verifiable puzzle tasks: generators with a difficulty knob, exact answer
//! verifiers, and reward adapters.

pub mod maze;
pub mod preference;
pub mod sudoku;
pub mod twentyfour;

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vocab;

pub use preference::{pairwise_preference, Rubric};

pub const MIN_DIFFICULTY: u8 = 1;
pub const MAX_DIFFICULTY: u8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskId {
    #[serde(rename = "twentyfour")]
    TwentyFour,
    #[serde(rename = "maze")]
    Maze,
    #[serde(rename = "sudoku4")]
    Sudoku4,
}

impl TaskId {
    pub const ALL: [TaskId; 3] = [TaskId::TwentyFour, TaskId::Maze, TaskId::Sudoku4];

    pub fn name(self) -> &'static str {
        match self {
            TaskId::TwentyFour => "twentyfour",
            TaskId::Maze => "maze",
            TaskId::Sudoku4 => "sudoku4",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Tokens a response to this task may contain (EOS included).
    pub fn token_mask(self) -> u64 {
        match self {
            TaskId::TwentyFour => vocab::mask_of("0123456789+-*/()"),
            TaskId::Maze => vocab::mask_of("UDLR"),
            TaskId::Sudoku4 => vocab::mask_of("1234"),
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskId::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown task {s:?} (expected twentyfour, maze or sudoku4)")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payload {
    TwentyFour { numbers: Vec<u32>, target: u32 },
    Maze { rows: usize, cols: usize, grid: Vec<String>, start: [usize; 2], goal: [usize; 2] },
    Sudoku4 { cells: Vec<Vec<u8>> },
}

/// One generated task. Serialized as a dataset record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PuzzleInstance {
    #[serde(rename = "task_id")]
    pub task: TaskId,
    pub difficulty: u8,
    pub payload: Payload,
    pub reference_solution: String,
    pub instance_seed: u64,
}

impl PuzzleInstance {
    /// Checks that the payload matches the task and is well formed.
    pub fn validate(&self) -> Result<()> {
        let ok = match (&self.payload, self.task) {
            (Payload::TwentyFour { numbers, .. }, TaskId::TwentyFour) => !numbers.is_empty(),
            (p @ Payload::Maze { .. }, TaskId::Maze) => maze::shortest_path(p).is_some(),
            (p @ Payload::Sudoku4 { .. }, TaskId::Sudoku4) => sudoku::grid_of(p).is_some(),
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("payload is not a well-formed {} instance", self.task)))
        }
    }

    /// Search-space size: expression count, shortest path length, blank count.
    pub fn difficulty_metric(&self) -> u128 {
        match &self.payload {
            Payload::TwentyFour { numbers, .. } => twentyfour::expression_count(numbers.len()),
            p @ Payload::Maze { .. } => maze::shortest_path(p).map_or(0, |s| s.len() as u128),
            Payload::Sudoku4 { cells } => cells.iter().flatten().filter(|&&d| d == 0).count() as u128,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("instance serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictKind {
    Correct,
    Incorrect,
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub kind: VerdictKind,
    pub detail: String,
}

impl Verdict {
    pub fn correct(detail: impl Into<String>) -> Self {
        Self { kind: VerdictKind::Correct, detail: detail.into() }
    }

    pub fn incorrect(detail: impl Into<String>) -> Self {
        Self { kind: VerdictKind::Incorrect, detail: detail.into() }
    }

    pub fn malformed(detail: impl Into<String>) -> Self {
        Self { kind: VerdictKind::Malformed, detail: detail.into() }
    }
}

fn check_difficulty(difficulty: u8) -> Result<()> {
    if (MIN_DIFFICULTY..=MAX_DIFFICULTY).contains(&difficulty) {
        Ok(())
    } else {
        Err(Error::invalid(format!("difficulty must be 1-5, got {difficulty}")))
    }
}

pub fn gen_twentyfour(difficulty: u8, seed: u64) -> Result<PuzzleInstance> {
    check_difficulty(difficulty)?;
    Ok(twentyfour::generate(difficulty, seed))
}

pub fn gen_maze(difficulty: u8, seed: u64) -> Result<PuzzleInstance> {
    check_difficulty(difficulty)?;
    Ok(maze::generate(difficulty, seed))
}

pub fn gen_sudoku4(difficulty: u8, seed: u64) -> Result<PuzzleInstance> {
    check_difficulty(difficulty)?;
    Ok(sudoku::generate(difficulty, seed))
}

pub fn generate(task: TaskId, difficulty: u8, seed: u64) -> Result<PuzzleInstance> {
    match task {
        TaskId::TwentyFour => gen_twentyfour(difficulty, seed),
        TaskId::Maze => gen_maze(difficulty, seed),
        TaskId::Sudoku4 => gen_sudoku4(difficulty, seed),
    }
}

pub fn verify_twentyfour(instance: &PuzzleInstance, answer: &str) -> Verdict {
    twentyfour::verify(instance, answer)
}

pub fn verify_maze(instance: &PuzzleInstance, answer: &str) -> Verdict {
    maze::verify(instance, answer)
}

pub fn verify_sudoku4(instance: &PuzzleInstance, answer: &str) -> Verdict {
    sudoku::verify(instance, answer)
}

/// Dispatches on the instance's task.
pub fn verify(instance: &PuzzleInstance, answer: &str) -> Verdict {
    match instance.task {
        TaskId::TwentyFour => verify_twentyfour(instance, answer),
        TaskId::Maze => verify_maze(instance, answer),
        TaskId::Sudoku4 => verify_sudoku4(instance, answer),
    }
}

/// Correct → 1, incorrect or malformed → 0.
pub fn reward_from_verdict<T: Scalar>(v: &Verdict) -> T {
    match v.kind {
        VerdictKind::Correct => T::one(),
        VerdictKind::Incorrect | VerdictKind::Malformed => T::zero(),
    }
}

/// Width of the prompt encoding fed to the policy.
pub const PROMPT_DIM: usize = 96;

const TASK_ONE_HOT: u32 = 0;
const DIFFICULTY_SLOT: u32 = 3;
const PAYLOAD_BASE: u32 = 4;
const MAX_SIDE: usize = 6;

/// Sparse, fixed-width encoding of an instance: task one-hot, difficulty/5,
/// then task-specific bits (maze interior walls, sudoku cell one-hots,
/// 24-point per-slot number one-hots). Entries past `PROMPT_DIM` are dropped.
pub fn prompt_features(instance: &PuzzleInstance) -> Vec<(u32, f64)> {
    let mut f = vec![
        (TASK_ONE_HOT + instance.task.index() as u32, 1.0),
        (DIFFICULTY_SLOT, f64::from(instance.difficulty) / f64::from(MAX_DIFFICULTY)),
    ];
    match &instance.payload {
        Payload::TwentyFour { numbers, .. } => {
            for (slot, &n) in numbers.iter().enumerate().take(6) {
                if (1..=13).contains(&n) {
                    f.push((PAYLOAD_BASE + (slot * 13) as u32 + n - 1, 1.0));
                }
            }
        }
        Payload::Maze { rows, cols, grid, .. } => {
            let g: Vec<&[u8]> = grid.iter().map(|s| s.as_bytes()).collect();
            let wall = |y: usize, x: usize| g.get(y).and_then(|row| row.get(x)) != Some(&b'.');
            for r in 0..(*rows).min(MAX_SIDE) {
                for c in 0..(*cols).min(MAX_SIDE) {
                    if c + 1 < *cols && wall(2 * r + 1, 2 * c + 2) {
                        f.push((PAYLOAD_BASE + (r * MAX_SIDE + c) as u32, 1.0));
                    }
                    if r + 1 < *rows && wall(2 * r + 2, 2 * c + 1) {
                        f.push((PAYLOAD_BASE + (MAX_SIDE * MAX_SIDE + r * MAX_SIDE + c) as u32, 1.0));
                    }
                }
            }
        }
        Payload::Sudoku4 { cells } => {
            for (p, &d) in cells.iter().flatten().enumerate().take(16) {
                f.push((PAYLOAD_BASE + (p * 5) as u32 + u32::from(d.min(4)), 1.0));
            }
        }
    }
    f.retain(|&(i, _)| (i as usize) < PROMPT_DIM);
    f
}

pub fn write_dataset<W: Write>(mut out: W, instances: &[PuzzleInstance]) -> Result<()> {
    for inst in instances {
        writeln!(out, "{}", inst.to_json_line())?;
    }
    Ok(())
}

/// Reads one instance per non-empty line and validates each.
pub fn read_dataset<R: BufRead>(input: R) -> Result<Vec<PuzzleInstance>> {
    let mut out = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: PuzzleInstance = serde_json::from_str(&line)
            .map_err(|e| Error::invalid(format!("line {}: {e}", lineno + 1)))?;
        inst.validate()
            .map_err(|e| Error::invalid(format!("line {}: {e}", lineno + 1)))?;
        out.push(inst);
    }
    Ok(out)
}
