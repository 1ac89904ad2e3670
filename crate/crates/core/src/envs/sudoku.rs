//! 4×4 sudoku with 2×2 boxes. Blank cells are 0.

use rand::seq::SliceRandom;

use super::{Payload, PuzzleInstance, TaskId, Verdict};
use crate::rng;

pub type Grid = [[u8; 4]; 4];

pub fn blanks_for(difficulty: u8) -> usize {
    (2 * difficulty as usize + 2).min(12)
}

fn allowed(g: &Grid, r: usize, c: usize, d: u8) -> bool {
    let (br, bc) = (r / 2 * 2, c / 2 * 2);
    (0..4).all(|k| g[r][k] != d && g[k][c] != d)
        && (0..2).all(|i| (0..2).all(|j| g[br + i][bc + j] != d))
}

fn fill<R: rand::Rng>(g: &mut Grid, pos: usize, rng: &mut R) -> bool {
    if pos == 16 {
        return true;
    }
    let (r, c) = (pos / 4, pos % 4);
    let mut digits = [1u8, 2, 3, 4];
    digits.shuffle(rng);
    for d in digits {
        if allowed(g, r, c, d) {
            g[r][c] = d;
            if fill(g, pos + 1, rng) {
                return true;
            }
            g[r][c] = 0;
        }
    }
    false
}

/// Number of completions of `g`, stopping once `limit` is reached.
pub fn count_solutions(g: &mut Grid, limit: usize) -> usize {
    let Some(pos) = (0..16).find(|&p| g[p / 4][p % 4] == 0) else { return 1 };
    let (r, c) = (pos / 4, pos % 4);
    let mut total = 0;
    for d in 1..=4 {
        if allowed(g, r, c, d) {
            g[r][c] = d;
            total += count_solutions(g, limit - total);
            g[r][c] = 0;
            if total >= limit {
                break;
            }
        }
    }
    total
}

pub fn generate(difficulty: u8, seed: u64) -> PuzzleInstance {
    let target = blanks_for(difficulty);
    let mut rng = rng::keyed(&[0x5D0C, u64::from(difficulty), seed]);
    loop {
        let mut solution = [[0u8; 4]; 4];
        fill(&mut solution, 0, &mut rng);
        let mut order: Vec<usize> = (0..16).collect();
        order.shuffle(&mut rng);
        let mut puzzle = solution;
        let mut removed = 0;
        for p in order {
            if removed == target {
                break;
            }
            let keep = puzzle[p / 4][p % 4];
            puzzle[p / 4][p % 4] = 0;
            if count_solutions(&mut puzzle.clone(), 2) == 1 {
                removed += 1;
            } else {
                puzzle[p / 4][p % 4] = keep;
            }
        }
        if removed == target {
            let reference_solution = (0..16)
                .filter(|&p| puzzle[p / 4][p % 4] == 0)
                .map(|p| char::from(b'0' + solution[p / 4][p % 4]))
                .collect();
            return PuzzleInstance {
                task: TaskId::Sudoku4,
                difficulty,
                payload: Payload::Sudoku4 { cells: puzzle.iter().map(|r| r.to_vec()).collect() },
                reference_solution,
                instance_seed: seed,
            };
        }
    }
}

pub fn grid_of(payload: &Payload) -> Option<Grid> {
    let Payload::Sudoku4 { cells } = payload else { return None };
    if cells.len() != 4 || cells.iter().any(|r| r.len() != 4 || r.iter().any(|&d| d > 4)) {
        return None;
    }
    let mut g = [[0u8; 4]; 4];
    for (r, row) in cells.iter().enumerate() {
        g[r].copy_from_slice(row);
    }
    Some(g)
}

fn is_valid_solution(g: &Grid) -> bool {
    let groups = (0..4).flat_map(|k| {
        let row: Vec<u8> = (0..4).map(|j| g[k][j]).collect();
        let col: Vec<u8> = (0..4).map(|j| g[j][k]).collect();
        let bx: Vec<u8> = (0..4).map(|j| g[k / 2 * 2 + j / 2][k % 2 * 2 + j % 2]).collect();
        [row, col, bx]
    });
    groups.into_iter().all(|mut v| {
        v.sort_unstable();
        v == [1, 2, 3, 4]
    })
}

/// The answer lists digits for the blanks in row-major order, or all 16 cells.
pub fn verify(instance: &PuzzleInstance, answer: &str) -> Verdict {
    let Some(givens) = grid_of(&instance.payload) else {
        return Verdict::malformed("instance payload is not a 4x4 grid");
    };
    let mut digits = Vec::new();
    for ch in answer.chars().filter(|c| !c.is_ascii_whitespace()) {
        match ch {
            '1'..='4' => digits.push(ch as u8 - b'0'),
            other => return Verdict::malformed(format!("{other:?} is not a digit 1-4")),
        }
    }
    let blanks: Vec<usize> = (0..16).filter(|&p| givens[p / 4][p % 4] == 0).collect();
    let mut filled = givens;
    if digits.len() == blanks.len() {
        for (&p, &d) in blanks.iter().zip(&digits) {
            filled[p / 4][p % 4] = d;
        }
    } else if digits.len() == 16 {
        for p in 0..16 {
            let (given, d) = (givens[p / 4][p % 4], digits[p]);
            if given != 0 && given != d {
                return Verdict::incorrect(format!("cell {p} contradicts the given {given}"));
            }
            filled[p / 4][p % 4] = d;
        }
    } else {
        return Verdict::malformed(format!(
            "expected {} digits (or 16), got {}",
            blanks.len(),
            digits.len()
        ));
    }
    if is_valid_solution(&filled) {
        Verdict::correct("all rows, columns and boxes complete")
    } else {
        Verdict::incorrect("a row, column or box repeats a digit")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::VerdictKind;

    const SOLVED: Grid = [[1, 2, 3, 4], [3, 4, 1, 2], [2, 1, 4, 3], [4, 3, 2, 1]];

    fn inst(g: Grid) -> PuzzleInstance {
        PuzzleInstance {
            task: TaskId::Sudoku4,
            difficulty: 1,
            payload: Payload::Sudoku4 { cells: g.iter().map(|r| r.to_vec()).collect() },
            reference_solution: String::new(),
            instance_seed: 0,
        }
    }

    #[test]
    fn verdict_examples() {
        assert_eq!(verify(&inst(SOLVED), "").kind, VerdictKind::Correct);
        let mut g = SOLVED;
        g[0][0] = 0;
        g[0][1] = 0;
        assert_eq!(verify(&inst(g), "12").kind, VerdictKind::Correct);
        assert_eq!(verify(&inst(g), "21").kind, VerdictKind::Incorrect);
        assert_eq!(verify(&inst(g), "15").kind, VerdictKind::Malformed);
        assert_eq!(verify(&inst(g), "1").kind, VerdictKind::Malformed);
        assert_eq!(verify(&inst(g), "1234341221434321").kind, VerdictKind::Correct);
        assert_eq!(verify(&inst(g), "1234341221434312").kind, VerdictKind::Incorrect);
    }

    #[test]
    fn generated_are_unique() {
        for d in 1..=5 {
            let p = generate(d, 3);
            let mut g = grid_of(&p.payload).unwrap();
            let blanks = g.iter().flatten().filter(|&&x| x == 0).count();
            assert_eq!(blanks, blanks_for(d));
            assert_eq!(count_solutions(&mut g, 3), 1);
            assert_eq!(verify(&p, &p.reference_solution).kind, VerdictKind::Correct);
        }
    }
}
