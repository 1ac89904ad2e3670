//! Perfect mazes carved by randomized depth-first search.
//!
//! The grid is stored as text with walls: a maze of `rows × cols` cells is
//! `(2·rows+1) × (2·cols+1)` characters, `#` for wall and `.` for open. Cell
//! `(r, c)` sits at character `(2r+1, 2c+1)`. Difficulty `d` gives a square
//! grid of side `2d+3` characters, i.e. `(d+1) × (d+1)` cells, and a shortest
//! path length inside [`PATH_BANDS`].

use std::collections::VecDeque;

use rand::seq::SliceRandom;

use super::{Payload, PuzzleInstance, TaskId, Verdict};
use crate::rng;

pub fn cells_per_side(difficulty: u8) -> usize {
    difficulty as usize + 1
}

/// Inclusive shortest-path length range accepted at each difficulty. The
/// ranges do not overlap, so path length never drops as difficulty rises.
pub const PATH_BANDS: [(usize, usize); 5] = [(2, 2), (4, 6), (8, 10), (12, 16), (18, usize::MAX)];

/// Carves mazes until the shortest path falls in the difficulty's band.
/// Attempt `k > 0` reseeds with `k` appended to the key.
pub fn generate(difficulty: u8, seed: u64) -> PuzzleInstance {
    let n = cells_per_side(difficulty);
    let (lo, hi) = PATH_BANDS[difficulty as usize - 1];
    for attempt in 0u64.. {
        let key = [0x3A2E, u64::from(difficulty), seed, attempt];
        let mut rng = rng::keyed(if attempt == 0 { &key[..3] } else { &key });
        let payload = carve(n, &mut rng);
        let reference_solution = shortest_path(&payload).expect("perfect maze is connected");
        if (lo..=hi).contains(&reference_solution.len()) {
            return PuzzleInstance { task: TaskId::Maze, difficulty, payload, reference_solution, instance_seed: seed };
        }
    }
    unreachable!("attempt counter exhausted")
}

fn carve(n: usize, rng: &mut impl rand::Rng) -> Payload {
    let (h, w) = (2 * n + 1, 2 * n + 1);
    let mut grid = vec![vec![b'#'; w]; h];
    let mut visited = vec![vec![false; n]; n];
    let mut stack = vec![(0usize, 0usize)];
    visited[0][0] = true;
    grid[1][1] = b'.';
    while let Some(&(r, c)) = stack.last() {
        let mut next: Vec<(usize, usize)> = neighbors(r, c, n, n)
            .into_iter()
            .filter(|&(nr, nc)| !visited[nr][nc])
            .collect();
        if next.is_empty() {
            stack.pop();
            continue;
        }
        next.shuffle(rng);
        let (nr, nc) = next[0];
        visited[nr][nc] = true;
        grid[2 * nr + 1][2 * nc + 1] = b'.';
        grid[r + nr + 1][c + nc + 1] = b'.';
        stack.push((nr, nc));
    }
    let grid: Vec<String> = grid.into_iter().map(|row| String::from_utf8(row).expect("ascii")).collect();
    Payload::Maze { rows: n, cols: n, grid, start: [0, 0], goal: [n - 1, n - 1] }
}

fn neighbors(r: usize, c: usize, rows: usize, cols: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::with_capacity(4);
    if r > 0 {
        v.push((r - 1, c));
    }
    if r + 1 < rows {
        v.push((r + 1, c));
    }
    if c > 0 {
        v.push((r, c - 1));
    }
    if c + 1 < cols {
        v.push((r, c + 1));
    }
    v
}

fn delta(mv: char) -> Option<(isize, isize)> {
    match mv {
        'U' => Some((-1, 0)),
        'D' => Some((1, 0)),
        'L' => Some((0, -1)),
        'R' => Some((0, 1)),
        _ => None,
    }
}

/// Checked view of a maze payload.
struct View<'a> {
    rows: usize,
    cols: usize,
    grid: Vec<&'a [u8]>,
    start: [usize; 2],
    goal: [usize; 2],
}

impl<'a> View<'a> {
    fn new(payload: &'a Payload) -> Option<Self> {
        let Payload::Maze { rows, cols, grid, start, goal } = payload else { return None };
        let (rows, cols) = (*rows, *cols);
        if rows == 0 || cols == 0 || grid.len() != 2 * rows + 1 {
            return None;
        }
        let grid: Vec<&[u8]> = grid.iter().map(|s| s.as_bytes()).collect();
        if grid.iter().any(|row| row.len() != 2 * cols + 1) {
            return None;
        }
        if start[0] >= rows || start[1] >= cols || goal[0] >= rows || goal[1] >= cols {
            return None;
        }
        Some(Self { rows, cols, grid, start: *start, goal: *goal })
    }

    /// The cell reached by `mv` from `(r, c)`, or `None` on a wall.
    fn step(&self, (r, c): (usize, usize), mv: char) -> Option<(usize, usize)> {
        let (dr, dc) = delta(mv)?;
        let nr = r.checked_add_signed(dr)?;
        let nc = c.checked_add_signed(dc)?;
        if nr >= self.rows || nc >= self.cols {
            return None;
        }
        (self.grid[r + nr + 1][c + nc + 1] != b'#').then_some((nr, nc))
    }
}

/// BFS shortest move string from start to goal.
pub fn shortest_path(payload: &Payload) -> Option<String> {
    let v = View::new(payload)?;
    let start = (v.start[0], v.start[1]);
    let goal = (v.goal[0], v.goal[1]);
    let mut prev = vec![vec![None::<((usize, usize), char)>; v.cols]; v.rows];
    let mut seen = vec![vec![false; v.cols]; v.rows];
    seen[start.0][start.1] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(cur) = queue.pop_front() {
        if cur == goal {
            let mut path = Vec::new();
            let mut at = cur;
            while let Some((p, mv)) = prev[at.0][at.1] {
                path.push(mv);
                at = p;
            }
            return Some(path.into_iter().rev().collect());
        }
        for mv in ['U', 'D', 'L', 'R'] {
            if let Some(nxt) = v.step(cur, mv) {
                if !seen[nxt.0][nxt.1] {
                    seen[nxt.0][nxt.1] = true;
                    prev[nxt.0][nxt.1] = Some((cur, mv));
                    queue.push_back(nxt);
                }
            }
        }
    }
    None
}

pub fn verify(instance: &PuzzleInstance, answer: &str) -> Verdict {
    let Some(v) = View::new(&instance.payload) else {
        return Verdict::malformed("instance payload is not a well-formed maze");
    };
    let moves: Vec<char> = answer.chars().filter(|c| !c.is_ascii_whitespace()).collect();
    if let Some(bad) = moves.iter().find(|&&m| delta(m).is_none()) {
        return Verdict::malformed(format!("unknown move {bad:?}"));
    }
    let mut at = (v.start[0], v.start[1]);
    for (i, &mv) in moves.iter().enumerate() {
        match v.step(at, mv) {
            Some(next) => at = next,
            None => return Verdict::incorrect(format!("move {i} ({mv}) hits a wall")),
        }
    }
    if at == (v.goal[0], v.goal[1]) {
        Verdict::correct("path reaches the goal")
    } else {
        Verdict::incorrect(format!("path ends at {at:?}, not the goal"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::VerdictKind;

    fn corridor() -> PuzzleInstance {
        PuzzleInstance {
            task: TaskId::Maze,
            difficulty: 1,
            payload: Payload::Maze {
                rows: 1,
                cols: 2,
                grid: vec!["#####".into(), "#...#".into(), "#####".into()],
                start: [0, 0],
                goal: [0, 1],
            },
            reference_solution: "R".into(),
            instance_seed: 0,
        }
    }

    #[test]
    fn corridor_examples() {
        let m = corridor();
        assert_eq!(verify(&m, "R").kind, VerdictKind::Correct);
        assert_eq!(verify(&m, "").kind, VerdictKind::Incorrect);
        assert_eq!(verify(&m, "RX").kind, VerdictKind::Malformed);
        assert_eq!(verify(&m, "U").kind, VerdictKind::Incorrect);
        assert_eq!(verify(&m, "RR").kind, VerdictKind::Incorrect);
        assert_eq!(verify(&m, "RLR").kind, VerdictKind::Correct);
    }

    #[test]
    fn generated_maze_is_perfect() {
        for d in 1..=5 {
            let m = generate(d, 11);
            let Payload::Maze { grid, rows, .. } = &m.payload else { panic!() };
            assert_eq!(grid.len(), 2 * d as usize + 3);
            // spanning tree: open passages between cells = cells - 1
            let open: usize = grid.iter().map(|r| r.bytes().filter(|&b| b == b'.').count()).sum();
            assert_eq!(open, 2 * rows * rows - 1);
            assert_eq!(verify(&m, &m.reference_solution).kind, VerdictKind::Correct);
        }
    }
}
