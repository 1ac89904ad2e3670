//! 24-point: combine every number exactly once with `+ - * /` to reach the target.

use std::collections::HashSet;

use num_rational::Ratio;
use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, CheckedSub, Zero};
use rand::Rng;

use super::{Payload, PuzzleInstance, TaskId, Verdict};
use crate::rng;

type Q = Ratio<i128>;

pub const TARGET: u32 = 24;
const MAX_NUMBER: u32 = 13;
const MAX_DEPTH: usize = 64;

pub fn count(difficulty: u8) -> usize {
    difficulty as usize + 1
}

pub fn generate(difficulty: u8, seed: u64) -> PuzzleInstance {
    let n = count(difficulty);
    let mut rng = rng::keyed(&[0x24, u64::from(difficulty), seed]);
    loop {
        let numbers: Vec<u32> = (0..n).map(|_| rng.gen_range(1..=MAX_NUMBER)).collect();
        if let Some(expr) = solve(&numbers, TARGET) {
            return PuzzleInstance {
                task: TaskId::TwentyFour,
                difficulty,
                payload: Payload::TwentyFour { numbers, target: TARGET },
                reference_solution: expr,
                instance_seed: seed,
            };
        }
    }
}

/// Number of distinct expression shapes over `n` numbers: orderings of the
/// leaves times binary tree shapes times operator choices.
pub fn expression_count(n: usize) -> u128 {
    if n == 0 {
        return 0;
    }
    let factorial: u128 = (1..=n as u128).product();
    let m = n as u128 - 1;
    // Catalan(m) = (2m)! / ((m+1)! m!)
    let mut catalan: u128 = 1;
    for k in 0..m {
        catalan = catalan * 2 * (2 * k + 1) / (k + 2);
    }
    factorial * catalan * 4u128.pow(m as u32)
}

/// Exhaustive search over pairwise combinations. Returns an expression that
/// evaluates to `target` exactly, or `None`.
pub fn solve(numbers: &[u32], target: u32) -> Option<String> {
    let items: Vec<(Q, String)> = numbers
        .iter()
        .map(|&x| (Q::from_integer(i128::from(x)), x.to_string()))
        .collect();
    let mut dead = HashSet::new();
    search(items, &Q::from_integer(i128::from(target)), &mut dead).map(|e| strip_outer(&e))
}

fn search(items: Vec<(Q, String)>, target: &Q, dead: &mut HashSet<Vec<Q>>) -> Option<String> {
    if items.len() == 1 {
        return (items[0].0 == *target).then(|| items[0].1.clone());
    }
    let mut key: Vec<Q> = items.iter().map(|(q, _)| *q).collect();
    key.sort();
    if dead.contains(&key) {
        return None;
    }
    for i in 0..items.len() {
        for j in i + 1..items.len() {
            let (a, ea) = &items[i];
            let (b, eb) = &items[j];
            let mut candidates: Vec<(Option<Q>, String)> = vec![
                (a.checked_add(b), format!("({ea}+{eb})")),
                (a.checked_mul(b), format!("({ea}*{eb})")),
                (a.checked_sub(b), format!("({ea}-{eb})")),
                (b.checked_sub(a), format!("({eb}-{ea})")),
            ];
            if !b.is_zero() {
                candidates.push((a.checked_div(b), format!("({ea}/{eb})")));
            }
            if !a.is_zero() {
                candidates.push((b.checked_div(a), format!("({eb}/{ea})")));
            }
            for (value, expr) in candidates {
                let Some(value) = value else { continue };
                let mut rest: Vec<(Q, String)> = items
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != i && k != j)
                    .map(|(_, x)| x.clone())
                    .collect();
                rest.push((value, expr));
                if let Some(found) = search(rest, target, dead) {
                    return Some(found);
                }
            }
        }
    }
    dead.insert(key);
    None
}

fn strip_outer(expr: &str) -> String {
    let b = expr.as_bytes();
    if b.first() != Some(&b'(') || b.last() != Some(&b')') {
        return expr.to_string();
    }
    let mut depth = 0i32;
    for (i, &c) in b.iter().enumerate() {
        match c {
            b'(' => depth += 1,
            b')' => depth -= 1,
            _ => {}
        }
        if depth == 0 && i + 1 < b.len() {
            return expr.to_string();
        }
    }
    expr[1..expr.len() - 1].to_string()
}

#[derive(Debug)]
enum Expr {
    Num(u32),
    Bin(Box<Expr>, u8, Box<Expr>),
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    depth: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Expr, String> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err("nesting too deep".into());
        }
        let mut lhs = self.term()?;
        while let Some(op @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Bin(Box::new(lhs), op, Box::new(rhs));
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, String> {
        let mut lhs = self.factor()?;
        while let Some(op @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.factor()?;
            lhs = Expr::Bin(Box::new(lhs), op, Box::new(rhs));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, String> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(format!("expected ')' at {}", self.pos));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() => {
                let start = self.pos;
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1;
                }
                let digits = std::str::from_utf8(&self.s[start..self.pos]).expect("ascii digits");
                digits
                    .parse::<u32>()
                    .map(Expr::Num)
                    .map_err(|_| format!("number out of range: {digits}"))
            }
            Some(c) => Err(format!("unexpected '{}' at {}", c as char, self.pos)),
            None => Err("unexpected end of expression".into()),
        }
    }
}

fn parse(text: &str) -> Result<Expr, String> {
    let compact: Vec<u8> = text.bytes().filter(|b| !b.is_ascii_whitespace()).collect();
    let mut p = Parser { s: &compact, pos: 0, depth: 0 };
    let e = p.expr()?;
    if p.pos != compact.len() {
        return Err(format!("trailing input at {}", p.pos));
    }
    Ok(e)
}

fn leaves(e: &Expr, out: &mut Vec<u32>) {
    match e {
        Expr::Num(n) => out.push(*n),
        Expr::Bin(l, _, r) => {
            leaves(l, out);
            leaves(r, out);
        }
    }
}

enum EvalError {
    DivByZero,
    Overflow,
}

fn eval(e: &Expr) -> Result<Q, EvalError> {
    match e {
        Expr::Num(n) => Ok(Q::from_integer(i128::from(*n))),
        Expr::Bin(l, op, r) => {
            let (a, b) = (eval(l)?, eval(r)?);
            let v = match op {
                b'+' => a.checked_add(&b),
                b'-' => a.checked_sub(&b),
                b'*' => a.checked_mul(&b),
                _ => {
                    if b.is_zero() {
                        return Err(EvalError::DivByZero);
                    }
                    a.checked_div(&b)
                }
            };
            v.ok_or(EvalError::Overflow)
        }
    }
}

pub fn verify(instance: &PuzzleInstance, answer: &str) -> Verdict {
    let Payload::TwentyFour { numbers, target } = &instance.payload else {
        return Verdict::malformed("instance payload is not a 24-point puzzle");
    };
    let expr = match parse(answer) {
        Ok(e) => e,
        Err(why) => return Verdict::malformed(why),
    };
    let mut used = Vec::new();
    leaves(&expr, &mut used);
    used.sort_unstable();
    let mut expected = numbers.clone();
    expected.sort_unstable();
    if used != expected {
        return Verdict::malformed(format!("numbers used {used:?} differ from {expected:?}"));
    }
    match eval(&expr) {
        Ok(v) if v == Q::from_integer(i128::from(*target)) => Verdict::correct("expression reaches target"),
        Ok(v) => Verdict::incorrect(format!("expression evaluates to {v}, not {target}")),
        Err(EvalError::DivByZero) => Verdict::incorrect("division by zero"),
        Err(EvalError::Overflow) => Verdict::incorrect("arithmetic overflow"),
    }
}
