//! Sequence-length balancing across micro-batches.
//!
//! Small inputs (up to [`EXACT_LIMIT`] sequences) are partitioned optimally by
//! branch and bound. Larger inputs use multiway Karmarkar-Karp differencing:
//! every sequence starts as an `m`-tuple of bins with itself in one bin,
//! and the two tuples with the largest spread are repeatedly merged by
//! pairing the heaviest bin of one with the lightest bin of the other.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::Serialize;

use crate::error::{Error, Result};

/// Largest input solved exactly.
pub const EXACT_LIMIT: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MicroBatchPlan {
    pub m: usize,
    /// `assignment[i]` is the micro-batch of sequence `i`.
    pub assignment: Vec<usize>,
    pub loads: Vec<u64>,
}

impl MicroBatchPlan {
    pub fn max_load(&self) -> u64 {
        self.loads.iter().copied().max().unwrap_or(0)
    }

    /// Sequence indices per micro-batch, in input order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.m];
        for (i, &b) in self.assignment.iter().enumerate() {
            out[b].push(i);
        }
        out
    }

    fn from_assignment(lengths: &[u64], m: usize, assignment: Vec<usize>) -> Self {
        let mut loads = vec![0; m];
        for (&len, &b) in lengths.iter().zip(&assignment) {
            loads[b] += len;
        }
        Self { m, assignment, loads }
    }
}

/// Partitions `lengths` into `m` micro-batches minimizing the largest total.
pub fn karp_partition(lengths: &[u64], m: usize) -> Result<MicroBatchPlan> {
    if m == 0 {
        return Err(Error::invalid("number of micro-batches must be at least 1"));
    }
    if lengths.is_empty() {
        return Err(Error::invalid("no sequences to partition"));
    }
    if lengths.len() <= EXACT_LIMIT {
        Ok(exact_partition(lengths, m))
    } else {
        Ok(differencing_partition(lengths, m))
    }
}

/// Largest micro-batch total over the mean total.
pub fn balance_metric(plan: &MicroBatchPlan) -> f64 {
    let total: u64 = plan.loads.iter().sum();
    if total == 0 {
        return 1.0;
    }
    plan.max_load() as f64 / (total as f64 / plan.m as f64)
}

/// `max(ceil(total / m), longest)`: no plan can do better.
pub fn lower_bound(lengths: &[u64], m: usize) -> u64 {
    let total: u64 = lengths.iter().sum();
    let longest = lengths.iter().copied().max().unwrap_or(0);
    total.div_ceil(m as u64).max(longest)
}

fn sorted_order(lengths: &[u64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.sort_by_key(|&i| (Reverse(lengths[i]), i));
    order
}

/// Longest-processing-time greedy, lowest index on ties. Seeds the search bound.
fn greedy(lengths: &[u64], m: usize) -> Vec<usize> {
    let mut loads = vec![0u64; m];
    let mut assignment = vec![0; lengths.len()];
    for i in sorted_order(lengths) {
        let b = (0..m).min_by_key(|&b| (loads[b], b)).expect("m >= 1");
        loads[b] += lengths[i];
        assignment[i] = b;
    }
    assignment
}

struct Search<'a> {
    items: Vec<u64>,
    order: &'a [usize],
    m: usize,
    loads: Vec<u64>,
    current: Vec<usize>,
    best: u64,
    best_assignment: Vec<usize>,
    bound: u64,
}

impl Search<'_> {
    fn run(&mut self, k: usize, current_max: u64) {
        if self.best == self.bound {
            return;
        }
        if k == self.items.len() {
            if current_max < self.best {
                self.best = current_max;
                self.best_assignment = self.current.clone();
            }
            return;
        }
        let item = self.items[k];
        for b in 0..self.m {
            let load = self.loads[b];
            // bins with equal load are interchangeable; try the first only
            if (0..b).any(|p| self.loads[p] == load) {
                continue;
            }
            let next = load + item;
            if next >= self.best {
                continue;
            }
            self.loads[b] = next;
            self.current[k] = b;
            self.run(k + 1, current_max.max(next));
            self.loads[b] = load;
            if self.best == self.bound {
                return;
            }
        }
    }
}

/// Exact minimum of the largest micro-batch by branch and bound.
pub fn exact_partition(lengths: &[u64], m: usize) -> MicroBatchPlan {
    let order = sorted_order(lengths);
    let seed_assignment = greedy(lengths, m);
    let seed = MicroBatchPlan::from_assignment(lengths, m, seed_assignment.clone());
    let mut search = Search {
        items: order.iter().map(|&i| lengths[i]).collect(),
        order: &order,
        m,
        loads: vec![0; m],
        current: vec![0; lengths.len()],
        best: seed.max_load(),
        best_assignment: order.iter().map(|&i| seed_assignment[i]).collect(),
        bound: lower_bound(lengths, m),
    };
    // strict improvement only, so the greedy plan survives when it is optimal
    search.run(0, 0);
    let mut assignment = vec![0; lengths.len()];
    for (k, &i) in search.order.iter().enumerate() {
        assignment[i] = search.best_assignment[k];
    }
    MicroBatchPlan::from_assignment(lengths, m, canonical_labels(assignment))
}

/// Relabels bins in order of first appearance so plans are reproducible.
fn canonical_labels(assignment: Vec<usize>) -> Vec<usize> {
    let mut map: Vec<Option<usize>> = Vec::new();
    let mut next = 0;
    assignment
        .into_iter()
        .map(|b| {
            if map.len() <= b {
                map.resize(b + 1, None);
            }
            *map[b].get_or_insert_with(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Tuple {
    /// Bins sorted by descending sum; each holds item indices.
    bins: Vec<(u64, Vec<usize>)>,
    id: usize,
}

impl Tuple {
    fn spread(&self) -> u64 {
        self.bins[0].0 - self.bins[self.bins.len() - 1].0
    }

    fn normalize(&mut self) {
        self.bins.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.first().cmp(&b.1.first())));
    }
}

impl Ord for Tuple {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.spread()
            .cmp(&other.spread())
            .then_with(|| other.id.cmp(&self.id))
    }
}

impl PartialOrd for Tuple {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Multiway Karmarkar-Karp (largest differencing method).
pub fn differencing_partition(lengths: &[u64], m: usize) -> MicroBatchPlan {
    let mut heap: BinaryHeap<Tuple> = lengths
        .iter()
        .enumerate()
        .map(|(i, &len)| {
            let mut bins = vec![(len, vec![i])];
            bins.extend((1..m).map(|_| (0, Vec::new())));
            Tuple { bins, id: i }
        })
        .collect();
    let mut next_id = lengths.len();
    while heap.len() > 1 {
        let a = heap.pop().expect("len > 1");
        let b = heap.pop().expect("len > 1");
        let mut bins = Vec::with_capacity(m);
        for (x, y) in a.bins.into_iter().zip(b.bins.into_iter().rev()) {
            let mut members = x.1;
            members.extend(y.1);
            members.sort_unstable();
            bins.push((x.0 + y.0, members));
        }
        let mut merged = Tuple { bins, id: next_id };
        next_id += 1;
        merged.normalize();
        heap.push(merged);
    }
    let last = heap.pop().expect("non-empty input");
    let mut assignment = vec![0; lengths.len()];
    for (b, (_, members)) in last.bins.iter().enumerate() {
        for &i in members {
            assignment[i] = b;
        }
    }
    MicroBatchPlan::from_assignment(lengths, m, canonical_labels(assignment))
}
