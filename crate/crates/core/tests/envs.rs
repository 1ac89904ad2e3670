use proptest::prelude::*;

use deskrl::envs::{self, pairwise_preference, Payload, TaskId, VerdictKind};

fn task() -> impl Strategy<Value = TaskId> {
    prop::sample::select(TaskId::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn reference_solutions_verify(t in task(), d in 1u8..=5, seed in any::<u64>()) {
        let inst = envs::generate(t, d, seed).unwrap();
        prop_assert_eq!(inst.task, t);
        prop_assert_eq!(inst.difficulty, d);
        prop_assert_eq!(envs::verify(&inst, &inst.reference_solution).kind, VerdictKind::Correct);
    }

    #[test]
    fn generation_is_deterministic(t in task(), d in 1u8..=5, seed in any::<u64>()) {
        let a = envs::generate(t, d, seed).unwrap().to_json_line();
        let b = envs::generate(t, d, seed).unwrap().to_json_line();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn dataset_line_round_trips(t in task(), d in 1u8..=5, seed in any::<u64>()) {
        let inst = envs::generate(t, d, seed).unwrap();
        let mut buf = Vec::new();
        envs::write_dataset(&mut buf, std::slice::from_ref(&inst)).unwrap();
        let back = envs::read_dataset(buf.as_slice()).unwrap();
        prop_assert_eq!(back, vec![inst]);
    }

    #[test]
    fn arbitrary_answers_get_a_verdict(t in task(), seed in any::<u64>(), answer in ".{0,40}") {
        let inst = envs::generate(t, 3, seed).unwrap();
        let v = envs::verify(&inst, &answer);
        if v.kind == VerdictKind::Correct {
            // A correct verdict must survive re-verification.
            prop_assert_eq!(envs::verify(&inst, &answer).kind, VerdictKind::Correct);
        }
    }

    #[test]
    fn preference_sums_to_one(a in ".{0,30}", b in ".{0,30}", seed in any::<u64>()) {
        let s = pairwise_preference(&a, &b, seed) + pairwise_preference(&b, &a, seed);
        prop_assert!((s - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn difficulty_metric_is_monotone() {
    for t in TaskId::ALL {
        for seed in 0..50 {
            let metrics: Vec<u128> = (1..=5).map(|d| envs::generate(t, d, seed).unwrap().difficulty_metric()).collect();
            assert!(metrics.windows(2).all(|w| w[0] <= w[1]), "{t} seed {seed}: {metrics:?}");
        }
    }
}

#[test]
fn wrong_answers_are_rejected() {
    for seed in 0..100 {
        let maze = envs::generate(TaskId::Maze, 2, seed).unwrap();
        assert_eq!(envs::verify(&maze, "").kind, VerdictKind::Incorrect, "empty path");
        assert_eq!(envs::verify(&maze, "Q").kind, VerdictKind::Malformed);

        let sudoku = envs::generate(TaskId::Sudoku4, 2, seed).unwrap();
        let mut wrong: Vec<char> = sudoku.reference_solution.chars().collect();
        let i = wrong.iter().position(|c| c.is_ascii_digit()).unwrap();
        wrong[i] = if wrong[i] == '1' { '2' } else { '1' };
        let wrong: String = wrong.into_iter().collect();
        assert_ne!(envs::verify(&sudoku, &wrong).kind, VerdictKind::Correct);
    }
    let p = envs::generate(TaskId::TwentyFour, 1, 0).unwrap();
    if let Payload::TwentyFour { numbers, .. } = &p.payload {
        let sum = numbers.iter().map(|n| n.to_string()).collect::<Vec<_>>().join("+");
        let total: u32 = numbers.iter().sum();
        if total != 24 {
            assert_eq!(envs::verify(&p, &sum).kind, VerdictKind::Incorrect);
        }
    }
}

#[test]
fn bad_difficulty_is_an_error() {
    for t in TaskId::ALL {
        assert!(envs::generate(t, 0, 1).is_err());
        assert!(envs::generate(t, 6, 1).is_err());
    }
}
