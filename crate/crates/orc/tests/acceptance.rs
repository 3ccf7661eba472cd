//! Acceptance suite: one test per criterion, each printing a PASS line
//! (run with `cargo test --test acceptance -- --nocapture` to see them).

mod common;

use std::collections::HashMap;
use std::sync::OnceLock;
use std::time::Instant;

use common::{
    assert_grad_matches, rand_one_hot, rand_vec, rand_vec_away_from_zero, rand_vec_separated,
    GradCase,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use orc::config::{self, AugmentationMode, RunConfig};
use orc::data::{self, BatchIterator, Split, SyntheticKind};
use orc::losses::{self, LossWeights, SoftenConfig, TeachingStyle};
use orc::metrics::MetricsRow;
use orc::nets::{NetKind, NetSpec, NetworkLadder};
use orc::roles::{self, GroupState};
use orc::tensor::Tensor;
use orc::trainer::{self, OptimizerState, OrcHyper};

const FD_EPS: f64 = 1e-3;
const FD_TOL: f64 = 1e-4;
const INSTANCES: usize = 100;

fn pass(criterion: usize, label: &str) {
    println!("[acceptance] criterion {criterion} ({label}): PASS");
}

// ───────────────────────── criterion 1 ─────────────────────────

#[test]
fn criterion_1_gradient_suite() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1);

    for i in 0..INSTANCES {
        // elementwise binary with broadcasting
        let a = rand_vec(&mut rng, 6, -3.0, 3.0);
        let b = rand_vec_away_from_zero(&mut rng, 3, 0.3, 3.0);
        for op in ["add", "sub", "mul", "div"] {
            let case = GradCase {
                diff: vec![(&a, vec![2, 3]), (&b, vec![3])],
                fixed: vec![],
            };
            assert_grad_matches(
                &case,
                |d, _| {
                    let x = &d[0];
                    let y = &d[1];
                    let z = match op {
                        "add" => x.add(y).unwrap(),
                        "sub" => x.sub(y).unwrap(),
                        "mul" => x.mul(y).unwrap(),
                        _ => x.div(y).unwrap(),
                    };
                    // square keeps div's output gradient non-trivial
                    z.mul(&z).unwrap().sum(None, false).unwrap()
                },
                FD_EPS,
                FD_TOL,
                &format!("{op} case {i}"),
            );
        }

        // relu away from the kink
        let x = rand_vec_away_from_zero(&mut rng, 6, 0.05, 3.0);
        assert_grad_matches(
            &GradCase { diff: vec![(&x, vec![2, 3])], fixed: vec![] },
            |d, _| d[0].relu().mul(&d[0]).unwrap().sum(None, false).unwrap(),
            FD_EPS,
            FD_TOL,
            &format!("relu case {i}"),
        );

        // log on positive inputs
        let x = rand_vec(&mut rng, 6, 0.2, 3.0);
        assert_grad_matches(
            &GradCase { diff: vec![(&x, vec![2, 3])], fixed: vec![] },
            |d, _| d[0].log().unwrap().sum(None, false).unwrap(),
            FD_EPS,
            FD_TOL,
            &format!("log case {i}"),
        );

        // exp
        let x = rand_vec(&mut rng, 6, -2.0, 2.0);
        assert_grad_matches(
            &GradCase { diff: vec![(&x, vec![2, 3])], fixed: vec![] },
            |d, _| d[0].exp().sum(None, false).unwrap(),
            FD_EPS,
            FD_TOL,
            &format!("exp case {i}"),
        );

        // matmul 4x5 · 5x3 weighted to mix output entries
        let a = rand_vec(&mut rng, 20, -2.0, 2.0);
        let b = rand_vec(&mut rng, 15, -2.0, 2.0);
        let w = rand_vec(&mut rng, 12, -1.0, 1.0);
        assert_grad_matches(
            &GradCase {
                diff: vec![(&a, vec![4, 5]), (&b, vec![5, 3])],
                fixed: vec![(&w, vec![4, 3])],
            },
            |d, c| d[0].matmul(&d[1]).unwrap().mul(&c[0]).unwrap().sum(None, false).unwrap(),
            FD_EPS,
            FD_TOL,
            &format!("matmul case {i}"),
        );

        // reductions over every axis and the full tensor
        let x = rand_vec(&mut rng, 12, -2.0, 2.0);
        for axis in [None, Some(0), Some(1), Some(2)] {
            for kind in ["sum", "mean"] {
                assert_grad_matches(
                    &GradCase { diff: vec![(&x, vec![2, 3, 2])], fixed: vec![] },
                    |d, _| {
                        let r = match kind {
                            "sum" => d[0].sum(axis, false).unwrap(),
                            _ => d[0].mean(axis, false).unwrap(),
                        };
                        r.mul(&r).unwrap().sum(None, false).unwrap()
                    },
                    FD_EPS,
                    FD_TOL,
                    &format!("{kind} axis {axis:?} case {i}"),
                );
            }
        }

        // max with well-separated entries
        let x = rand_vec_separated(&mut rng, 6, 0.05);
        assert_grad_matches(
            &GradCase { diff: vec![(&x, vec![2, 3])], fixed: vec![] },
            |d, _| d[0].max(Some(1), false).unwrap().sum(None, false).unwrap(),
            FD_EPS,
            FD_TOL,
            &format!("max case {i}"),
        );
    }

    // conv2d: fewer instances, each checks dx and dw over stride/padding
    for i in 0..INSTANCES / 4 {
        let stride = 1 + (i % 2);
        let padding = i % 2;
        let x = rand_vec(&mut rng, 2 * 2 * 5 * 5, -1.5, 1.5);
        let w = rand_vec(&mut rng, 2 * 2 * 3 * 3, -1.0, 1.0);
        assert_grad_matches(
            &GradCase {
                diff: vec![(&x, vec![2, 2, 5, 5]), (&w, vec![2, 2, 3, 3])],
                fixed: vec![],
            },
            |d, _| {
                let y = d[0].conv2d(&d[1], stride, padding).unwrap();
                y.mul(&y).unwrap().sum(None, false).unwrap()
            },
            FD_EPS,
            FD_TOL,
            &format!("conv2d s{stride} p{padding} case {i}"),
        );
    }

    // composite losses; teacher logits and labels enter as constants
    let tau_grid = [1.0, 2.0, 4.0];
    for i in 0..INSTANCES {
        let tau = SoftenConfig::new(tau_grid[i % 3]).unwrap();
        let w = LossWeights::new(0.9).unwrap();
        let student = rand_vec(&mut rng, 12, -4.0, 4.0);
        let teacher = rand_vec(&mut rng, 12, -4.0, 4.0);
        let labels = rand_one_hot(&mut rng, 3, 4);
        let feed_labels = rand_one_hot(&mut rng, 3, 4);
        let lambda = rng.gen_range(0.1..0.9);

        // cross-entropy through softmax (Eq. 2 supervised term)
        assert_grad_matches(
            &GradCase {
                diff: vec![(&student, vec![3, 4])],
                fixed: vec![(&labels, vec![3, 4])],
            },
            |d, c| losses::cross_entropy(&d[0], &c[0]).unwrap().1,
            FD_EPS,
            FD_TOL,
            &format!("cross_entropy case {i}"),
        );

        // distillation term
        assert_grad_matches(
            &GradCase {
                diff: vec![(&student, vec![3, 4])],
                fixed: vec![(&teacher, vec![3, 4])],
            },
            |d, c| losses::kd_loss(&d[0], &c[0], &tau).unwrap(),
            FD_EPS,
            FD_TOL,
            &format!("kd_loss case {i}"),
        );

        // blended student total
        assert_grad_matches(
            &GradCase {
                diff: vec![(&student, vec![3, 4])],
                fixed: vec![(&teacher, vec![3, 4]), (&labels, vec![3, 4])],
            },
            |d, c| {
                let (_, ce) = losses::cross_entropy(&d[0], &c[1]).unwrap();
                let kd = losses::kd_loss(&d[0], &c[0], &tau).unwrap();
                losses::student_total_loss(&ce, &kd, &w).unwrap()
            },
            FD_EPS,
            FD_TOL,
            &format!("student_total case {i}"),
        );

        // intensive-teaching loss on mixed-input logits
        assert_grad_matches(
            &GradCase {
                diff: vec![(&student, vec![3, 4])],
                fixed: vec![(&labels, vec![3, 4]), (&feed_labels, vec![3, 4])],
            },
            |d, c| losses::pivot_intensive_loss(&d[0], &c[0], &c[1], lambda).unwrap(),
            FD_EPS,
            FD_TOL,
            &format!("pivot_intensive case {i}"),
        );

        // private teaching
        assert_grad_matches(
            &GradCase {
                diff: vec![(&student, vec![3, 4])],
                fixed: vec![(&teacher, vec![3, 4]), (&labels, vec![3, 4])],
            },
            |d, c| losses::private_teaching_loss(&d[0], &c[0], &c[1], &w, &tau).unwrap(),
            FD_EPS,
            FD_TOL,
            &format!("private_teaching case {i}"),
        );

        // group distillation and the student total, both styles
        let temp = rand_vec(&mut rng, 12, -4.0, 4.0);
        for style in [TeachingStyle::Individual, TeachingStyle::Ensemble] {
            assert_grad_matches(
                &GradCase {
                    diff: vec![(&student, vec![3, 4])],
                    fixed: vec![(&temp, vec![3, 4]), (&teacher, vec![3, 4])],
                },
                |d, c| {
                    losses::group_distill_loss(&d[0], &[c[0].clone()], &c[1], &tau, style).unwrap()
                },
                FD_EPS,
                FD_TOL,
                &format!("group_distill {style:?} case {i}"),
            );
            assert_grad_matches(
                &GradCase {
                    diff: vec![(&student, vec![3, 4])],
                    fixed: vec![(&temp, vec![3, 4]), (&teacher, vec![3, 4]), (&labels, vec![3, 4])],
                },
                |d, c| {
                    losses::student_group_loss(
                        &d[0],
                        &[c[0].clone()],
                        &c[1],
                        &c[2],
                        &w,
                        &tau,
                        style,
                    )
                    .unwrap()
                },
                FD_EPS,
                FD_TOL,
                &format!("student_group {style:?} case {i}"),
            );
        }
    }

    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < 60,
        "gradient suite took {elapsed:?}, budget is one minute"
    );
    pass(1, "gradient suite vs finite differences");
}

// ───────────────────────── criterion 2 ─────────────────────────

#[test]
fn criterion_2_scheduler_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC2);

    // control_weights equals an independent softmax evaluation
    for _ in 0..1000 {
        let n = rng.gen_range(1..8);
        let losses: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..6.0)).collect();
        let w = roles::control_weights(&losses).unwrap();
        let total: f64 = losses.iter().map(|l| l.exp()).sum();
        for (wi, li) in w.weights().iter().zip(&losses) {
            assert!((wi - li.exp() / total).abs() < 1e-9);
        }
    }

    // feedback_counts sums to B
    for _ in 0..1000 {
        let n = rng.gen_range(1..8);
        let losses: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..6.0)).collect();
        let w = roles::control_weights(&losses).unwrap();
        let b = rng.gen_range(1..=256);
        let counts = roles::feedback_counts(&w, b);
        assert_eq!(counts.iter().sum::<usize>(), b);
    }

    // selection equals brute-force argmin (k = 1) and a sort oracle (any k)
    for _ in 0..1000 {
        let n = rng.gen_range(2..9);
        let losses: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..4.0)).collect();
        let (mut arg, mut best) = (0usize, f64::INFINITY);
        for (i, l) in losses.iter().enumerate() {
            if *l < best {
                best = *l;
                arg = i;
            }
        }
        assert_eq!(roles::select_temporary_teachers(&losses, 1).unwrap(), vec![arg]);
        let k = rng.gen_range(0..n - 1);
        let mut oracle: Vec<usize> = (0..n).collect();
        oracle.sort_by(|&a, &b| losses[a].partial_cmp(&losses[b]).unwrap().then(a.cmp(&b)));
        let mut oracle: Vec<usize> = oracle[..k].to_vec();
        oracle.sort_unstable();
        assert_eq!(roles::select_temporary_teachers(&losses, k).unwrap(), oracle);
    }

    // feedback subset equals a per-row sort-and-take oracle
    for _ in 0..200 {
        let students = rng.gen_range(1..5);
        let b = rng.gen_range(students..40);
        let rows: Vec<Vec<f64>> = (0..students)
            .map(|_| (0..b).map(|_| rng.gen_range(0.0..3.0)).collect())
            .collect();
        let losses_vec: Vec<f64> = (0..students).map(|_| rng.gen_range(0.0..3.0)).collect();
        let w = roles::control_weights(&losses_vec).unwrap();
        let counts = roles::feedback_counts(&w, b);
        let subset = roles::build_feedback_subset(&rows, &counts).unwrap();
        let mut expected = Vec::new();
        for (row, take) in rows.iter().zip(&counts) {
            let mut order: Vec<usize> = (0..b).collect();
            order.sort_by(|&x, &y| row[y].partial_cmp(&row[x]).unwrap().then(x.cmp(&y)));
            expected.extend_from_slice(&order[..*take]);
        }
        assert_eq!(subset.indices, expected);
        assert_eq!(subset.indices.len(), b);
    }

    pass(2, "scheduler vs independent oracles");
}

// ───────────────────────── criterion 3 ─────────────────────────

#[test]
fn criterion_3_loss_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC3);
    let tau = SoftenConfig::new(4.0).unwrap();

    for _ in 0..1000 {
        let z = rand_vec(&mut rng, 8, -6.0, 6.0);
        let t = Tensor::from_vec(z.clone(), &[2, 4]).unwrap();
        assert_eq!(losses::kd_loss(&t, &t, &tau).unwrap().item().unwrap(), 0.0);
        let other = Tensor::from_vec(rand_vec(&mut rng, 8, -6.0, 6.0), &[2, 4]).unwrap();
        assert!(losses::kd_loss(&t, &other, &tau).unwrap().item().unwrap() >= 0.0);
    }

    // teacher-side gradients identically zero after backward of every
    // composite loss
    let w = LossWeights::new(0.9).unwrap();
    for _ in 0..50 {
        let student = Tensor::param(rand_vec(&mut rng, 8, -3.0, 3.0), &[2, 4]).unwrap();
        let temp = Tensor::param(rand_vec(&mut rng, 8, -3.0, 3.0), &[2, 4]).unwrap();
        let pivot = Tensor::param(rand_vec(&mut rng, 8, -3.0, 3.0), &[2, 4]).unwrap();
        let y = Tensor::from_vec(rand_one_hot(&mut rng, 2, 4), &[2, 4]).unwrap();

        losses::kd_loss(&student, &pivot, &tau).unwrap().backward().unwrap();
        assert!(pivot.grad().is_none());
        student.zero_grad();

        losses::private_teaching_loss(&temp, &pivot, &y, &w, &tau)
            .unwrap()
            .backward()
            .unwrap();
        assert!(pivot.grad().is_none());
        temp.zero_grad();

        for style in [TeachingStyle::Individual, TeachingStyle::Ensemble] {
            losses::group_distill_loss(&student, &[temp.clone()], &pivot, &tau, style)
                .unwrap()
                .backward()
                .unwrap();
            assert!(temp.grad().is_none());
            assert!(pivot.grad().is_none());
            student.zero_grad();

            losses::student_group_loss(&student, &[temp.clone()], &pivot, &y, &w, &tau, style)
                .unwrap()
                .backward()
                .unwrap();
            assert!(temp.grad().is_none());
            assert!(pivot.grad().is_none());
            student.zero_grad();
        }
    }

    pass(3, "distillation identities and teacher freeze");
}

// ───────────────────────── criterion 4 ─────────────────────────

#[test]
fn criterion_4_exact_spot_checks() {
    // control weights of [1,2,3] against the independent softmax values
    let w = roles::control_weights(&[1.0, 2.0, 3.0]).unwrap();
    let expected = [0.090031, 0.244728, 0.665241];
    for (wi, ei) in w.weights().iter().zip(expected) {
        assert!((wi - ei).abs() < 1e-6, "weight {wi} vs {ei}");
    }

    // kd_loss(teacher [2,0], student [0,0], τ=1) against a direct
    // high-precision evaluation of Σ p_T ln(p_T/p_S), p_S uniform
    let p = (2.0f64.exp()) / (2.0f64.exp() + 1.0);
    let oracle = p * (p / 0.5).ln() + (1.0 - p) * ((1.0 - p) / 0.5).ln();
    assert!((oracle - 0.327_813_325_472_737_7).abs() < 1e-12);
    let kd = losses::kd_loss(
        &Tensor::from_vec(vec![0.0, 0.0], &[1, 2]).unwrap(),
        &Tensor::from_vec(vec![2.0, 0.0], &[1, 2]).unwrap(),
        &SoftenConfig::new(1.0).unwrap(),
    )
    .unwrap()
    .item()
    .unwrap();
    assert!((kd - oracle).abs() < 1e-6, "kd {kd} vs oracle {oracle}");

    // published schedule: two decays by epoch 150, exactly
    let sched = trainer::LrSchedule::new(0.05, vec![100, 150, 210], 0.1).unwrap();
    assert_eq!(sched.lr_at(150), 0.0005);

    pass(4, "exact numeric spot checks");
}

// ───────────────────── desk-scale run grid (criteria 5–7) ─────────────────────

struct DeskGrid {
    /// (arm, seed) → best-epoch accuracy per network.
    best: HashMap<(&'static str, u64), Vec<f64>>,
    /// (arm, seed) → full rows, for histogram checks.
    rows: HashMap<(&'static str, u64), Vec<MetricsRow>>,
    ladder_size: usize,
    iters_per_epoch: usize,
    _dir: tempfile::TempDir,
}

const GRID_ARMS: &[&str] = &["baseline_independent", "table1_k0", "table1_k1", "table2_none"];
const GRID_SEEDS: &[u64] = &[7, 11, 13];

fn desk_grid() -> &'static DeskGrid {
    static GRID: OnceLock<DeskGrid> = OnceLock::new();
    GRID.get_or_init(|| {
        let dir = tempfile::tempdir().expect("tempdir");
        let mut best = HashMap::new();
        let mut rows = HashMap::new();
        let mut ladder_size = 0;
        let mut iters_per_epoch = 0;
        for &seed in GRID_SEEDS {
            let ckpt = dir.path().join(format!("ckpt-{seed}"));
            for &arm in GRID_ARMS {
                let mut cfg = config::preset(arm).expect("preset");
                cfg.seed = seed;
                cfg.out_dir = dir.path().join(format!("{arm}-s{seed}"));
                cfg.checkpoint_dir = Some(ckpt.clone());
                let outcome = trainer::run_experiment(&cfg, |_| {}).expect("grid run");
                ladder_size = cfg.ladder.len();
                iters_per_epoch = cfg.dataset.n_train / cfg.batch_size;
                let mut bests = vec![f64::NEG_INFINITY; ladder_size];
                for row in &outcome.rows {
                    for (slot, acc) in bests.iter_mut().zip(&row.test_accuracy) {
                        if *acc > *slot {
                            *slot = *acc;
                        }
                    }
                }
                best.insert((arm, seed), bests);
                rows.insert((arm, seed), outcome.rows);
            }
        }
        DeskGrid { best, rows, ladder_size, iters_per_epoch, _dir: dir }
    })
}

fn seed_mean(grid: &DeskGrid, arm: &'static str, net: usize) -> f64 {
    let total: f64 = GRID_SEEDS.iter().map(|s| grid.best[&(arm, *s)][net]).sum();
    total / GRID_SEEDS.len() as f64
}

// ───────────────────────── criterion 5 ─────────────────────────

#[test]
fn criterion_5_cli_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_orc");
    let mut csvs = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("run{run}"));
        let status = std::process::Command::new(bin)
            .args(["run", "--preset", "table1_k1", "--seed", "7", "--out"])
            .arg(&out)
            .stdout(std::process::Stdio::null())
            .stderr(std::process::Stdio::null())
            .status()
            .expect("spawn orc");
        assert!(status.success(), "run {run} exited with {status}");
        csvs.push(std::fs::read(out.join("metrics.csv")).expect("metrics.csv"));
    }
    assert!(!csvs[0].is_empty());
    assert_eq!(csvs[0], csvs[1], "two executions must produce identical CSV bytes");
    pass(5, "byte-identical CSVs across executions");
}

// ───────────────────────── criterion 6 ─────────────────────────

#[test]
fn criterion_6_table1_direction() {
    let grid = desk_grid();
    let tol = 0.003; // 0.3 percentage points
    for net in 1..grid.ladder_size {
        let orc = seed_mean(grid, "table1_k1", net);
        let base = seed_mean(grid, "baseline_independent", net);
        assert!(
            orc >= base - tol,
            "net{net}: orc mean {orc:.4} vs baseline {base:.4}"
        );
    }
    let smallest = grid.ladder_size - 1;
    let k1 = seed_mean(grid, "table1_k1", smallest);
    let k0 = seed_mean(grid, "table1_k0", smallest);
    assert!(k1 >= k0 - tol, "smallest net: k=1 mean {k1:.4} vs k=0 {k0:.4}");
    pass(6, "teaching holds every pool network near or above baseline");
}

// ───────────────────────── criterion 7 ─────────────────────────

#[test]
fn criterion_7_table2_direction() {
    let grid = desk_grid();
    let tol = 0.003;
    let smallest = grid.ladder_size - 1;
    let mixup = seed_mean(grid, "table1_k1", smallest); // feedback_mixup arm
    let none = seed_mean(grid, "table2_none", smallest);
    assert!(
        mixup >= none - tol,
        "smallest net: feedback_mixup mean {mixup:.4} vs no-intensive {none:.4}"
    );
    pass(7, "feedback mixup holds against the no-intensive arm");
}

// ───────────────────────── criterion 8 ─────────────────────────

#[test]
fn criterion_8_structural_invariants() {
    // A full (small) run driven directly through the iteration API.
    let mut train = data::make_synthetic(SyntheticKind::Blobs, 960, 4, 0.4, 21).unwrap();
    let mut test = data::make_synthetic(SyntheticKind::Blobs, 240, 4, 0.4, 22)
        .unwrap()
        .with_split(Split::Test);
    data::normalize_train_test(&mut train, &mut test).unwrap();
    let spec = |width: usize, seed: u64| NetSpec {
        kind: NetKind::Mlp,
        depth: 2,
        width,
        num_classes: 4,
        input_shape: vec![2],
        init_seed: seed,
    };
    let mut ladder =
        NetworkLadder::new(vec![spec(16, 1), spec(12, 2), spec(8, 3), spec(6, 4)]).unwrap();
    let mut opts: Vec<OptimizerState> = (0..ladder.len())
        .map(|id| OptimizerState::new(ladder.network(id), 0.05, 0.9, 5e-4).unwrap())
        .collect();
    let hyper = OrcHyper {
        k: 1,
        soften: SoftenConfig::new(4.0).unwrap(),
        weights: LossWeights::new(0.9).unwrap(),
        alpha_mix: 0.2,
        style: TeachingStyle::Individual,
        augmentation: AugmentationMode::FeedbackMixup,
    };
    let batch = 32;
    let mut iter = BatchIterator::new(&train, batch, 77).unwrap();
    let mut mixup_rng = ChaCha8Rng::seed_from_u64(88);
    let mut state = GroupState::new(ladder.len()).unwrap();
    let epochs = 5;
    let per_epoch = iter.batches_per_epoch();

    for _epoch in 0..epochs {
        let mut promotions = vec![0u64; ladder.len()];
        for _ in 0..per_epoch {
            let (x, y) = iter.next_batch();
            assert!(state.temp_teacher_ids().is_empty(), "boundary must be demoted");
            let (next, report) =
                trainer::orc_iteration(&mut ladder, &state, &x, &y, &mut opts, &hyper, &mut mixup_rng)
                    .unwrap();
            // one optimizer step per network per iteration
            let mut stepped = report.stepped.clone();
            stepped.sort_unstable();
            assert_eq!(stepped, (0..ladder.len()).collect::<Vec<_>>());
            assert_eq!(stepped.len(), {
                let mut dedup = stepped.clone();
                dedup.dedup();
                dedup.len()
            });
            // teachers unchanged across the stages they serve as targets in
            assert_eq!(report.pivot_fp_after_update, report.pivot_fp_after_group);
            assert_eq!(report.temp_fps_after_update, report.temp_fps_after_group);
            // temp set empty at the iteration boundary
            assert!(next.temp_teacher_ids().is_empty());
            for id in &report.selected {
                promotions[*id] += 1;
            }
            let count_sum: usize = report.feedback_counts.iter().map(|(_, c)| c).sum();
            assert_eq!(count_sum, batch);
            state = next;
        }
        // promotion histogram total = k × iterations-per-epoch
        assert_eq!(promotions.iter().sum::<u64>(), (hyper.k * per_epoch) as u64);
        assert_eq!(promotions[0], 0, "the pivot is never promoted");
    }
    assert_eq!(state.iteration() as usize, epochs * per_epoch);

    // the same invariants as recorded by a full run_experiment pass
    let grid = desk_grid();
    for &seed in GRID_SEEDS {
        let rows = &grid.rows[&("table1_k1", seed)];
        for row in rows {
            let total: u64 = row.promotions.iter().sum();
            assert_eq!(total, grid.iters_per_epoch as u64);
            assert_eq!(row.promotions[0], 0);
        }
    }

    pass(8, "structural teaching invariants over a full run");
}

// ───────────────────────── criterion 9 ─────────────────────────

#[test]
fn criterion_9_data_pipeline() {
    // IDX round trip on a 10-image fixture
    let dir = tempfile::tempdir().unwrap();
    let images_path = dir.path().join("images-idx3-ubyte");
    let labels_path = dir.path().join("labels-idx1-ubyte");
    let mut rng = ChaCha8Rng::seed_from_u64(0xC9);
    let (n, h, w) = (10usize, 28usize, 28usize);
    let pixels: Vec<u8> = (0..n * h * w).map(|_| rng.gen()).collect();
    let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
    let mut img = vec![];
    img.extend_from_slice(&0x0000_0803u32.to_be_bytes());
    img.extend_from_slice(&(n as u32).to_be_bytes());
    img.extend_from_slice(&(h as u32).to_be_bytes());
    img.extend_from_slice(&(w as u32).to_be_bytes());
    img.extend_from_slice(&pixels);
    std::fs::write(&images_path, &img).unwrap();
    let mut lab = vec![];
    lab.extend_from_slice(&0x0000_0801u32.to_be_bytes());
    lab.extend_from_slice(&(n as u32).to_be_bytes());
    lab.extend_from_slice(&labels);
    std::fs::write(&labels_path, &lab).unwrap();

    let ds = data::load_idx(&images_path, &labels_path).unwrap();
    assert_eq!(ds.len(), 10);
    assert_eq!(ds.feature_shape(), vec![1, 28, 28]);
    let loaded = ds.images.values();
    for (v, p) in loaded.iter().zip(&pixels) {
        assert_eq!(*v, *p as f64, "pixel round trip");
    }
    let lab_values = ds.labels.values();
    for (i, l) in labels.iter().enumerate() {
        assert_eq!(lab_values[i * 10 + *l as usize], 1.0);
        assert_eq!(lab_values[i * 10..(i + 1) * 10].iter().sum::<f64>(), 1.0);
    }

    // normalization statistics on the training split
    let mut train = data::make_synthetic(SyntheticKind::Blobs, 2000, 8, 0.45, 31).unwrap();
    let mut test = data::make_synthetic(SyntheticKind::Blobs, 500, 8, 0.45, 32)
        .unwrap()
        .with_split(Split::Test);
    data::normalize_train_test(&mut train, &mut test).unwrap();
    let (mean, std) = train.channel_stats();
    for m in &mean {
        assert!(m.abs() < 1e-6, "post-normalization mean {m}");
    }
    for s in &std {
        assert!((s - 1.0).abs() < 1e-6, "post-normalization std {s}");
    }

    // epoch coverage: every index exactly once when B divides N
    let ds = data::make_synthetic(SyntheticKind::Blobs, 120, 4, 0.3, 33).unwrap();
    let mut it = BatchIterator::new(&ds, 24, 5).unwrap();
    let all = ds.images.values();
    let row_of = |x0: f64, x1: f64| {
        all.chunks(2)
            .position(|r| r[0] == x0 && r[1] == x1)
            .expect("row identity")
    };
    let mut seen = std::collections::HashSet::new();
    for _ in 0..it.batches_per_epoch() {
        let (x, _) = it.next_batch();
        for row in x.values().chunks(2) {
            assert!(seen.insert(row_of(row[0], row[1])), "index repeated within epoch");
        }
    }
    assert_eq!(seen.len(), 120, "every index exactly once when B divides N");

    pass(9, "data pipeline round trips and statistics");
}

// ───────────────────────── auxiliary smoke property ─────────────────────────

/// Student-group mean training CE, averaged per epoch, does not increase over
/// the first five epochs of a small teaching run (three seeds).
#[test]
fn smoke_student_ce_non_increasing_early() {
    for seed in [1u64, 2, 3] {
        // a slow-converging regime so that all five epochs genuinely descend
        let mut cfg = RunConfig::default();
        cfg.dataset.n_train = 960;
        cfg.dataset.n_test = 240;
        cfg.dataset.num_classes = 16;
        cfg.dataset.noise = 0.3;
        cfg.dataset.seed = 100 + seed;
        cfg.ladder = vec![
            config::LadderEntry { kind: NetKind::Mlp, depth: 2, width: 16 },
            config::LadderEntry { kind: NetKind::Mlp, depth: 2, width: 12 },
            config::LadderEntry { kind: NetKind::Mlp, depth: 2, width: 8 },
            config::LadderEntry { kind: NetKind::Mlp, depth: 2, width: 6 },
        ];
        cfg.epochs = 5;
        cfg.pretrain_epochs = 10;
        cfg.batch_size = 32;
        cfg.lr = 0.005;
        cfg.seed = seed;
        let dir = tempfile::tempdir().unwrap();
        cfg.out_dir = dir.path().to_path_buf();
        let outcome = trainer::run_experiment(&cfg, |_| {}).unwrap();
        let pool_mean: Vec<f64> = outcome
            .rows
            .iter()
            .map(|r| r.train_ce[1..].iter().sum::<f64>() / (r.train_ce.len() - 1) as f64)
            .collect();
        for window in pool_mean.windows(2) {
            assert!(
                window[1] <= window[0] + 1e-9,
                "seed {seed}: student CE rose from {} to {}",
                window[0],
                window[1]
            );
        }
    }
}

// ───────────────────────── CLI surface checks ─────────────────────────

#[test]
fn cli_exit_codes_follow_the_contract() {
    let bin = env!("CARGO_BIN_EXE_orc");
    // missing config and preset → config error → exit 2
    let status = std::process::Command::new(bin)
        .args(["run"])
        .stdout(std::process::Stdio::null())
        .stderr(std::process::Stdio::null())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    // unknown preset → exit 2
    let status = std::process::Command::new(bin)
        .args(["run", "--preset", "nope"])
        .stdout(std::process::Stdio::null())
        .stderr(std::process::Stdio::null())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    // summarize over a missing file → format error → exit 1
    let status = std::process::Command::new(bin)
        .args(["summarize", "/nonexistent/metrics.csv"])
        .stdout(std::process::Stdio::null())
        .stderr(std::process::Stdio::null())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn cli_summarize_renders_grid_runs() {
    let grid = desk_grid();
    // summarize two CSVs produced by the grid
    let a = grid._dir.path().join("table1_k0-s7/metrics.csv");
    let b = grid._dir.path().join("table1_k1-s7/metrics.csv");
    let report = orc::metrics::summarize(&[a, b]).unwrap();
    assert!(report.contains("best_net3"));
    assert!(report.lines().count() >= 4);
}

#[test]
fn env_thread_cap_is_validated() {
    let bin = env!("CARGO_BIN_EXE_orc");
    let status = std::process::Command::new(bin)
        .args(["run", "--preset", "table1_k1"])
        .env("ORC_THREADS", "zero")
        .stdout(std::process::Stdio::null())
        .stderr(std::process::Stdio::null())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2), "unparseable ORC_THREADS is a config error");
}
