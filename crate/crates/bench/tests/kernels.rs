use dslad::linalg::{DenseMatrix, DenseVector};
use dslad_bench::kernels::burgers::{exact, Burgers, BurgersConfig};
use dslad_bench::kernels::t3::KalmanState;
use dslad_bench::kernels::t4::L1State;
use dslad_bench::kernels::{make_kernel, Kalman, L1Analysis, MatMul, QrSolve};
use dslad_bench::value::Value;
use dslad_bench::{check_gradient, evaluate, run, BenchError, Kernel, RunOptions};

fn m(rows: &[&[f64]]) -> DenseMatrix {
    DenseMatrix::from_rows(rows).unwrap()
}

fn v(xs: &[f64]) -> DenseVector {
    DenseVector::from(xs.to_vec())
}

fn gradients(k: &dyn Kernel) -> Vec<Vec<f64>> {
    let ev = evaluate(k).unwrap();
    ev.recorded.inputs.iter().zip(k.inputs()).map(|(t, x)| t.gradient(&ev.tape, x.len()).unwrap()).collect()
}

#[test]
fn burgers_initial_field_is_exact_solution() {
    let k = Burgers::new(BurgersConfig::new(4, 1)).unwrap();
    let h = k.config().dx;
    let u = k.inputs()[0].matrix();
    let w = k.inputs()[1].matrix();
    for j in 0..4 {
        for i in 0..4 {
            let (x, y) = ((i + 1) as f64 * h, (j + 1) as f64 * h);
            assert_eq!(u[(j, i)], x + y);
            assert_eq!(w[(j, i)], x - y);
            assert_eq!(exact(x, y, 0.0), (x + y, x - y));
        }
    }
}

#[test]
fn burgers_without_steps_differentiates_the_squared_norm() {
    let k = Burgers::new(BurgersConfig::new(5, 0)).unwrap();
    let g = gradients(&k);
    for (gi, xi) in g.iter().zip(k.inputs()) {
        for (a, b) in gi.iter().zip(xi.data()) {
            assert_eq!(*a, 2.0 * b);
        }
    }
    let norm: f64 = k.inputs().iter().flat_map(|x| x.data()).map(|x| x * x).sum();
    assert_eq!(k.primal(k.inputs()).unwrap(), norm);
}

#[test]
fn burgers_refuses_unstable_step() {
    let mut cfg = BurgersConfig::new(8, 4);
    cfg.dt = 1.01 * cfg.stability_limit();
    let err = Burgers::new(cfg).err().unwrap();
    assert!(matches!(err, BenchError::Stability { .. }));
    assert!(err.to_string().contains("stability"));
}

#[test]
fn burgers_gradient_matches_differences() {
    let k = Burgers::new(BurgersConfig::new(8, 4)).unwrap();
    let r = run(&k, RunOptions::default()).unwrap();
    let g = r.gradient_check.unwrap();
    assert!(g.pass, "{}", g.max_rel_err);
    assert_eq!(r.tape.statement_count, 4 * 2 * 64 + 2 * 64);
}

#[test]
fn t1_scalar_product() {
    let k = MatMul::from_matrices(m(&[&[2.0]]), m(&[&[3.0]]), 1);
    assert_eq!(k.primal(k.inputs()).unwrap(), 6.0);
    let g = gradients(&k);
    assert_eq!(g, vec![vec![3.0], vec![2.0]]);
}

#[test]
fn t1_payload_per_multiply() {
    for n in [3, 8] {
        let one = evaluate(&MatMul::new(n, 2, 0).unwrap()).unwrap().tape.statistics().bytes_payload;
        let two = evaluate(&MatMul::new(n, 3, 0).unwrap()).unwrap().tape.statistics().bytes_payload;
        assert_eq!(two - one, 8 + 4 + 8 * n * n);
    }
}

#[test]
fn t2_counts_two_statements_per_step() {
    for steps in [1, 4] {
        let k = QrSolve::new(6, steps, 3).unwrap();
        let r = run(&k, RunOptions::default()).unwrap();
        assert_eq!(r.tape.statement_count, 2 * steps);
        assert!(r.gradient_check.unwrap().pass);
    }
}

#[test]
fn t2_scalar_system() {
    let k = QrSolve::from_system(m(&[&[2.0]]), v(&[3.0]), 1);
    // x = b/a, y = x², dy/da = -2b²/a³, dy/db = 2b/a².
    assert_eq!(k.primal(k.inputs()).unwrap(), 2.25);
    let g = gradients(&k);
    assert!((g[0][0] + 2.25).abs() < 1e-14);
    assert!((g[1][0] - 1.5).abs() < 1e-14);
}

#[test]
fn t3_scalar_filter_step() {
    let one = || m(&[&[1.0]]);
    let state = KalmanState {
        f: one(),
        b: m(&[&[0.0]]),
        q: one(),
        h: one(),
        r: one(),
        p: one(),
        u: v(&[0.0]),
        x: v(&[1.0]),
        z: v(&[1.0]),
    };
    let k = Kalman::from_state(state, 1);
    let (x, p) = k.filter(k.inputs()).unwrap();
    assert_eq!(x, v(&[1.0]));
    assert!((p[(0, 0)] - 2.0 / 3.0).abs() < 1e-15);

    let ev = evaluate(&k).unwrap();
    let expected = 1.0 + 4.0 / 9.0;
    assert!((ev.recorded.output.get() - expected).abs() < 1e-15);
}

#[test]
fn t3_statement_count_is_linear_in_steps() {
    let counts: Vec<usize> =
        (1..=3).map(|s| evaluate(&Kalman::new(3, s, 1).unwrap()).unwrap().tape.statistics().statement_count).collect();
    assert_eq!(counts[2] - counts[1], counts[1] - counts[0]);
    assert!(counts[1] > counts[0]);
}

#[test]
fn t4_without_relaxation_keeps_v() {
    let mut s = L1State::random(4, 9).unwrap();
    s.alpha = 1.0;
    s.tau = 0.0;
    s.beta = 0.0;
    let k = L1Analysis::from_state(s.clone(), 1);
    let (v1, z1, v2, z2) = k.iterate(k.inputs()).unwrap();
    assert_eq!(v1, s.v1);
    assert_eq!(v2, s.v2);
    let wx = s.w.matvec(&s.x0).unwrap();
    let ax = s.a.matvec(&s.x0).unwrap();
    for i in 0..4 {
        assert!((z1[i] - (s.v1[i] - wx[i])).abs() < 1e-15);
        assert!((z2[i] - (s.v2[i] - s.y[i] + ax[i])).abs() < 1e-15);
    }
}

#[test]
fn t4_gradient_matches_differences() {
    let k = L1Analysis::new(6, 5, 4).unwrap();
    let ev = evaluate(&k).unwrap();
    let g = check_gradient(&k, &ev, 4).unwrap();
    assert!(g.pass, "{}", g.max_rel_err);
}

#[test]
fn runs_are_deterministic() {
    for case in ["burgers", "t1", "t2", "t3", "t4"] {
        let run_once = || {
            let k = make_kernel(case, 4, 2, 17).unwrap();
            let r = run(k.as_ref(), RunOptions { seed: 17, ..RunOptions::default() }).unwrap();
            let bits: Vec<Vec<u64>> = gradients(k.as_ref()).iter().map(|g| g.iter().map(|x| x.to_bits()).collect()).collect();
            (serde_json::to_string(&r.tape).unwrap(), r.gradient_check.unwrap().max_rel_err.to_bits(), bits)
        };
        assert_eq!(run_once(), run_once(), "{case}");
    }
}

#[test]
fn unknown_case_and_empty_size_are_rejected() {
    assert!(matches!(make_kernel("t9", 4, 1, 0), Err(BenchError::Config(_))));
    for case in ["t1", "t2", "t3", "t4", "burgers"] {
        assert!(make_kernel(case, 0, 1, 0).is_err(), "{case}");
    }
}

#[test]
fn inputs_are_left_untouched_by_checks() {
    let k = make_kernel("t3", 3, 2, 5).unwrap();
    let before: Vec<Value> = k.inputs().to_vec();
    run(k.as_ref(), RunOptions::default()).unwrap();
    assert_eq!(k.inputs(), &before[..]);
}
