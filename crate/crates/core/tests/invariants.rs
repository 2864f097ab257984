use std::collections::HashSet;
use std::sync::{Arc, Mutex};

use dslad::linalg::{DenseMatrix, DenseVector, LinAlgTape};
use dslad::{Active, Entity, Error, IndexManager, PayloadCursor, PayloadFaultKind, PayloadWriter, Region};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> DenseVector {
    DenseVector::from((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>())
}

fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DenseMatrix {
    DenseMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

fn integer_mat(rng: &mut ChaCha8Rng, n: usize) -> DenseMatrix {
    DenseMatrix::from_fn(n, n, |_, _| rng.gen_range(-4i32..=4) as f64)
}

struct Program {
    tape: LinAlgTape,
    a: Active<DenseMatrix>,
    x: Active<DenseVector>,
    y1: Active<DenseVector>,
    y2: Active<f64>,
}

/// A mix of overwrites, element stores and solves on integer-valued data.
fn record_program(seed: u64, n: usize) -> Program {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tape = LinAlgTape::new().unwrap();
    tape.set_active();
    let mut a = integer_mat(&mut rng, n);
    for i in 0..n {
        a[(i, i)] = 20.0;
    }
    let a = tape.new_input(a).unwrap();
    let x = tape.new_input(DenseVector::from((0..n).map(|i| i as f64 - 1.0).collect::<Vec<_>>())).unwrap();
    let mut y1 = tape.mat_vec(&a, &x).unwrap();
    let s = tape.new_input(2.0).unwrap();
    for _ in 0..3 {
        let t = tape.mat_t_vec(&a, &y1).unwrap();
        tape.axpy(&mut y1, &s, &t).unwrap();
    }
    let e = tape.element(&y1, 0, 0).unwrap();
    tape.set_element(&mut y1, n - 1, 0, &e).unwrap();
    let mut w = tape.solve(&a, &y1).unwrap();
    let w_old = tape.copy(&w).unwrap();
    tape.add_into(&mut w, &w_old, &x).unwrap();
    let y2 = tape.dot(&w, &y1).unwrap();
    tape.register_output(&y1).unwrap();
    tape.register_output(&y2).unwrap();
    tape.set_passive();
    Program { tape, a, x, y1, y2 }
}

fn gradients(p: &mut Program, y1_bar: &DenseVector, y2_bar: f64) -> (DenseMatrix, DenseVector) {
    p.tape.clear_adjoints();
    p.tape.set_gradient(&p.y1, y1_bar.clone()).unwrap();
    p.tape.set_gradient(&p.y2, y2_bar).unwrap();
    p.tape.evaluate().unwrap();
    (p.tape.get_gradient(&p.a).unwrap(), p.tape.get_gradient(&p.x).unwrap())
}

fn rel_close(a: &[f64], b: &[f64], tol: f64) -> bool {
    let scale = a.iter().chain(b).fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * scale)
}

#[test]
fn primal_values_are_restored_after_reverse() {
    for seed in 0..5 {
        let mut p = record_program(seed, 4);
        let y1_bar = DenseVector::filled(4, 1.0);
        gradients(&mut p, &y1_bar, 1.0);
        assert!(p.tape.primal_restoration_mismatches().is_empty(), "seed {seed}");
    }
}

#[test]
fn second_evaluation_reproduces_adjoints_bit_exactly() {
    let mut p = record_program(11, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let bar = random_vec(&mut rng, 5);
    let first = gradients(&mut p, &bar, 0.75);
    let second = gradients(&mut p, &bar, 0.75);
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(first.0.as_slice()), bits(second.0.as_slice()));
    assert_eq!(bits(first.1.as_slice()), bits(second.1.as_slice()));
}

#[test]
fn reverse_sweep_is_linear_in_the_seed() {
    let mut p = record_program(5, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (b1, b2) = (random_vec(&mut rng, 4), random_vec(&mut rng, 4));
    let (s1, s2) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let (alpha, beta) = (0.7, -1.3);
    let g1 = gradients(&mut p, &b1, s1);
    let g2 = gradients(&mut p, &b2, s2);
    let mixed: Vec<f64> = b1.iter().zip(b2.iter()).map(|(x, y)| alpha * x + beta * y).collect();
    let g = gradients(&mut p, &DenseVector::from(mixed), alpha * s1 + beta * s2);
    let combine = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| alpha * x + beta * y).collect::<Vec<_>>();
    assert!(rel_close(g.0.as_slice(), &combine(g1.0.as_slice(), g2.0.as_slice()), 1e-12));
    assert!(rel_close(g.1.as_slice(), &combine(g1.1.as_slice(), g2.1.as_slice()), 1e-12));
}

/// ⟨ȳ, J ẋ⟩ from a central difference equals ⟨J^T ȳ, ẋ⟩ from the tape.
#[test]
fn seed_dot_identity() {
    let n = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let a0 = DenseMatrix::from_fn(n, n, |r, c| if r == c { 4.0 } else { rng.gen_range(-1.0..1.0) });
    let b0 = random_vec(&mut rng, n);
    let ybar = random_vec(&mut rng, n);
    let da = random_mat(&mut rng, n, n);
    let db = random_vec(&mut rng, n);

    let eval = |h: f64, record: bool| -> (f64, Option<(DenseMatrix, DenseVector)>) {
        let mut t = LinAlgTape::new().unwrap();
        t.set_active();
        let a = t.new_input(DenseMatrix::from_fn(n, n, |r, c| a0[(r, c)] + h * da[(r, c)])).unwrap();
        let b = t.new_input(DenseVector::from(b0.iter().zip(db.iter()).map(|(x, d)| x + h * d).collect::<Vec<_>>())).unwrap();
        let x = t.solve(&a, &b).unwrap();
        let y = t.mat_vec(&a, &x).unwrap();
        let z = t.add(&y, &x).unwrap();
        let value = z.value().dot(&ybar);
        if !record {
            return (value, None);
        }
        t.set_gradient(&z, ybar.clone()).unwrap();
        t.evaluate().unwrap();
        (value, Some((t.get_gradient(&a).unwrap(), t.get_gradient(&b).unwrap())))
    };

    let (_, grads) = eval(0.0, true);
    let (ga, gb) = grads.unwrap();
    let adjoint = ga.as_slice().iter().zip(da.as_slice()).map(|(g, d)| g * d).sum::<f64>() + gb.dot(&db);
    let h = 1e-6;
    let tangent = (eval(h, false).0 - eval(-h, false).0) / (2.0 * h);
    let err = (adjoint - tangent).abs() / adjoint.abs().max(tangent.abs()).max(1.0);
    assert!(err < 1e-5, "adjoint {adjoint} tangent {tangent} err {err}");
}

#[test]
fn raw_statements_reverse_in_reverse_order() {
    let seen = Arc::new(Mutex::new(Vec::new()));
    let mut t = LinAlgTape::new().unwrap();
    let sink = seen.clone();
    let h = t
        .register_raw(
            "marker",
            Arc::new(move |i, c: &mut PayloadCursor<'_>| {
                let v = c.get_u32()?;
                sink.lock().unwrap().push((i, v));
                Ok(())
            }),
            None,
        )
        .unwrap();
    t.set_active();
    for v in [10u32, 20, 30] {
        let mut w = PayloadWriter::new();
        w.put_u32(v);
        t.record_statement(h, w.as_bytes()).unwrap();
    }
    assert_eq!(t.size_stream(), &[4, 4, 4]);
    assert_eq!(t.handle_stream(), &[h.get(); 3]);
    t.evaluate().unwrap();
    assert_eq!(*seen.lock().unwrap(), vec![(2, 30), (1, 20), (0, 10)]);
}

#[test]
fn overreading_statement_reports_a_payload_fault() {
    let mut t = LinAlgTape::new().unwrap();
    let greedy = t
        .register_raw(
            "greedy",
            Arc::new(|_, c: &mut PayloadCursor<'_>| {
                c.get_u32()?;
                c.get_bytes(1)?;
                Ok(())
            }),
            None,
        )
        .unwrap();
    let lazy = t.register_raw("lazy", Arc::new(|_, _: &mut PayloadCursor<'_>| Ok(())), None).unwrap();
    t.set_active();
    t.record_statement(lazy, &[]).unwrap();
    t.record_statement(greedy, &7u32.to_le_bytes()).unwrap();
    match t.evaluate().unwrap_err() {
        Error::PayloadFault { statement, name, kind } => {
            assert_eq!(statement, 1);
            assert_eq!(name, "greedy");
            assert_eq!(kind, PayloadFaultKind::Overrun { requested: 1, remaining: 0 });
        }
        e => panic!("unexpected error {e}"),
    }

    let mut t = LinAlgTape::new().unwrap();
    let lazy = t.register_raw("lazy", Arc::new(|_, _: &mut PayloadCursor<'_>| Ok(())), None).unwrap();
    t.set_active();
    t.record_statement(lazy, &[1, 2, 3]).unwrap();
    assert!(matches!(
        t.evaluate(),
        Err(Error::PayloadFault { statement: 0, kind: PayloadFaultKind::Underrun { unread: 3 }, .. })
    ));
}

#[test]
fn statement_payload_reads_back_identifiers_and_old_values() {
    let mut t = LinAlgTape::new().unwrap();
    t.set_active();
    let a = t.new_input(DenseMatrix::from_fn(2, 2, |r, c| 0.1 + (r * 2 + c) as f64)).unwrap();
    let v = t.new_input(DenseVector::from(vec![std::f64::consts::PI, -0.0])).unwrap();
    let old = vec![1.0 / 3.0, f64::MIN_POSITIVE];
    let mut w = t.new_input(DenseVector::from(old.clone())).unwrap();
    t.mat_vec_into(&mut w, &a, &v).unwrap();
    let payload = t.statement_payload(0).unwrap();
    let mut c = PayloadCursor::new(payload);
    assert_eq!(c.get_u32().unwrap(), a.id().get());
    assert_eq!(c.get_u32().unwrap(), v.id().get());
    assert_eq!(c.get_u32().unwrap(), w.id().get());
    let back = c.get_f64s(2).unwrap();
    assert_eq!(back.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), old.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    c.finish().unwrap();
}

#[test]
fn passive_operand_values_are_embedded() {
    let mut t = LinAlgTape::new().unwrap();
    t.set_active();
    let x = t.new_input(DenseVector::from(vec![1.0, 2.0])).unwrap();
    let p = Active::passive(DenseVector::from(vec![0.5, 0.25]));
    let d = t.dot(&x, &p).unwrap();
    // x id, passive marker, shape header, two values, result word, old scalar slot.
    assert_eq!(t.statement_payload(0).unwrap().len(), 4 + 4 + 8 + 16 + 4 + 8);
    t.set_gradient(&d, 2.0).unwrap();
    t.evaluate().unwrap();
    assert_eq!(t.get_gradient(&x).unwrap(), DenseVector::from(vec![1.0, 0.5]));
}

#[test]
fn index_manager_stays_disjoint_under_random_churn() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut m = IndexManager::new();
    let mut live: Vec<u32> = Vec::new();
    let mut live_set = HashSet::new();
    for _ in 0..100_000 {
        if live.is_empty() || rng.gen_bool(0.55) {
            let id = m.acquire().unwrap().get();
            assert_ne!(id, 0);
            assert!(live_set.insert(id), "identifier {id} issued twice");
            live.push(id);
        } else {
            let k = rng.gen_range(0..live.len());
            let id = live.swap_remove(k);
            live_set.remove(&id);
            m.release(dslad::Identifier::new(id)).unwrap();
        }
    }
    assert_eq!(m.live_count(), live.len());
}

#[test]
fn region_contributions_respect_bounds() {
    let mut t = LinAlgTape::new().unwrap();
    t.set_active();
    let m = t.new_input(DenseMatrix::zeros_shape(2, 2)).unwrap();
    assert!(matches!(t.block(&m, Region::new(1, 1, 2, 1)), Err(Error::RegionOutOfBounds { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sum_of_products_gradient(xs in prop::collection::vec(-10.0f64..10.0, 1..8)) {
        let mut t = LinAlgTape::new().unwrap();
        t.set_active();
        let v = t.new_input(DenseVector::from(xs.clone())).unwrap();
        let n = t.squared_norm(&v).unwrap();
        let s = t.scale(&n, &v).unwrap();
        let d = t.dot(&s, &v).unwrap();
        // d = |v|^4, gradient 4 |v|^2 v.
        t.set_gradient(&d, 1.0).unwrap();
        t.evaluate().unwrap();
        let g = t.get_gradient(&v).unwrap();
        let sq: f64 = xs.iter().map(|x| x * x).sum();
        for (gi, xi) in g.as_slice().iter().zip(&xs) {
            let e = 4.0 * sq * xi;
            prop_assert!((gi - e).abs() <= 1e-12 * e.abs().max(1.0));
        }
        prop_assert!(t.primal_restoration_mismatches().is_empty());
    }
}
