use dslad::linalg::{DenseMatrix, DenseVector, LinAlgTape};
use dslad::{Active, Constant, Entity, Contribution, Error, Region, StatementDescriptor, Tape};

fn vec_of(xs: &[f64]) -> DenseVector {
    DenseVector::from(xs.to_vec())
}

fn mat(rows: &[&[f64]]) -> DenseMatrix {
    DenseMatrix::from_rows(rows).unwrap()
}

fn active_tape() -> LinAlgTape {
    let mut t = LinAlgTape::new().unwrap();
    t.set_active();
    t
}

#[test]
fn square_of_four_has_gradient_eight() {
    let mut t = active_tape();
    let a = t.new_input(4.0).unwrap();
    let w = t.mul(&a, &a).unwrap();
    assert_eq!(w.get(), 16.0);
    t.set_passive();
    t.set_gradient(&w, 1.0).unwrap();
    t.evaluate().unwrap();
    assert_eq!(t.get_gradient(&a).unwrap(), 8.0);
}

#[test]
fn two_outputs_accumulate_into_one_input() {
    let mut t = active_tape();
    let x = t.new_input(1.5).unwrap();
    let two = Active::passive(2.0);
    let three = Active::passive(3.0);
    let y1 = t.scale(&two, &x).unwrap();
    let y2 = t.scale(&three, &x).unwrap();
    t.register_output(&y1).unwrap();
    t.register_output(&y2).unwrap();
    t.set_gradient(&y1, 1.0).unwrap();
    t.set_gradient(&y2, 1.0).unwrap();
    t.evaluate().unwrap();
    assert_eq!(t.get_gradient(&x).unwrap(), 5.0);
}

#[test]
fn scalar_matrix_product() {
    let mut t = active_tape();
    let a = t.new_input(mat(&[&[2.0]])).unwrap();
    let b = t.new_input(mat(&[&[3.0]])).unwrap();
    let c = t.mat_mul(&a, &b).unwrap();
    assert_eq!(c.value()[(0, 0)], 6.0);
    t.set_gradient(&c, mat(&[&[1.0]])).unwrap();
    t.evaluate().unwrap();
    assert_eq!(t.get_gradient(&a).unwrap(), mat(&[&[3.0]]));
    assert_eq!(t.get_gradient(&b).unwrap(), mat(&[&[2.0]]));
}

#[test]
fn identity_times_matrix_passes_seed_through() {
    let mut t = active_tape();
    let a = t.new_input(DenseMatrix::identity(2)).unwrap();
    let b = t.new_input(mat(&[&[1.0, -2.0], &[0.5, 4.0]])).unwrap();
    let c = t.mat_mul(&a, &b).unwrap();
    let seed = mat(&[&[0.25, 1.0], &[-3.0, 2.0]]);
    t.set_gradient(&c, seed.clone()).unwrap();
    t.evaluate().unwrap();
    assert_eq!(t.get_gradient(&b).unwrap(), seed);
}

#[test]
fn identity_matrix_vector_product() {
    let mut t = active_tape();
    let a = t.new_input(DenseMatrix::identity(2)).unwrap();
    let v = t.new_input(vec_of(&[5.0, 7.0])).unwrap();
    let w = t.mat_vec(&a, &v).unwrap();
    assert_eq!(w.value(), &vec_of(&[5.0, 7.0]));
    t.set_gradient(&w, vec_of(&[1.0, 0.0])).unwrap();
    t.evaluate().unwrap();
    assert_eq!(t.get_gradient(&v).unwrap(), vec_of(&[1.0, 0.0]));
}

#[test]
fn matrix_vector_payload_into_existing_vector() {
    let mut t = active_tape();
    let a = t.new_input(DenseMatrix::from_fn(10, 10, |r, c| (r + c) as f64)).unwrap();
    let v = t.new_input(DenseVector::filled(10, 1.0)).unwrap();
    let mut w = t.new_input(DenseVector::zeros_len(10)).unwrap();
    t.mat_vec_into(&mut w, &a, &v).unwrap();
    assert_eq!(t.statement_count(), 1);
    assert_eq!(t.statistics().bytes_payload, 92);
    assert_eq!(t.size_stream(), &[92]);
}

#[test]
fn first_product_into_fresh_target_stores_no_old_value() {
    let mut t = active_tape();
    let a = t.new_input(DenseMatrix::identity(4)).unwrap();
    let b = t.new_input(DenseMatrix::identity(4)).unwrap();
    let mut c = t.mat_mul(&a, &b).unwrap();
    assert_eq!(t.statistics().bytes_payload, 12);
    t.mat_mul_into(&mut c, &a, &b).unwrap();
    assert_eq!(t.statement_payload(1).unwrap().len(), 12 + 8 * 16);
}

#[test]
fn scalar_solve() {
    let mut t = active_tape();
    let a = t.new_input(mat(&[&[2.0]])).unwrap();
    let b = t.new_input(vec_of(&[6.0])).unwrap();
    let x = t.solve(&a, &b).unwrap();
    assert_eq!(x.value()[0], 3.0);
    t.set_gradient(&x, vec_of(&[1.0])).unwrap();
    t.evaluate().unwrap();
    assert_eq!(t.get_gradient(&b).unwrap(), vec_of(&[0.5]));
    assert_eq!(t.get_gradient(&a).unwrap(), mat(&[&[-1.5]]));
}

#[test]
fn identity_solve() {
    let mut t = active_tape();
    let a = t.new_input(DenseMatrix::identity(3)).unwrap();
    let bv = vec_of(&[1.0, -2.0, 4.0]);
    let b = t.new_input(bv.clone()).unwrap();
    let x = t.solve(&a, &b).unwrap();
    assert_eq!(x.value(), &bv);
    let seed = vec_of(&[0.5, 1.0, -1.0]);
    t.set_gradient(&x, seed.clone()).unwrap();
    t.evaluate().unwrap();
    assert_eq!(t.get_gradient(&b).unwrap(), seed);
    let expected = DenseMatrix::outer(&seed, &bv);
    let got = t.get_gradient(&a).unwrap();
    for (g, e) in got.as_slice().iter().zip(expected.as_slice()) {
        assert_eq!(*g, -e);
    }
}

#[test]
fn singular_solve_is_rejected_at_record_time() {
    let mut t = active_tape();
    let a = t.new_input(mat(&[&[1.0, 2.0], &[2.0, 4.0]])).unwrap();
    let b = t.new_input(vec_of(&[1.0, 1.0])).unwrap();
    let err = t.solve(&a, &b).unwrap_err();
    assert!(matches!(err, Error::Singular { .. }), "{err}");
    assert_eq!(t.statement_count(), 0);
}

#[test]
fn dot_and_squared_norm() {
    let mut t = active_tape();
    let a = t.new_input(vec_of(&[1.0, 2.0])).unwrap();
    let b = t.new_input(vec_of(&[3.0, 4.0])).unwrap();
    let d = t.dot(&a, &b).unwrap();
    assert_eq!(d.get(), 11.0);
    let n = t.squared_norm(&b).unwrap();
    assert_eq!(n.get(), 25.0);
    t.set_gradient(&d, 1.0).unwrap();
    t.evaluate().unwrap();
    assert_eq!(t.get_gradient(&a).unwrap(), vec_of(&[3.0, 4.0]));
    assert_eq!(t.get_gradient(&b).unwrap(), vec_of(&[1.0, 2.0]));

    t.clear_adjoints();
    t.set_gradient(&n, 1.0).unwrap();
    t.evaluate().unwrap();
    assert_eq!(t.get_gradient(&b).unwrap(), vec_of(&[6.0, 8.0]));
}

#[test]
fn element_assignment_stores_one_old_value_regardless_of_length() {
    for n in [2usize, 100, 10_000] {
        let mut t = active_tape();
        let mut v = t.new_input(DenseVector::filled(n, 1.0)).unwrap();
        let x = t.new_input(5.0).unwrap();
        t.set_element(&mut v, 1, 0, &x).unwrap();
        // x id, two index constants, v word, region count, one old value.
        assert_eq!(t.statistics().bytes_payload, 4 + 8 + 4 + 4 + 8, "n = {n}");
        assert_eq!(v.value()[1], 5.0);
    }
}

#[test]
fn element_assignment_reverse() {
    let mut t = active_tape();
    let mut v = t.new_input(vec_of(&[1.0, 2.0, 3.0])).unwrap();
    let x = t.new_input(5.0).unwrap();
    t.set_element(&mut v, 1, 0, &x).unwrap();
    let s = t.squared_norm(&v).unwrap();
    assert_eq!(s.get(), 35.0);
    t.set_gradient(&s, 1.0).unwrap();
    t.evaluate().unwrap();
    assert_eq!(t.get_gradient(&x).unwrap(), 10.0);
    // The overwritten entry no longer influences the output.
    assert_eq!(t.get_gradient(&v).unwrap(), vec_of(&[2.0, 0.0, 6.0]));
    assert_eq!(t.store::<DenseVector>().unwrap().primal(v.id()).unwrap(), &vec_of(&[1.0, 2.0, 3.0]));
}

#[test]
fn out_of_bounds_element_is_rejected() {
    let mut t = active_tape();
    let v = t.new_input(vec_of(&[1.0, 2.0])).unwrap();
    assert!(t.element(&v, 2, 0).is_err());
    assert_eq!(t.statement_count(), 0);
}

#[test]
fn block_round_trip() {
    let mut t = active_tape();
    let m = t.new_input(DenseMatrix::from_fn(3, 4, |r, c| (r * 4 + c) as f64)).unwrap();
    let b = t.block(&m, Region::new(1, 1, 2, 2)).unwrap();
    assert_eq!(b.value(), &mat(&[&[5.0, 6.0], &[9.0, 10.0]]));
    let mut target = t.new_input(DenseMatrix::zeros_shape(3, 3)).unwrap();
    t.set_block(&mut target, 0, 1, &b).unwrap();
    assert_eq!(target.value()[(1, 2)], 10.0);
    let s = t.squared_norm(&target).unwrap();
    t.set_gradient(&s, 1.0).unwrap();
    t.evaluate().unwrap();
    let gm = t.get_gradient(&m).unwrap();
    assert_eq!(gm[(1, 1)], 10.0);
    assert_eq!(gm[(2, 2)], 20.0);
    assert_eq!(gm[(0, 0)], 0.0);
    assert_eq!(t.get_gradient(&target).unwrap(), DenseMatrix::zeros_shape(3, 3));
}

#[test]
fn size_accessors_record_nothing() {
    let mut t = active_tape();
    let v = t.new_input(DenseVector::zeros_len(7)).unwrap();
    let m = Active::passive(DenseMatrix::zeros_shape(3, 4));
    assert_eq!(t.size(&v), 7);
    assert_eq!(t.rows(&m), 3);
    assert_eq!(t.cols(&m), 4);
    assert_eq!(t.size(&Active::passive(DenseVector::zeros_len(7))), 7);
    assert_eq!(t.statement_count(), 0);
}

#[test]
fn in_place_product_with_passive_target() {
    let mut t = active_tape();
    let mut w = Active::passive(3.0);
    let b = t.new_input(2.0).unwrap();
    t.mul_assign(&mut w, &b).unwrap();
    assert!(w.is_active());
    assert_eq!(w.get(), 6.0);
    // w value and id, b id, w word, old slot value, current value.
    assert_eq!(t.statistics().bytes_payload, 36);
    let slot_before = *t.store::<f64>().unwrap().primal(w.id()).unwrap();
    assert_eq!(slot_before, 6.0);

    t.set_gradient(&w, 1.0).unwrap();
    t.evaluate().unwrap();
    assert_eq!(t.get_gradient(&b).unwrap(), 3.0);
    assert!(t.primal_restoration_mismatches().is_empty());

    // Replaying forward brings back the current value.
    t.evaluate_primal().unwrap();
    assert_eq!(*t.store::<f64>().unwrap().primal(w.id()).unwrap(), 6.0);
}

#[test]
fn self_referential_product_uses_old_value() {
    let mut t = active_tape();
    let mut w = t.new_input(3.0).unwrap();
    let w_id = w.id();
    let v = t.new_input(2.0).unwrap();
    t.mul_assign(&mut w, &v).unwrap();
    assert_eq!(w.id(), w_id);
    assert_eq!(w.get(), 6.0);
    t.set_gradient(&w, 1.0).unwrap();
    t.evaluate().unwrap();
    assert_eq!(t.get_gradient(&v).unwrap(), 3.0);
    assert_eq!(t.get_gradient(&w).unwrap(), 2.0);
    assert_eq!(*t.store::<f64>().unwrap().primal(w_id).unwrap(), 3.0);
}

#[test]
fn chained_assignments_record_one_statement_each() {
    let mut t = active_tape();
    let a = t.new_input(2.0).unwrap();
    let mut w = t.new_input(3.0).unwrap();
    let mut v = t.new_input(5.0).unwrap();
    let mut z = t.new_input(7.0).unwrap();
    t.mul_assign(&mut w, &a).unwrap();
    t.mul_assign(&mut v, &w).unwrap();
    t.mul_assign(&mut z, &v).unwrap();
    assert_eq!(t.statement_count(), 3);
    assert_eq!(z.get(), 7.0 * 5.0 * 3.0 * 2.0);
    t.set_gradient(&z, 1.0).unwrap();
    t.evaluate().unwrap();
    assert_eq!(t.get_gradient(&a).unwrap(), 105.0);
}

#[test]
fn all_passive_statement_is_not_recorded() {
    let mut t = active_tape();
    let a = Active::passive(2.0);
    let b = Active::passive(5.0);
    let c = t.mul(&a, &b).unwrap();
    assert_eq!(c.get(), 10.0);
    assert!(!c.is_active());
    assert_eq!(t.statement_count(), 0);
    assert_eq!(t.statistics().bytes_payload, 0);
}

#[test]
fn passive_overwrite_releases_identifier() {
    let mut t = active_tape();
    let x = t.new_input(2.0).unwrap();
    let mut y = t.mul(&x, &x).unwrap();
    let id = y.id();
    t.mul_into(&mut y, &Active::passive(1.0), &Active::passive(4.0)).unwrap();
    assert!(!y.is_active());
    assert_eq!(y.get(), 4.0);
    assert!(!t.store::<f64>().unwrap().index_manager().is_live(id));
    assert_eq!(t.statement_count(), 1);
}

#[test]
fn passive_tape_records_nothing() {
    let mut t = LinAlgTape::new().unwrap();
    assert!(!t.is_active());
    let a = Active::passive(DenseMatrix::identity(3));
    let v = Active::passive(vec_of(&[1.0, 2.0, 3.0]));
    let w = t.mat_vec(&a, &v).unwrap();
    assert_eq!(w.value(), &vec_of(&[1.0, 2.0, 3.0]));
    assert_eq!(t.statement_count(), 0);
    assert!(matches!(t.new_input(1.0), Err(Error::TapePassive)));
}

#[test]
fn seeding_passive_values_is_rejected() {
    let mut t = active_tape();
    let p = Active::passive(1.0);
    assert!(matches!(t.set_gradient(&p, 1.0), Err(Error::PassiveIdentifier)));
    assert!(matches!(t.register_output(&p), Err(Error::PassiveOutput)));
    assert_eq!(t.get_gradient(&p).unwrap(), 0.0);
    let v = t.new_input(vec_of(&[1.0, 2.0])).unwrap();
    assert!(matches!(t.set_gradient(&v, vec_of(&[1.0])), Err(Error::ShapeMismatch { .. })));
}

fn scaled_element_descriptor() -> StatementDescriptor {
    StatementDescriptor::builder("assign_scaled_product")
        .output_region::<DenseVector>("v", |c| Ok(Region::element(c[0].as_index()?, c[1].as_index()?)), true)
        .input::<f64>("a")
        .input::<DenseVector>("b")
        .index_const("row")
        .index_const("col")
        .real_const("divisor")
        .primal(|f| {
            let x = f.value::<f64>(1)? * f.value::<DenseVector>(2)?[0] / f.real(2)?;
            Ok(vec![Box::new(DenseVector::from(vec![x]))])
        })
        .adjoint("a", |f| {
            let vb = f.bar::<DenseVector>(0)?[0];
            Ok(Contribution::full(vb * f.value::<DenseVector>(2)?[0] / f.real(2)?))
        })
        .adjoint("b", |f| {
            let vb = f.bar::<DenseVector>(0)?[0];
            let g = vb * f.value::<f64>(1)? / f.real(2)?;
            Ok(Contribution::region(Region::element(0, 0), DenseVector::from(vec![g])))
        })
        .build()
}

#[test]
fn custom_element_statement() {
    let mut t = active_tape();
    let h = t.register_descriptor(scaled_element_descriptor()).unwrap();
    let mut v = t.new_input(vec_of(&[1.0, 10.0, 100.0])).unwrap();
    let a = t.new_input(4.0).unwrap();
    let b = t.new_input(vec_of(&[6.0, 8.0])).unwrap();
    t.tape_mut()
        .record(
            h,
            &mut [dslad::ArgRef::Lhs(&mut v), dslad::ArgRef::In(&a), dslad::ArgRef::In(&b)],
            &[Constant::index(1), Constant::index(0), Constant::Real(2.0)],
        )
        .unwrap();
    assert_eq!(v.value(), &vec_of(&[1.0, 12.0, 100.0]));
    assert_eq!(t.statistics().bytes_payload, 40);

    t.set_gradient(&v, vec_of(&[0.0, 1.0, 0.0])).unwrap();
    t.evaluate().unwrap();
    assert_eq!(t.get_gradient(&a).unwrap(), 3.0);
    assert_eq!(t.get_gradient(&b).unwrap(), vec_of(&[2.0, 0.0]));
    assert_eq!(t.get_gradient(&v).unwrap(), vec_of(&[0.0, 0.0, 0.0]));
    assert_eq!(t.store::<DenseVector>().unwrap().primal(v.id()).unwrap(), &vec_of(&[1.0, 10.0, 100.0]));
}

#[test]
fn registration_after_recording_is_rejected() {
    let mut t = active_tape();
    let a = t.new_input(1.0).unwrap();
    let _ = t.mul(&a, &a).unwrap();
    assert!(matches!(t.register_descriptor(scaled_element_descriptor()), Err(Error::RecordingStarted)));
    assert!(matches!(t.tape_mut().register_value_kind::<TestScalar>(), Err(Error::RecordingStarted)));
}

#[derive(Debug, Clone, PartialEq)]
struct TestScalar(f64);

impl dslad::Entity for TestScalar {
    const KIND_NAME: &'static str = "test_scalar";
    const ELEMENT_SHAPE: dslad::ElementShape = dslad::ElementShape::Static(dslad::Shape::new(1, 1));
    fn zero_element() -> Self {
        TestScalar(0.0)
    }
    fn shape(&self) -> dslad::Shape {
        dslad::Shape::new(1, 1)
    }
    fn as_slice(&self) -> &[f64] {
        std::slice::from_ref(&self.0)
    }
    fn as_mut_slice(&mut self) -> &mut [f64] {
        std::slice::from_mut(&mut self.0)
    }
    fn from_shape_vec(shape: dslad::Shape, data: Vec<f64>) -> dslad::Result<Self> {
        if data.len() != 1 {
            return Err(Error::InvalidShape { kind: Self::KIND_NAME, shape });
        }
        Ok(TestScalar(data[0]))
    }
}

#[test]
fn reset_keeps_registrations() {
    let mut t = active_tape();
    let a = t.new_input(1.0).unwrap();
    let _ = t.mul(&a, &a).unwrap();
    t.reset();
    assert_eq!(t.statement_count(), 0);
    assert_eq!(t.store::<f64>().unwrap().max_issued(), 0);
    let a = t.new_input(2.0).unwrap();
    let w = t.mul(&a, &a).unwrap();
    t.set_gradient(&w, 1.0).unwrap();
    t.evaluate().unwrap();
    assert_eq!(t.get_gradient(&a).unwrap(), 4.0);
}

#[test]
fn plain_tape_needs_registered_kinds() {
    let mut t = Tape::new();
    t.set_active();
    assert!(matches!(t.new_input(1.0), Err(Error::KindNotRegistered("scalar"))));
}
