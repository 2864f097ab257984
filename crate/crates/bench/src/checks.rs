//! Tape-level checks: byte accounting, memory scaling, reverse-sweep
//! invariants and corner cases.

use std::collections::HashSet;
use std::sync::{Arc, Mutex};

use dslad::linalg::{DenseMatrix, DenseVector, LinAlgTape};
use dslad::{Active, Entity, Identifier, IndexManager, PayloadCursor, PayloadWriter};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::fd::{central, rel_err, step};
use crate::kernel::Kernel;
use crate::kernels::t1::{per_scalar_ops, MatMul};

/// Bytes per identifier or written-argument word.
const WORD: usize = 4;
/// Bytes per stored real.
const REAL: usize = 8;

pub const SEED_DOT_TOLERANCE: f64 = 1e-5;
pub const INDEX_CHURN_OPS: usize = 100_000;
pub const CORNER_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Check { name: name.to_string(), pass, detail: detail.into() }
    }
}

pub fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.pass)
}

/// Payload of a two-operand statement whose active lhs already holds an
/// `n`-element value: two operand ids, the lhs word and the old value.
pub fn binary_into_existing_bytes(n: usize) -> usize {
    3 * WORD + n * REAL
}

/// Payload of a two-operand statement into a fresh lhs: no old value.
pub fn binary_into_fresh_bytes() -> usize {
    3 * WORD
}

/// Payload of `x = solve(M, v2 − v1) + v1` with `x` an existing vector.
pub fn shifted_solve_bytes(n: usize) -> usize {
    2 * binary_into_fresh_bytes() + binary_into_existing_bytes(n)
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> DenseVector {
    DenseVector::from((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>())
}

fn random_mat(rng: &mut ChaCha8Rng, n: usize) -> DenseMatrix {
    DenseMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))
}

fn active_tape() -> Result<LinAlgTape> {
    let mut t = LinAlgTape::new()?;
    t.set_active();
    Ok(t)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ByteAccounting {
    pub mat_vec_bytes: usize,
    pub mat_vec_expected: usize,
    pub shifted_solve_bytes: usize,
    pub shifted_solve_expected: usize,
}

/// Records a 10×10 matrix-vector product and the shifted solve sequence.
pub fn byte_accounting() -> Result<ByteAccounting> {
    let n = 10;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut t = active_tape()?;
    let mut m = random_mat(&mut rng, n);
    for i in 0..n {
        m[(i, i)] += n as f64;
    }
    let m = t.new_input(m)?;
    let v1 = t.new_input(random_vec(&mut rng, n))?;
    let v2 = t.new_input(random_vec(&mut rng, n))?;
    let mut x = t.new_input(DenseVector::zeros_len(n))?;
    t.mat_vec_into(&mut x, &m, &v1)?;
    let mat_vec_bytes = t.statistics().bytes_payload;

    let before = t.statistics().bytes_payload;
    let d = t.sub(&v2, &v1)?;
    let s = t.solve(&m, &d)?;
    t.add_into(&mut x, &s, &v1)?;
    let shifted = t.statistics().bytes_payload - before;
    Ok(ByteAccounting {
        mat_vec_bytes,
        mat_vec_expected: binary_into_existing_bytes(n),
        shifted_solve_bytes: shifted,
        shifted_solve_expected: shifted_solve_bytes(n),
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    pub bytes_n: usize,
    pub bytes_2n: usize,
    pub ratio: f64,
    /// Scalar operations a per-scalar tape would record at `n` and `2n`.
    pub per_scalar_ops_n: usize,
    pub per_scalar_ops_2n: usize,
}

fn t1_payload(n: usize, steps: usize) -> Result<usize> {
    let k = MatMul::new(n, steps, n as u64)?;
    let mut tape = active_tape()?;
    k.record(&mut tape, &[], k.inputs())?;
    Ok(tape.statistics().bytes_payload)
}

/// T1 payload growth when the dimension doubles.
pub fn memory_scaling(sizes: &[usize], steps: usize) -> Result<Vec<ScalingRow>> {
    sizes
        .iter()
        .map(|&n| {
            let (bytes_n, bytes_2n) = (t1_payload(n, steps)?, t1_payload(2 * n, steps)?);
            Ok(ScalingRow {
                n,
                bytes_n,
                bytes_2n,
                ratio: bytes_2n as f64 / bytes_n as f64,
                per_scalar_ops_n: steps * per_scalar_ops(n),
                per_scalar_ops_2n: steps * per_scalar_ops(2 * n),
            })
        })
        .collect()
}

struct Program {
    tape: LinAlgTape,
    a: Active<DenseMatrix>,
    x: Active<DenseVector>,
    y1: Active<DenseVector>,
    y2: Active<f64>,
}

/// Overwrites, element stores and a solve on integer-valued data.
fn record_program(seed: u64, n: usize) -> Result<Program> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tape = active_tape()?;
    let a = DenseMatrix::from_fn(n, n, |r, c| if r == c { 20.0 } else { rng.gen_range(-4i32..=4) as f64 });
    let a = tape.new_input(a)?;
    let x = tape.new_input(DenseVector::from((0..n).map(|i| i as f64 - 1.0).collect::<Vec<_>>()))?;
    let mut y1 = tape.mat_vec(&a, &x)?;
    let s = tape.new_input(2.0)?;
    for _ in 0..3 {
        let t = tape.mat_t_vec(&a, &y1)?;
        tape.axpy(&mut y1, &s, &t)?;
    }
    let e = tape.element(&y1, 0, 0)?;
    tape.set_element(&mut y1, n - 1, 0, &e)?;
    let mut w = tape.solve(&a, &y1)?;
    let w_old = tape.copy(&w)?;
    tape.add_into(&mut w, &w_old, &x)?;
    let y2 = tape.dot(&w, &y1)?;
    tape.register_output(&y1)?;
    tape.register_output(&y2)?;
    tape.set_passive();
    Ok(Program { tape, a, x, y1, y2 })
}

impl Program {
    fn gradients(&mut self, y1_bar: &DenseVector, y2_bar: f64) -> Result<(DenseMatrix, DenseVector)> {
        self.tape.clear_adjoints();
        self.tape.set_gradient(&self.y1, y1_bar.clone())?;
        self.tape.set_gradient(&self.y2, y2_bar)?;
        self.tape.evaluate()?;
        Ok((self.tape.get_gradient(&self.a)?, self.tape.get_gradient(&self.x)?))
    }
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn reverse_order() -> Result<Check> {
    let seen = Arc::new(Mutex::new(Vec::new()));
    let sink = seen.clone();
    let mut t = LinAlgTape::new()?;
    let h = t.register_raw(
        "marker",
        Arc::new(move |i, c: &mut PayloadCursor<'_>| {
            let v = c.get_u32()?;
            sink.lock().expect("marker sink").push((i, v));
            Ok(())
        }),
        None,
    )?;
    t.set_active();
    for v in 0..16u32 {
        let mut w = PayloadWriter::new();
        w.put_u32(v);
        t.record_statement(h, w.as_bytes())?;
    }
    t.evaluate()?;
    let got = seen.lock().expect("marker sink").clone();
    let want: Vec<(usize, u32)> = (0..16).rev().map(|v| (v as usize, v)).collect();
    Ok(Check::new("reverse-order dispatch", got == want, format!("{} statements", got.len())))
}

fn restoration(seed: u64) -> Result<Check> {
    let mut bad = 0;
    for s in 0..5 {
        let mut p = record_program(seed + s, 5)?;
        p.gradients(&DenseVector::filled(5, 1.0), 1.0)?;
        bad += p.tape.primal_restoration_mismatches().len();
    }
    Ok(Check::new("primal restoration", bad == 0, format!("{bad} mismatching slots")))
}

fn re_evaluation(seed: u64) -> Result<Check> {
    let mut p = record_program(seed, 6)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bar = random_vec(&mut rng, 6);
    let first = p.gradients(&bar, 0.75)?;
    let second = p.gradients(&bar, 0.75)?;
    let same =
        bits(first.0.as_slice()) == bits(second.0.as_slice()) && bits(first.1.as_slice()) == bits(second.1.as_slice());
    Ok(Check::new("bit-exact re-evaluation", same, ""))
}

/// `⟨ȳ, J ẋ⟩` by central differences against `⟨Jᵀ ȳ, ẋ⟩` from the tape.
fn seed_dot(seed: u64) -> Result<Check> {
    let n = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a0 = DenseMatrix::from_fn(n, n, |r, c| if r == c { 4.0 } else { rng.gen_range(-1.0..1.0) });
    let b0 = random_vec(&mut rng, n);
    let ybar = random_vec(&mut rng, n);
    let da = random_mat(&mut rng, n);
    let db = random_vec(&mut rng, n);

    let run = |h: f64, reverse: bool| -> Result<(f64, Option<f64>)> {
        let mut t = active_tape()?;
        let a = t.new_input(DenseMatrix::from_fn(n, n, |r, c| a0[(r, c)] + h * da[(r, c)]))?;
        let b = t.new_input(DenseVector::from(b0.iter().zip(db.iter()).map(|(x, d)| x + h * d).collect::<Vec<_>>()))?;
        let x = t.solve(&a, &b)?;
        let y = t.mat_vec(&a, &x)?;
        let p = t.mat_mul(&a, &a)?;
        let q = t.mat_t_vec(&p, &x)?;
        let z = t.add(&y, &q)?;
        let value = z.value().dot(&ybar);
        if !reverse {
            return Ok((value, None));
        }
        t.set_gradient(&z, ybar.clone())?;
        t.evaluate()?;
        let (ga, gb) = (t.get_gradient(&a)?, t.get_gradient(&b)?);
        let dot = ga.as_slice().iter().zip(da.as_slice()).map(|(g, d)| g * d).sum::<f64>() + gb.dot(&db);
        Ok((value, Some(dot)))
    };

    let adjoint = run(0.0, true)?.1.unwrap_or(f64::NAN);
    let tangent = central(|h| Ok(run(h, false)?.0), 0.0, step(0.0))?.unwrap_or(f64::NAN);
    let err = rel_err(adjoint, tangent);
    Ok(Check::new(
        "seed-dot identity",
        err <= SEED_DOT_TOLERANCE,
        format!("adjoint {adjoint:.12e} tangent {tangent:.12e} rel err {err:.3e}"),
    ))
}

fn payload_round_trip(seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = active_tape()?;
    let a = t.new_input(random_mat(&mut rng, 3))?;
    let v = t.new_input(random_vec(&mut rng, 3))?;
    let old: Vec<f64> = vec![1.0 / 3.0, f64::MIN_POSITIVE, -0.0];
    let mut w = t.new_input(DenseVector::from(old.clone()))?;
    t.mat_vec_into(&mut w, &a, &v)?;
    let payload = t.statement_payload(0).unwrap_or_default();
    let mut c = PayloadCursor::new(payload);
    let ids = [c.get_u32()?, c.get_u32()?, c.get_u32()?];
    let back = c.get_f64s(3)?;
    c.finish()?;
    let ok = ids == [a.id().get(), v.id().get(), w.id().get()] && bits(&back) == bits(&old);

    let mut writer = PayloadWriter::new();
    let reals: Vec<f64> = (0..32).map(|_| rng.gen_range(-1e300..1e300)).collect();
    writer.put_u32(u32::MAX);
    writer.put_f64s(&reals);
    let mut c = PayloadCursor::new(writer.as_bytes());
    let ok = ok && c.get_u32()? == u32::MAX && bits(&c.get_f64s(32)?) == bits(&reals) && c.finish().is_ok();
    Ok(Check::new("payload round trip", ok, ""))
}

fn index_churn(seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = IndexManager::new();
    let mut live: Vec<u32> = Vec::new();
    let mut live_set = HashSet::new();
    let mut clashes = 0;
    for _ in 0..INDEX_CHURN_OPS {
        if live.is_empty() || rng.gen_bool(0.55) {
            let id = m.acquire()?.get();
            if id == 0 || !live_set.insert(id) {
                clashes += 1;
            }
            live.push(id);
        } else {
            let id = live.swap_remove(rng.gen_range(0..live.len()));
            live_set.remove(&id);
            m.release(Identifier::new(id))?;
        }
    }
    let ok = clashes == 0 && m.live_count() == live.len();
    Ok(Check::new(
        "index-manager disjointness",
        ok,
        format!("{INDEX_CHURN_OPS} operations, {clashes} clashes, {} live", live.len()),
    ))
}

/// Reverse-sweep invariants.
pub fn invariants(seed: u64) -> Result<Vec<Check>> {
    Ok(vec![
        reverse_order()?,
        restoration(seed)?,
        seed_dot(seed)?,
        re_evaluation(seed)?,
        payload_round_trip(seed)?,
        index_churn(seed)?,
    ])
}

/// `w *= b` on a passive `w`, then on the now active `w`.
fn in_place_product() -> Result<Check> {
    let (w0, b0) = (1.5, -0.75);
    let mut t = active_tape()?;
    let mut w = Active::passive(w0);
    let b = t.new_input(b0)?;
    t.mul_assign(&mut w, &b)?;
    let id = w.id();
    t.mul_assign(&mut w, &b)?;
    let final_value = w.get();
    t.set_gradient(&w, 1.0)?;
    t.evaluate()?;
    let ad = t.get_gradient(&b)?;
    let fd = central(|x| Ok(w0 * x * x), b0, step(b0))?.unwrap_or(f64::NAN);
    let restored = t.primal_restoration_mismatches().is_empty();
    t.evaluate_primal()?;
    let replayed = *t.store::<f64>()?.primal(id)?;
    let err = rel_err(ad, fd);
    Ok(Check::new(
        "w *= b with passive then active w",
        err <= CORNER_TOLERANCE && restored && replayed.to_bits() == final_value.to_bits() && w.id() == id,
        format!("b̄ {ad} fd {fd}, old primals restored {restored}, current replayed {replayed}"),
    ))
}

/// `w = w·v` reads the value of `w` before the assignment.
fn aliased_product() -> Result<Check> {
    let (w0, v0) = (0.8, 1.7);
    let mut t = active_tape()?;
    let mut w = t.new_input(w0)?;
    let input_id = w.id();
    let v = t.new_input(v0)?;
    t.mul_assign(&mut w, &v)?;
    t.set_gradient(&w, 1.0)?;
    t.evaluate()?;
    let ad = t.get_gradient(&v)?;
    let w_bar = t.get_gradient(&w)?;
    let fd = central(|x| Ok(w0 * x), v0, step(v0))?.unwrap_or(f64::NAN);
    let err = rel_err(ad, fd);
    let old_restored = *t.store::<f64>()?.primal(input_id)? == w0;
    Ok(Check::new(
        "w = w·v uses the old w",
        err <= CORNER_TOLERANCE && rel_err(w_bar, v0) <= CORNER_TOLERANCE && old_restored,
        format!("v̄ {ad} fd {fd}, w̄ {w_bar}"),
    ))
}

fn all_passive() -> Result<Check> {
    let mut t = active_tape()?;
    let a = Active::passive(DenseMatrix::identity(3));
    let x = Active::passive(DenseVector::filled(3, 2.0));
    let y = t.mat_vec(&a, &x)?;
    let d = t.dot(&y, &x)?;
    let s = t.mul(&d, &d)?;
    let bytes = t.statistics().bytes_payload;
    let ok = bytes == 0 && t.statement_count() == 0 && !s.is_active() && s.get() == 144.0;
    Ok(Check::new("all-passive statements record nothing", ok, format!("{bytes} payload bytes")))
}

pub fn corner_cases() -> Result<Vec<Check>> {
    Ok(vec![in_place_product()?, aliased_product()?, all_passive()?])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_counts() {
        assert_eq!(binary_into_existing_bytes(10), 92);
        assert_eq!(shifted_solve_bytes(10), 116);
    }
}
