//! Finite-difference certification of every registered operation.
//!
//! Each case draws random instances, records the operation on a fresh tape,
//! seeds the result with random weights `w` and compares the input adjoints
//! against central differences of `⟨w, f(x)⟩`, where `f` is a plain
//! re-implementation of the operation.

use std::time::Instant;

use dslad::linalg::{ContainerKind, DenseMatrix, DenseVector, LinAlgTape, QrFactors};
use dslad::{Entity, Region, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::fd::{all_directions, fd_gradient, rel_err};
use crate::value::{Kind, Tracked, Value};

pub const INSTANCES: usize = 25;
pub const MAX_DIM: usize = 8;
pub const TOLERANCE: f64 = 1e-6;
pub const SOLVE_TOLERANCE: f64 = 1e-5;

type Plain = Box<dyn Fn(&[Value]) -> Result<Value>>;
type Taped = Box<dyn Fn(&mut LinAlgTape, &mut [Tracked]) -> Result<Tracked>>;
type Generator = Box<dyn Fn(&mut ChaCha8Rng) -> Instance>;

pub struct Instance {
    pub inputs: Vec<Value>,
    plain: Plain,
    taped: Taped,
}

struct Case {
    name: String,
    tolerance: f64,
    generate: Generator,
}

#[derive(Debug, Clone, Serialize)]
pub struct OpCheck {
    pub name: String,
    pub instances: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub checks: Vec<OpCheck>,
    pub elapsed_s: f64,
}

impl SuiteReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn dim(rng: &mut ChaCha8Rng) -> usize {
    rng.gen_range(1..=MAX_DIM)
}

fn shape_of<T: Kind>(rng: &mut ChaCha8Rng) -> Shape {
    match T::KIND_NAME {
        "scalar" => Shape::new(1, 1),
        "vector" => Shape::new(dim(rng), 1),
        _ => Shape::new(dim(rng), dim(rng)),
    }
}

fn zip<T: Entity>(a: &T, b: &T, f: impl Fn(f64, f64) -> f64) -> Result<T> {
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| f(*x, *y)).collect();
    Ok(T::from_shape_vec(a.shape(), data)?)
}

fn map<T: Entity>(a: &T, f: impl Fn(f64) -> f64) -> Result<T> {
    Ok(T::from_shape_vec(a.shape(), a.as_slice().iter().map(|x| f(*x)).collect())?)
}

fn get(v: &Value, shape: Shape, r: usize, c: usize) -> f64 {
    v.data()[r * shape.cols + c]
}

fn random_region(rng: &mut ChaCha8Rng, shape: Shape) -> Region {
    let row = rng.gen_range(0..shape.rows);
    let col = rng.gen_range(0..shape.cols);
    let rows = rng.gen_range(1..=shape.rows - row);
    let cols = rng.gen_range(1..=shape.cols - col);
    Region::new(row, col, rows, cols)
}

fn well_conditioned(rng: &mut ChaCha8Rng, n: usize) -> DenseMatrix {
    let mut a = DenseMatrix::random(rng, Shape::new(n, n));
    for i in 0..n {
        a[(i, i)] += if a[(i, i)] >= 0.0 { n as f64 } else { -(n as f64) };
    }
    a
}

fn case(name: impl Into<String>, tolerance: f64, generate: impl Fn(&mut ChaCha8Rng) -> Instance + 'static) -> Case {
    Case { name: name.into(), tolerance, generate: Box::new(generate) }
}

fn instance(
    inputs: Vec<Value>,
    plain: impl Fn(&[Value]) -> Result<Value> + 'static,
    taped: impl Fn(&mut LinAlgTape, &mut [Tracked]) -> Result<Tracked> + 'static,
) -> Instance {
    Instance { inputs, plain: Box::new(plain), taped: Box::new(taped) }
}

fn linear_cases<T: Kind>() -> Vec<Case> {
    let k = T::KIND_NAME;
    vec![
        case(format!("add<{k}>"), TOLERANCE, |rng| {
            let s = shape_of::<T>(rng);
            instance(
                vec![T::random(rng, s).wrap(), T::random(rng, s).wrap()],
                |x| Ok(zip(T::unwrap(&x[0]), T::unwrap(&x[1]), |a, b| a + b)?.wrap()),
                |t, tr| Ok(T::track(t.add(T::tracked(&tr[0]), T::tracked(&tr[1]))?)),
            )
        }),
        case(format!("sub<{k}>"), TOLERANCE, |rng| {
            let s = shape_of::<T>(rng);
            instance(
                vec![T::random(rng, s).wrap(), T::random(rng, s).wrap()],
                |x| Ok(zip(T::unwrap(&x[0]), T::unwrap(&x[1]), |a, b| a - b)?.wrap()),
                |t, tr| Ok(T::track(t.sub(T::tracked(&tr[0]), T::tracked(&tr[1]))?)),
            )
        }),
        case(format!("scale<{k}>"), TOLERANCE, |rng| {
            let s = shape_of::<T>(rng);
            instance(
                vec![Value::Scalar(rng.gen_range(-2.0..2.0)), T::random(rng, s).wrap()],
                |x| {
                    let a = x[0].scalar();
                    Ok(map(T::unwrap(&x[1]), |v| a * v)?.wrap())
                },
                |t, tr| Ok(T::track(t.scale(tr[0].scalar(), T::tracked(&tr[1]))?)),
            )
        }),
        case(format!("copy<{k}>"), TOLERANCE, |rng| {
            let s = shape_of::<T>(rng);
            instance(
                vec![T::random(rng, s).wrap()],
                |x| Ok(x[0].clone()),
                |t, tr| Ok(T::track(t.copy(T::tracked(&tr[0]))?)),
            )
        }),
        case(format!("axpy<{k}>"), TOLERANCE, |rng| {
            let s = shape_of::<T>(rng);
            instance(
                vec![T::random(rng, s).wrap(), Value::Scalar(rng.gen_range(-2.0..2.0)), T::random(rng, s).wrap()],
                |x| {
                    let a = x[1].scalar();
                    Ok(zip(T::unwrap(&x[0]), T::unwrap(&x[2]), |y, v| y + a * v)?.wrap())
                },
                |t, tr| {
                    let (y, rest) = tr.split_first_mut().expect("three inputs");
                    t.axpy(T::tracked_mut(y), rest[0].scalar(), T::tracked(&rest[1]))?;
                    Ok(T::track(t.copy(T::tracked(y))?))
                },
            )
        }),
        case(format!("dot<{k}>"), TOLERANCE, |rng| {
            let s = shape_of::<T>(rng);
            instance(
                vec![T::random(rng, s).wrap(), T::random(rng, s).wrap()],
                |x| Ok(Value::Scalar(x[0].data().iter().zip(x[1].data()).map(|(a, b)| a * b).sum())),
                |t, tr| Ok(Tracked::Scalar(t.dot(T::tracked(&tr[0]), T::tracked(&tr[1]))?)),
            )
        }),
        case(format!("squared_norm<{k}>"), TOLERANCE, |rng| {
            let s = shape_of::<T>(rng);
            instance(
                vec![T::random(rng, s).wrap()],
                |x| Ok(Value::Scalar(x[0].data().iter().map(|a| a * a).sum())),
                |t, tr| Ok(Tracked::Scalar(t.squared_norm(T::tracked(&tr[0]))?)),
            )
        }),
    ]
}

fn container_cases<T: Kind + ContainerKind>() -> Vec<Case> {
    let k = T::KIND_NAME;
    vec![
        case(format!("element_get<{k}>"), TOLERANCE, |rng| {
            let s = shape_of::<T>(rng);
            let (r, c) = (rng.gen_range(0..s.rows), rng.gen_range(0..s.cols));
            instance(
                vec![T::random(rng, s).wrap()],
                move |x| Ok(Value::Scalar(get(&x[0], s, r, c))),
                move |t, tr| Ok(Tracked::Scalar(t.element(T::tracked(&tr[0]), r, c)?)),
            )
        }),
        case(format!("element_set<{k}>"), TOLERANCE, |rng| {
            let s = shape_of::<T>(rng);
            let (r, c) = (rng.gen_range(0..s.rows), rng.gen_range(0..s.cols));
            instance(
                vec![T::random(rng, s).wrap(), Value::Scalar(rng.gen_range(-1.0..1.0))],
                move |x| {
                    let mut v = x[0].clone();
                    v.data_mut()[r * s.cols + c] = x[1].scalar();
                    Ok(v)
                },
                move |t, tr| {
                    let (v, rest) = tr.split_first_mut().expect("two inputs");
                    t.set_element(T::tracked_mut(v), r, c, rest[0].scalar())?;
                    Ok(T::track(t.copy(T::tracked(v))?))
                },
            )
        }),
        case(format!("block_get<{k}>"), TOLERANCE, |rng| {
            let s = shape_of::<T>(rng);
            let reg = random_region(rng, s);
            instance(
                vec![T::random(rng, s).wrap()],
                move |x| {
                    let mut data = Vec::new();
                    for r in reg.row..reg.row + reg.rows {
                        for c in reg.col..reg.col + reg.cols {
                            data.push(get(&x[0], s, r, c));
                        }
                    }
                    Ok(T::from_shape_vec(reg.shape(), data)?.wrap())
                },
                move |t, tr| Ok(T::track(t.block(T::tracked(&tr[0]), reg)?)),
            )
        }),
        case(format!("block_set<{k}>"), TOLERANCE, |rng| {
            let s = shape_of::<T>(rng);
            let reg = random_region(rng, s);
            instance(
                vec![T::random(rng, s).wrap(), T::random(rng, reg.shape()).wrap()],
                move |x| {
                    let mut v = x[0].clone();
                    for r in 0..reg.rows {
                        for c in 0..reg.cols {
                            v.data_mut()[(reg.row + r) * s.cols + reg.col + c] = x[1].data()[r * reg.cols + c];
                        }
                    }
                    Ok(v)
                },
                move |t, tr| {
                    let (v, rest) = tr.split_first_mut().expect("two inputs");
                    t.set_block(T::tracked_mut(v), reg.row, reg.col, T::tracked(&rest[0]))?;
                    Ok(T::track(t.copy(T::tracked(v))?))
                },
            )
        }),
    ]
}

fn matrix_cases() -> Vec<Case> {
    let away_from_zero = |rng: &mut ChaCha8Rng| rng.gen_range(0.5..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    vec![
        case("mul", TOLERANCE, |rng| {
            instance(
                vec![Value::Scalar(rng.gen_range(-2.0..2.0)), Value::Scalar(rng.gen_range(-2.0..2.0))],
                |x| Ok(Value::Scalar(x[0].scalar() * x[1].scalar())),
                |t, tr| Ok(Tracked::Scalar(t.mul(tr[0].scalar(), tr[1].scalar())?)),
            )
        }),
        case("div", TOLERANCE, move |rng| {
            instance(
                vec![Value::Scalar(rng.gen_range(-2.0..2.0)), Value::Scalar(away_from_zero(rng))],
                |x| Ok(Value::Scalar(x[0].scalar() / x[1].scalar())),
                |t, tr| Ok(Tracked::Scalar(t.div(tr[0].scalar(), tr[1].scalar())?)),
            )
        }),
        case("mul_assign", TOLERANCE, |rng| {
            instance(
                vec![Value::Scalar(rng.gen_range(-2.0..2.0)), Value::Scalar(rng.gen_range(-2.0..2.0))],
                |x| Ok(Value::Scalar(x[0].scalar() * x[1].scalar())),
                |t, tr| {
                    let (w, rest) = tr.split_first_mut().expect("two inputs");
                    t.mul_assign(w.scalar_mut(), rest[0].scalar())?;
                    Ok(Tracked::Scalar(t.copy(w.scalar())?))
                },
            )
        }),
        case("mat_mul", TOLERANCE, |rng| {
            let (m, k, p) = (dim(rng), dim(rng), dim(rng));
            instance(
                vec![
                    DenseMatrix::random(rng, Shape::new(m, k)).wrap(),
                    DenseMatrix::random(rng, Shape::new(k, p)).wrap(),
                ],
                move |x| {
                    let (a, b) = (x[0].matrix(), x[1].matrix());
                    Ok(Value::Matrix(DenseMatrix::from_fn(m, p, |i, j| (0..k).map(|l| a[(i, l)] * b[(l, j)]).sum())))
                },
                |t, tr| Ok(Tracked::Matrix(t.mat_mul(tr[0].matrix(), tr[1].matrix())?)),
            )
        }),
        case("mat_vec", TOLERANCE, |rng| {
            let (m, k) = (dim(rng), dim(rng));
            instance(
                vec![DenseMatrix::random(rng, Shape::new(m, k)).wrap(), DenseVector::random(rng, Shape::new(k, 1)).wrap()],
                move |x| {
                    let (a, v) = (x[0].matrix(), x[1].vector());
                    Ok(Value::Vector((0..m).map(|i| (0..k).map(|l| a[(i, l)] * v[l]).sum()).collect::<Vec<f64>>().into()))
                },
                |t, tr| Ok(Tracked::Vector(t.mat_vec(tr[0].matrix(), tr[1].vector())?)),
            )
        }),
        case("mat_t_vec", TOLERANCE, |rng| {
            let (m, k) = (dim(rng), dim(rng));
            instance(
                vec![DenseMatrix::random(rng, Shape::new(m, k)).wrap(), DenseVector::random(rng, Shape::new(m, 1)).wrap()],
                move |x| {
                    let (a, v) = (x[0].matrix(), x[1].vector());
                    Ok(Value::Vector((0..k).map(|j| (0..m).map(|i| a[(i, j)] * v[i]).sum()).collect::<Vec<f64>>().into()))
                },
                |t, tr| Ok(Tracked::Vector(t.mat_t_vec(tr[0].matrix(), tr[1].vector())?)),
            )
        }),
        case("transpose", TOLERANCE, |rng| {
            let (m, k) = (dim(rng), dim(rng));
            instance(
                vec![DenseMatrix::random(rng, Shape::new(m, k)).wrap()],
                move |x| Ok(Value::Matrix(DenseMatrix::from_fn(k, m, |i, j| x[0].matrix()[(j, i)]))),
                |t, tr| Ok(Tracked::Matrix(t.transpose(tr[0].matrix())?)),
            )
        }),
        case("qr_solve<vector>", SOLVE_TOLERANCE, |rng| {
            let n = dim(rng);
            instance(
                vec![Value::Matrix(well_conditioned(rng, n)), DenseVector::random(rng, Shape::new(n, 1)).wrap()],
                |x| Ok(Value::Vector(QrFactors::new(x[0].matrix())?.solve_vec(x[1].vector())?)),
                |t, tr| Ok(Tracked::Vector(t.solve(tr[0].matrix(), tr[1].vector())?)),
            )
        }),
        case("qr_solve<matrix>", SOLVE_TOLERANCE, |rng| {
            let (n, p) = (dim(rng), dim(rng));
            instance(
                vec![Value::Matrix(well_conditioned(rng, n)), DenseMatrix::random(rng, Shape::new(n, p)).wrap()],
                |x| Ok(Value::Matrix(QrFactors::new(x[0].matrix())?.solve_mat(x[1].matrix())?)),
                |t, tr| Ok(Tracked::Matrix(t.solve_mat(tr[0].matrix(), tr[1].matrix())?)),
            )
        }),
    ]
}

fn tracked_value(t: &Tracked) -> Vec<f64> {
    match t {
        Tracked::Scalar(x) => vec![x.get()],
        Tracked::Vector(v) => v.value().as_slice().to_vec(),
        Tracked::Matrix(m) => m.value().as_slice().to_vec(),
        Tracked::Elements(items) => items.iter().map(|x| x.get()).collect(),
    }
}

fn seed(tape: &mut LinAlgTape, out: &Tracked, w: &[f64]) -> Result<()> {
    match out {
        Tracked::Scalar(x) => tape.set_gradient(x, w[0])?,
        Tracked::Vector(v) => tape.set_gradient(v, DenseVector::from(w.to_vec()))?,
        Tracked::Matrix(m) => {
            let s = m.shape();
            tape.set_gradient(m, DenseMatrix::from_vec(s.rows, s.cols, w.to_vec())?)?
        }
        Tracked::Elements(items) => {
            for (x, wi) in items.iter().zip(w) {
                tape.set_gradient(x, *wi)?;
            }
        }
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest mixed relative error over the result value and all input adjoints.
pub fn check_instance(inst: &Instance, rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut tape = LinAlgTape::new()?;
    tape.set_active();
    let mut tracked = inst.inputs.iter().map(|v| v.register(&mut tape)).collect::<Result<Vec<_>>>()?;
    let out = (inst.taped)(&mut tape, &mut tracked)?;
    tape.set_passive();

    let expected = (inst.plain)(&inst.inputs)?;
    let got = tracked_value(&out);
    let mut worst = got.iter().zip(expected.data()).fold(0.0f64, |m, (a, b)| m.max(rel_err(*a, *b)));
    if got.len() != expected.len() {
        worst = f64::INFINITY;
    }

    let weights: Vec<f64> = (0..expected.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    seed(&mut tape, &out, &weights)?;
    tape.evaluate()?;

    let which: Vec<usize> = (0..inst.inputs.len()).collect();
    let dirs = all_directions(&inst.inputs, &which);
    let grads = tracked
        .iter()
        .zip(&inst.inputs)
        .map(|(t, v)| t.gradient(&tape, v.len()))
        .collect::<Result<Vec<_>>>()?;
    let fd = fd_gradient(|x| Ok(dot((inst.plain)(x)?.data(), &weights)), &inst.inputs, &dirs)?;
    for (d, f) in dirs.iter().zip(fd) {
        worst = worst.max(rel_err(grads[d.input][d.element], f));
    }
    Ok(worst)
}

fn structural_checks() -> Vec<OpCheck> {
    let run = |name: &str| -> std::result::Result<(), String> {
        let mut t = LinAlgTape::new().map_err(|e| e.to_string())?;
        t.set_active();
        let v = t.new_input(DenseVector::zeros_len(7)).map_err(|e| e.to_string())?;
        let m = t.new_input(DenseMatrix::zeros_shape(3, 4)).map_err(|e| e.to_string())?;
        let ok = match name {
            "size" => t.size(&v) == 7,
            "rows" => t.rows(&m) == 3,
            _ => t.cols(&m) == 4,
        };
        if ok && t.statement_count() == 0 {
            Ok(())
        } else {
            Err(format!("{name}: wrong value or recorded a statement"))
        }
    };
    ["size", "rows", "cols"]
        .iter()
        .map(|name| {
            let r = run(name);
            OpCheck {
                name: name.to_string(),
                instances: 1,
                max_rel_err: 0.0,
                tolerance: 0.0,
                pass: r.is_ok(),
                error: r.err(),
            }
        })
        .collect()
}

fn all_cases() -> Vec<Case> {
    let mut cases = linear_cases::<f64>();
    cases.extend(linear_cases::<DenseVector>());
    cases.extend(linear_cases::<DenseMatrix>());
    cases.extend(container_cases::<DenseVector>());
    cases.extend(container_cases::<DenseMatrix>());
    cases.extend(matrix_cases());
    cases
}

/// Runs `instances` random instances of every operation.
pub fn run_suite(seed: u64, instances: usize) -> SuiteReport {
    let start = Instant::now();
    let mut checks: Vec<OpCheck> = all_cases()
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(i as u64));
            let mut worst = 0.0f64;
            let mut error = None;
            for _ in 0..instances {
                let inst = (c.generate)(&mut rng);
                match check_instance(&inst, &mut rng) {
                    Ok(e) => worst = worst.max(e),
                    Err(e) => {
                        error = Some(e.to_string());
                        break;
                    }
                }
            }
            OpCheck {
                pass: error.is_none() && worst <= c.tolerance,
                name: c.name,
                instances,
                max_rel_err: worst,
                tolerance: c.tolerance,
                error,
            }
        })
        .collect();
    checks.extend(structural_checks());
    SuiteReport { checks, elapsed_s: start.elapsed().as_secs_f64() }
}
