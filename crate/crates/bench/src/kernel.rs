//! Common driver for benchmark kernels.

use std::time::Instant;

use dslad::linalg::LinAlgTape;
use dslad::{Active, StatementHandle};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::fd::{all_directions, fd_gradient, rel_err, sample_directions, Direction};
use crate::report::{BenchReport, GradientCheck};
use crate::value::{Tracked, Value};

/// Upper bound on sampled finite-difference directions.
pub const MAX_DIRECTIONS: usize = 32;

/// Output of a taped kernel run.
pub struct Recorded {
    pub output: Active<f64>,
    /// Registered inputs, parallel to [`Kernel::inputs`].
    pub inputs: Vec<Tracked>,
}

pub trait Kernel {
    fn case(&self) -> &'static str;
    fn size(&self) -> usize;
    fn steps(&self) -> usize;
    fn tolerance(&self) -> f64;
    fn inputs(&self) -> &[Value];

    /// Indices of the inputs the gradient check perturbs.
    fn checked_inputs(&self) -> Vec<usize>;

    /// Coordinates excluded from the gradient check.
    fn excluded(&self, _inputs: &[Value], _d: Direction) -> bool {
        false
    }

    /// Registers kernel-specific descriptors.
    fn prepare(&self, _tape: &mut LinAlgTape) -> Result<Vec<StatementHandle>> {
        Ok(Vec::new())
    }

    /// Untaped evaluation on plain values.
    fn primal(&self, inputs: &[Value]) -> Result<f64>;

    /// Taped evaluation. The tape is active on entry.
    fn record(&self, tape: &mut LinAlgTape, extra: &[StatementHandle], inputs: &[Value]) -> Result<Recorded>;
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub check_gradient: bool,
    pub repeat: usize,
    pub seed: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { check_gradient: true, repeat: 1, seed: 0 }
    }
}

/// A recorded and reversed tape.
pub struct Evaluated {
    pub tape: LinAlgTape,
    pub recorded: Recorded,
    pub recording_time_s: f64,
    pub reversal_time_s: f64,
}

/// Records `kernel`, seeds the output with 1 and reverses.
pub fn evaluate(kernel: &dyn Kernel) -> Result<Evaluated> {
    let mut tape = LinAlgTape::new()?;
    let extra = kernel.prepare(&mut tape)?;
    tape.set_active();
    let start = Instant::now();
    let recorded = kernel.record(&mut tape, &extra, kernel.inputs())?;
    let recording_time_s = start.elapsed().as_secs_f64();
    tape.set_passive();
    tape.register_output(&recorded.output)?;
    tape.set_gradient(&recorded.output, 1.0)?;
    let start = Instant::now();
    tape.evaluate()?;
    let reversal_time_s = start.elapsed().as_secs_f64();
    Ok(Evaluated { tape, recorded, recording_time_s, reversal_time_s })
}

/// Tape adjoints against central differences of [`Kernel::primal`].
pub fn check_gradient(kernel: &dyn Kernel, ev: &Evaluated, seed: u64) -> Result<GradientCheck> {
    let inputs = kernel.inputs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let candidates: Vec<Direction> = all_directions(inputs, &kernel.checked_inputs())
        .into_iter()
        .filter(|d| !kernel.excluded(inputs, *d))
        .collect();
    let dirs = sample_directions(candidates, MAX_DIRECTIONS, &mut rng);
    let fd = fd_gradient(|x| kernel.primal(x), inputs, &dirs)?;
    let mut grads = Vec::with_capacity(inputs.len());
    for (t, v) in ev.recorded.inputs.iter().zip(inputs) {
        grads.push(t.gradient(&ev.tape, v.len())?);
    }
    let max_rel_err = dirs.iter().zip(&fd).fold(0.0f64, |m, (d, f)| m.max(rel_err(grads[d.input][d.element], *f)));
    Ok(GradientCheck { max_rel_err, pass: max_rel_err <= kernel.tolerance() })
}

/// Times the plain and taped runs and optionally checks the gradient.
pub fn run(kernel: &dyn Kernel, opts: RunOptions) -> Result<BenchReport> {
    let repeat = opts.repeat.max(1);
    let mut primal = 0.0;
    for _ in 0..repeat {
        let start = Instant::now();
        std::hint::black_box(kernel.primal(kernel.inputs())?);
        primal += start.elapsed().as_secs_f64();
    }
    let mut recording = 0.0;
    let mut reversal = 0.0;
    let mut last = None;
    for _ in 0..repeat {
        let ev = evaluate(kernel)?;
        recording += ev.recording_time_s;
        reversal += ev.reversal_time_s;
        last = Some(ev);
    }
    let ev = last.expect("at least one run");
    let gradient_check = if opts.check_gradient { Some(check_gradient(kernel, &ev, opts.seed)?) } else { None };
    let r = repeat as f64;
    Ok(BenchReport {
        case: kernel.case().to_string(),
        size: kernel.size(),
        steps: kernel.steps(),
        primal_time_s: primal / r,
        recording_time_s: recording / r,
        reversal_time_s: reversal / r,
        tape: ev.tape.statistics(),
        gradient_check,
    })
}
