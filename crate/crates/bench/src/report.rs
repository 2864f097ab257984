use dslad::TapeStatistics;
use serde::Serialize;

/// Recording factor above which a soft warning is emitted.
pub const RECORDING_FACTOR_WARN: f64 = 3.0;
/// Reversal factor above which a soft warning is emitted.
pub const REVERSAL_FACTOR_WARN: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradientCheck {
    pub max_rel_err: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub case: String,
    pub size: usize,
    pub steps: usize,
    pub primal_time_s: f64,
    pub recording_time_s: f64,
    pub reversal_time_s: f64,
    pub tape: TapeStatistics,
    pub gradient_check: Option<GradientCheck>,
}

impl BenchReport {
    /// Recording time over plain primal time.
    pub fn recording_factor(&self) -> f64 {
        self.recording_time_s / self.primal_time_s
    }

    /// Reverse sweep time over plain primal time.
    pub fn reversal_factor(&self) -> f64 {
        self.reversal_time_s / self.primal_time_s
    }

    pub fn factor_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let (rec, rev) = (self.recording_factor(), self.reversal_factor());
        if rec.is_nan() || rec > RECORDING_FACTOR_WARN {
            out.push(format!("recording factor {rec:.2} exceeds {RECORDING_FACTOR_WARN}"));
        }
        if rev.is_nan() || rev > REVERSAL_FACTOR_WARN {
            out.push(format!("reversal factor {rev:.2} exceeds {REVERSAL_FACTOR_WARN}"));
        }
        out
    }

    pub fn passed(&self) -> bool {
        self.gradient_check.is_none_or(|g| g.pass)
    }
}
