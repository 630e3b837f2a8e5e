//! Acceptance criteria for the fpeot pipeline.
//!
//! The `acceptance` test target runs every criterion with pinned tolerances
//! and prints one `[PASS]`/`[FAIL]` line per check. This library holds the
//! report bookkeeping and the oracles that must not share code with the
//! solvers they check.

use std::fmt;
use std::process::ExitCode;

use fpeot_core::PointCloud;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skip,
    Excluded,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "[PASS]",
            Status::Fail => "[FAIL]",
            Status::Skip => "[SKIP]",
            Status::Excluded => "[EXCLUDED]",
        })
    }
}

/// Collects check outcomes and prints each as soon as it is recorded.
#[derive(Debug, Default)]
pub struct Report {
    outcomes: Vec<(String, Status)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a check with a free-form detail.
    pub fn record(&mut self, id: &str, what: &str, pass: bool, detail: impl fmt::Display) -> bool {
        let status = if pass { Status::Pass } else { Status::Fail };
        self.push(id, status, format!("{what}: {detail}"));
        pass
    }

    /// Passes when `measured ≤ bound`; NaN fails.
    pub fn at_most(&mut self, id: &str, what: &str, measured: f64, bound: f64) -> bool {
        self.record(id, what, measured <= bound, format_args!("{measured:.3e} <= {bound:.1e}"))
    }

    /// Passes when `measured ≥ bound`; NaN fails.
    pub fn at_least(&mut self, id: &str, what: &str, measured: f64, bound: f64) -> bool {
        self.record(id, what, measured >= bound, format_args!("{measured:.3e} >= {bound:.1e}"))
    }

    pub fn skip(&mut self, id: &str, what: &str, reason: &str) {
        self.push(id, Status::Skip, format!("{what}: {reason}"));
    }

    pub fn exclude(&mut self, id: &str, what: &str) {
        self.push(id, Status::Excluded, what.to_string());
    }

    fn push(&mut self, id: &str, status: Status, line: String) {
        println!("{status} {id} {line}");
        self.outcomes.push((id.to_string(), status));
    }

    pub fn count(&self, status: Status) -> usize {
        self.outcomes.iter().filter(|(_, s)| *s == status).count()
    }

    /// Prints the tally and fails when any check failed.
    pub fn finish(self) -> ExitCode {
        let failed: Vec<&str> =
            self.outcomes.iter().filter(|(_, s)| *s == Status::Fail).map(|(id, _)| id.as_str()).collect();
        println!(
            "acceptance: {} passed, {} failed, {} skipped, {} excluded",
            self.count(Status::Pass),
            failed.len(),
            self.count(Status::Skip),
            self.count(Status::Excluded)
        );
        if failed.is_empty() {
            ExitCode::SUCCESS
        } else {
            println!("failing checks: {}", failed.join(", "));
            ExitCode::FAILURE
        }
    }
}

/// Minimum of `Σ_i ‖x_i − y_{σ(i)}‖² / n` over all permutations, enumerated
/// with Heap's algorithm. Terms are summed in row order.
pub fn brute_force_cost(x: &PointCloud, y: &PointCloud) -> f64 {
    let n = x.n();
    let cost = |p: &[usize]| -> f64 {
        (0..n).map(|i| x.point(i).iter().zip(y.point(p[i])).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()).sum::<f64>()
            / n as f64
    };
    let mut p: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    let mut best = cost(&p);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                p.swap(0, i);
            } else {
                p.swap(c[i], i);
            }
            best = best.min(cost(&p));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}
