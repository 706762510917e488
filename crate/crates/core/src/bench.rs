//! Runtime overhead of policy enforcement: restricted against unrestricted
//! execution of the same program.

use std::time::{Duration, Instant};

use crate::opcode::OpcodeStream;
use crate::policy::Policy;
use crate::vm::{execute, VmConfig, VmFailure};

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub unrestricted: Vec<Duration>,
    pub restricted: Vec<Duration>,
}

fn median(samples: &[Duration]) -> Duration {
    let mut v = samples.to_vec();
    v.sort();
    match v.len() {
        0 => Duration::ZERO,
        n if n % 2 == 1 => v[n / 2],
        n => (v[n / 2 - 1] + v[n / 2]) / 2,
    }
}

impl BenchReport {
    pub fn median_unrestricted(&self) -> Duration {
        median(&self.unrestricted)
    }

    pub fn median_restricted(&self) -> Duration {
        median(&self.restricted)
    }

    /// Median restricted time over median unrestricted time, minus one, in percent.
    pub fn overhead_percent(&self) -> f64 {
        let base = self.median_unrestricted().as_secs_f64();
        if base == 0.0 {
            return 0.0;
        }
        (self.median_restricted().as_secs_f64() / base - 1.0) * 100.0
    }

    pub fn to_text(&self) -> String {
        format!(
            "iterations: {}\nunrestricted median: {:.3} ms\nrestricted median: {:.3} ms\noverhead: {:.2}%\n",
            self.restricted.len(),
            self.median_unrestricted().as_secs_f64() * 1e3,
            self.median_restricted().as_secs_f64() * 1e3,
            self.overhead_percent()
        )
    }
}

fn time(stream: &OpcodeStream, config: &VmConfig<'_>) -> Result<Duration, VmFailure> {
    let start = Instant::now();
    let outcome = execute(stream, config)?;
    let elapsed = start.elapsed();
    drop(outcome);
    Ok(elapsed)
}

/// Runs the program `iterations` times in each mode, alternating modes so
/// that drift in machine load affects both equally. One untimed warm-up
/// run per mode comes first.
pub fn bench(stream: &OpcodeStream, policy: &Policy, iterations: usize) -> Result<BenchReport, VmFailure> {
    let restricted = VmConfig::restricted(policy);
    let unrestricted = VmConfig::unrestricted();
    time(stream, &unrestricted)?;
    time(stream, &restricted)?;
    let mut report = BenchReport { unrestricted: Vec::new(), restricted: Vec::new() };
    for i in 0..iterations {
        if i % 2 == 0 {
            report.unrestricted.push(time(stream, &unrestricted)?);
            report.restricted.push(time(stream, &restricted)?);
        } else {
            report.restricted.push(time(stream, &restricted)?);
            report.unrestricted.push(time(stream, &unrestricted)?);
        }
    }
    Ok(report)
}
