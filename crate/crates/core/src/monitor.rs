//! Periodic CPU and resident-memory sampling of one process (Linux `/proc`).
//!
//! CPU percent counts one fully busy core as 100, so a process using two
//! cores reads 200. Each sample covers the interval that ended at `elapsed`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResourceSample {
    /// Seconds since monitoring started.
    pub elapsed: f64,
    pub cpu_percent: f64,
    pub resident_memory_mb: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ProcStat {
    state: char,
    /// utime + stime, in clock ticks.
    cpu_ticks: u64,
}

fn clock_ticks_per_second() -> f64 {
    // SAFETY: sysconf has no preconditions.
    let t = unsafe { libc::sysconf(libc::_SC_CLK_TCK) };
    if t > 0 {
        t as f64
    } else {
        100.0
    }
}

fn parse_stat(text: &str) -> Option<ProcStat> {
    // The command name may contain spaces and parentheses; fields resume after the last ')'.
    let rest = &text[text.rfind(')')? + 1..];
    let fields: Vec<&str> = rest.split_whitespace().collect();
    let state = fields.first()?.chars().next()?;
    let utime: u64 = fields.get(11)?.parse().ok()?;
    let stime: u64 = fields.get(12)?.parse().ok()?;
    Some(ProcStat {
        state,
        cpu_ticks: utime + stime,
    })
}

fn parse_rss_kb(status: &str) -> Option<u64> {
    status
        .lines()
        .find_map(|l| l.strip_prefix("VmRSS:"))
        .and_then(|v| v.split_whitespace().next())
        .and_then(|v| v.parse().ok())
}

fn read_stat(pid: u32) -> Option<ProcStat> {
    let s = parse_stat(&fs::read_to_string(format!("/proc/{pid}/stat")).ok()?)?;
    (s.state != 'Z' && s.state != 'X').then_some(s)
}

fn read_rss_mb(pid: u32) -> Option<f64> {
    let kb = parse_rss_kb(&fs::read_to_string(format!("/proc/{pid}/status")).ok()?)?;
    Some(kb as f64 / 1024.0)
}

/// True when `pid` exists and is not a zombie.
pub fn is_alive(pid: u32) -> bool {
    read_stat(pid).is_some()
}

/// Samples `pid` every `interval` until it exits or `stop` is set.
///
/// Sample `k` is taken at `k * interval` after the start, so scheduling
/// delays do not accumulate. A process that exits between samples ends
/// monitoring with the samples collected so far.
pub fn monitor_resources(pid: u32, interval: Duration, stop: Option<&AtomicBool>) -> Result<Vec<ResourceSample>> {
    if interval.is_zero() {
        return Err(Error::param("interval", "must be positive"));
    }
    let tck = clock_ticks_per_second();
    let mut prev = read_stat(pid).ok_or(Error::NoSuchProcess(pid))?;
    let start = Instant::now();
    let mut prev_t = start;
    let mut samples = Vec::new();
    let stopped = || stop.is_some_and(|s| s.load(Ordering::Relaxed));
    for k in 1u32.. {
        let deadline = start + interval * k;
        loop {
            if stopped() {
                return Ok(samples);
            }
            let now = Instant::now();
            if now >= deadline {
                break;
            }
            std::thread::sleep((deadline - now).min(Duration::from_millis(20)));
        }
        let (Some(cur), Some(rss)) = (read_stat(pid), read_rss_mb(pid)) else {
            return Ok(samples);
        };
        let now = Instant::now();
        let wall = now.duration_since(prev_t).as_secs_f64();
        let cpu = cur.cpu_ticks.saturating_sub(prev.cpu_ticks) as f64 / tck;
        samples.push(ResourceSample {
            elapsed: now.duration_since(start).as_secs_f64(),
            cpu_percent: if wall > 0.0 { 100.0 * cpu / wall } else { 0.0 },
            resident_memory_mb: rss,
        });
        prev = cur;
        prev_t = now;
    }
    Ok(samples)
}

pub fn samples_csv(samples: &[ResourceSample]) -> String {
    let mut out = String::from("elapsed_s,cpu_percent,resident_memory_mb\n");
    for s in samples {
        let _ = writeln!(out, "{:.3},{:.2},{:.2}", s.elapsed, s.cpu_percent, s.resident_memory_mb);
    }
    out
}

pub fn write_samples(samples: &[ResourceSample], path: &Path) -> Result<()> {
    fs::write(path, samples_csv(samples)).map_err(|e| Error::io(path, e))
}
