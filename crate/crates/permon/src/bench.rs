//! Wall-clock latency of the two checks, per frame and single-threaded.

use std::collections::BTreeMap;
use std::time::Instant;

use permon_core::eval::MonitorParams;
use permon_core::grid::build_grid;
use permon_core::plausibility::PlausibilityMonitor;
use permon_core::sensor::run_sensor_checks;
use permon_core::types::{EgoPose, ObjectState, PointCloud2D};
use serde::Serialize;

use crate::error::{Error, Result};

/// One line of the latency table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyRow {
    pub check: String,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p99_ms: f64,
    pub frames: usize,
}

/// Nearest-rank percentile of sorted samples.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn summarize(check: &str, mut samples: Vec<f64>, frames: usize) -> LatencyRow {
    samples.sort_by(f64::total_cmp);
    let mean = if samples.is_empty() { 0.0 } else { samples.iter().sum::<f64>() / samples.len() as f64 };
    LatencyRow {
        check: check.into(),
        mean_ms: mean,
        p50_ms: percentile(&samples, 0.5),
        p99_ms: percentile(&samples, 0.99),
        frames,
    }
}

/// Times grid build plus sensor checks (`sensor`) and plausibility checks
/// (`plausibility`) on every frame, `repetitions` times over.
///
/// `clouds` and `ego` are frame-aligned; objects are grouped by frame.
pub fn bench_latency(
    objects: &[ObjectState],
    clouds: &[PointCloud2D],
    ego: &[EgoPose],
    params: &MonitorParams,
    repetitions: usize,
) -> Result<Vec<LatencyRow>> {
    if repetitions < 10 {
        return Err(Error::Config(format!("bench.repetitions must be at least 10, got {repetitions}")));
    }
    params.validate()?;
    if clouds.len() != ego.len() || clouds.iter().zip(ego).any(|(c, e)| c.frame != e.frame) {
        return Err(permon_core::Error::FrameMismatch("clouds and ego poses are not frame-aligned".into()).into());
    }
    let mut by_frame: BTreeMap<u64, Vec<ObjectState>> = BTreeMap::new();
    for o in objects {
        by_frame.entry(o.frame).or_default().push(*o);
    }
    let empty = Vec::new();
    let mut sensor = Vec::with_capacity(repetitions * ego.len());
    let mut plaus = Vec::with_capacity(repetitions * ego.len());
    for _ in 0..repetitions {
        let mut monitor = PlausibilityMonitor::new(params.plausibility);
        for (cloud, pose) in clouds.iter().zip(ego) {
            let objs = by_frame.get(&pose.frame).unwrap_or(&empty);
            let start = Instant::now();
            let grid = build_grid(cloud, pose, &params.grid)?;
            let verdict = run_sensor_checks(&grid, objs, &params.sensor);
            sensor.push(start.elapsed().as_secs_f64() * 1e3);
            std::hint::black_box(verdict);

            let start = Instant::now();
            let verdicts = monitor.check_frame(objs)?;
            plaus.push(start.elapsed().as_secs_f64() * 1e3);
            std::hint::black_box(verdicts);
        }
    }
    Ok(vec![summarize("sensor", sensor, ego.len()), summarize("plausibility", plaus, ego.len())])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentiles_use_nearest_rank() {
        let s: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&s, 0.5), 50.0);
        assert_eq!(percentile(&s, 0.99), 99.0);
        assert_eq!(percentile(&[3.0], 0.99), 3.0);
        assert_eq!(percentile(&[], 0.5), 0.0);
    }

    #[test]
    fn empty_frames_are_timed() {
        let ego: Vec<EgoPose> = (0..3).map(|f| EgoPose { frame: f, t: f as f64 * 0.05, ..Default::default() }).collect();
        let clouds: Vec<PointCloud2D> = (0..3).map(PointCloud2D::empty).collect();
        let rows = bench_latency(&[], &clouds, &ego, &MonitorParams::default(), 10).unwrap();
        assert_eq!(rows.len(), 2);
        for r in &rows {
            assert_eq!(r.frames, 3);
            assert!(r.mean_ms >= 0.0 && r.p50_ms <= r.p99_ms);
        }
        assert!(bench_latency(&[], &clouds, &ego, &MonitorParams::default(), 9).is_err());
        assert!(bench_latency(&[], &clouds[1..], &ego, &MonitorParams::default(), 10).is_err());
    }
}
