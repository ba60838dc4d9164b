//! File formats: JSON-lines object, ego and ledger streams, CSV point clouds,
//! verdict dumps and metric tables. Every writer replaces its target atomically.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use permon_core::eval::MetricsRow;
use permon_core::grid::OccupancyGrid;
use permon_core::plausibility::{PlausibilityVerdict, Violation};
use permon_core::sensor::{Classification, SensorVerdict, Trigger};
use permon_core::types::{EgoPose, InjectedError, ObjectState, PointCloud2D};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bench::LatencyRow;
use crate::error::{Error, Result};

/// Writes through a temporary file in the target directory, then renames it
/// over `path`.
pub fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        body(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

/// Reads one JSON value per non-empty line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line).map_err(|e| Error::Parse { path: path.into(), line: i + 1, msg: e.to_string() })?;
        out.push(v);
    }
    Ok(out)
}

/// Writes one JSON value per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    write_atomic(path, |w| {
        for item in items {
            serde_json::to_writer(&mut *w, &item).map_err(|e| Error::io(path, e.into()))?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    })
}

/// Reads an object-list file and validates every state.
pub fn read_objects(path: &Path) -> Result<Vec<ObjectState>> {
    let objs: Vec<ObjectState> = read_jsonl(path)?;
    for o in &objs {
        o.validate()?;
    }
    Ok(objs)
}

pub fn write_objects(path: &Path, objects: &[ObjectState]) -> Result<()> {
    write_jsonl(path, objects)
}

pub fn read_ego(path: &Path) -> Result<Vec<EgoPose>> {
    read_jsonl(path)
}

pub fn write_ego(path: &Path, ego: &[EgoPose]) -> Result<()> {
    write_jsonl(path, ego)
}

pub fn read_ledger(path: &Path) -> Result<Vec<InjectedError>> {
    read_jsonl(path)
}

pub fn write_ledger(path: &Path, ledger: &[InjectedError]) -> Result<()> {
    write_jsonl(path, ledger)
}

#[derive(Serialize, Deserialize)]
struct PointRow {
    frame: u64,
    x: f64,
    y: f64,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse { path: path.into(), line, msg: format!("{other:?}") },
    }
}

/// Writes clouds as `frame,x,y` rows.
pub fn write_clouds(path: &Path, clouds: &[PointCloud2D]) -> Result<()> {
    write_atomic(path, |w| {
        let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        csv.write_record(["frame", "x", "y"]).map_err(|e| csv_err(path, e))?;
        for c in clouds {
            for p in &c.points {
                csv.serialize(PointRow { frame: c.frame, x: p[0], y: p[1] }).map_err(|e| csv_err(path, e))?;
            }
        }
        csv.flush().map_err(|e| Error::io(path, e))
    })
}

/// Reads a cloud file into points per frame.
pub fn read_clouds(path: &Path) -> Result<BTreeMap<u64, Vec<[f64; 2]>>> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let mut out: BTreeMap<u64, Vec<[f64; 2]>> = BTreeMap::new();
    for row in rdr.deserialize::<PointRow>() {
        let row = row.map_err(|e| csv_err(path, e))?;
        out.entry(row.frame).or_default().push([row.x, row.y]);
    }
    Ok(out)
}

/// One cloud per ego frame; frames without points get an empty cloud.
///
/// Points at frames without an ego pose are a [`permon_core::Error::FrameMismatch`].
pub fn align_clouds(mut points: BTreeMap<u64, Vec<[f64; 2]>>, ego: &[EgoPose]) -> Result<Vec<PointCloud2D>> {
    let clouds: Vec<PointCloud2D> =
        ego.iter().map(|e| PointCloud2D { frame: e.frame, points: points.remove(&e.frame).unwrap_or_default() }).collect();
    if let Some(f) = points.keys().next() {
        return Err(permon_core::Error::FrameMismatch(format!("points at frame {f} without an ego pose")).into());
    }
    for c in &clouds {
        c.validate()?;
    }
    Ok(clouds)
}

#[derive(Serialize)]
struct SensorRow {
    frame: u64,
    object_id: u64,
    eta: f64,
    class: Classification,
    pos_error: bool,
    trigger: Option<Trigger>,
}

#[derive(Serialize)]
struct FnCellRow {
    frame: u64,
    ix: usize,
    iy: usize,
    kappa: f64,
}

pub fn write_sensor_verdicts(path: &Path, verdicts: &[SensorVerdict]) -> Result<()> {
    write_jsonl(
        path,
        verdicts.iter().flat_map(|v| {
            v.objects.iter().map(|o| SensorRow {
                frame: v.frame,
                object_id: o.object_id,
                eta: o.eta,
                class: o.class,
                pos_error: o.pos_error,
                trigger: o.trigger,
            })
        }),
    )
}

pub fn write_fn_cells(path: &Path, verdicts: &[SensorVerdict]) -> Result<()> {
    write_jsonl(
        path,
        verdicts
            .iter()
            .flat_map(|v| v.fn_cells.iter().map(|c| FnCellRow { frame: v.frame, ix: c.ix, iy: c.iy, kappa: c.kappa })),
    )
}

#[derive(Serialize)]
struct PlausibilityRow<'a> {
    frame: u64,
    object_id: u64,
    plausible: bool,
    violated: &'a [Violation],
    residual: f64,
    x_hat: f64,
    y_hat: f64,
    dx_hat: f64,
    dy_hat: f64,
}

pub fn write_plausibility(path: &Path, verdicts: &[PlausibilityVerdict]) -> Result<()> {
    write_jsonl(
        path,
        verdicts.iter().map(|v| PlausibilityRow {
            frame: v.frame,
            object_id: v.object_id,
            plausible: v.plausible,
            violated: &v.violated,
            residual: v.residual,
            x_hat: v.predicted.x,
            y_hat: v.predicted.y,
            dx_hat: v.predicted.dx,
            dy_hat: v.predicted.dy,
        }),
    )
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_atomic(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        for r in rows {
            csv.serialize(r).map_err(|e| csv_err(path, e))?;
        }
        csv.flush().map_err(|e| Error::io(path, e))
    })
}

/// Metrics table with the header
/// `scenario,check,error_kind,magnitude,rate,tp,fp,fn,precision,recall,false_alarm_rate`.
pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    write_csv(path, rows)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    rdr.deserialize().map(|r| r.map_err(|e| csv_err(path, e))).collect()
}

/// Latency table with the header `check,mean_ms,p50_ms,p99_ms,frames`.
pub fn write_latency(path: &Path, rows: &[LatencyRow]) -> Result<()> {
    write_csv(path, rows)
}

/// Nonzero cells as `ix,iy,p`.
pub fn write_grid(path: &Path, grid: &OccupancyGrid) -> Result<()> {
    #[derive(Serialize)]
    struct Cell {
        ix: usize,
        iy: usize,
        p: f64,
    }
    let cells: Vec<Cell> = grid.occupied_cells().map(|c| Cell { ix: c.ix, iy: c.iy, p: c.p }).collect();
    if cells.is_empty() {
        return write_atomic(path, |w| w.write_all(b"ix,iy,p\n").map_err(|e| Error::io(path, e)));
    }
    write_csv(path, &cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use permon_core::types::ErrorKind;

    #[test]
    fn object_lines_use_the_documented_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("o.jsonl");
        let mut o = ObjectState::new(4, 2, 0.1, 1.0, 2.0, 3.0, 0.5, 4.5, 2.0);
        o.dtheta = Some(0.1);
        write_objects(&path, &[o]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let v: serde_json::Value = serde_json::from_str(text.trim()).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        let mut want = ["frame", "t", "id", "x", "y", "v", "theta", "l", "w", "dx", "dy", "dv", "dtheta", "dl", "dw"];
        want.sort();
        assert_eq!(keys, want);
        assert_eq!(read_objects(&path).unwrap(), vec![o]);
    }

    #[test]
    fn clouds_round_trip_with_empty_frames() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let clouds = vec![
            PointCloud2D { frame: 0, points: vec![[1.0, 2.0], [0.25, -3.5]] },
            PointCloud2D::empty(1),
            PointCloud2D { frame: 2, points: vec![[9.0, 9.0]] },
        ];
        write_clouds(&path, &clouds).unwrap();
        assert!(std::fs::read_to_string(&path).unwrap().starts_with("frame,x,y\n0,1.0,2.0\n"));
        let ego: Vec<EgoPose> = (0..3).map(|f| EgoPose { frame: f, ..Default::default() }).collect();
        assert_eq!(align_clouds(read_clouds(&path).unwrap(), &ego).unwrap(), clouds);
        let err = align_clouds(read_clouds(&path).unwrap(), &ego[..2]).unwrap_err();
        assert_eq!(err.kind(), "FrameMismatch");
    }

    #[test]
    fn ledger_and_metrics_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.jsonl");
        let e = InjectedError {
            frame: 3,
            object_id: 1,
            kind: ErrorKind::SpeedTransient,
            magnitude: 2.0,
            dx_applied: None,
            dy_applied: None,
            dv_applied: Some(2.0),
            clamped: false,
        };
        write_ledger(&path, &[e]).unwrap();
        assert_eq!(read_ledger(&path).unwrap(), vec![e]);

        let row = MetricsRow {
            scenario: "pedestrian/c0.5".into(),
            check: permon_core::eval::CheckKind::Sensor,
            error_kind: ErrorKind::PositionPermanent,
            magnitude: 0.4,
            rate: 1.0,
            tp: 3,
            fp: 1,
            fn_: 0,
            precision: 0.75,
            recall: 1.0,
            false_alarm_rate: 0.01,
        };
        let path = dir.path().join("m.csv");
        write_metrics(&path, std::slice::from_ref(&row)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "scenario,check,error_kind,magnitude,rate,tp,fp,fn,precision,recall,false_alarm_rate"
        );
        assert_eq!(read_metrics(&path).unwrap(), vec![row]);
    }

    #[test]
    fn bad_lines_report_their_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("o.jsonl");
        std::fs::write(&path, "\n{\"frame\":1}\n").unwrap();
        match read_objects(&path).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("{e}"),
        }
        assert_eq!(read_objects(&dir.path().join("missing")).unwrap_err().kind(), "IoError");
    }

    #[test]
    fn atomic_write_leaves_no_partial_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.txt");
        std::fs::write(&path, "old").unwrap();
        let r = write_atomic(&path, |w| {
            w.write_all(b"partial").unwrap();
            Err(Error::Config("boom".into()))
        });
        assert!(r.is_err());
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "old");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
