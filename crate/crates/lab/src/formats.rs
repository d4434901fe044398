//! On-disk formats: matrix/vector CSV, the JSON matrix envelope, instance
//! bundles and trajectory exports.
//!
//! Matrix CSV is row-major with a first line `rows=R,cols=C`. Vectors are
//! written as single-column matrices.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use lca_core::dynamics::{Segment, SwitchEvent, ThresholdSchedule, Trajectory};
use lca_core::ensemble::{MeasurementMatrix, ProblemInstance, SparseSignal};
use lca_core::oracle::objective;
use lca_core::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, LabResult};

fn create(path: &Path) -> LabResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| LabError::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> LabError {
    LabError::format(path, e.to_string())
}

/// Writes rows of already-formatted fields as CSV.
pub fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> LabResult<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(create(path)?);
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| LabError::io(path, e))
}

/// Shortest round-trip decimal form.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> LabResult<()> {
    let dims = [format!("rows={}", m.nrows()), format!("cols={}", m.ncols())];
    let header: Vec<&str> = dims.iter().map(String::as_str).collect();
    write_csv(path, &header, m.row_iter().map(|r| r.iter().map(|&x| num(x)).collect::<Vec<_>>()))
}

fn parse_dim(field: Option<&str>, key: &str) -> Option<usize> {
    field?.trim().strip_prefix(key)?.strip_prefix('=')?.parse().ok()
}

pub fn read_matrix_csv(path: &Path) -> LabResult<DMatrix<f64>> {
    let file = File::open(path).map_err(|e| LabError::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(file);
    let mut records = r.records();
    let head = records
        .next()
        .ok_or_else(|| LabError::format(path, "empty file"))?
        .map_err(|e| csv_err(path, e))?;
    let (rows, cols) = match (parse_dim(head.get(0), "rows"), parse_dim(head.get(1), "cols")) {
        (Some(r), Some(c)) if head.len() == 2 => (r, c),
        _ => return Err(LabError::format(path, "first line must be `rows=R,cols=C`")),
    };
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for (i, rec) in records.enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() != cols {
            return Err(LabError::format(path, format!("row {i} has {} fields, expected {cols}", rec.len())));
        }
        for field in rec.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| LabError::format(path, format!("row {i}: `{field}` is not a number")))?;
            data.push(v);
        }
        seen += 1;
    }
    if seen != rows {
        return Err(LabError::format(path, format!("found {seen} rows, header says {rows}")));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn write_vector_csv(path: &Path, v: &DVector<f64>) -> LabResult<()> {
    write_matrix_csv(path, &DMatrix::from_column_slice(v.len(), 1, v.as_slice()))
}

pub fn read_vector_csv(path: &Path) -> LabResult<DVector<f64>> {
    let m = read_matrix_csv(path)?;
    if m.ncols() != 1 {
        return Err(LabError::format(path, "a vector file must have exactly one column"));
    }
    Ok(m.column(0).into_owned())
}

/// JSON envelope `{m, n, ensemble, seed, data}` with row-major `data`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixEnvelope {
    pub m: usize,
    pub n: usize,
    pub ensemble: String,
    pub seed: Option<u64>,
    pub data: Vec<Vec<f64>>,
}

impl MatrixEnvelope {
    pub fn new(matrix: &DMatrix<f64>, ensemble: &str, seed: Option<u64>) -> Self {
        MatrixEnvelope {
            m: matrix.nrows(),
            n: matrix.ncols(),
            ensemble: ensemble.to_owned(),
            seed,
            data: matrix.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>, String> {
        if self.data.len() != self.m || self.data.iter().any(|r| r.len() != self.n) {
            return Err(format!("data is not {} x {}", self.m, self.n));
        }
        let flat: Vec<f64> = self.data.iter().flatten().copied().collect();
        Ok(DMatrix::from_row_slice(self.m, self.n, &flat))
    }
}

/// Self-contained problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceBundle {
    pub matrix: MatrixEnvelope,
    pub signal: Vec<f64>,
    pub noise: Vec<f64>,
    /// Stored for verification; must equal `Phi a + eps`.
    pub y: Vec<f64>,
    pub threshold: ThresholdSchedule,
    pub tau: f64,
}

impl InstanceBundle {
    pub fn from_instance(instance: &ProblemInstance, seed: Option<u64>) -> Self {
        InstanceBundle {
            matrix: MatrixEnvelope::new(instance.phi(), instance.matrix().ensemble().tag(), seed),
            signal: instance.signal().values().iter().copied().collect(),
            noise: instance.noise().iter().copied().collect(),
            y: instance.y().iter().copied().collect(),
            threshold: instance.threshold().clone(),
            tau: instance.tau(),
        }
    }

    pub fn to_instance(&self, path: &Path) -> LabResult<ProblemInstance> {
        let bad = |reason: String| LabError::format(path, reason);
        let phi = self.matrix.to_matrix().map_err(bad)?;
        let matrix = MeasurementMatrix::explicit(phi).map_err(|e| bad(e.to_string()))?;
        let signal = SparseSignal::from_values(DVector::from_vec(self.signal.clone()));
        let noise = DVector::from_vec(self.noise.clone());
        self.threshold.validate().map_err(|e| bad(e.to_string()))?;
        let instance = ProblemInstance::new(matrix, signal, noise, self.threshold.clone(), self.tau)
            .map_err(|e| bad(e.to_string()))?;
        let y = DVector::from_vec(self.y.clone());
        if y.len() != instance.m() || (&y - instance.y()).amax() > 1e-12 * (1.0 + y.amax()) {
            return Err(bad("stored y does not match Phi a + eps".into()));
        }
        Ok(instance)
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> LabResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| LabError::io(path, e))?;
    w.flush().map_err(|e| LabError::io(path, e))
}

pub fn save_instance(path: &Path, instance: &ProblemInstance, seed: Option<u64>) -> LabResult<()> {
    write_json(path, &InstanceBundle::from_instance(instance, seed))
}

pub fn load_instance(path: &Path) -> LabResult<ProblemInstance> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    let bundle: InstanceBundle = serde_json::from_str(&text).map_err(|e| LabError::format(path, e.to_string()))?;
    bundle.to_instance(path)
}

#[derive(Serialize)]
struct SegmentRecord<'a> {
    t_start: f64,
    t_end: f64,
    active_set: &'a [usize],
    signs: &'a [i8],
    sign_stable: bool,
}

#[derive(Serialize)]
struct EventsSidecar<'a> {
    backend: &'static str,
    tau: f64,
    converged: bool,
    max_active: usize,
    sign_violations: usize,
    switch_events: &'a [SwitchEvent],
    segments: Vec<SegmentRecord<'a>>,
}

fn segment_record(s: &Segment) -> SegmentRecord<'_> {
    SegmentRecord {
        t_start: s.t_start,
        t_end: s.t_end,
        active_set: &s.active_set,
        signs: &s.signs,
        sign_stable: s.sign_stable,
    }
}

/// Writes `<stem>.csv` with columns `t, u_dist, active, energy`, the
/// `<stem>.events.json` sidecar, and with `dump_states` also
/// `<stem>.states.csv` holding every sampled internal state.
pub fn write_trajectory(dir: &Path, stem: &str, traj: &Trajectory, instance: &ProblemInstance, dump_states: bool) -> LabResult<()> {
    let u_final = &traj.final_state.u;
    let rows = traj.samples.iter().map(|s| {
        let energy = objective(&s.a, instance.phi(), instance.y(), s.lambda);
        [num(s.t), num((&s.u - u_final).norm()), s.active_count().to_string(), num(energy)]
    });
    write_csv(&dir.join(format!("{stem}.csv")), &["t", "u_dist", "active", "energy"], rows)?;
    let sidecar = EventsSidecar {
        backend: traj.backend.tag(),
        tau: traj.tau,
        converged: traj.converged,
        max_active: traj.max_active,
        sign_violations: traj.sign_violations,
        switch_events: &traj.switch_events,
        segments: traj.segments.iter().map(segment_record).collect(),
    };
    write_json(&dir.join(format!("{stem}.events.json")), &sidecar)?;
    if dump_states {
        let n = instance.n();
        let names: Vec<String> = std::iter::once("t".to_owned()).chain((0..n).map(|k| format!("u{k}"))).collect();
        let header: Vec<&str> = names.iter().map(String::as_str).collect();
        let rows = traj
            .samples
            .iter()
            .map(|s| std::iter::once(num(s.t)).chain(s.u.iter().map(|&x| num(x))).collect::<Vec<_>>());
        write_csv(&dir.join(format!("{stem}.states.csv")), &header, rows)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use lca_core::ensemble::{gen_matrix, gen_sparse_signal, measure, trial_rng, AmplitudeMode, Ensemble};

    fn instance() -> ProblemInstance {
        let mut rng = trial_rng(9, 0);
        let phi = gen_matrix(6, 10, Ensemble::GaussianUnitCol, &mut rng).unwrap();
        let sig = gen_sparse_signal(10, 2, AmplitudeMode::EqualMagnitude, true, &mut rng).unwrap();
        measure(phi, sig, 0.01, ThresholdSchedule::constant(0.2).unwrap(), &mut rng).unwrap()
    }

    #[test]
    fn matrix_csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let inst = instance();
        write_matrix_csv(&p, inst.phi()).unwrap();
        assert_eq!(&read_matrix_csv(&p).unwrap(), inst.phi());
        let v = dir.path().join("v.csv");
        write_vector_csv(&v, inst.y()).unwrap();
        assert_eq!(&read_vector_csv(&v).unwrap(), inst.y());
        assert!(read_vector_csv(&p).is_err());
    }

    #[test]
    fn malformed_csv_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "rows=2,cols=2\n1,2\n3\n").unwrap();
        assert!(matches!(read_matrix_csv(&p), Err(LabError::Format { .. })));
        std::fs::write(&p, "1,2\n3,4\n").unwrap();
        assert!(read_matrix_csv(&p).is_err());
        std::fs::write(&p, "rows=2,cols=2\n1,2\n").unwrap();
        assert!(read_matrix_csv(&p).is_err());
    }

    #[test]
    fn instance_bundle_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("inst.json");
        let inst = instance();
        save_instance(&p, &inst, Some(9)).unwrap();
        let back = load_instance(&p).unwrap();
        assert_eq!(back.phi(), inst.phi());
        assert_eq!(back.y(), inst.y());
        assert_eq!(back.signal().support(), inst.signal().support());
        assert_eq!(back.threshold(), inst.threshold());

        let mut bundle = InstanceBundle::from_instance(&inst, None);
        bundle.y[0] += 1e-3;
        assert!(bundle.to_instance(&p).is_err());
    }

    #[test]
    fn envelope_checks_shape() {
        let env = MatrixEnvelope { m: 2, n: 2, ensemble: "explicit".into(), seed: None, data: vec![vec![1.0, 0.0]] };
        assert!(env.to_matrix().is_err());
    }
}
