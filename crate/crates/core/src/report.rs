//! Summary statistics of a transport run and the data files written for it.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::CurrentVector;
use crate::inverse::TransportResult;
use crate::schedule::desired_trajectory;
use crate::trap::adiabaticity;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdiabaticitySeries {
    /// s
    pub duration: f64,
    pub peak: f64,
    /// One value per step `t = 0..N-1`, for the move from record `t` to `t + 1`.
    pub epsilon: Vec<f64>,
}

/// Relative drifts, step-to-step fluctuation and adiabaticity of a run.
///
/// Drifts are `(final - initial) / initial`; RMSE ratios are the RMS of the
/// per-step changes divided by the initial value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryReport {
    pub steps: usize,
    pub skipped_steps: usize,
    pub clipped_steps: usize,
    pub drift_u_min: f64,
    pub drift_mu: f64,
    pub drift_omega: [f64; 3],
    pub drift_r_tf: [f64; 3],
    pub rmse_u_min: f64,
    pub rmse_mu: f64,
    pub rmse_omega: [f64; 3],
    pub rmse_r_tf: [f64; 3],
    /// RMS of the per-step trap displacement along x, y, z, m.
    pub rms_displacement: [f64; 3],
    /// Largest `|r_min - r_des|` along x, y, z over the run, m.
    pub max_tracking_error: [f64; 3],
    /// `r_min - r_des` at the last step, m.
    pub final_tracking_error: [f64; 3],
    pub adiabaticity: Vec<AdiabaticitySeries>,
}

fn ratio(delta: f64, initial: f64, name: &'static str) -> Result<f64> {
    if initial == 0.0 {
        return Err(Error::Degenerate(name));
    }
    Ok(delta / initial)
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    (sum / n as f64).sqrt()
}

pub fn summarize(result: &TransportResult, durations: &[f64]) -> Result<SummaryReport> {
    let records = &result.records;
    if records.len() < 2 {
        return Err(Error::domain("a summary needs at least two records"));
    }
    let first = &records[0].metrics;
    let steps = records.len() - 1;

    let series = |f: &dyn Fn(usize) -> f64, initial: f64, name| -> Result<(f64, f64)> {
        let drift = ratio(f(steps) - f(0), initial, name)?;
        let fluct = rms((1..=steps).map(|t| f(t) - f(t - 1)));
        Ok((drift, ratio(fluct, initial, name)?))
    };
    let (drift_u_min, rmse_u_min) = series(&|t| records[t].metrics.u_min, first.u_min, "U_min")?;
    let (drift_mu, rmse_mu) = series(&|t| records[t].metrics.mu_chem, first.mu_chem, "mu")?;
    let mut drift_omega = [0.0; 3];
    let mut rmse_omega = [0.0; 3];
    let mut drift_r_tf = [0.0; 3];
    let mut rmse_r_tf = [0.0; 3];
    for i in 0..3 {
        (drift_omega[i], rmse_omega[i]) = series(&|t| records[t].metrics.omega[i], first.omega[i], "omega")?;
        (drift_r_tf[i], rmse_r_tf[i]) = series(&|t| records[t].metrics.r_tf[i], first.r_tf[i], "R_TF")?;
    }

    let step_dx: Vec<Vector3<f64>> = records
        .windows(2)
        .map(|w| w[1].metrics.r_min - w[0].metrics.r_min)
        .collect();
    let rms_displacement = [0, 1, 2].map(|i| rms(step_dx.iter().map(|d| d[i])));

    let desired = desired_trajectory(&result.plan)?;
    if desired.len() != records.len() {
        return Err(Error::domain(format!(
            "{} records for a {}-sample trajectory",
            records.len(),
            desired.len()
        )));
    }
    let mut max_tracking_error = [0.0f64; 3];
    for (r, d) in records.iter().zip(&desired) {
        let e = r.metrics.r_min - d;
        for i in 0..3 {
            max_tracking_error[i] = max_tracking_error[i].max(e[i].abs());
        }
    }
    let fe = records[steps].metrics.r_min - desired[steps];

    let adiabaticity = durations
        .iter()
        .map(|&duration| adiabaticity_series(result, duration))
        .collect::<Result<Vec<_>>>()?;

    Ok(SummaryReport {
        steps,
        skipped_steps: records.iter().filter(|r| r.skipped).count(),
        clipped_steps: records.iter().filter(|r| r.clipped).count(),
        drift_u_min,
        drift_mu,
        drift_omega,
        drift_r_tf,
        rmse_u_min,
        rmse_mu,
        rmse_omega,
        rmse_r_tf,
        rms_displacement,
        max_tracking_error,
        final_tracking_error: [fe.x, fe.y, fe.z],
        adiabaticity,
    })
}

/// `epsilon(t)` for a transport lasting `duration`: step velocity
/// `dx N / T` against the axial frequency and radius of the trap at `t`.
pub fn adiabaticity_series(result: &TransportResult, duration: f64) -> Result<AdiabaticitySeries> {
    if !(duration > 0.0) {
        return Err(Error::domain(format!("duration must be positive, got {duration}")));
    }
    let records = &result.records;
    let n = (records.len() - 1) as f64;
    let epsilon = records
        .windows(2)
        .map(|w| {
            let m = &w[0].metrics;
            let axis = m.axial_index();
            let v = (w[1].metrics.r_min.x - m.r_min.x) * n / duration;
            adiabaticity(v, m.omega[axis], m.r_tf[axis])
        })
        .collect::<Result<Vec<_>>>()?;
    let peak = epsilon.iter().copied().fold(0.0, f64::max);
    Ok(AdiabaticitySeries {
        duration,
        peak,
        epsilon,
    })
}

/// Fixed 17-significant-digit scientific notation; round-trips exactly.
pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.16e}")
    }
}

/// File stem suffix for a duration: `2` for 2 s, `2.5` for 2.5 s.
pub fn duration_label(duration: f64) -> String {
    format!("{duration}")
}

pub const METRICS_HEADER: &str =
    "step,U_min,mu,omega_1,omega_2,omega_3,rtf_1,rtf_2,rtf_3,kappa,alpha,skipped";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestEntry {
    pub path: String,
    /// Data rows, excluding the header.
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
}

struct Table {
    text: String,
    rows: usize,
}

impl Table {
    fn new(header: &str) -> Self {
        Table {
            text: format!("{header}\n"),
            rows: 0,
        }
    }

    fn row(&mut self, step: usize, fields: impl IntoIterator<Item = String>) {
        let _ = write!(self.text, "{step}");
        for f in fields {
            self.text.push(',');
            self.text.push_str(&f);
        }
        self.text.push('\n');
        self.rows += 1;
    }
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Error::io(path, e))
}

/// Writes the per-step tables, and the summary when one is given. Returns
/// the manifest, which is also written as `manifest.json`.
pub fn write_outputs(
    result: &TransportResult,
    report: Option<&SummaryReport>,
    out_dir: &Path,
) -> Result<Manifest> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut files = Vec::new();
    let mut emit = |name: String, table: Table| -> Result<()> {
        write_file(out_dir, &name, &table.text)?;
        files.push(ManifestEntry {
            path: name,
            rows: table.rows,
        });
        Ok(())
    };

    let channels = result.records.first().map_or(0, |r| r.currents.len());
    let header: Vec<String> = std::iter::once("step".to_string())
        .chain((0..channels).map(|k| format!("I_{k}")))
        .collect();
    let mut currents = Table::new(&header.join(","));
    let mut trajectory = Table::new("step,x_des,y_des,z_des,x,y,z");
    let mut metrics = Table::new(METRICS_HEADER);
    let desired = desired_trajectory(&result.plan)?;
    for (r, d) in result.records.iter().zip(&desired) {
        let t = r.step_index;
        currents.row(t, r.currents.as_slice().iter().map(|&i| fmt_float(i)));
        let p = r.metrics.r_min;
        trajectory.row(t, [d.x, d.y, d.z, p.x, p.y, p.z].map(fmt_float));
        let m = &r.metrics;
        let mut fields: Vec<String> = [m.u_min, m.mu_chem]
            .into_iter()
            .chain(m.omega.iter().copied())
            .chain(m.r_tf.iter().copied())
            .chain([
                r.jacobian_condition.unwrap_or(f64::NAN),
                r.alpha_used.unwrap_or(f64::NAN),
            ])
            .map(fmt_float)
            .collect();
        fields.push(u8::from(r.skipped).to_string());
        metrics.row(t, fields);
    }
    emit("currents.csv".into(), currents)?;
    emit("trajectory.csv".into(), trajectory)?;
    emit("metrics.csv".into(), metrics)?;

    if let Some(report) = report {
        for series in &report.adiabaticity {
            let mut table = Table::new("step,epsilon");
            for (t, e) in series.epsilon.iter().enumerate() {
                table.row(t, [fmt_float(*e)]);
            }
            emit(format!("adiabaticity_T{}.csv", duration_label(series.duration)), table)?;
        }
        let json = serde_json::to_string_pretty(report)?;
        write_file(out_dir, "summary.json", &json)?;
        files.push(ManifestEntry {
            path: "summary.json".into(),
            rows: 1,
        });
    }

    let manifest = Manifest { files };
    write_file(out_dir, "manifest.json", &serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Reads `currents.csv` back into one current vector per step.
pub fn read_currents_csv(path: impl AsRef<Path>) -> Result<Vec<CurrentVector>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let columns = header.split(',').count();
    lines
        .enumerate()
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != columns {
                return Err(Error::domain(format!(
                    "{}: row {} has {} fields, expected {columns}",
                    path.display(),
                    i + 1,
                    fields.len()
                )));
            }
            fields[1..]
                .iter()
                .map(|f| {
                    f.parse::<f64>().map_err(|e| {
                        Error::domain(format!("{}: row {}: `{f}`: {e}", path.display(), i + 1))
                    })
                })
                .collect::<Result<Vec<_>>>()
                .map(CurrentVector)
        })
        .collect()
}

/// Output paths listed in a manifest, joined onto `dir`.
pub fn manifest_paths(manifest: &Manifest, dir: &Path) -> Vec<PathBuf> {
    manifest
        .files
        .iter()
        .map(|f| dir.join(&f.path))
        .chain(std::iter::once(dir.join("manifest.json")))
        .collect()
}
