//! Artifact schemas: JSON file formats and CSV writers/readers.
//!
//! All matrices are serialized row-major with explicit `rows`/`cols`.
//! Generated artifacts carry an optional `config_hash` field so downstream
//! commands can refuse inputs produced under a different configuration.
//! CSV artifacts embed the hash as a leading `# config_hash=…` comment line.
//! Nothing here writes timestamps; identical inputs produce byte-identical
//! files.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::lqr::{Trajectory, TrajectoryDataset};
use crate::netmodel::{Edge, PowerNetwork, StateVector};
use crate::scenarios::{Scenario, SwitchingSequence};
use crate::sim::ClosedLoopTrajectory;
use crate::synth::{ControllerGain, GainOrigin, SynthesisReport};
use crate::{Error, Result};

/// Row-major dense matrix payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixJson {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        MatrixJson { rows: m.nrows(), cols: m.ncols(), data }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::invalid(format!(
                "matrix payload has {} entries, expected {}×{}",
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

/// Per-mode inertia rows: scalars are expanded to all nodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InertiaModes {
    Scalars(Vec<f64>),
    Rows(Vec<Vec<f64>>),
}

/// Network parameter file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub n: usize,
    /// `[i, j, b]` triples, 0-based node indices.
    pub edges: Vec<(usize, usize, f64)>,
    pub damping: Vec<f64>,
    pub inertia_modes: InertiaModes,
    pub step_h: f64,
}

impl NetworkFile {
    pub fn to_parts(&self) -> Result<(PowerNetwork, f64)> {
        let edges = self
            .edges
            .iter()
            .map(|&(i, j, b)| Edge { i, j, susceptance: b })
            .collect();
        let inertia = match &self.inertia_modes {
            InertiaModes::Scalars(vals) => {
                vals.iter().map(|&m| vec![m; self.n]).collect::<Vec<_>>()
            }
            InertiaModes::Rows(rows) => rows.clone(),
        };
        let net = PowerNetwork::new(self.n, edges, self.damping.clone(), inertia)?;
        if !(self.step_h > 0.0) {
            return Err(Error::invalid("network file: step_h must be > 0"));
        }
        Ok((net, self.step_h))
    }

    pub fn load(path: &std::path::Path) -> Result<(PowerNetwork, f64)> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::invalid(format!("cannot read network file {}: {e}", path.display()))
        })?;
        let file: NetworkFile = serde_json::from_str(&text).map_err(|e| {
            Error::invalid(format!("malformed network file {}: {e}", path.display()))
        })?;
        file.to_parts()
    }
}

/// One scenario in the scenario-set file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioJson {
    pub seed: u64,
    pub horizon_steps: usize,
    pub x0: Vec<f64>,
    /// 1-based mode index per step.
    pub modes: Vec<usize>,
    pub dwell_steps: usize,
}

/// Scenario set artifact: everything needed to re-use a dataset without
/// regenerating it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSetFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub master_seed: u64,
    pub scenarios: Vec<ScenarioJson>,
}

impl ScenarioSetFile {
    pub fn from_scenarios(scenarios: &[Scenario], master_seed: u64) -> Self {
        ScenarioSetFile {
            config_hash: None,
            master_seed,
            scenarios: scenarios
                .iter()
                .map(|s| ScenarioJson {
                    seed: s.seed,
                    horizon_steps: s.horizon_steps,
                    x0: s.x0.as_vector().iter().copied().collect(),
                    modes: s.sequence.modes().to_vec(),
                    dwell_steps: s.sequence.dwell_steps(),
                })
                .collect(),
        }
    }

    pub fn to_scenarios(&self, mode_count: usize) -> Result<Vec<Scenario>> {
        self.scenarios
            .iter()
            .map(|s| {
                Ok(Scenario {
                    x0: StateVector::new(DVector::from_vec(s.x0.clone()))?,
                    sequence: SwitchingSequence::new(s.modes.clone(), s.dwell_steps, mode_count)?,
                    horizon_steps: s.horizon_steps,
                    seed: s.seed,
                })
            })
            .collect()
    }
}

/// Aggregated imitation dataset artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub step_h: f64,
    pub scenario_count: usize,
    pub sample_count: usize,
    pub input_sq_sum: f64,
    pub g: MatrixJson,
    pub c: MatrixJson,
}

impl DatasetFile {
    pub fn from_dataset(d: &TrajectoryDataset) -> Self {
        DatasetFile {
            config_hash: None,
            step_h: d.step_h,
            scenario_count: d.scenario_count,
            sample_count: d.sample_count,
            input_sq_sum: d.input_sq_sum,
            g: MatrixJson::from_matrix(&d.g),
            c: MatrixJson::from_matrix(&d.c),
        }
    }

    pub fn to_dataset(&self) -> Result<TrajectoryDataset> {
        Ok(TrajectoryDataset {
            g: self.g.to_matrix()?,
            c: self.c.to_matrix()?,
            input_sq_sum: self.input_sq_sum,
            step_h: self.step_h,
            scenario_count: self.scenario_count,
            sample_count: self.sample_count,
        })
    }
}

/// Controller artifact: gain, optional certificate, optional config echo.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControllerFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub origin: GainOrigin,
    pub k: MatrixJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<MatrixJson>,
    /// Per-mode LMI margins recorded at synthesis time (informational;
    /// certification recomputes them from scratch).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margins: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_eig_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

impl ControllerFile {
    pub fn from_gain(gain: &ControllerGain) -> Self {
        ControllerFile {
            config_hash: None,
            origin: gain.origin,
            k: MatrixJson::from_matrix(&gain.k),
            p: None,
            margins: None,
            min_eig_p: None,
            config: None,
        }
    }

    pub fn to_gain(&self) -> Result<ControllerGain> {
        ControllerGain::new(self.k.to_matrix()?, self.origin)
    }

    pub fn lyapunov_matrix(&self) -> Result<Option<DMatrix<f64>>> {
        match &self.p {
            Some(m) => Ok(Some(m.to_matrix()?)),
            None => Ok(None),
        }
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::invalid(format!("malformed JSON in {}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &std::path::Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn fmt(x: f64) -> String {
    // Display for f64 is the shortest representation that round-trips.
    format!("{x}")
}

fn write_hash_comment<W: Write>(w: &mut W, config_hash: Option<&str>) -> Result<()> {
    if let Some(h) = config_hash {
        writeln!(w, "# config_hash={h}")?;
    }
    Ok(())
}

/// Training trajectories: `scenario, t, theta_1.., omega_1.., u_1.., mode`.
/// The final row of each scenario (t = T) carries the terminal state with
/// u = 0 (the horizon's unique optimal terminal input) and repeats the last
/// active mode.
pub fn write_trajectories_csv<W: Write>(
    mut w: W,
    trajectories: &[Trajectory],
    config_hash: Option<&str>,
) -> Result<()> {
    write_hash_comment(&mut w, config_hash)?;
    let n = match trajectories.first() {
        Some(t) => t.node_count(),
        None => return Err(Error::invalid("no trajectories to export")),
    };
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["scenario".to_string(), "t".to_string()];
    header.extend((1..=n).map(|i| format!("theta_{i}")));
    header.extend((1..=n).map(|i| format!("omega_{i}")));
    header.extend((1..=n).map(|i| format!("u_{i}")));
    header.push("mode".to_string());
    wtr.write_record(&header)?;
    for (k, traj) in trajectories.iter().enumerate() {
        for t in 0..traj.states.len() {
            let x = &traj.states[t];
            let mut rec = vec![k.to_string(), t.to_string()];
            rec.extend(x.iter().map(|v| fmt(*v)));
            if t < traj.inputs.len() {
                rec.extend(traj.inputs[t].iter().map(|v| fmt(*v)));
                rec.push(traj.modes[t].to_string());
            } else {
                rec.extend(std::iter::repeat_n("0".to_string(), n));
                rec.push(traj.modes[traj.modes.len() - 1].to_string());
            }
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Closed-loop trajectory: `t, mode, theta_1.., omega_1.., u_1..[, V]`.
/// The `V` column is present when a Lyapunov matrix is supplied.
pub fn write_closed_loop_csv<W: Write>(
    mut w: W,
    traj: &ClosedLoopTrajectory,
    p: Option<&DMatrix<f64>>,
    config_hash: Option<&str>,
) -> Result<()> {
    write_hash_comment(&mut w, config_hash)?;
    let n = traj.node_count();
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["t".to_string(), "mode".to_string()];
    header.extend((1..=n).map(|i| format!("theta_{i}")));
    header.extend((1..=n).map(|i| format!("omega_{i}")));
    header.extend((1..=n).map(|i| format!("u_{i}")));
    if p.is_some() {
        header.push("V".to_string());
    }
    wtr.write_record(&header)?;
    for k in 0..traj.states.len() {
        let x = &traj.states[k];
        let mut rec = vec![fmt(traj.times[k]), traj.modes[k].to_string()];
        rec.extend(x.iter().map(|v| fmt(*v)));
        rec.extend(traj.inputs[k].iter().map(|v| fmt(*v)));
        if let Some(p) = p {
            rec.push(fmt((x.transpose() * p * x)[(0, 0)]));
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a closed-loop trajectory CSV written by [`write_closed_loop_csv`].
pub fn read_closed_loop_csv<R: BufRead>(r: R) -> Result<ClosedLoopTrajectory> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let header = rdr.headers()?.clone();
    let cols = header.len();
    let has_v = header.iter().last() == Some("V");
    let body = cols - 2 - usize::from(has_v);
    if body % 3 != 0 || body == 0 {
        return Err(Error::invalid("trajectory CSV has unexpected column count"));
    }
    let n = body / 3;
    let mut traj = ClosedLoopTrajectory {
        times: vec![],
        states: vec![],
        inputs: vec![],
        modes: vec![],
        step_h: 0.0,
        diverged: false,
    };
    for rec in rdr.records() {
        let rec = rec?;
        let f = |i: usize| -> Result<f64> {
            rec[i].parse::<f64>().map_err(|e| Error::invalid(format!("bad CSV number: {e}")))
        };
        traj.times.push(f(0)?);
        traj.modes.push(
            rec[1].parse::<usize>().map_err(|e| Error::invalid(format!("bad mode: {e}")))?,
        );
        let mut x = DVector::zeros(2 * n);
        for i in 0..2 * n {
            x[i] = f(2 + i)?;
        }
        traj.states.push(x);
        let mut u = DVector::zeros(n);
        for i in 0..n {
            u[i] = f(2 + 2 * n + i)?;
        }
        traj.inputs.push(u);
    }
    if traj.times.len() >= 2 {
        traj.step_h = traj.times[1] - traj.times[0];
    }
    Ok(traj)
}

/// Synthesis iteration report: `outer_iter, mu_barrier, objective, worst_lmi_margin`.
pub fn write_iteration_report_csv<W: Write>(
    mut w: W,
    report: &SynthesisReport,
    config_hash: Option<&str>,
) -> Result<()> {
    write_hash_comment(&mut w, config_hash)?;
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["outer_iter", "mu_barrier", "objective", "worst_lmi_margin"])?;
    for row in &report.iterations {
        wtr.write_record([
            row.outer_iter.to_string(),
            fmt(row.mu),
            fmt(row.objective),
            fmt(row.worst_margin),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Extracts the `# config_hash=…` comment from a CSV artifact, if present.
pub fn read_csv_hash(path: &std::path::Path) -> Result<Option<String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))?;
    Ok(text
        .lines()
        .next()
        .and_then(|l| l.strip_prefix("# config_hash="))
        .map(|s| s.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip_is_row_major() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let j = MatrixJson::from_matrix(&m);
        assert_eq!(j.data, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(j.to_matrix().unwrap(), m);
    }

    #[test]
    fn matrix_rejects_bad_shape() {
        let j = MatrixJson { rows: 2, cols: 2, data: vec![1.0, 2.0, 3.0] };
        assert!(j.to_matrix().is_err());
    }

    #[test]
    fn network_file_expands_scalar_inertia() {
        let file: NetworkFile = serde_json::from_str(
            r#"{"n": 2, "edges": [[0,1,1.0]], "damping": [1.0, 2.0],
                "inertia_modes": [0.5, 2.0], "step_h": 0.01}"#,
        )
        .unwrap();
        let (net, h) = file.to_parts().unwrap();
        assert_eq!(net.mode_count(), 2);
        assert_eq!(net.inertia(1).unwrap().as_slice(), &[0.5, 0.5]);
        assert_eq!(net.inertia(2).unwrap().as_slice(), &[2.0, 2.0]);
        assert_eq!(h, 0.01);
    }

    #[test]
    fn network_file_accepts_explicit_rows() {
        let file: NetworkFile = serde_json::from_str(
            r#"{"n": 2, "edges": [], "damping": [1.0, 2.0],
                "inertia_modes": [[0.5, 1.0]], "step_h": 0.01}"#,
        )
        .unwrap();
        let (net, _) = file.to_parts().unwrap();
        assert_eq!(net.inertia(1).unwrap().as_slice(), &[0.5, 1.0]);
    }

    #[test]
    fn embedded_default_network_parses() {
        let (net, h) = PowerNetwork::default_12bus();
        assert_eq!(net.node_count(), 12);
        assert_eq!(net.mode_count(), 10);
        assert_eq!(h, 0.01);
        // Mode 7 carries 3 s of inertia on every node.
        assert!(net.inertia(7).unwrap().iter().all(|&m| m == 3.0));
    }
}
