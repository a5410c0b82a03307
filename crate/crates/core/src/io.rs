//! Plain-text import and export. Every number is written with 17
//! significant digits, so CSV files read back bit-identically.

use std::io::{Read, Write};

use thiserror::Error;

use crate::estimate::{Experiment, PosteriorGrid};
use crate::ident::{CramerRao, GramReport};
use crate::lti::SampledFunction;
use crate::signals::InputSignal;
use crate::sim::Trajectory;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

fn format_err(line: usize, message: impl Into<String>) -> IoError {
    IoError::Format { line, message: message.into() }
}

/// Shortest decimal form is not guaranteed to be 17 digits; this is.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

fn read_table<R: Read>(r: R, expected: Option<&[&str]>) -> Result<(Vec<String>, Vec<Vec<f64>>), IoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if let Some(exp) = expected {
        if header != exp {
            return Err(format_err(1, format!("expected header `{}`, found `{}`", exp.join(","), header.join(","))));
        }
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != header.len() {
            return Err(format_err(line, format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| format_err(line, format!("`{f}` is not a number"))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

/// Columns `t,u,y,x_<state>...`.
pub fn write_trajectory<W: Write>(traj: &Trajectory, w: W) -> Result<(), IoError> {
    let mut wr = writer(w);
    let mut header = vec!["t".to_string(), "u".to_string(), "y".to_string()];
    header.extend(traj.state_names.iter().map(|n| format!("x_{n}")));
    wr.write_record(&header)?;
    for i in 0..traj.len() {
        let mut row = vec![fmt_f64(traj.times[i]), fmt_f64(traj.inputs[i]), fmt_f64(traj.outputs[i])];
        row.extend(traj.states[i].iter().map(|&v| fmt_f64(v)));
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_trajectory<R: Read>(r: R) -> Result<Trajectory, IoError> {
    let (header, rows) = read_table(r, None)?;
    if header.len() < 3 || header[..3] != ["t", "u", "y"] {
        return Err(format_err(1, "trajectory header must start with `t,u,y`"));
    }
    let state_names = header[3..]
        .iter()
        .map(|h| h.strip_prefix("x_").map(str::to_string).ok_or_else(|| format_err(1, format!("bad state column `{h}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Trajectory {
        state_names,
        times: rows.iter().map(|r| r[0]).collect(),
        inputs: rows.iter().map(|r| r[1]).collect(),
        outputs: rows.iter().map(|r| r[2]).collect(),
        states: rows.iter().map(|r| r[3..].to_vec()).collect(),
    })
}

/// Columns `t,value`.
pub fn write_sampled<W: Write>(f: &SampledFunction, w: W) -> Result<(), IoError> {
    let mut wr = writer(w);
    wr.write_record(["t", "value"])?;
    for (t, v) in f.times().zip(f.values()) {
        wr.write_record([fmt_f64(t), fmt_f64(*v)])?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads `t,value`, rejecting grids that are not uniform to `1e-9 h`.
pub fn read_sampled<R: Read>(r: R) -> Result<SampledFunction, IoError> {
    let (_, rows) = read_table(r, Some(&["t", "value"]))?;
    let times: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    SampledFunction::from_samples(&times, rows.iter().map(|r| r[1]).collect()).map_err(|e| format_err(0, e.to_string()))
}

/// Columns `t,observation`.
pub fn write_experiment<W: Write>(e: &Experiment, w: W) -> Result<(), IoError> {
    let mut wr = writer(w);
    wr.write_record(["t", "observation"])?;
    for (t, y) in e.sample_times.iter().zip(&e.observations) {
        wr.write_record([fmt_f64(*t), fmt_f64(*y)])?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads `t,observation`; the signal and noise level are not stored in the file.
pub fn read_experiment<R: Read>(r: R, signal: InputSignal, sigma: f64) -> Result<Experiment, IoError> {
    let (_, rows) = read_table(r, Some(&["t", "observation"]))?;
    Experiment::new(signal, rows.iter().map(|r| r[0]).collect(), rows.iter().map(|r| r[1]).collect(), sigma)
        .map_err(|e| format_err(0, e.to_string()))
}

/// One row per cell: parameter values, then `probability`.
pub fn write_posterior<W: Write>(p: &PosteriorGrid, w: W) -> Result<(), IoError> {
    let mut wr = writer(w);
    let mut header = p.names.clone();
    header.push("probability".into());
    wr.write_record(&header)?;
    for (k, prob) in p.probabilities().into_iter().enumerate() {
        let mut row: Vec<String> = p.cell_values(k).into_iter().map(fmt_f64).collect();
        row.push(fmt_f64(prob));
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

/// Posterior table as written by [`write_posterior`].
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorTable {
    pub names: Vec<String>,
    pub cells: Vec<Vec<f64>>,
    pub probabilities: Vec<f64>,
}

pub fn read_posterior<R: Read>(r: R) -> Result<PosteriorTable, IoError> {
    let (header, rows) = read_table(r, None)?;
    if header.last().map(String::as_str) != Some("probability") || header.len() < 2 {
        return Err(format_err(1, "posterior header must end with `probability`"));
    }
    let p = header.len() - 1;
    Ok(PosteriorTable {
        names: header[..p].to_vec(),
        cells: rows.iter().map(|r| r[..p].to_vec()).collect(),
        probabilities: rows.iter().map(|r| r[p]).collect(),
    })
}

/// Human-readable identifiability report: eigenvalue table, null directions
/// and, when given, Cramér–Rao bounds.
pub fn write_identifiability_report<W: Write>(gram: &GramReport, crb: Option<&CramerRao>, mut w: W) -> Result<(), IoError> {
    writeln!(w, "# gram matrix: rank {} of {} (threshold {})", gram.rank, gram.param_names.len(), fmt_f64(gram.threshold))?;
    writeln!(w, "# eigenvalues")?;
    writeln!(w, "index,eigenvalue,{}", gram.param_names.join(","))?;
    for (k, l) in gram.eigenvalues.iter().enumerate() {
        let v: Vec<String> = gram.eigenvectors.column(k).iter().map(|&x| fmt_f64(x)).collect();
        writeln!(w, "{k},{},{}", fmt_f64(*l), v.join(","))?;
    }
    writeln!(w, "# null directions")?;
    writeln!(w, "{}", gram.param_names.join(","))?;
    for v in &gram.null_directions {
        let v: Vec<String> = v.iter().map(|&x| fmt_f64(x)).collect();
        writeln!(w, "{}", v.join(","))?;
    }
    if let Some(c) = crb {
        writeln!(w, "# cramer-rao bounds (sigma = {}, fisher rank {})", fmt_f64(c.sigma), c.fim.rank)?;
        writeln!(w, "parameter,variance_bound")?;
        for (n, b) in c.fim.param_names.iter().zip(&c.crb) {
            writeln!(w, "{n},{}", fmt_f64(*b))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{integrate, SolverConfig};
    use crate::systems::get_registry_model;

    #[test]
    fn trajectory_round_trip_is_exact() {
        let entry = get_registry_model("lambda-system").unwrap();
        let traj = integrate(
            &entry.system,
            &entry.default_params,
            &InputSignal::pulse(1.0, 0.0, 1.0).unwrap(),
            (0.0, 2.0),
            &SolverConfig::with_step(0.01),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_trajectory(&traj, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,u,y,x_x,x_z\n"));
        assert_eq!(read_trajectory(buf.as_slice()).unwrap(), traj);
    }

    #[test]
    fn sampled_round_trip_and_uniformity() {
        let f = SampledFunction::from_fn(0.0, 0.1, 30, |t| (3.0 * t).sin() / 7.0).unwrap();
        let mut buf = Vec::new();
        write_sampled(&f, &mut buf).unwrap();
        assert_eq!(read_sampled(buf.as_slice()).unwrap(), f);
        let skewed = "t,value\n0,1\n0.1,2\n0.25,3\n";
        assert!(matches!(read_sampled(skewed.as_bytes()), Err(IoError::Format { .. })));
        assert!(matches!(read_sampled("t,v\n0,1\n".as_bytes()), Err(IoError::Format { line: 1, .. })));
        assert!(matches!(read_sampled("t,value\n0,1\n0.1,x\n".as_bytes()), Err(IoError::Format { line: 3, .. })));
    }

    #[test]
    fn experiment_and_posterior_round_trip() {
        let e = Experiment::new(InputSignal::step(1.0).unwrap(), vec![0.1, 0.7], vec![1.0 / 3.0, 2.0f64.sqrt()], 0.1).unwrap();
        let mut buf = Vec::new();
        write_experiment(&e, &mut buf).unwrap();
        assert_eq!(read_experiment(buf.as_slice(), e.signal.clone(), 0.1).unwrap(), e);

        let g = PosteriorGrid::uniform(&["a", "b"], vec![vec![0.1, 0.2], vec![1.0, 2.0, 3.0]]).unwrap();
        let mut buf = Vec::new();
        write_posterior(&g, &mut buf).unwrap();
        let t = read_posterior(buf.as_slice()).unwrap();
        assert_eq!(t.names, vec!["a", "b"]);
        assert_eq!(t.cells[5], vec![0.2, 3.0]);
        assert_eq!(t.probabilities, g.probabilities());
    }

    #[test]
    fn special_values_survive() {
        for v in [0.1, -0.0, 1e-300, f64::MAX, f64::MIN_POSITIVE, 5e-324, f64::INFINITY] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }
}
