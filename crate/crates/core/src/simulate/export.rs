use std::io::Write;

use super::Trajectory;

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// `t,x1..xn,mode` with the mode coded `+1`, `-1`, `0`.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=traj.dim).map(|i| format!("x{i}")));
    header.push("mode".into());
    w.write_record(&header)?;
    for s in &traj.samples {
        let mut row = vec![fmt_f64(s.t)];
        row.extend(s.x.iter().map(|v| fmt_f64(*v)));
        row.push(format!("{:+}", s.mode.code()).replace("+0", "0"));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `t,kind,x1..xn` at each event.
pub fn write_events_csv<W: Write>(traj: &Trajectory, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string(), "kind".to_string()];
    header.extend((1..=traj.dim).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for e in &traj.events {
        let mut row = vec![fmt_f64(e.t), e.kind.as_str().to_string()];
        row.extend(e.x.iter().map(|v| fmt_f64(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
