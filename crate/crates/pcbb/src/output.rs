//! CSV and gnuplot writers for metrics, traces, fleet snapshots and
//! progress lists.
//!
//! Each metric table is written twice: a CSV with a header row and a `.dat`
//! mirror with a `#` comment header and whitespace-separated columns.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use pcbb_core::channel::Outcome;
use pcbb_core::engine::{TraceRecord, TraceSink};
use pcbb_core::forwarder::ProgressList;
use pcbb_core::metrics::{CollisionReport, DelaySeries, ReceptionCurve, RunMetrics};
use pcbb_core::mobility::Fleet;

use crate::Error;

/// Column names plus rows of already-formatted cells.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn write_csv<W: Write>(&self, w: W) -> io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.header)?;
        for row in &self.rows {
            out.write_record(row)?;
        }
        out.flush()
    }

    pub fn write_dat<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# {}", self.header.join(" "))?;
        for row in &self.rows {
            writeln!(w, "{}", row.join(" "))?;
        }
        w.flush()
    }

    /// Writes `<dir>/<stem>.csv` and `<dir>/<stem>.dat`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<(), Error> {
        let csv_path = dir.join(format!("{stem}.csv"));
        let f = File::create(&csv_path).map_err(Error::io(&csv_path))?;
        self.write_csv(BufWriter::new(f)).map_err(Error::io(&csv_path))?;
        let dat_path = dir.join(format!("{stem}.dat"));
        let f = File::create(&dat_path).map_err(Error::io(&dat_path))?;
        self.write_dat(BufWriter::new(f)).map_err(Error::io(&dat_path))
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

pub fn reception_table(c: &ReceptionCurve) -> Table {
    Table {
        header: vec!["bin_lo", "bin_hi", "attempts", "received", "probability"],
        rows: c
            .bins
            .iter()
            .map(|b| {
                vec![
                    num(b.distance_lo),
                    num(b.distance_hi),
                    b.attempts.to_string(),
                    b.received.to_string(),
                    num(b.probability),
                ]
            })
            .collect(),
    }
}

pub fn delay_table(d: &DelaySeries) -> Table {
    Table {
        header: vec!["t_s", "mean_delay_us"],
        rows: d
            .samples
            .iter()
            .map(|s| vec![num(s.t.as_secs_f64()), num(s.mean_delay_us)])
            .collect(),
    }
}

pub fn delay_distance_table(d: &DelaySeries) -> Table {
    Table {
        header: vec!["dist_m", "mean_delay_us"],
        rows: d
            .by_distance
            .iter()
            .map(|s| vec![num(s.distance_hi), num(s.mean_delay_us)])
            .collect(),
    }
}

pub fn collision_table(c: &CollisionReport) -> Table {
    Table {
        header: vec!["t_s", "collided", "attempts", "ratio"],
        rows: c
            .samples
            .iter()
            .map(|s| {
                vec![
                    num(s.t.as_secs_f64()),
                    s.collided.to_string(),
                    s.attempts.to_string(),
                    num(s.ratio),
                ]
            })
            .collect(),
    }
}

/// reception, delay, delay_distance and collisions, each as `.csv` and `.dat`.
pub fn save_metrics(dir: &Path, m: &RunMetrics) -> Result<(), Error> {
    reception_table(&m.reception).save(dir, "reception")?;
    delay_table(&m.delay).save(dir, "delay")?;
    delay_distance_table(&m.delay).save(dir, "delay_distance")?;
    collision_table(&m.collisions).save(dir, "collisions")
}

pub fn fleet_table(fleet: &Fleet) -> Table {
    let t = fleet.time.as_us().to_string();
    Table {
        header: vec!["time_us", "vehicle_id", "x_m", "lane", "speed_mps"],
        rows: fleet
            .vehicles
            .iter()
            .map(|v| {
                vec![
                    t.clone(),
                    v.id.0.to_string(),
                    num(v.position.x),
                    v.position.lane.to_string(),
                    num(v.speed),
                ]
            })
            .collect(),
    }
}

pub fn progress_table(pl: &ProgressList) -> Table {
    Table {
        header: vec!["progress_m", "vehicle_count", "length_m", "fitness"],
        rows: pl
            .segments
            .iter()
            .map(|s| {
                vec![
                    num(s.progress),
                    s.vehicle_count.to_string(),
                    num(s.length),
                    num(s.fitness),
                ]
            })
            .collect(),
    }
}

fn outcome_str(o: Option<Outcome>) -> &'static str {
    match o {
        Some(Outcome::Received) => "received",
        Some(Outcome::Faded) => "faded",
        Some(Outcome::Collided) => "collided",
        None => "-",
    }
}

/// `time_us,event_kind,vehicle_id,msg_sender,msg_id,outcome,x_m`; beacon
/// frames have `-` for the message columns.
pub fn trace_line(r: &TraceRecord) -> String {
    let (sender, id) = match r.msg {
        Some(k) => (k.sender.0.to_string(), k.msg_id.to_string()),
        None => ("-".into(), "-".into()),
    };
    format!(
        "{},{},{},{},{},{},{:.3}",
        r.time.as_us(),
        r.kind.as_str(),
        r.vehicle.0,
        sender,
        id,
        outcome_str(r.outcome),
        r.x_m
    )
}

/// Streams trace lines to a writer. The first write error is kept and
/// later records are dropped.
pub struct TraceWriter<W: Write> {
    out: W,
    error: Option<io::Error>,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out, error: None }
    }

    pub fn finish(mut self) -> io::Result<W> {
        if let Some(e) = self.error {
            return Err(e);
        }
        self.out.flush()?;
        Ok(self.out)
    }
}

impl<W: Write> TraceSink for TraceWriter<W> {
    fn record(&mut self, rec: &TraceRecord) {
        if self.error.is_none() {
            if let Err(e) = writeln!(self.out, "{}", trace_line(rec)) {
                self.error = Some(e);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pcbb_core::engine::TraceKind;
    use pcbb_core::metrics::{CollisionSample, ReceptionBin};
    use pcbb_core::{MsgKey, SimTime, VehicleId};

    #[test]
    fn reception_csv_and_dat() {
        let c = ReceptionCurve {
            bins: vec![ReceptionBin {
                distance_lo: 0.0,
                distance_hi: 100.0,
                attempts: 4,
                received: 3,
                probability: 0.75,
            }],
        };
        let t = reception_table(&c);
        let mut csv = Vec::new();
        t.write_csv(&mut csv).unwrap();
        assert_eq!(
            String::from_utf8(csv).unwrap(),
            "bin_lo,bin_hi,attempts,received,probability\n0,100,4,3,0.75\n"
        );
        let mut dat = Vec::new();
        t.write_dat(&mut dat).unwrap();
        assert_eq!(
            String::from_utf8(dat).unwrap(),
            "# bin_lo bin_hi attempts received probability\n0 100 4 3 0.75\n"
        );
    }

    #[test]
    fn collision_rows_use_seconds() {
        let c = CollisionReport {
            samples: vec![CollisionSample {
                t: SimTime(2_000_000),
                collided: 1,
                attempts: 4,
                ratio: 0.25,
            }],
        };
        assert_eq!(collision_table(&c).rows, vec![vec!["2", "1", "4", "0.25"]]);
    }

    #[test]
    fn trace_lines() {
        let beacon = TraceRecord {
            time: SimTime(17),
            kind: TraceKind::TxStart,
            vehicle: VehicleId(3),
            msg: None,
            outcome: None,
            x_m: 12.5,
        };
        assert_eq!(trace_line(&beacon), "17,tx_start,3,-,-,-,12.500");
        let rx = TraceRecord {
            kind: TraceKind::Delivery,
            msg: Some(MsgKey {
                sender: VehicleId(9),
                msg_id: 4,
            }),
            outcome: Some(Outcome::Collided),
            ..beacon
        };
        assert_eq!(trace_line(&rx), "17,delivery,3,9,4,collided,12.500");

        let mut w = TraceWriter::new(Vec::new());
        w.record(&beacon);
        w.record(&rx);
        let text = String::from_utf8(w.finish().unwrap()).unwrap();
        assert_eq!(text.lines().count(), 2);
    }
}
