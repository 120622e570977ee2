use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SweepResult;

pub const CSV_HEADER: &str =
    "size,path,data_copy_cycles,fork_join_cycles,compute_cycles,total_cycles,seconds,speedup_vs_host";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown format {other:?} (expected csv or json)")),
        }
    }
}

pub fn emit(results: &SweepResult, format: OutputFormat) -> Vec<u8> {
    match format {
        OutputFormat::Csv => emit_csv(results).into_bytes(),
        OutputFormat::Json => {
            let mut out = serde_json::to_vec_pretty(results).expect("sweep rows serialize");
            out.push(b'\n');
            out
        }
    }
}

fn emit_csv(results: &SweepResult) -> String {
    let mut out = String::with_capacity(64 * (results.rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &results.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.size,
            r.path,
            r.data_copy_cycles,
            r.fork_join_cycles,
            r.compute_cycles,
            r.total_cycles,
            r.seconds,
            r.speedup_vs_host
        )
        .expect("writing to a String");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::SweepRow;
    use crate::runtime::OffloadPath;

    fn host_row() -> SweepRow {
        SweepRow {
            size: 4,
            path: OffloadPath::HostOnly,
            data_copy_cycles: 0,
            fork_join_cycles: 0,
            compute_cycles: 512,
            total_cycles: 512,
            seconds: 512.0 / 50e6,
            speedup_vs_host: 1.0,
        }
    }

    #[test]
    fn empty_result_is_header_only() {
        let csv = emit(&SweepResult::default(), OutputFormat::Csv);
        assert_eq!(String::from_utf8(csv).unwrap(), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn host_row_csv() {
        let r = SweepResult { rows: vec![host_row()] };
        let csv = String::from_utf8(emit(&r, OutputFormat::Csv)).unwrap();
        let line = csv.lines().nth(1).unwrap();
        assert_eq!(line, "4,host,0,0,512,512,0.00001024,1");
        assert_eq!(line.rsplit(',').next().unwrap().parse::<f64>().unwrap(), 1.0);
    }

    #[test]
    fn json_round_trip() {
        let mut copy = host_row();
        copy.path = OffloadPath::ZeroCopy;
        copy.speedup_vs_host = 1.0 / 3.0;
        let r = SweepResult { rows: vec![host_row(), copy] };
        let json = emit(&r, OutputFormat::Json);
        let back: SweepResult = serde_json::from_slice(&json).unwrap();
        assert_eq!(back, r);
        let value: serde_json::Value = serde_json::from_slice(&json).unwrap();
        let keys: Vec<_> = value[0].as_object().unwrap().keys().cloned().collect();
        let mut expected: Vec<_> = CSV_HEADER.split(',').map(String::from).collect();
        expected.sort();
        let mut keys_sorted = keys;
        keys_sorted.sort();
        assert_eq!(keys_sorted, expected);
        assert_eq!(value[1]["path"], "zerocopy");
    }
}
