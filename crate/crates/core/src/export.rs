//! File formats: metrics CSV/JSONL, decision logs, Graphviz DOT.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::metrics::{MetricsRow, MetricsSample, MetricsSeries, RunMeta, CSV_HEADER};
use crate::psn::{NodeKind, Psn};
use crate::slice::{Endpoint, Nspr};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("unexpected CSV header: {0}")]
    Header(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("i/o: {0}")]
    Stream(#[from] io::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExportError + '_ {
    move |source| ExportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn create_file(path: &Path) -> Result<BufWriter<File>, ExportError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

pub fn open_file(path: &Path) -> Result<BufReader<File>, ExportError> {
    File::open(path).map(BufReader::new).map_err(io_err(path))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_csv<W: Write>(series: &MetricsSeries, out: W) -> Result<(), ExportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in series.rows() {
        let mut rec = vec![
            row.t.to_string(),
            row.arrivals.to_string(),
            row.accepts.to_string(),
            row.rejects.to_string(),
            opt(row.acceptance_ratio),
        ];
        rec.extend(row.util.iter().map(|v| opt(*v)));
        rec.push(row.decision_us.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<MetricsRow>, ExportError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(ExportError::Header(header.join(",")));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let bad = |message: String| ExportError::Parse { line, message };
        let int = |k: usize| -> Result<u64, ExportError> {
            rec[k]
                .parse()
                .map_err(|e| bad(format!("{}: {e}", CSV_HEADER[k])))
        };
        let float = |k: usize| -> Result<Option<f64>, ExportError> {
            if rec[k].is_empty() {
                return Ok(None);
            }
            rec[k]
                .parse()
                .map(Some)
                .map_err(|e| bad(format!("{}: {e}", CSV_HEADER[k])))
        };
        let mut util = [None; 12];
        for (j, slot) in util.iter_mut().enumerate() {
            *slot = float(5 + j)?;
        }
        rows.push(MetricsRow {
            t: int(0)?,
            arrivals: int(1)?,
            accepts: int(2)?,
            rejects: int(3)?,
            acceptance_ratio: float(4)?,
            util,
            decision_us: int(17)?,
        });
    }
    Ok(rows)
}

pub fn export_csv(series: &MetricsSeries, path: &Path) -> Result<(), ExportError> {
    write_csv(series, create_file(path)?)
}

pub fn parse_csv(path: &Path) -> Result<Vec<MetricsRow>, ExportError> {
    read_csv(open_file(path)?)
}

/// One JSON value per line.
pub fn write_jsonl<T: Serialize, W: Write>(items: &[T], out: W) -> Result<(), ExportError> {
    let mut out = BufWriter::new(out);
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(input: R) -> Result<Vec<T>, ExportError> {
    let mut items = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(serde_json::from_str(&line).map_err(|e| ExportError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(items)
}

/// Series as JSONL: the run metadata on the first line, then one sample per
/// line with exact ratios.
pub fn write_series_jsonl<W: Write>(series: &MetricsSeries, mut out: W) -> Result<(), ExportError> {
    serde_json::to_writer(&mut out, &series.meta)?;
    out.write_all(b"\n")?;
    write_jsonl(&series.samples, out)
}

pub fn read_series_jsonl<R: BufRead>(mut input: R) -> Result<MetricsSeries, ExportError> {
    let mut first = String::new();
    input
        .read_line(&mut first)
        ?;
    let meta: RunMeta = serde_json::from_str(&first).map_err(|e| ExportError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let samples: Vec<MetricsSample> = read_jsonl(input)?;
    Ok(MetricsSeries { meta, samples })
}

pub fn export_jsonl(series: &MetricsSeries, path: &Path) -> Result<(), ExportError> {
    write_series_jsonl(series, create_file(path)?)
}

pub fn parse_jsonl(path: &Path) -> Result<MetricsSeries, ExportError> {
    read_series_jsonl(open_file(path)?)
}

pub fn write_json_file<T: Serialize>(value: &T, path: &Path) -> Result<(), ExportError> {
    let mut out = create_file(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n").map_err(io_err(path))?;
    out.flush().map_err(io_err(path))
}

/// Undirected substrate graph. Servers are boxes labelled `id cpu/ram`,
/// switches ellipses; edges carry `bw,latency`.
pub fn psn_dot(psn: &Psn) -> String {
    let mut s = String::from("graph psn {\n");
    for i in 0..psn.node_count() {
        let id = crate::psn::NodeId(i as u32);
        match psn.kind(id) {
            Some(NodeKind::Server(_)) => {
                let srv = psn.server(id).expect("server");
                let _ = writeln!(
                    s,
                    "  {i} [shape=box,label=\"{id} {}/{}\"];",
                    srv.cpu_cap, srv.ram_cap
                );
            }
            _ => {
                let _ = writeln!(s, "  {i} [shape=ellipse,label=\"{id}\"];");
            }
        }
    }
    for l in psn.links() {
        let _ = writeln!(
            s,
            "  {} -- {} [label=\"{},{}\"];",
            l.a.0, l.b.0, l.bw_cap, l.latency
        );
    }
    s.push_str("}\n");
    s
}

/// Directed request chain from its access node through every VNF.
pub fn nspr_dot(nspr: &Nspr) -> String {
    let mut s = format!("digraph nspr_{} {{\n", nspr.id.0);
    let _ = writeln!(
        s,
        "  access [shape=diamond,label=\"access {}\"];",
        nspr.access_node
    );
    for v in &nspr.vnfs {
        let _ = writeln!(
            s,
            "  v{} [shape=box,label=\"v{} {}/{}\"];",
            v.index, v.index, v.cpu_req, v.ram_req
        );
    }
    for vl in &nspr.vlinks {
        let name = |e: Endpoint| match e {
            Endpoint::Access => "access".to_string(),
            Endpoint::Vnf(i) => format!("v{i}"),
        };
        let _ = writeln!(
            s,
            "  {} -> {} [label=\"{},{}\"];",
            name(vl.src),
            name(vl.dst),
            vl.bw_req,
            vl.lat_req
        );
    }
    s.push_str("}\n");
    s
}
