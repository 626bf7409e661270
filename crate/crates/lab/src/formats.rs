//! CSV and JSON-lines file formats.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use jobmarket_core::analysis::{
    AggregateStats, DifferenceMaps, EvaluationGrid, ExclusionReport, FitResult, PanelCell, TestReport,
};
use jobmarket_core::model::{GridBounds, JobId, Provenance, SessionId, SubjectId, WorkerId, WorkerProfile};
use jobmarket_core::payoff::{Cents, JobOutcome};
use jobmarket_core::pool::WorkerPool;
use jobmarket_core::session::{SessionEvent, StoredOutcome, SubjectPayoff};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize, Serializer};

/// Marks an empty matrix cell.
pub const NA: &str = "NA";

pub fn write_csv<T: Serialize, W: Write>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned, R: Read>(input: R) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for (i, rec) in r.deserialize().enumerate() {
        rows.push(rec.with_context(|| format!("record {}", i + 1))?);
    }
    Ok(rows)
}

pub fn save_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_csv(BufWriter::new(f), rows)
}

pub fn load_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_csv(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

/// Integral values are written without a fractional part.
fn compact_f64<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        s.serialize_i64(*v as i64)
    } else {
        s.serialize_f64(*v)
    }
}

// ---- pool ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolRow {
    pub worker_id: WorkerId,
    pub sent: u8,
    pub score: u8,
    pub provenance: Provenance,
}

pub fn pool_rows(pool: &WorkerPool) -> Vec<PoolRow> {
    pool.workers
        .iter()
        .map(|w| PoolRow {
            worker_id: w.worker_id.clone(),
            sent: w.sent,
            score: w.score,
            provenance: w.provenance,
        })
        .collect()
}

pub fn pool_from_rows(rows: Vec<PoolRow>) -> Result<WorkerPool> {
    let workers = rows
        .into_iter()
        .map(|r| WorkerProfile::new(r.worker_id, r.sent, r.score, r.provenance))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(WorkerPool::new(workers)?)
}

// ---- reports panel ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub manager_id: SubjectId,
    pub job: JobId,
    pub worker_id: WorkerId,
    pub worker_sent: u8,
    pub worker_score: u8,
    pub rank: u32,
    #[serde(serialize_with = "compact_f64")]
    pub value: f64,
    pub stem: bool,
    pub male: bool,
    pub age: u8,
    pub risk: u8,
    pub own_sent: u8,
    pub own_score: u8,
}

impl From<&PanelCell> for ReportRow {
    fn from(c: &PanelCell) -> Self {
        ReportRow {
            manager_id: c.manager_id.clone(),
            job: c.job,
            worker_id: c.worker_id.clone(),
            worker_sent: c.sent,
            worker_score: c.score,
            rank: c.rank,
            value: c.value,
            stem: c.stem,
            male: c.male,
            age: c.age,
            risk: c.risk,
            own_sent: c.own_sent,
            own_score: c.own_score,
        }
    }
}

impl From<ReportRow> for PanelCell {
    fn from(r: ReportRow) -> Self {
        PanelCell {
            manager_id: r.manager_id,
            job: r.job,
            worker_id: r.worker_id,
            sent: r.worker_sent,
            score: r.worker_score,
            rank: r.rank,
            value: r.value,
            stem: r.stem,
            male: r.male,
            age: r.age,
            risk: r.risk,
            own_sent: r.own_sent,
            own_score: r.own_score,
        }
    }
}

pub fn save_panel(path: &Path, panel: &[PanelCell]) -> Result<()> {
    let rows: Vec<ReportRow> = panel.iter().map(ReportRow::from).collect();
    save_csv(path, &rows)
}

pub fn load_panel(path: &Path) -> Result<Vec<PanelCell>> {
    Ok(load_csv::<ReportRow>(path)?.into_iter().map(PanelCell::from).collect())
}

// ---- job outcomes ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRow {
    pub worker_id: WorkerId,
    pub job: JobId,
    pub attempted: u8,
    pub correct: u8,
    pub worker_points: u32,
    pub manager_points: u32,
}

impl From<&StoredOutcome> for OutcomeRow {
    fn from(o: &StoredOutcome) -> Self {
        OutcomeRow {
            worker_id: o.worker_id.clone(),
            job: o.outcome.job_id,
            attempted: o.outcome.attempted,
            correct: o.outcome.correct,
            worker_points: o.outcome.worker_points,
            manager_points: o.outcome.manager_points,
        }
    }
}

impl From<OutcomeRow> for StoredOutcome {
    fn from(r: OutcomeRow) -> Self {
        StoredOutcome {
            worker_id: r.worker_id,
            outcome: JobOutcome {
                job_id: r.job,
                attempted: r.attempted,
                correct: r.correct,
                worker_points: r.worker_points,
                manager_points: r.manager_points,
            },
        }
    }
}

// ---- payoffs ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffRow {
    pub session_id: SessionId,
    pub subject_id: SubjectId,
    pub part1: u32,
    pub part2: u32,
    pub part3: u32,
    pub total: u32,
    pub cents: u64,
}

impl PayoffRow {
    pub fn new(session_id: &SessionId, subject_id: &SubjectId, p: &SubjectPayoff) -> Self {
        PayoffRow {
            session_id: session_id.clone(),
            subject_id: subject_id.clone(),
            part1: p.part1,
            part2: p.part2,
            part3: p.part3,
            total: p.total,
            cents: p.cents.0,
        }
    }

    pub fn payoff(&self) -> SubjectPayoff {
        SubjectPayoff {
            part1: self.part1,
            part2: self.part2,
            part3: self.part3,
            total: self.total,
            cents: Cents(self.cents),
        }
    }
}

/// Orders rows by session id, keeping roster order within a session, so
/// the file does not depend on the order sessions were run or replayed.
pub fn sort_payoffs(rows: &mut [PayoffRow]) {
    rows.sort_by(|a, b| a.session_id.cmp(&b.session_id));
}

// ---- analysis outputs ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentRow {
    pub manager_id: SubjectId,
    pub job: JobId,
    pub worker_id: WorkerId,
    pub latent: f64,
    pub value: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionRow {
    pub manager_id: SubjectId,
    pub kept: bool,
    pub code: Option<String>,
    pub detail: Option<String>,
}

pub fn exclusion_rows(report: &ExclusionReport) -> Vec<ExclusionRow> {
    use jobmarket_core::analysis::ExclusionReason;
    report
        .decisions
        .iter()
        .map(|d| ExclusionRow {
            manager_id: d.manager_id.clone(),
            kept: d.excluded.is_none(),
            code: d.excluded.map(|r| r.code().to_string()),
            detail: d.excluded.map(|r| match r {
                ExclusionReason::ConstantValue { value } => format!("value={value}"),
                ExclusionReason::Incomplete { cells, expected } => format!("cells={cells} expected={expected}"),
            }),
        })
        .collect()
}

/// Significance marks at the 10/5/1% levels.
pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.10 {
        "*"
    } else {
        ""
    }
}

/// One coefficient line of a fit table. Dropped terms have no estimate and
/// their drop reason in `status`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub job: String,
    pub spec: String,
    pub se_kind: String,
    pub term: String,
    pub estimate: Option<f64>,
    pub se: Option<f64>,
    pub t: Option<f64>,
    pub p: Option<f64>,
    pub stars: String,
    pub status: String,
}

fn job_label(job: Option<JobId>) -> String {
    job.map_or_else(|| "pooled".into(), |j| j.as_str().into())
}

fn se_label(fit: &FitResult) -> String {
    serde_json::to_value(fit.se_kind)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default()
}

pub fn fit_rows(fits: &[FitResult]) -> Vec<FitRow> {
    let mut rows = Vec::new();
    for f in fits {
        let (job, spec, se_kind) = (
            job_label(f.job),
            f.spec.map_or_else(|| "custom".into(), |s| s.to_string()),
            se_label(f),
        );
        for e in &f.estimates {
            rows.push(FitRow {
                job: job.clone(),
                spec: spec.clone(),
                se_kind: se_kind.clone(),
                term: e.term.name().into(),
                estimate: Some(e.estimate),
                se: Some(e.se),
                t: Some(e.t),
                p: Some(e.p),
                stars: stars(e.p).into(),
                status: "estimated".into(),
            });
        }
        for (term, reason) in &f.dropped {
            rows.push(FitRow {
                job: job.clone(),
                spec: spec.clone(),
                se_kind: se_kind.clone(),
                term: term.name().into(),
                estimate: None,
                se: None,
                t: None,
                p: None,
                stars: String::new(),
                status: serde_json::to_value(reason)
                    .ok()
                    .and_then(|v| v.as_str().map(String::from))
                    .unwrap_or_default(),
            });
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummaryRow {
    pub job: String,
    pub spec: String,
    pub se_kind: String,
    pub n: usize,
    pub managers: usize,
    pub df_resid: usize,
    pub df_test: usize,
    pub r2_within: f64,
    pub ssr: f64,
}

pub fn fit_summary_rows(fits: &[FitResult]) -> Vec<FitSummaryRow> {
    fits.iter()
        .map(|f| FitSummaryRow {
            job: job_label(f.job),
            spec: f.spec.map_or_else(|| "custom".into(), |s| s.to_string()),
            se_kind: se_label(f),
            n: f.n,
            managers: f.groups,
            df_resid: f.df_resid,
            df_test: f.df_test,
            r2_within: f.r2_within,
            ssr: f.ssr,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRow {
    pub name: String,
    pub estimate: Option<f64>,
    pub statistic: Option<f64>,
    pub df: Option<f64>,
    pub p: Option<f64>,
    pub stars: String,
}

pub fn test_rows(report: &TestReport) -> Vec<TestRow> {
    let mut rows: Vec<TestRow> = report
        .results
        .iter()
        .map(|r| TestRow {
            name: r.name.clone(),
            estimate: Some(r.estimate),
            statistic: Some(r.statistic),
            df: Some(r.df),
            p: Some(r.p),
            stars: stars(r.p).into(),
        })
        .collect();
    rows.extend(report.missing.iter().map(|m| TestRow {
        name: m.clone(),
        estimate: None,
        statistic: None,
        df: None,
        p: None,
        stars: String::new(),
    }));
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerSummaryRow {
    pub job: JobId,
    pub worker_id: WorkerId,
    pub sent: u8,
    pub score: u8,
    pub n: usize,
    pub mean: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub iqr: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub job: JobId,
    pub worker_id: WorkerId,
    pub bin_low: f64,
    pub bin_high: f64,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentCountRow {
    pub sent: u8,
    pub managers: u32,
}

pub fn worker_summary_rows(stats: &AggregateStats) -> Vec<WorkerSummaryRow> {
    stats
        .workers
        .iter()
        .map(|w| WorkerSummaryRow {
            job: w.job,
            worker_id: w.worker_id.clone(),
            sent: w.sent,
            score: w.score,
            n: w.n,
            mean: w.mean,
            q1: w.q1,
            median: w.median,
            q3: w.q3,
            iqr: w.iqr,
            min: w.min,
            max: w.max,
        })
        .collect()
}

pub fn histogram_rows(stats: &AggregateStats) -> Vec<HistogramRow> {
    use jobmarket_core::analysis::Histogram;
    stats
        .workers
        .iter()
        .flat_map(|w| {
            w.histogram.counts.iter().enumerate().map(move |(b, c)| HistogramRow {
                job: w.job,
                worker_id: w.worker_id.clone(),
                bin_low: Histogram::lower_edge(b),
                bin_high: Histogram::lower_edge(b + 1),
                count: *c,
            })
        })
        .collect()
}

pub fn sent_count_rows(stats: &AggregateStats) -> Vec<SentCountRow> {
    stats
        .sent_histogram
        .iter()
        .enumerate()
        .map(|(s, n)| SentCountRow {
            sent: s as u8,
            managers: *n,
        })
        .collect()
}

// ---- matrices ----

/// A labelled matrix, written as CSV with the column labels in the header
/// and the row label in the first field. Empty cells are written as `NA`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub corner: String,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub cells: Vec<Vec<Option<f64>>>,
}

impl Matrix {
    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![self.corner.clone()];
        header.extend(self.col_labels.iter().cloned());
        w.write_record(&header)?;
        for (label, row) in self.row_labels.iter().zip(&self.cells) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(|c| c.map_or_else(|| NA.to_string(), |v| v.to_string())));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(input: R) -> Result<Matrix> {
        let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
        let mut records = r.records();
        let header = records.next().ok_or_else(|| anyhow!("empty matrix file"))??;
        let mut fields = header.iter().map(String::from);
        let corner = fields.next().unwrap_or_default();
        let col_labels: Vec<String> = fields.collect();
        let (mut row_labels, mut cells) = (Vec::new(), Vec::new());
        for rec in records {
            let rec = rec?;
            if rec.len() != col_labels.len() + 1 {
                bail!("row has {} fields, expected {}", rec.len(), col_labels.len() + 1);
            }
            row_labels.push(rec[0].to_string());
            cells.push(
                rec.iter()
                    .skip(1)
                    .map(|f| if f == NA { Ok(None) } else { f.parse().map(Some) })
                    .collect::<Result<Vec<_>, _>>()?,
            );
        }
        Ok(Matrix {
            corner,
            row_labels,
            col_labels,
            cells,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        self.write(BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Matrix> {
        let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        Matrix::read(BufReader::new(f))
    }
}

fn labels(lo: u8, hi: u8) -> Vec<String> {
    (lo..=hi).map(|v| v.to_string()).collect()
}

const GRID_CORNER: &str = "sent\\score";

pub fn grid_matrix(grid: &EvaluationGrid) -> Matrix {
    let b = grid.bounds;
    Matrix {
        corner: GRID_CORNER.into(),
        row_labels: labels(b.sent.0, b.sent.1),
        col_labels: labels(b.score.0, b.score.1),
        cells: grid.values.clone(),
    }
}

pub fn grid_from_matrix(m: &Matrix) -> Result<EvaluationGrid> {
    let parse = |ls: &[String]| -> Result<(u8, u8)> {
        let first = ls.first().ok_or_else(|| anyhow!("no labels"))?.parse()?;
        let last = ls.last().ok_or_else(|| anyhow!("no labels"))?.parse()?;
        Ok((first, last))
    };
    Ok(EvaluationGrid {
        bounds: GridBounds {
            sent: parse(&m.row_labels)?,
            score: parse(&m.col_labels)?,
        },
        values: m.cells.clone(),
    })
}

/// The three difference maps with cells labelled by the lower corner
/// `(x, y)` they start from.
pub fn difference_matrices(bounds: GridBounds, d: &DifferenceMaps) -> [(&'static str, Matrix); 3] {
    let (sx, sy) = (bounds.sent, bounds.score);
    let m = |rows: (u8, u8), cols: (u8, u8), cells: &Vec<Vec<Option<f64>>>| Matrix {
        corner: GRID_CORNER.into(),
        row_labels: labels(rows.0, rows.1),
        col_labels: labels(cols.0, cols.1),
        cells: cells.clone(),
    };
    [
        ("sent_diff", m((sx.0, sx.1 - 1), sy, &d.sent_diff)),
        ("score_diff", m(sx, (sy.0, sy.1 - 1), &d.score_diff)),
        ("double_diff", m((sx.0, sx.1 - 1), (sy.0, sy.1 - 1), &d.double_diff)),
    ]
}

/// Rank distribution as a matrix: one row per worker, column `r` counts
/// managers who placed the worker at rank `r`.
pub fn rank_matrix(rows: &[jobmarket_core::analysis::RankRow]) -> Matrix {
    let n = rows.iter().map(|r| r.counts.len()).max().unwrap_or(0);
    Matrix {
        corner: "worker_id\\rank".into(),
        row_labels: rows.iter().map(|r| r.worker_id.to_string()).collect(),
        col_labels: (1..=n).map(|r| r.to_string()).collect(),
        cells: rows
            .iter()
            .map(|r| r.counts.iter().map(|c| Some(f64::from(*c))).collect())
            .collect(),
    }
}

// ---- event logs ----

pub fn write_events<W: Write>(mut out: W, events: &[SessionEvent]) -> Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a JSON-lines event log. With `lenient`, an unparsable final line
/// without a terminating newline is taken to be a torn write and dropped.
pub fn read_events<R: Read>(input: R, lenient: bool) -> Result<Vec<SessionEvent>> {
    let mut reader = BufReader::new(input);
    let mut events = Vec::new();
    let mut line = String::new();
    let mut n = 0;
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        n += 1;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        match serde_json::from_str(text) {
            Ok(e) => events.push(e),
            Err(_) if lenient && !line.ends_with('\n') => break,
            Err(e) => return Err(anyhow!("line {n}: {e}")),
        }
    }
    Ok(events)
}

pub fn save_events(path: &Path, events: &[SessionEvent]) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_events(BufWriter::new(f), events)
}

pub fn load_events(path: &Path) -> Result<Vec<SessionEvent>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_events(f, false).with_context(|| format!("reading {}", path.display()))
}

/// Appends events to an open log and flushes them to the OS.
pub fn append_events(file: &mut File, events: &[SessionEvent]) -> io::Result<()> {
    let mut buf = Vec::new();
    for e in events {
        serde_json::to_writer(&mut buf, e).map_err(io::Error::other)?;
        buf.push(b'\n');
    }
    file.write_all(&buf)?;
    file.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compact_values() {
        let row = LatentRow {
            manager_id: "M01".into(),
            job: JobId::C,
            worker_id: "W01".into(),
            latent: 68.44,
            value: 68,
        };
        let mut buf = Vec::new();
        write_csv(&mut buf, std::slice::from_ref(&row)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, "manager_id,job,worker_id,latent,value\nM01,C,W01,68.44,68\n");
        assert_eq!(read_csv::<LatentRow, _>(&buf[..]).unwrap(), vec![row]);
    }

    #[test]
    fn matrix_with_gaps() {
        let m = Matrix {
            corner: "sent\\score".into(),
            row_labels: vec!["0".into(), "1".into()],
            col_labels: vec!["4".into(), "5".into()],
            cells: vec![vec![Some(1.5), None], vec![None, Some(-0.25)]],
        };
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "sent\\score,4,5\n0,1.5,NA\n1,NA,-0.25\n");
        assert_eq!(Matrix::read(&buf[..]).unwrap(), m);
    }

    #[test]
    fn stars_levels() {
        assert_eq!(stars(0.005), "***");
        assert_eq!(stars(0.03), "**");
        assert_eq!(stars(0.07), "*");
        assert_eq!(stars(0.5), "");
    }
}
