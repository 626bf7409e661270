use jobmarket_core::agents::{lab_worker_policies, simulate_worker_session};
use jobmarket_core::analysis::{difference_maps, fit_with_bandwidths, predict_grid, PanelCell};
use jobmarket_core::model::{GridBounds, JobId, Provenance, SessionConfig, SessionId};
use jobmarket_core::pool::{build_worker_pool, lab_worker_results, PoolOptions};
use jobmarket_lab::formats::{
    self, grid_from_matrix, grid_matrix, read_csv, read_events, write_csv, write_events, Matrix, OutcomeRow,
    PayoffRow, PoolRow, ReportRow,
};
use proptest::prelude::*;

fn job() -> impl Strategy<Value = JobId> {
    prop_oneof![Just(JobId::C), Just(JobId::NC)]
}

fn value() -> impl Strategy<Value = f64> {
    prop_oneof![(0u32..=100).prop_map(f64::from), -1e6f64..1e6]
}

prop_compose! {
    fn panel_cell()(
        m in "[A-Za-z0-9_-]{1,8}", job in job(), w in "[A-Za-z0-9]{1,6}",
        sent in 0u8..=10, score in 0u8..=10, rank in 1u32..=20, value in value(),
        stem in any::<bool>(), male in any::<bool>(), age in 18u8..=80, risk in 0u8..=10,
        own_sent in 0u8..=10, own_score in 0u8..=10,
    ) -> PanelCell {
        PanelCell {
            manager_id: m.into(), job, worker_id: w.into(), sent, score, rank, value,
            stem, male, age, risk, own_sent, own_score,
        }
    }
}

fn round_trip<T>(rows: &[T]) -> Vec<T>
where
    T: serde::Serialize + serde::de::DeserializeOwned,
{
    let mut buf = Vec::new();
    write_csv(&mut buf, rows).unwrap();
    read_csv(&buf[..]).unwrap()
}

proptest! {
    #[test]
    fn report_rows_round_trip(cells in proptest::collection::vec(panel_cell(), 0..30)) {
        let rows: Vec<ReportRow> = cells.iter().map(ReportRow::from).collect();
        let back: Vec<PanelCell> = round_trip(&rows).into_iter().map(PanelCell::from).collect();
        prop_assert_eq!(back, cells);
    }

    #[test]
    fn pool_rows_round_trip(rows in proptest::collection::vec(
        ("[A-Z][0-9]{2}", 0u8..=10, 0u8..=10, any::<bool>()).prop_map(|(id, sent, score, h)| PoolRow {
            worker_id: id.into(), sent, score,
            provenance: if h { Provenance::Human } else { Provenance::Synthetic },
        }), 0..25)) {
        prop_assert_eq!(round_trip(&rows), rows);
    }

    #[test]
    fn outcome_and_payoff_rows_round_trip(
        a in 0u8..=10, c in 0u8..=10, w in any::<u32>(), m in any::<u32>(),
        parts in (any::<u32>(), any::<u32>(), any::<u32>(), any::<u32>(), any::<u64>()),
    ) {
        let o = vec![OutcomeRow { worker_id: "W01".into(), job: JobId::NC, attempted: a, correct: c, worker_points: w, manager_points: m }];
        prop_assert_eq!(round_trip(&o), o);
        let p = vec![PayoffRow { session_id: "s".into(), subject_id: "x,y".into(), part1: parts.0, part2: parts.1, part3: parts.2, total: parts.3, cents: parts.4 }];
        prop_assert_eq!(round_trip(&p), p);
    }

    #[test]
    fn matrices_round_trip(cells in proptest::collection::vec(
        proptest::collection::vec(proptest::option::of(any::<f64>().prop_filter("finite", |v| v.is_finite())), 6), 1..12)) {
        let m = Matrix {
            corner: "sent\\score".into(),
            row_labels: (0..cells.len()).map(|i| i.to_string()).collect(),
            col_labels: (4..10).map(|i: u8| i.to_string()).collect(),
            cells,
        };
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        prop_assert_eq!(Matrix::read(&buf[..]).unwrap(), m);
    }
}

#[test]
fn grid_files_keep_shape_and_gaps() {
    let obs = vec![(0, 4, 10.0), (3, 6, 50.0), (10, 10, 90.0)];
    let model = fit_with_bandwidths(&obs, 0.0, 0.0).unwrap();
    let grid = predict_grid(&model, GridBounds::default());
    let m = grid_matrix(&grid);
    assert_eq!((m.row_labels.len(), m.col_labels.len()), (11, 7));
    let mut buf = Vec::new();
    m.write(&mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("sent\\score,4,5,6,7,8,9,10\n0,10,NA,"));
    let back = grid_from_matrix(&Matrix::read(&buf[..]).unwrap()).unwrap();
    assert_eq!(back, grid);

    let d = difference_maps(&grid);
    let [(n1, sent), (n2, score), (n3, double)] = formats::difference_matrices(grid.bounds, &d);
    assert_eq!((n1, n2, n3), ("sent_diff", "score_diff", "double_diff"));
    assert_eq!((sent.row_labels.len(), sent.col_labels.len()), (10, 7));
    assert_eq!((score.row_labels.len(), score.col_labels.len()), (11, 6));
    assert_eq!((double.row_labels.len(), double.col_labels.len()), (10, 6));
    assert_eq!(double.row_labels.last().unwrap(), "9");
    assert_eq!(double.col_labels.last().unwrap(), "9");
}

#[test]
fn pool_file_rebuilds_pool() {
    let pool = build_worker_pool(&lab_worker_results(), &PoolOptions::lab_reference()).unwrap();
    let rows = formats::pool_rows(&pool);
    let mut buf = Vec::new();
    write_csv(&mut buf, &rows).unwrap();
    assert!(String::from_utf8(buf.clone()).unwrap().starts_with("worker_id,sent,score,provenance\nW01,0,4,human\n"));
    let back = formats::pool_from_rows(read_csv(&buf[..]).unwrap()).unwrap();
    assert_eq!(back, pool);
}

#[test]
fn event_log_round_trips_and_tolerates_a_torn_tail() {
    let run = simulate_worker_session(SessionId::from("w"), &lab_worker_policies(), SessionConfig::with_seed(4)).unwrap();
    let mut buf = Vec::new();
    write_events(&mut buf, &run.log).unwrap();
    assert_eq!(buf.iter().filter(|b| **b == b'\n').count(), run.log.len());
    let first: serde_json::Value = serde_json::from_slice(buf.split(|b| *b == b'\n').next().unwrap()).unwrap();
    for field in ["seq", "ts", "session_id", "subject_id", "kind", "payload"] {
        assert!(first.get(field).is_some(), "missing {field}");
    }
    assert_eq!(read_events(&buf[..], false).unwrap(), run.log);

    let mut torn = buf.clone();
    torn.extend_from_slice(b"{\"seq\": 99");
    assert!(read_events(&torn[..], false).is_err());
    assert_eq!(read_events(&torn[..], true).unwrap(), run.log);

    // a bad line in the middle is an error even when lenient
    let mut bad = b"garbage\n".to_vec();
    bad.extend_from_slice(&buf);
    assert!(read_events(&bad[..], true).is_err());
}
