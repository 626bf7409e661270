use jobmarket_core::agents::{lab_worker_policies, simulate_worker_session};
use jobmarket_core::model::{JobId, Questionnaire, SessionConfig, SessionId, SubjectId, WorkerId};
use jobmarket_core::pool::{build_worker_pool, PoolOptions, RawWorkerResult};
use jobmarket_core::session::{
    recover, replay, Action, EventPayload, ManagerSetup, Part1Role, Phase, Session, SessionError, SessionRole,
    SessionSetup, TaskRef,
};
use proptest::prelude::*;

fn ids(prefix: &str, n: usize) -> Vec<SubjectId> {
    (1..=n).map(|i| SubjectId(format!("{prefix}{i:02}"))).collect()
}

fn worker_setup(n: usize, seed: u64) -> SessionSetup {
    SessionSetup {
        session_id: SessionId::from("w"),
        role: SessionRole::WorkerSession,
        roster: ids("S", n),
        config: SessionConfig::with_seed(seed),
        manager: None,
    }
}

fn manager_setup(n: usize, seed: u64) -> SessionSetup {
    let run = simulate_worker_session(SessionId::from("workers"), &lab_worker_policies(), SessionConfig::with_seed(1))
        .unwrap();
    let raw: Vec<RawWorkerResult> = run
        .results
        .iter()
        .map(|r| RawWorkerResult::new(r.subject_id.as_str(), r.sent, r.score))
        .collect();
    let pool = build_worker_pool(&raw, &PoolOptions::lab_reference()).unwrap();
    SessionSetup {
        session_id: SessionId::from("m"),
        role: SessionRole::ManagerSession,
        roster: ids("M", n),
        config: SessionConfig::with_seed(seed),
        manager: Some(ManagerSetup {
            pool,
            outcomes: run.stored_outcomes(),
        }),
    }
}

fn q() -> Questionnaire {
    Questionnaire {
        stem: true,
        male: false,
        age: 22,
        risk: 4,
    }
}

/// Drives every subject through Parts 1 and 2 and the quiz at time `t`.
fn through_quiz(s: &mut Session, sends: &[u8], t: &mut u64) {
    let roster = s.roster().to_vec();
    for (id, &x) in roster.iter().zip(sends) {
        *t += 100;
        s.apply(id, Action::Send { tokens: x }, *t).unwrap();
    }
    for id in &roster {
        *t += 100;
        s.apply(id, Action::Proceed, *t).unwrap();
    }
    for id in &roster {
        let view = s.view(id).unwrap();
        let task = view.tasks.iter().find(|t| t.task == TaskRef::Math).unwrap().clone();
        for (i, (a, b)) in task.problems.iter().enumerate() {
            *t += 100;
            let value = if i < 7 { i64::from(*a) + i64::from(*b) } else { 0 };
            s.apply(id, Action::Answer { task: TaskRef::Math, index: i as u8, value }, *t).unwrap();
        }
        assert_eq!(s.phase(id), Some(Phase::QuizJobs));
    }
    let answers: Vec<i64> = s.quiz().iter().map(|q| q.answer).collect();
    for id in &roster {
        *t += 100;
        s.apply(id, Action::SubmitQuiz { answers: answers.clone() }, *t).unwrap();
    }
}

#[test]
fn worker_session_end_to_end() {
    let mut s = Session::open(worker_setup(4, 11), 0).unwrap();
    let mut t = 0;
    through_quiz(&mut s, &[10, 0, 3, 7], &mut t);
    let roster = s.roster().to_vec();
    for id in &roster {
        for _ in 0..2 {
            let job = match s.phase(id).unwrap() {
                Phase::Job(j) => j,
                p => panic!("unexpected {p}"),
            };
            t += 100;
            s.apply(id, Action::ChooseAttempts { job, attempted: 0 }, t).unwrap();
        }
        assert_eq!(s.phase(id), Some(Phase::Questionnaire));
        t += 100;
        s.apply(id, Action::SubmitQuestionnaire { questionnaire: q() }, t).unwrap();
    }
    assert!(s.is_finished());
    for (id, pay) in s.payoffs() {
        let view = s.view(&id).unwrap();
        let part1 = view.part1.result.unwrap();
        assert_eq!(pay.part1, part1.points);
        assert_eq!(pay.part2, 70);
        // skipping everything: 150 in C, 0 in NC
        assert!(pay.part3 == 150 || pay.part3 == 0);
        assert_eq!(pay.total, pay.part1 + pay.part2 + pay.part3);
        assert_eq!(pay.cents.0, u64::from(pay.total) * 8);
    }
    // pairs pay 100 points in total
    let total_part1: u32 = s.payoffs().iter().map(|(_, p)| p.part1).sum();
    assert_eq!(total_part1, 200);
    replay(s.events()).unwrap();
}

#[test]
fn odd_roster_holds_one_subject() {
    let mut s = Session::open(worker_setup(3, 5), 0).unwrap();
    let mut t = 0;
    through_quiz(&mut s, &[4, 4, 4], &mut t);
    let held: Vec<_> = s
        .roster()
        .iter()
        .filter(|id| s.view(id).unwrap().part1.result.unwrap().role == Part1Role::Held)
        .cloned()
        .collect();
    assert_eq!(held.len(), 1);
    assert!(s.events().iter().any(|e| matches!(e.payload, EventPayload::SubjectHeld)));
    assert!(matches!(s.phase(&held[0]), Some(Phase::Job(_))));
}

#[test]
fn timed_task_deadline_and_late_answers() {
    let mut s = Session::open(worker_setup(2, 3), 0).unwrap();
    let a = SubjectId::from("S01");
    let b = SubjectId::from("S02");
    s.apply(&a, Action::Send { tokens: 1 }, 10).unwrap();
    s.apply(&b, Action::Send { tokens: 2 }, 10).unwrap();
    s.apply(&a, Action::Proceed, 20).unwrap();
    s.apply(&b, Action::Proceed, 1_000).unwrap();
    let view = s.view(&a).unwrap();
    let task = &view.tasks[0];
    assert_eq!(task.deadline_ms, 61_000);
    let (x, y) = task.problems[0];
    s.apply(&a, Action::Answer { task: TaskRef::Math, index: 0, value: i64::from(x) + i64::from(y) }, 60_999)
        .unwrap();
    // at the deadline the answer is late and not scored
    let (x, y) = task.problems[1];
    let ev = s
        .apply(&a, Action::Answer { task: TaskRef::Math, index: 1, value: i64::from(x) + i64::from(y) }, 61_000)
        .unwrap();
    assert!(matches!(ev[0].payload, EventPayload::Action { late: true, .. }));
    let ev = s.tick(61_000);
    assert_eq!(ev.iter().filter(|e| matches!(e.payload, EventPayload::Deadline { .. })).count(), 2);
    assert_eq!(s.phase(&a), Some(Phase::QuizJobs));
    let closed: Vec<u8> = ev
        .iter()
        .filter_map(|e| match &e.payload {
            EventPayload::TaskClosed { correct, .. } if e.subject_id.as_ref() == Some(&a) => Some(*correct),
            _ => None,
        })
        .collect();
    assert_eq!(closed, vec![1]);
    replay(s.events()).unwrap();
}

#[test]
fn job_time_budget_is_six_seconds_per_attempt() {
    let mut s = Session::open(worker_setup(2, 8), 0).unwrap();
    let mut t = 0;
    through_quiz(&mut s, &[5, 5], &mut t);
    let id = SubjectId::from("S01");
    let job = match s.phase(&id).unwrap() {
        Phase::Job(j) => j,
        p => panic!("{p}"),
    };
    s.apply(&id, Action::ChooseAttempts { job, attempted: 5 }, t).unwrap();
    let view = s.view(&id).unwrap();
    let task = view.tasks.iter().find(|x| x.task == TaskRef::Job(job)).unwrap();
    assert_eq!(task.deadline_ms - t, 30_000);
    assert_eq!(task.problems.len(), 5);
    let err = s.apply(&id, Action::ChooseAttempts { job, attempted: 5 }, t).unwrap_err();
    assert_eq!(err.code(), "phase_violation");
}

#[test]
fn wrong_quiz_answers_must_be_fixed() {
    let mut s = Session::open(worker_setup(2, 2), 0).unwrap();
    let a = SubjectId::from("S01");
    for id in s.roster().to_vec() {
        s.apply(&id, Action::Send { tokens: 5 }, 1).unwrap();
    }
    for id in s.roster().to_vec() {
        s.apply(&id, Action::Proceed, 2).unwrap();
    }
    s.tick(70_000);
    let mut answers: Vec<i64> = s.quiz().iter().map(|q| q.answer).collect();
    answers[1] += 1;
    s.apply(&a, Action::SubmitQuiz { answers: answers.clone() }, 70_001).unwrap();
    assert_eq!(s.view(&a).unwrap().quiz_wrong, Some(vec![1]));
    assert_eq!(s.phase(&a), Some(Phase::QuizJobs));
    answers[1] -= 1;
    s.apply(&a, Action::SubmitQuiz { answers }, 70_002).unwrap();
    assert!(matches!(s.phase(&a), Some(Phase::Job(_))));
}

#[test]
fn manager_table_rules() {
    let mut s = Session::open(manager_setup(2, 4), 0).unwrap();
    let mut t = 0;
    through_quiz(&mut s, &[6, 2], &mut t);
    let id = SubjectId::from("M01");
    let job = match s.phase(&id).unwrap() {
        Phase::RankValue(j) => j,
        p => panic!("{p}"),
    };
    let table = s.view(&id).unwrap().table.unwrap();
    assert_eq!(table.rows.len(), 2);
    assert_eq!(table.remaining, 18);
    let first = table.rows[0].worker_id.clone();
    let err = s
        .apply(&id, Action::EnterValue { job, worker: first.clone(), value: 50 }, t)
        .unwrap_err();
    assert!(err.to_string().starts_with("phase violation"), "{err}");
    let before = s.events().len();
    assert!(s.apply(&id, Action::SubmitJob { job }, t).is_err());
    assert_eq!(s.events().len(), before);
    for _ in 0..18 {
        s.apply(&id, Action::AddWorker { job }, t).unwrap();
    }
    let rows = s.view(&id).unwrap().table.unwrap().rows;
    let last = rows[19].worker_id.clone();
    s.apply(&id, Action::MoveWorker { job, worker: last.clone(), position: 0 }, t).unwrap();
    assert_eq!(s.view(&id).unwrap().table.unwrap().rows[0].worker_id, last);
    let err = s
        .apply(&id, Action::EnterValue { job, worker: last.clone(), value: 101 }, t)
        .unwrap_err();
    assert_eq!(err.code(), "invalid_action");
    s.apply(&id, Action::EnterValue { job, worker: last.clone(), value: 90 }, t).unwrap();
    let err = s.apply(&id, Action::MoveWorker { job, worker: last, position: 3 }, t).unwrap_err();
    assert_eq!(err.code(), "phase_violation");
    match s.apply(&id, Action::SubmitJob { job }, t).unwrap_err() {
        SessionError::MissingValues { missing, .. } => assert_eq!(missing.len(), 19),
        e => panic!("{e}"),
    }
    let rows = s.view(&id).unwrap().table.unwrap().rows;
    for (i, r) in rows.iter().enumerate().skip(1) {
        s.apply(&id, Action::EnterValue { job, worker: r.worker_id.clone(), value: 80 - i as i64 }, t)
            .unwrap();
    }
    s.apply(&id, Action::SubmitJob { job }, t).unwrap();
    assert!(matches!(s.phase(&id), Some(Phase::RankValue(j)) if j != job));
}

#[test]
fn manager_payment_uses_bdm() {
    let mut s = Session::open(manager_setup(1, 21), 0).unwrap();
    let mut t = 0;
    through_quiz(&mut s, &[3], &mut t);
    let id = SubjectId::from("M01");
    for _ in 0..2 {
        let job = match s.phase(&id).unwrap() {
            Phase::RankValue(j) => j,
            p => panic!("{p}"),
        };
        for _ in 0..18 {
            s.apply(&id, Action::AddWorker { job }, t).unwrap();
        }
        for r in s.view(&id).unwrap().table.unwrap().rows {
            s.apply(&id, Action::EnterValue { job, worker: r.worker_id, value: 55 }, t).unwrap();
        }
        s.apply(&id, Action::SubmitJob { job }, t).unwrap();
    }
    s.apply(&id, Action::SubmitQuestionnaire { questionnaire: q() }, t).unwrap();
    assert_eq!(s.phase(&id), Some(Phase::Paid));
    let bdm = s
        .events()
        .iter()
        .find_map(|e| match &e.payload {
            EventPayload::BdmResolved { reported, alpha, realized, points, preferred, job } => {
                Some((*reported, *alpha, *realized, *points, preferred.clone(), *job))
            }
            _ => None,
        })
        .unwrap();
    let (reported, alpha, realized, points, preferred, job) = bdm;
    assert_eq!(reported, 55);
    assert_eq!(points, if alpha < reported { realized } else { alpha });
    // equal values force a logged coin flip between two human finalists
    assert!(s.events().iter().any(|e| matches!(e.payload, EventPayload::FinalistTie { .. })));
    let setup = s.setup().manager.clone().unwrap();
    assert!(setup.pool.get(&preferred).unwrap().is_human());
    assert_eq!(setup.manager_points(&preferred, job), Some(realized));
    let pay = s.payoffs()[0].1;
    assert_eq!(pay.part3, points);
    assert_eq!(s.reports().len(), 40);
    replay(s.events()).unwrap();
}

#[test]
fn setup_checks() {
    let mut bad = worker_setup(2, 0);
    bad.roster[1] = bad.roster[0].clone();
    assert_eq!(Session::open(bad, 0).err().map(|e| e.code()), Some("setup"));
    let mut bad = manager_setup(1, 0);
    bad.manager.as_mut().unwrap().outcomes.retain(|o| o.worker_id != WorkerId::from("W01"));
    assert!(Session::open(bad, 0).is_err());
    let mut bad = manager_setup(1, 0);
    bad.manager = None;
    assert!(Session::open(bad, 0).is_err());
    let s = Session::open(worker_setup(1, 0), 0);
    assert!(s.is_ok());
    let mut s = s.unwrap();
    assert_eq!(
        s.apply(&SubjectId::from("nobody"), Action::Proceed, 1).unwrap_err().code(),
        "unknown_subject"
    );
    assert!(s.apply(&SubjectId::from("S01"), Action::Send { tokens: 11 }, 1).is_err());
}

#[test]
fn views_only_change_with_own_or_shared_events() {
    let mut s = Session::open(worker_setup(2, 9), 0).unwrap();
    let (a, b) = (SubjectId::from("S01"), SubjectId::from("S02"));
    s.apply(&a, Action::Send { tokens: 3 }, 1).unwrap();
    s.apply(&b, Action::Send { tokens: 8 }, 1).unwrap();
    s.apply(&a, Action::Proceed, 2).unwrap();
    s.apply(&b, Action::Proceed, 2).unwrap();
    let before = s.view(&a).unwrap();
    let task = s.view(&b).unwrap().tasks[0].clone();
    for i in 0..5u8 {
        s.apply(&b, Action::Answer { task: TaskRef::Math, index: i, value: 1 }, 3).unwrap();
    }
    assert_eq!(s.view(&a).unwrap(), before);
    assert_eq!(before.tasks.len(), 1);
    assert_ne!(before.tasks[0].problems, task.problems);
    assert_eq!(before.part1.sent, Some(3));
}

#[test]
fn prefix_recovery_regenerates_the_log() {
    let mut s = Session::open(worker_setup(4, 17), 0).unwrap();
    let mut t = 0;
    through_quiz(&mut s, &[1, 2, 3, 4], &mut t);
    let full = s.events().to_vec();
    for cut in 1..full.len() {
        let r = recover(&full[..cut]).unwrap();
        let n = r.events().len();
        assert!(n >= cut);
        // effects of the last logged input may be regenerated, nothing else
        assert_eq!(r.events(), &full[..n]);
        assert!(full[cut..n].iter().all(|e| !matches!(e.payload, EventPayload::Action { .. })));
    }
}

fn arb_action() -> impl Strategy<Value = Action> {
    let job = prop_oneof![Just(JobId::C), Just(JobId::NC)];
    prop_oneof![
        (0u8..12).prop_map(|tokens| Action::Send { tokens }),
        Just(Action::Proceed),
        (0u8..11, -5i64..200).prop_map(|(index, value)| Action::Answer { task: TaskRef::Math, index, value }),
        proptest::collection::vec(0i64..60, 5..7).prop_map(|answers| Action::SubmitQuiz { answers }),
        (job.clone(), 0u8..12).prop_map(|(job, attempted)| Action::ChooseAttempts { job, attempted }),
        job.clone().prop_map(|job| Action::SubmitJob { job }),
        job.prop_map(|job| Action::AddWorker { job }),
        Just(Action::SubmitQuestionnaire { questionnaire: Questionnaire { stem: false, male: true, age: 30, risk: 3 } }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rejected_actions_leave_no_trace(script in proptest::collection::vec((0usize..3, arb_action(), 0u64..3_000), 1..120)) {
        let mut s = Session::open(worker_setup(3, 42), 0).unwrap();
        let roster = s.roster().to_vec();
        let mut now = 0;
        for (who, action, dt) in script {
            now += dt;
            let before = s.events().len();
            let views: Vec<_> = roster.iter().map(|id| s.view(id).unwrap()).collect();
            match s.apply(&roster[who], action, now) {
                Ok(new) => {
                    prop_assert!(!new.is_empty());
                    prop_assert_eq!(s.events().len(), before + new.len());
                }
                Err(_) => {
                    prop_assert_eq!(s.events().len(), before);
                    for (id, v) in roster.iter().zip(&views) {
                        prop_assert_eq!(&s.view(id).unwrap(), v);
                    }
                }
            }
            s.tick(now);
        }
        // seq numbers are dense and timestamps monotone
        for (i, e) in s.events().iter().enumerate() {
            prop_assert_eq!(e.seq, i as u64);
        }
        prop_assert!(s.events().windows(2).all(|w| w[0].ts <= w[1].ts));
        let again = replay(s.events()).unwrap();
        prop_assert_eq!(again.events(), s.events());
    }
}
