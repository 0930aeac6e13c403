use std::fs::OpenOptions;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand::rngs::StdRng;
use tdguard_core::procedure::{Engine, EvidencePayload, HedgeChoice, MethodSpec, PTransform, ProcedureSpec};
use tdguard_core::evalue::GammaWeights;
use tdguard_session::{EventKind, ServiceError, SessionService};

fn random_spec(r: &mut StdRng) -> ProcedureSpec {
    let alpha = [0.05, 0.1, 0.2][r.random_range(0..3)];
    match r.random_range(0..5) {
        0 => ProcedureSpec::new(MethodSpec::SeqEGuard, alpha),
        1 => ProcedureSpec::new(MethodSpec::SeqEGuard, alpha).with_boosting(),
        2 => ProcedureSpec::new(MethodSpec::ExeGuard, alpha),
        3 => ProcedureSpec::new(MethodSpec::ArbeGuard { gamma: GammaWeights::InverseSquare }, alpha),
        _ => ProcedureSpec::new(MethodSpec::MOnlineSimple { a_max: 20 }, alpha),
    }
}

fn random_payload(r: &mut StdRng, spec: &ProcedureSpec) -> EvidencePayload {
    let p: f64 = r.random_range(1e-4..1.0);
    if matches!(spec.method, MethodSpec::MOnlineSimple { .. }) {
        return EvidencePayload::P { p, transform: PTransform::Level { alpha_i: spec.alpha } };
    }
    match r.random_range(0..4) {
        0 => EvidencePayload::E { value: r.random_range(0.0..8.0) },
        1 => EvidencePayload::P { p, transform: PTransform::OnlineSimple { alpha_i: spec.alpha, a: 1.0 } },
        2 => EvidencePayload::P { p, transform: PTransform::Calibrator { x: 0.1 } },
        _ => EvidencePayload::Gaussian {
            x: r.random_range(-1.0..5.0),
            mu0: 0.0,
            mu1: 3.0,
            hedge: Some(HedgeChoice::Adaptive),
        },
    }
}

/// Drives one session at random; leaves evidence pending half the time.
fn drive(svc: &SessionService, r: &mut StdRng) -> String {
    let spec = random_spec(r);
    let id = svc.create(spec.clone(), None).unwrap().id;
    let steps = r.random_range(0..25);
    for _ in 0..steps {
        svc.submit_evidence(&id, &random_payload(r, &spec)).unwrap();
        svc.decide(&id, r.random_bool(0.6)).unwrap();
        let t = svc.get(&id).unwrap().t;
        if t <= 20 && r.random_bool(0.2) && !matches!(spec.method, MethodSpec::MOnlineSimple { .. }) {
            let subset: Vec<usize> = (1..=t).filter(|_| r.random_bool(0.5)).collect();
            svc.what_if(&id, &subset).unwrap();
        }
    }
    if r.random_bool(0.5) {
        svc.submit_evidence(&id, &random_payload(r, &spec)).unwrap();
    }
    id
}

#[test]
fn restart_reproduces_every_session() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = StdRng::seed_from_u64(11);
    let svc = SessionService::open(dir.path()).unwrap();
    let ids: Vec<String> = (0..50).map(|_| drive(&svc, &mut r)).collect();
    let before: Vec<_> = ids.iter().map(|id| (svc.get(id).unwrap(), svc.trace(id, 0).unwrap())).collect();
    // Tear the tail of some logs as a crash mid-append would.
    for id in ids.iter().step_by(7) {
        let mut f = OpenOptions::new().append(true).open(svc.log_path(id).unwrap()).unwrap();
        f.write_all(br#"{"crc":12345,"event":{"seq":99,"#).unwrap();
    }
    drop(svc);

    let svc = SessionService::open(dir.path()).unwrap();
    assert!(svc.recovered_bytes() > 0);
    assert_eq!(svc.list().len(), 50);
    for (id, (summary, trace)) in ids.iter().zip(&before) {
        assert_eq!(&svc.get(id).unwrap(), summary);
        assert_eq!(&svc.trace(id, 0).unwrap(), trace);
    }
}

#[test]
fn replaying_returned_events_matches_server_state() {
    let dir = tempfile::tempdir().unwrap();
    let svc = SessionService::open(dir.path()).unwrap();
    let mut r = StdRng::seed_from_u64(5);
    for _ in 0..20 {
        let id = drive(&svc, &mut r);
        let events = svc.events(&id).unwrap();
        let EventKind::Created { spec, .. } = &events[0].kind else { panic!() };
        let mut eng = Engine::new(spec.clone()).unwrap();
        let mut pending = None;
        for ev in &events {
            match &ev.kind {
                EventKind::Evidence { payload, .. } => pending = Some(payload.clone()),
                EventKind::Decision { include, d, .. } => {
                    assert_eq!(eng.step(&pending.take().unwrap(), *include).unwrap().d, *d);
                }
                _ => {}
            }
        }
        let seqs: Vec<u64> = events.iter().map(|e| e.seq).collect();
        assert_eq!(seqs, (1..=events.len() as u64).collect::<Vec<_>>());
        let csv = svc.export_csv(&id).unwrap();
        assert_eq!(csv, eng.trace().to_csv_string(None));
    }
}

#[test]
fn what_if_leaves_state_hash_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let svc = SessionService::open(dir.path()).unwrap();
    let id = svc.create(ProcedureSpec::new(MethodSpec::SeqEGuard, 0.05), None).unwrap().id;
    let mut ds = Vec::new();
    for v in [5.0, 4.0, 0.8, 0.5, 14.0] {
        svc.submit_evidence(&id, &EvidencePayload::E { value: v }).unwrap();
        ds.push(svc.decide(&id, true).unwrap().d);
    }
    assert_eq!(ds, vec![0, 1, 1, 1, 2]);
    let h = svc.state_hash(&id).unwrap();
    let head = svc.trace(&id, 0).unwrap().head;
    assert_eq!(svc.what_if(&id, &[1, 2, 5]).unwrap().bound, 2);
    assert_eq!(svc.what_if(&id, &[]).unwrap().bound, 0);
    assert_eq!(svc.what_if(&id, &[1, 2, 3, 4, 5]).unwrap().bound, 2);
    assert_eq!(svc.state_hash(&id).unwrap(), h);
    assert_eq!(svc.trace(&id, 0).unwrap().head, head + 3);
    assert!(matches!(svc.what_if(&id, &[6]), Err(ServiceError::Invalid(_))));
}

#[test]
fn two_phase_protocol_is_enforced() {
    let dir = tempfile::tempdir().unwrap();
    let svc = SessionService::open(dir.path()).unwrap();
    let id = svc.create(ProcedureSpec::new(MethodSpec::SeqEGuard, 0.05).with_boosting(), None).unwrap().id;
    assert!(matches!(svc.decide(&id, true), Err(ServiceError::Conflict(_))));
    let view = svc.submit_evidence(&id, &EvidencePayload::E { value: 5.0 }).unwrap();
    assert_eq!(view.index, 1);
    assert!(matches!(svc.submit_evidence(&id, &EvidencePayload::E { value: 1.0 }), Err(ServiceError::Conflict(_))));
    svc.decide(&id, false).unwrap();
    // A Gaussian ratio previews the cutoff 1/alpha on a fresh query set.
    let id = svc.create(ProcedureSpec::new(MethodSpec::SeqEGuard, 0.05).with_boosting(), None).unwrap().id;
    let v = svc
        .submit_evidence(&id, &EvidencePayload::Gaussian { x: 3.0, mu0: 0.0, mu1: 3.0, hedge: None })
        .unwrap();
    assert!((v.boost_cutoff.unwrap().value() - 20.0).abs() < 1e-9);
    assert!(v.boost_factor.unwrap() > 1.0);
}

#[test]
fn online_simple_payload_matches_direct_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let svc = SessionService::open(dir.path()).unwrap();
    let id = svc.create(ProcedureSpec::new(MethodSpec::SeqEGuard, 0.1), None).unwrap().id;
    let v = svc
        .submit_evidence(&id, &EvidencePayload::P { p: 0.03, transform: PTransform::OnlineSimple { alpha_i: 0.1, a: 1.0 } })
        .unwrap();
    let l = 10f64.ln();
    let c = l / (1.0 + l).ln();
    let theta = l / c;
    assert!((v.log_e.ln() - theta * (1.0 - c * 0.1)).abs() < 1e-12, "{}", v.log_e.ln());
}

#[test]
fn request_tokens_make_creation_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ProcedureSpec::new(MethodSpec::ExeGuard, 0.1);
    let first = {
        let svc = SessionService::open(dir.path()).unwrap();
        let a = svc.create(spec.clone(), Some("tok-1".into())).unwrap();
        let b = svc.create(spec.clone(), Some("tok-1".into())).unwrap();
        assert!(a.created && !b.created);
        assert_eq!(a.id, b.id);
        a.id
    };
    let svc = SessionService::open(dir.path()).unwrap();
    assert_eq!(svc.create(spec, Some("tok-1".into())).unwrap().id, first);
    assert_eq!(svc.list().len(), 1);
    let bad = ProcedureSpec::new(MethodSpec::SeqEGuard, 0.0);
    assert!(matches!(svc.create(bad, None), Err(ServiceError::Invalid(_))));
}

#[test]
fn oracle_cap_and_paging() {
    let dir = tempfile::tempdir().unwrap();
    let svc = SessionService::open(dir.path()).unwrap();
    let id = svc.create(ProcedureSpec::new(MethodSpec::SeqEGuard, 0.1), None).unwrap().id;
    let fresh = svc.trace(&id, 0).unwrap();
    assert_eq!(fresh.events.len(), 1);
    assert_eq!(fresh.events[0].kind.name(), "created");
    assert!(svc.trace(&id, fresh.head).unwrap().events.is_empty());
    for _ in 0..600 {
        svc.submit_evidence(&id, &EvidencePayload::E { value: 0.9 }).unwrap();
        svc.decide(&id, true).unwrap();
    }
    assert!(matches!(svc.what_if(&id, &[1]), Err(ServiceError::OracleCap { cap: 20, t: 600 })));
    let p1 = svc.trace(&id, 0).unwrap();
    assert_eq!(p1.events.len(), 1000);
    let p2 = svc.trace(&id, p1.next_since).unwrap();
    assert_eq!(p2.events.len(), 201);
    assert_eq!(p2.next_since, p2.head);
}

#[test]
fn corrupt_interior_line_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let id = {
        let svc = SessionService::open(dir.path()).unwrap();
        let id = svc.create(ProcedureSpec::new(MethodSpec::SeqEGuard, 0.1), None).unwrap().id;
        svc.submit_evidence(&id, &EvidencePayload::E { value: 2.0 }).unwrap();
        svc.decide(&id, true).unwrap();
        id
    };
    let path = dir.path().join(format!("{id}.jsonl"));
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replacen("\"value\":2.0", "\"value\":3.0", 1)).unwrap();
    assert!(matches!(SessionService::open(dir.path()), Err(ServiceError::Corrupt(_))));
}
