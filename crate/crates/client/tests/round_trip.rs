use angel_client::{Client, ClientError};
use angel_core::devils::Landing;
use angel_core::play::{make_devil, run_match, MatchConfig};
use angel_core::session::{CreateRequest, DevilTurnRequest, SessionError};
use angel_core::trace::{verify_trace, Trace, TraceLine};
use angel_core::{solve_params, CellCoord, Rat};

async fn start() -> Client {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(angel_service::serve(listener));
    Client::new(format!("http://{addr}"))
}

#[tokio::test(flavor = "multi_thread")]
async fn scripted_session_reproduces_the_harness_trace() {
    let client = start().await;
    let cfg = MatchConfig { params: solve_params(Rat::new(3, 4), 12).unwrap(), toy: false, depth: 1, seed: 11, horizon: 50 };
    let mut devil = make_devil("wall", 11).unwrap();
    let (trace, _) = run_match(&cfg, devil.as_mut()).unwrap();

    let req = CreateRequest { seed: 11, horizon: 50, label: devil.name(), ..Default::default() };
    let id = client.create_session(&req).await.unwrap().id;
    let mut t0 = 0;
    for l in &trace.lines {
        if let TraceLine::Devil { t, p, delta, j, .. } = l {
            let turn = DevilTurnRequest { deposits: delta.clone(), dt: t - t0, landing: Some(Landing { p: *p, j: *j }) };
            client.devil_turn(id, &turn).await.unwrap();
            t0 = *t;
        }
    }
    let exported = client.export_trace(id).await.unwrap();
    assert_eq!(exported, trace.to_text());
    assert!(verify_trace(&Trace::parse(&exported).unwrap(), None).unwrap().is_clean());
    let closed = client.close_session(id).await.unwrap();
    assert!(closed.status.report.unwrap().survived);
    assert!(matches!(client.export_trace(id).await, Err(ClientError::Protocol(SessionError::UnknownSession(_)))));
}

#[tokio::test(flavor = "multi_thread")]
async fn over_budget_turn_is_a_protocol_error() {
    let client = start().await;
    let c = client.create_session(&CreateRequest::default()).await.unwrap();
    let dt = c.view.status.max_dt.unwrap();
    let amount = c.view.status.sigma * Rat::from(dt as i64 + 1);
    let turn = DevilTurnRequest { deposits: vec![(CellCoord::new(2, 2), amount)], dt, landing: None };
    let e = client.devil_turn(c.id, &turn).await.unwrap_err();
    assert!(matches!(e, ClientError::Protocol(SessionError::Rejected(_))), "{e}");
    let v = client.get_view(c.id, None).await.unwrap();
    assert_eq!((v.status.units, v.status.total_mass), (0, Rat::ZERO));
}
