use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::thread;
use std::time::Duration;

use bcsimplex::certify::BarrierCertificate;
use bcsimplex::model::{builtin, DynSystem};
use bcsimplex::runtime::socket::{serve, ExternalController, ExternalOptions, Message};
use bcsimplex::runtime::{Controller, EventKind, Response, RuntimeError, SimOptions};
use bcsimplex::switchgen::{derive_artifact, DeriveOptions, SwitchingArtifact};

fn line() -> (DynSystem, SwitchingArtifact) {
    let sys = builtin("line", &[]).unwrap();
    let bc = BarrierCertificate::new(sys.state_poly("1 - x").unwrap(), 1.0, "").unwrap();
    let art = derive_artifact(&sys, &bc, &DeriveOptions { order: 1, ..DeriveOptions::default() }).unwrap().0;
    (sys, art)
}

/// Minimal client: handshakes, then answers the i-th state with
/// `policy(i, x)`, which returns a delay and the raw reply line (or `None`
/// to hang up).
fn client<F>(addr: std::net::SocketAddr, mut policy: F) -> thread::JoinHandle<Message>
where
    F: FnMut(usize, &[f64]) -> Option<(Duration, String)> + Send + 'static,
{
    thread::spawn(move || {
        let stream = TcpStream::connect(addr).unwrap();
        let mut w = stream.try_clone().unwrap();
        let mut lines = BufReader::new(stream).lines();
        let hello = Message::parse(&lines.next().unwrap().unwrap()).unwrap();
        w.write_all(Message::Ready.to_line().as_bytes()).unwrap();
        let mut i = 0;
        while let Some(Ok(l)) = lines.next() {
            let Message::State { x, .. } = Message::parse(&l).unwrap() else { panic!("expected state: {l}") };
            let Some((delay, reply)) = policy(i, &x) else { break };
            thread::sleep(delay);
            if w.write_all(reply.as_bytes()).is_err() {
                break;
            }
            i += 1;
        }
        hello
    })
}

fn action(u: f64) -> String {
    Message::Action { u: vec![u] }.to_line()
}

#[test]
fn constant_client_is_shielded() {
    let (sys, art) = line();
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let c = client(listener.local_addr().unwrap(), |_, _| Some((Duration::ZERO, action(1.0))));
    let sim = SimOptions { horizon: 3.0, ..SimOptions::default() };
    let ext = ExternalOptions { deadline: Some(Duration::from_secs(2)), ..ExternalOptions::default() };
    let rec = serve(&listener, &sys, &art, &[0.0], &sim, &ext).unwrap();
    let hello = c.join().unwrap();
    assert_eq!(hello, Message::Hello { states: vec!["x".into()], inputs: vec!["u".into()], eta: 0.1 });
    assert!(rec.violation.is_none() && rec.min_margin >= 0.0);
    assert!(rec.count(EventKind::Forward) >= 1);
    assert_eq!(rec.count(EventKind::Timeout), 0);
}

fn controller(listener: &TcpListener, sys: &DynSystem, deadline_ms: u64, fallback: bool) -> ExternalController {
    let (s, _) = listener.accept().unwrap();
    let opts = ExternalOptions { deadline: Some(Duration::from_millis(deadline_ms)), fallback_to_bc: fallback, ..ExternalOptions::default() };
    ExternalController::handshake(s, sys, &opts).unwrap()
}

#[test]
fn late_reply_times_out_and_is_drained() {
    let (sys, _) = line();
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let c = client(listener.local_addr().unwrap(), |i, _| {
        let delay = if i == 0 { Duration::from_millis(300) } else { Duration::ZERO };
        Some((delay, action(0.25 * (i + 1) as f64)))
    });
    let mut ext = controller(&listener, &sys, 100, false);
    assert_eq!(ext.act(0.0, &[0.0]).unwrap(), Response::Timeout);
    thread::sleep(Duration::from_millis(400));
    // the late answer to the first state must not be taken for the second
    assert_eq!(ext.act(0.1, &[0.0]).unwrap(), Response::Action { u: vec![0.5], clamped: false });
    assert_eq!((ext.timeouts, ext.stale), (1, 1));
    drop(ext);
    c.join().unwrap();
}

#[test]
fn timeout_engages_baseline() {
    let (sys, art) = line();
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let c = client(listener.local_addr().unwrap(), |i, _| {
        let delay = if i == 2 { Duration::from_millis(200) } else { Duration::ZERO };
        Some((delay, action(0.0)))
    });
    let sim = SimOptions { horizon: 1.0, ..SimOptions::default() };
    let ext = ExternalOptions { deadline: Some(Duration::from_millis(90)), ..ExternalOptions::default() };
    let rec = serve(&listener, &sys, &art, &[0.0], &sim, &ext).unwrap();
    c.join().unwrap();
    let t = rec.events.iter().find(|e| e.kind == EventKind::Timeout).unwrap();
    assert_eq!(t.step, 2);
    let f = rec.events.iter().find(|e| e.kind == EventKind::Forward).unwrap();
    assert_eq!(f.step, 2);
    assert_eq!(rec.rows[2].mode, bcsimplex::runtime::Mode::Bc);
}

#[test]
fn out_of_range_action_is_clamped() {
    let (sys, _) = line();
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let c = client(listener.local_addr().unwrap(), |_, _| Some((Duration::ZERO, action(5.0))));
    let mut ext = controller(&listener, &sys, 2000, false);
    assert_eq!(ext.act(0.0, &[0.0]).unwrap(), Response::Action { u: vec![1.0], clamped: true });
    drop(ext);
    c.join().unwrap();
}

#[test]
fn malformed_reply_is_an_error() {
    let (sys, _) = line();
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let c = client(listener.local_addr().unwrap(), |_, _| Some((Duration::ZERO, "{\"type\":\"action\",\"u\":\"fast\"}\n".into())));
    let mut ext = controller(&listener, &sys, 2000, false);
    assert!(matches!(ext.act(0.0, &[0.0]), Err(RuntimeError::Protocol(_))));
    drop(ext);
    c.join().unwrap();
}

#[test]
fn hang_up_with_and_without_fallback() {
    let (sys, _) = line();
    for fallback in [false, true] {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        // answers one state, then closes the connection
        let c = thread::spawn(move || {
            let stream = TcpStream::connect(addr).unwrap();
            let mut w = stream.try_clone().unwrap();
            let mut lines = BufReader::new(stream).lines();
            lines.next().unwrap().unwrap();
            w.write_all(Message::Ready.to_line().as_bytes()).unwrap();
            lines.next().unwrap().unwrap();
            w.write_all(action(0.1).as_bytes()).unwrap();
        });
        let mut ext = controller(&listener, &sys, 2000, fallback);
        assert_eq!(ext.act(0.0, &[0.0]).unwrap(), Response::Action { u: vec![0.1], clamped: false });
        c.join().unwrap();
        let r = ext.act(0.1, &[0.0]);
        if fallback {
            assert_eq!(r.unwrap(), Response::Timeout);
            assert_eq!(ext.act(0.2, &[0.0]).unwrap(), Response::Timeout);
        } else {
            assert!(matches!(r, Err(RuntimeError::ConnectionLost(_))), "{r:?}");
        }
    }
}

#[test]
fn handshake_requires_ready() {
    let (sys, _) = line();
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let t = thread::spawn(move || {
        let mut s = TcpStream::connect(addr).unwrap();
        s.write_all(action(0.0).as_bytes()).unwrap();
        thread::sleep(Duration::from_millis(200));
    });
    let (s, _) = listener.accept().unwrap();
    let r = ExternalController::handshake(s, &sys, &ExternalOptions::default());
    assert!(matches!(r, Err(RuntimeError::Protocol(_))));
    t.join().unwrap();
}
