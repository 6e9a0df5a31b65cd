use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::time::Duration;

use crate::evaluator::{serve_tcp, EvalError, Evaluator, ExternalEvaluator, SurrogateConfig, SurrogateEvaluator};
use crate::geometry::{CircuitDesign, CompoundAction, GeometryConfig};
use crate::policy::substream;
use crate::trainer::uniform_action;

fn designs(count: usize) -> Vec<CircuitDesign> {
    let geo = GeometryConfig::default();
    (0..count)
        .map(|i| {
            let a = uniform_action(3, &mut substream(11, i as u64));
            geo.map(&CompoundAction::from_flat(3, &a).unwrap()).unwrap()
        })
        .collect()
}

/// Runs `handler` on each line of a single accepted connection; its return
/// value (if any) is written back as one line.
fn scripted_server(handler: impl Fn(usize, &str) -> Option<String> + Send + 'static) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut w = stream.try_clone().unwrap();
        for (k, line) in BufReader::new(stream).lines().enumerate() {
            let Ok(line) = line else { break };
            if let Some(reply) = handler(k, &line) {
                if writeln!(w, "{reply}").is_err() {
                    break;
                }
            }
        }
    });
    format!("tcp:{addr}")
}

fn id_of(line: &str) -> u64 {
    serde_json::from_str::<serde_json::Value>(line).unwrap()["id"].as_u64().unwrap()
}

#[test]
fn tcp_loopback_matches_builtin_bit_for_bit() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let cfg = SurrogateConfig::default();
    let server_cfg = cfg.clone();
    std::thread::spawn(move || serve_tcp(listener, server_cfg));

    let ds = designs(20);
    let freqs = cfg.grid();
    let local = SurrogateEvaluator::new(cfg).evaluate_batch(&ds, &freqs);
    let mut ext = ExternalEvaluator::new(format!("tcp:{addr}").parse().unwrap());
    ext.max_in_flight = 3;
    ext.connect().unwrap();
    for _ in 0..2 {
        let remote = ext.evaluate_batch(&ds, &freqs);
        assert_eq!(remote.len(), local.len());
        for (r, l) in remote.iter().zip(&local) {
            assert_eq!(r.as_ref().unwrap(), l.as_ref().unwrap());
        }
    }
}

#[test]
fn out_of_order_responses_are_matched_by_id() {
    // Buffers two requests, then answers them in reverse order.
    let pending = std::sync::Mutex::new(Vec::<String>::new());
    let cfg = SurrogateConfig::default();
    let ep = scripted_server(move |_, line| {
        let mut p = pending.lock().unwrap();
        p.push(line.to_string());
        if p.len() < 2 {
            return None;
        }
        let mut out = Vec::new();
        for l in p.drain(..).rev() {
            let mut sink = Vec::new();
            crate::evaluator::serve_lines(l.as_bytes(), &mut sink, &cfg).unwrap();
            out.push(String::from_utf8(sink).unwrap().trim().to_string());
        }
        Some(out.join("\n"))
    });
    let ds = designs(4);
    let freqs = SurrogateConfig::default().grid();
    let local = SurrogateEvaluator::default().evaluate_batch(&ds, &freqs);
    let mut ext = ExternalEvaluator::new(ep.parse().unwrap());
    ext.max_in_flight = 2;
    let remote = ext.evaluate_batch(&ds, &freqs);
    for (r, l) in remote.iter().zip(&local) {
        assert_eq!(r.as_ref().unwrap(), l.as_ref().unwrap());
    }
}

#[test]
fn malformed_responses_fail_only_their_design() {
    let m = SurrogateConfig::default().m;
    let ep = scripted_server(move |k, line| {
        let id = id_of(line);
        let ok = format!("[{}]", vec!["[0.5,0.0]"; m].join(","));
        Some(match k {
            0 => "this is not json".to_string(),
            1 => format!("{{\"id\":{id},\"s21\":[[1.0,0.0]]}}"),
            2 => format!("{{\"id\":{id},\"error\":\"mesh failed\"}}"),
            3 => format!("{{\"id\":{id},\"s21\":\"nope\"}}"),
            _ => format!("{{\"id\":{id},\"s21\":{ok}}}"),
        })
    });
    let ds = designs(5);
    let freqs = SurrogateConfig::default().grid();
    let mut ext = ExternalEvaluator::new(ep.parse().unwrap());
    ext.max_in_flight = 1;
    let r = ext.evaluate_batch(&ds, &freqs);
    assert!(matches!(r[0], Err(EvalError::Decode { index: 0, .. })), "{:?}", r[0]);
    assert!(matches!(r[1], Err(EvalError::GridMismatch { index: 1, found: 1, .. })), "{:?}", r[1]);
    assert!(matches!(&r[2], Err(EvalError::Remote { index: 2, msg }) if msg == "mesh failed"), "{:?}", r[2]);
    assert!(matches!(r[3], Err(EvalError::Validation { index: 3, .. })), "{:?}", r[3]);
    let tf = r[4].as_ref().unwrap();
    assert_eq!(tf.s21.len(), m);
}

#[test]
fn silent_server_times_out() {
    let ep = scripted_server(|_, _| None);
    let mut ext = ExternalEvaluator::new(ep.parse().unwrap());
    ext.timeout = Duration::from_millis(200);
    let r = ext.evaluate_batch(&designs(2), &SurrogateConfig::default().grid());
    assert!(r.iter().all(|x| matches!(x, Err(EvalError::Timeout { .. }))), "{r:?}");
}

#[test]
fn exec_endpoint_that_exits_reports_transport_error() {
    let ext = ExternalEvaluator::new("exec:exit 0".parse().unwrap());
    let r = ext.evaluate_batch(&designs(2), &SurrogateConfig::default().grid());
    assert!(r.iter().all(|x| matches!(x, Err(EvalError::Transport(_)))), "{r:?}");
}

#[test]
fn unreachable_tcp_endpoint_fails_connect() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let ext = ExternalEvaluator::new(format!("tcp:{addr}").parse().unwrap());
    assert!(matches!(ext.connect(), Err(EvalError::Transport(_))));
}
