//! End-to-end protocol tests over loopback TCP: real sockets, real
//! threads, synthetic executors.

use std::net::TcpStream;

use janus_core::ModelSpec;
use janus_runtime::{
    schedule_from_wire, CloudConfig, CloudModel, ConfigPayload, DeviceAgent, ExecutorParams,
    MsgType, RunningServer, WireMessage,
};

fn tiny_model() -> CloudModel {
    CloudModel {
        spec: ModelSpec::toy("tiny", 4, 16),
        slope_ms_per_token: 0.002,
        intercept_ms: 0.02,
    }
}

fn device_params() -> ExecutorParams {
    ExecutorParams::new(0.005, 0.03)
}

fn spawn_server(models: Vec<CloudModel>) -> RunningServer {
    RunningServer::spawn("127.0.0.1:0", CloudConfig::new(models)).expect("spawn cloud")
}

#[test]
fn split_session_runs_frames_end_to_end() {
    let server = spawn_server(vec![tiny_model()]);
    let spec = tiny_model().spec;
    let mut device =
        DeviceAgent::connect(server.addr(), spec.clone(), &device_params(), false, 11).unwrap();

    device.configure(2, 250).unwrap();
    let reports = device.run_frames(3).unwrap();
    assert_eq!(reports.len(), 3);

    // alpha = 0.25 on a 4-layer, 16-token toy prunes one token per layer:
    // 15, 14, 13, 12 survive, so split 2 ships 14 tokens x 4 bytes.
    let schedule = schedule_from_wire(&spec, 250).unwrap();
    assert_eq!(schedule.tokens_after, vec![15, 14, 13, 12]);
    for (i, report) in reports.iter().enumerate() {
        assert_eq!(report.frame, i as u64);
        assert_eq!(report.payload_raw_bytes, 14 * 4);
        assert_eq!(report.payload_wire_bytes, 14 * 4);
        assert_eq!(report.device_samples.len(), 2);
        assert_eq!(report.cloud_samples.len(), 2);
        let device_tokens: Vec<u32> = report.device_samples.iter().map(|&(t, _)| t).collect();
        let cloud_tokens: Vec<u32> = report.cloud_samples.iter().map(|&(t, _)| t).collect();
        assert_eq!(device_tokens, vec![15, 14]);
        assert_eq!(cloud_tokens, vec![13, 12]);
        // The cloud's reported time is exactly the sum of its samples.
        let sample_sum: f64 = report.cloud_samples.iter().map(|&(_, ms)| ms).sum();
        assert!((report.cloud_ms - sample_sum).abs() < 1e-9);
        assert!(report.device_ms > 0.0 && report.cloud_ms > 0.0 && report.comm_ms >= 0.0);
        assert!(report.e2e_ms >= report.device_ms);
        assert!(report.result.is_empty(), "toy spec declares no result bytes");
    }

    drop(device);
    server.stop().unwrap();
}

#[test]
fn cloud_only_and_device_only_plans_use_the_wire_accordingly() {
    let server = spawn_server(vec![tiny_model()]);
    let spec = tiny_model().spec;
    let mut device =
        DeviceAgent::connect(server.addr(), spec, &device_params(), false, 5).unwrap();

    device.configure(0, 0).unwrap();
    let report = device.run_frame().unwrap();
    assert_eq!(report.payload_raw_bytes, 16 * 4);
    assert_eq!(report.device_samples.len(), 0);
    assert_eq!(report.device_ms, 0.0);
    assert_eq!(report.cloud_samples.len(), 4);
    assert!(report.cloud_ms > 0.0);

    // Reconfigure the same connection to run everything locally.
    device.configure(5, 0).unwrap();
    let report = device.run_frame().unwrap();
    assert_eq!(report.frame, 1);
    assert_eq!(report.payload_raw_bytes, 0);
    assert_eq!(report.payload_wire_bytes, 0);
    assert_eq!(report.comm_ms, 0.0);
    assert_eq!(report.cloud_ms, 0.0);
    assert_eq!(report.device_samples.len(), 4);
    assert!(report.device_ms > 0.0);

    drop(device);
    server.stop().unwrap();
}

#[test]
fn compressed_tensors_shrink_on_the_wire_and_still_verify() {
    // Enough tokens that the nibble-structured payload actually compresses.
    let model = CloudModel {
        spec: ModelSpec::toy("wide", 2, 1200),
        slope_ms_per_token: 0.0,
        intercept_ms: 0.01,
    };
    let server = spawn_server(vec![model.clone()]);
    let mut device =
        DeviceAgent::connect(server.addr(), model.spec, &device_params(), true, 99).unwrap();

    device.configure(1, 0).unwrap();
    let report = device.run_frame().unwrap();
    assert_eq!(report.payload_raw_bytes, 1200 * 4);
    assert!(
        report.payload_wire_bytes < report.payload_raw_bytes,
        "low-nibble payload must compress: {} vs {}",
        report.payload_wire_bytes,
        report.payload_raw_bytes
    );
    // The cloud decompressed and length-checked it, or RESULT would never
    // have arrived.
    assert_eq!(report.cloud_samples.len(), 1);

    drop(device);
    server.stop().unwrap();
}

#[test]
fn unknown_models_and_unconfigured_frames_are_refused() {
    let server = spawn_server(vec![tiny_model()]);

    let ghost = ModelSpec::toy("ghost", 4, 16);
    let mut device =
        DeviceAgent::connect(server.addr(), ghost, &device_params(), false, 1).unwrap();
    assert!(device.configure(0, 0).is_err(), "unknown model id must not be acknowledged");

    let mut device =
        DeviceAgent::connect(server.addr(), tiny_model().spec, &device_params(), false, 1)
            .unwrap();
    let err = device.run_frame().unwrap_err();
    assert!(err.to_string().contains("configure"), "{err}");

    drop(device);
    server.stop().unwrap();
}

#[test]
fn protocol_violations_close_one_session_but_not_the_server() {
    let server = spawn_server(vec![tiny_model()]);

    // Violation 1: TENSOR on a device-only session.
    let mut stream = TcpStream::connect(server.addr()).unwrap();
    let config = ConfigPayload {
        model_id: "tiny".into(),
        split_point: 5,
        alpha_milli: 0,
        flags: 0,
    };
    WireMessage { msg_type: MsgType::Config, payload: config.encode().unwrap() }
        .write_to(&mut stream)
        .unwrap();
    assert_eq!(WireMessage::read_from(&mut stream).unwrap().msg_type, MsgType::Ack);
    WireMessage { msg_type: MsgType::Tensor, payload: vec![0; 8] }
        .write_to(&mut stream)
        .unwrap();
    assert!(
        matches!(WireMessage::read_opt(&mut stream), Ok(None) | Err(_)),
        "session must close instead of answering"
    );

    // Violation 2: garbage instead of a header.
    let mut stream = TcpStream::connect(server.addr()).unwrap();
    use std::io::Write;
    stream.write_all(b"NOTJANUS!").unwrap();
    stream.flush().unwrap();
    assert!(matches!(WireMessage::read_opt(&mut stream), Ok(None) | Err(_)));

    // Violation 3: an interior split with the wrong tensor length.
    let mut stream = TcpStream::connect(server.addr()).unwrap();
    let config = ConfigPayload { split_point: 1, ..config };
    WireMessage { msg_type: MsgType::Config, payload: config.encode().unwrap() }
        .write_to(&mut stream)
        .unwrap();
    assert_eq!(WireMessage::read_from(&mut stream).unwrap().msg_type, MsgType::Ack);
    WireMessage { msg_type: MsgType::Tensor, payload: vec![0; 3] }
        .write_to(&mut stream)
        .unwrap();
    assert!(matches!(WireMessage::read_opt(&mut stream), Ok(None) | Err(_)));

    // The server keeps serving healthy sessions afterwards.
    let mut device =
        DeviceAgent::connect(server.addr(), tiny_model().spec, &device_params(), false, 3)
            .unwrap();
    device.configure(2, 0).unwrap();
    assert!(device.run_frame().is_ok());

    drop(device);
    server.stop().unwrap();
}

#[test]
fn concurrent_devices_are_served_in_parallel() {
    let server = spawn_server(vec![tiny_model()]);
    let addr = server.addr();

    let workers: Vec<_> = (0..3)
        .map(|i| {
            std::thread::spawn(move || {
                let mut device = DeviceAgent::connect(
                    addr,
                    tiny_model().spec,
                    &device_params(),
                    false,
                    i,
                )
                .unwrap();
                device.configure((i % 5) as u32, 250).unwrap();
                device.run_frames(4).unwrap().len()
            })
        })
        .collect();
    for worker in workers {
        assert_eq!(worker.join().unwrap(), 4);
    }

    server.stop().unwrap();
}

#[test]
fn result_bytes_honor_the_model_declaration() {
    let mut model = tiny_model();
    model.spec.result_payload_bytes = 32;
    let server = spawn_server(vec![model.clone()]);
    let mut device =
        DeviceAgent::connect(server.addr(), model.spec, &device_params(), false, 0).unwrap();

    device.configure(4, 0).unwrap();
    let report = device.run_frame().unwrap();
    // Split N: the cloud runs no layers but still answers with a result.
    assert_eq!(report.cloud_samples.len(), 0);
    assert_eq!(report.cloud_ms, 0.0);
    assert_eq!(report.result.len(), 32);

    drop(device);
    server.stop().unwrap();
}

#[test]
fn harvested_profile_samples_recover_executor_slope() {
    // The device-side samples of a real run, fed back through the latency
    // fitter, must recover the executor's configured cost model. Sleep
    // overshoot under parallel test load adds millisecond-scale noise per
    // layer, so the correlation check needs token counts that spread much
    // wider than that: a 6-layer, 128-token toy at alpha 1.0 prunes
    // 32, 16, 8, 4, 2, 1 and samples at 96, 80, 72, 68, 66, and 65 tokens,
    // about 7.6 ms of signal spread at 0.7 ms/token.
    use janus_core::profiling::fit_latency_model;
    use janus_core::LatencySample;

    let model = CloudModel {
        spec: ModelSpec::toy("steep", 6, 128),
        slope_ms_per_token: 0.002,
        intercept_ms: 0.02,
    };
    let server = spawn_server(vec![model.clone()]);
    let params = ExecutorParams::new(0.7, 1.0);
    let mut device = DeviceAgent::connect(server.addr(), model.spec, &params, false, 3).unwrap();

    // Device-only: every frame runs all six layers locally.
    device.configure(7, 1000).unwrap();
    let reports = device.run_frames(6).unwrap();
    let samples: Vec<LatencySample> = reports
        .iter()
        .flat_map(|r| r.device_samples.iter())
        .map(|&(tokens, ms)| LatencySample { tokens: u64::from(tokens), latency_ms: ms })
        .collect();
    assert_eq!(samples.len(), 36);
    let tokens_seen: Vec<u64> = samples.iter().take(6).map(|s| s.tokens).collect();
    assert_eq!(tokens_seen, vec![96, 80, 72, 68, 66, 65]);

    let model = fit_latency_model(&samples).unwrap();
    let err = (model.slope_ms_per_token - 0.7).abs();
    assert!(err <= 0.07, "recovered slope {} off by {err}", model.slope_ms_per_token);
    assert!(!model.low_correlation(), "r = {}", model.r);

    drop(device);
    server.stop().unwrap();
}
