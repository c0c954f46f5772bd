use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use watercare_core::fence::{detect_blobs, FencePolyline, FenceState};
use watercare_core::protocol::{decode_stream, encode, Message};
use watercare_core::synth::{fence_sequence, fence_vertices, FenceSequenceSpec};
use watercare_core::{DirectionMode, NullLink, ScenarioConfig, Side, SimRunner, ThrustCommand};

const LAWNMOWER: &str = r#"
seed = 7
[world.trash_field]
n = 30
min = { x = 0.0, y = 0.0 }
max = { x = 40.0, y = 24.0 }
[mission]
autostart = true
conveyor = true
[mission.lawnmower]
min = { x = 0.0, y = 0.0 }
max = { x = 40.0, y = 24.0 }
lane_spacing = 4.0
accept_radius = 2.0
"#;

fn sim(c: &mut Criterion) {
    let cfg = ScenarioConfig::from_toml(LAWNMOWER).unwrap();
    let mut g = c.benchmark_group("sim");
    g.throughput(Throughput::Elements(1000));
    g.bench_function("tick_x1000", |b| {
        b.iter_batched(
            || cfg.build_simulator().unwrap(),
            |mut s| {
                for _ in 0..1000 {
                    s.tick(ThrustCommand::new(3.0, 2.5)).unwrap();
                }
                s
            },
            BatchSize::SmallInput,
        )
    });
    g.bench_function("runner_lawnmower_60s", |b| {
        b.iter_batched(
            || SimRunner::new(cfg.build_simulator().unwrap(), cfg.build_onboard(), NullLink),
            |mut r| r.run_for(60.0).unwrap(),
            BatchSize::SmallInput,
        )
    });
    g.finish();
}

fn fence(c: &mut Criterion) {
    let spec = FenceSequenceSpec { width: 320, height: 240, fence_y: 120.0, crossings: 4, ..Default::default() };
    let frames = fence_sequence(&spec);
    let mut g = c.benchmark_group("fence");
    g.throughput(Throughput::Elements(frames.len() as u64));
    g.bench_function("detect_blobs_320x240", |b| {
        let f = &frames[20];
        b.iter(|| detect_blobs(black_box(f), &frames[0], 30, 9).unwrap())
    });
    g.bench_function("pipeline_320x240_sequence", |b| {
        let fence = FencePolyline::new(fence_vertices(&spec), Side::Left, DirectionMode::IntoProtected).unwrap();
        b.iter_batched(
            || FenceState::new(frames[0].clone(), fence.clone(), Default::default(), 1),
            |mut st| {
                for f in &frames {
                    st.process_frame(f).unwrap();
                }
                st.count
            },
            BatchSize::SmallInput,
        )
    });
    g.finish();
}

fn protocol(c: &mut Criterion) {
    let msgs: Vec<Message> = (0..1000u32)
        .map(|i| Message::Position { t_ms: i * 200, x: i as f32, y: 1.0, heading: 0.5, speed: 0.7 })
        .collect();
    let stream: Vec<u8> = msgs.iter().enumerate().flat_map(|(i, m)| encode(m, i as u8, 1, 1)).collect();
    let mut g = c.benchmark_group("protocol");
    g.throughput(Throughput::Bytes(stream.len() as u64));
    g.bench_function("encode_1000_positions", |b| {
        b.iter(|| msgs.iter().map(|m| encode(black_box(m), 0, 1, 1).len()).sum::<usize>())
    });
    g.bench_function("decode_1000_positions", |b| b.iter(|| decode_stream(black_box(&stream)).0.packets.len()));
    g.finish();
}

criterion_group!(benches, sim, fence, protocol);
criterion_main!(benches);
