use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use drivelab::models::{build_model_at, ModelName, Scale};
use drivelab::simworld::{builtin_circuit, render, CameraConfig, CarState, Track, TrackVariation};
use drivelab::tensor_nn::{conv3d, convlstm2d_sequence, ConvLstmParams, Padding, Tensor};

fn ramp(shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |i| ((i * 7919) % 255) as f64 / 255.0 - 0.5)
}

fn layers(c: &mut Criterion) {
    let x = ramp(&[3, 16, 32, 8]);
    let k = ramp(&[3, 3, 3, 8, 16]);
    let b = ramp(&[16]);
    c.bench_function("conv3d 3x16x32x8 -> 16", |bn| {
        bn.iter(|| conv3d(black_box(&x), &k, &b, [1, 1, 1], Padding::Same).unwrap())
    });

    let xs = ramp(&[3, 8, 16, 8]);
    let wx = ramp(&[3, 3, 8, 64]);
    let wh = ramp(&[3, 3, 16, 64]);
    let bl = ramp(&[64]);
    c.bench_function("convlstm2d 3x8x16x8 -> 16", |bn| {
        bn.iter(|| {
            let p = ConvLstmParams {
                kernel: &wx,
                recurrent: &wh,
                bias: &bl,
            };
            convlstm2d_sequence(black_box(&xs), p, true).unwrap()
        })
    });
}

fn models(c: &mut Criterion) {
    for name in [ModelName::PilotNet, ModelName::MemDccp] {
        let spec = build_model_at(name, Scale::Desk);
        let w = spec.init_weights(1);
        let net = spec.network();
        let x = ramp(net.input_shape());
        let g = Tensor::from_vec(vec![0.1, -0.2]);
        c.bench_function(&format!("{} desk forward", spec.id()), |bn| {
            bn.iter(|| net.forward(&w.params, black_box(&x)).unwrap())
        });
        c.bench_function(&format!("{} desk forward+backward", spec.id()), |bn| {
            bn.iter(|| net.backward_sample(&w.params, black_box(&x), &g).unwrap())
        });
    }
}

fn simulator(c: &mut Criterion) {
    let track = Track::new(builtin_circuit("simple_oval").unwrap().spec).unwrap();
    let (p, h) = track.start_pose();
    let state = CarState::at(p[0], p[1], h);
    let variation = TrackVariation::default();
    let desk = CameraConfig::desk();
    c.bench_function("render 64x48", |bn| {
        bn.iter(|| render(&track, &variation, black_box(&state), &desk))
    });
    let full = CameraConfig::default();
    c.bench_function("render 160x120", |bn| {
        bn.iter(|| render(&track, &variation, black_box(&state), &full))
    });
}

criterion_group!(benches, layers, models, simulator);
criterion_main!(benches);
