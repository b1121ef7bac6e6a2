use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use vsn_bench::{batch, data_post};
use vsn_core::wirecodec::{decode_senml, encode_senml};
use vsn_core::{decode_message, encode_message};

fn codec(c: &mut Criterion) {
    let b = batch(6);
    let senml = encode_senml(&b).unwrap();
    let msg = data_post(senml.clone());
    let frame = encode_message(&msg).unwrap();

    c.bench_function("senml_encode_6", |bench| {
        bench.iter(|| encode_senml(black_box(&b)).unwrap())
    });
    c.bench_function("senml_decode_6", |bench| {
        bench.iter(|| decode_senml(black_box(&senml)).unwrap())
    });
    c.bench_function("coap_encode", |bench| {
        bench.iter(|| encode_message(black_box(&msg)).unwrap())
    });
    c.bench_function("coap_decode", |bench| {
        bench.iter(|| decode_message(black_box(&frame)).unwrap())
    });
}

criterion_group!(benches, codec);
criterion_main!(benches);
