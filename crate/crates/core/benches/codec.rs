use criterion::{criterion_group, criterion_main, Criterion, Throughput};
use lepjpeg::pipeline::{compress, decompress_bytes, CompressOptions, DecompressOptions};

fn codec(c: &mut Criterion) {
    let sample = lepjpeg_testkit::large(3, 1 << 20);
    let options = CompressOptions {
        segments: Some(8),
        ..CompressOptions::default()
    };
    let container = compress(&sample.bytes, &options).output.expect("sample compresses");
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("pool");
    let one_worker = CompressOptions {
        workers: Some(1),
        ..options.clone()
    };

    let mut encode = c.benchmark_group("encode");
    encode.sample_size(10).throughput(Throughput::Bytes(sample.bytes.len() as u64));
    encode.bench_function("parallel", |b| b.iter(|| compress(&sample.bytes, &options)));
    encode.bench_function("sequential", |b| {
        b.iter(|| single.install(|| compress(&sample.bytes, &one_worker)))
    });
    encode.finish();

    let mut decode = c.benchmark_group("decode");
    decode.sample_size(10).throughput(Throughput::Bytes(sample.bytes.len() as u64));
    for (label, workers) in [("parallel", None), ("sequential", Some(1))] {
        let opts = DecompressOptions {
            workers,
            ..DecompressOptions::default()
        };
        decode.bench_function(label, |b| b.iter(|| decompress_bytes(&container, &opts).expect("decode")));
    }
    decode.finish();
}

criterion_group!(benches, codec);
criterion_main!(benches);
