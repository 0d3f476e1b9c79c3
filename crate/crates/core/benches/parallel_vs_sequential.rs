use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use cipherface_core::dataset::ImageVector;
use cipherface_core::eval::{leave_one_out, synth_dataset, ExperimentConfig, Pipeline};
use cipherface_core::paillier::keygen;
use cipherface_core::par::Exec;
use cipherface_core::protocol::{run_session, ClientConfig, ClientSession, ServerConfig, ServerSession};
use cipherface_core::quantizer::{distance_bitbound, QuantizedEntry, QuantizedModel};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn paillier_batches(c: &mut Criterion) {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let (_, sk) = keygen(1024, &mut rng).unwrap();
    let pk = sk.public_key().clone();
    let values: Vec<BigInt> = (0..64).map(|_| BigInt::from(rng.gen_range(0..256))).collect();
    let cts = pk.encrypt_batch(&values, &mut rng, Exec::Sequential).unwrap();

    let mut group = c.benchmark_group("paillier_1024");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new("encrypt_64", name), &exec, |b, &exec| {
            let mut rng = ChaCha20Rng::seed_from_u64(2);
            b.iter(|| pk.encrypt_batch(&values, &mut rng, exec).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("decrypt_64", name), &exec, |b, &exec| {
            b.iter(|| sk.decrypt_batch(&cts, exec).unwrap())
        });
    }
    group.finish();
}

fn encrypted_session(c: &mut Criterion) {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let (_, sk) = keygen(512, &mut rng).unwrap();
    let n = 64;
    let m_out = 2;
    let mut q = QuantizedModel {
        scale: 100,
        q_projection: (0..m_out)
            .map(|_| (0..n).map(|_| rng.gen_range(-20..=20)).collect())
            .collect(),
        q_mean: vec![128; n],
        q_gallery: (0..12)
            .map(|i| QuantizedEntry {
                features: (0..m_out).map(|_| rng.gen_range(-5000..=5000)).collect(),
                label: i % 3,
            })
            .collect(),
        l: 0,
        label_names: vec!["a".into(), "b".into(), "c".into()],
        gallery_images: vec![],
    };
    q.l = distance_bitbound(&q).unwrap();
    let q = Arc::new(q);
    let image = ImageVector::new((0..n).map(|_| rng.gen()).collect());

    let mut group = c.benchmark_group("session_512");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| {
                let client = ClientSession::new(
                    sk.clone(),
                    image.clone(),
                    ClientConfig {
                        exec,
                        seed: Some(4),
                        ..ClientConfig::default()
                    },
                );
                let server = ServerSession::new(
                    Arc::clone(&q),
                    ServerConfig {
                        exec,
                        seed: Some(5),
                        ..ServerConfig::default()
                    },
                );
                run_session(client, server).unwrap()
            })
        });
    }
    group.finish();
}

fn leave_one_out_folds(c: &mut Criterion) {
    let cfg = ExperimentConfig::default();
    let subset = synth_dataset(&cfg, 12, 6).unwrap();
    let mut group = c.benchmark_group("leave_one_out_36");
    group.sample_size(10);
    for (name, exec) in MODES {
        let pipeline = Pipeline {
            pca_dims: None,
            flda_dims: None,
            scale: 1000,
            exec,
        };
        group.bench_with_input(BenchmarkId::from_parameter(name), &pipeline, |b, p| {
            b.iter(|| leave_one_out(&subset, p).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, paillier_batches, encrypted_session, leave_one_out_folds);
criterion_main!(benches);
