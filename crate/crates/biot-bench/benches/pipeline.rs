//! Hot-path timings: hashing a window into a tree, producing and checking
//! inclusion proofs, the payload-size gas curve, and a full simulated day
//! end to end for each storage scheme.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use biot_core::anchoring::{leaf_digest, verify_digest_inclusion, MerkleTree, StorageScheme};
use biot_core::economics::{gas_for_payload, message_gas, usd_cost, GasSchedule, PriceContext};
use biot_core::harness::{run_scenario, ScenarioConfig, ScenarioKind};
use biot_core::types::Digest32;

fn window_leaves(n: u64) -> Vec<Digest32> {
    (0..n).map(|i| leaf_digest(&i.to_be_bytes())).collect()
}

fn merkle(c: &mut Criterion) {
    let mut group = c.benchmark_group("merkle");
    // 60 leaves is the default one-minute window at one message a second;
    // 1440 is a container's full day in one window.
    for n in [60u64, 1_440, 16_384] {
        let leaves = window_leaves(n);
        group.throughput(Throughput::Elements(n));
        group.bench_with_input(BenchmarkId::new("build", n), &leaves, |b, leaves| {
            b.iter(|| MerkleTree::build(black_box(leaves.clone())).unwrap().root())
        });
    }
    let leaves = window_leaves(1_440);
    let tree = MerkleTree::build(leaves.clone()).unwrap();
    let root = tree.root();
    group.bench_function("prove/1440", |b| {
        b.iter(|| tree.prove(black_box(721)).unwrap())
    });
    let siblings = tree.prove(721).unwrap();
    group.bench_function("verify/1440", |b| {
        b.iter(|| {
            assert!(verify_digest_inclusion(
                black_box(&leaves[721]),
                black_box(&siblings),
                black_box(&root),
            ))
        })
    });
    group.finish();
}

fn gas_curve(c: &mut Criterion) {
    let schedule = GasSchedule::default();
    let prices = PriceContext::default();
    c.bench_function("message_gas/sweep_0_to_4096", |b| {
        b.iter(|| {
            let mut acc = 0u64;
            for size in 0..=4096u32 {
                acc = acc.wrapping_add(message_gas(black_box(&schedule), size));
            }
            acc
        })
    });
    c.bench_function("payload_to_usd/24_bytes", |b| {
        b.iter(|| {
            let gas = gas_for_payload(
                black_box(&schedule),
                StorageScheme::FullOnChain,
                black_box(24),
            );
            usd_cost(gas, black_box(&prices))
        })
    });
}

fn simulated_day(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulated_day");
    // One sample is a whole 24h container run (1440 messages, 5760 blocks).
    group.sample_size(10);
    for scheme in StorageScheme::ALL {
        group.bench_function(BenchmarkId::new("container", scheme.as_str()), |b| {
            b.iter(|| {
                let dir = tempfile::tempdir().unwrap();
                let config = ScenarioConfig {
                    scenario: ScenarioKind::RefrigeratedContainer,
                    scheme,
                    ..ScenarioConfig::default()
                };
                run_scenario(&config, &dir.path().join("offchain.jsonl"))
                    .unwrap()
                    .blocks
                    .len()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, merkle, gas_curve, simulated_day);
criterion_main!(benches);
