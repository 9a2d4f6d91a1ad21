use chrono::TimeZone;
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use suasion_core::arena::{elo_update, expected_score};
use suasion_core::benchkit::metrics;
use suasion_core::corpus::{midrank_percentiles, normalize_text, PostRecord};
use suasion_core::pairminer::{mine_pairs, ContextStore, GateThresholds};
use suasion_core::providers::mock::MockEmbedder;
use suasion_core::providers::Embedder;
use suasion_core::simtext::edit_similarity;

fn random_text(rng: &mut ChaCha8Rng, words: usize) -> String {
    let vocab = [
        "sale", "today", "launch", "new", "save", "big", "deal", "online", "store", "now",
        "limited", "offer", "exclusive", "shop", "best", "product", "week", "join", "win", "free",
    ];
    (0..words)
        .map(|_| vocab[rng.gen_range(0..vocab.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

fn bench_edit_similarity(c: &mut Criterion) {
    let mut group = c.benchmark_group("edit_similarity");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for len in [40usize, 140, 280] {
        let a: String = (0..len).map(|_| rng.gen_range(b'a'..=b'e') as char).collect();
        let b: String = (0..len).map(|_| rng.gen_range(b'a'..=b'e') as char).collect();
        group.throughput(Throughput::Elements((len * len) as u64));
        group.bench_with_input(BenchmarkId::from_parameter(len), &(a, b), |bencher, (a, b)| {
            bencher.iter(|| edit_similarity(black_box(a), black_box(b)));
        });
    }
    group.finish();
}

fn bench_normalize(c: &mut Criterion) {
    let text = "Big @brand sale \u{1F525}\u{1F525} today only! Details: https://ex.co/deals #sale #deals @partner";
    c.bench_function("normalize_text", |b| {
        b.iter(|| normalize_text(black_box(text)));
    });
}

fn bench_percentiles(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let likes: Vec<u64> = (0..10_000).map(|_| rng.gen_range(0..5_000)).collect();
    c.bench_function("midrank_percentiles_10k", |b| {
        b.iter(|| midrank_percentiles(black_box(&likes)));
    });
}

fn bench_bleu(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let candidate = random_text(&mut rng, 24);
    let reference = vec![random_text(&mut rng, 24)];
    c.bench_function("bleu2_sentence", |b| {
        b.iter(|| metrics::bleu(black_box(&candidate), black_box(&reference), 2));
    });
}

fn bench_elo(c: &mut Criterion) {
    c.bench_function("elo_update", |b| {
        b.iter(|| {
            let e = expected_score(black_box(1043.0), black_box(987.0));
            elo_update(black_box((1043.0, 987.0)), black_box(1.0), black_box(4.0)).0 + e
        });
    });
}

fn bench_mine_pairs(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut posts = Vec::new();
    for account in 0..10 {
        for i in 0..20 {
            let base = random_text(&mut rng, 10);
            posts.push(PostRecord {
                post_id: format!("a{account}-p{i}"),
                account_id: format!("acct{account}"),
                created_at: chrono::Utc
                    .with_ymd_and_hms(2020, 1, 1, 0, 0, 0)
                    .unwrap()
                    + chrono::Duration::days(i as i64),
                text: base,
                media: vec![],
                like_count: rng.gen_range(0..500),
                link_domains: vec![],
                hashtags: vec![],
                mentions: vec![],
                like_percentile: Some(rng.gen_range(0.0..100.0)),
                normalized: true,
            });
        }
    }
    let thresholds = GateThresholds::default();
    let contexts = ContextStore::default();
    c.bench_function("mine_pairs_200_posts", |b| {
        b.iter(|| {
            let provider = MockEmbedder::new(9);
            let embedder = Embedder::new(&provider);
            mine_pairs(black_box(&posts), &thresholds, &embedder, &contexts).unwrap()
        });
    });
}

criterion_group!(
    benches,
    bench_edit_similarity,
    bench_normalize,
    bench_percentiles,
    bench_bleu,
    bench_elo,
    bench_mine_pairs
);
criterion_main!(benches);
