//! End-to-end run of the library stages through the public API.

use std::fs::File;
use std::io::BufReader;

use xling_core::corpus::{filter_corpus, parse_documents, write_documents, FilterConfig, InputFormat};
use xling_core::encoder::{encode, init_encoder, read_checkpoint, write_checkpoint, EncoderConfig};
use xling_core::evalsts::{evaluate_sts, load_sts, write_sts_tsv};
use xling_core::fixtures::{corpus_with_noise, fixture_mining_config, sts_fixture};
use xling_core::mining::mock::{MockGenerator, MockJudge};
use xling_core::mining::{mine_triplets, parse_triplets, write_triplets};
use xling_core::trainer::{train, TrainConfig};

#[test]
fn filter_mine_train_evaluate() {
    let seed = 11;
    let raw = corpus_with_noise(300, seed, 5, 256);
    let mut jsonl = Vec::new();
    write_documents(&mut jsonl, &raw).unwrap();
    let docs = parse_documents(&jsonl, InputFormat::Jsonl).unwrap();
    assert_eq!(docs, raw);

    let filter = FilterConfig {
        min_tokens: 5,
        max_tokens: 256,
        ..FilterConfig::default()
    };
    let kept = filter_corpus(docs, &filter).unwrap().kept;
    assert_eq!(kept.len(), 300);
    assert!(kept.iter().all(|d| d.id.starts_with("syn-") && !d.id.ends_with("-x")));

    let mined = mine_triplets(&kept, &MockGenerator::new(seed), &MockJudge, &fixture_mining_config(seed)).unwrap();
    assert!(!mined.triplets.is_empty());
    let mut buf = Vec::new();
    write_triplets(&mut buf, &mined.triplets).unwrap();
    let triplets = parse_triplets(std::str::from_utf8(&buf).unwrap()).unwrap();
    assert_eq!(triplets, mined.triplets);

    let init = init_encoder(EncoderConfig::default(), seed).unwrap();
    let (trained, state, metrics) = train(&triplets, init.clone(), &TrainConfig::default()).unwrap();
    assert_eq!(state.step as usize, metrics.steps.len());
    assert_ne!(trained.table, init.table);

    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("model.bin");
    write_checkpoint(File::create(&ckpt).unwrap(), &trained).unwrap();
    let restored = read_checkpoint(BufReader::new(File::open(&ckpt).unwrap())).unwrap();
    assert_eq!(restored.table, trained.table);
    assert_eq!(encode("삼성전자 영업이익", &restored).unwrap(), encode("삼성전자 영업이익", &trained).unwrap());

    let sts = dir.path().join("sts.tsv");
    write_sts_tsv(File::create(&sts).unwrap(), &sts_fixture(120, seed, None)).unwrap();
    let pairs = load_sts(&sts).unwrap();
    let before = evaluate_sts("FinSTS", &pairs, &init).unwrap();
    let after = evaluate_sts("FinSTS", &pairs, &restored).unwrap();
    assert_eq!(before.n_pairs, 120);
    assert!(after.spearman > before.spearman, "{} -> {}", before.spearman, after.spearman);
}
