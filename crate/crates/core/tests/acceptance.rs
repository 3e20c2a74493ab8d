//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::f64::consts::LN_2;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use xling_core::corpus::{balance_by_class, filter_document, FilterConfig, Verdict};
use xling_core::encoder::{init_encoder, write_checkpoint, EncoderConfig, EncoderParams};
use xling_core::evalsts::{
    average_ranks, benchmark_stats, delta_report, evaluate_sts, fmt_delta, spearman_rho, SuiteScores, FIN_STS,
    KOR_FIN_STS, KOR_STS, STS,
};
use xling_core::fixtures::{
    benchmark_fixture, fixture_mining_config, sts_fixture, synthetic_corpus, vocab_fixture,
};
use xling_core::mining::mock::{MockGenerator, MockJudge};
use xling_core::mining::{
    mine_triplets, write_triplets, ClientError, JudgeClient, MiningConfig, PairKind, Stage,
};
use xling_core::tokaudit::{coverage_report, AuditConfig};
use xling_core::trainer::{
    batch_loss_and_grad, train_one_epoch, triplet_forward_backward, triplet_loss, triplet_loss_grads, TrainConfig,
};
use xling_core::{Document, Lang, SourceDomain, Triplet};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// 1. loss correctness

fn loss_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let c = rng.gen_range(-1.0..=1.0);
        let tau = rng.gen_range(1e-3..2.0);
        worst = worst.max((triplet_loss(c, c, tau).unwrap() - LN_2).abs());
    }
    ensure(worst <= 1e-12, || format!("symmetric case off ln 2 by {worst:e}"))?;

    // direct evaluation of the two-term softmax NLL
    let direct = |sp: f64, sn: f64, tau: f64| {
        let (a, b) = ((sp / tau).exp(), (sn / tau).exp());
        -(a / (a + b)).ln()
    };
    let mut case_err: f64 = 0.0;
    for (sp, sn, tau) in [(1.0, -1.0, 1.0), (0.8, 0.4, 0.05)] {
        case_err = case_err.max((triplet_loss(sp, sn, tau).unwrap() - direct(sp, sn, tau)).abs());
    }
    ensure(case_err <= 1e-9, || format!("scalar cases differ by {case_err:e}"))?;
    Ok(format!("max |L - ln 2| = {worst:.1e}; scalar cases within {case_err:.1e}"))
}

// 2. gradient exactness

fn gradient_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let sp: f64 = rng.gen_range(-1.0..=1.0);
        let sn: f64 = rng.gen_range(-1.0..=1.0);
        let tau: f64 = rng.gen_range(0.01..2.0);
        let h = 1e-6 * tau;
        let (gsp, gsn) = triplet_loss_grads(sp, sn, tau).unwrap();
        let l = |a: f64, b: f64| triplet_loss(a, b, tau).unwrap();
        let fsp = (l(sp + h, sn) - l(sp - h, sn)) / (2.0 * h);
        let fsn = (l(sp, sn + h) - l(sp, sn - h)) / (2.0 * h);
        for (a, f) in [(gsp, fsp), (gsn, fsn)] {
            worst = worst.max((a - f).abs() / a.abs().max(f.abs()));
        }
    }
    ensure(worst < 1e-6, || format!("scalar gradient rel err {worst:e}"))?;

    let mut params = init_encoder(EncoderConfig { dim: 4, num_buckets: 5, ngram: 3 }, 11).unwrap();
    let t = |s: &str, p: &str, n: &str| Triplet {
        source: s.into(),
        positive: p.into(),
        negative: n.into(),
        pattern_id: "temporal_variation".into(),
        positive_mode: xling_core::mining::PositiveMode::Translation,
        neg_score: 9.0,
        pos_score: 10.0,
        lang_source: Lang::Ko,
        lang_positive: Lang::En,
    };
    let ts = [
        t("삼성전자 2분기 영업이익", "Samsung second quarter profit", "삼성전자 4분기 영업이익"),
        t("net income rose sharply", "net profit increased", "net income rose modestly"),
        t("과태료가 두 배로 부과된다", "a fine at twice the rate", "징역형이 두 배로 부과된다"),
    ];
    let batch: Vec<(usize, &Triplet)> = ts.iter().enumerate().collect();
    let tau = 0.3;
    let mut grad = vec![0.0; params.table.len()];
    batch_loss_and_grad(&batch, &params, tau, &mut grad).unwrap();
    let mut scratch = grad.clone();
    let h = 1e-6;
    let mut e2e: f64 = 0.0;
    for i in 0..params.table.len() {
        let orig = params.table[i];
        params.table[i] = orig + h;
        let up = batch_loss_and_grad(&batch, &params, tau, &mut scratch).unwrap().loss;
        params.table[i] = orig - h;
        let down = batch_loss_and_grad(&batch, &params, tau, &mut scratch).unwrap().loss;
        params.table[i] = orig;
        let fd = (up - down) / (2.0 * h);
        e2e = e2e.max((fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-8));
    }
    ensure(e2e < 1e-4, || format!("end-to-end rel err {e2e:e}"))?;
    Ok(format!("scalar max rel err {worst:.1e} over 1000 draws; 5-bucket toy max rel err {e2e:.1e}"))
}

// 3. Spearman oracle

fn brute_rank(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|x| {
            let below = xs.iter().filter(|y| *y < x).count() as f64;
            let equal = xs.iter().filter(|y| *y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn textbook_pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    cov / (vx.sqrt() * vy.sqrt())
}

fn spearman_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < 500 {
        let n = rng.gen_range(2..=50);
        let levels = rng.gen_range(2..=12);
        let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(0..levels) as f64 * 0.5).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(0..levels) as f64 - 3.0).collect();
        if xs.iter().all(|&v| v == xs[0]) || ys.iter().all(|&v| v == ys[0]) {
            continue;
        }
        let got = spearman_rho(&xs, &ys).map_err(|e| e.to_string())?;
        let want = textbook_pearson(&brute_rank(&xs), &brute_rank(&ys));
        worst = worst.max((got - want).abs());
        ensure(average_ranks(&xs) == brute_rank(&xs), || format!("rank mismatch on {xs:?}"))?;

        // strictly monotone transforms of positive data leave ranks untouched
        let pos: Vec<f64> = xs.iter().map(|x| x + 1.0).collect();
        let base = spearman_rho(&pos, &ys).unwrap();
        for f in [|x: f64| 2.0 * x + 1.0, |x: f64| x * x * x] {
            let moved: Vec<f64> = pos.iter().map(|&x| f(x)).collect();
            ensure(average_ranks(&moved) == average_ranks(&pos), || "transform changed ranks".into())?;
            ensure(spearman_rho(&moved, &ys).unwrap() == base, || "transform changed rho".into())?;
        }
        checked += 1;
    }
    ensure(worst <= 1e-12, || format!("oracle disagreement {worst:e}"))?;
    Ok(format!("500 tied vectors, max |diff| {worst:.1e}; monotone transforms exact"))
}

// 4. delta table

fn scores(fin: f64, korfin: f64, sts: f64, korsts: f64) -> SuiteScores {
    SuiteScores::from([
        (FIN_STS.to_string(), fin),
        (KOR_FIN_STS.to_string(), korfin),
        (STS.to_string(), sts),
        (KOR_STS.to_string(), korsts),
    ])
}

/// Reference before/after Spearman scores for the seven evaluated models.
fn reference_scores() -> Vec<(&'static str, SuiteScores, SuiteScores)> {
    vec![
        ("bge-en-icl", scores(0.1668, 0.0511, 0.8058, 0.7078), scores(0.2574, -0.0745, 0.5965, 0.2487)),
        ("gte-Qwen2-1.5B", scores(0.2858, 0.0094, 0.8592, 0.3742), scores(0.2518, 0.2204, 0.7556, 0.4727)),
        ("e5-mistral-7b", scores(0.1476, 0.1099, 0.8768, 0.7495), scores(0.2641, -0.1738, 0.6092, 0.1492)),
        ("bge-large-en-v1.5", scores(0.1675, -0.2119, 0.8752, 0.3320), scores(0.1626, -0.1586, 0.8835, 0.2473)),
        ("all-MiniLM-L12-v2", scores(0.1909, -0.1837, 0.8309, 0.3858), scores(0.2626, -0.1590, 0.7109, 0.1262)),
        ("instructor-base", scores(0.2518, -0.0982, 0.8585, 0.0500), scores(0.2646, -0.0679, 0.8459, 0.0116)),
        ("bge-m3", scores(0.1969, 0.0512, 0.8194, 0.7382), scores(0.2967, 0.2732, 0.7803, 0.6919)),
    ]
}

fn delta_table() -> Outcome {
    let refs = reference_scores();
    let report = delta_report(refs.iter().map(|(m, b, a)| (*m, b, a))).map_err(|e| e.to_string())?;
    ensure(report.rows.len() == 7, || format!("{} rows", report.rows.len()))?;
    for row in &report.rows {
        ensure(row.mean_delta == (row.delta_fin + row.delta_kor_fin) / 2.0, || {
            format!("{}: mean delta is not the exact average", row.model)
        })?;
    }
    let expected = [
        ("bge-en-icl", "+0.0906", "-0.1256", "-0.0175"),
        ("gte-Qwen2-1.5B", "-0.0340", "+0.2110", "+0.0885"),
        ("e5-mistral-7b", "+0.1165", "-0.2837", "-0.0836"),
        ("bge-m3", "+0.0998", "+0.2220", "+0.1609"),
    ];
    for (model, fin, kor, mean) in expected {
        let row = report.rows.iter().find(|r| r.model == model).ok_or(format!("no row for {model}"))?;
        let got = (fmt_delta(row.delta_fin), fmt_delta(row.delta_kor_fin), fmt_delta(row.mean_delta));
        ensure(got == (fin.into(), kor.into(), mean.into()), || format!("{model}: got {got:?}"))?;
    }
    Ok("7 models computed; 4 reference rows match to 4 decimals (bge-m3 +0.1609, bge-en-icl -0.0175)".into())
}

// 5. coverage table

fn coverage_table() -> Outcome {
    let rows = [
        ("bge-en-icl", 32_003, 346, "1.08"),
        ("gte-Qwen2-1.5B", 151_646, 0, "0.00"),
        ("e5-mistral-7b", 32_000, 346, "1.08"),
        ("bge-m3", 250_002, 5_413, "2.17"),
    ];
    let mut shown = Vec::new();
    for (model, size, count, want) in rows {
        let report = coverage_report(&vocab_fixture(size, count, 5), &AuditConfig::default()).map_err(|e| e.to_string())?;
        ensure(report.vocab_size == size && report.korean_token_count == count, || {
            format!("{model}: counted {} of {}", report.korean_token_count, report.vocab_size)
        })?;
        ensure(report.pct_display() == want, || format!("{model}: {} != {want}", report.pct_display()))?;
        shown.push(format!("{}%", report.pct_display()));
    }
    Ok(shown.join(", "))
}

// 6. filtering

fn clean_text(tokens: usize) -> String {
    let words = ["revenue", "grew", "in", "the", "quarter", "매출", "증가"];
    (0..tokens).map(|i| words[i % words.len()]).collect::<Vec<_>>().join(" ")
}

fn filtering() -> Outcome {
    let cfg = FilterConfig::default();
    let mut verdicts = Vec::new();
    for n in [127, 128, 4096, 4097] {
        let doc = Document::new(format!("d{n}"), Lang::En, SourceDomain::News, clean_text(n), None);
        verdicts.push(matches!(filter_document(&doc, &cfg), Verdict::Keep));
    }
    ensure(verdicts == [false, true, true, false], || format!("keep flags {verdicts:?}"))?;

    let mut docs = Vec::new();
    for (domain, count) in [(SourceDomain::News, 9), (SourceDomain::Legal, 6), (SourceDomain::Disclosure, 4)] {
        for i in 0..count {
            docs.push(Document::new(format!("{domain}-{i}"), Lang::Ko, domain, clean_text(130), None));
        }
    }
    let balanced = balance_by_class(&docs, 0).map_err(|e| e.to_string())?;
    let mut sizes: BTreeMap<SourceDomain, usize> = BTreeMap::new();
    for d in &balanced {
        *sizes.entry(d.source_domain).or_default() += 1;
    }
    ensure(sizes.len() == 3 && sizes.values().all(|&c| c == 4), || format!("balanced sizes {sizes:?}"))?;
    Ok("127/128/4096/4097 -> drop/keep/keep/drop; 9/6/4 balanced to 4/4/4".into())
}

// 7. mining gate

#[derive(Default)]
struct RecordingJudge {
    calls: Mutex<Vec<(PairKind, f64)>>,
}

impl JudgeClient for RecordingJudge {
    fn score(&self, kind: PairKind, source: &str, candidate: &str) -> Result<f64, ClientError> {
        let s = MockJudge.score(kind, source, candidate)?;
        self.calls.lock().unwrap().push((kind, s));
        Ok(s)
    }
}

fn mining_gate() -> Outcome {
    let docs = synthetic_corpus(300, 17);
    let gen = MockGenerator::new(17);
    let base = fixture_mining_config(17);

    let judge = RecordingJudge::default();
    let out = mine_triplets(&docs, &gen, &judge, &base).map_err(|e| e.to_string())?;
    let calls = judge.calls.into_inner().unwrap();
    let count = |kind: PairKind, pass: bool, thr: f64| {
        calls.iter().filter(|(k, s)| *k == kind && (*s >= thr) == pass).count()
    };
    let neg = out.stats.stage(Stage::NegativeValidation);
    let pos = out.stats.stage(Stage::PositiveValidation);
    ensure(
        neg.accepted == count(PairKind::Negative, true, 8.0) && neg.rejected == count(PairKind::Negative, false, 8.0),
        || format!("negative gate {neg:?} disagrees with recorded scores"),
    )?;
    ensure(
        pos.accepted == count(PairKind::Positive, true, 9.0) && pos.rejected == count(PairKind::Positive, false, 9.0),
        || format!("positive gate {pos:?} disagrees with recorded scores"),
    )?;
    ensure(out.triplets.iter().all(|t| t.neg_score >= 8.0 && t.pos_score >= 9.0), || {
        "emitted triplet below threshold".into()
    })?;
    ensure(neg.rejected > 0 && pos.rejected > 0, || "fixture never exercises a rejection".into())?;

    let run = |neg_threshold: f64, pos_threshold: f64| {
        let cfg = MiningConfig { neg_threshold, pos_threshold, ..base.clone() };
        mine_triplets(&docs, &gen, &MockJudge, &cfg).expect("mock run").triplets.len()
    };
    let sweep: Vec<f64> = (0..=20).map(|i| i as f64 * 0.5).collect();
    for fixed in [0.0, 8.0, 9.0] {
        let by_neg: Vec<usize> = sweep.iter().map(|&t| run(t, fixed)).collect();
        let by_pos: Vec<usize> = sweep.iter().map(|&t| run(fixed, t)).collect();
        for counts in [&by_neg, &by_pos] {
            ensure(counts.windows(2).all(|w| w[1] <= w[0]), || format!("non-monotone sweep {counts:?}"))?;
        }
    }

    let bytes = |inflight: usize| {
        let cfg = MiningConfig { max_inflight: inflight, ..base.clone() };
        let out = mine_triplets(&docs, &gen, &MockJudge, &cfg).expect("mock run");
        let mut buf = Vec::new();
        write_triplets(&mut buf, &out.triplets).unwrap();
        out.stats.write_csv(&mut buf).unwrap();
        buf
    };
    ensure(bytes(1) == bytes(8), || "output differs between max_inflight 1 and 8".into())?;
    Ok(format!(
        "{} triplets; gate exact ({} / {} negatives, {} / {} positives accepted); sweeps monotone; inflight 1 == 8",
        out.triplets.len(),
        neg.accepted,
        neg.accepted + neg.rejected,
        pos.accepted,
        pos.accepted + pos.rejected
    ))
}

// 8. training efficacy

fn mean_margin(ts: &[Triplet], params: &EncoderParams) -> f64 {
    ts.iter()
        .map(|t| {
            let pass = triplet_forward_backward(t, params, 0.05).expect("encodable");
            pass.cos_sp - pass.cos_sn
        })
        .sum::<f64>()
        / ts.len() as f64
}

fn checkpoint_bytes(params: &EncoderParams) -> Vec<u8> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, params).unwrap();
    buf
}

fn training_efficacy() -> Outcome {
    let seed = 7;
    let docs = synthetic_corpus(1500, seed);
    let split = docs.len() * 4 / 5;
    let gen = MockGenerator::new(seed);
    let cfg = fixture_mining_config(seed);
    let train_set = mine_triplets(&docs[..split], &gen, &MockJudge, &cfg).map_err(|e| e.to_string())?.triplets;
    let held_out = mine_triplets(&docs[split..], &gen, &MockJudge, &cfg).map_err(|e| e.to_string())?.triplets;
    let total = train_set.len() + held_out.len();
    ensure(total >= 2000, || format!("fixture has only {total} triplets"))?;
    let bilingual = train_set.iter().filter(|t| t.lang_source != t.lang_positive).count();
    ensure(bilingual > 0, || "no bilingual positives".into())?;

    let init = init_encoder(EncoderConfig::default(), seed).map_err(|e| e.to_string())?;
    let train_cfg = TrainConfig { seed, ..TrainConfig::default() };
    let sts = sts_fixture(400, 99, None);
    let rho0 = evaluate_sts("synthetic", &sts, &init).map_err(|e| e.to_string())?.spearman;
    let m0 = mean_margin(&held_out, &init);

    let (trained, _, _) = train_one_epoch(&train_set, init.clone(), &train_cfg).map_err(|e| e.to_string())?;
    let m1 = mean_margin(&held_out, &trained);
    let rho1 = evaluate_sts("synthetic", &sts, &trained).map_err(|e| e.to_string())?.spearman;
    ensure(m1 - m0 >= 0.15, || format!("held-out margin gain {:.4} < 0.15", m1 - m0))?;
    ensure(rho1 > rho0, || format!("STS rho {rho0:.4} -> {rho1:.4}"))?;

    let (again, _, _) = train_one_epoch(&train_set, init, &train_cfg).map_err(|e| e.to_string())?;
    ensure(checkpoint_bytes(&trained) == checkpoint_bytes(&again), || "reruns differ".into())?;
    Ok(format!(
        "{total} triplets ({bilingual} bilingual in train); held-out margin {m0:.4} -> {m1:.4} (+{:.4}); STS rho {rho0:.4} -> {rho1:.4}; rerun bit-identical",
        m1 - m0
    ))
}

// 9. benchmark statistics

fn benchmark() -> Outcome {
    let s = benchmark_stats(&benchmark_fixture(0));
    ensure((s.gold_mean - 0.59).abs() <= 0.005 && (s.gold_std - 0.49).abs() <= 0.005, || {
        format!("mean {:.4}, std {:.4}", s.gold_mean, s.gold_std)
    })?;
    let counts: Vec<usize> = [
        SourceDomain::News,
        SourceDomain::Disclosure,
        SourceDomain::ResearchReport,
        SourceDomain::Legal,
    ]
    .iter()
    .map(|d| s.per_subdomain.get(d).copied().unwrap_or(0))
    .collect();
    ensure(counts == [355, 500, 421, 715], || format!("subdomain counts {counts:?}"))?;
    ensure(counts.iter().sum::<usize>() == s.total, || "counts do not sum to total".into())?;
    Ok(format!("mean {:.4}, std {:.4}, counts {counts:?}, total {}", s.gold_mean, s.gold_std, s.total))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("loss correctness", loss_correctness),
        ("gradient exactness", gradient_exactness),
        ("spearman oracle equivalence", spearman_oracle),
        ("delta table reproduction", delta_table),
        ("coverage table reproduction", coverage_table),
        ("filtering boundaries and balancing", filtering),
        ("mining gate", mining_gate),
        ("desk-scale training efficacy", training_efficacy),
        ("benchmark statistics", benchmark),
    ];
    let started = Instant::now();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] {}. {name}: {detail} ({secs:.1}s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {}. {name}: {detail} ({secs:.1}s)", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        criteria.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
