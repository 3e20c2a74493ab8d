//! Deterministic synthetic data built from the bundled lexicon.
//!
//! Every generator is a pure function of its arguments; the same seed
//! always yields the same records in the same order.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Document, Lang, SourceDomain};
use crate::evalsts::StsPair;
use crate::lexicon;
use crate::mining::mock::{MockGenerator, MockJudge};
use crate::mining::{mine_triplets, GenerationClient, MiningConfig, NegativeOutcome, PositiveMode, Triplet};
use crate::tokaudit::Vocab;
use crate::typology::patterns_for_source;

const COMPANIES: &[&str] = &["samsung", "hyundai", "hynix", "lgchem", "naver", "kakao", "posco", "celltrion"];
const QUARTERS: &[&str] = &["q1", "q2", "q3", "q4"];
const METRICS: &[&str] = &["op_profit", "revenue", "net_income", "exports"];
const PCTS: &[&str] = &["pct5", "pct10", "pct25", "pct40"];
const UP_DOWN: &[&str] = &["rose", "fell"];
const INTENSITY: &[&str] = &["sharply", "modestly"];
const INSTITUTION: &[&str] = &["financial_institution", "filer"];

/// A template is a sequence of slots; each slot lists alternative keys.
type Template = &'static [&'static [&'static str]];

const NEWS: &[Template] = &[
    &[COMPANIES, QUARTERS, METRICS, &["yoy", "qoq"], INTENSITY, UP_DOWN],
    &[COMPANIES, &["share_price"], &["this_year", "last_year"], PCTS, UP_DOWN],
];
const RESEARCH: &[Template] = &[
    &[COMPANIES, QUARTERS, METRICS, &["consensus", "target_price"], &["beat", "missed"]],
    &[
        COMPANIES,
        &["revenue", "net_income", "exports"],
        &["strong_growth", "steady_growth"],
        &["expected", "recorded", "confirmed", "estimated"],
    ],
];
const DISCLOSURE: &[Template] = &[
    &[
        COMPANIES,
        &["demand_recovery", "export_controls"],
        &["new_plant", "existing_plant"],
        &["investment", "acquisition"],
        PCTS,
        &["planned", "completed", "cancelled"],
    ],
    &[COMPANIES, QUARTERS, METRICS, PCTS, INTENSITY, UP_DOWN],
];
const LEGAL: &[Template] = &[
    &[
        INSTITUTION,
        &["material_matters", "minor_matters"],
        &["in_advance", "afterwards"],
        &["must_report", "must_obtain_approval"],
    ],
    &[
        INSTITUTION,
        &["reasonable_cause", "manifest_cause"],
        &["without"],
        &["upon_violation"],
        &["fine", "imprisonment"],
        &["twice", "half"],
        &["imposed"],
    ],
];

fn templates(domain: SourceDomain) -> &'static [Template] {
    match domain {
        SourceDomain::News => NEWS,
        SourceDomain::ResearchReport => RESEARCH,
        SourceDomain::Disclosure => DISCLOSURE,
        SourceDomain::Legal => LEGAL,
    }
}

/// Domain mix of the synthetic corpus.
const DOMAIN_WEIGHTS: [(SourceDomain, f64); 4] = [
    (SourceDomain::News, 0.35),
    (SourceDomain::ResearchReport, 0.25),
    (SourceDomain::Disclosure, 0.15),
    (SourceDomain::Legal, 0.25),
];

fn pick_domain(rng: &mut ChaCha8Rng) -> SourceDomain {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (d, w) in DOMAIN_WEIGHTS {
        acc += w;
        if u < acc {
            return d;
        }
    }
    SourceDomain::Legal
}

/// Lexicon keys of one sentence drawn from `domain`.
pub fn sentence_keys(domain: SourceDomain, rng: &mut ChaCha8Rng) -> Vec<&'static str> {
    let all = templates(domain);
    let template = all[rng.gen_range(0..all.len())];
    template.iter().map(|slot| slot[rng.gen_range(0..slot.len())]).collect()
}

/// `n` single-sentence documents with ids `syn-00000`, `syn-00001`, ...
pub fn synthetic_corpus(n: usize, seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let domain = pick_domain(&mut rng);
            let lang = if rng.gen_bool(0.5) { Lang::Ko } else { Lang::En };
            let text = lexicon::render(&sentence_keys(domain, &mut rng), lang);
            Document::new(format!("syn-{i:05}"), lang, domain, text, None)
        })
        .collect()
}

/// The synthetic corpus plus records that each trip one filter rule:
/// `min_tokens` bounds the short and long ones, and every fifth clean
/// record gets a copy that is markup-heavy or full of noise glyphs.
pub fn corpus_with_noise(n: usize, seed: u64, min_tokens: usize, max_tokens: usize) -> Vec<Document> {
    let clean = synthetic_corpus(n, seed);
    let mut out = Vec::with_capacity(n + n / 5 + 2);
    for (i, doc) in clean.into_iter().enumerate() {
        if i % 5 == 4 {
            let noisy = if i % 10 == 4 {
                format!("<div class=\"row\"><span>{}</span></div>", doc.text)
            } else {
                let garbled: String = doc.text.chars().map(|c| if c == ' ' { ' ' } else { '\u{FFFD}' }).collect();
                format!("{} {garbled}", doc.text)
            };
            out.push(Document::new(format!("{}-x", doc.id), doc.lang, doc.source_domain, noisy, None));
        }
        out.push(doc);
    }
    let short = vec!["짧은"; min_tokens.saturating_sub(1).max(1)].join(" ");
    out.push(Document::new("noise-short", Lang::Ko, SourceDomain::News, short, None));
    let long = vec!["token"; max_tokens + 1].join(" ");
    out.push(Document::new("noise-long", Lang::En, SourceDomain::Legal, long, None));
    out
}

/// Mining config used by the fixture: default thresholds, no backoff sleep.
pub fn fixture_mining_config(seed: u64) -> MiningConfig {
    MiningConfig {
        backoff_base_ms: 0,
        seed,
        ..MiningConfig::default()
    }
}

/// Triplets mined from `synthetic_corpus(n_docs, seed)` with the mock clients.
pub fn triplet_fixture(n_docs: usize, seed: u64) -> Vec<Triplet> {
    let docs = synthetic_corpus(n_docs, seed);
    mine_triplets(&docs, &MockGenerator::new(seed), &MockJudge, &fixture_mining_config(seed))
        .expect("mock clients never fail")
        .triplets
}

/// Graded STS pairs built from synthetic sentences. Each pair is one of
/// five relations with a gold band:
///
/// | relation                       | gold      |
/// |--------------------------------|-----------|
/// | exact translation              | 4.6..5.0  |
/// | synonym paraphrase             | 3.8..4.4  |
/// | same-language contrast swap    | 2.0..2.6  |
/// | cross-language contrast swap   | 1.2..1.8  |
/// | unrelated sentence             | 0.0..0.5  |
///
/// With `lang` set, every first sentence is in that language.
pub fn sts_fixture(n: usize, seed: u64, lang: Option<Lang>) -> Vec<StsPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5354_535f);
    let gen = MockGenerator::new(seed).with_loose_paraphrase_rate(0.0);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let domain = pick_domain(&mut rng);
        let l = lang.unwrap_or(if rng.gen_bool(0.5) { Lang::Ko } else { Lang::En });
        let s1 = lexicon::render(&sentence_keys(domain, &mut rng), l);
        let relation = rng.gen_range(0..5);
        let (s2, lo, hi) = match relation {
            0 => (gen.make_positive(&s1, l, PositiveMode::Translation).expect("mock"), 4.6, 5.0),
            1 => (gen.make_positive(&s1, l, PositiveMode::Paraphrase).expect("mock"), 3.8, 4.4),
            2 | 3 => {
                let patterns = patterns_for_source(domain);
                let swapped = patterns.iter().find_map(|p| match gen.make_negative(&s1, p).expect("mock") {
                    NegativeOutcome::Variant(v) => Some(v),
                    NegativeOutcome::Refusal => None,
                });
                let Some(neg) = swapped else { continue };
                if relation == 2 {
                    (neg, 2.0, 2.6)
                } else {
                    (lexicon::translate(&neg, l.flipped()), 1.2, 1.8)
                }
            }
            _ => {
                let other = pick_domain(&mut rng);
                let other_lang = if rng.gen_bool(0.5) { Lang::Ko } else { Lang::En };
                (lexicon::render(&sentence_keys(other, &mut rng), other_lang), 0.0, 0.5)
            }
        };
        if s2 == s1 {
            continue;
        }
        let mut pair = StsPair::new(s1, s2, rng.gen_range(lo..hi));
        pair.subdomain = Some(domain);
        out.push(pair);
    }
    out
}

/// Subdomain composition of the Korean financial STS benchmark.
pub const BENCHMARK_COMPOSITION: [(SourceDomain, usize); 4] = [
    (SourceDomain::News, 355),
    (SourceDomain::Disclosure, 500),
    (SourceDomain::ResearchReport, 421),
    (SourceDomain::Legal, 715),
];
pub const BENCHMARK_GOLD_MEAN: f64 = 0.59;
pub const BENCHMARK_GOLD_STD: f64 = 0.49;

/// Korean pairs with the benchmark's subdomain counts and a right-skewed
/// gold distribution: standardized exponential quantiles
/// `-ln(1 - (i + 0.5)/n)`, rescaled to the target mean and population
/// standard deviation, then shuffled. The extremes stay inside `[0, 5]`.
pub fn benchmark_fixture(seed: u64) -> Vec<StsPair> {
    let n: usize = BENCHMARK_COMPOSITION.iter().map(|(_, c)| c).sum();
    let q: Vec<f64> = (0..n).map(|i| -(1.0 - (i as f64 + 0.5) / n as f64).ln()).collect();
    let mean = q.iter().sum::<f64>() / n as f64;
    let std = (q.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let mut gold: Vec<f64> = q
        .iter()
        .map(|x| BENCHMARK_GOLD_MEAN + BENCHMARK_GOLD_STD * (x - mean) / std)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gold.shuffle(&mut rng);
    let mut gold = gold.into_iter();
    let mut out = Vec::with_capacity(n);
    for (domain, count) in BENCHMARK_COMPOSITION {
        for _ in 0..count {
            let s1 = lexicon::render(&sentence_keys(domain, &mut rng), Lang::Ko);
            let s2 = lexicon::render(&sentence_keys(domain, &mut rng), Lang::Ko);
            let mut pair = StsPair::new(s1, s2, gold.next().expect("one score per pair"));
            pair.subdomain = Some(domain);
            out.push(pair);
        }
    }
    out
}

/// A vocabulary of `size` distinct entries with exactly `korean_count`
/// Hangul-syllable-only tokens. The rest mixes Latin pieces, byte-level
/// fragments, jamo and mixed-script tokens, none of which qualify.
pub fn vocab_fixture(size: usize, korean_count: usize, seed: u64) -> Vocab {
    assert!(korean_count <= size, "korean_count exceeds size");
    const SYLLABLES: u32 = 0xD7A3 - 0xAC00 + 1;
    let syllable = |k: u32| char::from_u32(0xAC00 + k % SYLLABLES).expect("in block");
    let mut tokens: Vec<String> = (0..korean_count as u32)
        .map(|i| {
            if i < SYLLABLES {
                syllable(i).to_string()
            } else {
                format!("{}{}", syllable(i / SYLLABLES), syllable(i))
            }
        })
        .collect();
    tokens.extend((0..size - korean_count).map(|i| match i % 4 {
        0 => format!("tok{i}"),
        1 => format!("Ġ{i:x}"),
        2 => format!("ㄱ{i}"),
        _ => format!("{}{i}", syllable(i as u32)),
    }));
    tokens.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Vocab::from_strs(tokens)
}
