//! Deterministic offline clients.
//!
//! [`MockGenerator`] rewrites texts with the lexicon: negatives swap one term
//! for its contrast under the requested pattern, paraphrases swap a term for
//! a synonym, translations map every known term to the other language.
//! [`MockJudge`] scores pairs by character 3-gram Jaccard overlap.
//! [`Flaky`] injects transient failures in front of any client.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ClientError, GenerationClient, JudgeClient, NegativeOutcome, PairKind, PositiveMode};
use crate::corpus::Lang;
use crate::lexicon::{self, contrast_for, join_segments, Segment};
use crate::text::{fnv1a64, ngram_jaccard};
use crate::typology::{pattern_catalog, ShiftPattern};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TagPolicy {
    /// Patterns for which the text contains a swappable term.
    Applicable,
    /// Every catalog id, regardless of domain.
    AllCatalog,
    Empty,
}

#[derive(Debug, Clone)]
pub struct MockGenerator {
    seed: u64,
    tag_policy: TagPolicy,
    loose_paraphrase_rate: f64,
}

impl MockGenerator {
    pub fn new(seed: u64) -> Self {
        MockGenerator {
            seed,
            tag_policy: TagPolicy::Applicable,
            loose_paraphrase_rate: 0.1,
        }
    }

    pub fn with_tag_policy(mut self, policy: TagPolicy) -> Self {
        self.tag_policy = policy;
        self
    }

    /// Probability that a paraphrase also drops a term, which the mock
    /// judge then scores below a perfect match.
    pub fn with_loose_paraphrase_rate(mut self, rate: f64) -> Self {
        self.loose_paraphrase_rate = rate;
        self
    }

    fn rng_for(&self, text: &str) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a64(text.as_bytes()))
    }
}

fn term_keys<'a>(segs: &'a [Segment<'a>]) -> impl Iterator<Item = &'static str> + 'a {
    segs.iter().filter_map(|s| match s {
        Segment::Term { key, .. } => Some(*key),
        Segment::Other(_) => None,
    })
}

impl GenerationClient for MockGenerator {
    fn tag_axes(&self, text: &str, candidates: &[&ShiftPattern]) -> Result<Vec<String>, ClientError> {
        Ok(match self.tag_policy {
            TagPolicy::Empty => Vec::new(),
            TagPolicy::AllCatalog => pattern_catalog().iter().map(|p| p.id.to_string()).collect(),
            TagPolicy::Applicable => {
                let segs = lexicon::segment(text);
                candidates
                    .iter()
                    .filter(|p| term_keys(&segs).any(|k| contrast_for(p.id, k).is_some()))
                    .map(|p| p.id.to_string())
                    .collect()
            }
        })
    }

    fn make_negative(&self, text: &str, pattern: &ShiftPattern) -> Result<NegativeOutcome, ClientError> {
        let segs = lexicon::segment(text);
        let hit = segs.iter().enumerate().find_map(|(i, s)| match s {
            Segment::Term { key, lang, .. } => contrast_for(pattern.id, key).map(|to| (i, to, *lang)),
            Segment::Other(_) => None,
        });
        let Some((pos, to, lang)) = hit else {
            return Ok(NegativeOutcome::Refusal);
        };
        let replacement = lexicon::term(to).expect("contrast targets are lexicon terms").canonical(lang);
        let variant = join_segments(
            segs.iter()
                .enumerate()
                .map(|(i, s)| if i == pos { replacement } else { s.surface() }),
        );
        Ok(NegativeOutcome::Variant(variant))
    }

    fn make_positive(&self, text: &str, lang: Lang, mode: PositiveMode) -> Result<String, ClientError> {
        match mode {
            PositiveMode::Translation => Ok(lexicon::translate(text, lang.flipped())),
            PositiveMode::Paraphrase => {
                let segs = lexicon::segment(text);
                let swappable: Vec<usize> = segs
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| match s {
                        Segment::Term { key, lang, .. } => {
                            lexicon::term(key).expect("indexed").surfaces(*lang).len() > 1
                        }
                        Segment::Other(_) => false,
                    })
                    .map(|(i, _)| i)
                    .collect();
                if swappable.is_empty() {
                    return Ok(text.to_string());
                }
                let mut rng = self.rng_for(text);
                let pick = swappable[rng.gen_range(0..swappable.len())];
                let loose = rng.gen::<f64>() < self.loose_paraphrase_rate;
                // a loose paraphrase drops the last term other than the swapped one
                let dropped = if loose {
                    (0..segs.len())
                        .rev()
                        .find(|&i| i != pick && matches!(segs[i], Segment::Term { .. }))
                } else {
                    None
                };
                let parts = segs.iter().enumerate().filter_map(|(i, s)| {
                    if Some(i) == dropped {
                        return None;
                    }
                    if i != pick {
                        return Some(s.surface());
                    }
                    let Segment::Term { key, lang, variant, .. } = s else {
                        unreachable!("only terms are swappable")
                    };
                    let surfaces = lexicon::term(key).expect("indexed").surfaces(*lang);
                    Some(surfaces[(variant + 1) % surfaces.len()])
                });
                Ok(join_segments(parts))
            }
        }
    }
}

/// Lexical-overlap judge.
///
/// Negatives: with `j` the character 3-gram Jaccard of the raw texts, the
/// score is 8 to 10 on `j ∈ [0.3, 0.8]` (peaking at 0.55) and falls linearly
/// to 0 at `j = 0` and `j = 1`, so lexically close but not identical
/// variants score highest.
///
/// Positives: `10 · j` where `j` is computed after mapping both texts onto
/// canonical Korean lexicon surfaces, so exact translations and synonym
/// paraphrases score 10 and lossy rewrites score lower.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockJudge;

impl MockJudge {
    pub fn negative_score(jaccard: f64) -> f64 {
        let j = jaccard.clamp(0.0, 1.0);
        if j < 0.3 {
            8.0 * j / 0.3
        } else if j <= 0.8 {
            8.0 + 2.0 * (1.0 - (j - 0.55).abs() / 0.25)
        } else {
            8.0 * (1.0 - j) / 0.2
        }
    }
}

impl JudgeClient for MockJudge {
    fn score(&self, kind: PairKind, source: &str, candidate: &str) -> Result<f64, ClientError> {
        let score = match kind {
            PairKind::Negative => MockJudge::negative_score(ngram_jaccard(source, candidate, 3)),
            PairKind::Positive => {
                let a = lexicon::canonicalize(source);
                let b = lexicon::canonicalize(candidate);
                10.0 * ngram_jaccard(&a, &b, 3)
            }
        };
        Ok(score.clamp(0.0, 10.0))
    }
}

/// Fails the first `failures` calls for each distinct request with a
/// transient error, then delegates. Counting per request keeps the
/// behaviour independent of thread scheduling.
#[derive(Debug)]
pub struct Flaky<C> {
    inner: C,
    failures: usize,
    seen: Mutex<HashMap<(u8, String), usize>>,
}

impl<C> Flaky<C> {
    pub fn new(inner: C, failures: usize) -> Self {
        Flaky {
            inner,
            failures,
            seen: Mutex::new(HashMap::new()),
        }
    }

    fn gate(&self, op: u8, key: String) -> Result<(), ClientError> {
        let mut seen = self.seen.lock().expect("flaky counter lock");
        let n = seen.entry((op, key)).or_insert(0);
        *n += 1;
        if *n <= self.failures {
            Err(ClientError::Transient(format!("injected failure {n}")))
        } else {
            Ok(())
        }
    }
}

impl<C: GenerationClient> GenerationClient for Flaky<C> {
    fn tag_axes(&self, text: &str, candidates: &[&ShiftPattern]) -> Result<Vec<String>, ClientError> {
        self.gate(0, text.to_string())?;
        self.inner.tag_axes(text, candidates)
    }

    fn make_negative(&self, text: &str, pattern: &ShiftPattern) -> Result<NegativeOutcome, ClientError> {
        self.gate(1, format!("{}\u{0}{text}", pattern.id))?;
        self.inner.make_negative(text, pattern)
    }

    fn make_positive(&self, text: &str, lang: Lang, mode: PositiveMode) -> Result<String, ClientError> {
        self.gate(2, format!("{mode:?}\u{0}{text}"))?;
        self.inner.make_positive(text, lang, mode)
    }
}

impl<C: JudgeClient> JudgeClient for Flaky<C> {
    fn score(&self, kind: PairKind, source: &str, candidate: &str) -> Result<f64, ClientError> {
        self.gate(3, format!("{kind}\u{0}{source}\u{0}{candidate}"))?;
        self.inner.score(kind, source, candidate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::typology::pattern_by_id;

    #[test]
    fn negative_score_shape() {
        assert_eq!(MockJudge::negative_score(0.0), 0.0);
        assert_eq!(MockJudge::negative_score(1.0), 0.0);
        assert!((MockJudge::negative_score(0.55) - 10.0).abs() < 1e-12);
        assert!((MockJudge::negative_score(0.3) - 8.0).abs() < 1e-12);
        assert!((MockJudge::negative_score(0.8) - 8.0).abs() < 1e-12);
        assert!(MockJudge::negative_score(0.9) < 8.0);
        assert!(MockJudge::negative_score(0.2) < 8.0);
    }

    #[test]
    fn negatives_swap_one_contrast_term() {
        let gen = MockGenerator::new(0);
        let src = "삼성전자 2분기 영업이익 전년 대비 크게 증가했다";
        let temporal = pattern_by_id("temporal_variation").unwrap();
        assert_eq!(
            gen.make_negative(src, temporal).unwrap(),
            NegativeOutcome::Variant("삼성전자 4분기 영업이익 전년 대비 크게 증가했다".into())
        );
        let sentiment = pattern_by_id("intensified_sentiment").unwrap();
        assert_eq!(
            gen.make_negative(src, sentiment).unwrap(),
            NegativeOutcome::Variant("삼성전자 2분기 영업이익 전년 대비 소폭 증가했다".into())
        );
        let sanction = pattern_by_id("shifts_in_sanction_application").unwrap();
        assert_eq!(gen.make_negative(src, sanction).unwrap(), NegativeOutcome::Refusal);
    }

    #[test]
    fn tags_follow_applicable_contrasts() {
        let gen = MockGenerator::new(0);
        let cands: Vec<_> = crate::typology::patterns_for_source(crate::SourceDomain::Disclosure);
        let tags = gen
            .tag_axes("삼성전자 신규 공장 투자 10% 계획이다", &cands)
            .unwrap();
        assert_eq!(tags, ["elaborated_details", "plan_realization"]);
        let none = MockGenerator::new(0).with_tag_policy(TagPolicy::Empty);
        assert!(none.tag_axes("x", &cands).unwrap().is_empty());
    }

    #[test]
    fn paraphrase_and_translation_score_as_positives() {
        let gen = MockGenerator::new(7).with_loose_paraphrase_rate(0.0);
        let src = "Naver third quarter revenue year on year modestly decreased";
        let para = gen.make_positive(src, Lang::En, PositiveMode::Paraphrase).unwrap();
        assert_ne!(para, src);
        let tr = gen.make_positive(src, Lang::En, PositiveMode::Translation).unwrap();
        assert_eq!(tr, "네이버 3분기 매출 전년 대비 소폭 감소했다");
        let judge = MockJudge;
        assert_eq!(judge.score(PairKind::Positive, src, &para).unwrap(), 10.0);
        assert_eq!(judge.score(PairKind::Positive, src, &tr).unwrap(), 10.0);

        let loose = MockGenerator::new(7).with_loose_paraphrase_rate(1.0);
        let lossy = loose.make_positive(src, Lang::En, PositiveMode::Paraphrase).unwrap();
        assert!(judge.score(PairKind::Positive, src, &lossy).unwrap() < 9.0);
    }

    #[test]
    fn mock_is_deterministic_per_seed() {
        let src = "삼성전자 2분기 매출 전년 대비 크게 증가했다";
        let a = MockGenerator::new(1).make_positive(src, Lang::Ko, PositiveMode::Paraphrase).unwrap();
        let b = MockGenerator::new(1).make_positive(src, Lang::Ko, PositiveMode::Paraphrase).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn flaky_fails_then_recovers() {
        let flaky = Flaky::new(MockJudge, 2);
        assert!(flaky.score(PairKind::Negative, "a", "b").is_err());
        assert!(flaky.score(PairKind::Negative, "a", "b").is_err());
        assert!(flaky.score(PairKind::Negative, "a", "b").is_ok());
        assert!(flaky.score(PairKind::Negative, "a", "c").is_err());
    }
}
