//! Small Korean/English financial lexicon.
//!
//! Backs the deterministic mock clients and the synthetic fixtures. Every
//! term has a stable key plus one or more surface forms per language; the
//! first surface is canonical, the rest are synonyms used for paraphrases.
//! Contrast pairs tie two terms to the shift pattern that swaps them.
//!
//! Texts built from the lexicon are space-separated token sequences, so a
//! greedy longest match over tokens recovers the terms.

use std::collections::HashMap;
use std::sync::OnceLock;

use crate::corpus::Lang;

#[derive(Debug)]
pub struct Term {
    pub key: &'static str,
    pub ko: &'static [&'static str],
    pub en: &'static [&'static str],
}

impl Term {
    pub fn surfaces(&self, lang: Lang) -> &'static [&'static str] {
        match lang {
            Lang::Ko => self.ko,
            Lang::En => self.en,
        }
    }

    pub fn canonical(&self, lang: Lang) -> &'static str {
        self.surfaces(lang)[0]
    }
}

macro_rules! terms {
    ($( $key:literal => [$($ko:literal),+] [$($en:literal),+] ;)*) => {
        &[$( Term { key: $key, ko: &[$($ko),+], en: &[$($en),+] } ),*]
    };
}

pub static TERMS: &[Term] = terms! {
    // companies
    "samsung" => ["삼성전자"] ["Samsung Electronics"];
    "hyundai" => ["현대차"] ["Hyundai Motor"];
    "hynix" => ["SK하이닉스"] ["SK Hynix"];
    "lgchem" => ["LG화학"] ["LG Chem"];
    "naver" => ["네이버"] ["Naver"];
    "kakao" => ["카카오"] ["Kakao"];
    "posco" => ["포스코"] ["POSCO"];
    "celltrion" => ["셀트리온"] ["Celltrion"];
    // macro subjects
    "domestic_economy" => ["국내 경제"] ["the domestic economy"];
    "chip_cycle" => ["반도체 업황"] ["the chip cycle"];
    "stock_market" => ["국내 증시"] ["the domestic stock market"];
    // metrics
    "op_profit" => ["영업이익"] ["operating profit"];
    "revenue" => ["매출", "매출액"] ["revenue", "sales"];
    "net_income" => ["순이익", "당기순이익"] ["net income", "net profit"];
    "exports" => ["수출", "수출액"] ["exports", "overseas shipments"];
    "share_price" => ["주가"] ["share price", "stock price"];
    // periods
    "q1" => ["1분기"] ["first quarter", "Q1"];
    "q2" => ["2분기"] ["second quarter", "Q2"];
    "q3" => ["3분기"] ["third quarter", "Q3"];
    "q4" => ["4분기"] ["fourth quarter", "Q4"];
    "this_year" => ["올해", "금년"] ["this year"];
    "last_year" => ["작년", "지난해"] ["last year"];
    "yoy" => ["전년 대비", "전년 동기 대비"] ["year on year", "from a year earlier"];
    "qoq" => ["전분기 대비"] ["quarter on quarter"];
    // movement and intensity
    "rose" => ["증가했다", "늘었다"] ["increased", "rose"];
    "fell" => ["감소했다", "줄었다"] ["decreased", "fell"];
    "sharply" => ["크게", "대폭"] ["significantly", "sharply"];
    "modestly" => ["소폭"] ["modestly", "slightly"];
    "strong_growth" => ["강력한 성장"] ["strong growth", "robust growth"];
    "steady_growth" => ["견조한 성장"] ["steady growth", "solid growth"];
    "pct5" => ["5%"] ["5%"];
    "pct10" => ["10%"] ["10%"];
    "pct25" => ["25%"] ["25%"];
    "pct40" => ["40%"] ["40%"];
    // research reports
    "consensus" => ["컨센서스", "시장 예상치"] ["consensus", "market expectations"];
    "agreement" => ["합의"] ["agreement"];
    "target_price" => ["목표주가"] ["target price", "price target"];
    "fair_price" => ["적정 가격"] ["reasonable price"];
    "beat" => ["상회했다", "웃돌았다"] ["beat", "exceeded"];
    "missed" => ["하회했다", "밑돌았다"] ["missed", "fell short of"];
    "recorded" => ["기록했다"] ["recorded", "posted"];
    "expected" => ["전망된다", "예상된다"] ["is expected", "is forecast"];
    "confirmed" => ["확인됐다"] ["was confirmed", "was verified"];
    "estimated" => ["추정된다"] ["is estimated"];
    // disclosures
    "new_plant" => ["신규 공장"] ["a new plant", "a new factory"];
    "existing_plant" => ["기존 공장"] ["the existing plant"];
    "investment" => ["투자", "출자"] ["investment", "capital outlay"];
    "acquisition" => ["인수"] ["acquisition", "takeover"];
    "planned" => ["계획이다", "예정이다"] ["is planned", "is scheduled"];
    "completed" => ["완료했다", "마무리했다"] ["was completed", "was finalized"];
    "cancelled" => ["취소했다", "철회했다"] ["was cancelled", "was withdrawn"];
    "demand_recovery" => ["수요 회복에 따라"] ["on recovering demand", "as demand recovers"];
    "export_controls" => ["수출 규제에 따라"] ["under new export controls"];
    // legal texts
    "financial_institution" => ["금융회사는", "금융기관은"] ["a financial institution", "a financial firm"];
    "filer" => ["공시 의무자는"] ["the filer", "the disclosing party"];
    "reasonable_cause" => ["정당한 사유"] ["reasonable cause", "justifiable grounds"];
    "manifest_cause" => ["명백한 사유"] ["manifest cause"];
    "material_matters" => ["중요한 사항"] ["material matters", "significant matters"];
    "minor_matters" => ["경미한 사항"] ["minor matters"];
    "without" => ["없이"] ["without"];
    "in_advance" => ["사전에", "미리"] ["in advance", "beforehand"];
    "afterwards" => ["사후에"] ["afterwards"];
    "must_report" => ["신고해야 한다"] ["must report", "must notify"];
    "must_obtain_approval" => ["승인받아야 한다"] ["must obtain approval"];
    "upon_violation" => ["위반 시"] ["upon violation", "in case of breach"];
    "fine" => ["과태료가"] ["an administrative fine", "a monetary fine"];
    "imprisonment" => ["징역형이"] ["imprisonment"];
    "twice" => ["두 배로"] ["at twice the rate", "doubled"];
    "half" => ["절반으로"] ["at half the rate"];
    "imposed" => ["부과된다", "부과한다"] ["is imposed", "applies"];
};

#[derive(Debug)]
pub struct Contrast {
    pub pattern_id: &'static str,
    pub a: &'static str,
    pub b: &'static str,
}

macro_rules! contrasts {
    ($( $pat:literal : $a:literal <=> $b:literal ;)*) => {
        &[$( Contrast { pattern_id: $pat, a: $a, b: $b } ),*]
    };
}

pub static CONTRASTS: &[Contrast] = contrasts! {
    "temporal_variation": "q1" <=> "q3";
    "temporal_variation": "q2" <=> "q4";
    "temporal_variation": "this_year" <=> "last_year";
    "temporal_variation": "yoy" <=> "qoq";
    "micro_vs_macro_analysis": "samsung" <=> "chip_cycle";
    "micro_vs_macro_analysis": "hynix" <=> "chip_cycle";
    "micro_vs_macro_analysis": "hyundai" <=> "domestic_economy";
    "micro_vs_macro_analysis": "lgchem" <=> "domestic_economy";
    "micro_vs_macro_analysis": "posco" <=> "domestic_economy";
    "micro_vs_macro_analysis": "naver" <=> "stock_market";
    "micro_vs_macro_analysis": "kakao" <=> "stock_market";
    "micro_vs_macro_analysis": "celltrion" <=> "stock_market";
    "facts_vs_opinions": "recorded" <=> "expected";
    "facts_vs_opinions": "confirmed" <=> "estimated";
    "financial_jargon_vs_everyday_language": "consensus" <=> "agreement";
    "financial_jargon_vs_everyday_language": "target_price" <=> "fair_price";
    "intensified_sentiment": "sharply" <=> "modestly";
    "intensified_sentiment": "strong_growth" <=> "steady_growth";
    "elaborated_details": "new_plant" <=> "existing_plant";
    "elaborated_details": "investment" <=> "acquisition";
    "elaborated_details": "pct10" <=> "pct25";
    "elaborated_details": "pct5" <=> "pct40";
    "plan_realization": "planned" <=> "cancelled";
    "plan_realization": "completed" <=> "planned";
    "emerging_situations": "demand_recovery" <=> "export_controls";
    "legal_interpretation_shifts": "reasonable_cause" <=> "manifest_cause";
    "legal_interpretation_shifts": "material_matters" <=> "minor_matters";
    "shifts_in_sanction_application": "fine" <=> "imprisonment";
    "shifts_in_sanction_application": "twice" <=> "half";
    "procedural_clarifications": "in_advance" <=> "afterwards";
    "procedural_clarifications": "must_report" <=> "must_obtain_approval";
};

pub fn term(key: &str) -> Option<&'static Term> {
    index().by_key.get(key).map(|&i| &TERMS[i])
}

/// The term that `key` is swapped for under `pattern_id`, if any.
pub fn contrast_for(pattern_id: &str, key: &str) -> Option<&'static str> {
    let in_pattern = || CONTRASTS.iter().filter(|c| c.pattern_id == pattern_id);
    in_pattern()
        .find(|c| c.a == key)
        .map(|c| c.b)
        .or_else(|| in_pattern().find(|c| c.b == key).map(|c| c.a))
}

/// One piece of a segmented text: a recognised term or a passthrough token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment<'a> {
    Term {
        key: &'static str,
        lang: Lang,
        variant: usize,
        surface: &'a str,
    },
    Other(&'a str),
}

impl Segment<'_> {
    pub fn surface(&self) -> &str {
        match self {
            Segment::Term { surface, .. } => surface,
            Segment::Other(s) => s,
        }
    }
}

const MAX_TERM_TOKENS: usize = 4;

struct Index {
    by_key: HashMap<&'static str, usize>,
    by_surface: HashMap<&'static str, (usize, Lang, usize)>,
}

fn index() -> &'static Index {
    static INDEX: OnceLock<Index> = OnceLock::new();
    INDEX.get_or_init(|| {
        let mut by_key = HashMap::new();
        let mut by_surface = HashMap::new();
        for (i, t) in TERMS.iter().enumerate() {
            by_key.insert(t.key, i);
            for lang in Lang::ALL {
                for (v, s) in t.surfaces(lang).iter().enumerate() {
                    by_surface.entry(*s).or_insert((i, lang, v));
                }
            }
        }
        Index { by_key, by_surface }
    })
}

/// Greedy longest-match segmentation over whitespace tokens.
pub fn segment(text: &str) -> Vec<Segment<'_>> {
    let idx = index();
    // byte spans of each token so multi-token surfaces can be sliced back out
    let spans: Vec<(usize, usize)> = text
        .split_whitespace()
        .map(|tok| {
            let start = tok.as_ptr() as usize - text.as_ptr() as usize;
            (start, start + tok.len())
        })
        .collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < spans.len() {
        let mut matched = None;
        for len in (1..=MAX_TERM_TOKENS.min(spans.len() - i)).rev() {
            let joined: Vec<&str> = spans[i..i + len].iter().map(|&(s, e)| &text[s..e]).collect();
            let candidate = joined.join(" ");
            if let Some(&(t, lang, variant)) = idx.by_surface.get(candidate.as_str()) {
                let surface = &text[spans[i].0..spans[i + len - 1].1];
                matched = Some((len, t, lang, variant, surface));
                break;
            }
        }
        match matched {
            Some((len, t, lang, variant, surface)) => {
                out.push(Segment::Term {
                    key: TERMS[t].key,
                    lang,
                    variant,
                    surface,
                });
                i += len;
            }
            None => {
                let (s, e) = spans[i];
                out.push(Segment::Other(&text[s..e]));
                i += 1;
            }
        }
    }
    out
}

pub fn join_segments<'a>(parts: impl IntoIterator<Item = &'a str>) -> String {
    parts.into_iter().collect::<Vec<_>>().join(" ")
}

/// Renders a key sequence in `lang` using canonical surfaces.
pub fn render(keys: &[&str], lang: Lang) -> String {
    join_segments(
        keys.iter()
            .map(|k| term(k).unwrap_or_else(|| panic!("unknown lexicon key `{k}`")).canonical(lang)),
    )
}

/// Token-level dictionary translation into `target`; unknown tokens pass
/// through unchanged.
pub fn translate(text: &str, target: Lang) -> String {
    let segs = segment(text);
    join_segments(segs.iter().map(|s| match s {
        Segment::Term { key, .. } => term(key).expect("indexed").canonical(target),
        Segment::Other(tok) => tok,
    }))
}

/// Maps every recognised term to its Korean canonical surface, so that
/// translations and synonym paraphrases collapse to the same string.
pub fn canonicalize(text: &str) -> String {
    translate(text, Lang::Ko)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_and_surfaces_are_unique() {
        let mut keys: Vec<_> = TERMS.iter().map(|t| t.key).collect();
        keys.sort_unstable();
        keys.dedup();
        assert_eq!(keys.len(), TERMS.len());
        let mut seen = HashMap::new();
        for t in TERMS {
            for lang in Lang::ALL {
                for s in t.surfaces(lang) {
                    let prev = seen.insert(*s, t.key);
                    assert!(prev.is_none() || prev == Some(t.key), "surface `{s}` reused");
                    assert!(s.split_whitespace().count() <= MAX_TERM_TOKENS);
                }
            }
        }
    }

    #[test]
    fn contrasts_reference_known_terms_and_patterns() {
        for c in CONTRASTS {
            assert!(term(c.a).is_some(), "{}", c.a);
            assert!(term(c.b).is_some(), "{}", c.b);
            assert!(crate::typology::pattern_by_id(c.pattern_id).is_some());
        }
        assert_eq!(contrast_for("plan_realization", "planned"), Some("cancelled"));
        assert_eq!(contrast_for("plan_realization", "completed"), Some("planned"));
        assert_eq!(contrast_for("plan_realization", "cancelled"), Some("planned"));
        assert_eq!(contrast_for("temporal_variation", "planned"), None);
    }

    #[test]
    fn segmentation_prefers_longest_match() {
        let segs = segment("Kakao revenue fell short of consensus");
        let keys: Vec<_> = segs
            .iter()
            .filter_map(|s| match s {
                Segment::Term { key, .. } => Some(*key),
                _ => None,
            })
            .collect();
        assert_eq!(keys, ["kakao", "revenue", "missed", "consensus"]);
    }

    #[test]
    fn translation_round_trip() {
        let ko = render(&["samsung", "q2", "op_profit", "yoy", "sharply", "rose"], Lang::Ko);
        assert_eq!(ko, "삼성전자 2분기 영업이익 전년 대비 크게 증가했다");
        let en = translate(&ko, Lang::En);
        assert_eq!(
            en,
            "Samsung Electronics second quarter operating profit year on year significantly increased"
        );
        assert_eq!(translate(&en, Lang::Ko), ko);
        assert_eq!(canonicalize("삼성전자 2분기 매출액 대폭 늘었다"), "삼성전자 2분기 매출 크게 증가했다");
        assert_eq!(translate("미지의 단어", Lang::En), "미지의 단어");
    }
}
