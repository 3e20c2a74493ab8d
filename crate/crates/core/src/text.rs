//! Small text helpers shared across modules.

use std::collections::BTreeSet;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over raw bytes.
pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Character n-grams of `text` in order of occurrence, as string slices.
/// Empty when the text has fewer than `n` characters.
pub(crate) fn char_ngrams(text: &str, n: usize) -> Vec<&str> {
    if n == 0 {
        return Vec::new();
    }
    let bounds: Vec<usize> = text
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(text.len()))
        .collect();
    let chars = bounds.len() - 1;
    if chars < n {
        return Vec::new();
    }
    (0..=chars - n)
        .map(|i| &text[bounds[i]..bounds[i + n]])
        .collect()
}

/// Jaccard similarity of the character n-gram sets of two strings.
/// Two texts with no n-grams at all are treated as identical.
pub(crate) fn ngram_jaccard(a: &str, b: &str, n: usize) -> f64 {
    let sa: BTreeSet<&str> = char_ngrams(a, n).into_iter().collect();
    let sb: BTreeSet<&str> = char_ngrams(b, n).into_iter().collect();
    if sa.is_empty() && sb.is_empty() {
        return 1.0;
    }
    let inter = sa.intersection(&sb).count();
    let union = sa.len() + sb.len() - inter;
    inter as f64 / union as f64
}

pub(crate) fn whitespace_token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Split raw file bytes into `(line_number, bytes)` pairs, 1-based, with a
/// trailing `\r` removed. A final empty line after the last newline is dropped.
pub(crate) fn split_lines(bytes: &[u8]) -> Vec<(usize, &[u8])> {
    let mut out: Vec<(usize, &[u8])> = bytes
        .split(|&b| b == b'\n')
        .enumerate()
        .map(|(i, line)| (i + 1, line.strip_suffix(b"\r").unwrap_or(line)))
        .collect();
    if matches!(out.last(), Some((_, l)) if l.is_empty()) {
        out.pop();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x8594_4171_f739_67e8);
    }

    #[test]
    fn ngrams_respect_char_boundaries() {
        assert_eq!(char_ngrams("금융시장", 3), vec!["금융시", "융시장"]);
        assert_eq!(char_ngrams("ab", 3), Vec::<&str>::new());
        assert_eq!(char_ngrams("abc", 3), vec!["abc"]);
    }

    #[test]
    fn jaccard_bounds() {
        assert_eq!(ngram_jaccard("abcdef", "abcdef", 3), 1.0);
        assert_eq!(ngram_jaccard("abcdef", "uvwxyz", 3), 0.0);
        let j = ngram_jaccard("abcdef", "abcdxy", 3);
        assert!(j > 0.0 && j < 1.0);
    }

    #[test]
    fn line_splitting() {
        let lines = split_lines(b"a\r\nb\n\nc\n");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], (1, &b"a"[..]));
        assert_eq!(lines[2], (3, &b""[..]));
        assert!(split_lines(b"").is_empty());
    }
}
