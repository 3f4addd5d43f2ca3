//! Corpus-level language profiles: character inventory size at 99.9%
//! occurrence coverage, type-token ratio and data size.

use super::ModelIoError;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use unicode_normalization::UnicodeNormalization;

/// Fraction of character occurrences the counted inventory must cover,
/// expressed as a ratio of integers so the threshold comparison stays exact.
const COVERAGE_NUM: u128 = 999;
const COVERAGE_DEN: u128 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageProfile {
    pub group_id: String,
    /// Number of distinct characters covering ≥ 99.9% of occurrences.
    pub unique_chars: usize,
    /// Unique lemmas divided by total tokens, in (0, 1].
    pub ttr: f64,
    /// Number of annotated data points (tokens).
    pub data_size: usize,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ProfileOptions {
    /// Case-fold lemmas before counting types. Off by default.
    pub case_fold: bool,
}

/// Profiles a corpus of (token, lemma) pairs with default options.
pub fn profile_corpus<'a, I>(group_id: &str, tokens: I) -> Result<LanguageProfile, ModelIoError>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    profile_corpus_with(group_id, tokens, ProfileOptions::default())
}

/// Profiles a corpus of (token, lemma) pairs.
///
/// Characters are counted as Unicode scalar values after NFC normalization;
/// whitespace is excluded. The character inventory is the smallest set,
/// filled in descending frequency order with ties broken by ascending
/// codepoint, whose cumulative count first reaches 99.9% of all occurrences.
pub fn profile_corpus_with<'a, I>(
    group_id: &str,
    tokens: I,
    options: ProfileOptions,
) -> Result<LanguageProfile, ModelIoError>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let mut char_counts: BTreeMap<char, u64> = BTreeMap::new();
    let mut lemmas: BTreeSet<String> = BTreeSet::new();
    let mut token_count: usize = 0;

    for (token, lemma) in tokens {
        token_count += 1;
        for ch in token.nfc() {
            if ch.is_whitespace() {
                continue;
            }
            *char_counts.entry(ch).or_insert(0) += 1;
        }
        let lemma: String = lemma.nfc().collect();
        if options.case_fold {
            lemmas.insert(lemma.to_lowercase());
        } else {
            lemmas.insert(lemma);
        }
    }

    if token_count == 0 {
        return Err(ModelIoError::EmptyCorpus);
    }
    let total: u128 = char_counts.values().map(|&c| c as u128).sum();
    if total == 0 {
        // Tokens made of nothing but whitespace have no countable characters.
        return Err(ModelIoError::EmptyCorpus);
    }

    // Descending frequency, ties by ascending codepoint. BTreeMap iteration
    // is already codepoint-ascending, so a stable sort by count suffices.
    let mut by_freq: Vec<(char, u64)> = char_counts.into_iter().collect();
    by_freq.sort_by(|a, b| b.1.cmp(&a.1));

    let mut covered: u128 = 0;
    let mut unique_chars = 0;
    for (_, count) in &by_freq {
        covered += *count as u128;
        unique_chars += 1;
        if covered * COVERAGE_DEN >= COVERAGE_NUM * total {
            break;
        }
    }

    Ok(LanguageProfile {
        group_id: group_id.to_string(),
        unique_chars,
        ttr: lemmas.len() as f64 / token_count as f64,
        data_size: token_count,
    })
}

/// Parses `token<TAB>lemma` lines. Blank lines are skipped.
pub fn parse_corpus(reader: impl BufRead) -> Result<Vec<(String, String)>, ModelIoError> {
    let mut pairs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        match (fields.next(), fields.next(), fields.next()) {
            (Some(token), Some(lemma), None) => pairs.push((token.to_string(), lemma.to_string())),
            _ => return Err(ModelIoError::CorpusFormat { line: idx + 1 }),
        }
    }
    Ok(pairs)
}
