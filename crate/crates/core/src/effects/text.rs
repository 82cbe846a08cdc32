//! Reading-difficulty features of note texts: word, sentence, and syllable
//! counts feeding the Flesch-Kincaid grade level.
//!
//! Syllables use the standard vowel-group heuristic (a e i o u y), with a
//! final lone "e" dropped unless the word ends in consonant + "le". The
//! counts are deterministic functions of the text, not linguistic truth.

/// Whitespace tokens containing at least one alphanumeric character.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace()
        .filter(|w| w.chars().any(|c| c.is_alphanumeric()))
        .count()
}

/// Segments ended by runs of '.', '!' or '?'. A trailing segment with words
/// but no terminator still counts, so unpunctuated text has one sentence.
pub fn sentence_count(text: &str) -> usize {
    text.split(['.', '!', '?'])
        .filter(|seg| word_count(seg) > 0)
        .count()
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
}

/// Heuristic syllable count for one word, never below 1.
pub fn syllables(word: &str) -> usize {
    let letters: Vec<char> = word
        .chars()
        .filter(|c| c.is_alphabetic())
        .map(|c| c.to_ascii_lowercase())
        .collect();
    if letters.is_empty() {
        return 1; // purely numeric/symbolic tokens count as one beat
    }
    let mut groups = 0usize;
    let mut in_group = false;
    for &c in &letters {
        if is_vowel(c) {
            if !in_group {
                groups += 1;
                in_group = true;
            }
        } else {
            in_group = false;
        }
    }
    // a trailing lone "e" (after a consonant) is usually silent, except in
    // the syllabic consonant + "le" ending
    let n = letters.len();
    let silent_e = groups > 1 && n >= 2 && letters[n - 1] == 'e' && !is_vowel(letters[n - 2]) && {
        let syllabic_le = letters[n - 2] == 'l' && (n < 3 || !is_vowel(letters[n - 3]));
        !syllabic_le
    };
    if silent_e {
        groups -= 1;
    }
    groups.max(1)
}

pub fn syllable_count(text: &str) -> usize {
    text.split_whitespace()
        .filter(|w| w.chars().any(|c| c.is_alphanumeric()))
        .map(syllables)
        .sum()
}

/// Flesch-Kincaid grade level:
/// 0.39 * words/sentences + 11.8 * syllables/words - 15.59.
/// `None` for texts without any countable word.
pub fn flesch_kincaid_grade(text: &str) -> Option<f64> {
    let words = word_count(text);
    if words == 0 {
        return None;
    }
    let sentences = sentence_count(text).max(1);
    let syls = syllable_count(text);
    Some(0.39 * words as f64 / sentences as f64 + 11.8 * syls as f64 / words as f64 - 15.59)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn words_need_alphanumerics() {
        assert_eq!(word_count("the cat sat"), 3);
        assert_eq!(word_count("hey -- look: 42 things?!"), 4);
        assert_eq!(word_count("-- ... !!"), 0);
        assert_eq!(word_count(""), 0);
    }

    #[test]
    fn sentences_by_terminal_punctuation() {
        assert_eq!(sentence_count("One. Two! Three?"), 3);
        assert_eq!(sentence_count("No terminator here"), 1);
        assert_eq!(sentence_count("Ellipsis... still one sentence"), 2);
        assert_eq!(sentence_count("Trailing. "), 1);
        assert_eq!(sentence_count("?!"), 0);
    }

    #[test]
    fn syllable_heuristic_cases() {
        for (w, n) in [
            ("cat", 1),
            ("cake", 1),      // silent final e
            ("apple", 2),     // consonant + le keeps its beat
            ("table", 2),
            ("see", 1),
            ("idea", 2),      // i, ea
            ("syzygy", 3),
            ("rhythm", 1),
            ("beautiful", 3), // eau, i, u
            ("queue", 1),
            ("the", 1),       // single group: no silent-e subtraction
            ("e", 1),
            ("42", 1),
            ("misinformation", 5),
        ] {
            assert_eq!(syllables(w), n, "word {w:?}");
        }
    }

    #[test]
    fn grade_formula_on_known_text() {
        // 6 words, 1 sentence, 6 syllables
        let g = flesch_kincaid_grade("The cat sat on the mat.").unwrap();
        let expect = 0.39 * 6.0 + 11.8 * 1.0 - 15.59;
        assert!((g - expect).abs() < 1e-12);
        assert!((g + 1.45).abs() < 1e-10);
    }

    #[test]
    fn longer_words_raise_the_grade() {
        let simple = flesch_kincaid_grade("The cat sat on the mat.").unwrap();
        let complex =
            flesch_kincaid_grade("Epidemiological misinformation proliferates continuously.")
                .unwrap();
        assert!(complex > simple + 5.0);
    }

    #[test]
    fn empty_text_has_no_grade() {
        assert_eq!(flesch_kincaid_grade(""), None);
        assert_eq!(flesch_kincaid_grade("  ?! -- "), None);
    }
}
