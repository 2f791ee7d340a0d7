use super::Sentence;

const ABBREVIATIONS: [&str; 5] = ["mr.", "mrs.", "dr.", "e.g.", "i.e."];

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Splits prose into sentences at `.`, `!` or `?` runs followed by whitespace
/// and an uppercase letter, or by the end of the text. A handful of common
/// abbreviations never end a sentence. Whitespace-only input yields a single
/// empty sentence.
pub fn segment_sentences(text: &str) -> Vec<Sentence> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut pieces: Vec<&str> = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if !is_terminal(c) {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < chars.len() && is_terminal(chars[j + 1].1) {
            j += 1;
        }
        let end = chars.get(j + 1).map_or(text.len(), |(p, _)| *p);
        let boundary = match chars.get(j + 1) {
            None => true,
            Some((_, next)) if next.is_whitespace() => {
                match chars[j + 1..].iter().find(|(_, ch)| !ch.is_whitespace()) {
                    None => true,
                    Some((_, ch)) => ch.is_uppercase() && !(i == j && ends_with_abbreviation(text, start, pos)),
                }
            }
            Some(_) => false,
        };
        if boundary {
            let piece = text[start..end].trim();
            if !piece.is_empty() {
                pieces.push(piece);
            }
            start = end;
        }
        i = j + 1;
    }
    let rest = text[start..].trim();
    if !rest.is_empty() {
        pieces.push(rest);
    }
    if pieces.is_empty() {
        return vec![Sentence::new(0, "")];
    }
    pieces
        .into_iter()
        .enumerate()
        .map(|(i, s)| Sentence::new(i, s))
        .collect()
}

/// Whether the word ending with the period at byte `dot` is a known abbreviation.
fn ends_with_abbreviation(text: &str, floor: usize, dot: usize) -> bool {
    let head = &text[floor..=dot];
    let word_start = head
        .char_indices()
        .rev()
        .find(|(_, c)| c.is_whitespace())
        .map_or(0, |(p, c)| p + c.len_utf8());
    let word = head[word_start..].to_lowercase();
    ABBREVIATIONS.contains(&word.as_str())
}

/// Lowercased word tokens: runs of alphanumerics and apostrophes, with every
/// other non-space character as its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() || c == '\'' {
            word.extend(c.to_lowercase());
            continue;
        }
        if !word.is_empty() {
            tokens.push(std::mem::take(&mut word));
        }
        if !c.is_whitespace() {
            tokens.push(c.to_lowercase().collect());
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn texts(s: &str) -> Vec<String> {
        segment_sentences(s).into_iter().map(|s| s.text).collect()
    }

    fn strip_ws(s: &str) -> String {
        s.chars().filter(|c| !c.is_whitespace()).collect()
    }

    #[test]
    fn two_short_sentences() {
        assert_eq!(texts("I ran. I fell."), vec!["I ran.", "I fell."]);
    }

    #[test]
    fn abbreviation_does_not_split() {
        assert_eq!(texts("Dr. Smith left."), vec!["Dr. Smith left."]);
        assert_eq!(texts("We met Mrs. Jones, e.g. Tuesday. Then I left!"), vec![
            "We met Mrs. Jones, e.g. Tuesday.",
            "Then I left!"
        ]);
    }

    #[test]
    fn lowercase_continuation_does_not_split() {
        assert_eq!(texts("Wait... what happened? Nothing."), vec!["Wait... what happened?", "Nothing."]);
        assert_eq!(texts("Really?! Yes"), vec!["Really?!", "Yes"]);
    }

    #[test]
    fn whitespace_only_is_one_empty_sentence() {
        let s = segment_sentences("  \n\t ");
        assert_eq!(s.len(), 1);
        assert!(s[0].text.is_empty() && s[0].tokens.is_empty());
    }

    #[test]
    fn twenty_sentence_paragraph() {
        let words = ["The", "My", "Our", "Then", "After"];
        let text: Vec<String> = (0..20)
            .map(|i| format!("{} dog number {i} barked{}", words[i % 5], [".", "!", "?"][i % 3]))
            .collect();
        let joined = text.join("  ");
        let out = segment_sentences(&joined);
        assert_eq!(out.len(), 20);
        for (i, s) in out.iter().enumerate() {
            assert_eq!(s.index, i);
            assert_eq!(s.text, text[i]);
        }
        let concat: String = out.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(strip_ws(&concat), strip_ws(&joined));
    }

    #[test]
    fn tokens() {
        assert_eq!(tokenize("I don't know, Dr. Who!"), vec!["i", "don't", "know", ",", "dr", ".", "who", "!"]);
        assert!(tokenize("   ").is_empty());
    }

    proptest! {
        #[test]
        fn reconstruction_modulo_whitespace(text in "[A-Za-z .!?,\n]{1,200}") {
            let out = segment_sentences(&text);
            let concat: String = out.iter().map(|s| s.text.as_str()).collect();
            prop_assert_eq!(strip_ws(&concat), strip_ws(&text));
            for (i, s) in out.iter().enumerate() {
                prop_assert_eq!(s.index, i);
                prop_assert!(!s.tokens.is_empty() || s.text.trim().is_empty());
            }
        }
    }
}
