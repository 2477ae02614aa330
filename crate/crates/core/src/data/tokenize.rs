//! Rule tokenizer: whitespace split, detached punctuation, apostrophe clitics.
//!
//! This tokenizer approximates, but is not equivalent to, the Moses tokenizer.
//! Prefer feeding pre-tokenized text when exact token counts matter.

/// English contraction suffixes that attach to the right side of the apostrophe
/// (`don't` → `don 't`). Any other apostrophe between letters is treated as a
/// French-style elision and attaches to the left (`l'avion` → `l' avion`).
const ENGLISH_SUFFIXES: &[&str] = &["s", "t", "m", "d", "re", "ve", "ll"];

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Lowercases and tokenizes a raw sentence.
pub fn tokenize(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let mut out = Vec::new();
    for chunk in lowered.split_whitespace() {
        split_chunk(chunk, &mut out);
    }
    out
}

/// Splits already tokenized text on whitespace, lowercasing each token.
pub fn split_pretokenized(text: &str) -> Vec<String> {
    text.split_whitespace().map(|t| t.to_lowercase()).collect()
}

fn split_chunk(chunk: &str, out: &mut Vec<String>) {
    let chars: Vec<char> = chunk.chars().collect();
    let mut word = String::new();
    let flush = |word: &mut String, out: &mut Vec<String>| {
        if !word.is_empty() {
            out.push(std::mem::take(word));
        }
    };
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let prev_word = i > 0 && is_word_char(chars[i - 1]);
        let next_word = i + 1 < chars.len() && is_word_char(chars[i + 1]);
        if is_word_char(c) {
            word.push(c);
        } else if is_apostrophe(c) && prev_word && next_word {
            let rest: String = chars[i + 1..]
                .iter()
                .take_while(|c| is_word_char(**c))
                .collect();
            if ENGLISH_SUFFIXES.contains(&rest.as_str()) {
                flush(&mut word, out);
                word.push('\'');
            } else {
                word.push('\'');
                flush(&mut word, out);
            }
        } else if (c == '-' || c == '.' || c == ',') && prev_word && next_word && joins(c, &chars, i) {
            word.push(c);
        } else {
            flush(&mut word, out);
            out.push(c.to_string());
        }
        i += 1;
    }
    flush(&mut word, out);
}

/// Hyphens join word characters; `.` and `,` only join digits (`3.14`, `1,000`).
fn joins(c: char, chars: &[char], i: usize) -> bool {
    match c {
        '-' => true,
        _ => chars[i - 1].is_ascii_digit() && chars[i + 1].is_ascii_digit(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok(s: &str) -> String {
        tokenize(s).join(" ")
    }

    #[test]
    fn detaches_punctuation_and_lowercases() {
        assert_eq!(tok("Hello, World!"), "hello , world !");
        assert_eq!(tok("(yes)."), "( yes ) .");
    }

    #[test]
    fn apostrophe_clitics() {
        assert_eq!(tok("L'avion"), "l' avion");
        assert_eq!(tok("don't"), "don 't");
        assert_eq!(tok("it's qu'il"), "it 's qu' il");
        assert_eq!(tok("'quoted'"), "' quoted '");
    }

    #[test]
    fn keeps_numbers_and_hyphenated_words() {
        assert_eq!(tok("well-known 3.14 1,000 end."), "well-known 3.14 1,000 end .");
        assert_eq!(tok("a, b"), "a , b");
    }

    #[test]
    fn whitespace_only_is_empty() {
        assert!(tokenize("   \t ").is_empty());
        assert_eq!(split_pretokenized("Hello ,  World"), ["hello", ",", "world"]);
    }
}
