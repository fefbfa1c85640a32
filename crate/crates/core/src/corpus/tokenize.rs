/// Replacement for tokens made only of digits.
pub const DIGIT: &str = "<digit>";

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Lowercases and splits `text` into maximal runs of word characters and
/// single punctuation marks. Digit-only tokens become [`DIGIT`]; the literal
/// `<digit>` is kept whole so tokenizing joined output is a fixed point.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let mut tokens = Vec::new();
    let mut word = String::new();
    let flush = |word: &mut String, tokens: &mut Vec<String>| {
        if !word.is_empty() {
            if word.chars().all(|c| c.is_ascii_digit()) {
                tokens.push(DIGIT.to_string());
            } else {
                tokens.push(std::mem::take(word));
            }
            word.clear();
        }
    };
    let mut rest = lower.as_str();
    while let Some(c) = rest.chars().next() {
        if rest.starts_with(DIGIT) {
            flush(&mut word, &mut tokens);
            tokens.push(DIGIT.to_string());
            rest = &rest[DIGIT.len()..];
            continue;
        }
        if is_word_char(c) {
            word.push(c);
        } else {
            flush(&mut word, &mut tokens);
            if !c.is_whitespace() {
                tokens.push(c.to_string());
            }
        }
        rest = &rest[c.len_utf8()..];
    }
    flush(&mut word, &mut tokens);
    tokens
}

/// True for tokens without any word character (single punctuation marks).
pub fn is_punctuation(token: &str) -> bool {
    token != DIGIT && !token.chars().any(is_word_char)
}
