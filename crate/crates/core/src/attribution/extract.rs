//! Link extraction from bullet-list answers.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// A (title, url) pair pulled out of an answer, in answer order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedLink {
    pub title: String,
    pub url: String,
    /// `true` when the line did not follow the `- Title (URL)` form and the
    /// link was recovered by the lenient scan.
    pub lenient: bool,
}

/// Extracts links line by line.
///
/// A line of the form `- Title (URL)` yields exactly one link. Any other line
/// contributes each `http(s)://` token it contains, in reading order, with the
/// remaining line text as title. Duplicates are kept.
pub fn extract_urls(answer: &str) -> Vec<ExtractedLink> {
    let mut out = Vec::new();
    for line in answer.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some((title, url)) = strict_item(line) {
            out.push(ExtractedLink {
                title: title.to_string(),
                url: url.to_string(),
                lenient: false,
            });
            continue;
        }
        let tokens = url_tokens(line);
        if tokens.is_empty() {
            continue;
        }
        let title = lenient_title(line, &tokens);
        for (_, _, url) in tokens {
            out.push(ExtractedLink {
                title: title.clone(),
                url: url.to_string(),
                lenient: true,
            });
        }
    }
    out
}

/// `- Title (http...)` with nothing after the closing parenthesis.
fn strict_item(line: &str) -> Option<(&str, &str)> {
    let body = line.strip_prefix("- ")?;
    let inner = body.strip_suffix(')')?;
    let open = inner
        .rfind("(https://")
        .or_else(|| inner.rfind("(http://"))?;
    let url = &inner[open + 1..];
    if url.is_empty() || url.chars().any(char::is_whitespace) {
        return None;
    }
    Some((body[..open].trim(), url))
}

fn is_scheme_at(s: &str, i: usize) -> Option<usize> {
    let rest = &s[i..];
    for scheme in ["https://", "http://"] {
        if rest.len() >= scheme.len() && rest[..scheme.len()].eq_ignore_ascii_case(scheme) {
            return Some(scheme.len());
        }
    }
    None
}

fn token_stop(c: char) -> bool {
    c.is_whitespace() || matches!(c, '<' | '>' | '"' | '\'' | '`' | '|')
}

/// Finds URL tokens as `(start, end, url)` byte spans of `line`.
fn url_tokens(line: &str) -> Vec<(usize, usize, &str)> {
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < line.len() {
        if !line.is_char_boundary(i) {
            i += 1;
            continue;
        }
        let Some(scheme_len) = is_scheme_at(line, i) else {
            i += line[i..].chars().next().map_or(1, char::len_utf8);
            continue;
        };
        let start = i;
        let mut end = line[start..]
            .char_indices()
            .find(|&(_, c)| token_stop(c))
            .map_or(line.len(), |(off, _)| start + off);
        end = trim_token_end(line, start, end);
        if end > start + scheme_len {
            tokens.push((start, end, &line[start..end]));
        }
        i = end.max(start + scheme_len);
    }
    tokens
}

/// Drops trailing sentence punctuation and unbalanced closing brackets.
fn trim_token_end(line: &str, start: usize, mut end: usize) -> usize {
    loop {
        let token = &line[start..end];
        let Some(last) = token.chars().last() else {
            return end;
        };
        let drop = match last {
            '.' | ',' | ';' | ':' | '!' | '?' | '*' => true,
            ')' => token.matches('(').count() < token.matches(')').count(),
            ']' => token.matches('[').count() < token.matches(']').count(),
            '}' => token.matches('{').count() < token.matches('}').count(),
            _ => false,
        };
        if !drop {
            return end;
        }
        end -= last.len_utf8();
    }
}

fn lenient_title(line: &str, tokens: &[(usize, usize, &str)]) -> String {
    let mut rest = String::new();
    let mut cursor = 0;
    for &(start, end, _) in tokens {
        rest.push_str(&line[cursor..start]);
        rest.push(' ');
        cursor = end;
    }
    rest.push_str(&line[cursor..]);

    let mut title = rest.trim();
    // bullet or list numbering
    title = title.trim_start_matches(['-', '*', '\u{2022}', '+']).trim_start();
    let digits = title.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 && title[digits..].starts_with(['.', ')']) {
        title = title[digits + 1..].trim_start();
    }
    let cleaned: String = title
        .chars()
        .filter(|c| !matches!(c, '[' | ']' | '*'))
        .collect();
    // brackets that only held the removed URL
    let mut cleaned = cleaned.replace("( )", " ").replace("()", " ");
    loop {
        let t = cleaned
            .trim()
            .trim_end_matches([':', '-', '(', ')', '\u{2013}', '\u{2014}', ',', '|', '.', ';'])
            .trim();
        if t.len() == cleaned.len() {
            break;
        }
        cleaned = t.to_string();
    }
    let mut out = String::with_capacity(cleaned.len());
    // punctuation orphaned by the removed URL
    let orphan = |w: &str| w.chars().all(|c| matches!(c, ',' | ';' | '.' | '|' | '-' | '\u{2013}' | '\u{2014}'));
    for word in cleaned.split_whitespace().filter(|w| !orphan(w)) {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}
