//! Text normalization: @-handles become `<USERNAME>`, URLs become
//! `<HYPERLINK>`, and emoji are replaced by colon-delimited short names from
//! the table shipped in `data/emoji.tsv`.
//!
//! Normalization is total and idempotent; outputs are bit-stable across runs
//! because the emoji table is versioned with the crate.

use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;

pub const USERNAME_PLACEHOLDER: &str = "<USERNAME>";
pub const HYPERLINK_PLACEHOLDER: &str = "<HYPERLINK>";

const EMOJI_TABLE_TSV: &str = include_str!("data/emoji.tsv");

fn emoji_table() -> &'static HashMap<u32, &'static str> {
    static TABLE: OnceLock<HashMap<u32, &'static str>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut map = HashMap::new();
        for line in EMOJI_TABLE_TSV.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.splitn(2, '\t');
            let (Some(code), Some(name)) = (parts.next(), parts.next()) else {
                continue;
            };
            if let Ok(cp) = u32::from_str_radix(code.trim(), 16) {
                map.insert(cp, name.trim());
            }
        }
        map
    })
}

fn url_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(?:https?://|www\.)[^\s]+").unwrap())
}

fn handle_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // No lookbehind in the regex crate: capture the preceding boundary char
    // and re-emit it, so "user@host" is left alone.
    RE.get_or_init(|| Regex::new(r"(^|[^\w@])@\w{1,30}").unwrap())
}

/// Invisible joiners that only exist to compose emoji sequences; dropped so
/// the per-scalar replacement below stays idempotent.
fn is_emoji_joiner(c: char) -> bool {
    matches!(u32::from(c), 0xFE0E | 0xFE0F | 0x200D | 0x20E3)
}

/// Scalars treated as emoji. Anything here is replaced by a short name, so
/// normalized text never carries a raw emoji codepoint.
pub fn is_emoji_scalar(c: char) -> bool {
    matches!(
        u32::from(c),
        0x1F000..=0x1FAFF
            | 0x2600..=0x27BF
            | 0x2B00..=0x2BFF
            | 0x2934..=0x2935
            | 0x3030
            | 0x303D
            | 0x3297
            | 0x3299
    )
}

/// Short name for one emoji scalar: the table entry when present, otherwise
/// the codepoint spelled as `uXXXX` so unknown emoji still normalize.
pub fn emoji_short_name(c: char) -> String {
    match emoji_table().get(&u32::from(c)) {
        Some(name) => (*name).to_string(),
        None => format!("u{:04x}", u32::from(c)),
    }
}

/// Normalize raw post text. Total and idempotent.
pub fn normalize_text(raw: &str) -> String {
    let text = url_re().replace_all(raw, HYPERLINK_PLACEHOLDER);
    let text = handle_re().replace_all(&text, |caps: &regex::Captures<'_>| {
        format!("{}{}", &caps[1], USERNAME_PLACEHOLDER)
    });
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        if is_emoji_joiner(c) {
            continue;
        }
        if is_emoji_scalar(c) {
            out.push(':');
            out.push_str(&emoji_short_name(c));
            out.push(':');
        } else {
            out.push(c);
        }
    }
    out
}

/// Whitespace token count of a text; the word measure used by post filters.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Hashtag tokens (`#tag`) in raw text, lowercased, in order of appearance.
pub fn extract_hashtags(raw: &str) -> Vec<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"#(\w+)").unwrap());
    re.captures_iter(raw)
        .map(|c| format!("#{}", c[1].to_lowercase()))
        .collect()
}

/// Mention handles (without the `@`) in raw text, lowercased.
pub fn extract_mentions(raw: &str) -> Vec<String> {
    let re = handle_re();
    re.captures_iter(raw)
        .map(|c| c[0].trim_start_matches(|ch| ch != '@')[1..].to_lowercase())
        .collect()
}

/// Raw URL substrings in order of appearance.
pub fn extract_urls(raw: &str) -> Vec<String> {
    url_re().find_iter(raw).map(|m| m.as_str().to_string()).collect()
}

/// Normalize a URL to `registrable-domain/path`: scheme and `www.` stripped,
/// host lowercased and reduced to its last two labels, query/fragment and
/// trailing slash dropped. Returns None when no host can be found.
pub fn normalize_link(url: &str) -> Option<String> {
    let rest = url
        .trim()
        .trim_start_matches("https://")
        .trim_start_matches("http://")
        .trim_start_matches("HTTPS://")
        .trim_start_matches("HTTP://");
    let rest = rest.strip_prefix("www.").unwrap_or(rest);
    let end = rest.find(['?', '#']).unwrap_or(rest.len());
    let rest = &rest[..end];
    let (host, path) = match rest.find('/') {
        Some(i) => (&rest[..i], rest[i..].trim_end_matches('/')),
        None => (rest, ""),
    };
    if host.is_empty() {
        return None;
    }
    let host = host.to_lowercase();
    let domain = registrable_domain(&host);
    Some(format!("{domain}{path}"))
}

/// Last two dot-separated labels of a host; a naive registrable domain that
/// is stable and good enough for same-company matching.
pub fn registrable_domain(host: &str) -> String {
    let labels: Vec<&str> = host.split('.').filter(|l| !l.is_empty()).collect();
    if labels.len() <= 2 {
        labels.join(".")
    } else {
        labels[labels.len() - 2..].join(".")
    }
}

/// The domain half of a normalized link (`normalize_link` output).
pub fn link_domain(normalized_link: &str) -> &str {
    normalized_link.split('/').next().unwrap_or(normalized_link)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn replaces_handle_and_url() {
        assert_eq!(
            normalize_text("Hi @bob see https://x.co"),
            "Hi <USERNAME> see <HYPERLINK>"
        );
    }

    #[test]
    fn empty_is_empty() {
        assert_eq!(normalize_text(""), "");
    }

    #[test]
    fn emoji_uses_shipped_table() {
        assert_eq!(normalize_text("\u{1F600} ok"), ":grinning_face: ok");
        // Round-trip against the table: the short name between the colons is
        // exactly the table entry for the scalar.
        let name = emoji_short_name('\u{1F600}');
        assert_eq!(name, "grinning_face");
        assert_eq!(normalize_text("\u{1F600}"), format!(":{name}:"));
    }

    #[test]
    fn unknown_emoji_falls_back_to_codepoint() {
        // Not in the v1 table; still within the emoji ranges.
        let c = '\u{1FA99}';
        assert!(is_emoji_scalar(c));
        assert_eq!(normalize_text(&c.to_string()), ":u1fa99:");
    }

    #[test]
    fn handle_at_start_of_text() {
        assert_eq!(normalize_text("@user thanks!"), "<USERNAME> thanks!");
    }

    #[test]
    fn email_is_not_a_handle() {
        assert_eq!(normalize_text("mail me: a@b.com"), "mail me: a@b.com");
    }

    #[test]
    fn variation_selector_dropped() {
        assert_eq!(normalize_text("\u{2764}\u{FE0F}"), ":red_heart:");
    }

    #[test]
    fn extractors() {
        let raw = "Go @TeamA! #Sale now https://shop.example.com/deals?q=1 and www.example.com";
        assert_eq!(extract_mentions(raw), vec!["teama"]);
        assert_eq!(extract_hashtags(raw), vec!["#sale"]);
        assert_eq!(extract_urls(raw).len(), 2);
        assert_eq!(
            normalize_link("https://shop.example.com/deals?q=1").unwrap(),
            "example.com/deals"
        );
        assert_eq!(normalize_link("www.example.com").unwrap(), "example.com");
        assert_eq!(normalize_link("https://x.co/Ab1/"), Some("x.co/Ab1".into()));
    }

    #[test]
    fn normalized_text_has_no_raw_artifacts() {
        let raw = "@a hi \u{1F525} https://t.co/xyz check @b2";
        let n = normalize_text(raw);
        assert!(!n.contains("https://"));
        assert!(!n.contains("@a") && !n.contains("@b2"));
        assert!(n.chars().all(|c| !is_emoji_scalar(c)));
    }

    proptest! {
        #[test]
        fn idempotent(raw in "\\PC{0,80}") {
            let once = normalize_text(&raw);
            prop_assert_eq!(normalize_text(&once), once.clone());
        }

        #[test]
        fn idempotent_with_emoji_and_handles(
            parts in proptest::collection::vec(
                prop_oneof![
                    Just("@user".to_string()),
                    Just("\u{1F600}".to_string()),
                    Just("\u{2764}\u{FE0F}".to_string()),
                    Just("https://ex.co/a".to_string()),
                    "[a-z]{1,6}".prop_map(|s| s),
                ],
                0..8,
            )
        ) {
            let raw = parts.join(" ");
            let once = normalize_text(&raw);
            prop_assert_eq!(normalize_text(&once), once.clone());
            prop_assert!(once.chars().all(|c| !is_emoji_scalar(c)));
        }
    }
}
