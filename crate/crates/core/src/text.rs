//! Small text helpers shared by the prompt builders and fixture lookups.

/// Trims and collapses every run of whitespace (including newlines) into a
/// single space.
pub fn collapse_whitespace(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Removes trailing periods (and whitespace between them) from `s`.
pub fn strip_trailing_periods(s: &str) -> &str {
    s.trim_end_matches(|c: char| c == '.' || c.is_whitespace())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collapses_runs_and_newlines() {
        assert_eq!(collapse_whitespace("  a \n b\t\tc  "), "a b c");
        assert_eq!(collapse_whitespace(""), "");
        assert_eq!(collapse_whitespace("   "), "");
    }

    #[test]
    fn strips_only_trailing_periods() {
        assert_eq!(strip_trailing_periods("I am late."), "I am late");
        assert_eq!(strip_trailing_periods("wait... . "), "wait");
        assert_eq!(strip_trailing_periods("Booking.com"), "Booking.com");
    }
}
