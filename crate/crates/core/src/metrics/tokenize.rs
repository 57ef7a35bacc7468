const TRIM: &[char] = &['.', ',', ';', ':', '!', '?', '(', ')', '"'];

/// Lowercases, drops placeholder braces, splits on whitespace and strips
/// surrounding punctuation from each token. Empty tokens are discarded.
pub fn tokenize(text: &str) -> Vec<String> {
    let unbraced: String = text.chars().filter(|&c| c != '{' && c != '}').collect();
    unbraced
        .to_lowercase()
        .split_whitespace()
        .map(|t| t.trim_matches(TRIM))
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic() {
        assert_eq!(tokenize("The System, is SAFE."), vec!["the", "system", "is", "safe"]);
    }

    #[test]
    fn placeholders_keep_their_names() {
        assert_eq!(tokenize("System {X} is {Safety Level}"), vec!["system", "x", "is", "safety", "level"]);
    }

    #[test]
    fn formalized_line() {
        assert_eq!(
            tokenize("Goal(G1, \"Pump is safe\")"),
            vec!["goal(g1", "pump", "is", "safe"]
        );
        assert_eq!(tokenize("SupportedBy(G1, S1)"), vec!["supportedby(g1", "s1"]);
    }

    #[test]
    fn punctuation_only_tokens_vanish() {
        assert!(tokenize(" ... ;; \"\" ").is_empty());
    }
}
