/// Maps text to an estimated token count. Implementations must be monotone in
/// the text length.
pub trait TokenEstimator: Send + Sync {
    fn estimate(&self, text: &str) -> usize;
}

/// `ceil(bytes / bytes_per_token)`.
#[derive(Debug, Clone, Copy)]
pub struct ByteEstimator {
    pub bytes_per_token: usize,
}

impl Default for ByteEstimator {
    fn default() -> Self {
        Self { bytes_per_token: 4 }
    }
}

impl TokenEstimator for ByteEstimator {
    fn estimate(&self, text: &str) -> usize {
        text.len().div_ceil(self.bytes_per_token.max(1))
    }
}

/// Default estimator: four bytes per token, rounded up.
pub fn estimate_tokens(text: &str) -> usize {
    ByteEstimator::default().estimate(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fixed_points() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("a"), 1);
        assert_eq!(estimate_tokens(&"a".repeat(4096)), 1024);
        assert_eq!(estimate_tokens(&"a".repeat(4097)), 1025);
    }

    proptest! {
        #[test]
        fn concatenation_is_at_least_each_part(a in ".{0,200}", b in ".{0,200}") {
            let whole = estimate_tokens(&format!("{a}{b}"));
            prop_assert!(whole >= estimate_tokens(&a).max(estimate_tokens(&b)));
        }
    }
}
