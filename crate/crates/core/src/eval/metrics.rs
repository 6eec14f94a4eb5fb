use std::collections::HashSet;

/// `"1999.0"` becomes `"1999"`; any other string is returned unchanged.
/// Only strings with a decimal point or exponent are touched.
pub fn canonical_number(s: &str) -> String {
    let t = s.trim();
    let body = t.strip_prefix(['+', '-']).unwrap_or(t);
    let (mantissa, exponent) = match body.find(['e', 'E']) {
        Some(p) => (&body[..p], Some(&body[p + 1..])),
        None => (body, None),
    };
    let mut parts = mantissa.splitn(2, '.');
    let int_part = parts.next().unwrap_or("");
    let frac_part = parts.next();
    let digits = |x: &str| x.bytes().all(|b| b.is_ascii_digit());
    let exp_ok = exponent.is_none_or(|e| {
        let e = e.strip_prefix(['+', '-']).unwrap_or(e);
        !e.is_empty() && digits(e)
    });
    let shaped = !int_part.is_empty()
        && digits(int_part)
        && frac_part.is_none_or(digits)
        && exp_ok
        && (frac_part.is_some() || exponent.is_some());
    if !shaped {
        return s.to_owned();
    }
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() && v.fract() == 0.0 && v.abs() < 1e15 => {
            let i = v as i64;
            i.to_string()
        }
        _ => s.to_owned(),
    }
}

/// Comparison key: numbers canonicalized; with `normalize`, also lowercased
/// and trimmed.
pub fn answer_key(s: &str, normalize: bool) -> String {
    let c = canonical_number(s);
    if normalize {
        c.trim().to_lowercase()
    } else {
        c
    }
}

fn key_set(items: &[String], normalize: bool) -> HashSet<String> {
    items.iter().map(|s| answer_key(s, normalize)).collect()
}

/// True iff any prediction is a gold answer.
pub fn hits_at_1(predicted: &[String], gold: &[String], normalize: bool) -> bool {
    let g = key_set(gold, normalize);
    predicted.iter().any(|p| g.contains(&answer_key(p, normalize)))
}

/// Set equality after deduplication; false when gold is empty.
pub fn exact_match(predicted: &[String], gold: &[String], normalize: bool) -> bool {
    let g = key_set(gold, normalize);
    !g.is_empty() && key_set(predicted, normalize) == g
}

/// Per-instance F1 over deduplicated sets; 0 when either side is empty.
pub fn f1(predicted: &[String], gold: &[String], normalize: bool) -> f64 {
    let p = key_set(predicted, normalize);
    let g = key_set(gold, normalize);
    if p.is_empty() || g.is_empty() {
        return 0.0;
    }
    let common = p.intersection(&g).count() as f64;
    let precision = common / p.len() as f64;
    let recall = common / g.len() as f64;
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Unweighted mean of per-instance F1; 0 for no instances.
pub fn macro_f1(pairs: &[(Vec<String>, Vec<String>)], normalize: bool) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    pairs.iter().map(|(p, g)| f1(p, g, normalize)).sum::<f64>() / pairs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn canonical_numbers() {
        assert_eq!(canonical_number("1999.0"), "1999");
        assert_eq!(canonical_number("1999.00"), "1999");
        assert_eq!(canonical_number("-3.0"), "-3");
        assert_eq!(canonical_number("2e3"), "2000");
        assert_eq!(canonical_number("1999.5"), "1999.5");
        assert_eq!(canonical_number("007"), "007");
        assert_eq!(canonical_number("m.0abc"), "m.0abc");
        assert_eq!(canonical_number("1.2.3"), "1.2.3");
        assert_eq!(canonical_number("."), ".");
    }

    #[test]
    fn spot_checks() {
        assert!(hits_at_1(&v(&["a"]), &v(&["a", "b"]), false));
        assert!(hits_at_1(&v(&["C"]), &v(&["c"]), true));
        assert!(!hits_at_1(&v(&["C"]), &v(&["c"]), false));
        assert!(!hits_at_1(&[], &v(&["a"]), true));
        assert!(exact_match(&v(&["a", "b"]), &v(&["b", "a"]), false));
        assert!(!exact_match(&v(&["a"]), &v(&["a", "b"]), false));
        assert!(exact_match(&v(&["a", "a"]), &v(&["a"]), false));
        assert!((f1(&v(&["a"]), &v(&["a", "b"]), false) - 2.0 / 3.0).abs() < 1e-15);
        assert!(hits_at_1(&v(&["1999.0"]), &v(&["1999"]), false));
    }

    proptest! {
        #[test]
        fn hits_is_monotone(
            p in prop::collection::vec("[a-c]", 0..4),
            extra in "[a-e]",
            g in prop::collection::vec("[a-c]", 1..4),
        ) {
            if hits_at_1(&p, &g, false) {
                let mut more = p.clone();
                more.push(extra);
                prop_assert!(hits_at_1(&more, &g, false));
            }
        }

        #[test]
        fn f1_in_unit_interval(
            p in prop::collection::vec("[a-d]", 0..5),
            g in prop::collection::vec("[a-d]", 1..5),
        ) {
            let x = f1(&p, &g, true);
            prop_assert!((0.0..=1.0).contains(&x));
            prop_assert_eq!(x == 1.0, exact_match(&p, &g, true));
        }
    }
}
