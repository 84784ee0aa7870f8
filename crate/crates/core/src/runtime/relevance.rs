use std::collections::BTreeSet;

/// Lowercase alphabetic tokens of `text`; every non-letter separates tokens.
pub fn tokenize(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphabetic())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// |A ∩ B| / |A ∪ B|, or 0 when both sets are empty.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn keyword_relevance(question: &str, keywords: &[String]) -> f64 {
    let q = tokenize(question);
    let k: BTreeSet<String> = keywords.iter().map(|k| k.to_lowercase()).collect();
    if q.is_empty() {
        return 0.0;
    }
    jaccard(&q, &k)
}
