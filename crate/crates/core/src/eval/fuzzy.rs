//! Indel string similarity and the match rule built on it.

pub const MATCH_THRESHOLD: f64 = 0.8;
pub const NEGATION_MARKER: &str = "do not";

/// Edit distance allowing only insertions and deletions, over chars.
pub fn indel_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    a.len() + b.len() - 2 * lcs_len(&a, &b)
}

fn lcs_len(a: &[char], b: &[char]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for &ca in a {
        let mut diag = 0;
        for (j, &cb) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if ca == cb { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// `1 - D/(|a|+|b|)`; two empty strings are identical.
pub fn fuzzy_ratio(a: &str, b: &str) -> f64 {
    let total = a.chars().count() + b.chars().count();
    if total == 0 {
        return 1.0;
    }
    1.0 - indel_distance(a, b) as f64 / total as f64
}

/// `candidate` matches `reference` when similar enough and not negated.
pub fn fuzzy_match(reference: &str, candidate: &str) -> bool {
    let (reference, candidate) = (reference.trim(), candidate.trim());
    !candidate.contains(NEGATION_MARKER) && fuzzy_ratio(reference, candidate) > MATCH_THRESHOLD
}
