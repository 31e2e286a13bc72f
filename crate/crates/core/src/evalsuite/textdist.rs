//! Token-level edit distance and longest common substring.

/// Unit-cost edit distance (insert, delete, substitute) over any token type.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Character-level edit distance between two strings.
pub fn levenshtein_chars(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    levenshtein(&a, &b)
}

/// Length of the longest contiguous run shared by `a` and `b`.
pub fn longest_common_substring<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    let mut best = 0;
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { 0 };
            best = best.max(cur[j + 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edit_distance_basics() {
        assert_eq!(levenshtein(&["a", "b"], &["a", "b"]), 0);
        assert_eq!(levenshtein::<&str>(&[], &["x", "y", "z"]), 3);
        assert_eq!(levenshtein_chars("kitten", "sitting"), 3);
        assert_eq!(levenshtein(&["the", "red", "car"], &["a", "red", "truck"]), 2);
    }

    #[test]
    fn lcs_basics() {
        assert_eq!(longest_common_substring(&["a", "b"], &["c", "d"]), 0);
        assert_eq!(longest_common_substring(&["b", "c"], &["a", "b", "c", "d"]), 2);
        assert_eq!(longest_common_substring(&["x", "a", "b", "y", "a", "b", "c"], &["a", "b", "c"]), 3);
        assert_eq!(longest_common_substring::<u8>(&[], &[1, 2]), 0);
    }
}
