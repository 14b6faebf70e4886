//! Independent oracles shared by the integration tests. None of these call
//! into the library code they check.

#![allow(dead_code)]

use std::collections::HashMap;

/// Unrestricted Damerau-Levenshtein distance (Lowrance-Wagner), i.e. the
/// fewest insertions, deletions, substitutions and adjacent transpositions.
pub fn damerau_levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (n, m) = (a.len(), b.len());
    let inf = n + m;
    // d is (n+2)×(m+2) with a sentinel row and column.
    let w = m + 2;
    let mut d = vec![0usize; (n + 2) * w];
    d[0] = inf;
    for i in 0..=n {
        d[(i + 1) * w] = inf;
        d[(i + 1) * w + 1] = i;
    }
    for j in 0..=m {
        d[j + 1] = inf;
        d[w + j + 1] = j;
    }
    let mut last_row: HashMap<char, usize> = HashMap::new();
    for i in 1..=n {
        let mut last_match_col = 0;
        for j in 1..=m {
            let k = last_row.get(&b[j - 1]).copied().unwrap_or(0);
            let l = last_match_col;
            let cost = if a[i - 1] == b[j - 1] {
                last_match_col = j;
                0
            } else {
                1
            };
            let sub = d[i * w + j] + cost;
            let ins = d[(i + 1) * w + j] + 1;
            let del = d[i * w + j + 1] + 1;
            let trans = d[k * w + l] + (i - k - 1) + 1 + (j - l - 1);
            d[(i + 1) * w + j + 1] = sub.min(ins).min(del).min(trans);
        }
        last_row.insert(a[i - 1], i);
    }
    d[(n + 1) * w + m + 1]
}

/// Known words stay; otherwise the most frequent word at distance 1, then 2,
/// ties to the lexicographically smallest; otherwise the input.
pub fn brute_force_correct(word: &str, vocab: &[(String, u64)]) -> String {
    if vocab.iter().any(|(w, _)| w == word) {
        return word.to_string();
    }
    for d in 1..=2 {
        let best = vocab
            .iter()
            .filter(|(w, _)| damerau_levenshtein(word, w) == d)
            .max_by(|(wa, fa), (wb, fb)| fa.cmp(fb).then_with(|| wb.cmp(wa)));
        if let Some((w, _)) = best {
            return w.clone();
        }
    }
    word.to_string()
}

/// Number of strings over `a`-`z` within `max_d` edits of `word`, excluding
/// `word`, counted by enumerating a reduced alphabet: the letters of `word`
/// plus up to `max_d` fresh stand-ins, each fresh pattern weighted by the
/// number of distinct unused letters it represents.
pub fn count_candidates(word: &str, max_d: usize) -> u64 {
    let mut letters: Vec<char> = word.chars().collect();
    letters.sort_unstable();
    letters.dedup();
    let k = letters.len();
    let fresh: Vec<char> = ['0', '1'].into_iter().take(max_d).collect();
    let alphabet: Vec<char> = letters.iter().copied().chain(fresh.iter().copied()).collect();
    let len = word.chars().count();
    let mut total = 0u64;
    let mut buf = Vec::new();
    for l in len.saturating_sub(max_d)..=len + max_d {
        enumerate(&alphabet, l, &mut buf, &mut |s: &[char]| {
            // Fresh symbols must first appear in order '0' then '1'.
            let mut next_fresh = 0;
            for &c in s {
                if let Some(pos) = fresh.iter().position(|&f| f == c) {
                    if pos > next_fresh {
                        return;
                    }
                    if pos == next_fresh {
                        next_fresh += 1;
                    }
                }
            }
            let cand: String = s.iter().collect();
            if cand == word {
                return;
            }
            if damerau_levenshtein(word, &cand) <= max_d {
                let weight: u64 = (0..next_fresh).map(|i| (26 - k - i) as u64).product();
                total += weight;
            }
        });
    }
    total
}

fn enumerate(alphabet: &[char], len: usize, buf: &mut Vec<char>, visit: &mut impl FnMut(&[char])) {
    if buf.len() == len {
        visit(buf);
        return;
    }
    for &c in alphabet {
        buf.push(c);
        enumerate(alphabet, len, buf, visit);
        buf.pop();
    }
}

/// Minimum cost over every monotone path from the top-left to the
/// bottom-right cell with unit steps down, right or diagonal.
pub fn min_monotone_path(c: &[Vec<f64>]) -> f64 {
    fn walk(c: &[Vec<f64>], i: usize, j: usize) -> f64 {
        let (t, n) = (c.len(), c[0].len());
        let here = c[i][j];
        if i + 1 == t && j + 1 == n {
            return here;
        }
        let mut best = f64::INFINITY;
        if i + 1 < t {
            best = best.min(walk(c, i + 1, j));
        }
        if j + 1 < n {
            best = best.min(walk(c, i, j + 1));
        }
        if i + 1 < t && j + 1 < n {
            best = best.min(walk(c, i + 1, j + 1));
        }
        here + best
    }
    walk(c, 0, 0)
}

/// Recall@k of the diagonal by fully sorting each query's scores
/// (descending, ties by index). Returns `(rows as queries, columns as queries)`.
pub fn recall_full_sort(sim: &[Vec<f64>], k: usize) -> (f64, f64) {
    let r = sim.len();
    let c = sim[0].len();
    let n = r.min(c);
    let hit = |scores: Vec<f64>, target: usize| {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
        order.iter().position(|&x| x == target).unwrap() < k
    };
    let rows = (0..n).filter(|&i| hit(sim[i].clone(), i)).count();
    let cols = (0..n)
        .filter(|&j| hit((0..r).map(|i| sim[i][j]).collect(), j))
        .count();
    (rows as f64 / n as f64, cols as f64 / n as f64)
}

/// Two-sided normal-approximation binomial interval at 99%.
pub fn binomial_interval_99(p: f64, n: usize) -> (f64, f64) {
    let half = 2.5758293035489 * (p * (1.0 - p) / n as f64).sqrt();
    (p - half, p + half)
}

pub fn asset(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("assets").join(name)
}

/// `(word, frequency)` pairs from a tab-separated file, skipping `#` lines.
pub fn read_vocab_pairs(path: &std::path::Path) -> Vec<(String, u64)> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| {
            let mut it = l.split('\t');
            let w = it.next().unwrap().to_string();
            let f = it.next().unwrap().trim().parse().unwrap();
            (w, f)
        })
        .collect()
}
