use super::{EmbeddingError, WordVectorTable};

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine_sim(u: &[f64], v: &[f64]) -> Result<f64, EmbeddingError> {
    assert_eq!(u.len(), v.len(), "cosine of vectors with different dimensions");
    let (mut uv, mut uu, mut vv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        uv += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Err(EmbeddingError::ZeroVector);
    }
    Ok((uv / (uu * vv).sqrt()).clamp(-1.0, 1.0))
}

/// The `n` words of `table` most similar to `word`, most similar first.
/// Ties keep vocabulary order.
pub fn nearest_neighbors(
    table: &WordVectorTable,
    word: &str,
    n: usize,
) -> Result<Vec<(usize, f64)>, EmbeddingError> {
    let r = table
        .rank(word)
        .ok_or_else(|| EmbeddingError::WordMissing(word.to_string()))?;
    let norms = row_norms(table);
    neighbors_with_norms(table, &norms, r, n)
}

fn row_norms(table: &WordVectorTable) -> Vec<f64> {
    table
        .data()
        .chunks_exact(table.dim())
        .map(|row| row.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect()
}

fn neighbors_with_norms(
    table: &WordVectorTable,
    norms: &[f64],
    r: usize,
    n: usize,
) -> Result<Vec<(usize, f64)>, EmbeddingError> {
    if norms[r] == 0.0 {
        return Err(EmbeddingError::ZeroVector);
    }
    let target = table.row(r);
    let mut sims: Vec<(usize, f64)> = (0..table.len())
        .filter(|&j| j != r && norms[j] > 0.0)
        .map(|j| {
            let dot: f64 = target.iter().zip(table.row(j)).map(|(a, b)| a * b).sum();
            (j, (dot / (norms[r] * norms[j])).clamp(-1.0, 1.0))
        })
        .collect();
    let by_sim = |a: &(usize, f64), b: &(usize, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
    if n < sims.len() {
        sims.select_nth_unstable_by(n, by_sim);
        sims.truncate(n);
    }
    sims.sort_by(by_sim);
    Ok(sims)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecurityReport {
    pub word: String,
    /// Similarity of the word's original and synthetic vectors.
    pub sim_xx: f64,
    /// Similarity to the `limit_xy`-th nearest neighbour in the original table.
    pub sim_xy_n: f64,
    /// `sim_xx < limit_xx`
    pub condition1: bool,
    /// `sim_xx < sim_xy_n`
    pub condition2: bool,
}

pub fn check_word(
    t_alpha: &WordVectorTable,
    t_gamma: &WordVectorTable,
    word: &str,
    limit_xx: f64,
    limit_xy: usize,
) -> Result<SecurityReport, EmbeddingError> {
    let norms = row_norms(t_alpha);
    check_with_norms(t_alpha, t_gamma, &norms, word, limit_xx, limit_xy)
}

fn check_with_norms(
    t_alpha: &WordVectorTable,
    t_gamma: &WordVectorTable,
    norms: &[f64],
    word: &str,
    limit_xx: f64,
    limit_xy: usize,
) -> Result<SecurityReport, EmbeddingError> {
    let missing = || EmbeddingError::WordMissing(word.to_string());
    let ra = t_alpha.rank(word).ok_or_else(missing)?;
    let vg = t_gamma.get(word).ok_or_else(missing)?;
    if limit_xy == 0 {
        return Err(EmbeddingError::InvalidConfig("limit_xy must be at least 1".into()));
    }
    let sim_xx = cosine_sim(t_alpha.row(ra), vg)?;
    let neighbours = neighbors_with_norms(t_alpha, norms, ra, limit_xy)?;
    let &(_, sim_xy_n) = neighbours
        .get(limit_xy - 1)
        .ok_or(EmbeddingError::NotEnoughNeighbors(limit_xy))?;
    Ok(SecurityReport {
        word: word.to_string(),
        sim_xx,
        sim_xy_n,
        condition1: sim_xx < limit_xx,
        condition2: sim_xx < sim_xy_n,
    })
}

/// Evaluates both conditions for every word present in both tables.
pub fn check_security_conditions(
    t_alpha: &WordVectorTable,
    t_gamma: &WordVectorTable,
    limit_xx: f64,
    limit_xy: usize,
) -> Result<Vec<SecurityReport>, EmbeddingError> {
    let norms = row_norms(t_alpha);
    let shared: Vec<&String> = t_alpha
        .words()
        .iter()
        .filter(|w| t_gamma.rank(w).is_some())
        .collect();
    if shared.is_empty() {
        return Err(EmbeddingError::NoSharedWords);
    }
    shared
        .into_iter()
        .map(|w| check_with_norms(t_alpha, t_gamma, &norms, w, limit_xx, limit_xy))
        .collect()
}

/// `sim_xx` for every shared word, in `t_alpha` order.
pub fn shared_similarities(
    t_alpha: &WordVectorTable,
    t_gamma: &WordVectorTable,
) -> Result<Vec<(String, f64)>, EmbeddingError> {
    let mut out = Vec::new();
    for (w, va) in t_alpha.iter() {
        if let Some(vg) = t_gamma.get(w) {
            out.push((w.to_string(), cosine_sim(va, vg)?));
        }
    }
    if out.is_empty() {
        return Err(EmbeddingError::NoSharedWords);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_identities() {
        let v = [0.3, -1.7, 2.2];
        assert_eq!(cosine_sim(&v, &v).unwrap(), 1.0);
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert_eq!(cosine_sim(&v, &neg).unwrap(), -1.0);
        // (1,2,3)·(4,5,6) = 32; |a|² = 14, |b|² = 77
        let c = cosine_sim(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((c - 32.0 / (14.0f64 * 77.0).sqrt()).abs() < 1e-15);
        assert!(matches!(cosine_sim(&[0.0; 3], &v), Err(EmbeddingError::ZeroVector)));
    }

    #[test]
    fn identical_tables_fail_condition_one() {
        let t = WordVectorTable::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![1.0, 0.0, 0.8, 0.6, 0.0, 1.0],
            2,
        )
        .unwrap();
        let reports = check_security_conditions(&t, &t, 0.5, 1).unwrap();
        assert_eq!(reports.len(), 3);
        assert!(reports.iter().all(|r| !r.condition1 && !r.condition2 && r.sim_xx == 1.0));
        assert!(matches!(
            check_word(&t, &t, "zz", 0.5, 1),
            Err(EmbeddingError::WordMissing(_))
        ));
        assert!(matches!(
            check_word(&t, &t, "a", 0.5, 3),
            Err(EmbeddingError::NotEnoughNeighbors(3))
        ));
    }
}
