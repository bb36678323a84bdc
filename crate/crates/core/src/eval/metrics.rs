use serde::Serialize;

/// Outcome of one evaluated episode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpisodeResult {
    pub episode: usize,
    pub world_seed: u64,
    pub success: bool,
    /// Distance actually travelled, `p_i`.
    pub path_length: f64,
    /// Optimal path length, `L_i`.
    pub optimal_length: f64,
    pub steps: usize,
    pub collisions: usize,
    pub corrections: usize,
    pub final_distance: f64,
}

impl EpisodeResult {
    pub fn spl(&self) -> f64 {
        spl_term(self.success, self.path_length, self.optimal_length)
    }
}

/// `S L / max(L, p)` for one episode.
pub fn spl_term(success: bool, path_length: f64, optimal_length: f64) -> f64 {
    if success {
        optimal_length / optimal_length.max(path_length)
    } else {
        0.0
    }
}

/// Mean of `S_i L_i / max(L_i, p_i)` over `(S_i, p_i, L_i)` triples.
pub fn compute_spl(results: &[(bool, f64, f64)]) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    results.iter().map(|&(s, p, l)| spl_term(s, p, l)).sum::<f64>() / results.len() as f64
}

pub fn compute_sr(successes: impl IntoIterator<Item = bool>) -> f64 {
    let (mut hit, mut n) = (0usize, 0usize);
    for s in successes {
        hit += s as usize;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        hit as f64 / n as f64
    }
}

/// Aggregate over an episode set.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalResult {
    pub episodes: Vec<EpisodeResult>,
    /// Episodes left out because start and goal are disconnected.
    pub skipped: Vec<usize>,
    pub total_steps: usize,
    pub corrected_steps: usize,
}

impl EvalResult {
    pub fn sr(&self) -> f64 {
        compute_sr(self.episodes.iter().map(|e| e.success))
    }

    pub fn spl(&self) -> f64 {
        let rows: Vec<_> = self
            .episodes
            .iter()
            .map(|e| (e.success, e.path_length, e.optimal_length))
            .collect();
        compute_spl(&rows)
    }

    /// Corrected steps over all steps.
    pub fn correction_rate(&self) -> f64 {
        if self.total_steps == 0 {
            0.0
        } else {
            self.corrected_steps as f64 / self.total_steps as f64
        }
    }

    pub fn collisions(&self) -> usize {
        self.episodes.iter().map(|e| e.collisions).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tabulated() {
        assert_eq!(compute_spl(&[(true, 4.0, 4.0)]), 1.0);
        assert_eq!(compute_spl(&[(false, 1.0, 4.0)]), 0.0);
        assert_eq!(compute_spl(&[(true, 8.0, 4.0), (false, 3.0, 4.0)]), 0.25);
        assert_eq!(compute_spl(&[(true, 0.0, 2.0)]), 1.0);
    }
}
