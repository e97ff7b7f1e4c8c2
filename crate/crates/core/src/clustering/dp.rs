use crate::error::{Error, Result};

/// Minimum-cost label path under a per-switch penalty.
///
/// `costs` is `T × k` row-major. Minimizes `Σ costs[t][s_t] + beta · #{t : s_t ≠ s_{t-1}}`.
/// Ties are broken toward the lower cluster index at every backtrack step.
pub fn assign_dp(costs: &[f64], k: usize, beta: f64) -> Result<Vec<usize>> {
    if k == 0 || !costs.len().is_multiple_of(k) {
        return Err(Error::Shape {
            op: "assign_dp",
            left: vec![k],
            right: vec![costs.len()],
        });
    }
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::config(format!("switching penalty must be finite and >= 0, got {beta}")));
    }
    if costs.iter().any(|c| c.is_nan()) {
        return Err(Error::numerical("NaN in assignment costs"));
    }
    let t_len = costs.len() / k;
    if t_len == 0 {
        return Ok(Vec::new());
    }
    let mut acc = costs[..k].to_vec();
    let mut back = vec![0usize; t_len * k];
    let mut next = vec![0.0; k];
    for t in 1..t_len {
        for j in 0..k {
            let (mut arg, mut best) = (0, f64::INFINITY);
            for (i, &a) in acc.iter().enumerate() {
                let v = if i == j { a } else { a + beta };
                if v < best {
                    best = v;
                    arg = i;
                }
            }
            back[t * k + j] = arg;
            next[j] = best + costs[t * k + j];
        }
        std::mem::swap(&mut acc, &mut next);
    }
    let mut path = vec![0usize; t_len];
    let mut state = argmin(&acc);
    path[t_len - 1] = state;
    for t in (1..t_len).rev() {
        state = back[t * k + state];
        path[t - 1] = state;
    }
    Ok(path)
}

fn argmin(v: &[f64]) -> usize {
    let mut arg = 0;
    for (i, &x) in v.iter().enumerate() {
        if x < v[arg] {
            arg = i;
        }
    }
    arg
}

/// Objective value of a given path.
pub fn path_cost(costs: &[f64], k: usize, beta: f64, path: &[usize]) -> f64 {
    let mut total = 0.0;
    for (t, &s) in path.iter().enumerate() {
        total += costs[t * k + s];
        if t > 0 && path[t - 1] != s {
            total += beta;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn exhaustive(costs: &[f64], k: usize, beta: f64) -> f64 {
        let t_len = costs.len() / k;
        let mut best = f64::INFINITY;
        let mut path = vec![0usize; t_len];
        loop {
            best = best.min(path_cost(costs, k, beta, &path));
            let mut i = 0;
            loop {
                if i == t_len {
                    return best;
                }
                path[i] += 1;
                if path[i] < k {
                    break;
                }
                path[i] = 0;
                i += 1;
            }
        }
    }

    #[test]
    fn zero_penalty_is_pointwise_argmin() {
        let costs = [3.0, 1.0, 2.0, 0.5, 4.0, 0.1, 2.0, 2.0, 5.0];
        assert_eq!(assign_dp(&costs, 3, 0.0).unwrap(), vec![1, 2, 0]);
    }

    #[test]
    fn large_penalty_holds_one_state() {
        let costs = [0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0];
        assert_eq!(assign_dp(&costs, 2, 100.0).unwrap(), vec![0, 0, 0, 0]);
        assert_eq!(assign_dp(&costs, 2, 0.4).unwrap(), vec![0, 1, 0, 1]);
    }

    #[test]
    fn two_switches_versus_penalty() {
        let costs = [0.0, 10.0, 10.0, 0.0, 0.0, 10.0];
        assert_eq!(assign_dp(&costs, 2, 100.0).unwrap(), vec![0, 0, 0]);
        assert_eq!(assign_dp(&costs, 2, 1.0).unwrap(), vec![0, 1, 0]);
    }

    #[test]
    fn ties_prefer_lower_index() {
        assert_eq!(assign_dp(&[1.0; 8], 4, 1.0).unwrap(), vec![0, 0]);
        assert_eq!(assign_dp(&[], 3, 1.0).unwrap(), Vec::<usize>::new());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(assign_dp(&[1.0, 2.0, 3.0], 2, 0.0).is_err());
        assert!(assign_dp(&[1.0, 2.0], 2, -1.0).is_err());
        assert!(assign_dp(&[f64::NAN, 2.0], 2, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn optimal_versus_exhaustive(
            k in 1usize..4,
            t_len in 1usize..9,
            beta in 0.0f64..3.0,
            raw in prop::collection::vec(0.0f64..5.0, 24),
        ) {
            let costs = &raw[..t_len * k];
            let path = assign_dp(costs, k, beta).unwrap();
            let got = path_cost(costs, k, beta, &path);
            prop_assert!((got - exhaustive(costs, k, beta)).abs() < 1e-9);
        }

        #[test]
        fn zero_beta_matches_rowwise(k in 1usize..5, raw in prop::collection::vec(-3.0f64..3.0, 40)) {
            let t_len = raw.len() / k;
            let costs = &raw[..t_len * k];
            let path = assign_dp(costs, k, 0.0).unwrap();
            for t in 0..t_len {
                prop_assert_eq!(path[t], argmin(&costs[t * k..(t + 1) * k]));
            }
        }
    }
}
