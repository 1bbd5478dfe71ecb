//! Non-negative dual of the GEM projection.
//!
//! With memory gradients stacked as rows of `G`, the projection of `g` onto
//! `{x : G x >= 0}` is `g + G^T v` where `v >= 0` minimizes
//! `1/2 v^T (G G^T) v + (G g)^T v`. Everything here works on the small
//! `m x m` Gram matrix, so the cost is independent of the parameter count.

/// Sweep limit for coordinate descent before falling back to the active-set solver.
pub const MAX_SWEEPS: usize = 10_000;

/// Solves `min 1/2 v^T Q v + q^T v, v >= 0` for a positive semi-definite `Q`
/// with a strictly positive diagonal.
///
/// `tol` bounds the acceptable violation of `Q v + q >= 0` (which is exactly
/// the primal constraint `<g~, g_k> >= 0`) and of complementary slackness.
pub fn solve_nonneg_dual(gram: &[Vec<f64>], linear: &[f64], tol: f64) -> Vec<f64> {
    let m = linear.len();
    let mut v = vec![0.0; m];
    // grad_i = (Q v + q)_i, the current value of <g~, g_i>.
    let mut grad = linear.to_vec();
    for _ in 0..MAX_SWEEPS {
        for i in 0..m {
            let next = (v[i] - grad[i] / gram[i][i]).max(0.0);
            let delta = next - v[i];
            if delta != 0.0 {
                for (r, g) in grad.iter_mut().enumerate() {
                    *g += gram[r][i] * delta;
                }
                v[i] = next;
            }
        }
        if kkt_residual(&v, &grad) <= tol {
            return v;
        }
    }
    active_set(gram, linear, tol)
}

/// Largest violation of primal feasibility or complementary slackness.
pub fn kkt_residual(v: &[f64], grad: &[f64]) -> f64 {
    v.iter()
        .zip(grad)
        .map(|(&vi, &gi)| if vi > 0.0 { gi.abs() } else { (-gi).max(0.0) })
        .fold(0.0, f64::max)
}

fn gradient(gram: &[Vec<f64>], linear: &[f64], v: &[f64]) -> Vec<f64> {
    linear
        .iter()
        .enumerate()
        .map(|(r, q)| q + gram[r].iter().zip(v).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}

/// Lawson-Hanson active-set method on the Gram form. Exact up to rounding.
fn active_set(gram: &[Vec<f64>], linear: &[f64], tol: f64) -> Vec<f64> {
    let m = linear.len();
    let mut v = vec![0.0; m];
    let mut passive = vec![false; m];
    for _ in 0..(3 * m + 10) {
        let grad = gradient(gram, linear, &v);
        let Some(t) = (0..m)
            .filter(|&i| !passive[i] && grad[i] < -tol)
            .min_by(|&a, &b| grad[a].total_cmp(&grad[b]))
        else {
            break;
        };
        passive[t] = true;
        loop {
            let idx: Vec<usize> = (0..m).filter(|&i| passive[i]).collect();
            let Some(z_p) = solve_sub(gram, linear, &idx) else {
                passive[t] = false;
                return v;
            };
            let mut z = vec![0.0; m];
            for (&i, &zi) in idx.iter().zip(&z_p) {
                z[i] = zi;
            }
            if idx.iter().all(|&i| z[i] > 0.0) {
                v = z;
                break;
            }
            let alpha = idx
                .iter()
                .filter(|&&i| z[i] <= 0.0)
                .map(|&i| v[i] / (v[i] - z[i]))
                .fold(f64::INFINITY, f64::min);
            for i in 0..m {
                v[i] += alpha * (z[i] - v[i]);
                if passive[i] && v[i] <= 1e-300 {
                    passive[i] = false;
                    v[i] = 0.0;
                }
            }
        }
    }
    v
}

/// Solves `Q[idx, idx] z = -q[idx]` by Gaussian elimination with partial pivoting.
fn solve_sub(gram: &[Vec<f64>], linear: &[f64], idx: &[usize]) -> Option<Vec<f64>> {
    let n = idx.len();
    let mut a: Vec<Vec<f64>> = idx
        .iter()
        .map(|&r| {
            let mut row: Vec<f64> = idx.iter().map(|&c| gram[r][c]).collect();
            row.push(-linear[r]);
            row
        })
        .collect();
    let scale = idx.iter().map(|&i| gram[i][i]).fold(0.0, f64::max);
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[pivot][col].abs() <= 1e-14 * scale {
            return None;
        }
        a.swap(col, pivot);
        let (top, rest) = a.split_at_mut(col + 1);
        let pivot_row = &top[col];
        for row in rest.iter_mut() {
            let f = row[col] / pivot_row[col];
            for (x, p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= f * p;
            }
        }
    }
    let mut z = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * z[c]).sum();
        z[r] = (a[r][n] - s) / a[r][r];
    }
    Some(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_constraint_closed_form() {
        // Q = [4], q = [-2]: v = 0.5
        let v = solve_nonneg_dual(&[vec![4.0]], &[-2.0], 1e-12);
        assert_eq!(v, vec![0.5]);
    }

    #[test]
    fn inactive_constraint_stays_zero() {
        let v = solve_nonneg_dual(&[vec![1.0]], &[3.0], 1e-12);
        assert_eq!(v, vec![0.0]);
    }

    #[test]
    fn active_set_matches_coordinate_descent() {
        let gram = vec![
            vec![2.0, 0.9, -0.3],
            vec![0.9, 1.5, 0.2],
            vec![-0.3, 0.2, 1.0],
        ];
        let q = vec![-1.0, -0.4, 0.5];
        let cd = solve_nonneg_dual(&gram, &q, 1e-13);
        let exact = active_set(&gram, &q, 1e-13);
        for (a, b) in cd.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-10, "{cd:?} vs {exact:?}");
        }
        assert!(kkt_residual(&exact, &gradient(&gram, &q, &exact)) < 1e-12);
    }
}
