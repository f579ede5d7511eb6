use super::{AdmmError, Blocks};

/// Exact minimizer over `u_bar` of
/// `|sum_i u_bar_i - p_tot|^2 + sum_i lambda_i . (u_bar_i - u_i) + rho/2 |u_bar_i - u_i|^2`.
///
/// The problem separates per timestep into an N-dimensional quadratic with
/// Hessian `rho I + 2 11^T`, inverted with the rank-one identity. The sum
/// of targets at timestep `t` is `(rho S_u - S_lambda + 2 N P_t) / (rho + 2N)`
/// and each block is then `u_i - (lambda_i + 2 (S_bar - P_t)) / rho`.
pub fn coordinator_solve(u: &Blocks, lambda: &Blocks, p_tot: &[f64], rho: f64) -> Result<Blocks, AdmmError> {
    if !(rho > 0.0) {
        return Err(AdmmError::NonPositiveRho(rho));
    }
    let n = u.len();
    let h = p_tot.len();
    if lambda.len() != n || u.iter().chain(lambda).any(|b| b.len() != h) {
        return Err(AdmmError::Shape(format!("expected {n} blocks of length {h}")));
    }
    if p_tot.iter().any(|p| !p.is_finite()) {
        return Err(AdmmError::NonFinite { iter: 0, what: "p_tot" });
    }
    let nf = n as f64;
    let mut out = vec![vec![0.0; h]; n];
    for t in 0..h {
        let s_u: f64 = u.iter().map(|b| b[t]).sum();
        let s_l: f64 = lambda.iter().map(|b| b[t]).sum();
        let s_bar = (rho * s_u - s_l + 2.0 * nf * p_tot[t]) / (rho + 2.0 * nf);
        let shift = 2.0 * (s_bar - p_tot[t]);
        for i in 0..n {
            out[i][t] = u[i][t] - (lambda[i][t] + shift) / rho;
        }
    }
    Ok(out)
}

/// `lambda_i += rho (x_bar_i - x_i)` for every block.
pub fn dual_update(lambda: &mut Blocks, x_bar: &Blocks, x: &Blocks, rho: f64) {
    for ((l, xb), xi) in lambda.iter_mut().zip(x_bar).zip(x) {
        for t in 0..l.len() {
            l[t] += rho * (xb[t] - xi[t]);
        }
    }
}
