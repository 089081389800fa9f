//! Reference computations written independently of the library, used to
//! check it.
#![allow(dead_code, clippy::needless_range_loop)]

/// `(x, y, theta)` per agent.
pub type Pose = (f64, f64, f64);

/// Smooth minimum computed around the smallest value.
pub fn soft_min(h: &[f64], lambda: f64) -> f64 {
    let m = h.iter().copied().fold(f64::INFINITY, f64::min);
    let s: f64 = h.iter().map(|x| (-lambda * (x - m)).exp()).sum();
    m - s.ln() / lambda
}

pub fn aggregate_barrier(poses: &[Pose], pairs: &[(usize, usize)], d: f64, lambda: f64) -> f64 {
    let h: Vec<f64> = pairs
        .iter()
        .map(|&(i, j)| {
            let (xi, yi, _) = poses[i];
            let (xj, yj, _) = poses[j];
            (xi - xj).powi(2) + (yi - yj).powi(2) - d * d
        })
        .collect();
    soft_min(&h, lambda)
}

/// Poses after coasting for time `t` with no turning.
pub fn coast(poses: &[Pose], v: f64, t: f64) -> Vec<Pose> {
    poses
        .iter()
        .map(|&(x, y, th)| (x + v * t * th.cos(), y + v * t * th.sin(), th))
        .collect()
}

/// First and second time derivatives of the aggregate barrier along the
/// coasting flow, plus the sensitivity of the first derivative to each
/// heading, all by fourth-order central differences.
pub fn drift_derivatives_fd(
    poses: &[Pose],
    pairs: &[(usize, usize)],
    v: f64,
    d: f64,
    lambda: f64,
) -> (f64, f64, Vec<f64>) {
    let h = |p: &[Pose]| aggregate_barrier(p, pairs, d, lambda);
    let along = |p: &[Pose], t: f64| h(&coast(p, v, t));
    let first = |p: &[Pose]| {
        let t = 1e-3;
        (-along(p, 2.0 * t) + 8.0 * along(p, t) - 8.0 * along(p, -t) + along(p, -2.0 * t)) / (12.0 * t)
    };
    let t = 2e-3;
    let second = (-along(poses, 2.0 * t) + 16.0 * along(poses, t) - 30.0 * h(poses) + 16.0 * along(poses, -t)
        - along(poses, -2.0 * t))
        / (12.0 * t * t);
    let turned = |i: usize, e: f64| {
        let mut p = poses.to_vec();
        p[i].2 += e;
        first(&p)
    };
    let e = 1e-3;
    let a = (0..poses.len())
        .map(|i| (-turned(i, 2.0 * e) + 8.0 * turned(i, e) - 8.0 * turned(i, -e) + turned(i, -2.0 * e)) / (12.0 * e))
        .collect();
    (first(poses), second, a)
}

/// Largest `sum beta_i c_i` over allocations on a `1/units` grid with
/// `c_i <= d_i` and `sum c_i <= 1`, by exhaustive enumeration.
pub fn best_allocation_value(betas: &[f64], demands_units: &[usize], units: usize) -> f64 {
    fn go(i: usize, left: usize, betas: &[f64], dem: &[usize], units: usize) -> f64 {
        if i == betas.len() {
            return 0.0;
        }
        let mut best = f64::NEG_INFINITY;
        for q in 0..=dem[i].min(left) {
            let v = betas[i] * q as f64 / units as f64 + go(i + 1, left - q, betas, dem, units);
            best = best.max(v);
        }
        best
    }
    go(0, units, betas, demands_units, units)
}

/// Solve `m x = rhs` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Vec<f64> {
    let n = rhs.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap())
            .unwrap();
        m.swap(col, piv);
        rhs.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| m[row][k] * x[k]).sum();
        x[row] = (rhs[row] - s) / m[row][row];
    }
    x
}

/// Minimiser of `|u - nominal|^2` subject to `a . u >= b`: the nominal point
/// if feasible, otherwise the solution of the equality-constrained KKT
/// system.
pub fn projection_oracle(nominal: &[f64], a: &[f64], b: f64) -> Vec<f64> {
    let au: f64 = a.iter().zip(nominal).map(|(x, y)| x * y).sum();
    if au >= b {
        return nominal.to_vec();
    }
    let n = nominal.len();
    let mut m = vec![vec![0.0; n + 1]; n + 1];
    let mut rhs = vec![0.0; n + 1];
    for i in 0..n {
        m[i][i] = 1.0;
        m[i][n] = -a[i];
        m[n][i] = a[i];
        rhs[i] = nominal[i];
    }
    rhs[n] = b;
    let mut sol = gauss_solve(m, rhs);
    sol.truncate(n);
    sol
}

/// Welfare-optimal credit of the first of two bidders that share `k`,
/// from equating marginal valuations.
pub fn two_bidder_split(scale1: f64, scale2: f64, k: f64) -> f64 {
    (0.5 + (scale1 / scale2).ln() / (2.0 * k)).clamp(0.0, 1.0)
}
