//! Random-intercept linear mixed model fitted by REML.
//!
//! Model: `y = Xβ + Zu + ε`, `u ~ N(0, σ_u² I)`, `ε ~ N(0, σ_e² I)`, with one
//! intercept per group. Writing `λ = σ_u² / σ_e²` and `H = I + λ ZZᵀ`, the
//! GLS estimate `β(λ)` and `σ_e²(λ)` are closed-form, so the restricted
//! likelihood reduces to a scalar function of `λ`:
//!
//! ```text
//! ℓ(λ) = -½ [ (N-p)(1 + log(2π r/(N-p))) + Σ_g log(1 + n_g λ) + log|XᵀH⁻¹X| ]
//! r    = yᵀH⁻¹y - β̂ᵀXᵀH⁻¹y
//! ```
//!
//! `H` is block diagonal with `H_g⁻¹ = I - λ/(1 + n_g λ) 11ᵀ`, so every term
//! only needs per-group sums. `ℓ` is maximised over `log λ` by a coarse grid,
//! Brent's golden-section/parabolic search inside the best bracket, and a
//! final bisection on the analytic score.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::design::Design;
use super::linalg::{dot, Cholesky, Matrix};
use crate::error::{invalid, Error, Result};

pub const RATIO_MIN: f64 = 1e-8;
pub const RATIO_MAX: f64 = 1e8;
const GRID_POINTS: usize = 49;
const MAX_ITER: usize = 200;
const CRITERION_TOL: f64 = 1e-10;
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedModelFit {
    pub fixed_effects: Vec<Coefficient>,
    /// Covariance of the fixed-effect estimates, in coefficient order.
    pub covariance: Vec<Vec<f64>>,
    pub sigma_u2: f64,
    pub sigma_e2: f64,
    pub reml_loglik: f64,
    pub converged: bool,
    /// The optimum sits on the `σ_u² = 0` boundary.
    pub boundary: bool,
    pub iterations: usize,
    pub n_obs: usize,
    pub n_groups: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

impl MixedModelFit {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.fixed_effects.iter().find(|c| c.name == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.fixed_effects.iter().position(|c| c.name == name)
    }

    pub fn ratio(&self) -> f64 {
        self.sigma_u2 / self.sigma_e2
    }
}

struct Group {
    n: f64,
    /// Column sums of X within the group.
    s: Vec<f64>,
    /// Sum of y within the group.
    t: f64,
}

/// Sufficient statistics: within-group centred cross-products plus group
/// totals. Centring first keeps `XᵀH⁻¹X` accurate at large `λ`.
struct Profile {
    n: usize,
    p: usize,
    wxx: Matrix,
    wxy: Vec<f64>,
    wyy: f64,
    groups: Vec<Group>,
}

struct Eval {
    loglik: f64,
    beta: Vec<f64>,
    r: f64,
    chol: Cholesky,
    /// dℓ/dλ
    score: f64,
}

impl Profile {
    fn new<S: AsRef<str>>(y: &[f64], x: &Matrix, group_ids: &[S]) -> Result<Self> {
        let n = y.len();
        let p = x.cols();
        if x.rows() != n || group_ids.len() != n {
            return Err(invalid!(
                "response has {n} rows, design {}, groups {}",
                x.rows(),
                group_ids.len()
            ));
        }
        if let Some(v) = y.iter().find(|v| !v.is_finite()) {
            return Err(invalid!("non-finite response {v}"));
        }
        if n <= p + 1 {
            return Err(invalid!("{n} observations for {p} fixed effects"));
        }
        let mut index: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, g) in group_ids.iter().enumerate() {
            index.entry(g.as_ref()).or_default().push(i);
        }
        if index.len() < 2 {
            return Err(invalid!("random intercept needs at least two groups"));
        }
        let mut wxx = Matrix::zeros(p, p);
        let mut wxy = vec![0.0; p];
        let mut wyy = 0.0;
        let mut groups = Vec::with_capacity(index.len());
        for rows in index.values() {
            let ng = rows.len() as f64;
            let mut s = vec![0.0; p];
            let mut t = 0.0;
            for &i in rows {
                for (j, sj) in s.iter_mut().enumerate() {
                    *sj += x[(i, j)];
                }
                t += y[i];
            }
            let xbar: Vec<f64> = s.iter().map(|v| v / ng).collect();
            let ybar = t / ng;
            for &i in rows {
                let dy = y[i] - ybar;
                wyy += dy * dy;
                for a in 0..p {
                    let da = x[(i, a)] - xbar[a];
                    wxy[a] += da * dy;
                    for b in 0..=a {
                        wxx[(a, b)] += da * (x[(i, b)] - xbar[b]);
                    }
                }
            }
            groups.push(Group { n: ng, s, t });
        }
        for a in 0..p {
            for b in 0..a {
                wxx[(b, a)] = wxx[(a, b)];
            }
        }
        let profile = Profile {
            n,
            p,
            wxx,
            wxy,
            wyy,
            groups,
        };
        let xtx = profile.xhx(0.0);
        let rank = xtx.psd_rank(RANK_TOL);
        if rank < p {
            return Err(Error::RankDeficient { rank, columns: p });
        }
        Ok(profile)
    }

    fn weight(g: &Group, lambda: f64) -> f64 {
        1.0 / (1.0 + g.n * lambda)
    }

    fn xhx(&self, lambda: f64) -> Matrix {
        let mut m = self.wxx.clone();
        for g in &self.groups {
            let c = Self::weight(g, lambda) / g.n;
            for a in 0..self.p {
                for b in 0..self.p {
                    m[(a, b)] += c * g.s[a] * g.s[b];
                }
            }
        }
        m
    }

    fn eval(&self, lambda: f64) -> Result<Eval> {
        let m = self.xhx(lambda);
        let mut xhy = self.wxy.clone();
        let mut yhy = self.wyy;
        let mut log_det_h = 0.0;
        for g in &self.groups {
            let w = Self::weight(g, lambda);
            let c = w / g.n;
            for (a, v) in xhy.iter_mut().enumerate() {
                *v += c * g.s[a] * g.t;
            }
            yhy += c * g.t * g.t;
            log_det_h += libm::log1p(g.n * lambda);
        }
        let chol = m.cholesky()?;
        let beta = chol.solve(&xhy);
        let r = yhy - dot(&beta, &xhy);
        let dof = (self.n - self.p) as f64;
        if !(r > 0.0) {
            return Err(Error::UndefinedInput(
                "response is fitted exactly by the fixed effects".into(),
            ));
        }
        let loglik = -0.5
            * (dof * (1.0 + libm::log(2.0 * core::f64::consts::PI * r / dof))
                + log_det_h
                + chol.log_det());

        let mut trace = 0.0;
        let mut quad = 0.0;
        for g in &self.groups {
            let w = Self::weight(g, lambda);
            let minv_s = chol.solve(&g.s);
            trace += g.n * w - w * w * dot(&g.s, &minv_s);
            let e = g.t - dot(&g.s, &beta);
            quad += w * w * e * e;
        }
        let score = -0.5 * (trace - dof * quad / r);
        Ok(Eval {
            loglik,
            beta,
            r,
            chol,
            score,
        })
    }

    fn finish(&self, lambda: f64, e: Eval, names: &[String]) -> MixedModelFit {
        let sigma_e2 = e.r / (self.n - self.p) as f64;
        let inv = e.chol.inverse();
        let covariance: Vec<Vec<f64>> = (0..self.p)
            .map(|i| (0..self.p).map(|j| sigma_e2 * inv[(i, j)]).collect())
            .collect();
        let fixed_effects = names
            .iter()
            .zip(&e.beta)
            .enumerate()
            .map(|(i, (name, b))| Coefficient {
                name: name.clone(),
                estimate: *b,
                std_error: libm::sqrt(covariance[i][i]),
            })
            .collect();
        MixedModelFit {
            fixed_effects,
            covariance,
            sigma_u2: lambda * sigma_e2,
            sigma_e2,
            reml_loglik: e.loglik,
            converged: true,
            boundary: lambda == 0.0,
            iterations: 0,
            n_obs: self.n,
            n_groups: self.groups.len(),
            diagnostics: Vec::new(),
        }
    }
}

/// Fits the random-intercept model by REML.
pub fn fit_lmm_reml<S: AsRef<str>>(response: &[f64], design: &Design, group_ids: &[S]) -> Result<MixedModelFit> {
    let profile = Profile::new(response, &design.matrix, group_ids)?;
    let f = |theta: f64| profile.eval(libm::exp(theta)).map(|e| e.loglik);

    let lo = libm::log(RATIO_MIN);
    let hi = libm::log(RATIO_MAX);
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..GRID_POINTS).map(|i| lo + step * i as f64).collect();
    let values = grid.iter().map(|&t| f(t)).collect::<Result<Vec<f64>>>()?;
    let best = (0..GRID_POINTS)
        .max_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("grid is non-empty");

    let mut diagnostics = Vec::new();
    let local_maxima = (0..GRID_POINTS)
        .filter(|&i| {
            (i == 0 || values[i] > values[i - 1]) && (i + 1 == GRID_POINTS || values[i] >= values[i + 1])
        })
        .count();
    if local_maxima > 1 {
        diagnostics.push(format!(
            "restricted likelihood has {local_maxima} local maxima on the search grid; global one kept"
        ));
    }

    let a = grid[best.saturating_sub(1)];
    let b = grid[(best + 1).min(GRID_POINTS - 1)];
    let (theta, _, mut iterations, brent_ok) = brent_max(&f, a, b)?;

    let at_lower = best == 0 && theta - lo < 1e-6;
    let at_upper = best + 1 == GRID_POINTS && hi - theta < 1e-6;

    if at_lower {
        // The criterion is maximised as λ → 0; report the boundary fit.
        let e = profile.eval(0.0)?;
        let mut fit = profile.finish(0.0, e, &design.names);
        fit.iterations = iterations;
        fit.diagnostics = diagnostics;
        return Ok(fit);
    }

    // Polish on the analytic score, which changes sign across an interior
    // maximum.
    let g = |t: f64| profile.eval(libm::exp(t)).map(|e| e.score);
    let mut theta = theta;
    let (mut left, mut right) = (a, b);
    if !at_upper && g(left)? > 0.0 && g(right)? < 0.0 {
        for _ in 0..100 {
            let mid = 0.5 * (left + right);
            if mid <= left || mid >= right {
                break;
            }
            if g(mid)? > 0.0 {
                left = mid;
            } else {
                right = mid;
            }
            iterations += 1;
        }
        theta = 0.5 * (left + right);
    }

    let lambda = libm::exp(theta);
    let e = profile.eval(lambda)?;
    let mut fit = profile.finish(lambda, e, &design.names);
    fit.iterations = iterations;
    if at_upper {
        fit.converged = false;
        diagnostics.push(format!(
            "variance ratio reached the upper search bound {RATIO_MAX:e}"
        ));
    } else if !brent_ok {
        fit.converged = false;
        diagnostics.push(format!("bracketed search did not converge in {MAX_ITER} iterations"));
    }
    fit.diagnostics = diagnostics;
    Ok(fit)
}

/// Evaluates the model at a fixed variance ratio `λ = σ_u²/σ_e²` without
/// optimising. At `λ = 0` this is ordinary least squares.
pub fn fit_at_ratio<S: AsRef<str>>(
    response: &[f64],
    design: &Design,
    group_ids: &[S],
    lambda: f64,
) -> Result<MixedModelFit> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Parameter(format!("variance ratio must be finite and >= 0, got {lambda}")));
    }
    let profile = Profile::new(response, &design.matrix, group_ids)?;
    let e = profile.eval(lambda)?;
    Ok(profile.finish(lambda, e, &design.names))
}

/// Brent's method (golden section with parabolic steps) maximising `f` on
/// `[a, b]`. Returns `(x, f(x), iterations, converged)`.
fn brent_max<F: Fn(f64) -> Result<f64>>(f: &F, mut a: f64, mut b: f64) -> Result<(f64, f64, usize, bool)> {
    const GOLD: f64 = 0.381_966_011_250_105_1;
    let mut x = a + GOLD * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = -f(x)?;
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e) = (0.0f64, 0.0f64);
    let mut last = fx;
    for iter in 1..=MAX_ITER {
        let m = 0.5 * (a + b);
        let tol = 1e-10 * libm::fabs(x) + 1e-12;
        let tol2 = 2.0 * tol;
        if libm::fabs(x - m) <= tol2 - 0.5 * (b - a) {
            return Ok((x, -fx, iter, true));
        }
        let mut golden = true;
        if libm::fabs(e) > tol {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            } else {
                q = -q;
            }
            if libm::fabs(p) < libm::fabs(0.5 * q * e) && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < m { tol } else { -tol };
                }
                golden = false;
            }
        }
        if golden {
            e = if x < m { b - x } else { a - x };
            d = GOLD * e;
        }
        let u = if libm::fabs(d) >= tol { x + d } else if d > 0.0 { x + tol } else { x - tol };
        let fu = -f(u)?;
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
        // the criterion has stopped moving and the bracket is small
        if libm::fabs(last - fx) < CRITERION_TOL && b - a < 1e-6 {
            return Ok((x, -fx, iter, true));
        }
        last = fx;
    }
    Ok((x, -fx, MAX_ITER, false))
}

/// Ordinary least squares coefficients, used as an oracle in tests and by
/// callers that need the no-random-effect baseline.
pub fn ols(response: &[f64], design: &Design) -> Result<Vec<f64>> {
    let x = &design.matrix;
    let p = x.cols();
    if response.len() != x.rows() {
        return Err(invalid!("response has {} rows, design {}", response.len(), x.rows()));
    }
    let mut xtx = Matrix::zeros(p, p);
    let mut xty = vec![0.0; p];
    for i in 0..x.rows() {
        let row = x.row(i);
        for a in 0..p {
            xty[a] += row[a] * response[i];
            for b in 0..p {
                xtx[(a, b)] += row[a] * row[b];
            }
        }
    }
    let rank = xtx.psd_rank(RANK_TOL);
    if rank < p {
        return Err(Error::RankDeficient { rank, columns: p });
    }
    Ok(xtx.cholesky()?.solve(&xty))
}

#[doc(hidden)]
pub fn group_labels(n_groups: usize, per_group: usize) -> Vec<String> {
    (0..n_groups * per_group)
        .map(|i| format!("g{:03}", i / per_group))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn intercept_only(n: usize) -> Design {
        Design::builder(n).build().unwrap()
    }

    fn balanced_closed_form(y: &[f64], k: usize, n: usize) -> (f64, f64) {
        let grand = y.iter().sum::<f64>() / y.len() as f64;
        let mut ssb = 0.0;
        let mut ssw = 0.0;
        for g in 0..k {
            let obs = &y[g * n..(g + 1) * n];
            let m = obs.iter().sum::<f64>() / n as f64;
            ssb += n as f64 * (m - grand) * (m - grand);
            ssw += obs.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
        }
        let msb = ssb / (k - 1) as f64;
        let msw = ssw / (k * (n - 1)) as f64;
        ((msb - msw) / n as f64, msw)
    }

    #[test]
    fn balanced_design_matches_mean_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = Normal::new(0.0, 2.0).unwrap();
        let e = Normal::new(0.0, 1.0).unwrap();
        let (k, n) = (12, 5);
        for _ in 0..5 {
            let mut y = Vec::new();
            for _ in 0..k {
                let ug = u.sample(&mut rng);
                for _ in 0..n {
                    y.push(3.0 + ug + e.sample(&mut rng));
                }
            }
            let (su, se) = balanced_closed_form(&y, k, n);
            assert!(su > 0.0);
            let fit = fit_lmm_reml(&y, &intercept_only(y.len()), &group_labels(k, n)).unwrap();
            assert!(fit.converged);
            assert!((fit.sigma_u2 - su).abs() < 1e-8, "{} vs {su}", fit.sigma_u2);
            assert!((fit.sigma_e2 - se).abs() < 1e-8, "{} vs {se}", fit.sigma_e2);
            let mean = y.iter().sum::<f64>() / y.len() as f64;
            assert!((fit.fixed_effects[0].estimate - mean).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_ratio_is_ols() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let e = Normal::new(0.0, 1.0).unwrap();
        let n = 40;
        let labels: Vec<&str> = (0..n).map(|i| ["a", "b", "c"][i % 3]).collect();
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let y: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * x[i] + e.sample(&mut rng)).collect();
        let d = Design::builder(n).factor("engine", &labels, "a").covariate("x", &x).build().unwrap();
        let groups = group_labels(8, 5);
        let fit = fit_at_ratio(&y, &d, &groups, 0.0).unwrap();
        let beta = ols(&y, &d).unwrap();
        for (c, b) in fit.fixed_effects.iter().zip(&beta) {
            assert!((c.estimate - b).abs() < 1e-12);
        }
        assert_eq!(fit.sigma_u2, 0.0);
    }

    #[test]
    fn no_between_group_signal_lands_on_boundary() {
        // every group holds the same residual pattern, so group means coincide
        let pattern = [-1.0, 0.5, 2.0, -1.5];
        let k = 10;
        let mut y = Vec::new();
        let mut labels = Vec::new();
        let mut x = Vec::new();
        for g in 0..k {
            for (j, r) in pattern.iter().enumerate() {
                let engine = ["a", "b"][j % 2];
                let xv = j as f64 * 0.25;
                y.push(2.0 + if engine == "b" { 1.0 } else { 0.0 } + 0.3 * xv + r + 0.01 * (g % 2) as f64);
                labels.push(engine);
                x.push(xv);
            }
        }
        let d = Design::builder(y.len()).factor("engine", &labels, "a").covariate("x", &x).build().unwrap();
        let fit = fit_lmm_reml(&y, &d, &group_labels(k, pattern.len())).unwrap();
        assert!(fit.converged && fit.boundary);
        assert!(fit.sigma_u2 <= 1e-6);
        let beta = ols(&y, &d).unwrap();
        for (c, b) in fit.fixed_effects.iter().zip(&beta) {
            assert!((c.estimate - b).abs() < 1e-8);
        }
    }

    #[test]
    fn score_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let e = Normal::new(0.0, 1.0).unwrap();
        let n = 36;
        let y: Vec<f64> = (0..n).map(|i| (i / 4) as f64 * 0.3 + e.sample(&mut rng)).collect();
        let x: Vec<f64> = (0..n).map(|i| (i % 4) as f64).collect();
        let d = Design::builder(n).covariate("x", &x).build().unwrap();
        let p = Profile::new(&y, &d.matrix, &group_labels(9, 4)).unwrap();
        for lambda in [0.05, 0.7, 3.0] {
            let h = 1e-6 * lambda;
            let fd = (p.eval(lambda + h).unwrap().loglik - p.eval(lambda - h).unwrap().loglik) / (2.0 * h);
            let an = p.eval(lambda).unwrap().score;
            assert!((fd - an).abs() < 1e-6 * (1.0 + an.abs()), "λ={lambda}: {fd} vs {an}");
        }
    }

    #[test]
    fn rank_deficiency_rejected() {
        let n = 12;
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let d = Design::builder(n).covariate("x", &x).covariate("x2", &x2).build().unwrap();
        let y: Vec<f64> = (0..n).map(|i| (i * i % 7) as f64).collect();
        let r = fit_lmm_reml(&y, &d, &group_labels(3, 4));
        assert!(matches!(r, Err(Error::RankDeficient { rank: 2, columns: 3 })));
    }

    #[test]
    fn input_errors() {
        let d = intercept_only(4);
        assert!(fit_lmm_reml(&[1.0, 2.0, 3.0, 4.0], &d, &["a", "a", "a", "a"]).is_err());
        assert!(fit_lmm_reml(&[1.0, 2.0, 3.0], &d, &["a", "a", "b", "b"]).is_err());
        let small = intercept_only(2);
        assert!(fit_lmm_reml(&[1.0, 2.0], &small, &["a", "b"]).is_err());
    }
}
