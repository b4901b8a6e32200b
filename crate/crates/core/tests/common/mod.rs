//! Reference computations that share no code with the library.
#![allow(dead_code)]

use geee::{Asymmetry, CorrelationKind, LongitudinalDataset, Subject};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn tau(t: f64) -> Asymmetry {
    Asymmetry::new(t).unwrap()
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn gj_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut inv = DMatrix::identity(n, n);
    for c in 0..n {
        let piv = (c..n)
            .max_by(|&i, &j| m[(i, c)].abs().partial_cmp(&m[(j, c)].abs()).unwrap())
            .unwrap();
        m.swap_rows(c, piv);
        inv.swap_rows(c, piv);
        let d = m[(c, c)];
        assert!(d.abs() > 1e-300, "singular matrix in oracle");
        for j in 0..n {
            m[(c, j)] /= d;
            inv[(c, j)] /= d;
        }
        for i in 0..n {
            if i != c {
                let f = m[(i, c)];
                if f != 0.0 {
                    for j in 0..n {
                        m[(i, j)] -= f * m[(c, j)];
                        inv[(i, j)] -= f * inv[(c, j)];
                    }
                }
            }
        }
    }
    inv
}

pub fn ols(data: &LongitudinalDataset) -> DVector<f64> {
    let x = data.stacked_design();
    let y = data.stacked_response();
    gj_inverse(&(x.transpose() * &x)) * x.transpose() * y
}

/// Heteroscedasticity-consistent covariance of OLS (White's HC0).
pub fn hc0(data: &LongitudinalDataset) -> DMatrix<f64> {
    let x = data.stacked_design();
    let y = data.stacked_response();
    let b = ols(data);
    let e = &y - &x * &b;
    let p = x.ncols();
    let mut meat = DMatrix::zeros(p, p);
    for i in 0..x.nrows() {
        let xi = x.row(i).transpose();
        meat += &xi * xi.transpose() * (e[i] * e[i]);
    }
    let bread = gj_inverse(&(x.transpose() * &x));
    &bread * meat * &bread
}

fn corr_matrix(kind: CorrelationKind, alpha: &DMatrix<f64>, m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |t, s| {
        if t == s {
            return 1.0;
        }
        match kind {
            CorrelationKind::Independence => 0.0,
            CorrelationKind::Exchangeable => alpha[(0, 0)],
            CorrelationKind::Ar1 => alpha[(0, 0)].powi((t as i32 - s as i32).abs()),
            CorrelationKind::Unstructured => alpha[(t, s)],
        }
    })
}

/// Classical Gaussian GEE with moment estimators: generalised
/// least squares at the current correlation, alternated with moment updates
/// of the scale and correlation until the coefficients settle. Returns the
/// estimate and its robust covariance.
pub fn classical_gee(data: &LongitudinalDataset, kind: CorrelationKind) -> (DVector<f64>, DMatrix<f64>) {
    let p = data.n_covariates();
    let n_obs = data.n_obs() as f64;
    let m_max = data.max_cluster_size();
    let mut beta = ols(data);
    let mut alpha = DMatrix::zeros(m_max.max(1), m_max.max(1));
    for _ in 0..2000 {
        let res: Vec<DVector<f64>> = data
            .subjects()
            .iter()
            .map(|s| &s.response - &s.design * &beta)
            .collect();
        let phi: f64 = res.iter().map(|e| e.norm_squared()).sum::<f64>() / (n_obs - p as f64);
        match kind {
            CorrelationKind::Independence => {}
            CorrelationKind::Exchangeable => {
                let mut num = 0.0;
                let mut pairs = 0.0;
                for e in &res {
                    for t in 0..e.len() {
                        for s in t + 1..e.len() {
                            num += e[t] * e[s];
                            pairs += 1.0;
                        }
                    }
                }
                alpha[(0, 0)] = num / ((pairs - p as f64) * phi);
            }
            CorrelationKind::Ar1 => {
                let mut num = 0.0;
                let mut pairs = 0.0;
                for e in &res {
                    for t in 1..e.len() {
                        num += e[t - 1] * e[t];
                        pairs += 1.0;
                    }
                }
                alpha[(0, 0)] = num / ((pairs - p as f64) * phi);
            }
            CorrelationKind::Unstructured => {
                for t in 0..m_max {
                    for s in 0..m_max {
                        if t != s {
                            let num: f64 = res
                                .iter()
                                .filter(|e| e.len() > t.max(s))
                                .map(|e| e[t] * e[s])
                                .sum();
                            alpha[(t, s)] = num / ((n_obs - p as f64) * phi);
                        }
                    }
                }
            }
        }
        let mut a = DMatrix::zeros(p, p);
        let mut b = DVector::zeros(p);
        for s in data.subjects() {
            let rinv = gj_inverse(&corr_matrix(kind, &alpha, s.len()));
            let xr = s.design.transpose() * rinv;
            a += &xr * &s.design;
            b += &xr * &s.response;
        }
        let next = gj_inverse(&a) * b;
        let change = (&next - &beta).amax();
        beta = next;
        if change < 1e-14 * (1.0 + beta.amax()) {
            break;
        }
    }
    // robust covariance at the final correlation
    let mut a = DMatrix::zeros(p, p);
    let mut meat = DMatrix::zeros(p, p);
    for s in data.subjects() {
        let rinv = gj_inverse(&corr_matrix(kind, &alpha, s.len()));
        let e = &s.response - &s.design * &beta;
        let xr = s.design.transpose() * rinv;
        a += &xr * &s.design;
        let u = &xr * e;
        meat += &u * u.transpose();
    }
    let ainv = gj_inverse(&a);
    (beta.clone(), &ainv * meat * &ainv)
}

pub fn asymmetric_loss(tau: f64, t: f64) -> f64 {
    let w = if t > 0.0 { tau } else { 1.0 - tau };
    w * t * t
}

/// Minimiser of a convex function of one variable by golden-section search
/// after expanding a bracket around `start`.
pub fn golden_min(f: impl Fn(f64) -> f64, start: f64, scale: f64) -> f64 {
    let mut step = scale.max(1e-3);
    let (mut lo, mut hi) = (start - step, start + step);
    while f(lo) < f(start) {
        step *= 2.0;
        lo = start - step;
    }
    step = scale.max(1e-3);
    while f(hi) < f(start) {
        step *= 2.0;
        hi = start + step;
    }
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut c, mut d) = (hi - g * (hi - lo), lo + g * (hi - lo));
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
        if hi - lo < 1e-15 * (1.0 + lo.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Root of a non-decreasing function by bisection after bracket expansion.
pub fn bisect_increasing(g: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (-1.0, 1.0);
    while g(lo) > 0.0 {
        lo *= 2.0;
    }
    while g(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Minimiser of `sum rho_tau(y - x b)` by cyclic coordinate descent; each
/// coordinate step zeroes the directional derivative by bisection.
pub fn expectile_objective_minimiser(data: &LongitudinalDataset, tau: f64) -> DVector<f64> {
    let x = data.stacked_design();
    let y = data.stacked_response();
    let p = x.ncols();
    let mut beta = ols(data);
    let mut resid = &y - &x * &beta;
    for _ in 0..20000 {
        let mut biggest = 0.0f64;
        for j in 0..p {
            let col = x.column(j).clone_owned();
            let r0 = resid.clone();
            let slope = |d: f64| -> f64 {
                r0.iter()
                    .zip(col.iter())
                    .map(|(r, c)| {
                        let e = r - c * d;
                        let w = if e > 0.0 { tau } else { 1.0 - tau };
                        -w * e * c
                    })
                    .sum()
            };
            let d = bisect_increasing(slope);
            beta[j] += d;
            resid -= &col * d;
            biggest = biggest.max(d.abs());
        }
        if biggest < 1e-14 * (1.0 + beta.amax()) {
            break;
        }
    }
    beta
}

/// Adaptive Simpson quadrature.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)
            + recurse(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 50)
}

/// Random panel with `n` subjects of sizes in `sizes`, `p` columns
/// (first an intercept) and exchangeable-correlated errors.
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, p: usize, sizes: (usize, usize), rho: f64) -> LongitudinalDataset {
    loop {
        let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
        let subjects = (0..n)
            .map(|i| {
                let m = rng.random_range(sizes.0..=sizes.1);
                let shared: f64 = StandardNormal.sample(rng);
                let x = DMatrix::from_fn(m, p, |_, j| {
                    if j == 0 {
                        1.0
                    } else {
                        StandardNormal.sample(rng)
                    }
                });
                let y = DVector::from_fn(m, |t, _| {
                    let own: f64 = StandardNormal.sample(rng);
                    let lin: f64 = (0..p).map(|j| x[(t, j)] * beta[j]).sum();
                    lin + rho.sqrt() * shared + (1.0 - rho).sqrt() * own
                });
                Subject::new(format!("s{i}"), y, x)
            })
            .collect();
        if let Ok(d) = LongitudinalDataset::new(subjects) {
            return d;
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

pub fn max_rel_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / (1.0 + b.amax())
}

/// One randomized fixture for the invariant suites.
#[derive(Debug, Clone, Copy)]
pub struct InvariantCase {
    pub seed: u64,
    pub n: usize,
    pub p: usize,
    pub tau: f64,
}

impl InvariantCase {
    /// The `k`-th case of a fixed deterministic sequence.
    pub fn nth(k: u64) -> Self {
        let mut r = rng(0x5eed ^ k);
        InvariantCase {
            seed: r.random(),
            n: r.random_range(5..=50),
            p: r.random_range(1..=5),
            tau: r.random_range(0.05..0.95),
        }
    }

    pub fn dataset(&self) -> LongitudinalDataset {
        random_dataset(&mut rng(self.seed), self.n, self.p, (1, 6), 0.4)
    }
}

fn close(a: &DVector<f64>, b: &DVector<f64>, tol: f64) -> bool {
    a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
}

/// Equivariance, monotonicity in tau, positive semi-definite covariance,
/// invariance to subject order and determinism on one fixture.
pub fn check_invariants(case: InvariantCase) -> Result<(), String> {
    use geee::expectile::sample_expectile;
    use geee::inference::sandwich_general;
    use geee::selection::qic_from_fit;
    use geee::{fit_geee, FitControl};

    let data = case.dataset();
    // two fits agree only to the stopping tolerance, so solve tightly
    let control = FitControl {
        max_iterations: 1000,
        beta_tolerance: 1e-13,
        score_tolerance: 1e-11,
        ..FitControl::default()
    };
    let t = tau(case.tau);
    let mut r = rng(case.seed.wrapping_add(1));
    let scale: f64 = r.random_range(0.5..3.0);
    let shift = DVector::from_fn(case.p, |_, _| r.random_range(-2.0..2.0));
    let transformed = data
        .map_responses(|s| &s.response * scale + &s.design * &shift)
        .map_err(|e| e.to_string())?;
    let order: Vec<usize> = (0..data.n_subjects()).rev().collect();
    let reversed = data.permuted(&order).map_err(|e| e.to_string())?;

    for kind in CorrelationKind::ALL {
        let fit = match fit_geee(&data, t, kind, &control) {
            Ok(f) => f,
            Err(e) => return Err(format!("{kind}: fit failed: {e}")),
        };
        if !fit.converged() {
            return Err(format!("{kind}: did not converge"));
        }
        let beta = &fit.blocks[0].beta;

        let again = fit_geee(&data, t, kind, &control).map_err(|e| e.to_string())?;
        if again != fit {
            return Err(format!("{kind}: repeated fit differs"));
        }

        let moved = fit_geee(&transformed, t, kind, &control).map_err(|e| e.to_string())?;
        let expected = beta * scale + &shift;
        if moved.converged() && !close(&moved.blocks[0].beta, &expected, 1e-8) {
            return Err(format!(
                "{kind}: equivariance {} vs {}",
                moved.blocks[0].beta, expected
            ));
        }

        let perm = fit_geee(&reversed, t, kind, &control).map_err(|e| e.to_string())?;
        if !close(&perm.blocks[0].beta, beta, 1e-8) {
            return Err(format!("{kind}: subject order changed the estimate"));
        }

        let cov = sandwich_general(&fit, &data).map_err(|e| e.to_string())?;
        let trace = cov.vcov.trace();
        let min_eig = cov.vcov.clone().symmetric_eigenvalues().min();
        if min_eig < -1e-10 * trace.abs().max(f64::MIN_POSITIVE) {
            return Err(format!("{kind}: covariance eigenvalue {min_eig} (trace {trace})"));
        }
        if (&cov.vcov - cov.vcov.transpose()).amax() > 1e-10 * cov.vcov.amax() {
            return Err(format!("{kind}: covariance not symmetric"));
        }

        let q1 = qic_from_fit(&fit, &data).map_err(|e| e.to_string())?;
        let q2 = qic_from_fit(&perm, &reversed).map_err(|e| e.to_string())?;
        if (q1.qic - q2.qic).abs() > 1e-8 * (1.0 + q1.qic.abs()) {
            return Err(format!("{kind}: QIC depends on subject order"));
        }
    }

    // expectiles increase with the level
    let y: Vec<f64> = data.stacked_response().iter().copied().collect();
    let mut last = f64::NEG_INFINITY;
    let mut levels = [0.05, 0.2, case.tau, 0.5, 0.8, 0.95];
    levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for level in levels {
        let m = sample_expectile(tau(level), &y).map_err(|e| e.to_string())?;
        if m < last {
            return Err(format!("expectile decreased at tau {level}"));
        }
        last = m;
    }
    let min = y.iter().copied().fold(f64::INFINITY, f64::min);
    let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ys: Vec<f64> = y.iter().map(|v| v * scale - 1.0).collect();
    let m = sample_expectile(t, &y).map_err(|e| e.to_string())?;
    let ms = sample_expectile(t, &ys).map_err(|e| e.to_string())?;
    if (ms - (m * scale - 1.0)).abs() > 1e-10 * (1.0 + ms.abs()) || m < min || m > max {
        return Err("sample expectile equivariance".into());
    }
    Ok(())
}
