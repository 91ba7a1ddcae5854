use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::neural::DenseMatrix;
use crate::scalar::Scalar;
use crate::trajectory::Trajectory;

use super::linalg::Lu;
use super::{check_inputs, ensure_finite, wrms, Budget, CountingRhs, SolveReport, SolverConfig};

const MAX_ADAMS_ORDER: usize = 4;
/// Local error of the Adams–Moulton corrector relative to the predictor–corrector gap.
const MILNE: [f64; MAX_ADAMS_ORDER] = [0.5, 1.0 / 6.0, 0.1, 19.0 / 270.0];
/// Same ratio for BDF1 (Euler predictor) and BDF2 (quadratic extrapolation).
const BDF_ERR: [f64; 2] = [0.5, 2.0 / 11.0];

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 2.0;
const ORDER_RESET_REJECTIONS: usize = 3;
const STIFF_REJECTIONS: usize = 20;
const STIFF_MIN_STEP: f64 = 1e-12;
const STIFF_HRHO: f64 = 0.9;
const STIFF_HRHO_STEPS: usize = 15;
const NONSTIFF_HJ: f64 = 0.5;
const NONSTIFF_STEPS: usize = 20;
const NEWTON_MAX_ITERS: usize = 4;
const NEWTON_TOL: f64 = 0.03;
const BDF_MIN_STEP: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Branch {
    Adams,
    Bdf,
}

struct Jacobian<T> {
    dense: Vec<T>,
    norm_inf: T,
    fresh: bool,
}

/// Variable-step Adams predictor–corrector (orders 1–4) that switches to variable-step
/// BDF (orders 1–2) with Newton iterations once the problem looks stiff, and back again
/// once the step size is no longer limited by stability.
///
/// The Adams branch declares stiffness after 20 consecutive rejections, a step below
/// `1e-12 * horizon`, or 15 consecutive accepted steps with `h * rho > 0.9`, where `rho`
/// is the Lipschitz estimate `|f_c - f_p| / |y_c - y_p|`.
pub fn solve_stiff_switching<T: Scalar, F: FnMut(T, &[T], &mut [T])>(
    rhs: F,
    s0: &DenseMatrix<T>,
    eval_times: &[T],
    cfg: &SolverConfig,
) -> Result<SolveReport<T>> {
    check_inputs(s0, eval_times, cfg)?;
    let mut f = CountingRhs::new(rhs);
    let mut budget = Budget::new(cfg);
    let (atol, rtol) = (T::lit(cfg.abs_tol), T::lit(cfg.rel_tol));
    let n = s0.data().len();
    let horizon = *eval_times.last().expect("checked non-empty");
    let adams_floor = T::lit(STIFF_MIN_STEP) * horizon;
    let bdf_floor = T::lit(BDF_MIN_STEP) * horizon.max(T::one());

    let mut t = T::zero();
    let mut y = s0.data().to_vec();
    let mut f0 = vec![T::zero(); n];
    f.call(t, &y, &mut f0);
    ensure_finite(&f0, t, "derivative")?;

    let mut h = match cfg.initial_step {
        Some(h0) => T::lit(h0),
        None => {
            let dny = wrms(&y, &y, atol, rtol);
            let dnf = wrms(&f0, &y, atol, rtol);
            if dnf <= T::lit(1e-5) || dny <= T::lit(1e-5) {
                T::lit(1e-6)
            } else {
                T::lit(0.01) * dny / dnf
            }
        }
    }
    .min(horizon);

    let mut branch = Branch::Adams;
    let mut ahist: VecDeque<(T, Vec<T>)> = VecDeque::from([(t, f0.clone())]);
    let mut order = 1usize;
    let mut bhist: VecDeque<(T, Vec<T>)> = VecDeque::new();
    let mut f_cur = f0;
    let mut jac: Option<Jacobian<T>> = None;

    let (mut accepted, mut rejected, mut switches) = (0u64, 0u64, 0u64);
    let mut consecutive_rejections = 0usize;
    let mut stiff_streak = 0usize;
    let mut nonstiff_streak = 0usize;

    let mut times = vec![T::zero()];
    let mut states = vec![s0.clone()];
    let mut yp = vec![T::zero(); n];
    let mut yc = vec![T::zero(); n];
    let mut fp = vec![T::zero(); n];
    let mut fc = vec![T::zero(); n];
    let mut diff = vec![T::zero(); n];

    for &target in eval_times {
        while t < target {
            budget.tick(t.to_f64_lossy(), f.count())?;
            let remaining = target - t;
            let (step, lands) = if remaining <= h * T::lit(1.1) {
                (remaining, true)
            } else if remaining < h * T::lit(2.0) {
                (remaining * T::lit(0.5), false)
            } else {
                (h, false)
            };
            let t_new = if lands { target } else { t + step };

            match branch {
                Branch::Adams => {
                    let k = order.min(ahist.len());
                    let nodes: Vec<T> = ahist.iter().take(k).map(|p| p.0).collect();
                    let w = lagrange_weights(&nodes, t, step);
                    for i in 0..n {
                        let mut acc = y[i];
                        for (j, wj) in w.iter().enumerate() {
                            acc += *wj * ahist[j].1[i];
                        }
                        yp[i] = acc;
                    }
                    f.call(t_new, &yp, &mut fp);

                    let mut nodes_c = vec![t_new];
                    nodes_c.extend(ahist.iter().take(k - 1).map(|p| p.0));
                    let wc = lagrange_weights(&nodes_c, t, step);
                    for i in 0..n {
                        let mut acc = y[i] + wc[0] * fp[i];
                        for (j, wj) in wc.iter().enumerate().skip(1) {
                            acc += *wj * ahist[j - 1].1[i];
                        }
                        yc[i] = acc;
                        diff[i] = yc[i] - yp[i];
                    }
                    let err = T::lit(MILNE[k - 1]) * wrms(&diff, &yc, atol, rtol);
                    let fac = step_factor(err, k);

                    if err <= T::one() {
                        f.call(t_new, &yc, &mut fc);
                        ensure_finite(&fc, t_new, "derivative")?;
                        let dy = norm2(&diff);
                        let rho = if dy > T::zero() {
                            fc.iter().zip(&fp).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>().sqrt() / dy
                        } else {
                            T::zero()
                        };
                        accepted += 1;
                        consecutive_rejections = 0;
                        t = t_new;
                        std::mem::swap(&mut y, &mut yc);
                        ahist.push_front((t, fc.clone()));
                        ahist.truncate(MAX_ADAMS_ORDER);
                        order = (order + 1).min(MAX_ADAMS_ORDER);
                        stiff_streak = if step * rho > T::lit(STIFF_HRHO) { stiff_streak + 1 } else { 0 };
                        let proposal = step * fac.min(T::lit(FAC_MAX));
                        h = if lands { proposal.max(h) } else { proposal };
                    } else {
                        rejected += 1;
                        consecutive_rejections += 1;
                        if consecutive_rejections % ORDER_RESET_REJECTIONS == 0 {
                            order = 1;
                        }
                        h = step * fac.min(T::lit(SAFETY));
                    }

                    if stiff_streak >= STIFF_HRHO_STEPS
                        || consecutive_rejections >= STIFF_REJECTIONS
                        || h < adams_floor
                    {
                        log::debug!("switching to BDF at t={t} h={h}");
                        switches += 1;
                        branch = Branch::Bdf;
                        f_cur = ahist[0].1.clone();
                        bhist = VecDeque::from([(t, y.clone())]);
                        jac = Some(jacobian(&mut f, t, &y, &f_cur)?);
                        nonstiff_streak = 0;
                        consecutive_rejections = 0;
                        stiff_streak = 0;
                        h = h.max(bdf_floor * T::lit(4.0));
                    }
                }
                Branch::Bdf => {
                    let q = if bhist.len() >= 3 { 2 } else { 1 };
                    let (gamma, psi) = if q == 1 {
                        for i in 0..n {
                            yp[i] = y[i] + step * f_cur[i];
                        }
                        (T::one(), y.clone())
                    } else {
                        let omega = step / (bhist[0].0 - bhist[1].0);
                        let d = T::one() + omega + omega;
                        let c0 = (T::one() + omega) * (T::one() + omega) / d;
                        let c1 = omega * omega / d;
                        let nodes = [bhist[0].0, bhist[1].0, bhist[2].0];
                        let l = lagrange_at(&nodes, t_new);
                        for i in 0..n {
                            yp[i] = l[0] * bhist[0].1[i] + l[1] * bhist[1].1[i] + l[2] * bhist[2].1[i];
                        }
                        let psi: Vec<T> = (0..n).map(|i| c0 * bhist[0].1[i] - c1 * bhist[1].1[i]).collect();
                        ((T::one() + omega) / d, psi)
                    };
                    let gh = gamma * step;
                    let jm = jac.as_ref().expect("jacobian set on switch");
                    let lu = iteration_matrix(&jm.dense, n, gh)?;

                    yc.copy_from_slice(&yp);
                    let mut converged = false;
                    for _ in 0..NEWTON_MAX_ITERS {
                        f.call(t_new, &yc, &mut fc);
                        if fc.iter().any(|v| !v.is_finite()) {
                            break;
                        }
                        let g: Vec<T> = (0..n).map(|i| psi[i] + gh * fc[i] - yc[i]).collect();
                        let delta = lu.solve(&g);
                        for i in 0..n {
                            yc[i] += delta[i];
                        }
                        if wrms(&delta, &yc, atol, rtol) < T::lit(NEWTON_TOL) {
                            converged = true;
                            break;
                        }
                    }

                    if !converged {
                        rejected += 1;
                        if jm.fresh {
                            h = step * T::lit(0.25);
                        } else {
                            let mut fy = vec![T::zero(); n];
                            f.call(t, &y, &mut fy);
                            jac = Some(jacobian(&mut f, t, &y, &fy)?);
                            h = step;
                        }
                        if h < bdf_floor {
                            return Err(Error::StiffnessFailure {
                                t: t.to_f64_lossy(),
                                h: h.to_f64_lossy(),
                            });
                        }
                        continue;
                    }

                    for i in 0..n {
                        diff[i] = yc[i] - yp[i];
                    }
                    let err = T::lit(BDF_ERR[q - 1]) * wrms(&diff, &yc, atol, rtol);
                    let fac = step_factor(err, q);
                    if err <= T::one() {
                        accepted += 1;
                        for i in 0..n {
                            f_cur[i] = (yc[i] - psi[i]) / gh;
                        }
                        t = t_new;
                        std::mem::swap(&mut y, &mut yc);
                        bhist.push_front((t, y.clone()));
                        bhist.truncate(3);
                        if let Some(j) = jac.as_mut() {
                            j.fresh = false;
                        }
                        let proposal = step * fac.min(T::lit(FAC_MAX));
                        h = if lands { proposal.max(h) } else { proposal };
                        let hj = h * jac.as_ref().map_or(T::zero(), |j| j.norm_inf);
                        nonstiff_streak = if hj < T::lit(NONSTIFF_HJ) { nonstiff_streak + 1 } else { 0 };
                        if nonstiff_streak >= NONSTIFF_STEPS {
                            log::debug!("switching to Adams at t={t} h={h}");
                            switches += 1;
                            branch = Branch::Adams;
                            let mut fy = vec![T::zero(); n];
                            f.call(t, &y, &mut fy);
                            ensure_finite(&fy, t, "derivative")?;
                            ahist = VecDeque::from([(t, fy)]);
                            order = 1;
                            stiff_streak = 0;
                            consecutive_rejections = 0;
                        }
                    } else {
                        rejected += 1;
                        h = step * fac.min(T::lit(SAFETY));
                        if h < bdf_floor {
                            return Err(Error::StiffnessFailure {
                                t: t.to_f64_lossy(),
                                h: h.to_f64_lossy(),
                            });
                        }
                    }
                }
            }
        }
        times.push(target);
        states.push(DenseMatrix::new(s0.rows(), s0.cols(), y.clone())?);
    }

    Ok(SolveReport {
        trajectory: Trajectory { times, states },
        nfev: f.count(),
        steps_accepted: accepted,
        steps_rejected: rejected,
        stiff_switches: switches,
        wall_time: budget.elapsed(),
    })
}

fn step_factor<T: Scalar>(err: T, order: usize) -> T {
    if err > T::zero() && err.is_finite() {
        (T::lit(SAFETY) * err.powf(-T::one() / T::from_count(order + 1))).max(T::lit(FAC_MIN))
    } else if err.is_finite() {
        T::lit(FAC_MAX)
    } else {
        T::lit(FAC_MIN)
    }
}

fn norm2<T: Scalar>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

/// Integrals of the Lagrange basis polynomials on `nodes` over `[a, a + h]`.
fn lagrange_weights<T: Scalar>(nodes: &[T], a: T, h: T) -> Vec<T> {
    let u: Vec<T> = nodes.iter().map(|&x| (x - a) / h).collect();
    let r = T::lit(0.6f64.sqrt());
    let gauss = [
        (T::lit(0.5) * (T::one() - r), T::lit(5.0 / 18.0)),
        (T::lit(0.5), T::lit(8.0 / 18.0)),
        (T::lit(0.5) * (T::one() + r), T::lit(5.0 / 18.0)),
    ];
    (0..u.len())
        .map(|j| {
            let s: T = gauss
                .iter()
                .map(|&(tau, wg)| {
                    let mut l = T::one();
                    for (m, &um) in u.iter().enumerate() {
                        if m != j {
                            l *= (tau - um) / (u[j] - um);
                        }
                    }
                    wg * l
                })
                .sum();
            h * s
        })
        .collect()
}

fn lagrange_at<T: Scalar>(nodes: &[T; 3], x: T) -> [T; 3] {
    let mut out = [T::one(); 3];
    for (j, o) in out.iter_mut().enumerate() {
        for m in 0..3 {
            if m != j {
                *o *= (x - nodes[m]) / (nodes[j] - nodes[m]);
            }
        }
    }
    out
}

/// Forward-difference Jacobian with per-column perturbation `sqrt(eps) * (1 + |y_j|)`.
fn jacobian<T: Scalar, F: FnMut(T, &[T], &mut [T])>(
    f: &mut CountingRhs<F>,
    t: T,
    y: &[T],
    fy: &[T],
) -> Result<Jacobian<T>> {
    let n = y.len();
    let sq = T::eps().sqrt();
    let mut dense = vec![T::zero(); n * n];
    let mut yj = y.to_vec();
    let mut fj = vec![T::zero(); n];
    for j in 0..n {
        let d = sq * (T::one() + y[j].abs());
        yj[j] = y[j] + d;
        f.call(t, &yj, &mut fj);
        ensure_finite(&fj, t, "derivative")?;
        for i in 0..n {
            dense[i * n + j] = (fj[i] - fy[i]) / d;
        }
        yj[j] = y[j];
    }
    let norm_inf = (0..n)
        .map(|i| dense[i * n..(i + 1) * n].iter().map(|v| v.abs()).sum::<T>())
        .fold(T::zero(), T::max);
    Ok(Jacobian {
        dense,
        norm_inf,
        fresh: true,
    })
}

fn iteration_matrix<T: Scalar>(jac: &[T], n: usize, gh: T) -> Result<Lu<T>> {
    let mut m: Vec<T> = jac.iter().map(|&v| -gh * v).collect();
    for i in 0..n {
        m[i * n + i] += T::one();
    }
    Lu::factor(m, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::odesolve::solve_rk8;

    #[test]
    fn adams_weights_constant_step() {
        let h = 0.1f64;
        let ab2 = lagrange_weights(&[0.0, -h], 0.0, h);
        assert!((ab2[0] - 1.5 * h).abs() < 1e-14 && (ab2[1] + 0.5 * h).abs() < 1e-14);
        let ab4 = lagrange_weights(&[0.0, -h, -2.0 * h, -3.0 * h], 0.0, h);
        let want = [55.0, -59.0, 37.0, -9.0].map(|c| c * h / 24.0);
        for (a, b) in ab4.iter().zip(want) {
            assert!((a - b).abs() < 1e-14);
        }
        let am3 = lagrange_weights(&[h, 0.0, -h], 0.0, h);
        let want = [5.0, 8.0, -1.0].map(|c| c * h / 12.0);
        for (a, b) in am3.iter().zip(want) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn non_stiff_decay_stays_explicit() {
        let cfg = SolverConfig::default();
        let rep = solve_stiff_switching(
            |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -y[0],
            &DenseMatrix::column(vec![1.0]),
            &[0.5, 1.0],
            &cfg,
        )
        .unwrap();
        assert_eq!(rep.stiff_switches, 0);
        assert!((rep.trajectory.last().get(0, 0) - (-1.0f64).exp()).abs() < 1e-9);
    }

    fn stiff_scalar(t: f64, y: &[f64], dy: &mut [f64]) {
        dy[0] = -1e4 * (y[0] - t.cos());
    }

    #[test]
    fn stiff_scalar_switches_and_matches_reference() {
        let s0 = DenseMatrix::column(vec![0.0]);
        let reference = solve_rk8(stiff_scalar, &s0, &[1.0], &SolverConfig::default()).unwrap();
        let cfg = SolverConfig::default().with_tol(1e-8);
        let rep = solve_stiff_switching(stiff_scalar, &s0, &[1.0], &cfg).unwrap();
        assert!(rep.stiff_switches >= 1);
        let d = (rep.trajectory.last().get(0, 0) - reference.trajectory.last().get(0, 0)).abs();
        assert!(d < 1e-5, "deviation {d}");
        assert!(rep.nfev < reference.nfev);
    }

    #[test]
    fn linear_system_against_exponential() {
        // Two decoupled modes with rates 1 and 1000.
        let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = -y[0];
            dy[1] = -1000.0 * y[1];
        };
        let rep = solve_stiff_switching(
            rhs,
            &DenseMatrix::column(vec![1.0, 1.0]),
            &[2.0],
            &SolverConfig::default().with_tol(1e-9),
        )
        .unwrap();
        let last = rep.trajectory.last();
        assert!((last.get(0, 0) - (-2.0f64).exp()).abs() < 1e-6);
        assert!(last.get(1, 0).abs() < 1e-6);
        assert!(rep.nfev >= rep.steps_accepted);
    }

    #[test]
    fn nan_rhs_is_reported() {
        let r = solve_stiff_switching(
            |t: f64, _y: &[f64], dy: &mut [f64]| dy[0] = if t > 0.5 { f64::NAN } else { 1.0 },
            &DenseMatrix::column(vec![1.0]),
            &[1.0],
            &SolverConfig::default().with_tol(1e-6),
        );
        assert!(r.is_err());
    }
}
