#![allow(clippy::excessive_precision)]

use crate::error::Result;
use crate::neural::DenseMatrix;
use crate::scalar::Scalar;
use crate::trajectory::Trajectory;

use super::{check_inputs, ensure_finite, Budget, CountingRhs, SolveReport, SolverConfig};

/// Right-hand-side evaluations per accepted step (11 new stages plus the end-point
/// derivative reused as the next step's first stage).
pub const RK8_STAGES: u64 = 12;

// Dormand–Prince 8(5,3) tableau (Hairer, Nørsett & Wanner).
const C: [f64; 12] = [
    0.0,
    0.526001519587677318785587544488e-1,
    0.789002279381515978178381316732e-1,
    0.118350341907227396726757197510,
    0.281649658092772603273242802490,
    0.333333333333333333333333333333,
    0.25,
    0.307692307692307692307692307692,
    0.651282051282051282051282051282,
    0.6,
    0.857142857142857142857142857142,
    1.0,
];

const A: [[f64; 11]; 12] = [
    [0.0; 11],
    [5.26001519587677318785587544488e-2, 0., 0., 0., 0., 0., 0., 0., 0., 0., 0.],
    [1.97250569845378994544595329183e-2, 5.91751709536136983633785987549e-2, 0., 0., 0., 0., 0., 0., 0., 0., 0.],
    [2.95875854768068491816892993775e-2, 0., 8.87627564304205475450678981324e-2, 0., 0., 0., 0., 0., 0., 0., 0.],
    [2.41365134159266685502369798665e-1, 0., -8.84549479328286085344864962717e-1, 9.24834003261792003115737966543e-1, 0., 0., 0., 0., 0., 0., 0.],
    [3.70370370370370370370370370370e-2, 0., 0., 1.70828608729473871279604482173e-1, 1.25467687566822425016691814123e-1, 0., 0., 0., 0., 0., 0.],
    [3.7109375e-2, 0., 0., 1.70252211019544039314978060272e-1, 6.02165389804559606850219397283e-2, -1.7578125e-2, 0., 0., 0., 0., 0.],
    [3.70920001185047927108779319836e-2, 0., 0., 1.70383925712239993810214054705e-1, 1.07262030446373284651809199168e-1, -1.53194377486244017527936158236e-2, 8.27378916381402288758473766002e-3, 0., 0., 0., 0.],
    [6.24110958716075717114429577812e-1, 0., 0., -3.36089262944694129406857109825, -8.68219346841726006818189891453e-1, 2.75920996994467083049415600797e1, 2.01540675504778934086186788979e1, -4.34898841810699588477366255144e1, 0., 0., 0.],
    [4.77662536438264365890433908527e-1, 0., 0., -2.48811461997166764192642586468, -5.90290826836842996371446475743e-1, 2.12300514481811942347288949897e1, 1.52792336328824235832596922938e1, -3.32882109689848629194453265587e1, -2.03312017085086261358222928593e-2, 0., 0.],
    [-9.37142430085987325717040528057e-1, 0., 0., 5.18637242884406370830023853209, 1.09143734899672957818500254654, -8.14978701074692612513997267357, -1.85200656599969598641566180701e1, 2.27394870993505042818970056734e1, 2.49360555267965238987089396762, -3.04676447189821950038236690220, 0.],
    [2.27331014751653820792359768449, 0., 0., -1.05344954667372501984066689879e1, -2.00087205822486249909675718444, -1.79589318631187989172765950534e1, 2.79488845294199600508499808837e1, -2.85899827713502369474065508674, -8.87285693353062954433549289258, 1.23605671757943030647266201528e1, 6.43392746015763530355970484046e-1],
];

const B: [f64; 12] = [
    5.42937341165687622380535766363e-2,
    0.,
    0.,
    0.,
    0.,
    4.45031289275240888144113950566,
    1.89151789931450038304281599044,
    -5.80120396001058478146721142270,
    3.11164366957819894408916062370e-1,
    -1.52160949662516078556178806805e-1,
    2.01365400804030348374776537501e-1,
    4.47106157277725905176885569043e-2,
];

// Difference between the 8th- and 5th-order weights.
const E5: [f64; 12] = [
    0.1312004499419488073250102996e-1,
    0.,
    0.,
    0.,
    0.,
    -0.1225156446376204440720569753e1,
    -0.4957589496572501915214079952,
    0.1664377182454986536961530415e1,
    -0.3503288487499736816886487290,
    0.3341791187130174790297318841,
    0.8192320648511571246570742613e-1,
    -0.2235530786388629525884427845e-1,
];

// 3rd-order embedded weights (on stages 1, 9, 12).
const BHH: [f64; 3] = [
    0.244094488188976377952755905512,
    0.733846688281611857341361741547,
    0.220588235294117647058823529412e-1,
];

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.333;
const FAC_MAX: f64 = 6.0;

struct Tableau<T> {
    c: [T; 12],
    a: [[T; 11]; 12],
    b: [T; 12],
    e5: [T; 12],
    bhh: [T; 3],
}

impl<T: Scalar> Tableau<T> {
    fn new() -> Self {
        Self {
            c: C.map(T::lit),
            a: A.map(|r| r.map(T::lit)),
            b: B.map(T::lit),
            e5: E5.map(T::lit),
            bhh: BHH.map(T::lit),
        }
    }
}

/// Adaptive Dormand–Prince 8(5,3) integration from `t = 0` to each of `eval_times`.
///
/// The local error is the 5th-order embedded estimate blended with the 3rd-order one
/// as in the reference DOP853 code, measured against `abs_tol + rel_tol*|y|`.
pub fn solve_rk8<T: Scalar, F: FnMut(T, &[T], &mut [T])>(
    rhs: F,
    s0: &DenseMatrix<T>,
    eval_times: &[T],
    cfg: &SolverConfig,
) -> Result<SolveReport<T>> {
    check_inputs(s0, eval_times, cfg)?;
    let tab = Tableau::<T>::new();
    let mut f = CountingRhs::new(rhs);
    let mut budget = Budget::new(cfg);
    let (atol, rtol) = (T::lit(cfg.abs_tol), T::lit(cfg.rel_tol));
    let n = s0.data().len();
    let horizon = *eval_times.last().expect("checked non-empty");

    let mut t = T::zero();
    let mut y = s0.data().to_vec();
    let mut k: Vec<Vec<T>> = vec![vec![T::zero(); n]; 12];
    f.call(t, &y, &mut k[0]);
    ensure_finite(&k[0], t, "derivative")?;

    let mut h = match cfg.initial_step {
        Some(h0) => T::lit(h0),
        None => initial_step(&mut f, t, &y, &k[0], atol, rtol, horizon)?,
    }
    .min(horizon);

    let mut times = vec![T::zero()];
    let mut states = vec![s0.clone()];
    let (mut accepted, mut rejected) = (0u64, 0u64);
    let mut last_rejected = false;
    let mut ystage = vec![T::zero(); n];
    let mut ynew = vec![T::zero(); n];
    let mut fnew = vec![T::zero(); n];

    for &target in eval_times {
        while t < target {
            budget.tick(t.to_f64_lossy(), f.count())?;
            let remaining = target - t;
            let clamped = h >= remaining;
            let step = if clamped { remaining } else { h };

            for s in 1..12 {
                for i in 0..n {
                    let mut acc = T::zero();
                    for (j, kj) in k.iter().enumerate().take(s) {
                        let a = tab.a[s][j];
                        if a != T::zero() {
                            acc += a * kj[i];
                        }
                    }
                    ystage[i] = y[i] + step * acc;
                }
                f.call(t + tab.c[s] * step, &ystage, &mut k[s]);
            }
            let mut err5 = T::zero();
            let mut err3 = T::zero();
            for i in 0..n {
                let mut incr = T::zero();
                let mut e5 = T::zero();
                for s in 0..12 {
                    incr += tab.b[s] * k[s][i];
                    e5 += tab.e5[s] * k[s][i];
                }
                ynew[i] = y[i] + step * incr;
                let e3 = incr - tab.bhh[0] * k[0][i] - tab.bhh[1] * k[8][i] - tab.bhh[2] * k[11][i];
                let sk = atol + rtol * y[i].abs().max(ynew[i].abs());
                err5 += (e5 / sk) * (e5 / sk);
                err3 += (e3 / sk) * (e3 / sk);
            }
            let mut deno = err5 + T::lit(0.01) * err3;
            if !(deno > T::zero()) {
                deno = T::one();
            }
            let err = step.abs() * err5 * (T::one() / (deno * T::from_count(n.max(1)))).sqrt();
            if !err.is_finite() {
                ensure_finite(&ynew, t, "stage state")?;
                for ks in &k {
                    ensure_finite(ks, t, "stage derivative")?;
                }
            }

            let grow = if err > T::zero() {
                T::lit(SAFETY) * err.powf(T::lit(-1.0 / 8.0))
            } else {
                T::lit(FAC_MAX)
            };
            if err <= T::one() {
                accepted += 1;
                t = if clamped { target } else { t + step };
                f.call(t, &ynew, &mut fnew);
                ensure_finite(&fnew, t, "derivative")?;
                std::mem::swap(&mut y, &mut ynew);
                k[0].copy_from_slice(&fnew);
                let mut fac = grow.max(T::lit(FAC_MIN)).min(T::lit(FAC_MAX));
                if last_rejected {
                    fac = fac.min(T::one());
                }
                let proposal = step * fac;
                h = if clamped { proposal.max(h) } else { proposal };
                last_rejected = false;
            } else {
                rejected += 1;
                h = step * grow.max(T::lit(FAC_MIN));
                last_rejected = true;
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
        stiff_switches: 0,
        wall_time: budget.elapsed(),
    })
}

/// Starting step from the derivative scale and one trial Euler step.
fn initial_step<T: Scalar, F: FnMut(T, &[T], &mut [T])>(
    f: &mut CountingRhs<F>,
    t: T,
    y: &[T],
    f0: &[T],
    atol: T,
    rtol: T,
    hmax: T,
) -> Result<T> {
    let n = y.len();
    let sk: Vec<T> = y.iter().map(|&v| atol + rtol * v.abs()).collect();
    let dnf: T = f0.iter().zip(&sk).map(|(&d, &s)| (d / s) * (d / s)).sum();
    let dny: T = y.iter().zip(&sk).map(|(&d, &s)| (d / s) * (d / s)).sum();
    let tiny = T::lit(1e-10);
    let mut h = if dnf <= tiny || dny <= tiny {
        T::lit(1e-6)
    } else {
        (dny / dnf).sqrt() * T::lit(0.01)
    };
    h = h.min(hmax);
    let y1: Vec<T> = y.iter().zip(f0).map(|(&a, &b)| a + h * b).collect();
    let mut f1 = vec![T::zero(); n];
    f.call(t + h, &y1, &mut f1);
    ensure_finite(&f1, t + h, "derivative")?;
    let der2: T = f1
        .iter()
        .zip(f0)
        .zip(&sk)
        .map(|((&a, &b), &s)| ((a - b) / s) * ((a - b) / s))
        .sum::<T>()
        .sqrt()
        / h;
    let der12 = der2.abs().max(dnf.sqrt());
    let h1 = if der12 <= T::lit(1e-15) {
        T::lit(1e-6).max(h.abs() * T::lit(1e-3))
    } else {
        (T::lit(0.01) / der12).powf(T::lit(1.0 / 8.0))
    };
    Ok((T::lit(100.0) * h.abs()).min(h1).min(hmax))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::odesolve::CountingRhs;

    fn decay(_t: f64, y: &[f64], dy: &mut [f64]) {
        dy[0] = -y[0];
    }

    #[test]
    fn tableau_consistency() {
        let b_sum: f64 = B.iter().sum();
        assert!((b_sum - 1.0).abs() < 1e-14);
        for s in 1..12 {
            let row: f64 = A[s].iter().sum();
            assert!((row - C[s]).abs() < 1e-14, "row {s}");
        }
        // Order conditions sum b c^q = 1/(q+1) up to q = 7.
        for q in 1..8 {
            let v: f64 = B.iter().zip(C).map(|(b, c)| b * c.powi(q)).sum();
            assert!((v - 1.0 / (q as f64 + 1.0)).abs() < 1e-13, "q={q}");
        }
    }

    #[test]
    fn exponential_decay_closed_form() {
        let cfg = SolverConfig::default();
        let rep = solve_rk8(decay, &DenseMatrix::column(vec![1.0]), &[1.0], &cfg).unwrap();
        let y = rep.trajectory.last().get(0, 0);
        assert!((y - (-1.0f64).exp()).abs() < 1e-9);
        assert!(rep.nfev >= RK8_STAGES * rep.steps_accepted);
        assert_eq!(rep.stiff_switches, 0);
    }

    #[test]
    fn one_step_costs_one_tableau() {
        let cfg = SolverConfig {
            initial_step: Some(0.1),
            ..SolverConfig::default().with_tol(1e-3)
        };
        let rep = solve_rk8(decay, &DenseMatrix::column(vec![1.0]), &[0.1], &cfg).unwrap();
        assert_eq!(rep.steps_accepted, 1);
        assert_eq!(rep.steps_rejected, 0);
        assert_eq!(rep.nfev, 1 + RK8_STAGES);
    }

    #[test]
    fn nfev_matches_step_counters() {
        let mut calls = CountingRhs::new(decay);
        let rep = solve_rk8(
            |t: f64, y: &[f64], dy: &mut [f64]| calls.call(t, y, dy),
            &DenseMatrix::column(vec![1.0]),
            &[0.3, 1.0, 4.0],
            &SolverConfig::default().with_tol(1e-9),
        )
        .unwrap();
        assert_eq!(calls.count(), rep.nfev);
        // start + step-size probe + 11 per attempt + 1 per acceptance
        assert_eq!(rep.nfev, 2 + 11 * (rep.steps_accepted + rep.steps_rejected) + rep.steps_accepted);
    }

    #[test]
    fn hits_requested_times_exactly() {
        let times = [0.013, 0.2, 0.21, 1.7];
        let rep = solve_rk8(decay, &DenseMatrix::column(vec![1.0]), &times, &SolverConfig::default()).unwrap();
        assert_eq!(&rep.trajectory.times[1..], &times);
        for (t, s) in rep.trajectory.times.iter().zip(&rep.trajectory.states) {
            assert!((s.get(0, 0) - (-t).exp()).abs() < 1e-10);
        }
    }

    #[test]
    fn deterministic_and_generic() {
        let a = solve_rk8(decay, &DenseMatrix::column(vec![1.0]), &[2.0], &SolverConfig::default()).unwrap();
        let b = solve_rk8(decay, &DenseMatrix::column(vec![1.0]), &[2.0], &SolverConfig::default()).unwrap();
        assert_eq!(a.trajectory, b.trajectory);
        let r32 = solve_rk8(
            |_t: f32, y: &[f32], dy: &mut [f32]| dy[0] = -y[0],
            &DenseMatrix::column(vec![1.0f32]),
            &[1.0],
            &SolverConfig::default().with_tol(1e-6),
        )
        .unwrap();
        assert!((r32.trajectory.last().get(0, 0) - (-1.0f32).exp()).abs() < 1e-5);
    }

    #[test]
    fn step_budget_and_nan_errors() {
        let cfg = SolverConfig {
            max_steps: 3,
            ..SolverConfig::default()
        };
        let r = solve_rk8(decay, &DenseMatrix::column(vec![1.0]), &[100.0], &cfg);
        assert!(matches!(r, Err(Error::Divergence { .. })));
        let r = solve_rk8(
            |t: f64, _y: &[f64], dy: &mut [f64]| dy[0] = if t > 0.5 { f64::NAN } else { 1.0 },
            &DenseMatrix::column(vec![1.0]),
            &[1.0],
            &SolverConfig::default(),
        );
        assert!(matches!(r, Err(Error::Numerical(_))));
    }

    #[test]
    fn error_tracks_tolerance() {
        let exact = (-3.0f64).exp();
        for k in 4..=11 {
            let tol = 10f64.powi(-k);
            let cfg = SolverConfig::default().with_tol(tol);
            let rep = solve_rk8(decay, &DenseMatrix::column(vec![1.0]), &[3.0], &cfg).unwrap();
            let err = (rep.trajectory.last().get(0, 0) - exact).abs();
            assert!(err < 10.0 * tol, "tol {tol}: err {err}");
        }
    }
}
