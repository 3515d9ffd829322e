//! Mechanical certifier for the inductive inequality schedule: given loss
//! exponents s(a) and constants c_a, it advances the coupled recursions for
//! rho_j, sigma_j, t_j = t0^(kappa^j), the norm bounds N_j(a), the error
//! bounds delta_j, and the cascade quantities, entirely in log arithmetic,
//! and reports whether every bound holds up to a horizon J.
//!
//! t0 is carried as a logarithm: feasible schedules routinely need
//! |ln t0| in the thousands, far below what an f64 value of t0 can hold.

use serde::{Deserialize, Serialize};

use crate::domain::EstimateConstants;
use crate::error::{CrError, Result};

/// ln(a + b) from ln a and ln b.
fn logaddexp(la: f64, lb: f64) -> f64 {
    if la == f64::NEG_INFINITY {
        return lb;
    }
    if lb == f64::NEG_INFINITY {
        return la;
    }
    let m = la.max(lb);
    m + ((la - m).exp() + (lb - m).exp()).ln()
}

/// e * lnt with the convention 0 * (-inf) = 0.
fn tpow(e: f64, lnt: f64) -> f64 {
    if e == 0.0 {
        0.0
    } else {
        e * lnt
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub s: f64,
    pub kappa: f64,
    pub mu: f64,
    pub k: u32,
    pub m: f64,
    /// Working order of the §12-type series (default k+1).
    pub a: f64,
    /// Interpolation order strictly between a and m+1/2 for the ratio test.
    pub b: f64,
    /// ln t0; t0 = exp(ln_t0) may underflow to 0 as an f64, which is fine.
    pub ln_t0: f64,
    pub sigma0: f64,
    pub rho0: f64,
    /// The fixed low Hölder order of the quadratic estimates.
    pub beta: f64,
    /// Cascade ratio in the P-sum bound.
    pub epsilon: f64,
    /// Initial norm bound N_0(a) (order-independent start).
    pub n0: f64,
    /// Initial high-order error bound delta_0(k+mu).
    pub delta0_kmu: f64,
    /// Outer constant of the e_j cascade.
    pub c0_hat: f64,
    /// Initial value of the §13 growth sequence.
    pub b13_0: f64,
    pub constants: EstimateConstants,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        let k = 1u32;
        let m = 4.0;
        let a = k as f64 + 1.0;
        ScheduleParams {
            s: 2.0,
            kappa: 1.2,
            mu: 2.5,
            k,
            m,
            a,
            b: (a + m + 0.5) / 2.0,
            ln_t0: (0.1f64).ln(),
            sigma0: 1.0 / 25.0,
            rho0: 1.0,
            beta: 2.5,
            epsilon: 0.5,
            n0: 1.0,
            delta0_kmu: 1e-3,
            c0_hat: 1.0,
            b13_0: 1.0,
            constants: EstimateConstants::default(),
        }
    }
}

impl ScheduleParams {
    pub fn t0(&self) -> f64 {
        self.ln_t0.exp()
    }

    fn ln_c(&self, a: f64) -> f64 {
        self.constants.c_a(a).ln()
    }

    fn s_of(&self, a: f64) -> f64 {
        self.constants.s_of(a)
    }

    /// ln K_j(a) from ln(rho_j sigma_j); the product is carried as a log
    /// because sigma_j = sigma_0 / 5^j underflows an f64 near j = 460.
    fn ln_k(&self, a: f64, ln_rho_sigma: f64) -> f64 {
        self.ln_c(a) - self.s_of(a) * ln_rho_sigma
    }

    /// ln c_hat_a with K_{j+1}(a) <= c_hat_a K_j(a): the product rho sigma
    /// shrinks by at most the factor (1 - 5 sigma_0)/5 per step.
    fn ln_k_growth(&self, a: f64) -> f64 {
        self.s_of(a) * (5.0 / (1.0 - 5.0 * self.sigma0)).ln()
    }
}

/// All constraints of the admissible-parameter region, by name.
pub fn admissible(p: &ScheduleParams) -> (bool, Vec<String>) {
    let mut bad = Vec::new();
    let mut check = |ok: bool, name: &str| {
        if !ok {
            bad.push(name.to_string());
        }
    };
    check((p.s - 2.0).abs() < 1e-12, "s = 2");
    check(p.kappa > 1.0, "kappa > 1");
    check(p.kappa < 1.25, "kappa < 5/4");
    check(p.kappa * p.s > 2.0, "kappa s > 2");
    check(p.mu > p.kappa * p.s, "mu > kappa s");
    check(p.k >= 1, "k >= 1");
    check(p.k as f64 + p.mu <= p.m, "k + mu <= m");
    check(p.mu < p.m - p.k as f64, "mu < m - k");
    check(p.m > 3.0, "m > 3");
    // eta = m - 3: kappa < (eta + 3 - k)/2 = (m - k)/2
    check(p.kappa < (p.m - p.k as f64) / 2.0, "2 kappa < m - k");
    check(p.sigma0 > 0.0 && p.sigma0 < 0.2, "0 < sigma0 < 1/5");
    check(p.rho0 > 0.0, "rho0 > 0");
    check(p.ln_t0 < 0.0, "t0 < 1");
    (bad.is_empty(), bad)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CascadeLog {
    pub p: f64,
    pub q: f64,
    pub a: f64,
    pub big_b: f64,
    pub small_b: f64,
    pub big_e: f64,
    pub small_e: f64,
    pub f: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleState {
    pub j: usize,
    pub rho: f64,
    pub sigma: f64,
    pub ln_t: f64,
    /// (order, ln N_j(order)) pairs.
    pub ln_n: Vec<(f64, f64)>,
    pub ln_delta_1: f64,
    pub ln_delta_kmu: f64,
    /// All cascade quantities as logarithms.
    pub cascade: CascadeLog,
}

impl ScheduleState {
    pub fn n_at(&self, order: f64) -> f64 {
        self.ln_n
            .iter()
            .find(|(o, _)| (o - order).abs() < 1e-9)
            .map(|&(_, v)| v)
            .expect("order not tracked")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    pub first_violation: Option<(usize, String)>,
    /// ln of the direct sum of all P_j.
    pub ln_sum_p: f64,
    /// max_j Q_j.
    pub q_max: f64,
    pub horizon: usize,
}

/// Orders at which N_j must be tracked for the cascade.
fn tracked_orders(p: &ScheduleParams) -> Vec<f64> {
    let k = p.k as f64;
    let mut orders = vec![
        3.0,
        p.beta,
        p.a + 1.0,
        k + 2.0,
        k + p.beta,
        k + p.mu + 2.0,
        p.m + 0.5,
        p.m + p.beta,
        p.m + 2.0,
    ];
    orders.sort_by(|x, y| x.partial_cmp(y).unwrap());
    orders.dedup_by(|x, y| (*x - *y).abs() < 1e-9);
    orders
}

/// Advance the full schedule to horizon J.
pub fn evolve(p: &ScheduleParams, j_max: usize) -> Result<(Vec<ScheduleState>, Verdict)> {
    let (ok, bad) = admissible(p);
    if !ok {
        return Err(CrError::Inadmissible(bad.join("; ")));
    }
    let orders = tracked_orders(p);
    let k = p.k as f64;
    let s = p.s;
    let kappa = p.kappa;
    let gamma = kappa * (p.mu - kappa * s) + s;

    let mut rho = p.rho0;
    let mut ln_sigma = p.sigma0.ln();
    let mut ln_t = p.ln_t0;
    let mut ln_n: Vec<(f64, f64)> = orders.iter().map(|&o| (o, p.n0.ln())).collect();
    let mut ln_delta_kmu = p.delta0_kmu.ln();

    let mut states = Vec::with_capacity(j_max + 1);
    let mut ln_sum_p = f64::NEG_INFINITY;
    let mut q_max: f64 = 0.0;
    let mut first_violation: Option<(usize, String)> = None;

    let get = |v: &Vec<(f64, f64)>, o: f64| -> f64 {
        v.iter()
            .find(|(oo, _)| (oo - o).abs() < 1e-9)
            .map(|&(_, x)| x)
            .unwrap()
    };

    for j in 0..=j_max {
        let ln_rs = rho.ln() + ln_sigma;
        let lnk = |a: f64| p.ln_k(a, ln_rs);
        let ln_delta_1 = tpow(s, ln_t); // maintained bound delta_j(1) <= t_j^s

        let ln_p = 3f64.ln() + lnk(2.0) + get(&ln_n, 3.0) + tpow(s - 1.0, ln_t);
        let ln_q =
            3f64.ln() + p.ln_k_growth(2.0) + lnk(3.0) + tpow((kappa - 1.0) * (s - 1.0), ln_t);
        let ln_a = 3f64.ln()
            + lnk(p.m)
            + 2.0 * get(&ln_n, p.beta)
            + get(&ln_n, k + p.beta)
            + tpow((1.0 - kappa) * s + 0.5, ln_t);
        let ln_big_b =
            lnk(p.m) + 2.0 * get(&ln_n, p.beta) + tpow(p.mu - kappa * s, ln_t) + ln_delta_kmu;
        let ln_cj = 18f64.ln() + p.ln_k_growth(p.m) + 2.0 * lnk(p.beta) + 2.0 * lnk(p.m + 1.0);
        let ln_small_b = ln_cj + tpow((kappa - 1.0) * (p.mu - kappa * s), ln_t);
        let ln_big_e = ln_cj
            + 2.0 * get(&ln_n, p.beta)
            + get(&ln_n, k + p.mu + 2.0)
            + tpow(kappa * (p.mu - kappa * s) + s, ln_t);
        let ln_cpj = p.c0_hat.ln() + 2.0 * (3f64.ln() + lnk(p.beta)) + lnk(k + p.mu + 2.0);
        let ln_small_e = ln_cpj + tpow((kappa - 1.0) * gamma, ln_t);
        let ln_f = ln_cpj
            + ln_cj
            + 2.0 * get(&ln_n, 3.0)
            + get(&ln_n, k + p.beta)
            + tpow(kappa * gamma + s - p.mu - 1.5, ln_t);

        ln_sum_p = logaddexp(ln_sum_p, ln_p);
        q_max = q_max.max(ln_q.exp());

        let cascade = CascadeLog {
            p: ln_p,
            q: ln_q,
            a: ln_a,
            big_b: ln_big_b,
            small_b: ln_small_b,
            big_e: ln_big_e,
            small_e: ln_small_e,
            f: ln_f,
        };

        if first_violation.is_none() {
            let checks: [(f64, f64, &str); 6] = [
                (ln_a, 0.5f64.ln(), "a_j < 1/2"),
                (ln_big_b, 0.5f64.ln(), "B_j < 1/2"),
                (ln_big_e, 0.25f64.ln(), "E_j <= 1/4"),
                (ln_f, 0.125f64.ln(), "f_j < 1/8"),
                (ln_small_b, 0.5f64.ln(), "b_j <= 1/2"),
                (ln_small_e, 0.5f64.ln(), "e_j < 1/2"),
            ];
            for (val, bound, name) in checks {
                if !(val <= bound) {
                    first_violation = Some((j, name.to_string()));
                    break;
                }
            }
            if first_violation.is_none() && !(ln_q < 0.0) {
                first_violation = Some((j, "Q_j < 1".to_string()));
            }
        }

        states.push(ScheduleState {
            j,
            rho,
            sigma: ln_sigma.exp(),
            ln_t,
            ln_n: ln_n.clone(),
            ln_delta_1,
            ln_delta_kmu,
            cascade,
        });

        // advance to j+1
        for (o, v) in ln_n.iter_mut() {
            *v += 3f64.ln() + p.ln_k(*o, ln_rs);
        }
        // delta_{j+1}(k+mu) <= K_j(m+1) (1 + N_j(3)^2 t^{-1} delta(1))
        //                      (delta(k+mu) + N_j(k+mu+2) delta(1));
        // delta_j(1) = t^s is folded into the t exponents so that the
        // saturated case ln_t = -inf stays NaN-free.
        let n3 = states[j].n_at(3.0);
        let nk2 = states[j].n_at(k + p.mu + 2.0);
        let fac1 = logaddexp(0.0, 2.0 * n3 + tpow(s - 1.0, ln_t));
        let fac2 = logaddexp(ln_delta_kmu, nk2 + tpow(s, ln_t));
        ln_delta_kmu = p.ln_k(p.m + 1.0, ln_rs) + fac1 + fac2;

        rho *= 1.0 - 5.0 * ln_sigma.exp();
        ln_sigma -= 5f64.ln();
        ln_t *= kappa; // ln t_{j+1} = kappa^{j+1} ln t0; saturates at -inf
    }

    // the running-sum hypothesis: total perturbation budget within gamma_0
    if first_violation.is_none() && !(ln_sum_p <= p.constants.gamma0.ln()) {
        first_violation = Some((j_max, "sum P_j <= gamma0".to_string()));
    }

    let verdict = Verdict {
        pass: first_violation.is_none(),
        first_violation,
        ln_sum_p,
        q_max,
        horizon: j_max,
    };
    Ok((states, verdict))
}

/// Largest ln t0 whose schedule passes, by bisection; the lower bracket end
/// is extended geometrically until a passing point is found.
pub fn find_t0(p: &ScheduleParams, j_max: usize) -> Result<f64> {
    let passes = |ln_t0: f64| -> Result<bool> {
        let mut q = p.clone();
        q.ln_t0 = ln_t0;
        Ok(evolve(&q, j_max)?.1.pass)
    };
    let mut hi = -1e-6f64; // t0 just below 1
    if passes(hi)? {
        return Ok(hi);
    }
    let mut lo = -690.0; // t0 ~ 1e-300
    let mut extensions = 0;
    while !passes(lo)? {
        lo *= 10.0;
        extensions += 1;
        if extensions > 12 {
            return Err(CrError::Infeasible);
        }
    }
    // bisect in log t0 to 1e-3 relative
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if passes(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo).abs() <= 1e-3 * lo.abs() {
            break;
        }
    }
    Ok(lo)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeriesVerdict {
    pub name: String,
    /// First index from which the term ratio stays below 1.
    pub onset_j0: Option<usize>,
    /// ln of the term ratio at the horizon.
    pub final_ln_ratio: f64,
    pub pass: bool,
    /// Endpoint/degenerate configuration (test inconclusive by design).
    pub boundary: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub series: Vec<SeriesVerdict>,
    pub pass: bool,
}

fn ratio_verdict(name: &str, ln_terms: &[f64]) -> SeriesVerdict {
    let mut onset = None;
    for j in 0..ln_terms.len() - 1 {
        let r = ln_terms[j + 1] - ln_terms[j];
        let ok = r < 0.0 || (ln_terms[j + 1] == f64::NEG_INFINITY);
        if ok && onset.is_none() {
            onset = Some(j);
        }
        if !ok {
            onset = None;
        }
    }
    let last = ln_terms.len() - 1;
    let final_ln_ratio = if ln_terms[last] == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        ln_terms[last] - ln_terms[last - 1]
    };
    SeriesVerdict {
        name: name.to_string(),
        onset_j0: onset,
        final_ln_ratio,
        pass: onset.is_some() && final_ln_ratio < 0.0,
        boundary: false,
    }
}

/// Ratio tests for the convergence series: the two working-order series at
/// order a, the interpolation ratio at order b, and the composition sums.
pub fn convergence_report(p: &ScheduleParams, j_max: usize) -> Result<ConvergenceReport> {
    let (states, verdict) = evolve(p, j_max)?;
    if !verdict.pass {
        return Err(CrError::Hypothesis(format!(
            "schedule does not certify: {:?}",
            verdict.first_violation
        )));
    }
    let k = p.k as f64;
    let s = p.s;
    let mut u_terms = Vec::with_capacity(states.len());
    let mut v_terms = Vec::with_capacity(states.len());
    let mut w_terms = Vec::with_capacity(states.len());
    let mut a_terms = Vec::with_capacity(states.len());
    let mut interp = Vec::with_capacity(states.len());
    let lam_den = p.m + 0.5 - p.a;
    let lam = (p.m + 0.5 - p.b) / lam_den;
    let boundary = !(p.b > p.a && p.b < p.m + 0.5) || lam_den <= 0.0;
    let mut ln_b13 = p.b13_0.ln();
    for st in &states {
        let ln_rs = st.rho.ln() + 5f64.ln() * (-(st.j as f64)) + p.sigma0.ln();
        let lnk = |a: f64| p.ln_k(a, ln_rs);
        // series at the working order
        u_terms.push(lnk(p.a) + st.n_at(p.a + 1.0) + tpow(s - 0.5, st.ln_t));
        v_terms.push(lnk(p.a) + st.n_at(k + 2.0) + tpow(k - p.a + s, st.ln_t));
        // composition sums at order k
        w_terms.push(lnk(k) + st.n_at(k + 2.0) + tpow(s - 0.5, st.ln_t));
        // low-order decay and high-order growth entering the interpolation
        let ln_aj = 2f64.ln() + lnk(k + 1.0) + st.n_at(k + 2.0) + tpow(s - 1.0, st.ln_t);
        a_terms.push(ln_aj);
        if !boundary {
            interp.push(lam * ln_aj + (1.0 - lam) * ln_b13);
        }
        ln_b13 += (16f64).ln()
            + p.ln_k_growth(p.m + 0.5)
            + lnk(p.m + p.beta)
            + lnk(p.beta)
            + st.n_at(p.beta);
    }
    let mut series = vec![
        ratio_verdict("series_u_order_a", &u_terms),
        ratio_verdict("series_v_order_a", &v_terms),
        ratio_verdict("composition_sum_order_k", &w_terms),
    ];
    if boundary {
        series.push(SeriesVerdict {
            name: "interpolation_order_b".into(),
            onset_j0: None,
            final_ln_ratio: f64::NAN,
            pass: false,
            boundary: true,
        });
    } else {
        let mut sv = ratio_verdict("interpolation_order_b", &interp);
        // the claim is stronger than summability: the interpolated quantity
        // itself tends to zero
        sv.pass = sv.pass && interp[interp.len() - 1] < interp[0];
        series.push(sv);
    }
    let pass = series.iter().all(|s| s.pass || s.boundary);
    Ok(ConvergenceReport { series, pass })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_sequence_follows_power_law() {
        let p = ScheduleParams::default();
        let (states, _) = evolve(&p, 3).unwrap();
        assert!((states[0].ln_t.exp() - 0.1).abs() < 1e-12);
        assert!((states[1].ln_t.exp() - 0.1f64.powf(1.2)).abs() < 1e-6);
        assert!((states[1].ln_t.exp() - 0.0631).abs() < 1e-4);
    }

    #[test]
    fn reference_parameters_are_admissible() {
        let p = ScheduleParams::default();
        let (ok, bad) = admissible(&p);
        assert!(ok, "violations: {bad:?}");
    }

    #[test]
    fn kappa_and_m_violations_detected() {
        let mut p = ScheduleParams::default();
        p.kappa = 1.3;
        let (ok, bad) = admissible(&p);
        assert!(!ok);
        assert!(bad.iter().any(|s| s.contains("5/4")));
        let mut q = ScheduleParams::default();
        q.m = 3.0;
        let (ok2, bad2) = admissible(&q);
        assert!(!ok2);
        assert!(bad2.iter().any(|s| s.contains("m > 3")));
    }

    #[test]
    fn large_t0_fails_early() {
        let mut p = ScheduleParams::default();
        p.ln_t0 = (0.9f64).ln();
        let (_, verdict) = evolve(&p, 50).unwrap();
        assert!(!verdict.pass);
        let (j, _) = verdict.first_violation.unwrap();
        assert!(j < 5, "violation at j = {j}");
    }

    #[test]
    fn find_t0_certifies_and_is_monotone() {
        let p = ScheduleParams::default();
        let lnt = find_t0(&p, 200).unwrap();
        assert!(lnt < 0.0 && lnt.is_finite());
        let mut q = p.clone();
        q.ln_t0 = lnt;
        assert!(evolve(&q, 200).unwrap().1.pass);
        // smaller t0 still passes, larger t0 fails
        q.ln_t0 = lnt * 2.0;
        assert!(evolve(&q, 200).unwrap().1.pass);
        q.ln_t0 = lnt * 0.5;
        assert!(!evolve(&q, 200).unwrap().1.pass);
    }

    #[test]
    fn doubling_constants_shrinks_t0() {
        let p = ScheduleParams::default();
        let base = find_t0(&p, 100).unwrap();
        let mut q = p.clone();
        q.constants.c_default = 2.0;
        let tighter = find_t0(&q, 100).unwrap();
        assert!(tighter < base, "base={base} tighter={tighter}");
    }

    #[test]
    fn p_sum_obeys_cascade_bound() {
        let mut p = ScheduleParams::default();
        p.ln_t0 = find_t0(&p, 300).unwrap();
        let (states, verdict) = evolve(&p, 300).unwrap();
        assert!(verdict.pass);
        let eps = p.epsilon;
        if verdict.q_max <= eps.sqrt() {
            let bound = states[0].cascade.p - (1.0 - eps.sqrt()).ln();
            assert!(verdict.ln_sum_p <= bound + 1e-9);
        }
    }

    #[test]
    fn no_underflow_at_large_horizon() {
        let mut p = ScheduleParams::default();
        p.ln_t0 = -5e3;
        let (states, _) = evolve(&p, 10_000).unwrap();
        let last = &states[10_000];
        assert!(last.ln_t == f64::NEG_INFINITY);
        assert!(last.cascade.a == f64::NEG_INFINITY);
        assert!(!last.cascade.p.is_nan());
    }

    #[test]
    fn convergence_ratios_below_one() {
        let mut p = ScheduleParams::default();
        p.ln_t0 = find_t0(&p, 300).unwrap();
        let rep = convergence_report(&p, 300).unwrap();
        assert!(rep.pass, "series: {:?}", rep.series);
        for sv in &rep.series {
            if !sv.boundary {
                assert!(sv.onset_j0.unwrap() <= 50, "{}: onset {:?}", sv.name, sv.onset_j0);
            }
        }
    }

    #[test]
    fn endpoint_interpolation_flagged_as_boundary() {
        let mut p = ScheduleParams::default();
        p.b = p.m + 0.5;
        p.ln_t0 = find_t0(&p, 100).unwrap();
        let rep = convergence_report(&p, 100).unwrap();
        let sv = rep.series.iter().find(|s| s.name.contains("interpolation")).unwrap();
        assert!(sv.boundary);
    }
}
