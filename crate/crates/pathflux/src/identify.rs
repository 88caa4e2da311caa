//! Plug-in identification functionals.
//!
//! Every counterfactual mean `E[f(A) * Y_target]` is a finite sum of
//! nuisance products against a marginal of `W`. The conditional of `W`
//! given `A` is recovered from the marginal and `p(a | w)` by Bayes rule,
//! which after rearranging puts the `W` sum outermost:
//!
//! ```text
//! E[f(A) Y_t] = sum_w wm(w) sum_a p(a|w) f(a) * <target-specific product>
//! ```
//!
//! Sums run in the fixed order `w, a, a', z', z, m` with compensated
//! accumulation over `w`, so results are bit-deterministic. Wherever a
//! formula calls for the marginal `p(m | a, w)`, the implied
//! `sum_z p(m | z, a, w) p(z | a, w)` is used.
//!
//! Zero-weight branches are skipped before their conditionals are touched;
//! a positive-weight branch that reaches an undefined conditional is an
//! overlap failure and surfaces as an identification error naming the cell.

use crate::error::{Error, Result};
use crate::nuisance::{NuisanceSet, WMarginal};
use crate::oracle::AteDecomposition;
use crate::target::{Target, Weight};

/// Kahan compensated accumulator.
#[derive(Default)]
struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
}

/// `E[f(A) * Y_target]` evaluated at the given nuisances and `W` marginal.
pub fn tau(eta: &NuisanceSet, wm: &WMarginal, t: Target, f: Weight) -> Result<f64> {
    if wm.p.len() != eta.card_w {
        return Err(Error::validation("W marginal length does not match card_w"));
    }
    let mut acc = Kahan::default();
    for (w, &pw) in wm.p.iter().enumerate() {
        if pw == 0.0 {
            continue;
        }
        acc.add(pw * tau_at_w(eta, t, f, w)?);
    }
    Ok(acc.sum)
}

fn tau_at_w(eta: &NuisanceSet, t: Target, f: Weight, w: usize) -> Result<f64> {
    let (ca, cz, cm) = (eta.card_a, eta.card_z, eta.card_m);
    let mut total = 0.0f64;
    for a in 0..ca {
        let wt_a = eta.p_a(a, w)? * f.apply(a);
        if wt_a == 0.0 {
            continue;
        }
        let inner = match t {
            Target::S0K0 => eta.y_bar_aw(a, w)?,
            Target::S1K0 => {
                // (z, m) ~ p(z|a,w) p(m|z,a,w); outcome arm a' ~ p(a'|w).
                let mut s = 0.0;
                for ap in 0..ca {
                    let pap = eta.p_a(ap, w)?;
                    if pap == 0.0 {
                        continue;
                    }
                    for z in 0..cz {
                        let pz = eta.p_z(z, a, w)?;
                        if pz == 0.0 {
                            continue;
                        }
                        for m in 0..cm {
                            let pm = eta.p_m(m, z, a, w)?;
                            if pm == 0.0 {
                                continue;
                            }
                            s += pap * pz * pm * eta.m_hat(m, z, ap, w)?;
                        }
                    }
                }
                s
            }
            Target::S1K1 => {
                // z ~ p(z|a,w), m ~ implied p(m|a,w), independent.
                let mut s = 0.0;
                for ap in 0..ca {
                    let pap = eta.p_a(ap, w)?;
                    if pap == 0.0 {
                        continue;
                    }
                    for z in 0..cz {
                        let pz = eta.p_z(z, a, w)?;
                        if pz == 0.0 {
                            continue;
                        }
                        for m in 0..cm {
                            let pm = eta.p_m_marg(m, a, w)?;
                            if pm == 0.0 {
                                continue;
                            }
                            s += pap * pz * pm * eta.m_hat(m, z, ap, w)?;
                        }
                    }
                }
                s
            }
            Target::S2K1 | Target::S2K2 => {
                // Shared formula: the two emulation variants have the same
                // identified law. (z, a') jointly ~ p(a'|w) p(z|a',w);
                // m ~ implied p(m|a,w).
                let mut s = 0.0;
                for ap in 0..ca {
                    let pap = eta.p_a(ap, w)?;
                    if pap == 0.0 {
                        continue;
                    }
                    for z in 0..cz {
                        let pz = eta.p_z(z, ap, w)?;
                        if pz == 0.0 {
                            continue;
                        }
                        for m in 0..cm {
                            let pm = eta.p_m_marg(m, a, w)?;
                            if pm == 0.0 {
                                continue;
                            }
                            s += pap * pz * pm * eta.m_hat(m, z, ap, w)?;
                        }
                    }
                }
                s
            }
            Target::S3K2 => {
                // z' and z drawn independently from p(.|a',w); m ~ p(m|z',a,w).
                let mut s = 0.0;
                for ap in 0..ca {
                    let pap = eta.p_a(ap, w)?;
                    if pap == 0.0 {
                        continue;
                    }
                    for zp in 0..cz {
                        let pzp = eta.p_z(zp, ap, w)?;
                        if pzp == 0.0 {
                            continue;
                        }
                        for z in 0..cz {
                            let pz = eta.p_z(z, ap, w)?;
                            if pz == 0.0 {
                                continue;
                            }
                            for m in 0..cm {
                                let pm = eta.p_m(m, zp, a, w)?;
                                if pm == 0.0 {
                                    continue;
                                }
                                s += pap * pzp * pz * pm * eta.m_hat(m, z, ap, w)?;
                            }
                        }
                    }
                }
                s
            }
            Target::S3K0 => {
                // z ~ p(z|a',w); m ~ p(m|z,a,w) at the same z.
                let mut s = 0.0;
                for ap in 0..ca {
                    let pap = eta.p_a(ap, w)?;
                    if pap == 0.0 {
                        continue;
                    }
                    for z in 0..cz {
                        let pz = eta.p_z(z, ap, w)?;
                        if pz == 0.0 {
                            continue;
                        }
                        for m in 0..cm {
                            let pm = eta.p_m(m, z, a, w)?;
                            if pm == 0.0 {
                                continue;
                            }
                            s += pap * pz * pm * eta.m_hat(m, z, ap, w)?;
                        }
                    }
                }
                s
            }
            Target::S4K0 => eta.y_bar_w(w)?,
        };
        total += wt_a * inner;
    }
    Ok(total)
}

/// `E[f(A) * E(Y | W)]`: the identified part of the total-influence
/// covariance. Combined with the empirical `E[f(A) Y]` this yields the
/// causal and confounding covariances.
pub fn total(eta: &NuisanceSet, wm: &WMarginal, f: Weight) -> Result<f64> {
    if wm.p.len() != eta.card_w {
        return Err(Error::validation("W marginal length does not match card_w"));
    }
    let mut acc = Kahan::default();
    for (w, &pw) in wm.p.iter().enumerate() {
        if pw == 0.0 {
            continue;
        }
        let ybar = eta.y_bar_w(w)?;
        let mut s = 0.0;
        for a in 0..eta.card_a {
            s += eta.p_a(a, w)? * f.apply(a);
        }
        acc.add(pw * s * ybar);
    }
    Ok(acc.sum)
}

/// The eight identified counterfactual means of the binary-exposure ATE
/// decomposition, ordered `S0, S1, S1', S2', S2'', S3'', S3, S4`.
pub fn ate_means(eta: &NuisanceSet, wm: &WMarginal) -> Result<[f64; 8]> {
    if eta.card_a != 2 {
        return Err(Error::validation(format!(
            "ATE identification requires binary A, card_a = {}",
            eta.card_a
        )));
    }
    if wm.p.len() != eta.card_w {
        return Err(Error::validation("W marginal length does not match card_w"));
    }
    let (cz, cm) = (eta.card_z, eta.card_m);
    let mut acc: [Kahan; 8] = Default::default();
    for (w, &pw) in wm.p.iter().enumerate() {
        if pw == 0.0 {
            continue;
        }
        let mut q = [0.0f64; 8];
        q[0] = eta.y_bar_aw(1, w)?;
        q[7] = eta.y_bar_aw(0, w)?;
        for z in 0..cz {
            let pz1 = eta.p_z(z, 1, w)?;
            let pz0 = eta.p_z(z, 0, w)?;
            for m in 0..cm {
                let pm_z1 = eta.p_m(m, z, 1, w)?;
                let mu1 = eta.p_m_marg(m, 1, w)?;
                // nu(m) = sum_z' p(m | z', 1, w) p(z' | 0, w)
                let mut nu = 0.0;
                for zp in 0..cz {
                    let pzp0 = eta.p_z(zp, 0, w)?;
                    if pzp0 == 0.0 {
                        continue;
                    }
                    nu += pzp0 * eta.p_m(m, zp, 1, w)?;
                }
                let weights = [
                    pz1 * pm_z1, // S1: (z, m) ~ p(z|1) p(m|z,1)
                    pz1 * mu1,   // S1': z ~ p(z|1), m ~ p(m|1)
                    pz0 * mu1,   // S2': z ~ p(z|0), m ~ p(m|1)
                    pz0 * mu1,   // S2'' shares the S2' functional
                    pz0 * nu,    // S3'': z ~ p(z|0), m ~ sum_z' p(m|z',1) p(z'|0)
                    pz0 * pm_z1, // S3: z ~ p(z|0), m ~ p(m|z,1) at the same z
                ];
                let mut mh_cache: Option<f64> = None;
                for (k, wt) in weights.into_iter().enumerate() {
                    if wt != 0.0 {
                        let mh = match mh_cache {
                            Some(v) => v,
                            None => {
                                let v = eta.m_hat(m, z, 0, w)?;
                                mh_cache = Some(v);
                                v
                            }
                        };
                        q[k + 1] += wt * mh;
                    }
                }
            }
        }
        for v in 0..8 {
            acc[v].add(pw * q[v]);
        }
    }
    Ok([
        acc[0].sum, acc[1].sum, acc[2].sum, acc[3].sum, acc[4].sum, acc[5].sum, acc[6].sum,
        acc[7].sum,
    ])
}

/// Plug-in ATE decomposition assembled from [`ate_means`].
pub fn ate_components(eta: &NuisanceSet, wm: &WMarginal) -> Result<AteDecomposition> {
    let means = ate_means(eta, wm)?;
    let [s0, s1, s1p, s2p, s2pp, s3pp, s3, s4] = means;
    Ok(AteDecomposition {
        psi: s0 - s4,
        p1: s0 - s1,
        p2: s1p - s2p,
        p3: s2pp - s3pp,
        p4: s3 - s4,
        p23: s1 - s1p + s2p - s2pp + s3pp - s3,
        means,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use crate::nuisance::NuisanceSet;
    use crate::oracle;

    fn exact_pair(scm: &crate::scm::DiscreteScm) -> (NuisanceSet, WMarginal) {
        let law = scm.enumerate_joint().unwrap();
        (NuisanceSet::exact(&law), WMarginal::exact(&law))
    }

    #[test]
    fn t0_closed_forms() {
        let (eta, wm) = exact_pair(&builtin::scm_t0());
        let v = tau(&eta, &wm, Target::S4K0, Weight::Identity).unwrap();
        assert!((v - 0.25).abs() < 1e-12);
        let e_y = tau(&eta, &wm, Target::S0K0, Weight::Unit).unwrap();
        assert!((e_y - 0.5).abs() < 1e-12);
        let t = total(&eta, &wm, Weight::Identity).unwrap();
        assert!((t - 0.25).abs() < 1e-12);
    }

    #[test]
    fn fisher_consistency_all_targets_t1() {
        let scm = builtin::scm_t1();
        let (eta, wm) = exact_pair(&scm);
        for t in Target::ALL {
            for f in [Weight::Identity, Weight::Unit] {
                let plug = tau(&eta, &wm, t, f).unwrap();
                let orac = oracle::tau(&scm, t, f).unwrap();
                assert!(
                    (plug - orac).abs() < 1e-10,
                    "target {t} weight {f:?}: plug {plug} oracle {orac}"
                );
            }
        }
    }

    #[test]
    fn shared_s2_formula() {
        let (eta, wm) = exact_pair(&builtin::scm_t1());
        for f in [Weight::Identity, Weight::Unit] {
            let a = tau(&eta, &wm, Target::S2K1, f).unwrap();
            let b = tau(&eta, &wm, Target::S2K2, f).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn total_matches_full_removal_target() {
        let (eta, wm) = exact_pair(&builtin::scm_t1());
        for f in [Weight::Identity, Weight::Unit] {
            let a = total(&eta, &wm, f).unwrap();
            let b = tau(&eta, &wm, Target::S4K0, f).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn marginalization_identity() {
        let (eta, _) = exact_pair(&builtin::scm_t1());
        for w in 0..2 {
            for a in 0..2 {
                for m in 0..2 {
                    let implied = eta.p_m_marg(m, a, w).unwrap();
                    let mut direct = 0.0;
                    for z in 0..2 {
                        direct += eta.p_m(m, z, a, w).unwrap() * eta.p_z(z, a, w).unwrap();
                    }
                    assert!((implied - direct).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn ate_fisher_consistency() {
        let scm = builtin::scm_t1();
        let (eta, wm) = exact_pair(&scm);
        let plug = ate_components(&eta, &wm).unwrap();
        let orac = oracle::ate_decomposition(&scm).unwrap();
        for (p, o) in [
            (plug.psi, orac.psi),
            (plug.p1, orac.p1),
            (plug.p2, orac.p2),
            (plug.p3, orac.p3),
            (plug.p4, orac.p4),
            (plug.p23, orac.p23),
        ] {
            assert!((p - o).abs() < 1e-10, "plug {p} oracle {o}");
        }
        let t0 = builtin::scm_t0();
        let (eta0, wm0) = exact_pair(&t0);
        let d0 = ate_components(&eta0, &wm0).unwrap();
        assert!((d0.psi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn overlap_violation_names_cell() {
        // Remove all mass from A=1 at w=0: identification of any arm-1
        // quantity at that w must fail loudly.
        let scm = builtin::scm_t1();
        let law = scm.enumerate_joint().unwrap();
        let mut law2 = law.clone();
        for z in 0..2 {
            for m in 0..2 {
                let c = law2.cell(0, 1, z, m);
                let c0 = law2.cell(0, 0, z, m);
                law2.prob[c0] += law2.prob[c];
                law2.prob[c] = 0.0;
            }
        }
        let eta = NuisanceSet::exact(&law2);
        let wm = WMarginal::exact(&law2);
        let err = ate_means(&eta, &wm).unwrap_err();
        assert!(matches!(err, Error::Identification { .. }), "{err}");
    }
}
