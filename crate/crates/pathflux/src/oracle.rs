//! Exact counterfactual laws by brute-force enumeration.
//!
//! For each target the enumeration walks the full exogenous-noise grid and
//! augments it with the auxiliary draws that define the information-transfer
//! intervention:
//!
//! - `abar`: a draw from `p(a | W)`, independent of the noise given `W`;
//! - an edge-emulation draw `Z_A` from `p(z | A, W)` at the factual `A`;
//! - an edge-removal draw from `p(z | abar, W)` evaluated at the realized
//!   `abar` (so its marginal given `W` is the marginal law of `Z`).
//!
//! Auxiliary pmfs come from the model's own conditionals; the enumeration
//! weight is the product of noise pmfs and auxiliary pmfs. Structural noise
//! (`U_Z`, `U_M`, `U_Y`) is shared between factual and counterfactual
//! evaluations of the same structural function.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::nuisance::NuisanceSet;
use crate::scm::{DiscreteScm, JointLaw, DEFAULT_CELL_BUDGET};
use crate::target::{Target, Weight};

/// Joint law of `(A, Y_target)`: marginal of `A` plus one pmf over the
/// outcome support per level of `A`.
#[derive(Debug, Clone)]
pub struct CtfLaw {
    pub card_a: usize,
    pub a_marginal: Vec<f64>,
    pub y_support: Vec<f64>,
    /// Row `a` is the conditional pmf of the counterfactual outcome given
    /// `A = a`; all-zero when `P(A = a) = 0`.
    cond: Vec<f64>,
}

impl CtfLaw {
    pub fn cond_pmf(&self, a: usize) -> &[f64] {
        let s = self.y_support.len();
        &self.cond[a * s..(a + 1) * s]
    }

    /// `E[Y_target | A = a]`; NaN when `P(A = a) = 0`.
    pub fn cond_mean(&self, a: usize) -> f64 {
        if self.a_marginal[a] == 0.0 {
            return f64::NAN;
        }
        self.cond_pmf(a)
            .iter()
            .zip(&self.y_support)
            .map(|(p, y)| p * y)
            .sum()
    }

    /// `E[f(A) * Y_target]`.
    pub fn weighted_mean(&self, f: Weight) -> f64 {
        let mut s = 0.0;
        for a in 0..self.card_a {
            if self.a_marginal[a] == 0.0 {
                continue;
            }
            s += self.a_marginal[a] * f.apply(a) * self.cond_mean(a);
        }
        s
    }

    /// Largest absolute cell difference between two laws over `(A, Y)`.
    pub fn max_cell_distance(&self, other: &CtfLaw) -> f64 {
        assert_eq!(self.y_support.len(), other.y_support.len());
        let mut d = 0.0f64;
        for a in 0..self.card_a {
            d = d.max((self.a_marginal[a] - other.a_marginal[a]).abs());
            for (p, q) in self.cond_pmf(a).iter().zip(other.cond_pmf(a)) {
                d = d.max((self.a_marginal[a] * p - other.a_marginal[a] * q).abs());
            }
        }
        d
    }
}

/// Exact law of `(A, Y_target)` for one intervention target.
pub fn ctf_law(scm: &DiscreteScm, t: Target) -> Result<CtfLaw> {
    ctf_law_with_budget(scm, t, DEFAULT_CELL_BUDGET)
}

pub fn ctf_law_with_budget(scm: &DiscreteScm, t: Target, budget: u128) -> Result<CtfLaw> {
    let law = scm.enumerate_joint_with_budget(budget)?;
    let eta = NuisanceSet::exact(&law);

    let needs_abar = t != Target::S0K0;
    let needs_emul = matches!(t, Target::S1K1 | Target::S2K1);
    let needs_removal = matches!(t, Target::S2K2 | Target::S3K2);

    let mut cells = scm.noise_grid_size();
    if needs_abar {
        cells = cells.saturating_mul(scm.card_a as u128);
    }
    if needs_emul || needs_removal {
        cells = cells.saturating_mul(scm.card_z as u128);
    }
    if cells > budget {
        return Err(Error::Capacity { cells, budget });
    }

    let y_support = law.y_support.clone();
    let y_index: Vec<usize> = scm
        .f_y
        .iter()
        .map(|v| y_support.partition_point(|s| *s < *v))
        .collect();
    let y_code = |m: usize, z: usize, a: usize, w: usize, uy: usize| -> usize {
        y_index[(((m * scm.card_z + z) * scm.card_a + a) * scm.card_w + w) * scm.n_u(4) + uy]
    };

    let ns = y_support.len();
    let mut mass = vec![0.0f64; scm.card_a * ns];

    for (uw, pw) in scm.noise[0].iter().enumerate() {
        if *pw == 0.0 {
            continue;
        }
        let w = scm.eval_w(uw);
        for (ua, pa) in scm.noise[1].iter().enumerate() {
            let p1 = pw * pa;
            if p1 == 0.0 {
                continue;
            }
            let a = scm.eval_a(w, ua);
            for (uz, pz) in scm.noise[2].iter().enumerate() {
                let p2 = p1 * pz;
                if p2 == 0.0 {
                    continue;
                }
                let z_nat = scm.eval_z(a, w, uz);
                for (um, pm) in scm.noise[3].iter().enumerate() {
                    let p3 = p2 * pm;
                    if p3 == 0.0 {
                        continue;
                    }
                    let m_nat = scm.eval_m(z_nat, a, w, um);
                    for (uy, py) in scm.noise[4].iter().enumerate() {
                        let p4 = p3 * py;
                        if p4 == 0.0 {
                            continue;
                        }
                        if t == Target::S0K0 {
                            mass[a * ns + y_code(m_nat, z_nat, a, w, uy)] += p4;
                            continue;
                        }
                        for abar in 0..scm.card_a {
                            let p_abar = eta.p_a(abar, w)?;
                            let p5 = p4 * p_abar;
                            if p5 == 0.0 {
                                continue;
                            }
                            match t {
                                Target::S1K0 => {
                                    mass[a * ns + y_code(m_nat, z_nat, abar, w, uy)] += p5;
                                }
                                Target::S1K1 | Target::S2K1 => {
                                    let z_slot = if t == Target::S1K1 {
                                        z_nat
                                    } else {
                                        scm.eval_z(abar, w, uz)
                                    };
                                    for z_em in 0..scm.card_z {
                                        let pe = eta.p_z(z_em, a, w)?;
                                        if pe == 0.0 {
                                            continue;
                                        }
                                        let m_cf = scm.eval_m(z_em, a, w, um);
                                        mass[a * ns + y_code(m_cf, z_slot, abar, w, uy)] += p5 * pe;
                                    }
                                }
                                Target::S2K2 | Target::S3K2 => {
                                    for z_rm in 0..scm.card_z {
                                        let pr = eta.p_z(z_rm, abar, w)?;
                                        if pr == 0.0 {
                                            continue;
                                        }
                                        let m_cf = if t == Target::S2K2 {
                                            m_nat
                                        } else {
                                            scm.eval_m(scm.eval_z(abar, w, uz), a, w, um)
                                        };
                                        mass[a * ns + y_code(m_cf, z_rm, abar, w, uy)] += p5 * pr;
                                    }
                                }
                                Target::S3K0 => {
                                    let z_cf = scm.eval_z(abar, w, uz);
                                    let m_cf = scm.eval_m(z_cf, a, w, um);
                                    mass[a * ns + y_code(m_cf, z_cf, abar, w, uy)] += p5;
                                }
                                Target::S4K0 => {
                                    let z_cf = scm.eval_z(abar, w, uz);
                                    let m_cf = scm.eval_m(z_cf, abar, w, um);
                                    mass[a * ns + y_code(m_cf, z_cf, abar, w, uy)] += p5;
                                }
                                Target::S0K0 => unreachable!(),
                            }
                        }
                    }
                }
            }
        }
    }

    let mut a_marginal = vec![0.0f64; scm.card_a];
    let mut cond = vec![0.0f64; scm.card_a * ns];
    for a in 0..scm.card_a {
        let row = &mass[a * ns..(a + 1) * ns];
        let p: f64 = row.iter().sum();
        a_marginal[a] = p;
        if p > 0.0 {
            for (s, m) in row.iter().enumerate() {
                cond[a * ns + s] = m / p;
            }
        }
    }
    Ok(CtfLaw {
        card_a: scm.card_a,
        a_marginal,
        y_support,
        cond,
    })
}

/// Exact `E[f(A) * Y_target]`.
pub fn tau(scm: &DiscreteScm, t: Target, f: Weight) -> Result<f64> {
    Ok(ctf_law(scm, t)?.weighted_mean(f))
}

/// The covariance decomposition of the total causal influence into
/// path-specific components. All entries are exact population values.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PathDecomposition {
    /// `Cov(A, Y - Y_S4)`: total causal influence.
    pub theta: f64,
    /// Influence through `A -> Y`.
    pub p1: f64,
    /// Influence through `A -> Z -> Y`.
    pub p2: f64,
    /// Influence through `A -> Z -> M -> Y`.
    pub p3: f64,
    /// Influence through `A -> M -> Y`.
    pub p4: f64,
    /// Joint term that vanishes when `Z` is not an intermediate confounder.
    pub p23: f64,
}

impl PathDecomposition {
    pub fn component_sum(&self) -> f64 {
        self.p1 + self.p2 + self.p3 + self.p4 + self.p23
    }
}

/// Per-target moments `E[A * Y_t]` and `E[Y_t]`, plus `E[A]`.
#[derive(Debug, Clone)]
pub struct TargetMoments {
    pub tau_a: [f64; 8],
    pub tau_1: [f64; 8],
    pub mu_a: f64,
}

impl TargetMoments {
    fn idx(t: Target) -> usize {
        Target::ALL.iter().position(|x| *x == t).unwrap()
    }

    /// `Cov(A, Y_t1 - Y_t2)`, assembled the same way the estimator does it:
    /// `E[A Y_1] - E[A Y_2] - E[A](E[Y_1] - E[Y_2])`.
    pub fn cov_contrast(&self, t1: Target, t2: Target) -> f64 {
        let (i, j) = (Self::idx(t1), Self::idx(t2));
        self.tau_a[i] - self.tau_a[j] - self.mu_a * (self.tau_1[i] - self.tau_1[j])
    }

    pub fn decomposition(&self) -> PathDecomposition {
        PathDecomposition {
            theta: self.cov_contrast(Target::S0K0, Target::S4K0),
            p1: self.cov_contrast(Target::S0K0, Target::S1K0),
            p2: self.cov_contrast(Target::S1K1, Target::S2K1),
            p3: self.cov_contrast(Target::S2K2, Target::S3K2),
            p4: self.cov_contrast(Target::S3K0, Target::S4K0),
            p23: {
                let c = |t1, t2| self.cov_contrast(t1, t2);
                c(Target::S1K0, Target::S1K1)
                    + c(Target::S2K1, Target::S2K2)
                    + c(Target::S3K2, Target::S3K0)
            },
        }
    }
}

/// Moments of every target law, enumerated once each.
pub fn target_moments(scm: &DiscreteScm) -> Result<TargetMoments> {
    let mut tau_a = [0.0f64; 8];
    let mut tau_1 = [0.0f64; 8];
    let mut mu_a = 0.0;
    for (i, t) in Target::ALL.iter().enumerate() {
        let law = ctf_law(scm, *t)?;
        tau_a[i] = law.weighted_mean(Weight::Identity);
        tau_1[i] = law.weighted_mean(Weight::Unit);
        if i == 0 {
            mu_a = law
                .a_marginal
                .iter()
                .enumerate()
                .map(|(a, p)| a as f64 * p)
                .sum();
        }
    }
    Ok(TargetMoments { tau_a, tau_1, mu_a })
}

/// Exact path-specific covariance decomposition.
pub fn path_decomposition(scm: &DiscreteScm) -> Result<PathDecomposition> {
    Ok(target_moments(scm)?.decomposition())
}

/// Total causal influence, confounding covariance, and the residual
/// regression curve `a -> E[Y - E(Y|W) | A = a]`.
#[derive(Debug, Clone, Serialize)]
pub struct TotalInfluence {
    /// `E{[A - E(A|W)][Y - E(Y|W)]}`.
    pub theta: f64,
    /// `Cov(E(A|W), E(Y|W))`: association due to common causes only.
    pub tau_conf: f64,
    /// Per-level residual means; NaN at levels with `P(A = a) = 0`.
    pub f_curve: Vec<f64>,
}

pub fn total_influence(scm: &DiscreteScm) -> Result<TotalInfluence> {
    let law = scm.enumerate_joint()?;
    total_influence_of_law(&law)
}

pub fn total_influence_of_law(law: &JointLaw) -> Result<TotalInfluence> {
    let (cw, ca) = (law.card_w, law.card_a);
    let mut a_bar = vec![0.0f64; cw];
    let mut y_bar = vec![0.0f64; cw];
    let mut p_w = vec![0.0f64; cw];
    for w in 0..cw {
        p_w[w] = law.p_w(w);
        if p_w[w] == 0.0 {
            continue;
        }
        let mut sa = 0.0;
        let mut sy = 0.0;
        for a in 0..ca {
            for z in 0..law.card_z {
                for m in 0..law.card_m {
                    let c = law.cell(w, a, z, m);
                    sa += law.prob[c] * a as f64;
                    sy += law.prob[c] * law.y_mean[c];
                }
            }
        }
        a_bar[w] = sa / p_w[w];
        y_bar[w] = sy / p_w[w];
    }

    let mut theta = 0.0;
    let mut p_a_marg = vec![0.0f64; ca];
    let mut resid_by_a = vec![0.0f64; ca];
    for w in 0..cw {
        for a in 0..ca {
            for z in 0..law.card_z {
                for m in 0..law.card_m {
                    let c = law.cell(w, a, z, m);
                    if law.prob[c] == 0.0 {
                        continue;
                    }
                    let resid = law.y_mean[c] - y_bar[w];
                    theta += law.prob[c] * (a as f64 - a_bar[w]) * resid;
                    p_a_marg[a] += law.prob[c];
                    resid_by_a[a] += law.prob[c] * resid;
                }
            }
        }
    }
    let mean_a: f64 = (0..cw).map(|w| p_w[w] * a_bar[w]).sum();
    let mean_y: f64 = (0..cw).map(|w| p_w[w] * y_bar[w]).sum();
    let tau_conf: f64 = (0..cw)
        .map(|w| p_w[w] * (a_bar[w] - mean_a) * (y_bar[w] - mean_y))
        .sum();
    let f_curve = (0..ca)
        .map(|a| {
            if p_a_marg[a] > 0.0 {
                resid_by_a[a] / p_a_marg[a]
            } else {
                f64::NAN
            }
        })
        .collect();
    Ok(TotalInfluence {
        theta,
        tau_conf,
        f_curve,
    })
}

/// Path-specific decomposition of the average treatment effect of a binary
/// exposure. All entries exact.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AteDecomposition {
    pub psi: f64,
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub p4: f64,
    pub p23: f64,
    /// Means of the eight counterfactuals, in the order
    /// `S0, S1, S1', S2' (= S2''), S3'', S3, S4` plus the duplicate `S2''`.
    pub means: [f64; 8],
}

impl AteDecomposition {
    pub fn component_sum(&self) -> f64 {
        self.p1 + self.p2 + self.p3 + self.p4 + self.p23
    }
}

/// The eight counterfactual recipes entering the ATE decomposition, for
/// treatment arm 1 versus control arm 0.
#[derive(Debug, Clone, Copy, PartialEq)]
enum AteVariant {
    S0,   // Y(1, Z(1), M(1, Z(1)))
    S1,   // Y(0, Z(1), M(1, Z(1)))
    S1p,  // Y(0, Z(1), M(1, Z_1))
    S2p,  // Y(0, Z(0), M(1, Z_1))
    S2pp, // Y(0, Z_0, M(1, Z(1)))
    S3pp, // Y(0, Z_0, M(1, Z(0)))
    S3,   // Y(0, Z(0), M(1, Z(0)))
    S4,   // Y(0, Z(0), M(0, Z(0)))
}

pub fn ate_decomposition(scm: &DiscreteScm) -> Result<AteDecomposition> {
    if scm.card_a != 2 {
        return Err(Error::validation(format!(
            "ATE decomposition requires binary A, card_a = {}",
            scm.card_a
        )));
    }
    let law = scm.enumerate_joint()?;
    let eta = NuisanceSet::exact(&law);

    use AteVariant::*;
    let variants = [S0, S1, S1p, S2p, S2pp, S3pp, S3, S4];
    let mut means = [0.0f64; 8];
    for (i, v) in variants.iter().enumerate() {
        means[i] = ate_mean(scm, &eta, *v)?;
    }
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

fn ate_mean(scm: &DiscreteScm, eta: &NuisanceSet, v: AteVariant) -> Result<f64> {
    use AteVariant::*;
    // Which synthetic draw the variant needs: Z_1 ~ p(z | 1, W) or Z_0 ~ p(z | 0, W).
    let draw_arm = match v {
        S1p | S2p => Some(1usize),
        S2pp | S3pp => Some(0usize),
        _ => None,
    };
    let mut total = 0.0f64;
    for (uw, pw) in scm.noise[0].iter().enumerate() {
        if *pw == 0.0 {
            continue;
        }
        let w = scm.eval_w(uw);
        // U_A integrates out: the intervened system never consults f_a.
        for (uz, pz) in scm.noise[2].iter().enumerate() {
            let p2 = pw * pz;
            if p2 == 0.0 {
                continue;
            }
            let z1 = scm.eval_z(1, w, uz);
            let z0 = scm.eval_z(0, w, uz);
            for (um, pm) in scm.noise[3].iter().enumerate() {
                let p3 = p2 * pm;
                if p3 == 0.0 {
                    continue;
                }
                for (uy, py) in scm.noise[4].iter().enumerate() {
                    let p4 = p3 * py;
                    if p4 == 0.0 {
                        continue;
                    }
                    match draw_arm {
                        None => {
                            let (m, z_slot, a_slot) = match v {
                                S0 => (scm.eval_m(z1, 1, w, um), z1, 1),
                                S1 => (scm.eval_m(z1, 1, w, um), z1, 0),
                                S3 => (scm.eval_m(z0, 1, w, um), z0, 0),
                                S4 => (scm.eval_m(z0, 0, w, um), z0, 0),
                                _ => unreachable!(),
                            };
                            total += p4 * scm.eval_y(m, z_slot, a_slot, w, uy);
                        }
                        Some(arm) => {
                            for zd in 0..scm.card_z {
                                let pd = eta.p_z(zd, arm, w)?;
                                if pd == 0.0 {
                                    continue;
                                }
                                let (m, z_slot) = match v {
                                    S1p => (scm.eval_m(zd, 1, w, um), z1),
                                    S2p => (scm.eval_m(zd, 1, w, um), z0),
                                    S2pp => (scm.eval_m(z1, 1, w, um), zd),
                                    S3pp => (scm.eval_m(z0, 1, w, um), zd),
                                    _ => unreachable!(),
                                };
                                total += p4 * pd * scm.eval_y(m, z_slot, 0, w, uy);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(total)
}

/// How to compare two counterfactual laws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ContrastKind {
    MeanDiff,
    Covariance,
    Kl,
}

/// Contrast of the laws of two targets: difference of means, difference of
/// covariances with `A`, or Kullback-Leibler divergence of the joint laws.
pub fn contrast(scm: &DiscreteScm, t1: Target, t2: Target, kind: ContrastKind) -> Result<f64> {
    let l1 = ctf_law(scm, t1)?;
    let l2 = ctf_law(scm, t2)?;
    match kind {
        ContrastKind::MeanDiff => {
            Ok(l1.weighted_mean(Weight::Unit) - l2.weighted_mean(Weight::Unit))
        }
        ContrastKind::Covariance => {
            let mu_a: f64 = l1
                .a_marginal
                .iter()
                .enumerate()
                .map(|(a, p)| a as f64 * p)
                .sum();
            Ok(l1.weighted_mean(Weight::Identity)
                - l2.weighted_mean(Weight::Identity)
                - mu_a * (l1.weighted_mean(Weight::Unit) - l2.weighted_mean(Weight::Unit)))
        }
        ContrastKind::Kl => {
            let mut kl = 0.0;
            for a in 0..l1.card_a {
                let (pa1, pa2) = (l1.a_marginal[a], l2.a_marginal[a]);
                for (s, y) in l1.y_support.iter().enumerate() {
                    let p = pa1 * l1.cond_pmf(a)[s];
                    let q = pa2 * l2.cond_pmf(a)[s];
                    if p > 0.0 {
                        if q == 0.0 {
                            return Err(Error::validation(format!(
                                "kl contrast undefined: support mismatch at (a={a}, y={y})"
                            )));
                        }
                        kl += p * (p / q).ln();
                    }
                }
            }
            Ok(kl)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;

    const TOL: f64 = 1e-12;

    #[test]
    fn t0_null_intervention_is_identity() {
        let scm = builtin::scm_t0();
        let law = ctf_law(&scm, Target::S0K0).unwrap();
        // Y = A exactly.
        assert!((law.cond_mean(1) - 1.0).abs() < TOL);
        assert!((law.cond_mean(0) - 0.0).abs() < TOL);
        assert!((tau(&scm, Target::S0K0, Weight::Identity).unwrap() - 0.5).abs() < TOL);
    }

    #[test]
    fn t0_full_removal_breaks_dependence() {
        let scm = builtin::scm_t0();
        let law = ctf_law(&scm, Target::S4K0).unwrap();
        for a in 0..2 {
            // P(Y = 1 | A = a) = 0.5: the removed outcome ignores A.
            let p1: f64 = law
                .cond_pmf(a)
                .iter()
                .zip(&law.y_support)
                .filter(|(_, y)| **y == 1.0)
                .map(|(p, _)| *p)
                .sum();
            assert!((p1 - 0.5).abs() < TOL);
        }
        assert!((tau(&scm, Target::S4K0, Weight::Identity).unwrap() - 0.25).abs() < TOL);
    }

    #[test]
    fn t0_path_decomposition_concentrates_on_p1() {
        let d = path_decomposition(&builtin::scm_t0()).unwrap();
        assert!((d.theta - 0.25).abs() < TOL);
        assert!((d.p1 - 0.25).abs() < TOL);
        for v in [d.p2, d.p3, d.p4, d.p23] {
            assert!(v.abs() < TOL);
        }
    }

    #[test]
    fn t1_additivity_and_law_equality() {
        let scm = builtin::scm_t1();
        let d = path_decomposition(&scm).unwrap();
        assert!((d.theta - d.component_sum()).abs() < TOL);
        let l21 = ctf_law(&scm, Target::S2K1).unwrap();
        let l22 = ctf_law(&scm, Target::S2K2).unwrap();
        assert!(l21.max_cell_distance(&l22) < TOL);
    }

    // Closed forms for the canonical test model, worked out by hand from
    // its additive outcome y = m + z/2 + a/4 + w/10 + u/5:
    //
    // - p1 = Cov(A, (A - Abar)/4) = (Var A - Cov(A, Abar))/4 with
    //   Var A = 0.46 * 0.54 = 0.2484 and
    //   Cov(A, Abar) = 0.6 * 0.09 + 0.4 * 0.49 - 0.46^2 = 0.0384,
    //   so p1 = 0.21/4 = 0.0525.
    // - p2 = Cov(A, (Z(A) - Z(Abar))/2) with Z(a) = a xor U_Z, so the
    //   difference is (1 - 2 U_Z)(A - Abar) and
    //   p2 = 0.5 * 0.8 * (E A - E[A Abar]) = 0.5 * 0.8 * 0.21 = 0.084.
    // - p4 = 0.6 * Cov(A, 1{Z(Abar) + W = 1}(A - Abar)) = 0.0621936
    //   (majority cell flips only when z + w = 1).
    // - p23 = 0 exactly: the outcome is additive in (m, z, a), so the
    //   paired emulation variants cancel term by term.
    // - p3 = theta - p1 - p2 - p4 = 0.0512064.
    #[test]
    fn t1_frozen_hand_derived_values() {
        let d = path_decomposition(&builtin::scm_t1()).unwrap();
        assert!((d.theta - 0.2499).abs() < TOL);
        assert!((d.p1 - 0.0525).abs() < TOL);
        assert!((d.p2 - 0.084).abs() < TOL);
        assert!((d.p3 - 0.0512064).abs() < TOL);
        assert!((d.p4 - 0.0621936).abs() < TOL);
        assert!(d.p23.abs() < TOL);
    }

    // Effect scale, additive outcome: psi = dE[M] + dE[Z]/2 + 1/4 with
    // dE[Z] = 0.9 - 0.1 = 0.8 and dE[M] = 0.6 * (P(Z(1)+W >= 1) -
    // P(Z(0)=1, W=1)) = 0.6 * (0.94 - 0.04) = 0.54, so psi = 1.19; the
    // direct component is the bare a-coefficient 1/4.
    #[test]
    fn t1_frozen_effect_values() {
        let e = ate_decomposition(&builtin::scm_t1()).unwrap();
        assert!((e.psi - 1.19).abs() < TOL);
        assert!((e.p1 - 0.25).abs() < TOL);
        assert!(e.p23.abs() < TOL);
    }

    #[test]
    fn t0_total_influence() {
        let t = total_influence(&builtin::scm_t0()).unwrap();
        assert!((t.theta - 0.25).abs() < TOL);
        assert!(t.tau_conf.abs() < TOL);
        assert!((t.f_curve[1] - 0.5).abs() < TOL);
        assert!((t.f_curve[0] + 0.5).abs() < TOL);
    }

    #[test]
    fn t1_total_covariance_identity() {
        let scm = builtin::scm_t1();
        let law = scm.enumerate_joint().unwrap();
        let t = total_influence_of_law(&law).unwrap();
        // Cov(A, Y) from the joint law.
        let mut mu_a = 0.0;
        let mut mu_y = 0.0;
        let mut e_ay = 0.0;
        for w in 0..2 {
            for a in 0..2 {
                for z in 0..2 {
                    for m in 0..2 {
                        let c = law.cell(w, a, z, m);
                        mu_a += law.prob[c] * a as f64;
                        mu_y += law.prob[c] * law.y_mean[c];
                        e_ay += law.prob[c] * a as f64 * law.y_mean[c];
                    }
                }
            }
        }
        let cov = e_ay - mu_a * mu_y;
        assert!((t.theta + t.tau_conf - cov).abs() < 1e-12);
    }

    #[test]
    fn randomized_exposure_has_no_confounding() {
        // A depends on U_A only: p(a | w) is constant in w.
        let mut scm = builtin::scm_t1();
        for w in 0..2 {
            for u in 0..2 {
                scm.f_a[w * 2 + u] = u;
            }
        }
        let t = total_influence(&scm).unwrap();
        assert!(t.tau_conf.abs() < TOL);
    }

    #[test]
    fn t0_ate_decomposition() {
        let d = ate_decomposition(&builtin::scm_t0()).unwrap();
        assert!((d.psi - 1.0).abs() < TOL);
        assert!((d.p1 - 1.0).abs() < TOL);
        for v in [d.p2, d.p3, d.p4, d.p23] {
            assert!(v.abs() < TOL);
        }
    }

    #[test]
    fn t1_ate_additivity() {
        let d = ate_decomposition(&builtin::scm_t1()).unwrap();
        assert!((d.psi - d.component_sum()).abs() < TOL);
    }

    #[test]
    fn non_binary_a_rejected_for_ate() {
        let mut scm = builtin::scm_t0();
        scm.card_a = 3;
        scm.noise[1] = vec![0.4, 0.3, 0.3];
        scm.f_a = vec![0, 1, 2];
        scm.f_z = vec![0, 0, 0];
        scm.f_m = vec![0, 0, 0];
        scm.f_y = vec![0.0, 1.0, 2.0];
        scm.validate().unwrap();
        assert!(ate_decomposition(&scm).is_err());
    }

    #[test]
    fn sharp_null_structural_exclusion() {
        // M ignores its Z argument: no influence can flow through P3.
        let mut scm = builtin::scm_t1();
        for z in 0..2 {
            for a in 0..2 {
                for w in 0..2 {
                    for u in 0..2 {
                        let maj = usize::from(a + w >= 1);
                        scm.f_m[((z * 2 + a) * 2 + w) * 2 + u] = maj ^ u;
                    }
                }
            }
        }
        let d = path_decomposition(&scm).unwrap();
        assert!(d.p3.abs() < TOL, "p3 = {}", d.p3);
    }

    #[test]
    fn contrasts() {
        let scm = builtin::scm_t0();
        for kind in [
            ContrastKind::MeanDiff,
            ContrastKind::Covariance,
            ContrastKind::Kl,
        ] {
            let same = contrast(&scm, Target::S1K0, Target::S1K0, kind).unwrap();
            assert!(same.abs() < TOL);
        }
        let cov = contrast(&scm, Target::S0K0, Target::S4K0, ContrastKind::Covariance).unwrap();
        assert!((cov - 0.25).abs() < TOL);
        let kl = contrast(
            &builtin::scm_t1(),
            Target::S0K0,
            Target::S4K0,
            ContrastKind::Kl,
        )
        .unwrap();
        assert!(kl >= 0.0);
    }
}
