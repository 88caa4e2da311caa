//! Canonical gradients (efficient influence functions) of the target
//! functionals.
//!
//! For each gradient-supported target the uncentered gradient `phibar` has
//! the structure
//!
//! ```text
//! phibar(X) = ratio(X) * (Y - m_hat(M,Z,A,W)) + <integral terms in eta>
//! ```
//!
//! where `ratio` is an h-function over the observed cell divided by the
//! relevant conditional pmfs, and the integral terms are exact sums over
//! the discrete supports (no Monte Carlo). All integrals are precomputed
//! into small tables keyed by the observed coordinates, so per-row
//! evaluation is table lookups. `E_P[phibar(X; eta_P)] = tau(P)` at the
//! truth; the centered gradient is `phibar - tau`.
//!
//! Ratio denominators are taken from the (truncated) nuisance tables; a
//! denominator below the truncation floor raises a numerical-guard error
//! naming the cell.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nuisance::NuisanceSet;
use crate::scm::JointLaw;
use crate::target::{Target, Weight};

/// One observed row.
#[derive(Debug, Clone, Copy)]
pub struct Obs {
    pub w: usize,
    pub a: usize,
    pub z: usize,
    pub m: usize,
    pub y: f64,
}

/// The six h-functions: `f(a)`-weighted mixtures of conditional pmfs that
/// scale the outcome residual in each gradient.
#[derive(Debug, Clone)]
pub struct HFunctions {
    /// `sum_a f(a) p(m|z,a,w) p(z|a,w) p(a|w)`, indexed `(w, z, m)`.
    pub h1_0: Vec<f64>,
    /// `sum_a f(a) p(z|a,w) pM(m|a,w) p(a|w)`, indexed `(w, z, m)`.
    pub h1_1: Vec<f64>,
    /// `sum_a f(a) pM(m|a,w) p(a|w)`, indexed `(w, m)`.
    pub h2_1: Vec<f64>,
    /// `sum_a f(a) p(a|w) sum_z' p(m|z',a,w) p(z'|A_obs,w)`, indexed `(w, a_obs, m)`.
    pub h3_2: Vec<f64>,
    /// `sum_a f(a) p(m|z,a,w) p(a|w)`, indexed `(w, z, m)`.
    pub h3_0: Vec<f64>,
    /// `sum_a f(a) p(a|w)`, indexed `(w)`.
    pub h4_0: Vec<f64>,
}

#[derive(Clone, Copy)]
struct Dims {
    ca: usize,
    cz: usize,
    cm: usize,
}

impl Dims {
    #[inline]
    fn wa(&self, w: usize, a: usize) -> usize {
        w * self.ca + a
    }
    #[inline]
    fn wz(&self, w: usize, z: usize) -> usize {
        w * self.cz + z
    }
    #[inline]
    fn wm(&self, w: usize, m: usize) -> usize {
        w * self.cm + m
    }
    #[inline]
    fn wzm(&self, w: usize, z: usize, m: usize) -> usize {
        (w * self.cz + z) * self.cm + m
    }
    #[inline]
    fn wam(&self, w: usize, a: usize, m: usize) -> usize {
        (w * self.ca + a) * self.cm + m
    }
    #[inline]
    fn waz(&self, w: usize, a: usize, z: usize) -> usize {
        (w * self.ca + a) * self.cz + z
    }
}

/// Compute all six h-function tables for a weight.
pub fn h_tables(eta: &NuisanceSet, f: Weight) -> Result<HFunctions> {
    let (cw, ca, cz, cm) = (eta.card_w, eta.card_a, eta.card_z, eta.card_m);
    let d = Dims { ca, cz, cm };
    let mut h1_0 = vec![0.0; cw * cz * cm];
    let mut h1_1 = vec![0.0; cw * cz * cm];
    let mut h2_1 = vec![0.0; cw * cm];
    let mut h3_2 = vec![0.0; cw * ca * cm];
    let mut h3_0 = vec![0.0; cw * cz * cm];
    let mut h4_0 = vec![0.0; cw];
    for w in 0..cw {
        for a in 0..ca {
            let wt = f.apply(a) * eta.p_a(a, w)?;
            h4_0[w] += wt;
            if wt == 0.0 {
                continue;
            }
            for m in 0..cm {
                let mu = eta.p_m_marg(m, a, w)?;
                h2_1[d.wm(w, m)] += wt * mu;
                for z in 0..cz {
                    let pz = eta.p_z(z, a, w)?;
                    h1_0[d.wzm(w, z, m)] += wt * pz * eta.p_m(m, z, a, w)?;
                    h1_1[d.wzm(w, z, m)] += wt * pz * mu;
                    h3_0[d.wzm(w, z, m)] += wt * eta.p_m(m, z, a, w)?;
                }
            }
        }
        // h3_2 mixes the mediator over z' drawn at the observed arm.
        for a_obs in 0..ca {
            for m in 0..cm {
                let mut s = 0.0;
                for zp in 0..cz {
                    let pzp = eta.p_z(zp, a_obs, w)?;
                    if pzp == 0.0 {
                        continue;
                    }
                    for a in 0..ca {
                        let wt = f.apply(a) * eta.p_a(a, w)?;
                        if wt == 0.0 {
                            continue;
                        }
                        s += pzp * wt * eta.p_m(m, zp, a, w)?;
                    }
                }
                h3_2[d.wam(w, a_obs, m)] = s;
            }
        }
    }
    Ok(HFunctions {
        h1_0,
        h1_1,
        h2_1,
        h3_2,
        h3_0,
        h4_0,
    })
}

/// Precomputed gradient tables for one `(eta, f)` pair, covering all six
/// gradient-supported targets. Per-row evaluation is O(1) lookups plus the
/// residual ratio.
pub struct GradientSet {
    eta: NuisanceSet,
    f: Weight,
    d: Dims,
    pub h: HFunctions,
    ybar_w: Vec<f64>,
    /// `sum_a' p(a'|w) m_hat(m,z,a',w)`, the outcome regression averaged
    /// over the draw arm, `(w,z,m)`.
    mean_arm: Vec<f64>,
    // S1K0
    s10_plug_obs: Vec<f64>, // (w,a)
    s10_plug: Vec<f64>,     // (w)
    // S1K1
    s11_plug_obs: Vec<f64>,  // (w,a)
    s11_plug: Vec<f64>,      // (w)
    s11_emul_z: Vec<f64>,    // (w,a,z)
    s11_emul_zint: Vec<f64>, // (w,a)
    s11_emul_m: Vec<f64>,    // (w,a,m)
    // S2K1
    s21_plug_obs: Vec<f64>, // (w,a,z)
    s21_plug: Vec<f64>,     // (w)
    s21_marg: Vec<f64>,     // (w,m)
    // S3K2
    s32_plug_obs: Vec<f64>,  // (w,a,z)
    s32_plug: Vec<f64>,      // (w)
    s32_ratio_pos: Vec<f64>, // (w,z,m)
    s32_ratio_neg: Vec<f64>, // (w,a,z)
    s32_cross_pos: Vec<f64>, // (w,a,z)
    s32_cross_neg: Vec<f64>, // (w,a)
    s32_mean_arm: Vec<f64>,  // (w,a)
    // S3K0
    s30_plug_obs: Vec<f64>,  // (w,a,z)
    s30_plug: Vec<f64>,      // (w)
    s30_ratio_pos: Vec<f64>, // (w,z,m)
    s30_ratio_neg: Vec<f64>, // (w,a,z)
    s30_mean_arm: Vec<f64>,  // (w,a)
}

impl GradientSet {
    pub fn new(eta: &NuisanceSet, f: Weight) -> Result<GradientSet> {
        let (cw, ca, cz, cm) = (eta.card_w, eta.card_a, eta.card_z, eta.card_m);
        let d = Dims { ca, cz, cm };
        let h = h_tables(eta, f)?;

        let mut ybar_w = vec![0.0; cw];
        for (w, slot) in ybar_w.iter_mut().enumerate() {
            *slot = eta.y_bar_w(w)?;
        }

        let mut mean_arm = vec![0.0; cw * cz * cm];
        for w in 0..cw {
            for z in 0..cz {
                for m in 0..cm {
                    let mut s = 0.0;
                    for ap in 0..ca {
                        let r = eta.p_a(ap, w)?;
                        if r == 0.0 {
                            continue;
                        }
                        s += r * eta.m_hat(m, z, ap, w)?;
                    }
                    mean_arm[d.wzm(w, z, m)] = s;
                }
            }
        }

        // S1K0: (a0, z0, m0) ~ observed joint given W; the outcome
        // regression sits at the observed arm (plug_obs) or the draw arm
        // (plug, the w-conditional value of the functional).
        let mut s10_plug_obs = vec![0.0; cw * ca];
        let mut s10_plug = vec![0.0; cw];
        for w in 0..cw {
            for a_obs in 0..ca {
                let mut s = 0.0;
                for a0 in 0..ca {
                    let wt = f.apply(a0) * eta.p_a(a0, w)?;
                    if wt == 0.0 {
                        continue;
                    }
                    for z0 in 0..cz {
                        let pz = eta.p_z(z0, a0, w)?;
                        if pz == 0.0 {
                            continue;
                        }
                        for m0 in 0..cm {
                            let pm = eta.p_m(m0, z0, a0, w)?;
                            if pm == 0.0 {
                                continue;
                            }
                            s += wt * pz * pm * eta.m_hat(m0, z0, a_obs, w)?;
                        }
                    }
                }
                s10_plug_obs[d.wa(w, a_obs)] = s;
            }
            for ap in 0..ca {
                s10_plug[w] += eta.p_a(ap, w)? * s10_plug_obs[d.wa(w, ap)];
            }
        }

        // S1K1: the mediator draw comes from the implied marginal p(m|a0,w).
        let mut s11_plug_obs = vec![0.0; cw * ca];
        let mut s11_plug = vec![0.0; cw];
        let mut s11_emul_z = vec![0.0; cw * ca * cz];
        let mut s11_emul_zint = vec![0.0; cw * ca];
        let mut s11_emul_m = vec![0.0; cw * ca * cm];
        for w in 0..cw {
            for a_obs in 0..ca {
                let mut s = 0.0;
                for a0 in 0..ca {
                    let wt = f.apply(a0) * eta.p_a(a0, w)?;
                    if wt == 0.0 {
                        continue;
                    }
                    for z0 in 0..cz {
                        let pz = eta.p_z(z0, a0, w)?;
                        if pz == 0.0 {
                            continue;
                        }
                        for m0 in 0..cm {
                            let mu = eta.p_m_marg(m0, a0, w)?;
                            if mu == 0.0 {
                                continue;
                            }
                            s += wt * pz * mu * eta.m_hat(m0, z0, a_obs, w)?;
                        }
                    }
                }
                s11_plug_obs[d.wa(w, a_obs)] = s;

                for z_obs in 0..cz {
                    let mut s = 0.0;
                    for ap in 0..ca {
                        let r = eta.p_a(ap, w)?;
                        if r == 0.0 {
                            continue;
                        }
                        for m0 in 0..cm {
                            let mu = eta.p_m_marg(m0, a_obs, w)?;
                            if mu == 0.0 {
                                continue;
                            }
                            s += r * mu * eta.m_hat(m0, z_obs, ap, w)?;
                        }
                    }
                    s11_emul_z[d.waz(w, a_obs, z_obs)] = s;
                }
                let mut zint = 0.0;
                for z0 in 0..cz {
                    zint += eta.p_z(z0, a_obs, w)? * s11_emul_z[d.waz(w, a_obs, z0)];
                }
                s11_emul_zint[d.wa(w, a_obs)] = zint;
                for m_obs in 0..cm {
                    let mut s = 0.0;
                    for ap in 0..ca {
                        let r = eta.p_a(ap, w)?;
                        if r == 0.0 {
                            continue;
                        }
                        for z0 in 0..cz {
                            let pz = eta.p_z(z0, a_obs, w)?;
                            if pz == 0.0 {
                                continue;
                            }
                            s += r * pz * eta.m_hat(m_obs, z0, ap, w)?;
                        }
                    }
                    s11_emul_m[d.wam(w, a_obs, m_obs)] = s;
                }
            }
            for ap in 0..ca {
                s11_plug[w] += eta.p_a(ap, w)? * s11_plug_obs[d.wa(w, ap)];
            }
        }

        // S2K1: (z, a') drawn jointly; mediator from the implied marginal.
        let mut s21_plug_obs = vec![0.0; cw * ca * cz];
        let mut s21_plug = vec![0.0; cw];
        let mut s21_marg = vec![0.0; cw * cm];
        for w in 0..cw {
            for a_obs in 0..ca {
                for z_obs in 0..cz {
                    let mut s = 0.0;
                    for a0 in 0..ca {
                        let wt = f.apply(a0) * eta.p_a(a0, w)?;
                        if wt == 0.0 {
                            continue;
                        }
                        for m0 in 0..cm {
                            let mu = eta.p_m_marg(m0, a0, w)?;
                            if mu == 0.0 {
                                continue;
                            }
                            s += wt * mu * eta.m_hat(m0, z_obs, a_obs, w)?;
                        }
                    }
                    s21_plug_obs[d.waz(w, a_obs, z_obs)] = s;
                }
            }
            for ap in 0..ca {
                let r = eta.p_a(ap, w)?;
                if r == 0.0 {
                    continue;
                }
                for z in 0..cz {
                    s21_plug[w] += r * eta.p_z(z, ap, w)? * s21_plug_obs[d.waz(w, ap, z)];
                }
            }
            for m_obs in 0..cm {
                let mut s = 0.0;
                for ap in 0..ca {
                    let r = eta.p_a(ap, w)?;
                    if r == 0.0 {
                        continue;
                    }
                    for z0 in 0..cz {
                        let pz = eta.p_z(z0, ap, w)?;
                        if pz == 0.0 {
                            continue;
                        }
                        s += r * pz * eta.m_hat(m_obs, z0, ap, w)?;
                    }
                }
                s21_marg[d.wm(w, m_obs)] = s;
            }
        }

        // S3K2: both z' (mediator mixing) and z (outcome slot) drawn at a'.
        let mut s32_plug_obs = vec![0.0; cw * ca * cz];
        let mut s32_plug = vec![0.0; cw];
        let mut s32_ratio_pos = vec![0.0; cw * cz * cm];
        let mut s32_ratio_neg = vec![0.0; cw * ca * cz];
        let mut s32_cross_pos = vec![0.0; cw * ca * cz];
        let mut s32_cross_neg = vec![0.0; cw * ca];
        let mut s32_mean_arm = vec![0.0; cw * ca];
        for w in 0..cw {
            for a_obs in 0..ca {
                for z_obs in 0..cz {
                    let mut s = 0.0;
                    for m0 in 0..cm {
                        let hval = h.h3_2[d.wam(w, a_obs, m0)];
                        if hval == 0.0 {
                            continue;
                        }
                        s += hval * eta.m_hat(m0, z_obs, a_obs, w)?;
                    }
                    s32_plug_obs[d.waz(w, a_obs, z_obs)] = s;

                    // z0 ~ p(.|a_obs), m0 ~ p(m|z_obs, a0).
                    let mut s = 0.0;
                    for a0 in 0..ca {
                        let wt = f.apply(a0) * eta.p_a(a0, w)?;
                        if wt == 0.0 {
                            continue;
                        }
                        for z0 in 0..cz {
                            let pz = eta.p_z(z0, a_obs, w)?;
                            if pz == 0.0 {
                                continue;
                            }
                            for m0 in 0..cm {
                                let pm = eta.p_m(m0, z_obs, a0, w)?;
                                if pm == 0.0 {
                                    continue;
                                }
                                s += wt * pz * pm * eta.m_hat(m0, z0, a_obs, w)?;
                            }
                        }
                    }
                    s32_cross_pos[d.waz(w, a_obs, z_obs)] = s;

                    // m0 ~ p(m|z_obs, a_obs); mass of the observed z at a'.
                    let mut s = 0.0;
                    for ap in 0..ca {
                        let r = eta.p_a(ap, w)? * eta.p_z(z_obs, ap, w)?;
                        if r == 0.0 {
                            continue;
                        }
                        for z0 in 0..cz {
                            let pz0 = eta.p_z(z0, ap, w)?;
                            if pz0 == 0.0 {
                                continue;
                            }
                            for m0 in 0..cm {
                                let pm = eta.p_m(m0, z_obs, a_obs, w)?;
                                if pm == 0.0 {
                                    continue;
                                }
                                s += r * pz0 * pm * eta.m_hat(m0, z0, ap, w)?;
                            }
                        }
                    }
                    s32_ratio_neg[d.waz(w, a_obs, z_obs)] = s;
                }

                let mut s = 0.0;
                for z0 in 0..cz {
                    s += eta.p_z(z0, a_obs, w)? * s32_plug_obs[d.waz(w, a_obs, z0)];
                }
                s32_cross_neg[d.wa(w, a_obs)] = s;

                let mut s = 0.0;
                for ap in 0..ca {
                    let r = eta.p_a(ap, w)?;
                    if r == 0.0 {
                        continue;
                    }
                    for z0 in 0..cz {
                        let pz0 = eta.p_z(z0, ap, w)?;
                        if pz0 == 0.0 {
                            continue;
                        }
                        for zp in 0..cz {
                            let pzp = eta.p_z(zp, ap, w)?;
                            if pzp == 0.0 {
                                continue;
                            }
                            for m0 in 0..cm {
                                let pm = eta.p_m(m0, zp, a_obs, w)?;
                                if pm == 0.0 {
                                    continue;
                                }
                                s += r * pz0 * pzp * pm * eta.m_hat(m0, z0, ap, w)?;
                            }
                        }
                    }
                }
                s32_mean_arm[d.wa(w, a_obs)] = s;
            }
            for z_obs in 0..cz {
                for m_obs in 0..cm {
                    let mut s = 0.0;
                    for ap in 0..ca {
                        let r = eta.p_a(ap, w)? * eta.p_z(z_obs, ap, w)?;
                        if r == 0.0 {
                            continue;
                        }
                        for z0 in 0..cz {
                            let pz0 = eta.p_z(z0, ap, w)?;
                            if pz0 == 0.0 {
                                continue;
                            }
                            s += r * pz0 * eta.m_hat(m_obs, z0, ap, w)?;
                        }
                    }
                    s32_ratio_pos[d.wzm(w, z_obs, m_obs)] = s;
                }
            }
            let mut s = 0.0;
            for ap in 0..ca {
                let r = eta.p_a(ap, w)?;
                if r == 0.0 {
                    continue;
                }
                for zp in 0..cz {
                    let pzp = eta.p_z(zp, ap, w)?;
                    if pzp == 0.0 {
                        continue;
                    }
                    for z0 in 0..cz {
                        let pz0 = eta.p_z(z0, ap, w)?;
                        if pz0 == 0.0 {
                            continue;
                        }
                        for m0 in 0..cm {
                            let mut fm = 0.0;
                            for a0 in 0..ca {
                                let wt = f.apply(a0) * eta.p_a(a0, w)?;
                                if wt == 0.0 {
                                    continue;
                                }
                                fm += wt * eta.p_m(m0, zp, a0, w)?;
                            }
                            if fm == 0.0 {
                                continue;
                            }
                            s += r * pzp * pz0 * fm * eta.m_hat(m0, z0, ap, w)?;
                        }
                    }
                }
            }
            s32_plug[w] = s;
        }

        // S3K0: the mediator is mixed at the observed z.
        let mut s30_plug_obs = vec![0.0; cw * ca * cz];
        let mut s30_plug = vec![0.0; cw];
        let mut s30_ratio_pos = vec![0.0; cw * cz * cm];
        let mut s30_ratio_neg = vec![0.0; cw * ca * cz];
        let mut s30_mean_arm = vec![0.0; cw * ca];
        for w in 0..cw {
            for z_obs in 0..cz {
                for m_obs in 0..cm {
                    let mut s = 0.0;
                    for ap in 0..ca {
                        let r = eta.p_a(ap, w)? * eta.p_z(z_obs, ap, w)?;
                        if r == 0.0 {
                            continue;
                        }
                        s += r * eta.m_hat(m_obs, z_obs, ap, w)?;
                    }
                    s30_ratio_pos[d.wzm(w, z_obs, m_obs)] = s;
                }
            }
            for a_obs in 0..ca {
                for z_obs in 0..cz {
                    let mut s = 0.0;
                    for ap in 0..ca {
                        let r = eta.p_a(ap, w)? * eta.p_z(z_obs, ap, w)?;
                        if r == 0.0 {
                            continue;
                        }
                        for m0 in 0..cm {
                            let pm = eta.p_m(m0, z_obs, a_obs, w)?;
                            if pm == 0.0 {
                                continue;
                            }
                            s += r * pm * eta.m_hat(m0, z_obs, ap, w)?;
                        }
                    }
                    s30_ratio_neg[d.waz(w, a_obs, z_obs)] = s;

                    let mut s = 0.0;
                    for a0 in 0..ca {
                        let wt = f.apply(a0) * eta.p_a(a0, w)?;
                        if wt == 0.0 {
                            continue;
                        }
                        for m0 in 0..cm {
                            let pm = eta.p_m(m0, z_obs, a0, w)?;
                            if pm == 0.0 {
                                continue;
                            }
                            s += wt * pm * eta.m_hat(m0, z_obs, a_obs, w)?;
                        }
                    }
                    s30_plug_obs[d.waz(w, a_obs, z_obs)] = s;
                }
                let mut s = 0.0;
                for ap in 0..ca {
                    let r = eta.p_a(ap, w)?;
                    if r == 0.0 {
                        continue;
                    }
                    for z0 in 0..cz {
                        let pz0 = eta.p_z(z0, ap, w)?;
                        if pz0 == 0.0 {
                            continue;
                        }
                        for m0 in 0..cm {
                            let pm = eta.p_m(m0, z0, a_obs, w)?;
                            if pm == 0.0 {
                                continue;
                            }
                            s += r * pz0 * pm * eta.m_hat(m0, z0, ap, w)?;
                        }
                    }
                }
                s30_mean_arm[d.wa(w, a_obs)] = s;
            }
            for ap in 0..ca {
                let r = eta.p_a(ap, w)?;
                if r == 0.0 {
                    continue;
                }
                for z in 0..cz {
                    s30_plug[w] += r * eta.p_z(z, ap, w)? * s30_plug_obs[d.waz(w, ap, z)];
                }
            }
        }

        Ok(GradientSet {
            eta: eta.clone(),
            f,
            d,
            h,
            ybar_w,
            mean_arm,
            s10_plug_obs,
            s10_plug,
            s11_plug_obs,
            s11_plug,
            s11_emul_z,
            s11_emul_zint,
            s11_emul_m,
            s21_plug_obs,
            s21_plug,
            s21_marg,
            s32_plug_obs,
            s32_plug,
            s32_ratio_pos,
            s32_ratio_neg,
            s32_cross_pos,
            s32_cross_neg,
            s32_mean_arm,
            s30_plug_obs,
            s30_plug,
            s30_ratio_pos,
            s30_ratio_neg,
            s30_mean_arm,
        })
    }

    pub fn weight(&self) -> Weight {
        self.f
    }

    fn guard(&self, p: f64, cell: &str, x: &Obs) -> Result<f64> {
        if p <= 0.0 || p + 1e-12 < self.eta.epsilon {
            return Err(Error::NumericGuard {
                cell: format!(
                    "{cell} = {p:.3e} below floor {} at (w={}, a={}, z={}, m={})",
                    self.eta.epsilon, x.w, x.a, x.z, x.m
                ),
            });
        }
        Ok(p)
    }

    /// Uncentered canonical gradient `phibar_target(x; eta)`.
    pub fn uncentered(&self, t: Target, x: &Obs) -> Result<f64> {
        let d = self.d;
        let (w, a, z, m) = (x.w, x.a, x.z, x.m);
        let eta = &self.eta;
        let fa = self.f.apply(a);
        match t.gradient_alias() {
            Target::S0K0 => Ok(fa * x.y),
            Target::S1K0 => {
                let denom = self.guard(eta.p_m(m, z, a, w)?, "p(m|z,a,w)", x)?
                    * self.guard(eta.p_z(z, a, w)?, "p(z|a,w)", x)?;
                let resid = x.y - eta.m_hat(m, z, a, w)?;
                Ok(
                    self.h.h1_0[d.wzm(w, z, m)] / denom * resid + self.s10_plug_obs[d.wa(w, a)]
                        - self.s10_plug[w]
                        + fa * self.mean_arm[d.wzm(w, z, m)],
                )
            }
            Target::S1K1 => {
                let denom = self.guard(eta.p_m(m, z, a, w)?, "p(m|z,a,w)", x)?
                    * self.guard(eta.p_z(z, a, w)?, "p(z|a,w)", x)?;
                let resid = x.y - eta.m_hat(m, z, a, w)?;
                Ok(
                    self.h.h1_1[d.wzm(w, z, m)] / denom * resid + self.s11_plug_obs[d.wa(w, a)]
                        - self.s11_plug[w]
                        + fa * (self.s11_emul_z[d.waz(w, a, z)] - self.s11_emul_zint[d.wa(w, a)]
                            + self.s11_emul_m[d.wam(w, a, m)]),
                )
            }
            Target::S2K1 => {
                let denom = self.guard(eta.p_m(m, z, a, w)?, "p(m|z,a,w)", x)?;
                let resid = x.y - eta.m_hat(m, z, a, w)?;
                Ok(
                    self.h.h2_1[d.wm(w, m)] / denom * resid + self.s21_plug_obs[d.waz(w, a, z)]
                        - self.s21_plug[w]
                        + fa * self.s21_marg[d.wm(w, m)],
                )
            }
            Target::S3K2 => {
                let pm = self.guard(eta.p_m(m, z, a, w)?, "p(m|z,a,w)", x)?;
                let pz = self.guard(eta.p_z(z, a, w)?, "p(z|a,w)", x)?;
                let resid = x.y - eta.m_hat(m, z, a, w)?;
                Ok(
                    self.h.h3_2[d.wam(w, a, m)] / pm * resid + self.s32_cross_pos[d.waz(w, a, z)]
                        - self.s32_plug[w]
                        + fa / pz
                            * (self.s32_ratio_pos[d.wzm(w, z, m)]
                                - self.s32_ratio_neg[d.waz(w, a, z)])
                        + self.s32_plug_obs[d.waz(w, a, z)]
                        - self.s32_cross_neg[d.wa(w, a)]
                        + fa * self.s32_mean_arm[d.wa(w, a)],
                )
            }
            Target::S3K0 => {
                let pm = self.guard(eta.p_m(m, z, a, w)?, "p(m|z,a,w)", x)?;
                let pz = self.guard(eta.p_z(z, a, w)?, "p(z|a,w)", x)?;
                let resid = x.y - eta.m_hat(m, z, a, w)?;
                Ok(self.h.h3_0[d.wzm(w, z, m)] / pm * resid
                    + fa / pz
                        * (self.s30_ratio_pos[d.wzm(w, z, m)] - self.s30_ratio_neg[d.waz(w, a, z)])
                    + self.s30_plug_obs[d.waz(w, a, z)]
                    - self.s30_plug[w]
                    + fa * self.s30_mean_arm[d.wa(w, a)])
            }
            Target::S4K0 => Ok(self.h.h4_0[w] * (x.y - self.ybar_w[w]) + fa * self.ybar_w[w]),
            Target::S2K2 => unreachable!("aliased to S2K1"),
        }
    }
}

/// Influence-function value of `Cov(A, Y_target) = tau_A - mu_A * tau_1`,
/// composed from the two weighted gradients by the delta method.
pub fn covariance_if(
    a_value: f64,
    mu_a: f64,
    tau_a: f64,
    tau_1: f64,
    phibar_a: f64,
    phibar_1: f64,
) -> f64 {
    (phibar_a - tau_a) - mu_a * (phibar_1 - tau_1) - tau_1 * (a_value - mu_a)
}

/// Exact `E_P[phibar(X; eta)]` over an enumerated joint law. Valid because
/// every gradient is affine in `y`, so the conditional mean per cell
/// substitutes for `y`.
pub fn expected_uncentered(law: &JointLaw, gs: &GradientSet, t: Target) -> Result<f64> {
    let mut s = 0.0;
    for w in 0..law.card_w {
        for a in 0..law.card_a {
            for z in 0..law.card_z {
                for m in 0..law.card_m {
                    let c = law.cell(w, a, z, m);
                    if law.prob[c] == 0.0 {
                        continue;
                    }
                    let x = Obs {
                        w,
                        a,
                        z,
                        m,
                        y: law.y_mean[c],
                    };
                    s += law.prob[c] * gs.uncentered(t, &x)?;
                }
            }
        }
    }
    Ok(s)
}

/// The seven distinct counterfactual-mean functionals of the binary-`A`
/// ATE decomposition (the two middle recipes share one identified mean).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AteMean {
    S0,
    S1,
    S1p,
    S2p,
    S3pp,
    S3,
    S4,
}

impl AteMean {
    pub const ALL: [AteMean; 7] = [
        AteMean::S0,
        AteMean::S1,
        AteMean::S1p,
        AteMean::S2p,
        AteMean::S3pp,
        AteMean::S3,
        AteMean::S4,
    ];
}

/// Precomputed gradient tables for the ATE counterfactual means.
pub struct AteGradientSet {
    eta: NuisanceSet,
    d: Dims,
    ybar1: Vec<f64>,   // (w)
    ybar0: Vec<f64>,   // (w)
    mu1: Vec<f64>,     // (w,m): implied p(m | 1, w)
    nu: Vec<f64>,      // (w,m): sum_z' p(m|z',1,w) p(z'|0,w)
    q: [Vec<f64>; 7],  // per-variant inner integral at each w
    s1p_bz: Vec<f64>,  // (w,z)
    s1p_c: Vec<f64>,   // (w,m)
    s2p_bz: Vec<f64>,  // (w,z)
    s2p_c: Vec<f64>,   // (w,m)
    s3pp_bz: Vec<f64>, // (w,z)
    s3pp_d: Vec<f64>,  // (w,z)
    s3_e: Vec<f64>,    // (w,z)
}

impl AteGradientSet {
    pub fn new(eta: &NuisanceSet) -> Result<AteGradientSet> {
        if eta.card_a != 2 {
            return Err(Error::validation("ATE gradients require binary A"));
        }
        let (cw, cz, cm) = (eta.card_w, eta.card_z, eta.card_m);
        let d = Dims { ca: 2, cz, cm };
        let mut ybar1 = vec![0.0; cw];
        let mut ybar0 = vec![0.0; cw];
        let mut mu1 = vec![0.0; cw * cm];
        let mut nu = vec![0.0; cw * cm];
        let mut q: [Vec<f64>; 7] = Default::default();
        for qi in &mut q {
            *qi = vec![0.0; cw];
        }
        let mut s1p_bz = vec![0.0; cw * cz];
        let mut s1p_c = vec![0.0; cw * cm];
        let mut s2p_bz = vec![0.0; cw * cz];
        let mut s2p_c = vec![0.0; cw * cm];
        let mut s3pp_bz = vec![0.0; cw * cz];
        let mut s3pp_d = vec![0.0; cw * cz];
        let mut s3_e = vec![0.0; cw * cz];

        for w in 0..cw {
            ybar1[w] = eta.y_bar_aw(1, w)?;
            ybar0[w] = eta.y_bar_aw(0, w)?;
            for m in 0..cm {
                mu1[d.wm(w, m)] = eta.p_m_marg(m, 1, w)?;
                let mut s = 0.0;
                for zp in 0..cz {
                    let pz0 = eta.p_z(zp, 0, w)?;
                    if pz0 == 0.0 {
                        continue;
                    }
                    s += pz0 * eta.p_m(m, zp, 1, w)?;
                }
                nu[d.wm(w, m)] = s;
            }
            for m in 0..cm {
                let mut c1 = 0.0;
                let mut c0 = 0.0;
                for z in 0..cz {
                    c1 += eta.p_z(z, 1, w)? * eta.m_hat(m, z, 0, w)?;
                    c0 += eta.p_z(z, 0, w)? * eta.m_hat(m, z, 0, w)?;
                }
                s1p_c[d.wm(w, m)] = c1;
                s2p_c[d.wm(w, m)] = c0;
            }
            for z in 0..cz {
                let mut bz1 = 0.0;
                let mut bz3 = 0.0;
                let mut e = 0.0;
                for m in 0..cm {
                    let mh = eta.m_hat(m, z, 0, w)?;
                    bz1 += mu1[d.wm(w, m)] * mh;
                    bz3 += nu[d.wm(w, m)] * mh;
                    e += eta.p_m(m, z, 1, w)? * mh;
                }
                s1p_bz[d.wz(w, z)] = bz1;
                s2p_bz[d.wz(w, z)] = bz1;
                s3_e[d.wz(w, z)] = e;
                s3pp_bz[d.wz(w, z)] = bz3;
                let mut dd = 0.0;
                for m in 0..cm {
                    dd += eta.p_m(m, z, 1, w)? * s2p_c[d.wm(w, m)];
                }
                s3pp_d[d.wz(w, z)] = dd;
            }
            q[0][w] = ybar1[w];
            q[6][w] = ybar0[w];
            for z in 0..cz {
                let pz1 = eta.p_z(z, 1, w)?;
                let pz0 = eta.p_z(z, 0, w)?;
                for m in 0..cm {
                    let mh = eta.m_hat(m, z, 0, w)?;
                    q[1][w] += pz1 * eta.p_m(m, z, 1, w)? * mh;
                    q[2][w] += pz1 * mu1[d.wm(w, m)] * mh;
                    q[3][w] += pz0 * mu1[d.wm(w, m)] * mh;
                    q[4][w] += pz0 * nu[d.wm(w, m)] * mh;
                    q[5][w] += pz0 * eta.p_m(m, z, 1, w)? * mh;
                }
            }
        }
        Ok(AteGradientSet {
            eta: eta.clone(),
            d,
            ybar1,
            ybar0,
            mu1,
            nu,
            q,
            s1p_bz,
            s1p_c,
            s2p_bz,
            s2p_c,
            s3pp_bz,
            s3pp_d,
            s3_e,
        })
    }

    fn guard(&self, p: f64, cell: &str, x: &Obs) -> Result<f64> {
        if p <= 0.0 || p + 1e-12 < self.eta.epsilon {
            return Err(Error::NumericGuard {
                cell: format!(
                    "{cell} = {p:.3e} below floor {} at (w={}, a={}, z={}, m={})",
                    self.eta.epsilon, x.w, x.a, x.z, x.m
                ),
            });
        }
        Ok(p)
    }

    fn index(v: AteMean) -> usize {
        AteMean::ALL.iter().position(|x| *x == v).unwrap()
    }

    /// Identified mean under the fitted nuisances against a `W` marginal.
    pub fn plug_in(&self, v: AteMean, wm: &[f64]) -> f64 {
        self.q[Self::index(v)]
            .iter()
            .zip(wm)
            .map(|(q, p)| p * q)
            .sum()
    }

    /// Uncentered gradient of one counterfactual-mean functional.
    pub fn uncentered(&self, v: AteMean, x: &Obs) -> Result<f64> {
        let d = self.d;
        let eta = &self.eta;
        let (w, a, z, m) = (x.w, x.a, x.z, x.m);
        let r1 = self.guard(eta.p_a(1, w)?, "p(a=1|w)", x)?;
        let r0 = self.guard(eta.p_a(0, w)?, "p(a=0|w)", x)?;
        let q = self.q[Self::index(v)][w];
        match v {
            AteMean::S0 => {
                if a == 1 {
                    Ok((x.y - self.ybar1[w]) / r1 + self.ybar1[w])
                } else {
                    Ok(self.ybar1[w])
                }
            }
            AteMean::S4 => {
                if a == 0 {
                    Ok((x.y - self.ybar0[w]) / r0 + self.ybar0[w])
                } else {
                    Ok(self.ybar0[w])
                }
            }
            AteMean::S1 => {
                if a == 0 {
                    let num = eta.p_z(z, 1, w)? * eta.p_m(m, z, 1, w)?;
                    let den = self.guard(eta.p_z(z, 0, w)?, "p(z|0,w)", x)?
                        * self.guard(eta.p_m(m, z, 0, w)?, "p(m|z,0,w)", x)?;
                    Ok(q + num / den / r0 * (x.y - eta.m_hat(m, z, 0, w)?))
                } else {
                    Ok(q + (eta.m_hat(m, z, 0, w)? - q) / r1)
                }
            }
            AteMean::S1p => {
                if a == 0 {
                    let num = eta.p_z(z, 1, w)? * self.mu1[d.wm(w, m)];
                    let den = self.guard(eta.p_z(z, 0, w)?, "p(z|0,w)", x)?
                        * self.guard(eta.p_m(m, z, 0, w)?, "p(m|z,0,w)", x)?;
                    Ok(q + num / den / r0 * (x.y - eta.m_hat(m, z, 0, w)?))
                } else {
                    Ok(q + (self.s1p_bz[d.wz(w, z)] + self.s1p_c[d.wm(w, m)] - 2.0 * q) / r1)
                }
            }
            AteMean::S2p => {
                if a == 0 {
                    let den = self.guard(eta.p_m(m, z, 0, w)?, "p(m|z,0,w)", x)?;
                    Ok(
                        q + self.mu1[d.wm(w, m)] / den / r0 * (x.y - eta.m_hat(m, z, 0, w)?)
                            + (self.s2p_bz[d.wz(w, z)] - q) / r0,
                    )
                } else {
                    Ok(q + (self.s2p_c[d.wm(w, m)] - q) / r1)
                }
            }
            AteMean::S3pp => {
                if a == 0 {
                    let den = self.guard(eta.p_m(m, z, 0, w)?, "p(m|z,0,w)", x)?;
                    Ok(
                        q + self.nu[d.wm(w, m)] / den / r0 * (x.y - eta.m_hat(m, z, 0, w)?)
                            + (self.s3pp_bz[d.wz(w, z)] + self.s3pp_d[d.wz(w, z)] - 2.0 * q) / r0,
                    )
                } else {
                    let ratio = eta.p_z(z, 0, w)? / self.guard(eta.p_z(z, 1, w)?, "p(z|1,w)", x)?;
                    Ok(q + ratio * (self.s2p_c[d.wm(w, m)] - self.s3pp_d[d.wz(w, z)]) / r1)
                }
            }
            AteMean::S3 => {
                if a == 0 {
                    let den = self.guard(eta.p_m(m, z, 0, w)?, "p(m|z,0,w)", x)?;
                    Ok(
                        q + eta.p_m(m, z, 1, w)? / den / r0 * (x.y - eta.m_hat(m, z, 0, w)?)
                            + (self.s3_e[d.wz(w, z)] - q) / r0,
                    )
                } else {
                    let ratio = eta.p_z(z, 0, w)? / self.guard(eta.p_z(z, 1, w)?, "p(z|1,w)", x)?;
                    Ok(q + ratio * (eta.m_hat(m, z, 0, w)? - self.s3_e[d.wz(w, z)]) / r1)
                }
            }
        }
    }
}

/// Exact `E_P[phibar_v(X; eta)]` of an ATE-mean gradient over a joint law.
pub fn expected_ate_uncentered(law: &JointLaw, ags: &AteGradientSet, v: AteMean) -> Result<f64> {
    let mut s = 0.0;
    for w in 0..law.card_w {
        for a in 0..law.card_a {
            for z in 0..law.card_z {
                for m in 0..law.card_m {
                    let c = law.cell(w, a, z, m);
                    if law.prob[c] == 0.0 {
                        continue;
                    }
                    let x = Obs {
                        w,
                        a,
                        z,
                        m,
                        y: law.y_mean[c],
                    };
                    s += law.prob[c] * ags.uncentered(v, &x)?;
                }
            }
        }
    }
    Ok(s)
}
