//! Nuisance parameters `eta = (m_hat, p_m, p_z, p_a)` and how to get them.
//!
//! `m_hat` is the outcome regression `E[Y | M, Z, A, W]`; the three pmf
//! tables are the conditionals of `M`, `Z`, `A` given their pasts. The set
//! can be fitted from data (Laplace smoothing plus a truncation floor so
//! every conditional probability stays in `[eps, 1]`), read exactly off an
//! enumerated joint law, or moved along a line between two sets for
//! expansion diagnostics.
//!
//! Cells whose conditioning event has zero mass carry an explicit
//! "undefined" marker rather than a 0/0 placeholder; consumers must decide
//! what overlap failure means for them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::CounterRng;
use crate::scm::{Dataset, JointLaw};

/// Conditional tables plus the outcome regression. Immutable once built.
#[derive(Debug, Clone)]
pub struct NuisanceSet {
    pub card_w: usize,
    pub card_a: usize,
    pub card_z: usize,
    pub card_m: usize,
    /// `E[Y | m, z, a, w]`, indexed `(w, a, z, m)`.
    m_hat: Vec<f64>,
    m_hat_defined: Vec<bool>,
    /// `p(m | z, a, w)`, indexed `(w, a, z, m)`; one defined flag per column `(w, a, z)`.
    p_m: Vec<f64>,
    p_m_defined: Vec<bool>,
    /// `p(z | a, w)`, indexed `(w, a, z)`; defined per `(w, a)`.
    p_z: Vec<f64>,
    p_z_defined: Vec<bool>,
    /// `p(a | w)`, indexed `(w, a)`; defined per `w`.
    p_a: Vec<f64>,
    p_a_defined: Vec<bool>,
    /// Truncation floor the pmf tables respect (0 for exact tables).
    pub epsilon: f64,
}

impl NuisanceSet {
    #[inline]
    fn i_wazm(&self, w: usize, a: usize, z: usize, m: usize) -> usize {
        ((w * self.card_a + a) * self.card_z + z) * self.card_m + m
    }

    #[inline]
    fn i_waz(&self, w: usize, a: usize, z: usize) -> usize {
        (w * self.card_a + a) * self.card_z + z
    }

    #[inline]
    fn i_wa(&self, w: usize, a: usize) -> usize {
        w * self.card_a + a
    }

    /// `E[Y | m, z, a, w]`, or an overlap error naming the cell.
    #[inline]
    pub fn m_hat(&self, m: usize, z: usize, a: usize, w: usize) -> Result<f64> {
        let i = self.i_wazm(w, a, z, m);
        if self.m_hat_defined[i] {
            Ok(self.m_hat[i])
        } else {
            Err(Error::Identification {
                cell: format!("m_hat(m={m} | z={z}, a={a}, w={w})"),
            })
        }
    }

    /// `p(m | z, a, w)`.
    #[inline]
    pub fn p_m(&self, m: usize, z: usize, a: usize, w: usize) -> Result<f64> {
        if self.p_m_defined[self.i_waz(w, a, z)] {
            Ok(self.p_m[self.i_wazm(w, a, z, m)])
        } else {
            Err(Error::Identification {
                cell: format!("p_m(. | z={z}, a={a}, w={w})"),
            })
        }
    }

    /// `p(z | a, w)`.
    #[inline]
    pub fn p_z(&self, z: usize, a: usize, w: usize) -> Result<f64> {
        if self.p_z_defined[self.i_wa(w, a)] {
            Ok(self.p_z[self.i_waz(w, a, z)])
        } else {
            Err(Error::Identification {
                cell: format!("p_z(. | a={a}, w={w})"),
            })
        }
    }

    /// `p(a | w)`.
    #[inline]
    pub fn p_a(&self, a: usize, w: usize) -> Result<f64> {
        if self.p_a_defined[w] {
            Ok(self.p_a[self.i_wa(w, a)])
        } else {
            Err(Error::Identification {
                cell: format!("p_a(. | w={w})"),
            })
        }
    }

    /// Implied `p(m | a, w) = sum_z p(m | z, a, w) p(z | a, w)`.
    pub fn p_m_marg(&self, m: usize, a: usize, w: usize) -> Result<f64> {
        let mut s = 0.0;
        for z in 0..self.card_z {
            let pz = self.p_z(z, a, w)?;
            if pz == 0.0 {
                continue;
            }
            s += pz * self.p_m(m, z, a, w)?;
        }
        Ok(s)
    }

    /// Implied `E[Y | a, w]`.
    pub fn y_bar_aw(&self, a: usize, w: usize) -> Result<f64> {
        let mut s = 0.0;
        for z in 0..self.card_z {
            let pz = self.p_z(z, a, w)?;
            if pz == 0.0 {
                continue;
            }
            for m in 0..self.card_m {
                let pm = self.p_m(m, z, a, w)?;
                if pm == 0.0 {
                    continue;
                }
                s += pz * pm * self.m_hat(m, z, a, w)?;
            }
        }
        Ok(s)
    }

    /// Implied `E[Y | w]`.
    pub fn y_bar_w(&self, w: usize) -> Result<f64> {
        let mut s = 0.0;
        for a in 0..self.card_a {
            let pa = self.p_a(a, w)?;
            if pa == 0.0 {
                continue;
            }
            s += pa * self.y_bar_aw(a, w)?;
        }
        Ok(s)
    }

    /// Implied `E[A | w]` using codes as numeric values.
    pub fn a_bar_w(&self, w: usize) -> Result<f64> {
        let mut s = 0.0;
        for a in 0..self.card_a {
            s += a as f64 * self.p_a(a, w)?;
        }
        Ok(s)
    }

    /// Exact nuisances read off a joint law. Zero-mass conditioning events
    /// are left undefined. `epsilon` is 0: nothing is truncated.
    pub fn exact(law: &JointLaw) -> NuisanceSet {
        let (cw, ca, cz, cm) = (law.card_w, law.card_a, law.card_z, law.card_m);
        let mut eta = NuisanceSet::unfilled(cw, ca, cz, cm, 0.0);
        for w in 0..cw {
            let pw = law.p_w(w);
            if pw > 0.0 {
                eta.p_a_defined[w] = true;
                for a in 0..ca {
                    let i = eta.i_wa(w, a);
                    eta.p_a[i] = law.p_aw(a, w) / pw;
                }
            }
            for a in 0..ca {
                let paw = law.p_aw(a, w);
                if paw > 0.0 {
                    let i = eta.i_wa(w, a);
                    eta.p_z_defined[i] = true;
                    for z in 0..cz {
                        let i = eta.i_waz(w, a, z);
                        eta.p_z[i] = law.p_zaw(z, a, w) / paw;
                    }
                }
                for z in 0..cz {
                    let pzaw = law.p_zaw(z, a, w);
                    if pzaw > 0.0 {
                        let i = eta.i_waz(w, a, z);
                        eta.p_m_defined[i] = true;
                        for m in 0..cm {
                            let i = eta.i_wazm(w, a, z, m);
                            eta.p_m[i] = law.prob[law.cell(w, a, z, m)] / pzaw;
                        }
                    }
                    for m in 0..cm {
                        let c = law.cell(w, a, z, m);
                        if law.prob[c] > 0.0 {
                            let i = eta.i_wazm(w, a, z, m);
                            eta.m_hat[i] = law.y_mean[c];
                            eta.m_hat_defined[i] = true;
                        }
                    }
                }
            }
        }
        eta
    }

    fn unfilled(cw: usize, ca: usize, cz: usize, cm: usize, epsilon: f64) -> NuisanceSet {
        NuisanceSet {
            card_w: cw,
            card_a: ca,
            card_z: cz,
            card_m: cm,
            m_hat: vec![0.0; cw * ca * cz * cm],
            m_hat_defined: vec![false; cw * ca * cz * cm],
            p_m: vec![0.0; cw * ca * cz * cm],
            p_m_defined: vec![false; cw * ca * cz],
            p_z: vec![0.0; cw * ca * cz],
            p_z_defined: vec![false; cw * ca],
            p_a: vec![0.0; cw * ca],
            p_a_defined: vec![false; cw],
            epsilon,
        }
    }

    /// Build directly from tables that are total (every cell defined).
    #[allow(clippy::too_many_arguments)]
    pub fn from_tables(
        card_w: usize,
        card_a: usize,
        card_z: usize,
        card_m: usize,
        m_hat: Vec<f64>,
        p_m: Vec<f64>,
        p_z: Vec<f64>,
        p_a: Vec<f64>,
        epsilon: f64,
    ) -> NuisanceSet {
        let n_cells = card_w * card_a * card_z * card_m;
        assert_eq!(m_hat.len(), n_cells);
        assert_eq!(p_m.len(), n_cells);
        assert_eq!(p_z.len(), card_w * card_a * card_z);
        assert_eq!(p_a.len(), card_w * card_a);
        NuisanceSet {
            card_w,
            card_a,
            card_z,
            card_m,
            m_hat_defined: vec![true; n_cells],
            p_m_defined: vec![true; card_w * card_a * card_z],
            p_z_defined: vec![true; card_w * card_a],
            p_a_defined: vec![true; card_w],
            m_hat,
            p_m,
            p_z,
            p_a,
            epsilon,
        }
    }

    /// True when every cell of every table is defined.
    pub fn fully_defined(&self) -> bool {
        self.m_hat_defined.iter().all(|d| *d)
            && self.p_m_defined.iter().all(|d| *d)
            && self.p_z_defined.iter().all(|d| *d)
            && self.p_a_defined.iter().all(|d| *d)
    }

    /// Largest absolute difference across all tables, for perturbation tests.
    pub fn sup_distance(&self, other: &NuisanceSet) -> f64 {
        let mut d = 0.0f64;
        for (x, y) in self.m_hat.iter().zip(&other.m_hat) {
            d = d.max((x - y).abs());
        }
        for (x, y) in self.p_m.iter().zip(&other.p_m) {
            d = d.max((x - y).abs());
        }
        for (x, y) in self.p_z.iter().zip(&other.p_z) {
            d = d.max((x - y).abs());
        }
        for (x, y) in self.p_a.iter().zip(&other.p_a) {
            d = d.max((x - y).abs());
        }
        d
    }
}

/// Marginal distribution of `W`, usually empirical.
#[derive(Debug, Clone)]
pub struct WMarginal {
    pub p: Vec<f64>,
}

impl WMarginal {
    pub fn new(p: Vec<f64>) -> Result<WMarginal> {
        let sum: f64 = p.iter().sum();
        if p.iter().any(|x| *x < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::validation(format!("W marginal sums to {sum}")));
        }
        Ok(WMarginal { p })
    }

    pub fn exact(law: &JointLaw) -> WMarginal {
        WMarginal {
            p: (0..law.card_w).map(|w| law.p_w(w)).collect(),
        }
    }

    pub fn empirical(ws: &[usize], card_w: usize) -> WMarginal {
        let mut p = vec![0.0; card_w];
        for &w in ws {
            p[w] += 1.0;
        }
        let n = ws.len() as f64;
        for x in &mut p {
            *x /= n;
        }
        WMarginal { p }
    }
}

/// Assignment of rows to cross-fitting folds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldPlan {
    pub v: usize,
    /// `assignment[i]` is the fold of row `i`, in `0..v`.
    pub assignment: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn prediction_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|i| self.assignment[*i] == fold)
            .collect()
    }

    pub fn training_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|i| self.assignment[*i] != fold)
            .collect()
    }
}

/// Random balanced partition of `0..n` into `v` folds; deterministic in the seed.
pub fn make_folds(n: usize, v: usize, seed: u64) -> Result<FoldPlan> {
    if v < 2 || v > n {
        return Err(Error::validation(format!(
            "fold count {v} out of range for n={n}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = CounterRng::new(seed, 0);
    rng.shuffle(&mut perm);
    let mut assignment = vec![0usize; n];
    for (pos, &row) in perm.iter().enumerate() {
        assignment[row] = pos % v;
    }
    Ok(FoldPlan {
        v,
        assignment,
        seed,
    })
}

/// Outcome-regression flavor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regression {
    /// Per-cell mean of `y`, empty cells falling back to the coarsest
    /// nonempty parent cell (dropping `m`, then `z`, then `a`, then `w`).
    CellMean,
    /// Ridge on one-hot codes of `(w, a, z, m)` plus all pairwise interactions.
    RidgeOnehot { lambda: f64 },
}

/// Smoothing and truncation settings for [`fit_nuisance`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NuisanceConfig {
    /// Laplace pseudo-count added to every pmf cell.
    pub alpha: f64,
    /// Truncation floor; every fitted conditional probability ends in `[epsilon, 1]`.
    pub epsilon: f64,
    pub regression: Regression,
}

impl Default for NuisanceConfig {
    fn default() -> Self {
        NuisanceConfig {
            alpha: 0.5,
            epsilon: 1e-3,
            regression: Regression::CellMean,
        }
    }
}

impl NuisanceConfig {
    pub fn validate(&self, max_card: usize) -> Result<()> {
        if self.alpha.is_nan() || self.alpha < 0.0 {
            return Err(Error::validation("alpha must be nonnegative"));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 || self.epsilon * max_card as f64 > 1.0 {
            return Err(Error::validation(format!(
                "epsilon {} outside (0, 1/{max_card}]",
                self.epsilon
            )));
        }
        if let Regression::RidgeOnehot { lambda } = self.regression {
            if lambda.is_nan() || lambda <= 0.0 {
                return Err(Error::validation("ridge lambda must be positive"));
            }
        }
        Ok(())
    }
}

/// Clamp a pmf so every entry is at least `eps` while keeping the total at 1.
/// Entries already above the floor are scaled down proportionally.
fn floor_pmf(p: &mut [f64], eps: f64) {
    let k = p.len();
    if eps == 0.0 || k == 0 {
        return;
    }
    debug_assert!(eps * k as f64 <= 1.0 + 1e-12);
    let mut clamped = vec![false; k];
    loop {
        let mut newly = false;
        for i in 0..k {
            if !clamped[i] && p[i] < eps {
                clamped[i] = true;
                newly = true;
            }
        }
        let n_clamped = clamped.iter().filter(|c| **c).count();
        let free_mass: f64 = (0..k).filter(|i| !clamped[*i]).map(|i| p[i]).sum();
        let target = 1.0 - eps * n_clamped as f64;
        for i in 0..k {
            if clamped[i] {
                p[i] = eps;
            } else if free_mass > 0.0 {
                p[i] *= target / free_mass;
            } else {
                p[i] = 1.0 / k as f64; // degenerate: uniform
            }
        }
        if !newly {
            break;
        }
    }
}

/// Estimate all four nuisance components from a training set.
///
/// pmfs are `(count + alpha) / (total + alpha * card)`, floored at
/// `epsilon` and renormalized; the outcome regression follows
/// `cfg.regression`. Deterministic given `(train, cfg)`.
pub fn fit_nuisance(train: &Dataset, cfg: &NuisanceConfig) -> Result<NuisanceSet> {
    train.validate()?;
    let (cw, ca, cz, cm) = (train.card_w, train.card_a, train.card_z, train.card_m);
    cfg.validate(cw.max(ca).max(cz).max(cm))?;

    let mut n_w = vec![0.0f64; cw];
    let mut n_wa = vec![0.0f64; cw * ca];
    let mut n_waz = vec![0.0f64; cw * ca * cz];
    let mut n_wazm = vec![0.0f64; cw * ca * cz * cm];
    let mut s_wazm = vec![0.0f64; cw * ca * cz * cm];
    let mut s_waz = vec![0.0f64; cw * ca * cz];
    let mut s_wa = vec![0.0f64; cw * ca];
    let mut s_w = vec![0.0f64; cw];
    let mut s_all = 0.0f64;

    for i in 0..train.len() {
        let (w, a, z, m, y) = (train.w[i], train.a[i], train.z[i], train.m[i], train.y[i]);
        let iwa = w * ca + a;
        let iwaz = iwa * cz + z;
        let iwazm = iwaz * cm + m;
        n_w[w] += 1.0;
        n_wa[iwa] += 1.0;
        n_waz[iwaz] += 1.0;
        n_wazm[iwazm] += 1.0;
        s_wazm[iwazm] += y;
        s_waz[iwaz] += y;
        s_wa[iwa] += y;
        s_w[w] += y;
        s_all += y;
    }
    let n = train.len() as f64;

    let smooth = |count: f64, total: f64, card: usize| -> f64 {
        let denom = total + cfg.alpha * card as f64;
        if denom > 0.0 {
            (count + cfg.alpha) / denom
        } else {
            1.0 / card as f64
        }
    };

    let mut p_a = vec![0.0f64; cw * ca];
    for w in 0..cw {
        let col: Vec<f64> = (0..ca)
            .map(|a| smooth(n_wa[w * ca + a], n_w[w], ca))
            .collect();
        let mut col = col;
        floor_pmf(&mut col, cfg.epsilon);
        p_a[w * ca..(w + 1) * ca].copy_from_slice(&col);
    }
    let mut p_z = vec![0.0f64; cw * ca * cz];
    for iwa in 0..cw * ca {
        let mut col: Vec<f64> = (0..cz)
            .map(|z| smooth(n_waz[iwa * cz + z], n_wa[iwa], cz))
            .collect();
        floor_pmf(&mut col, cfg.epsilon);
        p_z[iwa * cz..(iwa + 1) * cz].copy_from_slice(&col);
    }
    let mut p_m = vec![0.0f64; cw * ca * cz * cm];
    for iwaz in 0..cw * ca * cz {
        let mut col: Vec<f64> = (0..cm)
            .map(|m| smooth(n_wazm[iwaz * cm + m], n_waz[iwaz], cm))
            .collect();
        floor_pmf(&mut col, cfg.epsilon);
        p_m[iwaz * cm..(iwaz + 1) * cm].copy_from_slice(&col);
    }

    let m_hat = match cfg.regression {
        Regression::CellMean => {
            let mut mh = vec![0.0f64; cw * ca * cz * cm];
            for w in 0..cw {
                for a in 0..ca {
                    let iwa = w * ca + a;
                    for z in 0..cz {
                        let iwaz = iwa * cz + z;
                        for m in 0..cm {
                            let iwazm = iwaz * cm + m;
                            mh[iwazm] = if n_wazm[iwazm] > 0.0 {
                                s_wazm[iwazm] / n_wazm[iwazm]
                            } else if n_waz[iwaz] > 0.0 {
                                s_waz[iwaz] / n_waz[iwaz]
                            } else if n_wa[iwa] > 0.0 {
                                s_wa[iwa] / n_wa[iwa]
                            } else if n_w[w] > 0.0 {
                                s_w[w] / n_w[w]
                            } else {
                                s_all / n
                            };
                        }
                    }
                }
            }
            mh
        }
        Regression::RidgeOnehot { lambda } => ridge_onehot(train, lambda),
    };

    Ok(NuisanceSet::from_tables(
        cw,
        ca,
        cz,
        cm,
        m_hat,
        p_m,
        p_z,
        p_a,
        cfg.epsilon,
    ))
}

/// Ridge regression of `y` on one-hot main effects and all pairwise
/// interaction one-hots, predicted back onto the full `(w, a, z, m)` grid.
fn ridge_onehot(train: &Dataset, lambda: f64) -> Vec<f64> {
    let (cw, ca, cz, cm) = (train.card_w, train.card_a, train.card_z, train.card_m);
    let cards = [cw, ca, cz, cm];

    // Feature layout: intercept, 4 main-effect blocks, 6 interaction blocks.
    let mut offsets = [0usize; 11];
    let mut d = 1usize;
    for (b, c) in cards.iter().enumerate() {
        offsets[b] = d;
        d += c;
    }
    let pairs: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
    for (b, (i, j)) in pairs.iter().enumerate() {
        offsets[4 + b] = d;
        d += cards[*i] * cards[*j];
    }

    let features = |codes: [usize; 4]| -> Vec<usize> {
        let mut f = Vec::with_capacity(11);
        f.push(0);
        for b in 0..4 {
            f.push(offsets[b] + codes[b]);
        }
        for (b, (i, j)) in pairs.iter().enumerate() {
            f.push(offsets[4 + b] + codes[*i] * cards[*j] + codes[*j]);
        }
        f
    };

    let mut xtx = vec![0.0f64; d * d];
    let mut xty = vec![0.0f64; d];
    for r in 0..train.len() {
        let f = features([train.w[r], train.a[r], train.z[r], train.m[r]]);
        for &i in &f {
            xty[i] += train.y[r];
            for &j in &f {
                xtx[i * d + j] += 1.0;
            }
        }
    }
    for i in 0..d {
        xtx[i * d + i] += lambda;
    }

    let beta = cholesky_solve(&mut xtx, &xty, d);

    let mut mh = vec![0.0f64; cw * ca * cz * cm];
    for w in 0..cw {
        for a in 0..ca {
            for z in 0..cz {
                for m in 0..cm {
                    let f = features([w, a, z, m]);
                    let pred: f64 = f.iter().map(|&i| beta[i]).sum();
                    mh[((w * ca + a) * cz + z) * cm + m] = pred;
                }
            }
        }
    }
    mh
}

/// Solve `A x = b` for symmetric positive-definite `A` (overwrites `a`).
fn cholesky_solve(a: &mut [f64], b: &[f64], d: usize) -> Vec<f64> {
    // In-place Cholesky, lower triangle.
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= a[i * d + k] * a[j * d + k];
            }
            if i == j {
                a[i * d + i] = s.max(1e-12).sqrt();
            } else {
                a[i * d + j] = s / a[j * d + j];
            }
        }
    }
    let mut x = b.to_vec();
    for i in 0..d {
        for k in 0..i {
            x[i] -= a[i * d + k] * x[k];
        }
        x[i] /= a[i * d + i];
    }
    for i in (0..d).rev() {
        for k in i + 1..d {
            x[i] -= a[k * d + i] * x[k];
        }
        x[i] /= a[i * d + i];
    }
    x
}

/// Convex move of every table from `eta` toward `direction` by `eps`,
/// pmf columns renormalized. Both sets must share cardinalities.
pub fn perturb(eta: &NuisanceSet, direction: &NuisanceSet, eps: f64) -> Result<NuisanceSet> {
    perturb_inner(eta, direction, eps, true)
}

/// Move only the outcome regression, keeping all pmfs from `eta`. Used to
/// probe the mixed-bias structure of the expansion remainder.
pub fn perturb_outcome_only(
    eta: &NuisanceSet,
    direction: &NuisanceSet,
    eps: f64,
) -> Result<NuisanceSet> {
    perturb_inner(eta, direction, eps, false)
}

fn perturb_inner(
    eta: &NuisanceSet,
    direction: &NuisanceSet,
    eps: f64,
    move_pmfs: bool,
) -> Result<NuisanceSet> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::validation(format!("eps {eps} outside [0, 1]")));
    }
    if eps == 0.0 {
        return Ok(eta.clone());
    }
    if (eta.card_w, eta.card_a, eta.card_z, eta.card_m)
        != (
            direction.card_w,
            direction.card_a,
            direction.card_z,
            direction.card_m,
        )
    {
        return Err(Error::validation("perturb: cardinality mismatch"));
    }
    if !eta.fully_defined() || !direction.fully_defined() {
        return Err(Error::validation(
            "perturb requires fully defined nuisances",
        ));
    }
    let mix = |x: f64, y: f64| (1.0 - eps) * x + eps * y;
    let mut out = eta.clone();
    for i in 0..out.m_hat.len() {
        out.m_hat[i] = mix(eta.m_hat[i], direction.m_hat[i]);
    }
    if move_pmfs {
        for i in 0..out.p_m.len() {
            out.p_m[i] = mix(eta.p_m[i], direction.p_m[i]);
        }
        for i in 0..out.p_z.len() {
            out.p_z[i] = mix(eta.p_z[i], direction.p_z[i]);
        }
        for i in 0..out.p_a.len() {
            out.p_a[i] = mix(eta.p_a[i], direction.p_a[i]);
        }
        let cm = out.card_m;
        for col in 0..out.p_m.len() / cm {
            renorm(&mut out.p_m[col * cm..(col + 1) * cm]);
        }
        let cz = out.card_z;
        for col in 0..out.p_z.len() / cz {
            renorm(&mut out.p_z[col * cz..(col + 1) * cz]);
        }
        let ca = out.card_a;
        for col in 0..out.p_a.len() / ca {
            renorm(&mut out.p_a[col * ca..(col + 1) * ca]);
        }
        out.epsilon = eta.epsilon.min(direction.epsilon);
    }
    Ok(out)
}

fn renorm(p: &mut [f64]) {
    let s: f64 = p.iter().sum();
    if s > 0.0 {
        for x in p {
            *x /= s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;

    #[test]
    fn folds_balanced_and_deterministic() {
        let f = make_folds(10, 5, 1).unwrap();
        for v in 0..5 {
            assert_eq!(f.prediction_rows(v).len(), 2);
        }
        let f2 = make_folds(7, 3, 1).unwrap();
        let mut sizes: Vec<usize> = (0..3).map(|v| f2.prediction_rows(v).len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2, 3]);
        let f3 = make_folds(7, 3, 1).unwrap();
        assert_eq!(f2.assignment, f3.assignment);
        assert!(make_folds(5, 1, 0).is_err());
        assert!(make_folds(5, 6, 0).is_err());
    }

    #[test]
    fn exact_nuisances_refactor_the_joint() {
        let law = builtin::scm_t1().enumerate_joint().unwrap();
        let eta = NuisanceSet::exact(&law);
        for w in 0..2 {
            for a in 0..2 {
                for z in 0..2 {
                    for m in 0..2 {
                        let rebuilt = law.p_w(w)
                            * eta.p_a(a, w).unwrap()
                            * eta.p_z(z, a, w).unwrap()
                            * eta.p_m(m, z, a, w).unwrap();
                        assert!((rebuilt - law.prob[law.cell(w, a, z, m)]).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn undefined_cells_flagged() {
        let law = builtin::scm_t0().enumerate_joint().unwrap();
        let eta = NuisanceSet::exact(&law);
        // T0 has card_z = 1 so p_z is defined, but m_hat at impossible
        // cells must be flagged: every (a, w) is reachable in T0, so build
        // a degenerate law instead by zeroing A=1.
        assert!(eta.p_a(1, 0).is_ok());
        let mut law2 = law.clone();
        let c = law2.cell(0, 1, 0, 0);
        law2.prob[0] += law2.prob[c];
        law2.prob[c] = 0.0;
        let eta2 = NuisanceSet::exact(&law2);
        assert!(eta2.p_z(0, 1, 0).is_err());
        assert!(eta2.m_hat(0, 0, 1, 0).is_err());
    }

    #[test]
    fn smoothing_floor_holds() {
        let scm = builtin::scm_t1();
        let train = scm.sample(1, 5).unwrap();
        let cfg = NuisanceConfig {
            alpha: 1.0,
            ..Default::default()
        };
        let eta = fit_nuisance(&train, &cfg).unwrap();
        for w in 0..2 {
            let mut col_sum = 0.0;
            for a in 0..2 {
                let p = eta.p_a(a, w).unwrap();
                assert!(p >= cfg.epsilon && p <= 1.0);
                col_sum += p;
            }
            assert!((col_sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn floor_pmf_exact_floor() {
        let mut p = vec![0.9995, 0.0005];
        floor_pmf(&mut p, 1e-3);
        assert!((p[1] - 1e-3).abs() < 1e-15);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|x| *x >= 1e-3));
    }

    #[test]
    fn fit_matches_population_frequencies() {
        let scm = builtin::scm_t1();
        let law = scm.enumerate_joint().unwrap();
        let exact = NuisanceSet::exact(&law);
        let train = scm.sample(100_000, 11).unwrap();
        let cfg = NuisanceConfig {
            alpha: 0.5,
            ..Default::default()
        };
        let eta = fit_nuisance(&train, &cfg).unwrap();
        let mut max_err = 0.0f64;
        for w in 0..2 {
            for a in 0..2 {
                max_err = max_err.max((eta.p_a(a, w).unwrap() - exact.p_a(a, w).unwrap()).abs());
                for z in 0..2 {
                    max_err = max_err
                        .max((eta.p_z(z, a, w).unwrap() - exact.p_z(z, a, w).unwrap()).abs());
                    for m in 0..2 {
                        max_err = max_err.max(
                            (eta.p_m(m, z, a, w).unwrap() - exact.p_m(m, z, a, w).unwrap()).abs(),
                        );
                    }
                }
            }
        }
        assert!(max_err < 0.02, "max table error {max_err}");
    }

    #[test]
    fn ridge_close_to_cell_means_at_scale() {
        let scm = builtin::scm_t1();
        let train = scm.sample(20_000, 13).unwrap();
        let cell = fit_nuisance(&train, &NuisanceConfig::default()).unwrap();
        let ridge = fit_nuisance(
            &train,
            &NuisanceConfig {
                regression: Regression::RidgeOnehot { lambda: 1e-6 },
                ..Default::default()
            },
        )
        .unwrap();
        // With pairwise interactions and binary variables the ridge fit can
        // reproduce the additive-in-pairs structure of the truth.
        for w in 0..2 {
            for a in 0..2 {
                for z in 0..2 {
                    for m in 0..2 {
                        let c = cell.m_hat(m, z, a, w).unwrap();
                        let r = ridge.m_hat(m, z, a, w).unwrap();
                        assert!((c - r).abs() < 0.1, "cell {c} ridge {r}");
                    }
                }
            }
        }
    }

    #[test]
    fn perturb_endpoints() {
        let law = builtin::scm_t1().enumerate_joint().unwrap();
        let eta = NuisanceSet::exact(&law);
        let dir = {
            let mut d = eta.clone();
            for i in 0..d.m_hat.len() {
                d.m_hat[i] += 1.0;
            }
            d
        };
        let same = perturb(&eta, &dir, 0.0).unwrap();
        assert_eq!(same.sup_distance(&eta), 0.0);
        let all = perturb(&eta, &dir, 1.0).unwrap();
        assert!(
            (all.m_hat(0, 0, 0, 0).unwrap() - (eta.m_hat(0, 0, 0, 0).unwrap() + 1.0)).abs() < 1e-15
        );
        let mid = perturb(&eta, &dir, 0.1).unwrap();
        assert!(mid.sup_distance(&eta) <= 0.1 + 1e-12);
        assert!(perturb(&eta, &dir, 1.5).is_err());
    }
}
