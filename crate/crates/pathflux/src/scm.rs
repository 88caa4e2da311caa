//! Finite discrete structural causal models over `W -> A -> Z -> M -> Y`.
//!
//! A model is five deterministic tables driven by mutually independent
//! exogenous noise terms with finite support:
//!
//! ```text
//! W = f_w(U_W)          A = f_a(W, U_A)        Z = f_z(A, W, U_Z)
//! M = f_m(Z, A, W, U_M)                        Y = f_y(M, Z, A, W, U_Y)
//! ```
//!
//! `W`, `A`, `Z`, `M` are integer-coded categoricals (a multi-column `W` is
//! flattened to a single code at ingestion); `Y` is real-valued with the
//! finite support induced by the `f_y` table. Everything here is immutable
//! after construction and safe to share across threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::CounterRng;

/// Default ceiling on the exogenous-noise grid visited by enumeration.
pub const DEFAULT_CELL_BUDGET: u128 = 100_000_000;

const PMF_SUM_TOL: f64 = 1e-12;

/// A finite discrete SCM. Structural tables are stored flat; the nested
/// JSON layout documents the argument order (see [`ScmJson`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScmJson", into = "ScmJson")]
pub struct DiscreteScm {
    pub card_w: usize,
    pub card_a: usize,
    pub card_z: usize,
    pub card_m: usize,
    /// Noise pmfs for `U_W, U_A, U_Z, U_M, U_Y`.
    pub noise: [Vec<f64>; 5],
    /// `[u_w] -> w`
    pub f_w: Vec<usize>,
    /// `[w][u_a] -> a`, flattened as `w * |U_A| + u_a`
    pub f_a: Vec<usize>,
    /// `[a][w][u_z] -> z`
    pub f_z: Vec<usize>,
    /// `[z][a][w][u_m] -> m`
    pub f_m: Vec<usize>,
    /// `[m][z][a][w][u_y] -> y`
    pub f_y: Vec<f64>,
}

impl DiscreteScm {
    #[inline]
    pub fn n_u(&self, i: usize) -> usize {
        self.noise[i].len()
    }

    #[inline]
    pub fn eval_w(&self, u: usize) -> usize {
        self.f_w[u]
    }

    #[inline]
    pub fn eval_a(&self, w: usize, u: usize) -> usize {
        self.f_a[w * self.n_u(1) + u]
    }

    #[inline]
    pub fn eval_z(&self, a: usize, w: usize, u: usize) -> usize {
        self.f_z[(a * self.card_w + w) * self.n_u(2) + u]
    }

    #[inline]
    pub fn eval_m(&self, z: usize, a: usize, w: usize, u: usize) -> usize {
        self.f_m[((z * self.card_a + a) * self.card_w + w) * self.n_u(3) + u]
    }

    #[inline]
    pub fn eval_y(&self, m: usize, z: usize, a: usize, w: usize, u: usize) -> f64 {
        self.f_y[(((m * self.card_z + z) * self.card_a + a) * self.card_w + w) * self.n_u(4) + u]
    }

    /// Number of cells in the exogenous-noise grid.
    pub fn noise_grid_size(&self) -> u128 {
        self.noise.iter().map(|p| p.len() as u128).product()
    }

    /// Check every invariant; reports the first violation with its location.
    pub fn validate(&self) -> Result<()> {
        let cards = [self.card_w, self.card_a, self.card_z, self.card_m];
        let names = ["card_w", "card_a", "card_z", "card_m"];
        for (c, n) in cards.iter().zip(names) {
            if *c == 0 {
                return Err(Error::validation(format!("{n} must be positive")));
            }
        }
        let noise_names = ["u_w", "u_a", "u_z", "u_m", "u_y"];
        for (pmf, name) in self.noise.iter().zip(noise_names) {
            if pmf.is_empty() {
                return Err(Error::validation(format!("noise pmf {name} is empty")));
            }
            if let Some(p) = pmf.iter().find(|p| !p.is_finite() || **p < 0.0) {
                return Err(Error::validation(format!(
                    "noise pmf {name} has invalid entry {p}"
                )));
            }
            let sum: f64 = pmf.iter().sum();
            if (sum - 1.0).abs() > PMF_SUM_TOL {
                return Err(Error::validation(format!("pmf {name} sums to {sum}")));
            }
        }
        self.check_table("f_w", &self.f_w, &[self.n_u(0)], self.card_w)?;
        self.check_table("f_a", &self.f_a, &[self.card_w, self.n_u(1)], self.card_a)?;
        self.check_table(
            "f_z",
            &self.f_z,
            &[self.card_a, self.card_w, self.n_u(2)],
            self.card_z,
        )?;
        self.check_table(
            "f_m",
            &self.f_m,
            &[self.card_z, self.card_a, self.card_w, self.n_u(3)],
            self.card_m,
        )?;
        let fy_len: usize = self.card_m * self.card_z * self.card_a * self.card_w * self.n_u(4);
        if self.f_y.len() != fy_len {
            return Err(Error::validation(format!(
                "table f_y not total: expected {fy_len} entries, found {}",
                self.f_y.len()
            )));
        }
        if let Some(v) = self.f_y.iter().find(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "table f_y has non-finite value {v}"
            )));
        }
        Ok(())
    }

    fn check_table(&self, name: &str, tab: &[usize], dims: &[usize], card: usize) -> Result<()> {
        let expect: usize = dims.iter().product();
        if tab.len() != expect {
            return Err(Error::validation(format!(
                "table {name} not total: expected {expect} entries, found {}",
                tab.len()
            )));
        }
        for (i, v) in tab.iter().enumerate() {
            if *v >= card {
                return Err(Error::validation(format!(
                    "table {name} out of range at flat index {i}: {v} >= {card}"
                )));
            }
        }
        Ok(())
    }

    /// Exact pushforward of the noise product measure through the tables.
    pub fn enumerate_joint(&self) -> Result<JointLaw> {
        self.enumerate_joint_with_budget(DEFAULT_CELL_BUDGET)
    }

    pub fn enumerate_joint_with_budget(&self, budget: u128) -> Result<JointLaw> {
        self.validate()?;
        let cells = self.noise_grid_size();
        if cells > budget {
            return Err(Error::Capacity { cells, budget });
        }

        let y_support = y_support(&self.f_y);
        let y_code: Vec<usize> = self
            .f_y
            .iter()
            .map(|v| y_support.partition_point(|s| *s < *v))
            .collect();

        let (cw, ca, cz, cm) = (self.card_w, self.card_a, self.card_z, self.card_m);
        let n_cells = cw * ca * cz * cm;
        let ns = y_support.len();
        let mut y_mass = vec![0.0f64; n_cells * ns];
        let stride_y = |m: usize, z: usize, a: usize, w: usize| {
            (((m * cz + z) * ca + a) * cw + w) * self.n_u(4)
        };

        for (uw, pw) in self.noise[0].iter().enumerate() {
            if *pw == 0.0 {
                continue;
            }
            let w = self.eval_w(uw);
            for (ua, pa) in self.noise[1].iter().enumerate() {
                let p1 = pw * pa;
                if p1 == 0.0 {
                    continue;
                }
                let a = self.eval_a(w, ua);
                for (uz, pz) in self.noise[2].iter().enumerate() {
                    let p2 = p1 * pz;
                    if p2 == 0.0 {
                        continue;
                    }
                    let z = self.eval_z(a, w, uz);
                    for (um, pm) in self.noise[3].iter().enumerate() {
                        let p3 = p2 * pm;
                        if p3 == 0.0 {
                            continue;
                        }
                        let m = self.eval_m(z, a, w, um);
                        let cell = ((w * ca + a) * cz + z) * cm + m;
                        let base = stride_y(m, z, a, w);
                        for (uy, py) in self.noise[4].iter().enumerate() {
                            let p4 = p3 * py;
                            if p4 == 0.0 {
                                continue;
                            }
                            y_mass[cell * ns + y_code[base + uy]] += p4;
                        }
                    }
                }
            }
        }

        let mut prob = vec![0.0f64; n_cells];
        let mut y_mean = vec![0.0f64; n_cells];
        let mut y_cond = vec![0.0f64; n_cells * ns];
        for c in 0..n_cells {
            let row = &y_mass[c * ns..(c + 1) * ns];
            let p: f64 = row.iter().sum();
            prob[c] = p;
            if p > 0.0 {
                let mut mean = 0.0;
                for (s, mass) in row.iter().enumerate() {
                    y_cond[c * ns + s] = mass / p;
                    mean += y_support[s] * mass;
                }
                y_mean[c] = mean / p;
            }
        }

        Ok(JointLaw {
            card_w: cw,
            card_a: ca,
            card_z: cz,
            card_m: cm,
            prob,
            y_mean,
            y_support,
            y_cond,
        })
    }

    /// Draw `n` i.i.d. rows. Row `i` consumes only stream `i` of the seeded
    /// counter RNG, so the result is independent of thread partitioning.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        self.validate()?;
        if n == 0 {
            return Err(Error::validation("sample size must be at least 1"));
        }
        let rows: Vec<(usize, usize, usize, usize, f64)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = CounterRng::new(seed, i as u64);
                let uw = rng.sample_pmf(&self.noise[0]);
                let ua = rng.sample_pmf(&self.noise[1]);
                let uz = rng.sample_pmf(&self.noise[2]);
                let um = rng.sample_pmf(&self.noise[3]);
                let uy = rng.sample_pmf(&self.noise[4]);
                let w = self.eval_w(uw);
                let a = self.eval_a(w, ua);
                let z = self.eval_z(a, w, uz);
                let m = self.eval_m(z, a, w, um);
                let y = self.eval_y(m, z, a, w, uy);
                (w, a, z, m, y)
            })
            .collect();
        let mut ds = Dataset::with_capacity(n, self.card_w, self.card_a, self.card_z, self.card_m);
        for (w, a, z, m, y) in rows {
            ds.push(w, a, z, m, y);
        }
        Ok(ds)
    }
}

fn y_support(values: &[f64]) -> Vec<f64> {
    let mut s: Vec<f64> = values.to_vec();
    s.sort_by(f64::total_cmp);
    s.dedup_by(|a, b| a == b);
    s
}

/// JSON layout for [`DiscreteScm`] files: noise pmfs as arrays, structural
/// tables as nested arrays in the documented argument order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScmJson {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub card_w: usize,
    pub card_a: usize,
    pub card_z: usize,
    pub card_m: usize,
    pub noise: NoiseJson,
    pub f_w: Vec<usize>,
    /// `[w][u_a]`
    pub f_a: Vec<Vec<usize>>,
    /// `[a][w][u_z]`
    pub f_z: Vec<Vec<Vec<usize>>>,
    /// `[z][a][w][u_m]`
    pub f_m: Vec<Vec<Vec<Vec<usize>>>>,
    /// `[m][z][a][w][u_y]`
    pub f_y: Vec<Vec<Vec<Vec<Vec<f64>>>>>,
}

fn default_schema_version() -> u32 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseJson {
    pub u_w: Vec<f64>,
    pub u_a: Vec<f64>,
    pub u_z: Vec<f64>,
    pub u_m: Vec<f64>,
    pub u_y: Vec<f64>,
}

impl TryFrom<ScmJson> for DiscreteScm {
    type Error = Error;

    fn try_from(j: ScmJson) -> Result<Self> {
        fn flat2(t: &[Vec<usize>], d0: usize, d1: usize, name: &str) -> Result<Vec<usize>> {
            if t.len() != d0 || t.iter().any(|r| r.len() != d1) {
                return Err(Error::validation(format!("table {name} not total")));
            }
            Ok(t.iter().flatten().copied().collect())
        }
        let nu = [
            j.noise.u_w.len(),
            j.noise.u_a.len(),
            j.noise.u_z.len(),
            j.noise.u_m.len(),
            j.noise.u_y.len(),
        ];
        let f_a = flat2(&j.f_a, j.card_w, nu[1], "f_a")?;
        let mut f_z = Vec::new();
        if j.f_z.len() != j.card_a {
            return Err(Error::validation("table f_z not total"));
        }
        for per_a in &j.f_z {
            f_z.extend(flat2(per_a, j.card_w, nu[2], "f_z")?);
        }
        let mut f_m = Vec::new();
        if j.f_m.len() != j.card_z {
            return Err(Error::validation("table f_m not total"));
        }
        for per_z in &j.f_m {
            if per_z.len() != j.card_a {
                return Err(Error::validation("table f_m not total"));
            }
            for per_a in per_z {
                f_m.extend(flat2(per_a, j.card_w, nu[3], "f_m")?);
            }
        }
        let mut f_y = Vec::new();
        if j.f_y.len() != j.card_m {
            return Err(Error::validation("table f_y not total"));
        }
        for per_m in &j.f_y {
            if per_m.len() != j.card_z {
                return Err(Error::validation("table f_y not total"));
            }
            for per_z in per_m {
                if per_z.len() != j.card_a {
                    return Err(Error::validation("table f_y not total"));
                }
                for per_a in per_z {
                    if per_a.len() != j.card_w || per_a.iter().any(|r| r.len() != nu[4]) {
                        return Err(Error::validation("table f_y not total"));
                    }
                    for row in per_a {
                        f_y.extend_from_slice(row);
                    }
                }
            }
        }
        Ok(DiscreteScm {
            card_w: j.card_w,
            card_a: j.card_a,
            card_z: j.card_z,
            card_m: j.card_m,
            noise: [
                j.noise.u_w,
                j.noise.u_a,
                j.noise.u_z,
                j.noise.u_m,
                j.noise.u_y,
            ],
            f_w: j.f_w,
            f_a,
            f_z,
            f_m,
            f_y,
        })
    }
}

impl From<DiscreteScm> for ScmJson {
    fn from(s: DiscreteScm) -> Self {
        let nu: Vec<usize> = s.noise.iter().map(|p| p.len()).collect();
        let f_a = (0..s.card_w)
            .map(|w| (0..nu[1]).map(|u| s.eval_a(w, u)).collect())
            .collect();
        let f_z = (0..s.card_a)
            .map(|a| {
                (0..s.card_w)
                    .map(|w| (0..nu[2]).map(|u| s.eval_z(a, w, u)).collect())
                    .collect()
            })
            .collect();
        let f_m = (0..s.card_z)
            .map(|z| {
                (0..s.card_a)
                    .map(|a| {
                        (0..s.card_w)
                            .map(|w| (0..nu[3]).map(|u| s.eval_m(z, a, w, u)).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let f_y = (0..s.card_m)
            .map(|m| {
                (0..s.card_z)
                    .map(|z| {
                        (0..s.card_a)
                            .map(|a| {
                                (0..s.card_w)
                                    .map(|w| (0..nu[4]).map(|u| s.eval_y(m, z, a, w, u)).collect())
                                    .collect()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let [u_w, u_a, u_z, u_m, u_y] = s.noise;
        ScmJson {
            schema_version: 1,
            card_w: s.card_w,
            card_a: s.card_a,
            card_z: s.card_z,
            card_m: s.card_m,
            noise: NoiseJson {
                u_w,
                u_a,
                u_z,
                u_m,
                u_y,
            },
            f_w: s.f_w,
            f_a,
            f_z,
            f_m,
            f_y,
        }
    }
}

/// Exact joint law of `(W, A, Z, M)` plus the conditional law of `Y` per cell.
#[derive(Debug, Clone)]
pub struct JointLaw {
    pub card_w: usize,
    pub card_a: usize,
    pub card_z: usize,
    pub card_m: usize,
    /// `P(W=w, A=a, Z=z, M=m)`, cell-indexed.
    pub prob: Vec<f64>,
    /// `E[Y | cell]`; meaningful only where `prob > 0`.
    pub y_mean: Vec<f64>,
    /// Sorted distinct values `Y` can take.
    pub y_support: Vec<f64>,
    /// Conditional pmf of `Y` given the cell, rows of length `y_support.len()`.
    pub y_cond: Vec<f64>,
}

impl JointLaw {
    #[inline]
    pub fn cell(&self, w: usize, a: usize, z: usize, m: usize) -> usize {
        ((w * self.card_a + a) * self.card_z + z) * self.card_m + m
    }

    pub fn total_mass(&self) -> f64 {
        self.prob.iter().sum()
    }

    /// `P(W=w)`
    pub fn p_w(&self, w: usize) -> f64 {
        let mut s = 0.0;
        for a in 0..self.card_a {
            for z in 0..self.card_z {
                for m in 0..self.card_m {
                    s += self.prob[self.cell(w, a, z, m)];
                }
            }
        }
        s
    }

    /// `P(A=a, W=w)`
    pub fn p_aw(&self, a: usize, w: usize) -> f64 {
        let mut s = 0.0;
        for z in 0..self.card_z {
            for m in 0..self.card_m {
                s += self.prob[self.cell(w, a, z, m)];
            }
        }
        s
    }

    /// `P(Z=z, A=a, W=w)`
    pub fn p_zaw(&self, z: usize, a: usize, w: usize) -> f64 {
        (0..self.card_m)
            .map(|m| self.prob[self.cell(w, a, z, m)])
            .sum()
    }

    /// Conditional pmf of `Y` given `(m, z, a, w)` over `y_support`.
    pub fn y_pmf(&self, m: usize, z: usize, a: usize, w: usize) -> &[f64] {
        let c = self.cell(w, a, z, m);
        let ns = self.y_support.len();
        &self.y_cond[c * ns..(c + 1) * ns]
    }
}

/// Integer-coded observations of `(W, A, Z, M, Y)` in column layout.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub card_w: usize,
    pub card_a: usize,
    pub card_z: usize,
    pub card_m: usize,
    pub w: Vec<usize>,
    pub a: Vec<usize>,
    pub z: Vec<usize>,
    pub m: Vec<usize>,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn with_capacity(n: usize, cw: usize, ca: usize, cz: usize, cm: usize) -> Self {
        Dataset {
            card_w: cw,
            card_a: ca,
            card_z: cz,
            card_m: cm,
            w: Vec::with_capacity(n),
            a: Vec::with_capacity(n),
            z: Vec::with_capacity(n),
            m: Vec::with_capacity(n),
            y: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, w: usize, a: usize, z: usize, m: usize, y: f64) {
        self.w.push(w);
        self.a.push(a);
        self.z.push(z);
        self.m.push(m);
        self.y.push(y);
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::validation("dataset must have at least one row"));
        }
        let cols = [
            ("w", &self.w, self.card_w),
            ("a", &self.a, self.card_a),
            ("z", &self.z, self.card_z),
            ("m", &self.m, self.card_m),
        ];
        for (name, col, card) in cols {
            if let Some(i) = col.iter().position(|v| *v >= card) {
                return Err(Error::validation(format!(
                    "column {name} out of range at row {i}: {} >= {card}",
                    col[i]
                )));
            }
        }
        Ok(())
    }

    /// Subset of rows, preserving order.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        let mut out = Dataset::with_capacity(
            idx.len(),
            self.card_w,
            self.card_a,
            self.card_z,
            self.card_m,
        );
        for &i in idx {
            out.push(self.w[i], self.a[i], self.z[i], self.m[i], self.y[i]);
        }
        out
    }

    /// Serialize as CSV with header `w,a,z,m,y`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("w,a,z,m,y\n");
        for i in 0..self.len() {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                self.w[i], self.a[i], self.z[i], self.m[i], self.y[i]
            ));
        }
        s
    }

    /// Parse CSV with header `w,a,z,m,y`; cardinalities are inferred as
    /// `max code + 1`. Errors carry the 1-based line number.
    pub fn from_csv(text: &str) -> Result<Dataset> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::Csv {
            line: 1,
            msg: "empty file".into(),
        })?;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols != ["w", "a", "z", "m", "y"] {
            return Err(Error::Csv {
                line: 1,
                msg: format!("expected header w,a,z,m,y, found {header:?}"),
            });
        }
        let mut ds = Dataset::with_capacity(0, 0, 0, 0, 0);
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(Error::Csv {
                    line: i + 1,
                    msg: format!("expected 5 fields, found {}", f.len()),
                });
            }
            let code = |s: &str, name: &str| -> Result<usize> {
                s.parse::<usize>().map_err(|_| Error::Csv {
                    line: i + 1,
                    msg: format!("column {name}: invalid code {s:?}"),
                })
            };
            let y: f64 = f[4].parse().map_err(|_| Error::Csv {
                line: i + 1,
                msg: format!("column y: invalid number {:?}", f[4]),
            })?;
            ds.push(
                code(f[0], "w")?,
                code(f[1], "a")?,
                code(f[2], "z")?,
                code(f[3], "m")?,
                y,
            );
        }
        if ds.is_empty() {
            return Err(Error::Csv {
                line: 1,
                msg: "no data rows".into(),
            });
        }
        ds.card_w = ds.w.iter().max().unwrap() + 1;
        ds.card_a = ds.a.iter().max().unwrap() + 1;
        ds.card_z = ds.z.iter().max().unwrap() + 1;
        ds.card_m = ds.m.iter().max().unwrap() + 1;
        Ok(ds)
    }
}

/// Flatten a multi-column categorical `W` into a single code.
///
/// Returns the per-row codes plus the codebook: for each input column, the
/// sorted distinct raw levels, in the order their indices enter the
/// mixed-radix code (first column varies fastest).
pub fn flatten_w_columns(cols: &[Vec<i64>]) -> Result<(Vec<usize>, Vec<Vec<i64>>)> {
    if cols.is_empty() {
        return Err(Error::validation("w_columns must name at least one column"));
    }
    let n = cols[0].len();
    if cols.iter().any(|c| c.len() != n) {
        return Err(Error::validation("w columns have unequal lengths"));
    }
    let mut levels: Vec<Vec<i64>> = Vec::new();
    for col in cols {
        let mut ls = col.clone();
        ls.sort_unstable();
        ls.dedup();
        levels.push(ls);
    }
    let mut codes = vec![0usize; n];
    for i in 0..n {
        let mut code = 0usize;
        let mut stride = 1usize;
        for (col, ls) in cols.iter().zip(&levels) {
            let idx = ls.binary_search(&col[i]).expect("level present");
            code += idx * stride;
            stride *= ls.len();
        }
        codes[i] = code;
    }
    Ok((codes, levels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;

    #[test]
    fn t0_validates_and_enumerates() {
        let scm = builtin::scm_t0();
        scm.validate().unwrap();
        let law = scm.enumerate_joint().unwrap();
        assert!((law.total_mass() - 1.0).abs() < 1e-12);
        // P(A=1) = 0.5 and E[Y | A=1] = 1 for the identity chain.
        let p_a1: f64 = (0..law.card_w).map(|w| law.p_aw(1, w)).sum();
        assert!((p_a1 - 0.5).abs() < 1e-15);
        assert!((law.y_mean[law.cell(0, 1, 0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bad_pmf_reports_sum() {
        let mut scm = builtin::scm_t0();
        scm.noise[1] = vec![0.5, 0.6];
        let err = scm.validate().unwrap_err();
        assert!(err.to_string().contains("pmf u_a sums to 1.1"), "{err}");
    }

    #[test]
    fn missing_cell_reports_table() {
        let mut scm = builtin::scm_t1();
        scm.f_z.pop();
        let err = scm.validate().unwrap_err();
        assert!(err.to_string().contains("f_z not total"), "{err}");
    }

    #[test]
    fn out_of_range_output_rejected() {
        let mut scm = builtin::scm_t0();
        scm.f_a[0] = 7;
        let err = scm.validate().unwrap_err();
        assert!(err.to_string().contains("f_a out of range"), "{err}");
    }

    #[test]
    fn capacity_budget_enforced() {
        let scm = builtin::scm_t1();
        let err = scm.enumerate_joint_with_budget(8).unwrap_err();
        assert!(matches!(
            err,
            Error::Capacity {
                cells: 32,
                budget: 8
            }
        ));
    }

    // Independent hand-rolled enumeration of the canonical test model: walks
    // the 2^5 noise grid with the structural logic written out explicitly.
    fn t1_joint_by_hand() -> Vec<f64> {
        let pu = [
            [0.6, 0.4],   // U_W
            [0.7, 0.3],   // U_A
            [0.9, 0.1],   // U_Z
            [0.8, 0.2],   // U_M
            [0.85, 0.15], // U_Y
        ];
        let mut prob = vec![0.0f64; 16];
        for uw in 0..2usize {
            for ua in 0..2usize {
                for uz in 0..2usize {
                    for um in 0..2usize {
                        for uy in 0..2usize {
                            let p = pu[0][uw] * pu[1][ua] * pu[2][uz] * pu[3][um] * pu[4][uy];
                            let w = uw;
                            let a = w ^ ua;
                            let z = a ^ uz;
                            let maj = usize::from(z + a + w >= 2);
                            let m = maj ^ um;
                            prob[((w * 2 + a) * 2 + z) * 2 + m] += p;
                        }
                    }
                }
            }
        }
        prob
    }

    #[test]
    fn t1_joint_matches_hand_enumeration() {
        let law = builtin::scm_t1().enumerate_joint().unwrap();
        let hand = t1_joint_by_hand();
        for w in 0..2 {
            for a in 0..2 {
                for z in 0..2 {
                    for m in 0..2 {
                        let got = law.prob[law.cell(w, a, z, m)];
                        let want = hand[((w * 2 + a) * 2 + z) * 2 + m];
                        assert!((got - want).abs() < 1e-15, "cell ({w},{a},{z},{m})");
                    }
                }
            }
        }
        // Frozen corner cells, worked out on paper.
        assert!((law.prob[law.cell(0, 0, 0, 0)] - 0.3024).abs() < 1e-15);
        assert!((law.prob[law.cell(1, 1, 1, 1)] - 0.2016).abs() < 1e-15);
        assert!((law.y_mean[law.cell(0, 0, 0, 0)] - 0.03).abs() < 1e-12);
        assert!((law.y_mean[law.cell(1, 1, 1, 1)] - 1.88).abs() < 1e-12);
    }

    #[test]
    fn sampling_is_reproducible() {
        let scm = builtin::scm_t0();
        let d1 = scm.sample(4, 7).unwrap();
        let d2 = scm.sample(4, 7).unwrap();
        assert_eq!(d1.a, d2.a);
        assert_eq!(d1.y, d2.y);
    }

    #[test]
    fn sampling_matches_law_of_large_numbers() {
        let scm = builtin::scm_t0();
        let d = scm.sample(100_000, 1).unwrap();
        let mean_a = d.a.iter().sum::<usize>() as f64 / d.len() as f64;
        assert!((mean_a - 0.5).abs() < 0.01);
    }

    #[test]
    fn t1_sample_frequencies_match_enumeration() {
        let scm = builtin::scm_t1();
        let law = scm.enumerate_joint().unwrap();
        let d = scm.sample(100_000, 1).unwrap();
        let mut freq = [0.0f64; 16];
        for i in 0..d.len() {
            freq[law.cell(d.w[i], d.a[i], d.z[i], d.m[i])] += 1.0 / d.len() as f64;
        }
        let max_err = freq
            .iter()
            .zip(&law.prob)
            .map(|(f, p)| (f - p).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 0.01, "max cell error {max_err}");
    }

    #[test]
    fn json_round_trip() {
        let scm = builtin::scm_t1();
        let text = serde_json::to_string_pretty(&scm).unwrap();
        let back: DiscreteScm = serde_json::from_str(&text).unwrap();
        assert_eq!(scm, back);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let scm = builtin::scm_t1();
        let d = scm.sample(50, 3).unwrap();
        let text = d.to_csv();
        let back = Dataset::from_csv(&text).unwrap();
        assert_eq!(d.w, back.w);
        assert_eq!(d.y, back.y);

        let bad = "w,a,z,m,y\n0,1,0,0,1.0\n0,x,0,0,2.0\n";
        let err = Dataset::from_csv(bad).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn w_flattening_codebook() {
        let cols = vec![vec![0, 1, 0, 1], vec![10, 10, 20, 20]];
        let (codes, book) = flatten_w_columns(&cols).unwrap();
        assert_eq!(codes, vec![0, 1, 2, 3]);
        assert_eq!(book, vec![vec![0, 1], vec![10, 20]]);
    }
}
