//! Regression bases and least squares.
//!
//! Features combine Laguerre polynomials in calendar time with powers of the
//! ordered asset prices `x^(1) >= x^(2) >= ...`. Feature order is fixed:
//!
//! 1. `L_i(t)` for `i = 0..=deg` (the constant first);
//! 2. for each price slot `m`, each power `j = 1..=pow`, each `i = 0..=deg`:
//!    `L_i(t) (x^(m))^j`;
//! 3. for each slot pair `m < n`, each `j = 1..=pow`, `k = 1..=pow`:
//!    `(x^(m))^j (x^(n))^k`.
//!
//! Products with a zero power are exactly the pure terms of group 1 or 2 and
//! are not repeated.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};

pub const MAX_LAGUERRE_DEGREE: usize = 5;
pub const MAX_PRICE_POWER: usize = 3;
const MAX_ASSETS: usize = 32;

/// Laguerre polynomial `L_i(t)` by the three-term recurrence.
pub fn laguerre(i: usize, t: f64) -> Result<f64> {
    if i > MAX_LAGUERRE_DEGREE {
        return Err(invalid("laguerre degree", format!("{i} exceeds {MAX_LAGUERRE_DEGREE}")));
    }
    let mut values = [0.0; MAX_LAGUERRE_DEGREE + 1];
    laguerre_all(t, &mut values[..=i]);
    Ok(values[i])
}

#[inline]
fn laguerre_all(t: f64, out: &mut [f64]) {
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = 1.0 - t;
    }
    for i in 1..out.len().saturating_sub(1) {
        let fi = i as f64;
        out[i + 1] = ((2.0 * fi + 1.0 - t) * out[i] - fi * out[i - 1]) / (fi + 1.0);
    }
}

/// Anything that maps `(t, x)` to a fixed-length feature vector.
pub trait FeatureMap: Sync {
    fn feature_count(&self) -> usize;

    /// Writes the features into `out`, which has `feature_count()` entries.
    fn fill(&self, t: f64, x: &[f64], out: &mut [f64]);
}

/// Which regression variables to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisSpec {
    /// `L_i(t) x^j`.
    SingleAsset { laguerre_degree: usize, price_power: usize },
    /// Powers of the two largest prices and their cross products.
    TopTwo { assets: usize, laguerre_degree: usize, price_power: usize },
    /// Powers of every ordered price and cross products of every slot pair.
    AllPairs { assets: usize, laguerre_degree: usize, price_power: usize },
}

impl BasisSpec {
    pub fn single_asset() -> Self {
        BasisSpec::SingleAsset {
            laguerre_degree: MAX_LAGUERRE_DEGREE,
            price_power: MAX_PRICE_POWER,
        }
    }

    pub fn top_two(assets: usize) -> Self {
        BasisSpec::TopTwo {
            assets,
            laguerre_degree: MAX_LAGUERRE_DEGREE,
            price_power: MAX_PRICE_POWER,
        }
    }

    pub fn all_pairs(assets: usize) -> Self {
        BasisSpec::AllPairs {
            assets,
            laguerre_degree: MAX_LAGUERRE_DEGREE,
            price_power: MAX_PRICE_POWER,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (assets, deg, pow) = self.parts();
        if deg > MAX_LAGUERRE_DEGREE {
            return Err(invalid("laguerre_degree", format!("at most {MAX_LAGUERRE_DEGREE}")));
        }
        if pow > MAX_PRICE_POWER {
            return Err(invalid("price_power", format!("at most {MAX_PRICE_POWER}")));
        }
        match self {
            BasisSpec::SingleAsset { .. } => Ok(()),
            _ if !(2..=MAX_ASSETS).contains(&assets) => Err(invalid(
                "assets",
                format!("multi-asset bases need 2..={MAX_ASSETS} assets"),
            )),
            _ => Ok(()),
        }
    }

    /// `(assets, laguerre_degree, price_power)`.
    pub fn parts(&self) -> (usize, usize, usize) {
        match *self {
            BasisSpec::SingleAsset { laguerre_degree, price_power } => (1, laguerre_degree, price_power),
            BasisSpec::TopTwo { assets, laguerre_degree, price_power }
            | BasisSpec::AllPairs { assets, laguerre_degree, price_power } => {
                (assets, laguerre_degree, price_power)
            }
        }
    }

    pub fn assets(&self) -> usize {
        self.parts().0
    }

    fn slots(&self) -> usize {
        match *self {
            BasisSpec::SingleAsset { .. } => 1,
            BasisSpec::TopTwo { .. } => 2,
            BasisSpec::AllPairs { assets, .. } => assets,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            BasisSpec::SingleAsset { .. } => "single",
            BasisSpec::TopTwo { .. } => "toptwo",
            BasisSpec::AllPairs { .. } => "allpairs",
        }
    }

    fn from_parts(name: &str, assets: usize, laguerre_degree: usize, price_power: usize) -> Result<Self> {
        let spec = match name {
            "single" => BasisSpec::SingleAsset { laguerre_degree, price_power },
            "toptwo" => BasisSpec::TopTwo { assets, laguerre_degree, price_power },
            "allpairs" => BasisSpec::AllPairs { assets, laguerre_degree, price_power },
            other => return Err(Error::Format(format!("unknown basis `{other}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl FeatureMap for BasisSpec {
    fn feature_count(&self) -> usize {
        let (_, deg, pow) = self.parts();
        let slots = self.slots();
        let pairs = match self {
            BasisSpec::SingleAsset { .. } => 0,
            BasisSpec::TopTwo { .. } => 1,
            BasisSpec::AllPairs { .. } => slots * (slots - 1) / 2,
        };
        (deg + 1) + (deg + 1) * pow * slots + pow * pow * pairs
    }

    #[inline]
    fn fill(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let (_, deg, pow) = self.parts();
        let slots = self.slots();
        let mut lag = [0.0; MAX_LAGUERRE_DEGREE + 1];
        let lag = &mut lag[..=deg];
        laguerre_all(t, lag);

        let mut sorted = [0.0; MAX_ASSETS];
        let n = x.len().min(MAX_ASSETS);
        sorted[..n].copy_from_slice(&x[..n]);
        sorted[..n].sort_unstable_by(|a, b| b.total_cmp(a));

        // powers[m][j-1] = (x^(m))^j
        let mut powers = [[0.0; MAX_PRICE_POWER]; MAX_ASSETS];
        for m in 0..slots {
            let mut p = 1.0;
            for slot in powers[m].iter_mut().take(pow) {
                p *= sorted[m];
                *slot = p;
            }
        }

        let mut w = 0;
        for &l in lag.iter() {
            out[w] = l;
            w += 1;
        }
        for pm in powers.iter().take(slots) {
            for &xp in pm.iter().take(pow) {
                for &l in lag.iter() {
                    out[w] = l * xp;
                    w += 1;
                }
            }
        }
        let pair = |m: usize, n: usize, out: &mut [f64], w: &mut usize| {
            for j in 0..pow {
                for k in 0..pow {
                    out[*w] = powers[m][j] * powers[n][k];
                    *w += 1;
                }
            }
        };
        match self {
            BasisSpec::SingleAsset { .. } => {}
            BasisSpec::TopTwo { .. } => pair(0, 1, out, &mut w),
            BasisSpec::AllPairs { .. } => {
                for m in 0..slots {
                    for n in m + 1..slots {
                        pair(m, n, out, &mut w);
                    }
                }
            }
        }
        debug_assert_eq!(w, out.len());
    }
}

/// Feature vector for `(t, x)`.
pub fn build_features(spec: &BasisSpec, t: f64, x: &[f64]) -> Result<Vec<f64>> {
    spec.validate()?;
    if x.is_empty() {
        return Err(invalid("x", "empty price vector"));
    }
    let needed = match spec {
        BasisSpec::SingleAsset { .. } => 1,
        _ => spec.assets(),
    };
    if x.len() != needed {
        return Err(invalid("x", format!("expected {needed} prices, got {}", x.len())));
    }
    if !t.is_finite() || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("build_features"));
    }
    let mut out = vec![0.0; spec.feature_count()];
    spec.fill(t, x, &mut out);
    Ok(out)
}

const CHUNK_ROWS: usize = 2048;
const RANK_TOL: f64 = 1e-10;

/// Weighted linear least squares, `argmin_b sum_i w_i (y_i - rows_i . b)^2`.
///
/// `rows` is row-major with `n_cols` columns. Columns are scaled to unit root
/// mean square, the scaled system is reduced by a chunked Householder QR and
/// the triangular factor is solved through its SVD; singular values below
/// `1e-10` times the largest are dropped, giving the minimum-norm solution.
pub fn fit_least_squares(
    rows: &[f64],
    n_cols: usize,
    targets: &[f64],
    weights: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let n = targets.len();
    if n == 0 || n_cols == 0 {
        return Err(invalid("features", "need at least one row and one column"));
    }
    if rows.len() != n * n_cols {
        return Err(invalid("features", "row data does not match target count"));
    }
    if let Some(w) = weights {
        if w.len() != n {
            return Err(invalid("weights", "length mismatch"));
        }
        if w.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(invalid("weights", "weights must be finite and non-negative"));
        }
    }
    if rows.iter().chain(targets).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("fit_least_squares"));
    }
    let root_w = |i: usize| weights.map_or(1.0, |w| w[i].sqrt());

    let mut scale = vec![0.0; n_cols];
    let mut total_w = 0.0;
    for i in 0..n {
        let w = weights.map_or(1.0, |w| w[i]);
        total_w += w;
        for (s, &v) in scale.iter_mut().zip(&rows[i * n_cols..(i + 1) * n_cols]) {
            *s += w * v * v;
        }
    }
    for s in &mut scale {
        *s = if *s > 0.0 && total_w > 0.0 {
            (*s / total_w).sqrt()
        } else {
            1.0
        };
    }

    let width = n_cols + 1;
    let chunk_r: Vec<DMatrix<f64>> = (0..n)
        .step_by(CHUNK_ROWS)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let end = (start + CHUNK_ROWS).min(n);
            let m = DMatrix::from_fn(end - start, width, |r, c| {
                let i = start + r;
                let v = if c < n_cols {
                    rows[i * n_cols + c] / scale[c]
                } else {
                    targets[i]
                };
                v * root_w(i)
            });
            upper_factor(m)
        })
        .collect();

    let mut r = chunk_r[0].clone();
    for next in &chunk_r[1..] {
        let stacked = DMatrix::from_fn(r.nrows() + next.nrows(), width, |i, j| {
            if i < r.nrows() {
                r[(i, j)]
            } else {
                next[(i - r.nrows(), j)]
            }
        });
        r = upper_factor(stacked);
    }

    let tri = DMatrix::from_fn(n_cols, n_cols, |i, j| if i < r.nrows() { r[(i, j)] } else { 0.0 });
    let qtb = nalgebra::DVector::from_fn(n_cols, |i, _| if i < r.nrows() { r[(i, n_cols)] } else { 0.0 });

    let svd = tri.svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let s_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let mut beta = nalgebra::DVector::zeros(n_cols);
    if s_max > 0.0 {
        for (k, &s) in svd.singular_values.iter().enumerate() {
            if s > RANK_TOL * s_max {
                let coef = u.column(k).dot(&qtb) / s;
                beta += v_t.row(k).transpose() * coef;
            }
        }
    }
    Ok(beta.iter().zip(&scale).map(|(b, s)| b / s).collect())
}

/// `R` factor of a Householder QR, `min(rows, cols) x cols`.
fn upper_factor(m: DMatrix<f64>) -> DMatrix<f64> {
    m.qr().r()
}

/// Continuation-value coefficients per exercise index.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionModel<F = BasisSpec> {
    basis: F,
    coefficients: Vec<Vec<f64>>,
}

impl RegressionModel {
    pub fn new(basis: BasisSpec, coefficients: Vec<Vec<f64>>) -> Result<Self> {
        basis.validate()?;
        Self::with_features(basis, coefficients)
    }
}

impl<F: FeatureMap> RegressionModel<F> {
    /// Model over an arbitrary feature map.
    pub fn with_features(basis: F, coefficients: Vec<Vec<f64>>) -> Result<Self> {
        let l = basis.feature_count();
        if let Some(bad) = coefficients.iter().position(|c| c.len() != l) {
            return Err(invalid(
                "coefficients",
                format!("index {bad} has {} entries, basis has {l}", coefficients[bad].len()),
            ));
        }
        Ok(Self { basis, coefficients })
    }

    pub fn basis(&self) -> &F {
        &self.basis
    }

    /// Truncation index; continuation values exist for `0..kbar`.
    pub fn kbar(&self) -> usize {
        self.coefficients.len()
    }

    pub fn coefficients(&self, k: usize) -> &[f64] {
        &self.coefficients[k]
    }

    /// Estimated continuation value at index `k`; zero from `kbar` on.
    pub fn continuation(&self, k: usize, t: f64, x: &[f64]) -> f64 {
        let Some(coef) = self.coefficients.get(k) else {
            return 0.0;
        };
        FEATURES.with(|buf| {
            let mut buf = buf.borrow_mut();
            buf.resize(coef.len(), 0.0);
            self.basis.fill(t, x, &mut buf);
            buf.iter().zip(coef).map(|(f, c)| f * c).sum()
        })
    }

}

impl RegressionModel {
    /// Flat text form: a header, then one coefficient row per index.
    pub fn to_text(&self) -> String {
        let (assets, deg, pow) = self.basis.parts();
        let mut s = String::new();
        writeln!(s, "randstop-regression v1").unwrap();
        writeln!(s, "basis {} {assets} {deg} {pow}", self.basis.name()).unwrap();
        writeln!(s, "kbar {}", self.kbar()).unwrap();
        writeln!(s, "features {}", self.basis.feature_count()).unwrap();
        for (k, row) in self.coefficients.iter().enumerate() {
            write!(s, "{k}").unwrap();
            for c in row {
                write!(s, " {c:?}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::Format(format!("missing {what}")))
        };
        if next("header")?.trim() != "randstop-regression v1" {
            return Err(Error::Format("unsupported header".into()));
        }
        let basis_line = next("basis line")?;
        let parts: Vec<&str> = basis_line.split_whitespace().collect();
        if parts.len() != 5 || parts[0] != "basis" {
            return Err(Error::Format(format!("bad basis line `{basis_line}`")));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|e| Error::Format(format!("`{s}`: {e}")));
        let basis = BasisSpec::from_parts(parts[1], num(parts[2])?, num(parts[3])?, num(parts[4])?)?;
        let kbar = keyed(next("kbar line")?, "kbar")?;
        let features = keyed(next("features line")?, "features")?;
        if features != basis.feature_count() {
            return Err(Error::Format(format!(
                "feature count {features} does not match basis ({})",
                basis.feature_count()
            )));
        }
        let mut coefficients = Vec::with_capacity(kbar);
        for k in 0..kbar {
            let line = next("coefficient row")?;
            let mut it = line.split_whitespace();
            let idx = it.next().map(num).transpose()?;
            if idx != Some(k) {
                return Err(Error::Format(format!("expected row {k}")));
            }
            let row = it
                .map(|v| v.parse::<f64>().map_err(|e| Error::Format(format!("`{v}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            coefficients.push(row);
        }
        Self::new(basis, coefficients)
    }
}

pub(crate) fn keyed(line: &str, key: &str) -> Result<usize> {
    let mut it = line.split_whitespace();
    match (it.next(), it.next(), it.next()) {
        (Some(k), Some(v), None) if k == key => v
            .parse()
            .map_err(|e| Error::Format(format!("{key}: {e}"))),
        _ => Err(Error::Format(format!("expected `{key} <n>`, got `{line}`"))),
    }
}

thread_local! {
    static FEATURES: std::cell::RefCell<Vec<f64>> = const { std::cell::RefCell::new(Vec::new()) };
}
