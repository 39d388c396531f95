//! Computational almost-periodic function algebra.
//!
//! Almost periodic functions are represented by finite trigonometric
//! polynomials (sums of complex exponentials with arbitrary real
//! frequencies). Mean values and quadratic seminorms are exact via frequency
//! bookkeeping; everything that needs a compact cell works on a flat torus,
//! which is the concrete realization used throughout the toolkit. The module
//! also houses the pore-distribution period detector: a bounded {0,1} lattice
//! sequence that is almost periodic is in fact periodic, so a finite window
//! scan recovers the period.

use crate::error::{Error, Result};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// Finite sum of complex exponentials `sum_k a_k exp(i mu_k . y)` on `R^dim`.
///
/// Frequencies are pairwise distinct; construction merges duplicates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPolynomial {
    dim: usize,
    terms: Vec<(Vec<f64>, Complex64)>,
}

fn canon_freq(mut mu: Vec<f64>) -> Vec<f64> {
    for x in &mut mu {
        if *x == 0.0 {
            *x = 0.0; // normalize -0.0
        }
    }
    mu
}

fn freq_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(std::cmp::Ordering::Equal) | None => continue,
            Some(ord) => return ord,
        }
    }
    std::cmp::Ordering::Equal
}

impl TrigPolynomial {
    /// Builds a polynomial from raw terms, merging equal frequencies and
    /// dropping terms whose merged amplitude is exactly zero.
    pub fn new(dim: usize, raw: Vec<(Vec<f64>, Complex64)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        let mut terms: Vec<(Vec<f64>, Complex64)> = Vec::new();
        for (mu, a) in raw {
            if mu.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "frequency has {} components, expected {}",
                    mu.len(),
                    dim
                )));
            }
            if mu.iter().any(|x| !x.is_finite()) || !a.re.is_finite() || !a.im.is_finite() {
                return Err(Error::InvalidInput("non-finite term".into()));
            }
            let mu = canon_freq(mu);
            match terms.iter_mut().find(|(m, _)| m == &mu) {
                Some((_, amp)) => *amp += a,
                None => terms.push((mu, a)),
            }
        }
        terms.retain(|(_, a)| a.re != 0.0 || a.im != 0.0);
        terms.sort_by(|(a, _), (b, _)| freq_cmp(a, b));
        Ok(Self { dim, terms })
    }

    pub fn zero(dim: usize) -> Self {
        Self { dim, terms: Vec::new() }
    }

    pub fn constant(dim: usize, value: f64) -> Self {
        Self::new(dim, vec![(vec![0.0; dim], Complex64::new(value, 0.0))]).unwrap()
    }

    /// Real-valued polynomial `c0 + sum a_k cos(mu_k.y) + sum b_k sin(mu_k.y)`
    /// stored as its conjugate-symmetric exponential expansion.
    pub fn real(
        dim: usize,
        constant: f64,
        cosines: &[(Vec<f64>, f64)],
        sines: &[(Vec<f64>, f64)],
    ) -> Result<Self> {
        let mut raw = vec![(vec![0.0; dim], Complex64::new(constant, 0.0))];
        for (mu, a) in cosines {
            let half = Complex64::new(a / 2.0, 0.0);
            raw.push((mu.clone(), half));
            raw.push((mu.iter().map(|x| -x).collect(), half));
        }
        for (mu, b) in sines {
            // sin = (exp(i.) - exp(-i.)) / (2i)
            raw.push((mu.clone(), Complex64::new(0.0, -b / 2.0)));
            raw.push((mu.iter().map(|x| -x).collect(), Complex64::new(0.0, b / 2.0)));
        }
        Self::new(dim, raw)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[(Vec<f64>, Complex64)] {
        &self.terms
    }

    pub fn eval(&self, y: &[f64]) -> Complex64 {
        debug_assert_eq!(y.len(), self.dim);
        let mut acc = Complex64::new(0.0, 0.0);
        for (mu, a) in &self.terms {
            let phase: f64 = mu.iter().zip(y).map(|(m, x)| m * x).sum();
            acc += a * Complex64::new(phase.cos(), phase.sin());
        }
        acc
    }

    /// Real part of the evaluation; exact for conjugate-symmetric term sets.
    pub fn eval_real(&self, y: &[f64]) -> f64 {
        self.eval(y).re
    }

    /// Translate: `p(. + shift)`. Amplitudes pick up a unit-modulus phase, so
    /// the zero-frequency amplitude (the mean) is untouched.
    pub fn shift(&self, shift: &[f64]) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|(mu, a)| {
                let phase: f64 = mu.iter().zip(shift).map(|(m, s)| m * s).sum();
                (mu.clone(), a * Complex64::new(phase.cos(), phase.sin()))
            })
            .collect();
        Self { dim: self.dim, terms }
    }

    pub fn conj(&self) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|(mu, a)| (canon_freq(mu.iter().map(|x| -x).collect()), a.conj()))
            .collect();
        Self::new(self.dim, terms).expect("conjugation preserves validity")
    }

    /// Pointwise product; frequencies add.
    pub fn product(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::GridMismatch("trig polynomial dimensions differ".into()));
        }
        let mut raw = Vec::with_capacity(self.terms.len() * other.terms.len());
        for (mu, a) in &self.terms {
            for (nu, b) in &other.terms {
                let sum: Vec<f64> = mu.iter().zip(nu).map(|(m, n)| m + n).collect();
                raw.push((sum, a * b));
            }
        }
        Self::new(self.dim, raw)
    }

    /// True when for every term `(mu, a)` the set contains `(-mu, conj a)`,
    /// i.e. the polynomial represents a real-valued function.
    pub fn is_conjugate_symmetric(&self) -> bool {
        const TOL: f64 = 1e-14;
        self.terms.iter().all(|(mu, a)| {
            let neg = canon_freq(mu.iter().map(|x| -x).collect());
            let partner = self
                .terms
                .iter()
                .find(|(m, _)| m == &neg)
                .map(|(_, b)| *b)
                .unwrap_or(Complex64::new(0.0, 0.0));
            (partner - a.conj()).norm() <= TOL * (1.0 + a.norm())
        })
    }

    /// Largest frequency magnitude, used to pick sampling densities.
    pub fn max_frequency(&self) -> f64 {
        self.terms
            .iter()
            .map(|(mu, _)| mu.iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

/// Mean value of a trigonometric polynomial: the zero-frequency amplitude.
///
/// Exact because `M(exp(i mu . y)) = 0` for `mu != 0` and `= 1` for `mu = 0`.
pub fn mean_value(p: &TrigPolynomial) -> Complex64 {
    p.terms
        .iter()
        .find(|(mu, _)| mu.iter().all(|x| *x == 0.0))
        .map(|(_, a)| *a)
        .unwrap_or(Complex64::new(0.0, 0.0))
}

/// Options for cube-window averaging of almost periodic samples.
#[derive(Debug, Clone)]
pub struct WindowOptions {
    /// Initial cube edge length.
    pub initial_extent: f64,
    /// Stop once two successive doubled-window estimates agree to this
    /// relative tolerance.
    pub rel_tol: f64,
    /// Hard cap on the number of doublings.
    pub max_doublings: u32,
    /// Samples per unit length and per unit frequency (controls aliasing).
    pub samples_per_wave: f64,
}

impl Default for WindowOptions {
    fn default() -> Self {
        Self {
            initial_extent: 1.0,
            rel_tol: 1e-6,
            max_doublings: 24,
            samples_per_wave: 8.0,
        }
    }
}

/// Average of `f` over cubes `[0, R]^dim`, doubling `R` until two successive
/// estimates agree. Midpoint sampling; the density follows `max_freq`.
pub fn window_average(
    f: &dyn Fn(&[f64]) -> f64,
    dim: usize,
    max_freq: f64,
    opts: &WindowOptions,
) -> f64 {
    let density = (opts.samples_per_wave * max_freq / std::f64::consts::TAU).max(8.0);
    let mut extent = opts.initial_extent;
    let mut prev: Option<f64> = None;
    let mut estimate = 0.0;
    for _ in 0..=opts.max_doublings {
        let per_axis = ((extent * density).ceil() as usize).max(2);
        estimate = midpoint_average(f, dim, extent, per_axis);
        if let Some(p) = prev {
            if (estimate - p).abs() <= opts.rel_tol * estimate.abs().max(1e-12) {
                return estimate;
            }
        }
        prev = Some(estimate);
        extent *= 2.0;
    }
    estimate
}

fn midpoint_average(f: &dyn Fn(&[f64]) -> f64, dim: usize, extent: f64, per_axis: usize) -> f64 {
    let h = extent / per_axis as f64;
    let total = per_axis.pow(dim as u32);
    let mut y = vec![0.0; dim];
    let mut sum = 0.0;
    for flat in 0..total {
        let mut rest = flat;
        for d in 0..dim {
            let i = rest % per_axis;
            rest /= per_axis;
            y[d] = (i as f64 + 0.5) * h;
        }
        sum += f(&y);
    }
    sum / total as f64
}

/// Besicovitch seminorm `[M(|p|^order)]^(1/order)`.
///
/// The quadratic case is exact through Parseval; other orders fall back to
/// cube-window averaging.
pub fn besicovitch_seminorm(p: &TrigPolynomial, order: f64) -> Result<f64> {
    besicovitch_seminorm_windowed(p, order, &WindowOptions::default())
}

pub fn besicovitch_seminorm_windowed(
    p: &TrigPolynomial,
    order: f64,
    opts: &WindowOptions,
) -> Result<f64> {
    if !(order >= 1.0) {
        return Err(Error::InvalidOrder(order));
    }
    if p.terms.is_empty() {
        return Ok(0.0);
    }
    if order == 2.0 {
        let sum: f64 = p.terms.iter().map(|(_, a)| a.norm_sqr()).sum();
        return Ok(sum.sqrt());
    }
    let f = |y: &[f64]| p.eval(y).norm().powf(order);
    let avg = window_average(&f, p.dim, p.max_frequency(), opts);
    Ok(avg.max(0.0).powf(1.0 / order))
}

/// Finite window of a {0,1} pore-distribution sequence on the integer lattice.
#[derive(Debug, Clone)]
pub struct PoreDistribution {
    dims: Vec<usize>,
    bits: Vec<u8>,
    declared_period: Option<Vec<usize>>,
}

impl PoreDistribution {
    pub fn new(dims: Vec<usize>, bits: Vec<u8>, declared_period: Option<Vec<usize>>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::InvalidInput("window dimensions must be positive".into()));
        }
        let total: usize = dims.iter().product();
        if bits.len() != total {
            return Err(Error::InvalidInput(format!(
                "window has {} entries, dims require {}",
                bits.len(),
                total
            )));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::InvalidInput("pore window values must be 0 or 1".into()));
        }
        let dist = Self { dims, bits, declared_period: None };
        if let Some(p) = declared_period {
            if p.len() != dist.dims.len() || p.contains(&0) {
                return Err(Error::InvalidInput("declared period must be positive per axis".into()));
            }
            if !dist.is_period(&p) {
                return Err(Error::InvalidInput(
                    "declared period does not match the window contents".into(),
                ));
            }
            return Ok(Self { declared_period: Some(p), ..dist });
        }
        Ok(dist)
    }

    /// Fills a window by evaluating a generator on lattice points.
    pub fn from_fn(dims: Vec<usize>, f: impl Fn(&[i64]) -> bool) -> Result<Self> {
        let total: usize = dims.iter().product();
        let n = dims.len();
        let mut bits = vec![0u8; total];
        let mut idx = vec![0i64; n];
        for (flat, bit) in bits.iter_mut().enumerate() {
            let mut rest = flat;
            for d in (0..n).rev() {
                idx[d] = (rest % dims[d]) as i64;
                rest /= dims[d];
            }
            *bit = f(&idx) as u8;
        }
        Self::new(dims, bits, None)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn declared_period(&self) -> Option<&[usize]> {
        self.declared_period.as_deref()
    }

    pub fn get(&self, idx: &[usize]) -> u8 {
        let mut flat = 0usize;
        for (d, &i) in idx.iter().enumerate() {
            debug_assert!(i < self.dims[d]);
            flat = flat * self.dims[d] + i;
        }
        self.bits[flat]
    }

    /// Looks up with periodic wrap, using the declared period when given and
    /// otherwise the full window extent.
    pub fn get_periodic(&self, idx: &[i64]) -> u8 {
        let period: Vec<usize> = self
            .declared_period
            .clone()
            .unwrap_or_else(|| self.dims.clone());
        let wrapped: Vec<usize> = idx
            .iter()
            .zip(&period)
            .map(|(&i, &p)| (i.rem_euclid(p as i64)) as usize)
            .collect();
        self.get(&wrapped)
    }

    fn is_period(&self, p: &[usize]) -> bool {
        let n = self.dims.len();
        let reduced: Vec<usize> = self.dims.iter().zip(p).map(|(&d, &pi)| d.saturating_sub(pi)).collect();
        if reduced.contains(&0) {
            return false;
        }
        let total: usize = reduced.iter().product();
        let mut idx = vec![0usize; n];
        for flat in 0..total {
            let mut rest = flat;
            for d in (0..n).rev() {
                idx[d] = rest % reduced[d];
                rest /= reduced[d];
            }
            let shifted: Vec<usize> = idx.iter().zip(p).map(|(&i, &pi)| i + pi).collect();
            if self.get(&idx) != self.get(&shifted) {
                return false;
            }
        }
        true
    }
}

/// Smallest lattice vector `p` (scanned by max-norm, then lexicographically)
/// with `theta(k+p) = theta(k)` for every in-window pair.
///
/// Any translate with sup-discrepancy below 1/2 is an exact period because
/// the sequence only takes the values 0 and 1, so equality is the right test.
pub fn detect_period(theta: &PoreDistribution) -> Result<Vec<usize>> {
    let n = theta.dims.len();
    let caps: Vec<usize> = theta.dims.iter().map(|&d| d / 2).collect();
    if caps.contains(&0) {
        return Err(Error::NoPeriodInWindow);
    }
    let max_norm_cap = *caps.iter().max().unwrap();
    for norm in 1..=max_norm_cap {
        // lexicographic scan of [1, norm]^n keeping max-component == norm
        let mut p = vec![1usize; n];
        'scan: loop {
            if p.iter().max() == Some(&norm)
                && p.iter().zip(&caps).all(|(&pi, &c)| pi <= c)
                && theta.is_period(&p)
            {
                return Ok(p);
            }
            // advance the odometer, least significant axis last
            for d in (0..n).rev() {
                if p[d] < norm {
                    p[d] += 1;
                    for x in p.iter_mut().skip(d + 1) {
                        *x = 1;
                    }
                    continue 'scan;
                }
            }
            break;
        }
    }
    Err(Error::NoPeriodInWindow)
}

/// Real-valued function sampled on a uniform grid over the unit torus.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFn {
    dims: Vec<usize>,
    values: Vec<f64>,
}

impl GridFn {
    pub fn new(dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let total: usize = dims.iter().product();
        if dims.is_empty() || total == 0 || values.len() != total {
            return Err(Error::GridMismatch(format!(
                "values length {} does not match grid {:?}",
                values.len(),
                dims
            )));
        }
        Ok(Self { dims, values })
    }

    /// Samples `f` at the grid points `i/n` per axis.
    pub fn sample(dims: Vec<usize>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let total: usize = dims.iter().product();
        let n = dims.len();
        let mut values = vec![0.0; total];
        let mut y = vec![0.0; n];
        for (flat, v) in values.iter_mut().enumerate() {
            let mut rest = flat;
            for d in (0..n).rev() {
                y[d] = (rest % dims[d]) as f64 / dims[d] as f64;
                rest /= dims[d];
            }
            *v = f(&y);
        }
        Self::new(dims, values)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Discrete `L^p` norm with the torus normalized to measure one.
    pub fn norm(&self, p: f64) -> f64 {
        let n = self.values.len() as f64;
        if p.is_infinite() {
            return self.values.iter().fold(0.0, |m, v| m.max(v.abs()));
        }
        (self.values.iter().map(|v| v.abs().powf(p)).sum::<f64>() / n).powf(1.0 / p)
    }
}

/// Circular convolution on the unit torus, normalized so the torus has
/// measure one: `(u * v)[s] = (1/n) sum_r u[r] v[s - r]`.
///
/// Computed through the FFT; satisfies the Young inequality
/// `|u * v|_m <= |u|_p |v|_q` with `1/p + 1/q = 1 + 1/m`.
pub fn torus_convolve(u: &GridFn, v: &GridFn) -> Result<GridFn> {
    if u.dims != v.dims {
        return Err(Error::GridMismatch(format!(
            "convolution grids differ: {:?} vs {:?}",
            u.dims, v.dims
        )));
    }
    let total = u.values.len();
    let mut a: Vec<Complex64> = u.values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let mut b: Vec<Complex64> = v.values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    ndfft(&mut a, &u.dims, false);
    ndfft(&mut b, &u.dims, false);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    ndfft(&mut a, &u.dims, true);
    // forward-forward-inverse leaves a factor total; measure normalization
    // contributes another 1/total
    let scale = 1.0 / (total as f64 * total as f64);
    let values = a.iter().map(|c| c.re * scale).collect();
    GridFn::new(u.dims.clone(), values)
}

/// In-place multi-dimensional FFT (unscaled); `inverse` applies the unscaled
/// inverse transform, so round-tripping multiplies by the grid size.
pub fn ndfft(data: &mut [Complex64], dims: &[usize], inverse: bool) {
    let mut planner = FftPlanner::new();
    let total: usize = dims.iter().product();
    debug_assert_eq!(data.len(), total);
    let n = dims.len();
    // strides for row-major layout
    let mut strides = vec![1usize; n];
    for d in (0..n.saturating_sub(1)).rev() {
        strides[d] = strides[d + 1] * dims[d + 1];
    }
    for d in 0..n {
        let len = dims[d];
        if len == 1 {
            continue;
        }
        let fft = if inverse {
            planner.plan_fft_inverse(len)
        } else {
            planner.plan_fft_forward(len)
        };
        let stride = strides[d];
        let mut line = vec![Complex64::new(0.0, 0.0); len];
        let lines = total / len;
        for li in 0..lines {
            // decompose line index into the base offset skipping axis d
            let block = li / stride;
            let within = li % stride;
            let base = block * stride * len + within;
            for (k, slot) in line.iter_mut().enumerate() {
                *slot = data[base + k * stride];
            }
            fft.process(&mut line);
            for (k, value) in line.iter().enumerate() {
                data[base + k * stride] = *value;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const TAU: f64 = std::f64::consts::TAU;

    #[test]
    fn mean_of_constant() {
        let p = TrigPolynomial::constant(2, 3.0);
        assert_eq!(mean_value(&p), Complex64::new(3.0, 0.0));
    }

    #[test]
    fn mean_kills_nonzero_frequencies() {
        // 2 cos(sqrt(2) y1)
        let p = TrigPolynomial::real(1, 0.0, &[(vec![2.0_f64.sqrt()], 2.0)], &[]).unwrap();
        assert_eq!(mean_value(&p), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn mean_matches_window_average() {
        // 3 + 2 cos(2 pi y1) cos(2 pi y2)
        let c1 = TrigPolynomial::real(2, 0.0, &[(vec![TAU, 0.0], 1.0)], &[]).unwrap();
        let c2 = TrigPolynomial::real(2, 0.0, &[(vec![0.0, TAU], 1.0)], &[]).unwrap();
        let p = TrigPolynomial::new(
            2,
            c1.product(&c2)
                .unwrap()
                .terms()
                .iter()
                .map(|(m, a)| (m.clone(), 2.0 * a))
                .chain(std::iter::once((vec![0.0, 0.0], Complex64::new(3.0, 0.0))))
                .collect(),
        )
        .unwrap();
        assert_abs_diff_eq!(mean_value(&p).re, 3.0, epsilon = 1e-12);
        let f = |y: &[f64]| p.eval_real(y);
        let avg = window_average(&f, 2, p.max_frequency(), &WindowOptions::default());
        assert_abs_diff_eq!(avg, 3.0, epsilon = 1e-6);
    }

    #[test]
    fn mean_translation_invariant() {
        let p = TrigPolynomial::real(
            2,
            1.5,
            &[(vec![1.0, 0.3], 0.7), (vec![TAU, TAU], -0.2)],
            &[(vec![0.4, 2.0], 0.9)],
        )
        .unwrap();
        let shifted = p.shift(&[0.37, -1.29]);
        let (m0, m1) = (mean_value(&p), mean_value(&shifted));
        assert_abs_diff_eq!(m0.re, m1.re, epsilon = 1e-15);
        assert_abs_diff_eq!(m0.im, m1.im, epsilon = 1e-15);
    }

    #[test]
    fn mean_real_for_conjugate_symmetric() {
        let p = TrigPolynomial::real(1, 0.25, &[(vec![1.3], 2.0)], &[(vec![0.6], -1.0)]).unwrap();
        assert!(p.is_conjugate_symmetric());
        assert_eq!(mean_value(&p).im, 0.0);
    }

    #[test]
    fn seminorm_of_constant() {
        let p = TrigPolynomial::constant(3, 3.0);
        assert_abs_diff_eq!(besicovitch_seminorm(&p, 2.0).unwrap(), 3.0, epsilon = 1e-15);
    }

    #[test]
    fn seminorm_parseval_cosine() {
        let p = TrigPolynomial::real(1, 0.0, &[(vec![TAU], 1.0)], &[]).unwrap();
        assert_abs_diff_eq!(
            besicovitch_seminorm(&p, 2.0).unwrap(),
            std::f64::consts::FRAC_1_SQRT_2,
            epsilon = 1e-15
        );
    }

    #[test]
    fn seminorm_zero_polynomial() {
        let p = TrigPolynomial::zero(2);
        assert_eq!(besicovitch_seminorm(&p, 1.0).unwrap(), 0.0);
        assert_eq!(besicovitch_seminorm(&p, 3.5).unwrap(), 0.0);
    }

    #[test]
    fn seminorm_rejects_small_order() {
        assert!(matches!(
            besicovitch_seminorm(&TrigPolynomial::constant(1, 1.0), 0.5),
            Err(Error::InvalidOrder(_))
        ));
    }

    #[test]
    fn parseval_agrees_with_mean_of_square() {
        let p = TrigPolynomial::real(2, 0.4, &[(vec![1.0, 2.0], 0.8)], &[(vec![3.0, 0.5], 0.3)])
            .unwrap();
        let sq = p.product(&p.conj()).unwrap();
        let lhs = besicovitch_seminorm(&p, 2.0).unwrap().powi(2);
        assert_abs_diff_eq!(lhs, mean_value(&sq).re, epsilon = 1e-14);
    }

    #[test]
    fn detect_all_ones() {
        let theta = PoreDistribution::from_fn(vec![8, 8], |_| true).unwrap();
        assert_eq!(detect_period(&theta).unwrap(), vec![1, 1]);
    }

    #[test]
    fn detect_stripes() {
        let theta = PoreDistribution::from_fn(vec![12, 12], |k| k[0].rem_euclid(3) == 0).unwrap();
        assert_eq!(detect_period(&theta).unwrap(), vec![3, 1]);
    }

    #[test]
    fn detect_rejects_irregular_window() {
        // bits of a fixed irrational expansion: no short repeat
        let digits: Vec<u8> = vec![
            1, 0, 0, 1, 0, 1, 1, 1, 0, 0, 0, 1, 1, 0, 1, 0, 1, 0, 0, 1, 1, 1, 1, 0,
        ];
        let theta = PoreDistribution::new(vec![24], digits, None).unwrap();
        assert!(matches!(detect_period(&theta), Err(Error::NoPeriodInWindow)));
    }

    #[test]
    fn detect_invariant_under_shift() {
        let base = [[1u8, 0, 0], [0, 1, 1]]; // 2 x 3 tile
        for shift in [[0i64, 0], [1, 2], [5, 7], [2, 1]] {
            let theta = PoreDistribution::from_fn(vec![12, 12], |k| {
                let r = (k[0] + shift[0]).rem_euclid(2) as usize;
                let c = (k[1] + shift[1]).rem_euclid(3) as usize;
                base[r][c] == 1
            })
            .unwrap();
            assert_eq!(detect_period(&theta).unwrap(), vec![2, 3]);
        }
    }

    #[test]
    fn declared_period_validated() {
        let ok = PoreDistribution::from_fn(vec![8], |k| k[0] % 2 == 0).unwrap();
        assert!(PoreDistribution::new(vec![8], ok.bits.clone(), Some(vec![2])).is_ok());
        assert!(PoreDistribution::new(vec![8], ok.bits, Some(vec![3])).is_err());
    }

    #[test]
    fn convolve_with_unit_gives_mean() {
        let u = GridFn::sample(vec![32], |_| 1.0).unwrap();
        let v = GridFn::sample(vec![32], |y| (TAU * y[0]).cos() + 0.7).unwrap();
        let w = torus_convolve(&u, &v).unwrap();
        for &x in w.values() {
            assert_abs_diff_eq!(x, v.mean(), epsilon = 1e-12);
        }
    }

    #[test]
    fn convolve_cosine_halves() {
        let u = GridFn::sample(vec![64], |y| (TAU * y[0]).cos()).unwrap();
        let w = torus_convolve(&u, &u).unwrap();
        for (i, &x) in w.values().iter().enumerate() {
            let expect = 0.5 * (TAU * i as f64 / 64.0).cos();
            assert_abs_diff_eq!(x, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn convolve_rejects_mismatched_grids() {
        let u = GridFn::sample(vec![8], |_| 1.0).unwrap();
        let v = GridFn::sample(vec![16], |_| 1.0).unwrap();
        assert!(matches!(torus_convolve(&u, &v), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn young_inequality_on_random_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let n = 16 + (rng.gen::<u32>() % 16) as usize * 2;
            let u = GridFn::new(vec![n, n], (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .unwrap();
            let v = GridFn::new(vec![n, n], (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .unwrap();
            let w = torus_convolve(&u, &v).unwrap();
            assert!(w.norm(2.0) <= u.norm(1.0) * v.norm(2.0) + 1e-12);
        }
    }

    #[test]
    fn convolution_commutes_and_associates() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dims = vec![24, 24];
        let mk = |rng: &mut ChaCha8Rng| {
            GridFn::new(dims.clone(), (0..24 * 24).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .unwrap()
        };
        let (u, v, w) = (mk(&mut rng), mk(&mut rng), mk(&mut rng));
        let uv = torus_convolve(&u, &v).unwrap();
        let vu = torus_convolve(&v, &u).unwrap();
        for (a, b) in uv.values().iter().zip(vu.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        let l = torus_convolve(&uv, &w).unwrap();
        let r = torus_convolve(&u, &torus_convolve(&v, &w).unwrap()).unwrap();
        for (a, b) in l.values().iter().zip(r.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn convolution_round_off_at_full_size() {
        // the algebra holds to 1e-12 relative on the largest supported grid
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let dims = vec![256, 256];
        let mk = |rng: &mut ChaCha8Rng| {
            GridFn::new(dims.clone(), (0..256 * 256).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .unwrap()
        };
        let (u, v) = (mk(&mut rng), mk(&mut rng));
        let uv = torus_convolve(&u, &v).unwrap();
        let vu = torus_convolve(&v, &u).unwrap();
        let scale = uv.norm(f64::INFINITY).max(1e-30);
        for (a, b) in uv.values().iter().zip(vu.values()) {
            assert!((a - b).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn quartic_seminorm_of_cosine() {
        // M(cos^4) = 3/8, so the order-4 seminorm is (3/8)^(1/4)
        let p = TrigPolynomial::real(1, 0.0, &[(vec![TAU], 1.0)], &[]).unwrap();
        let got = besicovitch_seminorm(&p, 4.0).unwrap();
        let expect = (3.0f64 / 8.0).powf(0.25);
        assert_abs_diff_eq!(got, expect, epsilon = 1e-5);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_poly() -> impl Strategy<Value = TrigPolynomial> {
            let term = (prop::collection::vec(-8.0f64..8.0, 2), -2.0f64..2.0);
            (prop::collection::vec(term, 0..5), -3.0f64..3.0).prop_map(|(cos, c)| {
                TrigPolynomial::real(2, c, &cos, &[]).unwrap()
            })
        }

        proptest! {
            #[test]
            fn mean_ignores_translations(p in arb_poly(), shift in prop::collection::vec(-5.0f64..5.0, 2)) {
                let moved = p.shift(&shift);
                prop_assert!((mean_value(&p) - mean_value(&moved)).norm() <= 1e-12);
            }

            #[test]
            fn seminorm_dominates_mean(p in arb_poly()) {
                // |M(p)| <= |p|_2 always (Cauchy-Schwarz against 1)
                let m = mean_value(&p).norm();
                let s = besicovitch_seminorm(&p, 2.0).unwrap();
                prop_assert!(m <= s + 1e-12);
            }
        }
    }

    #[test]
    fn ndfft_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dims = vec![8, 4, 6];
        let total: usize = dims.iter().product();
        let orig: Vec<Complex64> = (0..total)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let mut data = orig.clone();
        ndfft(&mut data, &dims, false);
        ndfft(&mut data, &dims, true);
        for (a, b) in data.iter().zip(&orig) {
            assert_abs_diff_eq!(a.re / total as f64, b.re, epsilon = 1e-12);
            assert_abs_diff_eq!(a.im / total as f64, b.im, epsilon = 1e-12);
        }
    }
}
