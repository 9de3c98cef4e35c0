//! Affine surrogates of `f(V) = 1/V*` and the binary-product envelope.
//!
//! Writing `V = X + jY`, `f = fX + j fY` with `fX = X/|V|^2`, `fY = Y/|V|^2`.
//! Both surrogates use the same layout:
//!
//! ```text
//! fX ~ kx*X + ky*Y + bx
//! fY ~ hx*X + hy*Y + by
//! ```
//!
//! The least-squares fit (LSM) is trained on a magnitude/angle grid per phase;
//! the complex-expansion surrogate (CBM) is `2e^{jd} - V* e^{j2d}` around the
//! phase's angle center `d`.

use std::ops::RangeInclusive;

use crate::error::{Error, Result};
use crate::model::{Phase, Phasor};

/// Voltage region a surrogate is trained on. Angles in radians.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitRegion {
    pub v_min: f64,
    pub v_max: f64,
    pub delta_center: [f64; 3],
    pub delta_halfwidth: f64,
    /// Magnitude grid count.
    pub m: usize,
    /// Angle grid count.
    pub n: usize,
}

impl Default for FitRegion {
    /// `|V|` in [0.95, 1.05], centers 0 / +120 / -120 degrees, +/-10 degrees, 21x21 grid.
    fn default() -> Self {
        FitRegion {
            v_min: 0.95,
            v_max: 1.05,
            delta_center: [0.0, 120f64.to_radians(), -120f64.to_radians()],
            delta_halfwidth: 10f64.to_radians(),
            m: 21,
            n: 21,
        }
    }
}

impl FitRegion {
    /// Degenerate regions (`v_min == v_max`, zero half-width) are accepted so
    /// they can be sampled; fitting on them fails with a rank error.
    pub fn validate(&self) -> Result<()> {
        let finite = [self.v_min, self.v_max, self.delta_halfwidth]
            .iter()
            .chain(self.delta_center.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidOptions("non-finite fit region".into()));
        }
        if !(self.v_min > 0.0 && self.v_min <= self.v_max) {
            return Err(Error::InvalidOptions(format!(
                "need 0 < v_min <= v_max, got [{}, {}]",
                self.v_min, self.v_max
            )));
        }
        if self.delta_halfwidth < 0.0 {
            return Err(Error::InvalidOptions("negative angle half-width".into()));
        }
        if self.m < 2 || self.n < 2 {
            return Err(Error::InvalidOptions("grid counts must be >= 2".into()));
        }
        Ok(())
    }

    pub fn center(&self, phase: Phase) -> f64 {
        self.delta_center[phase.index()]
    }

    /// Same region with a different grid resolution.
    pub fn with_grid(&self, m: usize, n: usize) -> FitRegion {
        FitRegion { m, n, ..*self }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub x: f64,
    pub y: f64,
    pub fx: f64,
    pub fy: f64,
}

impl Sample {
    pub fn at(v: f64, delta: f64) -> Sample {
        let x = v * delta.cos();
        let y = v * delta.sin();
        let d = x * x + y * y;
        Sample {
            x,
            y,
            fx: x / d,
            fy: y / d,
        }
    }
}

/// `count` evenly spaced points from `lo` to `hi`, endpoints exact.
fn linspace(lo: f64, hi: f64, count: usize) -> impl Iterator<Item = f64> {
    (0..count).map(move |i| {
        if i + 1 == count {
            hi
        } else {
            lo + (hi - lo) * i as f64 / (count - 1) as f64
        }
    })
}

/// The `m * n` Cartesian grid over magnitude and angle for one phase.
pub fn sample_grid(region: &FitRegion, phase: Phase) -> Vec<Sample> {
    let c = region.center(phase);
    let (lo, hi) = (c - region.delta_halfwidth, c + region.delta_halfwidth);
    let mut out = Vec::with_capacity(region.m * region.n);
    for v in linspace(region.v_min, region.v_max, region.m) {
        for d in linspace(lo, hi, region.n) {
            out.push(Sample::at(v, d));
        }
    }
    out
}

/// One phase's surrogate coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct PhaseCoeffs {
    pub kx: f64,
    pub ky: f64,
    pub bx: f64,
    pub hx: f64,
    pub hy: f64,
    pub by: f64,
}

impl PhaseCoeffs {
    /// Surrogate value of `1/V*`.
    pub fn eval(&self, v: Phasor) -> Phasor {
        Phasor::new(
            self.kx * v.re + self.ky * v.im + self.bx,
            self.hx * v.re + self.hy * v.im + self.by,
        )
    }

    /// Largest component-wise error against the exact `fX`, `fY`.
    pub fn max_error(&self, samples: &[Sample]) -> f64 {
        samples
            .iter()
            .map(|s| {
                let f = self.eval(Phasor::new(s.x, s.y));
                (f.re - s.fx).abs().max((f.im - s.fy).abs())
            })
            .fold(0.0, f64::max)
    }

    /// Sum of squared residuals of the `fX` and `fY` fits.
    pub fn sse(&self, samples: &[Sample]) -> (f64, f64) {
        samples.iter().fold((0.0, 0.0), |(ex, ey), s| {
            let f = self.eval(Phasor::new(s.x, s.y));
            (ex + (f.re - s.fx).powi(2), ey + (f.im - s.fy).powi(2))
        })
    }

    pub fn is_finite(&self) -> bool {
        [self.kx, self.ky, self.bx, self.hx, self.hy, self.by]
            .iter()
            .all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LsmFit {
    pub coeffs: PhaseCoeffs,
    pub max_fit_error: f64,
}

/// Solves a 3x3 system by Gaussian elimination with partial pivoting for
/// two right-hand sides. `None` when a pivot falls below `rel_tol` times the
/// largest matrix entry.
fn solve3(mut a: [[f64; 3]; 3], mut b: [[f64; 2]; 3], rel_tol: f64) -> Option<[[f64; 2]; 3]> {
    let scale = a.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= rel_tol * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in (col + 1)..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            for r in 0..2 {
                b[row][r] -= f * b[col][r];
            }
        }
    }
    let mut x = [[0.0; 2]; 3];
    for row in (0..3).rev() {
        for r in 0..2 {
            let tail: f64 = ((row + 1)..3).map(|k| a[row][k] * x[k][r]).sum();
            x[row][r] = (b[row][r] - tail) / a[row][row];
        }
    }
    Some(x)
}

/// Least-squares affine fit of `fX` and `fY` over `(X, Y)`, via the 3x3
/// normal equations shared by both targets.
pub fn fit_lsm(samples: &[Sample]) -> Result<LsmFit> {
    if samples.len() < 3 {
        return Err(Error::RankDeficient(samples.len()));
    }
    let mut g = [[0.0; 3]; 3];
    let mut rhs = [[0.0; 2]; 3];
    for s in samples {
        let row = [s.x, s.y, 1.0];
        for i in 0..3 {
            for j in 0..3 {
                g[i][j] += row[i] * row[j];
            }
            rhs[i][0] += row[i] * s.fx;
            rhs[i][1] += row[i] * s.fy;
        }
    }
    let sol = solve3(g, rhs, 1e-10).ok_or(Error::RankDeficient(samples.len()))?;
    let coeffs = PhaseCoeffs {
        kx: sol[0][0],
        ky: sol[1][0],
        bx: sol[2][0],
        hx: sol[0][1],
        hy: sol[1][1],
        by: sol[2][1],
    };
    if !coeffs.is_finite() {
        return Err(Error::RankDeficient(samples.len()));
    }
    Ok(LsmFit {
        coeffs,
        max_fit_error: coeffs.max_error(samples),
    })
}

/// Coefficients of `2e^{jd} - (X - jY)e^{j2d}` in the surrogate layout.
pub fn cbm_coeffs(delta_center: f64) -> PhaseCoeffs {
    let (s2, c2) = (2.0 * delta_center).sin_cos();
    let (s1, c1) = delta_center.sin_cos();
    PhaseCoeffs {
        kx: -c2,
        ky: -s2,
        bx: 2.0 * c1,
        hx: -s2,
        hy: c2,
        by: 2.0 * s1,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Lsm,
    Cbm,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Lsm => "lsm",
            Method::Cbm => "cbm",
        })
    }
}

/// Per-phase surrogates together with the region they are valid on.
#[derive(Clone, Debug, PartialEq)]
pub struct LinCoeffs {
    pub method: Method,
    pub phases: [PhaseCoeffs; 3],
    pub region: FitRegion,
    /// Worst component error over the training grids of all phases.
    pub max_fit_error: f64,
}

impl LinCoeffs {
    /// Least-squares surrogates fitted per phase.
    pub fn lsm(region: &FitRegion) -> Result<LinCoeffs> {
        region.validate()?;
        let mut phases = [PhaseCoeffs::default(); 3];
        let mut worst: f64 = 0.0;
        for ph in Phase::ALL {
            let fit = fit_lsm(&sample_grid(region, ph))?;
            phases[ph.index()] = fit.coeffs;
            worst = worst.max(fit.max_fit_error);
        }
        Ok(LinCoeffs {
            method: Method::Lsm,
            phases,
            region: *region,
            max_fit_error: worst,
        })
    }

    /// Complex-expansion surrogates at each phase's angle center.
    pub fn cbm(region: &FitRegion) -> Result<LinCoeffs> {
        region.validate()?;
        let mut phases = [PhaseCoeffs::default(); 3];
        let mut worst: f64 = 0.0;
        for ph in Phase::ALL {
            let c = cbm_coeffs(region.center(ph));
            worst = worst.max(c.max_error(&sample_grid(region, ph)));
            phases[ph.index()] = c;
        }
        Ok(LinCoeffs {
            method: Method::Cbm,
            phases,
            region: *region,
            max_fit_error: worst,
        })
    }

    pub fn phase(&self, ph: Phase) -> &PhaseCoeffs {
        &self.phases[ph.index()]
    }
}

/// Error of one phase's surrogate on the `|V| = 1` slice of the region,
/// sampled at `count` angles.
pub fn unit_slice_error(
    coeffs: &PhaseCoeffs,
    region: &FitRegion,
    phase: Phase,
    count: usize,
) -> f64 {
    let c = region.center(phase);
    let samples: Vec<Sample> = linspace(
        c - region.delta_halfwidth,
        c + region.delta_halfwidth,
        count,
    )
    .map(|d| Sample::at(1.0, d))
    .collect();
    coeffs.max_error(&samples)
}

/// One line of the fit report.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitRow {
    pub phase: Phase,
    pub method: Method,
    pub coeffs: PhaseCoeffs,
    /// On the training grid.
    pub max_fit_error: f64,
    /// On a dense `validation x validation` grid over the same region.
    pub validation_error: f64,
    pub unit_slice_error: f64,
}

/// LSM and CBM surrogates for every phase with their training and
/// validation errors, ordered by phase then method.
pub fn fit_report(region: &FitRegion, validation: usize) -> Result<Vec<FitRow>> {
    let lsm = LinCoeffs::lsm(region)?;
    let cbm = LinCoeffs::cbm(region)?;
    let dense = region.with_grid(validation, validation);
    let mut rows = Vec::new();
    for ph in Phase::ALL {
        let train = sample_grid(region, ph);
        let check = sample_grid(&dense, ph);
        for lc in [&lsm, &cbm] {
            let c = *lc.phase(ph);
            rows.push(FitRow {
                phase: ph,
                method: lc.method,
                coeffs: c,
                max_fit_error: c.max_error(&train),
                validation_error: c.max_error(&check),
                unit_slice_error: unit_slice_error(&c, region, ph, validation),
            });
        }
    }
    Ok(rows)
}

/// Interval of `z` allowed by the four-inequality envelope of `z = x*y` with
/// binary `x` and `y` in `[y_min, y_max]`:
///
/// ```text
/// x*y_min <= z <= x*y_max
/// (x-1)*y_max <= z - y <= (x-1)*y_min
/// ```
///
/// The envelope is exact: the interval always collapses to `{x*y}`.
pub fn rlp_reconstruct(x: bool, y: f64, y_min: f64, y_max: f64) -> Result<RangeInclusive<f64>> {
    if !(y_min <= y && y <= y_max) {
        return Err(Error::OutOfBox {
            y,
            min: y_min,
            max: y_max,
        });
    }
    let xf = if x { 1.0 } else { 0.0 };
    let lo = (xf * y_min).max(y + (xf - 1.0) * y_max);
    let hi = (xf * y_max).min(y + (xf - 1.0) * y_min);
    Ok(lo..=hi)
}
