//! Globally adaptive Gauss–Kronrod (7/15) quadrature, generic over the scalar type.
//!
//! Semi-infinite ranges are mapped onto `(0, 1]` with `x = a + (1 - u) / u`, so
//! the endpoint `u = 0` is never evaluated (Kronrod nodes are interior).

use crate::error::{Error, Result};
use crate::scalar::Real;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Tolerances and limits for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_intervals: 2000,
        }
    }
}

impl QuadOptions {
    pub fn new(abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            abs_tol,
            rel_tol,
            ..Self::default()
        }
    }
}

/// Integral value with its estimated absolute error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature<T> {
    pub value: T,
    pub error: T,
    pub evaluations: usize,
}

#[derive(Clone, Copy)]
struct Segment<T> {
    a: T,
    b: T,
    value: T,
    error: T,
}

fn kronrod<T: Real, F: FnMut(T) -> T>(f: &mut F, a: T, b: T) -> Result<(T, T)> {
    let half = T::c(0.5);
    let center = half * (a + b);
    let radius = half * (b - a);
    let fc = f(center);
    let mut resk = fc * T::c(WGK[7]);
    let mut resg = fc * T::c(WG[3]);
    let mut finite = fc.is_finite();
    for j in 0..7 {
        let dx = radius * T::c(XGK[j]);
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        finite &= f1.is_finite() && f2.is_finite();
        resk = resk + T::c(WGK[j]) * (f1 + f2);
        if j % 2 == 1 {
            resg = resg + T::c(WG[j / 2]) * (f1 + f2);
        }
    }
    if !finite {
        return Err(Error::QuadratureFailure(format!(
            "non-finite integrand on [{}, {}]",
            a.as_f64(),
            b.as_f64()
        )));
    }
    Ok((resk * radius, ((resk - resg) * radius).abs()))
}

/// Integrates `f` over the finite interval `[a, b]`.
pub fn integrate<T: Real, F: FnMut(T) -> T>(mut f: F, a: T, b: T, opts: &QuadOptions) -> Result<Quadrature<T>> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::QuadratureFailure("finite limits required".into()));
    }
    if a == b {
        return Ok(Quadrature {
            value: T::zero(),
            error: T::zero(),
            evaluations: 0,
        });
    }
    let (lo, hi, sign) = if a < b { (a, b, T::one()) } else { (b, a, -T::one()) };
    let (value, error) = kronrod(&mut f, lo, hi)?;
    let mut segments = vec![Segment {
        a: lo,
        b: hi,
        value,
        error,
    }];
    let mut evaluations = 15;
    let abs_tol = T::c(opts.abs_tol);
    let rel_tol = T::c(opts.rel_tol);
    loop {
        let total = segments.iter().fold(T::zero(), |acc, s| acc + s.value);
        let total_err = segments.iter().fold(T::zero(), |acc, s| acc + s.error);
        if total_err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(Quadrature {
                value: sign * total,
                error: total_err,
                evaluations,
            });
        }
        if segments.len() >= opts.max_intervals {
            return Err(Error::QuadratureFailure(format!(
                "no convergence after {} intervals (error estimate {:e})",
                segments.len(),
                total_err.as_f64()
            )));
        }
        let worst = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.partial_cmp(&y.1.error).unwrap_or(std::cmp::Ordering::Equal))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let seg = segments.swap_remove(worst);
        let mid = T::c(0.5) * (seg.a + seg.b);
        if !(mid > seg.a && mid < seg.b) {
            return Err(Error::QuadratureFailure(format!(
                "interval around {} cannot be subdivided further",
                seg.a.as_f64()
            )));
        }
        let (v1, e1) = kronrod(&mut f, seg.a, mid)?;
        let (v2, e2) = kronrod(&mut f, mid, seg.b)?;
        evaluations += 30;
        segments.push(Segment {
            a: seg.a,
            b: mid,
            value: v1,
            error: e1,
        });
        segments.push(Segment {
            a: mid,
            b: seg.b,
            value: v2,
            error: e2,
        });
    }
}

/// Integrates `f` over `[a, ∞)` through the map `x = a + (1 - u)/u`.
pub fn integrate_upper<T: Real, F: FnMut(T) -> T>(mut f: F, a: T, opts: &QuadOptions) -> Result<Quadrature<T>> {
    let g = |u: T| {
        let x = a + (T::one() - u) / u;
        let y = f(x);
        if y == T::zero() {
            T::zero()
        } else {
            y / (u * u)
        }
    };
    integrate(g, T::zero(), T::one(), opts)
}

/// Integrates `f` over `(-∞, b]` through the map `x = b - (1 - u)/u`.
pub fn integrate_lower<T: Real, F: FnMut(T) -> T>(mut f: F, b: T, opts: &QuadOptions) -> Result<Quadrature<T>> {
    integrate_upper(|y: T| f(b + b - y), b, opts)
}
