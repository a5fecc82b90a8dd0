//! The generalized multilevel Picard recursion.
//!
//! ```text
//! Y_{-1,j}^θ = y_{-1},  Y_{0,j}^θ = y_0,
//! Y_{n,j}^θ  = Σ_{l=0}^{n-1} M_j^{-(n-l)} Σ_{i=1}^{M_j^{n-l}} Φ_l(Y_{l,j}^{(θ,l,i)}, Y_{l-1,j}^{(θ,-l,i)}, Z^{(θ,l,i)})
//! ```
//!
//! The noise `Z^{(θ,l,i)}` is drawn from the noise-channel stream at path
//! `θ‖(l,i)`; the two sub-recursions own the subtrees rooted at `θ‖(l,i)` and
//! `θ‖(-l,i)`, whose noise lives at strictly longer paths.

use crate::error::{MlpError, Result};
use crate::rng::{derive_stream, DrawCounter, IndexPath, MasterSeed, StreamState};
use crate::sequence::McSequence;

/// Elements of the ambient vector space the recursion lives in.
pub trait Ambient: Clone {
    fn zero_like(&self) -> Self;
    fn add(&self, other: &Self) -> Self;
    fn scale(&self, factor: f64) -> Self;
    fn is_finite(&self) -> bool;
}

impl Ambient for f64 {
    fn zero_like(&self) -> Self {
        0.0
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn scale(&self, factor: f64) -> Self {
        self * factor
    }
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
}

impl Ambient for Vec<f64> {
    fn zero_like(&self) -> Self {
        vec![0.0; self.len()]
    }
    fn add(&self, other: &Self) -> Self {
        self.iter().zip(other).map(|(a, b)| a + b).collect()
    }
    fn scale(&self, factor: f64) -> Self {
        self.iter().map(|a| a * factor).collect()
    }
    fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

/// One instance of the abstract scheme: dynamics maps `Φ_l`, a sampler for
/// `Z`, and the starting elements `y_{-1}`, `y_0`.
pub trait GmlpInstance {
    type Elem: Ambient;
    type Noise;

    fn sample_noise(&self, stream: &mut StreamState, ledger: &mut DrawCounter) -> Self::Noise;

    fn phi(&self, level: u64, u: &Self::Elem, v: &Self::Elem, z: &Self::Noise) -> Self::Elem;

    fn base_prev(&self) -> Self::Elem;

    fn base_zero(&self) -> Self::Elem;
}

/// Sums `term(lo..hi)` by recursive halving. Terms are produced on demand so
/// that nothing of size `hi - lo` is materialized.
pub(crate) fn pairwise_sum<E, F>(lo: u64, hi: u64, zero: &E, term: &mut F) -> Result<E>
where
    E: Ambient,
    F: FnMut(u64) -> Result<E>,
{
    const LEAF: u64 = 8;
    if hi - lo <= LEAF {
        let mut acc = zero.clone();
        for i in lo..hi {
            acc = acc.add(&term(i)?);
        }
        return Ok(acc);
    }
    let mid = lo + (hi - lo) / 2;
    let left = pairwise_sum(lo, mid, zero, term)?;
    let right = pairwise_sum(mid, hi, zero, term)?;
    Ok(left.add(&right))
}

pub(crate) fn checked_pow(m: u64, e: u64) -> Result<u64> {
    m.checked_pow(e as u32)
        .ok_or_else(|| MlpError::InvalidArgument(format!("M^{e} with M = {m} overflows")))
}

/// Evaluates `Y_{n,j}^θ` for `θ = path`.
pub fn gmlp_evaluate<I: GmlpInstance>(
    inst: &I,
    seq: &McSequence,
    n: i64,
    j: u64,
    path: &IndexPath,
    seed: &MasterSeed,
    ledger: &mut DrawCounter,
) -> Result<I::Elem> {
    if n < -1 {
        return Err(MlpError::InvalidArgument(format!("n = {n} must be ≥ -1")));
    }
    if j == 0 {
        return Err(MlpError::InvalidArgument("j must be ≥ 1".into()));
    }
    let m = seq.try_get(j)?;
    checked_pow(m, n.max(0) as u64)?;
    let mut scratch = path.clone();
    evaluate(inst, m, n, &mut scratch, seed, ledger)
}

fn evaluate<I: GmlpInstance>(
    inst: &I,
    m: u64,
    n: i64,
    path: &mut IndexPath,
    seed: &MasterSeed,
    ledger: &mut DrawCounter,
) -> Result<I::Elem> {
    match n {
        -1 => return Ok(inst.base_prev()),
        0 => return Ok(inst.base_zero()),
        _ => {}
    }
    let base = path.len();
    let zero = inst.base_zero().zero_like();
    let mut total = zero.clone();
    for l in 0..n {
        let count = m.pow((n - l) as u32);
        let mut term = |i: u64| -> Result<I::Elem> {
            let idx = i as i64 + 1;
            path.push_pair(l, idx);
            let mut stream = derive_stream(seed, path);
            let z = inst.sample_noise(&mut stream, ledger);
            let u = evaluate(inst, m, l, path, seed, ledger)?;
            path.truncate(base);
            path.push_pair(-l, idx);
            let v = evaluate(inst, m, l - 1, path, seed, ledger)?;
            path.truncate(base);
            let out = inst.phi(l as u64, &u, &v, &z);
            if !out.is_finite() {
                return Err(MlpError::NonFiniteDynamics { level: l as u64 });
            }
            Ok(out)
        };
        let level_sum = pairwise_sum(0, count, &zero, &mut term)?;
        total = total.add(&level_sum.scale(1.0 / count as f64));
    }
    Ok(total)
}

/// Spot-checks the difference form `Φ_l(u, u, z) = 0` for `l ≥ 1`.
pub fn check_difference_form<I: GmlpInstance>(
    inst: &I,
    probes: &[I::Elem],
    levels: std::ops::RangeInclusive<u64>,
    seed: &MasterSeed,
) -> bool
where
    I::Elem: PartialEq,
{
    let mut ledger = DrawCounter::default();
    for (k, u) in probes.iter().enumerate() {
        for l in levels.clone() {
            let mut stream = derive_stream(seed, &IndexPath::from_slice(&[k as i64, l as i64]));
            let z = inst.sample_noise(&mut stream, &mut ledger);
            let out = inst.phi(l.max(1), u, u, &z);
            if out != u.zero_like() {
                return false;
            }
        }
    }
    true
}

/// Small scalar instances with known expectations.
pub mod synthetic {
    use super::*;

    /// `Φ_0 ≡ k`, `Φ_l ≡ 0` for `l ≥ 1`.
    #[derive(Clone, Copy, Debug)]
    pub struct ConstantPhi(pub f64);

    impl GmlpInstance for ConstantPhi {
        type Elem = f64;
        type Noise = ();

        fn sample_noise(&self, _: &mut StreamState, _: &mut DrawCounter) {}

        fn phi(&self, level: u64, _: &f64, _: &f64, _: &()) -> f64 {
            if level == 0 {
                self.0
            } else {
                0.0
            }
        }

        fn base_prev(&self) -> f64 {
            0.0
        }

        fn base_zero(&self) -> f64 {
            0.0
        }
    }

    /// Scalar fixed point `y = E[z_g] + a E[z_f] y` with `z_g, z_f` uniform:
    /// `Φ_0(u, v, z) = z_g + a z_f u`, `Φ_l(u, v, z) = a z_f (u - v)`.
    ///
    /// `E[Y_n] = μ Σ_{k<n} (a μ)^k` with `μ = 1/2`.
    #[derive(Clone, Copy, Debug)]
    pub struct LinearScalar {
        pub a: f64,
    }

    impl LinearScalar {
        pub fn expected(&self, n: i64) -> f64 {
            (0..n.max(0)).map(|k| 0.5 * (0.5 * self.a).powi(k as i32)).sum()
        }
    }

    impl GmlpInstance for LinearScalar {
        type Elem = f64;
        type Noise = (f64, f64);

        fn sample_noise(&self, stream: &mut StreamState, ledger: &mut DrawCounter) -> (f64, f64) {
            let zg = stream.uniform(ledger);
            let zf = stream.uniform(ledger);
            (zg, zf)
        }

        fn phi(&self, level: u64, u: &f64, v: &f64, z: &(f64, f64)) -> f64 {
            if level == 0 {
                z.0 + self.a * z.1 * u
            } else {
                self.a * z.1 * (u - v)
            }
        }

        fn base_prev(&self) -> f64 {
            0.0
        }

        fn base_zero(&self) -> f64 {
            0.0
        }
    }

    /// `Φ_0(u, v, z) = z` with `z` uniform; `Y_1` is the mean of `M` uniforms.
    #[derive(Clone, Copy, Debug)]
    pub struct UniformMean;

    impl GmlpInstance for UniformMean {
        type Elem = f64;
        type Noise = f64;

        fn sample_noise(&self, stream: &mut StreamState, ledger: &mut DrawCounter) -> f64 {
            stream.uniform(ledger)
        }

        fn phi(&self, level: u64, _: &f64, _: &f64, z: &f64) -> f64 {
            if level == 0 {
                *z
            } else {
                0.0
            }
        }

        fn base_prev(&self) -> f64 {
            0.0
        }

        fn base_zero(&self) -> f64 {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::synthetic::*;
    use super::*;

    fn seed(k: u64) -> MasterSeed {
        MasterSeed::from_u64(1000 + k)
    }

    #[test]
    fn base_levels() {
        let mut l = DrawCounter::default();
        let seq = McSequence::identity();
        let y = gmlp_evaluate(
            &LinearScalar { a: 0.5 },
            &seq,
            0,
            3,
            &IndexPath::root(),
            &seed(0),
            &mut l,
        )
        .unwrap();
        assert_eq!(y, 0.0);
        assert_eq!(l.total(), 0);
        assert!(gmlp_evaluate(
            &LinearScalar { a: 0.5 },
            &seq,
            -2,
            3,
            &IndexPath::root(),
            &seed(0),
            &mut l
        )
        .is_err());
        assert!(gmlp_evaluate(
            &LinearScalar { a: 0.5 },
            &seq,
            1,
            0,
            &IndexPath::root(),
            &seed(0),
            &mut l
        )
        .is_err());
    }

    #[test]
    fn constant_phi_is_exact() {
        let seq = McSequence::explicit(vec![4], 4.0);
        let mut l = DrawCounter::default();
        let y = gmlp_evaluate(&ConstantPhi(2.5), &seq, 1, 1, &IndexPath::root(), &seed(1), &mut l).unwrap();
        assert_eq!(y, 2.5);
    }

    #[test]
    fn uniform_mean_over_seeds() {
        let m = 5u64;
        let seq = McSequence::explicit(vec![m], m as f64);
        let runs = 10_000;
        let mut sum = 0.0;
        for r in 0..runs {
            let mut l = DrawCounter::default();
            sum += gmlp_evaluate(&UniformMean, &seq, 1, 1, &IndexPath::root(), &seed(r), &mut l).unwrap();
            assert_eq!(l.uniforms, m);
        }
        let mean = sum / runs as f64;
        let tol = 3.0 / (12.0 * m as f64 * runs as f64).sqrt();
        assert!((mean - 0.5).abs() <= tol, "mean {mean} tol {tol}");
    }

    #[test]
    fn linear_scalar_bias_matches_partial_sum() {
        let inst = LinearScalar { a: 0.8 };
        let seq = McSequence::identity();
        let n = 3;
        let runs = 4000;
        let ys: Vec<f64> = (0..runs)
            .map(|r| {
                let mut l = DrawCounter::default();
                gmlp_evaluate(&inst, &seq, n, 3, &IndexPath::root(), &seed(r), &mut l).unwrap()
            })
            .collect();
        let mean = ys.iter().sum::<f64>() / runs as f64;
        let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (runs - 1) as f64;
        let se = (var / runs as f64).sqrt();
        let expected = inst.expected(n);
        assert!((mean - expected).abs() <= 3.0 * se, "{mean} vs {expected} (se {se})");
    }

    #[test]
    fn difference_form_holds() {
        assert!(check_difference_form(
            &LinearScalar { a: 0.3 },
            &[0.0, 1.5, -2.0],
            1..=4,
            &seed(3)
        ));
    }

    #[test]
    fn deterministic_given_seed_and_path() {
        let inst = LinearScalar { a: 0.8 };
        let seq = McSequence::identity();
        let mut l1 = DrawCounter::default();
        let mut l2 = DrawCounter::default();
        let p = IndexPath::from_slice(&[0, 4]);
        let a = gmlp_evaluate(&inst, &seq, 3, 3, &p, &seed(9), &mut l1).unwrap();
        let b = gmlp_evaluate(&inst, &seq, 3, 3, &p, &seed(9), &mut l2).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert_eq!(l1, l2);
    }

    #[test]
    fn vector_elements() {
        #[derive(Clone, Copy)]
        struct Pair;
        impl GmlpInstance for Pair {
            type Elem = Vec<f64>;
            type Noise = f64;
            fn sample_noise(&self, s: &mut StreamState, l: &mut DrawCounter) -> f64 {
                s.uniform(l)
            }
            fn phi(&self, level: u64, _: &Vec<f64>, _: &Vec<f64>, z: &f64) -> Vec<f64> {
                if level == 0 {
                    vec![*z, 1.0]
                } else {
                    vec![0.0, 0.0]
                }
            }
            fn base_prev(&self) -> Vec<f64> {
                vec![0.0, 0.0]
            }
            fn base_zero(&self) -> Vec<f64> {
                vec![0.0, 0.0]
            }
        }
        let seq = McSequence::identity();
        let mut l = DrawCounter::default();
        let y = gmlp_evaluate(&Pair, &seq, 2, 2, &IndexPath::root(), &seed(4), &mut l).unwrap();
        assert_eq!(y.len(), 2);
        assert!((y[1] - 1.0).abs() < 1e-15);
    }
}
