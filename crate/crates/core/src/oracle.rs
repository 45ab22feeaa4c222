//! Probabilistic oracles: randomized maps from input strings to output
//! strings, queried through a seeded [`Stream`] so every experiment replays.
//!
//! The correctness-estimation helpers here are shared by the decoders: a 95%
//! confidence interval on agreement with a reference map, and the Chernoff
//! sample-count rule used to size query budgets.

use std::collections::HashSet;
use std::sync::Arc;

use crate::bits::Bits;
use crate::qsim::{self, QsimError, QuantumCircuit};
use crate::rng::Stream;

/// z for a two-sided 95% interval.
const Z_95: f64 = 1.959964;

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("expected {expected}-bit value, got {got} bits")]
    Width { expected: usize, got: usize },
    #[error("probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("{0}")]
    BadParams(String),
    #[error("sample count must be positive")]
    NoSamples,
    #[error(transparent)]
    Qsim(#[from] QsimError),
}

/// Membership predicate for the correct-set V of a subset-correct oracle.
/// `Keyed` is a pseudorandom set of the given density, usable at sizes where
/// an explicit listing will not fit.
#[derive(Clone)]
pub enum SetMembership {
    Explicit(HashSet<Bits>),
    Keyed { key: u64, density: f64 },
}

fn keyed_hash(key: u64, bits: &Bits) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }
    let mut h = mix(key ^ (bits.len() as u64).wrapping_mul(0x9e3779b97f4a7c15));
    for &w in bits.words() {
        h = mix(h ^ w);
    }
    h
}

impl SetMembership {
    pub fn contains(&self, input: &Bits) -> bool {
        match self {
            SetMembership::Explicit(set) => set.contains(input),
            SetMembership::Keyed { key, density } => {
                (keyed_hash(*key, input) as f64 / 2f64.powi(64)) < *density
            }
        }
    }
}

/// A randomized map {0,1}^in -> {0,1}^out. Queries draw fresh randomness from
/// the caller's stream; two queries on the same input are independent unless
/// the oracle is deterministic.
#[derive(Clone)]
pub struct ProbabilisticOracle {
    in_bits: usize,
    out_bits: usize,
    deterministic: bool,
    query_fn: Arc<dyn Fn(&Bits, &mut Stream) -> Bits + Send + Sync>,
}

impl std::fmt::Debug for ProbabilisticOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProbabilisticOracle")
            .field("in_bits", &self.in_bits)
            .field("out_bits", &self.out_bits)
            .field("deterministic", &self.deterministic)
            .finish_non_exhaustive()
    }
}

impl ProbabilisticOracle {
    pub fn from_parts(
        in_bits: usize,
        out_bits: usize,
        deterministic: bool,
        query_fn: impl Fn(&Bits, &mut Stream) -> Bits + Send + Sync + 'static,
    ) -> Self {
        assert!(out_bits >= 1, "oracles must produce at least one bit");
        ProbabilisticOracle { in_bits, out_bits, deterministic, query_fn: Arc::new(query_fn) }
    }

    pub fn deterministic_fn(
        in_bits: usize,
        out_bits: usize,
        f: impl Fn(&Bits) -> Bits + Send + Sync + 'static,
    ) -> Self {
        Self::from_parts(in_bits, out_bits, true, move |x, _| f(x))
    }

    /// Single-output-bit oracle computing the given truth table.
    pub fn from_bool_fn(f: &crate::bitfunc::BooleanFunction) -> Self {
        let f = f.clone();
        Self::deterministic_fn(f.n(), 1, move |x| Bits::from_bools(&[f.eval(x)]))
    }

    /// Ignores its input and answers uniformly.
    pub fn uniform(in_bits: usize, out_bits: usize) -> Self {
        Self::from_parts(in_bits, out_bits, false, move |_, rng| Bits::random(out_bits, rng))
    }

    pub fn in_bits(&self) -> usize {
        self.in_bits
    }

    pub fn out_bits(&self) -> usize {
        self.out_bits
    }

    pub fn is_deterministic(&self) -> bool {
        self.deterministic
    }

    pub fn query(&self, input: &Bits, rng: &mut Stream) -> Bits {
        assert_eq!(input.len(), self.in_bits, "query width mismatch");
        let out = (self.query_fn)(input, rng);
        debug_assert_eq!(out.len(), self.out_bits);
        out
    }

    /// Answers like `base` on V and uniformly off V. Explicit members must
    /// match the base oracle's input width.
    pub fn subset_correct(
        base: ProbabilisticOracle,
        correct_set: SetMembership,
    ) -> Result<Self, OracleError> {
        match &correct_set {
            SetMembership::Explicit(set) => {
                if let Some(bad) = set.iter().find(|b| b.len() != base.in_bits) {
                    return Err(OracleError::Width { expected: base.in_bits, got: bad.len() });
                }
            }
            SetMembership::Keyed { density, .. } => {
                if !(0.0..=1.0).contains(density) {
                    return Err(OracleError::BadProbability(*density));
                }
            }
        }
        let (in_bits, out_bits) = (base.in_bits, base.out_bits);
        Ok(Self::from_parts(in_bits, out_bits, false, move |x, rng| {
            if correct_set.contains(x) {
                base.query(x, rng)
            } else {
                Bits::random(out_bits, rng)
            }
        }))
    }

    /// Answers like `base` with probability p, otherwise deliberately wrong:
    /// the complement for one-bit outputs, a uniform draw conditioned on
    /// differing otherwise.
    pub fn spread(base: ProbabilisticOracle, p: f64) -> Result<Self, OracleError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(OracleError::BadProbability(p));
        }
        let (in_bits, out_bits) = (base.in_bits, base.out_bits);
        Ok(Self::from_parts(in_bits, out_bits, false, move |x, rng| {
            let truth = base.query(x, rng);
            if rng.chance(p) {
                return truth;
            }
            if out_bits == 1 {
                let mut w = truth;
                w.flip(0);
                return w;
            }
            loop {
                let cand = Bits::random(out_bits, rng);
                if cand != truth {
                    return cand;
                }
            }
        }))
    }

    /// Wraps a circuit as an oracle: run on |input, 0...>, then read out the
    /// listed wires by measurement, in order.
    pub fn quantum_wrapped(
        circuit: QuantumCircuit,
        in_bits: usize,
        out_wires: Vec<usize>,
    ) -> Result<Self, OracleError> {
        if in_bits > circuit.q() {
            return Err(OracleError::Qsim(QsimError::InputLength {
                input: in_bits,
                q: circuit.q(),
            }));
        }
        if out_wires.is_empty() {
            return Err(OracleError::BadParams("no output wires listed".into()));
        }
        for &w in &out_wires {
            if w >= circuit.q() {
                return Err(OracleError::Qsim(QsimError::WireRange { wire: w, q: circuit.q() }));
            }
        }
        let out_bits = out_wires.len();
        Ok(Self::from_parts(in_bits, out_bits, false, move |x, rng| {
            let (_, mut state) = qsim::run(&circuit, x, rng).expect("validated circuit");
            let mut out = Bits::zeros(0);
            for &w in &out_wires {
                out.push(state.measure(w, rng));
            }
            out
        }))
    }

    /// With probability 2^-in_bits replaces the answer with a uniform draw.
    pub fn with_uniform_perturbation(self) -> Self {
        let (in_bits, out_bits) = (self.in_bits, self.out_bits);
        let p = 2f64.powi(-(in_bits as i32));
        Self::from_parts(in_bits, out_bits, false, move |x, rng| {
            if rng.chance(p) {
                Bits::random(out_bits, rng)
            } else {
                self.query(x, rng)
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CorrelationEstimate {
    /// Empirical agreement probability.
    pub point: f64,
    /// Half-width of a 95% interval around the point.
    pub half_width: f64,
    pub samples: u64,
}

/// Estimates Pr over uniform inputs and oracle randomness that the oracle
/// agrees with `target`. With fewer than 10 observed agreements the normal
/// interval collapses, so a Wilson interval is used there.
pub fn estimate_correlation(
    oracle: &ProbabilisticOracle,
    target: &dyn Fn(&Bits) -> Bits,
    num_samples: u64,
    seed: u64,
) -> Result<CorrelationEstimate, OracleError> {
    if num_samples == 0 {
        return Err(OracleError::NoSamples);
    }
    let mut rng = Stream::keyed(seed, 0x636f7272);
    let mut agree = 0u64;
    for _ in 0..num_samples {
        let x = Bits::random(oracle.in_bits(), &mut rng);
        let want = target(&x);
        if want.len() != oracle.out_bits() {
            return Err(OracleError::Width { expected: oracle.out_bits(), got: want.len() });
        }
        if oracle.query(&x, &mut rng) == want {
            agree += 1;
        }
    }
    let p = agree as f64 / num_samples as f64;
    Ok(CorrelationEstimate {
        point: p,
        half_width: estimate_half_width(p, num_samples),
        samples: num_samples,
    })
}

/// 95% interval half-width for a proportion: normal approximation, switching
/// to the Wilson score interval when either outcome was seen < 10 times.
pub fn estimate_half_width(point: f64, samples: u64) -> f64 {
    let n = samples as f64;
    let successes = point * n;
    if successes < 10.0 || n - successes < 10.0 {
        let z2 = Z_95 * Z_95;
        Z_95 * (point * (1.0 - point) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n)
    } else {
        Z_95 * (point * (1.0 - point) / n).sqrt()
    }
}

/// Samples needed so that an empirical mean of i.i.d. [0,1] draws with mean mu
/// stays within relative error delta except with the stated failure
/// probability: ceil(2 ln(1/fail) / (delta^2 mu)).
pub fn chernoff_samples(delta: f64, mu: f64, fail: f64) -> Result<u64, OracleError> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(OracleError::BadParams(format!("relative error {delta} outside (0, 1]")));
    }
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(OracleError::BadParams(format!("mean {mu} outside (0, 1]")));
    }
    if !(fail > 0.0 && fail < 1.0) {
        return Err(OracleError::BadParams(format!("failure bound {fail} outside (0, 1)")));
    }
    Ok((2.0 * (1.0 / fail).ln() / (delta * delta * mu)).ceil() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitfunc::BooleanFunction;
    use crate::qsim::function_oracle_circuit;

    #[test]
    fn deterministic_oracle_repeats_itself() {
        let f = BooleanFunction::random(5, 1);
        let o = ProbabilisticOracle::from_bool_fn(&f);
        let mut rng = Stream::new(1);
        for x in 0..32u64 {
            let xb = Bits::from_u64(x, 5);
            let a = o.query(&xb, &mut rng);
            let b = o.query(&xb, &mut rng);
            assert_eq!(a, b);
            assert_eq!(a.get(0), f.get(x));
        }
        assert!(o.is_deterministic());
    }

    #[test]
    fn spread_one_is_the_base_and_zero_is_the_complement() {
        let f = BooleanFunction::random(4, 2);
        let mut rng = Stream::new(2);
        let sure = ProbabilisticOracle::spread(ProbabilisticOracle::from_bool_fn(&f), 1.0).unwrap();
        let never =
            ProbabilisticOracle::spread(ProbabilisticOracle::from_bool_fn(&f), 0.0).unwrap();
        for x in 0..16u64 {
            let xb = Bits::from_u64(x, 4);
            assert_eq!(sure.query(&xb, &mut rng).get(0), f.get(x));
            assert_eq!(never.query(&xb, &mut rng).get(0), !f.get(x));
        }
        assert!(!sure.is_deterministic());
    }

    #[test]
    fn spread_rate_matches_p() {
        let f = BooleanFunction::random(6, 3);
        let o = ProbabilisticOracle::spread(ProbabilisticOracle::from_bool_fn(&f), 0.3).unwrap();
        let mut rng = Stream::new(3);
        let x = Bits::from_u64(41, 6);
        let mut correct = 0u32;
        const RUNS: u32 = 100_000;
        for _ in 0..RUNS {
            correct += (o.query(&x, &mut rng).get(0) == f.get(41)) as u32;
        }
        let rate = correct as f64 / RUNS as f64;
        assert!((rate - 0.3).abs() < 0.01, "rate {rate}");
    }

    #[test]
    fn spread_multibit_answers_never_equal_truth_when_wrong() {
        let base = ProbabilisticOracle::deterministic_fn(3, 4, |x| {
            Bits::from_u64(x.to_u64() * 3 % 16, 4)
        });
        let o = ProbabilisticOracle::spread(base, 0.0).unwrap();
        let mut rng = Stream::new(4);
        for x in 0..8u64 {
            let xb = Bits::from_u64(x, 3);
            let truth = Bits::from_u64(x * 3 % 16, 4);
            for _ in 0..50 {
                assert_ne!(o.query(&xb, &mut rng), truth);
            }
        }
    }

    #[test]
    fn subset_correct_is_exact_on_v_and_noisy_off_it() {
        let f = BooleanFunction::parity(4);
        let v: HashSet<Bits> = [0u64, 3, 7, 12].iter().map(|&x| Bits::from_u64(x, 4)).collect();
        let o = ProbabilisticOracle::subset_correct(
            ProbabilisticOracle::from_bool_fn(&f),
            SetMembership::Explicit(v.clone()),
        )
        .unwrap();
        let mut rng = Stream::new(5);
        for x in v {
            for _ in 0..20 {
                assert_eq!(o.query(&x, &mut rng).get(0), f.eval(&x));
            }
        }
        // Off V the answer must be a coin flip.
        let off = Bits::from_u64(5, 4);
        let mut ones = 0u32;
        for _ in 0..10_000 {
            ones += o.query(&off, &mut rng).get(0) as u32;
        }
        let rate = ones as f64 / 10_000.0;
        assert!((rate - 0.5).abs() < 0.02, "rate {rate}");
    }

    #[test]
    fn subset_correct_rejects_misfit_members() {
        let f = BooleanFunction::parity(4);
        let v: HashSet<Bits> = [Bits::from_u64(1, 3)].into_iter().collect();
        let err = ProbabilisticOracle::subset_correct(
            ProbabilisticOracle::from_bool_fn(&f),
            SetMembership::Explicit(v),
        );
        assert!(matches!(err, Err(OracleError::Width { expected: 4, got: 3 })));
    }

    #[test]
    fn keyed_membership_hits_its_density() {
        let m = SetMembership::Keyed { key: 99, density: 0.25 };
        let mut inside = 0u32;
        const N: u64 = 1 << 16;
        for x in 0..N {
            inside += m.contains(&Bits::from_u64(x, 16)) as u32;
        }
        let rate = inside as f64 / N as f64;
        assert!((rate - 0.25).abs() < 0.01, "rate {rate}");
    }

    #[test]
    fn keyed_subset_correlation_matches_expectation() {
        // Agreement = density + (1 - density) * 2^-k for k output bits. A
        // 16-bit domain keeps the realized keyed density close to nominal.
        let base = ProbabilisticOracle::deterministic_fn(16, 8, |x| {
            Bits::from_u64(x.to_u64().wrapping_mul(0x2545f491) & 0xff, 8)
        });
        let reference = {
            move |x: &Bits| Bits::from_u64(x.to_u64().wrapping_mul(0x2545f491) & 0xff, 8)
        };
        let o = ProbabilisticOracle::subset_correct(
            base,
            SetMembership::Keyed { key: 7, density: 0.25 },
        )
        .unwrap();
        let est = estimate_correlation(&o, &reference, 100_000, 11).unwrap();
        let expect = 0.25 + 0.75 / 256.0;
        assert!((est.point - expect).abs() < 0.01, "point {}", est.point);
        assert!(est.half_width < 0.005, "half width {}", est.half_width);
    }

    #[test]
    fn correlation_of_oracle_with_itself_is_one() {
        let f = BooleanFunction::random(6, 9);
        let o = ProbabilisticOracle::from_bool_fn(&f);
        let g = f.clone();
        let est =
            estimate_correlation(&o, &move |x: &Bits| Bits::from_bools(&[g.eval(x)]), 2_000, 1)
                .unwrap();
        assert_eq!(est.point, 1.0);
        assert!(est.half_width < 0.01, "degenerate interval stays tight");
    }

    #[test]
    fn correlation_of_junk_with_anything_is_half() {
        let o = ProbabilisticOracle::uniform(6, 1);
        let est = estimate_correlation(
            &o,
            &|_: &Bits| Bits::from_bools(&[true]),
            100_000,
            2,
        )
        .unwrap();
        assert!((est.point - 0.5).abs() < 0.01, "point {}", est.point);
        let normal = Z_95 * (est.point * (1.0 - est.point) / 1e5).sqrt();
        assert!((est.half_width - normal).abs() < 1e-12);
    }

    #[test]
    fn correlation_interval_covers_truth() {
        // 100 independent estimates of a known rate; >= 97 must cover at 3 half-widths.
        let f = BooleanFunction::random(5, 12);
        let g = f.clone();
        let o = ProbabilisticOracle::spread(ProbabilisticOracle::from_bool_fn(&f), 0.75).unwrap();
        let mut covered = 0u32;
        for seed in 0..100 {
            let est = estimate_correlation(
                &o,
                &{
                    let g = g.clone();
                    move |x: &Bits| Bits::from_bools(&[g.eval(x)])
                },
                2_000,
                seed,
            )
            .unwrap();
            if (est.point - 0.75).abs() <= 3.0 * est.half_width {
                covered += 1;
            }
        }
        assert!(covered >= 97, "covered {covered}/100");
    }

    #[test]
    fn correlation_rejects_width_mismatch_and_zero_samples() {
        let o = ProbabilisticOracle::uniform(4, 2);
        let err = estimate_correlation(&o, &|_: &Bits| Bits::from_bools(&[true]), 10, 0);
        assert!(matches!(err, Err(OracleError::Width { expected: 2, got: 1 })));
        let err = estimate_correlation(&o, &|_: &Bits| Bits::zeros(2), 0, 0);
        assert!(matches!(err, Err(OracleError::NoSamples)));
    }

    #[test]
    fn successive_queries_are_independent() {
        // Chi-squared independence on a 4x4 contingency table of successive
        // 2-bit answers; 1% critical value at 9 degrees of freedom.
        let o = ProbabilisticOracle::uniform(3, 2);
        let x = Bits::from_u64(5, 3);
        let mut rng = Stream::new(21);
        let mut table = [[0u64; 4]; 4];
        const PAIRS: u64 = 100_000;
        for _ in 0..PAIRS {
            let a = o.query(&x, &mut rng).to_u64() as usize;
            let b = o.query(&x, &mut rng).to_u64() as usize;
            table[a][b] += 1;
        }
        let row: Vec<f64> = (0..4).map(|i| table[i].iter().sum::<u64>() as f64).collect();
        let col: Vec<f64> = (0..4).map(|j| (0..4).map(|i| table[i][j]).sum::<u64>() as f64).collect();
        let mut chi2 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                let e = row[i] * col[j] / PAIRS as f64;
                let d = table[i][j] as f64 - e;
                chi2 += d * d / e;
            }
        }
        assert!(chi2 < 21.67, "chi2 {chi2}");
    }

    #[test]
    fn chernoff_frozen_values() {
        assert_eq!(chernoff_samples(1.0, 1.0, (-2f64).exp()).unwrap(), 4);
        assert_eq!(chernoff_samples(0.5, 0.5, 0.01).unwrap(), 74);
        // Halving delta exactly quadruples the count when no rounding hides it.
        assert_eq!(chernoff_samples(0.5, 1.0, (-2f64).exp()).unwrap(), 16);
        assert!(chernoff_samples(0.0, 0.5, 0.1).is_err());
        assert!(chernoff_samples(0.5, 0.0, 0.1).is_err());
        assert!(chernoff_samples(0.5, 0.5, 1.0).is_err());
    }

    #[test]
    fn quantum_wrapped_matches_the_classical_table() {
        let f = BooleanFunction::random(3, 30);
        let c = function_oracle_circuit(&f);
        let o = ProbabilisticOracle::quantum_wrapped(c, 3, vec![3]).unwrap();
        let mut rng = Stream::new(6);
        for x in 0..8u64 {
            let xb = Bits::from_u64(x, 3);
            for _ in 0..5 {
                assert_eq!(o.query(&xb, &mut rng).get(0), f.get(x));
            }
        }
    }

    #[test]
    fn quantum_wrapped_validates_wires() {
        let f = BooleanFunction::random(2, 0);
        let c = function_oracle_circuit(&f);
        assert!(ProbabilisticOracle::quantum_wrapped(c.clone(), 2, vec![7]).is_err());
        assert!(ProbabilisticOracle::quantum_wrapped(c.clone(), 9, vec![2]).is_err());
        assert!(ProbabilisticOracle::quantum_wrapped(c, 2, vec![]).is_err());
    }

    #[test]
    fn perturbation_rate_is_two_to_minus_n() {
        let f = BooleanFunction::constant(3, true);
        let o = ProbabilisticOracle::from_bool_fn(&f).with_uniform_perturbation();
        let mut rng = Stream::new(14);
        let x = Bits::from_u64(0, 3);
        let mut zeros = 0u32;
        const RUNS: u32 = 200_000;
        for _ in 0..RUNS {
            zeros += !o.query(&x, &mut rng).get(0) as u32;
        }
        // Answer flips only on a perturbed draw that lands 0: rate 2^-3 / 2.
        let rate = zeros as f64 / RUNS as f64;
        assert!((rate - 0.0625).abs() < 0.003, "rate {rate}");
    }
}
