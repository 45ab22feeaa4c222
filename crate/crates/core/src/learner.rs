//! Learning harness: hypotheses, query-counted oracle access, two reference
//! learners, and the learner-to-distinguisher test that turns any sufficiently
//! strong learner into a property rejecting structured functions.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::bitfunc::BooleanFunction;
use crate::bits::Bits;
use crate::qsim::{self, QuantumCircuit};
use crate::rng::Stream;

#[derive(Debug, thiserror::Error)]
pub enum LearnerError {
    #[error("gamma = {0} outside (0, 1/2]")]
    BadGamma(f64),
    #[error("reps must be positive")]
    NoReps,
    #[error("hypothesis takes {got} bits, function takes {expected}")]
    Arity { expected: usize, got: usize },
    #[error("num_functions must be positive")]
    NoFunctions,
}

/// Oracle access to a hidden function, counting queries. Classical queries
/// and whole Fourier-sampling rounds each count as one.
pub struct FunctionAccess {
    f: BooleanFunction,
    queries: AtomicU64,
}

impl FunctionAccess {
    pub fn new(f: BooleanFunction) -> Self {
        FunctionAccess { f, queries: AtomicU64::new(0) }
    }

    pub fn n(&self) -> usize {
        self.f.n()
    }

    pub fn query(&self, x: &Bits) -> bool {
        self.queries.fetch_add(1, Ordering::Relaxed);
        self.f.eval(x)
    }

    /// One round of Fourier sampling against the hidden function.
    pub fn fourier_sample(&self, rng: &mut Stream) -> Option<u64> {
        self.queries.fetch_add(1, Ordering::Relaxed);
        qsim::fourier_sample(&self.f, rng)
    }

    pub fn query_count(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }
}

/// A learner's output: an explicit table, a (possibly negated) parity, or a
/// measured circuit.
#[derive(Clone, Debug)]
pub enum Hypothesis {
    TruthTable(BooleanFunction),
    Parity { n: usize, s: u64, negated: bool },
    Quantum { circuit: QuantumCircuit, in_bits: usize, out_wire: usize },
}

impl Hypothesis {
    pub fn n(&self) -> usize {
        match self {
            Hypothesis::TruthTable(f) => f.n(),
            Hypothesis::Parity { n, .. } => *n,
            Hypothesis::Quantum { in_bits, .. } => *in_bits,
        }
    }

    /// Predicts f(x); randomized for the quantum kind. Quantum circuits may
    /// carry ancilla wires beyond the input register; those start at zero.
    pub fn predict(&self, x: &Bits, rng: &mut Stream) -> bool {
        match self {
            Hypothesis::TruthTable(f) => f.eval(x),
            Hypothesis::Parity { s, negated, .. } => {
                ((x.to_u64() & s).count_ones() % 2 == 1) ^ negated
            }
            Hypothesis::Quantum { circuit, in_bits, out_wire } => {
                assert_eq!(x.len(), *in_bits, "hypothesis input width");
                let input = x.concat(&Bits::zeros(circuit.q() - in_bits));
                let (_, mut state) =
                    qsim::run(circuit, &input, rng).expect("hypothesis circuit runs");
                state.measure(*out_wire, rng)
            }
        }
    }
}

/// A learning procedure with its declared advantage target (None when the
/// caller supplies the target per run).
#[derive(Clone)]
pub struct Learner {
    pub gamma: Option<f64>,
    run: Arc<dyn Fn(&FunctionAccess, &mut Stream) -> Option<Hypothesis> + Send + Sync>,
}

impl Learner {
    pub fn new(
        gamma: Option<f64>,
        run: impl Fn(&FunctionAccess, &mut Stream) -> Option<Hypothesis> + Send + Sync + 'static,
    ) -> Self {
        Learner { gamma, run: Arc::new(run) }
    }

    pub fn run(&self, access: &FunctionAccess, rng: &mut Stream) -> Option<Hypothesis> {
        (self.run)(access, rng)
    }
}

/// Queries every input and returns the exact table.
pub fn brute_force_learner() -> Learner {
    Learner::new(Some(0.5), |access, _| {
        let n = access.n();
        Some(Hypothesis::TruthTable(BooleanFunction::from_fn(n, |x| {
            access.query(&Bits::from_u64(x, n))
        })))
    })
}

/// One Fourier-sampling round; on the flagged branch returns the sampled
/// character with a uniformly random sign.
pub fn fourier_sampling_learner() -> Learner {
    Learner::new(None, |access, rng| {
        access
            .fourier_sample(rng)
            .map(|s| Hypothesis::Parity { n: access.n(), s, negated: rng.bit() })
    })
}

/// A learner that ignores the oracle and returns a fixed hypothesis.
pub fn fixed_hypothesis_learner(h: Hypothesis) -> Learner {
    Learner::new(None, move |_, _| Some(h.clone()))
}

/// A learner that never produces a hypothesis.
pub fn never_learner() -> Learner {
    Learner::new(None, |_, _| None)
}

/// Sample count of the agreement test: ceil(gamma^-3) + 100 n.
pub fn natural_property_sample_count(gamma: f64, n: usize) -> u64 {
    (1.0 / gamma).powi(3).ceil() as u64 + 100 * n as u64
}

/// The distinguisher built from a learner. Accept (true) means no structure
/// was found; reject means some repetition produced a hypothesis whose
/// empirical agreement reached 1/2 + gamma/4.
pub fn natural_property_test(
    tt: &BooleanFunction,
    learner: &Learner,
    gamma: f64,
    reps: u32,
    rng: &mut Stream,
) -> Result<bool, LearnerError> {
    if !(gamma > 0.0 && gamma <= 0.5) {
        return Err(LearnerError::BadGamma(gamma));
    }
    if reps == 0 {
        return Err(LearnerError::NoReps);
    }
    let samples = natural_property_sample_count(gamma, tt.n());
    let threshold = 0.5 + gamma / 4.0;
    for _ in 0..reps {
        let access = FunctionAccess::new(tt.clone());
        let Some(h) = learner.run(&access, rng) else { continue };
        if h.n() != tt.n() {
            return Err(LearnerError::Arity { expected: tt.n(), got: h.n() });
        }
        let mut agree = 0u64;
        for _ in 0..samples {
            let x = Bits::random(tt.n(), rng);
            agree += (h.predict(&x, rng) == tt.eval(&x)) as u64;
        }
        if agree as f64 / samples as f64 >= threshold {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Accept fraction of the property over random functions.
pub fn density_experiment(
    n: usize,
    learner: &Learner,
    gamma: f64,
    num_functions: u32,
    rng: &mut Stream,
) -> Result<f64, LearnerError> {
    if num_functions == 0 {
        return Err(LearnerError::NoFunctions);
    }
    let mut accepts = 0u32;
    for _ in 0..num_functions {
        let f = BooleanFunction::random(n, rng.next_u64());
        accepts += natural_property_test(&f, learner, gamma, 8, rng)? as u32;
    }
    Ok(accepts as f64 / num_functions as f64)
}
