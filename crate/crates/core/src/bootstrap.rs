//! Self-reducibility machinery and the PRG bootstrapping pipeline at toy
//! scale: worst-case correction by random self-reduction, level lifting by
//! downward self-reduction, referee-based candidate selection, and the
//! end-to-end step that turns a distinguisher into a circuit for the next
//! level. PARITY plays the self-reducible language throughout.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bitfunc::BooleanFunction;
use crate::bits::Bits;
use crate::designs::{build_design_in_universe, build_design_with_constant, Design, DesignError};
use crate::direct_product::{decode_query, sample_decoder, DpError, DpParams};
use crate::nw::{reconstruct_predictor_with_access, NwError, NwGenerator};
use crate::oracle::ProbabilisticOracle;
use crate::qsim::{function_oracle_circuit, gl_decode, tuple_dot_function, QsimError};
use crate::rng::Stream;

#[derive(Debug, thiserror::Error)]
pub enum BootstrapError {
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Nw(#[from] NwError),
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error(transparent)]
    Qsim(#[from] QsimError),
    #[error("{0}")]
    BadParams(String),
}

/// A language family that is both downward- and random-self-reducible.
/// `downward` computes f_n(x) from oracle answers at length n-1; the random
/// reduction is the (g, h) pair: `rand_queries` produces the a query points
/// g(i, x, r) (each marginally uniform), `recombine` is h.
#[derive(Clone)]
pub struct SelfReducibleSpec {
    pub name: &'static str,
    /// Number of random-reduction queries.
    pub a: u32,
    pub b: u32,
    pub d: u32,
    downward: Arc<dyn Fn(&Bits, &mut dyn FnMut(&Bits) -> bool) -> bool + Send + Sync>,
    rand_queries: Arc<dyn Fn(&Bits, &Bits) -> Vec<Bits> + Send + Sync>,
    recombine: Arc<dyn Fn(&Bits, &Bits, &[bool]) -> bool + Send + Sync>,
    randomness_len: Arc<dyn Fn(usize) -> usize + Send + Sync>,
}

impl SelfReducibleSpec {
    pub fn downward(&self, x: &Bits, answer: &mut dyn FnMut(&Bits) -> bool) -> bool {
        (self.downward)(x, answer)
    }

    pub fn rand_queries(&self, x: &Bits, r: &Bits) -> Vec<Bits> {
        (self.rand_queries)(x, r)
    }

    pub fn recombine(&self, x: &Bits, r: &Bits, answers: &[bool]) -> bool {
        (self.recombine)(x, r, answers)
    }

    pub fn randomness_len(&self, n: usize) -> usize {
        (self.randomness_len)(n)
    }
}

/// PARITY: f_n(x) = x_1 xor ... xor x_n. Downward reduction peels the last
/// bit; the random reduction splits x into x xor r and r.
pub fn parity_spec() -> SelfReducibleSpec {
    SelfReducibleSpec {
        name: "parity",
        a: 2,
        b: 1,
        d: 1,
        downward: Arc::new(|x, answer| {
            assert!(!x.is_empty(), "downward reduction needs a nonempty input");
            let n = x.len();
            answer(&x.slice(0, n - 1)) ^ x.get(n - 1)
        }),
        rand_queries: Arc::new(|x, r| vec![x.xor(r), r.clone()]),
        recombine: Arc::new(|_, _, answers| answers[0] ^ answers[1]),
        randomness_len: Arc::new(|n| n),
    }
}

/// Vote count pushing a 2/3-correct answer below the target failure
/// probability: 2 ceil(6 ln(1/target)) + 1.
pub fn majority_votes(target: f64) -> u32 {
    assert!(target > 0.0 && target < 1.0, "target failure probability in (0,1)");
    2 * (6.0 * (1.0 / target).ln()).ceil() as u32 + 1
}

fn bool_query(o: &ProbabilisticOracle, x: &Bits, rng: &mut Stream) -> bool {
    o.query(x, rng).get(0)
}

/// Majority of `votes` oracle calls with sequential early exit.
fn majority_query(o: &ProbabilisticOracle, x: &Bits, votes: u32, rng: &mut Stream) -> bool {
    let need = votes / 2 + 1;
    let mut yes = 0u32;
    let mut no = 0u32;
    loop {
        if bool_query(o, x, rng) {
            yes += 1;
            if yes >= need {
                return true;
            }
        } else {
            no += 1;
            if no >= need {
                return false;
            }
        }
    }
}

/// Worst-case correction with explicit vote counts: `outer` random
/// reductions, each querying a majority-of-`inner` amplified copy of U.
pub fn rsr_amplify_with(
    u: &ProbabilisticOracle,
    spec: &SelfReducibleSpec,
    outer: u32,
    inner: u32,
) -> ProbabilisticOracle {
    assert!(outer >= 1 && inner >= 1);
    assert_eq!(u.out_bits(), 1, "random self-reduction corrects decision oracles");
    let n = u.in_bits();
    let c = spec.randomness_len(n);
    let u = u.clone();
    let spec = spec.clone();
    ProbabilisticOracle::from_parts(n, 1, false, move |x, rng| {
        let mut ones = 0u32;
        for _ in 0..outer {
            let r = Bits::random(c, rng);
            let queries = spec.rand_queries(x, &r);
            let answers: Vec<bool> =
                queries.iter().map(|q| majority_query(&u, q, inner, rng)).collect();
            ones += spec.recombine(x, &r, &answers) as u32;
        }
        Bits::from_bools(&[2 * ones > outer])
    })
}

/// Worst-case correction at default vote counts: on an oracle that is right
/// on most inputs on average, the result is right on every input with
/// probability at least 1 - 2^{-n}.
pub fn rsr_amplify(u: &ProbabilisticOracle, spec: &SelfReducibleSpec) -> ProbabilisticOracle {
    let votes = majority_votes(2f64.powi(-(u.in_bits() as i32)));
    rsr_amplify_with(u, spec, votes, votes)
}

/// Downward lift with an explicit vote count: every query of the downward
/// reduction is answered by a majority over `votes` calls to P_prev.
pub fn dsr_lift_with_votes(
    p_prev: &ProbabilisticOracle,
    spec: &SelfReducibleSpec,
    votes: u32,
) -> ProbabilisticOracle {
    assert!(votes >= 1);
    assert_eq!(p_prev.out_bits(), 1);
    let n = p_prev.in_bits() + 1;
    let p = p_prev.clone();
    let spec = spec.clone();
    ProbabilisticOracle::from_parts(n, 1, false, move |x, rng| {
        let out = spec.downward(x, &mut |q| {
            assert!(q.len() < x.len(), "downward reduction must shorten queries");
            assert_eq!(q.len(), p.in_bits(), "downward queries go one level down");
            majority_query(&p, q, votes, rng)
        });
        Bits::from_bools(&[out])
    })
}

/// Downward lift at the default vote count (per-query failure target 0.1):
/// a 2/3-correct P_prev yields a 2/3-correct oracle one level up.
pub fn dsr_lift(p_prev: &ProbabilisticOracle, spec: &SelfReducibleSpec) -> ProbabilisticOracle {
    dsr_lift_with_votes(p_prev, spec, majority_votes(0.1))
}

/// Candidate selection with explicit vote counts. Agreement with the lifted
/// referee is counted on fresh points per candidate; the survivor set is
/// J = {l : 4 agree >= 3 R} and the smallest index wins. Returns the winner's
/// index alongside its worst-case-corrected form.
pub fn select_candidate_with(
    p_prev: &ProbabilisticOracle,
    candidates: &[ProbabilisticOracle],
    r_points: u64,
    spec: &SelfReducibleSpec,
    lift_votes: u32,
    rsr_outer: u32,
    rsr_inner: u32,
    rng: &mut Stream,
) -> Option<(usize, ProbabilisticOracle)> {
    assert!(r_points >= 1);
    let n = p_prev.in_bits() + 1;
    let referee = dsr_lift_with_votes(p_prev, spec, lift_votes);
    for (idx, cand) in candidates.iter().enumerate() {
        assert_eq!(cand.in_bits(), n, "candidate width mismatch");
        let mut agree = 0u64;
        for _ in 0..r_points {
            let x = Bits::random(n, rng);
            agree += (bool_query(cand, &x, rng) == bool_query(&referee, &x, rng)) as u64;
        }
        if 4 * agree >= 3 * r_points {
            return Some((idx, rsr_amplify_with(cand, spec, rsr_outer, rsr_inner)));
        }
    }
    None
}

/// Candidate selection at default vote counts.
pub fn select_candidate(
    p_prev: &ProbabilisticOracle,
    candidates: &[ProbabilisticOracle],
    r_points: u64,
    spec: &SelfReducibleSpec,
    rng: &mut Stream,
) -> Option<ProbabilisticOracle> {
    let n = p_prev.in_bits() + 1;
    let rsr = majority_votes(2f64.powi(-(n as i32)));
    select_candidate_with(
        p_prev,
        candidates,
        r_points,
        spec,
        majority_votes(0.1),
        rsr,
        rsr,
        rng,
    )
    .map(|(_, oracle)| oracle)
}

/// How the generator's design is built.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub enum DesignShape {
    /// Universe size m = c n^2, doubled on infeasibility.
    Standard { c: usize },
    /// Exact universe size.
    Universe { m: usize },
}

fn build_shaped_design(n: usize, t: usize, shape: DesignShape) -> Result<Design, DesignError> {
    match shape {
        DesignShape::Standard { c } => build_design_with_constant(n, t, c),
        DesignShape::Universe { m } => build_design_in_universe(n, t, m),
    }
}

/// The level generator: h(x_1..x_k, r) = XOR_i f(x_i) r_i pushed through a
/// fresh design on kn+k bit windows.
pub fn build_io_generator(
    f: &BooleanFunction,
    k: usize,
    t: usize,
    shape: DesignShape,
) -> Result<NwGenerator, BootstrapError> {
    if k == 0 {
        return Err(BootstrapError::BadParams("k must be positive".into()));
    }
    let n2 = f.n() * k + k;
    if n2 > 22 {
        return Err(BootstrapError::BadParams(format!(
            "kn+k = {n2} exceeds the 22-bit exhaustive-testing cap"
        )));
    }
    let h = tuple_dot_function(f, k);
    let design = build_shaped_design(n2, t, shape)?;
    Ok(NwGenerator::new(h, design)?)
}

/// A parameter value used in place of a paper formula, recorded in reports.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParamOverride {
    pub name: String,
    pub value: String,
    pub paper_formula: String,
}

/// One pipeline level's knobs, all explicit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineParams {
    pub lambda_exp: u32,
    pub k: usize,
    /// Generator output length; doubles as the candidate-slot count.
    pub t: usize,
    /// Assumed distinguisher advantage.
    pub gamma: f64,
    pub epsilon_prime: f64,
    pub delta: f64,
    /// Decoder iterations per query.
    pub t_iters: u64,
    /// Referee comparison points per candidate.
    pub r_points: u64,
    pub design: DesignShape,
    /// Keep a reconstructed predictor only if its agreement with the lifted
    /// reference reaches this.
    pub predictor_threshold: f64,
    pub lift_votes: u32,
    pub rsr_votes: u32,
    pub decoders_per_candidate: u32,
    pub overrides: Vec<ParamOverride>,
}

impl PipelineParams {
    /// Toy schedule exercising every stage; each value that replaces a
    /// formula is recorded. Works at any level with 2(j+1) <= 20 bit windows.
    pub fn toy() -> Self {
        let over = |name: &str, value: String, formula: &str| ParamOverride {
            name: name.into(),
            value,
            paper_formula: formula.into(),
        };
        PipelineParams {
            lambda_exp: 1,
            k: 2,
            t: 20,
            gamma: 1.0 - 2f64.powi(-4),
            epsilon_prime: 0.25,
            delta: 0.25,
            t_iters: 16,
            r_points: 64,
            design: DesignShape::Universe { m: 16 },
            predictor_threshold: 0.95,
            lift_votes: 1,
            rsr_votes: 1,
            decoders_per_candidate: 2,
            overrides: vec![
                over("k", "2".into(), "k(j) = 2 j^(2b+a+d+2)"),
                over("m", "16".into(), "m = 16 (kj+k)^2"),
                over("t", "20".into(), "t(j): level output-length schedule (asymptotic)"),
                over("epsilon_prime", "0.25".into(), "eps'(j) = 2^(-10 j^lambda)"),
                over("delta", "0.25".into(), "delta(j) = j^(-2b-a)"),
                over("t_iters", "16".into(), "T = ceil(32 ln(1/delta) / eps'^2)"),
                over("r_points", "64".into(), "R = O(j^(2b+a) log j) comparison points"),
                over(
                    "predictor_threshold",
                    "0.95".into(),
                    "keep predictors with advantage gamma/(2t) over 1/2",
                ),
                over("votes", "1".into(), "2 ceil(6 ln(1/target)) + 1 majority votes"),
            ],
        }
    }

    fn validate(&self) -> Result<(), BootstrapError> {
        let bad = |msg: String| Err(BootstrapError::BadParams(msg));
        if self.k == 0 || self.k % 2 != 0 {
            return bad(format!("k = {} must be positive and even", self.k));
        }
        if self.t == 0 {
            return bad("t must be positive".into());
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma = {} outside (0,1)", self.gamma));
        }
        if !(self.epsilon_prime > 0.0 && self.epsilon_prime < 1.0) {
            return bad(format!("epsilon' = {} outside (0,1)", self.epsilon_prime));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta = {} outside (0,1)", self.delta));
        }
        if !(self.predictor_threshold > 0.5 && self.predictor_threshold <= 1.0) {
            return bad(format!(
                "predictor threshold {} outside (1/2,1]",
                self.predictor_threshold
            ));
        }
        if self.t_iters == 0
            || self.r_points == 0
            || self.lift_votes == 0
            || self.rsr_votes == 0
            || self.decoders_per_candidate == 0
        {
            return bad("iteration, point, and vote counts must be positive".into());
        }
        if self.lambda_exp == 0 {
            return bad("lambda exponent must be positive".into());
        }
        Ok(())
    }
}

pub const STAGE_RECONSTRUCTION: &str = "nw-reconstruction";
pub const STAGE_GL: &str = "gl-decode";
pub const STAGE_DP: &str = "direct-product";
pub const STAGE_SELECT: &str = "select-candidate";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageReport {
    pub name: String,
    pub attempts: u64,
    pub accepted: u64,
    pub budget_used: u64,
    /// Stage-specific quality figure: best predictor agreement for
    /// reconstruction, mean decode rate for the list-decoding stages.
    pub quality: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineReport {
    pub level: usize,
    pub stages: Vec<StageReport>,
    /// First stage that ran out of budget before producing anything.
    pub starved: Option<String>,
    pub overrides: Vec<ParamOverride>,
    /// Referee answers were not self-consistent; the selection cannot be
    /// trusted.
    pub referee_unreliable: bool,
    pub selected: Option<usize>,
    pub budget_used: u64,
    pub budget_limit: u64,
}

struct Meter {
    used: Arc<AtomicU64>,
    limit: u64,
}

impl Meter {
    fn new(limit: u64) -> Self {
        Meter { used: Arc::new(AtomicU64::new(0)), limit }
    }

    fn wrap(&self, o: &ProbabilisticOracle) -> ProbabilisticOracle {
        let used = Arc::clone(&self.used);
        let inner = o.clone();
        ProbabilisticOracle::from_parts(
            inner.in_bits(),
            inner.out_bits(),
            inner.is_deterministic(),
            move |x, rng| {
                used.fetch_add(1, Ordering::Relaxed);
                inner.query(x, rng)
            },
        )
    }

    fn counter(&self) -> Arc<AtomicU64> {
        Arc::clone(&self.used)
    }

    fn used(&self) -> u64 {
        self.used.load(Ordering::Relaxed)
    }

    fn over(&self) -> bool {
        self.used() >= self.limit
    }
}

/// One bootstrapping level: from an oracle for level j-1 and a distinguisher
/// against the level generator, produce an oracle for level j. Stages run in
/// order (reconstruction, decoding, list decoding, selection); the budget
/// counts queries to P_prev and D plus decoder invocations, and the first
/// stage that ends empty-handed with the budget spent is named in the report.
/// The self-reducible language is PARITY.
pub fn pipeline_step(
    j: usize,
    p_prev: &ProbabilisticOracle,
    d: &ProbabilisticOracle,
    params: &PipelineParams,
    rng: &mut Stream,
    budget: u64,
) -> Result<(Option<ProbabilisticOracle>, PipelineReport), BootstrapError> {
    params.validate()?;
    let spec = parity_spec();
    if j == 0 {
        return Err(BootstrapError::BadParams("levels start at 1".into()));
    }
    if p_prev.in_bits() + 1 != j || p_prev.out_bits() != 1 {
        return Err(BootstrapError::BadParams(format!(
            "P_prev is a {}-bit oracle; level {j} needs {} bits",
            p_prev.in_bits(),
            j - 1
        )));
    }
    let n2 = params.k * j + params.k;
    if n2 > 20 {
        return Err(BootstrapError::BadParams(format!(
            "kj+k = {n2} is beyond the exhaustive deterministization cap"
        )));
    }
    if d.in_bits() != params.t || d.out_bits() != 1 {
        return Err(BootstrapError::BadParams(format!(
            "distinguisher is {}->{} bits, generator emits {}",
            d.in_bits(),
            d.out_bits(),
            params.t
        )));
    }

    let meter = Meter::new(budget);
    let p_counted = meter.wrap(p_prev);
    let d_counted = meter.wrap(d);
    let design = build_shaped_design(n2, params.t, params.design)?;

    let mut report = PipelineReport {
        level: j,
        stages: Vec::new(),
        starved: None,
        overrides: params.overrides.clone(),
        referee_unreliable: false,
        selected: None,
        budget_used: 0,
        budget_limit: budget,
    };

    // Referee self-consistency probe.
    let referee = dsr_lift_with_votes(&p_counted, &spec, params.lift_votes);
    {
        let mut consistent = 0u32;
        const PROBE: u32 = 16;
        for _ in 0..PROBE {
            let x = Bits::random(j, rng);
            consistent += (bool_query(&referee, &x, rng) == bool_query(&referee, &x, rng)) as u32;
        }
        report.referee_unreliable = (consistent as f64) < 0.9 * PROBE as f64;
    }

    // Reference table for h(x_1..x_k, r) = XOR_i f_j(x_i) r_i, every f_j
    // evaluation answered through the lifted previous level.
    let h_tilde = {
        let mut table = Bits::zeros(1usize << n2);
        for u in 0..(1u64 << n2) {
            let full = Bits::from_u64(u, n2);
            let mut acc = false;
            for i in 0..params.k {
                if full.get(params.k * j + i) {
                    acc ^= bool_query(&referee, &full.slice(i * j, j), rng);
                }
            }
            table.set(u as usize, acc);
        }
        BooleanFunction::from_table(n2, table).expect("table sized to n2")
    };

    let finish = |mut report: PipelineReport, meter: &Meter| {
        report.budget_used = meter.used();
        report
    };

    // Stage 1: reconstruct predictors and keep the ones that track h_tilde.
    let mut tables: Vec<BooleanFunction> = Vec::new();
    {
        let before = meter.used();
        let mut attempts = 0u64;
        let mut best = 0.0f64;
        while !meter.over() && tables.len() < params.t {
            attempts += 1;
            let mut sub = rng.substream(attempts);
            let pred = reconstruct_predictor_with_access(
                &design,
                &mut |x| h_tilde.eval(x),
                &d_counted,
                &mut sub,
            )?;
            let mut table = Bits::zeros(1usize << n2);
            let mut agree = 0u64;
            for u in 0..(1u64 << n2) {
                let x = Bits::from_u64(u, n2);
                let v = pred.predict(&x, &d_counted, &mut sub)?;
                table.set(u as usize, v);
                agree += (v == h_tilde.get(u)) as u64;
            }
            let frac = agree as f64 / (1u64 << n2) as f64;
            best = best.max(frac);
            if frac >= params.predictor_threshold {
                tables.push(BooleanFunction::from_table(n2, table).expect("predictor table"));
            }
        }
        report.stages.push(StageReport {
            name: STAGE_RECONSTRUCTION.into(),
            attempts,
            accepted: tables.len() as u64,
            budget_used: meter.used() - before,
            quality: Some(best),
        });
        if tables.is_empty() {
            report.starved = Some(STAGE_RECONSTRUCTION.into());
            return Ok((None, finish(report, &meter)));
        }
    }

    // Stage 2: one tuple oracle per kept predictor via the decoder circuit;
    // a miss answers uniformly.
    let mut tuple_oracles: Vec<ProbabilisticOracle> = Vec::new();
    {
        let before = meter.used();
        let mut attempts = 0u64;
        let mut rate_sum = 0.0f64;
        let k = params.k;
        let kn = params.k * j;
        for table in &tables {
            if meter.over() {
                break;
            }
            attempts += 1;
            let circuit = function_oracle_circuit(table);
            let probe = circuit.clone();
            let counter = meter.counter();
            let tuple = ProbabilisticOracle::from_parts(kn, k, false, move |x, rng| {
                counter.fetch_add(1, Ordering::Relaxed);
                match gl_decode(&circuit, x, k, rng).expect("decoder circuit well-formed") {
                    Some(bits) => bits,
                    None => Bits::random(k, rng),
                }
            });
            let mut hits = 0u32;
            const SAMPLES: u32 = 32;
            let mut sub = rng.substream(0x676c ^ attempts);
            for _ in 0..SAMPLES {
                let x = Bits::random(kn, &mut sub);
                hits += gl_decode(&probe, &x, k, &mut sub)?.is_some() as u32;
            }
            rate_sum += hits as f64 / SAMPLES as f64;
            tuple_oracles.push(tuple);
        }
        report.stages.push(StageReport {
            name: STAGE_GL.into(),
            attempts,
            accepted: tuple_oracles.len() as u64,
            budget_used: meter.used() - before,
            quality: if attempts > 0 { Some(rate_sum / attempts as f64) } else { None },
        });
        if tuple_oracles.is_empty() {
            report.starved = Some(STAGE_GL.into());
            return Ok((None, finish(report, &meter)));
        }
    }

    // Stage 3: k-set oracles by random-permutation wrapping, then sampled
    // decoders become level-j candidates (a bottom answer falls back to a
    // coin).
    let mut candidates: Vec<ProbabilisticOracle> = Vec::new();
    {
        let before = meter.used();
        let mut attempts = 0u64;
        let dp_params = DpParams {
            n: j,
            k: params.k,
            epsilon: params.epsilon_prime,
            delta: params.delta,
            t_iters: params.t_iters,
            c_const: 1.0,
            strict: false,
        };
        'outer: for tuple in &tuple_oracles {
            let set_oracle = permutation_wrapper(tuple, j, params.k);
            for _ in 0..params.decoders_per_candidate {
                if meter.over() || candidates.len() >= params.t {
                    break 'outer;
                }
                attempts += 1;
                let dec = sample_decoder(&set_oracle, &dp_params, rng)?;
                let seto = set_oracle.clone();
                candidates.push(ProbabilisticOracle::from_parts(j, 1, false, move |x, rng| {
                    let out = decode_query(&dec, x, &seto, rng)
                        .expect("widths fixed at construction")
                        .unwrap_or_else(|| rng.bit());
                    Bits::from_bools(&[out])
                }));
            }
        }
        report.stages.push(StageReport {
            name: STAGE_DP.into(),
            attempts,
            accepted: candidates.len() as u64,
            budget_used: meter.used() - before,
            quality: None,
        });
        if candidates.is_empty() {
            report.starved = Some(STAGE_DP.into());
            return Ok((None, finish(report, &meter)));
        }
    }

    // Stage 4: referee selection and worst-case correction.
    {
        let before = meter.used();
        if meter.over() {
            report.stages.push(StageReport {
                name: STAGE_SELECT.into(),
                attempts: 0,
                accepted: 0,
                budget_used: 0,
                quality: None,
            });
            report.starved = Some(STAGE_SELECT.into());
            return Ok((None, finish(report, &meter)));
        }
        let chosen = select_candidate_with(
            &p_counted,
            &candidates,
            params.r_points,
            &spec,
            params.lift_votes,
            params.rsr_votes,
            params.rsr_votes,
            rng,
        );
        report.stages.push(StageReport {
            name: STAGE_SELECT.into(),
            attempts: candidates.len() as u64,
            accepted: chosen.is_some() as u64,
            budget_used: meter.used() - before,
            quality: None,
        });
        match chosen {
            Some((idx, oracle)) => {
                report.selected = Some(idx);
                Ok((Some(oracle), finish(report, &meter)))
            }
            None => Ok((None, finish(report, &meter))),
        }
    }
}

/// Turns a k-tuple oracle into a k-set oracle: the set's elements are fed in
/// a random order and the answer bits are routed back to set positions.
fn permutation_wrapper(tuple: &ProbabilisticOracle, n: usize, k: usize) -> ProbabilisticOracle {
    let tuple = tuple.clone();
    ProbabilisticOracle::from_parts(n * k, k, false, move |encoded, rng| {
        let set = crate::direct_product::KSet::decode(encoded, n, k).expect("canonical encoding");
        let mut perm: Vec<usize> = (0..k).collect();
        for i in (1..k).rev() {
            perm.swap(i, rng.below(i as u64 + 1) as usize);
        }
        let mut query = Bits::zeros(0);
        for &p in &perm {
            query.push_low(set.elems()[p], n);
        }
        let answer = tuple.query(&query, rng);
        let mut out = Bits::zeros(k);
        for (i, &p) in perm.iter().enumerate() {
            out.set(p, answer.get(i));
        }
        out
    })
}

/// A family of generators indexed by the level t, with the arithmetic needed
/// to parse encodings without building anything: seed length l(t) and the
/// exponent lambda fixing t' = t^lambda. Encoded lengths t + l(t) + t' must
/// be strictly increasing in t.
#[derive(Clone)]
pub struct GeneratorFamily {
    pub name: &'static str,
    pub lambda_exp: u32,
    seed_len: Arc<dyn Fn(u64) -> u64 + Send + Sync>,
    build: Arc<dyn Fn(u64) -> Result<NwGenerator, BootstrapError> + Send + Sync>,
}

impl GeneratorFamily {
    pub fn new(
        name: &'static str,
        lambda_exp: u32,
        seed_len: impl Fn(u64) -> u64 + Send + Sync + 'static,
        build: impl Fn(u64) -> Result<NwGenerator, BootstrapError> + Send + Sync + 'static,
    ) -> Self {
        assert!(lambda_exp >= 1);
        GeneratorFamily { name, lambda_exp, seed_len: Arc::new(seed_len), build: Arc::new(build) }
    }

    pub fn seed_len(&self, t: u64) -> u64 {
        (self.seed_len)(t)
    }

    pub fn t_prime(&self, t: u64) -> u64 {
        t.pow(self.lambda_exp)
    }

    pub fn build(&self, t: u64) -> Result<NwGenerator, BootstrapError> {
        (self.build)(t)
    }
}

/// PARITY-based toy family: level t uses parity_t with 2^t outputs in a
/// universe of l(t) = 16 t^2 seed bits.
pub fn toy_parity_family() -> GeneratorFamily {
    GeneratorFamily::new(
        "toy-parity",
        1,
        |t| 16 * t * t,
        |t| {
            if t == 0 || t > 12 {
                return Err(BootstrapError::BadParams(format!(
                    "toy family builds levels 1..=12, asked for {t}"
                )));
            }
            let f = BooleanFunction::parity(t as usize);
            let design =
                build_design_in_universe(t as usize, 1usize << t, (16 * t * t) as usize)?;
            Ok(NwGenerator::new(f, design)?)
        },
    )
}

/// The instance encoding 1^t . w . x.
pub fn hard_language_encode(
    family: &GeneratorFamily,
    t: u64,
    w: &Bits,
    x: &Bits,
) -> Result<Bits, BootstrapError> {
    if t == 0 {
        return Err(BootstrapError::BadParams("levels start at 1".into()));
    }
    if w.len() as u64 != family.seed_len(t) {
        return Err(BootstrapError::BadParams(format!(
            "seed has {} bits, level {t} takes {}",
            w.len(),
            family.seed_len(t)
        )));
    }
    if x.len() as u64 != family.t_prime(t) {
        return Err(BootstrapError::BadParams(format!(
            "index has {} bits, level {t} takes {}",
            x.len(),
            family.t_prime(t)
        )));
    }
    let mut ones = Bits::zeros(t as usize);
    for i in 0..t as usize {
        ones.set(i, true);
    }
    Ok(ones.concat(w).concat(x))
}

/// Recovers (t, w, x) from an encoding; the length schedule makes t unique.
/// Returns nothing on any malformation.
pub fn hard_language_parse(family: &GeneratorFamily, u: &Bits) -> Option<(u64, Bits, Bits)> {
    let len = u.len() as u64;
    let mut t = 1u64;
    loop {
        let total = t
            .checked_add(family.seed_len(t))
            .and_then(|s| s.checked_add(family.t_prime(t)))?;
        if total > len {
            return None;
        }
        if total == len {
            break;
        }
        t += 1;
    }
    for i in 0..t as usize {
        if !u.get(i) {
            return None;
        }
    }
    let l = family.seed_len(t) as usize;
    let w = u.slice(t as usize, l);
    let x = u.slice(t as usize + l, family.t_prime(t) as usize);
    Some((t, w, x))
}

/// The hard language's deciding procedure: check the encoding, run the
/// generator on the seed, and answer with bit x of its leftmost 2^{t'} bits.
/// A malformed instance is a rejection (None), not a fault.
pub fn hard_language_eval(
    family: &GeneratorFamily,
    u: &Bits,
) -> Result<Option<bool>, BootstrapError> {
    let Some((t, w, x)) = hard_language_parse(family, u) else {
        return Ok(None);
    };
    let gen = family.build(t)?;
    if gen.seed_bits() as u64 != family.seed_len(t) {
        return Err(BootstrapError::BadParams(format!(
            "family level {t} builds a {}-bit seed but declares {}",
            gen.seed_bits(),
            family.seed_len(t)
        )));
    }
    let t_prime = family.t_prime(t);
    if t_prime >= 63 || gen.out_bits() < (1usize << t_prime) {
        return Err(BootstrapError::BadParams(format!(
            "family level {t} emits {} bits, fewer than 2^{t_prime}",
            gen.out_bits()
        )));
    }
    let idx = x.to_u64() as usize;
    let set = &gen.design().sets[idx];
    Ok(Some(gen.f().eval(&w.select(set))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nw::nw_eval;

    fn parity_oracle(n: usize) -> ProbabilisticOracle {
        ProbabilisticOracle::from_bool_fn(&BooleanFunction::parity(n))
    }

    fn assert_exhaustive_parity(o: &ProbabilisticOracle, n: usize, rng: &mut Stream) {
        for u in 0..(1u64 << n) {
            let x = Bits::from_u64(u, n);
            assert_eq!(
                bool_query(o, &x, rng),
                x.parity(),
                "disagreement at {x} for n = {n}"
            );
        }
    }

    #[test]
    fn parity_reduction_is_exact_and_marginally_uniform() {
        let spec = parity_spec();
        let n = 4;
        // Exact recombination over the whole (x, r) square.
        for xu in 0..16u64 {
            let x = Bits::from_u64(xu, n);
            for ru in 0..16u64 {
                let r = Bits::from_u64(ru, n);
                let queries = spec.rand_queries(&x, &r);
                assert_eq!(queries.len(), spec.a as usize);
                let answers: Vec<bool> = queries.iter().map(|q| q.parity()).collect();
                assert_eq!(spec.recombine(&x, &r, &answers), x.parity());
            }
        }
        // Each query point is uniform in r.
        let x = Bits::from_u64(0b1011, n);
        let mut rng = Stream::new(21);
        let mut counts = [[0u32; 16]; 2];
        const DRAWS: u32 = 16_000;
        for _ in 0..DRAWS {
            let r = Bits::random(n, &mut rng);
            for (slot, q) in spec.rand_queries(&x, &r).iter().enumerate() {
                counts[slot][q.to_u64() as usize] += 1;
            }
        }
        for slot in 0..2 {
            for (v, &c) in counts[slot].iter().enumerate() {
                assert!((850..1150).contains(&c), "query {slot} value {v} seen {c} times");
            }
        }
    }

    #[test]
    fn downward_reduction_recomputes_parity() {
        let spec = parity_spec();
        for n in 1..=6usize {
            for u in 0..(1u64 << n) {
                let x = Bits::from_u64(u, n);
                let out = spec.downward(&x, &mut |q| {
                    assert!(q.len() < x.len());
                    q.parity()
                });
                assert_eq!(out, x.parity());
            }
        }
    }

    #[test]
    fn majority_vote_counts() {
        assert_eq!(majority_votes(0.5), 11);
        assert_eq!(majority_votes(0.1), 29);
        assert_eq!(majority_votes(2f64.powi(-8)), 69);
    }

    #[test]
    fn rsr_preserves_exactness_exhaustively() {
        let spec = parity_spec();
        let mut rng = Stream::new(22);
        for n in 1..=8usize {
            let amp = rsr_amplify_with(&parity_oracle(n), &spec, 1, 1);
            assert_exhaustive_parity(&amp, n, &mut rng);
        }
        // Default vote counts at a size where they are affordable.
        let amp = rsr_amplify(&parity_oracle(6), &spec);
        assert_exhaustive_parity(&amp, 6, &mut rng);
    }

    #[test]
    fn rsr_repairs_a_single_corrupted_point() {
        let spec = parity_spec();
        let n = 8;
        let x0 = Bits::from_u64(0b1100_1010, n);
        let bad = {
            let x0 = x0.clone();
            ProbabilisticOracle::deterministic_fn(n, 1, move |x| {
                Bits::from_bools(&[x.parity() ^ (*x == x0)])
            })
        };
        let amp = rsr_amplify(&bad, &spec);
        let mut rng = Stream::new(23);
        let want = x0.parity();
        for _ in 0..1000 {
            assert_eq!(bool_query(&amp, &x0, &mut rng), want);
        }
    }

    #[test]
    fn rsr_repairs_random_sparse_corruption() {
        let spec = parity_spec();
        let n = 8;
        let mut rng = Stream::new(24);
        for trial in 0..100u64 {
            let mut corrupt = std::collections::HashSet::new();
            let mut pick = Stream::keyed(24, trial);
            for u in 0..(1u64 << n) {
                if pick.chance(1.0 / 512.0) {
                    corrupt.insert(u);
                }
            }
            let bad = {
                let corrupt = corrupt.clone();
                ProbabilisticOracle::deterministic_fn(n, 1, move |x| {
                    Bits::from_bools(&[x.parity() ^ corrupt.contains(&x.to_u64())])
                })
            };
            let amp = rsr_amplify_with(&bad, &spec, 13, 13);
            for u in 0..(1u64 << n) {
                let x = Bits::from_u64(u, n);
                assert_eq!(bool_query(&amp, &x, &mut rng), x.parity(), "trial {trial} at {x}");
            }
        }
    }

    #[test]
    fn dsr_lifts_exactly_and_chains_to_ten() {
        let spec = parity_spec();
        let mut rng = Stream::new(25);
        let lifted = dsr_lift_with_votes(&parity_oracle(5), &spec, 1);
        assert_exhaustive_parity(&lifted, 6, &mut rng);
        // Default votes on a small level.
        let lifted = dsr_lift(&parity_oracle(3), &spec);
        assert_exhaustive_parity(&lifted, 4, &mut rng);
        // Chain from the exact one-bit base.
        let mut p = parity_oracle(1);
        for _ in 1..10 {
            p = dsr_lift_with_votes(&p, &spec, 1);
        }
        assert_eq!(p.in_bits(), 10);
        assert_exhaustive_parity(&p, 10, &mut rng);
    }

    #[test]
    fn dsr_amplifies_a_noisy_level() {
        let spec = parity_spec();
        let noisy = ProbabilisticOracle::from_parts(5, 1, false, |x, rng| {
            Bits::from_bools(&[x.parity() ^ rng.chance(0.1)])
        });
        let lifted = dsr_lift_with_votes(&noisy, &spec, 11);
        let mut rng = Stream::new(26);
        const CALLS: u32 = 500;
        for u in 0..(1u64 << 6) {
            let x = Bits::from_u64(u, 6);
            let mut right = 0u32;
            for _ in 0..CALLS {
                right += (bool_query(&lifted, &x, &mut rng) == x.parity()) as u32;
            }
            let rate = right as f64 / CALLS as f64;
            assert!(rate >= 0.99, "success {rate} at {x}");
        }
    }

    #[test]
    fn selection_prefers_the_exact_candidate() {
        let spec = parity_spec();
        let p_prev = parity_oracle(7);
        let exact = parity_oracle(8);
        let zero = ProbabilisticOracle::deterministic_fn(8, 1, |_| Bits::zeros(1));
        let mut rng = Stream::new(27);
        for _ in 0..100 {
            let (idx, _) = select_candidate_with(
                &p_prev,
                &[exact.clone(), zero.clone()],
                200,
                &spec,
                1,
                1,
                1,
                &mut rng,
            )
            .expect("exact candidate present");
            assert_eq!(idx, 0);
        }
        // Order independence: the exact one also wins from the second slot.
        let (idx, chosen) = select_candidate_with(
            &p_prev,
            &[zero, exact],
            200,
            &spec,
            1,
            1,
            1,
            &mut rng,
        )
        .unwrap();
        assert_eq!(idx, 1);
        assert_exhaustive_parity(&chosen, 8, &mut rng);
    }

    #[test]
    fn selection_reports_empty_on_junk() {
        let spec = parity_spec();
        let p_prev = parity_oracle(7);
        let zero = ProbabilisticOracle::deterministic_fn(8, 1, |_| Bits::zeros(1));
        let coin = ProbabilisticOracle::uniform(8, 1);
        let mut rng = Stream::new(28);
        for _ in 0..50 {
            assert!(select_candidate(&p_prev, &[zero.clone(), coin.clone()], 200, &spec, &mut rng)
                .is_none());
        }
    }

    #[test]
    fn selection_never_returns_a_weak_candidate() {
        let spec = parity_spec();
        let p_prev = parity_oracle(7);
        let referee = dsr_lift_with_votes(&p_prev, &spec, 1);
        let coin = ProbabilisticOracle::uniform(8, 1);
        let slightly = ProbabilisticOracle::from_parts(8, 1, false, |x, rng| {
            Bits::from_bools(&[x.parity() ^ rng.chance(0.45)])
        });
        let exact = parity_oracle(8);
        let mut rng = Stream::new(29);
        for trial in 0..50u32 {
            let picked = select_candidate_with(
                &p_prev,
                &[coin.clone(), slightly.clone(), exact.clone()],
                64,
                &spec,
                1,
                1,
                1,
                &mut rng,
            );
            let Some((_, oracle)) = picked else { continue };
            let mut agree = 0u32;
            const FRESH: u32 = 500;
            for _ in 0..FRESH {
                let x = Bits::random(8, &mut rng);
                agree += (bool_query(&oracle, &x, &mut rng) == bool_query(&referee, &x, &mut rng))
                    as u32;
            }
            let rate = agree as f64 / FRESH as f64;
            assert!(rate >= 0.7, "trial {trial} returned an oracle with agreement {rate}");
        }
    }

    #[test]
    fn io_generator_matches_direct_evaluation() {
        let mut rng = Stream::new(30);

        let zero = BooleanFunction::constant(3, false);
        let gen = build_io_generator(&zero, 2, 10, DesignShape::Universe { m: 16 }).unwrap();
        for _ in 0..20 {
            let z = Bits::random(gen.seed_bits(), &mut rng);
            assert!(nw_eval(&gen, &z).unwrap().is_zero());
        }

        let parity = BooleanFunction::parity(3);
        let gen = build_io_generator(&parity, 1, 6, DesignShape::Universe { m: 8 }).unwrap();
        for u in 0..16u64 {
            let x = Bits::from_u64(u & 7, 3);
            let r = u >> 3 == 1;
            let idx = (u & 7) | ((r as u64) << 3);
            assert_eq!(gen.f().get(idx), x.parity() & r);
        }

        let gen = build_io_generator(&parity, 2, 12, DesignShape::Universe { m: 16 }).unwrap();
        for u in 0..(1u64 << 8) {
            let x1 = Bits::from_u64(u & 7, 3);
            let x2 = Bits::from_u64((u >> 3) & 7, 3);
            let r1 = (u >> 6) & 1 == 1;
            let r2 = (u >> 7) & 1 == 1;
            let want = (x1.parity() & r1) ^ (x2.parity() & r2);
            assert_eq!(gen.f().get(u), want, "at {u:08b}");
        }

        // Width cap and infeasible universe both surface as errors.
        assert!(build_io_generator(&BooleanFunction::parity(3), 6, 10, DesignShape::Standard {
            c: 16
        })
        .is_err());
        assert!(
            build_io_generator(&parity, 2, 10, DesignShape::Universe { m: 7 }).is_err()
        );
    }

    #[test]
    fn pipeline_starves_reconstruction_under_a_blind_distinguisher() {
        let params = PipelineParams::toy();
        let p_prev = parity_oracle(2);
        let blind = ProbabilisticOracle::deterministic_fn(params.t, 1, |_| Bits::zeros(1));
        let mut rng = Stream::new(31);
        let (out, report) = pipeline_step(3, &p_prev, &blind, &params, &mut rng, 30_000).unwrap();
        assert!(out.is_none());
        assert_eq!(report.starved.as_deref(), Some(STAGE_RECONSTRUCTION));
        assert!(!report.referee_unreliable);
        assert_eq!(report.stages.len(), 1);
        assert!(report.stages[0].attempts > 0);
        assert_eq!(report.stages[0].accepted, 0);
        assert!(report.budget_used >= 30_000);
        assert_eq!(report.budget_limit, 30_000);
        assert!(!report.overrides.is_empty());
    }

    #[test]
    fn pipeline_flags_an_unreliable_referee() {
        let params = PipelineParams::toy();
        let junk = ProbabilisticOracle::uniform(2, 1);
        let blind = ProbabilisticOracle::deterministic_fn(params.t, 1, |_| Bits::zeros(1));
        let mut rng = Stream::new(32);
        let (_, report) = pipeline_step(3, &junk, &blind, &params, &mut rng, 5_000).unwrap();
        assert!(report.referee_unreliable);
    }

    #[test]
    fn pipeline_validates_widths() {
        let params = PipelineParams::toy();
        let p_prev = parity_oracle(2);
        let blind = ProbabilisticOracle::deterministic_fn(params.t, 1, |_| Bits::zeros(1));
        let mut rng = Stream::new(33);
        assert!(pipeline_step(4, &p_prev, &blind, &params, &mut rng, 1000).is_err());
        let narrow = ProbabilisticOracle::deterministic_fn(7, 1, |_| Bits::zeros(1));
        assert!(pipeline_step(3, &p_prev, &narrow, &params, &mut rng, 1000).is_err());
        let mut bad = params.clone();
        bad.k = 3;
        assert!(pipeline_step(3, &p_prev, &blind, &bad, &mut rng, 1000).is_err());
    }

    #[test]
    fn permutation_wrapper_routes_answers_back() {
        // Tuple oracle answering f(x_i) exactly; the set view must agree with
        // per-element evaluation regardless of the hidden permutation.
        let f = BooleanFunction::random(3, 77);
        let tuple = {
            let f = f.clone();
            ProbabilisticOracle::deterministic_fn(6, 2, move |x| {
                Bits::from_bools(&[f.eval(&x.slice(0, 3)), f.eval(&x.slice(3, 3))])
            })
        };
        let set_oracle = permutation_wrapper(&tuple, 3, 2);
        let mut rng = Stream::new(34);
        for _ in 0..50 {
            let a = rng.below(7);
            let b = a + 1 + rng.below(7 - a);
            let set = crate::direct_product::KSet::new(3, vec![a, b]).unwrap();
            let out = set_oracle.query(&set.encode(), &mut rng);
            assert_eq!(out.get(0), f.get(a));
            assert_eq!(out.get(1), f.get(b));
        }
    }

    #[test]
    fn hard_language_roundtrip_and_rejections() {
        let family = toy_parity_family();
        let mut rng = Stream::new(35);
        for t in 1..=32u64 {
            let w = Bits::random(family.seed_len(t) as usize, &mut rng);
            let x = Bits::random(family.t_prime(t) as usize, &mut rng);
            let u = hard_language_encode(&family, t, &w, &x).unwrap();
            let (t2, w2, x2) = hard_language_parse(&family, &u).expect("roundtrip");
            assert_eq!(t2, t);
            assert_eq!(w2, w);
            assert_eq!(x2, x);
        }
        // No valid length.
        assert!(hard_language_parse(&family, &Bits::zeros(7)).is_none());
        assert!(hard_language_parse(&family, &Bits::zeros(19)).is_none());
        // Valid length, broken prefix.
        let total = (1 + family.seed_len(1) + family.t_prime(1)) as usize;
        assert!(hard_language_parse(&family, &Bits::zeros(total)).is_none());
        assert_eq!(hard_language_eval(&family, &Bits::zeros(7)).unwrap(), None);
    }

    #[test]
    fn hard_language_on_the_zero_family_answers_zero() {
        let family = GeneratorFamily::new(
            "zero-toy",
            1,
            |t| 16 * t * t,
            |t| {
                let f = BooleanFunction::constant(t as usize, false);
                let design =
                    build_design_in_universe(t as usize, 1usize << t, (16 * t * t) as usize)?;
                Ok(NwGenerator::new(f, design)?)
            },
        );
        let mut rng = Stream::new(36);
        for t in [2u64, 3, 4] {
            let w = Bits::random(family.seed_len(t) as usize, &mut rng);
            let x = Bits::random(t as usize, &mut rng);
            let u = hard_language_encode(&family, t, &w, &x).unwrap();
            assert_eq!(hard_language_eval(&family, &u).unwrap(), Some(false));
        }
    }

    #[test]
    fn hard_language_matches_full_generator_recomputation() {
        let family = toy_parity_family();
        let t = 4u64;
        let gen = family.build(t).unwrap();
        let mut rng = Stream::new(37);
        for _ in 0..5 {
            let w = Bits::random(family.seed_len(t) as usize, &mut rng);
            let full = nw_eval(&gen, &w).unwrap();
            for xi in 0..(1u64 << t) {
                let x = Bits::from_u64(xi, t as usize);
                let u = hard_language_encode(&family, t, &w, &x).unwrap();
                let got = hard_language_eval(&family, &u).unwrap();
                assert_eq!(got, Some(full.get(xi as usize)));
            }
        }
    }
}
