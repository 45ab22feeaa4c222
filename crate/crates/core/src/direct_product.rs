//! Direct-product codes g^k over k-sets and their list decoder: the
//! consistency-sampling circuit C_{A,w}, the decoder-sampling algorithm, and
//! Monte-Carlo diagnostics for edge statistics of the inclusion graph.
//!
//! A k-set travels through oracles in a canonical encoding: its k elements in
//! strictly increasing order, each as an n-bit chunk, concatenated.

use crate::bitfunc::BooleanFunction;
use crate::bits::Bits;
use crate::oracle::{CorrelationEstimate, ProbabilisticOracle};
use crate::rng::Stream;

#[derive(Debug, thiserror::Error)]
pub enum DpError {
    #[error("{0}")]
    BadParams(String),
    #[error("k-set elements must be strictly increasing and {max} at most")]
    NotCanonical { max: u64 },
    #[error("cannot sample {k} distinct elements from {{0,1}}^{n} by rejection; need k <= 2^(n-1)")]
    KTooLarge { k: usize, n: usize },
    #[error("only {free} elements remain outside the set, {need} needed")]
    Degenerate { free: u64, need: u64 },
    #[error("width mismatch: {0}")]
    Width(String),
}

/// A set of k distinct n-bit strings in increasing order.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct KSet {
    n: usize,
    elems: Vec<u64>,
}

impl KSet {
    pub fn new(n: usize, elems: Vec<u64>) -> Result<Self, DpError> {
        if n == 0 || n > 63 {
            return Err(DpError::BadParams(format!("element width {n} outside 1..=63")));
        }
        if elems.is_empty() {
            return Err(DpError::BadParams("a k-set needs at least one element".into()));
        }
        let max = (1u64 << n) - 1;
        let ordered = elems.windows(2).all(|w| w[0] < w[1]);
        if !ordered || elems.iter().any(|&e| e > max) {
            return Err(DpError::NotCanonical { max });
        }
        Ok(KSet { n, elems })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.elems.len()
    }

    pub fn elems(&self) -> &[u64] {
        &self.elems
    }

    pub fn contains(&self, x: u64) -> bool {
        self.elems.binary_search(&x).is_ok()
    }

    pub fn index_of(&self, x: u64) -> Option<usize> {
        self.elems.binary_search(&x).ok()
    }

    /// Canonical kn-bit encoding: element i occupies bits [i*n, (i+1)*n).
    pub fn encode(&self) -> Bits {
        let mut out = Bits::zeros(0);
        for &e in &self.elems {
            out.push_low(e, self.n);
        }
        out
    }

    /// Inverse of encode; enforces canonical order.
    pub fn decode(bits: &Bits, n: usize, k: usize) -> Result<Self, DpError> {
        if bits.len() != n * k {
            return Err(DpError::Width(format!(
                "encoding has {} bits, expected {}*{}",
                bits.len(),
                k,
                n
            )));
        }
        let elems = (0..k).map(|i| bits.window(i * n, n)).collect();
        KSet::new(n, elems)
    }
}

/// g^k: apply g to each element in order.
pub fn dp_eval(g: &BooleanFunction, b: &KSet) -> Result<Bits, DpError> {
    if g.n() != b.n() {
        return Err(DpError::Width(format!(
            "g takes {} bits, set elements have {}",
            g.n(),
            b.n()
        )));
    }
    let mut out = Bits::zeros(b.k());
    for (i, &e) in b.elems().iter().enumerate() {
        out.set(i, g.get(e));
    }
    Ok(out)
}

/// Draws a uniform k-subset of {0,1}^n by rejection; requires k <= 2^(n-1) so
/// rejection stays cheap.
pub fn sample_kset(n: usize, k: usize, rng: &mut Stream) -> Result<KSet, DpError> {
    if n == 0 || n > 63 {
        return Err(DpError::BadParams(format!("element width {n} outside 1..=63")));
    }
    if k == 0 || (k as u64) > 1u64 << (n - 1) {
        return Err(DpError::KTooLarge { k, n });
    }
    let mut elems: Vec<u64> = Vec::with_capacity(k);
    while elems.len() < k {
        let e = rng.below(1u64 << n);
        if !elems.contains(&e) {
            elems.push(e);
        }
    }
    elems.sort_unstable();
    KSet::new(n, elems)
}

/// Uniform k-set containing every element of `base` (sorted, distinct).
pub fn sample_kset_containing(
    n: usize,
    k: usize,
    base: &[u64],
    rng: &mut Stream,
) -> Result<KSet, DpError> {
    let space = 1u64 << n;
    let need = (k - base.len()) as u64;
    let free = space - base.len() as u64;
    if free < need {
        return Err(DpError::Degenerate { free, need });
    }
    if k as u64 > space / 2 {
        return Err(DpError::KTooLarge { k, n });
    }
    let mut elems: Vec<u64> = base.to_vec();
    while elems.len() < k {
        let e = rng.below(space);
        if !elems.contains(&e) {
            elems.push(e);
        }
    }
    elems.sort_unstable();
    KSet::new(n, elems)
}

/// Experiment parameters for the direct-product decoder.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct DpParams {
    pub n: usize,
    pub k: usize,
    pub epsilon: f64,
    pub delta: f64,
    /// Iterations per decode_query call.
    pub t_iters: u64,
    /// The universal constant in the k lower bound; checked in strict mode.
    pub c_const: f64,
    pub strict: bool,
}

impl DpParams {
    pub fn validate(&self) -> Result<(), DpError> {
        if self.k < 2 || self.k % 2 != 0 {
            return Err(DpError::BadParams(format!("k = {} must be even and >= 2", self.k)));
        }
        if self.n == 0 || self.n > 63 {
            return Err(DpError::BadParams(format!("n = {} outside 1..=63", self.n)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) || !(self.delta > 0.0 && self.delta < 1.0)
        {
            return Err(DpError::BadParams(format!(
                "epsilon = {}, delta = {} must lie in (0, 1)",
                self.epsilon, self.delta
            )));
        }
        if self.t_iters == 0 {
            return Err(DpError::BadParams("t_iters must be positive".into()));
        }
        if self.strict {
            let bound =
                self.c_const / self.delta * ((1.0 / self.delta).ln() + (1.0 / self.epsilon).ln());
            if (self.k as f64) < bound {
                return Err(DpError::BadParams(format!(
                    "strict mode: k = {} below C/delta (ln 1/delta + ln 1/epsilon) = {bound:.1}",
                    self.k
                )));
            }
        }
        Ok(())
    }

    /// Iteration count of the theorem's algorithm for the given accuracy.
    pub fn theorem_iterations(epsilon: f64, delta: f64) -> u64 {
        (32.0 * (1.0 / delta).ln() / (epsilon * epsilon)).ceil() as u64
    }
}

/// The decoding circuit C_{A,w}: claims w for g on the half-set A and answers
/// fresh points by consistency sampling.
#[derive(Clone, Debug)]
pub struct DpDecoder {
    pub a: KSet,
    pub w: Bits,
    pub t_iters: u64,
}

impl DpDecoder {
    pub fn new(a: KSet, w: Bits, t_iters: u64) -> Result<Self, DpError> {
        if w.len() != a.k() {
            return Err(DpError::Width(format!(
                "w has {} bits for a {}-element set",
                w.len(),
                a.k()
            )));
        }
        Ok(DpDecoder { a, w, t_iters })
    }
}

/// Samples a decoder as the algorithm does: uniform k-set B, uniform half A,
/// one oracle query fixes w = G(B)|_A.
pub fn sample_decoder(
    oracle: &ProbabilisticOracle,
    params: &DpParams,
    rng: &mut Stream,
) -> Result<DpDecoder, DpError> {
    params.validate()?;
    let b = sample_kset(params.n, params.k, rng)?;
    if oracle.in_bits() != params.n * params.k {
        return Err(DpError::Width(format!(
            "oracle takes {} bits, k-sets encode to {}",
            oracle.in_bits(),
            params.n * params.k
        )));
    }
    // Uniform k/2 of the k indices, partial Fisher-Yates.
    let half = params.k / 2;
    let mut idx: Vec<usize> = (0..params.k).collect();
    for i in 0..half {
        let j = i + rng.below((params.k - i) as u64) as usize;
        idx.swap(i, j);
    }
    let mut picked: Vec<usize> = idx[..half].to_vec();
    picked.sort_unstable();
    let v = oracle.query(&b.encode(), rng);
    let a_elems: Vec<u64> = picked.iter().map(|&i| b.elems()[i]).collect();
    let mut w = Bits::zeros(half);
    for (pos, &i) in picked.iter().enumerate() {
        w.set(pos, v.get(i));
    }
    DpDecoder::new(KSet::new(params.n, a_elems)?, w, params.t_iters)
}

/// One decoded bit: w|_x for x in A (no oracle use); otherwise up to T rounds
/// of consistency sampling over uniform B' containing A and x. None is the
/// bottom output.
pub fn decode_query(
    dec: &DpDecoder,
    x: &Bits,
    oracle: &ProbabilisticOracle,
    rng: &mut Stream,
) -> Result<Option<bool>, DpError> {
    let n = dec.a.n();
    if x.len() != n {
        return Err(DpError::Width(format!("x has {} bits, elements have {n}", x.len())));
    }
    let xv = x.to_u64();
    if let Some(i) = dec.a.index_of(xv) {
        return Ok(Some(dec.w.get(i)));
    }
    let k = dec.a.k() * 2;
    if oracle.in_bits() != n * k {
        return Err(DpError::Width(format!(
            "oracle takes {} bits, k-sets encode to {}",
            oracle.in_bits(),
            n * k
        )));
    }
    let mut base: Vec<u64> = dec.a.elems().to_vec();
    base.push(xv);
    base.sort_unstable();
    // Inlined sample_kset_containing with reused buffers; the rejection loop
    // accepts exactly the same draws, so seeded runs are unchanged. Small
    // element spaces use an occupancy bitmap instead of scan-and-sort.
    let space = 1u64 << n;
    let need = (k - base.len()) as u64;
    let free = space - base.len() as u64;
    let mut elems: Vec<u64> = Vec::with_capacity(k);
    let mut enc = Bits::zeros(0);
    let small = n <= 10;
    let mut occ_base = [0u64; 16];
    if small {
        for &e in &base {
            occ_base[(e / 64) as usize] |= 1 << (e % 64);
        }
    }
    for _ in 0..dec.t_iters {
        if free < need {
            return Err(DpError::Degenerate { free, need });
        }
        if k as u64 > space / 2 {
            return Err(DpError::KTooLarge { k, n });
        }
        elems.clear();
        if small {
            let mut occ = occ_base;
            let mut left = k - base.len();
            while left > 0 {
                let e = rng.below(space);
                let (w, b) = ((e / 64) as usize, e % 64);
                if occ[w] >> b & 1 == 0 {
                    occ[w] |= 1 << b;
                    left -= 1;
                }
            }
            for (w, &word) in occ.iter().enumerate().take(space.div_ceil(64) as usize) {
                let mut m = word;
                while m != 0 {
                    elems.push(w as u64 * 64 + m.trailing_zeros() as u64);
                    m &= m - 1;
                }
            }
        } else {
            elems.extend_from_slice(&base);
            while elems.len() < k {
                let e = rng.below(space);
                if !elems.contains(&e) {
                    elems.push(e);
                }
            }
            elems.sort_unstable();
        }
        enc.clear();
        for &e in &elems {
            enc.push_low(e, n);
        }
        let v = oracle.query(&enc, rng);
        let consistent = dec
            .a
            .elems()
            .iter()
            .enumerate()
            .all(|(i, &e)| v.get(elems.binary_search(&e).expect("A subset of B'")) == dec.w.get(i));
        if consistent {
            return Ok(Some(v.get(elems.binary_search(&xv).expect("x in B'"))));
        }
    }
    Ok(None)
}

/// Aggregate view of a list-decoding run.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct ListDecodeReport {
    /// Fraction of sampled decoders with agreement >= 1 - delta.
    pub zeta_hat: f64,
    /// Overall fraction of queries answered correctly; bottom counts as wrong.
    pub success_rate: f64,
    /// Per-decoder agreement estimates.
    pub agreements: Vec<f64>,
    /// Per-decoder bottom rates.
    pub bot_rates: Vec<f64>,
}

/// Samples `trials` decoders and measures each one's agreement with g on
/// `agreement_samples` uniform points.
pub fn run_list_decode_experiment(
    g: &BooleanFunction,
    oracle: &ProbabilisticOracle,
    params: &DpParams,
    trials: u64,
    agreement_samples: u64,
    rng: &mut Stream,
) -> Result<ListDecodeReport, DpError> {
    params.validate()?;
    if g.n() != params.n {
        return Err(DpError::Width(format!("g takes {} bits, params say {}", g.n(), params.n)));
    }
    if trials == 0 || agreement_samples == 0 {
        return Err(DpError::BadParams("trials and agreement_samples must be positive".into()));
    }
    let mut agreements = Vec::with_capacity(trials as usize);
    let mut bot_rates = Vec::with_capacity(trials as usize);
    let mut hits = 0u64;
    for _ in 0..trials {
        let dec = sample_decoder(oracle, params, rng)?;
        let mut agree = 0u64;
        let mut bots = 0u64;
        for _ in 0..agreement_samples {
            let x = Bits::random(params.n, rng);
            match decode_query(&dec, &x, oracle, rng)? {
                Some(b) if b == g.eval(&x) => agree += 1,
                Some(_) => {}
                None => bots += 1,
            }
        }
        hits += agree;
        let rate = agree as f64 / agreement_samples as f64;
        bot_rates.push(bots as f64 / agreement_samples as f64);
        agreements.push(rate);
    }
    let zeta_hat = agreements.iter().filter(|&&a| a >= 1.0 - params.delta).count() as f64
        / trials as f64;
    Ok(ListDecodeReport {
        zeta_hat,
        success_rate: hits as f64 / (trials * agreement_samples) as f64,
        agreements,
        bot_rates,
    })
}

/// Monte-Carlo edge statistics for the inclusion graph around the edge (A, B).
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct EdgeDiagnostics {
    /// Pr over neighbors B' and oracle draws that G(B') = g^k(B') exactly.
    pub corr_b: CorrelationEstimate,
    /// Estimated Corr of the edge's own B: Pr[G(B) = g^k(B)].
    pub corr_own: f64,
    /// Fraction of sampled neighbors whose estimated Corr reaches eta.
    pub good_fraction: f64,
    /// Importance-sampled Pr[wrong position | consistent], weighting each
    /// neighbor by its estimated consistency probability.
    pub errcons: f64,
    /// Estimated consistency probability of the diagnosed edge's own B.
    pub p_cons: f64,
    /// Mean consistency probability over sampled neighbors (the W_I(A)
    /// normalizer).
    pub p_tot: f64,
}

/// Queries per sampled neighbor when estimating consistency probabilities.
const CONS_QUERIES: u32 = 64;

/// Diagnoses the edge (A, B): draws w = G(B)|_A once, then samples `samples`
/// uniform neighbors B' of A, querying each CONS_QUERIES times.
pub fn edge_diagnostics(
    g: &BooleanFunction,
    oracle: &ProbabilisticOracle,
    a: &KSet,
    b: &KSet,
    eta: f64,
    samples: u64,
    rng: &mut Stream,
) -> Result<EdgeDiagnostics, DpError> {
    let n = a.n();
    let k = b.k();
    if b.n() != n || g.n() != n {
        return Err(DpError::Width("element widths disagree".into()));
    }
    if a.k() * 2 != k || !a.elems().iter().all(|&e| b.contains(e)) {
        return Err(DpError::BadParams("A must be half of B".into()));
    }
    if samples == 0 {
        return Err(DpError::BadParams("samples must be positive".into()));
    }
    let space = 1u64 << n;
    if space - (a.k() as u64) < (k - a.k()) as u64 {
        return Err(DpError::Degenerate {
            free: space - a.k() as u64,
            need: (k - a.k()) as u64,
        });
    }
    if oracle.in_bits() != n * k {
        return Err(DpError::Width(format!(
            "oracle takes {} bits, k-sets encode to {}",
            oracle.in_bits(),
            n * k
        )));
    }
    // w from the edge itself, then its own consistency and correctness rates.
    let b_enc = b.encode();
    let truth_b = dp_eval(g, b)?;
    let v0 = oracle.query(&b_enc, rng);
    let a_in_b: Vec<usize> = a.elems().iter().map(|&e| b.index_of(e).unwrap()).collect();
    let mut w = Bits::zeros(a.k());
    for (pos, &i) in a_in_b.iter().enumerate() {
        w.set(pos, v0.get(i));
    }
    let mut own_cons = 0u32;
    let mut own_exact = 0u32;
    for _ in 0..CONS_QUERIES {
        let v = oracle.query(&b_enc, rng);
        own_cons += a_in_b.iter().enumerate().all(|(pos, &i)| v.get(i) == w.get(pos)) as u32;
        own_exact += (v == truth_b) as u32;
    }
    let p_cons = own_cons as f64 / CONS_QUERIES as f64;
    let corr_own = own_exact as f64 / CONS_QUERIES as f64;

    let mut exact = 0u64;
    let mut eta_neighbors = 0u64;
    let mut weights = 0.0f64;
    let mut weighted_err = 0.0f64;
    let mut p_tot_sum = 0.0f64;
    for _ in 0..samples {
        let bp = sample_kset_containing(n, k, a.elems(), rng)?;
        let enc = bp.encode();
        let truth = dp_eval(g, &bp)?;
        let a_pos: Vec<usize> = a.elems().iter().map(|&e| bp.index_of(e).unwrap()).collect();
        let mut cons_hits = 0u32;
        let mut exact_hits = 0u32;
        let mut err_sum = 0.0f64;
        for q in 0..CONS_QUERIES {
            let v = oracle.query(&enc, rng);
            let wrong = v.xor(&truth).count_ones() as usize;
            if q == 0 {
                exact += (wrong == 0) as u64;
            }
            exact_hits += (wrong == 0) as u32;
            let consistent =
                a_pos.iter().enumerate().all(|(pos, &i)| v.get(i) == w.get(pos));
            if consistent {
                cons_hits += 1;
                // Error rate on the fresh half.
                let mut fresh_wrong = 0usize;
                for (i, &e) in bp.elems().iter().enumerate() {
                    if !a.contains(e) && v.get(i) != g.get(e) {
                        fresh_wrong += 1;
                    }
                }
                err_sum += fresh_wrong as f64 / (k - a.k()) as f64;
            }
        }
        let pc = cons_hits as f64 / CONS_QUERIES as f64;
        p_tot_sum += pc;
        if cons_hits > 0 {
            weights += pc;
            weighted_err += pc * (err_sum / cons_hits as f64);
        }
        eta_neighbors += (exact_hits as f64 / CONS_QUERIES as f64 >= eta) as u64;
    }
    let corr_point = exact as f64 / samples as f64;
    let hw = crate::oracle::estimate_half_width(corr_point, samples);
    Ok(EdgeDiagnostics {
        corr_b: CorrelationEstimate { point: corr_point, half_width: hw, samples },
        corr_own,
        good_fraction: eta_neighbors as f64 / samples as f64,
        errcons: if weights > 0.0 { weighted_err / weights } else { 0.0 },
        p_cons,
        p_tot: p_tot_sum / samples as f64,
    })
}
