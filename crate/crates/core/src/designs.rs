//! Combinatorial designs: ordered families of equal-size subsets of a small
//! universe with bounded pairwise intersections.
//!
//! The builder is a deterministic greedy search: each set is the
//! lexicographically first candidate compatible with everything chosen so far,
//! found by depth-first search with backtracking. Same parameters, same design.

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum DesignError {
    #[error("design parameters invalid: {0}")]
    BadParams(String),
    #[error("design infeasible: no (t={t}, n={n}, alpha={alpha})-design found in universe up to m={last_m}")]
    Infeasible { n: usize, t: usize, alpha: usize, last_m: usize },
}

/// Default universe-size constant: m = DEFAULT_C * n^2.
pub const DEFAULT_C: usize = 16;

/// A (t, m, n, alpha)-design: t subsets of [m], each of size n, pairwise
/// intersections of size at most alpha. Sets are sorted ascending; elements
/// are 0-based.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Design {
    pub n: usize,
    pub t: usize,
    pub m: usize,
    pub alpha: usize,
    pub sets: Vec<Vec<usize>>,
}

/// Smallest a with 2^a >= t.
pub fn ceil_log2(t: usize) -> usize {
    assert!(t >= 1);
    (usize::BITS - (t - 1).leading_zeros()) as usize
}

/// First violated invariant, if any.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    FamilySize { declared: usize, actual: usize },
    SetSize { index: usize, size: usize },
    NotCanonical { index: usize },
    ElementRange { index: usize, element: usize },
    Overlap { i: usize, j: usize, size: usize },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::FamilySize { declared, actual } => {
                write!(f, "family declares t={declared} but holds {actual} sets")
            }
            Violation::SetSize { index, size } => {
                write!(f, "set {index} has size {size}, not n")
            }
            Violation::NotCanonical { index } => {
                write!(f, "set {index} is not strictly increasing")
            }
            Violation::ElementRange { index, element } => {
                write!(f, "set {index} contains {element}, outside the universe")
            }
            Violation::Overlap { i, j, size } => {
                write!(f, "sets {i} and {j} intersect in {size} elements, above alpha")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DesignReport {
    pub ok: bool,
    pub violation: Option<Violation>,
}

/// Checks every invariant; reports the first violation found.
pub fn verify_design(d: &Design) -> DesignReport {
    let fail = |v: Violation| DesignReport { ok: false, violation: Some(v) };
    if d.sets.len() != d.t {
        return fail(Violation::FamilySize { declared: d.t, actual: d.sets.len() });
    }
    for (i, s) in d.sets.iter().enumerate() {
        if s.len() != d.n {
            return fail(Violation::SetSize { index: i, size: s.len() });
        }
        if !s.windows(2).all(|w| w[0] < w[1]) {
            return fail(Violation::NotCanonical { index: i });
        }
        if let Some(&e) = s.iter().find(|&&e| e >= d.m) {
            return fail(Violation::ElementRange { index: i, element: e });
        }
    }
    for i in 0..d.sets.len() {
        for j in i + 1..d.sets.len() {
            let size = sorted_intersection_size(&d.sets[i], &d.sets[j]);
            if size > d.alpha {
                return fail(Violation::Overlap { i, j, size });
            }
        }
    }
    DesignReport { ok: true, violation: None }
}

fn sorted_intersection_size(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

/// Builds a (t, m, n, ceil(log2 t))-design with m = DEFAULT_C * n^2, doubling
/// the universe on failure.
pub fn build_design(n: usize, t: usize) -> Result<Design, DesignError> {
    build_design_with_constant(n, t, DEFAULT_C)
}

/// Same, with an explicit universe constant c in m = c * n^2.
pub fn build_design_with_constant(n: usize, t: usize, c: usize) -> Result<Design, DesignError> {
    check_params(n, t)?;
    if c == 0 {
        return Err(DesignError::BadParams("constant c must be positive".into()));
    }
    let alpha = ceil_log2(t);
    let mut m = (c * n * n).max(n);
    const DOUBLINGS: usize = 6;
    for _ in 0..=DOUBLINGS {
        if let Some(sets) = greedy_family(n, t, m, effective_bound(n, alpha)) {
            return Ok(Design { n, t, m, alpha, sets });
        }
        m *= 2;
    }
    Err(DesignError::Infeasible { n, t, alpha, last_m: m / 2 })
}

/// Builds in an exact universe [m], no doubling. Used where the universe size
/// itself is pinned by an experiment.
pub fn build_design_in_universe(n: usize, t: usize, m: usize) -> Result<Design, DesignError> {
    check_params(n, t)?;
    if m < n {
        return Err(DesignError::BadParams(format!("universe {m} smaller than set size {n}")));
    }
    let alpha = ceil_log2(t);
    greedy_family(n, t, m, effective_bound(n, alpha))
        .map(|sets| Design { n, t, m, alpha, sets })
        .ok_or(DesignError::Infeasible { n, t, alpha, last_m: m })
}

fn check_params(n: usize, t: usize) -> Result<(), DesignError> {
    if n == 0 {
        return Err(DesignError::BadParams("set size n must be at least 1".into()));
    }
    if t == 0 {
        return Err(DesignError::BadParams("family size t must be at least 1".into()));
    }
    if n < 64 && t > (1usize << n) {
        return Err(DesignError::BadParams(format!("family size {t} exceeds 2^{n}")));
    }
    Ok(())
}

/// The builder keeps sets distinct: two distinct n-sets intersect in at most
/// n-1 elements, so capping at min(alpha, n-1) is strictly stronger than the
/// verified bound and never admits duplicates.
fn effective_bound(n: usize, alpha: usize) -> usize {
    alpha.min(n.saturating_sub(1))
}

/// Greedy family: set i is the lexicographically first n-subset of [m] meeting
/// the pairwise bound against all previous sets. None if some set cannot be
/// completed.
fn greedy_family(n: usize, t: usize, m: usize, bound: usize) -> Option<Vec<Vec<usize>>> {
    let mut sets: Vec<Vec<usize>> = Vec::with_capacity(t);
    // incidence[e] = indices of chosen sets containing element e.
    let mut incidence: Vec<Vec<u32>> = vec![Vec::new(); m];
    for _ in 0..t {
        let mut counts = vec![0usize; sets.len()];
        let mut chosen: Vec<usize> = Vec::with_capacity(n);
        if !extend(&mut chosen, 0, n, m, bound, &incidence, &mut counts) {
            return None;
        }
        for &e in &chosen {
            incidence[e].push(sets.len() as u32);
        }
        sets.push(chosen);
    }
    Some(sets)
}

fn extend(
    chosen: &mut Vec<usize>,
    from: usize,
    n: usize,
    m: usize,
    bound: usize,
    incidence: &[Vec<u32>],
    counts: &mut [usize],
) -> bool {
    if chosen.len() == n {
        return true;
    }
    let needed = n - chosen.len();
    let mut e = from;
    while e + needed <= m {
        // Adding e must keep every existing intersection at or below the bound.
        if incidence[e].iter().all(|&j| counts[j as usize] < bound) {
            for &j in &incidence[e] {
                counts[j as usize] += 1;
            }
            chosen.push(e);
            if extend(chosen, e + 1, n, m, bound, incidence, counts) {
                return true;
            }
            chosen.pop();
            for &j in &incidence[e] {
                counts[j as usize] -= 1;
            }
        }
        e += 1;
    }
    false
}
