//! Dense statevector simulation of small quantum circuits.
//!
//! Basis indices are little-endian: qubit i is bit i of the index, matching the
//! truth-table indexing in [`crate::bitfunc`]. The gate set is {H, X, Z, CZ,
//! CNOT, Toffoli, Oracle, Measure}; every unitary gate here is self-inverse,
//! so the inverse of a measure-free circuit is its reversed gate list.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bitfunc::BooleanFunction;
use crate::bits::Bits;
use crate::rng::Stream;

/// Hard cap: 2^26 amplitudes = 1 GiB.
pub const MAX_QUBITS: usize = 26;

#[derive(Debug, thiserror::Error)]
pub enum QsimError {
    #[error("qubit count {0} exceeds the cap of {MAX_QUBITS}")]
    TooManyQubits(usize),
    #[error("wire {wire} out of range for {q} qubits")]
    WireRange { wire: usize, q: usize },
    #[error("gate wires must be distinct")]
    DuplicateWire,
    #[error("oracle expects {fn_n} input wires, got {wires}")]
    OracleArity { fn_n: usize, wires: usize },
    #[error("input of {input} bits does not fit in {q} qubits")]
    InputLength { input: usize, q: usize },
    #[error("circuit contains Measure and has no unitary inverse")]
    NotInvertible,
    #[error("register split inconsistent: {0}")]
    RegisterSplit(String),
    #[error("amplitude vector of length {0} is not a power of two")]
    BadAmplitudeCount(usize),
    #[error("state norm is {0}, not 1")]
    NotNormalized(f64),
    #[error("unknown gate op {0:?}")]
    UnknownOp(String),
    #[error("gate {op:?} expects {expected} wires, got {got}")]
    WireCount { op: String, expected: usize, got: usize },
    #[error("oracle gate is missing its fn_ref")]
    MissingFnRef,
    #[error("cannot resolve function reference {0:?}")]
    FnRef(String),
}

#[derive(Clone)]
pub enum Gate {
    H(usize),
    X(usize),
    Z(usize),
    CZ(usize, usize),
    Cnot { control: usize, target: usize },
    Toffoli { c1: usize, c2: usize, target: usize },
    /// |x, b> -> |x, b ^ f(x)>; input wire j carries bit j of f's argument.
    Oracle { f: Arc<BooleanFunction>, inputs: Vec<usize>, target: usize },
    Measure(usize),
}

impl Gate {
    fn wires(&self) -> Vec<usize> {
        match self {
            Gate::H(i) | Gate::X(i) | Gate::Z(i) | Gate::Measure(i) => vec![*i],
            Gate::CZ(i, j) => vec![*i, *j],
            Gate::Cnot { control, target } => vec![*control, *target],
            Gate::Toffoli { c1, c2, target } => vec![*c1, *c2, *target],
            Gate::Oracle { inputs, target, .. } => {
                let mut w = inputs.clone();
                w.push(*target);
                w
            }
        }
    }
}

impl std::fmt::Debug for Gate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Gate::H(i) => write!(f, "H({i})"),
            Gate::X(i) => write!(f, "X({i})"),
            Gate::Z(i) => write!(f, "Z({i})"),
            Gate::CZ(i, j) => write!(f, "CZ({i},{j})"),
            Gate::Cnot { control, target } => write!(f, "Cnot({control}->{target})"),
            Gate::Toffoli { c1, c2, target } => write!(f, "Toffoli({c1},{c2}->{target})"),
            Gate::Oracle { f: func, inputs, target } => {
                write!(f, "Oracle(n={}, {inputs:?}->{target})", func.n())
            }
            Gate::Measure(i) => write!(f, "Measure({i})"),
        }
    }
}

/// Membership oracle O_f on the default layout: inputs 0..n, target n.
pub fn membership_gate(f: &BooleanFunction) -> Gate {
    let n = f.n();
    Gate::Oracle { f: Arc::new(f.clone()), inputs: (0..n).collect(), target: n }
}

/// Membership oracle with explicit wiring.
pub fn membership_gate_on(f: &BooleanFunction, inputs: Vec<usize>, target: usize) -> Gate {
    Gate::Oracle { f: Arc::new(f.clone()), inputs, target }
}

#[derive(Clone, Debug)]
pub struct QuantumCircuit {
    q: usize,
    gates: Vec<Gate>,
}

impl QuantumCircuit {
    pub fn new(q: usize) -> Result<Self, QsimError> {
        if q > MAX_QUBITS {
            return Err(QsimError::TooManyQubits(q));
        }
        Ok(QuantumCircuit { q, gates: Vec::new() })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn push(&mut self, gate: Gate) -> Result<(), QsimError> {
        let wires = gate.wires();
        for &w in &wires {
            if w >= self.q {
                return Err(QsimError::WireRange { wire: w, q: self.q });
            }
        }
        let mut sorted = wires.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(QsimError::DuplicateWire);
        }
        if let Gate::Oracle { f, inputs, .. } = &gate {
            if inputs.len() != f.n() {
                return Err(QsimError::OracleArity { fn_n: f.n(), wires: inputs.len() });
            }
        }
        self.gates.push(gate);
        Ok(())
    }

    pub fn has_measure(&self) -> bool {
        self.gates.iter().any(|g| matches!(g, Gate::Measure(_)))
    }

    /// Reversed gate list; the circuit inverse, since every gate is self-inverse.
    pub fn inverse_gates(&self) -> Result<Vec<Gate>, QsimError> {
        if self.has_measure() {
            return Err(QsimError::NotInvertible);
        }
        Ok(self.gates.iter().rev().cloned().collect())
    }
}

#[derive(Clone, Debug)]
pub struct QuantumState {
    q: usize,
    amps: Vec<Complex64>,
}

impl QuantumState {
    /// |input> padded with |0> on the remaining qubits.
    pub fn basis(q: usize, input: &Bits) -> Result<Self, QsimError> {
        if q > MAX_QUBITS {
            return Err(QsimError::TooManyQubits(q));
        }
        if input.len() > q {
            return Err(QsimError::InputLength { input: input.len(), q });
        }
        let mut index = 0usize;
        for i in 0..input.len() {
            if input.get(i) {
                index |= 1 << i;
            }
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << q];
        amps[index] = Complex64::new(1.0, 0.0);
        Ok(QuantumState { q, amps })
    }

    pub fn from_amps(q: usize, amps: Vec<Complex64>) -> Result<Self, QsimError> {
        if q > MAX_QUBITS {
            return Err(QsimError::TooManyQubits(q));
        }
        if amps.len() != 1 << q {
            return Err(QsimError::BadAmplitudeCount(amps.len()));
        }
        let state = QuantumState { q, amps };
        let norm = state.norm_sq();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(QsimError::NotNormalized(norm));
        }
        Ok(state)
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sq(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Applies a unitary gate. Panics on Measure; use [`QuantumState::measure`].
    pub fn apply_unitary(&mut self, gate: &Gate) {
        match gate {
            Gate::H(i) => {
                let mask = 1usize << i;
                let s = std::f64::consts::FRAC_1_SQRT_2;
                for idx in 0..self.amps.len() {
                    if idx & mask == 0 {
                        let (a, b) = (self.amps[idx], self.amps[idx | mask]);
                        self.amps[idx] = (a + b) * s;
                        self.amps[idx | mask] = (a - b) * s;
                    }
                }
            }
            Gate::X(i) => {
                let mask = 1usize << i;
                for idx in 0..self.amps.len() {
                    if idx & mask == 0 {
                        self.amps.swap(idx, idx | mask);
                    }
                }
            }
            Gate::Z(i) => {
                let mask = 1usize << i;
                for idx in 0..self.amps.len() {
                    if idx & mask != 0 {
                        self.amps[idx] = -self.amps[idx];
                    }
                }
            }
            Gate::CZ(i, j) => {
                let mask = (1usize << i) | (1usize << j);
                for idx in 0..self.amps.len() {
                    if idx & mask == mask {
                        self.amps[idx] = -self.amps[idx];
                    }
                }
            }
            Gate::Cnot { control, target } => {
                let c = 1usize << control;
                let t = 1usize << target;
                for idx in 0..self.amps.len() {
                    if idx & c != 0 && idx & t == 0 {
                        self.amps.swap(idx, idx | t);
                    }
                }
            }
            Gate::Toffoli { c1, c2, target } => {
                let c = (1usize << c1) | (1usize << c2);
                let t = 1usize << target;
                for idx in 0..self.amps.len() {
                    if idx & c == c && idx & t == 0 {
                        self.amps.swap(idx, idx | t);
                    }
                }
            }
            Gate::Oracle { f, inputs, target } => {
                let t = 1usize << target;
                for idx in 0..self.amps.len() {
                    if idx & t == 0 {
                        let mut x = 0u64;
                        for (j, &w) in inputs.iter().enumerate() {
                            x |= (((idx >> w) & 1) as u64) << j;
                        }
                        if f.get(x) {
                            self.amps.swap(idx, idx | t);
                        }
                    }
                }
            }
            Gate::Measure(_) => panic!("apply_unitary cannot run a Measure gate"),
        }
    }

    /// Probability that the wire measures 1.
    pub fn prob_one(&self, wire: usize) -> f64 {
        let mask = 1usize << wire;
        self.amps
            .iter()
            .enumerate()
            .filter(|(idx, _)| idx & mask != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    /// Born-rule measurement of one wire; collapses and renormalizes.
    pub fn measure(&mut self, wire: usize, rng: &mut Stream) -> bool {
        let p1 = self.prob_one(wire);
        let outcome = rng.f64() < p1;
        let keep = if outcome { p1 } else { 1.0 - p1 };
        let mask = 1usize << wire;
        let scale = 1.0 / keep.sqrt();
        for (idx, a) in self.amps.iter_mut().enumerate() {
            if ((idx & mask != 0) == outcome) && keep > 0.0 {
                *a *= scale;
            } else {
                *a = Complex64::new(0.0, 0.0);
            }
        }
        outcome
    }

    /// Measures every wire at once by sampling one basis state.
    pub fn measure_all(&mut self, rng: &mut Stream) -> Bits {
        let u = rng.f64();
        let mut acc = 0.0;
        let mut hit = self.amps.len() - 1;
        for (idx, a) in self.amps.iter().enumerate() {
            acc += a.norm_sqr();
            if u < acc {
                hit = idx;
                break;
            }
        }
        for (idx, a) in self.amps.iter_mut().enumerate() {
            *a = if idx == hit { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
        }
        let mut out = Bits::zeros(self.q);
        for i in 0..self.q {
            if (hit >> i) & 1 == 1 {
                out.set(i, true);
            }
        }
        out
    }
}

/// Runs the circuit on |input, 0...0>. Returns the bits produced by Measure
/// gates, in gate order, and the final state.
pub fn run(
    c: &QuantumCircuit,
    input: &Bits,
    rng: &mut Stream,
) -> Result<(Bits, QuantumState), QsimError> {
    let mut state = QuantumState::basis(c.q(), input)?;
    let mut measured = Bits::zeros(0);
    for gate in c.gates() {
        match gate {
            Gate::Measure(w) => {
                let b = state.measure(*w, rng);
                measured.push(b);
            }
            g => state.apply_unitary(g),
        }
    }
    Ok((measured, state))
}

/// Garbage removal: compute, copy the designated output wire onto a fresh
/// qubit, run the inverse, measure the copy. The returned circuit has one more
/// qubit (the copy wire, index c.q()).
pub fn uncompute_garbage(
    c: &QuantumCircuit,
    out_wire: usize,
) -> Result<QuantumCircuit, QsimError> {
    if out_wire >= c.q() {
        return Err(QsimError::WireRange { wire: out_wire, q: c.q() });
    }
    let inverse = c.inverse_gates()?;
    let mut out = QuantumCircuit::new(c.q() + 1)?;
    for g in c.gates() {
        out.push(g.clone())?;
    }
    out.push(Gate::Cnot { control: out_wire, target: c.q() })?;
    for g in inverse {
        out.push(g)?;
    }
    out.push(Gate::Measure(c.q()))?;
    Ok(out)
}

fn fourier_prepared_state(f: &BooleanFunction) -> QuantumState {
    let n = f.n();
    assert!(n <= 20, "fourier sampling capped at 20 input bits");
    let mut state = QuantumState::basis(n + 1, &Bits::zeros(0)).expect("within cap");
    for i in 0..n {
        state.apply_unitary(&Gate::H(i));
    }
    state.apply_unitary(&membership_gate(f));
    state.apply_unitary(&Gate::H(n));
    state
}

/// Probability of the flag-1 outcome, computed from amplitudes. Equals 1/2 for
/// every f.
pub fn fourier_flag_probability(f: &BooleanFunction) -> f64 {
    fourier_prepared_state(f).prob_one(f.n())
}

/// One round of Fourier sampling: None on the flag-0 branch (probability 1/2),
/// otherwise S drawn with probability f_hat(S)^2.
pub fn fourier_sample(f: &BooleanFunction, rng: &mut Stream) -> Option<u64> {
    let n = f.n();
    let mut state = fourier_prepared_state(f);
    if !state.measure(n, rng) {
        return None;
    }
    for i in 0..n {
        state.apply_unitary(&Gate::H(i));
    }
    let outcome = state.measure_all(rng);
    Some(outcome.slice(0, n).to_u64())
}

/// The k-tuple inner product h(x_1..x_k, r_1..r_k) = XOR_i f(x_i) r_i as an
/// explicit table over kn+k bits.
pub fn tuple_dot_function(f: &BooleanFunction, k: usize) -> BooleanFunction {
    let n = f.n();
    let kn = k * n;
    let mask = (1u64 << n) - 1;
    BooleanFunction::from_fn(kn + k, move |u| {
        let mut acc = false;
        for i in 0..k {
            let xi = (u >> (i * n)) & mask;
            let ri = (u >> (kn + i)) & 1 == 1;
            acc ^= f.get(xi) && ri;
        }
        acc
    })
}

/// Circuit computing h into a single workspace qubit (the last wire). With a
/// correct h this is the exact-case decoder input: one oracle call, no garbage.
pub fn function_oracle_circuit(h: &BooleanFunction) -> QuantumCircuit {
    let n = h.n();
    let mut c = QuantumCircuit::new(n + 1).expect("within cap");
    c.push(Gate::Oracle { f: Arc::new(h.clone()), inputs: (0..n).collect(), target: n })
        .expect("valid wiring");
    c
}

/// Test circuit over kn=4, k=2, m=3 whose per-r overlaps with the correct
/// answer are (+1, +1, 0, -1): E_r[|a0|^2 - |a1|^2] = 1/4 exactly on every x.
pub fn biased_tuple_circuit(f: &BooleanFunction) -> QuantumCircuit {
    assert_eq!(f.n(), 2, "the engineered-bias layout is fixed at n=2, k=2");
    let h = tuple_dot_function(f, 2);
    // wires: x = 0..4, r = 4..6, workspace w=6 tmp=7 out=8.
    let mut c = QuantumCircuit::new(9).expect("within cap");
    c.push(Gate::Oracle { f: Arc::new(h), inputs: (0..6).collect(), target: 8 }).unwrap();
    c.push(Gate::Toffoli { c1: 4, c2: 5, target: 8 }).unwrap();
    c.push(Gate::X(5)).unwrap();
    c.push(Gate::H(6)).unwrap();
    c.push(Gate::Toffoli { c1: 4, c2: 5, target: 7 }).unwrap();
    c.push(Gate::Toffoli { c1: 7, c2: 6, target: 8 }).unwrap();
    c.push(Gate::Toffoli { c1: 4, c2: 5, target: 7 }).unwrap();
    c.push(Gate::X(5)).unwrap();
    c
}

fn gl_registers(a: &QuantumCircuit, kn: usize, k: usize) -> Result<usize, QsimError> {
    if a.has_measure() {
        return Err(QsimError::NotInvertible);
    }
    let q = a.q();
    if kn + k >= q {
        return Err(QsimError::RegisterSplit(format!(
            "circuit has {q} qubits but registers need kn={kn} + k={k} + workspace"
        )));
    }
    Ok(q - kn - k)
}

/// Runs the decoder steps 1-5 and returns the pre-measurement state over
/// q+1 qubits (the extra wire is the phase qubit, prepared in |1>).
fn gl_final_state(
    a: &QuantumCircuit,
    x: &Bits,
    k: usize,
) -> Result<QuantumState, QsimError> {
    let kn = x.len();
    let m = gl_registers(a, kn, k)?;
    let q = a.q();
    // |x, 0^k, 0^m, 1>
    let mut init = x.concat(&Bits::zeros(k + m));
    init.push(true);
    let mut state = QuantumState::basis(q + 1, &init)?;
    for i in kn..kn + k {
        state.apply_unitary(&Gate::H(i));
    }
    for g in a.gates() {
        state.apply_unitary(g);
    }
    state.apply_unitary(&Gate::CZ(q - 1, q));
    for g in a.inverse_gates()? {
        state.apply_unitary(&g);
    }
    for i in kn..kn + k {
        state.apply_unitary(&Gate::H(i));
    }
    Ok(state)
}

/// Goldreich-Levin decoder. A acts on kn+k+m qubits: input register x, query
/// register r, workspace 0^m with A's output on the last workspace wire.
/// Measures everything; on the pattern |x, a, 0^m, 1> returns a, else None.
pub fn gl_decode(
    a: &QuantumCircuit,
    x: &Bits,
    k: usize,
    rng: &mut Stream,
) -> Result<Option<Bits>, QsimError> {
    let kn = x.len();
    let m = gl_registers(a, kn, k)?;
    let q = a.q();
    let mut state = gl_final_state(a, x, k)?;
    let outcome = state.measure_all(rng);
    let x_back = outcome.slice(0, kn);
    let workspace = outcome.slice(kn + k, m);
    let phase = outcome.get(q);
    if &x_back == x && workspace.is_zero() && phase {
        Ok(Some(outcome.slice(kn, k)))
    } else {
        Ok(None)
    }
}

/// Probability, computed from amplitudes, that gl_decode returns exactly
/// `target` on input x.
pub fn gl_success_probability(
    a: &QuantumCircuit,
    x: &Bits,
    k: usize,
    target: &Bits,
) -> Result<f64, QsimError> {
    if target.len() != k {
        return Err(QsimError::RegisterSplit(format!(
            "target has {} bits, expected k={k}",
            target.len()
        )));
    }
    let kn = x.len();
    let m = gl_registers(a, kn, k)?;
    let state = gl_final_state(a, x, k)?;
    let mut pattern = x.concat(target).concat(&Bits::zeros(m));
    pattern.push(true);
    let mut index = 0usize;
    for i in 0..pattern.len() {
        if pattern.get(i) {
            index |= 1 << i;
        }
    }
    Ok(state.amps()[index].norm_sqr())
}

/// Wire-level circuit encoding: op name, wires (oracle wires list inputs then
/// target), and a function reference for oracle gates. Truth tables travel
/// by reference, not inline.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GateSpec {
    pub op: String,
    pub wires: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fn_ref: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CircuitSpec {
    pub q: usize,
    pub gates: Vec<GateSpec>,
}

impl QuantumCircuit {
    /// Encodes the circuit; oracle truth tables are returned separately under
    /// generated names fn0, fn1, ...
    pub fn to_spec(&self) -> (CircuitSpec, Vec<(String, BooleanFunction)>) {
        let mut fns = Vec::new();
        let gates = self
            .gates
            .iter()
            .map(|g| match g {
                Gate::H(i) => GateSpec { op: "h".into(), wires: vec![*i], fn_ref: None },
                Gate::X(i) => GateSpec { op: "x".into(), wires: vec![*i], fn_ref: None },
                Gate::Z(i) => GateSpec { op: "z".into(), wires: vec![*i], fn_ref: None },
                Gate::CZ(i, j) => GateSpec { op: "cz".into(), wires: vec![*i, *j], fn_ref: None },
                Gate::Cnot { control, target } => {
                    GateSpec { op: "cnot".into(), wires: vec![*control, *target], fn_ref: None }
                }
                Gate::Toffoli { c1, c2, target } => {
                    GateSpec { op: "toffoli".into(), wires: vec![*c1, *c2, *target], fn_ref: None }
                }
                Gate::Oracle { f, inputs, target } => {
                    let name = format!("fn{}", fns.len());
                    fns.push((name.clone(), (**f).clone()));
                    let mut wires = inputs.clone();
                    wires.push(*target);
                    GateSpec { op: "oracle".into(), wires, fn_ref: Some(name) }
                }
                Gate::Measure(i) => GateSpec { op: "measure".into(), wires: vec![*i], fn_ref: None },
            })
            .collect();
        (CircuitSpec { q: self.q, gates }, fns)
    }

    /// Decodes a circuit spec, resolving oracle references through `resolve`.
    pub fn from_spec(
        spec: &CircuitSpec,
        resolve: impl Fn(&str) -> Result<BooleanFunction, QsimError>,
    ) -> Result<Self, QsimError> {
        let mut c = QuantumCircuit::new(spec.q)?;
        for gs in &spec.gates {
            let expect = |expected: usize| -> Result<(), QsimError> {
                if gs.wires.len() != expected {
                    Err(QsimError::WireCount {
                        op: gs.op.clone(),
                        expected,
                        got: gs.wires.len(),
                    })
                } else {
                    Ok(())
                }
            };
            let gate = match gs.op.as_str() {
                "h" => {
                    expect(1)?;
                    Gate::H(gs.wires[0])
                }
                "x" => {
                    expect(1)?;
                    Gate::X(gs.wires[0])
                }
                "z" => {
                    expect(1)?;
                    Gate::Z(gs.wires[0])
                }
                "cz" => {
                    expect(2)?;
                    Gate::CZ(gs.wires[0], gs.wires[1])
                }
                "cnot" => {
                    expect(2)?;
                    Gate::Cnot { control: gs.wires[0], target: gs.wires[1] }
                }
                "toffoli" => {
                    expect(3)?;
                    Gate::Toffoli { c1: gs.wires[0], c2: gs.wires[1], target: gs.wires[2] }
                }
                "measure" => {
                    expect(1)?;
                    Gate::Measure(gs.wires[0])
                }
                "oracle" => {
                    let name = gs.fn_ref.as_ref().ok_or(QsimError::MissingFnRef)?;
                    let f = resolve(name)?;
                    if gs.wires.len() != f.n() + 1 {
                        return Err(QsimError::OracleArity {
                            fn_n: f.n(),
                            wires: gs.wires.len().saturating_sub(1),
                        });
                    }
                    let target = *gs.wires.last().expect("nonempty");
                    let inputs = gs.wires[..gs.wires.len() - 1].to_vec();
                    Gate::Oracle { f: Arc::new(f), inputs, target }
                }
                other => return Err(QsimError::UnknownOp(other.into())),
            };
            c.push(gate)?;
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitfunc::walsh_hadamard;

    fn bits(s: &str) -> Bits {
        s.parse().unwrap()
    }

    #[test]
    fn h_twice_restores_zero() {
        let mut c = QuantumCircuit::new(1).unwrap();
        c.push(Gate::H(0)).unwrap();
        c.push(Gate::H(0)).unwrap();
        let (_, state) = run(&c, &Bits::zeros(0), &mut Stream::new(1)).unwrap();
        assert!((state.amps()[0].re - 1.0).abs() < 1e-12);
        assert!(state.amps()[1].norm() < 1e-12);
    }

    #[test]
    fn toffoli_on_110() {
        let mut c = QuantumCircuit::new(3).unwrap();
        c.push(Gate::Toffoli { c1: 0, c2: 1, target: 2 }).unwrap();
        let (_, state) = run(&c, &bits("110"), &mut Stream::new(1)).unwrap();
        assert!((state.amps()[0b111].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn born_rule_on_h() {
        let mut c = QuantumCircuit::new(1).unwrap();
        c.push(Gate::H(0)).unwrap();
        c.push(Gate::Measure(0)).unwrap();
        let mut rng = Stream::new(7);
        let mut ones = 0u32;
        const RUNS: u32 = 100_000;
        for _ in 0..RUNS {
            let (m, _) = run(&c, &Bits::zeros(1), &mut rng).unwrap();
            ones += m.get(0) as u32;
        }
        let freq = ones as f64 / RUNS as f64;
        assert!((freq - 0.5).abs() < 0.005, "freq {freq}");
    }

    #[test]
    fn oracle_gate_matches_truth_table() {
        let and = BooleanFunction::from_fn(2, |x| x == 0b11);
        let gate = membership_gate(&and);
        for x in 0..4usize {
            for b in 0..2usize {
                let mut state =
                    QuantumState::basis(3, &Bits::from_u64((x | (b << 2)) as u64, 3)).unwrap();
                state.apply_unitary(&gate);
                let expect = x | ((b ^ usize::from(x == 0b11)) << 2);
                assert!((state.amps()[expect].re - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn oracle_of_constant_zero_is_identity() {
        let f = BooleanFunction::constant(3, false);
        let gate = membership_gate(&f);
        for idx in 0..16u64 {
            let mut state = QuantumState::basis(4, &Bits::from_u64(idx, 4)).unwrap();
            state.apply_unitary(&gate);
            assert!((state.amps()[idx as usize].re - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_is_self_inverse_on_random_states() {
        let mut rng = Stream::new(11);
        for seed in 0..5 {
            let f = BooleanFunction::random(4, seed);
            let gate = membership_gate(&f);
            // Random normalized state over 5 qubits.
            let raw: Vec<Complex64> =
                (0..32).map(|_| Complex64::new(rng.f64() - 0.5, rng.f64() - 0.5)).collect();
            let norm: f64 = raw.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            let amps: Vec<Complex64> = raw.into_iter().map(|a| a / norm).collect();
            let state = QuantumState::from_amps(5, amps).unwrap();
            let mut twice = state.clone();
            twice.apply_unitary(&gate);
            twice.apply_unitary(&gate);
            for (a, b) in twice.amps().iter().zip(state.amps()) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn norm_preserved_and_reversal_inverts() {
        let f = BooleanFunction::random(3, 5);
        let mut c = QuantumCircuit::new(5).unwrap();
        c.push(Gate::H(0)).unwrap();
        c.push(Gate::H(3)).unwrap();
        c.push(Gate::Cnot { control: 0, target: 1 }).unwrap();
        c.push(Gate::Toffoli { c1: 0, c2: 1, target: 2 }).unwrap();
        c.push(membership_gate_on(&f, vec![0, 1, 3], 4)).unwrap();
        c.push(Gate::CZ(2, 4)).unwrap();
        c.push(Gate::Z(1)).unwrap();
        c.push(Gate::X(4)).unwrap();

        let mut state = QuantumState::basis(5, &bits("10110")).unwrap();
        for g in c.gates() {
            state.apply_unitary(g);
            assert!((state.norm_sq() - 1.0).abs() < 1e-10);
        }
        for g in c.inverse_gates().unwrap() {
            state.apply_unitary(&g);
        }
        let expect = QuantumState::basis(5, &bits("10110")).unwrap();
        for (a, b) in state.amps().iter().zip(expect.amps()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn uncompute_restores_ancillas_exactly_for_classical_circuits() {
        let f = BooleanFunction::random(3, 9);
        let c = function_oracle_circuit(&f);
        let clean = uncompute_garbage(&c, 3).unwrap();
        assert_eq!(clean.q(), 5);
        let mut rng = Stream::new(2);
        for x in 0..8u64 {
            let (m, state) = run(&clean, &Bits::from_u64(x, 3), &mut rng).unwrap();
            assert_eq!(m.get(0), f.get(x), "copy wire holds f(x)");
            // Final state must be exactly |x, 0, f(x)>.
            let expect = (x as usize) | ((f.get(x) as usize) << 4);
            assert!((state.amps()[expect].re - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn uncompute_of_h_gives_uniform_output_and_half_restoration() {
        let mut c = QuantumCircuit::new(1).unwrap();
        c.push(Gate::H(0)).unwrap();
        let clean = uncompute_garbage(&c, 0).unwrap();
        // Pre-measurement state: H, CNOT, H on |00> -> half |00>+|10>, half |01>-|11>.
        let mut state = QuantumState::basis(2, &Bits::zeros(2)).unwrap();
        for g in clean.gates() {
            if let Gate::Measure(_) = g {
                break;
            }
            state.apply_unitary(g);
        }
        assert!((state.prob_one(1) - 0.5).abs() < 1e-12, "copy wire is uniform");
        // Conditioned on either copy outcome, wire 0 is uniform: restoration 1/2.
        let mut rng = Stream::new(3);
        let mut branch = state.clone();
        branch.measure(1, &mut rng);
        assert!((branch.prob_one(0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn uncompute_rejects_measured_circuits() {
        let mut c = QuantumCircuit::new(2).unwrap();
        c.push(Gate::Measure(0)).unwrap();
        assert!(matches!(uncompute_garbage(&c, 0), Err(QsimError::NotInvertible)));
    }

    #[test]
    fn double_uncompute_keeps_deterministic_behavior() {
        let f = BooleanFunction::random(2, 4);
        let c = function_oracle_circuit(&f);
        let once = uncompute_garbage(&c, 2).unwrap();
        // Strip the measure so it can be uncomputed again; copy wire is 3.
        let mut inner = QuantumCircuit::new(once.q()).unwrap();
        for g in once.gates() {
            if !matches!(g, Gate::Measure(_)) {
                inner.push(g.clone()).unwrap();
            }
        }
        let twice = uncompute_garbage(&inner, 3).unwrap();
        let mut rng = Stream::new(8);
        for x in 0..4u64 {
            let (m, _) = run(&twice, &Bits::from_u64(x, 2), &mut rng).unwrap();
            assert_eq!(m.get(0), f.get(x));
        }
    }

    #[test]
    fn flag_probability_is_exactly_half() {
        for seed in 0..5 {
            let f = BooleanFunction::random(6, seed);
            assert!((fourier_flag_probability(&f) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn character_fourier_samples_to_its_mask() {
        let f = BooleanFunction::chi(5, 21);
        let mut rng = Stream::new(13);
        let mut seen = 0;
        while seen < 50 {
            if let Some(s) = fourier_sample(&f, &mut rng) {
                assert_eq!(s, 21);
                seen += 1;
            }
        }
    }

    #[test]
    fn fourier_distribution_tracks_squared_spectrum() {
        let f = BooleanFunction::random(6, 3);
        let expect = walsh_hadamard(&f).squared();
        let mut counts = vec![0u32; 64];
        let mut rng = Stream::new(17);
        let mut total = 0u32;
        while total < 20_000 {
            if let Some(s) = fourier_sample(&f, &mut rng) {
                counts[s as usize] += 1;
                total += 1;
            }
        }
        let tv: f64 = counts
            .iter()
            .zip(&expect)
            .map(|(&c, &p)| (c as f64 / total as f64 - p).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.1, "tv {tv}");
    }

    #[test]
    fn gl_perfect_oracle_decodes_with_certainty() {
        let f = BooleanFunction::random(2, 6);
        let h = tuple_dot_function(&f, 2);
        let a = function_oracle_circuit(&h);
        let mut rng = Stream::new(19);
        for xi in 0..16u64 {
            let x = Bits::from_u64(xi, 4);
            let g: Bits = Bits::from_bools(&[f.get(xi & 3), f.get((xi >> 2) & 3)]);
            let p = gl_success_probability(&a, &x, 2, &g).unwrap();
            assert!((p - 1.0).abs() < 1e-9, "x={xi}: p={p}");
            let got = gl_decode(&a, &x, 2, &mut rng).unwrap();
            assert_eq!(got, Some(g));
        }
    }

    #[test]
    fn gl_biased_oracle_hits_gamma_squared() {
        let f = BooleanFunction::random(2, 2);
        let a = biased_tuple_circuit(&f);
        for xi in 0..16u64 {
            let x = Bits::from_u64(xi, 4);
            let g = Bits::from_bools(&[f.get(xi & 3), f.get((xi >> 2) & 3)]);
            let p = gl_success_probability(&a, &x, 2, &g).unwrap();
            assert!((p - 1.0 / 16.0).abs() < 1e-9, "x={xi}: p={p}");
        }
    }

    #[test]
    fn circuit_spec_roundtrip() {
        let f = BooleanFunction::random(3, 1);
        let mut c = QuantumCircuit::new(5).unwrap();
        c.push(Gate::H(0)).unwrap();
        c.push(membership_gate_on(&f, vec![0, 2, 3], 4)).unwrap();
        c.push(Gate::Measure(4)).unwrap();
        let (spec, fns) = c.to_spec();
        assert_eq!(fns.len(), 1);
        let json = serde_json::to_string(&spec).unwrap();
        let parsed: CircuitSpec = serde_json::from_str(&json).unwrap();
        let back = QuantumCircuit::from_spec(&parsed, |name| {
            fns.iter()
                .find(|(n, _)| n == name)
                .map(|(_, f)| f.clone())
                .ok_or_else(|| QsimError::FnRef(name.into()))
        })
        .unwrap();
        assert_eq!(back.q(), 5);
        assert_eq!(back.gates().len(), 3);
        for x in 0..16u64 {
            let (m1, _) = run(&c, &Bits::from_u64(x, 4), &mut Stream::new(x)).unwrap();
            let (m2, _) = run(&back, &Bits::from_u64(x, 4), &mut Stream::new(x)).unwrap();
            assert_eq!(m1, m2);
        }
    }

    #[test]
    fn push_validates_wiring() {
        let mut c = QuantumCircuit::new(2).unwrap();
        assert!(c.push(Gate::H(2)).is_err());
        assert!(c.push(Gate::CZ(1, 1)).is_err());
        let f = BooleanFunction::random(3, 0);
        assert!(c.push(membership_gate_on(&f, vec![0], 1)).is_err());
        assert!(QuantumCircuit::new(30).is_err());
    }
}
