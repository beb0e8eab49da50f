//! Exact hitting and return tails.
//!
//! The source memory is crossed with the pattern automaton; the taboo operator
//! is the restriction of that product chain to paths that do not enter the
//! accepting progress `n`. Iterating it from the right initial law gives
//! `μ(T_A > t)` and `μ_A(T_A > t)` exactly, up to floating-point rounding.
//!
//! Positions are absolute: the hitting iteration starts before `x_0` and the
//! first `n` symbols are read without absorption (an occurrence at `0` is not a
//! hit). The return iteration starts with `A` already on `x_0..x_{n-1}`. In both
//! cases, once `n + t` symbols are read the remaining mass is the tail at `t`.

use serde::Serialize;

use crate::automaton::PatternAutomaton;
use crate::error::{Error, Result};
use crate::limits;
use crate::model::{Pattern, ProcessModel};

pub const DENSE_LIMIT: usize = 256;
pub const T_MAX_CAP: usize = 10_000_000;
pub const MEAN_RETURN_REL_TOL: f64 = 1e-8;

const NO_EDGE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TailKind {
    Hitting,
    Return,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepMode {
    Auto,
    Dense,
    Sparse,
}

/// `values[t]` is the tail at `t`, for `t = 0..=t_max`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailCurve {
    pub kind: TailKind,
    pub values: Vec<f64>,
    /// Absorbed mass at each step (`hits[t] = μ(T_A = t)` for hitting; `hits[0] = 0`).
    pub hits: Vec<f64>,
}

impl TailCurve {
    pub fn t_max(&self) -> usize {
        self.values.len() - 1
    }

    /// Tail at `t`; equal to 1 for negative `t`.
    pub fn at(&self, t: i64) -> f64 {
        if t < 0 {
            1.0
        } else {
            self.values[t as usize]
        }
    }
}

/// Product of source memory and automaton progress, restricted to reachable states.
#[derive(Debug, Clone)]
pub struct ProductChain {
    n: usize,
    alphabet: usize,
    states: Vec<(usize, usize)>,
    accepting: Vec<bool>,
    // edge[i * alphabet + a] = (target, probability); NO_EDGE when the symbol is impossible
    edges: Vec<(u32, f64)>,
    dense: Option<Vec<f64>>,
}

impl ProductChain {
    fn build(model: &ProcessModel, aut: &PatternAutomaton, starts: &[(usize, usize)]) -> Self {
        let chain = model.chain();
        let n = aut.len();
        let k = chain.alphabet();
        let width = n + 1;
        let mut index = vec![NO_EDGE; chain.memory_states() * width];
        let mut states = Vec::new();
        let mut queue = std::collections::VecDeque::new();
        for &(m, s) in starts {
            if index[m * width + s] == NO_EDGE {
                index[m * width + s] = states.len() as u32;
                states.push((m, s));
                queue.push_back((m, s));
            }
        }
        while let Some((m, s)) = queue.pop_front() {
            for a in 0..k {
                if chain.prob(m, a) > 0.0 {
                    let t = (chain.next(m, a), aut.step(s, a));
                    let slot = &mut index[t.0 * width + t.1];
                    if *slot == NO_EDGE {
                        *slot = states.len() as u32;
                        states.push(t);
                        queue.push_back(t);
                    }
                }
            }
        }
        let mut edges = vec![(NO_EDGE, 0.0); states.len() * k];
        for (i, &(m, s)) in states.iter().enumerate() {
            for a in 0..k {
                let p = chain.prob(m, a);
                if p > 0.0 {
                    let t = index[chain.next(m, a) * width + aut.step(s, a)];
                    edges[i * k + a] = (t, p);
                }
            }
        }
        let accepting = states.iter().map(|&(_, s)| s == n).collect();
        let mut pc = Self {
            n,
            alphabet: k,
            states,
            accepting,
            edges,
            dense: None,
        };
        if pc.len() <= DENSE_LIMIT {
            pc.dense = Some(pc.dense_matrix());
        }
        pc
    }

    fn dense_matrix(&self) -> Vec<f64> {
        let s = self.len();
        let mut q = vec![0.0; s * s];
        for i in 0..s {
            for a in 0..self.alphabet {
                let (t, p) = self.edges[i * self.alphabet + a];
                if t != NO_EDGE {
                    q[i * s + t as usize] += p;
                }
            }
        }
        q
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[(usize, usize)] {
        &self.states
    }

    fn index_of(&self, state: (usize, usize)) -> Option<usize> {
        self.states.iter().position(|&s| s == state)
    }

    fn step_into(&self, dist: &[f64], out: &mut [f64], mode: StepMode) {
        out.iter_mut().for_each(|x| *x = 0.0);
        let use_dense = match mode {
            StepMode::Dense => true,
            StepMode::Sparse => false,
            StepMode::Auto => self.dense.is_some(),
        };
        if use_dense {
            let owned;
            let q = match &self.dense {
                Some(q) => q,
                None => {
                    owned = self.dense_matrix();
                    &owned
                }
            };
            let s = self.len();
            for (i, &w) in dist.iter().enumerate() {
                if w != 0.0 {
                    let row = &q[i * s..(i + 1) * s];
                    for (o, &p) in out.iter_mut().zip(row) {
                        *o += w * p;
                    }
                }
            }
        } else {
            let k = self.alphabet;
            for (i, &w) in dist.iter().enumerate() {
                if w != 0.0 {
                    for &(t, p) in &self.edges[i * k..(i + 1) * k] {
                        if t != NO_EDGE {
                            out[t as usize] += w * p;
                        }
                    }
                }
            }
        }
    }

    fn step_forced_into(&self, dist: &[f64], out: &mut [f64], symbol: usize) {
        out.iter_mut().for_each(|x| *x = 0.0);
        let k = self.alphabet;
        for (i, &w) in dist.iter().enumerate() {
            if w != 0.0 {
                let (t, p) = self.edges[i * k + symbol];
                if t != NO_EDGE {
                    out[t as usize] += w * p;
                }
            }
        }
    }
}

/// A sub-probability law on the product chain, after `pos` symbols have been read.
#[derive(Debug, Clone)]
pub struct TabooState<'a> {
    chain: &'a ProductChain,
    dist: Vec<f64>,
    scratch: Vec<f64>,
    pos: usize,
    mode: StepMode,
}

impl<'a> TabooState<'a> {
    /// Number of symbols read so far.
    pub fn position(&self) -> usize {
        self.pos
    }

    /// Tail index, once at least `n` symbols have been read.
    pub fn tail_index(&self) -> Option<usize> {
        self.pos.checked_sub(self.chain.n)
    }

    pub fn mass(&self) -> f64 {
        self.dist.iter().sum()
    }

    pub fn with_mode(mut self, mode: StepMode) -> Self {
        self.mode = mode;
        self
    }

    /// Reads one symbol; returns the mass absorbed by an occurrence ending here.
    pub fn step(&mut self) -> f64 {
        self.chain.step_into(&self.dist, &mut self.scratch, self.mode);
        self.finish_step()
    }

    /// Reads the given symbol at the current position (restricts to that event).
    pub fn step_forced(&mut self, symbol: usize) -> f64 {
        self.chain
            .step_forced_into(&self.dist, &mut self.scratch, symbol);
        self.finish_step()
    }

    fn finish_step(&mut self) -> f64 {
        std::mem::swap(&mut self.dist, &mut self.scratch);
        self.pos += 1;
        let mut hit = 0.0;
        if self.pos > self.chain.n {
            for (w, &acc) in self.dist.iter_mut().zip(&self.chain.accepting) {
                if acc {
                    hit += *w;
                    *w = 0.0;
                }
            }
        }
        hit
    }

    pub fn advance_to(&mut self, pos: usize) {
        while self.pos < pos {
            self.step();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PotentialWell {
    /// `μ_A(T_A > τ)` from the return iteration.
    pub rho: f64,
    /// `1 - μ_A(σ^{-τ} A)` from the joint cylinder measure.
    pub rho_complement: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanReturn {
    /// Truncated sum plus half the tail bound.
    pub estimate: f64,
    pub truncated_sum: f64,
    /// Upper bound on the omitted part `Σ_{t > horizon} μ_A(T_A > t)`.
    pub tail_bound: f64,
    pub horizon: usize,
}

impl MeanReturn {
    pub fn lower(&self) -> f64 {
        self.truncated_sum
    }

    pub fn upper(&self) -> f64 {
        self.truncated_sum + self.tail_bound
    }
}

/// Exact tail machinery for one (model, pattern) pair.
#[derive(Debug, Clone)]
pub struct Engine<'m> {
    model: &'m ProcessModel,
    pattern: Pattern,
    automaton: PatternAutomaton,
    chain: ProductChain,
    mu: f64,
    post_memory: Vec<f64>,
}

impl<'m> Engine<'m> {
    pub fn new(model: &'m ProcessModel, pattern: &Pattern) -> Result<Self> {
        if pattern.symbols().iter().any(|&s| s >= model.alphabet()) {
            return Err(Error::InvalidPattern(format!(
                "{pattern} is not over the model alphabet"
            )));
        }
        let mu = model.cylinder_measure(pattern.symbols());
        if mu <= 0.0 {
            return Err(Error::ZeroMeasure {
                pattern: pattern.to_string(),
            });
        }
        let automaton = PatternAutomaton::new(pattern, model.alphabet());
        let post_memory = model.post_word_memory(pattern.symbols())?;
        let n = pattern.len();
        let mut starts: Vec<(usize, usize)> = model
            .chain()
            .init()
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(m, _)| (m, 0))
            .collect();
        starts.extend(
            post_memory
                .iter()
                .enumerate()
                .filter(|(_, &w)| w > 0.0)
                .map(|(m, _)| (m, n)),
        );
        let chain = ProductChain::build(model, &automaton, &starts);
        Ok(Self {
            model,
            pattern: pattern.clone(),
            automaton,
            chain,
            mu,
            post_memory,
        })
    }

    pub fn model(&self) -> &ProcessModel {
        self.model
    }

    pub fn pattern(&self) -> &Pattern {
        &self.pattern
    }

    pub fn automaton(&self) -> &PatternAutomaton {
        &self.automaton
    }

    pub fn product(&self) -> &ProductChain {
        &self.chain
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn n(&self) -> usize {
        self.pattern.len()
    }

    /// Normalised source memory law right after an occurrence of the pattern.
    pub fn post_memory(&self) -> &[f64] {
        &self.post_memory
    }

    fn state_from(&self, init: impl Iterator<Item = ((usize, usize), f64)>, pos: usize) -> TabooState<'_> {
        let mut dist = vec![0.0; self.chain.len()];
        for (st, w) in init {
            if w > 0.0 {
                let i = self.chain.index_of(st).expect("start state is in the product chain");
                dist[i] += w;
            }
        }
        TabooState {
            chain: &self.chain,
            scratch: vec![0.0; dist.len()],
            dist,
            pos,
            mode: StepMode::Auto,
        }
    }

    /// State before `x_0` under the stationary law (tail index reached after `n` steps).
    pub fn hitting_start(&self) -> TabooState<'_> {
        let init = self.model.chain().init().iter().copied().enumerate();
        self.state_from(init.map(|(m, w)| ((m, 0), w)), 0)
    }

    /// State with `A` on `x_0..x_{n-1}`, normalised to mass 1; already at tail index 0.
    pub fn return_start(&self) -> TabooState<'_> {
        let n = self.n();
        let init = self.post_memory.iter().copied().enumerate();
        self.state_from(init.map(|(m, w)| ((m, n), w)), n)
    }

    pub fn start(&self, kind: TailKind) -> TabooState<'_> {
        match kind {
            TailKind::Hitting => self.hitting_start(),
            TailKind::Return => self.return_start(),
        }
    }

    fn guard(&self, t_max: usize) -> Result<()> {
        limits::guard(
            "exact tail iteration (product states x steps)",
            self.chain.len() as u128 * (t_max + self.n()) as u128,
        )
    }

    pub fn tail_with_mode(&self, kind: TailKind, t_max: usize, mode: StepMode) -> Result<TailCurve> {
        self.guard(t_max)?;
        let n = self.n();
        let mut st = self.start(kind).with_mode(mode);
        st.advance_to(n);
        let mut values = Vec::with_capacity(t_max + 1);
        let mut hits = Vec::with_capacity(t_max + 1);
        values.push(st.mass());
        hits.push(0.0);
        for _ in 0..t_max {
            hits.push(st.step());
            values.push(st.mass());
        }
        Ok(TailCurve { kind, values, hits })
    }

    pub fn tail(&self, kind: TailKind, t_max: usize) -> Result<TailCurve> {
        self.tail_with_mode(kind, t_max, StepMode::Auto)
    }

    pub fn hitting_tail(&self, t_max: usize) -> Result<TailCurve> {
        self.tail(TailKind::Hitting, t_max)
    }

    pub fn return_tail(&self, t_max: usize) -> Result<TailCurve> {
        self.tail(TailKind::Return, t_max)
    }

    /// `ρ(A)` two ways; `tau` must be the shortest possible return.
    pub fn potential_well(&self, tau: usize) -> Result<PotentialWell> {
        let curve = self.return_tail(tau)?;
        let rho = curve.values[tau];
        let a = self.pattern.symbols();
        let joint = self.model.joint_measure(a, a, tau);
        Ok(PotentialWell {
            rho,
            rho_complement: 1.0 - joint / self.mu,
        })
    }

    /// Default horizon for tail computations: `⌈8 / (ρ μ)⌉`, capped.
    pub fn default_t_max(&self, rho: f64) -> usize {
        let t = (8.0 / (rho * self.mu)).ceil();
        if t.is_finite() && t < T_MAX_CAP as f64 {
            (t as usize).max(1)
        } else {
            T_MAX_CAP
        }
    }

    /// `max_x P_x(T_A > len)` over every product state: a uniform block contraction factor.
    pub fn block_survival(&self, len: usize) -> f64 {
        let s = self.chain.len();
        let k = self.chain.alphabet;
        let mut u = vec![1.0; s];
        let mut nu = vec![0.0; s];
        for _ in 0..len {
            for (i, out) in nu.iter_mut().enumerate() {
                let mut acc = 0.0;
                for &(t, p) in &self.chain.edges[i * k..(i + 1) * k] {
                    if t != NO_EDGE && !self.chain.accepting[t as usize] {
                        acc += p * u[t as usize];
                    }
                }
                *out = acc;
            }
            std::mem::swap(&mut u, &mut nu);
        }
        u.into_iter().fold(0.0, f64::max)
    }

    /// `E_A(T_A)` from the return tail. With no horizon given, iterates until the
    /// rigorous truncation bound is below `MEAN_RETURN_REL_TOL` of the partial sum.
    pub fn mean_return(&self, horizon: Option<usize>) -> Result<MeanReturn> {
        let block = ((1.0 / self.mu).ceil() as usize + self.n()).max(1);
        let contraction = self.block_survival(block);
        if contraction >= 1.0 {
            return Err(Error::HorizonTooSmall {
                horizon: horizon.unwrap_or(0),
                tail_bound: f64::INFINITY,
            });
        }
        let factor = block as f64 / (1.0 - contraction);
        let max_steps = horizon.unwrap_or(T_MAX_CAP);
        self.guard(max_steps.min(T_MAX_CAP))?;
        let mut st = self.return_start();
        let mut sum = 0.0;
        let mut t = 0;
        loop {
            let v = st.mass();
            sum += v;
            // Σ_{s > t} v_s <= v_{t+1} * factor <= v_t * factor
            let bound = v * factor;
            let done = match horizon {
                Some(h) => t >= h,
                None => bound <= MEAN_RETURN_REL_TOL * sum || t >= T_MAX_CAP,
            };
            if done {
                if bound > MEAN_RETURN_REL_TOL * sum {
                    return Err(Error::HorizonTooSmall {
                        horizon: t,
                        tail_bound: bound,
                    });
                }
                return Ok(MeanReturn {
                    estimate: sum + 0.5 * bound,
                    truncated_sum: sum,
                    tail_bound: bound,
                    horizon: t,
                });
            }
            st.step();
            t += 1;
        }
    }

    /// `μ(T_A > K; x_K = b)` (hitting) or `μ_A(T_A > K; x_K = b)` (return) for each
    /// `K` in `positions`, sharing one pass of the taboo iteration.
    pub fn tail_and_symbol(&self, kind: TailKind, positions: &[usize], symbol: usize) -> Result<Vec<f64>> {
        let n = self.n();
        let mut order: Vec<usize> = (0..positions.len()).collect();
        order.sort_by_key(|&i| positions[i]);
        let last = positions.iter().copied().max().unwrap_or(0);
        self.guard(last)?;
        let mut out = vec![0.0; positions.len()];
        let mut st = self.start(kind);
        let first_free = st.position();
        for i in order {
            let k = positions[i];
            if k < first_free {
                // x_K lies inside the conditioning occurrence of A
                if self.pattern.symbols()[k] == symbol {
                    let mut probe = st.clone();
                    probe.advance_to(k + n);
                    out[i] = probe.mass();
                }
                continue;
            }
            st.advance_to(k);
            let mut fork = st.clone();
            fork.step_forced(symbol);
            fork.advance_to(k + n);
            out[i] = fork.mass();
        }
        Ok(out)
    }
}
