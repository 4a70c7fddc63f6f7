//! The full variational circuit pipeline: exact diagonal cost layers,
//! per-qubit approximate X rotations, model compression between layers,
//! sampled cost estimation, outer-loop angle optimization, and landscape
//! sweeps.
//!
//! Schedule (depth p): U_C(gamma_1) exact -> RX(beta_1) per qubit -> for each
//! later layer k: U_C(gamma_k) exact (doubling the hidden-unit count),
//! compression back down to |E| hidden units, RX(beta_k) per qubit. A
//! completed run applies exactly p*|E| ZZ rotations and p*N X rotations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{cut_table, statevector_cost_with_table, statevector_qaoa_with_table, DENSE_CAP};
use crate::graph::Graph;
use crate::rbm::{GateReport, RbmState};
use crate::sampler::{sample, McmcConfig};
use crate::seed;
use crate::sr::{
    energy_from_batch, optimize_to_target, rx_target_amplitude, EnergyEstimate, SrConfig,
};

/// The 2p variational circuit angles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QaoaAngles {
    pub gammas: Vec<f64>,
    pub betas: Vec<f64>,
}

impl QaoaAngles {
    pub fn new(gammas: Vec<f64>, betas: Vec<f64>) -> Result<Self> {
        if gammas.is_empty() || gammas.len() != betas.len() {
            return Err(Error::InvalidArgument(format!(
                "need equal, non-empty angle lists; got {} gammas and {} betas",
                gammas.len(),
                betas.len()
            )));
        }
        if gammas.iter().chain(betas.iter()).any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("circuit angle".into()));
        }
        Ok(Self { gammas, betas })
    }

    pub fn depth(&self) -> usize {
        self.gammas.len()
    }

    /// First `p` layers of this schedule.
    pub fn truncated(&self, p: usize) -> Result<Self> {
        if p == 0 || p > self.depth() {
            return Err(Error::InvalidArgument(format!(
                "cannot truncate depth {} to {p}",
                self.depth()
            )));
        }
        Self::new(self.gammas[..p].to_vec(), self.betas[..p].to_vec())
    }
}

/// Which angle a 1D sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AngleAxis {
    Gamma(usize),
    Beta(usize),
}

impl std::fmt::Display for AngleAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AngleAxis::Gamma(k) => write!(f, "gamma{}", k + 1),
            AngleAxis::Beta(k) => write!(f, "beta{}", k + 1),
        }
    }
}

/// Per-qubit record of one approximate X rotation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RxRecord {
    pub layer: usize,
    pub qubit: usize,
    pub fidelity: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Record of one compression event.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompressionRecord {
    pub layer: usize,
    pub fidelity: f64,
    pub converged: bool,
    pub hidden_before: usize,
    pub hidden_after: usize,
    /// Fail-safe path: compression missed the floor and the larger model was
    /// kept.
    pub kept_large: bool,
}

/// Complete account of one circuit run.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct CircuitTrace {
    pub gate_reports: Vec<GateReport>,
    pub rx_records: Vec<RxRecord>,
    pub compressions: Vec<CompressionRecord>,
    /// Hidden-unit count after each completed layer.
    pub layer_hidden_counts: Vec<usize>,
    pub rzz_count: usize,
    pub rx_count: usize,
}

impl CircuitTrace {
    pub fn min_rx_fidelity(&self) -> Option<f64> {
        self.rx_records
            .iter()
            .map(|r| r.fidelity)
            .min_by(|a, b| a.partial_cmp(b).expect("finite fidelities"))
    }

    /// JSON-lines dump: one tagged event per line, summary last.
    pub fn write_jsonl<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        #[derive(Serialize)]
        #[serde(tag = "event")]
        enum Event<'a> {
            Gate(&'a GateReport),
            Rx(&'a RxRecord),
            Compression(&'a CompressionRecord),
            Summary {
                rzz_count: usize,
                rx_count: usize,
                layer_hidden_counts: &'a [usize],
            },
        }
        for g in &self.gate_reports {
            serde_json::to_writer(&mut w, &Event::Gate(g))?;
            writeln!(w)?;
        }
        for r in &self.rx_records {
            serde_json::to_writer(&mut w, &Event::Rx(r))?;
            writeln!(w)?;
        }
        for c in &self.compressions {
            serde_json::to_writer(&mut w, &Event::Compression(c))?;
            writeln!(w)?;
        }
        serde_json::to_writer(
            &mut w,
            &Event::Summary {
                rzz_count: self.rzz_count,
                rx_count: self.rx_count,
                layer_hidden_counts: &self.layer_hidden_counts,
            },
        )?;
        writeln!(w)?;
        Ok(())
    }
}

/// How the compression ansatz is initialized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompressionInit {
    /// Diagonal layer at the running mean of the consumed gammas.
    MeanGamma,
    /// 1D scan for the gamma maximizing overlap with the grown state.
    GammaScan,
}

/// Pipeline-level knobs around the inner SR configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DriverConfig {
    pub sr: SrConfig,
    /// Sampling protocol for cost estimates on final states.
    pub cost_mcmc: McmcConfig,
    /// Compressions below this fidelity are flagged.
    pub compression_floor: f64,
    /// Keep the uncompressed model when the floor is missed.
    pub compression_fail_safe: bool,
    pub compression_init: CompressionInit,
}

impl DriverConfig {
    pub fn default_for(n_qubits: usize, seed: u64) -> Self {
        Self {
            sr: SrConfig::default_for(n_qubits, seed::derive(seed, "sr", 0)),
            cost_mcmc: McmcConfig::default_for(n_qubits, seed::derive(seed, "cost", 0)),
            compression_floor: 0.98,
            compression_fail_safe: true,
            compression_init: CompressionInit::MeanGamma,
        }
    }
}

/// Exact diagonal cost layer: one ZZ rotation with angle 2*gamma*w per edge,
/// each appending one hidden unit.
pub fn apply_uc(state: &RbmState, graph: &Graph, gamma: f64) -> Result<(RbmState, Vec<GateReport>)> {
    if state.n_visible() != graph.n_vertices() {
        return Err(Error::DimensionMismatch(
            "state and graph disagree on qubit count".into(),
        ));
    }
    let mut current = state.clone();
    let mut reports = Vec::with_capacity(graph.n_edges());
    for e in graph.edges() {
        let (next, report) = current.apply_rzz(e.u, e.v, 2.0 * gamma * e.weight)?;
        current = next;
        reports.push(report);
    }
    Ok((current, reports))
}

/// Approximate mixing layer: one stochastic RX optimization per qubit in
/// ascending index order. A non-converged qubit is flagged but the layer
/// continues with the best state found.
pub fn apply_ub(
    state: &RbmState,
    beta: f64,
    layer: usize,
    cfg: &SrConfig,
) -> Result<(RbmState, Vec<RxRecord>)> {
    let n = state.n_visible();
    if beta == 0.0 {
        let records = (0..n)
            .map(|qubit| RxRecord {
                layer,
                qubit,
                fidelity: 1.0,
                converged: true,
                iterations: 0,
            })
            .collect();
        return Ok((state.clone(), records));
    }
    let mut current = state.clone();
    let mut records = Vec::with_capacity(n);
    for qubit in 0..n {
        let mut gate_cfg = cfg.clone();
        gate_cfg.mcmc.seed = seed::derive(cfg.mcmc.seed, "rx-gate", (layer * n + qubit) as u64);
        let target = rx_target_amplitude(&current, qubit, beta)?;
        let outcome = optimize_to_target(&current, &target, &gate_cfg)?;
        records.push(RxRecord {
            layer,
            qubit,
            fidelity: outcome.trace.best_fidelity,
            converged: outcome.trace.converged,
            iterations: outcome.trace.records.len(),
        });
        current = outcome.state;
    }
    Ok((current, records))
}

/// Replace a grown model (2|E| hidden units) by a fresh |E|-unit model fitted
/// to it. `layer` is the 1-based index of the layer whose diagonal gates were
/// just applied; `gammas_consumed` holds gamma_1..gamma_layer.
pub fn compress(
    state: &RbmState,
    layer: usize,
    gammas_consumed: &[f64],
    graph: &Graph,
    cfg: &DriverConfig,
) -> Result<(RbmState, CompressionRecord)> {
    let expected = 2 * graph.n_edges();
    if state.n_hidden() != expected {
        return Err(Error::InvalidArgument(format!(
            "compression expects {expected} hidden units, found {}",
            state.n_hidden()
        )));
    }
    if gammas_consumed.len() != layer || layer < 2 {
        return Err(Error::InvalidArgument(
            "compression needs layer >= 2 and one consumed gamma per layer".into(),
        ));
    }
    let init_gamma = match cfg.compression_init {
        CompressionInit::MeanGamma => {
            gammas_consumed.iter().sum::<f64>() / gammas_consumed.len() as f64
        }
        CompressionInit::GammaScan => scan_init_gamma(state, graph, cfg)?,
    };
    let plus = RbmState::plus_state(state.n_visible())?;
    let (tilde, _) = apply_uc(&plus, graph, init_gamma)?;
    let mut sr_cfg = cfg.sr.clone();
    sr_cfg.mcmc.seed = seed::derive(cfg.sr.mcmc.seed, "compress", layer as u64);
    let outcome = optimize_to_target(&tilde, state, &sr_cfg)?;
    let fidelity = outcome.trace.best_fidelity;
    let keep_large = fidelity < cfg.compression_floor && cfg.compression_fail_safe;
    let record = CompressionRecord {
        layer,
        fidelity,
        converged: outcome.trace.converged,
        hidden_before: expected,
        hidden_after: if keep_large {
            expected
        } else {
            outcome.state.n_hidden()
        },
        kept_large: keep_large,
    };
    let next = if keep_large { state.clone() } else { outcome.state };
    Ok((next, record))
}

/// Overlap-maximizing single gamma for the compression ansatz: coarse grid
/// over the half-period, refined on the best cell.
fn scan_init_gamma(target: &RbmState, graph: &Graph, cfg: &DriverConfig) -> Result<f64> {
    let n = target.n_visible();
    let plus = RbmState::plus_state(n)?;
    let fidelity_at = |gamma: f64| -> Result<f64> {
        let (cand, _) = apply_uc(&plus, graph, gamma)?;
        if n <= DENSE_CAP {
            let a = crate::exact::DenseState::from_rbm(&cand)?;
            let b = crate::exact::DenseState::from_rbm(target)?;
            crate::exact::dense_fidelity(&a, &b)
        } else {
            let mut m1 = cfg.sr.mcmc.clone();
            m1.seed = seed::derive(cfg.sr.mcmc.seed, "scan-psi", (gamma * 1e6) as u64);
            let mut m2 = cfg.sr.mcmc.clone();
            m2.seed = seed::derive(cfg.sr.mcmc.seed, "scan-phi", (gamma * 1e6) as u64);
            let b1 = sample(&cand, &m1)?;
            let b2 = sample(target, &m2)?;
            Ok(crate::estimators::estimate_fidelity(&cand, target, &b1, &b2)?.value)
        }
    };
    let half_pi = std::f64::consts::FRAC_PI_2;
    let coarse = 31;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for i in 0..coarse {
        let gamma = -half_pi + std::f64::consts::PI * i as f64 / (coarse - 1) as f64;
        let f = fidelity_at(gamma)?;
        if f > best.0 {
            best = (f, gamma);
        }
    }
    let step = std::f64::consts::PI / (coarse - 1) as f64;
    for i in 0..21 {
        let gamma = best.1 - step + 2.0 * step * i as f64 / 20.0;
        let f = fidelity_at(gamma)?;
        if f > best.0 {
            best = (f, gamma);
        }
    }
    Ok(best.1)
}

/// Run the full schedule and return the final state plus its trace.
pub fn run_qaoa(
    graph: &Graph,
    angles: &QaoaAngles,
    cfg: &DriverConfig,
) -> Result<(RbmState, CircuitTrace)> {
    let n = graph.n_vertices();
    let mut state = RbmState::plus_state(n)?;
    let mut trace = CircuitTrace::default();
    for layer in 0..angles.depth() {
        let (next, reports) = apply_uc(&state, graph, angles.gammas[layer])?;
        state = next;
        trace.rzz_count += reports.len();
        trace.gate_reports.extend(reports);
        if layer >= 1 {
            let (next, record) = compress(
                &state,
                layer + 1,
                &angles.gammas[..=layer],
                graph,
                cfg,
            )?;
            state = next;
            trace.compressions.push(record);
        }
        let mut layer_cfg = cfg.sr.clone();
        layer_cfg.mcmc.seed = seed::derive(cfg.sr.mcmc.seed, "ub-layer", layer as u64);
        let (next, rx_records) = apply_ub(&state, angles.betas[layer], layer, &layer_cfg)?;
        state = next;
        trace.rx_count += rx_records.len();
        for r in &rx_records {
            trace.gate_reports.push(GateReport {
                kind: crate::rbm::GateKind::Rx,
                qubits: vec![r.qubit],
                angle: Some(angles.betas[layer]),
                exact: false,
                constant_log: None,
                fidelity: Some(r.fidelity),
            });
        }
        trace.rx_records.extend(rx_records);
        trace.layer_hidden_counts.push(state.n_hidden());
    }
    Ok((state, trace))
}

/// Sampled cost estimate: mean cut value over |psi|^2 with a between-chain
/// standard error.
pub fn estimate_cost(state: &RbmState, graph: &Graph, mcmc: &McmcConfig) -> Result<EnergyEstimate> {
    if state.n_visible() != graph.n_vertices() {
        return Err(Error::DimensionMismatch(
            "state and graph disagree on qubit count".into(),
        ));
    }
    let batch = sample(state, mcmc)?;
    energy_from_batch(graph, &batch)
}

/// Outer-loop optimizer settings.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AngleOptConfig {
    pub adam_step: f64,
    pub adam_iters: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Central-difference step on exact objectives.
    pub fd_step_exact: f64,
    /// Central-difference step on sampled objectives (noise-dominated).
    pub fd_step_sampled: f64,
    /// Required to optimize beyond the dense cap: full variational runs.
    pub sampled: Option<DriverConfig>,
}

impl Default for AngleOptConfig {
    fn default() -> Self {
        Self {
            adam_step: 0.05,
            adam_iters: 200,
            restarts: 3,
            seed: 0,
            fd_step_exact: 1e-4,
            fd_step_sampled: 1e-2,
            sampled: None,
        }
    }
}

/// Best angles found and the objective history of the winning restart.
#[derive(Clone, Debug)]
pub struct AngleOptResult {
    pub angles: QaoaAngles,
    pub cost: f64,
    pub history: Vec<f64>,
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
}

impl Adam {
    fn new(dim: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    fn step(&mut self, x: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for k in 0..x.len() {
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * grad[k];
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * grad[k] * grad[k];
            let mhat = self.m[k] / b1t;
            let vhat = self.v[k] / b2t;
            x[k] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

fn unpack_angles(x: &[f64], p: usize) -> Result<QaoaAngles> {
    QaoaAngles::new(x[..p].to_vec(), x[p..].to_vec())
}

/// Minimize the circuit cost over the 2p angles with Adam on central finite
/// differences. Objective selection: the analytic formula at depth 1 on
/// unit-weight graphs, the dense statevector up to the cap, and full
/// variational runs with sampled costs beyond it. Multi-start: seeded random
/// starts plus, for p >= 2, a warm start embedding the optimized (p-1)-layer
/// schedule, so deeper optimized costs never regress.
pub fn optimize_angles(graph: &Graph, p: usize, cfg: &AngleOptConfig) -> Result<AngleOptResult> {
    if p == 0 {
        return Err(Error::InvalidArgument("depth must be >= 1".into()));
    }
    let n = graph.n_vertices();
    enum Objective {
        Analytic,
        Dense(Vec<f64>),
        Sampled(Box<DriverConfig>),
    }
    let objective = if p == 1 && graph.is_unit_weight() {
        Objective::Analytic
    } else if n <= DENSE_CAP {
        Objective::Dense(cut_table(graph))
    } else {
        match &cfg.sampled {
            Some(driver) => Objective::Sampled(Box::new(driver.clone())),
            None => {
                return Err(Error::InvalidArgument(format!(
                    "{n} qubits exceeds the dense cap; provide a sampled-objective configuration"
                )))
            }
        }
    };
    let fd_step = match objective {
        Objective::Sampled(_) => cfg.fd_step_sampled,
        _ => cfg.fd_step_exact,
    };
    let eval = |x: &[f64]| -> Result<f64> {
        let angles = unpack_angles(x, p)?;
        match &objective {
            Objective::Analytic => exact_p1(graph, &angles),
            Objective::Dense(cuts) => {
                let sv = statevector_qaoa_with_table(n, cuts, &angles)?;
                statevector_cost_with_table(&sv, cuts)
            }
            Objective::Sampled(driver) => {
                let (state, _) = run_qaoa(graph, &angles, driver)?;
                Ok(estimate_cost(&state, graph, &driver.cost_mcmc)?.mean)
            }
        }
    };

    let mut starts: Vec<Vec<f64>> = Vec::new();
    if p >= 2 {
        let shallower = optimize_angles(graph, p - 1, cfg)?;
        let mut warm = vec![0.0; 2 * p];
        warm[..p - 1].copy_from_slice(&shallower.angles.gammas);
        warm[p..2 * p - 1].copy_from_slice(&shallower.angles.betas);
        starts.push(warm);
    }
    use rand::Rng;
    use rand::SeedableRng;
    for r in 0..cfg.restarts {
        let mut rng =
            rand_chacha::ChaCha12Rng::seed_from_u64(seed::derive(cfg.seed, "angle-start", r as u64));
        let mut x = vec![0.0; 2 * p];
        for g in x.iter_mut().take(p) {
            *g = 0.8 * (rng.random::<f64>() - 0.5);
        }
        for b in x.iter_mut().skip(p) {
            *b = 0.6 * (rng.random::<f64>() - 0.5);
        }
        starts.push(x);
    }

    let mut best: Option<AngleOptResult> = None;
    for mut x in starts {
        let mut adam = Adam::new(2 * p, cfg.adam_step);
        let mut history = Vec::with_capacity(cfg.adam_iters + 1);
        history.push(eval(&x)?);
        for _ in 0..cfg.adam_iters {
            let mut grad = vec![0.0; 2 * p];
            for k in 0..2 * p {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += fd_step;
                xm[k] -= fd_step;
                grad[k] = (eval(&xp)? - eval(&xm)?) / (2.0 * fd_step);
            }
            adam.step(&mut x, &grad);
            history.push(eval(&x)?);
        }
        let cost = *history.last().expect("non-empty history");
        let candidate = AngleOptResult {
            angles: unpack_angles(&x, p)?,
            cost,
            history,
        };
        if best.as_ref().map_or(true, |b| candidate.cost < b.cost) {
            best = Some(candidate);
        }
    }
    Ok(best.expect("at least one start"))
}

fn exact_p1(graph: &Graph, angles: &QaoaAngles) -> Result<f64> {
    crate::exact::exact_p1_cost(graph, angles.gammas[0], angles.betas[0])
}

/// One row of a 1D landscape sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: f64,
    pub cost_mean: f64,
    pub cost_stderr: f64,
    pub min_rx_fidelity: f64,
    pub rzz_count: usize,
    pub rx_count: usize,
    pub error: Option<String>,
}

/// Run the full pipeline at each grid value of one angle and estimate the
/// cost. Failures are recorded per point and the sweep continues. Points run
/// in parallel with derived seeds, so the table is deterministic.
pub fn landscape_sweep(
    graph: &Graph,
    base_angles: &QaoaAngles,
    axis: AngleAxis,
    grid: &[f64],
    cfg: &DriverConfig,
) -> Result<Vec<SweepRow>> {
    match axis {
        AngleAxis::Gamma(k) | AngleAxis::Beta(k) => {
            if k >= base_angles.depth() {
                return Err(Error::IndexOutOfRange(format!(
                    "axis layer {k} vs depth {}",
                    base_angles.depth()
                )));
            }
        }
    }
    let rows: Vec<SweepRow> = grid
        .par_iter()
        .enumerate()
        .map(|(i, &value)| {
            let mut angles = base_angles.clone();
            match axis {
                AngleAxis::Gamma(k) => angles.gammas[k] = value,
                AngleAxis::Beta(k) => angles.betas[k] = value,
            }
            let mut point_cfg = cfg.clone();
            point_cfg.sr.mcmc.seed = seed::derive(cfg.sr.mcmc.seed, "sweep-point", i as u64);
            point_cfg.cost_mcmc.seed = seed::derive(cfg.cost_mcmc.seed, "sweep-cost", i as u64);
            let outcome = run_qaoa(graph, &angles, &point_cfg).and_then(|(state, trace)| {
                let cost = estimate_cost(&state, graph, &point_cfg.cost_mcmc)?;
                Ok((cost, trace))
            });
            match outcome {
                Ok((cost, trace)) => SweepRow {
                    axis: axis.to_string(),
                    value,
                    cost_mean: cost.mean,
                    cost_stderr: cost.std_error,
                    min_rx_fidelity: trace.min_rx_fidelity().unwrap_or(1.0),
                    rzz_count: trace.rzz_count,
                    rx_count: trace.rx_count,
                    error: None,
                },
                Err(e) => SweepRow {
                    axis: axis.to_string(),
                    value,
                    cost_mean: f64::NAN,
                    cost_stderr: f64::NAN,
                    min_rx_fidelity: f64::NAN,
                    rzz_count: 0,
                    rx_count: 0,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(rows)
}

/// CSV with a provenance comment header; one row per sweep point.
pub fn write_sweep_csv<W: std::io::Write>(
    rows: &[SweepRow],
    header_comment: &str,
    mut w: W,
) -> Result<()> {
    writeln!(w, "# {header_comment}")?;
    writeln!(
        w,
        "axis,value,cost_mean,cost_stderr,min_rx_fidelity,rzz_count,rx_count"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.axis, r.value, r.cost_mean, r.cost_stderr, r.min_rx_fidelity, r.rzz_count, r.rx_count
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{dense_fidelity, exact_p1_cost, DenseState};
    use crate::rbm::BitString;
    use ndarray::Array2;
    use num_complex::Complex64;

    fn quick_cfg(n: usize, seed: u64) -> DriverConfig {
        let mut cfg = DriverConfig::default_for(n, seed);
        cfg.sr.mcmc.samples_per_chain = 400;
        cfg.sr.mcmc.burn_in = 10 * n;
        cfg.sr.max_iters = 60;
        cfg.cost_mcmc.samples_per_chain = 2000;
        cfg.cost_mcmc.burn_in = 10 * n;
        cfg
    }

    #[test]
    fn uc_layer_matches_diagonal_oracle() {
        let graph = Graph::random_regular(8, 3, 11).unwrap();
        let gamma = 0.47;
        let plus = RbmState::plus_state(8).unwrap();
        let (state, reports) = apply_uc(&plus, &graph, gamma).unwrap();
        assert_eq!(reports.len(), graph.n_edges());
        assert_eq!(state.n_hidden(), graph.n_edges());
        let cuts = cut_table(&graph);
        let dense = DenseState::from_rbm(&state).unwrap();
        let mut reference = DenseState::uniform(8).unwrap();
        reference.apply_phase_table(&cuts, gamma).unwrap();
        let f = dense_fidelity(&dense, &reference).unwrap();
        assert!((f - 1.0).abs() < 1e-10, "fidelity {f}");
    }

    #[test]
    fn uc_layer_at_zero_gamma_is_inert() {
        let graph = Graph::triangle();
        let plus = RbmState::plus_state(3).unwrap();
        let (state, _) = apply_uc(&plus, &graph, 0.0).unwrap();
        let l0 = state.log_amplitude(&BitString::from_index(0, 3)).unwrap();
        for idx in 1..8 {
            let l = state.log_amplitude(&BitString::from_index(idx, 3)).unwrap();
            assert!((l - l0).norm() < 1e-12);
        }
    }

    #[test]
    fn ub_at_zero_beta_is_a_noop() {
        let graph = Graph::triangle();
        let plus = RbmState::plus_state(3).unwrap();
        let (state, _) = apply_uc(&plus, &graph, 0.3).unwrap();
        let cfg = quick_cfg(3, 5);
        let (after, records) = apply_ub(&state, 0.0, 0, &cfg.sr).unwrap();
        assert_eq!(after.parameters(), state.parameters());
        assert_eq!(records.len(), 3);
        assert!(records.iter().all(|r| r.fidelity == 1.0 && r.converged));
    }

    #[test]
    fn run_qaoa_counts_gates_and_hidden_units() {
        let graph = Graph::random_regular(6, 3, 2).unwrap();
        let angles = QaoaAngles::new(vec![0.3, 0.2], vec![0.15, 0.1]).unwrap();
        let cfg = quick_cfg(6, 7);
        let (state, trace) = run_qaoa(&graph, &angles, &cfg).unwrap();
        assert_eq!(trace.rzz_count, 2 * graph.n_edges());
        assert_eq!(trace.rx_count, 2 * 6);
        assert_eq!(trace.compressions.len(), 1);
        assert_eq!(state.n_hidden(), graph.n_edges());
        assert_eq!(trace.layer_hidden_counts, vec![9, 9]);
    }

    #[test]
    fn p1_run_tracks_statevector() {
        let graph = Graph::random_regular(8, 3, 3).unwrap();
        let angles = QaoaAngles::new(vec![0.35], vec![0.25]).unwrap();
        let cfg = quick_cfg(8, 13);
        let (state, trace) = run_qaoa(&graph, &angles, &cfg).unwrap();
        assert!(trace.min_rx_fidelity().unwrap() > 0.99);
        let reference = crate::exact::statevector_qaoa(&graph, &angles).unwrap();
        let f = dense_fidelity(&DenseState::from_rbm(&state).unwrap(), &reference).unwrap();
        assert!(f > 0.95, "dense fidelity {f}");
    }

    #[test]
    fn estimate_cost_on_plus_state_is_traceless() {
        let graph = Graph::random_regular(10, 3, 4).unwrap();
        let plus = RbmState::plus_state(10).unwrap();
        let mcmc = McmcConfig {
            samples_per_chain: 4000,
            n_chains: 4,
            stride: 10,
            burn_in: 400,
            seed: 3,
        };
        let est = estimate_cost(&plus, &graph, &mcmc).unwrap();
        assert!(
            est.mean.abs() <= 3.0 * est.std_error.max(0.05),
            "cost {} +- {}",
            est.mean,
            est.std_error
        );
    }

    #[test]
    fn estimate_cost_on_concentrated_state_is_exact() {
        // huge real biases pin the distribution to one bitstring
        let graph = Graph::triangle();
        let target = BitString::new(vec![1, 0, 0]).unwrap();
        let a = ndarray::Array1::from_shape_fn(3, |j| {
            Complex64::new(if target.bit(j) == 1 { 30.0 } else { -30.0 }, 0.0)
        });
        let state = RbmState::new(a, ndarray::Array1::zeros(0), Array2::zeros((3, 0))).unwrap();
        let mcmc = McmcConfig {
            samples_per_chain: 500,
            n_chains: 4,
            stride: 3,
            burn_in: 90,
            seed: 8,
        };
        let est = estimate_cost(&state, &graph, &mcmc).unwrap();
        let expect = graph.cut_value(&target).unwrap();
        assert_eq!(est.mean, expect);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn optimize_angles_matches_grid_on_triangle() {
        let graph = Graph::triangle();
        let cfg = AngleOptConfig {
            adam_iters: 150,
            ..Default::default()
        };
        let result = optimize_angles(&graph, 1, &cfg).unwrap();
        // exhaustive reference grid
        let mut grid_best = f64::INFINITY;
        for gi in 0..201 {
            for bi in 0..201 {
                let g = -1.6 + 3.2 * gi as f64 / 200.0;
                let b = -0.8 + 1.6 * bi as f64 / 200.0;
                grid_best = grid_best.min(exact_p1_cost(&graph, g, b).unwrap());
            }
        }
        assert!(
            result.cost <= grid_best + 2e-3,
            "adam {} vs grid {grid_best}",
            result.cost
        );
    }

    #[test]
    fn optimize_angles_improves_over_naive_point() {
        let graph = Graph::random_regular(20, 3, 21).unwrap();
        let cfg = AngleOptConfig {
            adam_iters: 120,
            restarts: 2,
            ..Default::default()
        };
        let result = optimize_angles(&graph, 1, &cfg).unwrap();
        let naive = exact_p1_cost(&graph, 0.1, 0.1).unwrap();
        assert!(result.cost < 0.0);
        assert!(result.cost < naive);
    }

    #[test]
    fn deeper_angles_do_not_regress() {
        let graph = Graph::random_regular(10, 3, 5).unwrap();
        let cfg = AngleOptConfig {
            adam_iters: 80,
            restarts: 2,
            ..Default::default()
        };
        let p1 = optimize_angles(&graph, 1, &cfg).unwrap();
        let p2 = optimize_angles(&graph, 2, &cfg).unwrap();
        assert!(
            p2.cost <= p1.cost + 1e-9,
            "p2 {} vs p1 {}",
            p2.cost,
            p1.cost
        );
    }

    #[test]
    fn sweep_over_empty_grid_is_empty() {
        let graph = Graph::triangle();
        let angles = QaoaAngles::new(vec![0.2], vec![0.2]).unwrap();
        let cfg = quick_cfg(3, 1);
        let rows = landscape_sweep(&graph, &angles, AngleAxis::Gamma(0), &[], &cfg).unwrap();
        assert!(rows.is_empty());
        let mut buf = Vec::new();
        write_sweep_csv(&rows, "test", &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2); // comment + header only
    }

    #[test]
    fn cost_estimate_is_invariant_under_relabeling() {
        // permute vertices and qubit indices together; exact expectations agree
        let graph = Graph::random_regular(6, 3, 9).unwrap();
        let perm = vec![3usize, 0, 4, 1, 5, 2];
        let relabeled = graph.relabeled(&perm).unwrap();
        let angles = QaoaAngles::new(vec![0.4], vec![0.0]).unwrap();
        let cfg = quick_cfg(6, 2);
        let (state, _) = run_qaoa(&graph, &angles, &cfg).unwrap();
        let (state_r, _) = run_qaoa(&relabeled, &angles, &cfg).unwrap();
        // beta = 0 keeps both exact; compare exact costs via enumeration
        let mut c1 = 0.0;
        let mut c2 = 0.0;
        let mut z1 = 0.0;
        let mut z2 = 0.0;
        for idx in 0..64 {
            let b = BitString::from_index(idx, 6);
            let p1 = (2.0 * state.log_amplitude(&b).unwrap().re).exp();
            let p2 = (2.0 * state_r.log_amplitude(&b).unwrap().re).exp();
            c1 += p1 * graph.cut_value(&b).unwrap();
            c2 += p2 * relabeled.cut_value(&b).unwrap();
            z1 += p1;
            z2 += p2;
        }
        assert!((c1 / z1 - c2 / z2).abs() < 1e-9);
    }
}
