//! Grand-canonical Metropolis sampler for the Gibbs measure with Poisson(1)
//! reference process, optionally conditioned on a phase frame.
//!
//! With reference density `e^{-|L|} / N!` per labelled configuration the
//! normalisation cancels in Metropolis ratios, leaving
//! `|L| / (N+1) e^{-beta dH}` for insertions, `N / |L| e^{-beta dH}` for
//! deletions and `e^{-beta dH}` for symmetric displacements.
//!
//! The energy is the relative energy `H(q | q_bar)`. The power sums of the
//! kernel are kept on the quadrature grid; a move touches only the nodes in
//! the support of the affected kernels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::coarse_grain::{CoarseGrid, PhaseWindows};
use crate::error::{Error, Result};
use crate::model::energy::{accumulate, density_energy, energy_grid, PowerField, Powers};
use crate::model::{ball_volume, Domain, DomainKind, KacKernel, ModelParams, ParticleConfiguration, Point, Snapshot};
use crate::stats::integrated_autocorrelation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    Insert,
    Delete,
    Displace,
}

impl MoveKind {
    fn slot(self) -> usize {
        match self {
            MoveKind::Insert => 0,
            MoveKind::Delete => 1,
            MoveKind::Displace => 2,
        }
    }
}

/// Proposal probabilities of the three move types.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MoveMix {
    pub insert: f64,
    pub delete: f64,
    pub displace: f64,
}

impl Default for MoveMix {
    fn default() -> Self {
        MoveMix {
            insert: 0.35,
            delete: 0.35,
            displace: 0.30,
        }
    }
}

impl MoveMix {
    pub fn validate(&self) -> Result<()> {
        let all = [self.insert, self.delete, self.displace];
        if all.iter().any(|&p| !(p >= 0.0)) || (all.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::param("move_mix", "probabilities must be non-negative and sum to 1"));
        }
        if (self.insert == 0.0) != (self.delete == 0.0) {
            return Err(Error::param("move_mix", "insert and delete must both be enabled or both disabled"));
        }
        Ok(())
    }

    fn pick(&self, u: f64) -> MoveKind {
        if u < self.insert {
            MoveKind::Insert
        } else if u < self.insert + self.delete {
            MoveKind::Delete
        } else {
            MoveKind::Displace
        }
    }

    fn prob(&self, kind: MoveKind) -> f64 {
        match kind {
            MoveKind::Insert => self.insert,
            MoveKind::Delete => self.delete,
            MoveKind::Displace => self.displace,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplerConfig {
    pub mix: MoveMix,
    /// Displacement ball radius; `None` means half the Kac range.
    pub displacement: Option<f64>,
    /// Steps between running-energy audits (0 disables).
    pub audit_every: u64,
    /// Steps between trace records (0 disables).
    pub trace_every: u64,
    /// Steps between snapshots (0 disables).
    pub snapshot_every: u64,
    /// Largest particle number reachable by insertions.
    pub max_particles: Option<usize>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            mix: MoveMix::default(),
            displacement: None,
            audit_every: 10_000,
            trace_every: 1000,
            snapshot_every: 0,
            max_particles: None,
        }
    }
}

/// Frame of `ell_plus` cubes on which `Theta` must equal `sign`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DilutedConstraint {
    pub sign: i8,
    pub frame: Vec<usize>,
    pub windows: PhaseWindows,
}

impl DilutedConstraint {
    pub fn new(sign: i8, frame: Vec<usize>, windows: PhaseWindows) -> Result<Self> {
        if sign != 1 && sign != -1 {
            return Err(Error::param("sign", "must be +1 or -1"));
        }
        Ok(DilutedConstraint { sign, frame, windows })
    }

    /// The outermost `width` layers of `ell_plus` cubes of a box.
    pub fn outer_frame(domain: &Domain, sign: i8, windows: PhaseWindows, width: usize) -> Result<Self> {
        if domain.kind == DomainKind::Torus {
            return Err(Error::param("constraint", "a torus has no frame"));
        }
        let n = domain.cubes_per_axis;
        let frame = (0..domain.cube_count())
            .filter(|&x| {
                let c = domain.cube_coords(x);
                c[..domain.d].iter().any(|&v| v < width || v + width >= n)
            })
            .collect();
        Self::new(sign, frame, windows)
    }

    /// Fine cubes on which `eta` must equal `sign`: the sub-cubes of the frame
    /// cubes and of their common-vertex neighbours inside the domain.
    fn fine_mask(&self, domain: &Domain, ratio: usize) -> Result<Vec<bool>> {
        let n = domain.cubes_per_axis;
        let d = domain.d;
        let fine_n = n * ratio;
        let mut mask = vec![false; fine_n.pow(d as u32)];
        let periodic = domain.kind == DomainKind::Torus;
        let r = |k: usize| if k < d { -1i64..=1 } else { 0..=0 };
        for &x in &self.frame {
            if x >= domain.cube_count() {
                return Err(Error::param("frame", "cube index outside the domain"));
            }
            let c = domain.cube_coords(x);
            for a in r(0) {
                for b in r(1) {
                    for e in r(2) {
                        let off = [a, b, e];
                        let mut y = [0i64; 3];
                        let mut inside = true;
                        for k in 0..d {
                            let mut v = c[k] as i64 + off[k];
                            if periodic {
                                v = v.rem_euclid(n as i64);
                            } else if v < 0 || v >= n as i64 {
                                inside = false;
                            }
                            y[k] = v;
                        }
                        if !inside {
                            continue;
                        }
                        mark_subcubes(&mut mask, &y, ratio, d, fine_n);
                    }
                }
            }
        }
        Ok(mask)
    }
}

fn mark_subcubes(mask: &mut [bool], coarse: &[i64; 3], ratio: usize, d: usize, fine_n: usize) {
    let r = |k: usize| if k < d { ratio } else { 1 };
    for a in 0..r(0) {
        for b in 0..r(1) {
            for e in 0..r(2) {
                let sub = [a, b, e];
                let mut flat = 0;
                for k in 0..d {
                    flat = flat * fine_n + coarse[k] as usize * ratio + sub[k];
                }
                mask[flat] = true;
            }
        }
    }
}

#[derive(Debug, Clone)]
struct ActiveConstraint {
    sign: i8,
    mask: Vec<bool>,
    windows: PhaseWindows,
}

impl ActiveConstraint {
    fn allows(&self, cell: usize, count: u32, volume: f64) -> bool {
        !self.mask[cell] || self.windows.classify(count as f64 / volume) == self.sign
    }
}

/// Per-move proposal and acceptance tallies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct MoveStats {
    pub proposed: [u64; 3],
    pub accepted: [u64; 3],
}

impl MoveStats {
    pub fn rate(&self, kind: MoveKind) -> f64 {
        let i = kind.slot();
        if self.proposed[i] == 0 {
            0.0
        } else {
            self.accepted[i] as f64 / self.proposed[i] as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MoveRecord {
    pub kind: MoveKind,
    pub accepted: bool,
    /// Energy change of the proposal; `+inf` when excluded.
    pub delta_h: f64,
}

/// A fully specified move.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Move {
    Insert(Point),
    Delete(usize),
    Displace(usize, Point),
}

impl Move {
    pub fn kind(&self) -> MoveKind {
        match self {
            Move::Insert(_) => MoveKind::Insert,
            Move::Delete(_) => MoveKind::Delete,
            Move::Displace(..) => MoveKind::Displace,
        }
    }
}

/// Energy change and Metropolis log-ratio of a move; `None` if excluded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub delta_h: f64,
    pub log_ratio: f64,
}

/// Sparse set of node increments to the power-sum field.
#[derive(Debug, Clone, Default)]
struct Stamp {
    slot: Vec<u32>,
    entries: Vec<(usize, Powers)>,
}

impl Stamp {
    fn new(len: usize) -> Self {
        Stamp {
            slot: vec![u32::MAX; len],
            entries: Vec::with_capacity(1024),
        }
    }

    fn add(&mut self, field: &PowerField, kernel: &KacKernel, q: &Point, sign: f64) {
        let c = kernel.centre(q);
        let slot = &mut self.slot;
        let entries = &mut self.entries;
        field.grid.for_each_in_ball(&c, kernel.range(), |i, d2| {
            let s = slot[i];
            let k = if s == u32::MAX {
                slot[i] = entries.len() as u32;
                entries.push((i, [0.0; 4]));
                entries.len() - 1
            } else {
                s as usize
            };
            accumulate(&mut entries[k].1, kernel.profile(d2), sign);
        });
    }

    fn delta(&self, field: &PowerField, params: &ModelParams) -> f64 {
        let mut s = 0.0;
        for (i, dp) in &self.entries {
            let old = &field.values[*i];
            let new = [old[0] + dp[0], old[1] + dp[1], old[2] + dp[2], old[3] + dp[3]];
            s += density_energy(params.form, &new) - density_energy(params.form, old);
        }
        s * field.grid.weight()
    }

    fn apply(&self, field: &mut PowerField) {
        for (i, dp) in &self.entries {
            let v = &mut field.values[*i];
            for k in 0..4 {
                v[k] += dp[k];
            }
        }
    }

    fn clear(&mut self) {
        for (i, _) in &self.entries {
            self.slot[*i] = u32::MAX;
        }
        self.entries.clear();
    }
}

/// Sampler state: configuration, incrementally maintained field and energy,
/// RNG stream and tallies.
#[derive(Debug, Clone)]
pub struct SamplerState {
    params: ModelParams,
    config: ParticleConfiguration,
    kernel: KacKernel,
    field: Option<PowerField>,
    /// `sum_nodes w E(boundary only)`, subtracted to form `H(q | q_bar)`.
    base_energy: f64,
    energy: f64,
    volume: f64,
    settings: SamplerConfig,
    rng: ChaCha8Rng,
    seed: u64,
    step: u64,
    stats: MoveStats,
    fine: CoarseGrid,
    fine_volume: f64,
    constraint: Option<ActiveConstraint>,
    stamp: Stamp,
    max_drift: f64,
}

/// One row of the time series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub step: u64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "H")]
    pub energy: f64,
    pub acc_insert: f64,
    pub acc_delete: f64,
    pub acc_displace: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub steps: u64,
    pub stats: MoveStats,
    pub trace: Vec<TracePoint>,
    #[serde(skip)]
    pub snapshots: Vec<Snapshot>,
    /// Integrated autocorrelation time of `N`, in trace records.
    pub tau_int_n: f64,
    pub max_drift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuditReport {
    pub trials: usize,
    /// Trials whose forward move was excluded (nothing to compare).
    pub skipped: usize,
    pub max_violation: f64,
    pub passed: bool,
}

/// Relative tolerance of the running-energy audit.
pub const DRIFT_TOLERANCE: f64 = 1e-9;
/// Largest detailed-balance violation accepted by the audit.
pub const BALANCE_TOLERANCE: f64 = 1e-8;

impl SamplerState {
    pub fn new(
        config: ParticleConfiguration,
        params: &ModelParams,
        settings: SamplerConfig,
        constraint: Option<DilutedConstraint>,
        seed: u64,
    ) -> Result<Self> {
        params.validate()?;
        settings.mix.validate()?;
        if let Some(r) = settings.displacement {
            if !(r > 0.0) {
                return Err(Error::param("displacement", "must be positive"));
            }
        }
        let kernel = KacKernel::new(params);
        let domain = config.domain().clone();
        let scales = params.scales();
        let fine = CoarseGrid::of_configuration(&config, scales.ell_minus)?;
        let fine_volume = scales.ell_minus.powi(params.d as i32);
        let active = match constraint {
            None => None,
            Some(c) => {
                let mask = c.fine_mask(&domain, scales.plus_ratio)?;
                let act = ActiveConstraint {
                    sign: c.sign,
                    mask,
                    windows: c.windows,
                };
                if let Some(cell) = (0..fine.len()).find(|&i| !act.allows(i, fine.counts[i], fine_volume)) {
                    return Err(Error::Constraint(format!(
                        "initial configuration violates the frame condition in fine cube {cell}; \
                         start from a lattice configuration at the phase density (see `phase_configuration`)"
                    )));
                }
                Some(act)
            }
        };
        let mut state = SamplerState {
            params: *params,
            kernel,
            field: None,
            base_energy: 0.0,
            energy: 0.0,
            volume: domain.volume(),
            settings,
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
            step: 0,
            stats: MoveStats::default(),
            fine,
            fine_volume,
            constraint: active,
            stamp: Stamp::default(),
            max_drift: 0.0,
            config,
        };
        let (field, base, energy) = state.recompute()?;
        state.stamp = Stamp::new(field.as_ref().map_or(0, |f| f.values.len()));
        state.field = field;
        state.base_energy = base;
        state.energy = energy;
        Ok(state)
    }

    /// Full recomputation: field, boundary-only energy and `H(q | q_bar)`.
    fn recompute(&self) -> Result<(Option<PowerField>, f64, f64)> {
        let chem = -self.params.lambda * self.config.len() as f64;
        if self.kernel.is_off() {
            return Ok((None, 0.0, chem));
        }
        let domain = self.config.domain();
        let grid = match domain.kind {
            DomainKind::Torus => energy_grid(std::iter::empty(), domain.metric(), &self.params)?,
            DomainKind::Box => {
                let r = self.params.range();
                let mut lo = [0.0; 3];
                let mut hi = [0.0; 3];
                for k in 0..domain.d {
                    lo[k] = -r;
                    hi[k] = domain.side + r;
                }
                crate::model::grid::QuadGrid::window(domain.d, self.params.scales().spacing, &lo, &hi)
            }
        };
        let mut field = PowerField::new(grid);
        for p in domain.boundary() {
            field.add(&self.kernel, p, 1.0);
        }
        let base = field.integrate(self.params.form);
        for p in self.config.positions() {
            field.add(&self.kernel, p, 1.0);
        }
        let full = field.integrate(self.params.form);
        Ok((Some(field), base, full - base + chem))
    }

    /// `H(q | q_bar)` recomputed from scratch.
    pub fn full_energy(&self) -> Result<f64> {
        Ok(self.recompute()?.2)
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn configuration(&self) -> &ParticleConfiguration {
        &self.config
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.config.len()
    }

    pub fn is_empty(&self) -> bool {
        self.config.is_empty()
    }

    pub fn stats(&self) -> MoveStats {
        self.stats
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Fine-cube counts including boundary particles inside the box.
    pub fn fine_counts(&self) -> &CoarseGrid {
        &self.fine
    }

    pub fn max_drift(&self) -> f64 {
        self.max_drift
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot::from_configuration(&self.config, &self.params, self.seed, self.step)
    }

    fn displacement_radius(&self) -> f64 {
        self.settings.displacement.unwrap_or(0.5 * self.params.range())
    }

    fn constraint_allows(&self, cell: Option<usize>, change: i64) -> bool {
        match (&self.constraint, cell) {
            (Some(c), Some(i)) => {
                let n = self.fine.counts[i] as i64 + change;
                n >= 0 && c.allows(i, n as u32, self.fine_volume)
            }
            _ => true,
        }
    }

    /// Energy change and log acceptance ratio of `mv`; `None` if the move is
    /// excluded (hard core, outside the domain, frame condition or cap).
    pub fn evaluate(&mut self, mv: &Move) -> Option<Evaluation> {
        let n = self.config.len();
        let beta = self.params.beta;
        let lambda = self.params.lambda;
        let result = match *mv {
            Move::Insert(p) => {
                if self.settings.max_particles.is_some_and(|m| n >= m) {
                    return None;
                }
                let p = self.config.domain().wrap(&p);
                if !self.config.domain().contains(&p) || self.config.overlap_at(&p, None).is_some() {
                    return None;
                }
                if !self.constraint_allows(self.fine.index_of(&p), 1) {
                    return None;
                }
                let dh = self.kac_delta(&[(p, 1.0)]) - lambda;
                Evaluation {
                    delta_h: dh,
                    log_ratio: (self.volume / (n + 1) as f64).ln() - beta_times(beta, dh),
                }
            }
            Move::Delete(i) => {
                if i >= n {
                    return None;
                }
                let p = self.config.positions()[i];
                if !self.constraint_allows(self.fine.index_of(&p), -1) {
                    return None;
                }
                let dh = self.kac_delta(&[(p, -1.0)]) + lambda;
                Evaluation {
                    delta_h: dh,
                    log_ratio: (n as f64 / self.volume).ln() - beta_times(beta, dh),
                }
            }
            Move::Displace(i, to) => {
                if i >= n {
                    return None;
                }
                let from = self.config.positions()[i];
                let to = self.config.domain().wrap(&to);
                if !self.config.domain().contains(&to) || self.config.overlap_at(&to, Some(i)).is_some() {
                    return None;
                }
                let (a, b) = (self.fine.index_of(&from), self.fine.index_of(&to));
                if a != b && !(self.constraint_allows(a, -1) && self.constraint_allows(b, 1)) {
                    return None;
                }
                let dh = self.kac_delta(&[(from, -1.0), (to, 1.0)]);
                Evaluation {
                    delta_h: dh,
                    log_ratio: -beta_times(beta, dh),
                }
            }
        };
        Some(result)
    }

    /// Kac energy change of the listed kernel additions/removals; leaves the
    /// stamp filled for a following `commit`.
    fn kac_delta(&mut self, changes: &[(Point, f64)]) -> f64 {
        self.stamp.clear();
        let Some(field) = &self.field else {
            return 0.0;
        };
        for (p, s) in changes {
            self.stamp.add(field, &self.kernel, p, *s);
        }
        self.stamp.delta(field, &self.params)
    }

    /// Applies an evaluated move (the stamp must come from evaluating `mv`).
    fn commit(&mut self, mv: &Move, eval: &Evaluation) {
        match *mv {
            Move::Insert(p) => {
                let p = self.config.domain().wrap(&p);
                if let Some(c) = self.fine.index_of(&p) {
                    self.fine.counts[c] += 1;
                }
                self.config.insert(p).expect("insertion was validated");
            }
            Move::Delete(i) => {
                let p = self.config.remove(i);
                if let Some(c) = self.fine.index_of(&p) {
                    self.fine.counts[c] -= 1;
                }
            }
            Move::Displace(i, to) => {
                let to = self.config.domain().wrap(&to);
                let from = self.config.positions()[i];
                if let Some(c) = self.fine.index_of(&from) {
                    self.fine.counts[c] -= 1;
                }
                if let Some(c) = self.fine.index_of(&to) {
                    self.fine.counts[c] += 1;
                }
                self.config.move_particle(i, to).expect("displacement was validated");
            }
        }
        if let Some(field) = &mut self.field {
            self.stamp.apply(field);
        }
        self.energy += eval.delta_h;
    }

    /// Evaluates and, if allowed, applies `mv` unconditionally.
    pub fn force(&mut self, mv: &Move) -> Option<Evaluation> {
        let eval = self.evaluate(mv)?;
        self.commit(mv, &eval);
        Some(eval)
    }

    fn draw_move(&mut self, kind: MoveKind) -> Option<Move> {
        let n = self.config.len();
        match kind {
            MoveKind::Insert => Some(Move::Insert(self.config.domain().sample(&mut self.rng))),
            MoveKind::Delete => (n > 0).then(|| Move::Delete(self.rng.random_range(0..n))),
            MoveKind::Displace => {
                if n == 0 {
                    return None;
                }
                let i = self.rng.random_range(0..n);
                let radius = self.displacement_radius();
                let delta = ball_point(&mut self.rng, self.params.d, radius);
                let p = self.config.positions()[i];
                Some(Move::Displace(i, [p[0] + delta[0], p[1] + delta[1], p[2] + delta[2]]))
            }
        }
    }

    /// One Metropolis step.
    pub fn step(&mut self) -> MoveRecord {
        let kind = self.settings.mix.pick(self.rng.random());
        self.step += 1;
        self.stats.proposed[kind.slot()] += 1;
        let rejected = MoveRecord {
            kind,
            accepted: false,
            delta_h: f64::INFINITY,
        };
        let Some(mv) = self.draw_move(kind) else {
            return rejected;
        };
        let Some(eval) = self.evaluate(&mv) else {
            return rejected;
        };
        let accept = eval.log_ratio >= 0.0 || self.rng.random::<f64>().ln() < eval.log_ratio;
        if accept {
            self.commit(&mv, &eval);
            self.stats.accepted[kind.slot()] += 1;
        }
        MoveRecord {
            kind,
            accepted: accept,
            delta_h: eval.delta_h,
        }
    }

    /// Compares the running energy with a full recomputation.
    pub fn audit(&mut self) -> Result<f64> {
        let full = self.full_energy()?;
        let drift = (full - self.energy).abs() / (1.0 + full.abs());
        self.max_drift = self.max_drift.max(drift);
        if drift > DRIFT_TOLERANCE {
            return Err(Error::Numerical(format!(
                "running energy {} drifted from recomputed {full} (relative {drift:e}) at step {}",
                self.energy, self.step
            )));
        }
        Ok(drift)
    }

    /// Runs `n_steps`, calling `observe` after every `every` steps.
    pub fn run_observed(&mut self, n_steps: u64, every: u64, mut observe: impl FnMut(&SamplerState)) -> Result<()> {
        for _ in 0..n_steps {
            self.step();
            if self.settings.audit_every > 0 && self.step.is_multiple_of(self.settings.audit_every) {
                self.audit()?;
            }
            if every > 0 && self.step.is_multiple_of(every) {
                observe(self);
            }
        }
        Ok(())
    }

    /// Runs `n_steps` with the configured trace, snapshot and audit strides.
    pub fn run(&mut self, n_steps: u64) -> Result<RunSummary> {
        let mut trace = Vec::new();
        let mut snapshots = Vec::new();
        let trace_every = self.settings.trace_every;
        let snap_every = self.settings.snapshot_every;
        for _ in 0..n_steps {
            self.step();
            if self.settings.audit_every > 0 && self.step.is_multiple_of(self.settings.audit_every) {
                self.audit()?;
            }
            if trace_every > 0 && self.step.is_multiple_of(trace_every) {
                trace.push(TracePoint {
                    step: self.step,
                    n: self.config.len(),
                    energy: self.energy,
                    acc_insert: self.stats.rate(MoveKind::Insert),
                    acc_delete: self.stats.rate(MoveKind::Delete),
                    acc_displace: self.stats.rate(MoveKind::Displace),
                });
            }
            if snap_every > 0 && self.step.is_multiple_of(snap_every) {
                snapshots.push(self.snapshot());
            }
        }
        let ns: Vec<f64> = trace.iter().map(|t| t.n as f64).collect();
        Ok(RunSummary {
            steps: n_steps,
            stats: self.stats,
            tau_int_n: integrated_autocorrelation(&ns),
            trace,
            snapshots,
            max_drift: self.max_drift,
        })
    }

    /// Checks `pi(x) P(x -> y) = pi(y) P(y -> x)` on random moves from the
    /// current state, with `H(y) - H(x)` from full recomputations.
    pub fn detailed_balance_audit(&self, n_trials: usize, seed: u64) -> Result<AuditReport> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = self.clone();
        let mix = self.settings.mix;
        let radius = self.displacement_radius();
        let ball = ball_volume(self.params.d, radius);
        let mut skipped = 0;
        let mut worst: f64 = 0.0;
        for _ in 0..n_trials {
            x.rng = ChaCha8Rng::seed_from_u64(rng.random());
            let kind = mix.pick(rng.random());
            let Some(mv) = x.draw_move(kind) else {
                skipped += 1;
                continue;
            };
            let Some(fwd) = x.evaluate(&mv) else {
                skipped += 1;
                continue;
            };
            let n = x.config.len();
            let hx = x.full_energy()?;
            let mut y = x.clone();
            y.commit(&mv, &fwd);
            let back = match mv {
                Move::Insert(_) => Move::Delete(n),
                Move::Delete(i) => Move::Insert(x.config.positions()[i]),
                Move::Displace(i, _) => Move::Displace(i, x.config.positions()[i]),
            };
            let hy = y.full_energy()?;
            let Some(bwd) = y.evaluate(&back) else {
                return Ok(AuditReport {
                    trials: n_trials,
                    skipped,
                    max_violation: f64::INFINITY,
                    passed: false,
                });
            };
            let acc = |e: &Evaluation| e.log_ratio.min(0.0).exp();
            let weight = (-beta_times(self.params.beta, hy - hx)).exp();
            let (f, b) = match mv {
                Move::Insert(_) => (
                    mix.prob(MoveKind::Insert) / x.volume * acc(&fwd),
                    weight * mix.prob(MoveKind::Delete) / (n + 1) as f64 * acc(&bwd),
                ),
                Move::Delete(_) => (
                    mix.prob(MoveKind::Delete) / n as f64 * acc(&fwd),
                    weight * mix.prob(MoveKind::Insert) / x.volume * acc(&bwd),
                ),
                Move::Displace(..) => {
                    let q = mix.prob(MoveKind::Displace) / (n as f64 * ball);
                    (q * acc(&fwd), weight * q * acc(&bwd))
                }
            };
            let scale = f.max(b);
            if scale > 0.0 {
                worst = worst.max((f - b).abs() / scale);
            }
            // advance the state along accepted moves so trials explore
            if rng.random::<f64>() < acc(&fwd) {
                x = y;
            }
        }
        Ok(AuditReport {
            trials: n_trials,
            skipped,
            max_violation: worst,
            passed: worst <= BALANCE_TOLERANCE,
        })
    }
}

/// `beta * dh` with `0 * inf = 0`.
fn beta_times(beta: f64, dh: f64) -> f64 {
    if beta == 0.0 {
        0.0
    } else {
        beta * dh
    }
}

/// Uniform point in the `d`-ball of radius `r` (rejection from the cube).
fn ball_point<R: Rng + ?Sized>(rng: &mut R, d: usize, r: f64) -> Point {
    loop {
        let mut p = [0.0; 3];
        let mut s = 0.0;
        for x in p.iter_mut().take(d) {
            *x = (2.0 * rng.random::<f64>() - 1.0) * r;
            s += *x * *x;
        }
        if s < r * r {
            return p;
        }
    }
}

/// Lattice-like admissible placement of `round(rho ell^d)` particles in each
/// listed fine cube (global cube coordinates), sites on a `k^d` sub-lattice.
pub fn lattice_fill(d: usize, ell: f64, cells: &[[i64; 3]], density: impl Fn(&[i64; 3]) -> f64, hc_radius: f64) -> Result<Vec<Point>> {
    let vol = ell.powi(d as i32);
    let mut out = Vec::new();
    for c in cells {
        let n = (density(c) * vol).round().max(0.0) as usize;
        if n == 0 {
            continue;
        }
        let mut k = (n as f64).powf(1.0 / d as f64).ceil() as usize;
        while k.pow(d as u32) < n {
            k += 1;
        }
        let a = ell / k as f64;
        if a <= hc_radius {
            return Err(Error::param("density", format!("lattice spacing {a} does not exceed the hard-core radius")));
        }
        for site in 0..n {
            let mut rest = site;
            let mut p = [0.0; 3];
            for x in p.iter_mut().take(d).rev() {
                *x = (rest % k) as f64;
                rest /= k;
            }
            for j in 0..d {
                p[j] = c[j] as f64 * ell + (p[j] + 0.5) * a;
            }
            out.push(p);
        }
    }
    Ok(out)
}

/// Admissible configuration with fine-cube densities `density(cell)` on the
/// allowed region of `domain`.
pub fn phase_configuration(domain: &Domain, params: &ModelParams, density: impl Fn(&[i64; 3]) -> f64) -> Result<ParticleConfiguration> {
    let ell = params.scales().ell_minus;
    let n = (domain.side / ell).round() as i64;
    let d = domain.d;
    let mut cells = Vec::new();
    let r = |k: usize| if k < d { 0..n } else { 0..1 };
    for a in r(0) {
        for b in r(1) {
            for c in r(2) {
                let cell = [a, b, c];
                let mut mid = [0.0; 3];
                for k in 0..d {
                    mid[k] = (cell[k] as f64 + 0.5) * ell;
                }
                if domain.contains(&mid) {
                    cells.push(cell);
                }
            }
        }
    }
    let pts = lattice_fill(d, ell, &cells, density, params.hc_radius)?;
    ParticleConfiguration::new(pts, domain.clone(), params)
}

/// Lattice-filled `ell_minus` cubes outside a box of `n_fine` fine cubes per
/// axis and within twice the Kac range of it, at density `rho`.
pub fn boundary_shell(params: &ModelParams, n_fine: usize, rho: f64) -> Result<Vec<Point>> {
    let s = params.scales();
    let d = params.d;
    let w = (2.0 * s.range / s.ell_minus).ceil() as i64;
    let n = n_fine as i64;
    let mut cells = Vec::new();
    let span = |k: usize| if k < d { -w..n + w } else { 0..1 };
    for a in span(0) {
        for b in span(1) {
            for c in span(2) {
                let cell = [a, b, c];
                if (0..d).any(|k| cell[k] < 0 || cell[k] >= n) {
                    cells.push(cell);
                }
            }
        }
    }
    lattice_fill(d, s.ell_minus, &cells, |_| rho, params.hc_radius)
}
